//! Idle-ledger CSV export and import.
//!
//! Two files: `page_id,interval_start_s,interval_end_s` with one row per
//! closed interval, and `page_id,write_count[,refresh_count]` with one row
//! per page. Floats are written in shortest round-trip form so an imported
//! ledger reproduces the original failure numbers bit for bit.

use std::fmt;
use std::io::{Read, Write};

use nvbsim_core::{IdleLedger, Interval, PageId};

pub const INTERVALS_HEADER: [&str; 3] = ["page_id", "interval_start_s", "interval_end_s"];
pub const WRITES_HEADER: [&str; 3] = ["page_id", "write_count", "refresh_count"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerCsvError {
    /// 1-based line number in the file.
    pub line: u64,
    pub message: String,
}

impl fmt::Display for LedgerCsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ledger csv line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for LedgerCsvError {}

pub fn write_intervals<W: Write>(w: W, ledger: &IdleLedger) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(INTERVALS_HEADER)?;
    for (page, h) in ledger.iter() {
        let id = page.to_string();
        for i in &h.intervals {
            out.write_record([id.as_str(), &i.start_s.to_string(), &i.end_s.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_counts<W: Write>(w: W, ledger: &IdleLedger) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(WRITES_HEADER)?;
    for (page, h) in ledger.iter() {
        out.write_record([page.to_string(), h.writes.to_string(), h.refreshes.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

fn records<R: Read>(r: R, min_fields: usize, max_fields: usize) -> Result<Vec<(u64, Vec<String>)>, LedgerCsvError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| LedgerCsvError {
            line: e.position().map_or(i as u64 + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        // header row
        if i == 0 && rec.get(0) == Some("page_id") {
            continue;
        }
        if rec.len() < min_fields || rec.len() > max_fields {
            return Err(LedgerCsvError { line, message: format!("expected {min_fields} fields, found {}", rec.len()) });
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(line: u64, v: &str, name: &str) -> Result<T, LedgerCsvError> {
    v.parse().map_err(|_| LedgerCsvError { line, message: format!("invalid {name} `{v}`") })
}

/// Builds a finalized ledger from exported files. Without a writes file,
/// write counts stay zero.
pub fn read_ledger<R1: Read, R2: Read>(intervals: R1, writes: Option<R2>) -> Result<IdleLedger, LedgerCsvError> {
    let mut ledger = IdleLedger::new();
    for (line, row) in records(intervals, 3, 3)? {
        let page: PageId = field(line, &row[0], "page_id")?;
        let start_s: f64 = field(line, &row[1], "interval_start_s")?;
        let end_s: f64 = field(line, &row[2], "interval_end_s")?;
        if !(start_s.is_finite() && end_s.is_finite()) || end_s < start_s {
            return Err(LedgerCsvError { line, message: format!("interval [{start_s}, {end_s}] is not valid") });
        }
        ledger.push_interval(page, Interval { start_s, end_s });
    }
    if let Some(w) = writes {
        for (line, row) in records(w, 2, 3)? {
            let page: PageId = field(line, &row[0], "page_id")?;
            let n: u64 = field(line, &row[1], "write_count")?;
            let r: u64 = match row.get(2) {
                Some(v) => field(line, v, "refresh_count")?,
                None => 0,
            };
            ledger.set_counts(page, n, r);
        }
    }
    Ok(ledger)
}
