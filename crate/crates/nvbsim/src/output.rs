//! Report serialization: run JSON, comparison CSV and plot data.

use std::io::Write;

use nvbsim_core::metrics::{ComparisonTable, Ratio};
use nvbsim_core::RunReport;

pub fn report_json(report: &RunReport) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_comparison<W: Write>(w: W, table: &ComparisonTable) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["trace_id".to_string(), "scheme".to_string()];
    for m in &table.metrics {
        header.push(m.clone());
        header.push(format!("{m}_vs_{}", table.baseline));
    }
    out.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![table.trace_id.clone(), row.scheme.clone()];
        for (v, r) in row.values.iter().zip(&row.ratios) {
            rec.push(v.to_string());
            rec.push(r.to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// The normalization reference for `r`: the No-pdflush run on the same
/// trace if present, otherwise the first run on that trace.
fn reference<'a>(reports: &'a [RunReport], r: &RunReport) -> &'a RunReport {
    let same = || reports.iter().filter(|x| x.trace_id == r.trace_id);
    same().find(|x| x.scheme == "No-pdflush").or_else(|| same().next()).expect("r is in reports")
}

type Column = (&'static str, fn(&RunReport, &RunReport) -> String);

fn ratio(v: f64, base: f64) -> String {
    Ratio::of(v, base).to_string()
}

const PLOTS: [(&str, &[Column]); 5] = [
    (
        "plot_storage_writes.csv",
        &[
            ("storage_write_pages", |r, _| r.storage_write_pages.to_string()),
            ("storage_write_bytes", |r, _| r.storage_write_bytes.to_string()),
            ("normalized", |r, b| ratio(r.storage_write_pages as f64, b.storage_write_pages as f64)),
        ],
    ),
    (
        "plot_refreshed_pages.csv",
        &[
            ("refreshes", |r, _| r.refreshes.to_string()),
            ("refresh_events", |r, _| r.refresh_events.to_string()),
            ("pja_writes", |r, _| r.pja_writes.to_string()),
        ],
    ),
    (
        "plot_failure_rate.csv",
        &[
            ("retention_loss", |r, _| r.failure.retention_loss.to_string()),
            ("write_loss", |r, _| r.failure.write_loss.to_string()),
            ("combined_loss", |r, _| r.failure.combined_loss.to_string()),
            ("normalized", |r, b| ratio(r.failure.combined_loss, b.failure.combined_loss)),
        ],
    ),
    (
        "plot_max_idle.csv",
        &[
            ("max_idle_s", |r, _| r.max_idle_s.to_string()),
            ("max_idle_min", |r, _| (r.max_idle_s / 60.0).to_string()),
        ],
    ),
    (
        "plot_response_time.csv",
        &[
            ("mean_response_us", |r, _| r.mean_response_us.to_string()),
            ("max_response_us", |r, _| r.max_response_us.to_string()),
            ("normalized", |r, b| ratio(r.mean_response_us, b.mean_response_us)),
        ],
    ),
];

/// Plot-data CSVs as `(file name, contents)`, one row per report.
pub fn plot_tables(reports: &[RunReport]) -> csv::Result<Vec<(&'static str, String)>> {
    PLOTS
        .iter()
        .map(|(name, cols)| {
            let mut out = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["trace_id", "scheme"];
            header.extend(cols.iter().map(|(c, _)| *c));
            out.write_record(&header)?;
            for r in reports {
                let b = reference(reports, r);
                let mut rec = vec![r.trace_id.clone(), r.scheme.clone()];
                rec.extend(cols.iter().map(|(_, f)| f(r, b)));
                out.write_record(&rec)?;
            }
            let bytes = out.into_inner().map_err(|e| e.into_error())?;
            Ok((*name, String::from_utf8(bytes).expect("csv output is utf-8")))
        })
        .collect()
}
