//! MSRC trace loading: plain or gzip input, epoch normalization, page
//! expansion.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use anyhow::Context;
use flate2::read::MultiGzDecoder;
use nvbsim_core::trace::{expand_to_pages, parse_msrc_record, MsrcRecord, ParseError};
use nvbsim_core::PageAccess;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub page_size: u64,
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
    /// Keep only the first N page accesses.
    pub max_accesses: Option<u64>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { page_size: 4096, strict: false, max_accesses: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrace {
    pub id: String,
    pub accesses: Vec<PageAccess>,
    pub requests: usize,
    pub skipped_lines: usize,
    pub first_error: Option<ParseError>,
}

/// A malformed line in strict mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MalformedTrace(pub ParseError);

impl fmt::Display for MalformedTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed trace: {}", self.0)
    }
}

impl std::error::Error for MalformedTrace {}

/// Opens `path`, transparently decompressing gzip (detected by magic bytes).
pub fn open_trace(path: &Path) -> io::Result<Box<dyn BufRead>> {
    let mut file = BufReader::new(File::open(path)?);
    let gz = file.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    Ok(if gz { Box::new(BufReader::new(MultiGzDecoder::new(file))) } else { Box::new(file) })
}

pub fn load_msrc(path: &Path, opts: &LoadOptions) -> anyhow::Result<LoadedTrace> {
    let reader = open_trace(path).with_context(|| format!("opening {}", path.display()))?;
    let id = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".gz").trim_end_matches(".csv").to_string())
        .unwrap_or_else(|| "trace".into());
    read_msrc(reader, id, opts).with_context(|| format!("reading {}", path.display()))
}

pub fn read_msrc<R: Read>(reader: R, id: String, opts: &LoadOptions) -> anyhow::Result<LoadedTrace> {
    let mut records: Vec<MsrcRecord> = Vec::new();
    let mut skipped = 0;
    let mut first_error = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_msrc_record(i + 1, &line) {
            Ok(r) => records.push(r),
            Err(e) if opts.strict => return Err(MalformedTrace(e).into()),
            Err(e) => {
                skipped += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    let epoch = records.iter().map(|r| r.ticks).min().unwrap_or(0);
    // stable: equal timestamps keep file order
    records.sort_by_key(|r| r.ticks);

    let limit = opts.max_accesses.unwrap_or(u64::MAX) as usize;
    let mut accesses = Vec::new();
    let requests = records.len();
    for r in records {
        if accesses.len() >= limit {
            break;
        }
        let req = r.into_request(epoch);
        let room = limit - accesses.len();
        accesses.extend(expand_to_pages(&req, opts.page_size).take(room));
    }
    Ok(LoadedTrace { id, accesses, requests, skipped_lines: skipped, first_error })
}
