//! Block trace records, page expansion and synthetic workloads.
//!
//! Traces follow the MSR Cambridge CSV layout:
//! `Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime`, where the
//! timestamp is a Windows FILETIME tick count (100 ns units).

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Zipf};
use serde::{Deserialize, Serialize};

/// FILETIME ticks per second.
pub const TICKS_PER_SECOND: f64 = 1.0e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
}

impl AccessKind {
    pub fn is_write(self) -> bool {
        matches!(self, AccessKind::Write)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AccessKind::Read => "Read",
            AccessKind::Write => "Write",
        }
    }
}

/// A page address namespaced by the disk it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageId {
    pub disk: u32,
    pub index: u64,
}

impl PageId {
    pub const fn new(disk: u32, index: u64) -> Self {
        Self { disk, index }
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.disk, self.index)
    }
}

impl core::str::FromStr for PageId {
    type Err = ();

    /// Accepts `disk:index` or a bare index (disk 0).
    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        match s.split_once(':') {
            Some((d, i)) => Ok(PageId::new(
                d.trim().parse().map_err(|_| ())?,
                i.trim().parse().map_err(|_| ())?,
            )),
            None => Ok(PageId::new(0, s.parse().map_err(|_| ())?)),
        }
    }
}

/// One block-level request from a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub timestamp_s: f64,
    pub disk: u32,
    pub kind: AccessKind,
    pub offset_bytes: u64,
    pub size_bytes: u64,
    pub response_time_us: u64,
}

/// The simulator's unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageAccess {
    pub timestamp_s: f64,
    pub page: PageId,
    pub kind: AccessKind,
}

impl PageAccess {
    pub fn read(timestamp_s: f64, page: PageId) -> Self {
        Self { timestamp_s, page, kind: AccessKind::Read }
    }

    pub fn write(timestamp_s: f64, page: PageId) -> Self {
        Self { timestamp_s, page, kind: AccessKind::Write }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    FieldCount(usize),
    Number { field: &'static str },
    ZeroSize,
    UnknownType,
}

/// A trace line that could not be parsed. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::FieldCount(n) => {
                write!(f, "line {}: expected 7 fields, found {}", self.line, n)
            }
            ParseErrorKind::Number { field } => {
                write!(f, "line {}: field {} is not a number", self.line, field)
            }
            ParseErrorKind::ZeroSize => write!(f, "line {}: request size is zero", self.line),
            ParseErrorKind::UnknownType => {
                write!(f, "line {}: request type is neither Read nor Write", self.line)
            }
        }
    }
}

impl core::error::Error for ParseError {}

/// A parsed MSRC record before timestamp normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct MsrcRecord {
    pub ticks: u64,
    pub disk: u32,
    pub kind: AccessKind,
    pub offset_bytes: u64,
    pub size_bytes: u64,
    pub response_time_us: u64,
}

impl MsrcRecord {
    /// Converts to a request with time measured from `epoch_ticks`.
    pub fn into_request(self, epoch_ticks: u64) -> Request {
        let delta = self.ticks as i128 - epoch_ticks as i128;
        Request {
            timestamp_s: delta as f64 / TICKS_PER_SECOND,
            disk: self.disk,
            kind: self.kind,
            offset_bytes: self.offset_bytes,
            size_bytes: self.size_bytes,
            response_time_us: self.response_time_us,
        }
    }
}

pub fn parse_msrc_record(line_no: usize, line: &str) -> Result<MsrcRecord, ParseError> {
    let err = |kind| ParseError { line: line_no, kind };
    let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(err(ParseErrorKind::FieldCount(fields.len())));
    }
    let num = |i: usize, field: &'static str| {
        fields[i].parse::<u64>().map_err(|_| err(ParseErrorKind::Number { field }))
    };
    let ticks = num(0, "Timestamp")?;
    let disk = fields[2]
        .parse::<u32>()
        .map_err(|_| err(ParseErrorKind::Number { field: "DiskNumber" }))?;
    let kind = if fields[3].eq_ignore_ascii_case("read") {
        AccessKind::Read
    } else if fields[3].eq_ignore_ascii_case("write") {
        AccessKind::Write
    } else {
        return Err(err(ParseErrorKind::UnknownType));
    };
    let offset_bytes = num(4, "Offset")?;
    let size_bytes = num(5, "Size")?;
    if size_bytes == 0 {
        return Err(err(ParseErrorKind::ZeroSize));
    }
    let response_time_us = num(6, "ResponseTime")?;
    Ok(MsrcRecord { ticks, disk, kind, offset_bytes, size_bytes, response_time_us })
}

/// Parses one MSRC line, normalizing its timestamp against `epoch_ticks`.
pub fn parse_msrc_line(line_no: usize, line: &str, epoch_ticks: u64) -> Result<Request, ParseError> {
    parse_msrc_record(line_no, line).map(|r| r.into_request(epoch_ticks))
}

/// Formats a request as an MSRC line. Seconds are mapped back to ticks.
pub fn format_msrc_line(req: &Request, hostname: &str) -> alloc::string::String {
    let ticks = libm::round(req.timestamp_s * TICKS_PER_SECOND) as u64;
    alloc::format!(
        "{},{},{},{},{},{},{}",
        ticks,
        hostname,
        req.disk,
        req.kind.as_str(),
        req.offset_bytes,
        req.size_bytes,
        req.response_time_us
    )
}

/// Pages covered by `[offset, offset + size)`, ascending.
pub fn expand_to_pages(req: &Request, page_size: u64) -> impl Iterator<Item = PageAccess> + '_ {
    debug_assert!(page_size.is_power_of_two());
    let first = req.offset_bytes / page_size;
    let last = (req.offset_bytes + req.size_bytes.max(1) - 1) / page_size;
    (first..=last).map(move |index| PageAccess {
        timestamp_s: req.timestamp_s,
        page: PageId::new(req.disk, index),
        kind: req.kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccessPattern {
    Sequential,
    Uniform,
    Zipf { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterArrival {
    Fixed { seconds: f64 },
    Exponential { mean_s: f64 },
}

/// Parameters of a synthetic page-level workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub access_count: u64,
    pub page_universe: u64,
    pub pattern: AccessPattern,
    pub write_fraction: f64,
    pub inter_arrival: InterArrival,
    pub seed: u64,
    #[serde(default)]
    pub disk: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSpecError {
    EmptyUniverse,
    WriteFraction(f64),
    ZipfTheta(f64),
    InterArrival(f64),
}

impl fmt::Display for TraceSpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceSpecError::EmptyUniverse => write!(f, "page_universe must be at least 1"),
            TraceSpecError::WriteFraction(w) => write!(f, "write_fraction {w} is outside [0, 1]"),
            TraceSpecError::ZipfTheta(t) => write!(f, "zipf theta {t} must be positive"),
            TraceSpecError::InterArrival(s) => {
                write!(f, "inter-arrival time {s} must be finite and non-negative")
            }
        }
    }
}

impl core::error::Error for TraceSpecError {}

impl TraceSpec {
    pub fn validate(&self) -> Result<(), TraceSpecError> {
        if self.page_universe == 0 {
            return Err(TraceSpecError::EmptyUniverse);
        }
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return Err(TraceSpecError::WriteFraction(self.write_fraction));
        }
        if let AccessPattern::Zipf { theta } = self.pattern {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(TraceSpecError::ZipfTheta(theta));
            }
        }
        let gap = match self.inter_arrival {
            InterArrival::Fixed { seconds } => seconds,
            InterArrival::Exponential { mean_s } => mean_s,
        };
        if !(gap >= 0.0 && gap.is_finite()) {
            return Err(TraceSpecError::InterArrival(gap));
        }
        Ok(())
    }
}

enum PageDist {
    Sequential,
    Uniform,
    Zipf(Zipf<f64>),
}

enum GapDist {
    Fixed(f64),
    Exp(Exp<f64>),
}

/// Deterministic page access stream described by a [`TraceSpec`].
pub struct SyntheticTrace {
    rng: ChaCha8Rng,
    pages: PageDist,
    gaps: GapDist,
    universe: u64,
    write_fraction: f64,
    disk: u32,
    emitted: u64,
    remaining: u64,
    // timestamps are kept in 100 ns trace ticks so a written trace reloads exactly
    clock_ticks: u64,
}

pub fn generate_synthetic(spec: &TraceSpec) -> Result<SyntheticTrace, TraceSpecError> {
    spec.validate()?;
    let pages = match spec.pattern {
        AccessPattern::Sequential => PageDist::Sequential,
        AccessPattern::Uniform => PageDist::Uniform,
        AccessPattern::Zipf { theta } => PageDist::Zipf(
            Zipf::new(spec.page_universe as f64, theta)
                .map_err(|_| TraceSpecError::ZipfTheta(theta))?,
        ),
    };
    let gaps = match spec.inter_arrival {
        InterArrival::Fixed { seconds } => GapDist::Fixed(seconds),
        InterArrival::Exponential { mean_s: 0.0 } => GapDist::Fixed(0.0),
        InterArrival::Exponential { mean_s } => GapDist::Exp(
            Exp::new(1.0 / mean_s).map_err(|_| TraceSpecError::InterArrival(mean_s))?,
        ),
    };
    Ok(SyntheticTrace {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        pages,
        gaps,
        universe: spec.page_universe,
        write_fraction: spec.write_fraction,
        disk: spec.disk,
        emitted: 0,
        remaining: spec.access_count,
        clock_ticks: 0,
    })
}

impl Iterator for SyntheticTrace {
    type Item = PageAccess;

    fn next(&mut self) -> Option<PageAccess> {
        if self.remaining == 0 {
            return None;
        }
        if self.emitted > 0 {
            let gap = match &self.gaps {
                GapDist::Fixed(s) => *s,
                GapDist::Exp(d) => d.sample(&mut self.rng),
            };
            self.clock_ticks += libm::round(gap * TICKS_PER_SECOND) as u64;
        }
        let index = match &self.pages {
            PageDist::Sequential => self.emitted % self.universe,
            PageDist::Uniform => self.rng.random_range(0..self.universe),
            // ranks are 1-based; rank 1 is the hottest page
            PageDist::Zipf(z) => (z.sample(&mut self.rng) as u64).clamp(1, self.universe) - 1,
        };
        let kind = if self.write_fraction >= 1.0 || self.rng.random::<f64>() < self.write_fraction {
            AccessKind::Write
        } else {
            AccessKind::Read
        };
        self.emitted += 1;
        self.remaining -= 1;
        Some(PageAccess { timestamp_s: self.clock_ticks as f64 / TICKS_PER_SECOND, page: PageId::new(self.disk, index), kind })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize;
        (n, Some(n))
    }
}
