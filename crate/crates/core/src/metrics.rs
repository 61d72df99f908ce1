//! Per-run counters, the response-time model and scheme comparison.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::buffer::{AccessOutcome, FlushCounts, HitKind};
use crate::engine::SimConfig;
use crate::ledger::IdleLedger;
use crate::reliability::{aggregate_pja_failure, FailureSummary, ReliabilityError};
use crate::schemes::{FlushReport, RefreshReport};
use crate::trace::PageAccess;

/// Device latencies in microseconds per page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub dram_us: f64,
    pub pja_read_us: f64,
    pub pja_write_us: f64,
    pub storage_read_us: f64,
    pub storage_write_us: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { dram_us: 1.0, pja_read_us: 2.0, pja_write_us: 2.0, storage_read_us: 100.0, storage_write_us: 100.0 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.dram_us, self.pja_read_us, self.pja_write_us, self.storage_read_us, self.storage_write_us];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err("latencies must be finite and non-negative".into())
        }
    }

    /// Serial cost of every device operation in `o`.
    pub fn cost_us(&self, o: &AccessOutcome) -> f64 {
        (o.dram_reads + o.dram_writes) as f64 * self.dram_us
            + o.pja_reads as f64 * self.pja_read_us
            + o.pja_writes as f64 * self.pja_write_us
            + o.storage_reads as f64 * self.storage_read_us
            + o.storage_writes as f64 * self.storage_write_us
    }
}

/// Accumulates counters while a trace is replayed.
///
/// Background work (pdflush writeback, and refreshing when it is
/// serialized with requests) is charged to the next request.
#[derive(Debug, Clone)]
pub struct Recorder {
    latency: LatencyModel,
    serialize_refresh: bool,
    page_size: u64,
    accesses: u64,
    reads: u64,
    writes: u64,
    dram_hits: u64,
    nvm_hits: u64,
    misses: u64,
    dram_reads: u64,
    dram_writes: u64,
    pja_reads: u64,
    pja_writes: u64,
    storage_reads: u64,
    storage_writes: u64,
    flushes: FlushCounts,
    refreshes: u64,
    refresh_events: u64,
    queue_slots_drained: u64,
    flush_events: u64,
    total_response_us: f64,
    max_response_us: f64,
    background_us: f64,
    pending_us: f64,
}

impl Recorder {
    pub fn new(latency: LatencyModel, serialize_refresh: bool, page_size: u64) -> Self {
        Self {
            latency,
            serialize_refresh,
            page_size,
            accesses: 0,
            reads: 0,
            writes: 0,
            dram_hits: 0,
            nvm_hits: 0,
            misses: 0,
            dram_reads: 0,
            dram_writes: 0,
            pja_reads: 0,
            pja_writes: 0,
            storage_reads: 0,
            storage_writes: 0,
            flushes: FlushCounts::default(),
            refreshes: 0,
            refresh_events: 0,
            queue_slots_drained: 0,
            flush_events: 0,
            total_response_us: 0.0,
            max_response_us: 0.0,
            background_us: 0.0,
            pending_us: 0.0,
        }
    }

    fn traffic(&mut self, o: &AccessOutcome) {
        self.dram_reads += o.dram_reads;
        self.dram_writes += o.dram_writes;
        self.pja_reads += o.pja_reads;
        self.pja_writes += o.pja_writes;
        self.storage_reads += o.storage_reads;
        self.storage_writes += o.storage_writes;
        self.flushes.add(&o.flushes);
    }

    /// Records one page access and returns its response time.
    pub fn record_access(&mut self, a: &PageAccess, o: &AccessOutcome) -> f64 {
        self.accesses += 1;
        if a.kind.is_write() {
            self.writes += 1;
        } else {
            self.reads += 1;
        }
        match o.hit {
            Some(HitKind::DramHit) => self.dram_hits += 1,
            Some(HitKind::NvmHit) => self.nvm_hits += 1,
            Some(HitKind::Miss) | None => self.misses += 1,
        }
        self.traffic(o);
        let rt = self.latency.cost_us(o) + core::mem::take(&mut self.pending_us);
        self.total_response_us += rt;
        if rt > self.max_response_us {
            self.max_response_us = rt;
        }
        rt
    }

    pub fn record_refresh(&mut self, r: &RefreshReport) {
        self.refresh_events += 1;
        self.refreshes += r.refreshed.len() as u64;
        self.queue_slots_drained += r.drained;
        self.traffic(&r.traffic);
        let cost = self.latency.cost_us(&r.traffic);
        self.background_us += cost;
        if self.serialize_refresh {
            self.pending_us += cost;
        }
    }

    pub fn record_flush(&mut self, r: &FlushReport) {
        self.flush_events += 1;
        self.traffic(&r.traffic);
        let cost = self.latency.cost_us(&r.traffic);
        self.background_us += cost;
        self.pending_us += cost;
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    pub fn storage_writes(&self) -> u64 {
        self.storage_writes
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    /// Builds the report. `ledger` must already be finalized.
    pub fn finish(
        self,
        ledger: &IdleLedger,
        config: &SimConfig,
        trace_id: &str,
        end_time_s: f64,
        refresh_misses: u64,
    ) -> Result<RunReport, ReliabilityError> {
        let failure = aggregate_pja_failure(ledger, &config.failure)?;
        let ratio = |n: u64| if self.accesses == 0 { 0.0 } else { n as f64 / self.accesses as f64 };
        Ok(RunReport {
            trace_id: trace_id.into(),
            scheme: config.scheme.label(),
            accesses: self.accesses,
            reads: self.reads,
            writes: self.writes,
            dram_hits: self.dram_hits,
            nvm_hits: self.nvm_hits,
            misses: self.misses,
            hit_ratio: ratio(self.dram_hits + self.nvm_hits),
            storage_read_pages: self.storage_reads,
            storage_read_bytes: self.storage_reads * self.page_size,
            storage_write_pages: self.storage_writes,
            storage_write_bytes: self.storage_writes * self.page_size,
            flushes: self.flushes,
            dram_reads: self.dram_reads,
            dram_writes: self.dram_writes,
            pja_reads: self.pja_reads,
            pja_writes: self.pja_writes,
            refreshes: self.refreshes,
            refresh_events: self.refresh_events,
            refresh_misses,
            queue_slots_drained: self.queue_slots_drained,
            pdflush_events: self.flush_events,
            mean_response_us: if self.accesses == 0 { 0.0 } else { self.total_response_us / self.accesses as f64 },
            max_response_us: self.max_response_us,
            total_response_us: self.total_response_us,
            background_us: self.background_us,
            end_time_s,
            max_idle_s: ledger.max_interval_s(),
            failure,
            config: config.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trace_id: String,
    pub scheme: String,
    pub accesses: u64,
    pub reads: u64,
    pub writes: u64,
    pub dram_hits: u64,
    pub nvm_hits: u64,
    pub misses: u64,
    pub hit_ratio: f64,
    pub storage_read_pages: u64,
    pub storage_read_bytes: u64,
    pub storage_write_pages: u64,
    pub storage_write_bytes: u64,
    pub flushes: FlushCounts,
    pub dram_reads: u64,
    pub dram_writes: u64,
    pub pja_reads: u64,
    /// Journal writes, refreshes included.
    pub pja_writes: u64,
    pub refreshes: u64,
    pub refresh_events: u64,
    pub refresh_misses: u64,
    pub queue_slots_drained: u64,
    pub pdflush_events: u64,
    pub mean_response_us: f64,
    pub max_response_us: f64,
    pub total_response_us: f64,
    pub background_us: f64,
    pub end_time_s: f64,
    pub max_idle_s: f64,
    pub failure: FailureSummary,
    pub config: SimConfig,
}

impl RunReport {
    /// Value of a named comparison metric.
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "hit_ratio" => self.hit_ratio,
            "storage_write_pages" => self.storage_write_pages as f64,
            "storage_read_pages" => self.storage_read_pages as f64,
            "pja_writes" => self.pja_writes as f64,
            "refreshes" => self.refreshes as f64,
            "mean_response_us" => self.mean_response_us,
            "max_idle_s" => self.max_idle_s,
            "retention_loss" => self.failure.retention_loss,
            "write_loss" => self.failure.write_loss,
            "combined_loss" => self.failure.combined_loss,
            _ => return None,
        })
    }
}

pub const COMPARISON_METRICS: [&str; 10] = [
    "hit_ratio",
    "storage_write_pages",
    "storage_read_pages",
    "pja_writes",
    "refreshes",
    "mean_response_us",
    "max_idle_s",
    "retention_loss",
    "write_loss",
    "combined_loss",
];

/// A value relative to the baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ratio {
    Finite(f64),
    /// Non-zero value against a zero baseline.
    Infinite,
}

impl Ratio {
    pub fn of(value: f64, base: f64) -> Self {
        if base == 0.0 {
            if value == 0.0 { Ratio::Finite(1.0) } else { Ratio::Infinite }
        } else {
            Ratio::Finite(value / base)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Ratio::Finite(v) => v,
            Ratio::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(v) => write!(f, "{v}"),
            Ratio::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: String,
    pub values: Vec<f64>,
    pub ratios: Vec<Ratio>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub trace_id: String,
    pub baseline: String,
    pub metrics: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompareError {
    Empty,
    BaselineOutOfRange(usize),
    TraceMismatch { expected: String, found: String },
}

impl fmt::Display for CompareError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompareError::Empty => f.write_str("no reports to compare"),
            CompareError::BaselineOutOfRange(i) => write!(f, "baseline index {i} out of range"),
            CompareError::TraceMismatch { expected, found } => {
                write!(f, "reports come from different traces ({expected} vs {found})")
            }
        }
    }
}

impl core::error::Error for CompareError {}

/// Tabulates every report against `reports[baseline]`.
pub fn compare(reports: &[RunReport], baseline: usize) -> Result<ComparisonTable, CompareError> {
    let first = reports.first().ok_or(CompareError::Empty)?;
    let base = reports.get(baseline).ok_or(CompareError::BaselineOutOfRange(baseline))?;
    if let Some(r) = reports.iter().find(|r| r.trace_id != first.trace_id) {
        return Err(CompareError::TraceMismatch { expected: first.trace_id.clone(), found: r.trace_id.clone() });
    }
    let rows = reports
        .iter()
        .map(|r| {
            let values: Vec<f64> = COMPARISON_METRICS.iter().map(|m| r.metric(m).unwrap_or(0.0)).collect();
            let ratios = COMPARISON_METRICS
                .iter()
                .zip(&values)
                .map(|(m, v)| Ratio::of(*v, base.metric(m).unwrap_or(0.0)))
                .collect();
            ComparisonRow { scheme: r.scheme.clone(), values, ratios }
        })
        .collect();
    Ok(ComparisonTable {
        trace_id: first.trace_id.clone(),
        baseline: base.scheme.clone(),
        metrics: COMPARISON_METRICS.iter().map(|m| String::from(*m)).collect(),
        rows,
    })
}
