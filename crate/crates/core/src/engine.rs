//! Event-driven replay: page accesses interleaved with scheme timers.
//!
//! Timers fire at exact multiples of their period. A timer due at the same
//! instant as a request fires first. The run ends at the last request; no
//! timer after it is processed.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::buffer::{AccessOutcome, Buffer, BufferConfig, BufferMode, InvariantViolation};
use crate::ledger::IdleLedger;
use crate::metrics::{LatencyModel, Recorder, RunReport};
use crate::reliability::{FailureParams, ReliabilityError};
use crate::schemes::{Copa, SchemeConfig, SchemeKind, SchemeState, TimerOutcome, TimerSchedule};
use crate::trace::PageAccess;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub page_size: u64,
    pub buffer: BufferConfig,
    pub scheme: SchemeConfig,
    pub failure: FailureParams,
    pub latency: LatencyModel,
    /// Charge refresh traffic to the request that follows it.
    pub serialize_refresh: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            page_size: 4096,
            buffer: BufferConfig::default(),
            scheme: SchemeConfig::default(),
            failure: FailureParams::default(),
            latency: LatencyModel::default(),
            serialize_refresh: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = |m: String| Err(SimError::Config(m));
        if !self.page_size.is_power_of_two() {
            return cfg(format!("page_size must be a power of two, got {}", self.page_size));
        }
        if self.buffer.dram_pages == 0 || self.buffer.pja_pages == 0 {
            return cfg("buffer capacities must be at least one page".into());
        }
        self.scheme.validate().map_err(SimError::Config)?;
        self.latency.validate().map_err(SimError::Config)?;
        self.failure.validate().map_err(|e| SimError::Config(format!("{e}")))?;
        if self.buffer.mode == BufferMode::Hyb && self.scheme.refreshes() {
            return cfg(format!("scheme {} is not supported in hyb mode", self.scheme.label()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Config(String),
    Invariant(InvariantViolation),
    Reliability(ReliabilityError),
}

impl SimError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Reliability(_) => 1,
            SimError::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Config(m) => write!(f, "invalid configuration: {m}"),
            SimError::Invariant(v) => write!(f, "invariant violated: {v}"),
            SimError::Reliability(e) => write!(f, "reliability model: {e}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<InvariantViolation> for SimError {
    fn from(v: InvariantViolation) -> Self {
        SimError::Invariant(v)
    }
}

impl From<ReliabilityError> for SimError {
    fn from(e: ReliabilityError) -> Self {
        SimError::Reliability(e)
    }
}

/// Everything that happened while processing one access.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub timers: Vec<TimerOutcome>,
    pub access: AccessOutcome,
    pub response_us: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    buffer: Buffer,
    scheme: SchemeState,
    ledger: IdleLedger,
    recorder: Recorder,
    timers: TimerSchedule,
    last_time_s: Option<f64>,
    check_invariants: bool,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Self {
            buffer: Buffer::new(config.buffer.clone()),
            scheme: SchemeState::new(&config.scheme),
            ledger: IdleLedger::new(),
            recorder: Recorder::new(config.latency.clone(), config.serialize_refresh, config.page_size),
            timers: TimerSchedule::new(&config.scheme),
            last_time_s: None,
            check_invariants: false,
            config,
        })
    }

    /// Check buffer and queue invariants after every event (slow).
    pub fn with_invariant_checks(mut self, on: bool) -> Self {
        self.check_invariants = on;
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn buffer(&self) -> &Buffer {
        &self.buffer
    }

    pub fn ledger(&self) -> &IdleLedger {
        &self.ledger
    }

    pub fn copa(&self) -> Option<&Copa> {
        self.scheme.copa()
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        self.buffer.check_invariants()?;
        if let Some(c) = self.scheme.copa() {
            c.check_consistency(&self.buffer)?;
        }
        Ok(())
    }

    /// Fires every timer due at or before `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<Vec<TimerOutcome>, SimError> {
        let mut fired = Vec::new();
        while let Some(ev) = self.timers.peek().filter(|e| e.time_s <= t) {
            self.timers.next();
            let out = self.scheme.on_timer(
                ev,
                &self.config.scheme,
                &mut self.buffer,
                &mut self.ledger,
                self.config.page_size,
            )?;
            match &out {
                TimerOutcome::Refresh(r) => self.recorder.record_refresh(r),
                TimerOutcome::Flush(r) => self.recorder.record_flush(r),
            }
            if self.check_invariants {
                self.check_invariants()?;
            }
            fired.push(out);
        }
        Ok(fired)
    }

    pub fn process(&mut self, a: &PageAccess) -> Result<StepOutcome, SimError> {
        if let Some(last) = self.last_time_s {
            if a.timestamp_s < last {
                return Err(InvariantViolation::ClockRegression { clock: last, event: a.timestamp_s }.into());
            }
        }
        let timers = self.advance_to(a.timestamp_s)?;
        let access = self.buffer.access(a, &mut self.ledger)?;
        self.scheme.observe(&access);
        let response_us = self.recorder.record_access(a, &access);
        if self.check_invariants {
            self.check_invariants()?;
        }
        self.last_time_s = Some(a.timestamp_s);
        Ok(StepOutcome { timers, access, response_us })
    }

    /// Closes open idle intervals at the last request and builds the report.
    pub fn finish(mut self, trace_id: &str) -> Result<(RunReport, IdleLedger), SimError> {
        let end = self.last_time_s.unwrap_or(0.0);
        self.ledger.finalize(end);
        let report =
            self.recorder.finish(&self.ledger, &self.config, trace_id, end, self.buffer.refresh_misses())?;
        Ok((report, self.ledger))
    }
}

/// Replays `accesses` (time-ordered) under `config`.
pub fn simulate<I>(config: &SimConfig, accesses: I, trace_id: &str) -> Result<(RunReport, IdleLedger), SimError>
where
    I: IntoIterator<Item = PageAccess>,
{
    let mut sim = Simulation::new(config.clone())?;
    for a in accesses {
        sim.process(&a)?;
    }
    sim.finish(trace_id)
}

impl SchemeKind {
    pub fn all() -> [SchemeKind; 4] {
        [SchemeKind::NoPdflush, SchemeKind::Baseline, SchemeKind::ConvScheme, SchemeKind::Copa]
    }
}
