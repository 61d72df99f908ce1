//! Retention and write failure model for SEC-DED protected journal pages.
//!
//! A word of `k` bits is lost when two or more of its bits flip; a page of
//! `w` words is lost when any word is lost. Per-cell retention failure grows
//! with idle time as `1 - exp(-t / exp(delta))`; write failure accumulates
//! over the `n` writes committed to a page.
//!
//! Probabilities are computed in the log domain (`ln_1p`/`exp_m1`) so that
//! tiny losses keep full relative precision instead of collapsing to zero
//! through `1 - (1 - x)`.

use alloc::vec::Vec;
use core::f64::consts::{E, PI};
use core::fmt;

use libm::{exp, expm1, log, log1p};
use serde::{Deserialize, Serialize};

use crate::ledger::IdleLedger;
use crate::trace::PageId;

/// Smallest probability reported as nonzero.
pub const REPORTING_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureParams {
    /// Thermal stability factor.
    pub delta: f64,
    /// Bits per protected word.
    pub k: u32,
    /// Words per page.
    pub w: u32,
    /// Per-cell write error probability.
    pub p_wf_cell: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<WriteFailurePhysical>,
}

impl Default for FailureParams {
    fn default() -> Self {
        Self { delta: 40.0, k: 64, w: 512, p_wf_cell: 1e-8, physical: None }
    }
}

/// Inputs of the physical write-failure model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteFailurePhysical {
    pub t_write: f64,
    pub mu_b: f64,
    /// Tunneling spin polarization.
    pub p: f64,
    pub i_write: f64,
    pub i_c0: f64,
    pub c: f64,
    /// Free layer magnetic momentum.
    pub m: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReliabilityError {
    NegativeTime(f64),
    InvalidParams(&'static str),
    ZeroDenominator,
}

impl fmt::Display for ReliabilityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NegativeTime(t) => write!(f, "idle time {t} must be non-negative"),
            Self::InvalidParams(what) => write!(f, "invalid failure parameters: {what}"),
            Self::ZeroDenominator => write!(f, "write failure model denominator is zero"),
        }
    }
}

impl core::error::Error for ReliabilityError {}

impl FailureParams {
    pub fn validate(&self) -> Result<(), ReliabilityError> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(ReliabilityError::InvalidParams("delta must be positive"));
        }
        if self.k < 2 {
            return Err(ReliabilityError::InvalidParams("k must be at least 2"));
        }
        if self.w < 1 {
            return Err(ReliabilityError::InvalidParams("w must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p_wf_cell) {
            return Err(ReliabilityError::InvalidParams("p_wf_cell must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Per-cell write failure: the physical model when configured, else `p_wf_cell`.
    pub fn write_failure_cell(&self) -> Result<f64, ReliabilityError> {
        match &self.physical {
            Some(phys) => p_wf_cell_physical(phys),
            None => Ok(self.p_wf_cell),
        }
    }
}

/// Per-cell retention failure after `t` idle seconds.
pub fn p_rf_cell(t: f64, delta: f64) -> Result<f64, ReliabilityError> {
    if t.is_nan() || t < 0.0 {
        return Err(ReliabilityError::NegativeTime(t));
    }
    Ok(-expm1(-t * exp(-delta)))
}

// (survival, loss) of one k-bit word, each computed where it is well
// conditioned: the loss tail for small p, the survival terms otherwise.
fn word_probs(p: f64, k: u32) -> (f64, f64) {
    if p <= 0.0 {
        return (1.0, 0.0);
    }
    if p >= 1.0 {
        return (0.0, 1.0);
    }
    let kf = k as f64;
    if p * kf < 0.5 {
        // binomial tail from two flips up; all terms positive
        let ratio = p / (1.0 - p);
        let mut term = kf * (kf - 1.0) / 2.0 * p * p * exp((kf - 2.0) * log1p(-p));
        let mut sum = 0.0;
        let mut j = 2.0;
        while j <= kf && term > 0.0 {
            sum += term;
            if term < sum * 1e-18 {
                break;
            }
            term *= (kf - j) / (j + 1.0) * ratio;
            j += 1.0;
        }
        (1.0 - sum, sum)
    } else {
        let survive = exp((kf - 1.0) * log1p(-p)) * (1.0 + (kf - 1.0) * p);
        (survive, 1.0 - survive)
    }
}

/// Probability that a `k`-bit word has two or more flipped bits.
pub fn word_loss(p: f64, k: u32) -> f64 {
    word_probs(p, k).1
}

/// Probability that a word survives: no flip or exactly one flip.
pub fn word_survival(p: f64, k: u32) -> f64 {
    word_probs(p, k).0
}

// 1 - survival^(w * n) via expm1 of the log survival.
fn page_loss_from_cell(p: f64, k: u32, w: u32, n: f64) -> f64 {
    let (survive, loss) = word_probs(p, k);
    let ln_survive = if loss < 0.5 { log1p(-loss) } else { log(survive) };
    if ln_survive == f64::NEG_INFINITY {
        return if n > 0.0 { 1.0 } else { 0.0 };
    }
    (-expm1(w as f64 * n * ln_survive)).clamp(0.0, 1.0)
}

/// Page data loss from retention failure over one idle interval of `t` seconds.
pub fn p_dl_rf_page(t: f64, params: &FailureParams) -> Result<f64, ReliabilityError> {
    let p = p_rf_cell(t, params.delta)?;
    Ok(page_loss_from_cell(p, params.k, params.w, 1.0))
}

/// Page data loss from retention failure over all idle intervals.
pub fn p_dl_rf_intervals(durations: &[f64], params: &FailureParams) -> Result<f64, ReliabilityError> {
    let mut log_survive = 0.0;
    for &t in durations {
        log_survive += log1p(-p_dl_rf_page(t, params)?);
    }
    Ok(-expm1(log_survive))
}

/// Physical per-cell write failure probability, clamped to `[0, 1]`.
pub fn p_wf_cell_physical(phys: &WriteFailurePhysical) -> Result<f64, ReliabilityError> {
    if phys.t_write.is_nan() || phys.t_write <= 0.0 {
        return Err(ReliabilityError::InvalidParams("t_write must be positive"));
    }
    let denom = phys.c + E * phys.m * (1.0 + phys.p * phys.p) * log(PI * PI * phys.delta / 4.0);
    if denom == 0.0 || !denom.is_finite() {
        return Err(ReliabilityError::ZeroDenominator);
    }
    let num = phys.t_write * 2.0 * phys.mu_b * phys.p * (phys.i_write - phys.i_c0);
    Ok(exp(-num / denom).clamp(0.0, 1.0))
}

/// Page data loss from write failure after `n` committed writes.
pub fn p_dl_wf_page(params: &FailureParams, n: u64) -> Result<f64, ReliabilityError> {
    if n == 0 {
        return Ok(0.0);
    }
    let p = params.write_failure_cell()?;
    Ok(page_loss_from_cell(p, params.k, params.w, n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageFailure {
    pub page: PageId,
    pub retention_loss: f64,
    pub write_loss: f64,
    pub writes: u64,
    pub intervals: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub retention_loss: f64,
    pub write_loss: f64,
    pub combined_loss: f64,
    pub pages: u64,
    pub interval_count: u64,
    pub max_interval_s: f64,
    pub mean_interval_s: f64,
    pub total_writes: u64,
    pub total_refreshes: u64,
    /// Set when a nonzero exposure produced a probability below the
    /// reporting floor; such values are reported as 0.
    pub underflow: bool,
}

/// Per-page retention and write losses, in page order.
pub fn page_failures(ledger: &IdleLedger, params: &FailureParams) -> Result<Vec<PageFailure>, ReliabilityError> {
    params.validate()?;
    let mut out = Vec::with_capacity(ledger.page_count());
    for (page, h) in ledger.iter() {
        let mut log_survive = 0.0;
        for i in &h.intervals {
            log_survive += log1p(-p_dl_rf_page(i.len_s(), params)?);
        }
        out.push(PageFailure {
            page: *page,
            retention_loss: -expm1(log_survive),
            write_loss: p_dl_wf_page(params, h.writes)?,
            writes: h.writes,
            intervals: h.intervals.len() as u64,
        });
    }
    Ok(out)
}

/// Whole-journal loss probabilities: a journal loses data when any page does.
pub fn aggregate_pja_failure(ledger: &IdleLedger, params: &FailureParams) -> Result<FailureSummary, ReliabilityError> {
    let pages = page_failures(ledger, params)?;
    let mut log_keep_rf = 0.0;
    let mut log_keep_wf = 0.0;
    let mut underflow = false;
    for pf in &pages {
        log_keep_rf += log1p(-pf.retention_loss);
        log_keep_wf += log1p(-pf.write_loss);
    }
    let exposed_rf = ledger.intervals().any(|i| i.len_s() > 0.0);
    let exposed_wf = ledger.total_writes() > 0 && params.write_failure_cell()? > 0.0;
    let mut floor = |x: f64, exposed: bool| {
        if x < REPORTING_FLOOR {
            underflow |= exposed;
            0.0
        } else {
            x
        }
    };
    let retention_loss = floor(-expm1(log_keep_rf), exposed_rf);
    let write_loss = floor(-expm1(log_keep_wf), exposed_wf);
    let combined_loss = floor(-expm1(log_keep_rf + log_keep_wf), exposed_rf || exposed_wf);

    let interval_count = ledger.interval_count();
    let total: f64 = ledger.intervals().map(|i| i.len_s()).sum();
    Ok(FailureSummary {
        retention_loss,
        write_loss,
        combined_loss,
        pages: pages.len() as u64,
        interval_count,
        max_interval_s: ledger.max_interval_s(),
        mean_interval_s: if interval_count == 0 { 0.0 } else { total / interval_count as f64 },
        total_writes: ledger.total_writes(),
        total_refreshes: ledger.total_refreshes(),
        underflow,
    })
}
