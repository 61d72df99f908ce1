//! Per-page record of journal idle intervals and write counts.
//!
//! Every write committed to a journal page (application write or refresh)
//! closes the page's open idle interval and starts a new one. Eviction and
//! flushing close the open interval without starting another.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::trace::PageId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn len_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PageHistory {
    pub intervals: Vec<Interval>,
    pub open_since: Option<f64>,
    /// Writes committed to the journal copy, refreshes included.
    pub writes: u64,
    pub refreshes: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdleLedger {
    pages: BTreeMap<PageId, PageHistory>,
}

impl IdleLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// A journal write of `page` at `t`.
    pub fn record_write(&mut self, page: PageId, t: f64) {
        let h = self.pages.entry(page).or_default();
        if let Some(start) = h.open_since.take() {
            h.intervals.push(Interval { start_s: start, end_s: t });
        }
        h.open_since = Some(t);
        h.writes += 1;
    }

    pub fn record_refresh(&mut self, page: PageId, t: f64) {
        self.record_write(page, t);
        if let Some(h) = self.pages.get_mut(&page) {
            h.refreshes += 1;
        }
    }

    /// The journal copy of `page` was discarded at `t`.
    pub fn close(&mut self, page: PageId, t: f64) {
        if let Some(h) = self.pages.get_mut(&page) {
            if let Some(start) = h.open_since.take() {
                h.intervals.push(Interval { start_s: start, end_s: t });
            }
        }
    }

    /// Closes every open interval at `t_end`.
    pub fn finalize(&mut self, t_end: f64) {
        for h in self.pages.values_mut() {
            if let Some(start) = h.open_since.take() {
                h.intervals.push(Interval { start_s: start, end_s: t_end });
            }
        }
    }

    pub fn is_finalized(&self) -> bool {
        self.pages.values().all(|h| h.open_since.is_none())
    }

    pub fn get(&self, page: &PageId) -> Option<&PageHistory> {
        self.pages.get(page)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PageId, &PageHistory)> {
        self.pages.iter()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn intervals(&self) -> impl Iterator<Item = &Interval> {
        self.pages.values().flat_map(|h| h.intervals.iter())
    }

    pub fn interval_count(&self) -> u64 {
        self.pages.values().map(|h| h.intervals.len() as u64).sum()
    }

    pub fn max_interval_s(&self) -> f64 {
        self.intervals().map(Interval::len_s).fold(0.0, f64::max)
    }

    pub fn total_writes(&self) -> u64 {
        self.pages.values().map(|h| h.writes).sum()
    }

    pub fn total_refreshes(&self) -> u64 {
        self.pages.values().map(|h| h.refreshes).sum()
    }

    /// Appends a closed interval; used when importing an exported ledger.
    pub fn push_interval(&mut self, page: PageId, interval: Interval) {
        self.pages.entry(page).or_default().intervals.push(interval);
    }

    /// Sets write and refresh counts; used when importing an exported ledger.
    pub fn set_counts(&mut self, page: PageId, writes: u64, refreshes: u64) {
        let h = self.pages.entry(page).or_default();
        h.writes = writes;
        h.refreshes = refreshes;
    }
}
