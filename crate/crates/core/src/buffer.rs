//! DRAM buffer plus journal area state machine.
//!
//! In NVB mode the journal (PJA) mirrors exactly the dirty DRAM pages:
//! writes land in DRAM and in the journal, the journal is never read on the
//! request path, and a page leaves the journal when it is flushed because
//! either the journal or DRAM evicted it. In Hyb mode DRAM and NVM form a
//! single two-level buffer: dirty pages are written to both, DRAM victims
//! are admitted to NVM and NVM hits migrate back to DRAM.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ledger::IdleLedger;
use crate::lru::LruMap;
use crate::trace::{AccessKind, PageAccess, PageId};

/// 8 GiB of 4 KiB pages.
pub const DEFAULT_DRAM_PAGES: usize = 2_097_152;
/// 512 MiB of 4 KiB pages.
pub const DEFAULT_PJA_PAGES: usize = 131_072;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferMode {
    Nvb,
    Hyb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferConfig {
    pub dram_pages: usize,
    pub pja_pages: usize,
    pub mode: BufferMode,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self { dram_pages: DEFAULT_DRAM_PAGES, pja_pages: DEFAULT_PJA_PAGES, mode: BufferMode::Nvb }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitKind {
    DramHit,
    NvmHit,
    Miss,
}

/// Why a dirty page was written back to storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushCause {
    JournalEviction,
    DramEviction,
    Timer,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushCounts {
    pub journal_eviction: u64,
    pub dram_eviction: u64,
    pub timer: u64,
}

impl FlushCounts {
    pub fn total(&self) -> u64 {
        self.journal_eviction + self.dram_eviction + self.timer
    }

    fn bump(&mut self, cause: FlushCause) {
        match cause {
            FlushCause::JournalEviction => self.journal_eviction += 1,
            FlushCause::DramEviction => self.dram_eviction += 1,
            FlushCause::Timer => self.timer += 1,
        }
    }

    pub fn add(&mut self, other: &FlushCounts) {
        self.journal_eviction += other.journal_eviction;
        self.dram_eviction += other.dram_eviction;
        self.timer += other.timer;
    }
}

/// Device traffic and side effects of one buffer operation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccessOutcome {
    /// `None` for maintenance operations (flush, refresh).
    pub hit: Option<HitKind>,
    pub dram_reads: u64,
    pub dram_writes: u64,
    pub pja_reads: u64,
    pub pja_writes: u64,
    pub storage_reads: u64,
    pub storage_writes: u64,
    /// Page whose journal copy was written by an application write.
    pub journal_write: Option<PageId>,
    /// Dirty pages written back to storage and dropped from the journal.
    pub evicted_flushes: Vec<PageId>,
    pub flushes: FlushCounts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageMeta {
    pub page: PageId,
    pub dirty: bool,
    pub last_write_s: f64,
    pub in_pja: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DramEntry {
    dirty: bool,
    last_write_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PjaEntry {
    /// Start of the current idle interval.
    pub last_pja_write_s: f64,
    /// Writes since admission, refreshes included.
    pub pja_write_count: u64,
    /// Always true in NVB mode; Hyb mode also holds clean pages.
    pub dirty: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InvariantViolation {
    FlushNotDirty(PageId),
    DirtyWithoutJournal(PageId),
    JournalWithoutDirty(PageId),
    DirtyIndexMismatch,
    Overfull { dram: usize, pja: usize },
    ClockRegression { clock: f64, event: f64 },
    QueueMismatch(PageId),
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FlushNotDirty(p) => write!(f, "flush of page {p} which is clean or not journaled"),
            Self::DirtyWithoutJournal(p) => write!(f, "dirty page {p} has no journal copy"),
            Self::JournalWithoutDirty(p) => write!(f, "journal holds page {p} that is not dirty in DRAM"),
            Self::DirtyIndexMismatch => write!(f, "dirty-page index disagrees with page state"),
            Self::Overfull { dram, pja } => write!(f, "occupancy over capacity (dram {dram}, pja {pja})"),
            Self::ClockRegression { clock, event } => {
                write!(f, "event at {event}s precedes simulation clock {clock}s")
            }
            Self::QueueMismatch(p) => write!(f, "refresh queues disagree with journal for page {p}"),
        }
    }
}

impl core::error::Error for InvariantViolation {}

#[derive(Debug, Clone)]
pub struct Buffer {
    config: BufferConfig,
    clock: f64,
    dram: LruMap<PageId, DramEntry>,
    pja: LruMap<PageId, PjaEntry>,
    // dirty pages ordered by last application write
    dirty_order: LruMap<PageId, f64>,
    refresh_misses: u64,
}

impl Buffer {
    /// Capacities must be at least one page; callers validate configuration.
    pub fn new(config: BufferConfig) -> Self {
        assert!(config.dram_pages >= 1 && config.pja_pages >= 1, "capacities must be >= 1");
        Self {
            config,
            clock: 0.0,
            dram: LruMap::new(),
            pja: LruMap::new(),
            dirty_order: LruMap::new(),
            refresh_misses: 0,
        }
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn dram_len(&self) -> usize {
        self.dram.len()
    }

    pub fn pja_len(&self) -> usize {
        self.pja.len()
    }

    pub fn refresh_misses(&self) -> u64 {
        self.refresh_misses
    }

    pub fn in_dram(&self, page: &PageId) -> bool {
        self.dram.contains(page)
    }

    pub fn in_pja(&self, page: &PageId) -> bool {
        self.pja.contains(page)
    }

    pub fn pja_entry(&self, page: &PageId) -> Option<&PjaEntry> {
        self.pja.get(page)
    }

    pub fn page_meta(&self, page: &PageId) -> Option<PageMeta> {
        self.dram.get(page).map(|e| PageMeta {
            page: *page,
            dirty: e.dirty,
            last_write_s: e.last_write_s,
            in_pja: self.pja.contains(page),
        })
    }

    /// DRAM pages from least to most recently used.
    pub fn dram_pages(&self) -> impl Iterator<Item = PageId> + '_ {
        self.dram.keys()
    }

    /// Journal pages from least to most recently used.
    pub fn pja_pages(&self) -> impl Iterator<Item = PageId> + '_ {
        self.pja.keys()
    }

    /// Dirty pages and the time each was last written, oldest write first.
    pub fn snapshot_dirty_set(&self) -> Vec<(PageId, f64)> {
        self.dirty_order.iter().map(|(p, t)| (*p, *t)).collect()
    }

    /// Dirty pages last written at or before `cutoff_s`, oldest first.
    pub fn dirty_written_before(&self, cutoff_s: f64) -> Vec<PageId> {
        self.dirty_order.iter().take_while(|(_, t)| **t <= cutoff_s).map(|(p, _)| *p).collect()
    }

    pub fn dirty_count(&self) -> usize {
        self.dirty_order.len()
    }

    fn advance(&mut self, t: f64) -> Result<(), InvariantViolation> {
        if t < self.clock {
            return Err(InvariantViolation::ClockRegression { clock: self.clock, event: t });
        }
        self.clock = t;
        Ok(())
    }

    /// Dispatches to the configured buffer mode.
    pub fn access(
        &mut self,
        a: &PageAccess,
        ledger: &mut IdleLedger,
    ) -> Result<AccessOutcome, InvariantViolation> {
        match self.config.mode {
            BufferMode::Nvb => self.access_nvb(a, ledger),
            BufferMode::Hyb => self.access_hyb(a, ledger),
        }
    }

    pub fn access_nvb(
        &mut self,
        a: &PageAccess,
        ledger: &mut IdleLedger,
    ) -> Result<AccessOutcome, InvariantViolation> {
        self.advance(a.timestamp_s)?;
        let t = a.timestamp_s;
        let p = a.page;
        let mut out = AccessOutcome::default();
        match a.kind {
            AccessKind::Read => {
                if self.dram.touch(&p) {
                    // recency only: the journal copy is neither read nor rewritten
                    self.pja.touch(&p);
                    out.hit = Some(HitKind::DramHit);
                    out.dram_reads = 1;
                } else {
                    out.hit = Some(HitKind::Miss);
                    out.storage_reads = 1;
                    out.dram_writes = 1;
                    self.make_room_nvb(ledger, &mut out);
                    self.dram.insert(p, DramEntry { dirty: false, last_write_s: t });
                }
            }
            AccessKind::Write => {
                out.hit = Some(if self.dram.contains(&p) { HitKind::DramHit } else { HitKind::Miss });
                out.dram_writes = 1;
                out.pja_writes = 1;
                out.journal_write = Some(p);

                if let Some(e) = self.pja.get_mut(&p) {
                    e.last_pja_write_s = t;
                    e.pja_write_count += 1;
                    self.pja.touch(&p);
                } else {
                    if self.pja.len() >= self.config.pja_pages {
                        let victim = *self.pja.peek_lru().expect("journal is full").0;
                        self.flush_nvb(victim, FlushCause::JournalEviction, ledger, &mut out);
                    }
                    self.pja.insert(p, PjaEntry { last_pja_write_s: t, pja_write_count: 1, dirty: true });
                }
                ledger.record_write(p, t);

                if let Some(e) = self.dram.get_mut(&p) {
                    e.dirty = true;
                    e.last_write_s = t;
                    self.dram.touch(&p);
                } else {
                    self.make_room_nvb(ledger, &mut out);
                    self.dram.insert(p, DramEntry { dirty: true, last_write_s: t });
                }
                self.dirty_order.insert(p, t);
            }
        }
        Ok(out)
    }

    fn make_room_nvb(&mut self, ledger: &mut IdleLedger, out: &mut AccessOutcome) {
        if self.dram.len() < self.config.dram_pages {
            return;
        }
        let (victim, entry) = self.dram.pop_lru().expect("dram is full");
        if entry.dirty {
            self.pja.remove(&victim);
            self.dirty_order.remove(&victim);
            ledger.close(victim, self.clock);
            out.storage_writes += 1;
            out.evicted_flushes.push(victim);
            out.flushes.bump(FlushCause::DramEviction);
        }
    }

    fn flush_nvb(&mut self, page: PageId, cause: FlushCause, ledger: &mut IdleLedger, out: &mut AccessOutcome) {
        if let Some(e) = self.dram.get_mut(&page) {
            e.dirty = false;
        }
        self.pja.remove(&page);
        self.dirty_order.remove(&page);
        ledger.close(page, self.clock);
        out.storage_writes += 1;
        out.evicted_flushes.push(page);
        out.flushes.bump(cause);
    }

    pub fn access_hyb(
        &mut self,
        a: &PageAccess,
        ledger: &mut IdleLedger,
    ) -> Result<AccessOutcome, InvariantViolation> {
        self.advance(a.timestamp_s)?;
        let t = a.timestamp_s;
        let p = a.page;
        let mut out = AccessOutcome::default();
        match a.kind {
            AccessKind::Read => {
                if self.dram.touch(&p) {
                    out.hit = Some(HitKind::DramHit);
                    out.dram_reads = 1;
                } else if let Some(e) = self.pja.get(&p).copied() {
                    out.hit = Some(HitKind::NvmHit);
                    out.pja_reads = 1;
                    out.dram_writes = 1;
                    // a dirty page keeps its NVM copy; a clean one moves
                    if !e.dirty {
                        self.pja.remove(&p);
                    }
                    let last = self.dirty_order.get(&p).copied().unwrap_or(e.last_pja_write_s);
                    self.insert_dram_hyb(p, DramEntry { dirty: e.dirty, last_write_s: last }, ledger, &mut out);
                } else {
                    out.hit = Some(HitKind::Miss);
                    out.storage_reads = 1;
                    out.dram_writes = 1;
                    self.insert_dram_hyb(p, DramEntry { dirty: false, last_write_s: t }, ledger, &mut out);
                }
            }
            AccessKind::Write => {
                out.hit = Some(if self.dram.contains(&p) {
                    HitKind::DramHit
                } else if self.pja.contains(&p) {
                    HitKind::NvmHit
                } else {
                    HitKind::Miss
                });
                out.dram_writes = 1;
                out.pja_writes = 1;
                out.journal_write = Some(p);
                if let Some(e) = self.dram.get_mut(&p) {
                    e.dirty = true;
                    e.last_write_s = t;
                    self.dram.touch(&p);
                } else {
                    self.insert_dram_hyb(p, DramEntry { dirty: true, last_write_s: t }, ledger, &mut out);
                }
                let entry = match self.pja.get(&p) {
                    Some(e) => PjaEntry {
                        last_pja_write_s: t,
                        pja_write_count: e.pja_write_count + 1,
                        dirty: true,
                    },
                    None => PjaEntry { last_pja_write_s: t, pja_write_count: 1, dirty: true },
                };
                self.insert_nvm_hyb(p, entry, ledger, &mut out);
                ledger.record_write(p, t);
                if let Some(e) = self.dram.get_mut(&p) {
                    e.dirty = true;
                }
                self.dirty_order.insert(p, t);
            }
        }
        Ok(out)
    }

    // Inserts at MRU, then evicts the LRU page if over capacity.
    fn insert_dram_hyb(&mut self, p: PageId, entry: DramEntry, ledger: &mut IdleLedger, out: &mut AccessOutcome) {
        self.dram.insert(p, entry);
        if self.dram.len() <= self.config.dram_pages {
            return;
        }
        let (victim, _) = self.dram.pop_lru().expect("dram over capacity");
        if !self.pja.touch(&victim) {
            // clean victim: its dirty copy, if any, would already be in NVM
            out.pja_writes += 1;
            let e = PjaEntry { last_pja_write_s: self.clock, pja_write_count: 1, dirty: false };
            self.insert_nvm_hyb(victim, e, ledger, out);
        }
    }

    fn insert_nvm_hyb(&mut self, p: PageId, entry: PjaEntry, ledger: &mut IdleLedger, out: &mut AccessOutcome) {
        self.pja.insert(p, entry);
        if self.pja.len() <= self.config.pja_pages {
            return;
        }
        let (victim, e) = self.pja.pop_lru().expect("nvm over capacity");
        if e.dirty {
            if let Some(d) = self.dram.get_mut(&victim) {
                d.dirty = false;
            }
            self.dirty_order.remove(&victim);
            ledger.close(victim, self.clock);
            out.storage_writes += 1;
            out.evicted_flushes.push(victim);
            out.flushes.bump(FlushCause::JournalEviction);
        }
    }

    /// Writes a dirty journaled page back to storage at time `t`.
    pub fn flush_page(
        &mut self,
        page: PageId,
        t: f64,
        ledger: &mut IdleLedger,
    ) -> Result<AccessOutcome, InvariantViolation> {
        self.advance(t)?;
        let journaled_dirty = self.pja.get(&page).is_some_and(|e| e.dirty);
        if !journaled_dirty || !self.dirty_order.contains(&page) {
            return Err(InvariantViolation::FlushNotDirty(page));
        }
        let mut out = AccessOutcome::default();
        match self.config.mode {
            BufferMode::Nvb => self.flush_nvb(page, FlushCause::Timer, ledger, &mut out),
            BufferMode::Hyb => {
                if let Some(d) = self.dram.get_mut(&page) {
                    d.dirty = false;
                }
                if let Some(e) = self.pja.get_mut(&page) {
                    e.dirty = false;
                }
                self.dirty_order.remove(&page);
                ledger.close(page, t);
                out.storage_writes = 1;
                out.evicted_flushes.push(page);
                out.flushes.bump(FlushCause::Timer);
            }
        }
        Ok(out)
    }

    /// Rewrites the journal copy of `page` from its DRAM replica at time `t`.
    ///
    /// Recency is left untouched. A page that is no longer journaled is
    /// skipped and counted in [`Buffer::refresh_misses`].
    pub fn refresh_pja_page(
        &mut self,
        page: PageId,
        t: f64,
        ledger: &mut IdleLedger,
    ) -> Result<AccessOutcome, InvariantViolation> {
        self.advance(t)?;
        let mut out = AccessOutcome::default();
        match self.pja.get_mut(&page) {
            Some(e) if e.dirty => {
                e.last_pja_write_s = t;
                e.pja_write_count += 1;
                ledger.record_refresh(page, t);
                out.dram_reads = 1;
                out.pja_writes = 1;
            }
            _ => self.refresh_misses += 1,
        }
        Ok(out)
    }

    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        if self.dram.len() > self.config.dram_pages || self.pja.len() > self.config.pja_pages {
            return Err(InvariantViolation::Overfull { dram: self.dram.len(), pja: self.pja.len() });
        }
        match self.config.mode {
            BufferMode::Nvb => {
                for (p, e) in self.dram.iter() {
                    if e.dirty && !self.pja.contains(p) {
                        return Err(InvariantViolation::DirtyWithoutJournal(*p));
                    }
                }
                for (p, _) in self.pja.iter() {
                    if !self.dram.get(p).is_some_and(|e| e.dirty) {
                        return Err(InvariantViolation::JournalWithoutDirty(*p));
                    }
                }
                if self.dirty_order.len() != self.pja.len()
                    || self.pja.keys().any(|p| !self.dirty_order.contains(&p))
                {
                    return Err(InvariantViolation::DirtyIndexMismatch);
                }
            }
            BufferMode::Hyb => {
                for (p, e) in self.dram.iter() {
                    if e.dirty && !self.pja.get(p).is_some_and(|n| n.dirty) {
                        return Err(InvariantViolation::DirtyWithoutJournal(*p));
                    }
                }
                let dirty_nvm = self.pja.iter().filter(|(_, e)| e.dirty).count();
                if dirty_nvm != self.dirty_order.len()
                    || self.pja.iter().any(|(p, e)| e.dirty && !self.dirty_order.contains(p))
                {
                    return Err(InvariantViolation::DirtyIndexMismatch);
                }
            }
        }
        Ok(())
    }
}
