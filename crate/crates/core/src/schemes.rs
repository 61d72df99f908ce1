//! Journal management schemes layered on the buffer.
//!
//! * No-pdflush: pages leave the journal only through eviction.
//! * Baseline: a periodic scan flushes pages that have stayed dirty past an
//!   idle threshold (Linux pdflush defaults: every 5 s, 30 s threshold).
//! * Conv: every journaled page is refreshed once per fixed period.
//! * CoPA: cold page awakening. A 2-bit state counter and two address
//!   queues separate recently written pages from idle ones; at the end of
//!   every second time-step the idle (sleepy) queue is refreshed from the
//!   DRAM replicas.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::buffer::{AccessOutcome, Buffer, InvariantViolation};
use crate::ledger::IdleLedger;
use crate::lru::FxMap;
use crate::trace::PageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    NoPdflush,
    Baseline,
    ConvScheme,
    Copa,
}

/// Where CoPA puts sleepy-queue entries after refreshing them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequeuePolicy {
    /// Move each refreshed entry to the awake queue, which becomes the
    /// sleepy queue after the label flip, so resident pages are refreshed
    /// every two time-steps.
    NextPeriod,
    /// Leave refreshed entries where they are; the queue is drained again
    /// only after it has served one period as the awake queue.
    Retain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// CoPA time-step (half a refresh period).
    pub timestep_s: f64,
    pub pdflush_interval_s: f64,
    pub pdflush_idle_threshold_s: f64,
    pub conv_period_s: f64,
    pub requeue: RequeuePolicy,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            kind: SchemeKind::NoPdflush,
            timestep_s: 30.0,
            pdflush_interval_s: 5.0,
            pdflush_idle_threshold_s: 30.0,
            conv_period_s: 60.0,
            requeue: RequeuePolicy::NextPeriod,
        }
    }
}

impl SchemeConfig {
    pub fn no_pdflush() -> Self {
        Self::default()
    }

    pub fn baseline() -> Self {
        Self { kind: SchemeKind::Baseline, ..Self::default() }
    }

    pub fn conv(period_s: f64) -> Self {
        Self { kind: SchemeKind::ConvScheme, conv_period_s: period_s, ..Self::default() }
    }

    pub fn copa(timestep_s: f64) -> Self {
        Self { kind: SchemeKind::Copa, timestep_s, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let periods = [
            ("timestep_s", self.timestep_s),
            ("pdflush_interval_s", self.pdflush_interval_s),
            ("pdflush_idle_threshold_s", self.pdflush_idle_threshold_s),
            ("conv_period_s", self.conv_period_s),
        ];
        for (name, v) in periods {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn refreshes(&self) -> bool {
        matches!(self.kind, SchemeKind::ConvScheme | SchemeKind::Copa)
    }

    /// Short display name, e.g. `CoPA-T30`.
    pub fn label(&self) -> String {
        match self.kind {
            SchemeKind::NoPdflush => "No-pdflush".into(),
            SchemeKind::Baseline => "Baseline".into(),
            SchemeKind::ConvScheme => format!("Conv-P{}", self.conv_period_s),
            SchemeKind::Copa => match self.requeue {
                RequeuePolicy::NextPeriod => format!("CoPA-T{}", self.timestep_s),
                RequeuePolicy::Retain => format!("CoPA-T{}-retain", self.timestep_s),
            },
        }
    }

    fn timer(&self) -> Option<(TimerKind, f64)> {
        match self.kind {
            SchemeKind::NoPdflush => None,
            SchemeKind::Baseline => Some((TimerKind::PdflushTick, self.pdflush_interval_s)),
            SchemeKind::ConvScheme => Some((TimerKind::ConvRefresh, self.conv_period_s)),
            SchemeKind::Copa => Some((TimerKind::CopaStep, self.timestep_s)),
        }
    }
}

/// Two-bit counter: the high bit (QI) names the sleepy queue, the low bit
/// (DC) routes new writes and gates refreshing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateCounter(u8);

impl StateCounter {
    pub fn new(value: u8) -> Self {
        Self(value & 0b11)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn qi(self) -> bool {
        self.0 & 0b10 != 0
    }

    pub fn dc(self) -> bool {
        self.0 & 0b01 != 0
    }

    pub fn increment(&mut self) {
        self.0 = (self.0 + 1) & 0b11;
    }

    pub fn sleepy(self) -> QueueId {
        if self.qi() { QueueId::Q2 } else { QueueId::Q1 }
    }

    pub fn awake(self) -> QueueId {
        self.sleepy().other()
    }

    /// Queue that receives newly written pages.
    pub fn insertion(self) -> QueueId {
        if self.dc() { self.awake() } else { self.sleepy() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueueId {
    Q1,
    Q2,
}

impl QueueId {
    pub fn other(self) -> Self {
        match self {
            QueueId::Q1 => QueueId::Q2,
            QueueId::Q2 => QueueId::Q1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    page: PageId,
    tag: u64,
}

/// The two CoPA address queues.
///
/// Invalidation is lazy: the index holds the one live `(queue, tag)` per
/// page, and queue slots that do not match it are dead. Dead slots are
/// dropped when their queue is drained.
#[derive(Debug, Clone, Default)]
pub struct CopaQueues {
    q1: VecDeque<Slot>,
    q2: VecDeque<Slot>,
    index: FxMap<PageId, (QueueId, u64)>,
    next_tag: u64,
}

impl CopaQueues {
    fn queue_mut(&mut self, q: QueueId) -> &mut VecDeque<Slot> {
        match q {
            QueueId::Q1 => &mut self.q1,
            QueueId::Q2 => &mut self.q2,
        }
    }

    fn queue(&self, q: QueueId) -> &VecDeque<Slot> {
        match q {
            QueueId::Q1 => &self.q1,
            QueueId::Q2 => &self.q2,
        }
    }

    pub fn push(&mut self, q: QueueId, page: PageId) {
        let tag = self.next_tag;
        self.next_tag += 1;
        self.index.insert(page, (q, tag));
        self.queue_mut(q).push_back(Slot { page, tag });
    }

    pub fn invalidate(&mut self, page: &PageId) -> bool {
        self.index.remove(page).is_some()
    }

    fn is_live(&self, q: QueueId, slot: &Slot) -> bool {
        self.index.get(&slot.page) == Some(&(q, slot.tag))
    }

    /// Pages with a live entry in `q`, in queue order.
    pub fn live(&self, q: QueueId) -> Vec<PageId> {
        self.queue(q).iter().filter(|s| self.is_live(q, s)).map(|s| s.page).collect()
    }

    /// Raw slot count of `q`, dead slots included.
    pub fn slot_count(&self, q: QueueId) -> usize {
        self.queue(q).len()
    }

    pub fn live_count(&self) -> usize {
        self.index.len()
    }

    pub fn location(&self, page: &PageId) -> Option<QueueId> {
        self.index.get(page).map(|(q, _)| *q)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefreshReport {
    pub time_s: f64,
    /// Pages rewritten from their DRAM replicas, in refresh order.
    pub refreshed: Vec<PageId>,
    /// Queue slots examined (live and dead).
    pub drained: u64,
    pub traffic: AccessOutcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlushReport {
    pub time_s: f64,
    pub flushed: Vec<PageId>,
    pub bytes: u64,
    pub traffic: AccessOutcome,
}

fn merge(into: &mut AccessOutcome, o: AccessOutcome) {
    into.dram_reads += o.dram_reads;
    into.dram_writes += o.dram_writes;
    into.pja_reads += o.pja_reads;
    into.pja_writes += o.pja_writes;
    into.storage_reads += o.storage_reads;
    into.storage_writes += o.storage_writes;
    into.evicted_flushes.extend(o.evicted_flushes);
    into.flushes.add(&o.flushes);
}

#[derive(Debug, Clone)]
pub struct Copa {
    counter: StateCounter,
    queues: CopaQueues,
    policy: RequeuePolicy,
}

impl Copa {
    pub fn new(policy: RequeuePolicy) -> Self {
        Self { counter: StateCounter::default(), queues: CopaQueues::default(), policy }
    }

    pub fn counter(&self) -> StateCounter {
        self.counter
    }

    pub fn queues(&self) -> &CopaQueues {
        &self.queues
    }

    /// Queue management for a journal write of `page`.
    pub fn on_write(&mut self, page: PageId) {
        self.queues.invalidate(&page);
        self.queues.push(self.counter.insertion(), page);
    }

    /// Queue management for a dirty page leaving the journal.
    pub fn on_dirty_eviction(&mut self, page: PageId) {
        self.queues.invalidate(&page);
    }

    /// End-of-time-step handler. When DC is set the sleepy queue is
    /// refreshed; the counter advances on every call.
    pub fn end_timestep(
        &mut self,
        buffer: &mut Buffer,
        ledger: &mut IdleLedger,
        t: f64,
    ) -> Result<RefreshReport, InvariantViolation> {
        let mut report = RefreshReport { time_s: t, ..RefreshReport::default() };
        if self.counter.dc() {
            let sleepy = self.counter.sleepy();
            let awake = self.counter.awake();
            let drained = core::mem::take(self.queues.queue_mut(sleepy));
            report.drained = drained.len() as u64;
            let mut kept = VecDeque::new();
            for slot in drained {
                if !self.queues.is_live(sleepy, &slot) {
                    continue;
                }
                let o = buffer.refresh_pja_page(slot.page, t, ledger)?;
                if o.pja_writes > 0 {
                    report.refreshed.push(slot.page);
                }
                merge(&mut report.traffic, o);
                match self.policy {
                    RequeuePolicy::NextPeriod => self.queues.push(awake, slot.page),
                    RequeuePolicy::Retain => kept.push_back(slot),
                }
            }
            *self.queues.queue_mut(sleepy) = kept;
        }
        self.counter.increment();
        Ok(report)
    }

    /// Every journaled page has exactly one live entry and nothing else does.
    pub fn check_consistency(&self, buffer: &Buffer) -> Result<(), InvariantViolation> {
        for p in buffer.pja_pages() {
            if self.queues.location(&p).is_none() {
                return Err(InvariantViolation::QueueMismatch(p));
            }
        }
        if self.queues.live_count() != buffer.pja_len() {
            let stray = self.queues.index.keys().find(|p| !buffer.in_pja(p)).copied();
            return Err(InvariantViolation::QueueMismatch(stray.unwrap_or(PageId::new(0, 0))));
        }
        Ok(())
    }
}

/// Flushes every dirty page idle for at least the configured threshold.
pub fn pdflush_tick(
    buffer: &mut Buffer,
    config: &SchemeConfig,
    ledger: &mut IdleLedger,
    t: f64,
    page_size: u64,
) -> Result<FlushReport, InvariantViolation> {
    let mut report = FlushReport { time_s: t, ..FlushReport::default() };
    for page in buffer.dirty_written_before(t - config.pdflush_idle_threshold_s) {
        let o = buffer.flush_page(page, t, ledger)?;
        merge(&mut report.traffic, o);
        report.flushed.push(page);
    }
    report.bytes = report.flushed.len() as u64 * page_size;
    Ok(report)
}

/// Refreshes every journaled page.
pub fn conv_refresh_tick(
    buffer: &mut Buffer,
    ledger: &mut IdleLedger,
    t: f64,
) -> Result<RefreshReport, InvariantViolation> {
    let mut report = RefreshReport { time_s: t, ..RefreshReport::default() };
    let pages: Vec<PageId> = buffer.pja_pages().collect();
    report.drained = pages.len() as u64;
    for page in pages {
        let o = buffer.refresh_pja_page(page, t, ledger)?;
        if o.pja_writes > 0 {
            report.refreshed.push(page);
        }
        merge(&mut report.traffic, o);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimerKind {
    CopaStep,
    PdflushTick,
    ConvRefresh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerEvent {
    pub time_s: f64,
    pub kind: TimerKind,
}

/// Unbounded timer sequence at `k * period` for `k = 1, 2, ...`.
#[derive(Debug, Clone)]
pub struct TimerSchedule {
    timer: Option<(TimerKind, f64)>,
    k: u64,
}

impl TimerSchedule {
    pub fn new(config: &SchemeConfig) -> Self {
        Self { timer: config.timer(), k: 1 }
    }

    pub fn peek(&self) -> Option<TimerEvent> {
        self.timer.map(|(kind, period)| TimerEvent { time_s: self.k as f64 * period, kind })
    }
}

impl Iterator for TimerSchedule {
    type Item = TimerEvent;

    fn next(&mut self) -> Option<TimerEvent> {
        let ev = self.peek()?;
        self.k += 1;
        Some(ev)
    }
}

/// Timer events up to and including `trace_end_s`.
pub fn schedule_timers(config: &SchemeConfig, trace_end_s: f64) -> Vec<TimerEvent> {
    TimerSchedule::new(config).take_while(|e| e.time_s <= trace_end_s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimerOutcome {
    Refresh(RefreshReport),
    Flush(FlushReport),
}

/// Per-run scheme state.
#[derive(Debug, Clone)]
pub enum SchemeState {
    NoPdflush,
    Baseline,
    Conv,
    Copa(Copa),
}

impl SchemeState {
    pub fn new(config: &SchemeConfig) -> Self {
        match config.kind {
            SchemeKind::NoPdflush => SchemeState::NoPdflush,
            SchemeKind::Baseline => SchemeState::Baseline,
            SchemeKind::ConvScheme => SchemeState::Conv,
            SchemeKind::Copa => SchemeState::Copa(Copa::new(config.requeue)),
        }
    }

    pub fn copa(&self) -> Option<&Copa> {
        match self {
            SchemeState::Copa(c) => Some(c),
            _ => None,
        }
    }

    /// Feeds buffer side effects into the scheme's bookkeeping.
    pub fn observe(&mut self, outcome: &AccessOutcome) {
        if let SchemeState::Copa(c) = self {
            for p in &outcome.evicted_flushes {
                c.on_dirty_eviction(*p);
            }
            if let Some(p) = outcome.journal_write {
                c.on_write(p);
            }
        }
    }

    pub fn on_timer(
        &mut self,
        event: TimerEvent,
        config: &SchemeConfig,
        buffer: &mut Buffer,
        ledger: &mut IdleLedger,
        page_size: u64,
    ) -> Result<TimerOutcome, InvariantViolation> {
        let t = event.time_s;
        match (self, event.kind) {
            (SchemeState::Copa(c), TimerKind::CopaStep) => {
                c.end_timestep(buffer, ledger, t).map(TimerOutcome::Refresh)
            }
            (SchemeState::Conv, TimerKind::ConvRefresh) => {
                conv_refresh_tick(buffer, ledger, t).map(TimerOutcome::Refresh)
            }
            (state @ SchemeState::Baseline, TimerKind::PdflushTick) => {
                let r = pdflush_tick(buffer, config, ledger, t, page_size)?;
                state.observe(&r.traffic);
                Ok(TimerOutcome::Flush(r))
            }
            // schedules are built from the same config, so kinds always match
            _ => Ok(TimerOutcome::Refresh(RefreshReport { time_s: t, ..RefreshReport::default() })),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SchemeKind::NoPdflush => "no_pdflush",
            SchemeKind::Baseline => "baseline",
            SchemeKind::ConvScheme => "conv_scheme",
            SchemeKind::Copa => "copa",
        };
        f.write_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::{BufferConfig, BufferMode};
    use crate::trace::PageAccess;
    use alloc::vec;

    const A: PageId = PageId::new(0, 10);
    const B: PageId = PageId::new(0, 11);
    const C: PageId = PageId::new(0, 12);

    #[test]
    fn counter_bits() {
        let mut c = StateCounter::default();
        let mut seen = vec![];
        for _ in 0..5 {
            seen.push((c.value(), c.qi(), c.dc(), c.sleepy(), c.insertion()));
            c.increment();
        }
        assert_eq!(
            seen,
            vec![
                (0, false, false, QueueId::Q1, QueueId::Q1),
                (1, false, true, QueueId::Q1, QueueId::Q2),
                (2, true, false, QueueId::Q2, QueueId::Q2),
                (3, true, true, QueueId::Q2, QueueId::Q1),
                (0, false, false, QueueId::Q1, QueueId::Q1),
            ]
        );
    }

    #[test]
    fn write_routing_follows_dc() {
        let mut copa = Copa::new(RequeuePolicy::NextPeriod);
        copa.on_write(A);
        copa.on_write(B);
        assert_eq!(copa.queues.live(QueueId::Q1), vec![A, B]);
        assert!(copa.queues.live(QueueId::Q2).is_empty());

        copa.counter.increment();
        copa.on_write(C);
        copa.on_write(B);
        assert_eq!(copa.queues.live(QueueId::Q1), vec![A]);
        assert_eq!(copa.queues.live(QueueId::Q2), vec![C, B]);
        assert_eq!(copa.queues.slot_count(QueueId::Q1), 2, "B's old slot is dead, not removed");
    }

    #[test]
    fn eviction_without_entry_is_noop() {
        let mut copa = Copa::new(RequeuePolicy::NextPeriod);
        copa.on_dirty_eviction(A);
        assert_eq!(copa.queues.live_count(), 0);
        copa.on_write(A);
        copa.on_dirty_eviction(A);
        assert_eq!(copa.queues.live_count(), 0);
    }

    #[test]
    fn refresh_gated_on_dc() {
        let mut buffer = Buffer::new(BufferConfig { dram_pages: 8, pja_pages: 8, mode: BufferMode::Nvb });
        let mut ledger = IdleLedger::new();
        let mut copa = Copa::new(RequeuePolicy::NextPeriod);
        let o = buffer.access(&PageAccess::write(1.0, A), &mut ledger).unwrap();
        copa.on_write(o.journal_write.unwrap());
        let r = copa.end_timestep(&mut buffer, &mut ledger, 30.0).unwrap();
        assert!(r.refreshed.is_empty());
        assert_eq!(copa.counter().value(), 1);
        let r = copa.end_timestep(&mut buffer, &mut ledger, 60.0).unwrap();
        assert_eq!(r.refreshed, vec![A]);
        assert_eq!(copa.counter().value(), 2);
        // requeued into the queue that is now sleepy
        assert_eq!(copa.queues.location(&A), Some(copa.counter().sleepy()));
        copa.check_consistency(&buffer).unwrap();
    }

    #[test]
    fn drain_work_is_proportional_to_sleepy_queue() {
        let mut buffer = Buffer::new(BufferConfig { dram_pages: 64, pja_pages: 64, mode: BufferMode::Nvb });
        let mut ledger = IdleLedger::new();
        let mut copa = Copa::new(RequeuePolicy::NextPeriod);
        copa.counter = StateCounter::new(1);
        // 40 pages in the awake queue, 3 in the sleepy one
        for i in 0..43u64 {
            let p = PageId::new(0, i);
            let o = buffer.access(&PageAccess::write(1.0, p), &mut ledger).unwrap();
            if i < 3 {
                copa.queues.push(QueueId::Q1, o.journal_write.unwrap());
            } else {
                copa.on_write(p);
            }
        }
        let r = copa.end_timestep(&mut buffer, &mut ledger, 30.0).unwrap();
        assert_eq!(r.drained, 3);
        assert_eq!(r.refreshed.len(), 3);
        assert_eq!(copa.queues.slot_count(QueueId::Q2), 43);
    }

    #[test]
    fn timers() {
        let t: Vec<f64> = schedule_timers(&SchemeConfig::copa(30.0), 100.0).iter().map(|e| e.time_s).collect();
        assert_eq!(t, vec![30.0, 60.0, 90.0]);
        assert!(schedule_timers(&SchemeConfig::no_pdflush(), 1e6).is_empty());
        let b = schedule_timers(&SchemeConfig::baseline(), 20.0);
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|e| e.kind == TimerKind::PdflushTick));
        assert_eq!(schedule_timers(&SchemeConfig::conv(60.0), 120.0).len(), 2);
    }

    #[test]
    fn pdflush_threshold_arithmetic() {
        let cfg = SchemeConfig::baseline();
        let mut buffer = Buffer::new(BufferConfig { dram_pages: 8, pja_pages: 8, mode: BufferMode::Nvb });
        let mut ledger = IdleLedger::new();
        buffer.access(&PageAccess::write(0.0, A), &mut ledger).unwrap();
        let mut flushed_at = None;
        for k in 1..=10 {
            let t = 5.0 * k as f64;
            let r = pdflush_tick(&mut buffer, &cfg, &mut ledger, t, 4096).unwrap();
            if !r.flushed.is_empty() {
                assert_eq!(r.bytes, 4096);
                flushed_at.get_or_insert(t);
            }
        }
        assert_eq!(flushed_at, Some(30.0));
    }

    #[test]
    fn pdflush_spares_rewritten_pages() {
        let cfg = SchemeConfig::baseline();
        let mut buffer = Buffer::new(BufferConfig { dram_pages: 8, pja_pages: 8, mode: BufferMode::Nvb });
        let mut ledger = IdleLedger::new();
        let mut next_write = 0.0;
        for k in 1..=40 {
            let t = 5.0 * k as f64;
            while next_write < t {
                buffer.access(&PageAccess::write(next_write, A), &mut ledger).unwrap();
                next_write += 10.0;
            }
            let r = pdflush_tick(&mut buffer, &cfg, &mut ledger, t, 4096).unwrap();
            assert!(r.flushed.is_empty());
        }
    }

    #[test]
    fn conv_refreshes_everything() {
        let mut buffer = Buffer::new(BufferConfig { dram_pages: 16, pja_pages: 16, mode: BufferMode::Nvb });
        let mut ledger = IdleLedger::new();
        for i in 0..10 {
            buffer.access(&PageAccess::write(i as f64, PageId::new(0, i)), &mut ledger).unwrap();
        }
        buffer.access(&PageAccess::write(59.0, PageId::new(0, 3)), &mut ledger).unwrap();
        let r = conv_refresh_tick(&mut buffer, &mut ledger, 60.0).unwrap();
        assert_eq!(r.refreshed.len(), 10);
        assert_eq!(r.traffic.pja_writes, 10);
        assert_eq!(r.traffic.dram_reads, 10);
    }

    #[test]
    fn labels_and_validation() {
        assert_eq!(SchemeConfig::copa(300.0).label(), "CoPA-T300");
        assert_eq!(SchemeConfig::conv(60.0).label(), "Conv-P60");
        assert_eq!(SchemeConfig::baseline().label(), "Baseline");
        assert!(SchemeConfig::copa(0.0).validate().is_err());
        assert!(SchemeConfig::copa(30.0).validate().is_ok());
    }
}
