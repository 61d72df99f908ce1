//! Simulation core for NVM-backed I/O buffers.
//!
//! A DRAM page buffer is paired with a small STT-MRAM persistent journal
//! area (PJA) that mirrors every dirty DRAM page. This crate models the
//! buffer state machine, the journal management schemes (no periodic flush,
//! pdflush-style periodic flush, fixed-period refresh and cold page
//! awakening), the retention/write failure model, and the replay engine
//! that ties them together.
//!
//! Everything here is `no_std` with `alloc`; file formats, configuration
//! and the command line live in the `nvbsim` crate.
#![no_std]

extern crate alloc;

pub mod buffer;
pub mod engine;
pub mod ledger;
pub mod lru;
pub mod metrics;
pub mod reliability;
pub mod schemes;
pub mod trace;

pub use buffer::{AccessOutcome, Buffer, BufferConfig, BufferMode, HitKind};
pub use engine::{simulate, SimConfig, SimError, Simulation};
pub use ledger::{IdleLedger, Interval};
pub use metrics::{LatencyModel, RunReport};
pub use reliability::{FailureParams, FailureSummary};
pub use schemes::{SchemeConfig, SchemeKind};
pub use trace::{AccessKind, PageAccess, PageId, Request};
