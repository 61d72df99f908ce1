//! Synthetic traces written in MSRC format, so they replay through the
//! same loader as real traces.

use std::io::{self, Write};

use nvbsim_core::trace::{format_msrc_line, generate_synthetic, TraceSpec};
use nvbsim_core::{PageAccess, Request};

use crate::error::config_error;

pub const HOSTNAME: &str = "synth";

/// One page-sized request per access.
pub fn access_to_request(a: &PageAccess, page_size: u64) -> Request {
    Request {
        timestamp_s: a.timestamp_s,
        disk: a.page.disk,
        kind: a.kind,
        offset_bytes: a.page.index * page_size,
        size_bytes: page_size,
        response_time_us: 0,
    }
}

pub fn write_msrc<W: Write, I: IntoIterator<Item = PageAccess>>(w: W, accesses: I, page_size: u64) -> io::Result<u64> {
    let mut w = io::BufWriter::new(w);
    let mut n = 0;
    for a in accesses {
        writeln!(w, "{}", format_msrc_line(&access_to_request(&a, page_size), HOSTNAME))?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

pub fn synthesize<W: Write>(w: W, spec: &TraceSpec, page_size: u64) -> anyhow::Result<u64> {
    let gen = generate_synthetic(spec).map_err(|e| config_error(e.to_string()))?;
    Ok(write_msrc(w, gen, page_size)?)
}
