use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nvbsim::config::{parse_scheme, GridConfig, RunConfig, OUT_DIR_ENV};
use nvbsim::error::{config_error, exit_code};
use nvbsim::grid::{run_config, run_grid, write_run_outputs};
use nvbsim::ledger_csv::read_ledger;
use nvbsim::output::report_json;
use nvbsim::synth::synthesize;
use nvbsim_core::buffer::BufferMode;
use nvbsim_core::reliability::{aggregate_pja_failure, page_failures, FailureParams};
use nvbsim_core::trace::{AccessPattern, InterArrival, TraceSpec};
use serde::Serialize;

/// Trace-driven simulator for DRAM buffers backed by an STT-MRAM journal.
#[derive(Parser)]
#[command(name = "nvbsim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay one workload under one scheme.
    Run(RunArgs),
    /// Replay every workload under every scheme of a grid file.
    Grid(GridArgs),
    /// Failure probabilities of an exported idle ledger.
    Calc(CalcArgs),
    /// Write a synthetic workload as an MSRC trace.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// MSRC trace (overrides the config's workload).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Scheme token: no-pdflush, baseline, conv:<period>, copa:<T>, copa-retain:<T>.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    dram_pages: Option<usize>,
    #[arg(long)]
    pja_pages: Option<usize>,
    #[arg(long)]
    page_size: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_accesses: Option<u64>,
    /// Abort on malformed trace lines instead of skipping them.
    #[arg(long)]
    strict: bool,
    /// Charge refresh traffic to request response time.
    #[arg(long)]
    serialize_refresh: bool,
    /// Check buffer invariants after every event.
    #[arg(long)]
    check_invariants: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Nvb,
    Hyb,
}

#[derive(Args)]
struct GridArgs {
    /// TOML grid configuration.
    config: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalcArgs {
    /// Intervals CSV: page_id,interval_start_s,interval_end_s.
    intervals: PathBuf,
    /// Writes CSV: page_id,write_count[,refresh_count].
    #[arg(long)]
    writes: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    w: Option<u32>,
    #[arg(long)]
    p_wf_cell: Option<f64>,
    /// Include per-page probabilities.
    #[arg(long)]
    per_page: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML trace spec; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    count: Option<u64>,
    #[arg(long)]
    pages: Option<u64>,
    #[arg(long, value_enum)]
    pattern: Option<Pattern>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    write_fraction: Option<f64>,
    /// Fixed inter-arrival time in seconds.
    #[arg(long, conflicts_with = "mean_gap")]
    gap: Option<f64>,
    /// Mean of exponential inter-arrival times in seconds.
    #[arg(long)]
    mean_gap: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    disk: Option<u32>,
    #[arg(long, default_value_t = 4096)]
    page_size: u64,
    /// Output file; `-` for stdout.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Pattern {
    Sequential,
    Uniform,
    Zipf,
}

fn out_dir(flag: Option<PathBuf>, configured: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or(configured)
        .unwrap_or_else(|| PathBuf::from("nvbsim-out"))
}

fn cmd_run(a: RunArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = a.trace {
        cfg.trace = Some(t);
        cfg.synthetic = None;
    }
    if let Some(s) = &a.scheme {
        cfg.scheme = parse_scheme(s, &cfg.scheme)?;
    }
    if let Some(m) = a.mode {
        cfg.buffer.mode = match m {
            Mode::Nvb => BufferMode::Nvb,
            Mode::Hyb => BufferMode::Hyb,
        };
    }
    cfg.buffer.dram_pages = a.dram_pages.unwrap_or(cfg.buffer.dram_pages);
    cfg.buffer.pja_pages = a.pja_pages.unwrap_or(cfg.buffer.pja_pages);
    cfg.page_size = a.page_size.unwrap_or(cfg.page_size);
    cfg.failure.delta = a.delta.unwrap_or(cfg.failure.delta);
    cfg.seed = a.seed.or(cfg.seed);
    cfg.max_accesses = a.max_accesses.or(cfg.max_accesses);
    cfg.strict |= a.strict;
    cfg.serialize_refresh |= a.serialize_refresh;
    cfg.check_invariants |= a.check_invariants;
    cfg.validate()?;

    let (report, ledger) = run_config(&cfg)?;
    let dir = out_dir(a.out, cfg.out_dir.clone());
    write_run_outputs(&dir, &report, &ledger)?;
    print!("{}", report_json(&report)?);
    Ok(())
}

fn cmd_grid(a: GridArgs) -> anyhow::Result<()> {
    let cfg = GridConfig::load(&a.config)?;
    let dir = out_dir(a.out, cfg.out_dir.clone());
    let outcome = run_grid(&cfg, &dir)?;
    eprintln!("{} cells written to {}", outcome.reports.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct CalcOutput {
    summary: nvbsim_core::FailureSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pages: Option<Vec<nvbsim_core::reliability::PageFailure>>,
}

fn cmd_calc(a: CalcArgs) -> anyhow::Result<()> {
    let mut params = FailureParams::default();
    params.delta = a.delta.unwrap_or(params.delta);
    params.k = a.k.unwrap_or(params.k);
    params.w = a.w.unwrap_or(params.w);
    params.p_wf_cell = a.p_wf_cell.unwrap_or(params.p_wf_cell);
    params.validate().map_err(|e| config_error(e.to_string()))?;

    let open = |p: &Path| fs::File::open(p).with_context(|| format!("opening {}", p.display()));
    let writes = a.writes.as_deref().map(open).transpose()?;
    let ledger = read_ledger(open(&a.intervals)?, writes)?;
    let summary = aggregate_pja_failure(&ledger, &params).map_err(|e| config_error(e.to_string()))?;
    let pages = if a.per_page {
        Some(page_failures(&ledger, &params).map_err(|e| config_error(e.to_string()))?)
    } else {
        None
    };
    println!("{}", serde_json::to_string_pretty(&CalcOutput { summary, pages })?);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<TraceSpec>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TraceSpec {
            access_count: 0,
            page_universe: 1,
            pattern: AccessPattern::Uniform,
            write_fraction: 0.5,
            inter_arrival: InterArrival::Fixed { seconds: 1.0 },
            seed: 0,
            disk: 0,
        },
    };
    if a.spec.is_none() && a.count.is_none() {
        return Err(config_error("synth needs --spec or --count"));
    }
    spec.access_count = a.count.unwrap_or(spec.access_count);
    spec.page_universe = a.pages.unwrap_or(spec.page_universe);
    spec.write_fraction = a.write_fraction.unwrap_or(spec.write_fraction);
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.disk = a.disk.unwrap_or(spec.disk);
    if let Some(p) = a.pattern {
        spec.pattern = match p {
            Pattern::Sequential => AccessPattern::Sequential,
            Pattern::Uniform => AccessPattern::Uniform,
            Pattern::Zipf => AccessPattern::Zipf { theta: a.theta.unwrap_or(0.9) },
        };
    } else if let (Some(t), AccessPattern::Zipf { .. }) = (a.theta, spec.pattern) {
        spec.pattern = AccessPattern::Zipf { theta: t };
    }
    if let Some(s) = a.gap {
        spec.inter_arrival = InterArrival::Fixed { seconds: s };
    }
    if let Some(m) = a.mean_gap {
        spec.inter_arrival = InterArrival::Exponential { mean_s: m };
    }
    if !a.page_size.is_power_of_two() {
        return Err(config_error("page size must be a power of two"));
    }
    if a.out.as_os_str() == "-" {
        synthesize(io::stdout().lock(), &spec, a.page_size)?;
    } else {
        let f = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
        let n = synthesize(f, &spec, a.page_size)?;
        eprintln!("wrote {n} accesses to {}", a.out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Grid(a) => cmd_grid(a),
        Cmd::Calc(a) => cmd_calc(a),
        Cmd::Synth(a) => cmd_synth(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
