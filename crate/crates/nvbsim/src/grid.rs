//! Single runs and scheme x workload grids.
//!
//! Grid cells own all their state, so they run in parallel; results are
//! collected in cell order and written by one thread.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use nvbsim_core::metrics::compare;
use nvbsim_core::{IdleLedger, PageAccess, RunReport, SchemeConfig, SimConfig, Simulation};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_workload, GridConfig, RunConfig};
use crate::ledger_csv::{write_counts, write_intervals};
use crate::output::{plot_tables, report_json, write_comparison};

pub fn replay(
    cfg: &SimConfig,
    accesses: &[PageAccess],
    trace_id: &str,
    check_invariants: bool,
) -> anyhow::Result<(RunReport, IdleLedger)> {
    let mut sim = Simulation::new(cfg.clone())?.with_invariant_checks(check_invariants);
    for a in accesses {
        sim.process(a)?;
    }
    Ok(sim.finish(trace_id)?)
}

/// Loads the configured workload and replays it.
pub fn run_config(cfg: &RunConfig) -> anyhow::Result<(RunReport, IdleLedger)> {
    let sim = cfg.sim_config();
    sim.validate()?;
    let trace = load_workload(&cfg.workload()?, &cfg.load_options(), cfg.trace_id.as_deref())?;
    if trace.skipped_lines > 0 {
        eprintln!("warning: skipped {} malformed line(s) in {}", trace.skipped_lines, trace.id);
    }
    replay(&sim, &trace.accesses, &trace.id, cfg.check_invariants)
}

/// Writes `report.json` and the two ledger CSVs into `dir`.
pub fn write_run_outputs(dir: &Path, report: &RunReport, ledger: &IdleLedger) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("report.json"), report_json(report)?)?;
    write_intervals(fs::File::create(dir.join("ledger_intervals.csv"))?, ledger)?;
    write_counts(fs::File::create(dir.join("ledger_writes.csv"))?, ledger)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub workload: usize,
    pub scheme: SchemeConfig,
}

pub struct Workloads {
    pub ids: Vec<String>,
    pub accesses: Vec<Vec<PageAccess>>,
}

/// Runs `cells` in parallel; the result vector follows `cells` order.
pub fn run_cells(
    base: &SimConfig,
    workloads: &Workloads,
    cells: &[Cell],
    check_invariants: bool,
) -> Vec<anyhow::Result<RunReport>> {
    cells
        .par_iter()
        .map(|c| {
            let cfg = SimConfig { scheme: c.scheme.clone(), ..base.clone() };
            let id = &workloads.ids[c.workload];
            replay(&cfg, &workloads.accesses[c.workload], id, check_invariants)
                .map(|(r, _)| r)
                .with_context(|| format!("cell {} / {}", id, c.scheme.label()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub trace_id: String,
    pub scheme: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub complete: bool,
    pub cells: Vec<ManifestEntry>,
}

pub fn report_file_name(trace_id: &str, scheme: &str) -> String {
    let clean = |s: &str| s.replace(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '.'), "_");
    format!("{}__{}.json", clean(trace_id), clean(scheme))
}

pub struct GridOutcome {
    pub reports: Vec<RunReport>,
    pub manifest: Manifest,
}

/// Runs a grid and writes reports, per-trace comparison tables, plot
/// data and `manifest.json` into `out`. On any failed cell the manifest
/// records the partial results and the first error is returned.
pub fn run_grid(cfg: &GridConfig, out: &Path) -> anyhow::Result<GridOutcome> {
    let schemes = cfg.scheme_configs()?;
    let base = cfg.base.sim_config();
    base.validate()?;
    for s in &schemes {
        SimConfig { scheme: s.clone(), ..base.clone() }.validate()?;
    }
    let opts = cfg.base.load_options();
    let mut workloads = Workloads { ids: Vec::new(), accesses: Vec::new() };
    for (name, w) in cfg.workloads()? {
        let t = load_workload(&w, &opts, name.as_deref())?;
        workloads.ids.push(t.id);
        workloads.accesses.push(t.accesses);
    }
    let cells: Vec<Cell> = (0..workloads.ids.len())
        .flat_map(|w| schemes.iter().map(move |s| Cell { workload: w, scheme: s.clone() }))
        .collect();

    let results = run_cells(&base, &workloads, &cells, cfg.base.check_invariants);

    let reports_dir = out.join("reports");
    fs::create_dir_all(&reports_dir).with_context(|| format!("creating {}", reports_dir.display()))?;
    let mut manifest = Manifest { complete: true, cells: Vec::new() };
    let mut reports = Vec::new();
    let mut first_err = None;
    for (cell, res) in cells.iter().zip(results) {
        let trace_id = workloads.ids[cell.workload].clone();
        let scheme = cell.scheme.label();
        match res {
            Ok(r) => {
                let name = report_file_name(&trace_id, &scheme);
                fs::write(reports_dir.join(&name), report_json(&r)?)?;
                manifest.cells.push(ManifestEntry {
                    trace_id,
                    scheme,
                    status: "ok",
                    report: Some(format!("reports/{name}")),
                    error: None,
                });
                reports.push(r);
            }
            Err(e) => {
                manifest.complete = false;
                manifest.cells.push(ManifestEntry {
                    trace_id,
                    scheme,
                    status: "failed",
                    report: None,
                    error: Some(format!("{e:#}")),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    if let Some(e) = first_err {
        return Err(e.context("grid aborted; partial results listed in manifest.json"));
    }

    for id in &workloads.ids {
        let group: Vec<RunReport> = reports.iter().filter(|r| &r.trace_id == id).cloned().collect();
        let base_idx = group.iter().position(|r| r.scheme == "No-pdflush").unwrap_or(0);
        let table = compare(&group, base_idx).map_err(|e| anyhow::anyhow!("{e}"))?;
        let path: PathBuf = out.join(format!("compare_{}.csv", id.replace(['/', '\\'], "_")));
        write_comparison(fs::File::create(&path)?, &table)?;
    }
    for (name, text) in plot_tables(&reports)? {
        fs::write(out.join(name), text)?;
    }
    Ok(GridOutcome { reports, manifest })
}
