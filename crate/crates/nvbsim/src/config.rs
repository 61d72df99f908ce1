//! TOML run and grid configuration.

use std::path::{Path, PathBuf};

use anyhow::Context;
use nvbsim_core::buffer::BufferConfig;
use nvbsim_core::reliability::FailureParams;
use nvbsim_core::schemes::{RequeuePolicy, SchemeConfig, SchemeKind};
use nvbsim_core::trace::{generate_synthetic, TraceSpec};
use nvbsim_core::{LatencyModel, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::config_error;
use crate::loader::{load_msrc, LoadOptions, LoadedTrace};

/// Overrides every configured output directory except an explicit flag.
pub const OUT_DIR_ENV: &str = "NVBSIM_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// MSRC trace file (plain or gzip).
    pub trace: Option<PathBuf>,
    /// Synthetic workload, used when no trace file is given.
    pub synthetic: Option<TraceSpec>,
    pub trace_id: Option<String>,
    pub seed: Option<u64>,
    pub max_accesses: Option<u64>,
    pub strict: bool,
    pub check_invariants: bool,
    pub out_dir: Option<PathBuf>,

    pub page_size: u64,
    pub buffer: BufferConfig,
    pub scheme: SchemeConfig,
    pub failure: FailureParams,
    pub latency: LatencyModel,
    pub serialize_refresh: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            trace: None,
            synthetic: None,
            trace_id: None,
            seed: None,
            max_accesses: None,
            strict: false,
            check_invariants: false,
            out_dir: None,
            page_size: sim.page_size,
            buffer: sim.buffer,
            scheme: sim.scheme,
            failure: sim.failure,
            latency: sim.latency,
            serialize_refresh: sim.serialize_refresh,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    File(PathBuf),
    Synthetic(TraceSpec),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; a relative trace path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let (Some(t), Some(dir)) = (cfg.trace.as_mut(), path.parent()) {
            if t.is_relative() {
                *t = dir.join(&*t);
            }
        }
        Ok(cfg)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            page_size: self.page_size,
            buffer: self.buffer.clone(),
            scheme: self.scheme.clone(),
            failure: self.failure.clone(),
            latency: self.latency.clone(),
            serialize_refresh: self.serialize_refresh,
        }
    }

    pub fn workload(&self) -> anyhow::Result<Workload> {
        match (&self.trace, &self.synthetic) {
            (Some(p), None) => Ok(Workload::File(p.clone())),
            (None, Some(spec)) => {
                let mut spec = spec.clone();
                if let Some(seed) = self.seed {
                    spec.seed = seed;
                }
                Ok(Workload::Synthetic(spec))
            }
            (Some(_), Some(_)) => Err(config_error("give either `trace` or `synthetic`, not both")),
            (None, None) => Err(config_error("no workload: set `trace` or a `[synthetic]` table")),
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions { page_size: self.page_size, strict: self.strict, max_accesses: self.max_accesses }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.sim_config().validate()?;
        self.workload()?;
        Ok(())
    }
}

/// Materializes a workload as a page access stream.
pub fn load_workload(w: &Workload, opts: &LoadOptions, id: Option<&str>) -> anyhow::Result<LoadedTrace> {
    let mut t = match w {
        Workload::File(p) => load_msrc(p, opts)?,
        Workload::Synthetic(spec) => {
            let gen = generate_synthetic(spec).map_err(|e| config_error(e.to_string()))?;
            let n = opts.max_accesses.unwrap_or(u64::MAX);
            let accesses: Vec<_> = gen.take(n.min(spec.access_count) as usize).collect();
            LoadedTrace {
                id: format!("synthetic-s{}", spec.seed),
                requests: accesses.len(),
                accesses,
                skipped_lines: 0,
                first_error: None,
            }
        }
    };
    if let Some(id) = id {
        t.id = id.to_string();
    }
    Ok(t)
}

/// Parses a scheme token such as `no-pdflush`, `baseline`, `conv:60`,
/// `copa:300` or `copa-retain:30`. Unset knobs come from `defaults`.
pub fn parse_scheme(token: &str, defaults: &SchemeConfig) -> anyhow::Result<SchemeConfig> {
    let lower = token.trim().to_ascii_lowercase();
    let (name, arg) = match lower.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (lower.as_str(), None),
    };
    let num = || -> anyhow::Result<Option<f64>> {
        arg.map(|a| a.trim_start_matches(['t', 'p']).parse::<f64>())
            .transpose()
            .map_err(|_| config_error(format!("bad number in scheme `{token}`")))
    };
    let mut s = defaults.clone();
    match name {
        "no-pdflush" | "no_pdflush" | "nopdflush" => s.kind = SchemeKind::NoPdflush,
        "baseline" | "pdflush" => s.kind = SchemeKind::Baseline,
        "conv" | "conv_scheme" | "conv-scheme" => {
            s.kind = SchemeKind::ConvScheme;
            if let Some(p) = num()? {
                s.conv_period_s = p;
            }
        }
        "copa" | "copa-retain" => {
            s.kind = SchemeKind::Copa;
            if name == "copa-retain" {
                s.requeue = RequeuePolicy::Retain;
            }
            if let Some(t) = num()? {
                s.timestep_s = t;
            }
        }
        _ => return Err(config_error(format!("unknown scheme `{token}`"))),
    }
    if arg.is_some() && matches!(s.kind, SchemeKind::NoPdflush | SchemeKind::Baseline) {
        return Err(config_error(format!("scheme `{name}` takes no parameter")));
    }
    s.validate().map_err(config_error)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadEntry {
    pub name: Option<String>,
    pub trace: Option<PathBuf>,
    pub synthetic: Option<TraceSpec>,
}

/// Scheme x workload cross product over shared buffer/failure settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub schemes: Vec<String>,
    pub workloads: Vec<WorkloadEntry>,
    #[serde(default)]
    pub base: RunConfig,
    pub out_dir: Option<PathBuf>,
}

impl GridConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: GridConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(dir) = path.parent() {
            for w in &mut cfg.workloads {
                if let Some(t) = w.trace.as_mut() {
                    if t.is_relative() {
                        *t = dir.join(&*t);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn scheme_configs(&self) -> anyhow::Result<Vec<SchemeConfig>> {
        if self.schemes.is_empty() {
            return Err(config_error("grid needs at least one scheme"));
        }
        self.schemes.iter().map(|s| parse_scheme(s, &self.base.scheme)).collect()
    }

    /// Workloads with their display names.
    pub fn workloads(&self) -> anyhow::Result<Vec<(Option<String>, Workload)>> {
        if self.workloads.is_empty() {
            return Err(config_error("grid needs at least one workload"));
        }
        self.workloads
            .iter()
            .map(|w| {
                let run = RunConfig {
                    trace: w.trace.clone(),
                    synthetic: w.synthetic.clone(),
                    seed: self.base.seed,
                    ..RunConfig::default()
                };
                Ok((w.name.clone(), run.workload()?))
            })
            .collect()
    }
}
