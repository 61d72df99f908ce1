//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail.

use std::collections::BTreeSet;
use std::time::Instant;

use nvbsim::config::RunConfig;
use nvbsim::grid::{run_cells, run_config, Cell, Workloads};
use nvbsim::output::report_json;
use nvbsim_core::buffer::{BufferConfig, BufferMode, HitKind};
use nvbsim_core::reliability::{p_dl_wf_page, p_rf_cell, word_survival, FailureParams};
use nvbsim_core::schemes::{RequeuePolicy, SchemeConfig, TimerOutcome};
use nvbsim_core::trace::{generate_synthetic, AccessPattern, InterArrival, TraceSpec};
use nvbsim_core::{simulate, PageAccess, PageId, RunReport, SimConfig, Simulation};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

fn cfg(dram: usize, pja: usize, scheme: SchemeConfig) -> SimConfig {
    SimConfig {
        buffer: BufferConfig { dram_pages: dram, pja_pages: pja, mode: BufferMode::Nvb },
        scheme,
        ..SimConfig::default()
    }
}

fn run(c: &SimConfig, trace: &[PageAccess]) -> RunReport {
    simulate(c, trace.iter().copied(), "acc").expect("simulation").0
}

fn synthetic(seed: u64, count: u64, universe: u64, write_fraction: f64, mean_gap: f64) -> Vec<PageAccess> {
    let spec = TraceSpec {
        access_count: count,
        page_universe: universe,
        pattern: AccessPattern::Uniform,
        write_fraction,
        inter_arrival: InterArrival::Exponential { mean_s: mean_gap },
        seed,
        disk: 0,
    };
    generate_synthetic(&spec).unwrap().collect()
}

const P: PageId = PageId::new(0, 1);
const OTHER: PageId = PageId::new(0, 999);

// A page written once just after an odd time-step boundary: it lands in the
// awake queue and waits three steps minus epsilon for its first refresh.
fn ac1_idle_bound() -> Check {
    let eps = 1e-3;
    let mut lines = Vec::new();
    for t in [30.0, 90.0, 150.0, 300.0] {
        let trace = [PageAccess::write(t + eps, P), PageAccess::read(10.5 * t, OTHER)];
        let r = run(&cfg(64, 64, SchemeConfig::copa(t)), &trace);
        let max = r.max_idle_s;
        ensure(max > t && max < 3.0 * t, format!("T={t}: max idle {max} outside (T, 3T)"))?;
        ensure(3.0 * t - max <= eps * 1.0001, format!("T={t}: worst case {max} not near 3T"))?;

        // every other phase stays inside the same bounds
        for k in 0..97 {
            let w = t * (0.013 + 0.0417 * k as f64);
            let trace = [PageAccess::write(w, P), PageAccess::read(w + 12.0 * t, OTHER)];
            let (_, ledger) = simulate(&cfg(64, 64, SchemeConfig::copa(t)), trace, "phase").unwrap();
            let h = ledger.get(&P).unwrap();
            let first = h.intervals[0].len_s();
            ensure(first > t && first < 3.0 * t, format!("T={t}: phase {w} first refresh after {first}"))?;
            ensure(h.intervals.iter().all(|i| i.len_s() < 3.0 * t), format!("T={t}: phase {w} exceeds 3T"))?;
        }
        lines.push(format!("T={t}: {max:.3}s"));
    }
    Ok(format!("max idle {} (T=300 -> {:.2} min)", lines.join(", "), (900.0 - eps) / 60.0))
}

fn refresh_sets(policy: RequeuePolicy) -> Result<(Vec<BTreeSet<char>>, u64), String> {
    let name = |p: PageId| (b'A' + p.index as u8) as char;
    let pg = |c: char| PageId::new(0, (c as u8 - b'A') as u64);
    let mut scheme = SchemeConfig::copa(30.0);
    scheme.requeue = policy;
    let mut sim = Simulation::new(cfg(64, 64, scheme)).unwrap().with_invariant_checks(true);
    let script = [
        (5.0, 'A'),
        (10.0, 'B'),
        (35.0, 'C'),
        (40.0, 'B'),
        (65.0, 'D'),
        (95.0, 'E'),
    ];
    let mut sets = Vec::new();
    let mut steps = script.iter().map(|(t, c)| PageAccess::write(*t, pg(*c))).collect::<Vec<_>>();
    steps.push(PageAccess::read(121.0, PageId::new(1, 0)));
    for a in &steps {
        let out = sim.process(a).map_err(|e| e.to_string())?;
        for t in out.timers {
            if let TimerOutcome::Refresh(r) = t {
                sets.push(r.refreshed.iter().map(|p| name(*p)).collect());
            }
        }
    }
    let e_refreshes = sim.ledger().get(&pg('E')).map_or(0, |h| h.refreshes);
    Ok((sets, e_refreshes))
}

fn ac2_queue_replay() -> Check {
    let (sets, e) = refresh_sets(RequeuePolicy::Retain)?;
    ensure(sets.len() == 4, format!("expected 4 timer firings, got {}", sets.len()))?;
    let want = |s: &str| s.chars().collect::<BTreeSet<char>>();
    ensure(sets[0].is_empty() && sets[2].is_empty(), "refresh at a DC=0 step")?;
    ensure(sets[1] == want("A"), format!("step 2 refreshed {:?}", sets[1]))?;
    ensure(sets[3] == want("BCD"), format!("step 4 refreshed {:?}", sets[3]))?;
    ensure(e == 0, "E refreshed by step 4")?;
    let (dflt, e2) = refresh_sets(RequeuePolicy::NextPeriod)?;
    Ok(format!(
        "retain: step2 {:?}, step4 {:?}, E unrefreshed; default requeue: step4 {:?}, E refreshes {e2}",
        sets[1], sets[3], dflt[3]
    ))
}

fn ac3_eviction_trace() -> Check {
    let [a, b, c, d, e, f] = [0u64, 1, 2, 3, 4, 5].map(|i| PageId::new(0, i));
    let trace = [
        PageAccess::write(1.0, a),
        PageAccess::write(2.0, b),
        PageAccess::read(3.0, a),
        PageAccess::write(4.0, c),
        PageAccess::read(5.0, d),
        PageAccess::read(6.0, a),
        PageAccess::read(7.0, e),
        PageAccess::read(8.0, f),
    ];
    let mut sim = Simulation::new(cfg(4, 2, SchemeConfig::no_pdflush())).unwrap().with_invariant_checks(true);
    let mut flushed = Vec::new();
    for x in &trace {
        flushed.extend(sim.process(x).map_err(|e| e.to_string())?.access.evicted_flushes);
    }
    let dirty = sim.buffer().snapshot_dirty_set();
    let (report, ledger) = sim.finish("micro").unwrap();
    ensure(report.storage_write_pages == 2, format!("storage writes {}", report.storage_write_pages))?;
    ensure(flushed == vec![b, c], format!("flushed {flushed:?}"))?;
    ensure(dirty.len() == 1 && dirty[0].0 == a, format!("dirty set {dirty:?}"))?;
    let ivs = &ledger.get(&a).unwrap().intervals;
    ensure(ivs.len() == 1 && ivs[0].start_s == 1.0 && ivs[0].end_s == 8.0, format!("A intervals {ivs:?}"))?;
    Ok("storage writes [B, C], dirty {A}, A idle [1, 8]".into())
}

// Word survival and loss by enumerating every flip pattern.
fn enumerate_word(p: f64, k: u32) -> (f64, f64) {
    let (mut keep, mut lose) = (0.0, 0.0);
    for mask in 0u32..(1 << k) {
        let f = mask.count_ones() as i32;
        let pr = p.powi(f) * (1.0 - p).powi(k as i32 - f);
        if f <= 1 { keep += pr } else { lose += pr }
    }
    (keep, lose)
}

// Page of `w` words: enumerate all w*k bits, loss when any word has >= 2 flips.
fn enumerate_page(p: f64, k: u32, w: u32) -> f64 {
    let bits = k * w;
    let word = (1u32 << k) - 1;
    let mut lose = 0.0;
    for mask in 0u32..(1 << bits) {
        if (0..w).any(|i| ((mask >> (i * k)) & word).count_ones() >= 2) {
            let f = mask.count_ones() as i32;
            lose += p.powi(f) * (1.0 - p).powi(bits as i32 - f);
        }
    }
    lose
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b { 0.0 } else { ((a - b) / b).abs() }
}

fn ac4_enumeration() -> Check {
    let mut worst: f64 = 0.0;
    for k in [2u32, 3, 4] {
        for w in [1u32, 2, 3] {
            for target in [0.5, 0.1, 1e-3] {
                // retention path: pick t so the cell probability is near the target
                let delta: f64 = 2.0;
                let t = -(1.0f64 - target).ln() * delta.exp();
                let p = p_rf_cell(t, delta).unwrap();
                let params = FailureParams { delta, k, w, p_wf_cell: p, physical: None };
                let (keep, lose) = enumerate_word(p, k);
                worst = worst.max(rel(word_survival(p, k), keep));

                let page = nvbsim_core::reliability::p_dl_rf_page(t, &params).unwrap();
                worst = worst.max(rel(page, enumerate_page(p, k, w)));
                worst = worst.max(rel(1.0 - page, keep.powi(w as i32)));

                // write path with n writes: loss = L * sum (1-L)^i over w*n words
                for n in [1u64, 2, 3] {
                    let m = (w as u64 * n) as i32;
                    let want_loss: f64 = lose * (0..m).map(|i| (1.0 - lose).powi(i)).sum::<f64>();
                    let got = p_dl_wf_page(&params, n).unwrap();
                    worst = worst.max(rel(got, want_loss));
                    worst = worst.max(rel(1.0 - got, keep.powi(m)));
                }
            }
        }
    }
    ensure(worst <= 1e-12, format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e} over 27 (k, W, p) cases"))
}

fn ac5_baseline_ceiling() -> Check {
    let mut max: f64 = 0.0;
    let mut closed = 0u64;
    for seed in 0..120u64 {
        let mean_gap = [0.5, 2.0, 7.0][seed as usize % 3];
        let wf = [0.2, 0.5, 0.9][(seed / 3) as usize % 3];
        let trace = synthetic(seed, 1500, 80, wf, mean_gap);
        let (dram, pja) = [(1024, 1024), (48, 24), (16, 40)][(seed / 9) as usize % 3];
        let (_, ledger) = simulate(&cfg(dram, pja, SchemeConfig::baseline()), trace, "b").unwrap();
        closed += ledger.interval_count();
        max = max.max(ledger.max_interval_s());
    }
    ensure(max <= 35.0, format!("max dirty idle {max} s"))?;
    Ok(format!("120 seeds, {closed} intervals, max {max:.3} s <= 35 s"))
}

fn ac6_traffic_and_scaling() -> Check {
    for seed in 0..30u64 {
        let trace = synthetic(1000 + seed, 3000, 300, 0.5, 1.5);
        let (dram, pja) = [(4096, 4096), (128, 48)][seed as usize % 2];
        let none = run(&cfg(dram, pja, SchemeConfig::no_pdflush()), &trace);
        ensure(none.max_idle_s >= 30.0, format!("seed {seed}: no page idle >= 30 s"))?;
        let base = run(&cfg(dram, pja, SchemeConfig::baseline()), &trace);
        let copa = run(&cfg(dram, pja, SchemeConfig::copa(30.0)), &trace);
        ensure(
            base.storage_write_pages > none.storage_write_pages,
            format!("seed {seed}: baseline {} vs no-pdflush {}", base.storage_write_pages, none.storage_write_pages),
        )?;
        ensure(
            copa.storage_write_pages == none.storage_write_pages,
            format!("seed {seed}: copa {} vs no-pdflush {}", copa.storage_write_pages, none.storage_write_pages),
        )?;
        ensure(copa.hit_ratio == none.hit_ratio, format!("seed {seed}: hit ratios differ"))?;
    }
    // retention loss of one idle page over t1 vs t2
    let (t1, t2) = (1000.0, 100.0);
    let loss = |t: f64| {
        run(&cfg(16, 16, SchemeConfig::no_pdflush()), &[PageAccess::write(0.0, P), PageAccess::read(t, OTHER)])
            .failure
            .retention_loss
    };
    let p = p_rf_cell(t1, 40.0).unwrap();
    ensure(p <= 1e-8, format!("cell probability {p:e} above 1e-8"))?;
    let ratio = loss(t1) / loss(t2);
    let want = (t1 / t2) * (t1 / t2);
    ensure((ratio / want - 1.0).abs() < 0.01, format!("loss ratio {ratio} vs {want}"))?;
    Ok(format!("30 traces: Baseline > No-pdflush = CoPA; loss(1000s)/loss(100s) = {ratio:.6} (t^2 law {want})"))
}

fn ac7_refresh_dominance() -> Check {
    let mut strict_cases = 0;
    let mut best = 0.0f64;
    for seed in 0..40u64 {
        for t in [30.0, 60.0] {
            let big = seed % 2 == 0;
            let trace = synthetic(2000 + seed, 800, 120, 0.4, 2.5);
            let (dram, pja) = if big { (4096, 4096) } else { (64, 24) };
            let copa = run(&cfg(dram, pja, SchemeConfig::copa(t)), &trace);
            let conv = run(&cfg(dram, pja, SchemeConfig::conv(2.0 * t)), &trace);
            ensure(
                copa.refreshes <= conv.refreshes,
                format!("seed {seed} T={t}: copa {} > conv {}", copa.refreshes, conv.refreshes),
            )?;
            // without evictions, a write inside an odd time-step is resident at the next refresh
            let end = trace.last().unwrap().timestamp_s;
            let awake_write = trace.iter().any(|a| {
                let step = (a.timestamp_s / t).floor();
                a.kind.is_write()
                    && step as u64 % 2 == 1
                    && a.timestamp_s > step * t
                    && (step + 1.0) * t <= end
            });
            if big && awake_write {
                strict_cases += 1;
                ensure(
                    copa.refreshes < conv.refreshes,
                    format!("seed {seed} T={t}: copa {} not below conv {}", copa.refreshes, conv.refreshes),
                )?;
            }
            if conv.refreshes > 0 {
                best = best.max(1.0 - copa.refreshes as f64 / conv.refreshes as f64);
            }
        }
    }
    ensure(strict_cases > 0, "no trace exercised the strict case")?;
    Ok(format!("80 paired runs, {strict_cases} strict; up to {:.1}% fewer refreshes", best * 100.0))
}

fn ac8_lru_oracle() -> Check {
    for seed in 0..50u64 {
        let trace = synthetic(3000 + seed, 1000, 96, 0.45, 1.0);
        let (dram, pja) = (8 + (seed as usize % 5) * 7, 4 + (seed as usize % 7) * 3);
        let mut sim = Simulation::new(cfg(dram, pja, SchemeConfig::no_pdflush())).unwrap();
        let mut order: Vec<PageId> = Vec::new();
        for (i, a) in trace.iter().enumerate() {
            let hit = sim.process(a).unwrap().access.hit == Some(HitKind::DramHit);
            let want = match order.iter().position(|p| *p == a.page) {
                Some(j) => {
                    order.remove(j);
                    true
                }
                None => {
                    if order.len() == dram {
                        order.remove(0);
                    }
                    false
                }
            };
            order.push(a.page);
            ensure(hit == want, format!("seed {seed} access {i}: hit {hit}, oracle {want}"))?;
        }
    }
    Ok("50 seeds x 1000 accesses match".into())
}

fn ac9_failure_ordering() -> Check {
    let trace = synthetic(4242, 2500, 600, 0.3, 8.0);
    let c = |s| cfg(8192, 8192, s);
    let losses: Vec<(String, f64)> = [
        SchemeConfig::copa(30.0),
        SchemeConfig::copa(90.0),
        SchemeConfig::copa(150.0),
        SchemeConfig::copa(300.0),
        SchemeConfig::no_pdflush(),
    ]
    .into_iter()
    .map(|s| {
        let r = run(&c(s), &trace);
        (r.scheme, r.failure.retention_loss)
    })
    .collect();
    for w in losses.windows(2) {
        ensure(w[0].1 < w[1].1, format!("{} ({:e}) !< {} ({:e})", w[0].0, w[0].1, w[1].0, w[1].1))?;
    }
    let top = losses.last().unwrap().1;
    let parts: Vec<String> = losses.iter().map(|(n, l)| format!("{n} {:.3e}", l / top)).collect();
    Ok(format!("normalized to No-pdflush: {}", parts.join(", ")))
}

fn ac10_determinism() -> Check {
    let cfg_text = r#"
        trace_id = "det"
        [buffer]
        dram_pages = 256
        pja_pages = 64
        [scheme]
        kind = "copa"
        timestep_s = 30.0
        [synthetic]
        access_count = 4000
        page_universe = 400
        write_fraction = 0.5
        seed = 77
        pattern = { kind = "zipf", theta = 0.9 }
        inter_arrival = { kind = "exponential", mean_s = 0.8 }
    "#;
    let rc = RunConfig::from_toml(cfg_text).unwrap();
    let a = report_json(&run_config(&rc).unwrap().0).unwrap();
    let b = report_json(&run_config(&rc).unwrap().0).unwrap();
    ensure(a == b, "two runs differ")?;

    let base = rc.sim_config();
    let workloads = Workloads {
        ids: vec!["w0".into(), "w1".into()],
        accesses: vec![synthetic(5, 2000, 200, 0.5, 1.0), synthetic(6, 2000, 50, 0.7, 3.0)],
    };
    let schemes = [
        SchemeConfig::no_pdflush(),
        SchemeConfig::baseline(),
        SchemeConfig::conv(60.0),
        SchemeConfig::copa(30.0),
        SchemeConfig::copa(300.0),
    ];
    let cells: Vec<Cell> =
        (0..2).flat_map(|w| schemes.iter().map(move |s| Cell { workload: w, scheme: s.clone() })).collect();
    let json = |cells: &[Cell]| -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = cells
            .iter()
            .zip(run_cells(&base, &workloads, cells, false))
            .map(|(c, r)| (format!("{}/{}", c.workload, c.scheme.label()), report_json(&r.unwrap()).unwrap()))
            .collect();
        v.sort();
        v
    };
    let reference = json(&cells);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..3 {
        let mut shuffled = cells.clone();
        shuffled.shuffle(&mut rng);
        ensure(json(&shuffled) == reference, "grid cell order changed a report")?;
    }
    Ok(format!("2 runs identical ({} bytes); {} grid cells stable under 3 shuffles", a.len(), cells.len()))
}

type Criterion = (&'static str, &'static str, fn() -> Check);

fn main() {
    let checks: [Criterion; 10] = [
        ("AC1", "CoPA idle bound (T, 3T)", ac1_idle_bound),
        ("AC2", "queue replay refresh sets", ac2_queue_replay),
        ("AC3", "eviction micro-trace", ac3_eviction_trace),
        ("AC4", "formula vs enumeration", ac4_enumeration),
        ("AC5", "Baseline idle ceiling", ac5_baseline_ceiling),
        ("AC6", "traffic ordering and t^2 law", ac6_traffic_and_scaling),
        ("AC7", "refresh-count dominance", ac7_refresh_dominance),
        ("AC8", "LRU oracle", ac8_lru_oracle),
        ("AC9", "failure-rate ordering", ac9_failure_ordering),
        ("AC10", "determinism", ac10_determinism),
    ];
    let mut failed = 0;
    for (id, name, f) in checks {
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let ms = start.elapsed().as_secs_f64() * 1e3;
        match res {
            Ok(detail) => println!("{id} PASS {name}: {detail} [{ms:.0} ms]"),
            Err(why) => {
                failed += 1;
                println!("{id} FAIL {name}: {why} [{ms:.0} ms]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
