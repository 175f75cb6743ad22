//! End-to-end acceptance checks at desk scale (N <= 8000).
//!
//! Each test prints a single `PASS`/`FAIL` line straight to stderr so the
//! verdicts show up even when libtest captures output.

use std::io::Write;
use std::sync::OnceLock;

use slacer::config::{ExperimentConfig, Sweep};
use slacer::engine::{run_cycle, SchedulerMode, DEFAULT_COMPARE_PROB, GAMES_PER_NODE};
use slacer::experiment::{run_experiment, write_trace, ExperimentSummary, PointResult};
use slacer::graph::{OverlayGraph, Strategy};
use slacer::pd::PdPayoffs;
use slacer::presets::preset;
use slacer::protocol::ProtocolParams;
use slacer::sampler::OracleSampler;
use slacer::verify::{oracle_equivalence, structural_fuzz};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance] criterion {id:>2} {verdict}: {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn run(config: &ExperimentConfig) -> ExperimentSummary {
    run_experiment(config).expect("experiment runs")
}

fn mean_of(p: &PointResult, metric: &str) -> f64 {
    p.final_stat(metric).unwrap_or_else(|| panic!("{metric} undefined")).mean
}

fn point<'a>(s: &'a ExperimentSummary, value: &str) -> &'a PointResult {
    s.points.iter().find(|p| p.label.as_ref().is_some_and(|(_, v)| v == value)).expect("sweep point")
}

fn slacer_by_size() -> &'static ExperimentSummary {
    static RESULT: OnceLock<ExperimentSummary> = OnceLock::new();
    RESULT.get_or_init(|| run(&preset("fig5-slacer-gcc").unwrap()))
}

#[test]
fn c01_convergence_gap_between_slacer_and_slac() {
    let s = run(&preset("fig3-convergence").unwrap());
    let (slacer, slac) = (point(&s, "0.9"), point(&s, "1"));
    assert_eq!((slacer.runs.len(), slac.runs.len()), (10, 10));
    let all_converged = s.runs().all(|r| r.convergence_cycle.is_some());
    let (a, b) = (slacer.convergence_stat(), slac.convergence_stat());
    let gap = match (a, b) {
        (Some(a), Some(b)) => a.mean - b.mean,
        _ => f64::INFINITY,
    };
    report(
        1,
        "convergence from all-defect",
        all_converged && gap <= 60.0,
        &format!(
            "all converged={all_converged}, mean cycles W=0.9 {:.1}, W=1 {:.1}, gap {gap:.1} (limit 60)",
            a.map_or(f64::NAN, |s| s.mean),
            b.map_or(f64::NAN, |s| s.mean)
        ),
    );
}

#[test]
fn c02_slac_tribalism() {
    let s = run(&preset("fig4-slac-partition").unwrap());
    let sizes = ["2000", "4000", "8000"];
    let gcc: Vec<f64> = sizes.iter().map(|n| mean_of(point(&s, n), "gcc_size")).collect();
    let frac: Vec<f64> = sizes.iter().map(|n| mean_of(point(&s, n), "gcc_fraction")).collect();
    let ccp: Vec<f64> = sizes.iter().map(|n| mean_of(point(&s, n), "ccp")).collect();
    let bounded = gcc.iter().all(|g| (50.0..=450.0).contains(g));
    let not_proportional = frac[2] < 0.5 * frac[0];
    let ccp_falls = ccp.windows(2).all(|w| w[1] < w[0]);
    report(
        2,
        "SLAC extreme tribalism",
        bounded && not_proportional && ccp_falls,
        &format!("mean gcc_size {gcc:.1?} (band [50, 450]), gcc_fraction {frac:.4?}, ccp {ccp:.4?}"),
    );
}

#[test]
fn c03_slacer_giant_cooperative_component() {
    let s = slacer_by_size();
    let sizes = ["2000", "4000", "8000"];
    let frac: Vec<f64> = sizes.iter().map(|n| mean_of(point(s, n), "gcc_fraction")).collect();
    let ccp: Vec<f64> = sizes.iter().map(|n| mean_of(point(s, n), "ccp")).collect();
    let giant = frac.iter().all(|&f| f >= 0.95);
    let cooperative = ccp.iter().all(|&c| c >= 0.90);
    let scales = ccp.windows(2).all(|w| w[1] >= w[0] - 0.02);
    report(
        3,
        "SLACER giant cooperative component",
        giant && cooperative && scales,
        &format!("mean gcc_fraction {frac:.4?} (>= 0.95), mean ccp {ccp:.4?} (>= 0.90, drop <= 0.02)"),
    );
}

#[test]
fn c04_small_world_scaling() {
    let s = slacer_by_size();
    let sizes = ["2000", "4000", "8000"];
    let c: Vec<f64> = sizes.iter().map(|n| mean_of(point(s, n), "clustering")).collect();
    let l: Vec<f64> = sizes.iter().map(|n| mean_of(point(s, n), "avg_path_length")).collect();
    let (c_min, c_max) = c.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let spread = (c_max - c_min) / c_min;
    let increasing = l.windows(2).all(|w| w[1] > w[0]);
    let (d1, d2) = (l[1] - l[0], l[2] - l[1]);
    let comparable = d1 > 0.0 && d2 > 0.0 && d1 <= 2.0 * d2 && d2 <= 2.0 * d1;
    report(
        4,
        "small-world scaling",
        spread < 0.30 && increasing && comparable,
        &format!("C {c:.4?} (spread {:.1}%), L {l:.4?} (steps {d1:.3}, {d2:.3})", spread * 100.0),
    );
}

#[test]
fn c05_degree_profile() {
    let p = point(slacer_by_size(), "2000");
    let max_frac: Vec<f64> = p.runs.iter().map(|r| r.final_metrics.max_degree_fraction).collect();
    let zero_frac: Vec<f64> = p.runs.iter().map(|r| r.final_metrics.zero_degree_fraction).collect();
    let ok = max_frac.iter().all(|f| (0.03..=0.25).contains(f)) && zero_frac.iter().all(|&f| f <= 0.01);
    report(
        5,
        "degree profile",
        ok,
        &format!(
            "max-degree fraction per run {max_frac:.3?} (band [0.03, 0.25]), zero-degree {zero_frac:.4?} (<= 0.01)"
        ),
    );
}

#[test]
fn c06_typical_run_staging() {
    let s = run(&preset("fig7-typical-run").unwrap());
    let p = &s.points[0];
    let mut staged = 0;
    let mut ccpl_ok = 0;
    let mut notes = Vec::new();
    for r in &p.runs {
        let last = &r.final_metrics;
        let c_at = r.trace.iter().find(|t| t.metrics.clustering > 0.8 * last.clustering).map(|t| t.metrics.cycle);
        let coop_at = r.trace.iter().find(|t| t.metrics.coop_fraction > 0.5).map(|t| t.metrics.cycle);
        if let (Some(c), Some(k)) = (c_at, coop_at) {
            if c < k {
                staged += 1;
            }
        }
        let final_ccpl = last.ccpl.unwrap_or(f64::NAN);
        let peak = r.trace.iter().filter_map(|t| t.metrics.ccpl).fold(0.0f64, f64::max);
        let l = last.avg_path_length.unwrap_or(f64::NAN);
        if peak >= 1.2 * final_ccpl && (final_ccpl - l).abs() <= 0.1 * l {
            ccpl_ok += 1;
        }
        notes.push(format!(
            "seed {}: C@{} coop@{} ccpl peak {peak:.2} final {final_ccpl:.2} L {l:.2}",
            r.seed,
            c_at.map_or("-".into(), |c| c.to_string()),
            coop_at.map_or("-".into(), |c| c.to_string())
        ));
    }
    report(
        6,
        "typical-run staging",
        staged >= 9 && ccpl_ok >= 9,
        &format!(
            "clustering before cooperation in {staged}/10, CCPL peak-and-settle in {ccpl_ok}/10; {}",
            notes.join("; ")
        ),
    );
}

#[test]
fn c07_churn_recovery() {
    let s = run(&preset("churn-recovery").unwrap());
    let p = &s.points[0];
    let recovery: Vec<Option<u64>> =
        p.runs.iter().map(|r| r.churn_events.first().and_then(|e| e.recovery_cycles())).collect();
    let ok = p.runs.len() == 10
        && p.runs.iter().all(|r| r.churn_events.len() == 1 && r.churn_events[0].reset == 1000)
        && recovery.iter().all(|c| c.is_some_and(|c| c <= 50));
    report(
        7,
        "churn recovery",
        ok,
        &format!("cycles to coop >= 0.98 and ccp >= 0.90 after 50% churn: {recovery:?} (limit 50)"),
    );
}

#[test]
fn c08_rewire_probability_sweep() {
    let mut c = preset("w-sweep").unwrap();
    c.sweep = Some(Sweep { key: "w".into(), values: vec!["0.7".into(), "0.5".into()] });
    c.replicates = 3;
    c.charts = false;
    assert_eq!((c.run.n, c.run.max_cycles, c.run.stop_coop_fraction), (2000, 2000, None));
    let s = run(&c);
    let mut ok = true;
    let mut notes = Vec::new();
    for (w, max_bound, lo, hi) in [("0.7", 0.93, 0.65, 0.92), ("0.5", 0.75, 0.45, 0.72)] {
        for r in &point(&s, w).runs {
            let window: Vec<f64> = r
                .trace
                .iter()
                .filter(|t| (500..=2000).contains(&t.metrics.cycle))
                .map(|t| t.metrics.coop_fraction)
                .collect();
            assert_eq!(window.len(), 1501);
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            let max = window.iter().copied().fold(0.0f64, f64::max);
            ok &= max <= max_bound && (lo..=hi).contains(&mean);
            notes.push(format!("W={w} seed {}: mean {mean:.3} max {max:.3}", r.seed));
        }
    }
    report(
        8,
        "rewire probability sweep",
        ok,
        &format!(
            "{} (bands: W=0.7 max <= 0.93, mean in [0.65, 0.92]; W=0.5 max <= 0.75, mean in [0.45, 0.72])",
            notes.join("; ")
        ),
    );
}

#[test]
fn c09_oracle_equivalence() {
    let r = oracle_equivalence(500, 2, 60, 2024);
    report(
        9,
        "oracle equivalence",
        r.passed() && r.graphs == 500,
        &format!("{} graphs, {} CCP and {} CCPL mismatches", r.graphs, r.ccp_mismatches.len(), r.ccpl_mismatches.len()),
    );
}

#[test]
fn c10_structural_invariants() {
    let fuzz = structural_fuzz(100_000, 10);
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut g = OverlayGraph::new(n, 20, Strategy::Defect);
    slacer::engine::random_topology(&mut g, 10, &mut rng);
    let sampler = OracleSampler::new(n);
    let mut exact = true;
    for _ in 0..5 {
        let stats = run_cycle(
            &mut g,
            &sampler,
            &ProtocolParams::default(),
            &PdPayoffs::default(),
            SchedulerMode::SemiAsync,
            DEFAULT_COMPARE_PROB,
            &mut rng,
        )
        .unwrap();
        exact &= stats.games_played == (GAMES_PER_NODE * n) as u64 && stats.comparisons_executed == n as u64;
        exact &= g.validate().is_ok();
    }
    let detail = match &fuzz {
        Ok(r) => format!(
            "{} fuzz operations ({} cycles, {} comparisons checked); N=2000 cycles exact={exact}",
            r.operations, r.cycles_checked, r.adapts_checked
        ),
        Err(e) => format!("violation: {e}"),
    };
    report(10, "structural invariants", fuzz.as_ref().is_ok_and(|r| r.operations >= 100_000) && exact, &detail);
}

#[test]
fn c11_determinism() {
    let mut c = ExperimentConfig::default();
    c.run.n = 500;
    c.run.max_cycles = 60;
    c.run.seed = 77;
    c.replicates = 2;
    let traces = |workers: usize| {
        let dir = tempfile::tempdir().unwrap();
        let mut c = c.clone();
        c.workers = Some(workers);
        c.output_path = Some(dir.path().to_path_buf());
        run(&c);
        ["trace_seed77.csv", "trace_seed78.csv"].map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    let (a, b) = (traces(1), traces(2));
    let mut direct = Vec::new();
    let s = run(&c);
    write_trace("seed77", &s.points[0].runs[0], &mut direct).unwrap();
    let identical = a == b && a[0] == direct && !a[0].is_empty();
    report(
        11,
        "determinism",
        identical,
        &format!("trace bytes {} and {}, identical across runs and worker counts: {identical}", a[0].len(), a[1].len()),
    );
}
