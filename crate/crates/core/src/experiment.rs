//! Seeded replicates, sweeps, and CSV/SVG output.
//!
//! Output directory layout:
//!
//! * `config.toml`: the resolved configuration.
//! * `trace_<run_id>.csv`: one per replicate.
//! * `aggregate.csv`: one row per sweep point, means and variances across
//!   replicates.
//! * `charts/<point>_<metric>.svg`: optional.
//! * `graph_<run_id>.edges` / `.nodes`: optional final topology.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use rayon::prelude::*;

use crate::chart::{line_chart, Series};
use crate::config::ExperimentConfig;
use crate::engine::{run_until, RunConfig, RunResult, StopReason};
use crate::error::{Result, SimError};
use crate::metrics::MetricsSnapshot;

pub const TRACE_COLUMNS: [&str; 12] = [
    "run_id",
    "cycle",
    "coop_fraction",
    "ccp",
    "ccpl",
    "clustering",
    "avg_path_length",
    "gcc_size",
    "gcc_fraction",
    "max_degree_fraction",
    "games_played",
    "copies",
];

/// Final-state measures summarized in the aggregate table.
const AGGREGATE_METRICS: [&str; 9] = [
    "coop_fraction",
    "ccp",
    "ccpl",
    "clustering",
    "avg_path_length",
    "gcc_size",
    "gcc_fraction",
    "max_degree_fraction",
    "zero_degree_fraction",
];

fn metric_value(m: &MetricsSnapshot, name: &str) -> Option<f64> {
    match name {
        "coop_fraction" => Some(m.coop_fraction),
        "ccp" => m.ccp,
        "ccpl" => m.ccpl,
        "clustering" => Some(m.clustering),
        "avg_path_length" => m.avg_path_length,
        "gcc_size" => Some(m.gcc_size as f64),
        "gcc_fraction" => Some(m.gcc_fraction),
        "max_degree_fraction" => Some(m.max_degree_fraction),
        "zero_degree_fraction" => Some(m.zero_degree_fraction),
        _ => None,
    }
}

/// Replicates of one sweep point.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub label: Option<(String, String)>,
    pub config: RunConfig,
    pub runs: Vec<RunResult>,
}

impl PointResult {
    pub fn run_id(&self, run: &RunResult) -> String {
        run_id(self.label.as_ref(), run.seed)
    }

    /// Mean and sample variance of a final-state metric over replicates
    /// where it is defined.
    pub fn final_stat(&self, metric: &str) -> Option<Stat> {
        Stat::of(self.runs.iter().filter_map(|r| metric_value(&r.final_metrics, metric)))
    }

    pub fn convergence_stat(&self) -> Option<Stat> {
        Stat::of(self.runs.iter().filter_map(|r| r.convergence_cycle.map(|c| c as f64)))
    }

    /// Cycles from the first churn event to recovery.
    pub fn recovery_stat(&self) -> Option<Stat> {
        Stat::of(
            self.runs.iter().filter_map(|r| r.churn_events.first().and_then(|e| e.recovery_cycles().map(|c| c as f64))),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    /// Sample variance (n − 1 denominator); `None` for a single value.
    pub variance: Option<f64>,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let variance = (v.len() > 1).then(|| v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0));
        Some(Stat { count: v.len(), mean, variance })
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub points: Vec<PointResult>,
}

impl ExperimentSummary {
    pub fn runs(&self) -> impl Iterator<Item = &RunResult> {
        self.points.iter().flat_map(|p| p.runs.iter())
    }

    /// Runs that were meant to converge but exhausted their budget.
    pub fn budget_failures(&self) -> Vec<String> {
        self.points
            .iter()
            .flat_map(|p| {
                p.runs
                    .iter()
                    .filter(|r| p.config.stop_coop_fraction.is_some() && r.stop_reason == StopReason::CycleBudget)
                    .map(|r| p.run_id(r))
            })
            .collect()
    }
}

pub fn run_id(label: Option<&(String, String)>, seed: u64) -> String {
    match label {
        Some((k, v)) => format!("{k}{v}_seed{seed}"),
        None => format!("seed{seed}"),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the per-sample trace of one run.
pub fn write_trace<W: Write>(run_id: &str, run: &RunResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for row in &run.trace {
        let m = &row.metrics;
        w.write_record([
            run_id.to_string(),
            m.cycle.to_string(),
            m.coop_fraction.to_string(),
            fmt_opt(m.ccp),
            fmt_opt(m.ccpl),
            m.clustering.to_string(),
            fmt_opt(m.avg_path_length),
            m.gcc_size.to_string(),
            m.gcc_fraction.to_string(),
            m.max_degree_fraction.to_string(),
            row.stats.games_played.to_string(),
            row.stats.copies.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Header of the aggregate table.
pub fn aggregate_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "sweep_key",
        "sweep_value",
        "replicates",
        "converged",
        "convergence_cycle_mean",
        "convergence_cycle_var",
        "recovery_cycles_mean",
        "recovery_cycles_var",
        "final_cycle_mean",
        "final_cycle_var",
    ]
    .map(String::from)
    .to_vec();
    for m in AGGREGATE_METRICS {
        cols.push(format!("{m}_mean"));
        cols.push(format!("{m}_var"));
    }
    cols
}

/// Writes one aggregate row per sweep point.
pub fn write_aggregate<W: Write>(summary: &ExperimentSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(aggregate_columns())?;
    let push = |rec: &mut Vec<String>, s: Option<Stat>| {
        rec.push(fmt_opt(s.map(|s| s.mean)));
        rec.push(fmt_opt(s.and_then(|s| s.variance)));
    };
    for p in &summary.points {
        let (k, v) = p.label.clone().unwrap_or_default();
        let converged = p.runs.iter().filter(|r| r.convergence_cycle.is_some()).count();
        let mut rec = vec![k, v, p.runs.len().to_string(), converged.to_string()];
        push(&mut rec, p.convergence_stat());
        push(&mut rec, p.recovery_stat());
        push(&mut rec, Stat::of(p.runs.iter().map(|r| r.final_cycle as f64)));
        for m in AGGREGATE_METRICS {
            push(&mut rec, p.final_stat(m));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| SimError::Output { path: path.into(), source })
}

fn export(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|source| SimError::Output { path: path.into(), source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| SimError::Output { path: path.into(), source })
}

/// Creates `dir` and writes the resolved config there, proving it is
/// writable.
fn prepare_output(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| SimError::Output { path: dir.into(), source })?;
    write_text(&dir.join("config.toml"), &config.to_toml_string())
}

/// Validates, runs every (point, replicate) on a bounded worker pool, then
/// writes outputs if an output directory is configured.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(SimError::InvalidConfig(problems));
    }
    let points = config.points().map_err(SimError::InvalidConfig)?;
    if let Some(dir) = &config.output_path {
        prepare_output(dir, config)?;
    }

    let jobs: Vec<(usize, RunConfig)> = points
        .iter()
        .enumerate()
        .flat_map(|(k, (_, run))| {
            (0..u64::from(config.replicates)).map(move |r| {
                let mut run = run.clone();
                run.seed = run.seed.wrapping_add(r);
                (k, run)
            })
        })
        .collect();
    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(jobs.len().max(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::InvalidConfig(vec![format!("cannot start worker pool: {e}")]))?;
    info!("running {} job(s) on {} worker(s)", jobs.len(), workers);
    let results: Vec<Result<RunResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|(k, run)| {
                let r = run_until(run);
                if let Ok(res) = &r {
                    info!(
                        "{} finished at cycle {} ({})",
                        run_id(points[*k].0.as_ref(), res.seed),
                        res.final_cycle,
                        res.stop_reason
                    );
                }
                r
            })
            .collect()
    });

    let mut summary = ExperimentSummary {
        points: points.into_iter().map(|(label, config)| PointResult { label, config, runs: Vec::new() }).collect(),
    };
    for ((k, _), r) in jobs.iter().zip(results) {
        summary.points[*k].runs.push(r?);
    }
    if let Some(dir) = &config.output_path {
        write_outputs(dir, config, &summary)?;
    }
    Ok(summary)
}

/// Writes traces, the aggregate table and optional charts/graphs.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, summary: &ExperimentSummary) -> Result<()> {
    for p in &summary.points {
        for run in &p.runs {
            let id = p.run_id(run);
            write_trace(&id, run, create(&dir.join(format!("trace_{id}.csv")))?)?;
            if config.export_graph {
                export(&dir.join(format!("graph_{id}.edges")), |w| run.final_graph.write_edge_list(w))?;
                export(&dir.join(format!("graph_{id}.nodes")), |w| run.final_graph.write_node_states(w))?;
            }
        }
    }
    write_aggregate(summary, create(&dir.join("aggregate.csv"))?)?;
    if config.charts {
        write_charts(&dir.join("charts"), summary)?;
    }
    Ok(())
}

type Extractor = fn(&MetricsSnapshot) -> Option<f64>;

fn write_charts(dir: &Path, summary: &ExperimentSummary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| SimError::Output { path: dir.into(), source })?;
    let metrics: [(&str, Extractor); 6] = [
        ("coop_fraction", |m| Some(m.coop_fraction)),
        ("ccp", |m| m.ccp),
        ("ccpl", |m| m.ccpl),
        ("clustering", |m| Some(m.clustering)),
        ("avg_path_length", |m| m.avg_path_length),
        ("gcc_fraction", |m| Some(m.gcc_fraction)),
    ];
    for p in &summary.points {
        let prefix = p.label.as_ref().map_or("run".to_string(), |(k, v)| format!("{k}{v}"));
        for (name, get) in metrics {
            let series: Vec<Series> = p
                .runs
                .iter()
                .map(|r| Series {
                    name: format!("seed {}", r.seed),
                    points: r
                        .trace
                        .iter()
                        .filter_map(|t| get(&t.metrics).map(|v| (t.metrics.cycle as f64, v)))
                        .collect(),
                })
                .filter(|s| !s.points.is_empty())
                .collect();
            if series.is_empty() {
                continue;
            }
            let title = match &p.label {
                Some((k, v)) => format!("{name} ({k} = {v})"),
                None => name.to_string(),
            };
            write_text(&dir.join(format!("{prefix}_{name}.svg")), &line_chart(&title, "cycle", name, &series))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Sweep;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.run.n = 60;
        c.run.max_cycles = 40;
        c.replicates = 2;
        c.workers = Some(2);
        c
    }

    #[test]
    fn stat_cases() {
        assert_eq!(Stat::of([]), None);
        assert_eq!(Stat::of([2.0]), Some(Stat { count: 1, mean: 2.0, variance: None }));
        let s = Stat::of([1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.variance.unwrap() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn replicates_use_consecutive_seeds_and_write_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small();
        c.run.seed = 7;
        c.output_path = Some(dir.path().join("out"));
        c.charts = true;
        c.export_graph = true;
        c.sweep = Some(Sweep { key: "w".into(), values: vec!["0.9".into(), "1".into()] });
        let s = run_experiment(&c).unwrap();
        assert_eq!(s.points.len(), 2);
        let seeds: Vec<u64> = s.points[0].runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![7, 8]);
        let out = dir.path().join("out");
        for f in ["config.toml", "aggregate.csv", "trace_w0.9_seed7.csv", "trace_w1_seed8.csv", "graph_w1_seed8.edges"]
        {
            assert!(out.join(f).exists(), "{f}");
        }
        assert!(out.join("charts/w0.9_coop_fraction.svg").exists());
        let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
        assert_eq!(agg.lines().count(), 3);
        assert!(agg.lines().nth(1).unwrap().starts_with("w,0.9,2,"));
        let written = ExperimentConfig::from_file(&out.join("config.toml")).unwrap();
        assert_eq!(written, c);
    }

    #[test]
    fn trace_schema_and_undefined_fields() {
        let mut c = small();
        c.replicates = 1;
        c.run.metrics_detail = crate::metrics::MetricsDetail::Basic;
        let s = run_experiment(&c).unwrap();
        let run = &s.points[0].runs[0];
        let mut buf = Vec::new();
        write_trace("x", run, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 12);
        assert_eq!((first[0], first[1], first[3], first[4], first[6]), ("x", "0", "", "", ""));
        assert!(!text.contains("NaN"));
        for line in text.lines().skip(2) {
            assert_eq!(line.split(',').count(), 12);
        }
    }

    #[test]
    fn unwritable_output_fails_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let mut c = small();
        c.run.max_cycles = 1_000_000;
        c.run.stop_coop_fraction = None;
        c.output_path = Some(blocker.join("sub"));
        let t = std::time::Instant::now();
        assert!(matches!(run_experiment(&c), Err(SimError::Output { .. })));
        assert!(t.elapsed().as_secs() < 5);
    }

    #[test]
    fn invalid_config_is_reported_without_running() {
        let mut c = small();
        c.run.n = 1;
        c.replicates = 0;
        match run_experiment(&c) {
            Err(SimError::InvalidConfig(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
