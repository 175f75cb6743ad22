//! Declarative experiment configuration.
//!
//! A config file is a flat TOML table of `key = value` pairs; every key is
//! optional and falls back to its default. The same keys serve as
//! command-line overrides through [`ExperimentConfig::set`], so a file and
//! its flags always agree on names and parsing.
//!
//! ```toml
//! n = 4000
//! w = 0.9
//! replicates = 10
//! stop_coop = 0.98
//! sweep_key = "w"
//! sweep_values = [0.5, 0.7, 0.9, 1.0]
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::{ChurnLinks, ChurnSchedule, InitialTopology, RunConfig, SchedulerMode};
use crate::error::{Result, SimError};
use crate::graph::Strategy;
use crate::metrics::MetricsDetail;
use crate::sampler::SamplerKind;

/// Recognized keys, in the order they are applied and written.
pub const KEYS: &[(&str, &str)] = &[
    ("n", "population size"),
    ("w", "per-link drop probability on copy and link mutation"),
    ("m", "strategy mutation probability"),
    ("mr", "link mutation probability"),
    ("view_size", "maximum links per node"),
    ("d", "payoff shorthand: P = 2d, S = d (write-only alias)"),
    ("t", "temptation payoff"),
    ("r", "reward payoff"),
    ("p", "punishment payoff"),
    ("s", "sucker payoff"),
    ("mode", "semi | full"),
    ("compare_prob", "per-game comparison probability in full mode"),
    ("sampler", "oracle | gossip"),
    ("cache_size", "gossip cache entries per node"),
    ("seed", "seed of the first replicate"),
    ("replicates", "number of seeded runs per sweep point"),
    ("max_cycles", "cycle budget per run"),
    ("stop_coop", "cooperation fraction that ends a run, or \"none\""),
    ("stop_ccp", "additional CCP required to end a run, or \"none\""),
    ("metrics_interval", "cycles between trace samples"),
    ("metrics_detail", "full | basic (basic leaves ccp, ccpl, path length empty in traces)"),
    ("exact_ccp_limit", "largest N with exact CCP"),
    ("ccp_pair_samples", "sampled pairs above the exact limit"),
    ("exact_path_limit", "largest N (or component) with exact path lengths"),
    ("path_source_samples", "sampled BFS sources above the exact limit"),
    ("churn_fraction", "fraction of nodes reset per churn event, or \"none\""),
    ("churn_links", "wipe | keep: whether churned nodes lose their links"),
    ("churn_at", "cycle of the first churn event, or \"converged\""),
    ("churn_interval", "cycles between churn events"),
    ("churn_count", "number of churn events, or \"unlimited\""),
    ("initial_topology", "random | empty"),
    ("initial_strategy", "C | D"),
    ("sweep_key", "key varied across sweep points, or \"none\""),
    ("sweep_values", "values taken by sweep_key"),
    ("out", "output directory, or \"none\""),
    ("charts", "write SVG line charts"),
    ("export_graph", "write final edge lists and node states"),
    ("workers", "worker threads for replicates, or \"auto\""),
];

/// A run configuration with its sweep label, if any.
pub type SweepPoint = (Option<(String, String)>, RunConfig);

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub replicates: u32,
    pub sweep: Option<Sweep>,
    pub output_path: Option<PathBuf>,
    pub charts: bool,
    pub export_graph: bool,
    /// Worker pool size; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run: RunConfig::default(),
            replicates: 10,
            sweep: None,
            output_path: None,
            charts: false,
            export_graph: false,
            workers: None,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| format!("{key}: cannot parse `{value}`: {e}"))
}

fn optional<T: FromStr>(key: &str, value: &str, none: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    if value.trim() == none {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn parse_enum<T: FromStr<Err = String>>(key: &str, value: &str) -> Result<T, String> {
    value.trim().parse().map_err(|e| format!("{key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("{key}: expected true or false, got `{other}`")),
    }
}

fn toml_scalar(value: &toml::Value) -> Option<String> {
    match value {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        _ => None,
    }
}

impl ExperimentConfig {
    /// Sets one key from its textual form. Used for both file entries and
    /// command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let run = &mut self.run;
        let v = value.trim();
        match key {
            "n" => run.n = num(key, v)?,
            "w" => run.params.w = num(key, v)?,
            "m" => run.params.m = num(key, v)?,
            "mr" => run.params.mr = num(key, v)?,
            "view_size" => run.params.max_view_size = num(key, v)?,
            "d" => {
                let d: f64 = num(key, v)?;
                run.payoffs.p = 2.0 * d;
                run.payoffs.s = d;
            }
            "t" => run.payoffs.t = num(key, v)?,
            "r" => run.payoffs.r = num(key, v)?,
            "p" => run.payoffs.p = num(key, v)?,
            "s" => run.payoffs.s = num(key, v)?,
            "mode" => run.mode = parse_enum::<SchedulerMode>(key, v)?,
            "compare_prob" => run.compare_prob = num(key, v)?,
            "sampler" => run.sampler = parse_enum::<SamplerKind>(key, v)?,
            "cache_size" => run.cache_size = num(key, v)?,
            "seed" => run.seed = num(key, v)?,
            "replicates" => self.replicates = num(key, v)?,
            "max_cycles" => run.max_cycles = num(key, v)?,
            "stop_coop" => run.stop_coop_fraction = optional(key, v, "none")?,
            "stop_ccp" => run.stop_ccp = optional(key, v, "none")?,
            "metrics_interval" => run.metrics_interval = num(key, v)?,
            "metrics_detail" => {
                run.metrics_detail = match v {
                    "full" => MetricsDetail::Full,
                    "basic" => MetricsDetail::Basic,
                    other => return Err(format!("{key}: unknown detail `{other}` (expected full|basic)")),
                }
            }
            "exact_ccp_limit" => run.metrics.exact_ccp_limit = num(key, v)?,
            "ccp_pair_samples" => run.metrics.ccp_pair_samples = num(key, v)?,
            "exact_path_limit" => run.metrics.exact_path_limit = num(key, v)?,
            "path_source_samples" => run.metrics.path_source_samples = num(key, v)?,
            "churn_fraction" => match optional::<f64>(key, v, "none")? {
                None => run.churn = None,
                Some(f) => run.churn.get_or_insert(ChurnSchedule::once_after_convergence(f)).fraction = f,
            },
            "churn_links" => {
                let links = parse_enum::<ChurnLinks>(key, v)?;
                run.churn.get_or_insert(ChurnSchedule::once_after_convergence(0.0)).links = links;
            }
            "churn_at" => {
                let at = optional(key, v, "converged")?;
                run.churn.get_or_insert(ChurnSchedule::once_after_convergence(0.0)).start = at;
            }
            "churn_interval" => {
                let every = num(key, v)?;
                run.churn.get_or_insert(ChurnSchedule::once_after_convergence(0.0)).interval = every;
            }
            "churn_count" => {
                let count = optional(key, v, "unlimited")?;
                run.churn.get_or_insert(ChurnSchedule::once_after_convergence(0.0)).count = count;
            }
            "initial_topology" => run.initial_topology = parse_enum::<InitialTopology>(key, v)?,
            "initial_strategy" => {
                run.initial_strategy = match v {
                    "C" | "c" | "cooperate" => Strategy::Cooperate,
                    "D" | "d" | "defect" => Strategy::Defect,
                    other => return Err(format!("{key}: expected C or D, got `{other}`")),
                }
            }
            "sweep_key" => {
                if v == "none" {
                    self.sweep = None;
                } else {
                    self.sweep.get_or_insert(Sweep { key: String::new(), values: Vec::new() }).key = v.to_string();
                }
            }
            "sweep_values" => {
                let values = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                self.sweep.get_or_insert(Sweep { key: String::new(), values: Vec::new() }).values = values;
            }
            "out" => self.output_path = (v != "none").then(|| PathBuf::from(v)),
            "charts" => self.charts = parse_bool(key, v)?,
            "export_graph" => self.export_graph = parse_bool(key, v)?,
            "workers" => self.workers = optional(key, v, "auto")?,
            other => {
                let known: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
                return Err(format!("unknown key `{other}`; known keys: {}", known.join(", ")));
            }
        }
        Ok(())
    }

    /// Parses a flat TOML table on top of the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        let mut config = ExperimentConfig::default();
        let mut problems = Vec::new();
        for key in table.keys() {
            if !KEYS.iter().any(|(k, _)| k == key) {
                problems.push(format!("unknown key `{key}`"));
            }
        }
        for (key, _) in KEYS {
            let Some(value) = table.get(*key) else { continue };
            let text = match value {
                toml::Value::Array(items) if *key == "sweep_values" => {
                    let parts: Option<Vec<String>> = items.iter().map(toml_scalar).collect();
                    match parts {
                        Some(p) => p.join(","),
                        None => {
                            problems.push(format!("{key}: array items must be scalars"));
                            continue;
                        }
                    }
                }
                other => match toml_scalar(other) {
                    Some(s) => s,
                    None => {
                        problems.push(format!("{key}: expected a scalar value"));
                        continue;
                    }
                },
            };
            if let Err(e) = config.set(key, &text) {
                problems.push(e);
            }
        }
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(SimError::Parse(problems.join("; ")))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Input { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    /// Writes every key explicitly, so the output reproduces this config
    /// exactly under [`ExperimentConfig::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        use toml::Value::{Boolean, Float, Integer, String as Str};
        let run = &self.run;
        let int = |v: u64| Integer(v as i64);
        let opt_f = |v: Option<f64>, none: &str| v.map_or(Str(none.into()), Float);
        let mut entries: Vec<(&str, toml::Value)> = vec![
            ("n", int(run.n as u64)),
            ("w", Float(run.params.w)),
            ("m", Float(run.params.m)),
            ("mr", Float(run.params.mr)),
            ("view_size", int(run.params.max_view_size as u64)),
            ("t", Float(run.payoffs.t)),
            ("r", Float(run.payoffs.r)),
            ("p", Float(run.payoffs.p)),
            ("s", Float(run.payoffs.s)),
            ("mode", Str(run.mode.to_string())),
            ("compare_prob", Float(run.compare_prob)),
            ("sampler", Str(run.sampler.to_string())),
            ("cache_size", int(run.cache_size as u64)),
            ("seed", Str(run.seed.to_string())),
            ("replicates", int(self.replicates.into())),
            ("max_cycles", Str(run.max_cycles.to_string())),
            ("stop_coop", opt_f(run.stop_coop_fraction, "none")),
            ("stop_ccp", opt_f(run.stop_ccp, "none")),
            ("metrics_interval", Str(run.metrics_interval.to_string())),
            (
                "metrics_detail",
                Str(match run.metrics_detail {
                    MetricsDetail::Full => "full".into(),
                    MetricsDetail::Basic => "basic".into(),
                }),
            ),
            ("exact_ccp_limit", int(run.metrics.exact_ccp_limit as u64)),
            ("ccp_pair_samples", int(run.metrics.ccp_pair_samples as u64)),
            ("exact_path_limit", int(run.metrics.exact_path_limit as u64)),
            ("path_source_samples", int(run.metrics.path_source_samples as u64)),
        ];
        match &run.churn {
            None => entries.push(("churn_fraction", Str("none".into()))),
            Some(c) => {
                entries.push(("churn_fraction", Float(c.fraction)));
                entries.push(("churn_links", Str(c.links.to_string())));
                entries.push(("churn_at", c.start.map_or(Str("converged".into()), |s| Str(s.to_string()))));
                entries.push(("churn_interval", Str(c.interval.to_string())));
                entries.push(("churn_count", c.count.map_or(Str("unlimited".into()), |k| int(k.into()))));
            }
        }
        entries.push(("initial_topology", Str(run.initial_topology.to_string())));
        entries.push(("initial_strategy", Str(run.initial_strategy.as_char().to_string())));
        match &self.sweep {
            None => entries.push(("sweep_key", Str("none".into()))),
            Some(s) => {
                entries.push(("sweep_key", Str(s.key.clone())));
                entries.push(("sweep_values", toml::Value::Array(s.values.iter().cloned().map(Str).collect())));
            }
        }
        entries
            .push(("out", Str(self.output_path.as_ref().map_or("none".into(), |p| p.to_string_lossy().into_owned()))));
        entries.push(("charts", Boolean(self.charts)));
        entries.push(("export_graph", Boolean(self.export_graph)));
        entries.push(("workers", self.workers.map_or(Str("auto".into()), |w| int(w as u64))));

        let mut out = String::new();
        for (key, value) in entries {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// One run config per sweep point, labeled with its `(key, value)`.
    pub fn points(&self) -> Result<Vec<SweepPoint>, Vec<String>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![(None, self.run.clone())]);
        };
        let mut problems = Vec::new();
        if sweep.values.is_empty() {
            problems.push(format!("sweep over `{}` has no values", sweep.key));
        }
        if ["replicates", "sweep_key", "sweep_values", "out", "charts", "export_graph", "workers"]
            .contains(&sweep.key.as_str())
        {
            problems.push(format!("`{}` cannot be swept", sweep.key));
        }
        let mut points = Vec::new();
        for value in &sweep.values {
            let mut point = self.clone();
            match point.set(&sweep.key, value) {
                Ok(()) => points.push((Some((sweep.key.clone(), value.clone())), point.run)),
                Err(e) => problems.push(format!("sweep: {e}")),
            }
        }
        if problems.is_empty() {
            Ok(points)
        } else {
            Err(problems)
        }
    }

    /// Every hard problem, across all sweep points.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.replicates == 0 {
            problems.push("replicates must be at least 1".into());
        }
        if self.workers == Some(0) {
            problems.push("workers must be at least 1".into());
        }
        match self.points() {
            Err(p) => problems.extend(p),
            Ok(points) => {
                for (label, run) in points {
                    for p in run.problems() {
                        let msg = match &label {
                            Some((k, v)) => format!("{p} (at {k}={v})"),
                            None => p,
                        };
                        if !problems.contains(&msg) {
                            problems.push(msg);
                        }
                    }
                }
            }
        }
        problems
    }

    /// Soft warnings, e.g. parameter choices unlikely to cooperate.
    pub fn warnings(&self) -> Vec<String> {
        self.run.params.validate().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, prop_oneof, proptest, Just};
    use proptest::strategy::Strategy as _;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn parses_flat_keys() {
        let c = ExperimentConfig::from_toml_str(
            "n = 4000\nw = 1\nmode = \"full\"\nstop_coop = \"none\"\nd = 0.001\nsweep_key = \"n\"\nsweep_values = [2000, 4000]\nchurn_fraction = 0.5\n",
        )
        .unwrap();
        assert_eq!(c.run.n, 4000);
        assert_eq!(c.run.params.w, 1.0);
        assert_eq!(c.run.mode, SchedulerMode::FullAsync);
        assert_eq!(c.run.stop_coop_fraction, None);
        assert_eq!((c.run.payoffs.p, c.run.payoffs.s), (0.002, 0.001));
        assert_eq!(c.sweep, Some(Sweep { key: "n".into(), values: vec!["2000".into(), "4000".into()] }));
        assert_eq!(c.run.churn, Some(ChurnSchedule::once_after_convergence(0.5)));
        let points = c.points().unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[1].1.n, 4000);
        assert_eq!(points[0].0, Some(("n".into(), "2000".into())));
    }

    #[test]
    fn unknown_and_malformed_keys_are_reported_together() {
        let err = ExperimentConfig::from_toml_str("bogus = 1\nn = \"many\"\n").unwrap_err().to_string();
        assert!(err.contains("unknown key `bogus`"), "{err}");
        assert!(err.contains("n: cannot parse"), "{err}");
    }

    #[test]
    fn itemized_problems() {
        let mut c = ExperimentConfig::default();
        c.set("n", "1").unwrap();
        c.set("w", "1.5").unwrap();
        c.set("replicates", "0").unwrap();
        let p = c.problems();
        assert_eq!(p.len(), 3, "{p:?}");
        c = ExperimentConfig::default();
        c.set("sweep_key", "w").unwrap();
        c.set("sweep_values", "0.5,2").unwrap();
        let p = c.problems();
        assert_eq!(p.len(), 1, "{p:?}");
        assert!(p[0].contains("w=2"));
    }

    fn arbitrary_config() -> impl proptest::strategy::Strategy<Value = ExperimentConfig> {
        let run = (
            (2usize..100_000, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 1usize..64),
            (any::<u64>(), 0u64..1_000_000, proptest::option::of(0.0..=1.0f64), proptest::option::of(0.0..=1.0f64)),
            (any::<bool>(), any::<bool>(), any::<bool>(), 1u64..1000, 1e-9..1e-2f64),
            proptest::option::of((
                0.0..=1.0f64,
                any::<bool>(),
                proptest::option::of(0u64..5000),
                1u64..100,
                proptest::option::of(1u32..9),
            )),
        );
        let extra = (
            1u32..50,
            proptest::option::of(prop_oneof![Just("w"), Just("n"), Just("mr")]),
            proptest::option::of("[a-z]{1,8}"),
            any::<bool>(),
            any::<bool>(),
            proptest::option::of(1usize..16),
        );
        (run, extra).prop_map(|(r, e)| {
            let mut c = ExperimentConfig::default();
            let ((n, w, m, mr, cap), (seed, max_cycles, stop, stop_ccp), (full, gossip, basic, interval, d), churn) = r;
            c.run.n = n;
            c.run.params.w = w;
            c.run.params.m = m;
            c.run.params.mr = mr;
            c.run.params.max_view_size = cap;
            c.run.payoffs.p = 2.0 * d;
            c.run.payoffs.s = d;
            c.run.seed = seed;
            c.run.max_cycles = max_cycles;
            c.run.stop_coop_fraction = stop;
            c.run.stop_ccp = stop_ccp;
            if full {
                c.run.mode = SchedulerMode::FullAsync;
            }
            if gossip {
                c.run.sampler = SamplerKind::Gossip;
            }
            if basic {
                c.run.metrics_detail = MetricsDetail::Basic;
            }
            c.run.metrics_interval = interval;
            c.run.churn = churn.map(|(fraction, keep, start, interval, count)| ChurnSchedule {
                fraction,
                links: if keep { ChurnLinks::Keep } else { ChurnLinks::Wipe },
                start,
                interval,
                count,
            });
            let (replicates, sweep_key, out, charts, export_graph, workers) = e;
            c.replicates = replicates;
            c.sweep = sweep_key.map(|k| Sweep { key: k.into(), values: vec!["0.5".into(), "1".into()] });
            c.output_path = out.map(PathBuf::from);
            c.charts = charts;
            c.export_graph = export_graph;
            c.workers = workers;
            c
        })
    }

    proptest! {
        #[test]
        fn round_trip(c in arbitrary_config()) {
            let text = c.to_toml_string();
            prop_assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        }
    }
}
