//! Cycle scheduling, churn injection and the single-run driver.
//!
//! One cycle selects `10N` nodes (uniformly, with replacement) to play a game
//! each. In semi-asynchronous mode `N` further selections then run the
//! utility comparison; in fully asynchronous mode each player runs it right
//! after its game with a fixed probability.

use std::fmt;
use std::str::FromStr;

use log::trace;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::graph::{NodeId, OverlayGraph, Strategy};
use crate::metrics::{self, GraphSnapshot, MetricsDetail, MetricsOptions, MetricsSnapshot};
use crate::pd::{play_round, PdPayoffs};
use crate::protocol::{compare_and_adapt, ProtocolParams};
use crate::sampler::{PeerSampler, Sampler, SamplerKind, DEFAULT_CACHE_SIZE};

/// Game selections per node per cycle.
pub const GAMES_PER_NODE: usize = 10;

pub const DEFAULT_COMPARE_PROB: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SchedulerMode {
    #[default]
    SemiAsync,
    FullAsync,
}

impl fmt::Display for SchedulerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerMode::SemiAsync => "semi",
            SchedulerMode::FullAsync => "full",
        })
    }
}

impl FromStr for SchedulerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "semi" => Ok(SchedulerMode::SemiAsync),
            "full" => Ok(SchedulerMode::FullAsync),
            other => Err(format!("unknown mode `{other}` (expected semi|full)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InitialTopology {
    #[default]
    Random,
    Empty,
}

impl fmt::Display for InitialTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialTopology::Random => "random",
            InitialTopology::Empty => "empty",
        })
    }
}

impl FromStr for InitialTopology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(InitialTopology::Random),
            "empty" => Ok(InitialTopology::Empty),
            other => Err(format!("unknown initial topology `{other}` (expected random|empty)")),
        }
    }
}

/// What happens to the links of a churned node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ChurnLinks {
    /// Drop every link, then add one bootstrap link.
    #[default]
    Wipe,
    /// Keep existing links; isolated nodes still get a bootstrap link.
    Keep,
}

impl fmt::Display for ChurnLinks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChurnLinks::Wipe => "wipe",
            ChurnLinks::Keep => "keep",
        })
    }
}

impl FromStr for ChurnLinks {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "wipe" => Ok(ChurnLinks::Wipe),
            "keep" => Ok(ChurnLinks::Keep),
            other => Err(format!("unknown churn link policy `{other}` (expected wipe|keep)")),
        }
    }
}

/// Resets a fraction of the population to fresh defectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChurnSchedule {
    pub fraction: f64,
    pub links: ChurnLinks,
    /// Cycle of the first event; `None` fires on the cycle after the first
    /// converged sample.
    pub start: Option<u64>,
    /// Cycles between events.
    pub interval: u64,
    /// Number of events; `None` repeats until the cycle budget runs out.
    pub count: Option<u32>,
}

impl ChurnSchedule {
    /// A single event right after convergence.
    pub fn once_after_convergence(fraction: f64) -> Self {
        ChurnSchedule { fraction, links: ChurnLinks::Wipe, start: None, interval: 1, count: Some(1) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CycleStats {
    pub games_played: u64,
    /// Sum of both players' payoffs over the cycle's games.
    pub utility_added: f64,
    pub comparisons_executed: u64,
    pub copies: u64,
    pub strategy_mutations: u64,
    pub link_mutations: u64,
}

/// Runs one cycle of games and comparisons.
#[allow(clippy::too_many_arguments)]
pub fn run_cycle<S, R>(
    graph: &mut OverlayGraph,
    sampler: &S,
    params: &ProtocolParams,
    payoffs: &PdPayoffs,
    mode: SchedulerMode,
    compare_prob: f64,
    rng: &mut R,
) -> Result<CycleStats>
where
    S: PeerSampler + ?Sized,
    R: Rng + ?Sized,
{
    let n = graph.len();
    if n < 2 {
        return Err(SimError::NoPeerAvailable(n));
    }
    let mut stats = CycleStats::default();
    let adapt = |i: NodeId, graph: &mut OverlayGraph, rng: &mut R, stats: &mut CycleStats| -> Result<()> {
        let out = compare_and_adapt(i, graph, sampler, params, rng)?;
        stats.comparisons_executed += 1;
        stats.copies += u64::from(out.copied);
        stats.strategy_mutations += u64::from(out.strategy_mutated);
        stats.link_mutations += u64::from(out.links_mutated);
        trace!(
            "adapt node={i} partner={} copied={} strategy_mutated={} links_mutated={}",
            out.partner,
            out.copied,
            out.strategy_mutated,
            out.links_mutated
        );
        Ok(())
    };
    for _ in 0..GAMES_PER_NODE * n {
        let i = NodeId::from(rng.gen_range(0..n));
        let game = play_round(i, graph, sampler, payoffs, rng)?;
        stats.games_played += 1;
        stats.utility_added += game.payoffs.0 + game.payoffs.1;
        if mode == SchedulerMode::FullAsync && rng.gen_bool(compare_prob) {
            adapt(i, graph, rng, &mut stats)?;
        }
    }
    if mode == SchedulerMode::SemiAsync {
        for _ in 0..n {
            let i = NodeId::from(rng.gen_range(0..n));
            adapt(i, graph, rng, &mut stats)?;
        }
    }
    Ok(stats)
}

/// Resets `floor(fraction * N)` distinct random nodes to defectors with no
/// utility. Under [`ChurnLinks::Wipe`] their links are dropped and each gets
/// one bootstrap link to a sampler-drawn node; under [`ChurnLinks::Keep`]
/// only isolated reset nodes are bootstrapped.
/// Returns the reset nodes in ascending order.
pub fn apply_churn<S, R>(
    graph: &mut OverlayGraph,
    sampler: &S,
    fraction: f64,
    links: ChurnLinks,
    rng: &mut R,
) -> Result<Vec<NodeId>>
where
    S: PeerSampler + ?Sized,
    R: Rng + ?Sized,
{
    let n = graph.len();
    let k = ((fraction.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n);
    let mut reset: Vec<NodeId> = index::sample(rng, n, k).into_iter().map(NodeId::from).collect();
    reset.sort_unstable();
    for &i in &reset {
        graph.set_strategy(i, Strategy::Defect);
        graph.reset_utility(i);
        if links == ChurnLinks::Wipe {
            graph.clear_links(i);
        }
    }
    for &i in &reset {
        if links == ChurnLinks::Keep && graph.node(i).degree() > 0 {
            continue;
        }
        let peer = sampler.random_node(i, rng)?;
        graph.add_link(i, peer, rng);
    }
    Ok(reset)
}

/// Gives every node `attempts` links to uniformly random partners; self
/// and duplicate picks are skipped.
pub fn random_topology<R: Rng + ?Sized>(graph: &mut OverlayGraph, attempts: usize, rng: &mut R) {
    let n = graph.len();
    for i in 0..n {
        for _ in 0..attempts {
            let j = rng.gen_range(0..n);
            graph.add_link(NodeId::from(i), NodeId::from(j), rng);
        }
    }
}

/// Everything needed for one seeded run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub params: ProtocolParams,
    pub payoffs: PdPayoffs,
    pub mode: SchedulerMode,
    pub compare_prob: f64,
    pub sampler: SamplerKind,
    pub cache_size: usize,
    pub seed: u64,
    pub max_cycles: u64,
    /// `None` disables the convergence stop.
    pub stop_coop_fraction: Option<f64>,
    /// Extra CCP requirement for convergence.
    pub stop_ccp: Option<f64>,
    pub metrics_interval: u64,
    pub metrics_detail: MetricsDetail,
    pub metrics: MetricsOptions,
    pub churn: Option<ChurnSchedule>,
    pub initial_topology: InitialTopology,
    pub initial_strategy: Strategy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 2000,
            params: ProtocolParams::default(),
            payoffs: PdPayoffs::default(),
            mode: SchedulerMode::SemiAsync,
            compare_prob: DEFAULT_COMPARE_PROB,
            sampler: SamplerKind::Oracle,
            cache_size: DEFAULT_CACHE_SIZE,
            seed: 1,
            max_cycles: 1000,
            stop_coop_fraction: Some(0.98),
            stop_ccp: None,
            metrics_interval: 1,
            metrics_detail: MetricsDetail::Full,
            metrics: MetricsOptions::default(),
            churn: None,
            initial_topology: InitialTopology::Random,
            initial_strategy: Strategy::Defect,
        }
    }
}

impl RunConfig {
    /// Hard problems only; see [`ProtocolParams::validate`] for warnings.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.n < 2 {
            p.push(format!("n must be at least 2, got {}", self.n));
        }
        if let Err(e) = self.params.validate() {
            p.extend(e);
        }
        if let Err(e) = self.payoffs.validate() {
            p.extend(e);
        }
        if !(0.0..=1.0).contains(&self.compare_prob) {
            p.push(format!("compare_prob must be in [0, 1], got {}", self.compare_prob));
        }
        if self.cache_size == 0 {
            p.push("cache_size must be positive".into());
        }
        if self.metrics_interval == 0 {
            p.push("metrics_interval must be at least 1".into());
        }
        if let Some(s) = self.stop_coop_fraction {
            if !(0.0..=1.0).contains(&s) {
                p.push(format!("stop_coop must be in [0, 1], got {s}"));
            }
        }
        if let Some(s) = self.stop_ccp {
            if !(0.0..=1.0).contains(&s) {
                p.push(format!("stop_ccp must be in [0, 1], got {s}"));
            }
        }
        if let Some(c) = &self.churn {
            if !(0.0..=1.0).contains(&c.fraction) {
                p.push(format!("churn_fraction must be in [0, 1], got {}", c.fraction));
            }
            if c.interval == 0 {
                p.push("churn_interval must be at least 1".into());
            }
        }
        p
    }
}

/// Owns the mutable state of one run.
pub struct Simulation {
    pub graph: OverlayGraph,
    pub sampler: Sampler,
    params: ProtocolParams,
    payoffs: PdPayoffs,
    mode: SchedulerMode,
    compare_prob: f64,
    rng: ChaCha8Rng,
    cycle: u64,
}

impl Simulation {
    /// Builds the initial population described by `config`.
    pub fn new(config: &RunConfig) -> Result<Self> {
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(SimError::InvalidConfig(problems));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut graph = OverlayGraph::new(config.n, config.params.max_view_size, config.initial_strategy);
        if config.initial_topology == InitialTopology::Random {
            random_topology(&mut graph, config.params.max_view_size / 2, &mut rng);
        }
        let sampler = Sampler::new(config.sampler, config.n, config.cache_size, &mut rng);
        Ok(Simulation {
            graph,
            sampler,
            params: config.params,
            payoffs: config.payoffs,
            mode: config.mode,
            compare_prob: config.compare_prob,
            rng,
            cycle: 0,
        })
    }

    /// Completed cycles.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn run_cycle(&mut self) -> Result<CycleStats> {
        self.cycle += 1;
        self.sampler.on_cycle(self.cycle, &mut self.rng);
        run_cycle(
            &mut self.graph,
            &self.sampler,
            &self.params,
            &self.payoffs,
            self.mode,
            self.compare_prob,
            &mut self.rng,
        )
    }

    pub fn apply_churn(&mut self, fraction: f64, links: ChurnLinks) -> Result<Vec<NodeId>> {
        apply_churn(&mut self.graph, &self.sampler, fraction, links, &mut self.rng)
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot::from_graph(&self.graph)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    CycleBudget,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::CycleBudget => "cycle-budget",
        })
    }
}

/// One sampled trace row: metrics after `cycle`, plus that cycle's event
/// counts (zero for the initial sample).
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub metrics: MetricsSnapshot,
    pub stats: CycleStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChurnEvent {
    /// Churn is applied at the start of this cycle.
    pub cycle: u64,
    pub reset: usize,
    /// First converged sample after the event.
    pub recovered_at: Option<u64>,
}

impl ChurnEvent {
    /// Cycles run after the event up to and including the recovery sample.
    pub fn recovery_cycles(&self) -> Option<u64> {
        self.recovered_at.map(|at| at + 1 - self.cycle)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub final_cycle: u64,
    pub stop_reason: StopReason,
    /// First converged sample.
    pub convergence_cycle: Option<u64>,
    pub churn_events: Vec<ChurnEvent>,
    pub trace: Vec<TraceRow>,
    /// Full-detail metrics at the final cycle.
    pub final_metrics: MetricsSnapshot,
    pub final_graph: OverlayGraph,
}

fn metrics_rng(seed: u64, cycle: u64) -> ChaCha8Rng {
    // separate stream per sample so sampling never perturbs the dynamics
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(cycle + 1);
    r
}

/// Runs one seeded simulation to convergence or the cycle budget.
pub fn run_until(config: &RunConfig) -> Result<RunResult> {
    let mut sim = Simulation::new(config)?;
    let sample = |sim: &Simulation, detail: MetricsDetail| {
        let snap = sim.snapshot();
        let mut rng = metrics_rng(config.seed, sim.cycle());
        let mut m = MetricsSnapshot::compute(sim.cycle(), &snap, detail, &config.metrics, &mut rng);
        let coop_ok = config.stop_coop_fraction.is_some_and(|s| m.coop_fraction >= s);
        if config.stop_ccp.is_some() && m.ccp.is_none() && coop_ok {
            let c = metrics::ccp(&snap, &config.metrics, &mut rng);
            m.ccp = Some(c.value);
            m.estimator_flags.ccp_sampled = c.sampled;
        }
        m
    };
    let converged = |m: &MetricsSnapshot| {
        config.stop_coop_fraction.is_some_and(|s| m.coop_fraction >= s)
            && config.stop_ccp.is_none_or(|s| m.ccp.is_some_and(|c| c >= s))
    };

    let mut churn_left: u64 = match &config.churn {
        Some(c) => c.count.map_or(u64::MAX, u64::from),
        None => 0,
    };
    let mut next_churn = config.churn.and_then(|c| c.start);
    let mut churn_events: Vec<ChurnEvent> = Vec::new();
    let mut convergence_cycle = None;
    let mut trace = Vec::new();

    let mut stop_reason = StopReason::CycleBudget;
    let mut last_stats = CycleStats::default();
    loop {
        let cycle = sim.cycle();
        let is_sample = cycle % config.metrics_interval == 0 || cycle == config.max_cycles;
        if is_sample {
            let m = sample(&sim, config.metrics_detail);
            let ok = converged(&m);
            trace.push(TraceRow { metrics: m, stats: last_stats });
            if ok {
                convergence_cycle.get_or_insert(cycle);
                if let Some(ev) = churn_events.last_mut() {
                    ev.recovered_at.get_or_insert(cycle);
                }
                if churn_left == 0 {
                    stop_reason = StopReason::Converged;
                    break;
                }
                if next_churn.is_none() {
                    next_churn = Some(cycle + 1);
                }
            }
        }
        if cycle >= config.max_cycles {
            break;
        }
        if let (Some(c), Some(at)) = (&config.churn, next_churn) {
            if churn_left > 0 && at == cycle + 1 {
                let reset = sim.apply_churn(c.fraction, c.links)?;
                churn_events.push(ChurnEvent { cycle: at, reset: reset.len(), recovered_at: None });
                churn_left -= 1;
                next_churn = (churn_left > 0).then_some(at + c.interval);
            }
        }
        last_stats = sim.run_cycle()?;
    }

    let last = trace.last().expect("at least one sample");
    let final_metrics = if last.metrics.cycle == sim.cycle() && config.metrics_detail == MetricsDetail::Full {
        last.metrics.clone()
    } else {
        sample(&sim, MetricsDetail::Full)
    };
    Ok(RunResult {
        seed: config.seed,
        final_cycle: sim.cycle(),
        stop_reason,
        convergence_cycle,
        churn_events,
        trace,
        final_metrics,
        final_graph: sim.graph,
    })
}
