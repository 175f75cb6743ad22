//! The SLACER adaptation step: compare against a random peer, copy its
//! strategy and links when it does at least as well, then occasionally
//! mutate.
//!
//! `w` controls how many old links survive a copy. With `w = 1` every old
//! link is dropped and the protocol is plain SLAC.

use rand::Rng;

use crate::error::Result;
use crate::graph::{NodeId, OverlayGraph};
use crate::sampler::PeerSampler;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolParams {
    /// Per-link drop probability during copy and link mutation.
    pub w: f64,
    /// Strategy mutation probability.
    pub m: f64,
    /// Link mutation probability.
    pub mr: f64,
    pub max_view_size: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams { w: 0.9, m: 0.001, mr: 0.01, max_view_size: 20 }
    }
}

impl ProtocolParams {
    /// Hard errors in `Err`; soft warnings in `Ok`.
    pub fn validate(&self) -> Result<Vec<String>, Vec<String>> {
        let mut problems = Vec::new();
        for (name, v) in [("w", self.w), ("m", self.m), ("mr", self.mr)] {
            if !(0.0..=1.0).contains(&v) {
                problems.push(format!("{name} must be a probability in [0, 1], got {v}"));
            }
        }
        if self.max_view_size == 0 {
            problems.push("view_size must be positive".to_string());
        }
        if !problems.is_empty() {
            return Err(problems);
        }
        let mut warnings = Vec::new();
        if self.mr < self.m {
            warnings.push(format!(
                "link mutation rate mr={} is below strategy mutation rate m={}; cooperation usually needs mr >> m",
                self.mr, self.m
            ));
        }
        Ok(warnings)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdaptOutcome {
    pub partner: NodeId,
    pub copied: bool,
    pub strategy_mutated: bool,
    pub links_mutated: bool,
}

/// One periodic comparison for node `i`.
///
/// `i` copies a random peer `j` when its average utility is not higher than
/// `j`'s; mutation can only follow a copy. `i`'s utility is reset either way.
pub fn compare_and_adapt<S, R>(
    i: NodeId,
    graph: &mut OverlayGraph,
    sampler: &S,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<AdaptOutcome>
where
    S: PeerSampler + ?Sized,
    R: Rng + ?Sized,
{
    let j = sampler.random_node(i, rng)?;
    let mut outcome = AdaptOutcome { partner: j, copied: false, strategy_mutated: false, links_mutated: false };
    if utility_at_most(graph.node(i).average_utility(), graph.node(j).average_utility()) {
        copy_state_partial(i, j, graph, params, rng);
        outcome.copied = true;
        if rng.gen_bool(params.m) {
            mutate_strategy(i, graph);
            outcome.strategy_mutated = true;
        }
        if rng.gen_bool(params.mr) {
            mutate_links(i, graph, sampler, params, rng)?;
            outcome.links_mutated = true;
        }
    }
    graph.reset_utility(i);
    Ok(outcome)
}

/// Relative slack under which two averages count as equal.
const TIE_TOLERANCE: f64 = 1e-9;

/// `a <= b`, treating values equal up to floating-point accumulation error
/// as ties. Averages of identical payoffs (`k * P / k`) rarely round back to
/// exactly `P`.
pub fn utility_at_most(a: f64, b: f64) -> bool {
    a <= b + TIE_TOLERANCE * a.abs().max(b.abs())
}

/// `i` takes `j`'s strategy, drops each of its own links with probability
/// `w`, then links to every neighbor of `j` (ascending id) and to `j`.
pub fn copy_state_partial<R: Rng + ?Sized>(
    i: NodeId,
    j: NodeId,
    graph: &mut OverlayGraph,
    params: &ProtocolParams,
    rng: &mut R,
) {
    debug_assert_ne!(i, j);
    graph.set_strategy(i, graph.strategy(j));
    drop_links_with_prob(i, graph, params.w, rng);

    let mut targets: Vec<NodeId> = graph.view(j).iter().copied().filter(|&k| k != i).collect();
    targets.sort_unstable();
    for k in targets {
        graph.add_link(i, k, rng);
    }
    graph.add_link(i, j, rng);
}

/// Drops each link of `i` with probability `w`, then links `i` to one
/// sampler-drawn node.
pub fn mutate_links<S, R>(
    i: NodeId,
    graph: &mut OverlayGraph,
    sampler: &S,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<()>
where
    S: PeerSampler + ?Sized,
    R: Rng + ?Sized,
{
    drop_links_with_prob(i, graph, params.w, rng);
    let peer = sampler.random_node(i, rng)?;
    graph.add_link(i, peer, rng);
    Ok(())
}

/// Flips `i`'s strategy.
pub fn mutate_strategy(i: NodeId, graph: &mut OverlayGraph) {
    graph.set_strategy(i, graph.strategy(i).flipped());
}

fn drop_links_with_prob<R: Rng + ?Sized>(i: NodeId, graph: &mut OverlayGraph, w: f64, rng: &mut R) {
    if w <= 0.0 {
        return;
    }
    if w >= 1.0 {
        graph.clear_links(i);
        return;
    }
    let old: Vec<NodeId> = graph.view(i).to_vec();
    for k in old {
        if rng.gen_bool(w) {
            graph.drop_link(i, k);
        }
    }
}
