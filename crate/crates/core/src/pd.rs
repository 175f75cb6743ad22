//! Single-round Prisoner's Dilemma played between overlay neighbors.

use rand::Rng;

use crate::error::Result;
use crate::graph::{NodeId, OverlayGraph, Strategy};
use crate::sampler::PeerSampler;

/// Default small payoff unit: punishment is `2d`, sucker is `d`.
pub const DEFAULT_D: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdPayoffs {
    pub t: f64,
    pub r: f64,
    pub p: f64,
    pub s: f64,
}

impl Default for PdPayoffs {
    fn default() -> Self {
        PdPayoffs::from_d(DEFAULT_D)
    }
}

impl PdPayoffs {
    /// `T = 1.9, R = 1, P = 2d, S = d`.
    pub fn from_d(d: f64) -> Self {
        PdPayoffs { t: 1.9, r: 1.0, p: 2.0 * d, s: d }
    }

    /// Dilemma constraints `T > R > P > S` and `2R > T + S`.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        let PdPayoffs { t, r, p, s } = *self;
        if [t, r, p, s].iter().any(|v| !v.is_finite()) {
            problems.push("payoffs must be finite".to_string());
        }
        if !(t > r && r > p && p > s) {
            problems.push(format!("payoffs must satisfy T > R > P > S (got T={t}, R={r}, P={p}, S={s})"));
        }
        if 2.0 * r <= t + s {
            problems.push(format!("payoffs must satisfy 2R > T + S (got 2R={}, T+S={})", 2.0 * r, t + s));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

/// Payoffs to `(a, b)`.
pub fn play_game(a: Strategy, b: Strategy, payoffs: &PdPayoffs) -> (f64, f64) {
    use Strategy::*;
    match (a, b) {
        (Cooperate, Cooperate) => (payoffs.r, payoffs.r),
        (Defect, Defect) => (payoffs.p, payoffs.p),
        (Cooperate, Defect) => (payoffs.s, payoffs.t),
        (Defect, Cooperate) => (payoffs.t, payoffs.s),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameRecord {
    pub player: NodeId,
    pub partner: NodeId,
    pub moves: (Strategy, Strategy),
    pub payoffs: (f64, f64),
}

/// `i` plays one game against a random neighbor. An isolated node is first
/// linked to a sampler-drawn peer. Both players are credited.
pub fn play_round<S, R>(
    i: NodeId,
    graph: &mut OverlayGraph,
    sampler: &S,
    payoffs: &PdPayoffs,
    rng: &mut R,
) -> Result<GameRecord>
where
    S: PeerSampler + ?Sized,
    R: Rng + ?Sized,
{
    if graph.view(i).is_empty() {
        let peer = sampler.random_node(i, rng)?;
        graph.add_link(i, peer, rng);
    }
    let partner = graph.random_neighbor(i, rng).expect("node has a neighbor after bootstrap link");
    let moves = (graph.strategy(i), graph.strategy(partner));
    let (pa, pb) = play_game(moves.0, moves.1, payoffs);
    graph.record_payoff(i, pa);
    graph.record_payoff(partner, pb);
    Ok(GameRecord { player: i, partner, moves, payoffs: (pa, pb) })
}

/// Mean payoff per game since the last reset, 0 when no games were played.
pub fn average_utility(graph: &OverlayGraph, i: NodeId) -> f64 {
    graph.node(i).average_utility()
}
