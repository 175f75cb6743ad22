//! Self-checks shipped with the binary: fast metrics against brute-force
//! references, and structural invariants under randomized protocol
//! operations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{apply_churn, run_cycle, ChurnLinks, SchedulerMode, DEFAULT_COMPARE_PROB, GAMES_PER_NODE};
use crate::graph::{NodeId, OverlayGraph, Strategy};
use crate::metrics::{self, GraphSnapshot, MetricsOptions};
use crate::pd::{play_round, PdPayoffs};
use crate::protocol::{compare_and_adapt, mutate_links, mutate_strategy, ProtocolParams};
use crate::sampler::OracleSampler;

/// Erdős–Rényi graph on `n` nodes with a random edge probability and
/// random strategy labels.
pub fn random_labeled_graph<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GraphSnapshot {
    let p = rng.gen_range(0.0..(6.0 / n as f64).min(1.0));
    let coop_share = rng.gen::<f64>();
    let cooperator = (0..n).map(|_| rng.gen_bool(coop_share)).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    GraphSnapshot::from_edges(cooperator, &edges, n)
}

#[derive(Clone, Debug, Default)]
pub struct OracleReport {
    pub graphs: usize,
    /// `(graph index, fast, brute force)` for each disagreement.
    pub ccp_mismatches: Vec<(usize, f64, f64)>,
    pub ccpl_mismatches: Vec<(usize, Option<f64>, Option<f64>)>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.ccp_mismatches.is_empty() && self.ccpl_mismatches.is_empty()
    }
}

/// Compares exact CCP and CCPL with their brute-force references on
/// `graphs` random instances with `n_min..=n_max` nodes.
pub fn oracle_equivalence(graphs: usize, n_min: usize, n_max: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = MetricsOptions::default();
    let mut report = OracleReport { graphs, ..Default::default() };
    for g in 0..graphs {
        let n = rng.gen_range(n_min..=n_max);
        let snap = random_labeled_graph(n, &mut rng);
        let fast = metrics::ccp(&snap, &opts, &mut rng).value;
        let slow = metrics::ccp_bruteforce(&snap);
        if fast != slow {
            report.ccp_mismatches.push((g, fast, slow));
        }
        let fast = metrics::ccpl(&snap, &opts, &mut rng).map(|e| e.value);
        let slow = metrics::ccpl_bruteforce(&snap);
        if fast != slow {
            report.ccpl_mismatches.push((g, fast, slow));
        }
    }
    report
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuzzReport {
    pub operations: u64,
    pub cycles_checked: u64,
    pub adapts_checked: u64,
}

/// Applies `operations` random protocol operations to small random
/// overlays, checking after every step:
///
/// * link symmetry, degree cap, no self-loops and a consistent cooperator
///   count ([`OverlayGraph::validate`]);
/// * the adapting node's utility is reset after each comparison;
/// * a semi-asynchronous cycle plays exactly `10N` games and runs exactly
///   `N` comparisons.
///
/// Returns the first violation found.
pub fn structural_fuzz(operations: u64, seed: u64) -> Result<FuzzReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payoffs = PdPayoffs::default();
    let mut report = FuzzReport::default();
    while report.operations < operations {
        let n = rng.gen_range(2..=40);
        let cap = rng.gen_range(1..=8);
        let params = ProtocolParams {
            w: rng.gen(),
            m: rng.gen_range(0.0..0.2),
            mr: rng.gen_range(0.0..0.5),
            max_view_size: cap,
        };
        let sampler = OracleSampler::new(n);
        let mut g = OverlayGraph::new(n, cap, Strategy::Defect);
        for _ in 0..1000 {
            if report.operations >= operations {
                break;
            }
            report.operations += 1;
            let i = NodeId::from(rng.gen_range(0..n));
            let j = NodeId::from(rng.gen_range(0..n));
            let op = rng.gen_range(0..9);
            let what = match op {
                0 | 1 => {
                    g.add_link(i, j, &mut rng);
                    "add_link"
                }
                2 => {
                    g.drop_link(i, j);
                    "drop_link"
                }
                3 => {
                    g.clear_links(i);
                    "clear_links"
                }
                4 => {
                    play_round(i, &mut g, &sampler, &payoffs, &mut rng).map_err(|e| e.to_string())?;
                    "play_round"
                }
                5 => {
                    compare_and_adapt(i, &mut g, &sampler, &params, &mut rng).map_err(|e| e.to_string())?;
                    let s = g.node(i);
                    if s.utility_sum != 0.0 || s.games_played != 0 {
                        return Err(format!("utility of {i} not reset after comparison"));
                    }
                    report.adapts_checked += 1;
                    "compare_and_adapt"
                }
                6 => {
                    if rng.gen_bool(0.5) {
                        mutate_links(i, &mut g, &sampler, &params, &mut rng).map_err(|e| e.to_string())?;
                    } else {
                        mutate_strategy(i, &mut g);
                    }
                    "mutate"
                }
                7 => {
                    let links = if rng.gen_bool(0.5) { ChurnLinks::Wipe } else { ChurnLinks::Keep };
                    apply_churn(&mut g, &sampler, rng.gen(), links, &mut rng).map_err(|e| e.to_string())?;
                    "churn"
                }
                _ => {
                    let stats = run_cycle(
                        &mut g,
                        &sampler,
                        &params,
                        &payoffs,
                        SchedulerMode::SemiAsync,
                        DEFAULT_COMPARE_PROB,
                        &mut rng,
                    )
                    .map_err(|e| e.to_string())?;
                    if stats.games_played != (GAMES_PER_NODE * n) as u64 || stats.comparisons_executed != n as u64 {
                        return Err(format!(
                            "semi-async cycle on {n} nodes played {} games and ran {} comparisons",
                            stats.games_played, stats.comparisons_executed
                        ));
                    }
                    report.cycles_checked += 1;
                    "run_cycle"
                }
            };
            g.validate().map_err(|e| format!("after {what} (operation {}): {e}", report.operations))?;
        }
    }
    Ok(report)
}
