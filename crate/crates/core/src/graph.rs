//! Undirected, bounded-degree overlay with per-node protocol state.
//!
//! Every link is stored at both endpoints. All mutation goes through
//! [`OverlayGraph::add_link`] and [`OverlayGraph::drop_link`], which keep the
//! two copies in step, so the symmetry invariant holds after every call.

use std::fmt;

use rand::Rng;

/// Index of a node in `[0, n)`. Stable for the whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Cooperate,
    Defect,
}

impl Strategy {
    pub fn flipped(self) -> Self {
        match self {
            Strategy::Cooperate => Strategy::Defect,
            Strategy::Defect => Strategy::Cooperate,
        }
    }

    pub fn is_cooperator(self) -> bool {
        self == Strategy::Cooperate
    }

    /// 'C' or 'D'.
    pub fn as_char(self) -> char {
        match self {
            Strategy::Cooperate => 'C',
            Strategy::Defect => 'D',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub strategy: Strategy,
    pub utility_sum: f64,
    pub games_played: u64,
    view: Vec<NodeId>,
}

impl NodeState {
    fn new(strategy: Strategy, max_view_size: usize) -> Self {
        NodeState { strategy, utility_sum: 0.0, games_played: 0, view: Vec::with_capacity(max_view_size) }
    }

    /// Neighbors, in no meaningful order.
    pub fn view(&self) -> &[NodeId] {
        &self.view
    }

    pub fn degree(&self) -> usize {
        self.view.len()
    }

    pub fn is_linked(&self, other: NodeId) -> bool {
        self.view.contains(&other)
    }

    /// Mean payoff per game since the last reset; zero before any game.
    pub fn average_utility(&self) -> f64 {
        if self.games_played == 0 {
            0.0
        } else {
            self.utility_sum / self.games_played as f64
        }
    }

    pub fn reset_utility(&mut self) {
        self.utility_sum = 0.0;
        self.games_played = 0;
    }

    fn remove_from_view(&mut self, other: NodeId) -> bool {
        match self.view.iter().position(|&k| k == other) {
            Some(pos) => {
                self.view.swap_remove(pos);
                true
            }
            None => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkResult {
    Added,
    AlreadyPresent,
    RejectedSelf,
}

/// Population of nodes joined by symmetric links, at most `max_view_size`
/// per node.
#[derive(Clone, Debug)]
pub struct OverlayGraph {
    states: Vec<NodeState>,
    max_view_size: usize,
    cooperators: usize,
}

impl OverlayGraph {
    /// `n` unlinked nodes, all playing `strategy`.
    pub fn new(n: usize, max_view_size: usize, strategy: Strategy) -> Self {
        assert!(max_view_size > 0, "view size must be positive");
        assert!(n <= u32::MAX as usize, "population too large");
        OverlayGraph {
            states: (0..n).map(|_| NodeState::new(strategy, max_view_size)).collect(),
            max_view_size,
            cooperators: if strategy.is_cooperator() { n } else { 0 },
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn max_view_size(&self) -> usize {
        self.max_view_size
    }

    pub fn node(&self, i: NodeId) -> &NodeState {
        &self.states[i.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &NodeState)> {
        self.states.iter().enumerate().map(|(i, s)| (NodeId::from(i), s))
    }

    pub fn view(&self, i: NodeId) -> &[NodeId] {
        &self.states[i.index()].view
    }

    pub fn is_linked(&self, i: NodeId, j: NodeId) -> bool {
        self.states[i.index()].is_linked(j)
    }

    pub fn cooperator_count(&self) -> usize {
        self.cooperators
    }

    pub fn edge_count(&self) -> usize {
        self.states.iter().map(|s| s.view.len()).sum::<usize>() / 2
    }

    pub fn strategy(&self, i: NodeId) -> Strategy {
        self.states[i.index()].strategy
    }

    pub fn set_strategy(&mut self, i: NodeId, strategy: Strategy) {
        let slot = &mut self.states[i.index()].strategy;
        match (*slot, strategy) {
            (Strategy::Defect, Strategy::Cooperate) => self.cooperators += 1,
            (Strategy::Cooperate, Strategy::Defect) => self.cooperators -= 1,
            _ => {}
        }
        *slot = strategy;
    }

    /// Adds `amount` to a node's utility and counts one game.
    pub fn record_payoff(&mut self, i: NodeId, amount: f64) {
        let s = &mut self.states[i.index()];
        s.utility_sum += amount;
        s.games_played += 1;
    }

    pub fn reset_utility(&mut self, i: NodeId) {
        self.states[i.index()].reset_utility();
    }

    /// Links `i` and `j`. A full endpoint first loses one uniformly chosen
    /// existing link (removed at both of its ends).
    pub fn add_link<R: Rng + ?Sized>(&mut self, i: NodeId, j: NodeId, rng: &mut R) -> LinkResult {
        self.check(i);
        self.check(j);
        if i == j {
            return LinkResult::RejectedSelf;
        }
        if self.is_linked(i, j) {
            return LinkResult::AlreadyPresent;
        }
        for end in [i, j] {
            let view = &self.states[end.index()].view;
            if view.len() >= self.max_view_size {
                let evicted = view[rng.gen_range(0..view.len())];
                self.drop_link(end, evicted);
            }
        }
        self.states[i.index()].view.push(j);
        self.states[j.index()].view.push(i);
        LinkResult::Added
    }

    /// Removes the link between `i` and `j`; returns whether one existed.
    pub fn drop_link(&mut self, i: NodeId, j: NodeId) -> bool {
        self.check(i);
        self.check(j);
        if self.states[i.index()].remove_from_view(j) {
            let mirrored = self.states[j.index()].remove_from_view(i);
            debug_assert!(mirrored, "asymmetric link {i}-{j}");
            true
        } else {
            false
        }
    }

    /// Drops every link of `i`.
    pub fn clear_links(&mut self, i: NodeId) {
        let view = std::mem::take(&mut self.states[i.index()].view);
        for k in &view {
            self.states[k.index()].remove_from_view(i);
        }
        // keep the allocation
        let mut view = view;
        view.clear();
        self.states[i.index()].view = view;
    }

    /// Uniform draw from `view(i)`.
    pub fn random_neighbor<R: Rng + ?Sized>(&self, i: NodeId, rng: &mut R) -> Option<NodeId> {
        let view = &self.states[i.index()].view;
        if view.is_empty() {
            None
        } else {
            Some(view[rng.gen_range(0..view.len())])
        }
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, s) in self.nodes() {
            out.extend(s.view.iter().filter(|&&k| i < k).map(|&k| (i, k)));
        }
        out.sort_unstable();
        out
    }

    /// Checks symmetry, the degree cap, self-loops and duplicates.
    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.nodes() {
            if s.view.len() > self.max_view_size {
                return Err(format!("node {i} has degree {} above cap {}", s.view.len(), self.max_view_size));
            }
            for (pos, &k) in s.view.iter().enumerate() {
                if k == i {
                    return Err(format!("node {i} links to itself"));
                }
                if k.index() >= self.len() {
                    return Err(format!("node {i} links to unknown node {k}"));
                }
                if s.view[..pos].contains(&k) {
                    return Err(format!("node {i} lists {k} twice"));
                }
                if !self.states[k.index()].view.contains(&i) {
                    return Err(format!("link {i}->{k} has no mirror"));
                }
            }
            if s.games_played == 0 && s.utility_sum != 0.0 {
                return Err(format!("node {i} has utility without games"));
            }
        }
        let coop = self.states.iter().filter(|s| s.strategy.is_cooperator()).count();
        if coop != self.cooperators {
            return Err(format!("cooperator count {} != actual {coop}", self.cooperators));
        }
        Ok(())
    }

    /// One edge per line, `i j` with `i < j`.
    pub fn write_edge_list<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for (a, b) in self.edges() {
            writeln!(out, "{a} {b}")?;
        }
        Ok(())
    }

    /// One node per line, `id C|D`.
    pub fn write_node_states<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, s) in self.nodes() {
            writeln!(out, "{i} {}", s.strategy.as_char())?;
        }
        Ok(())
    }

    #[inline]
    fn check(&self, i: NodeId) {
        assert!(i.index() < self.states.len(), "node {i} out of range 0..{}", self.states.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_oneof, proptest};
    use proptest::strategy::Strategy as _;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn add_link_base_case() {
        let mut g = OverlayGraph::new(3, 20, Strategy::Defect);
        assert_eq!(g.add_link(NodeId(0), NodeId(1), &mut rng()), LinkResult::Added);
        assert_eq!(g.view(NodeId(0)), &[NodeId(1)]);
        assert_eq!(g.view(NodeId(1)), &[NodeId(0)]);
        assert_eq!(g.add_link(NodeId(1), NodeId(0), &mut rng()), LinkResult::AlreadyPresent);
        g.validate().unwrap();
    }

    #[test]
    fn self_link_rejected() {
        let mut g = OverlayGraph::new(3, 20, Strategy::Defect);
        assert_eq!(g.add_link(NodeId(0), NodeId(0), &mut rng()), LinkResult::RejectedSelf);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn full_endpoint_evicts_one_existing_link() {
        let mut g = OverlayGraph::new(22, 20, Strategy::Defect);
        let mut r = rng();
        for k in 1..=20 {
            g.add_link(NodeId(0), NodeId(k), &mut r);
        }
        assert_eq!(g.node(NodeId(0)).degree(), 20);
        assert_eq!(g.add_link(NodeId(0), NodeId(21), &mut r), LinkResult::Added);
        assert_eq!(g.node(NodeId(0)).degree(), 20);
        assert!(g.is_linked(NodeId(0), NodeId(21)));
        let evicted: Vec<u32> = (1..=20).filter(|&k| !g.is_linked(NodeId(0), NodeId(k))).collect();
        assert_eq!(evicted.len(), 1);
        assert_eq!(g.node(NodeId(evicted[0])).degree(), 0);
        g.validate().unwrap();
    }

    #[test]
    fn both_full_endpoints_evict() {
        let mut g = OverlayGraph::new(6, 2, Strategy::Defect);
        let mut r = rng();
        g.add_link(NodeId(0), NodeId(2), &mut r);
        g.add_link(NodeId(0), NodeId(3), &mut r);
        g.add_link(NodeId(1), NodeId(4), &mut r);
        g.add_link(NodeId(1), NodeId(5), &mut r);
        assert_eq!(g.add_link(NodeId(0), NodeId(1), &mut r), LinkResult::Added);
        assert_eq!(g.node(NodeId(0)).degree(), 2);
        assert_eq!(g.node(NodeId(1)).degree(), 2);
        assert_eq!(g.edge_count(), 3);
        g.validate().unwrap();
    }

    #[test]
    fn drop_link_cases() {
        let mut g = OverlayGraph::new(3, 20, Strategy::Defect);
        g.add_link(NodeId(0), NodeId(1), &mut rng());
        assert!(!g.drop_link(NodeId(0), NodeId(2)));
        assert!(g.drop_link(NodeId(1), NodeId(0)));
        assert_eq!(g.node(NodeId(0)).degree(), 0);
        assert_eq!(g.node(NodeId(1)).degree(), 0);
        g.validate().unwrap();
    }

    #[test]
    fn random_neighbor_cases() {
        let mut g = OverlayGraph::new(10, 20, Strategy::Defect);
        let mut r = rng();
        assert_eq!(g.random_neighbor(NodeId(0), &mut r), None);
        g.add_link(NodeId(0), NodeId(7), &mut r);
        assert_eq!(g.random_neighbor(NodeId(0), &mut r), Some(NodeId(7)));
    }

    #[test]
    fn random_neighbor_is_uniform() {
        let mut g = OverlayGraph::new(5, 20, Strategy::Defect);
        let mut r = rng();
        for k in 1..=4 {
            g.add_link(NodeId(0), NodeId(k), &mut r);
        }
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[g.random_neighbor(NodeId(0), &mut r).unwrap().index()] += 1;
        }
        let chi2: f64 = counts[1..].iter().map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0).sum();
        // 3 dof, p = 0.001
        assert!(chi2 < 16.27, "chi2 {chi2}, counts {counts:?}");
        for &c in &counts[1..] {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.05);
        }
    }

    #[test]
    fn strategy_flip_is_involution() {
        assert_eq!(Strategy::Cooperate.flipped(), Strategy::Defect);
        assert_eq!(Strategy::Defect.flipped(), Strategy::Cooperate);
        assert_eq!(Strategy::Defect.flipped().flipped(), Strategy::Defect);
    }

    #[test]
    fn export_formats() {
        let mut g = OverlayGraph::new(3, 20, Strategy::Defect);
        g.add_link(NodeId(2), NodeId(0), &mut rng());
        g.set_strategy(NodeId(1), Strategy::Cooperate);
        let mut edges = Vec::new();
        g.write_edge_list(&mut edges).unwrap();
        assert_eq!(String::from_utf8(edges).unwrap(), "0 2\n");
        let mut nodes = Vec::new();
        g.write_node_states(&mut nodes).unwrap();
        assert_eq!(String::from_utf8(nodes).unwrap(), "0 D\n1 C\n2 D\n");
    }

    #[derive(Debug, Clone)]
    enum Op {
        Add(u32, u32),
        Drop(u32, u32),
        Clear(u32),
    }

    fn op(n: u32) -> impl proptest::strategy::Strategy<Value = Op> {
        prop_oneof![
            4 => (0..n, 0..n).prop_map(|(a, b)| Op::Add(a, b)),
            2 => (0..n, 0..n).prop_map(|(a, b)| Op::Drop(a, b)),
            1 => (0..n).prop_map(Op::Clear),
        ]
    }

    proptest! {
        #[test]
        fn invariants_hold_under_random_ops(
            cap in 1usize..6,
            ops in proptest::collection::vec(op(12), 0..300),
            seed in any::<u64>(),
        ) {
            let mut g = OverlayGraph::new(12, cap, Strategy::Defect);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            for o in ops {
                match o {
                    Op::Add(a, b) => { g.add_link(NodeId(a), NodeId(b), &mut r); }
                    Op::Drop(a, b) => { g.drop_link(NodeId(a), NodeId(b)); }
                    Op::Clear(a) => g.clear_links(NodeId(a)),
                }
                prop_assert!(g.validate().is_ok(), "{:?}", g.validate());
            }
            let degree_sum: usize = g.nodes().map(|(_, s)| s.degree()).sum();
            prop_assert_eq!(degree_sum % 2, 0);
        }
    }
}
