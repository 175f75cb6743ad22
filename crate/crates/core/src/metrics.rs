//! Measurements over immutable graph snapshots.
//!
//! Everything here is a pure function of a [`GraphSnapshot`]. Path-based
//! measures switch from exact all-pairs computation to source or pair
//! sampling above configurable size limits; sampled values are flagged in
//! [`EstimatorFlags`].
//!
//! A pair of nodes is *cooperatively connected* when the two are linked
//! directly or joined by a path whose intermediate nodes all cooperate. The
//! endpoints themselves may defect.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::graph::OverlayGraph;
use crate::union_find::UnionFind;

/// Compressed adjacency plus strategies, detached from the live overlay.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSnapshot {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    cooperator: Vec<bool>,
    max_view_size: usize,
}

impl GraphSnapshot {
    pub fn from_graph(graph: &OverlayGraph) -> Self {
        let mut offsets = Vec::with_capacity(graph.len() + 1);
        let mut targets = Vec::with_capacity(2 * graph.edge_count());
        let mut cooperator = Vec::with_capacity(graph.len());
        offsets.push(0);
        for (_, s) in graph.nodes() {
            let start = targets.len();
            targets.extend(s.view().iter().map(|k| k.0));
            targets[start..].sort_unstable();
            offsets.push(targets.len());
            cooperator.push(s.strategy.is_cooperator());
        }
        GraphSnapshot { offsets, targets, cooperator, max_view_size: graph.max_view_size() }
    }

    /// Builds a snapshot from an undirected edge list. Self-loops and
    /// repeated edges are ignored. The degree cap is not enforced.
    pub fn from_edges(cooperator: Vec<bool>, edges: &[(usize, usize)], max_view_size: usize) -> Self {
        let n = cooperator.len();
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range");
            if a != b {
                adj[a].push(b as u32);
                adj[b].push(a as u32);
            }
        }
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        for mut nbrs in adj {
            nbrs.sort_unstable();
            nbrs.dedup();
            targets.extend(nbrs);
            offsets.push(targets.len());
        }
        GraphSnapshot { offsets, targets, cooperator, max_view_size }
    }

    pub fn len(&self) -> usize {
        self.cooperator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cooperator.is_empty()
    }

    pub fn max_view_size(&self) -> usize {
        self.max_view_size
    }

    /// Sorted neighbor ids.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    #[inline]
    pub fn is_cooperator(&self, i: usize) -> bool {
        self.cooperator[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |a| {
            self.neighbors(a).iter().map(|&b| b as usize).filter(move |&b| a < b).map(move |b| (a, b))
        })
    }
}

/// Size limits above which path measures are sampled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsOptions {
    pub exact_ccp_limit: usize,
    pub ccp_pair_samples: usize,
    pub exact_path_limit: usize,
    pub path_source_samples: usize,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            exact_ccp_limit: 4000,
            ccp_pair_samples: 100_000,
            exact_path_limit: 4000,
            path_source_samples: 500,
        }
    }
}

/// A value and whether it came from sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub sampled: bool,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Estimate { value, sampled: false }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EstimatorFlags {
    pub ccp_sampled: bool,
    pub ccpl_sampled: bool,
    pub avg_path_sampled: bool,
}

/// Which measures a snapshot carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MetricsDetail {
    /// Everything.
    #[default]
    Full,
    /// Linear-time measures only; CCP, CCPL and path length are left
    /// undefined.
    Basic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSnapshot {
    pub cycle: u64,
    pub coop_fraction: f64,
    pub ccp: Option<f64>,
    pub ccpl: Option<f64>,
    pub clustering: f64,
    pub avg_path_length: Option<f64>,
    pub gcc_size: usize,
    pub gcc_fraction: f64,
    pub max_degree_fraction: f64,
    pub zero_degree_fraction: f64,
    pub estimator_flags: EstimatorFlags,
}

impl MetricsSnapshot {
    pub fn compute<R: Rng + ?Sized>(
        cycle: u64,
        snap: &GraphSnapshot,
        detail: MetricsDetail,
        opts: &MetricsOptions,
        rng: &mut R,
    ) -> Self {
        let n = snap.len().max(1) as f64;
        let hist = degree_histogram(snap);
        let (gcc_size, gcc_fraction) = largest_component(snap);
        let mut flags = EstimatorFlags::default();
        let (ccp_v, ccpl_v, apl_v) = match detail {
            MetricsDetail::Basic => (None, None, None),
            MetricsDetail::Full => {
                let c = ccp(snap, opts, rng);
                flags.ccp_sampled = c.sampled;
                let l = ccpl(snap, opts, rng);
                flags.ccpl_sampled = l.is_some_and(|e| e.sampled);
                let a = avg_path_length(snap, opts, rng);
                flags.avg_path_sampled = a.is_some_and(|e| e.sampled);
                (Some(c.value), l.map(|e| e.value), a.map(|e| e.value))
            }
        };
        MetricsSnapshot {
            cycle,
            coop_fraction: cooperation_fraction(snap),
            ccp: ccp_v,
            ccpl: ccpl_v,
            clustering: clustering_coefficient(snap),
            avg_path_length: apl_v,
            gcc_size,
            gcc_fraction,
            max_degree_fraction: hist.get(snap.max_view_size).copied().unwrap_or(0) as f64 / n,
            zero_degree_fraction: hist.first().copied().unwrap_or(0) as f64 / n,
            estimator_flags: flags,
        }
    }
}

pub fn cooperation_fraction(snap: &GraphSnapshot) -> f64 {
    if snap.is_empty() {
        return 0.0;
    }
    snap.cooperator.iter().filter(|&&c| c).count() as f64 / snap.len() as f64
}

/// Per-node sets of cooperator components a node can reach in one step
/// (a cooperator touches its own component only).
struct TouchSets {
    offsets: Vec<usize>,
    ids: Vec<u32>,
}

impl TouchSets {
    fn build(snap: &GraphSnapshot) -> Self {
        let n = snap.len();
        let mut uf = UnionFind::new(n);
        for (a, b) in snap.edges() {
            if snap.is_cooperator(a) && snap.is_cooperator(b) {
                uf.union(a, b);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut ids = Vec::new();
        offsets.push(0);
        for i in 0..n {
            let start = ids.len();
            if snap.is_cooperator(i) {
                ids.push(uf.find(i) as u32);
            } else {
                for &k in snap.neighbors(i) {
                    if snap.is_cooperator(k as usize) {
                        ids.push(uf.find(k as usize) as u32);
                    }
                }
                ids[start..].sort_unstable();
                let mut write = start;
                for read in start..ids.len() {
                    if write == start || ids[write - 1] != ids[read] {
                        ids[write] = ids[read];
                        write += 1;
                    }
                }
                ids.truncate(write);
            }
            offsets.push(ids.len());
        }
        TouchSets { offsets, ids }
    }

    fn get(&self, i: usize) -> &[u32] {
        &self.ids[self.offsets[i]..self.offsets[i + 1]]
    }

    fn connected(&self, snap: &GraphSnapshot, a: usize, b: usize) -> bool {
        sorted_intersect(self.get(a), self.get(b)) || snap.has_edge(a, b)
    }
}

fn sorted_intersect(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Fraction of unordered node pairs that are cooperatively connected.
pub fn ccp<R: Rng + ?Sized>(snap: &GraphSnapshot, opts: &MetricsOptions, rng: &mut R) -> Estimate {
    let n = snap.len();
    if n < 2 {
        return Estimate::exact(0.0);
    }
    let touch = TouchSets::build(snap);
    if n <= opts.exact_ccp_limit {
        let hits: u64 =
            (0..n).into_par_iter().map(|a| ((a + 1)..n).filter(|&b| touch.connected(snap, a, b)).count() as u64).sum();
        let pairs = (n as u64) * (n as u64 - 1) / 2;
        Estimate::exact(hits as f64 / pairs as f64)
    } else {
        let samples = opts.ccp_pair_samples.max(1);
        let mut hits = 0usize;
        for _ in 0..samples {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            if touch.connected(snap, a, b) {
                hits += 1;
            }
        }
        Estimate { value: hits as f64 / samples as f64, sampled: true }
    }
}

/// Breadth-first search from up to 64 sources at once, one bit per source.
/// With `restricted`, a node relays a source's wave only when it is a
/// cooperator or that source itself. Returns (sum of distances, number of
/// (source, target) pairs reached), sources excluded.
fn bfs_batch(snap: &GraphSnapshot, sources: &[usize], restricted: bool) -> (u64, u64) {
    debug_assert!(sources.len() <= 64);
    let n = snap.len();
    let mut visited = vec![0u64; n];
    let mut frontier = vec![0u64; n];
    let mut next = vec![0u64; n];
    let mut own = vec![0u64; n];
    for (b, &s) in sources.iter().enumerate() {
        visited[s] |= 1 << b;
        frontier[s] |= 1 << b;
        own[s] |= 1 << b;
    }
    let (mut sum, mut reached) = (0u64, 0u64);
    let mut level = 0u64;
    loop {
        level += 1;
        if restricted {
            for x in 0..n {
                if !snap.is_cooperator(x) {
                    frontier[x] &= own[x];
                }
            }
        }
        let mut grew = 0u64;
        for y in 0..n {
            let mut acc = 0u64;
            for &x in snap.neighbors(y) {
                acc |= frontier[x as usize];
            }
            let fresh = acc & !visited[y];
            next[y] = fresh;
            if fresh != 0 {
                visited[y] |= fresh;
                grew += u64::from(fresh.count_ones());
            }
        }
        if grew == 0 {
            break;
        }
        sum += grew * level;
        reached += grew;
        std::mem::swap(&mut frontier, &mut next);
    }
    (sum, reached)
}

/// Sums restricted-or-plain BFS totals over `sources`, in parallel batches.
fn bfs_totals(snap: &GraphSnapshot, sources: &[usize], restricted: bool) -> (u64, u64) {
    sources
        .par_chunks(64)
        .map(|batch| bfs_batch(snap, batch, restricted))
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Mean shortest cooperative-intermediate path length over cooperatively
/// connected pairs. `None` when no pair qualifies.
///
/// Above `exact_path_limit` nodes the mean is taken over all pairs rooted at
/// `path_source_samples` uniformly drawn sources.
pub fn ccpl<R: Rng + ?Sized>(snap: &GraphSnapshot, opts: &MetricsOptions, rng: &mut R) -> Option<Estimate> {
    let n = snap.len();
    if n < 2 {
        return None;
    }
    let (sources, sampled) = if n <= opts.exact_path_limit {
        ((0..n).collect::<Vec<_>>(), false)
    } else {
        (index::sample(rng, n, opts.path_source_samples.clamp(1, n)).into_vec(), true)
    };
    let (sum, count) = bfs_totals(snap, &sources, true);
    (count > 0).then(|| Estimate { value: sum as f64 / count as f64, sampled })
}

/// Members of the largest connected component, ascending. Ties go to the
/// component holding the lowest node id.
pub fn largest_component_members(snap: &GraphSnapshot) -> Vec<usize> {
    let n = snap.len();
    let mut uf = UnionFind::new(n);
    for (a, b) in snap.edges() {
        uf.union(a, b);
    }
    let mut best = (0usize, usize::MAX);
    for i in 0..n {
        let size = uf.component_size(i);
        if size > best.0 {
            best = (size, uf.find(i));
        }
    }
    (0..n).filter(|&i| uf.find(i) == best.1).collect()
}

/// Size of the largest component and its share of the population.
/// Isolated nodes count as singleton components.
pub fn largest_component(snap: &GraphSnapshot) -> (usize, f64) {
    if snap.is_empty() {
        return (0, 0.0);
    }
    let size = largest_component_members(snap).len();
    (size, size as f64 / snap.len() as f64)
}

/// Mean shortest-path distance inside the largest component. `None` when
/// that component has fewer than two nodes.
pub fn avg_path_length<R: Rng + ?Sized>(snap: &GraphSnapshot, opts: &MetricsOptions, rng: &mut R) -> Option<Estimate> {
    let members = largest_component_members(snap);
    let g = members.len();
    if g < 2 {
        return None;
    }
    let (sources, sampled) = if g <= opts.exact_path_limit {
        (members, false)
    } else {
        let picks = index::sample(rng, g, opts.path_source_samples.clamp(1, g));
        (picks.into_iter().map(|k| members[k]).collect(), true)
    };
    let (sum, count) = bfs_totals(snap, &sources, false);
    debug_assert_eq!(count, sources.len() as u64 * (g as u64 - 1));
    Some(Estimate { value: sum as f64 / count as f64, sampled })
}

/// Watts–Strogatz clustering: mean local coefficient, with degree < 2
/// counted as 0.
pub fn clustering_coefficient(snap: &GraphSnapshot) -> f64 {
    let n = snap.len();
    if n == 0 {
        return 0.0;
    }
    let mut mark = vec![false; n];
    let mut total = 0.0;
    for v in 0..n {
        let nbrs = snap.neighbors(v);
        let d = nbrs.len();
        if d < 2 {
            continue;
        }
        for &u in nbrs {
            mark[u as usize] = true;
        }
        let mut twice_triangles = 0usize;
        for &u in nbrs {
            twice_triangles += snap.neighbors(u as usize).iter().filter(|&&w| mark[w as usize]).count();
        }
        for &u in nbrs {
            mark[u as usize] = false;
        }
        total += (twice_triangles / 2) as f64 / (d * (d - 1) / 2) as f64;
    }
    total / n as f64
}

/// Node counts by degree, indices `0..=max(max_view_size, max degree)`.
pub fn degree_histogram(snap: &GraphSnapshot) -> Vec<usize> {
    let top = (0..snap.len()).map(|i| snap.degree(i)).max().unwrap_or(0).max(snap.max_view_size);
    let mut hist = vec![0; top + 1];
    for i in 0..snap.len() {
        hist[snap.degree(i)] += 1;
    }
    hist
}

/// Reference CCP: one early-exit BFS per pair, entering only cooperators
/// as intermediates. Quadratic in pairs; meant for small graphs.
pub fn ccp_bruteforce(snap: &GraphSnapshot) -> f64 {
    let n = snap.len();
    if n < 2 {
        return 0.0;
    }
    let mut hits = 0usize;
    for a in 0..n {
        for b in (a + 1)..n {
            if pair_distance(snap, a, b).is_some() {
                hits += 1;
            }
        }
    }
    hits as f64 / (n * (n - 1) / 2) as f64
}

/// Reference CCPL over the same per-pair searches as [`ccp_bruteforce`].
pub fn ccpl_bruteforce(snap: &GraphSnapshot) -> Option<f64> {
    let n = snap.len();
    let (mut sum, mut count) = (0usize, 0usize);
    for a in 0..n {
        for b in (a + 1)..n {
            if let Some(d) = pair_distance(snap, a, b) {
                sum += d;
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum as f64 / count as f64)
}

/// Shortest `a`–`b` path length whose interior is all cooperators.
fn pair_distance(snap: &GraphSnapshot, a: usize, b: usize) -> Option<usize> {
    let mut seen = vec![false; snap.len()];
    let mut frontier = vec![a];
    seen[a] = true;
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for &x in &frontier {
            for &y in snap.neighbors(x) {
                let y = y as usize;
                if y == b {
                    return Some(depth);
                }
                if !seen[y] && snap.is_cooperator(y) {
                    seen[y] = true;
                    next.push(y);
                }
            }
        }
        frontier = next;
    }
    None
}
