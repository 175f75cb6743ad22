//! Population-wide random peer sampling, independent of the overlay.
//!
//! Two backends sit behind [`PeerSampler`]: an exact oracle that draws
//! uniformly from everyone, and a NEWSCAST-style gossip sampler where each
//! node keeps a small cache of timestamped descriptors and periodically swaps
//! caches with a random cache entry.

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Result, SimError};
use crate::graph::NodeId;

pub const DEFAULT_CACHE_SIZE: usize = 20;

pub trait PeerSampler {
    /// A node other than `caller`.
    fn random_node<R: Rng + ?Sized>(&self, caller: NodeId, rng: &mut R) -> Result<NodeId>;

    /// Called once at the start of every simulation cycle.
    fn on_cycle<R: Rng + ?Sized>(&mut self, _cycle: u64, _rng: &mut R) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplerKind {
    #[default]
    Oracle,
    Gossip,
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::Oracle => "oracle",
            SamplerKind::Gossip => "gossip",
        })
    }
}

impl FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(SamplerKind::Oracle),
            "gossip" => Ok(SamplerKind::Gossip),
            other => Err(format!("unknown sampler `{other}` (expected oracle|gossip)")),
        }
    }
}

/// Uniform over every node except the caller.
#[derive(Clone, Copy, Debug)]
pub struct OracleSampler {
    n: usize,
}

impl OracleSampler {
    pub fn new(n: usize) -> Self {
        OracleSampler { n }
    }
}

impl PeerSampler for OracleSampler {
    fn random_node<R: Rng + ?Sized>(&self, caller: NodeId, rng: &mut R) -> Result<NodeId> {
        if self.n < 2 {
            return Err(SimError::NoPeerAvailable(self.n));
        }
        let k = rng.gen_range(0..self.n - 1);
        Ok(NodeId::from(if k >= caller.index() { k + 1 } else { k }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeerDescriptor {
    pub node: NodeId,
    /// Cycle at which the descriptor was created by its node.
    pub timestamp: u64,
}

/// Keeps the `cache_size` freshest distinct descriptors, never `owner`.
/// Ties on freshness go to the lower node id.
pub fn merge_descriptors<I>(owner: NodeId, candidates: I, cache_size: usize) -> Vec<PeerDescriptor>
where
    I: IntoIterator<Item = PeerDescriptor>,
{
    let mut all: Vec<PeerDescriptor> = candidates.into_iter().filter(|d| d.node != owner).collect();
    all.sort_unstable_by_key(|d| (d.node, Reverse(d.timestamp)));
    all.dedup_by_key(|d| d.node);
    all.sort_unstable_by_key(|d| (Reverse(d.timestamp), d.node));
    all.truncate(cache_size);
    all
}

#[derive(Clone, Debug)]
pub struct GossipSampler {
    caches: Vec<Vec<PeerDescriptor>>,
    cache_size: usize,
}

impl GossipSampler {
    /// Fills every cache with distinct random peers stamped at cycle 0.
    pub fn bootstrap<R: Rng + ?Sized>(n: usize, cache_size: usize, rng: &mut R) -> Self {
        let fill = cache_size.min(n.saturating_sub(1));
        let caches = (0..n)
            .map(|i| {
                rand::seq::index::sample(rng, n - 1, fill)
                    .into_iter()
                    .map(|k| PeerDescriptor { node: NodeId::from(if k >= i { k + 1 } else { k }), timestamp: 0 })
                    .collect()
            })
            .collect();
        GossipSampler { caches, cache_size }
    }

    /// Starts from explicit caches; each is normalized through
    /// [`merge_descriptors`].
    pub fn from_caches(caches: Vec<Vec<PeerDescriptor>>, cache_size: usize) -> Self {
        let caches =
            caches.into_iter().enumerate().map(|(i, c)| merge_descriptors(NodeId::from(i), c, cache_size)).collect();
        GossipSampler { caches, cache_size }
    }

    pub fn len(&self) -> usize {
        self.caches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }

    pub fn cache_size(&self) -> usize {
        self.cache_size
    }

    pub fn cache(&self, i: NodeId) -> &[PeerDescriptor] {
        &self.caches[i.index()]
    }

    /// Every node, in random order, swaps caches with one uniformly chosen
    /// cache entry. Both sides add a fresh self-descriptor to the exchange.
    pub fn gossip_round<R: Rng + ?Sized>(&mut self, current_cycle: u64, rng: &mut R) {
        let mut order: Vec<usize> = (0..self.caches.len()).collect();
        order.shuffle(rng);
        let mut pool = Vec::with_capacity(2 * self.cache_size + 2);
        for i in order {
            let Some(partner) = self.caches[i].choose(rng).map(|d| d.node) else {
                continue;
            };
            let (me, other) = (NodeId::from(i), partner);
            pool.clear();
            pool.extend_from_slice(&self.caches[i]);
            pool.extend_from_slice(&self.caches[other.index()]);
            pool.push(PeerDescriptor { node: me, timestamp: current_cycle });
            pool.push(PeerDescriptor { node: other, timestamp: current_cycle });
            self.caches[i] = merge_descriptors(me, pool.iter().copied(), self.cache_size);
            self.caches[other.index()] = merge_descriptors(other, pool.iter().copied(), self.cache_size);
        }
    }

    /// Checks the cache invariants: size cap, no self entries, one entry per
    /// node, no timestamps from the future.
    pub fn validate(&self, current_cycle: u64) -> Result<(), String> {
        for (i, cache) in self.caches.iter().enumerate() {
            if cache.len() > self.cache_size {
                return Err(format!("cache {i} holds {} > {}", cache.len(), self.cache_size));
            }
            for (pos, d) in cache.iter().enumerate() {
                if d.node.index() == i {
                    return Err(format!("cache {i} contains its owner"));
                }
                if cache[..pos].iter().any(|e| e.node == d.node) {
                    return Err(format!("cache {i} lists {} twice", d.node));
                }
                if d.timestamp > current_cycle {
                    return Err(format!("cache {i} has descriptor from cycle {}", d.timestamp));
                }
            }
        }
        Ok(())
    }
}

impl PeerSampler for GossipSampler {
    fn random_node<R: Rng + ?Sized>(&self, caller: NodeId, rng: &mut R) -> Result<NodeId> {
        self.caches[caller.index()].choose(rng).map(|d| d.node).ok_or(SimError::NoPeerAvailable(self.caches.len()))
    }

    fn on_cycle<R: Rng + ?Sized>(&mut self, cycle: u64, rng: &mut R) {
        self.gossip_round(cycle, rng);
    }
}

/// Runtime choice between the two backends.
#[derive(Clone, Debug)]
pub enum Sampler {
    Oracle(OracleSampler),
    Gossip(GossipSampler),
}

impl Sampler {
    pub fn new<R: Rng + ?Sized>(kind: SamplerKind, n: usize, cache_size: usize, rng: &mut R) -> Self {
        match kind {
            SamplerKind::Oracle => Sampler::Oracle(OracleSampler::new(n)),
            SamplerKind::Gossip => Sampler::Gossip(GossipSampler::bootstrap(n, cache_size, rng)),
        }
    }
}

impl PeerSampler for Sampler {
    fn random_node<R: Rng + ?Sized>(&self, caller: NodeId, rng: &mut R) -> Result<NodeId> {
        match self {
            Sampler::Oracle(s) => s.random_node(caller, rng),
            Sampler::Gossip(s) => s.random_node(caller, rng),
        }
    }

    fn on_cycle<R: Rng + ?Sized>(&mut self, cycle: u64, rng: &mut R) {
        match self {
            Sampler::Oracle(s) => s.on_cycle(cycle, rng),
            Sampler::Gossip(s) => s.on_cycle(cycle, rng),
        }
    }
}
