//! Node-compromise adversary and interception probability.
//!
//! The adversary owns a set of compromised relay nodes and passively copies
//! every share that crosses one of them. It knows the bundle metadata and
//! which share rides which path; only the key and payloads are secret.
//! Interception succeeds when the copied shares would let it rebuild the
//! message.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{BundleMeta, EncodingPolicy, MessageId};
use crate::topology::{path_compromise_prob, NodeId, PathSet, Topology, TopologyError};

/// Largest path count [`analytic_interception`] will enumerate.
pub const MAX_ANALYTIC_PATHS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("endpoint {0} cannot be compromised")]
    EndpointCompromise(NodeId),
    #[error("compromise probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error(transparent)]
    Disjointness(TopologyError),
    #[error("{0} paths exceed the exact-enumeration limit of {MAX_ANALYTIC_PATHS}")]
    TooManyPaths(usize),
    #[error("policy produces {shares} shares but {paths} paths were given")]
    PolicyMismatch { shares: usize, paths: usize },
    #[error("at least one trial is required")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompromiseMode {
    /// Every non-endpoint node independently with the same probability.
    Uniform(f64),
    /// Every non-endpoint node independently with its own `p_compromise`.
    PerNode,
    /// Exactly these nodes.
    Fixed(BTreeSet<NodeId>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryModel {
    pub mode: CompromiseMode,
    /// Whether the adversary also holds the keystream key.
    pub key_known: bool,
}

impl AdversaryModel {
    pub fn uniform(p: f64, key_known: bool) -> Self {
        AdversaryModel {
            mode: CompromiseMode::Uniform(p),
            key_known,
        }
    }

    pub fn fixed<I, N>(nodes: I, key_known: bool) -> Self
    where
        I: IntoIterator<Item = N>,
        N: Into<NodeId>,
    {
        AdversaryModel {
            mode: CompromiseMode::Fixed(nodes.into_iter().map(Into::into).collect()),
            key_known,
        }
    }
}

/// Draws the compromised node set. Random modes consume one uniform draw per
/// non-endpoint node, in node-id order.
pub fn realize<R: Rng + ?Sized>(
    model: &AdversaryModel,
    topo: &Topology,
    source: &NodeId,
    dest: &NodeId,
    rng: &mut R,
) -> Result<BTreeSet<NodeId>, AdversaryError> {
    let relays = topo.nodes().filter(|n| &n.id != source && &n.id != dest);
    match &model.mode {
        CompromiseMode::Uniform(p) => {
            if !(0.0..=1.0).contains(p) {
                return Err(AdversaryError::InvalidProbability(*p));
            }
            Ok(relays
                .filter(|_| rng.gen::<f64>() < *p)
                .map(|n| n.id.clone())
                .collect())
        }
        CompromiseMode::PerNode => Ok(relays
            .filter(|n| rng.gen::<f64>() < n.p_compromise)
            .map(|n| n.id.clone())
            .collect()),
        CompromiseMode::Fixed(nodes) => {
            if let Some(endpoint) = nodes.iter().find(|n| *n == source || *n == dest) {
                return Err(AdversaryError::EndpointCompromise(endpoint.clone()));
            }
            Ok(nodes.clone())
        }
    }
}

/// Shares one message's adversary has copied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capture {
    pub meta: BundleMeta,
    pub indices: BTreeSet<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptureLog {
    entries: BTreeMap<MessageId, Capture>,
}

impl CaptureLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a share seen at `node` if that node is compromised. Returns
    /// whether the share index was new for this message.
    pub fn observe(
        &mut self,
        compromised: &BTreeSet<NodeId>,
        node: &NodeId,
        meta: &BundleMeta,
        share_index: u8,
    ) -> bool {
        if !compromised.contains(node) {
            return false;
        }
        self.entries
            .entry(meta.message_id)
            .or_insert_with(|| Capture {
                meta: *meta,
                indices: BTreeSet::new(),
            })
            .indices
            .insert(share_index)
    }

    pub fn capture(&self, id: &MessageId) -> Option<&Capture> {
        self.entries.get(id)
    }

    pub fn captured_count(&self, id: &MessageId) -> usize {
        self.entries.get(id).map_or(0, |c| c.indices.len())
    }
}

/// Whether captured share indices suffice to rebuild the message.
///
/// Threshold bundles fall to any `t` shares. Chain bundles need every share
/// and the key.
pub fn can_reconstruct(captured: &BTreeSet<u8>, policy: &EncodingPolicy, key_known: bool) -> bool {
    match policy {
        EncodingPolicy::Threshold(p) => captured.len() >= p.threshold(),
        EncodingPolicy::Chain { k } => key_known && (1..=*k).all(|i| captured.contains(&i)),
    }
}

/// [`can_reconstruct`] for a capture of `count` distinct valid indices.
fn suffices(count: usize, policy: &EncodingPolicy, key_known: bool) -> bool {
    match policy {
        EncodingPolicy::Threshold(p) => count >= p.threshold(),
        EncodingPolicy::Chain { k } => key_known && count == *k as usize,
    }
}

/// Exact interception probability with one share per node-disjoint path.
///
/// Path `i` leaks its share with probability `q_i` (see
/// [`path_compromise_prob`]), independently of the others. Sums the
/// probability of every leaked subset that satisfies [`can_reconstruct`].
pub fn analytic_interception(
    pathset: &PathSet,
    policy: &EncodingPolicy,
    topo: &Topology,
    key_known: bool,
) -> Result<f64, AdversaryError> {
    pathset
        .check_disjoint()
        .map_err(AdversaryError::Disjointness)?;
    let m = pathset.len();
    if m > MAX_ANALYTIC_PATHS {
        return Err(AdversaryError::TooManyPaths(m));
    }
    if policy.share_count() != m {
        return Err(AdversaryError::PolicyMismatch {
            shares: policy.share_count(),
            paths: m,
        });
    }
    let leak: Vec<f64> = pathset
        .iter()
        .map(|p| path_compromise_prob(p, topo))
        .collect();
    let mut total = 0.0;
    for mask in 0u32..(1 << m) {
        if !suffices(mask.count_ones() as usize, policy, key_known) {
            continue;
        }
        total += leak
            .iter()
            .enumerate()
            .map(|(i, &q)| if mask & (1 << i) != 0 { q } else { 1.0 - q })
            .product::<f64>();
    }
    Ok(total)
}

/// Monte Carlo estimate with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub half_width: f64,
    pub trials: u64,
}

/// Estimates the interception probability by sampling node compromise.
///
/// Share `i` rides path `(i - 1) mod m`, so paths may be reused or overlap.
/// Trial `j` draws from its own ChaCha stream `(seed, j)`, one uniform per
/// distinct intermediate node in id order; the estimate does not depend on
/// how trials are scheduled across threads.
pub fn mc_interception(
    pathset: &PathSet,
    policy: &EncodingPolicy,
    topo: &Topology,
    key_known: bool,
    trials: u64,
    seed: u64,
) -> Result<McEstimate, AdversaryError> {
    if trials == 0 {
        return Err(AdversaryError::NoTrials);
    }
    let relays: Vec<&NodeId> = pathset
        .iter()
        .flat_map(|p| p.intermediates())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let probability: Vec<f64> = relays
        .iter()
        .map(|id| topo.node(id).map_or(0.0, |n| n.p_compromise))
        .collect();
    let slot: BTreeMap<&NodeId, usize> =
        relays.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let path_relays: Vec<Vec<usize>> = pathset
        .iter()
        .map(|p| p.intermediates().iter().map(|id| slot[id]).collect())
        .collect();
    let m = pathset.len();
    let shares = policy.share_count();

    let hits = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            if m == 0 {
                return false;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let compromised: Vec<bool> =
                probability.iter().map(|&p| rng.gen::<f64>() < p).collect();
            let captured = (0..shares)
                .filter(|i| path_relays[i % m].iter().any(|&r| compromised[r]))
                .count();
            suffices(captured, policy, key_known)
        })
        .count() as u64;

    let estimate = hits as f64 / trials as f64;
    let half_width = 1.96 * (estimate * (1.0 - estimate) / trials as f64).sqrt();
    Ok(McEstimate {
        estimate,
        half_width,
        trials,
    })
}
