//! Infrastructure network model (BSS/ESS) and node-disjoint path search.
//!
//! Nodes are stations (`STA`) or access points (`AP`), each with an
//! independent probability of being compromised. Links are wireless or
//! wired; wired links form the ESS distribution system and may only join
//! access points.
//!
//! The security cost of a node is `-ln(1 - p)`, so the cost of a path is
//! additive over its intermediate nodes and `1 - exp(-cost)` is the
//! probability that at least one of them is compromised.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Relative tolerance under which two path costs count as equal.
pub const COST_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),
    #[error("wired link {0} -- {1} must join two access points")]
    MediumViolation(String, String),
    #[error("self-loop on {0:?}")]
    SelfLoop(String),
    #[error("duplicate link {0} -- {1}")]
    DuplicateLink(String, String),
    #[error("compromise probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("source and destination are the same node")]
    DegenerateQuery,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("paths are not node-disjoint: {0}")]
    Disjointness(String),
}

/// A topology error tied to the input line that caused it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {error}")]
pub struct ParseError {
    pub line: usize,
    pub error: TopologyError,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Station,
    AccessPoint,
}

impl NodeKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NodeKind::Station => "STA",
            NodeKind::AccessPoint => "AP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub p_compromise: f64,
}

impl Node {
    /// Security cost `-ln(1 - p)`.
    pub fn cost(&self) -> f64 {
        node_cost(self.p_compromise)
    }
}

pub fn node_cost(p_compromise: f64) -> f64 {
    -(-p_compromise).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Medium {
    Wireless,
    Wired,
}

impl Medium {
    pub fn keyword(self) -> &'static str {
        match self {
            Medium::Wireless => "wireless",
            Medium::Wired => "wired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkState {
    Idle,
    Busy,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub medium: Medium,
    pub state: LinkState,
}

/// Unordered node pair, stored smaller id first.
fn link_key(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Immutable-by-convention network snapshot. Iteration is always in node-id order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Topology {
    nodes: BTreeMap<NodeId, Node>,
    links: BTreeMap<(NodeId, NodeId), Link>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(
        &mut self,
        id: impl Into<NodeId>,
        kind: NodeKind,
        p_compromise: f64,
    ) -> Result<(), TopologyError> {
        let id = id.into();
        if !(0.0..1.0).contains(&p_compromise) {
            return Err(TopologyError::InvalidProbability(p_compromise));
        }
        if self.nodes.contains_key(&id) {
            return Err(TopologyError::DuplicateNode(id.0));
        }
        self.adjacency.insert(id.clone(), BTreeSet::new());
        self.nodes.insert(
            id.clone(),
            Node {
                id,
                kind,
                p_compromise,
            },
        );
        Ok(())
    }

    pub fn add_link(
        &mut self,
        a: impl Into<NodeId>,
        b: impl Into<NodeId>,
        medium: Medium,
    ) -> Result<(), TopologyError> {
        let (a, b) = (a.into(), b.into());
        let kind_a = self.require(&a)?.kind;
        let kind_b = self.require(&b)?.kind;
        if a == b {
            return Err(TopologyError::SelfLoop(a.0));
        }
        if medium == Medium::Wired
            && (kind_a != NodeKind::AccessPoint || kind_b != NodeKind::AccessPoint)
        {
            return Err(TopologyError::MediumViolation(a.0, b.0));
        }
        let key = link_key(&a, &b);
        if self.links.contains_key(&key) {
            return Err(TopologyError::DuplicateLink(key.0 .0, key.1 .0));
        }
        self.links.insert(
            key,
            Link {
                medium,
                state: LinkState::Idle,
            },
        );
        self.adjacency
            .get_mut(&a)
            .expect("checked")
            .insert(b.clone());
        self.adjacency.get_mut(&b).expect("checked").insert(a);
        Ok(())
    }

    fn require(&self, id: &NodeId) -> Result<&Node, TopologyError> {
        self.nodes
            .get(id)
            .ok_or_else(|| TopologyError::UnknownNode(id.0.clone()))
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Links as `(a, b, link)` with `a < b`.
    pub fn links(&self) -> impl Iterator<Item = (&NodeId, &NodeId, &Link)> {
        self.links.iter().map(|((a, b), l)| (a, b, l))
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, a: &NodeId, b: &NodeId) -> Option<&Link> {
        self.links.get(&link_key(a, b))
    }

    pub fn set_link_state(
        &mut self,
        a: &NodeId,
        b: &NodeId,
        state: LinkState,
    ) -> Result<(), TopologyError> {
        match self.links.get_mut(&link_key(a, b)) {
            Some(link) => {
                link.state = state;
                Ok(())
            }
            None => Err(TopologyError::InvalidPath(format!("no link {a} -- {b}"))),
        }
    }

    /// All neighbors in id order, regardless of link state.
    pub fn neighbors<'a>(&'a self, id: &NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.adjacency.get(id).into_iter().flatten()
    }

    /// Copy with every node's compromise probability replaced by `p`.
    pub fn with_uniform_compromise(&self, p: f64) -> Result<Topology, TopologyError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TopologyError::InvalidProbability(p));
        }
        let mut topo = self.clone();
        for node in topo.nodes.values_mut() {
            node.p_compromise = p;
        }
        Ok(topo)
    }

    /// Sub-topology holding only the nodes and consecutive-node links of `routes`.
    /// Link media are copied and all links start idle.
    pub fn restricted_to(&self, routes: &[Vec<NodeId>]) -> Result<Topology, TopologyError> {
        let mut sub = Topology::new();
        for id in routes.iter().flatten() {
            if !sub.contains(id) {
                let node = self.require(id)?;
                sub.add_node(id.clone(), node.kind, node.p_compromise)?;
            }
        }
        for route in routes {
            for hop in route.windows(2) {
                let link = self.link(&hop[0], &hop[1]).ok_or_else(|| {
                    TopologyError::InvalidPath(format!("no link {} -- {}", hop[0], hop[1]))
                })?;
                if sub.link(&hop[0], &hop[1]).is_none() {
                    sub.add_link(hop[0].clone(), hop[1].clone(), link.medium)?;
                }
            }
        }
        Ok(sub)
    }

    /// Renders the topology in the text grammar accepted by [`parse_topology`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for node in self.nodes.values() {
            out.push_str(&format!(
                "node {} {} {}\n",
                node.id,
                node.kind.keyword(),
                node.p_compromise
            ));
        }
        for ((a, b), link) in &self.links {
            out.push_str(&format!("link {a} {b} {}\n", link.medium.keyword()));
        }
        out
    }
}

/// Parses the line-oriented topology grammar:
///
/// ```text
/// # comment
/// node <id> <STA|AP> [p_compromise]
/// link <id> <id> <wireless|wired>
/// ```
///
/// Nodes must be declared before links that use them.
pub fn parse_topology(text: &str) -> Result<Topology, ParseError> {
    let mut topo = Topology::new();
    for (number, raw) in text.lines().enumerate() {
        let line = number + 1;
        let at = |error| ParseError { line, error };
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["node", id, kind, rest @ ..] if rest.len() <= 1 => {
                let kind = match *kind {
                    "STA" => NodeKind::Station,
                    "AP" => NodeKind::AccessPoint,
                    other => {
                        return Err(at(TopologyError::Syntax(format!(
                            "node kind must be STA or AP, got {other:?}"
                        ))))
                    }
                };
                let p = match rest.first() {
                    None => 0.0,
                    Some(text) => text.parse::<f64>().map_err(|_| {
                        at(TopologyError::Syntax(format!("bad probability {text:?}")))
                    })?,
                };
                topo.add_node(*id, kind, p).map_err(at)?;
            }
            ["link", a, b, medium] => {
                let medium = match *medium {
                    "wireless" => Medium::Wireless,
                    "wired" => Medium::Wired,
                    other => {
                        return Err(at(TopologyError::Syntax(format!(
                            "link medium must be wireless or wired, got {other:?}"
                        ))))
                    }
                };
                topo.add_link(*a, *b, medium).map_err(at)?;
            }
            _ => return Err(at(TopologyError::Syntax(format!(
                "expected `node <id> <STA|AP> [p]` or `link <id> <id> <wireless|wired>`, got {:?}",
                content.trim()
            )))),
        }
    }
    Ok(topo)
}

/// A loop-free path with its security cost.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRec {
    pub nodes: Vec<NodeId>,
    pub cost: f64,
}

impl PathRec {
    /// Validates `nodes` against `topo` (known, linked, loop-free) and computes the cost.
    pub fn new(topo: &Topology, nodes: Vec<NodeId>) -> Result<PathRec, TopologyError> {
        if nodes.len() < 2 {
            return Err(TopologyError::InvalidPath("fewer than two nodes".into()));
        }
        let mut seen = BTreeSet::new();
        for id in &nodes {
            topo.require(id)?;
            if !seen.insert(id) {
                return Err(TopologyError::InvalidPath(format!("node {id} repeats")));
            }
        }
        if let Some(hop) = nodes.windows(2).find(|w| topo.link(&w[0], &w[1]).is_none()) {
            return Err(TopologyError::InvalidPath(format!(
                "no link {} -- {}",
                hop[0], hop[1]
            )));
        }
        let cost = nodes[1..nodes.len() - 1]
            .iter()
            .map(|id| topo.nodes[id].cost())
            .sum();
        Ok(PathRec { nodes, cost })
    }

    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn source(&self) -> &NodeId {
        &self.nodes[0]
    }

    pub fn destination(&self) -> &NodeId {
        self.nodes.last().expect("nonempty path")
    }

    pub fn intermediates(&self) -> &[NodeId] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    /// Cost, then hop count, then node-id sequence.
    pub fn rank_cmp(&self, other: &PathRec) -> Ordering {
        cost_cmp(self.cost, other.cost)
            .then(self.hops().cmp(&other.hops()))
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

fn costs_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= COST_EPSILON * a.abs().max(b.abs()).max(1.0)
}

fn cost_cmp(a: f64, b: f64) -> Ordering {
    if costs_equal(a, b) {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

impl fmt::Display for PathRec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.nodes.iter().map(NodeId::as_str).collect();
        f.write_str(&names.join(" -> "))
    }
}

/// Paths sharing a source and destination.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    pub paths: Vec<PathRec>,
}

impl PathSet {
    pub fn new(paths: Vec<PathRec>) -> Self {
        PathSet { paths }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PathRec> {
        self.paths.iter()
    }

    pub fn total_cost(&self) -> f64 {
        self.paths.iter().map(|p| p.cost).sum()
    }

    /// Checks common endpoints and that no intermediate node is used twice.
    pub fn check_disjoint(&self) -> Result<(), TopologyError> {
        let Some(first) = self.paths.first() else {
            return Ok(());
        };
        let (s, d) = (first.source(), first.destination());
        let mut used = BTreeSet::new();
        for path in &self.paths {
            if path.source() != s || path.destination() != d {
                return Err(TopologyError::Disjointness(format!(
                    "path {path} does not run {s} -> {d}"
                )));
            }
            for id in path.intermediates() {
                if id == s || id == d || !used.insert(id) {
                    return Err(TopologyError::Disjointness(format!(
                        "node {id} appears on more than one path"
                    )));
                }
            }
        }
        if self.paths.iter().filter(|p| p.hops() == 1).count() > 1 {
            return Err(TopologyError::Disjointness(format!(
                "direct link {s} -- {d} used twice"
            )));
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a PathSet {
    type Item = &'a PathRec;
    type IntoIter = std::slice::Iter<'a, PathRec>;
    fn into_iter(self) -> Self::IntoIter {
        self.paths.iter()
    }
}

/// Probability that at least one intermediate node of `path` is compromised.
/// Endpoints are trusted.
pub fn path_compromise_prob(path: &PathRec, topo: &Topology) -> f64 {
    path.intermediates()
        .iter()
        .filter_map(|id| topo.node(id))
        .fold(0.0, |q, node| q + (1.0 - q) * node.p_compromise)
}

/// Result of [`select_paths`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub paths: PathSet,
    /// Fewer than the requested number of paths were available.
    pub shortfall: bool,
}

/// The `n` best-ranked paths (see [`PathRec::rank_cmp`]).
pub fn select_paths(pathset: &PathSet, n: usize) -> Selection {
    let mut ranked = pathset.paths.clone();
    ranked.sort_by(PathRec::rank_cmp);
    let shortfall = ranked.len() < n;
    ranked.truncate(n);
    Selection {
        paths: PathSet::new(ranked),
        shortfall,
    }
}

/// New snapshot in which each wireless link is down with probability `mobility`
/// and idle otherwise. Wired links are always idle. One uniform draw is
/// consumed per wireless link, in link order.
///
/// # Panics
/// If `mobility` is outside `[0, 1)`.
pub fn apply_churn<R: Rng + ?Sized>(topo: &Topology, mobility: f64, rng: &mut R) -> Topology {
    assert!(
        (0.0..1.0).contains(&mobility),
        "mobility {mobility} outside [0, 1)"
    );
    let mut next = topo.clone();
    for link in next.links.values_mut() {
        link.state = match link.medium {
            Medium::Wired => LinkState::Idle,
            Medium::Wireless => {
                if rng.gen::<f64>() < mobility {
                    LinkState::Down
                } else {
                    LinkState::Idle
                }
            }
        };
    }
    next
}

/// Lexicographic (security cost, hop count) used by the flow search.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FlowCost {
    security: f64,
    hops: i64,
}

impl FlowCost {
    const ZERO: FlowCost = FlowCost {
        security: 0.0,
        hops: 0,
    };

    fn plus(self, other: FlowCost) -> FlowCost {
        FlowCost {
            security: self.security + other.security,
            hops: self.hops + other.hops,
        }
    }

    fn neg(self) -> FlowCost {
        FlowCost {
            security: -self.security,
            hops: -self.hops,
        }
    }

    fn better_than(self, other: FlowCost) -> bool {
        if costs_equal(self.security, other.security) {
            self.hops < other.hops
        } else {
            self.security < other.security
        }
    }
}

struct Edge {
    to: usize,
    capacity: u32,
    cost: FlowCost,
}

/// Residual network with paired forward/backward edges (`e ^ 1` is the twin).
struct FlowNetwork {
    edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(vertices: usize) -> Self {
        FlowNetwork {
            edges: Vec::new(),
            out: vec![Vec::new(); vertices],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, capacity: u32, cost: FlowCost) {
        self.out[from].push(self.edges.len());
        self.edges.push(Edge { to, capacity, cost });
        self.out[to].push(self.edges.len());
        self.edges.push(Edge {
            to: from,
            capacity: 0,
            cost: cost.neg(),
        });
    }

    /// Bellman-Ford over the residual graph; returns the predecessor edge of
    /// every vertex reached. Costs may be negative on backward edges.
    fn shortest_path_tree(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.out.len();
        let mut dist: Vec<Option<FlowCost>> = vec![None; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        dist[source] = Some(FlowCost::ZERO);
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                let Some(du) = dist[u] else { continue };
                for &e in &self.out[u] {
                    let edge = &self.edges[e];
                    if edge.capacity == 0 {
                        continue;
                    }
                    let candidate = du.plus(edge.cost);
                    if dist[edge.to].is_none_or(|dv| candidate.better_than(dv)) {
                        dist[edge.to] = Some(candidate);
                        pred[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        pred
    }

    /// Pushes one unit along the predecessor chain ending at `sink`.
    fn augment(&mut self, pred: &[Option<usize>], source: usize, sink: usize) {
        let mut v = sink;
        while v != source {
            let e = pred[v].expect("vertex on augmenting path");
            self.edges[e].capacity -= 1;
            self.edges[e ^ 1].capacity += 1;
            v = self.edges[e ^ 1].to;
        }
    }
}

/// Up to `max_k` node-disjoint `source -> dest` paths over links that are not down.
///
/// Each node other than the endpoints is split into an in/out pair joined
/// by a unit-capacity arc carrying the node's security cost, and unit flow
/// is augmented along successive cheapest residual paths. The result has
/// `min(max_k, maximum number of disjoint paths)` paths with minimum total
/// cost for that count (hop count breaks cost ties). Paths are listed in
/// [`PathRec::rank_cmp`] order.
pub fn node_disjoint_paths(
    topo: &Topology,
    source: &NodeId,
    dest: &NodeId,
    max_k: usize,
) -> Result<PathSet, TopologyError> {
    topo.require(source)?;
    topo.require(dest)?;
    if source == dest {
        return Err(TopologyError::DegenerateQuery);
    }

    let ids: Vec<&NodeId> = topo.nodes.keys().collect();
    let index: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let vin = |v: usize| 2 * v;
    let vout = |v: usize| 2 * v + 1;
    let (s, d) = (index[source], index[dest]);

    let mut net = FlowNetwork::new(2 * ids.len());
    for (v, id) in ids.iter().enumerate() {
        if v != s && v != d {
            let cost = FlowCost {
                security: topo.nodes[*id].cost(),
                hops: 0,
            };
            net.add_edge(vin(v), vout(v), 1, cost);
        }
    }
    let hop = FlowCost {
        security: 0.0,
        hops: 1,
    };
    for ((a, b), link) in &topo.links {
        if link.state == LinkState::Down {
            continue;
        }
        let (a, b) = (index[a], index[b]);
        net.add_edge(vout(a), vin(b), 1, hop);
        net.add_edge(vout(b), vin(a), 1, hop);
    }

    let (flow_source, flow_sink) = (vout(s), vin(d));
    let mut found = 0;
    while found < max_k {
        let pred = net.shortest_path_tree(flow_source);
        if pred[flow_sink].is_none() {
            break;
        }
        net.augment(&pred, flow_source, flow_sink);
        found += 1;
    }

    // Decompose: follow saturated link arcs out of the source.
    let mut paths = Vec::with_capacity(found);
    let mut used = vec![false; net.edges.len()];
    for _ in 0..found {
        let mut nodes = vec![ids[s].clone()];
        let mut at = flow_source;
        while at != flow_sink {
            let e = net.out[at]
                .iter()
                .copied()
                .find(|&e| e % 2 == 0 && !used[e] && net.edges[e].capacity == 0)
                .expect("flow conservation");
            used[e] = true;
            let entered = net.edges[e].to;
            let v = entered / 2;
            nodes.push(ids[v].clone());
            at = if v == d { flow_sink } else { vout(v) };
        }
        paths.push(PathRec::new(topo, nodes)?);
    }
    paths.sort_by(PathRec::rank_cmp);
    Ok(PathSet::new(paths))
}
