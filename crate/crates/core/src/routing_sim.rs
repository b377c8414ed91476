//! Round-based simulator for DSR-style multipath discovery and share dispersal.
//!
//! Time advances in synchronous rounds. At the start of every round the
//! wireless links are re-drawn by churn and all busy flags clear; then each
//! node, in id order, handles the packets queued at it, in arrival order.
//! A packet moves at most one hop per round.
//!
//! Route discovery floods route requests that accumulate a route record.
//! Each node forwards a given request once (first arrival wins); the
//! destination answers every distinct record with a reply that travels the
//! record in reverse. Data shares then ride the selected node-disjoint
//! paths, one share per path, and each hop checks whether its link is idle,
//! busy or down before transmitting.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adversary::{self, AdversaryError, AdversaryModel, CaptureLog};
use crate::codec::{
    self, BundleMeta, CodecError, EncodingPolicy, Key, Keystream, Message, MessageId, ShareBundle,
};
use crate::secret_sharing::Share;
use crate::topology::{self, apply_churn, LinkState, NodeId, PathSet, Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("no route from {0} to {1}")]
    NoRoute(NodeId, NodeId),
    #[error("message id {0} already used in this run")]
    DuplicateMessageId(MessageId),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Round budget for each phase (discovery, then data transfer).
    pub rounds: u64,
    /// Per-round probability that a wireless link is down.
    pub mobility: f64,
    /// Busy retries allowed per hop before a share is dropped.
    pub retry_limit: u32,
    /// Tolerated probability of too few shares arriving.
    pub delta: f64,
    pub adversary: Option<AdversaryModel>,
    /// Overrides the redundancy policy when set.
    pub policy: Option<EncodingPolicy>,
    /// Caps the number of disjoint paths used.
    pub max_paths: Option<usize>,
    pub keystream: Keystream,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            rounds: 1000,
            mobility: 0.0,
            retry_limit: 3,
            delta: 0.05,
            adversary: None,
            policy: None,
            max_paths: None,
            keystream: Keystream::Counter,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.rounds == 0 {
            return Err(SimError::Config("rounds must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.mobility) {
            return Err(SimError::Config(format!(
                "mobility must be in [0, 1), got {}",
                self.mobility
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SimError::Config(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if self.max_paths == Some(0) {
            return Err(SimError::Config("max paths must be at least 1".into()));
        }
        if let Some(AdversaryModel {
            mode: adversary::CompromiseMode::Uniform(p),
            ..
        }) = &self.adversary
        {
            if !(0.0..=1.0).contains(p) {
                return Err(SimError::Adversary(AdversaryError::InvalidProbability(*p)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    /// Flooded route request; `record` ends with the node holding it.
    Request {
        origin: NodeId,
        destination: NodeId,
        request_id: u64,
        record: Vec<NodeId>,
    },
    /// Reply retracing `route` (the reversed request record) from the destination.
    Reply {
        origin: NodeId,
        destination: NodeId,
        request_id: u64,
        route: Vec<NodeId>,
        position: usize,
        traversed: Vec<NodeId>,
    },
    /// One share following a source route.
    Data {
        meta: BundleMeta,
        share: Share,
        route: Vec<NodeId>,
        position: usize,
        retries: u32,
    },
}

impl Packet {
    /// A data packet at the head of `route`.
    pub fn data(meta: BundleMeta, share: Share, route: Vec<NodeId>) -> Packet {
        Packet::Data {
            meta,
            share,
            route,
            position: 0,
            retries: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Duplicate,
    Loop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    RequestForwarded {
        request_id: u64,
        record: Vec<NodeId>,
    },
    RequestDropped {
        request_id: u64,
        reason: DropReason,
    },
    RequestAnswered {
        request_id: u64,
        record: Vec<NodeId>,
    },
    ReplyForwarded {
        request_id: u64,
        next: NodeId,
    },
    ReplyLost {
        request_id: u64,
        next: NodeId,
    },
    RouteCollected {
        request_id: u64,
        route: Vec<NodeId>,
    },
    DataForwarded {
        share: u8,
        next: NodeId,
    },
    DataRequeued {
        share: u8,
        next: NodeId,
        retries: u32,
    },
    DataLost {
        share: u8,
        next: NodeId,
    },
    DataDropped {
        share: u8,
        next: NodeId,
    },
    DataDelivered {
        share: u8,
    },
    DataExpired {
        share: u8,
    },
    ShareCaptured {
        share: u8,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::RequestForwarded { .. } => "rreq-forward",
            EventKind::RequestDropped { .. } => "rreq-drop",
            EventKind::RequestAnswered { .. } => "rreq-answer",
            EventKind::ReplyForwarded { .. } => "rrep-forward",
            EventKind::ReplyLost { .. } => "rrep-lost",
            EventKind::RouteCollected { .. } => "route-collected",
            EventKind::DataForwarded { .. } => "data-forward",
            EventKind::DataRequeued { .. } => "data-requeue",
            EventKind::DataLost { .. } => "data-lost",
            EventKind::DataDropped { .. } => "data-dropped",
            EventKind::DataDelivered { .. } => "data-delivered",
            EventKind::DataExpired { .. } => "data-expired",
            EventKind::ShareCaptured { .. } => "share-captured",
        }
    }

    pub fn detail(&self) -> String {
        fn route(nodes: &[NodeId]) -> String {
            nodes
                .iter()
                .map(NodeId::as_str)
                .collect::<Vec<_>>()
                .join(">")
        }
        match self {
            EventKind::RequestForwarded { request_id, record }
            | EventKind::RequestAnswered { request_id, record } => {
                format!("req={request_id} record={}", route(record))
            }
            EventKind::RequestDropped { request_id, reason } => {
                let reason = match reason {
                    DropReason::Duplicate => "duplicate",
                    DropReason::Loop => "loop",
                };
                format!("req={request_id} reason={reason}")
            }
            EventKind::ReplyForwarded { request_id, next }
            | EventKind::ReplyLost { request_id, next } => format!("req={request_id} next={next}"),
            EventKind::RouteCollected {
                request_id,
                route: r,
            } => {
                format!("req={request_id} route={}", route(r))
            }
            EventKind::DataForwarded { share, next }
            | EventKind::DataLost { share, next }
            | EventKind::DataDropped { share, next } => format!("share={share} next={next}"),
            EventKind::DataRequeued {
                share,
                next,
                retries,
            } => format!("share={share} next={next} retries={retries}"),
            EventKind::DataDelivered { share }
            | EventKind::DataExpired { share }
            | EventKind::ShareCaptured { share } => format!("share={share}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub round: u64,
    pub node: NodeId,
    pub kind: EventKind,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "r{} {} {} {}",
            self.round,
            self.node,
            self.kind.name(),
            self.kind.detail()
        )
    }
}

/// A reply that made it back to the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteReply {
    pub request_id: u64,
    /// The request record the destination answered, source first.
    pub request_record: Vec<NodeId>,
    /// Nodes the reply actually visited, destination first.
    pub traversed: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub source: NodeId,
    pub destination: NodeId,
    pub message_id: MessageId,
    /// Disjoint routes distilled from discovery.
    pub routes_found: PathSet,
    /// The routes that carried shares.
    pub paths_used: PathSet,
    pub policy_used: EncodingPolicy,
    pub shares_sent: usize,
    pub shares_delivered: usize,
    /// Lost to a down link.
    pub shares_lost_down: usize,
    /// Dropped after exhausting busy retries.
    pub shares_dropped_busy: usize,
    /// Still in flight when the round budget ran out.
    pub shares_expired: usize,
    pub reconstructed: bool,
    pub failure: Option<String>,
    pub compromised: Vec<NodeId>,
    pub adversary_captured: usize,
    pub adversary_success: bool,
    pub warnings: Vec<String>,
    pub rounds: u64,
    pub event_log: Vec<Event>,
}

impl SimReport {
    pub fn shares_lost(&self) -> usize {
        self.shares_lost_down + self.shares_dropped_busy + self.shares_expired
    }

    /// Human-readable summary.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("source: {}\n", self.source));
        out.push_str(&format!("destination: {}\n", self.destination));
        out.push_str(&format!("message: {}\n", self.message_id));
        out.push_str(&format!("routes found: {}\n", self.routes_found.len()));
        for (i, path) in self.paths_used.iter().enumerate() {
            out.push_str(&format!(
                "  path {}: {} (hops {}, cost {:.6})\n",
                i + 1,
                path,
                path.hops(),
                path.cost
            ));
        }
        out.push_str(&format!("policy: {}\n", self.policy_used));
        out.push_str(&format!(
            "shares: sent {} delivered {} lost {} (down {}, busy {}, expired {})\n",
            self.shares_sent,
            self.shares_delivered,
            self.shares_lost(),
            self.shares_lost_down,
            self.shares_dropped_busy,
            self.shares_expired
        ));
        match &self.failure {
            None => out.push_str("reconstructed: true\n"),
            Some(reason) => out.push_str(&format!("reconstructed: false, reason: {reason}\n")),
        }
        let compromised: Vec<&str> = self.compromised.iter().map(NodeId::as_str).collect();
        out.push_str(&format!(
            "compromised nodes: [{}]\n",
            compromised.join(", ")
        ));
        out.push_str(&format!(
            "adversary: captured {} shares, reconstructs: {}\n",
            self.adversary_captured, self.adversary_success
        ));
        for warning in &self.warnings {
            out.push_str(&format!("warning: {warning}\n"));
        }
        out.push_str(&format!("rounds: {}\n", self.rounds));
        out
    }

    /// Event log as CSV, see [`events_csv`].
    pub fn events_csv(&self) -> String {
        events_csv(&self.event_log)
    }
}

/// Events as CSV with header `round,node,event,detail`.
pub fn events_csv(events: &[Event]) -> String {
    let mut out = String::from("round,node,event,detail\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.round,
            e.node,
            e.kind.name(),
            e.kind.detail()
        ));
    }
    out
}

/// One simulation instance. Owns all state; single-threaded.
pub struct Simulator {
    base: Topology,
    current: Topology,
    config: SimConfig,
    rng: ChaCha8Rng,
    round: u64,
    queues: BTreeMap<NodeId, VecDeque<Packet>>,
    failed_links: BTreeSet<(NodeId, NodeId)>,
    /// `(node, origin, request_id)` already forwarded.
    seen_requests: BTreeSet<(NodeId, NodeId, u64)>,
    /// `(request_id, record)` already answered by a destination.
    answered: BTreeSet<(u64, Vec<NodeId>)>,
    replies: Vec<RouteReply>,
    routes: BTreeMap<(NodeId, NodeId), PathSet>,
    next_request_id: u64,
    delivered: BTreeMap<MessageId, Vec<Share>>,
    compromised: BTreeSet<NodeId>,
    captures: CaptureLog,
    used_ids: BTreeSet<MessageId>,
    tally: Tally,
    log: Vec<Event>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    delivered: usize,
    lost_down: usize,
    dropped_busy: usize,
}

impl Simulator {
    pub fn new(topology: Topology, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Simulator {
            current: topology.clone(),
            base: topology,
            config,
            rng,
            round: 0,
            queues: BTreeMap::new(),
            failed_links: BTreeSet::new(),
            seen_requests: BTreeSet::new(),
            answered: BTreeSet::new(),
            replies: Vec::new(),
            routes: BTreeMap::new(),
            next_request_id: 1,
            delivered: BTreeMap::new(),
            compromised: BTreeSet::new(),
            captures: CaptureLog::new(),
            used_ids: BTreeSet::new(),
            tally: Tally::default(),
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// The link state seen by the current round.
    pub fn topology(&self) -> &Topology {
        &self.current
    }

    pub fn event_log(&self) -> &[Event] {
        &self.log
    }

    /// Replies collected by origins so far.
    pub fn replies(&self) -> &[RouteReply] {
        &self.replies
    }

    pub fn captures(&self) -> &CaptureLog {
        &self.captures
    }

    /// Keeps the link `a -- b` down for the rest of the run, overriding churn.
    pub fn fail_link(&mut self, a: &NodeId, b: &NodeId) -> Result<(), SimError> {
        if self.base.link(a, b).is_none() {
            return Err(TopologyError::InvalidPath(format!("no link {a} -- {b}")).into());
        }
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        self.current.set_link_state(a, b, LinkState::Down)?;
        self.failed_links.insert(key);
        Ok(())
    }

    /// Queues `packet` at `node` behind whatever is already there.
    pub fn enqueue(&mut self, node: &NodeId, packet: Packet) -> Result<(), SimError> {
        if !self.base.contains(node) {
            return Err(TopologyError::UnknownNode(node.to_string()).into());
        }
        self.queues
            .entry(node.clone())
            .or_default()
            .push_back(packet);
        Ok(())
    }

    pub fn in_flight(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    /// Advances one round and returns the events it produced.
    pub fn step(&mut self) -> Vec<Event> {
        self.round += 1;
        self.current = apply_churn(&self.base, self.config.mobility, &mut self.rng);
        for (a, b) in &self.failed_links {
            self.current
                .set_link_state(a, b, LinkState::Down)
                .expect("failed link exists");
        }

        let mut events = Vec::new();
        let queues = std::mem::take(&mut self.queues);
        let mut requeued: BTreeMap<NodeId, VecDeque<Packet>> = BTreeMap::new();
        let mut arrivals: BTreeMap<NodeId, VecDeque<Packet>> = BTreeMap::new();
        for (node, queue) in queues {
            for packet in queue {
                self.process(&node, packet, &mut events, &mut requeued, &mut arrivals);
            }
        }
        for (node, packets) in requeued.into_iter().chain(arrivals) {
            self.queues.entry(node).or_default().extend(packets);
        }
        self.log.extend(events.iter().cloned());
        events
    }

    fn process(
        &mut self,
        node: &NodeId,
        packet: Packet,
        events: &mut Vec<Event>,
        requeued: &mut BTreeMap<NodeId, VecDeque<Packet>>,
        arrivals: &mut BTreeMap<NodeId, VecDeque<Packet>>,
    ) {
        let round = self.round;
        let mut emit = |at: &NodeId, kind: EventKind| {
            events.push(Event {
                round,
                node: at.clone(),
                kind,
            })
        };
        match packet {
            Packet::Request {
                origin,
                destination,
                request_id,
                record,
            } => {
                emit(
                    node,
                    EventKind::RequestForwarded {
                        request_id,
                        record: record.clone(),
                    },
                );
                let neighbors: Vec<NodeId> = self.base.neighbors(node).cloned().collect();
                for next in neighbors {
                    if self.link_state(node, &next) == LinkState::Down {
                        continue;
                    }
                    if record.contains(&next) {
                        emit(
                            &next,
                            EventKind::RequestDropped {
                                request_id,
                                reason: DropReason::Loop,
                            },
                        );
                        continue;
                    }
                    let mut extended = record.clone();
                    extended.push(next.clone());
                    if next == destination {
                        if self.answered.insert((request_id, extended.clone())) {
                            emit(
                                &next,
                                EventKind::RequestAnswered {
                                    request_id,
                                    record: extended.clone(),
                                },
                            );
                            let route: Vec<NodeId> = extended.iter().rev().cloned().collect();
                            arrivals
                                .entry(next.clone())
                                .or_default()
                                .push_back(Packet::Reply {
                                    origin: origin.clone(),
                                    destination: destination.clone(),
                                    request_id,
                                    route,
                                    position: 0,
                                    traversed: vec![next.clone()],
                                });
                        }
                        continue;
                    }
                    if !self
                        .seen_requests
                        .insert((next.clone(), origin.clone(), request_id))
                    {
                        emit(
                            &next,
                            EventKind::RequestDropped {
                                request_id,
                                reason: DropReason::Duplicate,
                            },
                        );
                        continue;
                    }
                    arrivals
                        .entry(next)
                        .or_default()
                        .push_back(Packet::Request {
                            origin: origin.clone(),
                            destination: destination.clone(),
                            request_id,
                            record: extended,
                        });
                }
            }
            Packet::Reply {
                origin,
                destination,
                request_id,
                route,
                position,
                mut traversed,
            } => {
                let next = route[position + 1].clone();
                if self.link_state(node, &next) == LinkState::Down {
                    emit(node, EventKind::ReplyLost { request_id, next });
                    return;
                }
                emit(
                    node,
                    EventKind::ReplyForwarded {
                        request_id,
                        next: next.clone(),
                    },
                );
                traversed.push(next.clone());
                if position + 2 == route.len() {
                    debug_assert_eq!(traversed, route, "reply left its reversed route");
                    emit(
                        &next,
                        EventKind::RouteCollected {
                            request_id,
                            route: traversed.iter().rev().cloned().collect(),
                        },
                    );
                    self.replies.push(RouteReply {
                        request_id,
                        request_record: route.iter().rev().cloned().collect(),
                        traversed,
                    });
                } else {
                    arrivals.entry(next).or_default().push_back(Packet::Reply {
                        origin,
                        destination,
                        request_id,
                        route,
                        position: position + 1,
                        traversed,
                    });
                }
            }
            Packet::Data {
                meta,
                share,
                route,
                position,
                retries,
            } => {
                let next = route[position + 1].clone();
                let index = share.index;
                match self.link_state(node, &next) {
                    LinkState::Down => {
                        self.tally.lost_down += 1;
                        emit(node, EventKind::DataLost { share: index, next });
                    }
                    LinkState::Busy => {
                        let retries = retries + 1;
                        if retries > self.config.retry_limit {
                            self.tally.dropped_busy += 1;
                            emit(node, EventKind::DataDropped { share: index, next });
                        } else {
                            emit(
                                node,
                                EventKind::DataRequeued {
                                    share: index,
                                    next,
                                    retries,
                                },
                            );
                            requeued
                                .entry(node.clone())
                                .or_default()
                                .push_back(Packet::Data {
                                    meta,
                                    share,
                                    route,
                                    position,
                                    retries,
                                });
                        }
                    }
                    LinkState::Idle => {
                        self.current
                            .set_link_state(node, &next, LinkState::Busy)
                            .expect("link exists");
                        emit(
                            node,
                            EventKind::DataForwarded {
                                share: index,
                                next: next.clone(),
                            },
                        );
                        if position + 2 == route.len() {
                            self.tally.delivered += 1;
                            emit(&next, EventKind::DataDelivered { share: index });
                            self.delivered
                                .entry(meta.message_id)
                                .or_default()
                                .push(share);
                        } else {
                            if self
                                .captures
                                .observe(&self.compromised, &next, &meta, index)
                            {
                                emit(&next, EventKind::ShareCaptured { share: index });
                            }
                            arrivals.entry(next).or_default().push_back(Packet::Data {
                                meta,
                                share,
                                route,
                                position: position + 1,
                                retries: 0,
                            });
                        }
                    }
                }
            }
        }
    }

    fn link_state(&self, a: &NodeId, b: &NodeId) -> LinkState {
        self.current
            .link(a, b)
            .map_or(LinkState::Down, |link| link.state)
    }

    /// Steps until nothing is in flight or `rounds` rounds pass. Returns the
    /// packets abandoned when the budget ran out.
    fn drain(&mut self) -> Vec<(NodeId, Packet)> {
        let mut used = 0;
        while self.in_flight() > 0 && used < self.config.rounds {
            self.step();
            used += 1;
        }
        std::mem::take(&mut self.queues)
            .into_iter()
            .flat_map(|(node, queue)| queue.into_iter().map(move |p| (node.clone(), p)))
            .collect()
    }

    /// Floods a route request from `source` and distills the collected
    /// replies into node-disjoint routes.
    pub fn discover_routes(
        &mut self,
        source: &NodeId,
        destination: &NodeId,
    ) -> Result<PathSet, SimError> {
        for id in [source, destination] {
            if !self.base.contains(id) {
                return Err(TopologyError::UnknownNode(id.to_string()).into());
            }
        }
        if source == destination {
            return Err(TopologyError::DegenerateQuery.into());
        }
        let request_id = self.next_request_id;
        self.next_request_id += 1;
        self.seen_requests
            .insert((source.clone(), source.clone(), request_id));
        self.enqueue(
            source,
            Packet::Request {
                origin: source.clone(),
                destination: destination.clone(),
                request_id,
                record: vec![source.clone()],
            },
        )?;
        let first_reply = self.replies.len();
        // Control packets still queued after the budget are simply abandoned.
        self.drain();

        let routes: Vec<Vec<NodeId>> = self.replies[first_reply..]
            .iter()
            .filter(|r| r.request_id == request_id)
            .map(|r| r.request_record.clone())
            .collect();
        let found = if routes.is_empty() {
            PathSet::default()
        } else {
            let discovered = self.base.restricted_to(&routes)?;
            topology::node_disjoint_paths(&discovered, source, destination, usize::MAX)?
        };
        self.routes
            .insert((source.clone(), destination.clone()), found.clone());
        Ok(found)
    }

    /// Encodes `message`, sends one share per selected path and reports the outcome.
    /// Discovers routes first unless a discovery for this pair already ran.
    pub fn send_message(
        &mut self,
        source: &NodeId,
        destination: &NodeId,
        message: &Message,
        key: &Key,
    ) -> Result<SimReport, SimError> {
        if self.used_ids.contains(&message.id) {
            return Err(SimError::DuplicateMessageId(message.id));
        }
        let pair = (source.clone(), destination.clone());
        let routes = match self.routes.get(&pair) {
            Some(found) => found.clone(),
            None => self.discover_routes(source, destination)?,
        };
        let limit = self.config.max_paths.unwrap_or(usize::MAX);
        let mut paths = topology::select_paths(&routes, limit).paths;
        if paths.is_empty() {
            return Err(SimError::NoRoute(source.clone(), destination.clone()));
        }
        self.used_ids.insert(message.id);

        let hops: Vec<usize> = paths.iter().map(|p| p.hops()).collect();
        let policy = match self.config.policy {
            Some(policy) => policy,
            None => codec::redundancy_policy(
                paths.len(),
                self.config.mobility,
                &hops,
                self.config.delta,
            )?,
        };
        let bundle =
            codec::encode_message(message, policy, key, self.config.keystream, &mut self.rng)?;

        let mut warnings = Vec::new();
        let share_count = bundle.shares.len();
        if share_count > paths.len() {
            warnings.push(format!(
                "{share_count} shares over {} paths; paths reused round-robin",
                paths.len()
            ));
        } else {
            paths.paths.truncate(share_count);
        }

        self.compromised = match &self.config.adversary {
            Some(model) => {
                adversary::realize(model, &self.base, source, destination, &mut self.rng)?
            }
            None => BTreeSet::new(),
        };

        let before = self.tally;
        for (i, share) in bundle.shares.iter().enumerate() {
            let route = paths.paths[i % paths.len()].nodes.clone();
            self.enqueue(source, Packet::data(bundle.meta, share.clone(), route))?;
        }
        let abandoned = self.drain();
        let mut expired = 0;
        for (node, packet) in abandoned {
            if let Packet::Data { share, .. } = packet {
                expired += 1;
                self.log.push(Event {
                    round: self.round,
                    node,
                    kind: EventKind::DataExpired { share: share.index },
                });
            }
        }

        let received = ShareBundle {
            meta: bundle.meta,
            shares: self.delivered.remove(&message.id).unwrap_or_default(),
        };
        let failure = match codec::decode_bundle(&received, key, self.config.keystream) {
            Ok(decoded) if decoded == *message => None,
            Ok(_) => Some("decoded message differs".to_string()),
            Err(err) => Some(err.to_string()),
        };

        let key_known = self.config.adversary.as_ref().is_some_and(|m| m.key_known);
        let captured = self
            .captures
            .capture(&message.id)
            .map(|c| c.indices.clone())
            .unwrap_or_default();

        Ok(SimReport {
            source: source.clone(),
            destination: destination.clone(),
            message_id: message.id,
            routes_found: routes,
            paths_used: paths,
            policy_used: policy,
            shares_sent: share_count,
            shares_delivered: self.tally.delivered - before.delivered,
            shares_lost_down: self.tally.lost_down - before.lost_down,
            shares_dropped_busy: self.tally.dropped_busy - before.dropped_busy,
            shares_expired: expired,
            reconstructed: failure.is_none(),
            failure,
            compromised: self.compromised.iter().cloned().collect(),
            adversary_captured: captured.len(),
            adversary_success: adversary::can_reconstruct(&captured, &policy, key_known),
            warnings,
            rounds: self.round,
            event_log: self.log.clone(),
        })
    }
}
