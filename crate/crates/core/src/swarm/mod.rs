//! In-process simulation of a private content swarm.
//!
//! Membership is gated by a shared swarm key. Provider records are placed
//! on the `alpha` nodes closest (by XOR distance) to `sha256(multihash)`
//! using iterative Kademlia lookups, and blocks move between peers through
//! want-list exchanges. All messages go through a virtual-time scheduler
//! whose latencies come from a seeded generator, so a scenario replays
//! identically for a given seed.
//!
//! The network is single-threaded: every operation takes `&mut self` and
//! runs its messages to completion before returning.

mod routing;
mod sched;

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand_chacha::rand_core::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::cid::{cid_of_block, ContentId};
use crate::crypto::{sha256, Digest32, SigningPublic};
use crate::dag::{self, BlockSet, DagError, DagNode};
use crate::ledger::Bytes;

pub use routing::{bucket_index, provider_key, xor, NodeId, RoutingTable, ID_BITS};
use sched::{Message, Scheduler};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SwarmError {
    #[error("swarm-rejected")]
    SwarmRejected,
    #[error("content-unavailable({0})")]
    ContentUnavailable(ContentId),
    #[error("block-corrupt({0})")]
    BlockCorrupt(ContentId),
    #[error("node {0} is already a member")]
    AlreadyMember(NodeId),
    #[error(transparent)]
    Dag(#[from] DagError),
}

impl SwarmError {
    pub fn code(&self) -> &'static str {
        match self {
            SwarmError::SwarmRejected => "swarm-rejected",
            SwarmError::ContentUnavailable(_) => "content-unavailable",
            SwarmError::BlockCorrupt(_) => "block-corrupt",
            SwarmError::AlreadyMember(_) => "already-member",
            SwarmError::Dag(_) => "dag",
        }
    }
}

/// Pre-shared key gating swarm membership.
#[derive(Clone, PartialEq, Eq)]
pub struct SwarmKey {
    key: [u8; 32],
}

impl SwarmKey {
    pub fn new(key: [u8; 32]) -> Self {
        SwarmKey { key }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        SwarmKey { key }
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.key
    }

    pub fn fingerprint(&self) -> Digest32 {
        sha256(&self.key)
    }
}

impl fmt::Debug for SwarmKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SwarmKey(fingerprint={})", self.fingerprint())
    }
}

/// Reference to a node. Holding a handle grants nothing: every operation
/// re-checks membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeHandle {
    id: NodeId,
}

impl NodeHandle {
    pub fn for_public(public: &SigningPublic) -> Self {
        NodeHandle {
            id: NodeId::from_public(public),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderRecord {
    pub cid: ContentId,
    pub providers: BTreeSet<NodeId>,
}

/// Ordered, duplicate-free set of wanted blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WantList {
    pub requester: NodeId,
    cids: VecDeque<ContentId>,
}

impl WantList {
    pub fn new(requester: NodeId) -> Self {
        WantList {
            requester,
            cids: VecDeque::new(),
        }
    }

    pub fn push(&mut self, cid: ContentId) -> bool {
        if self.cids.contains(&cid) {
            return false;
        }
        self.cids.push_back(cid);
        true
    }

    pub fn pop(&mut self) -> Option<ContentId> {
        self.cids.pop_front()
    }

    pub fn len(&self) -> usize {
        self.cids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cids.is_empty()
    }

    pub fn cids(&self) -> impl Iterator<Item = &ContentId> {
        self.cids.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Bucket capacity and lookup result size.
    pub k: usize,
    /// Lookup parallelism and provider-record replication.
    pub alpha: usize,
    pub min_latency: u64,
    pub max_latency: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            k: 20,
            alpha: 3,
            min_latency: 1,
            max_latency: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Join {
        node: NodeId,
        seeds: usize,
    },
    JoinRejected,
    Leave {
        node: NodeId,
    },
    Deliver {
        kind: Cow<'static, str>,
        from: NodeId,
        to: NodeId,
    },
    Lookup {
        node: NodeId,
        target: Digest32,
        visited: usize,
        found: usize,
    },
    Provide {
        node: NodeId,
        cid: ContentId,
        holders: Vec<NodeId>,
    },
    CorruptBlock {
        node: NodeId,
        from: NodeId,
        cid: ContentId,
    },
    Fetch {
        node: NodeId,
        root: ContentId,
        blocks: usize,
        bytes: usize,
    },
    FetchFailed {
        node: NodeId,
        root: ContentId,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub time: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Result of one iterative lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupOutcome {
    /// Up to `k` ids, closest first. May include the origin itself.
    pub closest: Vec<NodeId>,
    pub providers: BTreeSet<NodeId>,
    /// Remote nodes queried.
    pub visited: usize,
}

enum Step {
    Idle,
    Handled,
    Response(Message),
}

#[derive(Debug)]
struct Node {
    routing: RoutingTable,
    blocks: BTreeMap<ContentId, Vec<u8>>,
    records: BTreeMap<ContentId, BTreeSet<NodeId>>,
}

/// One state-changing call, recorded so a network can be rebuilt by replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwarmOp {
    Join {
        public: SigningPublic,
    },
    JoinRejected,
    Leave {
        node: NodeId,
    },
    Provide {
        node: NodeId,
        cids: Vec<ContentId>,
    },
    Lookup {
        node: NodeId,
        cid: ContentId,
    },
    Fetch {
        node: NodeId,
        root: ContentId,
    },
    Tamper {
        node: NodeId,
        cid: ContentId,
        bytes: Bytes,
    },
}

/// Seed, parameters and operation journal; enough to rebuild a network
/// given the bytes of every provided block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmSnapshot {
    pub seed: u64,
    pub fingerprint: Digest32,
    pub config: NetworkConfig,
    pub ops: Vec<SwarmOp>,
}

pub struct Network {
    seed: u64,
    journal: Vec<SwarmOp>,
    config: NetworkConfig,
    fingerprint: Digest32,
    rng: ChaCha20Rng,
    sched: Scheduler,
    nodes: BTreeMap<NodeId, Node>,
    trace: Vec<TraceEntry>,
}

pub fn create_network(swarm_key: &SwarmKey, seed: u64) -> Network {
    Network::with_config(swarm_key, seed, NetworkConfig::default())
}

impl Network {
    pub fn with_config(swarm_key: &SwarmKey, seed: u64, config: NetworkConfig) -> Self {
        assert!(
            config.k >= 1 && config.alpha >= 1,
            "k and alpha must be positive"
        );
        assert!(config.min_latency <= config.max_latency);
        Network {
            seed,
            journal: Vec::new(),
            config,
            fingerprint: swarm_key.fingerprint(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            sched: Scheduler::default(),
            nodes: BTreeMap::new(),
            trace: Vec::new(),
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn journal(&self) -> &[SwarmOp] {
        &self.journal
    }

    pub fn snapshot(&self) -> SwarmSnapshot {
        SwarmSnapshot {
            seed: self.seed,
            fingerprint: self.fingerprint,
            config: self.config,
            ops: self.journal.clone(),
        }
    }

    /// Rebuilds a network by re-running its journal. Block bytes for
    /// `provide` entries come from `blocks`.
    pub fn restore(
        swarm_key: &SwarmKey,
        snapshot: &SwarmSnapshot,
        blocks: &BlockSet,
    ) -> Result<Network, SwarmError> {
        if swarm_key.fingerprint() != snapshot.fingerprint {
            return Err(SwarmError::SwarmRejected);
        }
        let mut net = Network::with_config(swarm_key, snapshot.seed, snapshot.config);
        let wrong = SwarmKey::new(sha256(swarm_key.as_bytes()).as_bytes().to_owned());
        for op in &snapshot.ops {
            let handle = |id: &NodeId| NodeHandle { id: *id };
            match op {
                SwarmOp::Join { public } => {
                    net.join(public, swarm_key)?;
                }
                SwarmOp::JoinRejected => {
                    let _ = net.join(&SigningPublic::new([0; 32]), &wrong);
                }
                SwarmOp::Leave { node } => net.leave(&handle(node))?,
                SwarmOp::Provide { node, cids } => {
                    let mut set = BlockSet::new();
                    for cid in cids {
                        let data = blocks
                            .get(cid)
                            .ok_or(SwarmError::ContentUnavailable(*cid))?;
                        set.insert_verified(*cid, data.to_vec())?;
                    }
                    net.provide(&handle(node), &set)?;
                }
                SwarmOp::Lookup { node, cid } => {
                    net.lookup_providers(&handle(node), cid)?;
                }
                SwarmOp::Fetch { node, root } => {
                    let _ = net.fetch(&handle(node), root);
                }
                SwarmOp::Tamper { node, cid, bytes } => {
                    net.tamper_block(&handle(node), cid, bytes.0.clone());
                }
            }
        }
        Ok(net)
    }

    /// Every block held by any member.
    pub fn all_blocks(&self) -> BlockSet {
        let mut set = BlockSet::new();
        for n in self.nodes.values() {
            for (cid, data) in &n.blocks {
                if cid_of_block(data) == *cid {
                    set.insert(data.clone());
                }
            }
        }
        set
    }

    pub fn fingerprint(&self) -> Digest32 {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn members(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn is_member(&self, node: &NodeHandle) -> bool {
        self.nodes.contains_key(&node.id)
    }

    pub fn now(&self) -> u64 {
        self.sched.now()
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// The trace as canonical JSON lines.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&canonical::to_canonical_string(e).expect("trace entries are canonical"));
            out.push('\n');
        }
        out
    }

    pub fn routing_table(&self, node: &NodeHandle) -> Option<&RoutingTable> {
        self.nodes.get(&node.id).map(|n| &n.routing)
    }

    /// Total provider records held network-wide.
    pub fn provider_record_count(&self) -> usize {
        self.nodes.values().map(|n| n.records.len()).sum()
    }

    /// Which nodes hold a provider record for `cid`. Inspection only; not
    /// part of the protocol.
    pub fn record_holders(&self, cid: &ContentId) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.records.contains_key(cid))
            .map(|(id, _)| *id)
            .collect()
    }

    /// Blocks stored on a member, for persistence and inspection.
    pub fn stored_blocks(&self, node: &NodeHandle) -> Option<BlockSet> {
        self.nodes
            .get(&node.id)
            .map(|n| n.blocks.values().cloned().collect())
    }

    /// Fault injection: overwrite a stored block with arbitrary bytes.
    pub fn tamper_block(&mut self, node: &NodeHandle, cid: &ContentId, bytes: Vec<u8>) -> bool {
        match self
            .nodes
            .get_mut(&node.id)
            .and_then(|n| n.blocks.get_mut(cid))
        {
            Some(slot) => {
                *slot = bytes.clone();
                self.journal.push(SwarmOp::Tamper {
                    node: node.id,
                    cid: *cid,
                    bytes: Bytes(bytes),
                });
                true
            }
            None => false,
        }
    }

    fn log(&mut self, event: TraceEvent) {
        self.trace.push(TraceEntry {
            seq: self.trace.len() as u64,
            time: self.sched.now(),
            event,
        });
    }

    fn latency(&mut self) -> u64 {
        let span = self.config.max_latency - self.config.min_latency + 1;
        self.config.min_latency + self.rng.next_u64() % span
    }

    fn send(&mut self, msg: Message) {
        let lat = self.latency();
        self.sched.send(msg, lat);
    }

    fn member(&self, node: &NodeHandle) -> Result<(), SwarmError> {
        if self.nodes.contains_key(&node.id) {
            Ok(())
        } else {
            Err(SwarmError::SwarmRejected)
        }
    }

    /// Admits a node iff it presents the network's swarm key. The new node
    /// seeds its routing table from up to `k` random members, looks itself
    /// up and refreshes the buckets beyond its nearest neighbour.
    pub fn join(
        &mut self,
        node_public: &SigningPublic,
        presented: &SwarmKey,
    ) -> Result<NodeHandle, SwarmError> {
        if presented.fingerprint() != self.fingerprint {
            self.journal.push(SwarmOp::JoinRejected);
            self.log(TraceEvent::JoinRejected);
            return Err(SwarmError::SwarmRejected);
        }
        let id = NodeId::from_public(node_public);
        if self.nodes.contains_key(&id) {
            return Err(SwarmError::AlreadyMember(id));
        }
        self.journal.push(SwarmOp::Join {
            public: *node_public,
        });
        let mut existing = self.members();
        let n_seeds = existing.len().min(self.config.k);
        // partial Fisher-Yates for the seed sample
        for i in 0..n_seeds {
            let j = i + (self.rng.next_u64() as usize) % (existing.len() - i);
            existing.swap(i, j);
        }
        let mut routing = RoutingTable::new(id, self.config.k);
        for s in &existing[..n_seeds] {
            routing.insert(*s);
        }
        self.nodes.insert(
            id,
            Node {
                routing,
                blocks: BTreeMap::new(),
                records: BTreeMap::new(),
            },
        );
        self.log(TraceEvent::Join {
            node: id,
            seeds: n_seeds,
        });
        if n_seeds == 0 {
            return Ok(NodeHandle { id });
        }
        let own = self.lookup(id, *id.as_bytes(), None);
        let nearest = own
            .closest
            .iter()
            .filter(|n| **n != id)
            .filter_map(|n| bucket_index(&id.distance(n.as_bytes())))
            .min()
            .unwrap_or(ID_BITS - 1);
        for b in nearest + 1..ID_BITS {
            let target = self.random_id_in_bucket(&id, b);
            self.lookup(id, target, None);
        }
        Ok(NodeHandle { id })
    }

    fn random_id_in_bucket(&mut self, local: &NodeId, bucket: usize) -> [u8; 32] {
        let mut dist = [0u8; 32];
        self.rng.fill_bytes(&mut dist);
        // keep bit `bucket` set and everything above it clear
        let byte = 31 - bucket / 8;
        let bit = bucket % 8;
        for d in dist.iter_mut().take(byte) {
            *d = 0;
        }
        dist[byte] &= (1u8 << bit).wrapping_sub(1);
        dist[byte] |= 1 << bit;
        xor(local.as_bytes(), &dist)
    }

    /// Removes a member and forgets it everywhere.
    pub fn leave(&mut self, node: &NodeHandle) -> Result<(), SwarmError> {
        self.member(node)?;
        self.journal.push(SwarmOp::Leave { node: node.id });
        self.nodes.remove(&node.id);
        for n in self.nodes.values_mut() {
            n.routing.remove(&node.id);
            for providers in n.records.values_mut() {
                providers.remove(&node.id);
            }
            n.records.retain(|_, p| !p.is_empty());
        }
        self.log(TraceEvent::Leave { node: node.id });
        Ok(())
    }

    /// Iterative lookup from `origin` toward `target`: keep up to `alpha`
    /// queries in flight against the closest unqueried candidates until the
    /// `k` closest known candidates have all answered.
    fn lookup(
        &mut self,
        origin: NodeId,
        target: [u8; 32],
        providers_for: Option<ContentId>,
    ) -> LookupOutcome {
        let k = self.config.k;
        let alpha = self.config.alpha;
        let origin_node = &self.nodes[&origin];
        // candidate -> (id, already queried)
        let mut shortlist: BTreeMap<[u64; 4], (NodeId, bool)> = origin_node
            .routing
            .closest(&target, k)
            .into_iter()
            .map(|n| (n.distance_key(&target), (n, false)))
            .collect();
        shortlist.insert(origin.distance_key(&target), (origin, true));
        let mut providers: BTreeSet<NodeId> = providers_for
            .and_then(|c| origin_node.records.get(&c).cloned())
            .unwrap_or_default();
        let mut inflight = 0usize;
        let mut visited = 0usize;
        loop {
            while inflight < alpha {
                let next = shortlist.values_mut().take(k).find(|(_, asked)| !*asked);
                let Some((peer, asked)) = next else { break };
                *asked = true;
                let peer = *peer;
                inflight += 1;
                visited += 1;
                self.send(Message::FindNode {
                    from: origin,
                    to: peer,
                    target,
                    providers_for,
                });
            }
            if inflight == 0 {
                break;
            }
            match self.step() {
                Step::Response(Message::Nodes {
                    from,
                    to,
                    closer,
                    providers: p,
                }) if to == origin => {
                    inflight -= 1;
                    if let Some(n) = self.nodes.get_mut(&origin) {
                        n.routing.insert(from);
                    }
                    for c in closer {
                        if self.nodes.contains_key(&c) {
                            shortlist
                                .entry(c.distance_key(&target))
                                .or_insert((c, false));
                        }
                    }
                    providers.extend(p);
                }
                Step::Response(Message::Unreachable { from, to }) if to == origin => {
                    inflight -= 1;
                    shortlist.remove(&from.distance_key(&target));
                }
                Step::Response(_) | Step::Handled => {}
                Step::Idle => break,
            }
        }
        let closest: Vec<NodeId> = shortlist.values().take(k).map(|(n, _)| *n).collect();
        self.log(TraceEvent::Lookup {
            node: origin,
            target: Digest32::new(target),
            visited,
            found: closest.len(),
        });
        LookupOutcome {
            closest,
            providers,
            visited,
        }
    }

    /// Delivers the next message. Requests are answered at the addressee;
    /// responses are returned to the caller for the waiting operation.
    fn step(&mut self) -> Step {
        let Some(msg) = self.sched.next() else {
            return Step::Idle;
        };
        let (from, to) = msg.endpoints();
        self.trace.push(TraceEntry {
            seq: self.trace.len() as u64,
            time: self.sched.now(),
            event: TraceEvent::Deliver {
                kind: Cow::Borrowed(msg.kind()),
                from,
                to,
            },
        });
        let k = self.config.k;
        if !self.nodes.contains_key(&to) {
            if !matches!(
                msg,
                Message::Unreachable { .. } | Message::Nodes { .. } | Message::Block { .. }
            ) {
                self.send(Message::Unreachable { from: to, to: from });
            }
            return Step::Handled;
        }
        match msg {
            Message::FindNode {
                from,
                to,
                target,
                providers_for,
            } => {
                let node = self.nodes.get_mut(&to).expect("checked above");
                node.routing.insert(from);
                let closer = node.routing.closest(&target, k);
                let providers = providers_for
                    .and_then(|c| node.records.get(&c))
                    .map(|p| p.iter().copied().collect())
                    .unwrap_or_default();
                self.send(Message::Nodes {
                    from: to,
                    to: from,
                    closer,
                    providers,
                });
                Step::Handled
            }
            Message::AddProvider { from, to, cid } => {
                let node = self.nodes.get_mut(&to).expect("checked above");
                node.routing.insert(from);
                node.records.entry(cid).or_default().insert(from);
                Step::Handled
            }
            Message::Want { from, to, cid } => {
                let node = self.nodes.get_mut(&to).expect("checked above");
                node.routing.insert(from);
                let data = node.blocks.get(&cid).cloned();
                self.send(Message::Block {
                    from: to,
                    to: from,
                    cid,
                    data,
                });
                Step::Handled
            }
            other => Step::Response(other),
        }
    }

    fn drain(&mut self) {
        while !self.sched.is_idle() {
            self.step();
        }
    }

    /// Stores `blocks` on `node` and publishes a provider record for each
    /// block to the `alpha` closest nodes.
    pub fn provide(
        &mut self,
        node: &NodeHandle,
        blocks: &BlockSet,
    ) -> Result<Vec<ContentId>, SwarmError> {
        self.member(node)?;
        self.journal.push(SwarmOp::Provide {
            node: node.id,
            cids: blocks.cids().copied().collect(),
        });
        Ok(self.provide_inner(node.id, blocks))
    }

    fn provide_inner(&mut self, origin: NodeId, blocks: &BlockSet) -> Vec<ContentId> {
        {
            let n = self.nodes.get_mut(&origin).expect("member");
            for (cid, data) in blocks.iter() {
                n.blocks.insert(*cid, data.to_vec());
            }
        }
        let mut stored = Vec::with_capacity(blocks.len());
        for cid in blocks.cids().copied() {
            let outcome = self.lookup(origin, provider_key(&cid), None);
            let holders: Vec<NodeId> = outcome
                .closest
                .iter()
                .take(self.config.alpha)
                .copied()
                .collect();
            for h in &holders {
                if *h == origin {
                    let n = self.nodes.get_mut(&origin).expect("member");
                    n.records.entry(cid).or_default().insert(origin);
                } else {
                    self.send(Message::AddProvider {
                        from: origin,
                        to: *h,
                        cid,
                    });
                }
            }
            self.drain();
            self.log(TraceEvent::Provide {
                node: origin,
                cid,
                holders,
            });
            stored.push(cid);
        }
        stored
    }

    pub fn find_providers(
        &mut self,
        node: &NodeHandle,
        cid: &ContentId,
    ) -> Result<BTreeSet<NodeId>, SwarmError> {
        self.lookup_providers(node, cid).map(|o| o.providers)
    }

    /// Provider lookup with its statistics.
    pub fn lookup_providers(
        &mut self,
        node: &NodeHandle,
        cid: &ContentId,
    ) -> Result<LookupOutcome, SwarmError> {
        self.member(node)?;
        self.journal.push(SwarmOp::Lookup {
            node: node.id,
            cid: *cid,
        });
        Ok(self.lookup(node.id, provider_key(cid), Some(*cid)))
    }

    /// Retrieves a DAG by want-list exchange, verifying every block, then
    /// re-provides what it fetched.
    pub fn fetch(&mut self, node: &NodeHandle, root: &ContentId) -> Result<Vec<u8>, SwarmError> {
        self.member(node)?;
        self.journal.push(SwarmOp::Fetch {
            node: node.id,
            root: *root,
        });
        match self.fetch_inner(node.id, root) {
            Ok(data) => Ok(data),
            Err(e) => {
                self.log(TraceEvent::FetchFailed {
                    node: node.id,
                    root: *root,
                    reason: e.to_string(),
                });
                Err(e)
            }
        }
    }

    fn fetch_inner(&mut self, me: NodeId, root: &ContentId) -> Result<Vec<u8>, SwarmError> {
        let mut want = WantList::new(me);
        want.push(*root);
        let mut fetched = BlockSet::new();
        let mut have: BTreeMap<ContentId, Vec<u8>> = BTreeMap::new();
        while let Some(cid) = want.pop() {
            let local = self.nodes[&me]
                .blocks
                .get(&cid)
                .filter(|b| cid_of_block(b) == cid)
                .cloned();
            let bytes = match local {
                Some(b) => b,
                None => {
                    let b = self.exchange(me, &cid)?;
                    fetched.insert(b.clone());
                    b
                }
            };
            if let DagNode::Interior { links, .. } = DagNode::decode(&bytes) {
                for l in links {
                    if !have.contains_key(&l) {
                        want.push(l);
                    }
                }
            }
            have.insert(cid, bytes);
        }
        let data = dag::reassemble(root, |c| have.get(c).cloned())?;
        if !fetched.is_empty() {
            self.provide_inner(me, &fetched);
        }
        self.log(TraceEvent::Fetch {
            node: me,
            root: *root,
            blocks: have.len(),
            bytes: data.len(),
        });
        Ok(data)
    }

    /// Asks each provider in turn (nearest first) for one block until a
    /// hash-valid copy arrives.
    fn exchange(&mut self, me: NodeId, cid: &ContentId) -> Result<Vec<u8>, SwarmError> {
        let providers = self.lookup(me, provider_key(cid), Some(*cid)).providers;
        let mut order: Vec<NodeId> = providers.into_iter().filter(|p| *p != me).collect();
        order.sort_by_key(|p| p.distance(me.as_bytes()));
        let mut saw_corrupt = false;
        for p in order {
            self.send(Message::Want {
                from: me,
                to: p,
                cid: *cid,
            });
            let reply = loop {
                match self.step() {
                    Step::Response(Message::Block {
                        from,
                        to,
                        cid: c,
                        data,
                    }) if to == me && from == p && c == *cid => break data,
                    Step::Response(Message::Unreachable { from, to }) if to == me && from == p => {
                        break None
                    }
                    Step::Response(_) | Step::Handled => {}
                    Step::Idle => break None,
                }
            };
            match reply {
                Some(bytes) if cid_of_block(&bytes) == *cid => return Ok(bytes),
                Some(_) => {
                    saw_corrupt = true;
                    self.log(TraceEvent::CorruptBlock {
                        node: me,
                        from: p,
                        cid: *cid,
                    });
                }
                None => {}
            }
        }
        if saw_corrupt {
            Err(SwarmError::BlockCorrupt(*cid))
        } else {
            Err(SwarmError::ContentUnavailable(*cid))
        }
    }
}
