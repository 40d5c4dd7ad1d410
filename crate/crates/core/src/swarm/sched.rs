use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::cid::ContentId;

use super::routing::NodeId;

#[derive(Debug, Clone)]
pub(crate) enum Message {
    FindNode {
        from: NodeId,
        to: NodeId,
        target: [u8; 32],
        providers_for: Option<ContentId>,
    },
    Nodes {
        from: NodeId,
        to: NodeId,
        closer: Vec<NodeId>,
        providers: Vec<NodeId>,
    },
    AddProvider {
        from: NodeId,
        to: NodeId,
        cid: ContentId,
    },
    Want {
        from: NodeId,
        to: NodeId,
        cid: ContentId,
    },
    Block {
        from: NodeId,
        to: NodeId,
        cid: ContentId,
        data: Option<Vec<u8>>,
    },
    /// Synthesised reply when the addressee is no longer a member.
    Unreachable { from: NodeId, to: NodeId },
}

impl Message {
    pub(crate) fn kind(&self) -> &'static str {
        match self {
            Message::FindNode { .. } => "find_node",
            Message::Nodes { .. } => "nodes",
            Message::AddProvider { .. } => "add_provider",
            Message::Want { .. } => "want",
            Message::Block { .. } => "block",
            Message::Unreachable { .. } => "unreachable",
        }
    }

    pub(crate) fn endpoints(&self) -> (NodeId, NodeId) {
        match self {
            Message::FindNode { from, to, .. }
            | Message::Nodes { from, to, .. }
            | Message::AddProvider { from, to, .. }
            | Message::Want { from, to, .. }
            | Message::Block { from, to, .. }
            | Message::Unreachable { from, to } => (*from, *to),
        }
    }
}

struct Pending {
    at: u64,
    seq: u64,
    msg: Message,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Virtual-time event queue. Ties on delivery time break by send order.
#[derive(Default)]
pub(crate) struct Scheduler {
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<Pending>>,
}

impl Scheduler {
    pub(crate) fn now(&self) -> u64 {
        self.now
    }

    pub(crate) fn send(&mut self, msg: Message, latency: u64) {
        self.seq += 1;
        self.queue.push(Reverse(Pending {
            at: self.now + latency,
            seq: self.seq,
            msg,
        }));
    }

    pub(crate) fn next(&mut self) -> Option<Message> {
        let Reverse(p) = self.queue.pop()?;
        self.now = p.at;
        Some(p.msg)
    }

    pub(crate) fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }
}
