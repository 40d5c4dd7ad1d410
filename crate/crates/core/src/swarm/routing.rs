use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cid::ContentId;
use crate::crypto::{sha256, Digest32, SigningPublic};

pub const ID_BITS: usize = 256;

/// Node address: SHA-256 of the node's signing public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(Digest32);

impl NodeId {
    pub fn from_public(public: &SigningPublic) -> Self {
        NodeId(sha256(public.as_bytes()))
    }

    pub fn from_digest(d: Digest32) -> Self {
        NodeId(d)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        self.0.as_bytes()
    }

    pub fn distance(&self, target: &[u8; 32]) -> [u8; 32] {
        xor(self.as_bytes(), target)
    }

    /// XOR distance as four big-endian words; orders exactly like
    /// [`NodeId::distance`] but compares without a byte loop.
    pub fn distance_key(&self, target: &[u8; 32]) -> [u64; 4] {
        let a = self.as_bytes();
        std::array::from_fn(|w| {
            let word = |x: &[u8; 32]| u64::from_be_bytes(x[w * 8..w * 8 + 8].try_into().unwrap());
            word(a) ^ word(target)
        })
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = self.0.to_base58();
        write!(f, "NodeId({}…)", &text[..8.min(text.len())])
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_base58())
    }
}

pub fn xor(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    let mut out = [0u8; 32];
    for i in 0..32 {
        out[i] = a[i] ^ b[i];
    }
    out
}

/// Index of the highest set bit of a distance (255 = most significant), or
/// `None` for distance zero.
pub fn bucket_index(distance: &[u8; 32]) -> Option<usize> {
    for (i, byte) in distance.iter().enumerate() {
        if *byte != 0 {
            let bit = 7 - byte.leading_zeros() as usize;
            return Some((31 - i) * 8 + bit);
        }
    }
    None
}

/// DHT key under which provider records for `cid` are placed.
pub fn provider_key(cid: &ContentId) -> [u8; 32] {
    *sha256(&cid.multihash()).as_bytes()
}

/// 256 k-buckets. Each bucket is ordered least-recently seen first.
#[derive(Debug, Clone)]
pub struct RoutingTable {
    local: NodeId,
    k: usize,
    buckets: Vec<Vec<NodeId>>,
    /// Every id across all buckets, in insertion order.
    known: Vec<NodeId>,
}

impl RoutingTable {
    pub fn new(local: NodeId, k: usize) -> Self {
        RoutingTable {
            local,
            k,
            buckets: vec![Vec::new(); ID_BITS],
            known: Vec::new(),
        }
    }

    pub fn local(&self) -> NodeId {
        self.local
    }

    /// Records contact with `id`. A full bucket keeps its existing entries
    /// (simulated peers never go stale, so the LRU ping always succeeds).
    pub fn insert(&mut self, id: NodeId) -> bool {
        let Some(idx) = bucket_index(&self.local.distance(id.as_bytes())) else {
            return false;
        };
        let bucket = &mut self.buckets[idx];
        if let Some(pos) = bucket.iter().position(|n| *n == id) {
            let n = bucket.remove(pos);
            bucket.push(n);
            true
        } else if bucket.len() < self.k {
            bucket.push(id);
            self.known.push(id);
            true
        } else {
            false
        }
    }

    pub fn remove(&mut self, id: &NodeId) {
        if let Some(idx) = bucket_index(&self.local.distance(id.as_bytes())) {
            let before = self.buckets[idx].len();
            self.buckets[idx].retain(|n| n != id);
            if self.buckets[idx].len() != before {
                self.known.retain(|n| n != id);
            }
        }
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        bucket_index(&self.local.distance(id.as_bytes()))
            .map(|idx| self.buckets[idx].contains(id))
            .unwrap_or(false)
    }

    pub fn bucket(&self, idx: usize) -> &[NodeId] {
        &self.buckets[idx]
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Up to `n` known ids ordered by XOR distance to `target`.
    pub fn closest(&self, target: &[u8; 32], n: usize) -> Vec<NodeId> {
        let mut all: Vec<([u64; 4], NodeId)> = self
            .known
            .iter()
            .map(|id| (id.distance_key(target), *id))
            .collect();
        if n == 0 {
            return Vec::new();
        }
        if all.len() > n {
            all.select_nth_unstable_by_key(n - 1, |(d, _)| *d);
            all.truncate(n);
        }
        all.sort_unstable_by_key(|(d, _)| *d);
        all.into_iter().take(n).map(|(_, id)| id).collect()
    }
}
