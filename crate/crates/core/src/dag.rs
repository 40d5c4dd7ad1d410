//! Chunked Merkle-DAG representation of a resource.
//!
//! Inputs no larger than the chunk size become a single raw leaf. Larger
//! inputs are split into raw leaves joined by interior nodes, each holding
//! at most [`MAX_LINKS`] children. Interior nodes are canonical JSON
//! `{"kind":"interior","links":[..],"sizes":[..]}` and are addressed like
//! any other block.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::cid::{cid_of_block, ContentId};

pub const DEFAULT_CHUNK_SIZE: usize = 262_144;
pub const MAX_LINKS: usize = 174;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("block-not-found({0})")]
    BlockNotFound(ContentId),
    #[error("block-corrupt({0})")]
    BlockCorrupt(ContentId),
    #[error("malformed dag node {cid}: {reason}")]
    Malformed { cid: ContentId, reason: String },
    #[error("chunk size must be at least 1")]
    InvalidChunkSize,
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagNode {
    RawLeaf(Vec<u8>),
    /// `sizes[i]` is the number of data bytes reachable through `links[i]`.
    Interior {
        links: Vec<ContentId>,
        sizes: Vec<u64>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InteriorRepr {
    kind: String,
    links: Vec<ContentId>,
    sizes: Vec<u64>,
}

impl DagNode {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            DagNode::RawLeaf(bytes) => bytes.clone(),
            DagNode::Interior { links, sizes } => canonical::to_canonical(&InteriorRepr {
                kind: "interior".into(),
                links: links.clone(),
                sizes: sizes.clone(),
            })
            .expect("interior nodes hold only text and integers"),
        }
    }

    /// A block is interior iff it is exactly the canonical encoding of a
    /// well-formed interior node; anything else is a raw leaf.
    pub fn decode(bytes: &[u8]) -> DagNode {
        if bytes.first() == Some(&b'{') {
            if let Ok(repr) = canonical::from_canonical::<InteriorRepr>(bytes) {
                if repr.kind == "interior"
                    && repr.links.len() >= 2
                    && repr.links.len() == repr.sizes.len()
                {
                    return DagNode::Interior {
                        links: repr.links,
                        sizes: repr.sizes,
                    };
                }
            }
        }
        DagNode::RawLeaf(bytes.to_vec())
    }

    pub fn total_size(&self) -> u64 {
        match self {
            DagNode::RawLeaf(b) => b.len() as u64,
            DagNode::Interior { sizes, .. } => sizes.iter().sum(),
        }
    }
}

/// Blocks keyed by their own ContentId.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockSet {
    blocks: BTreeMap<ContentId, Vec<u8>>,
}

impl BlockSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `data` under its computed id and returns that id.
    pub fn insert(&mut self, data: Vec<u8>) -> ContentId {
        let cid = cid_of_block(&data);
        self.blocks.insert(cid, data);
        cid
    }

    /// Stores a block under a claimed id, rejecting it if the hash disagrees.
    pub fn insert_verified(&mut self, cid: ContentId, data: Vec<u8>) -> Result<(), DagError> {
        if cid_of_block(&data) != cid {
            return Err(DagError::BlockCorrupt(cid));
        }
        self.blocks.insert(cid, data);
        Ok(())
    }

    pub fn get(&self, cid: &ContentId) -> Option<&[u8]> {
        self.blocks.get(cid).map(Vec::as_slice)
    }

    pub fn contains(&self, cid: &ContentId) -> bool {
        self.blocks.contains_key(cid)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn cids(&self) -> impl Iterator<Item = &ContentId> {
        self.blocks.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ContentId, &[u8])> {
        self.blocks.iter().map(|(c, b)| (c, b.as_slice()))
    }

    /// True iff every entry hashes to its key.
    pub fn verify(&self) -> bool {
        self.blocks
            .iter()
            .all(|(cid, data)| cid_of_block(data) == *cid)
    }

    /// Writes one file per block, named by cid text, plus a manifest.
    pub fn export_dir(&self, root: &ContentId, dir: &Path) -> Result<(), DagError> {
        fs::create_dir_all(dir).map_err(io)?;
        for (cid, data) in &self.blocks {
            fs::write(dir.join(cid.to_text()), data).map_err(io)?;
        }
        let manifest = Manifest {
            root: *root,
            blocks: self.blocks.keys().copied().collect(),
        };
        fs::write(
            dir.join(MANIFEST_FILE),
            canonical::to_canonical(&manifest).expect("manifest is canonical"),
        )
        .map_err(io)
    }

    pub fn import_dir(dir: &Path) -> Result<(ContentId, BlockSet), DagError> {
        let raw = fs::read(dir.join(MANIFEST_FILE)).map_err(io)?;
        let manifest: Manifest =
            canonical::from_canonical(&raw).map_err(|e| DagError::Io(e.to_string()))?;
        let mut set = BlockSet::new();
        for cid in manifest.blocks {
            let path = dir.join(cid.to_text());
            if !path.exists() {
                return Err(DagError::BlockNotFound(cid));
            }
            set.insert_verified(cid, fs::read(path).map_err(io)?)?;
        }
        Ok((manifest.root, set))
    }
}

impl FromIterator<Vec<u8>> for BlockSet {
    fn from_iter<I: IntoIterator<Item = Vec<u8>>>(iter: I) -> Self {
        let mut set = BlockSet::new();
        for b in iter {
            set.insert(b);
        }
        set
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    root: ContentId,
    blocks: Vec<ContentId>,
}

fn io(e: std::io::Error) -> DagError {
    DagError::Io(e.to_string())
}

pub fn build_dag(data: &[u8], chunk_size: usize) -> Result<(ContentId, BlockSet), DagError> {
    if chunk_size == 0 {
        return Err(DagError::InvalidChunkSize);
    }
    let mut blocks = BlockSet::new();
    if data.len() <= chunk_size {
        let root = blocks.insert(data.to_vec());
        return Ok((root, blocks));
    }
    let mut level: Vec<(ContentId, u64)> = data
        .chunks(chunk_size)
        .map(|c| (blocks.insert(c.to_vec()), c.len() as u64))
        .collect();
    while level.len() > 1 {
        let groups = level.len().div_ceil(MAX_LINKS);
        let base = level.len() / groups;
        let extra = level.len() % groups;
        let mut next = Vec::with_capacity(groups);
        let mut rest = level.as_slice();
        for g in 0..groups {
            let take = base + usize::from(g < extra);
            let (group, tail) = rest.split_at(take);
            rest = tail;
            let node = DagNode::Interior {
                links: group.iter().map(|(c, _)| *c).collect(),
                sizes: group.iter().map(|(_, s)| *s).collect(),
            };
            let size = node.total_size();
            next.push((blocks.insert(node.encode()), size));
        }
        level = next;
    }
    Ok((level[0].0, blocks))
}

/// Rebuilds the original bytes, hashing every fetched block before use.
pub fn reassemble<F>(root: &ContentId, mut lookup: F) -> Result<Vec<u8>, DagError>
where
    F: FnMut(&ContentId) -> Option<Vec<u8>>,
{
    let mut out = Vec::new();
    append(root, None, &mut lookup, &mut out)?;
    Ok(out)
}

fn append<F>(
    cid: &ContentId,
    expected: Option<u64>,
    lookup: &mut F,
    out: &mut Vec<u8>,
) -> Result<(), DagError>
where
    F: FnMut(&ContentId) -> Option<Vec<u8>>,
{
    let bytes = lookup(cid).ok_or(DagError::BlockNotFound(*cid))?;
    if cid_of_block(&bytes) != *cid {
        return Err(DagError::BlockCorrupt(*cid));
    }
    let start = out.len();
    match DagNode::decode(&bytes) {
        DagNode::RawLeaf(data) => out.extend_from_slice(&data),
        DagNode::Interior { links, sizes } => {
            for (link, size) in links.iter().zip(&sizes) {
                append(link, Some(*size), lookup, out)?;
            }
        }
    }
    if let Some(want) = expected {
        let got = (out.len() - start) as u64;
        if got != want {
            return Err(DagError::Malformed {
                cid: *cid,
                reason: format!("expected {want} bytes, got {got}"),
            });
        }
    }
    Ok(())
}
