//! Single-peer permissioned ledger.
//!
//! A [`Channel`] holds the member orgs, the data collections and the block
//! chain. Every submitted invocation becomes one transaction in one block,
//! whether the chaincode succeeded or not. Collection values live off-ledger
//! in the private store; the ledger only commits their SHA-256 digests.
//!
//! Concurrency: `submit` takes `&mut self`, so a channel has exactly one
//! writer at a time. Share a channel across threads behind a `Mutex` (or an
//! `RwLock` for concurrent readers of [`Channel::blocks`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::crypto::{
    b58, sha256, sha256_concat, verify, Digest32, Signature, SigningKeypair, SigningPublic,
};

const CERT_DOMAIN: &[u8] = b"glass/member-cert/v1";

/// Opaque bytes, rendered as base58btc.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bytes(#[serde(with = "b58")] pub Vec<u8>);

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bytes({} bytes)", self.0.len())
    }
}

impl From<Vec<u8>> for Bytes {
    fn from(v: Vec<u8>) -> Self {
        Bytes(v)
    }
}

impl From<&[u8]> for Bytes {
    fn from(v: &[u8]) -> Self {
        Bytes(v.to_vec())
    }
}

impl From<&str> for Bytes {
    fn from(v: &str) -> Self {
        Bytes(v.as_bytes().to_vec())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChaincodeError {
    #[error("access-denied({org}, {resource})")]
    AccessDenied { org: String, resource: String },
    #[error("already-exists({0})")]
    AlreadyExists(String),
    #[error("not-found({0})")]
    NotFound(String),
    #[error("invalid-did({0})")]
    InvalidDid(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("unknown chaincode {0}")]
    UnknownChaincode(String),
    #[error("writes are not allowed in a query")]
    ReadOnly,
}

impl ChaincodeError {
    pub fn code(&self) -> &'static str {
        match self {
            ChaincodeError::AccessDenied { .. } => "access-denied",
            ChaincodeError::AlreadyExists(_) => "already-exists",
            ChaincodeError::NotFound(_) => "not-found",
            ChaincodeError::InvalidDid(_) => "invalid-did",
            ChaincodeError::Validation(_) => "validation",
            ChaincodeError::BadArgs(_) => "bad-args",
            ChaincodeError::UnknownFunction(_) => "unknown-function",
            ChaincodeError::UnknownChaincode(_) => "unknown-chaincode",
            ChaincodeError::ReadOnly => "read-only",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("channel config: {0}")]
    Config(String),
    #[error("enrollment: {0}")]
    Enrollment(String),
    #[error("auth: {0}")]
    Auth(String),
    /// The invocation was recorded as rejected at `height`.
    #[error("{error} (rejected at height {height})")]
    Rejected { error: ChaincodeError, height: u64 },
    #[error("{0}")]
    Query(ChaincodeError),
    #[error("corrupt ledger at height {height}: {reason}")]
    Corrupt { height: u64, reason: String },
}

impl LedgerError {
    pub fn code(&self) -> &'static str {
        match self {
            LedgerError::Config(_) => "config",
            LedgerError::Enrollment(_) => "enrollment",
            LedgerError::Auth(_) => "auth",
            LedgerError::Rejected { error, .. } | LedgerError::Query(error) => error.code(),
            LedgerError::Corrupt { .. } => "corrupt-ledger",
        }
    }

    pub fn chaincode_error(&self) -> Option<&ChaincodeError> {
        match self {
            LedgerError::Rejected { error, .. } | LedgerError::Query(error) => Some(error),
            _ => None,
        }
    }
}

/// An organisation and its root signing key.
#[derive(Debug, Clone)]
pub struct Org {
    name: String,
    root: SigningKeypair,
}

fn cert_message(org: &str, public: &SigningPublic) -> Vec<u8> {
    let mut m = Vec::with_capacity(CERT_DOMAIN.len() + org.len() + 34);
    m.extend_from_slice(CERT_DOMAIN);
    m.push(0);
    m.extend_from_slice(org.as_bytes());
    m.push(0);
    m.extend_from_slice(public.as_bytes());
    m
}

impl Org {
    pub fn new(name: impl Into<String>, root: SigningKeypair) -> Self {
        Org {
            name: name.into(),
            root,
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(name: impl Into<String>, rng: &mut R) -> Self {
        Org::new(name, SigningKeypair::generate(rng))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root_keys(&self) -> &SigningKeypair {
        &self.root
    }

    pub fn root_public(&self) -> SigningPublic {
        self.root.public()
    }

    /// Issues a member identity signed by this org's root.
    pub fn enroll_member(&self, keys: SigningKeypair) -> MemberIdentity {
        let cert = self.root.sign(&cert_message(&self.name, &keys.public()));
        MemberIdentity {
            org: self.name.clone(),
            keys,
            cert,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MemberIdentity {
    org: String,
    keys: SigningKeypair,
    cert: Signature,
}

impl MemberIdentity {
    /// Assembles an identity from parts without checking the certificate.
    pub fn from_parts(org: impl Into<String>, keys: SigningKeypair, cert: Signature) -> Self {
        MemberIdentity {
            org: org.into(),
            keys,
            cert,
        }
    }

    pub fn org(&self) -> &str {
        &self.org
    }

    pub fn keys(&self) -> &SigningKeypair {
        &self.keys
    }

    pub fn cert(&self) -> &Signature {
        &self.cert
    }

    pub fn invoker(&self) -> Invoker {
        Invoker {
            org: self.org.clone(),
            public: self.keys.public(),
            cert: self.cert,
        }
    }
}

/// Public part of a member identity, as recorded in transactions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Invoker {
    pub org: String,
    pub public: SigningPublic,
    pub cert: Signature,
}

impl Invoker {
    pub fn cert_valid(&self, root: &SigningPublic) -> bool {
        verify(root, &cert_message(&self.org, &self.public), &self.cert)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub invoker: Invoker,
    pub chaincode: String,
    pub function: String,
    pub args: Vec<Bytes>,
    /// Digests of transient (never recorded) inputs.
    pub transient_hashes: BTreeMap<String, Digest32>,
    pub logical_time: u64,
    pub signature: Signature,
}

#[derive(Serialize)]
struct UnsignedTx<'a> {
    invoker: &'a Invoker,
    chaincode: &'a str,
    function: &'a str,
    args: &'a [Bytes],
    transient_hashes: &'a BTreeMap<String, Digest32>,
    logical_time: u64,
}

impl Transaction {
    fn signing_bytes(&self) -> Vec<u8> {
        canonical::to_canonical(&UnsignedTx {
            invoker: &self.invoker,
            chaincode: &self.chaincode,
            function: &self.function,
            args: &self.args,
            transient_hashes: &self.transient_hashes,
            logical_time: self.logical_time,
        })
        .expect("transactions are canonical")
    }

    pub fn signature_valid(&self) -> bool {
        verify(&self.invoker.public, &self.signing_bytes(), &self.signature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Committed,
    Rejected,
}

impl fmt::Display for TxStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxStatus::Committed => "committed",
            TxStatus::Rejected => "rejected",
        })
    }
}

/// A state change produced by a committed transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Write {
    State {
        namespace: String,
        key: String,
        value: Bytes,
    },
    CollectionHash {
        collection: String,
        key: String,
        hash: Digest32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxRecord {
    pub tx: Transaction,
    pub status: TxStatus,
    pub error: Option<String>,
    pub writes: Vec<Write>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerBlock {
    pub height: u64,
    pub prev_hash: Digest32,
    pub txs: Vec<TxRecord>,
    pub block_hash: Digest32,
}

impl LedgerBlock {
    pub fn compute_hash(prev_hash: &Digest32, txs: &[TxRecord]) -> Digest32 {
        let body = canonical::to_canonical(txs).expect("transactions are canonical");
        sha256_concat(&[prev_hash.as_bytes(), &body])
    }

    fn new(height: u64, prev_hash: Digest32, txs: Vec<TxRecord>) -> Self {
        let block_hash = Self::compute_hash(&prev_hash, &txs);
        LedgerBlock {
            height,
            prev_hash,
            txs,
            block_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionConfig {
    pub name: String,
    pub readers: BTreeSet<String>,
    pub writers: BTreeSet<String>,
}

impl CollectionConfig {
    pub fn new<I, J, S, T>(name: impl Into<String>, readers: I, writers: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        CollectionConfig {
            name: name.into(),
            readers: readers.into_iter().map(Into::into).collect(),
            writers: writers.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Org name to root public key.
    pub orgs: BTreeMap<String, SigningPublic>,
    pub collections: BTreeMap<String, CollectionConfig>,
}

/// On-ledger state: chaincode key-value state plus collection digests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldState {
    pub state: BTreeMap<String, BTreeMap<String, Bytes>>,
    pub collections: BTreeMap<String, BTreeMap<String, Digest32>>,
}

impl WorldState {
    fn apply(&mut self, w: &Write) {
        match w {
            Write::State {
                namespace,
                key,
                value,
            } => {
                self.state
                    .entry(namespace.clone())
                    .or_default()
                    .insert(key.clone(), value.clone());
            }
            Write::CollectionHash {
                collection,
                key,
                hash,
            } => {
                self.collections
                    .entry(collection.clone())
                    .or_default()
                    .insert(key.clone(), *hash);
            }
        }
    }

    /// Rebuilds state by applying committed writes from genesis onward.
    pub fn replay(blocks: &[LedgerBlock]) -> WorldState {
        let mut ws = WorldState::default();
        for rec in blocks.iter().flat_map(|b| &b.txs) {
            if rec.status == TxStatus::Committed {
                for w in &rec.writes {
                    ws.apply(w);
                }
            }
        }
        ws
    }

    pub fn to_canonical(&self) -> Vec<u8> {
        canonical::to_canonical(self).expect("world state is canonical")
    }
}

/// Result bytes, write set and private values keyed by (collection, key).
type Execution = (Vec<u8>, Vec<Write>, BTreeMap<(String, String), Vec<u8>>);

/// Off-ledger collection values: collection name to key to value.
pub type PrivateStore = BTreeMap<String, BTreeMap<String, Bytes>>;

/// Off-ledger values of one collection together with their on-ledger digests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionState<'a> {
    pub values: Option<&'a BTreeMap<String, Bytes>>,
    pub hashes: Option<&'a BTreeMap<String, Digest32>>,
}

/// Execution context handed to chaincode for one invocation.
pub struct TxContext<'a> {
    namespace: &'a str,
    invoker: &'a Invoker,
    transient: &'a BTreeMap<String, Vec<u8>>,
    world: &'a WorldState,
    private: &'a PrivateStore,
    collections: &'a BTreeMap<String, CollectionConfig>,
    read_only: bool,
    writes: Vec<Write>,
    pending_state: BTreeMap<String, Vec<u8>>,
    pending_private: BTreeMap<(String, String), Vec<u8>>,
}

impl<'a> TxContext<'a> {
    pub fn invoker(&self) -> &Invoker {
        self.invoker
    }

    pub fn invoker_org(&self) -> &str {
        &self.invoker.org
    }

    pub fn transient(&self, name: &str) -> Option<&[u8]> {
        self.transient.get(name).map(Vec::as_slice)
    }

    pub fn get_state(&self, key: &str) -> Option<Vec<u8>> {
        if let Some(v) = self.pending_state.get(key) {
            return Some(v.clone());
        }
        self.world
            .state
            .get(self.namespace)
            .and_then(|m| m.get(key))
            .map(|b| b.0.clone())
    }

    /// Committed state entries of this chaincode whose key starts with `prefix`.
    pub fn state_by_prefix(&self, prefix: &str) -> Vec<(String, Vec<u8>)> {
        let mut out: BTreeMap<String, Vec<u8>> = self
            .world
            .state
            .get(self.namespace)
            .map(|m| {
                m.range(prefix.to_string()..)
                    .take_while(|(k, _)| k.starts_with(prefix))
                    .map(|(k, v)| (k.clone(), v.0.clone()))
                    .collect()
            })
            .unwrap_or_default();
        for (k, v) in &self.pending_state {
            if k.starts_with(prefix) {
                out.insert(k.clone(), v.clone());
            }
        }
        out.into_iter().collect()
    }

    pub fn put_state(&mut self, key: &str, value: Vec<u8>) -> Result<(), ChaincodeError> {
        if self.read_only {
            return Err(ChaincodeError::ReadOnly);
        }
        self.writes.push(Write::State {
            namespace: self.namespace.to_string(),
            key: key.to_string(),
            value: Bytes(value.clone()),
        });
        self.pending_state.insert(key.to_string(), value);
        Ok(())
    }

    fn collection(&self, name: &str) -> Result<&'a CollectionConfig, ChaincodeError> {
        self.collections
            .get(name)
            .ok_or_else(|| ChaincodeError::NotFound(format!("collection {name}")))
    }

    fn denied(&self, collection: &str) -> ChaincodeError {
        ChaincodeError::AccessDenied {
            org: self.invoker.org.clone(),
            resource: collection.to_string(),
        }
    }

    /// Reads a collection value; allowed only for reader orgs.
    pub fn collection_get(
        &self,
        collection: &str,
        key: &str,
    ) -> Result<Option<Vec<u8>>, ChaincodeError> {
        let cfg = self.collection(collection)?;
        if !cfg.readers.contains(&self.invoker.org) {
            return Err(self.denied(collection));
        }
        if let Some(v) = self
            .pending_private
            .get(&(collection.to_string(), key.to_string()))
        {
            return Ok(Some(v.clone()));
        }
        Ok(self
            .private
            .get(collection)
            .and_then(|m| m.get(key))
            .map(|b| b.0.clone()))
    }

    /// Writes a collection value off-ledger and its digest on-ledger;
    /// allowed only for writer orgs.
    pub fn collection_put(
        &mut self,
        collection: &str,
        key: &str,
        value: Vec<u8>,
    ) -> Result<(), ChaincodeError> {
        let cfg = self.collection(collection)?;
        if !cfg.writers.contains(&self.invoker.org) {
            return Err(self.denied(collection));
        }
        if self.read_only {
            return Err(ChaincodeError::ReadOnly);
        }
        self.writes.push(Write::CollectionHash {
            collection: collection.to_string(),
            key: key.to_string(),
            hash: sha256(&value),
        });
        self.pending_private
            .insert((collection.to_string(), key.to_string()), value);
        Ok(())
    }

    /// On-ledger digest of a collection entry. Visible to every member.
    pub fn collection_hash(&self, collection: &str, key: &str) -> Option<Digest32> {
        if let Some(v) = self
            .pending_private
            .get(&(collection.to_string(), key.to_string()))
        {
            return Some(sha256(v));
        }
        self.world
            .collections
            .get(collection)
            .and_then(|m| m.get(key))
            .copied()
    }
}

pub trait Chaincode: Send + Sync {
    fn name(&self) -> &str;
    fn invoke(
        &self,
        ctx: &mut TxContext<'_>,
        function: &str,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Receipt {
    pub block_height: u64,
    pub tx_index: usize,
    #[serde(with = "b58")]
    pub result: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub height: u64,
    pub org: String,
    pub chaincode: String,
    pub function: String,
    pub status: TxStatus,
}

/// First failure found by [`Channel::verify_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainFault {
    /// Offending block, when the fault is tied to one.
    pub height: Option<u64>,
    pub reason: String,
}

impl fmt::Display for ChainFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.height {
            Some(h) => write!(f, "height {h}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

pub struct Channel {
    config: ChannelConfig,
    chaincodes: BTreeMap<String, Arc<dyn Chaincode>>,
    blocks: Vec<LedgerBlock>,
    world: WorldState,
    private: PrivateStore,
}

impl fmt::Debug for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Channel")
            .field("orgs", &self.config.orgs.keys().collect::<Vec<_>>())
            .field("height", &self.height())
            .finish_non_exhaustive()
    }
}

pub fn create_channel(
    orgs: &[Org],
    collections: Vec<CollectionConfig>,
) -> Result<Channel, LedgerError> {
    let mut org_map = BTreeMap::new();
    for o in orgs {
        if org_map
            .insert(o.name().to_string(), o.root_public())
            .is_some()
        {
            return Err(LedgerError::Config(format!("duplicate org {}", o.name())));
        }
    }
    let mut coll_map = BTreeMap::new();
    for c in collections {
        if coll_map.contains_key(&c.name) {
            return Err(LedgerError::Config(format!(
                "duplicate collection {}",
                c.name
            )));
        }
        coll_map.insert(c.name.clone(), c);
    }
    Channel::new(ChannelConfig {
        orgs: org_map,
        collections: coll_map,
    })
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Result<Self, LedgerError> {
        validate_config(&config)?;
        Ok(Channel {
            config,
            chaincodes: BTreeMap::new(),
            blocks: vec![LedgerBlock::new(0, Digest32::ZERO, Vec::new())],
            world: WorldState::default(),
            private: PrivateStore::new(),
        })
    }

    /// Restores a channel from an exported ledger and private store. Every
    /// ledger line must be canonical JSON; world state is rebuilt by replay.
    /// Integrity is checked separately by [`Channel::verify_report`].
    pub fn load(
        config: ChannelConfig,
        ledger_jsonl: &str,
        private_json: &[u8],
    ) -> Result<Self, LedgerError> {
        validate_config(&config)?;
        let mut blocks = Vec::new();
        for (i, line) in ledger_jsonl.lines().enumerate() {
            let block: LedgerBlock =
                canonical::from_canonical(line.as_bytes()).map_err(|e| LedgerError::Corrupt {
                    height: i as u64,
                    reason: e.to_string(),
                })?;
            blocks.push(block);
        }
        if blocks.is_empty() {
            return Err(LedgerError::Corrupt {
                height: 0,
                reason: "missing genesis block".into(),
            });
        }
        let private: PrivateStore =
            canonical::from_canonical(private_json).map_err(|e| LedgerError::Corrupt {
                height: blocks.len() as u64 - 1,
                reason: format!("private store: {e}"),
            })?;
        let world = WorldState::replay(&blocks);
        Ok(Channel {
            config,
            chaincodes: BTreeMap::new(),
            blocks,
            world,
            private,
        })
    }

    pub fn install(&mut self, chaincode: Arc<dyn Chaincode>) {
        self.chaincodes
            .insert(chaincode.name().to_string(), chaincode);
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[LedgerBlock] {
        &self.blocks
    }

    /// Height of the newest block (genesis is 0).
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn world_state(&self) -> &WorldState {
        &self.world
    }

    pub fn collection_state(&self, name: &str) -> CollectionState<'_> {
        CollectionState {
            values: self.private.get(name),
            hashes: self.world.collections.get(name),
        }
    }

    pub fn enroll(&self, org: &Org, keys: SigningKeypair) -> Result<MemberIdentity, LedgerError> {
        match self.config.orgs.get(org.name()) {
            Some(root) if *root == org.root_public() => Ok(org.enroll_member(keys)),
            Some(_) => Err(LedgerError::Enrollment(format!(
                "root key mismatch for {}",
                org.name()
            ))),
            None => Err(LedgerError::Enrollment(format!(
                "unknown org {}",
                org.name()
            ))),
        }
    }

    fn authenticate(&self, identity: &MemberIdentity) -> Result<Invoker, LedgerError> {
        let inv = identity.invoker();
        let root = self
            .config
            .orgs
            .get(&inv.org)
            .ok_or_else(|| LedgerError::Auth(format!("unknown org {}", inv.org)))?;
        if !inv.cert_valid(root) {
            return Err(LedgerError::Auth(format!(
                "certificate not issued by {}",
                inv.org
            )));
        }
        Ok(inv)
    }

    /// Logical time the next transaction will carry.
    pub fn next_logical_time(&self) -> u64 {
        self.blocks
            .iter()
            .flat_map(|b| &b.txs)
            .map(|r| r.tx.logical_time)
            .max()
            .map_or(1, |t| t + 1)
    }

    fn execute(
        &self,
        invoker: &Invoker,
        chaincode: &str,
        function: &str,
        args: &[Vec<u8>],
        transient: &BTreeMap<String, Vec<u8>>,
        read_only: bool,
    ) -> Result<Execution, ChaincodeError> {
        let cc = self
            .chaincodes
            .get(chaincode)
            .ok_or_else(|| ChaincodeError::UnknownChaincode(chaincode.to_string()))?;
        let mut ctx = TxContext {
            namespace: chaincode,
            invoker,
            transient,
            world: &self.world,
            private: &self.private,
            collections: &self.config.collections,
            read_only,
            writes: Vec::new(),
            pending_state: BTreeMap::new(),
            pending_private: BTreeMap::new(),
        };
        let result = cc.invoke(&mut ctx, function, args)?;
        Ok((result, ctx.writes, ctx.pending_private))
    }

    /// Executes a chaincode function and appends the transaction. Failed
    /// invocations are appended too, flagged rejected, with no writes.
    pub fn submit(
        &mut self,
        identity: &MemberIdentity,
        chaincode: &str,
        function: &str,
        args: Vec<Vec<u8>>,
        transient: BTreeMap<String, Vec<u8>>,
    ) -> Result<Receipt, LedgerError> {
        let invoker = self.authenticate(identity)?;
        let mut tx = Transaction {
            invoker,
            chaincode: chaincode.to_string(),
            function: function.to_string(),
            args: args.iter().map(|a| Bytes(a.clone())).collect(),
            transient_hashes: transient
                .iter()
                .map(|(k, v)| (k.clone(), sha256(v)))
                .collect(),
            logical_time: self.next_logical_time(),
            signature: Signature::new([0u8; 64]),
        };
        tx.signature = identity.keys().sign(&tx.signing_bytes());

        let outcome = self.execute(&tx.invoker, chaincode, function, &args, &transient, false);
        let height = self.height() + 1;
        let prev = self.blocks.last().expect("genesis").block_hash;
        match outcome {
            Ok((result, writes, private_values)) => {
                for w in &writes {
                    self.world.apply(w);
                }
                for ((coll, key), value) in private_values {
                    self.private
                        .entry(coll)
                        .or_default()
                        .insert(key, Bytes(value));
                }
                let rec = TxRecord {
                    tx,
                    status: TxStatus::Committed,
                    error: None,
                    writes,
                };
                self.blocks.push(LedgerBlock::new(height, prev, vec![rec]));
                Ok(Receipt {
                    block_height: height,
                    tx_index: 0,
                    result,
                })
            }
            Err(error) => {
                let rec = TxRecord {
                    tx,
                    status: TxStatus::Rejected,
                    error: Some(error.to_string()),
                    writes: Vec::new(),
                };
                self.blocks.push(LedgerBlock::new(height, prev, vec![rec]));
                Err(LedgerError::Rejected { error, height })
            }
        }
    }

    /// Runs a chaincode function read-only without recording anything.
    pub fn evaluate(
        &self,
        identity: &MemberIdentity,
        chaincode: &str,
        function: &str,
        args: Vec<Vec<u8>>,
    ) -> Result<Vec<u8>, LedgerError> {
        let invoker = self.authenticate(identity)?;
        self.execute(&invoker, chaincode, function, &args, &BTreeMap::new(), true)
            .map(|(r, _, _)| r)
            .map_err(LedgerError::Query)
    }

    pub fn verify_chain(&self) -> bool {
        self.verify_report().is_ok()
    }

    /// Checks hash linkage, transaction signatures and certificates, logical
    /// time order, replayed state and the collection digest bindings.
    pub fn verify_report(&self) -> Result<(), ChainFault> {
        let fault = |h: u64, r: String| ChainFault {
            height: Some(h),
            reason: r,
        };
        let mut prev = Digest32::ZERO;
        let mut last_time = 0u64;
        for (i, b) in self.blocks.iter().enumerate() {
            let h = i as u64;
            if b.height != h {
                return Err(fault(h, format!("height field is {}", b.height)));
            }
            if b.prev_hash != prev {
                return Err(fault(h, "previous-hash link broken".into()));
            }
            if LedgerBlock::compute_hash(&b.prev_hash, &b.txs) != b.block_hash {
                return Err(fault(h, "block hash mismatch".into()));
            }
            if h == 0 && !b.txs.is_empty() {
                return Err(fault(h, "genesis must be empty".into()));
            }
            for rec in &b.txs {
                let inv = &rec.tx.invoker;
                let Some(root) = self.config.orgs.get(&inv.org) else {
                    return Err(fault(h, format!("unknown org {}", inv.org)));
                };
                if !inv.cert_valid(root) {
                    return Err(fault(h, "invoker certificate invalid".into()));
                }
                if !rec.tx.signature_valid() {
                    return Err(fault(h, "transaction signature invalid".into()));
                }
                if rec.tx.logical_time <= last_time {
                    return Err(fault(h, "logical time not increasing".into()));
                }
                last_time = rec.tx.logical_time;
                if rec.status == TxStatus::Rejected && !rec.writes.is_empty() {
                    return Err(fault(h, "rejected transaction carries writes".into()));
                }
            }
            prev = b.block_hash;
        }
        if WorldState::replay(&self.blocks) != self.world {
            return Err(ChainFault {
                height: None,
                reason: "world state differs from replay".into(),
            });
        }
        self.verify_collections()
    }

    fn verify_collections(&self) -> Result<(), ChainFault> {
        let empty_v = BTreeMap::new();
        let empty_h = BTreeMap::new();
        let names: BTreeSet<&String> = self
            .private
            .keys()
            .chain(self.world.collections.keys())
            .collect();
        for name in names {
            let values = self.private.get(name).unwrap_or(&empty_v);
            let hashes = self.world.collections.get(name).unwrap_or(&empty_h);
            for (key, value) in values {
                match hashes.get(key) {
                    Some(h) if *h == sha256(&value.0) => {}
                    Some(_) => {
                        return Err(ChainFault {
                            height: None,
                            reason: format!(
                                "collection {name} key {key}: value does not match committed hash"
                            ),
                        })
                    }
                    None => {
                        return Err(ChainFault {
                            height: None,
                            reason: format!("collection {name} key {key}: no committed hash"),
                        })
                    }
                }
            }
            if let Some(key) = hashes.keys().find(|k| !values.contains_key(*k)) {
                return Err(ChainFault {
                    height: None,
                    reason: format!("collection {name} key {key}: value missing"),
                });
            }
        }
        Ok(())
    }

    /// One canonical JSON block per line.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&canonical::to_canonical_string(b).expect("blocks are canonical"));
            out.push('\n');
        }
        out
    }

    pub fn export_private(&self) -> Vec<u8> {
        canonical::to_canonical(&self.private).expect("private store is canonical")
    }

    pub fn audit_rows(&self) -> Vec<AuditRow> {
        self.blocks
            .iter()
            .flat_map(|b| {
                b.txs.iter().map(move |r| AuditRow {
                    height: b.height,
                    org: r.tx.invoker.org.clone(),
                    chaincode: r.tx.chaincode.clone(),
                    function: r.tx.function.clone(),
                    status: r.status,
                })
            })
            .collect()
    }
}

fn validate_config(config: &ChannelConfig) -> Result<(), LedgerError> {
    if config.orgs.is_empty() {
        return Err(LedgerError::Config(
            "a channel needs at least one org".into(),
        ));
    }
    for (name, c) in &config.collections {
        if *name != c.name {
            return Err(LedgerError::Config(format!(
                "collection key {name} does not match its name"
            )));
        }
        for o in c.readers.iter().chain(&c.writers) {
            if !config.orgs.contains_key(o) {
                return Err(LedgerError::Config(format!(
                    "collection {name} names unknown org {o}"
                )));
            }
        }
    }
    Ok(())
}

/// Fixed-width audit table.
pub fn format_audit_table(rows: &[AuditRow]) -> String {
    let headers = ["HEIGHT", "ORG", "CHAINCODE", "FUNCTION", "STATUS"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.height.to_string(),
                r.org.clone(),
                r.chaincode.clone(),
                r.function.clone(),
                r.status.to_string(),
            ]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |vals: [&str; 5], out: &mut String| {
        let parts: Vec<String> = vals
            .iter()
            .zip(widths)
            .map(|(v, w)| format!("{v:<w$}"))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(headers, &mut out);
    for row in &cells {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]], &mut out);
    }
    out
}
