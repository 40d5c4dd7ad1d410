//! On-disk workspace: manifest, ledger, private data, swarm journal and
//! blocks, keystore and derived views.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use glass_core::canonical;
use glass_core::chaincode::PUBLIC_COLLECTION;
use glass_core::cid::ContentId;
use glass_core::crypto::{Digest32, SigningPublic};
use glass_core::dag::{BlockSet, DEFAULT_CHUNK_SIZE};
use glass_core::deployment::Deployment;
use glass_core::ledger::{Channel, LedgerError};
use glass_core::portal::{KeystoreFile, Wallet};
use glass_core::scenario::registry_snapshot;
use glass_core::swarm::SwarmSnapshot;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const LEDGER: &str = "ledger.jsonl";
pub const PRIVATE: &str = "private_data.json";
pub const SWARM: &str = "swarm.json";
pub const BLOCKS: &str = "blocks";
pub const KEYSTORE: &str = "keystore";
pub const REGISTRY: &str = "registry.json";
pub const TRACE: &str = "trace.jsonl";
pub const CREDENTIALS: &str = "credentials";
pub const CHALLENGES: &str = "challenges.json";
const LOCK: &str = ".lock";
const FORMAT: &str = "glass-workspace/1";

/// Optional input to `init`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub seed: Option<u64>,
    pub chunk_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrgEntry {
    pub name: String,
    pub root_public: SigningPublic,
}

/// Written once by `init`; a pure function of the seed and chunk size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub chunk_size: usize,
    pub orgs: Vec<OrgEntry>,
    pub collections: Vec<String>,
    pub swarm_fingerprint: Digest32,
    pub files: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockManifest {
    roots: Vec<ContentId>,
    blocks: Vec<ContentId>,
}

/// Exclusive writer token; the lock file disappears when this drops.
pub struct Lock(PathBuf);

impl Lock {
    fn acquire(root: &Path) -> Result<Self, CliError> {
        let path = root.join(LOCK);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Lock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(root.display().to_string()))
            }
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::json(path, &e))
}

/// Replaces `path` via a sibling temporary file so readers never see a
/// half-written file.
pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_canonical<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let bytes = canonical::to_canonical(value)
        .map_err(|e| CliError::failed("canonical", format!("{}: {e}", path.display())))?;
    write(path, &bytes)
}

pub fn valid_name(name: &str) -> Result<(), CliError> {
    let ok = !name.is_empty()
        && name.len() <= 64
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "invalid name {name:?}: use 1-64 letters, digits, '-' or '_'"
        )))
    }
}

pub struct Workspace {
    root: PathBuf,
    manifest: Manifest,
    pub deployment: Deployment,
    _lock: Option<Lock>,
}

impl Workspace {
    pub fn init(root: &Path, seed: u64, chunk_size: usize) -> Result<Self, CliError> {
        if root.join(MANIFEST).exists() {
            return Err(CliError::Usage(format!(
                "{} is already an initialized workspace",
                root.display()
            )));
        }
        if chunk_size == 0 {
            return Err(CliError::Usage("chunk_size must be at least 1".into()));
        }
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let lock = Lock::acquire(root)?;
        let deployment = Deployment::new(seed);
        let manifest = Manifest {
            format: FORMAT.into(),
            seed,
            chunk_size,
            orgs: deployment
                .orgs()
                .iter()
                .map(|o| OrgEntry {
                    name: o.name().to_string(),
                    root_public: o.root_public(),
                })
                .collect(),
            collections: deployment
                .channel
                .config()
                .collections
                .keys()
                .cloned()
                .collect(),
            swarm_fingerprint: deployment.swarm_key().fingerprint(),
            files: [LEDGER, PRIVATE, SWARM, BLOCKS, KEYSTORE, REGISTRY, TRACE]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        };
        write_canonical(&root.join(MANIFEST), &manifest)?;
        fs::create_dir_all(root.join(KEYSTORE)).map_err(|e| CliError::io(root, e))?;
        let ws = Workspace {
            root: root.to_path_buf(),
            manifest,
            deployment,
            _lock: Some(lock),
        };
        ws.save()?;
        Ok(ws)
    }

    /// Loads the workspace. Writers take the lock; `verify` additionally
    /// refuses a ledger that fails integrity checks.
    pub fn open(root: &Path, writer: bool, verify: bool) -> Result<Self, CliError> {
        let manifest_path = root.join(MANIFEST);
        if !manifest_path.exists() {
            return Err(CliError::Usage(format!(
                "{} is not an initialized workspace (run `glass init`)",
                root.display()
            )));
        }
        let lock = if writer {
            Some(Lock::acquire(root)?)
        } else {
            None
        };
        let manifest: Manifest = read_json(&manifest_path)?;
        if manifest.format != FORMAT {
            return Err(CliError::Usage(format!(
                "unsupported workspace format {}",
                manifest.format
            )));
        }
        let ledger_path = root.join(LEDGER);
        let ledger = String::from_utf8(read(&ledger_path)?).map_err(|_| {
            CliError::failed(
                "corrupt-ledger",
                format!("{}: not UTF-8", ledger_path.display()),
            )
        })?;
        let private = read(&root.join(PRIVATE))?;
        let swarm: SwarmSnapshot = read_json(&root.join(SWARM))?;
        let blocks = load_blocks(&root.join(BLOCKS))?;
        let deployment = Deployment::restore(manifest.seed, &ledger, &private, &swarm, &blocks)?;
        if verify {
            if let Err(fault) = deployment.channel.verify_report() {
                return Err(CliError::failed(
                    "corrupt-ledger",
                    format!(
                        "ledger fails verification at height {}: {}",
                        fault.height.map_or("?".into(), |h| h.to_string()),
                        fault.reason
                    ),
                ));
            }
        }
        Ok(Workspace {
            root: root.to_path_buf(),
            manifest,
            deployment,
            _lock: lock,
        })
    }

    /// Reads only the ledger and private data, for integrity checks that
    /// must work even when the rest of the workspace is damaged.
    pub fn load_channel(root: &Path) -> Result<Result<Channel, LedgerError>, CliError> {
        let manifest: Manifest = read_json(&root.join(MANIFEST))?;
        let config = Deployment::new(manifest.seed).channel.config().clone();
        let ledger = String::from_utf8_lossy(&read(&root.join(LEDGER))?).into_owned();
        let private = read(&root.join(PRIVATE))?;
        Ok(Channel::load(config, &ledger, &private))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn seed(&self) -> u64 {
        self.manifest.seed
    }

    pub fn chunk_size(&self) -> usize {
        self.manifest.chunk_size
    }

    pub fn save(&self) -> Result<(), CliError> {
        let d = &self.deployment;
        write(&self.root.join(LEDGER), d.channel.export_jsonl().as_bytes())?;
        write(&self.root.join(PRIVATE), &d.channel.export_private())?;
        write_canonical(&self.root.join(SWARM), &d.network.snapshot())?;
        write(&self.root.join(REGISTRY), &registry_snapshot(d))?;
        write(&self.root.join(TRACE), d.network.trace_jsonl().as_bytes())?;
        self.save_blocks()
    }

    fn save_blocks(&self) -> Result<(), CliError> {
        let dir = self.root.join(BLOCKS);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let blocks = self.deployment.network.all_blocks();
        for (cid, data) in blocks.iter() {
            let path = dir.join(cid.to_text());
            if !path.exists() {
                write(&path, data)?;
            }
        }
        let roots = self
            .deployment
            .channel
            .collection_state(PUBLIC_COLLECTION)
            .hashes
            .map(|h| h.keys().filter_map(|k| ContentId::parse(k).ok()).collect())
            .unwrap_or_default();
        write_canonical(
            &dir.join(glass_core::dag::MANIFEST_FILE),
            &BlockManifest {
                roots,
                blocks: blocks.cids().copied().collect(),
            },
        )
    }

    fn keystore_path(&self, name: &str) -> PathBuf {
        self.root.join(KEYSTORE).join(format!("{name}.json"))
    }

    pub fn has_wallet(&self, name: &str) -> bool {
        self.keystore_path(name).exists()
    }

    pub fn load_wallet(&self, name: &str) -> Result<Wallet, CliError> {
        valid_name(name)?;
        let path = self.keystore_path(name);
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "no identity named {name} (run `glass identity create {name}`)"
            )));
        }
        let file: KeystoreFile = read_json(&path)?;
        Ok(Wallet::from_keystore(&file)?)
    }

    pub fn save_wallet(&self, name: &str, wallet: &Wallet) -> Result<(), CliError> {
        valid_name(name)?;
        write_canonical(&self.keystore_path(name), &wallet.to_keystore())
    }

    pub fn wallet_names(&self) -> Result<Vec<String>, CliError> {
        let dir = self.root.join(KEYSTORE);
        let mut names = Vec::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(names),
            Err(e) => return Err(CliError::io(&dir, e)),
        };
        for entry in entries {
            let entry = entry.map_err(|e| CliError::io(&dir, e))?;
            let file = entry.file_name().to_string_lossy().into_owned();
            if let Some(name) = file.strip_suffix(".json") {
                names.push(name.to_string());
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn challenges(&self) -> Result<BTreeMap<String, String>, CliError> {
        let path = self.root.join(CHALLENGES);
        if path.exists() {
            read_json(&path)
        } else {
            Ok(BTreeMap::new())
        }
    }

    pub fn save_challenges(&self, map: &BTreeMap<String, String>) -> Result<(), CliError> {
        write_canonical(&self.root.join(CHALLENGES), map)
    }
}

fn load_blocks(dir: &Path) -> Result<BlockSet, CliError> {
    let manifest_path = dir.join(glass_core::dag::MANIFEST_FILE);
    if !manifest_path.exists() {
        return Ok(BlockSet::new());
    }
    let manifest: BlockManifest = read_json(&manifest_path)?;
    let mut set = BlockSet::new();
    for cid in manifest.blocks {
        let path = dir.join(cid.to_text());
        let data = read(&path)?;
        set.insert_verified(cid, data)
            .map_err(|e| CliError::failed("block-corrupt", format!("{}: {e}", path.display())))?;
    }
    Ok(set)
}

pub fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}
