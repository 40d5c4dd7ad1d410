//! A complete seeded topology: three orgs on one channel, their gateway
//! identities and swarm nodes, plus bootstrap peers.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::chaincode::{glass_collections, GlassIpfs, TrustRegistry, AUTHORITY_ORG};
use crate::crypto::{sha256_concat, SigningKeypair};
use crate::dag::BlockSet;
use crate::ledger::{create_channel, Channel, LedgerError, MemberIdentity, Org};
use crate::portal::PortalSession;
use crate::swarm::{create_network, Network, NodeHandle, SwarmError, SwarmKey, SwarmSnapshot};

pub const PORTAL_ORG: &str = "org1.org";
pub const PARTNER_ORG: &str = "org2.org";
pub const ORG_NAMES: [&str; 3] = [PORTAL_ORG, PARTNER_ORG, AUTHORITY_ORG];
pub const BOOTSTRAP_NODES: usize = 8;

#[derive(Debug, Error)]
pub enum DeploymentError {
    #[error("unknown org {0}")]
    UnknownOrg(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error("persisted channel config does not match seed {0}")]
    SeedMismatch(u64),
}

/// Keys that are regenerated from the seed rather than stored.
struct Infrastructure {
    orgs: Vec<Org>,
    gateways: BTreeMap<String, MemberIdentity>,
    node_keys: Vec<(String, SigningKeypair)>,
    bootstrap_keys: Vec<SigningKeypair>,
    swarm_key: SwarmKey,
}

fn infrastructure(seed: u64) -> Infrastructure {
    let derived = sha256_concat(&[b"glass/deployment/v1", &seed.to_le_bytes()]);
    let mut rng = ChaCha20Rng::from_seed(*derived.as_bytes());
    let orgs: Vec<Org> = ORG_NAMES
        .iter()
        .map(|n| Org::generate(*n, &mut rng))
        .collect();
    let gateways = orgs
        .iter()
        .map(|o| {
            (
                o.name().to_string(),
                o.enroll_member(SigningKeypair::generate(&mut rng)),
            )
        })
        .collect();
    let node_keys = orgs
        .iter()
        .map(|o| (o.name().to_string(), SigningKeypair::generate(&mut rng)))
        .collect();
    let bootstrap_keys = (0..BOOTSTRAP_NODES)
        .map(|_| SigningKeypair::generate(&mut rng))
        .collect();
    let swarm_key = SwarmKey::generate(&mut rng);
    Infrastructure {
        orgs,
        gateways,
        node_keys,
        bootstrap_keys,
        swarm_key,
    }
}

fn node_handles(infra: &Infrastructure) -> BTreeMap<String, NodeHandle> {
    infra
        .node_keys
        .iter()
        .map(|(org, k)| (org.clone(), NodeHandle::for_public(&k.public())))
        .collect()
}

fn install(channel: &mut Channel) {
    channel.install(Arc::new(GlassIpfs));
    channel.install(Arc::new(TrustRegistry));
}

pub struct Deployment {
    seed: u64,
    orgs: Vec<Org>,
    gateways: BTreeMap<String, MemberIdentity>,
    nodes: BTreeMap<String, NodeHandle>,
    swarm_key: SwarmKey,
    pub channel: Channel,
    pub network: Network,
}

impl Deployment {
    /// Fresh channel at genesis and a swarm of bootstrap plus org nodes.
    pub fn new(seed: u64) -> Self {
        let infra = infrastructure(seed);
        let mut channel = create_channel(&infra.orgs, glass_collections(PORTAL_ORG, PARTNER_ORG))
            .expect("built-in topology is valid");
        install(&mut channel);
        let mut network = create_network(&infra.swarm_key, seed);
        for k in &infra.bootstrap_keys {
            network
                .join(&k.public(), &infra.swarm_key)
                .expect("fresh network admits bootstrap nodes");
        }
        for (_, k) in &infra.node_keys {
            network
                .join(&k.public(), &infra.swarm_key)
                .expect("fresh network admits org nodes");
        }
        let nodes = node_handles(&infra);
        Deployment {
            seed,
            orgs: infra.orgs,
            gateways: infra.gateways,
            nodes,
            swarm_key: infra.swarm_key,
            channel,
            network,
        }
    }

    /// Rebuilds a deployment from persisted ledger, private data and swarm
    /// journal. The channel is not verified here; see `Channel::verify_report`.
    pub fn restore(
        seed: u64,
        ledger_jsonl: &str,
        private_json: &[u8],
        swarm: &SwarmSnapshot,
        blocks: &BlockSet,
    ) -> Result<Self, DeploymentError> {
        let infra = infrastructure(seed);
        let config = create_channel(&infra.orgs, glass_collections(PORTAL_ORG, PARTNER_ORG))?
            .config()
            .clone();
        let mut channel = Channel::load(config, ledger_jsonl, private_json)?;
        install(&mut channel);
        if swarm.seed != seed {
            return Err(DeploymentError::SeedMismatch(seed));
        }
        let network = Network::restore(&infra.swarm_key, swarm, blocks)?;
        let nodes = node_handles(&infra);
        Ok(Deployment {
            seed,
            orgs: infra.orgs,
            gateways: infra.gateways,
            nodes,
            swarm_key: infra.swarm_key,
            channel,
            network,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn orgs(&self) -> &[Org] {
        &self.orgs
    }

    pub fn swarm_key(&self) -> &SwarmKey {
        &self.swarm_key
    }

    pub fn gateway(&self, org: &str) -> Result<&MemberIdentity, DeploymentError> {
        self.gateways
            .get(org)
            .ok_or_else(|| DeploymentError::UnknownOrg(org.to_string()))
    }

    pub fn node(&self, org: &str) -> Result<NodeHandle, DeploymentError> {
        self.nodes
            .get(org)
            .copied()
            .ok_or_else(|| DeploymentError::UnknownOrg(org.to_string()))
    }

    /// A portal session acting through `org`'s gateway and swarm node.
    pub fn session(&mut self, org: &str) -> Result<PortalSession<'_>, DeploymentError> {
        let identity = self.gateway(org)?.clone();
        let node = self.node(org)?;
        Ok(PortalSession::new(
            identity,
            node,
            &mut self.channel,
            &mut self.network,
        ))
    }

    /// Gateway identity and channel together, for verifier-side calls.
    pub fn verifier_parts(
        &mut self,
        org: &str,
    ) -> Result<(&mut Channel, MemberIdentity), DeploymentError> {
        let identity = self.gateway(org)?.clone();
        Ok((&mut self.channel, identity))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_topology_is_reproducible() {
        let a = Deployment::new(7);
        let b = Deployment::new(7);
        let c = Deployment::new(8);
        assert_eq!(a.channel.config(), b.channel.config());
        assert_ne!(a.channel.config(), c.channel.config());
        assert_eq!(a.network.trace_jsonl(), b.network.trace_jsonl());
        assert_eq!(a.network.len(), BOOTSTRAP_NODES + ORG_NAMES.len());
        assert_eq!(a.channel.height(), 0);
        assert!(a.channel.verify_chain());
    }

    #[test]
    fn restore_from_empty_state() {
        let d = Deployment::new(3);
        let r = Deployment::restore(
            3,
            &d.channel.export_jsonl(),
            &d.channel.export_private(),
            &d.network.snapshot(),
            &d.network.all_blocks(),
        )
        .unwrap();
        assert_eq!(r.network.trace_jsonl(), d.network.trace_jsonl());
        assert_eq!(r.channel.export_jsonl(), d.channel.export_jsonl());
        assert!(matches!(
            Deployment::restore(4, "", b"{}", &d.network.snapshot(), &BlockSet::new()),
            Err(DeploymentError::Ledger(_))
        ));
    }

    #[test]
    fn unknown_org_session() {
        let mut d = Deployment::new(1);
        assert!(matches!(
            d.session("org9.org"),
            Err(DeploymentError::UnknownOrg(_))
        ));
    }
}
