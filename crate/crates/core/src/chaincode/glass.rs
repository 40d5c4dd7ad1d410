use serde::{Deserialize, Serialize};

use super::{arg_text, expect_args, json_result};
use crate::canonical;
use crate::cid::ContentId;
use crate::crypto::WrappedKey;
use crate::ledger::{Chaincode, ChaincodeError, CollectionConfig, TxContext};

pub const GLASS_CHAINCODE: &str = "glass-ipfs";
pub const PUBLIC_COLLECTION: &str = "glass-public";
pub const PRIVATE_COLLECTION: &str = "glass-private";
/// Transient input carrying the wrapped key, so it never lands in tx args.
pub const WRAPPED_KEY_TRANSIENT: &str = "wrapped_key";

/// Public collection readable by both orgs, private one by the portal org
/// only; either org may create triplets.
pub fn glass_collections(portal_org: &str, partner_org: &str) -> Vec<CollectionConfig> {
    vec![
        CollectionConfig::new(
            PUBLIC_COLLECTION,
            [portal_org, partner_org],
            [portal_org, partner_org],
        ),
        CollectionConfig::new(PRIVATE_COLLECTION, [portal_org], [portal_org, partner_org]),
    ]
}

/// Metadata unlocking one encrypted credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triplet {
    pub cid: ContentId,
    pub wrapped_key: WrappedKey,
    pub uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PublicEntry {
    cid: ContentId,
    uri: String,
}

/// Triplet store. Public halves go to the public collection, wrapped keys
/// to the private one, both keyed by CID text.
#[derive(Debug, Default)]
pub struct GlassIpfs;

fn parse_cid(text: &str) -> Result<ContentId, ChaincodeError> {
    ContentId::parse(text).map_err(|e| ChaincodeError::BadArgs(e.to_string()))
}

impl GlassIpfs {
    fn create(&self, ctx: &mut TxContext<'_>, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        expect_args(args, 2)?;
        let cid = parse_cid(arg_text(args, 0, "cid")?)?;
        let uri = arg_text(args, 1, "uri")?;
        if uri.is_empty() {
            return Err(ChaincodeError::Validation("uri is empty".into()));
        }
        let raw_key = ctx
            .transient(WRAPPED_KEY_TRANSIENT)
            .ok_or_else(|| ChaincodeError::BadArgs("missing transient wrapped_key".into()))?
            .to_vec();
        let _: WrappedKey = canonical::from_canonical(&raw_key)
            .map_err(|e| ChaincodeError::BadArgs(format!("wrapped_key: {e}")))?;
        let key = cid.to_text();
        if ctx.collection_hash(PUBLIC_COLLECTION, &key).is_some() {
            return Err(ChaincodeError::AlreadyExists(key));
        }
        let public = json_result(&PublicEntry {
            cid,
            uri: uri.to_string(),
        })?;
        ctx.collection_put(PUBLIC_COLLECTION, &key, public)?;
        ctx.collection_put(PRIVATE_COLLECTION, &key, raw_key)?;
        Ok(b"ok".to_vec())
    }

    fn read(&self, ctx: &mut TxContext<'_>, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        expect_args(args, 1)?;
        let key = parse_cid(arg_text(args, 0, "cid")?)?.to_text();
        ctx.collection_get(PUBLIC_COLLECTION, &key)?
            .ok_or(ChaincodeError::NotFound(key))
    }

    fn read_key(
        &self,
        ctx: &mut TxContext<'_>,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError> {
        expect_args(args, 1)?;
        let key = parse_cid(arg_text(args, 0, "cid")?)?.to_text();
        ctx.collection_get(PRIVATE_COLLECTION, &key)?
            .ok_or(ChaincodeError::NotFound(key))
    }
}

impl Chaincode for GlassIpfs {
    fn name(&self) -> &str {
        GLASS_CHAINCODE
    }

    fn invoke(
        &self,
        ctx: &mut TxContext<'_>,
        function: &str,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError> {
        match function {
            "create_glass_resource" => self.create(ctx, args),
            "read_glass_resource" => self.read(ctx, args),
            "read_glass_resource_key" => self.read_key(ctx, args),
            other => Err(ChaincodeError::UnknownFunction(other.to_string())),
        }
    }
}

/// Decodes a `read_glass_resource` result into `(cid, uri)`.
pub fn decode_public(bytes: &[u8]) -> Option<(ContentId, String)> {
    let e: PublicEntry = canonical::from_canonical(bytes).ok()?;
    Some((e.cid, e.uri))
}
