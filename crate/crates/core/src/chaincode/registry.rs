use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{arg, arg_json, arg_text, expect_args, json_result};
use crate::canonical;
use crate::credential::{CredentialSchema, RegistryView};
use crate::crypto::{verify, Signature};
use crate::did::{Did, DidDocument};
use crate::ledger::{Chaincode, ChaincodeError, TxContext, WorldState};

pub const REGISTRY_CHAINCODE: &str = "trust-registry";
/// The only org allowed to write schemas, issuers and apps.
pub const AUTHORITY_ORG: &str = "accreditation.org";

const DID_PREFIX_KEY: &str = "did/";
const SCHEMA_PREFIX_KEY: &str = "schema/";
const ISSUER_PREFIX_KEY: &str = "issuer/";
const APP_PREFIX_KEY: &str = "app/";
const VERIFICATION_DOMAIN: &[u8] = b"glass/verification-challenge/v1\0";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustPolicyEntry {
    pub issuer: Did,
    pub country_domain: String,
    pub permitted_types: BTreeSet<String>,
}

/// `[A-Z]{2}` followed by any number of `.label` parts, labels being
/// ASCII letters and underscores.
pub fn valid_country_domain(domain: &str) -> bool {
    let mut parts = domain.split('.');
    let head = parts.next().unwrap_or_default();
    head.len() == 2
        && head.bytes().all(|b| b.is_ascii_uppercase())
        && parts.all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_alphabetic() || b == b'_'))
}

/// Bytes a verifier signs to open a verification session.
pub fn verification_message(verifier: &Did, challenge: &[u8]) -> Vec<u8> {
    let mut m = VERIFICATION_DOMAIN.to_vec();
    m.extend_from_slice(verifier.as_str().as_bytes());
    m.push(0);
    m.extend_from_slice(challenge);
    m
}

/// Everything the registry holds, for offline verification.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryDump {
    pub dids: BTreeMap<Did, DidDocument>,
    pub schemas: BTreeMap<String, CredentialSchema>,
    pub issuers: Vec<TrustPolicyEntry>,
    pub apps: BTreeSet<Did>,
}

impl RegistryDump {
    pub fn to_canonical(&self) -> Vec<u8> {
        canonical::to_canonical(self).expect("registry dump is canonical")
    }

    pub fn is_trusted_app(&self, did: &Did) -> bool {
        self.apps.contains(did)
    }
}

impl RegistryView for RegistryDump {
    fn resolve_did(&mut self, did: &Did) -> Option<DidDocument> {
        self.dids.get(did).cloned()
    }

    fn is_trusted_issuer(&mut self, did: &Did, credential_type: &str) -> bool {
        self.issuers
            .iter()
            .any(|e| e.issuer == *did && e.permitted_types.contains(credential_type))
    }

    fn get_schema(&mut self, schema_id: &str) -> Option<CredentialSchema> {
        self.schemas.get(schema_id).cloned()
    }
}

/// Reads the registry straight out of committed world state.
pub fn registry_dump(world: &WorldState) -> RegistryDump {
    let mut dump = RegistryDump::default();
    let Some(state) = world.state.get(REGISTRY_CHAINCODE) else {
        return dump;
    };
    for (key, value) in state {
        let v = &value.0;
        if key.starts_with(DID_PREFIX_KEY) {
            if let Ok(doc) = canonical::from_canonical::<DidDocument>(v) {
                dump.dids.insert(doc.did.clone(), doc);
            }
        } else if key.starts_with(SCHEMA_PREFIX_KEY) {
            if let Ok(s) = canonical::from_canonical::<CredentialSchema>(v) {
                dump.schemas.insert(s.schema_id.clone(), s);
            }
        } else if key.starts_with(ISSUER_PREFIX_KEY) {
            if let Ok(e) = canonical::from_canonical::<TrustPolicyEntry>(v) {
                dump.issuers.push(e);
            }
        } else if let Some(did) = key.strip_prefix(APP_PREFIX_KEY) {
            if let Ok(d) = Did::parse(did) {
                dump.apps.insert(d);
            }
        }
    }
    dump
}

/// DID, schema, trusted-issuer and trusted-app registries.
#[derive(Debug, Default)]
pub struct TrustRegistry;

fn require_authority(ctx: &TxContext<'_>, registry: &str) -> Result<(), ChaincodeError> {
    if ctx.invoker_org() == AUTHORITY_ORG {
        Ok(())
    } else {
        Err(ChaincodeError::AccessDenied {
            org: ctx.invoker_org().to_string(),
            resource: registry.to_string(),
        })
    }
}

fn parse_did(text: &str) -> Result<Did, ChaincodeError> {
    Did::parse(text).map_err(|e| ChaincodeError::InvalidDid(e.to_string()))
}

fn resolve(ctx: &TxContext<'_>, did: &Did) -> Result<DidDocument, ChaincodeError> {
    let raw = ctx
        .get_state(&format!("{DID_PREFIX_KEY}{did}"))
        .ok_or_else(|| ChaincodeError::NotFound(did.to_string()))?;
    canonical::from_canonical(&raw).map_err(|e| ChaincodeError::Validation(e.to_string()))
}

fn bool_result(b: bool) -> Vec<u8> {
    if b {
        b"true".to_vec()
    } else {
        b"false".to_vec()
    }
}

fn trusted_issuer(ctx: &TxContext<'_>, did: &Did, credential_type: &str) -> bool {
    ctx.state_by_prefix(&format!("{ISSUER_PREFIX_KEY}{did}/"))
        .into_iter()
        .filter_map(|(_, v)| canonical::from_canonical::<TrustPolicyEntry>(&v).ok())
        .any(|e| e.permitted_types.contains(credential_type))
}

impl TrustRegistry {
    fn register_did(
        &self,
        ctx: &mut TxContext<'_>,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError> {
        expect_args(args, 2)?;
        let doc: DidDocument = arg_json(args, 0, "document")?;
        let proof = Signature::from_slice(arg(args, 1, "proof")?)
            .map_err(|e| ChaincodeError::BadArgs(e.to_string()))?;
        if !doc.derivation_valid() {
            return Err(ChaincodeError::InvalidDid(format!(
                "{} does not derive from its signing key",
                doc.did
            )));
        }
        if !doc.registration_valid(&proof) {
            return Err(ChaincodeError::InvalidDid(format!(
                "{} registration proof does not verify",
                doc.did
            )));
        }
        let key = format!("{DID_PREFIX_KEY}{}", doc.did);
        if ctx.get_state(&key).is_some() {
            return Err(ChaincodeError::AlreadyExists(doc.did.to_string()));
        }
        ctx.put_state(&key, json_result(&doc)?)?;
        Ok(b"ok".to_vec())
    }

    fn register_schema(
        &self,
        ctx: &mut TxContext<'_>,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError> {
        require_authority(ctx, "schema-registry")?;
        expect_args(args, 1)?;
        let schema: CredentialSchema = arg_json(args, 0, "schema")?;
        schema.well_formed().map_err(ChaincodeError::Validation)?;
        let key = format!("{SCHEMA_PREFIX_KEY}{}", schema.schema_id);
        if ctx.get_state(&key).is_some() {
            return Err(ChaincodeError::AlreadyExists(schema.schema_id));
        }
        ctx.put_state(&key, json_result(&schema)?)?;
        Ok(b"ok".to_vec())
    }

    fn register_issuer(
        &self,
        ctx: &mut TxContext<'_>,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError> {
        require_authority(ctx, "issuer-registry")?;
        expect_args(args, 1)?;
        let entry: TrustPolicyEntry = arg_json(args, 0, "entry")?;
        if entry.permitted_types.is_empty() {
            return Err(ChaincodeError::Validation(
                "permitted_types is empty".into(),
            ));
        }
        if entry.permitted_types.iter().any(String::is_empty) {
            return Err(ChaincodeError::Validation("empty credential type".into()));
        }
        if !valid_country_domain(&entry.country_domain) {
            return Err(ChaincodeError::Validation(format!(
                "country domain {:?} is malformed",
                entry.country_domain
            )));
        }
        resolve(ctx, &entry.issuer)?;
        let key = format!(
            "{ISSUER_PREFIX_KEY}{}/{}",
            entry.issuer, entry.country_domain
        );
        if ctx.get_state(&key).is_some() {
            return Err(ChaincodeError::AlreadyExists(format!(
                "{} in {}",
                entry.issuer, entry.country_domain
            )));
        }
        ctx.put_state(&key, json_result(&entry)?)?;
        Ok(b"ok".to_vec())
    }

    fn register_app(
        &self,
        ctx: &mut TxContext<'_>,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError> {
        require_authority(ctx, "app-registry")?;
        expect_args(args, 1)?;
        let did = parse_did(arg_text(args, 0, "did")?)?;
        resolve(ctx, &did)?;
        let key = format!("{APP_PREFIX_KEY}{did}");
        if ctx.get_state(&key).is_some() {
            return Err(ChaincodeError::AlreadyExists(did.to_string()));
        }
        ctx.put_state(&key, b"true".to_vec())?;
        Ok(b"ok".to_vec())
    }

    fn open_verification(
        &self,
        ctx: &mut TxContext<'_>,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError> {
        expect_args(args, 3)?;
        let did = parse_did(arg_text(args, 0, "verifier")?)?;
        let challenge = arg(args, 1, "challenge")?;
        let sig = Signature::from_slice(arg(args, 2, "signature")?)
            .map_err(|e| ChaincodeError::BadArgs(e.to_string()))?;
        let denied = || ChaincodeError::AccessDenied {
            org: ctx.invoker_org().to_string(),
            resource: format!("trusted-apps:{did}"),
        };
        if ctx.get_state(&format!("{APP_PREFIX_KEY}{did}")).is_none() {
            return Err(denied());
        }
        let doc = resolve(ctx, &did)?;
        if !verify(
            &doc.signing_public,
            &verification_message(&did, challenge),
            &sig,
        ) {
            return Err(denied());
        }
        Ok(b"ok".to_vec())
    }
}

impl Chaincode for TrustRegistry {
    fn name(&self) -> &str {
        REGISTRY_CHAINCODE
    }

    fn invoke(
        &self,
        ctx: &mut TxContext<'_>,
        function: &str,
        args: &[Vec<u8>],
    ) -> Result<Vec<u8>, ChaincodeError> {
        match function {
            "register_did" => self.register_did(ctx, args),
            "resolve_did" => {
                expect_args(args, 1)?;
                let did = parse_did(arg_text(args, 0, "did")?)?;
                json_result(&resolve(ctx, &did)?)
            }
            "register_schema" => self.register_schema(ctx, args),
            "get_schema" => {
                expect_args(args, 1)?;
                let id = arg_text(args, 0, "schema_id")?;
                ctx.get_state(&format!("{SCHEMA_PREFIX_KEY}{id}"))
                    .ok_or_else(|| ChaincodeError::NotFound(id.to_string()))
            }
            "register_trusted_issuer" => self.register_issuer(ctx, args),
            "is_trusted_issuer" => {
                expect_args(args, 2)?;
                let did = parse_did(arg_text(args, 0, "did")?)?;
                Ok(bool_result(trusted_issuer(
                    ctx,
                    &did,
                    arg_text(args, 1, "credential_type")?,
                )))
            }
            "register_trusted_app" => self.register_app(ctx, args),
            "is_trusted_app" => {
                expect_args(args, 1)?;
                let did = parse_did(arg_text(args, 0, "did")?)?;
                Ok(bool_result(
                    ctx.get_state(&format!("{APP_PREFIX_KEY}{did}")).is_some(),
                ))
            }
            "open_verification" => self.open_verification(ctx, args),
            other => Err(ChaincodeError::UnknownFunction(other.to_string())),
        }
    }
}
