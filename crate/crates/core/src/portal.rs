//! Issuance, distribution, retrieval and verification flows, plus wallets.
//!
//! A [`PortalSession`] acts for one org: it submits through that org's
//! gateway identity and moves content through that org's swarm node. A
//! session borrows the channel and network mutably, so it is single-owner.

use std::collections::BTreeMap;

use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::chaincode::{
    decode_public, verification_message, TrustPolicyEntry, GLASS_CHAINCODE, REGISTRY_CHAINCODE,
    WRAPPED_KEY_TRANSIENT,
};
use crate::cid::ContentId;
use crate::credential::{
    self, Claims, CredentialError, CredentialSchema, RegistryView, VerifiableCredential,
    VerifiablePresentation, VerificationReport,
};
use crate::crypto::{
    decrypt_content, encrypt_content, sha256, unwrap_key, wrap_key, AgreementKeypair, ContentKey,
    CryptoError, Digest32, KeyRecord, SigningKeypair, WrappedKey,
};
use crate::dag::{build_dag, DEFAULT_CHUNK_SIZE};
use crate::did::{Did, DidDocument, PersonKind};
use crate::ledger::{Channel, LedgerError, MemberIdentity, Receipt};
use crate::swarm::{Network, NodeHandle, SwarmError};

pub const URI_SCHEME: &str = "ipfs://";

#[derive(Debug, Error)]
pub enum PortalError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error("issuer-untrusted: {issuer} is not trusted for {credential_type}")]
    IssuerUntrusted {
        issuer: Did,
        credential_type: String,
    },
    #[error("not-the-addressee: the content key was not wrapped for {0}")]
    NotTheAddressee(Did),
    #[error("authentication-failed: ciphertext for {0} does not authenticate")]
    DecryptFailed(ContentId),
    #[error("signature-invalid: credential {0} does not carry a valid issuer signature")]
    SignatureInvalid(String),
    #[error("unsupported uri {0}")]
    UnsupportedUri(String),
    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl PortalError {
    /// Stable short code for scripts and exit reporting.
    pub fn code(&self) -> &'static str {
        match self {
            PortalError::Ledger(e) => e.code(),
            PortalError::Swarm(e) => e.code(),
            PortalError::Credential(e) => e.code(),
            PortalError::IssuerUntrusted { .. } => "issuer-untrusted",
            PortalError::NotTheAddressee(_) => "not-the-addressee",
            PortalError::DecryptFailed(_) => "authentication-failed",
            PortalError::SignatureInvalid(_) => "signature-invalid",
            PortalError::UnsupportedUri(_) => "unsupported-uri",
            PortalError::Malformed { .. } => "malformed",
            PortalError::Crypto(_) => "crypto",
        }
    }
}

fn malformed(what: &'static str) -> impl Fn(canonical::CanonicalError) -> PortalError {
    move |e| PortalError::Malformed {
        what,
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Holding {
    pub credential_id: String,
    pub cid: ContentId,
    pub uri: String,
}

/// A party's keys and the credentials it has been given.
#[derive(Debug, Clone)]
pub struct Wallet {
    did: Did,
    signing: SigningKeypair,
    agreement: AgreementKeypair,
    holdings: Vec<Holding>,
}

/// On-disk wallet form. The only artifact that ever holds secrets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeystoreFile {
    pub did: Did,
    pub signing: KeyRecord,
    pub agreement: KeyRecord,
    pub holdings: Vec<Holding>,
}

impl Wallet {
    pub fn from_keys(signing: SigningKeypair, agreement: AgreementKeypair) -> Self {
        Wallet {
            did: Did::from_signing_public(&signing.public()),
            signing,
            agreement,
            holdings: Vec::new(),
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let signing = SigningKeypair::generate(rng);
        let agreement = AgreementKeypair::generate(rng);
        Wallet::from_keys(signing, agreement)
    }

    pub fn did(&self) -> &Did {
        &self.did
    }

    pub fn signing(&self) -> &SigningKeypair {
        &self.signing
    }

    pub fn agreement(&self) -> &AgreementKeypair {
        &self.agreement
    }

    pub fn holdings(&self) -> &[Holding] {
        &self.holdings
    }

    pub fn add_holding(&mut self, holding: Holding) {
        if !self.holdings.contains(&holding) {
            self.holdings.push(holding);
        }
    }

    pub fn document(&self, kind: PersonKind) -> DidDocument {
        DidDocument::new(self.signing.public(), self.agreement.public(), kind)
    }

    pub fn to_keystore(&self) -> KeystoreFile {
        KeystoreFile {
            did: self.did.clone(),
            signing: self.signing.to_record(),
            agreement: self.agreement.to_record(),
            holdings: self.holdings.clone(),
        }
    }

    pub fn from_keystore(file: &KeystoreFile) -> Result<Self, PortalError> {
        let mut w = Wallet::from_keys(
            SigningKeypair::from_record(&file.signing)?,
            AgreementKeypair::from_record(&file.agreement)?,
        );
        if w.did != file.did {
            return Err(PortalError::Malformed {
                what: "keystore",
                reason: format!("did {} does not match the signing key", file.did),
            });
        }
        w.holdings = file.holdings.clone();
        Ok(w)
    }
}

/// Record left behind when a staged file is purged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub name: String,
    pub digest: Digest32,
    pub len: usize,
}

/// The portal's server-side scratch storage.
#[derive(Debug, Default, Clone)]
pub struct StagingStore {
    files: BTreeMap<String, Vec<u8>>,
    tombstones: Vec<Tombstone>,
}

impl StagingStore {
    pub fn stage(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    /// Drops a file, leaving a tombstone with its digest.
    pub fn purge(&mut self, name: &str) -> Option<Tombstone> {
        let bytes = self.files.remove(name)?;
        let t = Tombstone {
            name: name.to_string(),
            digest: sha256(&bytes),
            len: bytes.len(),
        };
        self.tombstones.push(t.clone());
        Some(t)
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.files.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn tombstones(&self) -> &[Tombstone] {
        &self.tombstones
    }

    /// True if any staged file contains `needle`.
    pub fn contains_bytes(&self, needle: &[u8]) -> bool {
        !needle.is_empty()
            && self
                .files
                .values()
                .any(|f| f.windows(needle.len()).any(|w| w == needle))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionRecord {
    pub credential_id: String,
    pub cid: ContentId,
    pub uri: String,
    pub wrapped_key: WrappedKey,
    pub receipt: Receipt,
}

/// What the issuer side gets back: the distribution record and its own
/// copy of the signed credential.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issuance {
    pub record: DistributionRecord,
    pub credential: VerifiableCredential,
}

/// Registry view backed by the ledger. Every lookup is a recorded
/// transaction, so verifications show up in the audit trail.
pub struct LedgerRegistry<'a> {
    channel: &'a mut Channel,
    identity: &'a MemberIdentity,
}

impl<'a> LedgerRegistry<'a> {
    pub fn new(channel: &'a mut Channel, identity: &'a MemberIdentity) -> Self {
        LedgerRegistry { channel, identity }
    }

    fn query(&mut self, function: &str, args: Vec<Vec<u8>>) -> Option<Vec<u8>> {
        self.channel
            .submit(
                self.identity,
                REGISTRY_CHAINCODE,
                function,
                args,
                BTreeMap::new(),
            )
            .ok()
            .map(|r| r.result)
    }
}

impl RegistryView for LedgerRegistry<'_> {
    fn resolve_did(&mut self, did: &Did) -> Option<DidDocument> {
        let raw = self.query("resolve_did", vec![did.as_str().into()])?;
        canonical::from_canonical(&raw).ok()
    }

    fn is_trusted_issuer(&mut self, did: &Did, credential_type: &str) -> bool {
        self.query(
            "is_trusted_issuer",
            vec![did.as_str().into(), credential_type.into()],
        )
        .is_some_and(|r| r == b"true")
    }

    fn get_schema(&mut self, schema_id: &str) -> Option<CredentialSchema> {
        let raw = self.query("get_schema", vec![schema_id.into()])?;
        canonical::from_canonical(&raw).ok()
    }
}

pub struct PortalSession<'a> {
    identity: MemberIdentity,
    node: NodeHandle,
    channel: &'a mut Channel,
    network: &'a mut Network,
    staging: StagingStore,
    chunk_size: usize,
}

impl<'a> PortalSession<'a> {
    pub fn new(
        identity: MemberIdentity,
        node: NodeHandle,
        channel: &'a mut Channel,
        network: &'a mut Network,
    ) -> Self {
        PortalSession {
            identity,
            node,
            channel,
            network,
            staging: StagingStore::default(),
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn identity(&self) -> &MemberIdentity {
        &self.identity
    }

    pub fn org(&self) -> &str {
        self.identity.org()
    }

    pub fn node(&self) -> &NodeHandle {
        &self.node
    }

    pub fn channel(&self) -> &Channel {
        self.channel
    }

    pub fn network(&self) -> &Network {
        self.network
    }

    pub fn staging(&self) -> &StagingStore {
        &self.staging
    }

    fn submit(
        &mut self,
        chaincode: &str,
        function: &str,
        args: Vec<Vec<u8>>,
        transient: BTreeMap<String, Vec<u8>>,
    ) -> Result<Receipt, PortalError> {
        Ok(self
            .channel
            .submit(&self.identity, chaincode, function, args, transient)?)
    }

    fn evaluate(&self, function: &str, args: Vec<Vec<u8>>) -> Result<Vec<u8>, PortalError> {
        Ok(self
            .channel
            .evaluate(&self.identity, REGISTRY_CHAINCODE, function, args)?)
    }

    /// Registers the wallet's DID document with a proof of key possession.
    pub fn onboard(&mut self, wallet: &Wallet, kind: PersonKind) -> Result<Did, PortalError> {
        let doc = wallet.document(kind);
        let proof = doc.sign_registration(wallet.signing());
        let body = canonical::to_canonical(&doc).map_err(malformed("did document"))?;
        self.submit(
            REGISTRY_CHAINCODE,
            "register_did",
            vec![body, proof.as_bytes().to_vec()],
            BTreeMap::new(),
        )?;
        Ok(doc.did)
    }

    pub fn register_schema(&mut self, schema: &CredentialSchema) -> Result<Receipt, PortalError> {
        let body = canonical::to_canonical(schema).map_err(malformed("schema"))?;
        self.submit(
            REGISTRY_CHAINCODE,
            "register_schema",
            vec![body],
            BTreeMap::new(),
        )
    }

    pub fn register_trusted_issuer(
        &mut self,
        entry: &TrustPolicyEntry,
    ) -> Result<Receipt, PortalError> {
        let body = canonical::to_canonical(entry).map_err(malformed("trust policy entry"))?;
        self.submit(
            REGISTRY_CHAINCODE,
            "register_trusted_issuer",
            vec![body],
            BTreeMap::new(),
        )
    }

    pub fn register_trusted_app(&mut self, did: &Did) -> Result<Receipt, PortalError> {
        self.submit(
            REGISTRY_CHAINCODE,
            "register_trusted_app",
            vec![did.as_str().into()],
            BTreeMap::new(),
        )
    }

    /// Issues a credential, encrypts it, distributes the ciphertext on the
    /// swarm and records the triplet. Trust and schema checks run as
    /// unrecorded queries first, so a refused issuance leaves the ledger
    /// untouched.
    pub fn issue_and_distribute<R: RngCore + CryptoRng>(
        &mut self,
        issuer: &Wallet,
        subject: &Did,
        schema_id: &str,
        claims: Claims,
        rng: &mut R,
    ) -> Result<Issuance, PortalError> {
        let schema: CredentialSchema =
            canonical::from_canonical(&self.evaluate("get_schema", vec![schema_id.into()])?)
                .map_err(malformed("schema"))?;
        let trusted = self.evaluate(
            "is_trusted_issuer",
            vec![
                issuer.did().as_str().into(),
                schema.credential_type.as_str().into(),
            ],
        )?;
        if trusted != b"true" {
            return Err(PortalError::IssuerUntrusted {
                issuer: issuer.did().clone(),
                credential_type: schema.credential_type,
            });
        }
        let subject_doc: DidDocument = canonical::from_canonical(
            &self.evaluate("resolve_did", vec![subject.as_str().into()])?,
        )
        .map_err(malformed("did document"))?;

        let vc = credential::issue(
            issuer.signing(),
            issuer.did(),
            subject,
            &schema,
            claims,
            self.channel.next_logical_time(),
        )?;
        let staged_name = format!("plaintext/{}", vc.credential_id);
        self.staging.stage(&staged_name, vc.to_canonical());

        let key = ContentKey::generate(rng);
        let sealed = {
            let plain = self.staging.files.get(&staged_name).expect("just staged");
            encrypt_content(plain, &key)
        };
        self.staging.purge(&staged_name);

        let (cid, blocks) = build_dag(&sealed, self.chunk_size).map_err(SwarmError::from)?;
        for (c, data) in blocks.iter() {
            self.staging.stage(format!("blocks/{c}"), data.to_vec());
        }
        self.network.provide(&self.node, &blocks)?;

        let wrapped = wrap_key(&key, &subject_doc.agreement_public, rng)?;
        let uri = format!("{URI_SCHEME}{cid}");
        let wk_bytes = canonical::to_canonical(&wrapped).map_err(malformed("wrapped key"))?;
        let receipt = self.submit(
            GLASS_CHAINCODE,
            "create_glass_resource",
            vec![cid.to_text().into_bytes(), uri.clone().into_bytes()],
            BTreeMap::from([(WRAPPED_KEY_TRANSIENT.to_string(), wk_bytes)]),
        )?;
        Ok(Issuance {
            record: DistributionRecord {
                credential_id: vc.credential_id.clone(),
                cid,
                uri,
                wrapped_key: wrapped,
                receipt,
            },
            credential: vc,
        })
    }

    /// Reads the triplet, fetches the ciphertext, unwraps the key with the
    /// subject's agreement secret and checks the issuer signature.
    pub fn retrieve_credential(
        &mut self,
        subject: &mut Wallet,
        cid: &ContentId,
    ) -> Result<VerifiableCredential, PortalError> {
        let public = self
            .submit(
                GLASS_CHAINCODE,
                "read_glass_resource",
                vec![cid.to_text().into_bytes()],
                BTreeMap::new(),
            )?
            .result;
        let (stored_cid, uri) = decode_public(&public).ok_or_else(|| PortalError::Malformed {
            what: "triplet",
            reason: "public entry does not decode".into(),
        })?;
        let target = match uri.strip_prefix(URI_SCHEME) {
            Some(text) if ContentId::parse(text).is_ok_and(|c| c == stored_cid) => stored_cid,
            _ => return Err(PortalError::UnsupportedUri(uri)),
        };
        let raw_key = self
            .submit(
                GLASS_CHAINCODE,
                "read_glass_resource_key",
                vec![cid.to_text().into_bytes()],
                BTreeMap::new(),
            )?
            .result;
        let wrapped: WrappedKey =
            canonical::from_canonical(&raw_key).map_err(malformed("wrapped key"))?;

        let sealed = self.network.fetch(&self.node, &target)?;
        let key = unwrap_key(&wrapped, subject.agreement())
            .map_err(|_| PortalError::NotTheAddressee(subject.did().clone()))?;
        let plain =
            decrypt_content(&sealed, &key).map_err(|_| PortalError::DecryptFailed(target))?;
        let vc = VerifiableCredential::from_canonical(&plain).map_err(malformed("credential"))?;

        let issuer_doc = LedgerRegistry::new(self.channel, &self.identity).resolve_did(&vc.issuer);
        if !issuer_doc.is_some_and(|d| vc.signature_valid(&d)) {
            return Err(PortalError::SignatureInvalid(vc.credential_id));
        }
        subject.add_holding(Holding {
            credential_id: vc.credential_id.clone(),
            cid: target,
            uri,
        });
        Ok(vc)
    }
}

/// Opens a verification session: the verifier proves control of its DID and
/// the registry confirms it is a trusted app. Recorded on the ledger.
pub fn open_verification(
    channel: &mut Channel,
    verifier_identity: &MemberIdentity,
    verifier: &Wallet,
    challenge: &[u8],
) -> Result<Receipt, PortalError> {
    let sig = verifier
        .signing()
        .sign(&verification_message(verifier.did(), challenge));
    Ok(channel.submit(
        verifier_identity,
        REGISTRY_CHAINCODE,
        "open_verification",
        vec![
            verifier.did().as_str().into(),
            challenge.to_vec(),
            sig.as_bytes().to_vec(),
        ],
        BTreeMap::new(),
    )?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationOutcome {
    pub presentation: VerifiablePresentation,
    pub report: VerificationReport,
}

/// Challenge, presentation and ledger-backed verification in one go.
pub fn present_and_verify<R: RngCore + CryptoRng>(
    channel: &mut Channel,
    verifier_identity: &MemberIdentity,
    holder: &Wallet,
    vcs: Vec<VerifiableCredential>,
    verifier: &Wallet,
    rng: &mut R,
) -> Result<PresentationOutcome, PortalError> {
    let mut challenge = [0u8; 32];
    rng.fill_bytes(&mut challenge);
    open_verification(channel, verifier_identity, verifier, &challenge)?;
    let presentation = credential::present(holder.signing(), holder.did(), vcs, &challenge)?;
    let mut view = LedgerRegistry::new(channel, verifier_identity);
    let report = credential::verify_presentation(&presentation, &challenge, &mut view);
    Ok(PresentationOutcome {
        presentation,
        report,
    })
}
