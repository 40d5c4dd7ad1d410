//! Verifiable credentials, presentations and their verification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{self, CanonicalError};
use crate::crypto::{base58_encode, sha256, verify, Signature, SigningKeypair};
use crate::did::{Did, DidDocument};
use crate::ledger::Bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Text,
    Integer,
    Date,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeKind::Text => "text",
            AttributeKind::Integer => "integer",
            AttributeKind::Date => "date",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        AttributeSpec {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialSchema {
    pub schema_id: String,
    /// Short type code such as `AC`.
    pub credential_type: String,
    pub required_attributes: Vec<AttributeSpec>,
    pub optional_attributes: Vec<AttributeSpec>,
}

impl CredentialSchema {
    /// Checks that ids are non-empty and attribute names are unique.
    pub fn well_formed(&self) -> Result<(), String> {
        if self.schema_id.is_empty() {
            return Err("schema_id is empty".into());
        }
        if self.credential_type.is_empty() {
            return Err("credential_type is empty".into());
        }
        let mut seen = BTreeSet::new();
        for a in self
            .required_attributes
            .iter()
            .chain(&self.optional_attributes)
        {
            if a.name.is_empty() {
                return Err("attribute with empty name".into());
            }
            if !seen.insert(a.name.as_str()) {
                return Err(format!("attribute {} declared twice", a.name));
            }
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&AttributeSpec> {
        self.required_attributes
            .iter()
            .chain(&self.optional_attributes)
            .find(|a| a.name == name)
    }
}

/// A claim value. Dates are `YYYY-MM-DD` text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClaimValue {
    Integer(i64),
    Text(String),
}

impl From<&str> for ClaimValue {
    fn from(v: &str) -> Self {
        ClaimValue::Text(v.to_string())
    }
}

impl From<String> for ClaimValue {
    fn from(v: String) -> Self {
        ClaimValue::Text(v)
    }
}

impl From<i64> for ClaimValue {
    fn from(v: i64) -> Self {
        ClaimValue::Integer(v)
    }
}

pub type Claims = BTreeMap<String, ClaimValue>;

/// Syntactic ISO-8601 calendar date check, including month lengths.
pub fn is_iso_date(text: &str) -> bool {
    let b = text.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        b[r].iter().try_fold(0u32, |acc, c| {
            c.is_ascii_digit().then(|| acc * 10 + u32::from(c - b'0'))
        })
    };
    let (Some(y), Some(m), Some(d)) = (digits(0..4), digits(5..7), digits(8..10)) else {
        return false;
    };
    let leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    let days = match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        2 => 28,
        _ => return false,
    };
    (1..=days).contains(&d)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Missing(String),
    Unknown(String),
    Kind {
        name: String,
        expected: AttributeKind,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing(n) => write!(f, "missing attribute {n}"),
            Violation::Unknown(n) => write!(f, "unknown attribute {n}"),
            Violation::Kind { name, expected } => write!(f, "attribute {name} must be {expected}"),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Required attributes present with matching kinds, extras only from the
/// optional list.
pub fn validate_schema(claims: &Claims, schema: &CredentialSchema) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    for a in &schema.required_attributes {
        if !claims.contains_key(&a.name) {
            out.push(Violation::Missing(a.name.clone()));
        }
    }
    for (name, value) in claims {
        let Some(spec) = schema.lookup(name) else {
            out.push(Violation::Unknown(name.clone()));
            continue;
        };
        let ok = match (spec.kind, value) {
            (AttributeKind::Text, ClaimValue::Text(_)) => true,
            (AttributeKind::Integer, ClaimValue::Integer(_)) => true,
            (AttributeKind::Date, ClaimValue::Text(t)) => is_iso_date(t),
            _ => false,
        };
        if !ok {
            out.push(Violation::Kind {
                name: name.clone(),
                expected: spec.kind,
            });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CredentialError {
    #[error("validation: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("holder-mismatch: credential {credential_id} is about {subject}, not {holder}")]
    HolderMismatch {
        credential_id: String,
        subject: Did,
        holder: Did,
    },
    #[error("issuer keys do not belong to {0}")]
    KeyMismatch(Did),
    #[error("a presentation needs at least one credential")]
    EmptyPresentation,
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

impl CredentialError {
    pub fn code(&self) -> &'static str {
        match self {
            CredentialError::Validation(_) => "validation",
            CredentialError::HolderMismatch { .. } => "holder-mismatch",
            CredentialError::KeyMismatch(_) => "key-mismatch",
            CredentialError::EmptyPresentation => "empty-presentation",
            CredentialError::Canonical(_) => "canonical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proof {
    pub signature: Signature,
    pub verification_did: Did,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiableCredential {
    pub credential_id: String,
    pub schema_id: String,
    pub credential_type: String,
    pub issuer: Did,
    pub subject: Did,
    pub claims: Claims,
    pub issued_at: u64,
    pub proof: Proof,
}

#[derive(Serialize)]
struct CredentialBody<'a> {
    credential_id: &'a str,
    schema_id: &'a str,
    credential_type: &'a str,
    issuer: &'a Did,
    subject: &'a Did,
    claims: &'a Claims,
    issued_at: u64,
}

#[derive(Serialize)]
struct IdSeed<'a> {
    schema_id: &'a str,
    credential_type: &'a str,
    issuer: &'a Did,
    subject: &'a Did,
    claims: &'a Claims,
    issued_at: u64,
}

impl VerifiableCredential {
    /// Canonical bytes of every field except `proof`.
    pub fn signing_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_canonical(&CredentialBody {
            credential_id: &self.credential_id,
            schema_id: &self.schema_id,
            credential_type: &self.credential_type,
            issuer: &self.issuer,
            subject: &self.subject,
            claims: &self.claims,
            issued_at: self.issued_at,
        })
    }

    pub fn to_canonical(&self) -> Vec<u8> {
        canonical::to_canonical(self).expect("credentials are canonical")
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<Self, CanonicalError> {
        canonical::from_canonical(bytes)
    }

    /// Issuer signature check against a resolved issuer document.
    pub fn signature_valid(&self, issuer_doc: &DidDocument) -> bool {
        if self.proof.verification_did != self.issuer
            || issuer_doc.did != self.issuer
            || !issuer_doc.derivation_valid()
        {
            return false;
        }
        match self.signing_bytes() {
            Ok(bytes) => verify(&issuer_doc.signing_public, &bytes, &self.proof.signature),
            Err(_) => false,
        }
    }
}

/// Signs a credential after validating the claims against `schema`.
pub fn issue(
    issuer_keys: &SigningKeypair,
    issuer_did: &Did,
    subject_did: &Did,
    schema: &CredentialSchema,
    claims: Claims,
    issued_at: u64,
) -> Result<VerifiableCredential, CredentialError> {
    if !issuer_did.matches(&issuer_keys.public()) {
        return Err(CredentialError::KeyMismatch(issuer_did.clone()));
    }
    validate_schema(&claims, schema).map_err(CredentialError::Validation)?;
    let seed = canonical::to_canonical(&IdSeed {
        schema_id: &schema.schema_id,
        credential_type: &schema.credential_type,
        issuer: issuer_did,
        subject: subject_did,
        claims: &claims,
        issued_at,
    })?;
    let mut vc = VerifiableCredential {
        credential_id: format!("urn:glass:vc:{}", base58_encode(sha256(&seed).as_bytes())),
        schema_id: schema.schema_id.clone(),
        credential_type: schema.credential_type.clone(),
        issuer: issuer_did.clone(),
        subject: subject_did.clone(),
        claims,
        issued_at,
        proof: Proof {
            signature: Signature::new([0; 64]),
            verification_did: issuer_did.clone(),
        },
    };
    vc.proof.signature = issuer_keys.sign(&vc.signing_bytes()?);
    Ok(vc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifiablePresentation {
    pub holder: Did,
    pub credentials: Vec<VerifiableCredential>,
    pub challenge: Bytes,
    pub proof: Signature,
}

#[derive(Serialize)]
struct PresentationBody<'a> {
    holder: &'a Did,
    credentials: &'a [VerifiableCredential],
    challenge: &'a Bytes,
}

impl VerifiablePresentation {
    pub fn signing_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_canonical(&PresentationBody {
            holder: &self.holder,
            credentials: &self.credentials,
            challenge: &self.challenge,
        })
    }

    pub fn to_canonical(&self) -> Vec<u8> {
        canonical::to_canonical(self).expect("presentations are canonical")
    }
}

/// Wraps credentials about `holder_did` into a challenge-bound presentation.
pub fn present(
    holder_keys: &SigningKeypair,
    holder_did: &Did,
    vcs: Vec<VerifiableCredential>,
    challenge: &[u8],
) -> Result<VerifiablePresentation, CredentialError> {
    if vcs.is_empty() {
        return Err(CredentialError::EmptyPresentation);
    }
    if let Some(vc) = vcs.iter().find(|vc| vc.subject != *holder_did) {
        return Err(CredentialError::HolderMismatch {
            credential_id: vc.credential_id.clone(),
            subject: vc.subject.clone(),
            holder: holder_did.clone(),
        });
    }
    let mut vp = VerifiablePresentation {
        holder: holder_did.clone(),
        credentials: vcs,
        challenge: Bytes(challenge.to_vec()),
        proof: Signature::new([0; 64]),
    };
    vp.proof = holder_keys.sign(&vp.signing_bytes()?);
    Ok(vp)
}

/// Registry lookups used during verification. Methods take `&mut self`
/// because a ledger-backed view records each query.
pub trait RegistryView {
    fn resolve_did(&mut self, did: &Did) -> Option<DidDocument>;
    fn is_trusted_issuer(&mut self, did: &Did, credential_type: &str) -> bool;
    fn get_schema(&mut self, schema_id: &str) -> Option<CredentialSchema>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialCheck {
    pub credential_id: String,
    pub issuer_trusted: bool,
    pub signature_valid: bool,
    pub schema_valid: bool,
    /// `ok`, or the failed checks' codes joined by `; `.
    pub reason: String,
}

impl CredentialCheck {
    pub fn passed(&self) -> bool {
        self.issuer_trusted && self.signature_valid && self.schema_valid
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub overall: bool,
    pub challenge_valid: bool,
    pub holder_valid: bool,
    /// `ok`, or presentation-level failure codes joined by `; `.
    pub reason: String,
    pub per_credential: Vec<CredentialCheck>,
}

impl VerificationReport {
    /// Every failure code in the report, presentation-level first.
    pub fn reasons(&self) -> Vec<&str> {
        std::iter::once(self.reason.as_str())
            .chain(self.per_credential.iter().map(|c| c.reason.as_str()))
            .flat_map(|r| r.split("; "))
            .filter(|r| *r != "ok")
            .collect()
    }
}

fn reason_text(codes: Vec<&str>) -> String {
    if codes.is_empty() {
        "ok".into()
    } else {
        codes.join("; ")
    }
}

/// Runs every check and records each outcome; never short-circuits.
pub fn verify_presentation(
    vp: &VerifiablePresentation,
    expected_challenge: &[u8],
    registry: &mut dyn RegistryView,
) -> VerificationReport {
    let mut top = Vec::new();
    let challenge_valid = vp.challenge.0 == expected_challenge;
    if !challenge_valid {
        top.push("challenge-mismatch");
    }

    let holder_doc = registry.resolve_did(&vp.holder);
    let holder_sig = match (&holder_doc, vp.signing_bytes()) {
        (Some(doc), Ok(bytes)) => {
            doc.did == vp.holder
                && doc.derivation_valid()
                && verify(&doc.signing_public, &bytes, &vp.proof)
        }
        _ => false,
    };
    if holder_doc.is_none() {
        top.push("holder-unresolvable");
    } else if !holder_sig {
        top.push("holder-signature-invalid");
    }
    let subjects_match =
        !vp.credentials.is_empty() && vp.credentials.iter().all(|vc| vc.subject == vp.holder);
    if vp.credentials.is_empty() {
        top.push("empty-presentation");
    } else if !subjects_match {
        top.push("holder-mismatch");
    }
    let holder_valid = holder_sig && subjects_match;

    let per_credential: Vec<CredentialCheck> = vp
        .credentials
        .iter()
        .map(|vc| check_credential(vc, registry))
        .collect();

    let overall =
        challenge_valid && holder_valid && per_credential.iter().all(CredentialCheck::passed);
    VerificationReport {
        overall,
        challenge_valid,
        holder_valid,
        reason: reason_text(top),
        per_credential,
    }
}

/// Issuer trust, schema conformance and issuer signature of one credential.
pub fn check_credential(
    vc: &VerifiableCredential,
    registry: &mut dyn RegistryView,
) -> CredentialCheck {
    let mut codes = Vec::new();
    let issuer_doc = registry.resolve_did(&vc.issuer);
    let issuer_trusted =
        issuer_doc.is_some() && registry.is_trusted_issuer(&vc.issuer, &vc.credential_type);
    if !issuer_trusted {
        codes.push("issuer-untrusted");
    }
    let schema_valid = match registry.get_schema(&vc.schema_id) {
        Some(s) => {
            s.credential_type == vc.credential_type && validate_schema(&vc.claims, &s).is_ok()
        }
        None => false,
    };
    if !schema_valid {
        codes.push("schema-invalid");
    }
    let signature_valid = issuer_doc.as_ref().is_some_and(|d| vc.signature_valid(d));
    if !signature_valid {
        codes.push("signature-invalid");
    }
    CredentialCheck {
        credential_id: vc.credential_id.clone(),
        issuer_trusted,
        signature_valid,
        schema_valid,
        reason: reason_text(codes),
    }
}

/// The academic-credential schema used by the bundled scenarios.
pub fn academic_schema() -> CredentialSchema {
    CredentialSchema {
        schema_id: "glass:schema:academic-credential:1".into(),
        credential_type: "AC".into(),
        required_attributes: vec![
            AttributeSpec::new("name", AttributeKind::Text),
            AttributeSpec::new("degree", AttributeKind::Text),
            AttributeSpec::new("award_date", AttributeKind::Date),
        ],
        optional_attributes: vec![AttributeSpec::new("grade", AttributeKind::Text)],
    }
}
