//! `did:glass` identifiers and DID documents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::canonical;
use crate::cid::ContentId;
use crate::crypto::{sha256, verify, AgreementPublic, Signature, SigningKeypair, SigningPublic};

pub const DID_PREFIX: &str = "did:glass:";
const REGISTRATION_DOMAIN: &[u8] = b"glass/did-registration/v1\0";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid DID {text:?}: {reason}")]
pub struct DidError {
    pub text: String,
    pub reason: &'static str,
}

/// `did:glass:` followed by the base58 multihash of the signing public key.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Did(String);

impl Did {
    pub fn from_signing_public(public: &SigningPublic) -> Self {
        let suffix = ContentId::from_digest(sha256(public.as_bytes()));
        Did(format!("{DID_PREFIX}{suffix}"))
    }

    pub fn parse(text: &str) -> Result<Self, DidError> {
        let err = |reason| DidError {
            text: text.to_string(),
            reason,
        };
        let suffix = text
            .strip_prefix(DID_PREFIX)
            .ok_or_else(|| err("missing did:glass: prefix"))?;
        ContentId::parse(suffix).map_err(|_| err("suffix is not a sha2-256 multihash"))?;
        Ok(Did(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when this DID was derived from `public`.
    pub fn matches(&self, public: &SigningPublic) -> bool {
        *self == Did::from_signing_public(public)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({})", self.0)
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Did {
    type Err = DidError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Did::parse(s)
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Did::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonKind {
    NaturalPerson,
    LegalPerson,
}

impl FromStr for PersonKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "natural_person" => Ok(PersonKind::NaturalPerson),
            "legal_person" => Ok(PersonKind::LegalPerson),
            other => Err(format!("unknown person kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DidDocument {
    pub did: Did,
    pub signing_public: SigningPublic,
    pub agreement_public: AgreementPublic,
    pub kind: PersonKind,
}

impl DidDocument {
    pub fn new(
        signing_public: SigningPublic,
        agreement_public: AgreementPublic,
        kind: PersonKind,
    ) -> Self {
        DidDocument {
            did: Did::from_signing_public(&signing_public),
            signing_public,
            agreement_public,
            kind,
        }
    }

    pub fn derivation_valid(&self) -> bool {
        self.did.matches(&self.signing_public)
    }

    fn registration_message(&self) -> Vec<u8> {
        let mut m = REGISTRATION_DOMAIN.to_vec();
        m.extend(canonical::to_canonical(self).expect("documents are canonical"));
        m
    }

    /// Proof that the registrant holds the signing key.
    pub fn sign_registration(&self, keys: &SigningKeypair) -> Signature {
        keys.sign(&self.registration_message())
    }

    pub fn registration_valid(&self, proof: &Signature) -> bool {
        verify(&self.signing_public, &self.registration_message(), proof)
    }
}
