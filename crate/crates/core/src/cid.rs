//! Content identifiers: a sha2-256 multihash rendered in base58btc, which
//! always yields a 46-character `Qm…` string.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{base58_decode, base58_encode, sha256, Digest32};

/// Multihash code for sha2-256.
pub const SHA2_256_CODE: u8 = 0x12;
/// Digest length prefix for a 32-byte digest.
pub const SHA2_256_LEN: u8 = 0x20;
/// Length of every ContentId in text form.
pub const CID_TEXT_LEN: usize = 46;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CidError {
    #[error("invalid content id {text:?}: {reason}")]
    Format { text: String, reason: String },
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId(Digest32);

impl ContentId {
    pub fn from_digest(digest: Digest32) -> Self {
        ContentId(digest)
    }

    pub fn digest(&self) -> &Digest32 {
        &self.0
    }

    pub fn multihash(&self) -> [u8; 34] {
        let mut mh = [0u8; 34];
        mh[0] = SHA2_256_CODE;
        mh[1] = SHA2_256_LEN;
        mh[2..].copy_from_slice(self.0.as_bytes());
        mh
    }

    pub fn to_text(&self) -> String {
        base58_encode(&self.multihash())
    }

    pub fn parse(text: &str) -> Result<Self, CidError> {
        let err = |reason: &str| CidError::Format {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let bytes = base58_decode(text).map_err(|e| err(&e.to_string()))?;
        if bytes.len() != 34 {
            return Err(err("multihash must be 34 bytes"));
        }
        if bytes[0] != SHA2_256_CODE || bytes[1] != SHA2_256_LEN {
            return Err(err("unsupported multihash prefix"));
        }
        Ok(ContentId(
            Digest32::from_slice(&bytes[2..]).expect("length checked"),
        ))
    }
}

/// The ContentId of exactly these bytes.
pub fn cid_of_block(data: &[u8]) -> ContentId {
    ContentId(sha256(data))
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({})", self.to_text())
    }
}

impl FromStr for ContentId {
    type Err = CidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContentId::parse(s)
    }
}

impl Serialize for ContentId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        ContentId::parse(&text).map_err(serde::de::Error::custom)
    }
}
