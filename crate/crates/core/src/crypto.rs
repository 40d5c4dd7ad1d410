//! Hashing, base58, Ed25519 signatures, AES-256-GCM content encryption and
//! X25519 key wrapping.
//!
//! Every operation that needs randomness takes the generator as an argument,
//! so a seeded `ChaCha20Rng` makes all outputs reproducible while
//! `rand_core::OsRng` gives production behaviour.

use std::fmt;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use hkdf::Hkdf;
use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as XPublic, StaticSecret};

const WRAP_INFO: &[u8] = b"glass/key-wrap/v1";
const TAG_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    /// Authenticated decryption failed: the data was modified or the key is wrong.
    #[error("authentication failed (tampered or wrong key)")]
    Authentication,
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid public key")]
    InvalidPublicKey,
}

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest32([u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0u8; 32]);

    pub const fn new(bytes: [u8; 32]) -> Self {
        Digest32(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| {
            CryptoError::Format(format!("digest must be 32 bytes, got {}", bytes.len()))
        })?;
        Ok(Digest32(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_base58(&self) -> String {
        base58_encode(&self.0)
    }

    pub fn from_base58(text: &str) -> Result<Self, CryptoError> {
        Self::from_slice(&base58_decode(text)?)
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", self.to_base58())
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_base58())
    }
}

impl Serialize for Digest32 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base58())
    }
}

impl<'de> Deserialize<'de> for Digest32 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Digest32::from_base58(&text).map_err(serde::de::Error::custom)
    }
}

pub fn sha256(data: &[u8]) -> Digest32 {
    Digest32(Sha256::digest(data).into())
}

/// Hash of several parts fed in order, without copying them together.
pub fn sha256_concat(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest32(h.finalize().into())
}

/// base58btc (Bitcoin alphabet).
pub fn base58_encode(data: &[u8]) -> String {
    bs58::encode(data).into_string()
}

pub fn base58_decode(text: &str) -> Result<Vec<u8>, CryptoError> {
    bs58::decode(text)
        .into_vec()
        .map_err(|e| CryptoError::Format(format!("base58: {e}")))
}

/// Serde adapter rendering byte fields as base58btc text.
pub mod b58 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<T: AsRef<[u8]>, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::base58_encode(v.as_ref()))
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: TryFrom<Vec<u8>>,
        D: Deserializer<'de>,
    {
        let text = String::deserialize(d)?;
        let bytes = super::base58_decode(&text).map_err(serde::de::Error::custom)?;
        let len = bytes.len();
        T::try_from(bytes)
            .map_err(|_| serde::de::Error::custom(format!("unexpected byte length {len}")))
    }
}

macro_rules! key_newtype {
    ($(#[$m:meta])* $name:ident, $len:expr) => {
        $(#[$m])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(#[serde(with = "b58")] [u8; $len]);

        impl $name {
            pub const fn new(bytes: [u8; $len]) -> Self {
                $name(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| {
                    CryptoError::Format(format!(
                        "{} must be {} bytes, got {}",
                        stringify!($name),
                        $len,
                        bytes.len()
                    ))
                })?;
                Ok($name(arr))
            }

            pub fn to_base58(&self) -> String {
                base58_encode(&self.0)
            }

            pub fn from_base58(text: &str) -> Result<Self, CryptoError> {
                Self::from_slice(&base58_decode(text)?)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_base58())
            }
        }
    };
}

key_newtype!(
    /// Ed25519 verification key.
    SigningPublic,
    32
);
key_newtype!(
    /// X25519 public point.
    AgreementPublic,
    32
);
key_newtype!(
    /// Detached Ed25519 signature.
    Signature,
    64
);

/// Ed25519 keypair. The public half is always derived from the seed.
#[derive(Clone)]
pub struct SigningKeypair {
    key: SigningKey,
}

impl SigningKeypair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        SigningKeypair {
            key: SigningKey::from_bytes(&seed),
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn secret(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn public(&self) -> SigningPublic {
        SigningPublic(self.key.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.key.sign(message).to_bytes())
    }

    pub fn to_record(&self) -> KeyRecord {
        KeyRecord {
            kind: KeyKind::Signing,
            public_b58: self.public().to_base58(),
            secret_b58: base58_encode(&self.secret()),
        }
    }

    pub fn from_record(rec: &KeyRecord) -> Result<Self, CryptoError> {
        if rec.kind != KeyKind::Signing {
            return Err(CryptoError::Format("expected a signing key record".into()));
        }
        let seed: [u8; 32] = base58_decode(&rec.secret_b58)?
            .try_into()
            .map_err(|_| CryptoError::Format("signing secret must be 32 bytes".into()))?;
        let kp = Self::from_seed(seed);
        if kp.public().to_base58() != rec.public_b58 {
            return Err(CryptoError::Format(
                "public key does not match secret".into(),
            ));
        }
        Ok(kp)
    }
}

impl fmt::Debug for SigningKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKeypair")
            .field("public", &self.public())
            .finish_non_exhaustive()
    }
}

/// Returns false on any malformed key or signature; never errors.
pub fn verify(public: &SigningPublic, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(public.as_bytes()) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(signature.as_bytes());
    vk.verify_strict(message, &sig).is_ok()
}

/// X25519 keypair used to receive wrapped content keys.
#[derive(Clone)]
pub struct AgreementKeypair {
    secret: StaticSecret,
}

impl AgreementKeypair {
    pub fn from_secret(bytes: [u8; 32]) -> Self {
        AgreementKeypair {
            secret: StaticSecret::from(bytes),
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self::from_secret(bytes)
    }

    pub fn secret(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn public(&self) -> AgreementPublic {
        AgreementPublic(XPublic::from(&self.secret).to_bytes())
    }

    pub fn diffie_hellman(&self, other: &AgreementPublic) -> [u8; 32] {
        self.secret
            .diffie_hellman(&XPublic::from(*other.as_bytes()))
            .to_bytes()
    }

    pub fn to_record(&self) -> KeyRecord {
        KeyRecord {
            kind: KeyKind::Agreement,
            public_b58: self.public().to_base58(),
            secret_b58: base58_encode(&self.secret()),
        }
    }

    pub fn from_record(rec: &KeyRecord) -> Result<Self, CryptoError> {
        if rec.kind != KeyKind::Agreement {
            return Err(CryptoError::Format(
                "expected an agreement key record".into(),
            ));
        }
        let bytes: [u8; 32] = base58_decode(&rec.secret_b58)?
            .try_into()
            .map_err(|_| CryptoError::Format("agreement secret must be 32 bytes".into()))?;
        let kp = Self::from_secret(bytes);
        if kp.public().to_base58() != rec.public_b58 {
            return Err(CryptoError::Format(
                "public key does not match secret".into(),
            ));
        }
        Ok(kp)
    }
}

impl fmt::Debug for AgreementKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgreementKeypair")
            .field("public", &self.public())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyKind {
    Signing,
    Agreement,
}

/// Keystore representation of a keypair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRecord {
    pub kind: KeyKind,
    pub public_b58: String,
    pub secret_b58: String,
}

/// 256-bit AES-GCM key plus the nonce used with it. A fresh key is drawn for
/// every encrypted resource, so a nonce is never reused under one key.
#[derive(Clone, PartialEq, Eq)]
pub struct ContentKey {
    pub key: [u8; 32],
    pub nonce: [u8; 12],
}

impl ContentKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut key);
        rng.fill_bytes(&mut nonce);
        ContentKey { key, nonce }
    }

    fn to_bytes(&self) -> [u8; 44] {
        let mut out = [0u8; 44];
        out[..32].copy_from_slice(&self.key);
        out[32..].copy_from_slice(&self.nonce);
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != 44 {
            return Err(CryptoError::Format("content key must be 44 bytes".into()));
        }
        let mut key = [0u8; 32];
        let mut nonce = [0u8; 12];
        key.copy_from_slice(&bytes[..32]);
        nonce.copy_from_slice(&bytes[32..]);
        Ok(ContentKey { key, nonce })
    }
}

impl fmt::Debug for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ContentKey(..)")
    }
}

/// AES-256-GCM. Output is `ciphertext || tag`.
pub fn encrypt_content(plaintext: &[u8], ck: &ContentKey) -> Vec<u8> {
    let cipher = Aes256Gcm::new((&ck.key).into());
    cipher
        .encrypt(Nonce::from_slice(&ck.nonce), plaintext)
        .expect("AES-GCM encryption of an in-memory buffer cannot fail")
}

pub fn decrypt_content(sealed: &[u8], ck: &ContentKey) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < TAG_LEN {
        return Err(CryptoError::Format(
            "ciphertext shorter than the tag".into(),
        ));
    }
    let cipher = Aes256Gcm::new((&ck.key).into());
    cipher
        .decrypt(Nonce::from_slice(&ck.nonce), sealed)
        .map_err(|_| CryptoError::Authentication)
}

/// A content key sealed to one recipient's agreement key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrappedKey {
    pub ephemeral_public: AgreementPublic,
    #[serde(with = "b58")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "b58")]
    pub tag: [u8; 16],
    /// SHA-256 of the recipient's public key.
    pub recipient_hint: Digest32,
}

fn wrapping_material(
    shared: &[u8; 32],
    eph: &AgreementPublic,
    recipient: &AgreementPublic,
) -> ([u8; 32], [u8; 12]) {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(eph.as_bytes());
    salt[32..].copy_from_slice(recipient.as_bytes());
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 44];
    hk.expand(WRAP_INFO, &mut okm)
        .expect("44 bytes is a valid HKDF-SHA256 output length");
    let mut key = [0u8; 32];
    let mut nonce = [0u8; 12];
    key.copy_from_slice(&okm[..32]);
    nonce.copy_from_slice(&okm[32..]);
    (key, nonce)
}

/// ECIES-style wrap: fresh ephemeral X25519 key, HKDF-SHA256 to an AES-256-GCM
/// key, GCM over `key || nonce` with the recipient hint as associated data.
pub fn wrap_key<R: RngCore + CryptoRng>(
    ck: &ContentKey,
    recipient: &AgreementPublic,
    rng: &mut R,
) -> Result<WrappedKey, CryptoError> {
    let eph = AgreementKeypair::generate(rng);
    let shared = eph.diffie_hellman(recipient);
    if shared == [0u8; 32] {
        // low-order point
        return Err(CryptoError::InvalidPublicKey);
    }
    let eph_pub = eph.public();
    let (key, nonce) = wrapping_material(&shared, &eph_pub, recipient);
    let hint = sha256(recipient.as_bytes());
    let cipher = Aes256Gcm::new((&key).into());
    let mut sealed = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: &ck.to_bytes(),
                aad: hint.as_bytes(),
            },
        )
        .expect("AES-GCM encryption of an in-memory buffer cannot fail");
    let tag_start = sealed.len() - TAG_LEN;
    let mut tag = [0u8; 16];
    tag.copy_from_slice(&sealed[tag_start..]);
    sealed.truncate(tag_start);
    Ok(WrappedKey {
        ephemeral_public: eph_pub,
        ciphertext: sealed,
        tag,
        recipient_hint: hint,
    })
}

pub fn unwrap_key(w: &WrappedKey, recipient: &AgreementKeypair) -> Result<ContentKey, CryptoError> {
    let recipient_pub = recipient.public();
    if sha256(recipient_pub.as_bytes()) != w.recipient_hint {
        return Err(CryptoError::Authentication);
    }
    let shared = recipient.diffie_hellman(&w.ephemeral_public);
    if shared == [0u8; 32] {
        return Err(CryptoError::Authentication);
    }
    let (key, nonce) = wrapping_material(&shared, &w.ephemeral_public, &recipient_pub);
    let mut sealed = w.ciphertext.clone();
    sealed.extend_from_slice(&w.tag);
    let cipher = Aes256Gcm::new((&key).into());
    let plain = cipher
        .decrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: &sealed,
                aad: w.recipient_hint.as_bytes(),
            },
        )
        .map_err(|_| CryptoError::Authentication)?;
    ContentKey::from_bytes(&plain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(42)
    }

    #[test]
    fn sha256_fips_vectors() {
        assert_eq!(
            hex::encode(sha256(b"").as_bytes()),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hex::encode(sha256(b"abc").as_bytes()),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(sha256_concat(&[b"a", b"bc"]), sha256(b"abc"));
    }

    #[test]
    fn base58_cases() {
        assert_eq!(base58_encode(&[]), "");
        assert_eq!(base58_encode(&[0, 0, 1]), "112");
        assert_eq!(base58_decode("112").unwrap(), vec![0, 0, 1]);
        assert!(matches!(base58_decode("0OIl"), Err(CryptoError::Format(_))));
    }

    proptest! {
        #[test]
        fn base58_roundtrip(data in proptest::collection::vec(any::<u8>(), 0..64)) {
            prop_assert_eq!(base58_decode(&base58_encode(&data)).unwrap(), data);
        }
    }

    #[test]
    fn signature_rejections() {
        let mut r = rng();
        let a = SigningKeypair::generate(&mut r);
        let b = SigningKeypair::generate(&mut r);
        let msg = b"student certificate";
        let sig = a.sign(msg);
        assert!(verify(&a.public(), msg, &sig));
        assert!(!verify(&b.public(), msg, &sig));
        for bit in 0..msg.len() * 8 {
            let mut m = msg.to_vec();
            m[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&a.public(), &m, &sig));
        }
    }

    #[test]
    fn key_records_roundtrip_and_check_public() {
        let mut r = rng();
        let s = SigningKeypair::generate(&mut r);
        let rec = s.to_record();
        assert_eq!(
            SigningKeypair::from_record(&rec).unwrap().public(),
            s.public()
        );
        let mut bad = rec.clone();
        bad.public_b58 = AgreementKeypair::generate(&mut r).public().to_base58();
        assert!(SigningKeypair::from_record(&bad).is_err());
        let a = AgreementKeypair::generate(&mut r);
        assert_eq!(
            AgreementKeypair::from_record(&a.to_record())
                .unwrap()
                .public(),
            a.public()
        );
        assert!(AgreementKeypair::from_record(&rec).is_err());
    }

    #[test]
    fn dh_is_symmetric() {
        let mut r = rng();
        let a = AgreementKeypair::generate(&mut r);
        let b = AgreementKeypair::generate(&mut r);
        assert_eq!(a.diffie_hellman(&b.public()), b.diffie_hellman(&a.public()));
    }

    #[test]
    fn content_tamper_fails_authentication() {
        let mut r = rng();
        let ck = ContentKey::generate(&mut r);
        let sealed = encrypt_content(b"diploma", &ck);
        assert_eq!(decrypt_content(&sealed, &ck).unwrap(), b"diploma");
        for i in 0..sealed.len() {
            let mut t = sealed.clone();
            t[i] ^= 0x80;
            assert_eq!(decrypt_content(&t, &ck), Err(CryptoError::Authentication));
        }
        assert!(matches!(
            decrypt_content(&[1, 2, 3], &ck),
            Err(CryptoError::Format(_))
        ));
        let other = ContentKey::generate(&mut r);
        assert_eq!(
            decrypt_content(&sealed, &other),
            Err(CryptoError::Authentication)
        );
    }

    #[test]
    fn wrap_roundtrip_and_wrong_recipient() {
        let mut r = rng();
        let ck = ContentKey::generate(&mut r);
        let b = AgreementKeypair::generate(&mut r);
        let w = wrap_key(&ck, &b.public(), &mut r).unwrap();
        assert_eq!(unwrap_key(&w, &b).unwrap(), ck);
        for _ in 0..20 {
            let c = AgreementKeypair::generate(&mut r);
            assert_eq!(unwrap_key(&w, &c), Err(CryptoError::Authentication));
        }
        // a forged hint does not help a wrong recipient
        let c = AgreementKeypair::generate(&mut r);
        let mut forged = w.clone();
        forged.recipient_hint = sha256(c.public().as_bytes());
        assert_eq!(unwrap_key(&forged, &c), Err(CryptoError::Authentication));
    }

    #[test]
    fn wraps_are_fresh() {
        let mut r = rng();
        let ck = ContentKey::generate(&mut r);
        let b = AgreementKeypair::generate(&mut r);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..100 {
            let w = wrap_key(&ck, &b.public(), &mut r).unwrap();
            assert!(seen.insert(serde_json::to_string(&w).unwrap()));
        }
    }

    #[test]
    fn low_order_recipient_rejected() {
        let mut r = rng();
        let ck = ContentKey::generate(&mut r);
        let zero = AgreementPublic::new([0u8; 32]);
        assert_eq!(
            wrap_key(&ck, &zero, &mut r),
            Err(CryptoError::InvalidPublicKey)
        );
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = SigningKeypair::generate(&mut ChaCha20Rng::seed_from_u64(7));
        let b = SigningKeypair::generate(&mut ChaCha20Rng::seed_from_u64(7));
        assert_eq!(a.public(), b.public());
    }
}
