//! The two channel chaincodes: the triplet store and the trust registry.

mod glass;
mod registry;

pub use glass::{
    decode_public, glass_collections, GlassIpfs, Triplet, GLASS_CHAINCODE, PRIVATE_COLLECTION,
    PUBLIC_COLLECTION, WRAPPED_KEY_TRANSIENT,
};
pub use registry::{
    registry_dump, valid_country_domain, verification_message, RegistryDump, TrustPolicyEntry,
    TrustRegistry, AUTHORITY_ORG, REGISTRY_CHAINCODE,
};

use serde::de::DeserializeOwned;

use crate::canonical;
use crate::ledger::ChaincodeError;

fn arg<'a>(args: &'a [Vec<u8>], i: usize, name: &str) -> Result<&'a [u8], ChaincodeError> {
    args.get(i)
        .map(Vec::as_slice)
        .ok_or_else(|| ChaincodeError::BadArgs(format!("missing argument {name}")))
}

fn arg_text<'a>(args: &'a [Vec<u8>], i: usize, name: &str) -> Result<&'a str, ChaincodeError> {
    std::str::from_utf8(arg(args, i, name)?)
        .map_err(|_| ChaincodeError::BadArgs(format!("{name} is not UTF-8")))
}

fn arg_json<T: DeserializeOwned>(
    args: &[Vec<u8>],
    i: usize,
    name: &str,
) -> Result<T, ChaincodeError> {
    canonical::from_canonical(arg(args, i, name)?)
        .map_err(|e| ChaincodeError::BadArgs(format!("{name}: {e}")))
}

fn expect_args(args: &[Vec<u8>], n: usize) -> Result<(), ChaincodeError> {
    if args.len() == n {
        Ok(())
    } else {
        Err(ChaincodeError::BadArgs(format!(
            "expected {n} arguments, got {}",
            args.len()
        )))
    }
}

fn json_result<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, ChaincodeError> {
    canonical::to_canonical(value).map_err(|e| ChaincodeError::Validation(e.to_string()))
}
