mod common;

use std::collections::BTreeMap;

use glass_core::canonical;
use glass_core::chaincode::{
    decode_public, TrustPolicyEntry, AUTHORITY_ORG, GLASS_CHAINCODE, REGISTRY_CHAINCODE,
    WRAPPED_KEY_TRANSIENT,
};
use glass_core::cid::cid_of_block;
use glass_core::crypto::{wrap_key, AgreementKeypair, ContentKey, SigningKeypair};
use glass_core::deployment::{Deployment, ORG_NAMES, PARTNER_ORG, PORTAL_ORG};
use glass_core::did::{Did, DidDocument, PersonKind};
use glass_core::ledger::{Channel, LedgerError, TxStatus};
use glass_core::portal::Wallet;
use glass_core::scenario::{bundled, registry_snapshot, run_scenario};

fn wrapped_key_bytes(seed: u64) -> Vec<u8> {
    let mut rng = common::rng(seed);
    let ck = ContentKey::generate(&mut rng);
    let bob = AgreementKeypair::generate(&mut rng);
    canonical::to_canonical(&wrap_key(&ck, &bob.public(), &mut rng).unwrap()).unwrap()
}

fn create(d: &mut Deployment, org: &str, tag: &str) -> Result<(String, Vec<u8>), LedgerError> {
    let cid = cid_of_block(tag.as_bytes()).to_text();
    let wk = wrapped_key_bytes(tag.len() as u64);
    let id = d.gateway(org).unwrap().clone();
    d.channel.submit(
        &id,
        GLASS_CHAINCODE,
        "create_glass_resource",
        vec![
            cid.clone().into_bytes(),
            format!("ipfs://{cid}").into_bytes(),
        ],
        BTreeMap::from([(WRAPPED_KEY_TRANSIENT.to_string(), wk.clone())]),
    )?;
    Ok((cid, wk))
}

fn call(
    d: &mut Deployment,
    org: &str,
    cc: &str,
    f: &str,
    args: Vec<Vec<u8>>,
) -> Result<Vec<u8>, LedgerError> {
    let id = d.gateway(org).unwrap().clone();
    d.channel
        .submit(&id, cc, f, args, BTreeMap::new())
        .map(|r| r.result)
}

fn code(r: Result<Vec<u8>, LedgerError>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => e.code().to_string(),
    }
}

#[test]
fn first_create_lands_at_height_one() {
    let mut d = Deployment::new(1);
    let id = d.gateway(PORTAL_ORG).unwrap().clone();
    let cid = cid_of_block(b"x").to_text();
    let receipt = d
        .channel
        .submit(
            &id,
            GLASS_CHAINCODE,
            "create_glass_resource",
            vec![
                cid.clone().into_bytes(),
                format!("ipfs://{cid}").into_bytes(),
            ],
            BTreeMap::from([(WRAPPED_KEY_TRANSIENT.to_string(), wrapped_key_bytes(1))]),
        )
        .unwrap();
    assert_eq!(receipt.block_height, 1);
    assert_eq!(receipt.result, b"ok");
}

#[test]
fn triplet_lifecycle_and_errors() {
    let mut d = Deployment::new(2);
    let (cid, wk) = create(&mut d, PARTNER_ORG, "from org2").unwrap();
    let err = create(&mut d, PORTAL_ORG, "from org2").unwrap_err();
    assert_eq!(err.code(), "already-exists");

    let public = call(
        &mut d,
        PARTNER_ORG,
        GLASS_CHAINCODE,
        "read_glass_resource",
        vec![cid.clone().into_bytes()],
    )
    .unwrap();
    let (c, uri) = decode_public(&public).unwrap();
    assert_eq!(c.to_text(), cid);
    assert_eq!(uri.as_bytes(), format!("ipfs://{cid}").as_bytes());

    let key = call(
        &mut d,
        PORTAL_ORG,
        GLASS_CHAINCODE,
        "read_glass_resource_key",
        vec![cid.clone().into_bytes()],
    )
    .unwrap();
    assert_eq!(key, wk);

    let unknown = cid_of_block(b"nothing here").to_text().into_bytes();
    assert_eq!(
        code(call(
            &mut d,
            PARTNER_ORG,
            GLASS_CHAINCODE,
            "read_glass_resource",
            vec![unknown.clone()]
        )),
        "not-found"
    );
    assert_eq!(
        code(call(
            &mut d,
            PORTAL_ORG,
            GLASS_CHAINCODE,
            "read_glass_resource_key",
            vec![unknown]
        )),
        "not-found"
    );

    let rows = d.channel.audit_rows();
    assert_eq!(rows.len() as u64, d.channel.height());
    let key_read = rows
        .iter()
        .find(|r| r.function == "read_glass_resource_key" && r.org == PORTAL_ORG)
        .unwrap();
    assert_eq!(key_read.status, TxStatus::Committed);
    assert!(rows.iter().any(|r| r.status == TxStatus::Rejected));
    assert!(d.channel.verify_chain());
}

#[test]
fn org2_key_read_leaks_nothing() {
    let mut d = Deployment::new(3);
    let (cid, wk) = create(&mut d, PORTAL_ORG, "secret").unwrap();
    let err = call(
        &mut d,
        PARTNER_ORG,
        GLASS_CHAINCODE,
        "read_glass_resource_key",
        vec![cid.into_bytes()],
    )
    .unwrap_err();
    assert_eq!(err.code(), "access-denied");
    assert!(!err
        .to_string()
        .contains(&String::from_utf8_lossy(&wk).to_string()));
    let ledger = d.channel.export_jsonl();
    assert!(!ledger.contains(std::str::from_utf8(&wk).unwrap()));
}

#[test]
fn registry_operations_by_role() {
    let mut d = Deployment::new(4);
    let mut rng = common::rng(4);
    let uni = Wallet::generate(&mut rng);
    let doc = uni.document(PersonKind::LegalPerson);
    let proof = doc.sign_registration(uni.signing());
    let reg = |doc: &DidDocument, proof: &glass_core::crypto::Signature| {
        vec![
            canonical::to_canonical(doc).unwrap(),
            proof.as_bytes().to_vec(),
        ]
    };
    assert_eq!(
        code(call(
            &mut d,
            PARTNER_ORG,
            REGISTRY_CHAINCODE,
            "register_did",
            reg(&doc, &proof)
        )),
        "ok"
    );
    for org in ORG_NAMES {
        let got = call(
            &mut d,
            org,
            REGISTRY_CHAINCODE,
            "resolve_did",
            vec![doc.did.as_str().into()],
        )
        .unwrap();
        assert_eq!(got, canonical::to_canonical(&doc).unwrap(), "{org}");
    }

    let mut bad = Wallet::generate(&mut rng).document(PersonKind::NaturalPerson);
    bad.did = Did::from_signing_public(&SigningKeypair::from_seed([9; 32]).public());
    let bad_proof = SigningKeypair::from_seed([9; 32]).sign(b"irrelevant");
    assert_eq!(
        code(call(
            &mut d,
            PORTAL_ORG,
            REGISTRY_CHAINCODE,
            "register_did",
            reg(&bad, &bad_proof)
        )),
        "invalid-did"
    );

    let entry = |types: &[&str]| TrustPolicyEntry {
        issuer: doc.did.clone(),
        country_domain: "PT".into(),
        permitted_types: common::types(types),
    };
    let args = |e: &TrustPolicyEntry| vec![canonical::to_canonical(e).unwrap()];
    assert_eq!(
        code(call(
            &mut d,
            PORTAL_ORG,
            REGISTRY_CHAINCODE,
            "register_trusted_issuer",
            args(&entry(&["AC"]))
        )),
        "access-denied"
    );
    assert_eq!(
        code(call(
            &mut d,
            AUTHORITY_ORG,
            REGISTRY_CHAINCODE,
            "register_trusted_issuer",
            args(&entry(&[]))
        )),
        "validation"
    );
    assert_eq!(
        code(call(
            &mut d,
            AUTHORITY_ORG,
            REGISTRY_CHAINCODE,
            "register_trusted_issuer",
            args(&entry(&["AC"]))
        )),
        "ok"
    );

    let trusted = |d: &mut Deployment, did: &Did, t: &str| {
        call(
            d,
            PARTNER_ORG,
            REGISTRY_CHAINCODE,
            "is_trusted_issuer",
            vec![did.as_str().into(), t.into()],
        )
        .unwrap()
    };
    assert_eq!(trusted(&mut d, &doc.did, "AC"), b"true");
    assert_eq!(trusted(&mut d, &doc.did, "TAX"), b"false");
    assert_eq!(trusted(&mut d, &bad.did, "AC"), b"false");
    assert!(d.channel.verify_chain());
}

#[test]
fn replay_from_export_matches_live_state() {
    for name in ["diploma", "untrusted_issuer", "org2_key_read"] {
        let script = bundled(name).unwrap();
        let mut d = Deployment::new(script.seed);
        assert!(
            run_scenario(&mut d, &script, &mut BTreeMap::new())
                .unwrap()
                .passed
        );
        let reloaded = Channel::load(
            d.channel.config().clone(),
            &d.channel.export_jsonl(),
            &d.channel.export_private(),
        )
        .unwrap();
        assert!(reloaded.verify_chain(), "{name}");
        assert_eq!(
            reloaded.world_state().to_canonical(),
            d.channel.world_state().to_canonical()
        );
        let restored = Deployment::restore(
            script.seed,
            &d.channel.export_jsonl(),
            &d.channel.export_private(),
            &d.network.snapshot(),
            &d.network.all_blocks(),
        )
        .unwrap();
        assert_eq!(
            registry_snapshot(&restored),
            registry_snapshot(&d),
            "{name}"
        );
        assert_eq!(
            restored.network.trace_jsonl(),
            d.network.trace_jsonl(),
            "{name}"
        );
    }
}

#[test]
fn edited_ledger_line_is_caught() {
    let script = bundled("diploma").unwrap();
    let mut d = Deployment::new(script.seed);
    run_scenario(&mut d, &script, &mut BTreeMap::new()).unwrap();
    let jsonl = d.channel.export_jsonl();
    let edited = jsonl.replacen("register_trusted_app", "register_trusted_apx", 1);
    assert_ne!(edited, jsonl);
    let c = Channel::load(
        d.channel.config().clone(),
        &edited,
        &d.channel.export_private(),
    )
    .unwrap();
    let fault = c.verify_report().unwrap_err();
    assert!(fault.height.is_some());
}
