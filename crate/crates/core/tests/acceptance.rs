//! Release gate. Each criterion runs in order and reports one line; the
//! binary exits non-zero if any of them fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use glass_core::canonical::{self, canonical_serialize};
use glass_core::chaincode::{
    TrustPolicyEntry, AUTHORITY_ORG, GLASS_CHAINCODE, WRAPPED_KEY_TRANSIENT,
};
use glass_core::cid::{cid_of_block, ContentId};
use glass_core::credential::{issue, CredentialSchema, VerifiableCredential};
use glass_core::crypto::{
    decrypt_content, encrypt_content, sha256, verify, wrap_key, AgreementKeypair, ContentKey,
    Signature, SigningKeypair,
};
use glass_core::dag::{build_dag, reassemble};
use glass_core::deployment::{Deployment, ORG_NAMES, PARTNER_ORG, PORTAL_ORG};
use glass_core::did::{DidDocument, PersonKind};
use glass_core::ledger::Channel;
use glass_core::portal::{present_and_verify, Wallet};
use glass_core::scenario::{bundled, registry_snapshot, run_scenario, BUNDLED};
use glass_core::swarm::{create_network, NodeHandle, NodeId, SwarmError, SwarmKey};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Map, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn hex(s: &str) -> Vec<u8> {
    ::hex::decode(s).expect("valid hex literal")
}

fn arr<const N: usize>(s: &str) -> [u8; N] {
    hex(s).try_into().expect("literal of the right length")
}

fn diploma_end_to_end() -> Outcome {
    let start = Instant::now();
    let script = bundled("diploma").ok_or("diploma script missing")?;
    let mut d = Deployment::new(script.seed);
    let report = run_scenario(&mut d, &script, &mut BTreeMap::new()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(report.passed, || format!("scenario diverged:\n{report}"))?;
    let retrieve = report
        .steps
        .iter()
        .find(|s| s.action == "retrieve")
        .ok_or("no retrieve step")?;
    ensure(retrieve.detail.ends_with("byte-identical"), || {
        retrieve.detail.clone()
    })?;
    let last = report.verifications.last().ok_or("no verification")?;
    ensure(last.overall, || {
        format!("overall false: {:?}", last.reasons())
    })?;
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "overall=true, byte-identical retrieval, {elapsed:.2?}"
    ))
}

fn access_matrix() -> Outcome {
    let mut d = Deployment::new(2);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let recipient = AgreementKeypair::generate(&mut rng);
    let expected: BTreeMap<&str, [&str; 3]> = BTreeMap::from([
        (PORTAL_ORG, ["ok", "ok", "ok"]),
        (PARTNER_ORG, ["ok", "ok", "access-denied"]),
        (
            AUTHORITY_ORG,
            ["access-denied", "access-denied", "access-denied"],
        ),
    ]);
    let seeded_cid = cid_of_block(b"seed triplet").to_text();
    let seeded_key = canonical::to_canonical(
        &wrap_key(
            &ContentKey::generate(&mut rng),
            &recipient.public(),
            &mut rng,
        )
        .unwrap(),
    )
    .unwrap();
    let portal = d.gateway(PORTAL_ORG).unwrap().clone();
    d.channel
        .submit(
            &portal,
            GLASS_CHAINCODE,
            "create_glass_resource",
            vec![
                seeded_cid.clone().into(),
                format!("ipfs://{seeded_cid}").into(),
            ],
            BTreeMap::from([(WRAPPED_KEY_TRANSIENT.to_string(), seeded_key.clone())]),
        )
        .map_err(|e| e.to_string())?;
    let key_text = String::from_utf8(seeded_key.clone()).unwrap();
    let mut cells = 0;
    for org in ORG_NAMES {
        let id = d.gateway(org).unwrap().clone();
        let own_cid = cid_of_block(org.as_bytes()).to_text();
        let wk = canonical::to_canonical(
            &wrap_key(
                &ContentKey::generate(&mut rng),
                &recipient.public(),
                &mut rng,
            )
            .unwrap(),
        )
        .unwrap();
        let outcomes = [
            d.channel.submit(
                &id,
                GLASS_CHAINCODE,
                "create_glass_resource",
                vec![own_cid.clone().into(), format!("ipfs://{own_cid}").into()],
                BTreeMap::from([(WRAPPED_KEY_TRANSIENT.to_string(), wk)]),
            ),
            d.channel.submit(
                &id,
                GLASS_CHAINCODE,
                "read_glass_resource",
                vec![seeded_cid.clone().into()],
                BTreeMap::new(),
            ),
            d.channel.submit(
                &id,
                GLASS_CHAINCODE,
                "read_glass_resource_key",
                vec![seeded_cid.clone().into()],
                BTreeMap::new(),
            ),
        ];
        for (i, (got, want)) in outcomes.iter().zip(expected[org]).enumerate() {
            let code = match got {
                Ok(r) => {
                    if i == 2 {
                        ensure(r.result == seeded_key, || {
                            format!("{org} read a different key")
                        })?;
                    }
                    "ok"
                }
                Err(e) => {
                    ensure(!e.to_string().contains(&key_text), || {
                        format!("{org} error leaks the key")
                    })?;
                    e.code()
                }
            };
            ensure(code == want, || {
                format!("{org} op {i}: got {code}, want {want}")
            })?;
            cells += 1;
        }
    }
    ensure(d.channel.verify_chain(), || {
        "chain invalid after matrix".into()
    })?;
    Ok(format!("{cells}/9 cells match, no key bytes in any denial"))
}

fn flip_random_bit(bytes: &mut [u8], rng: &mut ChaCha20Rng) {
    let i = (rng.next_u64() as usize) % bytes.len();
    bytes[i] ^= 1 << (rng.next_u32() % 8);
}

/// Rewrites one leaf of `v` (skipping any key in `skip`); returns false when
/// there is nothing to mutate.
fn mutate_leaf(v: &mut Value, rng: &mut ChaCha20Rng, skip: &[&str]) -> bool {
    let mut paths = Vec::new();
    collect_leaves(v, &mut Vec::new(), &mut paths, skip);
    if paths.is_empty() {
        return false;
    }
    let path = &paths[(rng.next_u64() as usize) % paths.len()];
    let mut cur = v;
    for seg in path {
        cur = match seg {
            Seg::Key(k) => cur.get_mut(k.as_str()).unwrap(),
            Seg::Idx(i) => cur.get_mut(*i).unwrap(),
        };
    }
    match cur {
        Value::String(s) => {
            let mut chars: Vec<char> = s.chars().collect();
            if chars.is_empty() {
                *s = "x".into();
            } else {
                let i = (rng.next_u64() as usize) % chars.len();
                chars[i] = if chars[i] == 'z' { 'y' } else { 'z' };
                *s = chars.into_iter().collect();
            }
        }
        Value::Number(n) => *cur = json!(n.as_i64().unwrap_or(0) ^ 1),
        Value::Bool(b) => *b = !*b,
        other => *other = json!("tampered"),
    }
    true
}

enum Seg {
    Key(String),
    Idx(usize),
}

fn collect_leaves(v: &Value, at: &mut Vec<Seg>, out: &mut Vec<Vec<Seg>>, skip: &[&str]) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                if skip.contains(&k.as_str()) {
                    continue;
                }
                at.push(Seg::Key(k.clone()));
                collect_leaves(child, at, out, skip);
                at.pop();
            }
        }
        Value::Array(a) => {
            for (i, child) in a.iter().enumerate() {
                at.push(Seg::Idx(i));
                collect_leaves(child, at, out, skip);
                at.pop();
            }
        }
        _ => out.push(
            at.iter()
                .map(|s| match s {
                    Seg::Key(k) => Seg::Key(k.clone()),
                    Seg::Idx(i) => Seg::Idx(*i),
                })
                .collect(),
        ),
    }
}

fn tamper_evidence() -> Outcome {
    let script = bundled("diploma").unwrap();
    let mut d = Deployment::new(script.seed);
    let report = run_scenario(&mut d, &script, &mut BTreeMap::new()).map_err(|e| e.to_string())?;
    ensure(report.passed, || "baseline run failed".into())?;
    let config = d.channel.config().clone();
    let jsonl = d.channel.export_jsonl();
    let private = d.channel.export_private();
    let blocks = d.network.all_blocks();
    let root = report.distributions[0].cid;
    let mut student = glass_core::scenario::actor_wallet(script.seed, "student");
    let vc_bytes = d
        .session(PORTAL_ORG)
        .unwrap()
        .retrieve_credential(&mut student, &root)
        .map_err(|e| e.to_string())?
        .to_canonical();
    let vc = VerifiableCredential::from_canonical(&vc_bytes).map_err(|e| e.to_string())?;
    let issuer_doc: DidDocument = {
        let id = d.gateway(PARTNER_ORG).unwrap().clone();
        let raw = d
            .channel
            .evaluate(
                &id,
                "trust-registry",
                "resolve_did",
                vec![vc.issuer.as_str().into()],
            )
            .map_err(|e| e.to_string())?;
        canonical::from_canonical(&raw).map_err(|e| e.to_string())?
    };
    ensure(vc.signature_valid(&issuer_doc), || {
        "baseline VC invalid".into()
    })?;
    ensure(
        Channel::load(config.clone(), &jsonl, &private)
            .map(|c| c.verify_chain())
            .unwrap_or(false),
        || "baseline ledger invalid".into(),
    )?;

    let mut rng = ChaCha20Rng::seed_from_u64(0x7a3);
    let mut counts = [0usize; 4];
    for trial in 0..100 {
        let kind = trial % 4;
        let detected = match kind {
            0 => {
                let mut lines: Vec<Vec<u8>> =
                    jsonl.lines().map(|l| l.as_bytes().to_vec()).collect();
                let li = (rng.next_u64() as usize) % lines.len();
                flip_random_bit(&mut lines[li], &mut rng);
                let text = lines
                    .iter()
                    .map(|l| String::from_utf8_lossy(l).into_owned() + "\n")
                    .collect::<String>();
                match Channel::load(config.clone(), &text, &private) {
                    Ok(c) => !c.verify_chain(),
                    Err(_) => true,
                }
            }
            1 => {
                let mut store: Value = serde_json::from_slice(&private).unwrap();
                let mut targets = Vec::new();
                for (coll, entries) in store.as_object().unwrap() {
                    for key in entries.as_object().unwrap().keys() {
                        targets.push((coll.clone(), key.clone()));
                    }
                }
                let (coll, key) = &targets[(rng.next_u64() as usize) % targets.len()];
                let slot = &mut store[coll][key];
                let mut raw = bs58_decode(slot.as_str().unwrap());
                flip_random_bit(&mut raw, &mut rng);
                *slot = json!(bs58_encode(&raw));
                let bytes = canonical_serialize(&store).unwrap();
                match Channel::load(config.clone(), &jsonl, &bytes) {
                    Ok(c) => !c.verify_chain(),
                    Err(_) => true,
                }
            }
            2 => {
                let cids: Vec<ContentId> = blocks.cids().copied().collect();
                let target = cids[(rng.next_u64() as usize) % cids.len()];
                let mut bytes = blocks.get(&target).unwrap().to_vec();
                flip_random_bit(&mut bytes, &mut rng);
                let hash_caught = cid_of_block(&bytes) != target;
                let dag_caught = reassemble(&root, |c| {
                    if *c == target {
                        Some(bytes.clone())
                    } else {
                        blocks.get(c).map(<[u8]>::to_vec)
                    }
                })
                .is_err();
                hash_caught && dag_caught
            }
            _ => {
                let mut v: Value = serde_json::from_slice(&vc_bytes).unwrap();
                mutate_leaf(&mut v, &mut rng, &["proof"]);
                match serde_json::from_value::<VerifiableCredential>(v) {
                    Ok(m) => m.to_canonical() != vc_bytes && !m.signature_valid(&issuer_doc),
                    Err(_) => true,
                }
            }
        };
        ensure(detected, || {
            format!("trial {trial} (kind {kind}) undetected")
        })?;
        counts[kind] += 1;
    }
    Ok(format!(
        "100/100 detected (ledger {}, private {}, blocks {}, credential {})",
        counts[0], counts[1], counts[2], counts[3]
    ))
}

fn bs58_decode(s: &str) -> Vec<u8> {
    glass_core::crypto::base58_decode(s).unwrap()
}

fn bs58_encode(b: &[u8]) -> String {
    glass_core::crypto::base58_encode(b)
}

fn trust_gating() -> Outcome {
    const TYPES: [&str; 3] = ["AC", "TAX", "DL"];
    let mut w = common::world_with(44, &[]);
    let schemas: Vec<CredentialSchema> = TYPES.iter().map(|t| common::schema_for(t)).collect();
    {
        let mut a = w.d.session(AUTHORITY_ORG).unwrap();
        for s in &schemas {
            a.register_schema(s).map_err(|e| e.to_string())?;
        }
    }
    let mut cases = 0;
    for mask in 1u8..8 {
        let permitted: Vec<&str> = (0..3)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| TYPES[i])
            .collect();
        let issuer = Wallet::generate(&mut w.rng);
        {
            let mut p = w.d.session(PARTNER_ORG).unwrap();
            p.onboard(&issuer, PersonKind::LegalPerson)
                .map_err(|e| e.to_string())?;
        }
        w.d.session(AUTHORITY_ORG)
            .unwrap()
            .register_trusted_issuer(&TrustPolicyEntry {
                issuer: issuer.did().clone(),
                country_domain: "PT".into(),
                permitted_types: common::types(&permitted),
            })
            .map_err(|e| e.to_string())?;
        for schema in &schemas {
            let vc = issue(
                issuer.signing(),
                issuer.did(),
                w.student.did(),
                schema,
                common::diploma_claims(),
                w.d.channel.next_logical_time(),
            )
            .map_err(|e| e.to_string())?;
            let (student, employer) = (w.student.clone(), w.employer.clone());
            let (channel, id) = w.d.verifier_parts(PARTNER_ORG).unwrap();
            let out = present_and_verify(channel, &id, &student, vec![vc], &employer, &mut w.rng)
                .map_err(|e| e.to_string())?;
            let want = permitted.contains(&schema.credential_type.as_str());
            ensure(out.report.overall == want, || {
                format!(
                    "issuer for {permitted:?} presenting {}: overall {} ({:?})",
                    schema.credential_type,
                    out.report.overall,
                    out.report.reasons()
                )
            })?;
            ensure(out.report.per_credential[0].issuer_trusted == want, || {
                "issuer_trusted flag disagrees".into()
            })?;
            cases += 1;
        }
    }
    Ok(format!("{cases}/21 cases match type-in-policy predicate"))
}

fn dht_run(n: usize, seed: u64, keep_trace: bool) -> Result<(usize, String), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = SwarmKey::generate(&mut rng);
    let mut net = create_network(&key, seed);
    let nodes: Vec<NodeHandle> = (0..n)
        .map(|_| {
            net.join(&SigningKeypair::generate(&mut rng).public(), &key)
                .unwrap()
        })
        .collect();
    let pool: Vec<(ContentId, glass_core::dag::BlockSet)> = (0..40u32)
        .map(|i| {
            build_dag(
                &[seed.to_le_bytes().as_slice(), &i.to_le_bytes()].concat(),
                64,
            )
            .unwrap()
        })
        .collect();
    let mut oracle: BTreeMap<ContentId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut matched = 0;
    for pair in 0..200 {
        let who = &nodes[(rng.next_u64() as usize) % n];
        let (cid, blocks) = &pool[(rng.next_u64() as usize) % 30];
        net.provide(who, blocks).map_err(|e| e.to_string())?;
        oracle.entry(*cid).or_default().insert(who.id());
        let asker = &nodes[(rng.next_u64() as usize) % n];
        let probe = pool[(rng.next_u64() as usize) % pool.len()].0;
        let got = net
            .find_providers(asker, &probe)
            .map_err(|e| e.to_string())?;
        let want = oracle.get(&probe).cloned().unwrap_or_default();
        ensure(got == want, || {
            format!(
                "n={n} pair {pair}: got {} providers, oracle {}",
                got.len(),
                want.len()
            )
        })?;
        matched += 1;
    }
    let trace = if keep_trace {
        net.trace_jsonl()
    } else {
        String::new()
    };
    Ok((matched, trace))
}

fn dht_oracle() -> Outcome {
    let start = Instant::now();
    let mut lookups = 0;
    for n in 5..=64usize {
        let rerun = n % 10 == 5;
        let (m, trace) = dht_run(n, 1000 + n as u64, rerun)?;
        lookups += m;
        if rerun {
            let (_, again) = dht_run(n, 1000 + n as u64, true)?;
            ensure(again == trace, || {
                format!("n={n}: seeded rerun trace differs")
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{lookups}/{lookups} lookups equal the oracle over sizes 5..=64, reruns trace-identical, {elapsed:.2?}"
    ))
}

fn swarm_gating() -> Outcome {
    let mut d = Deployment::new(6);
    let node = d.node(PORTAL_ORG).unwrap();
    let (root, blocks) = build_dag(b"members only", 1024).unwrap();
    d.network
        .provide(&node, &blocks)
        .map_err(|e| e.to_string())?;
    let members = d.network.members();
    let records = d.network.provider_record_count();
    let good = *d.swarm_key().as_bytes();
    let mut rng = ChaCha20Rng::seed_from_u64(66);
    for i in 0..50 {
        let mut wrong = [0u8; 32];
        rng.fill_bytes(&mut wrong);
        if i % 2 == 0 {
            wrong = good;
            wrong[(rng.next_u64() as usize) % 32] ^= 1 + (rng.next_u32() % 255) as u8;
        }
        ensure(wrong != good, || "generated the real key".into())?;
        let keys = SigningKeypair::generate(&mut rng);
        ensure(
            d.network.join(&keys.public(), &SwarmKey::new(wrong)) == Err(SwarmError::SwarmRejected),
            || format!("wrong key {i} admitted"),
        )?;
        let h = NodeHandle::for_public(&keys.public());
        for _ in 0..3 {
            ensure(
                d.network.fetch(&h, &root) == Err(SwarmError::SwarmRejected),
                || format!("outsider {i} fetched"),
            )?;
        }
        ensure(
            d.network.find_providers(&h, &root) == Err(SwarmError::SwarmRejected),
            || format!("outsider {i} looked up providers"),
        )?;
    }
    ensure(d.network.members() == members, || {
        "membership changed".into()
    })?;
    ensure(d.network.provider_record_count() == records, || {
        "records changed".into()
    })?;
    Ok("50/50 wrong keys rejected, every follow-up fetch refused".into())
}

fn crypto_vectors() -> Outcome {
    let sha = [
        (
            "",
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        ),
        (
            "abc",
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
        ),
        (
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
        ),
    ];
    for (m, want) in sha {
        ensure(
            sha256(m.as_bytes()).as_bytes().to_vec() == hex(want),
            || format!("sha256({m:?})"),
        )?;
    }
    let million = vec![b'a'; 1_000_000];
    ensure(
        sha256(&million).as_bytes().to_vec()
            == hex("cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0"),
        || "sha256(a x 1e6)".into(),
    )?;

    let ed = [
        (
            "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
            "",
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
        ),
        (
            "4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
            "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c",
            "72",
            "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00",
        ),
        (
            "c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7",
            "fc51cd8e6218a1a38da47ed00230f0580816ed13ba3303ac5deb911548908025",
            "af82",
            "6291d657deec24024827e69c3abe01a30ce548a284743a445e3680d7db5ac3ac18ff9b538d16f290ae67f760984dc6594a7c15e9716ed28dc027beceea1ec40a",
        ),
    ];
    for (i, (sk, pk, msg, sig)) in ed.iter().enumerate() {
        let k = SigningKeypair::from_seed(arr(sk));
        let m = hex(msg);
        ensure(k.public().as_bytes().to_vec() == hex(pk), || {
            format!("ed25519 test {} public", i + 1)
        })?;
        ensure(k.sign(&m).as_bytes().to_vec() == hex(sig), || {
            format!("ed25519 test {} signature", i + 1)
        })?;
        ensure(verify(&k.public(), &m, &Signature::new(arr(sig))), || {
            format!("ed25519 test {} verify", i + 1)
        })?;
    }

    let gcm = [
        ("0000000000000000000000000000000000000000000000000000000000000000", "000000000000000000000000", "", "530f8afbc74536b9a963b4f1c4cb738b"),
        (
            "0000000000000000000000000000000000000000000000000000000000000000",
            "000000000000000000000000",
            "00000000000000000000000000000000",
            "cea7403d4d606b6e074ec5d3baf39d18d0d1c8a799996bf0265b98b5d48ab919",
        ),
        (
            "feffe9928665731c6d6a8f9467308308feffe9928665731c6d6a8f9467308308",
            "cafebabefacedbaddecaf888",
            "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b391aafd255",
            "522dc1f099567d07f47f37a32a84427d643a8cdcbfe5c0c97598a2bd2555d1aa8cb08e48590dbb3da7b08b1056828838c5f61e6393ba7a0abcc9f662898015adb094dac5d93471bdec1a502270e3cc6c",
        ),
        ("b52c505a37d78eda5dd34f20c22540ea1b58963cf8e5bf8ffa85f9f2492505b4", "516c33929df5a3284ff463d7", "", "bdc1ac884d332457a1d2664f168c76f0"),
    ];
    for (i, (k, iv, pt, ct)) in gcm.iter().enumerate() {
        let ck = ContentKey {
            key: arr(k),
            nonce: arr(iv),
        };
        let sealed = encrypt_content(&hex(pt), &ck);
        ensure(sealed == hex(ct), || format!("gcm vector {i} ciphertext"))?;
        ensure(decrypt_content(&sealed, &ck).ok() == Some(hex(pt)), || {
            format!("gcm vector {i} decrypt")
        })?;
    }
    Ok("4 SHA-256, 3 Ed25519, 4 AES-256-GCM vectors bit-exact".into())
}

fn random_text(rng: &mut ChaCha20Rng) -> String {
    const ALPHABET: &[&str] = &[
        "a", "b", "Z", "0", "_", " ", "\"", "\\", "\n", "\u{1}", "é", "ß", "€", "😀", "\u{7f}", "/",
    ];
    let len = (rng.next_u32() % 6) as usize;
    (0..len)
        .map(|_| ALPHABET[(rng.next_u32() as usize) % ALPHABET.len()])
        .collect()
}

/// A random document as ordered (key, value) pairs, so the same content
/// can be rendered with different key orders.
#[derive(Clone)]
enum Doc {
    Null,
    Bool(bool),
    Int(i64),
    Text(String),
    List(Vec<Doc>),
    Map(Vec<(String, Doc)>),
}

fn random_doc(rng: &mut ChaCha20Rng, depth: u32) -> Doc {
    let pick = rng.next_u32() % if depth >= 3 { 4 } else { 6 };
    match pick {
        0 => Doc::Null,
        1 => Doc::Bool(rng.next_u32().is_multiple_of(2)),
        2 => Doc::Int(match rng.next_u32() % 4 {
            0 => 0,
            1 => i64::MIN,
            2 => i64::MAX,
            _ => rng.next_u64() as i64 >> (rng.next_u32() % 63),
        }),
        3 => Doc::Text(random_text(rng)),
        4 => Doc::List(
            (0..rng.next_u32() % 4)
                .map(|_| random_doc(rng, depth + 1))
                .collect(),
        ),
        _ => {
            let mut seen = BTreeSet::new();
            let mut entries = Vec::new();
            for _ in 0..rng.next_u32() % 5 {
                let k = random_text(rng);
                if seen.insert(k.clone()) {
                    entries.push((k, random_doc(rng, depth + 1)));
                }
            }
            Doc::Map(entries)
        }
    }
}

/// Renders with the given key order, with arbitrary whitespace, as a
/// non-canonical producer would.
fn render(doc: &Doc, rng: &mut ChaCha20Rng) -> String {
    match doc {
        Doc::Null => "null".into(),
        Doc::Bool(b) => b.to_string(),
        Doc::Int(i) => i.to_string(),
        Doc::Text(s) => serde_json::to_string(s).unwrap(),
        Doc::List(items) => format!(
            "[ {} ]",
            items
                .iter()
                .map(|d| render(d, rng))
                .collect::<Vec<_>>()
                .join(" , ")
        ),
        Doc::Map(entries) => {
            let mut order: Vec<&(String, Doc)> = entries.iter().collect();
            for i in (1..order.len()).rev() {
                let j = (rng.next_u64() as usize) % (i + 1);
                order.swap(i, j);
            }
            let parts: Vec<String> = order
                .iter()
                .map(|(k, v)| {
                    format!(
                        "{}:\n {}",
                        serde_json::to_string(k).unwrap(),
                        render(v, rng)
                    )
                })
                .collect();
            format!("{{ {} }}", parts.join(",\t"))
        }
    }
}

fn canonicalization() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for trial in 0..1000 {
        let doc = match random_doc(&mut rng, 0) {
            d @ Doc::Map(_) => d,
            other => Doc::Map(vec![("v".into(), other)]),
        };
        let a: Value = serde_json::from_str(&render(&doc, &mut rng)).map_err(|e| e.to_string())?;
        let b: Value = serde_json::from_str(&render(&doc, &mut rng)).map_err(|e| e.to_string())?;
        let sa = canonical_serialize(&a).map_err(|e| e.to_string())?;
        let sb = canonical_serialize(&b).map_err(|e| e.to_string())?;
        ensure(sa == sb, || {
            format!("trial {trial}: key order changed the bytes")
        })?;
        let reparsed = canonical::parse(&sa).map_err(|e| format!("trial {trial}: {e}"))?;
        let again = canonical_serialize(&reparsed).map_err(|e| e.to_string())?;
        ensure(again == sa, || format!("trial {trial}: not idempotent"))?;
        let mut as_map = Map::new();
        as_map.insert("doc".into(), a);
        ensure(canonical_serialize(&Value::Object(as_map)).is_ok(), || {
            "nesting failed".into()
        })?;
    }
    Ok("1000/1000 documents idempotent and order-independent".into())
}

fn audit_replay() -> Outcome {
    let mut summary = Vec::new();
    for (name, _) in BUNDLED {
        let script = bundled(name).unwrap();
        let mut live = Deployment::new(script.seed);
        let report =
            run_scenario(&mut live, &script, &mut BTreeMap::new()).map_err(|e| e.to_string())?;
        ensure(report.passed, || format!("{name} failed:\n{report}"))?;
        let replayed = Deployment::restore(
            script.seed,
            &live.channel.export_jsonl(),
            &live.channel.export_private(),
            &live.network.snapshot(),
            &live.network.all_blocks(),
        )
        .map_err(|e| e.to_string())?;
        ensure(replayed.channel.verify_chain(), || {
            format!("{name}: replayed chain invalid")
        })?;
        ensure(
            replayed.channel.world_state().to_canonical()
                == live.channel.world_state().to_canonical(),
            || format!("{name}: world state differs"),
        )?;
        ensure(
            registry_snapshot(&replayed) == registry_snapshot(&live),
            || format!("{name}: registry dump differs"),
        )?;
        summary.push(format!("{name}@{}", report.final_height));
    }
    Ok(format!(
        "world state and registry identical for {}",
        summary.join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("diploma end-to-end", diploma_end_to_end),
        ("access matrix", access_matrix),
        ("tamper evidence", tamper_evidence),
        ("trust-policy gating", trust_gating),
        ("DHT oracle equivalence", dht_oracle),
        ("swarm gating", swarm_gating),
        ("crypto vectors", crypto_vectors),
        ("canonicalization", canonicalization),
        ("audit replay", audit_replay),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| Err(format!("panicked: {p:?}")));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
