#![allow(dead_code)]

use std::collections::BTreeSet;

use glass_core::chaincode::{TrustPolicyEntry, AUTHORITY_ORG};
use glass_core::credential::{academic_schema, ClaimValue, Claims, CredentialSchema};
use glass_core::deployment::{Deployment, PARTNER_ORG, PORTAL_ORG};
use glass_core::did::PersonKind;
use glass_core::portal::Wallet;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub struct World {
    pub d: Deployment,
    pub university: Wallet,
    pub student: Wallet,
    pub employer: Wallet,
    pub rng: ChaCha20Rng,
}

pub fn diploma_claims() -> Claims {
    [
        ("name", ClaimValue::from("Maria Silva")),
        ("degree", "MSc Informatics Engineering".into()),
        ("award_date", "2021-07-15".into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn types(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Three onboarded parties, the academic schema registered, the university
/// trusted for `issuer_types` and the employer a trusted app.
pub fn world_with(seed: u64, issuer_types: &[&str]) -> World {
    let mut d = Deployment::new(seed);
    let mut r = rng(seed);
    let university = Wallet::generate(&mut r);
    let student = Wallet::generate(&mut r);
    let employer = Wallet::generate(&mut r);
    {
        let mut s = d.session(PARTNER_ORG).unwrap();
        s.onboard(&university, PersonKind::LegalPerson).unwrap();
        s.onboard(&employer, PersonKind::LegalPerson).unwrap();
    }
    d.session(PORTAL_ORG)
        .unwrap()
        .onboard(&student, PersonKind::NaturalPerson)
        .unwrap();
    {
        let mut a = d.session(AUTHORITY_ORG).unwrap();
        a.register_schema(&academic_schema()).unwrap();
        if !issuer_types.is_empty() {
            a.register_trusted_issuer(&TrustPolicyEntry {
                issuer: university.did().clone(),
                country_domain: "PT".into(),
                permitted_types: types(issuer_types),
            })
            .unwrap();
        }
        a.register_trusted_app(employer.did()).unwrap();
    }
    World {
        d,
        university,
        student,
        employer,
        rng: r,
    }
}

pub fn world(seed: u64) -> World {
    world_with(seed, &["AC"])
}

pub fn schema_for(credential_type: &str) -> CredentialSchema {
    let mut s = academic_schema();
    s.schema_id = format!("glass:schema:{}:1", credential_type.to_lowercase());
    s.credential_type = credential_type.into();
    s
}
