//! Scripted end-to-end runs over a [`Deployment`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaincode::{registry_dump, TrustPolicyEntry};
use crate::credential::{Claims, CredentialSchema, VerifiableCredential, VerificationReport};
use crate::crypto::sha256_concat;
use crate::deployment::{Deployment, DeploymentError};
use crate::did::PersonKind;
use crate::ledger::AuditRow;
use crate::portal::{present_and_verify, DistributionRecord, PortalError, Wallet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Citizen,
    Issuer,
    Verifier,
    Authority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actor {
    pub name: String,
    pub role: Role,
    pub org: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    /// Registers the actor's DID; citizens default to natural persons.
    Onboard {
        actor: String,
        #[serde(default)]
        kind: Option<PersonKind>,
    },
    RegisterSchema {
        actor: String,
        schema: CredentialSchema,
    },
    RegisterIssuer {
        actor: String,
        issuer: String,
        country_domain: String,
        permitted_types: BTreeSet<String>,
    },
    RegisterApp {
        actor: String,
        app: String,
    },
    Issue {
        actor: String,
        subject: String,
        schema_id: String,
        claims: Claims,
        /// Label later steps use to refer to this credential.
        credential: String,
    },
    Retrieve {
        actor: String,
        credential: String,
        /// Org whose portal performs the retrieval; defaults to the actor's.
        #[serde(default)]
        org: Option<String>,
    },
    Present {
        actor: String,
        verifier: String,
        credentials: Vec<String>,
        expect_overall: bool,
    },
    ExpectError {
        error: String,
        step: Box<Step>,
    },
}

impl Step {
    pub fn action(&self) -> &'static str {
        match self {
            Step::Onboard { .. } => "onboard",
            Step::RegisterSchema { .. } => "register_schema",
            Step::RegisterIssuer { .. } => "register_issuer",
            Step::RegisterApp { .. } => "register_app",
            Step::Issue { .. } => "issue",
            Step::Retrieve { .. } => "retrieve",
            Step::Present { .. } => "present",
            Step::ExpectError { .. } => "expect_error",
        }
    }

    fn actor_refs(&self) -> Vec<&str> {
        match self {
            Step::Onboard { actor, .. }
            | Step::RegisterSchema { actor, .. }
            | Step::RegisterApp { actor, .. }
            | Step::Retrieve { actor, .. } => {
                let mut v = vec![actor.as_str()];
                if let Step::RegisterApp { app, .. } = self {
                    v.push(app);
                }
                v
            }
            Step::RegisterIssuer { actor, issuer, .. } => vec![actor, issuer],
            Step::Issue { actor, subject, .. } => vec![actor, subject],
            Step::Present {
                actor, verifier, ..
            } => vec![actor, verifier],
            Step::ExpectError { step, .. } => step.actor_refs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub seed: u64,
    pub actors: Vec<Actor>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Deployment(#[from] DeploymentError),
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let script: ScenarioScript =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        script.validate()?;
        Ok(script)
    }

    /// Actor names are unique and every step names declared actors.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut names = BTreeSet::new();
        for a in &self.actors {
            if !names.insert(a.name.as_str()) {
                return Err(ScenarioError::Invalid(format!(
                    "actor {} declared twice",
                    a.name
                )));
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            for r in s.actor_refs() {
                if !names.contains(r) {
                    return Err(ScenarioError::Invalid(format!(
                        "step {i} refers to undeclared actor {r}"
                    )));
                }
            }
            if let Step::ExpectError { step, .. } = s {
                if matches!(**step, Step::ExpectError { .. }) {
                    return Err(ScenarioError::Invalid(format!(
                        "step {i}: expect_error cannot wrap expect_error"
                    )));
                }
            }
        }
        Ok(())
    }

    fn actor(&self, name: &str) -> &Actor {
        self.actors
            .iter()
            .find(|a| a.name == name)
            .expect("validated")
    }
}

/// Scripts shipped with the crate, by file name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("diploma.json", include_str!("../scenarios/diploma.json")),
    (
        "untrusted_issuer.json",
        include_str!("../scenarios/untrusted_issuer.json"),
    ),
    (
        "org2_key_read.json",
        include_str!("../scenarios/org2_key_read.json"),
    ),
];

pub fn bundled(name: &str) -> Option<ScenarioScript> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name || n.trim_end_matches(".json") == name)
        .map(|(_, text)| ScenarioScript::from_json(text).expect("bundled scripts parse"))
}

/// Deterministic wallet for an actor of a script.
pub fn actor_wallet(seed: u64, name: &str) -> Wallet {
    let d = sha256_concat(&[
        b"glass/scenario-actor/v1",
        &seed.to_le_bytes(),
        name.as_bytes(),
    ]);
    Wallet::generate(&mut ChaCha20Rng::from_seed(*d.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    ExpectedError,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub action: String,
    pub status: StepStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub passed: bool,
    pub failed_step: Option<usize>,
    pub steps: Vec<StepReport>,
    pub final_height: u64,
    pub audit: Vec<AuditRow>,
    pub distributions: Vec<DistributionRecord>,
    pub verifications: Vec<VerificationReport>,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            let status = match s.status {
                StepStatus::Ok => "ok",
                StepStatus::ExpectedError => "expected-error",
                StepStatus::Failed => "FAILED",
            };
            writeln!(
                f,
                "step {:>2} {:<16} {:<14} {}",
                s.index, s.action, status, s.detail
            )?;
        }
        writeln!(f, "final height: {}", self.final_height)?;
        write!(f, "result: {}", if self.passed { "pass" } else { "fail" })
    }
}

/// Outcome of one step body: a summary line, or a portal error.
enum Outcome {
    Done(String),
    Diverged(String),
}

struct Runner<'a> {
    script: &'a ScenarioScript,
    deployment: &'a mut Deployment,
    wallets: &'a mut BTreeMap<String, Wallet>,
    rng: ChaCha20Rng,
    issued: BTreeMap<String, (DistributionRecord, VerifiableCredential)>,
    retrieved: BTreeMap<String, VerifiableCredential>,
    distributions: Vec<DistributionRecord>,
    verifications: Vec<VerificationReport>,
}

impl Runner<'_> {
    fn wallet(&self, name: &str) -> Wallet {
        self.wallets[name].clone()
    }

    fn org_of(&self, name: &str) -> String {
        self.script.actor(name).org.clone()
    }

    fn exec(&mut self, step: &Step) -> Result<Outcome, PortalError> {
        match step {
            Step::Onboard { actor, kind } => {
                let kind = kind.unwrap_or(match self.script.actor(actor).role {
                    Role::Citizen => PersonKind::NaturalPerson,
                    _ => PersonKind::LegalPerson,
                });
                let w = self.wallet(actor);
                let org = self.org_of(actor);
                let did = self.session(&org)?.onboard(&w, kind)?;
                Ok(Outcome::Done(format!("{actor} = {did}")))
            }
            Step::RegisterSchema { actor, schema } => {
                let org = self.org_of(actor);
                self.session(&org)?.register_schema(schema)?;
                Ok(Outcome::Done(schema.schema_id.clone()))
            }
            Step::RegisterIssuer {
                actor,
                issuer,
                country_domain,
                permitted_types,
            } => {
                let entry = TrustPolicyEntry {
                    issuer: self.wallets[issuer].did().clone(),
                    country_domain: country_domain.clone(),
                    permitted_types: permitted_types.clone(),
                };
                let org = self.org_of(actor);
                self.session(&org)?.register_trusted_issuer(&entry)?;
                let types: Vec<&str> = permitted_types.iter().map(String::as_str).collect();
                Ok(Outcome::Done(format!(
                    "{issuer} in {country_domain} for {}",
                    types.join(",")
                )))
            }
            Step::RegisterApp { actor, app } => {
                let did = self.wallets[app].did().clone();
                let org = self.org_of(actor);
                self.session(&org)?.register_trusted_app(&did)?;
                Ok(Outcome::Done(app.clone()))
            }
            Step::Issue {
                actor,
                subject,
                schema_id,
                claims,
                credential,
            } => {
                let issuer = self.wallet(actor);
                let subject_did = self.wallets[subject].did().clone();
                let org = self.org_of(actor);
                let mut rng = self.rng.clone();
                let (issuance, leaked) = {
                    let mut session = self.session(&org)?;
                    let issuance = session.issue_and_distribute(
                        &issuer,
                        &subject_did,
                        schema_id,
                        claims.clone(),
                        &mut rng,
                    )?;
                    let leaked = session
                        .staging()
                        .contains_bytes(&issuance.credential.to_canonical());
                    (issuance, leaked)
                };
                self.rng = rng;
                if leaked {
                    return Ok(Outcome::Diverged("plaintext left in staging".into()));
                }
                let detail = format!(
                    "{credential} -> {} at height {}",
                    issuance.record.cid, issuance.record.receipt.block_height
                );
                self.distributions.push(issuance.record.clone());
                self.issued
                    .insert(credential.clone(), (issuance.record, issuance.credential));
                Ok(Outcome::Done(detail))
            }
            Step::Retrieve {
                actor,
                credential,
                org,
            } => {
                let Some((record, original)) = self.issued.get(credential).cloned() else {
                    return Ok(Outcome::Diverged(format!(
                        "no credential labelled {credential}"
                    )));
                };
                let org = org.clone().unwrap_or_else(|| self.org_of(actor));
                let mut w = self.wallet(actor);
                let vc = self
                    .session(&org)?
                    .retrieve_credential(&mut w, &record.cid)?;
                self.wallets.insert(actor.clone(), w);
                if vc.to_canonical() != original.to_canonical() {
                    return Ok(Outcome::Diverged(format!(
                        "{credential}: retrieved credential differs from the issued one"
                    )));
                }
                self.retrieved.insert(credential.clone(), vc);
                Ok(Outcome::Done(format!("{credential} byte-identical")))
            }
            Step::Present {
                actor,
                verifier,
                credentials,
                expect_overall,
            } => {
                let mut vcs = Vec::new();
                for c in credentials {
                    match self
                        .retrieved
                        .get(c)
                        .cloned()
                        .or_else(|| self.issued.get(c).map(|(_, vc)| vc.clone()))
                    {
                        Some(vc) => vcs.push(vc),
                        None => {
                            return Ok(Outcome::Diverged(format!("no credential labelled {c}")))
                        }
                    }
                }
                let holder = self.wallet(actor);
                let verifier_wallet = self.wallet(verifier);
                let org = self.org_of(verifier);
                let (channel, identity) = self
                    .deployment
                    .verifier_parts(&org)
                    .map_err(deployment_to_portal)?;
                let outcome = present_and_verify(
                    channel,
                    &identity,
                    &holder,
                    vcs,
                    &verifier_wallet,
                    &mut self.rng,
                )?;
                let report = outcome.report;
                let overall = report.overall;
                let reasons = report.reasons().join(",");
                self.verifications.push(report);
                let detail = format!(
                    "overall={overall}{}",
                    if reasons.is_empty() {
                        String::new()
                    } else {
                        format!(" ({reasons})")
                    }
                );
                if overall == *expect_overall {
                    Ok(Outcome::Done(detail))
                } else {
                    Ok(Outcome::Diverged(format!(
                        "{detail}, expected overall={expect_overall}"
                    )))
                }
            }
            Step::ExpectError { .. } => unreachable!("handled by the caller"),
        }
    }

    fn session(&mut self, org: &str) -> Result<crate::portal::PortalSession<'_>, PortalError> {
        self.deployment.session(org).map_err(deployment_to_portal)
    }
}

fn deployment_to_portal(e: DeploymentError) -> PortalError {
    PortalError::Malformed {
        what: "scenario",
        reason: e.to_string(),
    }
}

/// Runs every step in order and stops at the first divergence. Wallets for
/// actors not already in `wallets` are derived from the script seed.
pub fn run_scenario(
    deployment: &mut Deployment,
    script: &ScenarioScript,
    wallets: &mut BTreeMap<String, Wallet>,
) -> Result<RunReport, ScenarioError> {
    script.validate()?;
    for a in &script.actors {
        if deployment.gateway(&a.org).is_err() {
            return Err(ScenarioError::Invalid(format!(
                "actor {} belongs to unknown org {}",
                a.name, a.org
            )));
        }
        wallets
            .entry(a.name.clone())
            .or_insert_with(|| actor_wallet(script.seed, &a.name));
    }
    let d = sha256_concat(&[b"glass/scenario-run/v1", &script.seed.to_le_bytes()]);
    let mut runner = Runner {
        script,
        deployment,
        wallets,
        rng: ChaCha20Rng::from_seed(*d.as_bytes()),
        issued: BTreeMap::new(),
        retrieved: BTreeMap::new(),
        distributions: Vec::new(),
        verifications: Vec::new(),
    };
    let mut steps = Vec::new();
    let mut failed_step = None;
    for (index, step) in script.steps.iter().enumerate() {
        let (status, detail) = match step {
            Step::ExpectError { error, step: inner } => match runner.exec(inner) {
                Err(e) if e.code() == error => (
                    StepStatus::ExpectedError,
                    format!("{}: {e}", inner.action()),
                ),
                Err(e) => (
                    StepStatus::Failed,
                    format!("expected {error}, got {}: {e}", e.code()),
                ),
                Ok(Outcome::Done(d)) => (
                    StepStatus::Failed,
                    format!("expected {error}, but {} succeeded: {d}", inner.action()),
                ),
                Ok(Outcome::Diverged(d)) => (StepStatus::Failed, d),
            },
            _ => match runner.exec(step) {
                Ok(Outcome::Done(d)) => (StepStatus::Ok, d),
                Ok(Outcome::Diverged(d)) => (StepStatus::Failed, d),
                Err(e) => (StepStatus::Failed, format!("{}: {e}", e.code())),
            },
        };
        steps.push(StepReport {
            index,
            action: step.action().to_string(),
            status,
            detail,
        });
        if status == StepStatus::Failed {
            failed_step = Some(index);
            break;
        }
    }
    let Runner {
        deployment,
        distributions,
        verifications,
        ..
    } = runner;
    Ok(RunReport {
        seed: script.seed,
        passed: failed_step.is_none(),
        failed_step,
        steps,
        final_height: deployment.channel.height(),
        audit: deployment.channel.audit_rows(),
        distributions,
        verifications,
    })
}

/// Canonical registry dump of the deployment's committed state.
pub fn registry_snapshot(deployment: &Deployment) -> Vec<u8> {
    registry_dump(deployment.channel.world_state()).to_canonical()
}
