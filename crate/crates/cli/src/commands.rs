use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use glass_core::chaincode::{registry_dump, TrustPolicyEntry};
use glass_core::cid::ContentId;
use glass_core::credential::{
    self, Claims, CredentialSchema, VerifiableCredential, VerifiablePresentation,
};
use glass_core::crypto::{base58_decode, base58_encode, sha256_concat};
use glass_core::did::{Did, PersonKind};
use glass_core::ledger::format_audit_table;
use glass_core::portal::{open_verification, LedgerRegistry, Wallet};
use glass_core::scenario::{
    actor_wallet, bundled, run_scenario, ScenarioError, ScenarioScript, BUNDLED,
};

use crate::args::{
    Cli, Command, IdentityCmd, IssueArgs, PresentArgs, RegistryCmd, RetrieveArgs, ScenarioCmd,
    SchemaCmd, VerifyArgs,
};
use crate::error::{CliError, EXIT_FAILED, EXIT_OK};
use crate::workspace::{
    self, default_chunk_size, read, read_json, valid_name, write_canonical, InitConfig, Workspace,
    CREDENTIALS, MANIFEST,
};

/// What a command prints, in both renderings, and how the process exits.
pub struct Output {
    pub text: String,
    pub json: Value,
    pub status: u8,
}

impl Output {
    fn ok(text: impl Into<String>, json: Value) -> Self {
        Output {
            text: text.into(),
            json,
            status: EXIT_OK,
        }
    }
}

/// A presentation as handed from holder to verifier.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresentationFile {
    verifier: Did,
    presentation: VerifiablePresentation,
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let root = cli.workspace.as_path();
    match &cli.command {
        Command::Init { config } => init(root, cli.seed, config.as_deref()),
        Command::Identity(cmd) => identity(open(cli, writes_identity(cmd))?, cmd),
        Command::Registry(cmd) => registry(open(cli, writes_registry(cmd))?, cmd),
        Command::Schema(cmd) => schema(open(cli, matches!(cmd, SchemaCmd::Register { .. }))?, cmd),
        Command::Issue(a) => issue(open(cli, true)?, a),
        Command::Retrieve(a) => retrieve(open(cli, true)?, a),
        Command::Present(a) => present(open(cli, true)?, a),
        Command::Verify(a) => verify(open(cli, true)?, a),
        Command::Scenario(ScenarioCmd::List) => Ok(scenario_list()),
        Command::Scenario(ScenarioCmd::Run { file, bundled }) => {
            let script = load_script(file.as_deref(), bundled.as_deref())?;
            scenario_run(open(cli, true)?, &script)
        }
        Command::Audit => audit(&open(cli, false)?),
        Command::VerifyChain => verify_chain(cli),
    }
}

fn writes_identity(cmd: &IdentityCmd) -> bool {
    matches!(cmd, IdentityCmd::Create { .. })
}

fn writes_registry(cmd: &RegistryCmd) -> bool {
    matches!(
        cmd,
        RegistryCmd::TrustIssuer { .. } | RegistryCmd::TrustApp { .. }
    )
}

fn open(cli: &Cli, writer: bool) -> Result<Workspace, CliError> {
    let ws = Workspace::open(&cli.workspace, writer, writer)?;
    check_seed(&ws, cli.seed)?;
    Ok(ws)
}

fn check_seed(ws: &Workspace, seed: Option<u64>) -> Result<(), CliError> {
    match seed {
        Some(s) if s != ws.seed() => Err(CliError::Usage(format!(
            "--seed {s} does not match the workspace seed {}",
            ws.seed()
        ))),
        _ => Ok(()),
    }
}

/// Persists the workspace whatever the outcome: rejected transactions are
/// part of the ledger too.
fn commit<T>(ws: &Workspace, result: Result<T, CliError>) -> Result<T, CliError> {
    ws.save()?;
    result
}

/// Randomness for one command, fixed by seed, height and purpose so that
/// replaying the same commands reproduces the same workspace.
fn command_rng(ws: &Workspace, purpose: &str) -> ChaCha20Rng {
    let d = sha256_concat(&[
        b"glass/cli/v1",
        &ws.seed().to_le_bytes(),
        &ws.deployment.channel.height().to_le_bytes(),
        purpose.as_bytes(),
    ]);
    ChaCha20Rng::from_seed(*d.as_bytes())
}

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("serializable")
}

fn init(root: &Path, seed: Option<u64>, config: Option<&Path>) -> Result<Output, CliError> {
    let cfg: InitConfig = match config {
        Some(path) => read_json(path)?,
        None => InitConfig::default(),
    };
    let seed = match (seed, cfg.seed) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Usage(format!(
                "--seed {a} conflicts with seed {b} in the config file"
            )))
        }
        (a, b) => a.or(b).unwrap_or(0),
    };
    let chunk_size = cfg.chunk_size.unwrap_or_else(default_chunk_size);
    let ws = Workspace::init(root, seed, chunk_size)?;
    let m = ws.manifest();
    let text = format!(
        "initialized {} (seed {seed}, {} orgs, {} swarm nodes, chunk size {chunk_size})",
        root.display(),
        m.orgs.len(),
        ws.deployment.network.len()
    );
    Ok(Output::ok(text, to_json(m)))
}

fn resolve_subject(ws: &Workspace, who: &str) -> Result<Did, CliError> {
    if who.starts_with(glass_core::did::DID_PREFIX) {
        Did::parse(who).map_err(|e| CliError::Usage(e.to_string()))
    } else {
        Ok(ws.load_wallet(who)?.did().clone())
    }
}

fn identity(mut ws: Workspace, cmd: &IdentityCmd) -> Result<Output, CliError> {
    match cmd {
        IdentityCmd::Create { name, kind, org } => {
            valid_name(name)?;
            if ws.has_wallet(name) {
                return Err(CliError::Usage(format!("identity {name} already exists")));
            }
            let wallet = actor_wallet(ws.seed(), name);
            let result = onboard(&mut ws, &wallet, *kind, org);
            let did = commit(&ws, result)?;
            ws.save_wallet(name, &wallet)?;
            Ok(Output::ok(
                format!("{name}: {did}"),
                json!({ "name": name, "did": did, "kind": kind, "org": org }),
            ))
        }
        IdentityCmd::Show { name } => {
            let w = ws.load_wallet(name)?;
            let kind = registered_kind(&ws, w.did());
            let doc = w.document(kind.unwrap_or(PersonKind::NaturalPerson));
            let registered = kind.is_some();
            let mut text = format!(
                "name: {name}\ndid: {}\nsigning key: {}\nagreement key: {}\nregistered: {registered}\n",
                w.did(),
                doc.signing_public.to_base58(),
                doc.agreement_public.to_base58()
            );
            for h in w.holdings() {
                text.push_str(&format!("holds: {} at {}\n", h.credential_id, h.uri));
            }
            Ok(Output::ok(
                text.trim_end(),
                json!({
                    "name": name,
                    "document": doc,
                    "registered": registered,
                    "holdings": w.holdings(),
                }),
            ))
        }
        IdentityCmd::List => {
            let mut rows = Vec::new();
            let mut text = String::new();
            for name in ws.wallet_names()? {
                let w = ws.load_wallet(&name)?;
                text.push_str(&format!("{name}\t{}\n", w.did()));
                rows.push(json!({ "name": name, "did": w.did() }));
            }
            Ok(Output::ok(text.trim_end(), Value::Array(rows)))
        }
    }
}

fn registered_kind(ws: &Workspace, did: &Did) -> Option<PersonKind> {
    registry_dump(ws.deployment.channel.world_state())
        .dids
        .get(did)
        .map(|d| d.kind)
}

fn onboard(
    ws: &mut Workspace,
    wallet: &Wallet,
    kind: PersonKind,
    org: &str,
) -> Result<Did, CliError> {
    let chunk = ws.chunk_size();
    Ok(ws
        .deployment
        .session(org)?
        .with_chunk_size(chunk)
        .onboard(wallet, kind)?)
}

fn registry(mut ws: Workspace, cmd: &RegistryCmd) -> Result<Output, CliError> {
    match cmd {
        RegistryCmd::Dump => {
            let dump = registry_dump(ws.deployment.channel.world_state());
            let text = String::from_utf8(dump.to_canonical()).expect("canonical JSON is UTF-8");
            Ok(Output::ok(text, to_json(&dump)))
        }
        RegistryCmd::Resolve { did } => {
            let did = resolve_subject(&ws, did)?;
            let dump = registry_dump(ws.deployment.channel.world_state());
            let doc = dump
                .dids
                .get(&did)
                .ok_or_else(|| CliError::failed("not-found", format!("{did} is not registered")))?;
            let types: Vec<&String> = dump
                .issuers
                .iter()
                .filter(|e| e.issuer == did)
                .flat_map(|e| e.permitted_types.iter())
                .collect();
            let app = dump.is_trusted_app(&did);
            let text = format!(
                "did: {did}\nkind: {}\nsigning key: {}\nagreement key: {}\ntrusted issuer for: {}\ntrusted app: {app}",
                to_json(&doc.kind).as_str().unwrap_or_default(),
                doc.signing_public.to_base58(),
                doc.agreement_public.to_base58(),
                if types.is_empty() { "-".to_string() } else { types.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(",") },
            );
            Ok(Output::ok(
                text,
                json!({ "document": doc, "issuer_types": types, "trusted_app": app }),
            ))
        }
        RegistryCmd::TrustIssuer {
            name,
            domain,
            types,
            org,
        } => {
            let entry = TrustPolicyEntry {
                issuer: resolve_subject(&ws, name)?,
                country_domain: domain.clone(),
                permitted_types: types.iter().cloned().collect(),
            };
            let chunk = ws.chunk_size();
            let result = ws
                .deployment
                .session(org)
                .map_err(CliError::from)
                .and_then(|s| Ok(s.with_chunk_size(chunk).register_trusted_issuer(&entry)?));
            let receipt = commit(&ws, result)?;
            Ok(Output::ok(
                format!(
                    "{} trusted for {} in {} (height {})",
                    entry.issuer,
                    types.join(","),
                    entry.country_domain,
                    receipt.block_height
                ),
                json!({ "entry": entry, "receipt": receipt }),
            ))
        }
        RegistryCmd::TrustApp { name, org } => {
            let did = resolve_subject(&ws, name)?;
            let result = ws
                .deployment
                .session(org)
                .map_err(CliError::from)
                .and_then(|mut s| Ok(s.register_trusted_app(&did)?));
            let receipt = commit(&ws, result)?;
            Ok(Output::ok(
                format!(
                    "{did} registered as trusted app (height {})",
                    receipt.block_height
                ),
                json!({ "did": did, "receipt": receipt }),
            ))
        }
    }
}

fn schema(mut ws: Workspace, cmd: &SchemaCmd) -> Result<Output, CliError> {
    match cmd {
        SchemaCmd::Register { file, org } => {
            let schema: CredentialSchema = read_json(file)?;
            let result = ws
                .deployment
                .session(org)
                .map_err(CliError::from)
                .and_then(|mut s| Ok(s.register_schema(&schema)?));
            let receipt = commit(&ws, result)?;
            Ok(Output::ok(
                format!(
                    "schema {} ({}) registered (height {})",
                    schema.schema_id, schema.credential_type, receipt.block_height
                ),
                json!({ "schema": schema, "receipt": receipt }),
            ))
        }
        SchemaCmd::List => {
            let dump = registry_dump(ws.deployment.channel.world_state());
            let text = dump
                .schemas
                .values()
                .map(|s| format!("{}\t{}", s.schema_id, s.credential_type))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::ok(text, to_json(&dump.schemas)))
        }
    }
}

fn issue(mut ws: Workspace, a: &IssueArgs) -> Result<Output, CliError> {
    let issuer = ws.load_wallet(&a.issuer)?;
    let subject = resolve_subject(&ws, &a.subject)?;
    let claims: Claims = read_json(&a.claims)?;
    let mut rng = command_rng(&ws, "issue");
    let chunk = ws.chunk_size();
    let result = ws
        .deployment
        .session(&a.org)
        .map_err(CliError::from)
        .and_then(|s| {
            Ok(s.with_chunk_size(chunk)
                .issue_and_distribute(&issuer, &subject, &a.schema, claims, &mut rng)?)
        });
    let issuance = commit(&ws, result)?;
    let r = &issuance.record;
    Ok(Output::ok(
        format!(
            "issued {} to {subject}\ncid: {}\nuri: {}\nheight: {}",
            r.credential_id, r.cid, r.uri, r.receipt.block_height
        ),
        to_json(r),
    ))
}

fn retrieve(mut ws: Workspace, a: &RetrieveArgs) -> Result<Output, CliError> {
    let mut wallet = ws.load_wallet(&a.subject)?;
    let cid =
        ContentId::parse(&a.cid).map_err(|e| CliError::Usage(format!("cid {}: {e}", a.cid)))?;
    let chunk = ws.chunk_size();
    let result = ws
        .deployment
        .session(&a.org)
        .map_err(CliError::from)
        .and_then(|s| {
            Ok(s.with_chunk_size(chunk)
                .retrieve_credential(&mut wallet, &cid)?)
        });
    let vc = commit(&ws, result)?;
    ws.save_wallet(&a.subject, &wallet)?;
    let path = ws.root().join(CREDENTIALS).join(format!("{cid}.json"));
    workspace::write(&path, &vc.to_canonical())?;
    Ok(Output::ok(
        format!(
            "{} from {} verified and saved to {}",
            vc.credential_id,
            vc.issuer,
            path.display()
        ),
        json!({ "path": path, "credential": vc }),
    ))
}

fn present(mut ws: Workspace, a: &PresentArgs) -> Result<Output, CliError> {
    let holder = ws.load_wallet(&a.holder)?;
    let verifier = ws.load_wallet(&a.verifier)?;
    let vcs = a
        .credentials
        .iter()
        .map(|p| read_json::<VerifiableCredential>(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut challenge = [0u8; 32];
    command_rng(&ws, "challenge").fill_bytes(&mut challenge);
    let result = ws
        .deployment
        .verifier_parts(&a.org)
        .map_err(CliError::from)
        .and_then(|(channel, identity)| {
            Ok(open_verification(
                channel, &identity, &verifier, &challenge,
            )?)
        });
    commit(&ws, result)?;
    let presentation = credential::present(holder.signing(), holder.did(), vcs, &challenge)
        .map_err(|e| CliError::failed(e.code(), e.to_string()))?;
    let mut challenges = ws.challenges()?;
    challenges.insert(a.verifier.clone(), base58_encode(&challenge));
    ws.save_challenges(&challenges)?;
    let out = a.out.clone().unwrap_or_else(|| {
        ws.root()
            .join("presentations")
            .join(format!("{}-{}.json", a.holder, a.verifier))
    });
    write_canonical(
        &out,
        &PresentationFile {
            verifier: verifier.did().clone(),
            presentation,
        },
    )?;
    Ok(Output::ok(
        format!(
            "presentation for {} written to {}",
            a.verifier,
            out.display()
        ),
        json!({ "path": out }),
    ))
}

fn verify(mut ws: Workspace, a: &VerifyArgs) -> Result<Output, CliError> {
    let verifier = ws.load_wallet(&a.verifier)?;
    let file: PresentationFile = read_json(&a.presentation)?;
    if file.verifier != *verifier.did() {
        return Err(CliError::Usage(format!(
            "presentation is addressed to {}, not {}",
            file.verifier,
            verifier.did()
        )));
    }
    let mut challenges = ws.challenges()?;
    let challenge = challenges.remove(&a.verifier).ok_or_else(|| {
        CliError::Usage(format!("{} has no open verification session", a.verifier))
    })?;
    let challenge =
        base58_decode(&challenge).map_err(|e| CliError::Usage(format!("stored challenge: {e}")))?;
    let result = ws
        .deployment
        .verifier_parts(&a.org)
        .map_err(CliError::from)
        .map(|(channel, identity)| {
            let mut view = LedgerRegistry::new(channel, &identity);
            credential::verify_presentation(&file.presentation, &challenge, &mut view)
        });
    let report = commit(&ws, result)?;
    ws.save_challenges(&challenges)?;
    let mut text = format!(
        "overall: {}\nchallenge: {}\nholder: {}\nreason: {}",
        if report.overall { "valid" } else { "invalid" },
        report.challenge_valid,
        report.holder_valid,
        report.reason
    );
    for c in &report.per_credential {
        text.push_str(&format!(
            "\n{}: issuer trusted {}, signature {}, schema {} ({})",
            c.credential_id, c.issuer_trusted, c.signature_valid, c.schema_valid, c.reason
        ));
    }
    Ok(Output {
        text,
        json: to_json(&report),
        status: if report.overall { EXIT_OK } else { EXIT_FAILED },
    })
}

fn scenario_list() -> Output {
    let names: Vec<&str> = BUNDLED
        .iter()
        .map(|(n, _)| n.trim_end_matches(".json"))
        .collect();
    Output::ok(names.join("\n"), json!(names))
}

fn load_script(file: Option<&Path>, name: Option<&str>) -> Result<ScenarioScript, CliError> {
    match (file, name) {
        (_, Some(name)) => bundled(name).ok_or_else(|| {
            CliError::Usage(format!(
                "no bundled scenario {name} (see `glass scenario list`)"
            ))
        }),
        (Some(path), None) => {
            let bytes = read(path)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Usage(format!("{}: not UTF-8", path.display())))?;
            ScenarioScript::from_json(&text).map_err(|e| match e {
                ScenarioError::Parse {
                    line,
                    column,
                    message,
                } => CliError::Json {
                    path: path.display().to_string(),
                    line,
                    column,
                    message,
                },
                other => CliError::Usage(format!("{}: {other}", path.display())),
            })
        }
        (None, None) => Err(CliError::Usage(
            "give a script file or --bundled NAME".into(),
        )),
    }
}

fn scenario_run(mut ws: Workspace, script: &ScenarioScript) -> Result<Output, CliError> {
    let mut wallets = BTreeMap::new();
    for actor in &script.actors {
        valid_name(&actor.name)?;
        if ws.has_wallet(&actor.name) {
            wallets.insert(actor.name.clone(), ws.load_wallet(&actor.name)?);
        }
    }
    let result = run_scenario(&mut ws.deployment, script, &mut wallets).map_err(|e| match e {
        ScenarioError::Deployment(d) => d.into(),
        other => CliError::Usage(other.to_string()),
    });
    let report = commit(&ws, result)?;
    for (name, wallet) in &wallets {
        ws.save_wallet(name, wallet)?;
    }
    Ok(Output {
        text: report.to_string(),
        json: to_json(&report),
        status: if report.passed { EXIT_OK } else { EXIT_FAILED },
    })
}

fn audit(ws: &Workspace) -> Result<Output, CliError> {
    let rows = ws.deployment.channel.audit_rows();
    Ok(Output::ok(
        format_audit_table(&rows).trim_end(),
        to_json(&rows),
    ))
}

fn verify_chain(cli: &Cli) -> Result<Output, CliError> {
    let root = cli.workspace.as_path();
    if !root.join(MANIFEST).exists() {
        return Err(CliError::Usage(format!(
            "{} is not an initialized workspace (run `glass init`)",
            root.display()
        )));
    }
    let broken = |height: Option<u64>, reason: String| {
        let at = height.map_or("state".to_string(), |h| format!("height {h}"));
        Output {
            text: format!("chain broken at {at}: {reason}"),
            json: json!({ "ok": false, "height": height, "reason": reason }),
            status: EXIT_FAILED,
        }
    };
    let channel = match Workspace::load_channel(root)? {
        Ok(c) => c,
        Err(glass_core::ledger::LedgerError::Corrupt { height, reason }) => {
            return Ok(broken(Some(height), reason))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(match channel.verify_report() {
        Ok(()) => Output::ok(
            format!(
                "chain ok: height {} ({} blocks)",
                channel.height(),
                channel.blocks().len()
            ),
            json!({ "ok": true, "height": channel.height() }),
        ),
        Err(fault) => broken(fault.height, fault.reason),
    })
}
