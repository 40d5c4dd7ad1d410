use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use glass_core::chaincode::AUTHORITY_ORG;
use glass_core::deployment::PORTAL_ORG;
use glass_core::did::PersonKind;

/// Encrypted credential sharing over a private swarm, anchored on a
/// permissioned ledger.
#[derive(Debug, Parser)]
#[command(name = "glass", version)]
pub struct Cli {
    /// Workspace directory.
    #[arg(long, global = true, default_value = "glass-workspace")]
    pub workspace: PathBuf,
    /// Deployment seed; on an existing workspace it must match the stored one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a workspace with a fresh channel and swarm.
    Init {
        /// JSON file with optional `seed` and `chunk_size`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Manage local identities and register their DIDs.
    #[command(subcommand)]
    Identity(IdentityCmd),
    /// Read or update the trust registry.
    #[command(subcommand)]
    Registry(RegistryCmd),
    /// Credential schemas.
    #[command(subcommand)]
    Schema(SchemaCmd),
    /// Issue a credential, distribute it on the swarm and record the triplet.
    Issue(IssueArgs),
    /// Fetch, decrypt and check a credential addressed to a local identity.
    Retrieve(RetrieveArgs),
    /// Build a challenge-bound presentation for a verifier.
    Present(PresentArgs),
    /// Check a presentation against the registry.
    Verify(VerifyArgs),
    /// Run a scenario script against the workspace.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Print the ledger audit trail.
    Audit,
    /// Check ledger integrity; exits 1 at the first bad block.
    VerifyChain,
}

#[derive(Debug, Subcommand)]
pub enum IdentityCmd {
    /// Derive a wallet from the workspace seed and register its DID.
    Create {
        name: String,
        #[arg(long, default_value = "natural_person")]
        kind: PersonKind,
        /// Org whose gateway submits the registration.
        #[arg(long, default_value = PORTAL_ORG)]
        org: String,
    },
    /// Show the public side of an identity.
    Show { name: String },
    /// List local identities.
    List,
}

#[derive(Debug, Subcommand)]
pub enum RegistryCmd {
    /// Print the registry as canonical JSON.
    Dump,
    /// Resolve a DID, or the DID of a local identity.
    Resolve { did: String },
    /// Accredit an identity as issuer of the given credential types.
    TrustIssuer {
        name: String,
        #[arg(long)]
        domain: String,
        /// Comma-separated credential types.
        #[arg(long, value_delimiter = ',', required = true)]
        types: Vec<String>,
        #[arg(long, default_value = AUTHORITY_ORG)]
        org: String,
    },
    /// Register an identity as a trusted verifier application.
    TrustApp {
        name: String,
        #[arg(long, default_value = AUTHORITY_ORG)]
        org: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum SchemaCmd {
    /// Register a schema from a JSON file.
    Register {
        file: PathBuf,
        #[arg(long, default_value = AUTHORITY_ORG)]
        org: String,
    },
    /// List registered schemas.
    List,
}

#[derive(Debug, Args)]
pub struct IssueArgs {
    #[arg(long)]
    pub issuer: String,
    /// Local identity name or DID of the subject.
    #[arg(long)]
    pub subject: String,
    #[arg(long)]
    pub schema: String,
    /// JSON object of claim values.
    #[arg(long)]
    pub claims: PathBuf,
    #[arg(long, default_value = PORTAL_ORG)]
    pub org: String,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub subject: String,
    #[arg(long)]
    pub cid: String,
    #[arg(long, default_value = PORTAL_ORG)]
    pub org: String,
}

#[derive(Debug, Args)]
pub struct PresentArgs {
    #[arg(long)]
    pub holder: String,
    #[arg(long)]
    pub verifier: String,
    /// Credential files, as written by `retrieve`.
    #[arg(long = "credential", required = true)]
    pub credentials: Vec<PathBuf>,
    /// Where to write the presentation; defaults to the workspace.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = PORTAL_ORG)]
    pub org: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub verifier: String,
    #[arg(long)]
    pub presentation: PathBuf,
    #[arg(long, default_value = PORTAL_ORG)]
    pub org: String,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Run a script file, or a bundled script with `--bundled`.
    Run {
        #[arg(required_unless_present = "bundled", conflicts_with = "bundled")]
        file: Option<PathBuf>,
        #[arg(long)]
        bundled: Option<String>,
    },
    /// Names of the bundled scripts.
    List,
}
