//! Python bindings: deployments, wallets and the content primitives.

use std::collections::BTreeMap;
use std::fmt::Display;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use glass_core::canonical;
use glass_core::chaincode::{registry_dump, TrustPolicyEntry, AUTHORITY_ORG};
use glass_core::cid::{cid_of_block, ContentId};
use glass_core::credential::{Claims, CredentialSchema, VerifiableCredential};
use glass_core::crypto::{sha256, sha256_concat};
use glass_core::dag::{build_dag as dag_build, reassemble as dag_reassemble, DEFAULT_CHUNK_SIZE};
use glass_core::deployment::{Deployment, PORTAL_ORG};
use glass_core::did::{Did, PersonKind};
use glass_core::portal::{present_and_verify, KeystoreFile, PortalError, Wallet};
use glass_core::scenario::{actor_wallet, bundled, run_scenario, ScenarioScript, BUNDLED};

create_exception!(
    glass,
    GlassError,
    PyException,
    "Raised with (code, message)."
);

fn err(code: &str, e: impl Display) -> PyErr {
    GlassError::new_err((code.to_string(), e.to_string()))
}

fn portal(e: PortalError) -> PyErr {
    err(e.code(), &e)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err("serialize", e))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| err("malformed-json", format!("{what}: {e}")))
}

fn parse_did(text: &str) -> PyResult<Did> {
    Did::parse(text).map_err(|e| err("invalid-did", e))
}

fn parse_cid(text: &str) -> PyResult<ContentId> {
    ContentId::parse(text).map_err(|e| err("invalid-cid", e))
}

/// Signing and agreement keys plus received credentials.
#[pyclass(name = "Wallet", module = "glass")]
struct PyWallet {
    inner: Wallet,
}

#[pymethods]
impl PyWallet {
    /// The wallet a scenario with `seed` gives the actor `name`.
    #[staticmethod]
    fn derive(seed: u64, name: &str) -> Self {
        PyWallet {
            inner: actor_wallet(seed, name),
        }
    }

    #[staticmethod]
    fn from_keystore(json: &str) -> PyResult<Self> {
        let file: KeystoreFile = parse_json("keystore", json)?;
        Ok(PyWallet {
            inner: Wallet::from_keystore(&file).map_err(portal)?,
        })
    }

    fn to_keystore(&self) -> PyResult<String> {
        canonical::to_canonical_string(&self.inner.to_keystore()).map_err(|e| err("canonical", e))
    }

    #[getter]
    fn did(&self) -> String {
        self.inner.did().to_string()
    }

    fn holdings<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.holdings())
    }

    fn __repr__(&self) -> String {
        format!("Wallet({})", self.inner.did())
    }
}

/// Three orgs on one channel with their swarm nodes, built from a seed.
#[pyclass(name = "Deployment", module = "glass", unsendable)]
struct PyDeployment {
    inner: Deployment,
    rng: ChaCha20Rng,
}

#[pymethods]
impl PyDeployment {
    #[new]
    fn new(seed: u64) -> Self {
        let d = sha256_concat(&[b"glass/py/v1", &seed.to_le_bytes()]);
        PyDeployment {
            inner: Deployment::new(seed),
            rng: ChaCha20Rng::from_seed(*d.as_bytes()),
        }
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    #[getter]
    fn height(&self) -> u64 {
        self.inner.channel.height()
    }

    fn verify_chain(&self) -> bool {
        self.inner.channel.verify_chain()
    }

    fn ledger_jsonl(&self) -> String {
        self.inner.channel.export_jsonl()
    }

    fn trace_jsonl(&self) -> String {
        self.inner.network.trace_jsonl()
    }

    fn audit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.channel.audit_rows())
    }

    fn registry_dump<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &registry_dump(self.inner.channel.world_state()))
    }

    /// Registers the wallet's DID through `org`'s gateway and returns it.
    #[pyo3(signature = (wallet, org = PORTAL_ORG, kind = "natural_person"))]
    fn onboard(&mut self, wallet: &PyWallet, org: &str, kind: &str) -> PyResult<String> {
        let kind: PersonKind = kind.parse().map_err(|e: String| err("usage", e))?;
        let mut s = self.inner.session(org).map_err(|e| err("usage", e))?;
        Ok(s.onboard(&wallet.inner, kind).map_err(portal)?.to_string())
    }

    #[pyo3(signature = (schema_json, org = AUTHORITY_ORG))]
    fn register_schema(&mut self, schema_json: &str, org: &str) -> PyResult<u64> {
        let schema: CredentialSchema = parse_json("schema", schema_json)?;
        let mut s = self.inner.session(org).map_err(|e| err("usage", e))?;
        Ok(s.register_schema(&schema).map_err(portal)?.block_height)
    }

    #[pyo3(signature = (did, country_domain, types, org = AUTHORITY_ORG))]
    fn trust_issuer(
        &mut self,
        did: &str,
        country_domain: &str,
        types: Vec<String>,
        org: &str,
    ) -> PyResult<u64> {
        let entry = TrustPolicyEntry {
            issuer: parse_did(did)?,
            country_domain: country_domain.to_string(),
            permitted_types: types.into_iter().collect(),
        };
        let mut s = self.inner.session(org).map_err(|e| err("usage", e))?;
        Ok(s.register_trusted_issuer(&entry)
            .map_err(portal)?
            .block_height)
    }

    #[pyo3(signature = (did, org = AUTHORITY_ORG))]
    fn trust_app(&mut self, did: &str, org: &str) -> PyResult<u64> {
        let did = parse_did(did)?;
        let mut s = self.inner.session(org).map_err(|e| err("usage", e))?;
        Ok(s.register_trusted_app(&did).map_err(portal)?.block_height)
    }

    /// Issues and distributes a credential; returns the distribution record.
    #[pyo3(signature = (issuer, subject_did, schema_id, claims_json, org = PORTAL_ORG))]
    fn issue<'py>(
        &mut self,
        py: Python<'py>,
        issuer: &PyWallet,
        subject_did: &str,
        schema_id: &str,
        claims_json: &str,
        org: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let subject = parse_did(subject_did)?;
        let claims: Claims = parse_json("claims", claims_json)?;
        let mut s = self.inner.session(org).map_err(|e| err("usage", e))?;
        let issuance = s
            .issue_and_distribute(&issuer.inner, &subject, schema_id, claims, &mut self.rng)
            .map_err(portal)?;
        to_py(py, &issuance.record)
    }

    /// Fetches and decrypts a credential; returns its canonical JSON.
    #[pyo3(signature = (wallet, cid, org = PORTAL_ORG))]
    fn retrieve(
        &mut self,
        mut wallet: PyRefMut<'_, PyWallet>,
        cid: &str,
        org: &str,
    ) -> PyResult<String> {
        let cid = parse_cid(cid)?;
        let mut s = self.inner.session(org).map_err(|e| err("usage", e))?;
        let vc = s
            .retrieve_credential(&mut wallet.inner, &cid)
            .map_err(portal)?;
        Ok(String::from_utf8(vc.to_canonical()).expect("canonical JSON is UTF-8"))
    }

    /// Opens a verification session, presents and verifies; returns the report.
    #[pyo3(signature = (holder, verifier, credentials, org = PORTAL_ORG))]
    fn present_and_verify<'py>(
        &mut self,
        py: Python<'py>,
        holder: &PyWallet,
        verifier: &PyWallet,
        credentials: Vec<String>,
        org: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let vcs = credentials
            .iter()
            .map(|c| parse_json::<VerifiableCredential>("credential", c))
            .collect::<PyResult<Vec<_>>>()?;
        let (channel, identity) = self
            .inner
            .verifier_parts(org)
            .map_err(|e| err("usage", e))?;
        let outcome = present_and_verify(
            channel,
            &identity,
            &holder.inner,
            vcs,
            &verifier.inner,
            &mut self.rng,
        )
        .map_err(portal)?;
        to_py(py, &outcome.report)
    }

    /// Runs a bundled scenario by name, or a script given as JSON text.
    fn run_scenario<'py>(&mut self, py: Python<'py>, script: &str) -> PyResult<Bound<'py, PyAny>> {
        let script = match bundled(script) {
            Some(s) => s,
            None => ScenarioScript::from_json(script).map_err(|e| err("scenario", e))?,
        };
        let report = run_scenario(&mut self.inner, &script, &mut BTreeMap::new())
            .map_err(|e| err("scenario", e))?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Deployment(seed={}, height={})",
            self.inner.seed(),
            self.inner.channel.height()
        )
    }
}

#[pyfunction]
fn sha256_digest<'py>(py: Python<'py>, data: &[u8]) -> Bound<'py, PyBytes> {
    PyBytes::new(py, sha256(data).as_bytes())
}

/// Content identifier of a single block.
#[pyfunction]
fn cid_of(data: &[u8]) -> String {
    cid_of_block(data).to_text()
}

/// Re-renders JSON text in canonical form.
#[pyfunction]
fn canonical_json(text: &str) -> PyResult<String> {
    let value = canonical::parse(text.as_bytes()).map_err(|e| err("canonical", e))?;
    let bytes = canonical::canonical_serialize(&value).map_err(|e| err("canonical", e))?;
    Ok(String::from_utf8(bytes).expect("canonical JSON is UTF-8"))
}

/// Chunks `data` into a DAG; returns the root cid and a cid-to-bytes dict.
#[pyfunction]
#[pyo3(signature = (data, chunk_size = DEFAULT_CHUNK_SIZE))]
fn build_dag<'py>(
    py: Python<'py>,
    data: &[u8],
    chunk_size: usize,
) -> PyResult<(String, Bound<'py, PyDict>)> {
    let (root, blocks) = dag_build(data, chunk_size).map_err(|e| err("dag", e))?;
    let out = PyDict::new(py);
    for (cid, bytes) in blocks.iter() {
        out.set_item(cid.to_text(), PyBytes::new(py, bytes))?;
    }
    Ok((root.to_text(), out))
}

/// Rebuilds content from its root and a cid-to-bytes dict, checking every hash.
#[pyfunction]
fn reassemble<'py>(
    py: Python<'py>,
    root: &str,
    blocks: BTreeMap<String, Vec<u8>>,
) -> PyResult<Bound<'py, PyBytes>> {
    let root = parse_cid(root)?;
    let data = dag_reassemble(&root, |cid| blocks.get(&cid.to_text()).cloned())
        .map_err(|e| err("dag", e))?;
    Ok(PyBytes::new(py, &data))
}

#[pyfunction]
fn bundled_scenarios() -> Vec<&'static str> {
    BUNDLED
        .iter()
        .map(|(n, _)| n.trim_end_matches(".json"))
        .collect()
}

#[pymodule]
fn glass(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GlassError", m.py().get_type::<GlassError>())?;
    m.add_class::<PyWallet>()?;
    m.add_class::<PyDeployment>()?;
    m.add_function(wrap_pyfunction!(sha256_digest, m)?)?;
    m.add_function(wrap_pyfunction!(cid_of, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_json, m)?)?;
    m.add_function(wrap_pyfunction!(build_dag, m)?)?;
    m.add_function(wrap_pyfunction!(reassemble, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_scenarios, m)?)?;
    Ok(())
}
