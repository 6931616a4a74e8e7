//! Python bindings: run scenarios, and reach the codec and key schedule
//! directly for cross-checking.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use httpa2::crypto::{self, CipherSuite, RandomNonce};
use httpa2::harness::{self, RunOptions, Scenario, TransportKind};
use httpa2::wire::{self, Message, StartLine};

fn options(transport: Option<&str>, extra_hops: usize) -> PyResult<RunOptions> {
    let transport = match transport {
        None => None,
        Some("inprocess") => Some(TransportKind::Inprocess),
        Some("tcp") => Some(TransportKind::Tcp),
        Some(other) => return Err(PyValueError::new_err(format!("unknown transport {other:?}"))),
    };
    Ok(RunOptions { extra_hops, transport })
}

fn suite(id: &str) -> PyResult<CipherSuite> {
    CipherSuite::from_id(id).ok_or_else(|| PyValueError::new_err(format!("unknown cipher suite {id:?}")))
}

fn nonce(bytes: &[u8]) -> PyResult<RandomNonce> {
    RandomNonce::from_slice(bytes).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs a scenario given as JSON text; returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (scenario, transport=None, extra_hops=0))]
fn run_scenario(scenario: &str, transport: Option<&str>, extra_hops: usize) -> PyResult<String> {
    let s = Scenario::from_json(scenario).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = harness::run_scenario_with(&s, &options(transport, extra_hops)?)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(report.to_json())
}

/// Runs every scenario in a directory; returns `(passed, failed)`.
#[pyfunction]
#[pyo3(signature = (dir, transport=None, extra_hops=0))]
fn run_all(dir: PathBuf, transport: Option<&str>, extra_hops: usize) -> PyResult<(usize, usize)> {
    let summary =
        harness::run_all(&dir, &options(transport, extra_hops)?).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((summary.passed, summary.failed))
}

#[pyfunction]
fn hkdf<'py>(py: Python<'py>, salt: &[u8], ikm: &[u8], info: &[u8], length: usize) -> Bound<'py, PyBytes> {
    let prk = crypto::hkdf_extract(salt, ikm);
    PyBytes::new(py, &crypto::hkdf_expand(&prk, info, length))
}

/// Derives the session keys; returns a dict of byte strings.
#[pyfunction]
fn key_schedule<'py>(
    py: Python<'py>,
    suite_id: &str,
    shared: &[u8],
    client_random: &[u8],
    service_random: &[u8],
    transcript_hash: &[u8],
) -> PyResult<Bound<'py, PyDict>> {
    let k = crypto::derive_key_schedule(
        suite(suite_id)?,
        shared,
        &nonce(client_random)?,
        &nonce(service_random)?,
        transcript_hash,
    );
    let out = PyDict::new(py);
    for (name, value) in [
        ("master_secret", &k.master_secret),
        ("client_write_key", &k.client_write_key),
        ("service_write_key", &k.service_write_key),
        ("client_iv", &k.client_iv),
        ("service_iv", &k.service_iv),
        ("ticket_key", &k.ticket_key),
        ("binder_key", &k.binder_key),
    ] {
        out.set_item(name, PyBytes::new(py, value))?;
    }
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (suite_id, key, iv, seq, plaintext, aad=b"".as_slice()))]
fn seal<'py>(
    py: Python<'py>,
    suite_id: &str,
    key: &[u8],
    iv: &[u8],
    seq: u64,
    plaintext: &[u8],
    aad: &[u8],
) -> PyResult<Bound<'py, PyBytes>> {
    let out = crypto::seal(suite(suite_id)?, key, iv, seq, plaintext, aad)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyBytes::new(py, &out))
}

#[pyfunction]
#[pyo3(signature = (suite_id, key, iv, seq, ciphertext, aad=b"".as_slice()))]
fn open<'py>(
    py: Python<'py>,
    suite_id: &str,
    key: &[u8],
    iv: &[u8],
    seq: u64,
    ciphertext: &[u8],
    aad: &[u8],
) -> PyResult<Bound<'py, PyBytes>> {
    let out = crypto::open(suite(suite_id)?, key, iv, seq, ciphertext, aad)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyBytes::new(py, &out))
}

fn fields<'py>(py: Python<'py>, fields: &[wire::Field]) -> PyResult<Bound<'py, PyList>> {
    let pairs: Vec<(String, Bound<'py, PyBytes>)> =
        fields.iter().map(|f| (f.name.clone(), PyBytes::new(py, &f.value))).collect();
    PyList::new(py, pairs)
}

/// Parses one HTTP/1.1 message into a dict.
#[pyfunction]
fn parse_message<'py>(py: Python<'py>, raw: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let msg: Message = wire::parse_message(raw).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    match &msg.start {
        StartLine::Request { method, target, .. } => {
            out.set_item("method", method)?;
            out.set_item("target", target)?;
        }
        StartLine::Response { status, .. } => out.set_item("status", *status)?,
    }
    out.set_item("headers", fields(py, &msg.headers)?)?;
    out.set_item("trailers", fields(py, &msg.trailers)?)?;
    out.set_item("body", PyBytes::new(py, &msg.body))?;
    out.set_item("transcript", PyBytes::new(py, &wire::transcript_of_fields(&msg.headers)))?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "httpa2")]
fn httpa2_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    m.add_function(wrap_pyfunction!(hkdf, m)?)?;
    m.add_function(wrap_pyfunction!(key_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(seal, m)?)?;
    m.add_function(wrap_pyfunction!(open, m)?)?;
    m.add_function(wrap_pyfunction!(parse_message, m)?)?;
    Ok(())
}
