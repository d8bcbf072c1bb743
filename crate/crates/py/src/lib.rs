//! Python bindings: certification math, the staged pipeline, Toeplitz
//! hashing and the statistical battery.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hetqrng::config::PipelineConfig;
use hetqrng::extractor::{parse_master_seed, seed_expand_stream, toeplitz_multiply, Backend, BitBlock, BitOrigin};
use hetqrng::format::KvDoc;
use hetqrng::pipeline::Pipeline as CorePipeline;
use hetqrng::randomness::{run_battery as core_battery, BatteryReport, TestParams, TestResult as CoreResult};
use hetqrng::{dsp, entropy, extractor, Error};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for hetqrng::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn kv_map(kv: &KvDoc) -> BTreeMap<String, String> {
    kv.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Conditional min-entropy lower bound `log2(π/(δq·δp))`, bits per sample.
#[pyfunction]
fn quantum_bound_discrete(delta_q: f64, delta_p: f64) -> PyResult<f64> {
    entropy::quantum_bound_discrete(delta_q, delta_p).py()
}

#[pyfunction]
fn classical_min_entropy_gaussian(var_q: f64, var_p: f64, delta_q: f64, delta_p: f64) -> PyResult<f64> {
    entropy::classical_min_entropy_gaussian(var_q, var_p, delta_q, delta_p).py()
}

/// Best single-bin probability reachable with coherent states.
#[pyfunction]
fn pguess_oracle_heterodyne(delta_q: f64, delta_p: f64) -> PyResult<f64> {
    entropy::pguess_oracle_heterodyne(delta_q, delta_p).py()
}

/// Extracted bits for a block of `n_samples` at `hmin` bits per sample.
#[pyfunction]
fn output_length(n_samples: usize, hmin: f64, epsilon: f64) -> PyResult<usize> {
    extractor::output_length(n_samples, hmin, epsilon).py()
}

#[pyfunction]
fn autocorrelation(py: Python<'_>, stream: Vec<f64>, max_lag: usize) -> PyResult<Vec<f64>> {
    py.detach(|| dsp::autocorrelation(&stream, max_lag)).py()
}

/// Returns `(frequencies, psd)`.
#[pyfunction]
#[pyo3(signature = (stream, sample_rate, segment_len, overlap = 0.5))]
fn welch_psd(py: Python<'_>, stream: Vec<f64>, sample_rate: f64, segment_len: usize, overlap: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = py.detach(|| dsp::welch_psd(&stream, sample_rate, segment_len, overlap)).py()?;
    Ok((p.freqs, p.psd))
}

fn to_bits(data: &[u8], n_bits: Option<usize>) -> PyResult<BitBlock> {
    let n = n_bits.unwrap_or(data.len() * 8);
    if n > data.len() * 8 {
        return Err(PyValueError::new_err(format!("{n} bits requested from {} bytes", data.len())));
    }
    BitBlock::from_bytes(&data[..n.div_ceil(8)], n, BitOrigin::Raw).py()
}

/// Toeplitz hash of the first `n_bits` of `data` down to `n_out` bits. The
/// seed is expanded from a 64-hex-digit master seed on ChaCha20 `stream`.
#[pyfunction]
#[pyo3(signature = (data, n_out, master_seed, stream = 0, n_bits = None, backend = "clmul"))]
fn toeplitz_hash<'py>(
    py: Python<'py>,
    data: &[u8],
    n_out: usize,
    master_seed: &str,
    stream: u64,
    n_bits: Option<usize>,
    backend: &str,
) -> PyResult<Bound<'py, PyBytes>> {
    let x = to_bits(data, n_bits)?;
    if n_out == 0 || x.is_empty() {
        return Err(PyValueError::new_err("input and output lengths must be positive"));
    }
    let master = parse_master_seed(master_seed).py()?;
    let backend = Backend::parse(backend).py()?;
    let seed = seed_expand_stream(&master, stream, x.len() + n_out - 1).py()?;
    let out = toeplitz_multiply(&seed, &x, n_out, backend).py()?;
    Ok(PyBytes::new(py, &out.to_bytes()))
}

#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct TestResult {
    name: String,
    p_value: f64,
    passed: bool,
    statistic: f64,
    n_bits: usize,
}

impl From<&CoreResult> for TestResult {
    fn from(r: &CoreResult) -> Self {
        TestResult {
            name: r.name.as_str().to_string(),
            p_value: r.p_value,
            passed: r.passed,
            statistic: r.statistic,
            n_bits: r.n_bits,
        }
    }
}

#[pymethods]
impl TestResult {
    fn __repr__(&self) -> String {
        format!("TestResult({}, p={:.6}, passed={})", self.name, self.p_value, self.passed)
    }
}

fn results(rep: &BatteryReport) -> Vec<TestResult> {
    rep.results.iter().map(TestResult::from).collect()
}

/// Runs the eight-test battery on the first `n_bits` of `data`.
#[pyfunction]
#[pyo3(signature = (data, n_bits = None, alpha = 0.01))]
fn run_battery(py: Python<'_>, data: &[u8], n_bits: Option<usize>, alpha: f64) -> PyResult<Vec<TestResult>> {
    let bits = to_bits(data, n_bits)?;
    let rep = py.detach(|| core_battery(&bits, alpha, &TestParams::default())).py()?;
    Ok(results(&rep))
}

#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct EntropyCertificate {
    delta_q: f64,
    delta_p: f64,
    h_classical: Option<f64>,
    h_quantum_bound: f64,
    epsilon: f64,
    samples_per_second: f64,
    secure_rate: f64,
}

impl From<entropy::EntropyCertificate> for EntropyCertificate {
    fn from(c: entropy::EntropyCertificate) -> Self {
        EntropyCertificate {
            delta_q: c.delta_q,
            delta_p: c.delta_p,
            h_classical: c.h_classical,
            h_quantum_bound: c.h_quantum_bound,
            epsilon: c.epsilon,
            samples_per_second: c.samples_per_second,
            secure_rate: c.secure_rate,
        }
    }
}

impl EntropyCertificate {
    fn core(&self) -> entropy::EntropyCertificate {
        entropy::EntropyCertificate {
            delta_q: self.delta_q,
            delta_p: self.delta_p,
            h_classical: self.h_classical,
            h_quantum_bound: self.h_quantum_bound,
            epsilon: self.epsilon,
            samples_per_second: self.samples_per_second,
            secure_rate: self.secure_rate,
        }
    }
}

#[pymethods]
impl EntropyCertificate {
    #[new]
    #[pyo3(signature = (delta_q, delta_p, sample_rate, epsilon = 2f64.powi(-100), var_q = None, var_p = None))]
    fn new(delta_q: f64, delta_p: f64, sample_rate: f64, epsilon: f64, var_q: Option<f64>, var_p: Option<f64>) -> PyResult<Self> {
        let v = match (var_q, var_p) {
            (Some(q), Some(p)) => Some((q, p)),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("give both variances or neither")),
        };
        Ok(entropy::build_certificate(delta_q, delta_p, v, sample_rate, epsilon).py()?.into())
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(entropy::EntropyCertificate::from_kv(&KvDoc::parse(text).py()?).py()?.into())
    }

    fn to_text(&self) -> String {
        self.core().to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "EntropyCertificate(h_quantum_bound={:.3}, secure_rate={:.4e})",
            self.h_quantum_bound, self.secure_rate
        )
    }
}

/// Run configuration; keys as in the command-line config files.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Config {
    inner: PipelineConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => PipelineConfig::parse(t).py()?,
            None => PipelineConfig::default(),
        };
        Ok(Config { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Config {
            inner: PipelineConfig::load(&path).py()?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).py()
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .to_kv()
            .get(key)
            .map(str::to_string)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key `{key}`")))
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().py()
    }

    fn to_dict(&self) -> BTreeMap<String, String> {
        kv_map(&self.inner.to_kv())
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

/// Staged pipeline over files. Each stage releases the GIL.
#[pyclass(frozen)]
struct Pipeline {
    inner: CorePipeline,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&Config>) -> PyResult<Self> {
        let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
        Ok(Pipeline {
            inner: CorePipeline::new(cfg).py()?,
        })
    }

    fn simulate(&self, py: Python<'_>, path: PathBuf) -> PyResult<BTreeMap<String, String>> {
        let s = py.detach(|| self.inner.simulate_to_path(&path)).py()?;
        Ok(kv_map(&s.to_kv()))
    }

    fn filter(&self, py: Python<'_>, input: PathBuf, output: PathBuf) -> PyResult<BTreeMap<String, String>> {
        let s = py.detach(|| self.inner.filter_path(&input, &output)).py()?;
        Ok(kv_map(&s.to_kv()))
    }

    fn certify(&self, py: Python<'_>, input: PathBuf) -> PyResult<EntropyCertificate> {
        Ok(py.detach(|| self.inner.certify_path(&input)).py()?.into())
    }

    /// Returns the number of extracted bits.
    fn extract(&self, py: Python<'_>, input: PathBuf, certificate: &EntropyCertificate, output: PathBuf) -> PyResult<u64> {
        let cert = certificate.core();
        let s = py.detach(|| self.inner.extract_path(&input, &cert, &output)).py()?;
        Ok(s.output_bits)
    }

    fn test(&self, py: Python<'_>, input: PathBuf) -> PyResult<Vec<TestResult>> {
        let rep = py.detach(|| self.inner.test_path(&input)).py()?;
        Ok(results(&rep))
    }

    /// Every stage into `out_dir`; returns the run report.
    fn run(&self, py: Python<'_>, out_dir: PathBuf) -> PyResult<BTreeMap<String, String>> {
        let rep = py.detach(|| self.inner.run(&out_dir)).py()?;
        Ok(kv_map(&rep.to_kv()))
    }
}

#[pymodule]
#[pyo3(name = "hetqrng")]
fn hetqrng_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(quantum_bound_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(classical_min_entropy_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(pguess_oracle_heterodyne, m)?)?;
    m.add_function(wrap_pyfunction!(output_length, m)?)?;
    m.add_function(wrap_pyfunction!(autocorrelation, m)?)?;
    m.add_function(wrap_pyfunction!(welch_psd, m)?)?;
    m.add_function(wrap_pyfunction!(toeplitz_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run_battery, m)?)?;
    m.add_class::<TestResult>()?;
    m.add_class::<EntropyCertificate>()?;
    m.add_class::<Config>()?;
    m.add_class::<Pipeline>()?;
    Ok(())
}
