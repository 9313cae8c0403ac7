//! Python bindings: key pools, training, evaluation and byte-stream
//! encryption on top of `anc_core`.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use anc_core::bench::{bench_throughput, DEFAULT_SIZES};
use anc_core::evaluation::{
    bit_recovery_accuracy, eve_accuracy, reference_grid, table1_crosstab, uniqueness_report, QuantizationConfig,
};
use anc_core::stream::{CipherStream, StreamCipher};
use anc_core::training::{train_until_converged, TrainingConfig};
use anc_core::{AncError, BitVector};

create_exception!(random_anc, AncException, PyException);

fn err(e: AncError) -> PyErr {
    AncException::new_err(e.to_string())
}

/// Balanced keys whose peak sidelobe is within a tolerance.
#[pyclass(name = "KeyPool", module = "random_anc", frozen)]
struct PyKeyPool {
    inner: anc_core::KeyPool,
}

#[pymethods]
impl PyKeyPool {
    #[new]
    #[pyo3(signature = (bits = 8, psl_tolerance = 5))]
    fn new(bits: usize, psl_tolerance: u32) -> PyResult<Self> {
        Ok(Self {
            inner: anc_core::generate_pool(bits, psl_tolerance).map_err(err)?,
        })
    }

    /// Parses one hex key per line.
    #[staticmethod]
    #[pyo3(signature = (text, bits = 8, psl_tolerance = 5))]
    fn from_text(text: &str, bits: usize, psl_tolerance: u32) -> PyResult<Self> {
        Ok(Self {
            inner: anc_core::KeyPool::parse(text, bits, psl_tolerance).map_err(err)?,
        })
    }

    fn keys(&self) -> Vec<String> {
        self.inner.keys().iter().map(|k| k.to_hex()).collect()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn bits(&self) -> usize {
        self.inner.n_bits()
    }

    #[getter]
    fn psl_tolerance(&self) -> u32 {
        self.inner.tolerance()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "KeyPool(bits={}, psl_tolerance={}, keys={})",
            self.inner.n_bits(),
            self.inner.tolerance(),
            self.inner.len()
        )
    }
}

impl PyKeyPool {
    fn key(&self, hex: &str) -> PyResult<anc_core::Key> {
        let bits = BitVector::from_hex(hex, self.inner.n_bits()).map_err(err)?;
        self.inner
            .find(&bits)
            .cloned()
            .ok_or_else(|| AncException::new_err(format!("key 0x{} is not in the pool", bits.to_hex())))
    }
}

/// A trained Alice/Bob pair, optionally with Eve.
#[pyclass(name = "Model", module = "random_anc")]
struct PyModel {
    inner: anc_core::AncModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: anc_core::AncModel::load(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        let inner = anc_core::AncModel::from_bytes(data).map_err(|e| err(e.into()))?;
        Ok(Self { inner })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    /// Copy without the adversary network.
    fn deployment(&self) -> Self {
        Self {
            inner: self.inner.deployment(),
        }
    }

    #[getter]
    fn n_bits(&self) -> usize {
        self.inner.n_bits
    }

    #[getter]
    fn n_proj(&self) -> usize {
        self.inner.n_proj
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn training_epochs(&self) -> u32 {
        self.inner.training_epochs
    }

    #[getter]
    fn has_eve(&self) -> bool {
        self.inner.eve.is_some()
    }

    fn summary(&self) -> String {
        self.inner.summary()
    }

    fn encrypt<'py>(&self, py: Python<'py>, pool: &PyKeyPool, key: &str, data: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        let k = pool.key(key)?;
        let c = StreamCipher::new(&self.inner, &k).and_then(|s| s.encrypt(data)).map_err(err)?;
        Ok(PyBytes::new(py, c.packed()))
    }

    fn decrypt<'py>(&self, py: Python<'py>, pool: &PyKeyPool, key: &str, data: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        let k = pool.key(key)?;
        let stream = CipherStream::from_packed(data.to_vec(), data.len() * 8, &k).map_err(err)?;
        let plain = StreamCipher::new(&self.inner, &k).and_then(|s| s.decrypt(&stream)).map_err(err)?;
        Ok(PyBytes::new(py, &plain))
    }

    /// Bob's bit recovery over every message and pool key, rounded ciphertext.
    fn bit_recovery_accuracy(&self, pool: &PyKeyPool) -> PyResult<f64> {
        bit_recovery_accuracy(&self.inner, &pool.inner).map_err(err)
    }

    fn eve_accuracy(&self, pool: &PyKeyPool) -> PyResult<f64> {
        eve_accuracy(&self.inner, &pool.inner).map_err(err)
    }

    /// `(rows, mean)` where each row is `(message_hex, s_x, u_x)`.
    fn uniqueness(&self, pool: &PyKeyPool) -> PyResult<(Vec<(String, f64, f64)>, f64)> {
        let rep = uniqueness_report(&self.inner, &pool.inner).map_err(err)?;
        let rows = rep
            .rows
            .iter()
            .map(|r| (r.message.to_hex(), r.similarity_pct, r.uniqueness_pct))
            .collect();
        Ok((rows, rep.mean_uniqueness_pct))
    }

    /// Ciphertext hex for messages FF, 00, AA, 55 (rows) under keys 0F, 17,
    /// 1B, 1D (columns).
    fn crosstab(&self, pool: &PyKeyPool) -> PyResult<Vec<Vec<String>>> {
        let (messages, keys) = reference_grid(&pool.inner).map_err(err)?;
        let tab = table1_crosstab(&self.inner, &messages, &keys).map_err(err)?;
        Ok(tab
            .cells
            .iter()
            .map(|row| row.iter().map(BitVector::to_hex).collect())
            .collect())
    }

    /// One dict per size with `message_bytes`, `t_alice`, `t_bob` (seconds),
    /// `throughput` (bytes/s), `throughput_ci` (95% interval), `repetitions`
    /// and `dispersion`.
    #[pyo3(signature = (pool, key, sizes = None, repetitions = 11, seed = 0))]
    fn bench<'py>(
        &self,
        py: Python<'py>,
        pool: &PyKeyPool,
        key: &str,
        sizes: Option<Vec<usize>>,
        repetitions: usize,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let k = pool.key(key)?;
        let sizes = sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec());
        let rows = bench_throughput(&self.inner, &k, &sizes, repetitions, seed).map_err(err)?;
        rows.iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("message_bytes", r.message_bytes)?;
                d.set_item("t_alice", r.t_alice.as_secs_f64())?;
                d.set_item("t_bob", r.t_bob.as_secs_f64())?;
                d.set_item("throughput", r.throughput)?;
                d.set_item("repetitions", r.repetitions)?;
                d.set_item("dispersion", r.dispersion)?;
                d.set_item("throughput_ci", r.throughput_ci)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n_bits={}, n_proj={}, converged={}, eve={})",
            self.inner.n_bits,
            self.inner.n_proj,
            self.inner.converged,
            self.inner.eve.is_some()
        )
    }
}

/// Trains with fresh initializations until one converges. Returns the model
/// (or `None`) and one dict per realization tried.
#[pyfunction]
#[pyo3(signature = (pool, proj = 8, seed = 0, max_epochs = 256, realizations = 50, learning_rate = 0.001, init_scale = None))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    pool: &PyKeyPool,
    proj: usize,
    seed: u64,
    max_epochs: u32,
    realizations: usize,
    learning_rate: f64,
    init_scale: Option<f64>,
) -> PyResult<(Option<PyModel>, Vec<Bound<'py, PyDict>>)> {
    let defaults = TrainingConfig::default();
    let cfg = TrainingConfig {
        n_bits: pool.inner.n_bits(),
        n_proj: proj,
        seed,
        max_epochs,
        learning_rate,
        key_psl_tolerance: pool.inner.tolerance(),
        init_scale: init_scale.unwrap_or(defaults.init_scale),
        ..defaults
    };
    let keys = pool.inner.clone();
    let (model, reports) = py
        .detach(move || train_until_converged(&cfg, &keys, realizations))
        .map_err(err)?;
    let reports = reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("outcome", r.outcome.as_str())?;
            d.set_item("epochs", r.epochs_used)?;
            d.set_item("wall_time", r.wall_time.as_secs_f64())?;
            d.set_item("bob_accuracy", r.final_bob_accuracy)?;
            d.set_item("eve_accuracy", r.final_eve_accuracy)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((model.map(|inner| PyModel { inner }), reports))
}

/// Peak circular sidelobe of a hex key.
#[pyfunction]
#[pyo3(signature = (key, bits = 8))]
fn psl(key: &str, bits: usize) -> PyResult<u32> {
    Ok(anc_core::keygen::psl(&BitVector::from_hex(key, bits).map_err(err)?))
}

/// Values in [-1, 1] to a flat list of big-endian `n_q`-bit codes.
#[pyfunction]
fn quantize(values: Vec<f64>, n_q: u32) -> PyResult<Vec<bool>> {
    let cfg = QuantizationConfig::new(n_q).map_err(err)?;
    anc_core::evaluation::quantize(&values, cfg).map_err(err)
}

#[pyfunction]
fn dequantize(bits: Vec<bool>, n_q: u32) -> PyResult<Vec<f64>> {
    let cfg = QuantizationConfig::new(n_q).map_err(err)?;
    anc_core::evaluation::dequantize(&bits, cfg).map_err(err)
}

#[pymodule]
fn random_anc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AncException", m.py().get_type::<AncException>())?;
    m.add_class::<PyKeyPool>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(psl, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(dequantize, m)?)?;
    Ok(())
}
