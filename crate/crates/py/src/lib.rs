//! Python bindings: network configurations, calibration, single scheduling
//! rounds, the order-statistic kernels, sweeps and the verification suites.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use netbeam::calibration::{calibrate_beta, calibrate_closed_form, BetaTable};
use netbeam::experiments::{
    run_sweep, run_verify, ConfigFile, Fault, Overrides, RunOptions, SweepSpec, VerifyOptions,
};
use netbeam::model::{db_to_linear, sample_channels, AttenuationProfile, NetworkConfig};
use netbeam::orderstats;
use netbeam::scheduler::run_round as core_run_round;
use netbeam::sinr::compute_sinr_table;
use netbeam::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Dimension(_) => PyValueError::new_err(e.to_string()),
        e if e.is_config() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A network of `M` super-cells with `Q` base stations of `N_t` antennas each
/// and `K` users of `N_r` antennas per super-cell.
#[pyclass(name = "Network", module = "pynetbeam", frozen)]
struct PyNetwork {
    inner: NetworkConfig,
}

#[pymethods]
impl PyNetwork {
    /// `gamma_db_range=(lo, hi)` draws log-uniform attenuations instead of the
    /// homogeneous profile.
    #[new]
    #[pyo3(signature = (m, q, n_t, k, rho_db, n_r=1, seed=0, gamma_db_range=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        m: usize,
        q: usize,
        n_t: usize,
        k: usize,
        rho_db: f64,
        n_r: usize,
        seed: u64,
        gamma_db_range: Option<(f64, f64)>,
    ) -> PyResult<Self> {
        let att = match gamma_db_range {
            Some((lo, hi)) => AttenuationProfile::log_uniform_db(m, q, k, lo, hi, seed),
            None => AttenuationProfile::homogeneous(m, q, k, 1.0),
        }
        .map_err(to_py)?;
        let inner =
            NetworkConfig::new(m, q, n_t, n_r, k, db_to_linear(rho_db), att, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Every sweep point of a TOML configuration, in output order.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Vec<Self>> {
        let cfg = ConfigFile::parse(text).map_err(to_py)?;
        let spec = SweepSpec::from_config(&cfg, Overrides::default()).map_err(to_py)?;
        spec.points
            .iter()
            .map(|p| p.network().map(|inner| Self { inner }).map_err(to_py))
            .collect()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }
    #[getter]
    fn q(&self) -> usize {
        self.inner.q
    }
    #[getter]
    fn n_t(&self) -> usize {
        self.inner.n_t
    }
    #[getter]
    fn n_r(&self) -> usize {
        self.inner.n_r
    }
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
    /// Linear SNR.
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn total_beams(&self) -> usize {
        self.inner.total_beams()
    }

    /// Bits in one feedback message.
    fn feedback_bits(&self) -> u32 {
        self.inner.feedback_bits()
    }

    fn quantile_target(&self) -> f64 {
        self.inner.quantile_target()
    }

    /// Attenuation seen by user `(n, k)` from base station `(m, r)`.
    fn gamma(&self, n: usize, k: usize, m: usize, r: usize) -> f64 {
        self.inner.attenuation.get(n, k, m, r)
    }

    /// SINR table of trial `trial`, flattened in `[n][k][i][r][l]` order.
    fn sinr(&self, py: Python<'_>, trial: u64) -> Vec<f64> {
        py.detach(|| compute_sinr_table(&self.inner, &sample_channels(&self.inner, trial)).values().to_vec())
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Network(m={}, q={}, n_t={}, k={}, rho={:.4}, n_r={}, seed={})",
            c.m, c.q, c.n_t, c.k, c.rho, c.n_r, c.seed
        )
    }
}

/// Per-user, per-base-station normalization factors.
#[pyclass(name = "BetaTable", module = "pynetbeam", frozen)]
struct PyBetaTable {
    inner: BetaTable,
}

#[pymethods]
impl PyBetaTable {
    /// Empirical quantiles from `samples` draws per (n, k, r).
    #[staticmethod]
    fn calibrate(py: Python<'_>, net: &PyNetwork, samples: usize) -> PyResult<Self> {
        let inner = py.detach(|| calibrate_beta(&net.inner, samples)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Exact quantile of the homogeneous SINR distribution.
    #[staticmethod]
    fn closed_form(net: &PyNetwork) -> PyResult<Self> {
        Ok(Self {
            inner: calibrate_closed_form(&net.inner).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn uniform(net: &PyNetwork, value: f64) -> PyResult<Self> {
        Ok(Self {
            inner: BetaTable::uniform(&net.inner, value).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn read_csv(path: &str, net: &PyNetwork) -> PyResult<Self> {
        Ok(Self {
            inner: BetaTable::read_csv(path, &net.inner).map_err(to_py)?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path).map_err(to_py)
    }

    fn get(&self, n: usize, k: usize, r: usize) -> f64 {
        self.inner.get(n, k, r)
    }

    /// Flattened in `[n][k][r]` order.
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn min(&self) -> f64 {
        self.inner.min()
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    /// True when some factor is below one.
    fn outside_regime(&self) -> bool {
        self.inner.outside_regime()
    }
}

/// One scheduling round. Returns a dict with `sum_rate`, `messages`,
/// `feedback_bits` and `assignments` (one dict per beam).
#[pyfunction]
fn run_round<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    beta: &PyBetaTable,
    trial: u64,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    use pyo3::types::{PyDict, PyList};
    let out = py
        .detach(|| core_run_round(&net.inner, &beta.inner, trial, false))
        .map_err(to_py)?
        .outcome;
    let d = PyDict::new(py);
    d.set_item("sum_rate", netbeam::metrics::sum_rate(&out))?;
    d.set_item("messages", out.messages.clone())?;
    d.set_item("feedback_bits", out.feedback_bits.clone())?;
    let beams = PyList::empty(py);
    for a in &out.assignments {
        let b = PyDict::new(py);
        b.set_item("n", a.n)?;
        b.set_item("r", a.r)?;
        b.set_item("l", a.l)?;
        b.set_item("served", a.served)?;
        b.set_item("candidates", a.candidates)?;
        b.set_item("sinr", a.sinr)?;
        b.set_item("rate", a.rate)?;
        beams.append(b)?;
    }
    d.set_item("assignments", beams)?;
    Ok(d)
}

#[pyfunction]
fn order_stat_cdf(u: f64, k: u64, j: u64) -> PyResult<f64> {
    orderstats::order_stat_cdf(u, k, j).map_err(to_py)
}

#[pyfunction]
fn f_monotone(x: f64, j: u64, k: u64) -> PyResult<f64> {
    orderstats::f_monotone(x, j, k).map_err(to_py)
}

/// Rank weights `q[0..=K]` for Binomial(K, 1/K) candidate-set sizes.
#[pyfunction]
fn binomial_candidate_weights(k: usize) -> PyResult<Vec<f64>> {
    Ok(orderstats::binomial_candidate_weights(k)
        .map_err(to_py)?
        .as_slice()
        .to_vec())
}

#[pyfunction]
fn mixture_cdf(weights: Vec<f64>, u: f64) -> PyResult<f64> {
    let w = orderstats::MixtureWeights::new(weights).map_err(to_py)?;
    orderstats::mixture_cdf(&w, u).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, weights, grid_points=20_001))]
fn scaling_integral(a: f64, weights: Vec<f64>, grid_points: usize) -> PyResult<f64> {
    let w = orderstats::MixtureWeights::new(weights).map_err(to_py)?;
    orderstats::scaling_integral_quadrature(a, &w, grid_points).map_err(to_py)
}

/// `(lower, upper)` on the mean of the largest of `k` unit exponentials.
#[pyfunction]
fn exponential_max_mean_bounds(k: usize) -> PyResult<(f64, f64)> {
    orderstats::exponential_max_mean_bounds(k).map_err(to_py)
}

/// Runs a sweep from TOML text; returns the per-point results as JSON.
#[pyfunction]
#[pyo3(signature = (config, trials=None, seed=None))]
fn simulate(py: Python<'_>, config: &str, trials: Option<usize>, seed: Option<u64>) -> PyResult<String> {
    let cfg = ConfigFile::parse(config).map_err(to_py)?;
    let spec = SweepSpec::from_config(&cfg, Overrides { trials, seed }).map_err(to_py)?;
    let results = py
        .detach(|| {
            let mut opts = RunOptions {
                beta_cache: None,
                outcome_log: None,
                analysis_samples: netbeam::experiments::run::ANALYSIS_SAMPLES,
            };
            run_sweep(&spec, &mut opts)
        })
        .map_err(to_py)?;
    serde_json::to_string(&results).map_err(json_err)
}

/// Runs the verification suites; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (seed=1, fault=None))]
fn verify(py: Python<'_>, seed: u64, fault: Option<&str>) -> PyResult<String> {
    let fault = fault
        .map(|f| f.parse::<Fault>().map_err(PyValueError::new_err))
        .transpose()?;
    let report = py
        .detach(|| run_verify(&VerifyOptions { seed, fault }))
        .map_err(to_py)?;
    serde_json::to_string(&report).map_err(json_err)
}

#[pymodule]
fn pynetbeam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyBetaTable>()?;
    m.add_function(wrap_pyfunction!(run_round, m)?)?;
    m.add_function(wrap_pyfunction!(order_stat_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(f_monotone, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_candidate_weights, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_integral, m)?)?;
    m.add_function(wrap_pyfunction!(exponential_max_mean_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
