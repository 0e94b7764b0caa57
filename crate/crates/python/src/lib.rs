//! Python bindings: `import hermite_fpf`.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fpf::density::{GaussianMixture, KdeModel, ParticleEnsemble};
use fpf::experiments::{self, Norm};
use fpf::filter::{self, FilterConfig, GainMethod, InitialDistribution};
use fpf::gain::{self, DiffusionMap, GalerkinGain, HermiteGalerkin, ObservationFn};
use fpf::hermite::{self, BasisSpec};
use fpf::quadrature::QuadratureRule;
use fpf::sde::{self, SdeModel, TruthRun};
use fpf::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Domain(_) | Error::Config(_) => PyValueError::new_err(err.to_string()),
        Error::Io(_) => PyOSError::new_err(err.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Observation function `h`: identity, a constant or a polynomial.
#[pyclass(name = "Observation", module = "hermite_fpf", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyObservation(ObservationFn);

#[pymethods]
impl PyObservation {
    #[staticmethod]
    fn identity() -> Self {
        Self(ObservationFn::identity())
    }

    #[staticmethod]
    fn constant(c: f64) -> Self {
        Self(ObservationFn::constant(c))
    }

    /// `h(x) = Σ_k coeffs[k] x^k`
    #[staticmethod]
    fn polynomial(coeffs: Vec<f64>) -> Self {
        Self(ObservationFn::polynomial(coeffs))
    }

    fn __call__(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    fn __repr__(&self) -> String {
        format!("Observation({})", self.0.description())
    }
}

fn observation_or_identity(h: Option<PyRef<'_, PyObservation>>) -> ObservationFn {
    h.map(|h| h.0.clone()).unwrap_or_else(ObservationFn::identity)
}

fn ensemble(positions: Vec<f64>) -> PyResult<ParticleEnsemble> {
    ParticleEnsemble::new(positions, 0.0).map_err(to_py)
}

#[pyclass(name = "GaussianMixture", module = "hermite_fpf", frozen)]
struct PyMixture(GaussianMixture);

#[pymethods]
impl PyMixture {
    #[new]
    fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> PyResult<Self> {
        GaussianMixture::new(weights, means, variances).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn gaussian(mean: f64, variance: f64) -> PyResult<Self> {
        GaussianMixture::gaussian(mean, variance).map(Self).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (mu = 1.0, variance = 0.2))]
    fn bimodal(mu: f64, variance: f64) -> PyResult<Self> {
        GaussianMixture::symmetric_bimodal(mu, variance).map(Self).map_err(to_py)
    }

    fn __call__(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        Ok(self.0.sample(n, seed).map_err(to_py)?.positions().to_vec())
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    /// Constant `c` of the AMISE-optimal bandwidth `c · N^(-1/5)`.
    fn amise_bandwidth_constant(&self) -> f64 {
        self.0.amise_bandwidth_constant()
    }

    /// Exact gain of this density at each grid point (grid ascending).
    #[pyo3(signature = (grid, h = None))]
    fn exact_gain(&self, grid: Vec<f64>, h: Option<PyRef<'_, PyObservation>>) -> PyResult<Vec<f64>> {
        let h = observation_or_identity(h);
        let quad = QuadratureRule::default();
        let hhat = quad.integrate(|x| h.eval(x) * self.0.eval(x));
        gain::exact_gain_on_grid(|x| self.0.eval(x), &h, hhat, &grid, &quad).map_err(to_py)
    }
}

/// Gaussian kernel density estimate of a particle ensemble.
#[pyclass(name = "Kde", module = "hermite_fpf", frozen)]
struct PyKde(KdeModel);

#[pymethods]
impl PyKde {
    #[new]
    fn new(positions: Vec<f64>, bandwidth: f64) -> PyResult<Self> {
        KdeModel::from_positions(&positions, bandwidth).map(Self).map_err(to_py)
    }

    fn __call__(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.0.eval_derivative(x)
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.0.bandwidth()
    }

    fn support(&self) -> (f64, f64) {
        self.0.support()
    }
}

/// Hermite-Galerkin gain `K = f / p` built from one ensemble.
#[pyclass(name = "GalerkinGain", module = "hermite_fpf", frozen)]
struct PyGalerkinGain {
    gain: GalerkinGain,
    h: ObservationFn,
}

#[pymethods]
impl PyGalerkinGain {
    fn __call__(&self, x: f64) -> f64 {
        self.gain.eval(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.gain.eval_derivative(x)
    }

    fn flux(&self, x: f64) -> f64 {
        self.gain.flux(x)
    }

    /// Control term `u(x)` for the observation the gain was solved for.
    fn control(&self, x: f64) -> f64 {
        self.gain.control(&self.h, x)
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.gain.series.coeffs().to_vec()
    }

    #[getter]
    fn hhat(&self) -> f64 {
        self.gain.hhat
    }

    #[getter]
    fn row0_residual(&self) -> f64 {
        self.gain.row0_residual
    }

    #[getter]
    fn p_floor(&self) -> f64 {
        self.gain.p_floor()
    }
}

#[pyfunction]
#[pyo3(signature = (positions, order, bandwidth, h = None))]
fn galerkin_gain(
    py: Python<'_>,
    positions: Vec<f64>,
    order: usize,
    bandwidth: f64,
    h: Option<PyRef<'_, PyObservation>>,
) -> PyResult<PyGalerkinGain> {
    let h = observation_or_identity(h);
    let ens = ensemble(positions)?;
    let solver = HermiteGalerkin::new(order, bandwidth);
    let gain = py.detach(|| solver.solve(&ens, &h)).map_err(to_py)?;
    Ok(PyGalerkinGain { gain, h })
}

/// Orthonormal Hermite functions `H̃_0(x) … H̃_M(x)`.
#[pyfunction]
fn hermite_functions(order: usize, x: f64) -> PyResult<Vec<f64>> {
    hermite::eval_all(BasisSpec::new(order), x).map_err(to_py)
}

#[pyfunction]
fn hermite_derivatives(order: usize, x: f64) -> PyResult<Vec<f64>> {
    hermite::eval_derivative_all(BasisSpec::new(order), x).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (positions, h = None))]
fn constant_gain(positions: Vec<f64>, h: Option<PyRef<'_, PyObservation>>) -> PyResult<f64> {
    Ok(gain::constant_gain(&ensemble(positions)?, &observation_or_identity(h)))
}

/// Diffusion-map gain at each particle; returns `(gains, converged, iterations)`.
#[pyfunction]
#[pyo3(signature = (positions, h = None, eps = 0.1, max_iters = 10_000, centered = true))]
fn diffusion_map_gain(
    py: Python<'_>,
    positions: Vec<f64>,
    h: Option<PyRef<'_, PyObservation>>,
    eps: f64,
    max_iters: usize,
    centered: bool,
) -> PyResult<(Vec<f64>, bool, usize)> {
    let h = observation_or_identity(h);
    let dm = DiffusionMap {
        centered,
        ..DiffusionMap::new(eps, max_iters)
    };
    let out = py.detach(|| dm.solve(&positions, &h)).map_err(to_py)?;
    Ok((out.gains, out.converged, out.iterations))
}

/// A simulated double-well truth path together with its model.
#[pyclass(name = "Truth", module = "hermite_fpf", frozen)]
struct PyTruth {
    run: TruthRun,
    model: SdeModel,
}

#[pymethods]
impl PyTruth {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.run.times.clone()
    }

    #[getter]
    fn states(&self) -> Vec<f64> {
        self.run.states.clone()
    }

    #[getter]
    fn obs_increments(&self) -> Vec<f64> {
        self.run.obs_increments.clone()
    }

    fn __len__(&self) -> usize {
        self.run.len()
    }
}

/// Euler-Maruyama path of `dX = X(1 − X²) dt + √Q dB`, `dZ = X dt + √R dW`.
#[pyfunction]
#[pyo3(signature = (t_final, seed, x0 = 0.1, dt = 0.01, state_noise_cov = 0.4, obs_noise_cov = 0.4))]
fn simulate_bistable(
    t_final: f64,
    seed: u64,
    x0: f64,
    dt: f64,
    state_noise_cov: f64,
    obs_noise_cov: f64,
) -> PyResult<PyTruth> {
    let model = SdeModel::bistable(state_noise_cov, obs_noise_cov).map_err(to_py)?;
    let run = sde::simulate_truth(&model, x0, dt, t_final, seed).map_err(to_py)?;
    Ok(PyTruth { run, model })
}

#[pyclass(name = "FilterResult", module = "hermite_fpf", frozen, get_all)]
struct PyFilterResult {
    times: Vec<f64>,
    estimates: Vec<f64>,
    rmse: f64,
    wall_time_seconds: f64,
    unconverged_steps: usize,
}

/// Runs the feedback particle filter on a truth path.
#[pyfunction]
#[pyo3(signature = (
    truth, method = "hermite_galerkin", seed = 0, particles = 10, order = 6, bandwidth = 0.5,
    init_mean = 0.0, init_variance = 1.0, normalize_by_obs_noise = false,
))]
#[allow(clippy::too_many_arguments)]
fn fpf_run(
    py: Python<'_>,
    truth: PyRef<'_, PyTruth>,
    method: &str,
    seed: u64,
    particles: usize,
    order: usize,
    bandwidth: f64,
    init_mean: f64,
    init_variance: f64,
    normalize_by_obs_noise: bool,
) -> PyResult<PyFilterResult> {
    let method: GainMethod = method.parse().map_err(to_py)?;
    let t_final = truth.run.times.last().copied().unwrap_or(0.0);
    let cfg = FilterConfig {
        model: truth.model.clone(),
        particles,
        order,
        bandwidth,
        dt: truth.run.dt(),
        t_final,
        init: InitialDistribution::Gaussian {
            mean: init_mean,
            variance: init_variance,
        },
        normalize_by_obs_noise,
        ..FilterConfig::bistable_benchmark(t_final, method, seed).map_err(to_py)?
    };
    let run = &truth.run;
    let out = py.detach(|| filter::fpf_run(&cfg, run)).map_err(to_py)?;
    let rmse = experiments::rmse(&run.states, &out.estimates).map_err(to_py)?;
    Ok(PyFilterResult {
        times: out.times,
        estimates: out.estimates,
        rmse,
        wall_time_seconds: out.wall_time_seconds,
        unconverged_steps: out.counters.unconverged_steps,
    })
}

#[pyfunction]
fn rmse(truth: Vec<f64>, estimate: Vec<f64>) -> PyResult<f64> {
    experiments::rmse(&truth, &estimate).map_err(to_py)
}

#[pyfunction]
fn armse(rmses: Vec<f64>) -> PyResult<f64> {
    experiments::armse(&rmses).map_err(to_py)
}

#[pyfunction]
fn loglog_slope(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    experiments::loglog_slope(&xs, &ys).map_err(to_py)
}

/// Grid error `‖a − b‖` on an ascending grid, `norm` is `"l1"` or `"l2"`.
#[pyfunction]
#[pyo3(signature = (grid, a, b, norm = "l2"))]
fn grid_error(grid: Vec<f64>, a: Vec<f64>, b: Vec<f64>, norm: &str) -> PyResult<f64> {
    let norm = match norm {
        "l1" => Norm::L1,
        "l2" => Norm::L2,
        other => return Err(PyValueError::new_err(format!("unknown norm `{other}`"))),
    };
    if a.len() != b.len() {
        return Err(PyValueError::new_err("value vectors differ in length"));
    }
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    experiments::metrics::grid_error_values(&grid, &diffs, norm).map_err(to_py)
}

/// Runs an experiment from a TOML config and returns its JSON summary.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: PathBuf, out_dir: PathBuf) -> PyResult<String> {
    let spec = experiments::load_config(&config).map_err(to_py)?;
    let report = py.detach(|| experiments::run_experiment(&spec, &out_dir)).map_err(to_py)?;
    serde_json::to_string_pretty(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule(name = "hermite_fpf")]
fn hermite_fpf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObservation>()?;
    m.add_class::<PyMixture>()?;
    m.add_class::<PyKde>()?;
    m.add_class::<PyGalerkinGain>()?;
    m.add_class::<PyTruth>()?;
    m.add_class::<PyFilterResult>()?;
    m.add_function(wrap_pyfunction!(hermite_functions, m)?)?;
    m.add_function(wrap_pyfunction!(hermite_derivatives, m)?)?;
    m.add_function(wrap_pyfunction!(galerkin_gain, m)?)?;
    m.add_function(wrap_pyfunction!(constant_gain, m)?)?;
    m.add_function(wrap_pyfunction!(diffusion_map_gain, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_bistable, m)?)?;
    m.add_function(wrap_pyfunction!(fpf_run, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(armse, m)?)?;
    m.add_function(wrap_pyfunction!(loglog_slope, m)?)?;
    m.add_function(wrap_pyfunction!(grid_error, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
