//! Python bindings for the sublinear-expectation laboratory.
//!
//! Test functions are plain Python callables taking a float (or a list of
//! floats for vector observations) and returning a float.

use std::sync::Mutex;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sublinergo::dp::{g_normal_step, ControlSet, SequentialModel, StepLaw};
use sublinergo::ergodic::{
    birkhoff_series, two_bernoulli_divergence as tb_divergence, unique_ergodicity_test, Observable,
    RotationSystem, SymbolicPoint,
};
use sublinergo::gbm::{read_cache, simulate_gbm, write_cache, Policy};
use sublinergo::gsde::{check_dissipativity, markov_t, DpConfig, GsdeModel, MarkovMethod};
use sublinergo::lln::{alpha_mixing_lhs, lln_experiment, MixingProbe};
use sublinergo::scenario::{gamma_n, gamma_star, GammaSet, TestFunction};

fn err(e: sublinergo::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Calls `f` on `x`, remembering the first Python exception.
struct Callback<'a> {
    f: &'a Py<PyAny>,
    failure: Mutex<Option<PyErr>>,
}

impl<'a> Callback<'a> {
    fn new(f: &'a Py<PyAny>) -> Self {
        Callback {
            f,
            failure: Mutex::new(None),
        }
    }

    fn call(&self, x: &[f64]) -> f64 {
        Python::with_gil(|py| {
            let arg: PyObject = if x.len() == 1 {
                x[0].into_py(py)
            } else {
                x.to_vec().into_py(py)
            };
            match self.f.call1(py, (arg,)).and_then(|v| v.extract::<f64>(py)) {
                Ok(v) => v,
                Err(e) => {
                    self.failure.lock().unwrap().get_or_insert(e);
                    f64::NAN
                }
            }
        })
    }

    fn finish<T>(self, r: sublinergo::Result<T>) -> PyResult<T> {
        if let Some(e) = self.failure.into_inner().unwrap() {
            return Err(e);
        }
        r.map_err(err)
    }
}

fn interval(g: &GammaSet) -> PyResult<(f64, f64)> {
    match g {
        GammaSet::Interval { lo, hi } => Ok((*lo, *hi)),
        _ => Err(PyValueError::new_err("Γ is not an interval for vector observations")),
    }
}

/// Sequential model `X_k = map(ξ_k, …, ξ_{k+lag})` over i.i.d. controlled noises.
#[pyclass(name = "SequentialModel", module = "sublinergo_py")]
#[derive(Clone)]
struct PySequentialModel {
    inner: SequentialModel,
}

#[pymethods]
impl PySequentialModel {
    /// Model from the TOML `[model]` table format.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner: SequentialModel = toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.with_horizon(inner.horizon).map_err(err)?;
        Ok(PySequentialModel { inner })
    }

    #[staticmethod]
    fn remark_smaller(horizon: usize) -> PyResult<Self> {
        Ok(PySequentialModel {
            inner: SequentialModel::remark_smaller(horizon).map_err(err)?,
        })
    }

    /// `X_k = ξ_k + ξ_{k+1}` with zero-mean steps `±1` or `±2`.
    #[staticmethod]
    fn one_dependent(horizon: usize) -> PyResult<Self> {
        Ok(PySequentialModel {
            inner: SequentialModel::one_dependent(horizon, SequentialModel::zero_mean_step()).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (lo, hi, horizon=1))]
    fn iid_maximal(lo: f64, hi: f64, horizon: usize) -> PyResult<Self> {
        let step = StepLaw::maximal(lo, hi).map_err(err)?;
        Ok(PySequentialModel {
            inner: SequentialModel::iid(horizon, step).map_err(err)?,
        })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn lag(&self) -> usize {
        self.inner.lag()
    }

    fn with_horizon(&self, horizon: usize) -> PyResult<Self> {
        Ok(PySequentialModel {
            inner: self.inner.with_horizon(horizon).map_err(err)?,
        })
    }

    /// `Ê[φ(X_{i_1}, …, X_{i_m})]` for 1-based indices.
    fn eval_cylinder(&self, obs: Vec<usize>, phi: Py<PyAny>) -> PyResult<f64> {
        let cb = Callback::new(&phi);
        let r = self.inner.eval_cylinder(&obs, &|x| cb.call(x));
        cb.finish(r)
    }

    /// `Ê[φ(S_n / n)]`.
    fn lln_expectation(&self, n: usize, phi: Py<PyAny>) -> PyResult<f64> {
        let cb = Callback::new(&phi);
        let r = self.inner.with_horizon(self.inner.horizon.max(n + self.inner.lag())).and_then(|m| m.lln_expectation(n, &|x| cb.call(x)));
        cb.finish(r).map(|e| e.value)
    }

    /// `Γ_n` as `(lo, hi)` for scalar models.
    fn gamma_n(&self, n: usize) -> PyResult<(f64, f64)> {
        let m = self.inner.with_horizon(self.inner.horizon.max(n + self.inner.lag())).map_err(err)?;
        interval(&gamma_n(&m, n).map_err(err)?)
    }

    fn gamma_star(&self, n_max: usize) -> PyResult<(f64, f64)> {
        let m = self.inner.with_horizon(self.inner.horizon.max(n_max + self.inner.lag())).map_err(err)?;
        interval(&gamma_star(&m, n_max).map_err(err)?.set)
    }

    fn __repr__(&self) -> String {
        format!("SequentialModel(horizon={}, step={:?}, map={:?})", self.inner.horizon, self.inner.step, self.inner.map)
    }
}

/// Rows `(n, value, target, abs_error)` of the LLN table against `Γ_*`.
#[pyfunction]
#[pyo3(signature = (model, phi, n_grid, star_horizon=64))]
fn lln_table(
    py: Python<'_>,
    model: &PySequentialModel,
    phi: Py<PyAny>,
    n_grid: Vec<usize>,
    star_horizon: usize,
) -> PyResult<Vec<(usize, f64, f64, f64)>> {
    let n_star = star_horizon.max(n_grid.last().copied().unwrap_or(1));
    let m = model.inner.with_horizon(n_star + model.inner.lag()).map_err(err)?;
    let cb = Callback::new(&phi);
    let r = py.allow_threads(|| {
        let star = gamma_star(&m, n_star)?;
        lln_experiment(&m, &|x| cb.call(x), &n_grid, &star.set)
    });
    let table = cb.finish(r)?;
    Ok(table.rows.iter().map(|r| (r.n, r.value, r.target, r.abs_error)).collect())
}

/// Mixing gap for blocks `lambda1 ≤ lambda2` and `φ(x, y)` of the block means.
#[pyfunction]
fn alpha_mixing(py: Python<'_>, model: &PySequentialModel, lambda1: Vec<usize>, lambda2: Vec<usize>, phi: Py<PyAny>) -> PyResult<f64> {
    let horizon = lambda2.iter().copied().max().unwrap_or(1) + model.inner.lag();
    let m = model.inner.with_horizon(model.inner.horizon.max(horizon)).map_err(err)?;
    let f = TestFunction::new("python", f64::NAN, move |x| {
        Python::with_gil(|py| phi.call1(py, (x.to_vec(),)).and_then(|v| v.extract::<f64>(py)).unwrap_or(f64::NAN))
    });
    let probe = MixingProbe::new(lambda1, lambda2, f).map_err(err)?;
    let v = py.allow_threads(|| alpha_mixing_lhs(&m, &probe)).map_err(err)?;
    if v.is_nan() {
        return Err(PyValueError::new_err("the test function raised or returned a non-float"));
    }
    Ok(v)
}

/// `Ê[φ(B_1)]` for G-normal `B_1` with variance in `[var_low, var_high]`.
#[pyfunction]
#[pyo3(signature = (var_low, var_high, phi, steps=200))]
fn g_normal(var_low: f64, var_high: f64, phi: Py<PyAny>, steps: usize) -> PyResult<f64> {
    let cb = Callback::new(&phi);
    let r = g_normal_step(var_low, var_high, steps, &|x| cb.call(&[x]));
    cb.finish(r)
}

/// Seeded batch of G-Brownian paths.
#[pyclass(name = "PathEnsemble", module = "sublinergo_py")]
struct PyPathEnsemble {
    inner: sublinergo::gbm::PathEnsemble,
}

#[pymethods]
impl PyPathEnsemble {
    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.n_paths()
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Coordinate 0 of path `i` at every grid point.
    fn path(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n_paths() {
            return Err(PyValueError::new_err(format!("path {i} out of range")));
        }
        Ok((0..self.inner.n_points()).map(|k| self.inner.point(i, k)[0]).collect())
    }

    fn terminal(&self) -> Vec<f64> {
        (0..self.inner.n_paths()).map(|i| self.inner.terminal(i)[0]).collect()
    }

    fn write_cache(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path)?;
        write_cache(&self.inner, std::io::BufWriter::new(f)).map_err(err)
    }

    #[staticmethod]
    fn read_cache(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path)?;
        Ok(PyPathEnsemble {
            inner: read_cache(std::io::BufReader::new(f)).map_err(err)?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path)?;
        self.inner.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    }
}

/// Scalar G-Brownian motion under a constant variance control `q`.
#[pyfunction]
#[pyo3(signature = (q, dt, horizon, n_paths, seed, q_low=None, q_high=None))]
fn simulate_gbm_constant(
    py: Python<'_>,
    q: f64,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    q_low: Option<f64>,
    q_high: Option<f64>,
) -> PyResult<PyPathEnsemble> {
    let set = ControlSet::interval(q_low.unwrap_or(q), q_high.unwrap_or(q), 0).map_err(err)?;
    let ens = py
        .allow_threads(|| simulate_gbm(&Policy::constant_scalar(q), &set, dt, horizon, n_paths, seed))
        .map_err(err)?;
    Ok(PyPathEnsemble { inner: ens })
}

/// G-SDE with a dissipative drift.
#[pyclass(name = "GsdeModel", module = "sublinergo_py")]
struct PyGsdeModel {
    inner: GsdeModel,
}

#[pymethods]
impl PyGsdeModel {
    #[staticmethod]
    #[pyo3(signature = (a=1.0, sigma=1.0, q_low=1.0, q_high=4.0))]
    fn gou(a: f64, sigma: f64, q_low: f64, q_high: f64) -> PyResult<Self> {
        Ok(PyGsdeModel {
            inner: GsdeModel::gou(a, sigma, q_low, q_high).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (q_low=1.0, q_high=4.0))]
    fn cubic(q_low: f64, q_high: f64) -> PyResult<Self> {
        Ok(PyGsdeModel {
            inner: GsdeModel::cubic(q_low, q_high).map_err(err)?,
        })
    }

    /// Model from a piecewise-linear coefficient table in TOML.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let table = toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyGsdeModel {
            inner: GsdeModel::from_table(&table).map_err(err)?,
        })
    }

    #[getter]
    fn claimed_alpha(&self) -> f64 {
        self.inner.claimed_alpha
    }

    /// `(min_margin, passes)` over random pairs in the ball of `radius`.
    #[pyo3(signature = (n_pairs=1000, radius=5.0, seed=0))]
    fn check_dissipativity(&self, n_pairs: usize, radius: f64, seed: u64) -> PyResult<(f64, bool)> {
        let r = check_dissipativity(&self.inner, n_pairs, radius, seed).map_err(err)?;
        Ok((r.min_margin, r.passes))
    }

    /// `T_t φ(x)` on the backward lattice.
    fn markov_t(&self, py: Python<'_>, t: f64, phi: Py<PyAny>, x: f64) -> PyResult<f64> {
        let cb = Callback::new(&phi);
        let r = py.allow_threads(|| markov_t(&self.inner, t, &|y| cb.call(y), &[x], MarkovMethod::Dp(DpConfig::default())));
        cb.finish(r).map(|v| v.value)
    }
}

/// Running averages of `1{ω_0 = 0}` along the block point, at `n = 1..=n`.
#[pyfunction]
fn block_point_averages(n: usize) -> PyResult<Vec<f64>> {
    let s = birkhoff_series(&Observable::first_is_zero(), &SymbolicPoint::block(), n).map_err(err)?;
    Ok(s.averages())
}

#[pyfunction]
fn two_bernoulli_divergence(n: usize, seed: u64) -> PyResult<(f64, f64)> {
    tb_divergence(n, seed).map_err(err)
}

/// `(n, sup deviation)` of Birkhoff averages of `x` under rotation by `alpha`.
#[pyfunction]
fn rotation_deviation(py: Python<'_>, alpha: f64, x: Py<PyAny>, n_grid: Vec<usize>, points: Vec<f64>) -> PyResult<Vec<(usize, f64)>> {
    let rot = RotationSystem::new(alpha).map_err(err)?;
    let cb = Callback::new(&x);
    let r = py.allow_threads(|| unique_ergodicity_test(&rot, &|w| cb.call(&[w]), &n_grid, &points));
    Ok(cb.finish(r)?.iter().map(|r| (r.n, r.sup_deviation)).collect())
}

#[pymodule]
fn sublinergo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySequentialModel>()?;
    m.add_class::<PyGsdeModel>()?;
    m.add_class::<PyPathEnsemble>()?;
    m.add_function(wrap_pyfunction!(lln_table, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_mixing, m)?)?;
    m.add_function(wrap_pyfunction!(g_normal, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_gbm_constant, m)?)?;
    m.add_function(wrap_pyfunction!(block_point_averages, m)?)?;
    m.add_function(wrap_pyfunction!(two_bernoulli_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_deviation, m)?)?;
    Ok(())
}
