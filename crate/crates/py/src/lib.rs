//! Python bindings: trajectory pools, BET training and inference,
//! explanations, baselines and model files.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use bet_core::baselines::{fit_axis_tree, fit_knn, Impurity};
use bet_core::envs::{generate_moons3, GridConfig, GridPursuit, ScriptedTeacher};
use bet_core::explain::{bone_catalog, min_perturbation, risk_score};
use bet_core::harness::{collect_trajectories, evaluate_reward, Policy};
use bet_core::io::{read_trajectories, write_trajectories};
use bet_core::model_io::AnyModel;
use bet_core::{build_pool, ActionId, BetConfig, BetError, DistanceFn, ExperiencePool, SigmaMode, StateVector};

fn err(e: BetError) -> PyErr {
    match e {
        BetError::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Converts any serializable value into plain Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn distance_from(name: &str) -> PyResult<DistanceFn> {
    match name {
        "euclidean" => Ok(DistanceFn::Euclidean),
        "squared_euclidean" => Ok(DistanceFn::SquaredEuclidean),
        other => Err(PyValueError::new_err(format!("unknown distance {other:?} (expected euclidean or squared_euclidean)"))),
    }
}

/// Labelled decisions grouped into episodes.
#[pyclass(name = "Pool", module = "bet", frozen)]
struct PyPool {
    inner: ExperiencePool,
}

#[pymethods]
impl PyPool {
    /// `episodes` is a list of episodes, each a list of `(state, action)` pairs.
    #[new]
    fn new(episodes: Vec<Vec<(Vec<f64>, usize)>>, action_count: usize) -> PyResult<Self> {
        let eps = episodes
            .into_iter()
            .map(|ep| ep.into_iter().map(|(s, a)| Ok((StateVector::new(s)?, ActionId(a)))).collect())
            .collect::<Result<Vec<Vec<_>>, BetError>>()
            .map_err(err)?;
        Ok(Self { inner: build_pool(&eps, action_count).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner: read_trajectories(BufReader::new(file)).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        write_trajectories(&self.inner, BufWriter::new(file)).map_err(err)
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn states(&self) -> Vec<Vec<f64>> {
        self.inner.iter().map(|e| e.state.as_slice().to_vec()).collect()
    }

    fn actions(&self) -> Vec<usize> {
        self.inner.iter().map(|e| e.action.index()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Pool(len={}, state_dim={}, action_count={})", self.inner.len(), self.inner.state_dim(), self.inner.action_count())
    }
}

/// Three interleaved half circles with Gaussian noise.
#[pyfunction]
#[pyo3(signature = (per_class=100, noise=0.1, seed=0))]
fn moons(per_class: usize, noise: f64, seed: u64) -> PyResult<PyPool> {
    Ok(PyPool { inner: generate_moons3(per_class, noise, seed).map_err(err)?.to_pool() })
}

/// Rolls out the scripted GridPursuit teacher.
#[pyfunction]
#[pyo3(signature = (episodes=200, seed=0))]
fn collect_gridpursuit(episodes: usize, seed: u64) -> PyResult<PyPool> {
    let mut env = GridPursuit::new(GridConfig::default());
    let c = collect_trajectories(&mut env, &ScriptedTeacher, episodes, seed).map_err(err)?;
    Ok(PyPool { inner: c.pool })
}

/// A trained student: BET, CART, ID3 or k-NN.
#[pyclass(name = "Model", module = "bet", frozen)]
struct PyModel {
    inner: AnyModel,
}

impl PyModel {
    fn bet(&self) -> PyResult<&bet_core::BetTree> {
        match &self.inner {
            AnyModel::Bet(t) => Ok(t),
            other => Err(PyValueError::new_err(format!("explanations need a bet model, not {}", other.format_tag()))),
        }
    }

    fn check(&self, s: &[f64]) -> PyResult<()> {
        let expected = self.inner.state_dim();
        if s.len() != expected {
            return Err(err(BetError::Dimension { expected, got: s.len() }));
        }
        Ok(())
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: AnyModel::load(&path).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: AnyModel::from_json(text).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn format(&self) -> &'static str {
        self.inner.format_tag()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn predict(&self, state: Vec<f64>) -> PyResult<usize> {
        self.check(&state)?;
        Ok(self.inner.act(&state).index())
    }

    /// Per-node posteriors along the inference path (bet only).
    fn posterior<'py>(&self, py: Python<'py>, state: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let tree = self.bet()?;
        self.check(&state)?;
        to_py(py, &tree.predict(&state))
    }

    fn risk<'py>(&self, py: Python<'py>, state: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &risk_score(self.bet()?, &state).map_err(err)?)
    }

    #[pyo3(signature = (state, targets=None, tol=1e-3))]
    fn perturbation<'py>(
        &self,
        py: Python<'py>,
        state: Vec<f64>,
        targets: Option<Vec<usize>>,
        tol: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let targets: Option<Vec<ActionId>> = targets.map(|t| t.into_iter().map(ActionId).collect());
        to_py(py, &min_perturbation(self.bet()?, &state, targets.as_deref(), tol).map_err(err)?)
    }

    fn bone_catalog<'py>(&self, py: Python<'py>, pool: &PyPool) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &bone_catalog(self.bet()?, &pool.inner).map_err(err)?)
    }

    fn training_cost_trace(&self) -> PyResult<Vec<f64>> {
        Ok(self.bet()?.training_cost_trace.clone())
    }

    fn depth(&self) -> usize {
        match &self.inner {
            AnyModel::Bet(t) => t.depth(),
            AnyModel::Axis(t) => t.depth(),
            AnyModel::Knn(_) => 0,
        }
    }

    fn __repr__(&self) -> String {
        format!("Model(format={:?}, state_dim={})", self.inner.format_tag(), self.inner.state_dim())
    }
}

#[pyfunction]
#[pyo3(signature = (
    pool, n_bones=4, max_depth=4, min_split=2, distance="euclidean", sigma=None,
    seed=0, lloyd_max_iters=100, lloyd_tol=1e-9,
))]
#[allow(clippy::too_many_arguments)]
fn train_bet(
    pool: &PyPool,
    n_bones: usize,
    max_depth: usize,
    min_split: usize,
    distance: &str,
    sigma: Option<f64>,
    seed: u64,
    lloyd_max_iters: usize,
    lloyd_tol: f64,
) -> PyResult<PyModel> {
    let cfg = BetConfig {
        n_bones,
        max_depth,
        min_split,
        distance: distance_from(distance)?,
        sigma_mode: sigma.map_or(SigmaMode::PerNodeMedian, |value| SigmaMode::Fixed { value }),
        seed,
        lloyd_max_iters,
        lloyd_tol,
    };
    Ok(PyModel { inner: AnyModel::Bet(bet_core::build(&pool.inner, &cfg).map_err(err)?) })
}

/// `criterion` is `gini` (CART) or `entropy` (ID3).
#[pyfunction]
#[pyo3(signature = (pool, criterion="gini", max_depth=4, min_split=2))]
fn train_axis_tree(pool: &PyPool, criterion: &str, max_depth: usize, min_split: usize) -> PyResult<PyModel> {
    let impurity = match criterion {
        "gini" => Impurity::Gini,
        "entropy" => Impurity::Entropy,
        other => return Err(PyValueError::new_err(format!("unknown criterion {other:?} (expected gini or entropy)"))),
    };
    Ok(PyModel { inner: AnyModel::Axis(fit_axis_tree(&pool.inner, impurity, max_depth, min_split).map_err(err)?) })
}

#[pyfunction]
#[pyo3(signature = (pool, k=5, distance="euclidean"))]
fn train_knn(pool: &PyPool, k: usize, distance: &str) -> PyResult<PyModel> {
    Ok(PyModel { inner: AnyModel::Knn(fit_knn(&pool.inner, k, distance_from(distance)?).map_err(err)?) })
}

/// Mean GridPursuit return of `model`, or of the scripted teacher when `model` is None.
#[pyfunction]
#[pyo3(signature = (model=None, episodes=200, seed=0))]
fn gridpursuit_reward<'py>(py: Python<'py>, model: Option<&PyModel>, episodes: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let mut env = GridPursuit::new(GridConfig::default());
    let policy: &dyn Policy = match model {
        Some(m) => &m.inner,
        None => &ScriptedTeacher,
    };
    to_py(py, &evaluate_reward(&mut env, policy, episodes, seed).map_err(err)?)
}

#[pymodule]
fn bet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPool>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(moons, m)?)?;
    m.add_function(wrap_pyfunction!(collect_gridpursuit, m)?)?;
    m.add_function(wrap_pyfunction!(train_bet, m)?)?;
    m.add_function(wrap_pyfunction!(train_axis_tree, m)?)?;
    m.add_function(wrap_pyfunction!(train_knn, m)?)?;
    m.add_function(wrap_pyfunction!(gridpursuit_reward, m)?)?;
    Ok(())
}
