//! Python bindings: games, networks, augmented constants and the solvers.

use grane_core::augmented::{AlphaPolicy, AugmentedConfig, ConstantsReport, EstimationMatrix, MonotonicityPath};
use grane_core::experiment::{run_config_file, run_experiment as run_core_experiment, ExperimentConfig};
use grane_core::game::{
    eval_game_mapping, eval_partial_gradient, make_quadratic_game, quadratic_constants, BoxSet, Game, QuadraticSpec,
};
use grane_core::network::{mixing_from_laplacian, mixing_metropolis, random_tree, validate_mixing};
use grane_core::solvers::{
    acc_grane_run, centralized_gradient_play, grane_run, Algorithm as CoreAlgorithm, SolverConfig, SolverError,
    StepSize,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn solver_err(e: SolverError) -> PyErr {
    match e {
        SolverError::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// Serializes through JSON into plain Python objects.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "QuadraticGame", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyQuadraticGame {
    inner: grane_core::QuadraticGame,
}

#[pymethods]
impl PyQuadraticGame {
    /// `boxes` holds `(lo, hi)` pairs; `None` means unbounded on that side.
    #[new]
    #[pyo3(signature = (a, b, c, boxes))]
    fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<Vec<f64>>, boxes: Vec<(Option<f64>, Option<f64>)>) -> PyResult<Self> {
        let boxes = boxes
            .into_iter()
            .map(|(lo, hi)| BoxSet::new(lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_err)?;
        let inner = grane_core::QuadraticGame::new(a, b, c, boxes).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Random quadratic game with the default coefficient ranges.
    #[staticmethod]
    #[pyo3(signature = (n, seed, antisymmetric = true))]
    fn random(n: usize, seed: u64, antisymmetric: bool) -> PyResult<Self> {
        let spec = QuadraticSpec {
            antisymmetric,
            ..QuadraticSpec::new(n, seed)
        };
        Ok(Self {
            inner: make_quadratic_game(&spec).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.num_players()
    }

    /// Stacked partial gradients `F(x)`.
    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        eval_game_mapping(&self.inner, &x).map_err(value_err)
    }

    fn partial_gradient(&self, i: usize, x: Vec<f64>) -> PyResult<f64> {
        eval_partial_gradient(&self.inner, i, &x).map_err(value_err)
    }

    fn cost(&self, i: usize, x: Vec<f64>) -> PyResult<f64> {
        if i >= self.inner.num_players() || x.len() != self.inner.num_players() {
            return Err(value_err("player index or action length out of range"));
        }
        Ok(self.inner.cost(i, &x))
    }

    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &quadratic_constants(&self.inner))
    }

    /// Equilibrium by centralized projected gradient play from the projected origin.
    #[pyo3(signature = (max_iters = 100_000, tol = 1e-14, step = None))]
    fn equilibrium(&self, max_iters: usize, tol: f64, step: Option<f64>) -> PyResult<Vec<f64>> {
        let x0 = grane_core::game::project_box(self.inner.boxes(), &vec![0.0; self.inner.num_players()]);
        let r = centralized_gradient_play(&self.inner, step, max_iters, tol, &x0).map_err(solver_err)?;
        Ok(r.x)
    }

    fn __repr__(&self) -> String {
        format!("QuadraticGame(n={})", self.inner.num_players())
    }
}

#[pyclass(name = "Graph", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: grane_core::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self {
            inner: grane_core::Graph::new(n, edges).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn path(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: grane_core::Graph::path(n).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn complete(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: grane_core::Graph::complete(n).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn star(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: grane_core::Graph::star(n).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn random_tree(n: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: random_tree(n, seed).map_err(value_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.num_nodes(), self.inner.num_edges())
    }
}

#[pyclass(name = "MixingMatrix", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMixingMatrix {
    inner: grane_core::MixingMatrix,
}

#[pymethods]
impl PyMixingMatrix {
    /// `W = I - tL`, with `t = 1/(Δ+1)` when omitted.
    #[staticmethod]
    #[pyo3(signature = (graph, t = None))]
    fn lazy_laplacian(graph: &PyGraph, t: Option<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: mixing_from_laplacian(&graph.inner, t).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn metropolis(graph: &PyGraph) -> PyResult<Self> {
        Ok(Self {
            inner: mixing_metropolis(&graph.inner).map_err(value_err)?,
        })
    }

    #[getter]
    fn weights(&self) -> Vec<Vec<f64>> {
        let w = self.inner.weights();
        (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect()
    }

    #[getter]
    fn sigma_max(&self) -> f64 {
        self.inner.sigma_max()
    }

    #[getter]
    fn lambda_min_nonzero(&self) -> f64 {
        self.inner.lambda_min_nonzero()
    }

    /// Failed checks against `graph`; empty when every property holds.
    #[pyo3(signature = (graph, tol = 1e-10))]
    fn validate<'py>(&self, py: Python<'py>, graph: &PyGraph, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &validate_mixing(&self.inner, &graph.inner, tol).failures)
    }
}

/// A float (uniform), a list (explicit), or "recommended" / "remark4-auto".
fn alpha_policy(alpha: &Bound<'_, PyAny>) -> PyResult<AlphaPolicy> {
    if let Ok(name) = alpha.extract::<String>() {
        return match name.as_str() {
            "recommended" => Ok(AlphaPolicy::Recommended),
            "remark4-auto" => Ok(AlphaPolicy::Remark4Auto),
            other => Err(value_err(format!("unknown alpha policy {other:?}"))),
        };
    }
    if let Ok(value) = alpha.extract::<f64>() {
        return Ok(AlphaPolicy::Uniform { value });
    }
    if let Ok(values) = alpha.extract::<Vec<f64>>() {
        return Ok(AlphaPolicy::Explicit { values });
    }
    Err(value_err("alpha must be a float, a list of floats or a policy name"))
}

fn monotonicity_path(path: &str) -> PyResult<MonotonicityPath> {
    match path {
        "lemma2" => Ok(MonotonicityPath::Lemma2),
        "lemma3" => Ok(MonotonicityPath::Lemma3),
        other => Err(value_err(format!("path must be \"lemma2\" or \"lemma3\", got {other:?}"))),
    }
}

fn resolve(game: &PyQuadraticGame, mixing: &PyMixingMatrix, alpha: &Bound<'_, PyAny>, path: &str) -> PyResult<AugmentedConfig> {
    AugmentedConfig::new(
        &quadratic_constants(&game.inner),
        &mixing.inner,
        &alpha_policy(alpha)?,
        monotonicity_path(path)?,
    )
    .map_err(value_err)
}

/// L_Fa, mu_Fa, mu_r_Fa, gamma and the condition-number report.
#[pyfunction]
#[pyo3(signature = (game, mixing, alpha = None, path = "lemma2"))]
fn augmented_constants<'py>(
    py: Python<'py>,
    game: &PyQuadraticGame,
    mixing: &PyMixingMatrix,
    alpha: Option<&Bound<'py, PyAny>>,
    path: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let default = 1.0f64.into_pyobject(py)?.into_any();
    let cfg = resolve(game, mixing, alpha.unwrap_or(&default), path)?;
    to_py(py, &ConstantsReport::new(&cfg, &quadratic_constants(&game.inner), &mixing.inner))
}

/// Runs "grane" or "acc-grane" from the projected zero matrix against the
/// centralized equilibrium. Returns the final matrix, the trace and the step.
#[pyfunction]
#[pyo3(signature = (game, mixing, algorithm = "grane", max_iters = 1000, alpha = None, path = "lemma2", step = None, stride = 1))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    game: &PyQuadraticGame,
    mixing: &PyMixingMatrix,
    algorithm: &str,
    max_iters: usize,
    alpha: Option<&Bound<'py, PyAny>>,
    path: &str,
    step: Option<f64>,
    stride: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let algorithm = match algorithm {
        "grane" => CoreAlgorithm::Grane,
        "acc-grane" => CoreAlgorithm::AccGrane,
        other => return Err(value_err(format!("algorithm must be \"grane\" or \"acc-grane\", got {other:?}"))),
    };
    let default = 1.0f64.into_pyobject(py)?.into_any();
    let alpha = alpha.unwrap_or(&default);
    let sc = SolverConfig {
        step: step.map_or(StepSize::Auto, StepSize::Fixed),
        alpha: alpha_policy(alpha)?,
        path: monotonicity_path(path)?,
        stride,
        ..SolverConfig::new(algorithm, max_iters)
    };
    let cfg = resolve(game, mixing, alpha, path)?;
    let g = &game.inner;
    let n = g.num_players();
    let x0 = grane_core::augmented::project_omega_a(g.boxes(), &EstimationMatrix::zeros(n));
    let star = centralized_gradient_play(g, None, 200_000, 1e-15, &x0.diagonal_vec()).map_err(solver_err)?;
    let star = EstimationMatrix::consensual(&star.x);
    let (x, trace) = py
        .detach(|| match algorithm {
            CoreAlgorithm::AccGrane => acc_grane_run(g, &mixing.inner, &cfg, &sc, &x0, &star),
            _ => grane_run(g, &mixing.inner, &cfg, &sc, &x0, &star),
        })
        .map_err(solver_err)?;

    #[derive(Serialize)]
    struct Result<'a> {
        x: Vec<Vec<f64>>,
        equilibrium: Vec<f64>,
        step: f64,
        gamma: f64,
        iterations: usize,
        records: &'a [grane_core::solvers::ResidualRecord],
        normalized_residual: Vec<(usize, f64)>,
    }
    to_py(
        py,
        &Result {
            x: x.rows(),
            equilibrium: star.row_vec(0),
            step: trace.meta.step,
            gamma: trace.meta.gamma,
            iterations: trace.iterations,
            records: &trace.records,
            normalized_residual: trace.normalized_residuals(),
        },
    )
}

/// Runs an experiment config given as a JSON string and returns its summary
/// without writing files.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(value_err)?;
    let out = py
        .detach(|| run_core_experiment(&cfg))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &out.summary)
}

/// Runs a config file and writes its outputs; returns the written paths.
#[pyfunction]
fn run_config(py: Python<'_>, path: std::path::PathBuf) -> PyResult<Vec<String>> {
    let (_, written) = py
        .detach(|| run_config_file(&path))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(written.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn grane(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQuadraticGame>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyMixingMatrix>()?;
    m.add_function(wrap_pyfunction!(augmented_constants, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
