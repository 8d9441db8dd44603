//! JSON-configured experiments: build the game and network, compute a
//! reference equilibrium, run the listed solvers and write traces, a summary
//! and plot data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmented::{
    project_omega_a, AugmentedConfig, AugmentedError, ConstantsReport, EstimationMatrix, MonotonicityPath,
};
use crate::game::{make_quadratic_game, project_box, quadratic_constants, Game, GameConstants, QuadraticGame, QuadraticSpec};
use crate::network::{
    mixing_from_laplacian, mixing_metropolis, random_tree, validate_mixing, Graph, MixingMatrix,
};
use crate::solvers::{
    acc_grane_run, centralized_gradient_play, centralized_run, grane_run, Algorithm, CentralizedResult,
    ConvergenceTrace, ResidualRecord, SolverConfig, SolverError, StopReason,
};

/// Overrides `output.dir` when set.
pub const OUTPUT_DIR_ENV: &str = "GRANE_OUTPUT_DIR";

/// Tolerance of the mixing-matrix checks run before every experiment.
pub const MIXING_TOL: f64 = 1e-10;

/// Thresholds on the normalized residual reported in the summary.
pub const THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-6];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Schema(String),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("run `{run}` diverged: {source}")]
    Divergence {
        run: String,
        #[source]
        source: SolverError,
    },
    #[error("run `{run}`: {message}; select the lemma3 path (restricted monotonicity) instead")]
    MissingStrongMonotonicity { run: String, message: String },
}

impl ExperimentError {
    /// 1 for IO, 2 for config errors, 3 for divergence, 4 for a lemma2 run without `μ_Fa`.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 1,
            Self::Schema(_) | Self::Invalid(_) => 2,
            Self::Divergence { .. } => 3,
            Self::MissingStrongMonotonicity { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GameSection {
    /// Random quadratic game drawn from `QuadraticSpec`.
    Quadratic(QuadraticSpec),
    /// Explicit quadratic game.
    Inline(QuadraticGame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphType {
    Tree,
    Path,
    Complete,
    Star,
    Inline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingKind {
    LazyLaplacian,
    Metropolis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(rename = "type")]
    pub kind: GraphType,
    /// Required for `tree`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Required for `inline`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    pub mixing: MixingKind,
    /// Laplacian step; `1/(Δ+1)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

fn default_reference_iters() -> usize {
    100_000
}

fn default_reference_tol() -> f64 {
    1e-14
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default = "default_reference_iters")]
    pub max_iters: usize,
    #[serde(default = "default_reference_tol")]
    pub tol: f64,
    /// Centralized step; the conservative automatic step when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            max_iters: default_reference_iters(),
            tol: default_reference_tol(),
            step: None,
        }
    }
}

fn default_summary() -> String {
    "summary.json".into()
}

fn default_plot_data() -> String {
    "plot_data.csv".into()
}

fn default_trace_pattern() -> String {
    "{name}_trace.csv".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory, relative to the working directory.
    pub dir: String,
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default = "default_plot_data")]
    pub plot_data: String,
    /// File name per run; `{name}` is replaced by the run label.
    #[serde(default = "default_trace_pattern")]
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub game: GameSection,
    pub graph: GraphSection,
    pub solvers: Vec<SolverConfig>,
    #[serde(default)]
    pub reference: ReferenceSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Output directory after applying the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(&self.output.dir),
        }
    }
}

/// Game, network and constants built from a config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub game: QuadraticGame,
    pub seed: Option<u64>,
    pub graph: Graph,
    pub mixing: MixingMatrix,
    pub constants: GameConstants,
}

impl Setup {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let invalid = |e: &dyn std::fmt::Display| ExperimentError::Invalid(e.to_string());
        let (game, seed) = match &cfg.game {
            GameSection::Quadratic(spec) => (make_quadratic_game(spec).map_err(|e| invalid(&e))?, Some(spec.seed)),
            GameSection::Inline(q) => (q.clone(), None),
        };
        let n = game.num_players();
        let g = &cfg.graph;
        let graph = match g.kind {
            GraphType::Tree => {
                let seed = g
                    .seed
                    .ok_or_else(|| ExperimentError::Schema("graph.seed is required for tree graphs".into()))?;
                random_tree(n, seed)
            }
            GraphType::Path => Graph::path(n),
            GraphType::Complete => Graph::complete(n),
            GraphType::Star => Graph::star(n),
            GraphType::Inline => {
                let edges = g
                    .edges
                    .as_ref()
                    .ok_or_else(|| ExperimentError::Schema("graph.edges is required for inline graphs".into()))?;
                Graph::new(n, edges.iter().map(|[i, j]| (*i, *j)))
            }
        }
        .map_err(|e| invalid(&e))?;
        let mixing = match g.mixing {
            MixingKind::LazyLaplacian => mixing_from_laplacian(&graph, g.t),
            MixingKind::Metropolis => {
                if g.t.is_some() {
                    return Err(ExperimentError::Schema("graph.t only applies to lazy-laplacian mixing".into()));
                }
                mixing_metropolis(&graph)
            }
        }
        .map_err(|e| invalid(&e))?;
        let report = validate_mixing(&mixing, &graph, MIXING_TOL);
        if !report.passed() {
            return Err(ExperimentError::Invalid(format!(
                "mixing matrix fails validation: {:?}",
                report.failures
            )));
        }
        let constants = quadratic_constants(&game);
        Ok(Self {
            game,
            seed,
            graph,
            mixing,
            constants,
        })
    }

    /// Starting point: the zero matrix with its diagonal projected onto the boxes.
    pub fn start(&self) -> EstimationMatrix {
        project_omega_a(self.game.boxes(), &EstimationMatrix::zeros(self.game.num_players()))
    }

    pub fn reference(&self, r: &ReferenceSection) -> Result<CentralizedResult, ExperimentError> {
        let x0 = project_box(self.game.boxes(), &vec![0.0; self.game.num_players()]);
        centralized_gradient_play(&self.game, r.step, r.max_iters, r.tol, &x0).map_err(|e| match e {
            SolverError::Divergence { .. } => ExperimentError::Divergence {
                run: "reference".into(),
                source: e,
            },
            other => ExperimentError::Invalid(format!("reference: {other}")),
        })
    }

    /// Augmented constants for one solver entry; centralized runs have none.
    pub fn augmented(&self, sc: &SolverConfig) -> Result<Option<AugmentedConfig>, ExperimentError> {
        if sc.algorithm == Algorithm::Centralized {
            return Ok(None);
        }
        sc.validate().map_err(|e| solver_config_error(sc, e))?;
        sc.resolve(&self.constants, &self.mixing)
            .map(Some)
            .map_err(|e| solver_config_error(sc, e))
    }
}

fn solver_config_error(sc: &SolverConfig, e: SolverError) -> ExperimentError {
    let run = sc.label();
    match e {
        SolverError::MissingStrongMonotonicity => ExperimentError::MissingStrongMonotonicity {
            run,
            message: e.to_string(),
        },
        SolverError::Augmented(AugmentedError::MissingConstant(message)) if sc.path == MonotonicityPath::Lemma2 => {
            ExperimentError::MissingStrongMonotonicity { run, message }
        }
        other => ExperimentError::Invalid(format!("run `{run}`: {other}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameSummary {
    pub n: usize,
    pub seed: Option<u64>,
    #[serde(rename = "mu_F")]
    pub mu_f: f64,
    #[serde(rename = "L_F")]
    pub l_f: f64,
    /// `max_i L_{-i}`
    #[serde(rename = "H")]
    pub h: f64,
    pub mu_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSummary {
    pub graph: GraphType,
    pub edges: usize,
    pub mixing: MixingKind,
    pub sigma_max: f64,
    pub lambda_min_nz: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalResiduals {
    pub fro_residual: f64,
    pub normalized_residual: f64,
    pub relative_error: f64,
    pub consensus_gap: f64,
    pub vi_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub algorithm: Algorithm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsReport>,
    pub step: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    #[serde(rename = "final")]
    pub final_residuals: FinalResiduals,
    /// Keyed by threshold; `null` when not reached within the run.
    pub iterations_to: BTreeMap<String, Option<usize>>,
    /// Least-squares slope of the log normalized residual over the recorded iterations.
    pub log_residual_slope: Option<f64>,
    pub trace_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSummary {
    pub x: Vec<f64>,
    pub step: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub game: GameSummary,
    pub network: NetworkSummary,
    pub reference: ReferenceSummary,
    pub runs: Vec<RunSummary>,
}

/// Everything produced by [`run_experiment`], before it is written out.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub traces: Vec<ConvergenceTrace>,
    pub reference: EstimationMatrix,
    pub finals: Vec<EstimationMatrix>,
}

impl ExperimentOutcome {
    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    /// `run,k,normalized_residual` rows for every run.
    pub fn plot_data_csv(&self) -> String {
        let mut out = String::from("run,k,normalized_residual\n");
        for (run, trace) in self.summary.runs.iter().zip(&self.traces) {
            for (k, v) in trace.normalized_residuals() {
                out.push_str(&format!("{},{},{:.16e}\n", run.name, k, v));
            }
        }
        out
    }

    pub fn trace_by_name(&self, name: &str) -> Option<&ConvergenceTrace> {
        self.summary
            .runs
            .iter()
            .position(|r| r.name == name)
            .map(|i| &self.traces[i])
    }
}

fn trace_file_name(pattern: &str, name: &str) -> String {
    pattern.replace("{name}", name)
}

fn run_one(
    setup: &Setup,
    sc: &SolverConfig,
    aug: Option<&AugmentedConfig>,
    x0: &EstimationMatrix,
    x_ref: &EstimationMatrix,
    ref_vec: &[f64],
) -> Result<(EstimationMatrix, ConvergenceTrace), SolverError> {
    match (sc.algorithm, aug) {
        (Algorithm::Grane, Some(cfg)) => grane_run(&setup.game, &setup.mixing, cfg, sc, x0, x_ref),
        (Algorithm::AccGrane, Some(cfg)) => acc_grane_run(&setup.game, &setup.mixing, cfg, sc, x0, x_ref),
        _ => {
            let start = x0.diagonal_vec();
            let (x, trace) = centralized_run(&setup.game, sc, &start, ref_vec)?;
            Ok((EstimationMatrix::consensual(&x), trace))
        }
    }
}

/// Runs every solver of `cfg` (concurrently) and assembles the summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    if cfg.solvers.is_empty() {
        return Err(ExperimentError::Schema("solvers must list at least one run".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for sc in &cfg.solvers {
        if !seen.insert(sc.label()) {
            return Err(ExperimentError::Schema(format!(
                "duplicate run name `{}`; set distinct `name` fields",
                sc.label()
            )));
        }
    }
    let setup = Setup::build(cfg)?;
    let augmented = cfg
        .solvers
        .iter()
        .map(|sc| {
            if sc.algorithm == Algorithm::Centralized {
                sc.validate().map_err(|e| solver_config_error(sc, e))?;
            }
            setup.augmented(sc)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reference = setup.reference(&cfg.reference)?;
    let x_ref = EstimationMatrix::consensual(&reference.x);
    let x0 = setup.start();

    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = cfg
            .solvers
            .iter()
            .zip(&augmented)
            .map(|(sc, aug)| {
                let (setup, x0, x_ref, ref_vec) = (&setup, &x0, &x_ref, &reference.x);
                s.spawn(move || run_one(setup, sc, aug.as_ref(), x0, x_ref, ref_vec))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });

    let mut runs = Vec::new();
    let mut traces = Vec::new();
    let mut finals = Vec::new();
    for ((sc, aug), result) in cfg.solvers.iter().zip(&augmented).zip(results) {
        let name = sc.label();
        let (x, mut trace) = result.map_err(|e| match e {
            SolverError::Divergence { .. } => ExperimentError::Divergence {
                run: name.clone(),
                source: e,
            },
            other => ExperimentError::Invalid(format!("run `{name}`: {other}")),
        })?;
        trace.meta.seed = setup.seed;
        let last: ResidualRecord = *trace.last();
        let normalized = trace.normalized_residuals();
        runs.push(RunSummary {
            name: name.clone(),
            algorithm: sc.algorithm,
            constants: aug
                .as_ref()
                .map(|a| ConstantsReport::new(a, &setup.constants, &setup.mixing)),
            step: trace.meta.step,
            iterations: trace.iterations,
            stop_reason: trace.stop_reason,
            final_residuals: FinalResiduals {
                fro_residual: last.fro_residual,
                normalized_residual: normalized.last().map(|p| p.1).unwrap_or(0.0),
                relative_error: last.relative_error,
                consensus_gap: last.consensus_gap,
                vi_residual: last.vi_residual,
            },
            iterations_to: THRESHOLDS
                .iter()
                .map(|t| (format!("{t:e}"), trace.iterations_to(*t)))
                .collect(),
            log_residual_slope: crate::solvers::fit_log_slope(&normalized),
            trace_file: trace_file_name(&cfg.output.trace, &name),
        });
        traces.push(trace);
        finals.push(x);
    }

    let summary = ExperimentSummary {
        game: GameSummary {
            n: setup.game.num_players(),
            seed: setup.seed,
            mu_f: setup.constants.mu_f,
            l_f: setup.constants.lipschitz_f(),
            h: setup.constants.max_l_other(),
            mu_r: setup.constants.mu_r,
        },
        network: NetworkSummary {
            graph: cfg.graph.kind,
            edges: setup.graph.num_edges(),
            mixing: cfg.graph.mixing,
            sigma_max: setup.mixing.sigma_max(),
            lambda_min_nz: setup.mixing.lambda_min_nonzero(),
            lambda_max: setup.mixing.lambda_max(),
        },
        reference: ReferenceSummary {
            x: reference.x.clone(),
            step: reference.step,
            iterations: reference.iterations,
            converged: reference.converged,
        },
        runs,
    };
    Ok(ExperimentOutcome {
        summary,
        traces,
        reference: x_ref,
        finals,
    })
}

/// Writes traces, summary and plot data under `dir`; returns the written paths.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for (run, trace) in outcome.summary.runs.iter().zip(&outcome.traces) {
        let path = dir.join(&run.trace_file);
        fs::write(&path, trace.to_csv_string()).map_err(io(&path))?;
        written.push(path);
    }
    let path = dir.join(&cfg.output.summary);
    fs::write(&path, outcome.summary_json()).map_err(io(&path))?;
    written.push(path);
    let path = dir.join(&cfg.output.plot_data);
    fs::write(&path, outcome.plot_data_csv()).map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

/// Loads, runs and writes a config file.
pub fn run_config_file(path: &Path) -> Result<(ExperimentOutcome, Vec<PathBuf>), ExperimentError> {
    let cfg = ExperimentConfig::load(path)?;
    let outcome = run_experiment(&cfg)?;
    let written = write_outputs(&cfg, &outcome, &cfg.output_dir())?;
    Ok((outcome, written))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }
}

/// Schema and semantic checks without running any solver. Only an unreadable
/// file is an error; everything else is reported.
pub fn validate_config(path: &Path) -> Result<ValidationReport, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(validate_config_str(&text))
}

pub fn validate_config_str(text: &str) -> ValidationReport {
    let mut report = ValidationReport::default();
    let cfg = match ExperimentConfig::from_json(text) {
        Ok(c) => c,
        Err(e) => {
            report.errors.push(e.to_string());
            return report;
        }
    };
    if cfg.solvers.is_empty() {
        report.errors.push("solvers must list at least one run".into());
    }
    let setup = match Setup::build(&cfg) {
        Ok(s) => s,
        Err(e) => {
            report.errors.push(e.to_string());
            return report;
        }
    };
    for sc in &cfg.solvers {
        let run = sc.label();
        if let Err(e) = sc.validate() {
            match e {
                SolverError::MissingStrongMonotonicity => {
                    report.errors.push(format!("run `{run}`: acc-grane requires the lemma2 path"))
                }
                other => report.errors.push(format!("run `{run}`: {other}")),
            }
            continue;
        }
        if sc.algorithm == Algorithm::Centralized {
            continue;
        }
        match sc.resolve(&setup.constants, &setup.mixing) {
            Ok(_) => {}
            Err(SolverError::Augmented(AugmentedError::MissingConstant(_))) if sc.path == MonotonicityPath::Lemma2 => {
                report.warnings.push(format!("run `{run}`: μ_Fa undefined; use lemma3"))
            }
            Err(e) => report.errors.push(format!("run `{run}`: {e}")),
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConstants {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsOutput {
    pub game: GameSummary,
    pub network: NetworkSummary,
    pub runs: Vec<RunConstants>,
}

/// Constants and condition-number report for every non-centralized run, without solving.
pub fn constants_for(cfg: &ExperimentConfig) -> Result<ConstantsOutput, ExperimentError> {
    let setup = Setup::build(cfg)?;
    let runs = cfg
        .solvers
        .iter()
        .filter(|sc| sc.algorithm != Algorithm::Centralized)
        .map(|sc| match sc.resolve(&setup.constants, &setup.mixing) {
            Ok(a) => RunConstants {
                name: sc.label(),
                constants: Some(ConstantsReport::new(&a, &setup.constants, &setup.mixing)),
                error: None,
            },
            Err(e) => RunConstants {
                name: sc.label(),
                constants: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(ConstantsOutput {
        game: GameSummary {
            n: setup.game.num_players(),
            seed: setup.seed,
            mu_f: setup.constants.mu_f,
            l_f: setup.constants.lipschitz_f(),
            h: setup.constants.max_l_other(),
            mu_r: setup.constants.mu_r,
        },
        network: NetworkSummary {
            graph: cfg.graph.kind,
            edges: setup.graph.num_edges(),
            mixing: cfg.graph.mixing,
            sigma_max: setup.mixing.sigma_max(),
            lambda_min_nz: setup.mixing.lambda_min_nonzero(),
            lambda_max: setup.mixing.lambda_max(),
        },
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const G2: &str = r#"{
        "game": {"type": "inline", "n": 2, "a": [2, 2], "b": [-2, 0], "C": [[0, 1], [-1, 0]],
                 "boxes": [[-10, 10], [-10, 10]]},
        "graph": {"type": "inline", "edges": [[0, 1]], "mixing": "lazy-laplacian"},
        "solvers": [
            {"algorithm": "grane", "max_iters": 300},
            {"algorithm": "acc-grane", "max_iters": 300},
            {"algorithm": "centralized", "max_iters": 300}
        ],
        "output": {"dir": "unused"}
    }"#;

    #[test]
    fn g2_summary_constants() {
        let cfg = ExperimentConfig::from_json(G2).unwrap();
        let out = run_experiment(&cfg).unwrap();
        let grane = &out.summary.runs[0];
        let c = grane.constants.as_ref().unwrap();
        assert!((c.gamma - 6.4721).abs() < 1e-4);
        assert!((grane.step - 0.047746).abs() < 1e-6);
        assert!((out.summary.reference.x[0] - 0.8).abs() < 1e-12);
        assert_eq!(out.summary.runs.len(), 3);
        assert!(out.summary.runs.iter().all(|r| r.final_residuals.normalized_residual < 1e-2));
        assert!(out.plot_data_csv().starts_with("run,k,normalized_residual\ngrane,0,1.0000000000000000e0\n"));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let no_seed = r#"{"game": {"type": "quadratic", "n": 5}, "graph": {"type": "path", "mixing": "metropolis"},
                         "solvers": [], "output": {"dir": "x"}}"#;
        let err = ExperimentConfig::from_json(no_seed).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("seed"), "{err}");

        let tree = r#"{"game": {"type": "quadratic", "n": 5, "seed": 1}, "graph": {"type": "tree", "mixing": "metropolis"},
                       "solvers": [{"algorithm": "grane", "max_iters": 1}], "output": {"dir": "x"}}"#;
        let report = validate_config_str(tree);
        assert!(report.errors.iter().any(|e| e.contains("graph.seed")), "{report:?}");
    }

    #[test]
    fn restricted_game_warns_and_exits_four() {
        let g2r = G2.replace("[[0, 1], [-1, 0]]", "[[0, 3], [-3, 0]]");
        let report = validate_config_str(&g2r);
        assert!(report.errors.is_empty(), "{report:?}");
        assert!(report.warnings.iter().any(|w| w.contains("μ_Fa undefined; use lemma3")));
        let cfg = ExperimentConfig::from_json(&g2r).unwrap();
        assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn clean_config_has_no_issues() {
        assert!(validate_config_str(G2).is_clean());
    }

    #[test]
    fn divergence_exits_three() {
        let cfg = G2
            .replace("[[-10, 10], [-10, 10]]", "[[null, null], [null, null]]")
            .replace(r#"{"algorithm": "grane", "max_iters": 300}"#, r#"{"algorithm": "grane", "max_iters": 3000, "step": 5.0}"#);
        let cfg = ExperimentConfig::from_json(&cfg).unwrap();
        assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn duplicate_names_rejected() {
        let cfg = G2.replace(r#"{"algorithm": "centralized", "max_iters": 300}"#, r#"{"algorithm": "grane", "max_iters": 3}"#);
        let cfg = ExperimentConfig::from_json(&cfg).unwrap();
        assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 2);
    }
}
