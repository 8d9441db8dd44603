//! GRANE, Acc-GRANE and the centralized projected-gradient oracle, with
//! per-iteration convergence traces.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmented::{
    project_omega_a_in_place, AlphaPolicy, AugmentedConfig, AugmentedError, AugmentedOperator, EstimationMatrix,
    MonotonicityPath,
};
use crate::game::{BoxSet, Game, GameConstants};
use crate::network::MixingMatrix;

/// Window and growth factor of the divergence guard.
pub const DIVERGENCE_WINDOW: usize = 100;
pub const DIVERGENCE_FACTOR: f64 = 10.0;

const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error(transparent)]
    Augmented(#[from] AugmentedError),
    #[error("initial point is outside the feasible set")]
    Infeasible,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("acceleration needs the strong-monotonicity constant mu_Fa (lemma2 path)")]
    MissingStrongMonotonicity,
    #[error("diverged at iteration {k} (residual {residual:e})")]
    Divergence { k: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Grane,
    AccGrane,
    Centralized,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Grane => "grane",
            Self::AccGrane => "acc-grane",
            Self::Centralized => "centralized",
        })
    }
}

/// `"auto"` or a positive number in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "StepRepr", into = "StepRepr")]
pub enum StepSize {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StepRepr {
    Fixed(f64),
    Named(String),
}

impl TryFrom<StepRepr> for StepSize {
    type Error = String;

    fn try_from(r: StepRepr) -> Result<Self, String> {
        match r {
            StepRepr::Fixed(v) => Ok(Self::Fixed(v)),
            StepRepr::Named(s) if s == "auto" => Ok(Self::Auto),
            StepRepr::Named(s) => Err(format!("step must be \"auto\" or a number, got \"{s}\"")),
        }
    }
}

impl From<StepSize> for StepRepr {
    fn from(s: StepSize) -> Self {
        match s {
            StepSize::Auto => Self::Named("auto".into()),
            StepSize::Fixed(v) => Self::Fixed(v),
        }
    }
}

fn default_alpha() -> AlphaPolicy {
    AlphaPolicy::Uniform { value: 1.0 }
}

fn default_path() -> MonotonicityPath {
    MonotonicityPath::Lemma2
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Label used for output file names; defaults to the algorithm name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub step: StepSize,
    pub max_iters: usize,
    #[serde(default)]
    pub stop_tol: f64,
    #[serde(default = "default_alpha")]
    pub alpha: AlphaPolicy,
    #[serde(default = "default_path")]
    pub path: MonotonicityPath,
    /// Record every `stride`-th iteration (plus the first and last).
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, max_iters: usize) -> Self {
        Self {
            name: None,
            algorithm,
            step: StepSize::Auto,
            max_iters,
            stop_tol: 0.0,
            alpha: default_alpha(),
            path: default_path(),
            stride: 1,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.algorithm.to_string())
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iters == 0 {
            return Err(SolverError::Config("max_iters must be positive".into()));
        }
        if !(self.stop_tol >= 0.0 && self.stop_tol.is_finite()) {
            return Err(SolverError::Config("stop_tol must be a finite value >= 0".into()));
        }
        if let StepSize::Fixed(v) = self.step {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::Config("step must be positive".into()));
            }
        }
        if self.stride == 0 {
            return Err(SolverError::Config("stride must be positive".into()));
        }
        if self.algorithm == Algorithm::AccGrane {
            if self.path != MonotonicityPath::Lemma2 {
                return Err(SolverError::MissingStrongMonotonicity);
            }
            if self.step != StepSize::Auto {
                return Err(SolverError::Config(
                    "acc-grane derives its steps from L_Fa and mu_Fa; step must be auto".into(),
                ));
            }
        }
        Ok(())
    }

    /// Augmented constants for this config's alpha policy and path.
    pub fn resolve(&self, consts: &GameConstants, mixing: &MixingMatrix) -> Result<AugmentedConfig, SolverError> {
        Ok(AugmentedConfig::new(consts, mixing, &self.alpha, self.path)?)
    }

    /// `μ/L²` for the selected path, or the fixed value.
    pub fn resolve_step(&self, cfg: &AugmentedConfig) -> f64 {
        match self.step {
            StepSize::Auto => cfg.auto_step(),
            StepSize::Fixed(v) => v,
        }
    }
}

/// One trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub k: usize,
    /// `‖X - X_ref‖`
    pub fro_residual: f64,
    /// `‖X - X_ref‖² / ‖X - X0‖²`
    pub relative_error: f64,
    pub consensus_gap: f64,
    /// `‖X - P(X - F_a(X))‖`
    pub vi_residual: f64,
}

/// `num / den` with `0/0 = 0` and `x/0 = ∞` for `x > 0`.
pub fn guarded_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn fro_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn vi_fixed_point_residual(boxes: &[BoxSet], x: &DMatrix<f64>, fx: &DMatrix<f64>) -> f64 {
    let mut sq = 0.0;
    for ((i, j), v) in x.iter().enumerate().map(|(idx, v)| ((idx % x.nrows(), idx / x.nrows()), v)) {
        let mut t = v - fx[(i, j)];
        if i == j {
            t = boxes[i].clamp(t);
        }
        sq += (v - t) * (v - t);
    }
    sq.sqrt()
}

fn record_for(
    k: usize,
    boxes: &[BoxSet],
    x: &DMatrix<f64>,
    fx: &DMatrix<f64>,
    x_ref: &DMatrix<f64>,
    x0: &DMatrix<f64>,
) -> ResidualRecord {
    let fro_residual = fro_distance(x, x_ref);
    let from_start = fro_distance(x, x0);
    ResidualRecord {
        k,
        fro_residual,
        relative_error: guarded_ratio(fro_residual * fro_residual, from_start * from_start),
        consensus_gap: EstimationMatrix::from(x.clone()).consensus_gap(),
        vi_residual: vi_fixed_point_residual(boxes, x, fx),
    }
}

/// Residuals of `x` against a reference matrix and the starting point.
pub fn residual_metrics<G: Game + ?Sized>(
    game: &G,
    mixing: &MixingMatrix,
    cfg: &AugmentedConfig,
    x: &EstimationMatrix,
    x_ref: &EstimationMatrix,
    x0: &EstimationMatrix,
) -> Result<ResidualRecord, SolverError> {
    let n = game.num_players();
    for m in [x, x_ref, x0] {
        if m.nrows() != n || m.ncols() != n {
            return Err(SolverError::Dimension {
                expected: n,
                got: m.nrows(),
            });
        }
    }
    let fx = AugmentedOperator::new(game, mixing, &cfg.alpha)?.apply(x);
    Ok(record_for(0, game.boxes(), x, &fx, x_ref, x0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIters,
    StopTol,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMeta {
    pub algorithm: Algorithm,
    pub step: f64,
    pub gamma: f64,
    pub seed: Option<u64>,
    pub config: SolverConfig,
    /// Excluded from every deterministic output.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub meta: TraceMeta,
    pub records: Vec<ResidualRecord>,
    /// `‖X0 - X_ref‖`, the normalizer of the plotted residual.
    pub initial_distance: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

pub const TRACE_CSV_HEADER: &str = "k,fro_residual,relative_error,consensus_gap,vi_residual";

impl ConvergenceTrace {
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.k, r.fro_residual, r.relative_error, r.consensus_gap, r.vi_residual
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// `(k, ‖X^k - X_ref‖ / ‖X0 - X_ref‖)` for every record.
    pub fn normalized_residuals(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .map(|r| (r.k, guarded_ratio(r.fro_residual, self.initial_distance)))
            .collect()
    }

    /// First recorded `k` whose normalized residual is at most `threshold`.
    pub fn iterations_to(&self, threshold: f64) -> Option<usize> {
        self.normalized_residuals()
            .into_iter()
            .find(|(_, v)| *v <= threshold)
            .map(|(k, _)| k)
    }

    pub fn last(&self) -> &ResidualRecord {
        self.records.last().expect("a trace always holds the initial record")
    }
}

/// Least-squares slope of `ln v` against `k`, skipping nonpositive values.
pub fn fit_log_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .map(|(k, v)| (*k as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    (den > 0.0).then(|| num / den)
}

/// Errors when the tracked value is non-finite, or has grown tenfold over the
/// window and exceeds `max(initial, 1e-8)`.
struct DivergenceGuard {
    window: VecDeque<f64>,
    floor: f64,
}

impl DivergenceGuard {
    fn new(initial: f64) -> Self {
        let mut window = VecDeque::with_capacity(DIVERGENCE_WINDOW + 1);
        window.push_back(initial);
        Self {
            window,
            floor: initial.max(1e-8),
        }
    }

    fn push(&mut self, k: usize, value: f64) -> Result<(), SolverError> {
        if !value.is_finite() {
            return Err(SolverError::Divergence { k, residual: value });
        }
        self.window.push_back(value);
        if self.window.len() > DIVERGENCE_WINDOW + 1 {
            self.window.pop_front();
        }
        if self.window.len() == DIVERGENCE_WINDOW + 1 {
            let old = self.window[0];
            if value > DIVERGENCE_FACTOR * old && value > self.floor {
                return Err(SolverError::Divergence { k, residual: value });
            }
        }
        Ok(())
    }
}

fn check_start<G: Game + ?Sized>(game: &G, x0: &EstimationMatrix, x_ref: &EstimationMatrix) -> Result<(), SolverError> {
    let n = game.num_players();
    for m in [x0, x_ref] {
        if m.nrows() != n || m.ncols() != n {
            return Err(SolverError::Dimension {
                expected: n,
                got: m.nrows(),
            });
        }
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(AugmentedError::NonFinite.into());
    }
    if !x0.is_feasible(game.boxes(), FEASIBILITY_TOL) {
        return Err(SolverError::Infeasible);
    }
    Ok(())
}

/// One GRANE step `P_{Ω_a}(X - λ F_a(X))` given `F_a(X)`, written into `out`.
pub fn grane_step_into(boxes: &[BoxSet], step: f64, x: &DMatrix<f64>, fx: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    out.copy_from(x);
    out.zip_apply(fx, |o, f| *o -= step * f);
    project_omega_a_in_place(boxes, out);
}

/// Per-player form of one GRANE step. Player `i` mixes each column `l` of its
/// row with its neighbours' estimates, `x_il - λ(x_il - Σ_j w_ij x_jl)`, and
/// additionally moves its own action along `-λ α_i ∇_i J_i` before projecting.
pub fn grane_rowwise_step<G: Game + ?Sized>(
    game: &G,
    mixing: &MixingMatrix,
    alpha: &[f64],
    step: f64,
    x: &EstimationMatrix,
) -> EstimationMatrix {
    let n = game.num_players();
    let w = mixing.weights();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = x.row_vec(i);
        for l in 0..n {
            let mixed: f64 = (0..n).map(|j| w[(i, j)] * x[(j, l)]).sum();
            let mut v = x[(i, l)] - step * (x[(i, l)] - mixed);
            if l == i {
                v = game.boxes()[i].clamp(v - step * alpha[i] * game.partial_gradient(i, &row));
            }
            out[(i, l)] = v;
        }
    }
    out.into()
}

/// Runs GRANE from `x0`, tracing residuals against `x_ref`.
pub fn grane_run<G: Game + ?Sized>(
    game: &G,
    mixing: &MixingMatrix,
    cfg: &AugmentedConfig,
    sc: &SolverConfig,
    x0: &EstimationMatrix,
    x_ref: &EstimationMatrix,
) -> Result<(EstimationMatrix, ConvergenceTrace), SolverError> {
    sc.validate()?;
    check_start(game, x0, x_ref)?;
    let started = Instant::now();
    let step = sc.resolve_step(cfg);
    let boxes = game.boxes();
    let n = game.num_players();
    let mut op = AugmentedOperator::new(game, mixing, &cfg.alpha)?;

    let (x_start, x_target) = (x0.as_matrix(), x_ref.as_matrix());
    let mut x = x_start.clone();
    let mut fx = DMatrix::zeros(n, n);
    let mut next = DMatrix::zeros(n, n);
    let mut records = Vec::new();
    let initial_distance = fro_distance(&x, x_target);
    let mut guard = DivergenceGuard::new(initial_distance);
    let mut stop_reason = StopReason::MaxIters;
    let mut k = 0;
    loop {
        op.apply_into(&x, &mut fx);
        let last = k == sc.max_iters || stop_reason == StopReason::StopTol;
        if k % sc.stride == 0 || last {
            records.push(record_for(k, boxes, &x, &fx, x_target, x_start));
        }
        if last {
            break;
        }
        grane_step_into(boxes, step, &x, &fx, &mut next);
        let moved = fro_distance(&next, &x);
        std::mem::swap(&mut x, &mut next);
        k += 1;
        guard.push(k, fro_distance(&x, x_target))?;
        if moved <= sc.stop_tol {
            stop_reason = StopReason::StopTol;
        }
    }

    let trace = ConvergenceTrace {
        meta: TraceMeta {
            algorithm: Algorithm::Grane,
            step,
            gamma: cfg.gamma,
            seed: None,
            config: sc.clone(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
        records,
        initial_distance,
        iterations: k,
        stop_reason,
    };
    Ok((x.into(), trace))
}

/// `(λ^t, S^t)` for `t = 0..len` with `λ^0 = 1`, `S^t = Σ_{s≤t} λ^s`, `λ^{t+1} = S^t/γ`.
pub fn acc_weight_schedule(gamma: f64, len: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(len);
    let (mut lambda, mut sum) = (1.0, 1.0);
    for _ in 0..len {
        out.push((lambda, sum));
        lambda = sum / gamma;
        sum += lambda;
    }
    out
}

/// State of Acc-GRANE. The weighted sums are kept divided by `S^k`: with
/// `λ^{k+1} = S^k/γ` each new term enters with weight `1/(γ+1)`, which avoids
/// the geometric growth of `S^k`.
pub struct AccGraneState<'a, G: ?Sized> {
    op: AugmentedOperator<'a, G>,
    boxes: &'a [BoxSet],
    inv_l: f64,
    inv_mu: f64,
    theta: f64,
    /// `A^k / S^k`, the output `ỹ^k`.
    avg_y: DMatrix<f64>,
    /// `B^k / S^k`.
    avg_b: DMatrix<f64>,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    scratch: DMatrix<f64>,
    k: usize,
}

impl<'a, G: Game + ?Sized> AccGraneState<'a, G> {
    /// Uses `cfg.l_fa`, `cfg.mu_fa` and `cfg.gamma`.
    pub fn new(game: &'a G, mixing: &MixingMatrix, cfg: &AugmentedConfig, y0: &EstimationMatrix) -> Result<Self, SolverError> {
        let mu = cfg.mu_fa.ok_or(SolverError::MissingStrongMonotonicity)?;
        let n = game.num_players();
        let mut op = AugmentedOperator::new(game, mixing, &cfg.alpha)?;
        let y = y0.as_matrix().clone();
        let mut fy = DMatrix::zeros(n, n);
        op.apply_into(&y, &mut fy);
        let avg_b = &y - fy * (1.0 / mu);
        let mut state = Self {
            op,
            boxes: game.boxes(),
            inv_l: 1.0 / cfg.l_fa,
            inv_mu: 1.0 / mu,
            theta: 1.0 / (cfg.gamma + 1.0),
            avg_y: y.clone(),
            avg_b,
            x: DMatrix::zeros(n, n),
            scratch: DMatrix::zeros(n, n),
            y,
            k: 0,
        };
        state.update_x();
        Ok(state)
    }

    fn update_x(&mut self) {
        self.x.copy_from(&self.avg_b);
        project_omega_a_in_place(self.boxes, &mut self.x);
    }

    /// `ỹ^k`
    pub fn output(&self) -> &DMatrix<f64> {
        &self.avg_y
    }

    /// `X^k`
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `Y^k`
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    /// Advances from `k` to `k+1`.
    pub fn advance(&mut self) {
        let inv_l = self.inv_l;
        let Self {
            op,
            boxes,
            x,
            y,
            scratch,
            ..
        } = self;
        op.apply_into(x, scratch);
        grane_step_into(boxes, inv_l, x, scratch, y);
        op.apply_into(y, scratch);

        let theta = self.theta;
        let inv_mu = self.inv_mu;
        self.avg_y.zip_apply(&self.y, |a, y| *a = (1.0 - theta) * *a + theta * y);
        self.avg_b.zip_zip_apply(&self.y, &self.scratch, |b, y, f| {
            *b = (1.0 - theta) * *b + theta * (y - inv_mu * f)
        });
        self.k += 1;
        self.update_x();
    }

    fn eval_output(&mut self, out: &mut DMatrix<f64>) {
        self.op.apply_into(&self.avg_y, out);
    }
}

/// Runs Acc-GRANE from `y0`; the trace and the result are the averaged output `ỹ^k`.
pub fn acc_grane_run<G: Game + ?Sized>(
    game: &G,
    mixing: &MixingMatrix,
    cfg: &AugmentedConfig,
    sc: &SolverConfig,
    y0: &EstimationMatrix,
    x_ref: &EstimationMatrix,
) -> Result<(EstimationMatrix, ConvergenceTrace), SolverError> {
    if cfg.mu_fa.is_none() || cfg.path != MonotonicityPath::Lemma2 {
        return Err(SolverError::MissingStrongMonotonicity);
    }
    sc.validate()?;
    check_start(game, y0, x_ref)?;
    let started = Instant::now();
    let boxes = game.boxes();
    let n = game.num_players();
    let (y_start, x_target) = (y0.as_matrix(), x_ref.as_matrix());
    let mut state = AccGraneState::new(game, mixing, cfg, y0)?;
    let mut f_out = DMatrix::zeros(n, n);
    let mut prev = y_start.clone();
    let initial_distance = fro_distance(y_start, x_target);
    let mut guard = DivergenceGuard::new(initial_distance);
    let mut records = Vec::new();
    let mut stop_reason = StopReason::MaxIters;
    let mut k = 0;
    loop {
        let last = k == sc.max_iters || stop_reason == StopReason::StopTol;
        if k % sc.stride == 0 || last {
            state.eval_output(&mut f_out);
            records.push(record_for(k, boxes, state.output(), &f_out, x_target, y_start));
        }
        if last {
            break;
        }
        prev.copy_from(state.output());
        state.advance();
        k += 1;
        guard.push(k, fro_distance(state.output(), x_target))?;
        if fro_distance(state.output(), &prev) <= sc.stop_tol {
            stop_reason = StopReason::StopTol;
        }
    }

    let trace = ConvergenceTrace {
        meta: TraceMeta {
            algorithm: Algorithm::AccGrane,
            step: 1.0 / cfg.l_fa,
            gamma: cfg.gamma,
            seed: None,
            config: sc.clone(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
        records,
        initial_distance,
        iterations: k,
        stop_reason,
    };
    Ok((state.output().clone().into(), trace))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralizedResult {
    pub x: Vec<f64>,
    pub step: f64,
    pub iterations: usize,
    /// Whether the last step norm fell to `tol`.
    pub converged: bool,
}

/// `μ_F / (max_i sqrt(L_i² + L_{-i}²) · √n)²`.
pub fn centralized_auto_step(consts: &GameConstants) -> Option<f64> {
    let l = consts.lipschitz_f() * (consts.num_players() as f64).sqrt();
    (consts.mu_f > 0.0 && l > 0.0).then(|| consts.mu_f / (l * l))
}

fn resolve_centralized_step<G: Game + ?Sized>(game: &G, step: Option<f64>) -> Result<f64, SolverError> {
    match step {
        Some(s) if s > 0.0 && s.is_finite() => Ok(s),
        Some(_) => Err(SolverError::Config("step must be positive".into())),
        None => centralized_auto_step(&game.constants())
            .ok_or_else(|| SolverError::Config("auto step needs mu_F > 0".into())),
    }
}

fn check_vector_start<G: Game + ?Sized>(game: &G, x0: &[f64]) -> Result<(), SolverError> {
    let n = game.num_players();
    if x0.len() != n {
        return Err(SolverError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    if x0.iter().zip(game.boxes()).any(|(v, b)| !b.contains(*v, FEASIBILITY_TOL)) {
        return Err(SolverError::Infeasible);
    }
    Ok(())
}

/// Runs `x ← P_Ω(x - λ F(x))`, calling `visit(k, x^k, F(x^k))` before each
/// step and once more at the end. Returns the iterate, the step count and
/// whether the step norm fell to `tol`. The guard watches the step norm.
fn centralized_iterate<G: Game + ?Sized>(
    game: &G,
    step: f64,
    max_iters: usize,
    tol: f64,
    x0: &[f64],
    mut visit: impl FnMut(usize, &[f64], &[f64]),
) -> Result<(Vec<f64>, usize, bool), SolverError> {
    let n = game.num_players();
    let boxes = game.boxes();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut guard: Option<DivergenceGuard> = None;
    let mut k = 0;
    let mut converged = false;
    loop {
        for (i, g) in grad.iter_mut().enumerate() {
            *g = game.partial_gradient(i, &x);
        }
        visit(k, &x, &grad);
        if k == max_iters || converged {
            break;
        }
        let mut moved = 0.0;
        for i in 0..n {
            let v = boxes[i].clamp(x[i] - step * grad[i]);
            moved += (v - x[i]) * (v - x[i]);
            x[i] = v;
        }
        let moved = f64::sqrt(moved);
        k += 1;
        match guard.as_mut() {
            Some(g) => g.push(k, moved)?,
            None if !moved.is_finite() => return Err(SolverError::Divergence { k, residual: moved }),
            None => guard = Some(DivergenceGuard::new(moved)),
        }
        converged = moved <= tol;
    }
    Ok((x, k, converged))
}

/// Projected gradient play `x ← P_Ω(x - λ F(x))` on the full game mapping;
/// stops when the step norm is at most `tol`.
pub fn centralized_gradient_play<G: Game + ?Sized>(
    game: &G,
    step: Option<f64>,
    max_iters: usize,
    tol: f64,
    x0: &[f64],
) -> Result<CentralizedResult, SolverError> {
    check_vector_start(game, x0)?;
    let step = resolve_centralized_step(game, step)?;
    let (x, iterations, converged) = centralized_iterate(game, step, max_iters, tol, x0, |_, _, _| {})?;
    Ok(CentralizedResult {
        x,
        step,
        iterations,
        converged,
    })
}

/// Centralized play traced like the distributed solvers: `x^k` is compared as
/// the consensual matrix, so `fro_residual = √n ‖x^k - x_ref‖`, the consensus
/// gap is zero and the fixed-point residual is `‖x - P_Ω(x - F(x))‖`.
pub fn centralized_run<G: Game + ?Sized>(
    game: &G,
    sc: &SolverConfig,
    x0: &[f64],
    x_ref: &[f64],
) -> Result<(Vec<f64>, ConvergenceTrace), SolverError> {
    sc.validate()?;
    check_vector_start(game, x0)?;
    if x_ref.len() != x0.len() {
        return Err(SolverError::Dimension {
            expected: x0.len(),
            got: x_ref.len(),
        });
    }
    let started = Instant::now();
    let step = resolve_centralized_step(
        game,
        match sc.step {
            StepSize::Auto => None,
            StepSize::Fixed(v) => Some(v),
        },
    )?;
    let boxes = game.boxes();
    let scale = (x0.len() as f64).sqrt();
    let dist = |a: &[f64], b: &[f64]| scale * a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let initial_distance = dist(x0, x_ref);
    let mut records = Vec::new();
    let mut pending: Option<ResidualRecord> = None;
    let (x, iterations, converged) = centralized_iterate(game, step, sc.max_iters, sc.stop_tol, x0, |k, x, grad| {
        let fro_residual = dist(x, x_ref);
        let from_start = dist(x, x0);
        let vi = x
            .iter()
            .zip(grad)
            .zip(boxes)
            .map(|((v, g), b)| (v - b.clamp(v - g)).powi(2))
            .sum::<f64>()
            .sqrt();
        let rec = ResidualRecord {
            k,
            fro_residual,
            relative_error: guarded_ratio(fro_residual * fro_residual, from_start * from_start),
            consensus_gap: 0.0,
            vi_residual: vi,
        };
        if k % sc.stride == 0 {
            records.push(rec);
            pending = None;
        } else {
            pending = Some(rec);
        }
    })?;
    records.extend(pending);
    let trace = ConvergenceTrace {
        meta: TraceMeta {
            algorithm: Algorithm::Centralized,
            step,
            gamma: f64::NAN,
            seed: None,
            config: sc.clone(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
        records,
        initial_distance,
        iterations,
        stop_reason: if converged {
            StopReason::StopTol
        } else {
            StopReason::MaxIters
        },
    };
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{quadratic_constants, QuadraticGame};
    use crate::network::{mixing_from_laplacian, Graph};

    fn g2() -> QuadraticGame {
        QuadraticGame::new(
            vec![2.0, 2.0],
            vec![-2.0, 0.0],
            vec![vec![0.0, 1.0], vec![-1.0, 0.0]],
            vec![BoxSet::new(-10.0, 10.0).unwrap(); 2],
        )
        .unwrap()
    }

    fn setup() -> (QuadraticGame, MixingMatrix, AugmentedConfig) {
        let g = g2();
        let m = mixing_from_laplacian(&Graph::path(2).unwrap(), None).unwrap();
        let cfg = SolverConfig::new(Algorithm::Grane, 1)
            .resolve(&quadratic_constants(&g), &m)
            .unwrap();
        (g, m, cfg)
    }

    fn ne() -> EstimationMatrix {
        EstimationMatrix::consensual(&[0.8, 0.4])
    }

    #[test]
    fn first_grane_step_by_hand() {
        let (g, m, cfg) = setup();
        let sc = SolverConfig::new(Algorithm::Grane, 1);
        let step = sc.resolve_step(&cfg);
        assert!((step - 0.0477457514).abs() < 1e-9);
        let (x1, trace) = grane_run(&g, &m, &cfg, &sc, &EstimationMatrix::zeros(2), &ne()).unwrap();
        // F_a(0) = Diag(-2, 0), so X¹ = Diag(2λ, 0).
        assert!((x1[(0, 0)] - 2.0 * step).abs() < 1e-15);
        assert!((x1[(0, 0)] - 0.095492).abs() < 1e-6);
        assert_eq!((x1[(0, 1)], x1[(1, 0)], x1[(1, 1)]), (0.0, 0.0, 0.0));
        assert_eq!(trace.records.iter().map(|r| r.k).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let (g, m, cfg) = setup();
        let sc = SolverConfig::new(Algorithm::Grane, 50);
        let (x, trace) = grane_run(&g, &m, &cfg, &sc, &ne(), &ne()).unwrap();
        assert!((x.as_matrix() - ne().as_matrix()).amax() < 1e-15);
        assert!(trace.records.iter().all(|r| r.fro_residual < 1e-15));

        let sc = SolverConfig::new(Algorithm::AccGrane, 50);
        let (y, trace) = acc_grane_run(&g, &m, &cfg, &sc, &ne(), &ne()).unwrap();
        assert!((y.as_matrix() - ne().as_matrix()).amax() < 1e-14);
        assert!(trace.records.iter().all(|r| r.fro_residual < 1e-14));
    }

    #[test]
    fn grane_converges_on_g2() {
        let (g, m, cfg) = setup();
        let sc = SolverConfig::new(Algorithm::Grane, 2000);
        let x0 = EstimationMatrix::zeros(2);
        let (x, _) = grane_run(&g, &m, &cfg, &sc, &x0, &ne()).unwrap();
        let d0 = (x0.as_matrix() - ne().as_matrix()).norm();
        assert!((x.as_matrix() - ne().as_matrix()).norm() <= 1e-6 * d0);
    }

    #[test]
    fn stop_tol_and_stride() {
        let (g, m, cfg) = setup();
        let mut sc = SolverConfig::new(Algorithm::Grane, 5000);
        sc.stop_tol = 1e-9;
        sc.stride = 7;
        let (_, trace) = grane_run(&g, &m, &cfg, &sc, &EstimationMatrix::zeros(2), &ne()).unwrap();
        assert_eq!(trace.stop_reason, StopReason::StopTol);
        assert!(trace.iterations < 5000);
        let ks: Vec<usize> = trace.records.iter().map(|r| r.k).collect();
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*ks.last().unwrap(), trace.iterations);
        assert!(ks[..ks.len() - 1].iter().all(|k| k % 7 == 0));
    }

    #[test]
    fn weight_schedule() {
        let s = acc_weight_schedule(2.0, 4);
        assert_eq!(s, vec![(1.0, 1.0), (0.5, 1.5), (0.75, 2.25), (1.125, 3.375)]);
    }

    #[test]
    fn normalized_averages_match_raw_sums() {
        let (g, m, cfg) = setup();
        let y0 = EstimationMatrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]).unwrap();
        let mut state = AccGraneState::new(&g, &m, &cfg, &y0).unwrap();
        let sched = acc_weight_schedule(cfg.gamma, 30);
        let mut op = AugmentedOperator::new(&g, &m, &cfg.alpha).unwrap();
        let mu = cfg.mu_fa.unwrap();
        let mut a = y0.as_matrix().clone();
        let mut b = y0.as_matrix() - op.apply(y0.as_matrix()) / mu;
        for (lambda, sum) in sched.iter().skip(1) {
            state.advance();
            let y = state.y().clone();
            a += &y * *lambda;
            b += (&y - op.apply(&y) / mu) * *lambda;
            assert!((state.output() - &a / *sum).amax() < 1e-12);
            let mut x = &b / *sum;
            project_omega_a_in_place(g.boxes(), &mut x);
            assert!((state.x() - x).amax() < 1e-12);
        }
    }

    #[test]
    fn degenerate_acceleration_is_gradient_play() {
        let (g, m, mut cfg) = setup();
        cfg.gamma = 1.0;
        cfg.mu_fa = Some(cfg.l_fa);
        let y0 = EstimationMatrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]).unwrap();
        let state0 = AccGraneState::new(&g, &m, &cfg, &y0).unwrap();
        let mut op = AugmentedOperator::new(&g, &m, &cfg.alpha).unwrap();
        let step = 1.0 / cfg.l_fa;
        let mut expected_x = DMatrix::zeros(2, 2);
        grane_step_into(g.boxes(), step, y0.as_matrix(), &op.apply(y0.as_matrix()), &mut expected_x);
        assert!((state0.x() - &expected_x).amax() < 1e-15);
        let mut state = state0;
        state.advance();
        let mut expected_y = DMatrix::zeros(2, 2);
        grane_step_into(g.boxes(), step, &expected_x, &op.apply(&expected_x), &mut expected_y);
        assert!((state.y() - expected_y).amax() < 1e-15);
    }

    #[test]
    fn acceleration_beats_grane_on_g2() {
        let (g, m, cfg) = setup();
        let x0 = EstimationMatrix::zeros(2);
        let (_, tg) = grane_run(&g, &m, &cfg, &SolverConfig::new(Algorithm::Grane, 3000), &x0, &ne()).unwrap();
        let (_, ta) = acc_grane_run(&g, &m, &cfg, &SolverConfig::new(Algorithm::AccGrane, 3000), &x0, &ne()).unwrap();
        let kg = tg.iterations_to(1e-6).unwrap();
        let ka = ta.iterations_to(1e-6).unwrap();
        assert!(ka < kg, "acc {ka} vs grane {kg}");
    }

    #[test]
    fn acc_requires_strong_monotonicity() {
        let (g, m, mut cfg) = setup();
        cfg.mu_fa = None;
        let sc = SolverConfig::new(Algorithm::AccGrane, 10);
        assert_eq!(
            acc_grane_run(&g, &m, &cfg, &sc, &ne(), &ne()).unwrap_err(),
            SolverError::MissingStrongMonotonicity
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, m, cfg) = setup();
        let sc = SolverConfig::new(Algorithm::Grane, 10);
        let outside = EstimationMatrix::consensual(&[20.0, 0.0]);
        assert_eq!(grane_run(&g, &m, &cfg, &sc, &outside, &ne()).unwrap_err(), SolverError::Infeasible);
        let mut bad = sc.clone();
        bad.step = StepSize::Fixed(-1.0);
        assert!(matches!(grane_run(&g, &m, &cfg, &bad, &ne(), &ne()), Err(SolverError::Config(_))));
        bad.step = StepSize::Auto;
        bad.max_iters = 0;
        assert!(matches!(bad.validate(), Err(SolverError::Config(_))));
    }

    #[test]
    fn divergence_guard_trips_on_large_step() {
        let (g, m, cfg) = setup();
        let mut sc = SolverConfig::new(Algorithm::Grane, 10_000);
        sc.step = StepSize::Fixed(5.0);
        let mut unbounded = g.clone();
        unbounded = QuadraticGame::new(
            unbounded.a().to_vec(),
            unbounded.b().to_vec(),
            unbounded.coupling().to_vec(),
            vec![BoxSet::unbounded(); 2],
        )
        .unwrap();
        let err = grane_run(&unbounded, &m, &cfg, &sc, &EstimationMatrix::zeros(2), &ne()).unwrap_err();
        assert!(matches!(err, SolverError::Divergence { .. }));
    }

    #[test]
    fn rowwise_matches_matrix_form() {
        let (g, m, cfg) = setup();
        let x = EstimationMatrix::from_rows(&[vec![12.0, -2.0], vec![3.0, -11.0]]).unwrap();
        let step = 0.3;
        let row = grane_rowwise_step(&g, &m, &cfg.alpha, step, &x);
        let mut op = AugmentedOperator::new(&g, &m, &cfg.alpha).unwrap();
        let mut mat = DMatrix::zeros(2, 2);
        grane_step_into(g.boxes(), step, &x, &op.apply(&x), &mut mat);
        assert!((row.as_matrix() - mat).amax() < 1e-12);
    }

    #[test]
    fn centralized_examples() {
        let g = g2();
        let r = centralized_gradient_play(&g, None, 100_000, 1e-15, &[0.0, 0.0]).unwrap();
        assert!(r.converged);
        assert!((r.step - 0.2).abs() < 1e-15);
        assert!((r.x[0] - 0.8).abs() < 1e-10 && (r.x[1] - 0.4).abs() < 1e-10);

        let r = centralized_gradient_play(&g, None, 10, 0.0, &[0.8, 0.4]).unwrap();
        assert!((r.x[0] - 0.8).abs() < 1e-15 && (r.x[1] - 0.4).abs() < 1e-15);

        let decoupled = QuadraticGame::new(
            vec![2.0, 4.0],
            vec![-6.0, 2.0],
            vec![vec![0.0; 2]; 2],
            vec![BoxSet::new(-1.0, 1.0).unwrap(); 2],
        )
        .unwrap();
        let r = centralized_gradient_play(&decoupled, None, 100_000, 1e-15, &[0.0, 0.0]).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn centralized_trace_matches_plain_play() {
        let g = g2();
        let mut sc = SolverConfig::new(Algorithm::Centralized, 300);
        sc.stride = 40;
        let (x, trace) = centralized_run(&g, &sc, &[0.0, 0.0], &[0.8, 0.4]).unwrap();
        let plain = centralized_gradient_play(&g, None, 300, 0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(x, plain.x);
        // An exact fixed point is reached, so both stop early at the same step.
        assert_eq!(trace.iterations, plain.iterations);
        assert_eq!(trace.last().k, trace.iterations);
        assert!((trace.initial_distance - 1.6f64.sqrt()).abs() < 1e-15);
        assert!(trace.last().fro_residual < 1e-10);
        assert!(trace.last().vi_residual < 1e-10);
    }

    #[test]
    fn residual_metric_examples() {
        let (g, m, cfg) = setup();
        let x = EstimationMatrix::from_rows(&[vec![0.8, 0.4], vec![0.7, 0.4]]).unwrap();
        let r = residual_metrics(&g, &m, &cfg, &x, &x, &ne()).unwrap();
        assert_eq!(r.fro_residual, 0.0);
        assert!((r.consensus_gap - 0.1).abs() < 1e-15);
        assert_eq!(r.relative_error, 0.0);

        let x0 = EstimationMatrix::zeros(2);
        let r = residual_metrics(&g, &m, &cfg, &x0, &ne(), &x0).unwrap();
        assert_eq!(r.relative_error, f64::INFINITY);
        assert_eq!(r.consensus_gap, 0.0);

        let r = residual_metrics(&g, &m, &cfg, &ne(), &ne(), &x0).unwrap();
        assert!(r.vi_residual < 1e-15);
    }

    #[test]
    fn csv_format() {
        let (g, m, cfg) = setup();
        let sc = SolverConfig::new(Algorithm::Grane, 2);
        let (_, trace) = grane_run(&g, &m, &cfg, &sc, &EstimationMatrix::zeros(2), &ne()).unwrap();
        let csv = trace.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first.len(), 5);
        assert_eq!(first[0], "0");
        let mantissa = first[1].split('e').next().unwrap();
        assert_eq!(mantissa.len(), 18, "17 significant digits: {}", first[1]);
        assert!((first[1].parse::<f64>().unwrap() - 1.6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn solver_config_json() {
        let sc: SolverConfig = serde_json::from_str(
            r#"{"algorithm":"acc-grane","step":"auto","max_iters":10,"alpha":{"policy":"recommended"}}"#,
        )
        .unwrap();
        assert_eq!(sc.algorithm, Algorithm::AccGrane);
        assert_eq!(sc.alpha, AlphaPolicy::Recommended);
        let sc: SolverConfig = serde_json::from_str(r#"{"algorithm":"grane","step":0.1,"max_iters":10}"#).unwrap();
        assert_eq!(sc.step, StepSize::Fixed(0.1));
        assert!(serde_json::from_str::<SolverConfig>(r#"{"algorithm":"grane","step":"big","max_iters":1}"#).is_err());
        assert!(serde_json::from_str::<SolverConfig>(r#"{"algorithm":"grane","max_iters":1,"bogus":1}"#).is_err());
        let back: SolverConfig = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn log_slope_fit() {
        let pts: Vec<(usize, f64)> = (0..50).map(|k| (k, (-0.1 * k as f64).exp() * 3.0)).collect();
        assert!((fit_log_slope(&pts).unwrap() + 0.1).abs() < 1e-12);
        assert_eq!(fit_log_slope(&[(0, 1.0)]), None);
    }
}
