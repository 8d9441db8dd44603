//! The augmented game mapping `F_a(X) = (I - W) X + Λ F̃(X)` over estimation
//! matrices, its regularity constants, and the equilibrium certificate.
//!
//! Row `i` of an estimation matrix is player `i`'s estimate of the joint action;
//! entry `(i, i)` is the player's own action. The feasible set `Ω_a` constrains
//! only the diagonal. Inner products and norms are Frobenius.

use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{BoxSet, Game, GameConstants, QuadraticGame};
use crate::network::MixingMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentedError {
    #[error("dimension mismatch: expected {expected}x{expected}, got {rows}x{cols}")]
    Dimension {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("non-finite entry in estimation matrix")]
    NonFinite,
    #[error("alpha must have one finite positive entry per player")]
    InvalidAlpha,
    #[error("the restricted path requires a uniform alpha")]
    NonUniformAlpha,
    #[error("{0}")]
    MissingConstant(String),
    #[error("estimation matrix diagonal is outside the action boxes")]
    Infeasible,
}

/// `n × n` matrix whose row `i` is player `i`'s estimate of the joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationMatrix(DMatrix<f64>);

impl Deref for EstimationMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl From<DMatrix<f64>> for EstimationMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        Self(m)
    }
}

impl EstimationMatrix {
    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Matrix whose every row equals `x`.
    pub fn consensual(x: &[f64]) -> Self {
        let n = x.len();
        Self(DMatrix::from_fn(n, n, |_, j| x[j]))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AugmentedError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(AugmentedError::Dimension {
                expected: n,
                rows: n,
                cols: bad.len(),
            });
        }
        Ok(Self(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn diagonal_vec(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        crate::matrix_rows(&self.0)
    }

    /// Largest Euclidean distance between two rows.
    pub fn consensus_gap(&self) -> f64 {
        let n = self.size();
        let mut gap = 0.0_f64;
        for i in 0..n {
            for k in i + 1..n {
                let d = (self.0.row(i) - self.0.row(k)).norm();
                gap = gap.max(d);
            }
        }
        gap
    }

    /// Orthogonal projection onto consensual matrices: each column replaced by its mean.
    pub fn consensual_part(&self) -> Self {
        let n = self.size();
        let means: Vec<f64> = self.0.column_iter().map(|c| c.mean()).collect();
        Self(DMatrix::from_fn(n, n, |_, j| means[j]))
    }

    pub fn is_feasible(&self, boxes: &[BoxSet], tol: f64) -> bool {
        boxes.len() == self.size()
            && boxes
                .iter()
                .enumerate()
                .all(|(i, b)| b.contains(self.0[(i, i)], tol))
    }
}

/// Clamps the diagonal onto the boxes; off-diagonal entries are unconstrained.
pub fn project_omega_a(boxes: &[BoxSet], x: &EstimationMatrix) -> EstimationMatrix {
    let mut out = x.clone();
    project_omega_a_in_place(boxes, &mut out.0);
    out
}

pub(crate) fn project_omega_a_in_place(boxes: &[BoxSet], x: &mut DMatrix<f64>) {
    for (i, b) in boxes.iter().enumerate() {
        x[(i, i)] = b.clamp(x[(i, i)]);
    }
}

fn check_square(n: usize, x: &DMatrix<f64>) -> Result<(), AugmentedError> {
    if x.nrows() != n || x.ncols() != n {
        return Err(AugmentedError::Dimension {
            expected: n,
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AugmentedError::NonFinite);
    }
    Ok(())
}

/// Diagonal of `F̃(X)`: component `i` is `∇_i J_i` evaluated at row `i`.
pub fn eval_tilde_f<G: Game + ?Sized>(game: &G, x: &EstimationMatrix) -> Result<Vec<f64>, AugmentedError> {
    check_square(game.num_players(), x)?;
    Ok(tilde_f(game, x))
}

fn tilde_f<G: Game + ?Sized>(game: &G, x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut row = vec![0.0; n];
    (0..n)
        .map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(i, j)];
            }
            game.partial_gradient(i, &row)
        })
        .collect()
}

/// `F_a` bound to a game, a mixing matrix and a scaling `Λ`.
pub struct AugmentedOperator<'a, G: ?Sized> {
    game: &'a G,
    i_minus_w: DMatrix<f64>,
    alpha: Vec<f64>,
    row: Vec<f64>,
}

impl<'a, G: Game + ?Sized> AugmentedOperator<'a, G> {
    pub fn new(game: &'a G, mixing: &MixingMatrix, alpha: &[f64]) -> Result<Self, AugmentedError> {
        let n = game.num_players();
        if mixing.size() != n {
            return Err(AugmentedError::Dimension {
                expected: n,
                rows: mixing.size(),
                cols: mixing.size(),
            });
        }
        if alpha.len() != n {
            return Err(AugmentedError::InvalidAlpha);
        }
        Ok(Self {
            game,
            i_minus_w: mixing.i_minus_w(),
            alpha: alpha.to_vec(),
            row: vec![0.0; n],
        })
    }

    pub fn game(&self) -> &'a G {
        self.game
    }

    pub fn size(&self) -> usize {
        self.alpha.len()
    }

    /// Writes `F_a(x)` into `out` without allocating.
    pub fn apply_into(&mut self, x: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        out.gemm(1.0, &self.i_minus_w, x, 0.0);
        let n = self.alpha.len();
        for i in 0..n {
            for j in 0..n {
                self.row[j] = x[(i, j)];
            }
            out[(i, i)] += self.alpha[i] * self.game.partial_gradient(i, &self.row);
        }
    }

    pub fn apply(&mut self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.size();
        let mut out = DMatrix::zeros(n, n);
        self.apply_into(x, &mut out);
        out
    }
}

/// `F_a(X) = (I - W) X + Λ F̃(X)`.
pub fn eval_f_a<G: Game + ?Sized>(
    game: &G,
    mixing: &MixingMatrix,
    cfg: &AugmentedConfig,
    x: &EstimationMatrix,
) -> Result<DMatrix<f64>, AugmentedError> {
    check_square(game.num_players(), x)?;
    Ok(AugmentedOperator::new(game, mixing, &cfg.alpha)?.apply(x))
}

/// Lipschitz constant of `F_a`: `max_i α_i sqrt(L_i² + L_{-i}²) + σ_max(I - W)`.
pub fn lipschitz_fa(consts: &GameConstants, mixing: &MixingMatrix, alpha: &[f64]) -> f64 {
    let scaled = consts
        .player_lipschitz()
        .zip(alpha)
        .map(|(l, a)| a * l)
        .fold(0.0, f64::max);
    scaled + mixing.sigma_max()
}

/// The two terms whose minimum is the strong-monotonicity constant of `F_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongMonotonicityTerms {
    /// `λ̃_min(I-W) - 0.5 max_i α_i (sqrt(μ_F² + L_{-i}²) - μ_F)`
    pub a1: f64,
    /// `min_i (α_i/n)(μ_F - L_{-i} sqrt(n-1))`
    pub a2: f64,
}

impl StrongMonotonicityTerms {
    pub fn constant(&self) -> Option<f64> {
        (self.a1 > 0.0 && self.a2 > 0.0).then(|| self.a1.min(self.a2))
    }
}

pub fn strong_mono_terms(consts: &GameConstants, mixing: &MixingMatrix, alpha: &[f64]) -> StrongMonotonicityTerms {
    let mu = consts.mu_f;
    let n = alpha.len() as f64;
    let penalty = alpha
        .iter()
        .zip(&consts.l_other)
        .map(|(a, h)| a * (mu.hypot(*h) - mu))
        .fold(0.0, f64::max);
    let a2 = alpha
        .iter()
        .zip(&consts.l_other)
        .map(|(a, h)| a / n * (mu - h * (n - 1.0).sqrt()))
        .fold(f64::INFINITY, f64::min);
    StrongMonotonicityTerms {
        a1: mixing.lambda_min_nonzero() - 0.5 * penalty,
        a2,
    }
}

/// Strong-monotonicity constant `min{a1, a2}`, or `None` when either term is
/// nonpositive or `μ_F = 0`.
pub fn strong_mono_fa(consts: &GameConstants, mixing: &MixingMatrix, alpha: &[f64]) -> Option<f64> {
    if consts.mu_f <= 0.0 {
        return None;
    }
    strong_mono_terms(consts, mixing, alpha).constant()
}

/// Jacobian of `F_a` for a quadratic game, acting on `X` flattened row by row.
pub fn quadratic_fa_jacobian(game: &QuadraticGame, mixing: &MixingMatrix, alpha: &[f64]) -> DMatrix<f64> {
    let n = game.num_players();
    let iw = mixing.i_minus_w();
    let c = game.coupling();
    let mut jac = DMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for l in 0..n {
            for j in 0..n {
                jac[(i * n + l, j * n + l)] += iw[(i, j)];
            }
        }
        jac[(i * n + i, i * n + i)] += alpha[i] * game.a()[i];
        for j in (0..n).filter(|j| *j != i) {
            jac[(i * n + i, i * n + j)] += alpha[i] * c[i][j];
        }
    }
    jac
}

/// Exact strong-monotonicity modulus of `F_a` for a quadratic game: the
/// smallest eigenvalue of the symmetric part of its (constant) Jacobian.
pub fn quadratic_fa_modulus(game: &QuadraticGame, mixing: &MixingMatrix, alpha: &[f64]) -> f64 {
    let jac = quadratic_fa_jacobian(game, mixing, alpha);
    let sym = (&jac + jac.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Uniform scaling, slack parameter and restricted constant for the restricted path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestrictedSetting {
    pub alpha: f64,
    pub beta: f64,
    pub b1: f64,
    pub b2: f64,
    pub mu_r_fa: f64,
}

/// `β > 0` solving `β² + 2β = μ_r / (2 n L_F)`.
pub fn remark4_beta(consts: &GameConstants) -> f64 {
    let n = consts.num_players() as f64;
    let rhs = consts.mu_r / (2.0 * n * consts.lipschitz_f());
    // (1 + rhs).sqrt() - 1, written to avoid cancellation for tiny rhs
    rhs / ((1.0 + rhs).sqrt() + 1.0)
}

/// Restricted constant `min{b1, b2}` for an arbitrary uniform `alpha` and `beta`.
pub fn restricted_mono_fa_with(
    consts: &GameConstants,
    mixing: &MixingMatrix,
    alpha: f64,
    beta: f64,
) -> RestrictedSetting {
    let n = consts.num_players() as f64;
    let lf = consts.lipschitz_f();
    let gap = mixing.lambda_min_nonzero();
    let b1 = (alpha * (consts.mu_r / n - lf * (beta * beta + 2.0 * beta))).min(gap);
    let b2 = gap / (1.0 + 1.0 / (beta * beta)) - alpha * lf;
    RestrictedSetting {
        alpha,
        beta,
        b1,
        b2,
        mu_r_fa: b1.min(b2),
    }
}

/// Remark-style automatic choice: `β` from [`remark4_beta`] and
/// `α = λ̃_min(I-W) / (2 L_F (1 + 1/β²))`. The resulting constant is positive.
pub fn restricted_mono_fa(consts: &GameConstants, mixing: &MixingMatrix) -> Result<RestrictedSetting, AugmentedError> {
    if consts.mu_r.is_nan() || consts.mu_r <= 0.0 {
        return Err(AugmentedError::MissingConstant(
            "restricted monotonicity constant mu_r must be positive".into(),
        ));
    }
    let lf = consts.lipschitz_f();
    if lf.is_nan() || lf <= 0.0 {
        return Err(AugmentedError::MissingConstant("L_F must be positive".into()));
    }
    let beta = remark4_beta(consts);
    let alpha = mixing.lambda_min_nonzero() / (2.0 * lf * (1.0 + 1.0 / (beta * beta)));
    Ok(restricted_mono_fa_with(consts, mixing, alpha, beta))
}

/// `C = 16 (n-1) λ̃_min(I-W) / μ_F`.
pub fn scaling_constant(consts: &GameConstants, mixing: &MixingMatrix) -> Option<f64> {
    let n = consts.num_players() as f64;
    (consts.mu_f > 0.0).then(|| 16.0 * (n - 1.0) * mixing.lambda_min_nonzero() / consts.mu_f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonotonicityPath {
    /// Full strong monotonicity of `F_a` (required for acceleration).
    Lemma2,
    /// Restricted strong monotonicity with respect to the equilibrium matrix.
    Lemma3,
}

impl fmt::Display for MonotonicityPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lemma2 => "lemma2",
            Self::Lemma3 => "lemma3",
        })
    }
}

/// How the per-player scalings `α_i` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaPolicy {
    Explicit { values: Vec<f64> },
    Uniform { value: f64 },
    /// `α` and `β` from the restricted-path recipe.
    Remark4Auto,
    /// `α = C / 9`.
    Recommended,
}

/// Scalings and derived constants of the augmented mapping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedConfig {
    pub alpha: Vec<f64>,
    pub path: MonotonicityPath,
    pub l_fa: f64,
    pub mu_fa: Option<f64>,
    pub mu_r_fa: Option<f64>,
    pub beta: Option<f64>,
    /// `L_Fa / μ` for the constant of the selected path.
    pub gamma: f64,
}

impl AugmentedConfig {
    /// Resolves `policy` and computes every constant; fails when the constant the
    /// selected path needs is undefined.
    pub fn new(
        consts: &GameConstants,
        mixing: &MixingMatrix,
        policy: &AlphaPolicy,
        path: MonotonicityPath,
    ) -> Result<Self, AugmentedError> {
        let n = consts.num_players();
        if mixing.size() != n {
            return Err(AugmentedError::Dimension {
                expected: n,
                rows: mixing.size(),
                cols: mixing.size(),
            });
        }
        let mut beta = None;
        let alpha = match policy {
            AlphaPolicy::Explicit { values } => values.clone(),
            AlphaPolicy::Uniform { value } => vec![*value; n],
            AlphaPolicy::Remark4Auto => {
                let s = restricted_mono_fa(consts, mixing)?;
                beta = Some(s.beta);
                vec![s.alpha; n]
            }
            AlphaPolicy::Recommended => {
                let c = scaling_constant(consts, mixing).ok_or_else(|| {
                    AugmentedError::MissingConstant("alpha = C/9 needs mu_F > 0".into())
                })?;
                vec![c / 9.0; n]
            }
        };
        if alpha.len() != n || alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(AugmentedError::InvalidAlpha);
        }

        let l_fa = lipschitz_fa(consts, mixing, &alpha);
        let mu_fa = strong_mono_fa(consts, mixing, &alpha);
        let uniform = alpha.iter().all(|a| *a == alpha[0]);
        let mu_r_fa = if uniform && consts.mu_r > 0.0 && consts.lipschitz_f() > 0.0 {
            let b = beta.unwrap_or_else(|| remark4_beta(consts));
            let s = restricted_mono_fa_with(consts, mixing, alpha[0], b);
            beta = Some(b);
            (s.mu_r_fa > 0.0).then_some(s.mu_r_fa)
        } else {
            None
        };

        let mu = match path {
            MonotonicityPath::Lemma2 => mu_fa.ok_or_else(|| {
                AugmentedError::MissingConstant(
                    "mu_Fa undefined for this game and alpha; use lemma3".into(),
                )
            })?,
            MonotonicityPath::Lemma3 => {
                if !uniform {
                    return Err(AugmentedError::NonUniformAlpha);
                }
                mu_r_fa.ok_or_else(|| {
                    AugmentedError::MissingConstant(
                        "mu_r_Fa is not positive for this alpha".into(),
                    )
                })?
            }
        };
        Ok(Self {
            alpha,
            path,
            l_fa,
            mu_fa,
            mu_r_fa,
            beta,
            gamma: l_fa / mu,
        })
    }

    /// Monotonicity constant of the selected path.
    pub fn mu(&self) -> f64 {
        match self.path {
            MonotonicityPath::Lemma2 => self.mu_fa,
            MonotonicityPath::Lemma3 => self.mu_r_fa,
        }
        .expect("constructor guarantees the selected constant")
    }

    /// Step `μ / L_Fa²`.
    pub fn auto_step(&self) -> f64 {
        self.mu() / (self.l_fa * self.l_fa)
    }
}

/// Condition-number report with the `α = C/9` recommendation and its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub alpha_recommended: Option<f64>,
    /// `2n L_F/μ_F + (9/8) λ_max(I-W)/λ̃_min(I-W)`.
    pub bound: Option<f64>,
    /// Same bound with the `n/(n-1)` factor on the graph term that the
    /// derivation from the two-term maximum produces.
    pub bound_with_size_factor: Option<f64>,
    /// `H ≤ 0.5 μ_F / sqrt(n-1)`, uniform `α = C/9`, strong-monotonicity path.
    pub hypotheses_hold: bool,
    /// Whether `gamma ≤ bound`; only meaningful when the hypotheses hold.
    pub bound_holds: Option<bool>,
}

pub fn condition_numbers(cfg: &AugmentedConfig, consts: &GameConstants, mixing: &MixingMatrix) -> ConditionReport {
    let n = consts.num_players() as f64;
    let c = scaling_constant(consts, mixing);
    let graph_ratio = mixing.lambda_max() / mixing.lambda_min_nonzero();
    let bound = c.map(|_| 2.0 * n * consts.lipschitz_f() / consts.mu_f + 9.0 / 8.0 * graph_ratio);
    let bound_with_size_factor =
        c.map(|_| 2.0 * n * consts.lipschitz_f() / consts.mu_f + 9.0 / 8.0 * n / (n - 1.0) * graph_ratio);
    let hypotheses_hold = match c {
        Some(c) if n > 1.0 => {
            let target = c / 9.0;
            consts.max_l_other() <= 0.5 * consts.mu_f / (n - 1.0).sqrt()
                && cfg.path == MonotonicityPath::Lemma2
                && cfg
                    .alpha
                    .iter()
                    .all(|a| (a - target).abs() <= 1e-12 * target.abs())
        }
        _ => false,
    };
    ConditionReport {
        gamma: cfg.gamma,
        c,
        alpha_recommended: c.map(|c| c / 9.0),
        bound,
        bound_with_size_factor,
        hypotheses_hold,
        bound_holds: if hypotheses_hold {
            bound.map(|b| cfg.gamma <= b)
        } else {
            None
        },
    }
}

/// JSON-facing summary of the augmented constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub alpha: Vec<f64>,
    pub path: MonotonicityPath,
    #[serde(rename = "L_Fa")]
    pub l_fa: f64,
    #[serde(rename = "mu_Fa", skip_serializing_if = "Option::is_none")]
    pub mu_fa: Option<f64>,
    #[serde(rename = "mu_r_Fa", skip_serializing_if = "Option::is_none")]
    pub mu_r_fa: Option<f64>,
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub alpha_recommended: Option<f64>,
    pub bound: Option<f64>,
    pub bound_with_size_factor: Option<f64>,
    pub bound_holds: Option<bool>,
}

impl ConstantsReport {
    pub fn new(cfg: &AugmentedConfig, consts: &GameConstants, mixing: &MixingMatrix) -> Self {
        let cond = condition_numbers(cfg, consts, mixing);
        Self {
            alpha: cfg.alpha.clone(),
            path: cfg.path,
            l_fa: cfg.l_fa,
            mu_fa: cfg.mu_fa,
            mu_r_fa: cfg.mu_r_fa,
            gamma: cfg.gamma,
            c: cond.c,
            alpha_recommended: cond.alpha_recommended,
            bound: cond.bound,
            bound_with_size_factor: cond.bound_with_size_factor,
            bound_holds: cond.bound_holds,
        }
    }
}

/// Options for the sampled certificates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
    /// Off-diagonal entries (and unbounded diagonal entries) are drawn from `[-radius, radius]`.
    pub radius: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            tol: 1e-6,
            seed: 0,
            radius: 10.0,
        }
    }
}

/// Uniform sample from `Ω_a ∩ [-radius, radius]^{n×n}`.
pub fn sample_omega_a(rng: &mut impl Rng, boxes: &[BoxSet], radius: f64) -> EstimationMatrix {
    let n = boxes.len();
    let mut x = DMatrix::from_fn(n, n, |_, _| rng.random_range(-radius..=radius));
    for (i, b) in boxes.iter().enumerate() {
        let lo = b.lo.max(-radius);
        let hi = b.hi.min(radius);
        x[(i, i)] = if lo < hi {
            rng.random_range(lo..=hi)
        } else {
            b.clamp(0.0)
        };
    }
    EstimationMatrix(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub consensus_gap: f64,
    pub consensus_ok: bool,
    /// Smallest `⟨F_a(X*), X - X*⟩` over the samples.
    pub min_vi_value: f64,
    pub vi_ok: bool,
    /// Smallest `∇_i J_i(x*_(i)) (x_i - x*_i)` over the box endpoints.
    pub min_stationarity: f64,
    pub stationarity_ok: bool,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.consensus_ok && self.vi_ok && self.stationarity_ok
    }
}

/// Checks that `x_star` is a Nash-equilibrium matrix: consensus, the variational
/// inequality on sampled points of `Ω_a`, and per-player stationarity at the box ends.
pub fn ne_certificate<G: Game + ?Sized>(
    game: &G,
    mixing: &MixingMatrix,
    cfg: &AugmentedConfig,
    x_star: &EstimationMatrix,
    opts: SamplingOptions,
) -> Result<CertificateReport, AugmentedError> {
    check_square(game.num_players(), x_star)?;
    let boxes = game.boxes();
    if !x_star.is_feasible(boxes, opts.tol) {
        return Err(AugmentedError::Infeasible);
    }
    let tol = opts.tol;

    let consensus_gap = x_star.consensus_gap();

    let mut op = AugmentedOperator::new(game, mixing, &cfg.alpha)?;
    let f_star = op.apply(x_star);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut min_vi_value = f64::INFINITY;
    for _ in 0..opts.samples {
        let x = sample_omega_a(&mut rng, boxes, opts.radius);
        let v = f_star.dot(&(x.as_matrix() - x_star.as_matrix()));
        min_vi_value = min_vi_value.min(v);
    }

    let grads = tilde_f(game, x_star);
    let mut min_stationarity = f64::INFINITY;
    for (i, (g, b)) in grads.iter().zip(boxes).enumerate() {
        let xi = x_star[(i, i)];
        for end in [b.lo, b.hi] {
            let v = if end.is_finite() {
                g * (end - xi)
            } else {
                // Unbounded side: the gradient must not point into it.
                g * end.signum()
            };
            min_stationarity = min_stationarity.min(v);
        }
    }

    Ok(CertificateReport {
        consensus_gap,
        consensus_ok: consensus_gap <= tol,
        min_vi_value,
        vi_ok: min_vi_value >= -tol,
        min_stationarity,
        stationarity_ok: min_stationarity >= -tol,
    })
}

/// Violation counts of the sampled constant inequalities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantCertificate {
    pub samples: usize,
    pub lipschitz_violations: usize,
    /// Largest `‖F_a(X) - F_a(Y)‖ / ‖X - Y‖` seen.
    pub max_lipschitz_ratio: f64,
    pub strong_violations: Option<usize>,
    /// Smallest `⟨F_a(X) - F_a(Y), X - Y⟩ / ‖X - Y‖²` seen.
    pub min_strong_ratio: f64,
    pub restricted_violations: Option<usize>,
    /// Smallest `⟨F_a(X) - F_a(X*), X - X*⟩ / ‖X - X*‖²` seen.
    pub min_restricted_ratio: f64,
}

/// Samples pairs in `Ω_a` and counts violations (beyond `opts.tol`) of the
/// Lipschitz inequality with `L_Fa`, strong monotonicity with `μ_Fa` and
/// restricted monotonicity against `x_star` with `μ_{r,Fa}`.
pub fn certify_constants<G: Game + ?Sized>(
    game: &G,
    mixing: &MixingMatrix,
    cfg: &AugmentedConfig,
    x_star: &EstimationMatrix,
    opts: SamplingOptions,
) -> Result<ConstantCertificate, AugmentedError> {
    check_square(game.num_players(), x_star)?;
    let boxes = game.boxes();
    let mut op = AugmentedOperator::new(game, mixing, &cfg.alpha)?;
    let f_star = op.apply(x_star);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut lip = 0;
    let mut strong = 0;
    let mut restricted = 0;
    let mut max_lipschitz_ratio = 0.0_f64;
    let mut min_strong_ratio = f64::INFINITY;
    let mut min_restricted_ratio = f64::INFINITY;
    for _ in 0..opts.samples {
        let x = sample_omega_a(&mut rng, boxes, opts.radius);
        let y = sample_omega_a(&mut rng, boxes, opts.radius);
        let fx = op.apply(&x);
        let fy = op.apply(&y);

        let d = x.as_matrix() - y.as_matrix();
        let df = &fx - &fy;
        let (dn, dfn) = (d.norm(), df.norm());
        if dfn > cfg.l_fa * dn + opts.tol {
            lip += 1;
        }
        let inner = df.dot(&d);
        if dn > 0.0 {
            max_lipschitz_ratio = max_lipschitz_ratio.max(dfn / dn);
            min_strong_ratio = min_strong_ratio.min(inner / (dn * dn));
        }
        if let Some(mu) = cfg.mu_fa {
            if inner < mu * dn * dn - opts.tol {
                strong += 1;
            }
        }

        let e = x.as_matrix() - x_star.as_matrix();
        let inner_r = (&fx - &f_star).dot(&e);
        let en2 = e.norm_squared();
        if en2 > 0.0 {
            min_restricted_ratio = min_restricted_ratio.min(inner_r / en2);
        }
        if let Some(mu) = cfg.mu_r_fa {
            if inner_r < mu * en2 - opts.tol {
                restricted += 1;
            }
        }
    }
    Ok(ConstantCertificate {
        samples: opts.samples,
        lipschitz_violations: lip,
        max_lipschitz_ratio,
        strong_violations: cfg.mu_fa.map(|_| strong),
        min_strong_ratio,
        restricted_violations: cfg.mu_r_fa.map(|_| restricted),
        min_restricted_ratio,
    })
}
