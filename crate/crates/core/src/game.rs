//! Convex games with scalar box-constrained actions.
//!
//! A game is described by its per-player partial gradients `∇_i J_i(x)`; the
//! algorithms never need cost values. [`QuadraticGame`] is the built-in family
//! `J_i(x) = 0.5 a_i x_i² + b_i x_i + (Σ_{j≠i} c_ij x_j) x_i`, whose regularity
//! constants are available in closed form.
//!
//! Player indices are zero-based throughout the crate.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("player index {index} out of range for a {players}-player game")]
    PlayerOutOfRange { index: usize, players: usize },
    #[error("joint action has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in joint action")]
    NonFinite,
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid game: {0}")]
    InvalidGame(String),
}

/// Action set `[lo, hi]` of a single player. Either bound may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Option<f64>; 2]", into = "[Option<f64>; 2]")]
pub struct BoxSet {
    pub lo: f64,
    pub hi: f64,
}

impl BoxSet {
    pub fn new(lo: f64, hi: f64) -> Result<Self, GameError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(GameError::InvalidRange(format!("box [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn is_compact(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

// JSON has no infinities; `null` stands for an open end.
impl TryFrom<[Option<f64>; 2]> for BoxSet {
    type Error = GameError;

    fn try_from(raw: [Option<f64>; 2]) -> Result<Self, Self::Error> {
        BoxSet::new(
            raw[0].unwrap_or(f64::NEG_INFINITY),
            raw[1].unwrap_or(f64::INFINITY),
        )
    }
}

impl From<BoxSet> for [Option<f64>; 2] {
    fn from(b: BoxSet) -> Self {
        [
            Some(b.lo).filter(|v| v.is_finite()),
            Some(b.hi).filter(|v| v.is_finite()),
        ]
    }
}

/// Regularity constants of the game mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConstants {
    /// Strong-monotonicity constant of `F` on the whole space (0 if not strongly monotone).
    pub mu_f: f64,
    /// `L_i`: Lipschitz constant of `∇_i J_i` in the player's own action.
    pub l_own: Vec<f64>,
    /// `L_{-i}`: Lipschitz constant of `∇_i J_i` in the other players' actions.
    pub l_other: Vec<f64>,
    /// Restricted strong-monotonicity constant with respect to the equilibrium.
    pub mu_r: f64,
}

impl GameConstants {
    pub fn num_players(&self) -> usize {
        self.l_own.len()
    }

    /// `L_(i) = sqrt(L_i² + L_{-i}²)` for every player.
    pub fn player_lipschitz(&self) -> impl Iterator<Item = f64> + '_ {
        self.l_own
            .iter()
            .zip(&self.l_other)
            .map(|(own, other)| own.hypot(*other))
    }

    /// `L_F = max_i sqrt(L_i² + L_{-i}²)`.
    pub fn lipschitz_f(&self) -> f64 {
        self.player_lipschitz().fold(0.0, f64::max)
    }

    /// `H = max_i L_{-i}`.
    pub fn max_l_other(&self) -> f64 {
        self.l_other.iter().copied().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.l_own.len() != self.l_other.len() {
            return Err(GameError::InvalidGame(
                "L_own and L_other have different lengths".into(),
            ));
        }
        let all = [self.mu_f, self.mu_r]
            .into_iter()
            .chain(self.l_own.iter().copied())
            .chain(self.l_other.iter().copied());
        for v in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GameError::InvalidGame(format!(
                    "game constants must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A game given by its partial-gradient oracle.
///
/// Implementations must be deterministic and defined on all of `R^n`.
pub trait Game: Sync {
    fn num_players(&self) -> usize;

    /// `∇_i J_i(x)` without argument checks; `x.len() == num_players()`.
    fn partial_gradient(&self, i: usize, x: &[f64]) -> f64;

    fn boxes(&self) -> &[BoxSet];

    fn constants(&self) -> GameConstants;
}

fn check_point(n: usize, x: &[f64]) -> Result<(), GameError> {
    if x.len() != n {
        return Err(GameError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GameError::NonFinite);
    }
    Ok(())
}

pub fn eval_partial_gradient<G: Game + ?Sized>(
    game: &G,
    i: usize,
    x: &[f64],
) -> Result<f64, GameError> {
    let n = game.num_players();
    if i >= n {
        return Err(GameError::PlayerOutOfRange {
            index: i,
            players: n,
        });
    }
    check_point(n, x)?;
    Ok(game.partial_gradient(i, x))
}

/// The game mapping `F(x) = [∇_1 J_1(x), …, ∇_n J_n(x)]`.
pub fn eval_game_mapping<G: Game + ?Sized>(game: &G, x: &[f64]) -> Result<Vec<f64>, GameError> {
    check_point(game.num_players(), x)?;
    Ok((0..game.num_players())
        .map(|i| game.partial_gradient(i, x))
        .collect())
}

/// Component-wise clamp onto the product of boxes.
pub fn project_box(boxes: &[BoxSet], v: &[f64]) -> Vec<f64> {
    v.iter().zip(boxes).map(|(x, b)| b.clamp(*x)).collect()
}

/// Game backed by an arbitrary gradient closure.
pub struct GradientGame<F> {
    gradient: F,
    boxes: Vec<BoxSet>,
    constants: GameConstants,
}

impl<F> GradientGame<F>
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    pub fn new(gradient: F, boxes: Vec<BoxSet>, constants: GameConstants) -> Result<Self, GameError> {
        constants.validate()?;
        if constants.num_players() != boxes.len() || boxes.is_empty() {
            return Err(GameError::InvalidGame(format!(
                "{} boxes but constants for {} players",
                boxes.len(),
                constants.num_players()
            )));
        }
        Ok(Self {
            gradient,
            boxes,
            constants,
        })
    }
}

impl<F> Game for GradientGame<F>
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    fn num_players(&self) -> usize {
        self.boxes.len()
    }

    fn partial_gradient(&self, i: usize, x: &[f64]) -> f64 {
        (self.gradient)(i, x)
    }

    fn boxes(&self) -> &[BoxSet] {
        &self.boxes
    }

    fn constants(&self) -> GameConstants {
        self.constants.clone()
    }
}

/// `J_i(x) = 0.5 a_i x_i² + b_i x_i + (Σ_{j≠i} c_ij x_j) x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadraticGameRepr", into = "QuadraticGameRepr")]
pub struct QuadraticGame {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<Vec<f64>>,
    boxes: Vec<BoxSet>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticGameRepr {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    boxes: Vec<BoxSet>,
}

impl TryFrom<QuadraticGameRepr> for QuadraticGame {
    type Error = GameError;

    fn try_from(r: QuadraticGameRepr) -> Result<Self, Self::Error> {
        if r.a.len() != r.n {
            return Err(GameError::InvalidGame(format!(
                "n = {} but a has {} entries",
                r.n,
                r.a.len()
            )));
        }
        QuadraticGame::new(r.a, r.b, r.c, r.boxes)
    }
}

impl From<QuadraticGame> for QuadraticGameRepr {
    fn from(q: QuadraticGame) -> Self {
        Self {
            n: q.a.len(),
            a: q.a,
            b: q.b,
            c: q.c,
            boxes: q.boxes,
        }
    }
}

impl QuadraticGame {
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<Vec<f64>>,
        boxes: Vec<BoxSet>,
    ) -> Result<Self, GameError> {
        let n = a.len();
        if n == 0 {
            return Err(GameError::InvalidGame("no players".into()));
        }
        if b.len() != n || c.len() != n || boxes.len() != n || c.iter().any(|row| row.len() != n) {
            return Err(GameError::InvalidGame(format!(
                "inconsistent dimensions for {n} players"
            )));
        }
        if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GameError::InvalidGame("a_i must be finite and > 0".into()));
        }
        if b.iter().chain(c.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(GameError::InvalidGame("non-finite coefficient".into()));
        }
        if (0..n).any(|i| c[i][i] != 0.0) {
            return Err(GameError::InvalidGame("diagonal of C must be zero".into()));
        }
        Ok(Self { a, b, c, boxes })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn coupling(&self) -> &[Vec<f64>] {
        &self.c
    }

    pub fn is_antisymmetric(&self) -> bool {
        let n = self.a.len();
        (0..n).all(|i| (0..n).all(|j| self.c[i][j] == -self.c[j][i]))
    }

    /// Cost of player `i`; used for finite-difference checks.
    pub fn cost(&self, i: usize, x: &[f64]) -> f64 {
        let coupling: f64 = self.c[i].iter().zip(x).map(|(c, xj)| c * xj).sum();
        0.5 * self.a[i] * x[i] * x[i] + self.b[i] * x[i] + coupling * x[i]
    }

    /// Jacobian of the (affine) game mapping: `Diag(a) + C`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let n = self.a.len();
        DMatrix::from_fn(n, n, |i, j| if i == j { self.a[i] } else { self.c[i][j] })
    }

    /// Smallest eigenvalue of the symmetric part of the Jacobian, unclamped.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        let j = self.jacobian();
        let sym = (&j + j.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    /// Unconstrained equilibrium `-(Diag(a) + C)^{-1} b`, if the Jacobian is invertible.
    pub fn unconstrained_equilibrium(&self) -> Option<Vec<f64>> {
        let rhs = nalgebra::DVector::from_iterator(self.b.len(), self.b.iter().map(|v| -v));
        self.jacobian()
            .lu()
            .solve(&rhs)
            .map(|x| x.iter().copied().collect())
    }
}

impl Game for QuadraticGame {
    fn num_players(&self) -> usize {
        self.a.len()
    }

    #[inline]
    fn partial_gradient(&self, i: usize, x: &[f64]) -> f64 {
        let coupling: f64 = self.c[i].iter().zip(x).map(|(c, xj)| c * xj).sum();
        self.a[i] * x[i] + self.b[i] + coupling
    }

    fn boxes(&self) -> &[BoxSet] {
        &self.boxes
    }

    fn constants(&self) -> GameConstants {
        quadratic_constants(self)
    }
}

/// Closed-form constants of a quadratic game.
///
/// `mu_f` is the smallest eigenvalue of the Jacobian's symmetric part clamped at zero.
/// Since the mapping is affine, the restricted constant with respect to the
/// equilibrium coincides with it; for antisymmetric coupling both equal `min_i a_i`.
pub fn quadratic_constants(q: &QuadraticGame) -> GameConstants {
    let l_other = q
        .c
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mu = if q.is_antisymmetric() {
        q.a.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        q.min_symmetric_eigenvalue().max(0.0)
    };
    GameConstants {
        mu_f: mu,
        l_own: q.a.clone(),
        l_other,
        mu_r: mu,
    }
}

/// Parameters for a random quadratic game. All ranges are closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_a_range")]
    pub a_range: [f64; 2],
    #[serde(default = "default_b_range")]
    pub b_range: [f64; 2],
    #[serde(default = "default_c_range")]
    pub c_range: [f64; 2],
    #[serde(default = "default_box_lo_range")]
    pub box_lo_range: [f64; 2],
    #[serde(default = "default_box_hi_range")]
    pub box_hi_range: [f64; 2],
    #[serde(default = "default_true")]
    pub antisymmetric: bool,
}

fn default_a_range() -> [f64; 2] {
    [10.0, 20.0]
}
fn default_b_range() -> [f64; 2] {
    [-10.0, 10.0]
}
fn default_c_range() -> [f64; 2] {
    [-0.3, 0.3]
}
fn default_box_lo_range() -> [f64; 2] {
    [-1.0, 0.0]
}
fn default_box_hi_range() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_true() -> bool {
    true
}

impl QuadraticSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            a_range: default_a_range(),
            b_range: default_b_range(),
            c_range: default_c_range(),
            box_lo_range: default_box_lo_range(),
            box_hi_range: default_box_hi_range(),
            antisymmetric: true,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), GameError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(GameError::InvalidRange(format!("{name} = {r:?}")));
    }
    Ok(())
}

fn sample(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Draws a quadratic game; deterministic for a fixed spec.
///
/// With `antisymmetric` set, the upper triangle of `C` is sampled and negated
/// into the lower triangle.
pub fn make_quadratic_game(spec: &QuadraticSpec) -> Result<QuadraticGame, GameError> {
    if spec.n < 2 {
        return Err(GameError::InvalidRange(format!(
            "need at least 2 players, got {}",
            spec.n
        )));
    }
    check_range("a_range", spec.a_range)?;
    check_range("b_range", spec.b_range)?;
    check_range("c_range", spec.c_range)?;
    check_range("box_lo_range", spec.box_lo_range)?;
    check_range("box_hi_range", spec.box_hi_range)?;
    if spec.a_range[0] <= 0.0 {
        return Err(GameError::InvalidRange(
            "a_range must be strictly positive".into(),
        ));
    }
    if spec.box_lo_range[1] > spec.box_hi_range[0] {
        return Err(GameError::InvalidRange(
            "box_lo_range must lie below box_hi_range".into(),
        ));
    }

    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a: Vec<f64> = (0..n).map(|_| sample(&mut rng, spec.a_range)).collect();
    let b: Vec<f64> = (0..n).map(|_| sample(&mut rng, spec.b_range)).collect();
    let mut c = vec![vec![0.0; n]; n];
    #[allow(clippy::needless_range_loop)]
    if spec.antisymmetric {
        for i in 0..n {
            for j in i + 1..n {
                let v = sample(&mut rng, spec.c_range);
                c[i][j] = v;
                c[j][i] = -v;
            }
        }
    } else {
        for (i, row) in c.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    *v = sample(&mut rng, spec.c_range);
                }
            }
        }
    }
    let boxes = (0..n)
        .map(|_| {
            let lo = sample(&mut rng, spec.box_lo_range);
            let hi = sample(&mut rng, spec.box_hi_range);
            BoxSet::new(lo, hi)
        })
        .collect::<Result<Vec<_>, _>>()?;
    QuadraticGame::new(a, b, c, boxes)
}
