//! Concavity diagnostics for the weighted game: the structural functions
//! `f`, `g`, `k`, the scalar certification statistic `psi`, and the
//! symmetrized weighted Hessian with an eigenvalue oracle.
//!
//! A game is diagonally strictly concave for weights `r > 0` when the
//! symmetrized matrix `H_r(z)` is negative definite at every feasible `z`;
//! that in turn guarantees the Nash equilibrium is unique. The statistic
//! `psi` gives a sufficient scalar test: `sup psi < 1` over the reachable
//! allocation set implies negative definiteness everywhere.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GameError, Result};
use crate::game::{AgentSpec, BidProfile, GameSpec, PaymentSpec};

/// Eigenvalues above this are treated as failing strict negative
/// definiteness; separates "definite" from "semidefinite" at f64 precision.
pub const EIGEN_TOL: f64 = -1e-12;
/// Per-axis lattice resolution for the exhaustive search at small n.
const LATTICE_RESOLUTION: usize = 64;
/// Sample count for the randomized search at larger n.
const SAMPLE_COUNT: usize = 10_000;
/// Grid size used to lower-bound the payment curvature of custom payments.
const CURVATURE_GRID: usize = 256;
/// Fixed stream for the randomized search so certificates are reproducible.
const SAMPLE_SEED: u64 = 0x5d5c_0001;
/// Slack allowed on the allocation-set upper bound when validating inputs.
const SIMPLEX_TOL: f64 = 1e-12;

fn check_unit_interval(x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(GameError::AllocationOutOfRange(x));
    }
    Ok(())
}

/// `f(x) = (1-x)^2 V''(x) - 2(1-x) V'(x)`; for `V = a ln(x)` this is
/// `-a(1-x^2)/x^2`.
pub fn eval_f(agent: &AgentSpec, x: f64) -> Result<f64> {
    check_unit_interval(x)?;
    let u = agent.utility();
    Ok((1.0 - x).powi(2) * u.second_deriv(x) - 2.0 * (1.0 - x) * u.deriv(x))
}

/// `g(x) = -x(1-x) V''(x) + (2x-1) V'(x)`; for `V = a ln(x)` this is the
/// constant `a`.
pub fn eval_g(agent: &AgentSpec, x: f64) -> Result<f64> {
    check_unit_interval(x)?;
    let u = agent.utility();
    Ok(-x * (1.0 - x) * u.second_deriv(x) + (2.0 * x - 1.0) * u.deriv(x))
}

/// Lower bound on the payment curvature `p''` over the agent's action
/// interval: 0 for the identity payment, a 256-point grid minimum otherwise.
pub fn payment_curvature_floor(agent: &AgentSpec) -> f64 {
    match agent.payment() {
        PaymentSpec::Identity => 0.0,
        custom => {
            let (lo, hi) = (agent.min_bid(), agent.budget());
            let mut floor = f64::INFINITY;
            for j in 0..CURVATURE_GRID {
                let z = if CURVATURE_GRID == 1 {
                    lo
                } else {
                    lo + (hi - lo) * j as f64 / (CURVATURE_GRID - 1) as f64
                };
                floor = floor.min(custom.second_deriv(z));
            }
            floor
        }
    }
}

/// Per-game evaluators for `f`, `g`, and `k = g - f + delta^2 * L`, where
/// `L` is the payment curvature floor of each agent.
pub struct StructuralFns<'g> {
    game: &'g GameSpec,
    curvature_floor: Vec<f64>,
}

impl<'g> StructuralFns<'g> {
    pub fn new(game: &'g GameSpec) -> Self {
        let curvature_floor = game.agents().iter().map(payment_curvature_floor).collect();
        Self {
            game,
            curvature_floor,
        }
    }

    pub fn f(&self, i: usize, x: f64) -> Result<f64> {
        eval_f(self.game.agent(i)?, x)
    }

    pub fn g(&self, i: usize, x: f64) -> Result<f64> {
        eval_g(self.game.agent(i)?, x)
    }

    /// `k(x) = g(x) - f(x) + delta^2 * L`; strictly positive on (0,1) for
    /// any increasing concave utility. Log/identity closed form: `a/x^2`.
    pub fn k(&self, i: usize, x: f64) -> Result<f64> {
        let agent = self.game.agent(i)?;
        let l = self.curvature_floor[i];
        Ok(eval_g(agent, x)? - eval_f(agent, x)? + self.game.delta().powi(2) * l)
    }

    pub fn curvature_floor(&self, i: usize) -> Result<f64> {
        self.game.agent(i)?;
        Ok(self.curvature_floor[i])
    }
}

fn check_weights(game: &GameSpec, r: &[f64]) -> Result<()> {
    if r.len() != game.n() {
        return Err(GameError::DimensionMismatch {
            expected: game.n(),
            actual: r.len(),
        });
    }
    if let Some(bad) = r.iter().find(|&&w| !(w > 0.0) || !w.is_finite()) {
        return Err(GameError::InvalidParameter(format!(
            "weights must be finite and positive, got {bad}"
        )));
    }
    Ok(())
}

/// Largest reachable allocation total, `C/(C+delta)` with `C` the sum of
/// budgets.
fn allocation_cap(game: &GameSpec) -> f64 {
    let c = game.total_budget();
    c / (c + game.delta())
}

/// The certification statistic
/// `psi(x) = (sum_i r_i g_i(x_i)^2 / k_i(x_i)) * (sum_i 1/(r_i k_i(x_i)))`.
///
/// `x` must lie in the reachable allocation set: every `x_i > 0` and
/// `sum(x) <= C/(C+delta)`.
pub fn eval_psi(game: &GameSpec, r: &[f64], x: &[f64]) -> Result<f64> {
    check_weights(game, r)?;
    if x.len() != game.n() {
        return Err(GameError::DimensionMismatch {
            expected: game.n(),
            actual: x.len(),
        });
    }
    if let Some(&bad) = x.iter().find(|&&xi| !(xi > 0.0)) {
        return Err(GameError::OutsideSimplex(format!(
            "allocation components must be positive, got {bad}"
        )));
    }
    let total: f64 = x.iter().sum();
    let cap = allocation_cap(game);
    if total > cap + SIMPLEX_TOL {
        return Err(GameError::OutsideSimplex(format!(
            "allocation total {total} exceeds the reachable cap {cap}"
        )));
    }
    let fns = StructuralFns::new(game);
    let mut weighted = 0.0;
    let mut inverse = 0.0;
    for i in 0..game.n() {
        let g = fns.g(i, x[i])?;
        let k = fns.k(i, x[i])?;
        weighted += r[i] * g * g / k;
        inverse += 1.0 / (r[i] * k);
    }
    Ok(weighted * inverse)
}

/// How a certificate's `psi_sup` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertifyMethod {
    /// Closed-form bound `(C/(C+delta))^4`, valid for all-log games with
    /// weights `1/a_i`; a proof when it certifies.
    AnalyticLog,
    /// Maximum over sampled allocations; an estimate, never a proof.
    GridSearch,
}

/// Outcome of the scalar concavity test.
#[derive(Clone, Debug)]
pub struct SdscCertificate {
    /// Strictly positive agent weights used in the test.
    pub r: Vec<f64>,
    /// Estimated (or bounded) supremum of `psi` over reachable allocations.
    pub psi_sup: f64,
    /// True iff `psi_sup < 1`.
    pub certified: bool,
    pub method: CertifyMethod,
    /// Per-axis lattice resolution (n <= 4) or sample count (n > 4) for
    /// `GridSearch`; `None` for the analytic route.
    pub grid_resolution: Option<usize>,
}

fn default_weights(game: &GameSpec) -> Vec<f64> {
    game.agents()
        .iter()
        .map(|agent| match agent.utility().log_weight() {
            Some(a) => 1.0 / a,
            None => 1.0,
        })
        .collect()
}

/// Lattice sweep of the solid allocation set for small n: integer grids
/// `j >= 1`, `sum(j) <= resolution`, mapped to `x = cap * j / resolution`.
fn lattice_max(game: &GameSpec, r: &[f64], cap: f64) -> f64 {
    let n = game.n();
    let res = LATTICE_RESOLUTION;
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![1usize; n];
    loop {
        let total: usize = idx.iter().sum();
        if total <= res {
            let x: Vec<f64> = idx.iter().map(|&j| cap * j as f64 / res as f64).collect();
            if x.iter().all(|&xi| xi > 0.0 && xi < 1.0 - 1e-9) {
                if let Ok(v) = eval_psi(game, r, &x) {
                    best = best.max(v);
                }
            }
        }
        // Odometer-style advance over {1..res}^n.
        let mut pos = 0;
        loop {
            idx[pos] += 1;
            if idx[pos] <= res {
                break;
            }
            idx[pos] = 1;
            pos += 1;
            if pos == n {
                return best;
            }
        }
    }
}

/// Randomized sweep for larger n: uniform samples of the solid allocation
/// set plus their rescalings onto the outer face `sum(x) = cap`.
fn sampled_max(game: &GameSpec, r: &[f64], cap: f64) -> f64 {
    let n = game.n();
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..SAMPLE_COUNT {
        // n+1 unit exponentials, normalized: first n coordinates are
        // uniform over the solid simplex scaled to `cap`.
        let draws: Vec<f64> = (0..=n)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = draws.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let interior: Vec<f64> = draws[..n].iter().map(|&e| cap * e / total).collect();
        let face_total: f64 = draws[..n].iter().sum();
        let face: Vec<f64> = draws[..n].iter().map(|&e| cap * e / face_total).collect();
        for x in [interior, face] {
            if x.iter().all(|&xi| xi > 0.0 && xi < 1.0 - 1e-9) {
                if let Ok(v) = eval_psi(game, r, &x) {
                    best = best.max(v);
                }
            }
        }
    }
    best
}

/// Runs the scalar concavity test and reports a certificate.
///
/// For an all-log game with `weights` omitted, the weights default to
/// `1/a_i` and `psi_sup` is the closed-form bound `(C/(C+delta))^4`
/// (`AnalyticLog`). If that bound is not strictly below 1 (e.g. `delta = 0`),
/// or for custom utilities or caller-supplied weights, `psi` is maximized
/// over sampled interior allocations instead (`GridSearch`). A certificate
/// with `certified = false` is a valid negative result, not an error.
pub fn certify_sdsc(game: &GameSpec, weights: Option<&[f64]>) -> Result<SdscCertificate> {
    let all_log = game.agents().iter().all(|a| a.utility().is_log());
    let r = match weights {
        Some(w) => {
            check_weights(game, w)?;
            w.to_vec()
        }
        None => default_weights(game),
    };
    if all_log && weights.is_none() {
        let bound = allocation_cap(game).powi(4);
        if bound < 1.0 {
            return Ok(SdscCertificate {
                r,
                psi_sup: bound,
                certified: true,
                method: CertifyMethod::AnalyticLog,
                grid_resolution: None,
            });
        }
    }
    let cap = allocation_cap(game);
    let (psi_sup, grid_resolution) = if game.n() <= 4 {
        (lattice_max(game, &r, cap), LATTICE_RESOLUTION)
    } else {
        (sampled_max(game, &r, cap), SAMPLE_COUNT)
    };
    Ok(SdscCertificate {
        certified: psi_sup < 1.0,
        r,
        psi_sup,
        method: CertifyMethod::GridSearch,
        grid_resolution: Some(grid_resolution),
    })
}

/// Symmetrized weighted Hessian `H_r(z)`: diagonal
/// `2 r_i (f_i(x_i)/m^2 - p_i''(z_i))`, off-diagonal
/// `(r_i g_i(x_i) + r_j g_j(x_j))/m^2`, with `m = sum(z) + delta` and
/// `x = z/m`. Negative definiteness of `H_r` at every feasible profile is
/// the diagonal strict concavity condition.
pub fn build_h_matrix(game: &GameSpec, r: &[f64], profile: &BidProfile) -> Result<DMatrix<f64>> {
    check_weights(game, r)?;
    game.validate_profile(profile)?;
    let n = game.n();
    let m = game.aggregate(profile)?;
    let x = game.allocate(profile)?;
    let fns = StructuralFns::new(game);
    let m2 = m * m;
    let g: Vec<f64> = (0..n)
        .map(|i| fns.g(i, x[i]))
        .collect::<Result<_>>()?;
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let curv = game.agents()[i].payment().second_deriv(profile[i]);
        h[(i, i)] = 2.0 * r[i] * (fns.f(i, x[i])? / m2 - curv);
        for j in 0..i {
            let off = (r[i] * g[i] + r[j] * g[j]) / m2;
            h[(i, j)] = off;
            h[(j, i)] = off;
        }
    }
    Ok(h)
}

/// True iff the symmetric matrix has all eigenvalues below `tol`.
pub fn negative_definite_oracle_with_tol(matrix: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if matrix.nrows() != matrix.ncols() {
        return Err(GameError::NonSquareMatrix {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        });
    }
    if matrix.nrows() == 0 {
        return Ok(true);
    }
    let eigen = SymmetricEigen::new(matrix.clone());
    Ok(eigen.eigenvalues.iter().all(|&lambda| lambda < tol))
}

/// True iff the symmetric matrix is strictly negative definite
/// (max eigenvalue below [`EIGEN_TOL`]).
pub fn negative_definite_oracle(matrix: &DMatrix<f64>) -> Result<bool> {
    negative_definite_oracle_with_tol(matrix, EIGEN_TOL)
}

// ─── tests ─────────────────────────────────────────────────────────────────
