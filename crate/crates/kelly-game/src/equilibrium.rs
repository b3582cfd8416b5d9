//! Nash equilibrium computation via best-response fixed-point iteration,
//! plus the contraction diagnostics that predict when plain iteration
//! converges linearly.

use crate::error::{GameError, Result};
use crate::game::{BidProfile, GameSpec};

/// Consecutive non-improving iterations tolerated before damping kicks in.
const STALL_WINDOW: usize = 50;

/// How an [`NeSolution`] was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    /// Plain iteration `z <- BR(z)`.
    BrFixedPoint,
    /// Averaged iteration `z <- (1-lambda) z + lambda BR(z)` after a stall.
    DampedBrFixedPoint,
    /// Quadratic-root closed form for symmetric log/identity games.
    SymmetricClosedForm,
}

/// A computed equilibrium candidate with its own fixed-point diagnostics.
#[derive(Clone, Debug)]
pub struct NeSolution {
    pub profile: BidProfile,
    /// `||BR(profile) - profile||_2` at the returned profile.
    pub residual: f64,
    /// Best-response applications performed.
    pub iterations: usize,
    pub method: SolveMethod,
    /// False when the iteration budget ran out before meeting tolerance;
    /// the best iterate seen is returned in that case.
    pub converged: bool,
    /// Residual of the iterate entering each iteration, in order.
    pub residual_history: Vec<f64>,
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// Distance to fixed point under the joint best-response map,
/// `||BR(z) - z||_2`. Zero exactly at a Nash equilibrium.
pub fn ne_residual(game: &GameSpec, profile: &BidProfile) -> Result<f64> {
    game.validate_profile(profile)?;
    let br = game.best_response_profile(profile)?;
    Ok(l2_distance(br.bids(), profile.bids()))
}

/// Iterates the joint best response from the midpoint profile
/// `(min_bid + budget)/2` until the fixed-point residual drops below
/// `tolerance`.
pub fn solve_ne(game: &GameSpec, tolerance: f64, max_iter: usize) -> Result<NeSolution> {
    let midpoints: Vec<f64> = game
        .agents()
        .iter()
        .map(|a| 0.5 * (a.min_bid() + a.budget()))
        .collect();
    solve_ne_from(game, BidProfile::new(midpoints), tolerance, max_iter)
}

/// [`solve_ne`] from a caller-chosen feasible starting profile.
///
/// Plain iteration is used first; if the best residual seen fails to
/// improve for 50 consecutive iterations, the update switches to the
/// damped form `z <- (1-lambda) z + lambda BR(z)` with `lambda = 0.5`,
/// halving `lambda` on each further stall. On budget exhaustion the best
/// iterate is returned with `converged = false`.
pub fn solve_ne_from(
    game: &GameSpec,
    start: BidProfile,
    tolerance: f64,
    max_iter: usize,
) -> Result<NeSolution> {
    game.validate_profile(&start)?;
    let mut z = start;
    let mut method = SolveMethod::BrFixedPoint;
    let mut lambda = 1.0;
    let mut best_profile = z.clone();
    let mut best_residual = f64::INFINITY;
    let mut since_improvement = 0usize;
    let mut history = Vec::new();

    for iteration in 0..max_iter {
        let br = game.best_response_profile(&z)?;
        let residual = l2_distance(br.bids(), z.bids());
        history.push(residual);
        if residual < best_residual {
            best_residual = residual;
            best_profile = z.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if residual < tolerance {
            return Ok(NeSolution {
                profile: z,
                residual,
                iterations: iteration,
                method,
                converged: true,
                residual_history: history,
            });
        }
        if since_improvement >= STALL_WINDOW {
            lambda = if method == SolveMethod::BrFixedPoint {
                0.5
            } else {
                0.5 * lambda
            };
            method = SolveMethod::DampedBrFixedPoint;
            since_improvement = 0;
        }
        let blended: Vec<f64> = z
            .bids()
            .iter()
            .zip(br.bids())
            .map(|(&old, &new)| (1.0 - lambda) * old + lambda * new)
            .collect();
        z = BidProfile::new(blended);
    }

    if !best_residual.is_finite() {
        // Zero-iteration budget: report the start as-is.
        best_residual = ne_residual(game, &best_profile)?;
    }
    Ok(NeSolution {
        profile: best_profile,
        residual: best_residual,
        iterations: max_iter,
        method,
        converged: false,
        residual_history: history,
    })
}

fn common_log_parameters(game: &GameSpec) -> Result<(f64, f64, f64)> {
    let first = &game.agents()[0];
    let a = first.utility().log_weight().ok_or_else(|| {
        GameError::Unsupported("closed-form equilibrium needs log utilities".into())
    })?;
    for agent in game.agents() {
        if !agent.is_log_identity() {
            return Err(GameError::Unsupported(
                "closed-form equilibrium needs log utilities with identity payments".into(),
            ));
        }
        let same = agent.utility().log_weight() == Some(a)
            && agent.min_bid() == first.min_bid()
            && agent.budget() == first.budget();
        if !same {
            return Err(GameError::Unsupported(
                "closed-form equilibrium needs identical agents".into(),
            ));
        }
    }
    Ok((a, first.min_bid(), first.budget()))
}

/// Closed-form symmetric equilibrium of an identical-agent log/identity
/// game: the positive root of `n z^2 - ((n-1)a - delta) z - a delta = 0`,
/// clipped to the action interval.
pub fn symmetric_log_ne(game: &GameSpec) -> Result<NeSolution> {
    let (a, min_bid, budget) = common_log_parameters(game)?;
    let n = game.n() as f64;
    let delta = game.delta();
    let b = (n - 1.0) * a - delta;
    let root = (b + (b * b + 4.0 * n * a * delta).sqrt()) / (2.0 * n);
    let z = root.clamp(min_bid, budget);
    let profile = BidProfile::new(vec![z; game.n()]);
    let residual = ne_residual(game, &profile)?;
    Ok(NeSolution {
        profile,
        residual,
        iterations: 0,
        method: SolveMethod::SymmetricClosedForm,
        converged: true,
        residual_history: Vec::new(),
    })
}

/// Common-floor threshold for guaranteed best-response contraction:
/// `(1/(n-1)) * ((sqrt(n)-1)^2 / sqrt(n) * max_i a_i - delta)`.
/// Plain iteration provably contracts when every agent's `min_bid`
/// exceeds this value.
pub fn contraction_threshold(game: &GameSpec) -> Result<f64> {
    if game.n() < 2 {
        return Err(GameError::InvalidParameter(
            "contraction threshold needs at least two agents".into(),
        ));
    }
    let mut max_a = f64::NEG_INFINITY;
    for agent in game.agents() {
        if !agent.is_log_identity() {
            return Err(GameError::Unsupported(
                "contraction threshold needs log utilities with identity payments".into(),
            ));
        }
        max_a = max_a.max(agent.utility().log_weight().expect("log utility"));
    }
    let n = game.n() as f64;
    let shrink = (n.sqrt() - 1.0).powi(2) / n.sqrt();
    Ok((shrink * max_a - game.delta()) / (n - 1.0))
}

fn zeta(a: f64, s: f64) -> f64 {
    -0.5 + (s + 2.0 * a) / (2.0 * (s * s + 4.0 * a * s).sqrt())
}

/// Infinity norm of the unclipped best-response Jacobian at `profile`:
/// `max_i (n-1) * zeta_i(s_i)` with
/// `zeta_i(s) = -1/2 + (s + 2 a_i) / (2 sqrt(s^2 + 4 a_i s))`.
/// A value below 1 makes the joint best response a contraction there.
pub fn br_jacobian_norm(game: &GameSpec, profile: &BidProfile) -> Result<f64> {
    game.validate_profile(profile)?;
    if game.n() < 2 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for (i, agent) in game.agents().iter().enumerate() {
        let a = agent.utility().log_weight().ok_or_else(|| {
            GameError::Unsupported("best-response Jacobian norm needs log utilities".into())
        })?;
        if !agent.payment().is_identity() {
            return Err(GameError::Unsupported(
                "best-response Jacobian norm needs identity payments".into(),
            ));
        }
        let s = game.opponent_aggregate(i, profile)?;
        worst = worst.max((game.n() as f64 - 1.0) * zeta(a, s));
    }
    Ok(worst)
}

// ─── tests ─────────────────────────────────────────────────────────────────
