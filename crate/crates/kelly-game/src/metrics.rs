//! Post-run measurements: hindsight regret, the weighted first-order gap
//! with its dual-averaging bound, payoff normalization, and convergence
//! detection.
//!
//! Everything here recomputes payoffs from the recorded bids where
//! correctness matters (regret, gap), so additive payoff offsets recorded
//! by a scenario cannot distort comparator-based quantities.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Trajectory;
use crate::error::{GameError, Result};
use crate::game::{BidProfile, GameSpec};
use crate::numeric::golden_section_max;

/// Fixed-bid comparator grid resolution for regret.
const REGRET_GRID: usize = 2048;
/// Bracket tolerance of the local refinement around the grid argmax.
const REGRET_REFINE_TOL: f64 = 1e-8;
/// Random-profile sample count for payoff extremes of very large games.
const EXTREMES_SAMPLES: usize = 10_000;
/// Fixed stream for those samples, keeping extremes reproducible.
const EXTREMES_SEED: u64 = 0x9e77_0002;
/// Corner enumeration is exponential in n; above this we sample instead.
const EXTREMES_CORNER_LIMIT: usize = 16;

/// Hindsight regret of one agent over a finished run: best cumulative
/// payoff of any fixed bid against the realized opponent aggregates, minus
/// the realized cumulative payoff.
///
/// The comparator is maximized over a 2048-point grid of the action
/// interval, the interval endpoints, and every realized bid, then refined
/// by golden-section around the best candidate (the cumulative payoff is
/// concave in the fixed bid, so this pins the optimum). Realized payoffs
/// are recomputed from bids, not read from the trajectory.
pub fn regret(game: &GameSpec, agent_index: usize, trajectory: &Trajectory) -> Result<f64> {
    let agent = game.agent(agent_index)?;
    if trajectory.n() != game.n() {
        return Err(GameError::DimensionMismatch {
            expected: game.n(),
            actual: trajectory.n(),
        });
    }
    // Opponent aggregates per round, the only part of history that matters.
    let aggregates: Vec<f64> = trajectory
        .bids
        .iter()
        .map(|row| row.iter().sum::<f64>() + game.delta() - row[agent_index])
        .collect();
    let cumulative = |z: f64| -> f64 {
        aggregates
            .iter()
            .map(|&s| agent.payoff_given_aggregate(z, s))
            .sum()
    };

    let (lo, hi) = (agent.min_bid(), agent.budget());
    let spacing = if REGRET_GRID > 1 {
        (hi - lo) / (REGRET_GRID - 1) as f64
    } else {
        hi - lo
    };
    let mut candidates: Vec<f64> = (0..REGRET_GRID)
        .map(|k| lo + spacing * k as f64)
        .collect();
    candidates.push(hi);
    candidates.extend(trajectory.bids.iter().map(|row| row[agent_index]));

    let mut best_z = lo;
    let mut best_value = f64::NEG_INFINITY;
    for z in candidates {
        let v = cumulative(z);
        if v > best_value {
            best_value = v;
            best_z = z;
        }
    }
    if spacing > 0.0 {
        let refine_lo = (best_z - spacing).max(lo);
        let refine_hi = (best_z + spacing).min(hi);
        if refine_hi > refine_lo {
            let refined = golden_section_max(cumulative, refine_lo, refine_hi, REGRET_REFINE_TOL);
            best_value = best_value.max(cumulative(refined));
        }
    }

    let realized: f64 = trajectory
        .bids
        .iter()
        .zip(&aggregates)
        .map(|(row, &s)| agent.payoff_given_aggregate(row[agent_index], s))
        .sum();
    Ok(best_value - realized)
}

fn log_weights(game: &GameSpec) -> Result<Vec<f64>> {
    game.agents()
        .iter()
        .map(|agent| {
            agent.utility().log_weight().ok_or_else(|| {
                GameError::Unsupported("gap metric is defined for log utilities only".into())
            })
        })
        .collect()
}

/// First-order equilibrium merit
/// `sum_i (grad_i(z) / a_i) (z*_i - z_i)` for log-utility games: zero
/// exactly at the equilibrium, strictly positive elsewhere when the game
/// carries a concavity certificate with weights `1/a_i`.
pub fn gap(game: &GameSpec, profile: &BidProfile, ne: &BidProfile) -> Result<f64> {
    let weights = log_weights(game)?;
    game.validate_profile(profile)?;
    game.validate_profile(ne)?;
    let gradients = game.payoff_gradients(profile)?;
    Ok(gradients
        .iter()
        .zip(&weights)
        .zip(profile.bids().iter().zip(ne.bids()))
        .map(|((grad, a), (&z, &z_star))| grad / a * (z_star - z))
        .sum())
}

/// Arithmetic mean of [`gap`] over the rounds of a trajectory.
pub fn averaged_gap(game: &GameSpec, trajectory: &Trajectory, ne: &BidProfile) -> Result<f64> {
    let series = gap_series(game, trajectory, ne)?;
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

/// [`gap`] evaluated round by round.
pub fn gap_series(game: &GameSpec, trajectory: &Trajectory, ne: &BidProfile) -> Result<Vec<f64>> {
    if trajectory.horizon() == 0 {
        return Err(GameError::InvalidParameter(
            "trajectory must contain at least one round".into(),
        ));
    }
    trajectory
        .bids
        .iter()
        .map(|row| gap(game, &BidProfile::new(row.clone()), ne))
        .collect()
}

/// Worst-case averaged-gap guarantee for all-lazy-dual-averaging play:
/// `(sum_i c_i + 4 n max_i c_i) / (2 eps sqrt(T))`.
///
/// Hypotheses: every agent shares one floor `eps`, has a log utility with
/// weight `a_i >= eps`, and pays its bid.
pub fn daq_gap_bound(game: &GameSpec, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(GameError::InvalidParameter("horizon must be >= 1".into()));
    }
    let eps = game.agents()[0].min_bid();
    let mut budget_sum = 0.0;
    let mut budget_max = f64::NEG_INFINITY;
    for agent in game.agents() {
        if agent.min_bid() != eps {
            return Err(GameError::AssumptionViolated(
                "gap guarantee needs a common bid floor".into(),
            ));
        }
        let a = agent.utility().log_weight().ok_or_else(|| {
            GameError::Unsupported("gap guarantee needs log utilities".into())
        })?;
        if a < eps {
            return Err(GameError::AssumptionViolated(format!(
                "gap guarantee needs a_i >= floor, got a = {a} < {eps}"
            )));
        }
        if !agent.payment().is_identity() {
            return Err(GameError::Unsupported(
                "gap guarantee needs identity payments".into(),
            ));
        }
        budget_sum += agent.budget();
        budget_max = budget_max.max(agent.budget());
    }
    let n = game.n() as f64;
    Ok((budget_sum + 4.0 * n * budget_max) / (2.0 * eps * (horizon as f64).sqrt()))
}

/// Global payoff extremes `(phi_min, phi_max)` over the joint action box.
///
/// Candidates: every corner profile (each bid at its floor or budget) for
/// n <= 16, otherwise the all-floor/all-budget profiles, single-agent
/// corner deviations from them, and 10,000 seeded random profiles. In both
/// regimes each agent's best response against its extreme opponent
/// aggregates is added: own-bid payoffs are concave, so the maximum over a
/// fixed environment sits at that interior point, not at a corner.
pub fn payoff_extremes(game: &GameSpec) -> Result<(f64, f64)> {
    let n = game.n();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut absorb_profile = |bids: &[f64]| {
        let m: f64 = bids.iter().sum::<f64>() + game.delta();
        for (agent, &z) in game.agents().iter().zip(bids) {
            let phi = agent.payoff_given_aggregate(z, m - z);
            lo = lo.min(phi);
            hi = hi.max(phi);
        }
    };

    if n <= EXTREMES_CORNER_LIMIT {
        let mut bids = vec![0.0; n];
        for mask in 0..(1usize << n) {
            for (i, bid) in bids.iter_mut().enumerate() {
                let agent = &game.agents()[i];
                *bid = if mask & (1 << i) == 0 {
                    agent.min_bid()
                } else {
                    agent.budget()
                };
            }
            absorb_profile(&bids);
        }
    } else {
        let floors: Vec<f64> = game.agents().iter().map(|a| a.min_bid()).collect();
        let budgets: Vec<f64> = game.agents().iter().map(|a| a.budget()).collect();
        absorb_profile(&floors);
        absorb_profile(&budgets);
        for i in 0..n {
            let mut deviated = floors.clone();
            deviated[i] = budgets[i];
            absorb_profile(&deviated);
            let mut deviated = budgets.clone();
            deviated[i] = floors[i];
            absorb_profile(&deviated);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(EXTREMES_SEED);
        let mut bids = vec![0.0; n];
        for _ in 0..EXTREMES_SAMPLES {
            for (bid, agent) in bids.iter_mut().zip(game.agents()) {
                *bid = rng.random_range(agent.min_bid()..=agent.budget());
            }
            absorb_profile(&bids);
        }
    }

    // Interior candidates: best response against the least and most
    // competitive opponent corners.
    for (i, agent) in game.agents().iter().enumerate() {
        let opponents = |pick: fn(&crate::game::AgentSpec) -> f64| -> f64 {
            game.agents()
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, other)| pick(other))
                .sum::<f64>()
                + game.delta()
        };
        for s in [
            opponents(crate::game::AgentSpec::min_bid),
            opponents(crate::game::AgentSpec::budget),
        ] {
            let br = agent.best_response(s)?;
            let phi = agent.payoff_given_aggregate(br, s);
            lo = lo.min(phi);
            hi = hi.max(phi);
        }
    }
    Ok((lo, hi))
}

/// Affine rescaling of a raw payoff onto `[0, 1]` given precomputed
/// extremes, clamped at both ends.
pub fn normalized_payoff(raw: f64, phi_min: f64, phi_max: f64) -> Result<f64> {
    if !(phi_min < phi_max) {
        return Err(GameError::InvalidParameter(format!(
            "normalization needs phi_min < phi_max, got [{phi_min}, {phi_max}]"
        )));
    }
    Ok(((raw - phi_min) / (phi_max - phi_min)).clamp(0.0, 1.0))
}

/// First round index (1-based) whose residual drops below `threshold`, or
/// `None` if the series never crosses.
pub fn convergence_iteration(residuals: &[f64], threshold: f64) -> Option<usize> {
    residuals
        .iter()
        .position(|&r| r < threshold)
        .map(|idx| idx + 1)
}

/// Bundle of all per-run measurements.
#[derive(Clone, Debug)]
pub struct MetricReport {
    /// Hindsight regret per agent.
    pub regret: Vec<f64>,
    /// Per-round first-order gap and its time average.
    pub gap_series: Vec<f64>,
    pub averaged_gap: f64,
    /// The lazy-dual-averaging guarantee, when this game satisfies its
    /// hypotheses.
    pub gap_bound: Option<f64>,
    /// Per-agent time average of the normalized recorded payoffs.
    pub time_avg_normalized_payoff: Vec<f64>,
    pub residual_series: Vec<f64>,
    /// First 1-based round with residual below the threshold.
    pub convergence_iteration: Option<usize>,
    pub final_residual: f64,
}

/// Computes every metric for one finished run of a log-utility game.
///
/// Regret and gaps are recomputed from bids; the normalized payoffs use
/// the recorded (possibly offset) payoff matrix, since they describe what
/// agents actually experienced.
pub fn compute_report(
    game: &GameSpec,
    trajectory: &Trajectory,
    ne: &BidProfile,
    threshold: f64,
) -> Result<MetricReport> {
    let n = game.n();
    if trajectory.n() != n {
        return Err(GameError::DimensionMismatch {
            expected: n,
            actual: trajectory.n(),
        });
    }
    let regret = (0..n)
        .map(|i| regret(game, i, trajectory))
        .collect::<Result<Vec<f64>>>()?;
    let gap_series = gap_series(game, trajectory, ne)?;
    let averaged_gap = gap_series.iter().sum::<f64>() / gap_series.len() as f64;
    let gap_bound = daq_gap_bound(game, trajectory.horizon()).ok();
    let (phi_min, phi_max) = payoff_extremes(game)?;
    let horizon = trajectory.horizon() as f64;
    let time_avg_normalized_payoff = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for row in &trajectory.payoffs {
                acc += normalized_payoff(row[i], phi_min, phi_max)?;
            }
            Ok(acc / horizon)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MetricReport {
        regret,
        averaged_gap,
        gap_bound,
        time_avg_normalized_payoff,
        residual_series: trajectory.residuals.clone(),
        convergence_iteration: convergence_iteration(&trajectory.residuals, threshold),
        final_residual: trajectory.final_residual(),
        gap_series,
    })
}

// ─── tests ─────────────────────────────────────────────────────────────────
