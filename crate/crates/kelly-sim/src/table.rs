//! Convergence-speed benchmark: a grid of games (utility-weight spread
//! `gamma` x population size `n`) crossed with six canonical algorithm
//! variants, each cell reporting the mean first round at which the
//! best-response residual drops below the threshold.

use anyhow::{Context, Result};
use kelly_game::dynamics::{run_dynamics, InitialBids, Learner, LearnerKind, RateSchedule};
use kelly_game::metrics::convergence_iteration;
use kelly_game::GameSpec;
use rayon::prelude::*;
use std::fmt::Write as _;

use crate::config::RateNormalization;
use crate::experiment::rate_bound;
use crate::scenario::game_from_gamma;

/// Parameters of the benchmark grid.
#[derive(Clone, Debug)]
pub struct TableSpec {
    pub gammas: Vec<f64>,
    pub ns: Vec<usize>,
    pub a_base: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub budget: f64,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub threshold: f64,
    pub normalization: RateNormalization,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec {
            gammas: vec![0.0, 5.0, 10.0],
            ns: vec![2, 10, 20],
            a_base: 100.0,
            delta: 0.1,
            epsilon: 1.0,
            budget: 400.0,
            horizon: 3000,
            runs: 10,
            seed: 42,
            threshold: 1e-5,
            normalization: RateNormalization::Calibrated,
        }
    }
}

/// Algorithm variants benchmarked per cell. `_F` marks the horizon-scaled
/// fixed step size, `_V` the per-round decaying one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Br,
    OgdV,
    OgdF,
    DaqF,
    DaqV,
    RmqV,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Br,
        Variant::OgdV,
        Variant::OgdF,
        Variant::DaqF,
        Variant::DaqV,
        Variant::RmqV,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Br => "BR",
            Variant::OgdV => "OGD_V",
            Variant::OgdF => "OGD_F",
            Variant::DaqF => "DAQ_F",
            Variant::DaqV => "DAQ_V",
            Variant::RmqV => "RMQ_V",
        }
    }
}

/// Homogeneous roster running `variant` on every agent of `game`.
pub fn variant_learners(
    game: &GameSpec,
    variant: Variant,
    horizon: usize,
    normalization: RateNormalization,
) -> Result<Vec<Learner>> {
    (0..game.n())
        .map(|i| {
            if variant == Variant::Br {
                return Ok(Learner::br());
            }
            let (kind, schedule) = match variant {
                Variant::OgdF => (LearnerKind::Ogd, RateSchedule::FixedHorizon { horizon }),
                Variant::OgdV => (LearnerKind::Ogd, RateSchedule::Adaptive),
                Variant::DaqF => (LearnerKind::Daq, RateSchedule::FixedHorizon { horizon }),
                Variant::DaqV => (LearnerKind::Daq, RateSchedule::AdaptiveDaq),
                Variant::RmqV => (LearnerKind::Rmq { lambda: 1.0 }, RateSchedule::Adaptive),
                Variant::Br => unreachable!(),
            };
            let diameter = game.agent(i)?.diameter();
            let bound = rate_bound(game, i, normalization)?;
            Ok(Learner::first_order(kind, schedule, diameter, bound)?)
        })
        .collect()
}

/// Crossing statistics for one (game, variant) cell.
#[derive(Clone, Copy, Debug)]
pub struct CellResult {
    pub runs: usize,
    /// Runs whose residual dropped below the threshold at least once.
    pub crossed: usize,
    /// Mean first crossing round over the runs that crossed.
    pub mean_iteration: Option<f64>,
    /// Mean last-round residual over all runs.
    pub mean_final_residual: f64,
}

/// Runs one benchmark cell: `runs` seeded trajectories of `variant` on
/// `game`, measuring threshold crossings straight off the residual series.
pub fn run_cell(
    game: &GameSpec,
    variant: Variant,
    horizon: usize,
    runs: usize,
    base_seed: u64,
    threshold: f64,
    normalization: RateNormalization,
) -> Result<CellResult> {
    let learners = variant_learners(game, variant, horizon, normalization)?;
    let stats: Vec<(Option<usize>, f64)> = (0..runs)
        .into_par_iter()
        .map(|r| -> Result<(Option<usize>, f64)> {
            let trajectory = run_dynamics(
                game,
                &learners,
                horizon,
                &InitialBids::SeededUniform,
                base_seed.wrapping_add(r as u64),
            )?;
            Ok((
                convergence_iteration(&trajectory.residuals, threshold),
                trajectory.final_residual(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let crossings: Vec<usize> = stats.iter().filter_map(|(c, _)| *c).collect();
    let mean_iteration = (!crossings.is_empty())
        .then(|| crossings.iter().sum::<usize>() as f64 / crossings.len() as f64);
    let mean_final_residual =
        stats.iter().map(|(_, f)| f).sum::<f64>() / stats.len().max(1) as f64;
    Ok(CellResult {
        runs,
        crossed: crossings.len(),
        mean_iteration,
        mean_final_residual,
    })
}

/// Text for one table cell: mean crossing round, `(r_T=...)` when no run
/// crossed, and a `[k/m]` annotation when only some runs crossed.
pub fn cell_text(cell: &CellResult) -> String {
    match cell.mean_iteration {
        None => format!("(r_T={})", format_residual(cell.mean_final_residual)),
        Some(mean) if cell.crossed == cell.runs => format!("{mean:.1}"),
        Some(mean) => format!("{mean:.1} [{}/{}]", cell.crossed, cell.runs),
    }
}

fn format_residual(r: f64) -> String {
    if r >= 0.005 {
        format!("{r:.2}")
    } else {
        format!("{r:.1e}")
    }
}

/// Renders the full benchmark table.
pub fn benchmark_table(spec: &TableSpec) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mean rounds to best-response residual < {} ({} runs per cell, horizon {}, base seed {})",
        spec.threshold, spec.runs, spec.horizon, spec.seed
    );
    let _ = writeln!(
        out,
        "a_base={} delta={} bids in [{}, {}], rate normalization: {:?}",
        spec.a_base, spec.delta, spec.epsilon, spec.budget, spec.normalization
    );
    let _ = writeln!(out);
    let _ = write!(out, "{:>6} {:>4}", "gamma", "n");
    for variant in Variant::ALL {
        let _ = write!(out, " {:>12}", variant.label());
    }
    let _ = writeln!(out);
    for &gamma in &spec.gammas {
        for &n in &spec.ns {
            let game = game_from_gamma(
                n,
                spec.a_base,
                gamma,
                spec.delta,
                spec.epsilon,
                spec.budget,
            )
            .with_context(|| format!("building game gamma={gamma} n={n}"))?;
            let _ = write!(out, "{gamma:>6} {n:>4}");
            for variant in Variant::ALL {
                let cell = run_cell(
                    &game,
                    variant,
                    spec.horizon,
                    spec.runs,
                    spec.seed,
                    spec.threshold,
                    spec.normalization,
                )
                .with_context(|| {
                    format!("cell gamma={gamma} n={n} variant={}", variant.label())
                })?;
                let _ = write!(out, " {:>12}", cell_text(&cell));
            }
            let _ = writeln!(out);
        }
    }
    Ok(out)
}
