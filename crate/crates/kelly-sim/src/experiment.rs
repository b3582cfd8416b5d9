//! Runs a configured experiment end to end: build the game, assemble the
//! learner population, certify structural concavity, solve for equilibrium,
//! execute the batch of seeded runs in parallel, and emit CSV/summary files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use kelly_game::dynamics::{run_dynamics, InitialBids, Learner, LearnerKind, RateSchedule, Trajectory};
use kelly_game::equilibrium::{solve_ne, NeSolution};
use kelly_game::metrics::{compute_report, MetricReport};
use kelly_game::sdsc::{certify_sdsc, SdscCertificate};
use kelly_game::GameSpec;
use rayon::prelude::*;

use crate::config::{
    Algorithm, ExperimentConfig, NoiseSpec, RateNormalization, ScheduleSpec,
};
use crate::scenario::{game_from_config, noise_offsets};

/// Residual tolerance for the equilibrium solve backing the reports.
pub const NE_TOLERANCE: f64 = 1e-9;
/// Iteration cap for the equilibrium solve.
pub const NE_MAX_ITER: usize = 100_000;
/// Decorrelates the noise stream from the initial-bid stream of the same run.
const NOISE_SEED_SALT: u64 = 0x6e6f697365;

/// Gradient bound used to scale an agent's step sizes.
///
/// The certified bound `a/epsilon + 1` holds on the whole bid box but is
/// driven by the slope at the floor, which the settled dynamics never see;
/// step sizes scaled by it are orders of magnitude too timid. The calibrated
/// bound `a/budget + 1` is the slope bound on the budget side and reproduces
/// the reference convergence speeds. Non-log or non-identity agents fall back
/// to the certified bound, which is all that is available for them.
pub fn rate_bound(game: &GameSpec, index: usize, normalization: RateNormalization) -> Result<f64> {
    let agent = game.agent(index)?;
    match normalization {
        RateNormalization::Calibrated
            if agent.utility().is_log() && agent.payment().is_identity() =>
        {
            let a = agent
                .utility()
                .log_weight()
                .expect("log utility has a weight");
            Ok(a / agent.budget() + 1.0)
        }
        _ => Ok(game.gradient_bound(index)?.value),
    }
}

/// Builds the per-agent learner roster described by the config's population
/// blocks, in agent order.
pub fn build_learners(config: &ExperimentConfig, game: &GameSpec) -> Result<Vec<Learner>> {
    let assignments = config.assignments()?;
    let horizon = config.run.horizon;
    let normalization = config.run.rate_normalization;
    let mut learners = Vec::with_capacity(game.n());
    for (i, entry) in assignments.iter().enumerate() {
        let agent = game.agent(i)?;
        let learner = match entry.algorithm {
            Algorithm::Br => Learner::br(),
            algorithm => {
                let kind = match algorithm {
                    Algorithm::Ogd => LearnerKind::Ogd,
                    Algorithm::Daq => LearnerKind::Daq,
                    Algorithm::Rmq => LearnerKind::Rmq {
                        lambda: entry.lambda,
                    },
                    Algorithm::Br => unreachable!(),
                };
                let spec = entry
                    .schedule
                    .expect("validation requires a schedule for first-order algorithms");
                let (schedule, bound) = match spec {
                    ScheduleSpec::FixedHorizon => (
                        RateSchedule::FixedHorizon { horizon },
                        rate_bound(game, i, normalization)?,
                    ),
                    ScheduleSpec::Adaptive => (
                        RateSchedule::Adaptive,
                        rate_bound(game, i, normalization)?,
                    ),
                    ScheduleSpec::AdaptiveDaq => (
                        RateSchedule::AdaptiveDaq,
                        rate_bound(game, i, normalization)?,
                    ),
                    ScheduleSpec::Power { beta, scale } => (
                        RateSchedule::Power { beta, scale },
                        rate_bound(game, i, normalization)?,
                    ),
                    ScheduleSpec::Constant { eta } => (
                        RateSchedule::Constant { eta },
                        rate_bound(game, i, normalization)?,
                    ),
                    ScheduleSpec::GapGuarantee => {
                        let a = agent.utility().log_weight().with_context(|| {
                            format!(
                                "agent {}: the gap-guarantee rate needs a log utility",
                                i + 1
                            )
                        })?;
                        let eta =
                            agent.min_bid() * agent.budget() / (a * (horizon as f64).sqrt());
                        (RateSchedule::Constant { eta }, 1.0)
                    }
                };
                Learner::first_order(kind, schedule, agent.diameter(), bound)
                    .with_context(|| format!("agent {}: invalid learner parameters", i + 1))?
            }
        };
        learners.push(learner);
    }
    Ok(learners)
}

/// Per-agent algorithm labels used in the trajectory CSV, e.g. `ogd[adaptive]`.
pub fn agent_labels(config: &ExperimentConfig) -> Result<Vec<String>> {
    Ok(config
        .assignments()?
        .iter()
        .map(|entry| match entry.schedule {
            Some(schedule) => format!("{}[{}]", entry.algorithm.label(), schedule.label()),
            None => entry.algorithm.label().to_string(),
        })
        .collect())
}

/// One seeded run plus everything measured on it.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub report: MetricReport,
}

/// Full result of a configured experiment.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub game: GameSpec,
    /// Per-agent algorithm labels, `game.n()` long.
    pub labels: Vec<String>,
    pub certificate: SdscCertificate,
    pub equilibrium: NeSolution,
    /// One outcome per run, in run order (run r uses seed `base + r`).
    pub runs: Vec<RunOutcome>,
}

/// Executes the experiment described by `config`.
///
/// Runs are independent and executed in parallel, but collected in run order,
/// so the result (and any files written from it) is identical no matter how
/// many workers are used.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let game = game_from_config(config)?;
    let learners = build_learners(config, &game)?;
    let labels = agent_labels(config)?;
    let certificate = certify_sdsc(&game, None).context("concavity certification failed")?;
    let equilibrium =
        solve_ne(&game, NE_TOLERANCE, NE_MAX_ITER).context("equilibrium solve failed")?;

    let noise = config
        .slicing
        .as_ref()
        .map(|s| s.noise)
        .unwrap_or(NoiseSpec::None);
    let horizon = config.run.horizon;
    let threshold = config.run.threshold;
    let base_seed = config.run.seed;

    let runs: Vec<RunOutcome> = (0..config.run.runs)
        .into_par_iter()
        .map(|r| -> Result<RunOutcome> {
            let seed = base_seed.wrapping_add(r as u64);
            let mut trajectory = run_dynamics(
                &game,
                &learners,
                horizon,
                &InitialBids::SeededUniform,
                seed,
            )
            .with_context(|| format!("run {} failed", r + 1))?;
            if let Some(offsets) =
                noise_offsets(&noise, horizon, game.n(), seed ^ NOISE_SEED_SALT)?
            {
                for (row, offset_row) in trajectory.payoffs.iter_mut().zip(&offsets) {
                    for (payoff, offset) in row.iter_mut().zip(offset_row) {
                        *payoff += offset;
                    }
                }
            }
            let report = compute_report(&game, &trajectory, &equilibrium.profile, threshold)
                .with_context(|| format!("metrics for run {} failed", r + 1))?;
            Ok(RunOutcome {
                seed,
                trajectory,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentResult {
        config: config.clone(),
        game,
        labels,
        certificate,
        equilibrium,
        runs,
    })
}

/// Mean of an iterator, `None` when empty.
fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

fn normalization_label(normalization: RateNormalization) -> &'static str {
    match normalization {
        RateNormalization::Certified => "certified",
        RateNormalization::Calibrated => "calibrated",
    }
}

/// Writes `trajectory.csv`, `metrics.csv`, and `summary.txt` into `dir`.
///
/// Row order is fixed (runs outermost, then rounds, then agents) and floats
/// are printed with the shortest round-trip representation, so two runs of
/// the same config and seed produce byte-identical files.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("failed to create output directory {}", dir.display()))?;

    let trajectory_path = dir.join("trajectory.csv");
    let mut w = BufWriter::new(
        fs::File::create(&trajectory_path)
            .with_context(|| format!("failed to create {}", trajectory_path.display()))?,
    );
    writeln!(w, "run,t,agent,algorithm,bid,payoff,gradient")?;
    for (r, run) in result.runs.iter().enumerate() {
        for t in 0..run.trajectory.horizon() {
            for i in 0..run.trajectory.n() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r + 1,
                    t + 1,
                    i + 1,
                    result.labels[i],
                    run.trajectory.bids[t][i],
                    run.trajectory.payoffs[t][i],
                    run.trajectory.gradients[t][i],
                )?;
            }
        }
    }
    w.flush()?;

    let metrics_path = dir.join("metrics.csv");
    let mut w = BufWriter::new(
        fs::File::create(&metrics_path)
            .with_context(|| format!("failed to create {}", metrics_path.display()))?,
    );
    writeln!(w, "run,t,residual,gap")?;
    for (r, run) in result.runs.iter().enumerate() {
        for t in 0..run.trajectory.horizon() {
            writeln!(
                w,
                "{},{},{},{}",
                r + 1,
                t + 1,
                run.report.residual_series[t],
                run.report.gap_series[t],
            )?;
        }
    }
    w.flush()?;

    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, render_summary(result))
        .with_context(|| format!("failed to write {}", summary_path.display()))?;
    Ok(())
}

/// Human-readable roll-up of the batch; deterministic for a fixed result.
pub fn render_summary(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let config = &result.config;
    let runs = &result.runs;
    let n = result.game.n();

    let _ = writeln!(out, "experiment summary");
    let _ = writeln!(out, "==================");
    let _ = writeln!(out, "agents: {}", n);
    let _ = writeln!(out, "reserve (delta): {}", result.game.delta());
    let _ = writeln!(
        out,
        "horizon: {}  runs: {}  base seed: {}  threshold: {}",
        config.run.horizon, config.run.runs, config.run.seed, config.run.threshold
    );
    let _ = writeln!(
        out,
        "rate normalization: {}",
        normalization_label(config.run.rate_normalization)
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "concavity certificate: certified={} method={:?} psi_sup={}",
        result.certificate.certified, result.certificate.method, result.certificate.psi_sup
    );
    let _ = writeln!(
        out,
        "equilibrium: residual={} iterations={} converged={}",
        result.equilibrium.residual, result.equilibrium.iterations, result.equilibrium.converged
    );
    let _ = writeln!(out, "equilibrium bids: {:?}", result.equilibrium.profile.bids());
    let _ = writeln!(out);

    let crossed: Vec<usize> = runs
        .iter()
        .filter_map(|run| run.report.convergence_iteration)
        .collect();
    let _ = writeln!(
        out,
        "runs crossing threshold: {}/{}",
        crossed.len(),
        runs.len()
    );
    match mean(crossed.iter().map(|&it| it as f64)) {
        Some(m) => {
            let _ = writeln!(out, "mean convergence iteration (crossed runs): {m}");
        }
        None => {
            let _ = writeln!(out, "mean convergence iteration (crossed runs): n/a");
        }
    }
    let mean_final = mean(runs.iter().map(|run| run.report.final_residual)).unwrap_or(f64::NAN);
    let _ = writeln!(out, "mean final residual: {mean_final}");
    let mean_gap = mean(runs.iter().map(|run| run.report.averaged_gap)).unwrap_or(f64::NAN);
    let _ = writeln!(out, "mean time-averaged gap: {mean_gap}");
    match runs.first().and_then(|run| run.report.gap_bound) {
        Some(bound) => {
            let _ = writeln!(out, "time-averaged gap bound (dual averaging): {bound}");
        }
        None => {
            let _ = writeln!(out, "time-averaged gap bound (dual averaging): n/a");
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "per-agent means over runs:");
    let _ = writeln!(out, "agent,algorithm,mean_regret,mean_normalized_payoff");
    for i in 0..n {
        let mean_regret = mean(runs.iter().map(|run| run.report.regret[i])).unwrap_or(f64::NAN);
        let mean_payoff = mean(
            runs.iter()
                .map(|run| run.report.time_avg_normalized_payoff[i]),
        )
        .unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            result.labels[i],
            mean_regret,
            mean_payoff
        );
    }
    out
}
