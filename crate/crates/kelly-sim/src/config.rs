//! Declarative experiment configuration.
//!
//! An experiment is described by one TOML file with nested sections:
//!
//! ```toml
//! [game]
//! n = 10
//! a_base = 100.0
//! gamma = 5.0
//! delta = 0.1
//! epsilon = 1.0
//! budget = 400.0
//!
//! [run]
//! horizon = 3000
//! runs = 10
//! seed = 42
//!
//! [[population]]
//! algorithm = "br"
//! count = 5
//!
//! [[population]]
//! algorithm = "ogd"
//! count = 5
//! schedule = { kind = "adaptive" }
//! ```
//!
//! Unknown keys are rejected so that typos fail loudly instead of silently
//! running a different experiment.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

fn default_threshold() -> f64 {
    1e-5
}

fn default_lambda() -> f64 {
    1.0
}

/// Top-level experiment description.
///
/// Field order matters for TOML serialization: plain values must be emitted
/// before sub-tables, so `output` precedes the section structs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional default output directory for CSV/summary emission.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub game: GameSection,
    /// Optional bandwidth-slicing scenario; when present it overrides the
    /// utility parameters derived from `game.a_base`/`game.gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slicing: Option<SlicingSection>,
    pub run: RunSection,
    pub population: Vec<PopulationEntry>,
}

/// Shared market parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// Number of agents.
    pub n: usize,
    /// Base utility weight; agent i (1-based) gets `max(a_base - i*gamma, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_base: Option<f64>,
    /// Per-index decrement of the utility weight (0 = symmetric population).
    #[serde(default)]
    pub gamma: f64,
    /// Auctioneer reserve added to the bid aggregate.
    pub delta: f64,
    /// Common bid floor.
    pub epsilon: f64,
    /// Common bid budget.
    pub budget: f64,
}

impl GameSection {
    pub const DEFAULT_A_BASE: f64 = 100.0;

    /// Base weight with the default applied.
    pub fn a_base_or_default(&self) -> f64 {
        self.a_base.unwrap_or(Self::DEFAULT_A_BASE)
    }
}

/// Bandwidth-slicing scenario: tenant j with `N_j` subscribers valuing a slice
/// of a link of capacity `bandwidth` as `N_j ln(x_j) + N_j ln(bandwidth)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicingSection {
    /// Subscriber counts, one per tenant; must match `game.n` in length.
    pub tenants: Vec<u64>,
    /// Link capacity being divided.
    pub bandwidth: f64,
    /// Observation noise added to recorded payoffs (never to the dynamics).
    #[serde(default)]
    pub noise: NoiseSpec,
}

/// Payoff observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    Gaussian {
        mean: f64,
        std: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
}

/// Batch execution parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Rounds per run.
    pub horizon: usize,
    /// Number of independent runs; run r uses seed `seed + r`.
    pub runs: usize,
    /// Base seed for initial bids (and noise, when configured).
    pub seed: u64,
    /// Residual threshold used for the convergence-iteration metric.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// How step sizes are scaled from the gradient bound.
    #[serde(default)]
    pub rate_normalization: RateNormalization,
}

/// Selects the gradient bound `G` used to scale step sizes `~ D/(G sqrt(t))`.
///
/// `Certified` uses the worst-case bound `a/epsilon + 1`, which is safe but so
/// conservative at small bid floors that first-order dynamics crawl.
/// `Calibrated` uses the budget-side slope bound `a/budget + 1`: the loose
/// certificate for the region the dynamics actually settle in, and the scaling
/// that reproduces the reference convergence speeds. Regret guarantees are
/// only asserted for certified rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateNormalization {
    Certified,
    #[default]
    Calibrated,
}

/// One homogeneous block of agents running the same algorithm.
///
/// Blocks are assigned to agents in file order: the first entry covers agents
/// `1..=k1`, the next `k1+1..=k1+k2`, and so on. Exactly one of `count` /
/// `fraction` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationEntry {
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    /// Proximal scaling for `rmq`; must stay at 1 for other algorithms.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Step-size schedule; required for first-order algorithms, forbidden for
    /// best response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
}

/// Update rule run by a population block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Exact best response to the previous round.
    Br,
    /// Projected online gradient ascent.
    Ogd,
    /// Dual averaging over accumulated gradients (quantity space).
    Daq,
    /// Root-mean-quadratic-style proximal dual method: accumulates rated
    /// gradients and rescales by `lambda` before projection.
    Rmq,
}

impl Algorithm {
    pub fn is_first_order(self) -> bool {
        !matches!(self, Algorithm::Br)
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Br => "br",
            Algorithm::Ogd => "ogd",
            Algorithm::Daq => "daq",
            Algorithm::Rmq => "rmq",
        }
    }
}

/// Step-size schedule for first-order algorithms.
///
/// `fixed-horizon` and the adaptive kinds derive the actual rate from the
/// per-agent diameter/gradient-bound pair at build time; `gap-guarantee` is
/// the fully specified constant rate `epsilon * budget / (a sqrt(T))` that
/// backs the time-averaged gap bound, independent of rate normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    FixedHorizon,
    Adaptive,
    AdaptiveDaq,
    Power {
        beta: f64,
        scale: f64,
    },
    Constant {
        eta: f64,
    },
    GapGuarantee,
}

impl ScheduleSpec {
    pub fn label(self) -> &'static str {
        match self {
            ScheduleSpec::FixedHorizon => "fixed-horizon",
            ScheduleSpec::Adaptive => "adaptive",
            ScheduleSpec::AdaptiveDaq => "adaptive-daq",
            ScheduleSpec::Power { .. } => "power",
            ScheduleSpec::Constant { .. } => "constant",
            ScheduleSpec::GapGuarantee => "gap-guarantee",
        }
    }
}

impl ExperimentConfig {
    /// Parse and validate a config from TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).context("failed to parse experiment config")?;
        config.validate()?;
        Ok(config)
    }

    /// Parse and validate a config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("failed to read config file {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config file {}", path.display()))
    }

    /// Check cross-field consistency; parsing alone cannot see these.
    pub fn validate(&self) -> Result<()> {
        let g = &self.game;
        ensure!(g.n >= 1, "game.n must be at least 1");
        ensure!(
            g.epsilon.is_finite() && g.epsilon > 0.0,
            "game.epsilon must be positive"
        );
        ensure!(
            g.budget.is_finite() && g.budget >= g.epsilon,
            "game.budget must be at least game.epsilon"
        );
        ensure!(
            g.delta.is_finite() && g.delta >= 0.0,
            "game.delta must be nonnegative"
        );
        ensure!(
            g.gamma.is_finite() && g.gamma >= 0.0,
            "game.gamma must be nonnegative"
        );
        if let Some(a) = g.a_base {
            ensure!(a.is_finite() && a > 0.0, "game.a_base must be positive");
        }

        if let Some(slicing) = &self.slicing {
            ensure!(
                !slicing.tenants.is_empty(),
                "slicing.tenants must not be empty"
            );
            ensure!(
                slicing.tenants.len() == g.n,
                "slicing.tenants has {} entries but game.n = {}",
                slicing.tenants.len(),
                g.n
            );
            ensure!(
                slicing.tenants.iter().all(|&t| t >= 1),
                "every tenant must have at least one subscriber"
            );
            ensure!(
                slicing.bandwidth.is_finite() && slicing.bandwidth > 0.0,
                "slicing.bandwidth must be positive"
            );
            ensure!(
                g.a_base.is_none(),
                "slicing derives utility weights from tenants; remove game.a_base"
            );
            ensure!(
                g.gamma == 0.0,
                "slicing derives utility weights from tenants; remove game.gamma"
            );
            match slicing.noise {
                NoiseSpec::None => {}
                NoiseSpec::Gaussian { mean, std } => {
                    ensure!(mean.is_finite(), "gaussian noise mean must be finite");
                    ensure!(
                        std.is_finite() && std >= 0.0,
                        "gaussian noise std must be nonnegative"
                    );
                }
                NoiseSpec::Uniform { low, high } => {
                    ensure!(
                        low.is_finite() && high.is_finite() && low <= high,
                        "uniform noise requires low <= high"
                    );
                }
            }
        }

        let r = &self.run;
        ensure!(r.horizon >= 1, "run.horizon must be at least 1");
        ensure!(r.runs >= 1, "run.runs must be at least 1");
        ensure!(
            r.threshold.is_finite() && r.threshold > 0.0,
            "run.threshold must be positive"
        );

        ensure!(
            !self.population.is_empty(),
            "population must have at least one entry"
        );
        for (idx, entry) in self.population.iter().enumerate() {
            let where_ = format!("population entry {}", idx + 1);
            match (entry.count, entry.fraction) {
                (Some(_), Some(_)) => {
                    bail!("{where_}: give either count or fraction, not both")
                }
                (None, None) => bail!("{where_}: give count or fraction"),
                (Some(c), None) => ensure!(c >= 1, "{where_}: count must be at least 1"),
                (None, Some(f)) => ensure!(
                    f.is_finite() && f > 0.0 && f <= 1.0,
                    "{where_}: fraction must lie in (0, 1]"
                ),
            }
            if entry.algorithm.is_first_order() {
                ensure!(
                    entry.schedule.is_some(),
                    "{where_}: {} requires a schedule",
                    entry.algorithm.label()
                );
            } else {
                ensure!(
                    entry.schedule.is_none(),
                    "{where_}: best response takes no schedule"
                );
            }
            if entry.algorithm == Algorithm::Rmq {
                ensure!(
                    entry.lambda.is_finite() && entry.lambda > 0.0,
                    "{where_}: lambda must be positive"
                );
            } else {
                ensure!(
                    entry.lambda == 1.0,
                    "{where_}: lambda applies to rmq only"
                );
            }
            if let Some(ScheduleSpec::Power { beta, scale }) = entry.schedule {
                ensure!(
                    beta > 0.5 && beta <= 1.0,
                    "{where_}: power schedule needs beta in (1/2, 1]"
                );
                ensure!(
                    scale.is_finite() && scale > 0.0,
                    "{where_}: power schedule needs a positive scale"
                );
            }
            if let Some(ScheduleSpec::Constant { eta }) = entry.schedule {
                ensure!(
                    eta.is_finite() && eta > 0.0,
                    "{where_}: constant schedule needs a positive eta"
                );
            }
        }
        let _ = self.resolved_counts()?;
        Ok(())
    }

    /// Number of agents each population entry covers, in file order.
    ///
    /// Fractions resolve to `round(fraction * n)`; the resolved counts must
    /// sum to exactly `game.n`.
    pub fn resolved_counts(&self) -> Result<Vec<usize>> {
        let n = self.game.n;
        let counts: Vec<usize> = self
            .population
            .iter()
            .map(|entry| match (entry.count, entry.fraction) {
                (Some(c), _) => c,
                (None, Some(f)) => (f * n as f64).round() as usize,
                (None, None) => 0,
            })
            .collect();
        let total: usize = counts.iter().sum();
        ensure!(
            total == n,
            "population entries cover {total} agents but game.n = {n}"
        );
        Ok(counts)
    }

    /// Per-agent assignment of population entries, `game.n` long.
    pub fn assignments(&self) -> Result<Vec<&PopulationEntry>> {
        let counts = self.resolved_counts()?;
        let mut out = Vec::with_capacity(self.game.n);
        for (entry, count) in self.population.iter().zip(&counts) {
            for _ in 0..*count {
                out.push(entry);
            }
        }
        Ok(out)
    }
}
