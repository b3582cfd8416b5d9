//! Builds concrete game instances and observation-noise streams from a
//! config.

use anyhow::{Context, Result};
use kelly_game::{AgentSpec, GameSpec, PaymentSpec, UtilitySpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ExperimentConfig, NoiseSpec};

/// Game with utility weights `a_i = max(a_base - i*gamma, 1)` for agents
/// `i = 1..=n` and zero utility offsets.
pub fn game_from_gamma(
    n: usize,
    a_base: f64,
    gamma: f64,
    delta: f64,
    epsilon: f64,
    budget: f64,
) -> Result<GameSpec> {
    let mut agents = Vec::with_capacity(n);
    for i in 1..=n {
        let a = (a_base - i as f64 * gamma).max(1.0);
        agents.push(
            AgentSpec::log_identity(a, epsilon, budget)
                .with_context(|| format!("agent {i} has invalid parameters"))?,
        );
    }
    GameSpec::new(agents, delta).context("invalid game parameters")
}

/// Bandwidth-slicing game: tenant j with `N_j` subscribers values a slice
/// `x_j` of a link of capacity `B` as `N_j ln(B x_j)`, i.e. a log utility
/// with weight `N_j` and offset `N_j ln(B)`.
pub fn game_from_slicing(
    tenants: &[u64],
    bandwidth: f64,
    delta: f64,
    epsilon: f64,
    budget: f64,
) -> Result<GameSpec> {
    anyhow::ensure!(!tenants.is_empty(), "need at least one tenant");
    let mut agents = Vec::with_capacity(tenants.len());
    for (j, &subscribers) in tenants.iter().enumerate() {
        let a = subscribers as f64;
        let d = a * bandwidth.ln();
        let utility = UtilitySpec::log(a, d)
            .with_context(|| format!("tenant {} has invalid subscriber count", j + 1))?;
        agents.push(
            AgentSpec::new(utility, PaymentSpec::Identity, epsilon, budget)
                .with_context(|| format!("tenant {} has invalid parameters", j + 1))?,
        );
    }
    GameSpec::new(agents, delta).context("invalid game parameters")
}

/// Game instance described by the config (slicing scenario when present).
pub fn game_from_config(config: &ExperimentConfig) -> Result<GameSpec> {
    let g = &config.game;
    match &config.slicing {
        Some(slicing) => game_from_slicing(
            &slicing.tenants,
            slicing.bandwidth,
            g.delta,
            g.epsilon,
            g.budget,
        ),
        None => game_from_gamma(
            g.n,
            g.a_base_or_default(),
            g.gamma,
            g.delta,
            g.epsilon,
            g.budget,
        ),
    }
}

/// Payoff observation offsets for one run: `offsets[t][i]` is added to agent
/// i's recorded payoff in round `t+1`. Returns `None` when no noise is
/// configured, so the noise-free path stays bit-identical to older outputs.
///
/// Samples are drawn round-major from a stream seeded only by `seed`, never
/// by wall clock, keeping runs reproducible.
pub fn noise_offsets(
    noise: &NoiseSpec,
    horizon: usize,
    n: usize,
    seed: u64,
) -> Result<Option<Vec<Vec<f64>>>> {
    match *noise {
        NoiseSpec::None => Ok(None),
        NoiseSpec::Gaussian { mean, std } => {
            let dist = Normal::new(mean, std).context("invalid gaussian noise parameters")?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(Some(
                (0..horizon)
                    .map(|_| (0..n).map(|_| dist.sample(&mut rng)).collect())
                    .collect(),
            ))
        }
        NoiseSpec::Uniform { low, high } => {
            anyhow::ensure!(low <= high, "uniform noise requires low <= high");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(Some(
                (0..horizon)
                    .map(|_| {
                        (0..n)
                            .map(|_| {
                                if low == high {
                                    low
                                } else {
                                    rng.random_range(low..high)
                                }
                            })
                            .collect()
                    })
                    .collect(),
            ))
        }
    }
}
