//! Per-agent bidding algorithms and the synchronous repeated-game loop.
//!
//! Four update rules are provided: projected online gradient descent
//! (`Ogd`), dual averaging over the raw gradient sum (`Daq`), a regularized
//! quadratic-mirror rule over an eta-weighted gradient sum (`Rmq`), and the
//! myopic best response (`Br`). All agents observe the same end-of-round
//! snapshot and update simultaneously; rounds are numbered from t = 1 so
//! that 1/sqrt(t) schedules are finite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GameError, Result};
use crate::game::{AgentSpec, BidProfile, GameSpec};

/// Learning-rate schedule for the first-order rules. `diameter` and
/// `bound` are the agent's action-interval width and gradient bound,
/// injected by the caller at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateSchedule {
    /// `eta = diameter / (bound * sqrt(horizon))`, constant over the run.
    FixedHorizon { horizon: usize },
    /// `eta_t = diameter / (bound * sqrt(t))`.
    Adaptive,
    /// `eta_t = diameter / (2 * bound * sqrt(t))`, the dual-averaging rate.
    AdaptiveDaq,
    /// `eta_t = scale * t^(-beta)` with `beta` in (1/2, 1], which keeps
    /// the squared rates summable.
    Power { beta: f64, scale: f64 },
    /// `eta_t = eta` for all t.
    Constant { eta: f64 },
}

impl RateSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::FixedHorizon { horizon } => {
                if horizon == 0 {
                    return Err(GameError::InvalidParameter(
                        "fixed-horizon schedule needs horizon >= 1".into(),
                    ));
                }
            }
            Self::Adaptive | Self::AdaptiveDaq => {}
            Self::Power { beta, scale } => {
                if !(beta > 0.5 && beta <= 1.0) {
                    return Err(GameError::InvalidParameter(format!(
                        "power schedule needs beta in (1/2, 1], got {beta}"
                    )));
                }
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(GameError::InvalidParameter(format!(
                        "power schedule needs a positive finite scale, got {scale}"
                    )));
                }
            }
            Self::Constant { eta } => {
                if !(eta > 0.0) || !eta.is_finite() {
                    return Err(GameError::InvalidParameter(format!(
                        "constant schedule needs a positive finite rate, got {eta}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rate at round `t >= 1` for an agent with the given interval width
    /// and gradient bound.
    pub fn rate(&self, t: usize, diameter: f64, bound: f64) -> f64 {
        let t = t.max(1) as f64;
        match *self {
            Self::FixedHorizon { horizon } => diameter / (bound * (horizon as f64).sqrt()),
            Self::Adaptive => diameter / (bound * t.sqrt()),
            Self::AdaptiveDaq => diameter / (2.0 * bound * t.sqrt()),
            Self::Power { beta, scale } => scale * t.powf(-beta),
            Self::Constant { eta } => eta,
        }
    }
}

/// Which update rule an agent runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LearnerKind {
    Ogd,
    Daq,
    /// Quadratic-mirror rule with prox weight `lambda > 0`.
    Rmq { lambda: f64 },
    Br,
}

/// Immutable configuration for one agent's algorithm: rule, schedule, and
/// the diameter/bound constants the schedule consumes.
#[derive(Clone, Debug)]
pub struct Learner {
    pub kind: LearnerKind,
    pub schedule: RateSchedule,
    pub rate_diameter: f64,
    pub rate_bound: f64,
}

impl Learner {
    /// Best responder; needs no schedule.
    pub fn br() -> Self {
        Self {
            kind: LearnerKind::Br,
            schedule: RateSchedule::Constant { eta: 1.0 },
            rate_diameter: 1.0,
            rate_bound: 1.0,
        }
    }

    /// A first-order learner (`Ogd`, `Daq`, or `Rmq`) with explicit
    /// diameter and gradient-bound constants for its schedule.
    pub fn first_order(
        kind: LearnerKind,
        schedule: RateSchedule,
        rate_diameter: f64,
        rate_bound: f64,
    ) -> Result<Self> {
        if kind == LearnerKind::Br {
            return Err(GameError::InvalidParameter(
                "best responders take no rate schedule; use Learner::br".into(),
            ));
        }
        if let LearnerKind::Rmq { lambda } = kind {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(GameError::InvalidParameter(format!(
                    "quadratic-mirror prox weight must be positive, got {lambda}"
                )));
            }
        }
        schedule.validate()?;
        if !(rate_diameter > 0.0) || !(rate_bound > 0.0) {
            return Err(GameError::InvalidParameter(format!(
                "schedules need positive diameter and gradient bound, got D = \
                 {rate_diameter}, G = {rate_bound}"
            )));
        }
        Ok(Self {
            kind,
            schedule,
            rate_diameter,
            rate_bound,
        })
    }

    /// [`Learner::first_order`] with the diameter and certified worst-case
    /// gradient bound read off agent `i` of `game`.
    pub fn with_certified_rates(
        kind: LearnerKind,
        schedule: RateSchedule,
        game: &GameSpec,
        i: usize,
    ) -> Result<Self> {
        let agent = game.agent(i)?;
        let bound = game.gradient_bound(i)?;
        Self::first_order(kind, schedule, agent.diameter(), bound.value)
    }
}

/// Mutable per-agent algorithm state inside a run.
#[derive(Clone, Debug)]
pub struct LearnerState {
    pub kind: LearnerKind,
    pub schedule: RateSchedule,
    pub current_bid: f64,
    /// Gradient sum for `Daq` (unweighted) and `Rmq` (eta-weighted);
    /// always 0 for `Ogd` and `Br`.
    pub dual_accumulator: f64,
    /// Round counter, starting at 1.
    pub step: usize,
    pub rate_diameter: f64,
    pub rate_bound: f64,
}

impl LearnerState {
    pub fn new(learner: &Learner, initial_bid: f64) -> Self {
        Self {
            kind: learner.kind,
            schedule: learner.schedule,
            current_bid: initial_bid,
            dual_accumulator: 0.0,
            step: 1,
            rate_diameter: learner.rate_diameter,
            rate_bound: learner.rate_bound,
        }
    }

    fn require_kind(&self, expected: &str, ok: bool) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(GameError::InvalidParameter(format!(
                "update rule mismatch: state runs {:?}, caller asked for {expected}",
                self.kind
            )))
        }
    }

    fn rate_at(&self, t: usize) -> f64 {
        self.schedule.rate(t, self.rate_diameter, self.rate_bound)
    }

    /// Gradient ascent step: `bid <- clip(bid + eta_{t+1} * gradient)`.
    pub fn step_ogd(&mut self, gradient: f64, agent: &AgentSpec) -> Result<()> {
        self.require_kind("Ogd", self.kind == LearnerKind::Ogd)?;
        let eta = self.rate_at(self.step + 1);
        self.current_bid = agent.clip(self.current_bid + eta * gradient);
        self.step += 1;
        Ok(())
    }

    /// Lazy dual-averaging step: `sum += gradient`,
    /// `bid <- clip(eta_{t+1} * sum)`.
    pub fn step_daq(&mut self, gradient: f64, agent: &AgentSpec) -> Result<()> {
        self.require_kind("Daq", self.kind == LearnerKind::Daq)?;
        self.dual_accumulator += gradient;
        let eta = self.rate_at(self.step + 1);
        self.current_bid = agent.clip(eta * self.dual_accumulator);
        self.step += 1;
        Ok(())
    }

    /// Weighted-sum mirror step: `sum += eta_t * gradient`,
    /// `bid <- clip(lambda * sum)`.
    pub fn step_rmq(&mut self, gradient: f64, agent: &AgentSpec) -> Result<()> {
        let lambda = match self.kind {
            LearnerKind::Rmq { lambda } => lambda,
            _ => {
                return self.require_kind("Rmq", false);
            }
        };
        let eta = self.rate_at(self.step);
        self.dual_accumulator += eta * gradient;
        self.current_bid = agent.clip(lambda * self.dual_accumulator);
        self.step += 1;
        Ok(())
    }

    /// Myopic step: `bid <- best_response(aggregate)`, independent of the
    /// previous bid.
    pub fn step_br(&mut self, aggregate: f64, agent: &AgentSpec) -> Result<()> {
        self.require_kind("Br", self.kind == LearnerKind::Br)?;
        self.current_bid = agent.best_response(aggregate)?;
        self.step += 1;
        Ok(())
    }

    /// Dispatches to the state's own rule. `gradient` and `aggregate` must
    /// both come from the same pre-update snapshot.
    pub fn advance(&mut self, gradient: f64, aggregate: f64, agent: &AgentSpec) -> Result<()> {
        match self.kind {
            LearnerKind::Ogd => self.step_ogd(gradient, agent),
            LearnerKind::Daq => self.step_daq(gradient, agent),
            LearnerKind::Rmq { .. } => self.step_rmq(gradient, agent),
            LearnerKind::Br => self.step_br(aggregate, agent),
        }
    }
}

/// Where round-1 bids come from.
#[derive(Clone, Debug)]
pub enum InitialBids {
    /// Use this exact profile.
    Profile(BidProfile),
    /// Draw each agent's bid uniformly from its action interval using the
    /// run seed.
    SeededUniform,
}

/// Time-indexed record of one run: round-major matrices of bids, payoffs,
/// and gradients, plus the per-round fixed-point residual.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `bids[t-1][i]` is agent i's bid at round t.
    pub bids: Vec<Vec<f64>>,
    pub payoffs: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<f64>>,
    /// `residuals[t-1]` is `||BR(z(t)) - z(t)||_2`.
    pub residuals: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.bids.len()
    }

    pub fn n(&self) -> usize {
        self.bids.first().map_or(0, Vec::len)
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("horizon >= 1")
    }
}

/// Plays the repeated game for `horizon` rounds.
///
/// Each round records the current profile's payoffs, gradients, and
/// best-response residual, then every learner updates simultaneously from
/// that same snapshot. Identical inputs (including `seed`) reproduce the
/// trajectory bit for bit.
pub fn run_dynamics(
    game: &GameSpec,
    learners: &[Learner],
    horizon: usize,
    initial: &InitialBids,
    seed: u64,
) -> Result<Trajectory> {
    if learners.len() != game.n() {
        return Err(GameError::DimensionMismatch {
            expected: game.n(),
            actual: learners.len(),
        });
    }
    if horizon == 0 {
        return Err(GameError::InvalidParameter("horizon must be >= 1".into()));
    }
    let initial_bids: Vec<f64> = match initial {
        InitialBids::Profile(profile) => {
            game.validate_profile(profile)?;
            profile.bids().to_vec()
        }
        InitialBids::SeededUniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            game.agents()
                .iter()
                .map(|a| rng.random_range(a.min_bid()..=a.budget()))
                .collect()
        }
    };
    let mut states: Vec<LearnerState> = learners
        .iter()
        .zip(&initial_bids)
        .map(|(learner, &bid)| LearnerState::new(learner, bid))
        .collect();

    let n = game.n();
    let mut bids = Vec::with_capacity(horizon);
    let mut payoffs = Vec::with_capacity(horizon);
    let mut gradients = Vec::with_capacity(horizon);
    let mut residuals = Vec::with_capacity(horizon);

    for _ in 0..horizon {
        let z: Vec<f64> = states.iter().map(|s| s.current_bid).collect();
        let m: f64 = z.iter().sum::<f64>() + game.delta();
        let mut round_payoffs = Vec::with_capacity(n);
        let mut round_gradients = Vec::with_capacity(n);
        let mut residual_sq = 0.0;
        for (agent, &bid) in game.agents().iter().zip(&z) {
            let s = m - bid;
            round_payoffs.push(agent.payoff_given_aggregate(bid, s));
            round_gradients.push(agent.gradient_given_aggregate(bid, s));
            let br = agent.best_response(s)?;
            residual_sq += (br - bid) * (br - bid);
        }
        // Simultaneous update: every learner reads the same snapshot.
        for (i, state) in states.iter_mut().enumerate() {
            state.advance(round_gradients[i], m - z[i], &game.agents()[i])?;
        }
        bids.push(z);
        payoffs.push(round_payoffs);
        gradients.push(round_gradients);
        residuals.push(residual_sq.sqrt());
    }

    Ok(Trajectory {
        bids,
        payoffs,
        gradients,
        residuals,
        seed,
    })
}

// ─── tests ─────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference_game(n: usize) -> GameSpec {
        GameSpec::symmetric_log(n, 100.0, 0.1, 1.0, 400.0).unwrap()
    }

    fn constant(eta: f64) -> RateSchedule {
        RateSchedule::Constant { eta }
    }

    #[test]
    fn schedule_rates_match_hand_values() {
        let fixed = RateSchedule::FixedHorizon { horizon: 4 };
        assert_relative_eq!(fixed.rate(1, 2.0, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(fixed.rate(99, 2.0, 1.0), 1.0, epsilon = 1e-15);

        let adaptive = RateSchedule::Adaptive;
        assert_relative_eq!(
            adaptive.rate(9, 399.0, 101.0),
            399.0 / 303.0,
            epsilon = 1e-12
        );
        let halved = RateSchedule::AdaptiveDaq;
        assert_relative_eq!(
            halved.rate(9, 399.0, 101.0),
            0.658_415_841_584_158_4,
            epsilon = 1e-12
        );

        let power = RateSchedule::Power {
            beta: 0.6,
            scale: 2.0,
        };
        assert_relative_eq!(power.rate(32, 7.0, 7.0), 0.25, epsilon = 1e-12);

        assert_relative_eq!(constant(0.7).rate(1234, 1.0, 1.0), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn schedule_validation_rejects_bad_parameters() {
        assert!(RateSchedule::FixedHorizon { horizon: 0 }.validate().is_err());
        for beta in [0.3, 0.5, 1.001] {
            assert!(RateSchedule::Power { beta, scale: 1.0 }.validate().is_err());
        }
        assert!(RateSchedule::Power { beta: 1.0, scale: 1.0 }.validate().is_ok());
        assert!(RateSchedule::Power { beta: 0.6, scale: 0.0 }.validate().is_err());
        assert!(constant(0.0).validate().is_err());
        assert!(constant(-0.1).validate().is_err());
    }

    #[test]
    fn learner_constructors_validate() {
        assert!(Learner::first_order(LearnerKind::Br, constant(0.1), 1.0, 1.0).is_err());
        assert!(
            Learner::first_order(LearnerKind::Rmq { lambda: 0.0 }, constant(0.1), 1.0, 1.0)
                .is_err()
        );
        assert!(Learner::first_order(LearnerKind::Ogd, constant(0.1), 0.0, 1.0).is_err());
        let game = reference_game(2);
        let certified =
            Learner::with_certified_rates(LearnerKind::Ogd, RateSchedule::Adaptive, &game, 0)
                .unwrap();
        assert_relative_eq!(certified.rate_diameter, 399.0, epsilon = 1e-12);
        assert_relative_eq!(certified.rate_bound, 101.0, epsilon = 1e-12);
    }

    #[test]
    fn ogd_step_moves_along_gradient_and_projects() {
        let agent = AgentSpec::log_identity(100.0, 1.0, 400.0).unwrap();
        let learner = Learner::first_order(LearnerKind::Ogd, constant(0.1), 1.0, 1.0).unwrap();

        let mut state = LearnerState::new(&learner, 50.0);
        state.step_ogd(10.0, &agent).unwrap();
        assert_relative_eq!(state.current_bid, 51.0, epsilon = 1e-12);
        assert_eq!(state.step, 2);
        assert_eq!(state.dual_accumulator, 0.0);

        let mut stationary = LearnerState::new(&learner, 50.0);
        stationary.step_ogd(0.0, &agent).unwrap();
        assert_relative_eq!(stationary.current_bid, 50.0, epsilon = 1e-15);

        let wide = Learner::first_order(LearnerKind::Ogd, constant(1.0), 1.0, 1.0).unwrap();
        let mut clipped = LearnerState::new(&wide, 399.0);
        clipped.step_ogd(10.0, &agent).unwrap();
        assert_relative_eq!(clipped.current_bid, 400.0, epsilon = 1e-15);

        assert!(state.step_daq(1.0, &agent).is_err());
    }

    #[test]
    fn daq_step_replays_the_whole_gradient_sum() {
        let agent = AgentSpec::log_identity(100.0, 1.0, 400.0).unwrap();
        let learner = Learner::first_order(LearnerKind::Daq, constant(0.5), 1.0, 1.0).unwrap();

        let mut state = LearnerState::new(&learner, 200.0);
        state.step_daq(100.0, &agent).unwrap();
        assert_relative_eq!(state.dual_accumulator, 100.0, epsilon = 1e-15);
        assert_relative_eq!(state.current_bid, 50.0, epsilon = 1e-12);

        // Zero gradients forget the initial bid entirely: clip(0) = floor.
        let mut idle = LearnerState::new(&learner, 200.0);
        for _ in 0..3 {
            idle.step_daq(0.0, &agent).unwrap();
        }
        assert_relative_eq!(idle.current_bid, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rmq_step_weights_gradients_by_the_current_rate() {
        let agent = AgentSpec::log_identity(100.0, 1.0, 400.0).unwrap();
        let learner =
            Learner::first_order(LearnerKind::Rmq { lambda: 0.5 }, constant(1.0), 1.0, 1.0)
                .unwrap();
        let mut state = LearnerState::new(&learner, 17.0);
        state.step_rmq(200.0, &agent).unwrap();
        assert_relative_eq!(state.dual_accumulator, 200.0, epsilon = 1e-15);
        assert_relative_eq!(state.current_bid, 100.0, epsilon = 1e-12);

        let mut idle = LearnerState::new(&learner, 17.0);
        idle.step_rmq(0.0, &agent).unwrap();
        assert_relative_eq!(idle.current_bid, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn br_step_is_memoryless() {
        let agent = AgentSpec::log_identity(100.0, 1.0, 400.0).unwrap();
        let mut low = LearnerState::new(&Learner::br(), 1.0);
        let mut high = LearnerState::new(&Learner::br(), 400.0);
        low.step_br(100.0, &agent).unwrap();
        high.step_br(100.0, &agent).unwrap();
        assert_relative_eq!(low.current_bid, 61.803_398_874_989_48, epsilon = 1e-10);
        assert_relative_eq!(low.current_bid, high.current_bid, epsilon = 1e-15);
        assert_eq!(low.dual_accumulator, 0.0);
    }

    #[test]
    fn daq_equals_rmq_with_unit_prox_and_constant_rate() {
        // eta = 0.5 is a power of two, so scaling distributes exactly over
        // the gradient sum and the two accumulators agree bit for bit.
        let game = reference_game(4);
        let daq: Vec<Learner> = (0..4)
            .map(|_| Learner::first_order(LearnerKind::Daq, constant(0.5), 1.0, 1.0).unwrap())
            .collect();
        let rmq: Vec<Learner> = (0..4)
            .map(|_| {
                Learner::first_order(LearnerKind::Rmq { lambda: 1.0 }, constant(0.5), 1.0, 1.0)
                    .unwrap()
            })
            .collect();
        let a = run_dynamics(&game, &daq, 60, &InitialBids::SeededUniform, 314).unwrap();
        let b = run_dynamics(&game, &rmq, 60, &InitialBids::SeededUniform, 314).unwrap();
        assert_eq!(a.bids, b.bids);
        assert_eq!(a.payoffs, b.payoffs);
        assert_eq!(a.gradients, b.gradients);
        assert_eq!(a.residuals, b.residuals);

        // For a non-dyadic rate the identity holds up to rounding.
        let daq9: Vec<Learner> = (0..4)
            .map(|_| Learner::first_order(LearnerKind::Daq, constant(0.9), 1.0, 1.0).unwrap())
            .collect();
        let rmq9: Vec<Learner> = (0..4)
            .map(|_| {
                Learner::first_order(LearnerKind::Rmq { lambda: 1.0 }, constant(0.9), 1.0, 1.0)
                    .unwrap()
            })
            .collect();
        let a9 = run_dynamics(&game, &daq9, 60, &InitialBids::SeededUniform, 314).unwrap();
        let b9 = run_dynamics(&game, &rmq9, 60, &InitialBids::SeededUniform, 314).unwrap();
        for (ra, rb) in a9.bids.iter().zip(&b9.bids) {
            for (&x, &y) in ra.iter().zip(rb) {
                assert_relative_eq!(x, y, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_bit_identical_runs() {
        let game = reference_game(3);
        let learners = vec![
            Learner::br(),
            Learner::first_order(LearnerKind::Ogd, RateSchedule::Adaptive, 399.0, 101.0).unwrap(),
            Learner::first_order(LearnerKind::Daq, RateSchedule::AdaptiveDaq, 399.0, 101.0)
                .unwrap(),
        ];
        let a = run_dynamics(&game, &learners, 50, &InitialBids::SeededUniform, 99).unwrap();
        let b = run_dynamics(&game, &learners, 50, &InitialBids::SeededUniform, 99).unwrap();
        assert_eq!(a.bids, b.bids);
        assert_eq!(a.residuals, b.residuals);
        let c = run_dynamics(&game, &learners, 50, &InitialBids::SeededUniform, 100).unwrap();
        assert_ne!(a.bids[0], c.bids[0]);
    }

    #[test]
    fn single_round_records_initial_profile() {
        let game = reference_game(2);
        let learners = vec![Learner::br(), Learner::br()];
        let start = BidProfile::new(vec![10.0, 20.0]);
        let t = run_dynamics(&game, &learners, 1, &InitialBids::Profile(start), 0).unwrap();
        assert_eq!(t.horizon(), 1);
        assert_eq!(t.bids[0], vec![10.0, 20.0]);
        let expected = game.payoffs(&vec![10.0, 20.0].into()).unwrap();
        assert_eq!(t.payoffs[0], expected);
    }

    #[test]
    fn update_order_does_not_matter() {
        // Reversing agent order (game, learners, and initial bids together)
        // must produce the column-reversed trajectory: updates read one
        // shared snapshot, so there is no within-round ordering effect.
        let agents = vec![
            AgentSpec::log_identity(100.0, 1.0, 400.0).unwrap(),
            AgentSpec::log_identity(60.0, 2.0, 300.0).unwrap(),
            AgentSpec::log_identity(80.0, 0.5, 350.0).unwrap(),
        ];
        let learners = vec![
            Learner::br(),
            Learner::first_order(LearnerKind::Ogd, RateSchedule::Adaptive, 298.0, 31.0).unwrap(),
            Learner::first_order(LearnerKind::Rmq { lambda: 1.0 }, constant(0.3), 1.0, 1.0)
                .unwrap(),
        ];
        let start = vec![5.0, 6.0, 7.0];

        let forward = run_dynamics(
            &GameSpec::new(agents.clone(), 0.1).unwrap(),
            &learners,
            40,
            &InitialBids::Profile(start.clone().into()),
            0,
        )
        .unwrap();

        let reversed_game =
            GameSpec::new(agents.iter().rev().cloned().collect(), 0.1).unwrap();
        let reversed_learners: Vec<Learner> = learners.iter().rev().cloned().collect();
        let reversed_start: Vec<f64> = start.iter().rev().copied().collect();
        let reversed = run_dynamics(
            &reversed_game,
            &reversed_learners,
            40,
            &InitialBids::Profile(reversed_start.into()),
            0,
        )
        .unwrap();

        // Reversing the roster also reverses the aggregate's summation
        // order, so agreement is to rounding, not bitwise.
        for t in 0..40 {
            for i in 0..3 {
                assert_relative_eq!(
                    forward.bids[t][i],
                    reversed.bids[t][2 - i],
                    max_relative = 1e-9
                );
            }
            assert_relative_eq!(
                forward.residuals[t],
                reversed.residuals[t],
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn dimension_and_horizon_errors() {
        let game = reference_game(2);
        let learners = vec![Learner::br()];
        assert!(run_dynamics(&game, &learners, 5, &InitialBids::SeededUniform, 0).is_err());
        let two = vec![Learner::br(), Learner::br()];
        assert!(run_dynamics(&game, &two, 0, &InitialBids::SeededUniform, 0).is_err());
    }

    #[test]
    fn best_response_population_converges_within_fifteen_rounds() {
        let game = reference_game(10);
        let learners = vec![Learner::br(); 10];
        let t = run_dynamics(&game, &learners, 30, &InitialBids::SeededUniform, 42).unwrap();
        let crossing = t
            .residuals
            .iter()
            .position(|&r| r < 1e-5)
            .map(|i| i + 1)
            .expect("should converge");
        assert!(crossing <= 15, "crossed at round {crossing}");
    }

    #[test]
    fn gradient_population_with_power_rates_converges() {
        let game = reference_game(10);
        let learners: Vec<Learner> = (0..10)
            .map(|i| {
                let schedule = RateSchedule::Power {
                    beta: 0.6,
                    scale: 40.0 * (1.0 + 0.1 * (i as f64 + 1.0)),
                };
                Learner::first_order(LearnerKind::Ogd, schedule, 399.0, 101.0).unwrap()
            })
            .collect();
        let t = run_dynamics(&game, &learners, 3000, &InitialBids::SeededUniform, 7).unwrap();
        assert!(
            t.final_residual() < 1e-3,
            "final residual {}",
            t.final_residual()
        );
    }

    #[test]
    fn lazy_population_with_fixed_horizon_rates_converges() {
        // Fixed-horizon rate D/(G sqrt(T)) with the budget-side slope bound
        // G = a/c + 1; the worst-case bound a/eps + 1 is far too
        // conservative to move bids across a [1, 400] interval in 3000
        // rounds.
        let game = reference_game(10);
        let learners: Vec<Learner> = (0..10)
            .map(|_| {
                Learner::first_order(
                    LearnerKind::Daq,
                    RateSchedule::FixedHorizon { horizon: 3000 },
                    399.0,
                    100.0 / 400.0 + 1.0,
                )
                .unwrap()
            })
            .collect();
        let t = run_dynamics(&game, &learners, 3000, &InitialBids::SeededUniform, 5).unwrap();
        assert!(
            t.final_residual() < 1e-4,
            "final residual {}",
            t.final_residual()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn every_recorded_bid_stays_feasible(seed in any::<u64>(), horizon in 1usize..40) {
            let game = GameSpec::new(
                vec![
                    AgentSpec::log_identity(100.0, 1.0, 400.0).unwrap(),
                    AgentSpec::log_identity(50.0, 2.0, 120.0).unwrap(),
                    AgentSpec::log_identity(75.0, 0.5, 260.0).unwrap(),
                    AgentSpec::log_identity(10.0, 1.5, 90.0).unwrap(),
                ],
                0.1,
            )
            .unwrap();
            let learners = vec![
                Learner::br(),
                Learner::first_order(LearnerKind::Ogd, RateSchedule::Adaptive, 118.0, 26.0)
                    .unwrap(),
                Learner::first_order(LearnerKind::Daq, RateSchedule::FixedHorizon { horizon: 40 },
                    259.5, 151.0).unwrap(),
                Learner::first_order(LearnerKind::Rmq { lambda: 1.0 },
                    RateSchedule::Constant { eta: 0.4 }, 1.0, 1.0).unwrap(),
            ];
            let t = run_dynamics(&game, &learners, horizon, &InitialBids::SeededUniform, seed)
                .unwrap();
            prop_assert_eq!(t.horizon(), horizon);
            for row in &t.bids {
                for (agent, &bid) in game.agents().iter().zip(row) {
                    prop_assert!(bid >= agent.min_bid() && bid <= agent.budget());
                }
            }
            for &r in &t.residuals {
                prop_assert!(r >= 0.0);
            }
        }
    }
}
