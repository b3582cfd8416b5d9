//! Stage game: each agent submits a bid from its closed action interval, a
//! unit resource is split in proportion to bids against a reserve `delta`,
//! and each agent pays for its own bid.
//!
//! With bids `z` and `m(z) = sum(z) + delta`, agent `i` receives the fraction
//! `x_i = z_i / m(z)` and collects `V_i(x_i) - p_i(z_i)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{GameError, Result};
use crate::numeric::golden_section_max;

/// Sample count for the numerical screen of custom utility/payment specs.
const ASSUMPTION_GRID: usize = 64;
/// Bracket tolerance for the golden-section best response of custom specs.
const BR_SEARCH_TOL: f64 = 1e-10;
/// Per-axis resolution of the fallback gradient-bound grid.
const GRADIENT_BOUND_GRID: usize = 256;

// ─── scalar function handles ───────────────────────────────────────────────

/// Shared handle to a scalar function, used by custom utilities and payments.
#[derive(Clone)]
pub struct ScalarFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl ScalarFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn(..)")
    }
}

// ─── utilities and payments ────────────────────────────────────────────────

/// Valuation over the allocated fraction `x` in `(0, 1)`; must be increasing
/// and concave.
#[derive(Clone, Debug)]
pub enum UtilitySpec {
    /// `V(x) = a*ln(x) + d` with `a > 0`.
    Log { a: f64, d: f64 },
    /// Caller-supplied `V`, `V'`, `V''`, screened for increasing concavity
    /// on 64 interior sample points at construction.
    Custom {
        value: ScalarFn,
        deriv: ScalarFn,
        second_deriv: ScalarFn,
    },
}

impl UtilitySpec {
    pub fn log(a: f64, d: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() || !d.is_finite() {
            return Err(GameError::InvalidParameter(format!(
                "log utility needs finite a > 0, got a = {a}, d = {d}"
            )));
        }
        Ok(Self::Log { a, d })
    }

    /// Accepts `(V, V', V'')` after checking `V' > 0` and `V'' <= 0` on a
    /// 64-point grid inside `(0, 1)`.
    pub fn custom(value: ScalarFn, deriv: ScalarFn, second_deriv: ScalarFn) -> Result<Self> {
        for k in 0..ASSUMPTION_GRID {
            let x = 0.001 + (0.999 - 0.001) * (k as f64 + 0.5) / ASSUMPTION_GRID as f64;
            let d1 = deriv.eval(x);
            if !(d1 > 0.0) {
                return Err(GameError::AssumptionViolated(format!(
                    "custom utility is not increasing at x = {x:.4} (V' = {d1})"
                )));
            }
            let d2 = second_deriv.eval(x);
            if !(d2 <= 0.0) {
                return Err(GameError::AssumptionViolated(format!(
                    "custom utility is not concave at x = {x:.4} (V'' = {d2})"
                )));
            }
        }
        Ok(Self::Custom {
            value,
            deriv,
            second_deriv,
        })
    }

    pub fn is_log(&self) -> bool {
        matches!(self, Self::Log { .. })
    }

    /// Log weight `a`, if this is a log utility.
    pub fn log_weight(&self) -> Option<f64> {
        match self {
            Self::Log { a, .. } => Some(*a),
            Self::Custom { .. } => None,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Log { a, d } => a * x.ln() + d,
            Self::Custom { value, .. } => value.eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Self::Log { a, .. } => a / x,
            Self::Custom { deriv, .. } => deriv.eval(x),
        }
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        match self {
            Self::Log { a, .. } => -a / (x * x),
            Self::Custom { second_deriv, .. } => second_deriv.eval(x),
        }
    }
}

/// Payment rule over the agent's own bid; must be increasing and convex.
#[derive(Clone, Debug, Default)]
pub enum PaymentSpec {
    /// `p(z) = z`.
    #[default]
    Identity,
    /// Caller-supplied `p`, `p'`, `p''`, screened over the agent's action
    /// interval when the [`AgentSpec`] is built.
    Custom {
        value: ScalarFn,
        deriv: ScalarFn,
        second_deriv: ScalarFn,
    },
}

impl PaymentSpec {
    pub fn custom(value: ScalarFn, deriv: ScalarFn, second_deriv: ScalarFn) -> Self {
        Self::Custom {
            value,
            deriv,
            second_deriv,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity)
    }

    pub fn value(&self, z: f64) -> f64 {
        match self {
            Self::Identity => z,
            Self::Custom { value, .. } => value.eval(z),
        }
    }

    pub fn deriv(&self, z: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Custom { deriv, .. } => deriv.eval(z),
        }
    }

    pub fn second_deriv(&self, z: f64) -> f64 {
        match self {
            Self::Identity => 0.0,
            Self::Custom { second_deriv, .. } => second_deriv.eval(z),
        }
    }
}

// ─── agents ────────────────────────────────────────────────────────────────

/// One bidder: valuation, payment rule, and the closed action interval
/// `[min_bid, budget]` with `0 < min_bid <= budget`.
#[derive(Clone, Debug)]
pub struct AgentSpec {
    utility: UtilitySpec,
    payment: PaymentSpec,
    min_bid: f64,
    budget: f64,
}

impl AgentSpec {
    pub fn new(
        utility: UtilitySpec,
        payment: PaymentSpec,
        min_bid: f64,
        budget: f64,
    ) -> Result<Self> {
        if !(min_bid > 0.0) || !min_bid.is_finite() || !budget.is_finite() || budget < min_bid {
            return Err(GameError::InvalidParameter(format!(
                "action interval needs 0 < min_bid <= budget, got [{min_bid}, {budget}]"
            )));
        }
        if let PaymentSpec::Custom {
            deriv,
            second_deriv,
            ..
        } = &payment
        {
            for k in 0..ASSUMPTION_GRID {
                let z =
                    min_bid + (budget - min_bid) * (k as f64 + 0.5) / ASSUMPTION_GRID as f64;
                let d1 = deriv.eval(z);
                if !(d1 > 0.0) {
                    return Err(GameError::AssumptionViolated(format!(
                        "custom payment is not increasing at z = {z:.4} (p' = {d1})"
                    )));
                }
                let d2 = second_deriv.eval(z);
                if !(d2 >= 0.0) {
                    return Err(GameError::AssumptionViolated(format!(
                        "custom payment is not convex at z = {z:.4} (p'' = {d2})"
                    )));
                }
            }
        }
        Ok(Self {
            utility,
            payment,
            min_bid,
            budget,
        })
    }

    /// Log valuation `a*ln(x)` with identity payment, the workhorse setup.
    pub fn log_identity(a: f64, min_bid: f64, budget: f64) -> Result<Self> {
        Self::new(UtilitySpec::log(a, 0.0)?, PaymentSpec::Identity, min_bid, budget)
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    pub fn payment(&self) -> &PaymentSpec {
        &self.payment
    }

    pub fn min_bid(&self) -> f64 {
        self.min_bid
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Width of the action interval, `budget - min_bid`.
    pub fn diameter(&self) -> f64 {
        self.budget - self.min_bid
    }

    pub fn clip(&self, bid: f64) -> f64 {
        bid.clamp(self.min_bid, self.budget)
    }

    pub fn is_log_identity(&self) -> bool {
        self.utility.is_log() && self.payment.is_identity()
    }

    /// Payoff with own bid `bid` against the opponents-plus-reserve
    /// aggregate `s = sum of other bids + delta`.
    pub fn payoff_given_aggregate(&self, bid: f64, aggregate: f64) -> f64 {
        let x = bid / (bid + aggregate);
        self.utility.value(x) - self.payment.value(bid)
    }

    /// Own-bid payoff slope at a fixed aggregate:
    /// `V'(x) * s / (bid + s)^2 - p'(bid)`.
    pub fn gradient_given_aggregate(&self, bid: f64, aggregate: f64) -> f64 {
        let m = bid + aggregate;
        self.utility.deriv(bid / m) * aggregate / (m * m) - self.payment.deriv(bid)
    }

    /// Payoff-maximizing bid on the action interval against aggregate `s`.
    ///
    /// Log/identity agents use the closed form `(-s + sqrt(s^2 + 4as))/2`
    /// before clipping; the pre-clip value is 0 at `s = 0` by continuity.
    /// Other specs are located by golden-section search.
    pub fn best_response(&self, aggregate: f64) -> Result<f64> {
        if !(aggregate >= 0.0) || !aggregate.is_finite() {
            return Err(GameError::NegativeAggregate(aggregate));
        }
        match (&self.utility, &self.payment) {
            (UtilitySpec::Log { a, .. }, PaymentSpec::Identity) => {
                let s = aggregate;
                let unclipped = 0.5 * (-s + (s * s + 4.0 * a * s).sqrt());
                Ok(self.clip(unclipped))
            }
            _ => Ok(golden_section_max(
                |z| self.payoff_given_aggregate(z, aggregate),
                self.min_bid,
                self.budget,
                BR_SEARCH_TOL,
            )),
        }
    }
}

// ─── bid profiles ──────────────────────────────────────────────────────────

/// Joint bid vector, one entry per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct BidProfile(Vec<f64>);

impl BidProfile {
    pub fn new(bids: Vec<f64>) -> Self {
        Self(bids)
    }

    pub fn bids(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for BidProfile {
    fn from(bids: Vec<f64>) -> Self {
        Self(bids)
    }
}

impl std::ops::Index<usize> for BidProfile {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Worst-case own-gradient magnitude; `certified` marks the closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientBound {
    pub value: f64,
    pub certified: bool,
}

// ─── the game ──────────────────────────────────────────────────────────────

/// The full stage game: agent roster plus the allocator reserve `delta >= 0`.
#[derive(Clone, Debug)]
pub struct GameSpec {
    agents: Vec<AgentSpec>,
    delta: f64,
}

impl GameSpec {
    pub fn new(agents: Vec<AgentSpec>, delta: f64) -> Result<Self> {
        if agents.is_empty() {
            return Err(GameError::InvalidParameter("need at least one agent".into()));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(GameError::InvalidParameter(format!(
                "reserve delta must be finite and nonnegative, got {delta}"
            )));
        }
        Ok(Self { agents, delta })
    }

    /// `n` identical log/identity agents with weight `a` on `[min_bid, budget]`.
    pub fn symmetric_log(n: usize, a: f64, delta: f64, min_bid: f64, budget: f64) -> Result<Self> {
        let agent = AgentSpec::log_identity(a, min_bid, budget)?;
        Self::new(vec![agent; n], delta)
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> Result<&AgentSpec> {
        self.agents.get(i).ok_or(GameError::AgentIndex {
            index: i,
            len: self.agents.len(),
        })
    }

    pub fn all_log_identity(&self) -> bool {
        self.agents.iter().all(AgentSpec::is_log_identity)
    }

    /// Sum of all budgets, the largest possible total bid.
    pub fn total_budget(&self) -> f64 {
        self.agents.iter().map(AgentSpec::budget).sum()
    }

    fn check_len(&self, profile: &BidProfile) -> Result<()> {
        if profile.len() != self.agents.len() {
            return Err(GameError::DimensionMismatch {
                expected: self.agents.len(),
                actual: profile.len(),
            });
        }
        Ok(())
    }

    /// Errors unless every bid lies in its agent's action interval.
    pub fn validate_profile(&self, profile: &BidProfile) -> Result<()> {
        self.check_len(profile)?;
        for (i, (agent, &bid)) in self.agents.iter().zip(profile.bids()).enumerate() {
            if !bid.is_finite() || bid < agent.min_bid || bid > agent.budget {
                return Err(GameError::InfeasibleBid {
                    agent: i,
                    bid,
                    min: agent.min_bid,
                    max: agent.budget,
                });
            }
        }
        Ok(())
    }

    pub fn is_feasible(&self, profile: &BidProfile) -> bool {
        self.validate_profile(profile).is_ok()
    }

    /// Total mass `m(z) = sum(z) + delta`.
    pub fn aggregate(&self, profile: &BidProfile) -> Result<f64> {
        self.check_len(profile)?;
        Ok(profile.bids().iter().sum::<f64>() + self.delta)
    }

    /// Everyone-but-`i` mass `s_i(z) = sum_{j != i} z_j + delta`.
    pub fn opponent_aggregate(&self, i: usize, profile: &BidProfile) -> Result<f64> {
        self.agent(i)?;
        Ok(self.aggregate(profile)? - profile[i])
    }

    /// Proportional shares `x_i = z_i / m(z)`; they sum to
    /// `sum(z) / (sum(z) + delta)`, strictly below 1 whenever `delta > 0`.
    pub fn allocate(&self, profile: &BidProfile) -> Result<Vec<f64>> {
        let m = self.aggregate(profile)?;
        Ok(profile.bids().iter().map(|z| z / m).collect())
    }

    pub fn payoff(&self, i: usize, profile: &BidProfile) -> Result<f64> {
        let s = self.opponent_aggregate(i, profile)?;
        Ok(self.agents[i].payoff_given_aggregate(profile[i], s))
    }

    pub fn payoffs(&self, profile: &BidProfile) -> Result<Vec<f64>> {
        let m = self.aggregate(profile)?;
        Ok(self
            .agents
            .iter()
            .zip(profile.bids())
            .map(|(agent, &z)| agent.payoff_given_aggregate(z, m - z))
            .collect())
    }

    /// Own-bid partial `V_i'(x_i) * (m - z_i)/m^2 - p_i'(z_i)`; for
    /// log/identity this equals `a_i (1/z_i - 1/m) - 1`.
    pub fn payoff_gradient(&self, i: usize, profile: &BidProfile) -> Result<f64> {
        let s = self.opponent_aggregate(i, profile)?;
        Ok(self.agents[i].gradient_given_aggregate(profile[i], s))
    }

    pub fn payoff_gradients(&self, profile: &BidProfile) -> Result<Vec<f64>> {
        let m = self.aggregate(profile)?;
        Ok(self
            .agents
            .iter()
            .zip(profile.bids())
            .map(|(agent, &z)| agent.gradient_given_aggregate(z, m - z))
            .collect())
    }

    /// Upper bound on `|own-bid payoff slope|` over the joint action space.
    ///
    /// Log/identity agents get the closed form `a_i/min_bid_i + 1`
    /// (certified). Anything else falls back to a 256x256 grid over
    /// (own bid, opponent aggregate), reported as not certified.
    pub fn gradient_bound(&self, i: usize) -> Result<GradientBound> {
        let agent = self.agent(i)?;
        if agent.is_log_identity() {
            let a = agent.utility.log_weight().expect("log utility");
            return Ok(GradientBound {
                value: a / agent.min_bid + 1.0,
                certified: true,
            });
        }
        let others = |f: fn(&AgentSpec) -> f64| -> f64 {
            self.agents
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, a)| f(a))
                .sum()
        };
        let s_lo = self.delta + others(AgentSpec::min_bid);
        let s_hi = self.delta + others(AgentSpec::budget);
        let mut worst = 0.0f64;
        for kz in 0..GRADIENT_BOUND_GRID {
            let z = agent.min_bid
                + agent.diameter() * kz as f64 / (GRADIENT_BOUND_GRID - 1) as f64;
            for ks in 0..GRADIENT_BOUND_GRID {
                let s = s_lo + (s_hi - s_lo) * ks as f64 / (GRADIENT_BOUND_GRID - 1) as f64;
                worst = worst.max(agent.gradient_given_aggregate(z, s).abs());
            }
        }
        Ok(GradientBound {
            value: worst,
            certified: false,
        })
    }

    /// Every agent's best response to the aggregates induced by `profile`.
    pub fn best_response_profile(&self, profile: &BidProfile) -> Result<BidProfile> {
        let m = self.aggregate(profile)?;
        let mut out = Vec::with_capacity(self.agents.len());
        for (agent, &z) in self.agents.iter().zip(profile.bids()) {
            out.push(agent.best_response(m - z)?);
        }
        Ok(BidProfile::new(out))
    }
}

// ─── tests ─────────────────────────────────────────────────────────────────
