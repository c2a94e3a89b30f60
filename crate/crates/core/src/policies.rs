//! Bandit and expert building blocks.
//!
//! Weights of the multiplicative-update algorithms are stored as
//! log-weights; a 10,000-round run would otherwise underflow `f64`.
//! Rewards live in `[0, 1]` and the adversarial algorithms consume the
//! loss `1 - reward`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_arm, check_unit, BanditError, Result};

/// Default EXP3 mixing parameter, fixed for `T = 10_000` with 2 or 3 arms.
pub const DEFAULT_GAMMA: f64 = 0.085;
/// Default constant `c` of the annealed schedule `eps_t = min(1, c k / t)`.
pub const DEFAULT_EPSILON_CONSTANT: f64 = 5.0;

const SUM_TOLERANCE: f64 = 1e-9;

fn check_arm_count(k: usize) -> Result<usize> {
    if k >= 2 {
        Ok(k)
    } else {
        Err(BanditError::TooFewArms(k))
    }
}

/// Index of a maximal entry, ties broken uniformly at random.
pub fn argmax_random_tie<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut chosen = 0;
    let mut ties = 0u32;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            chosen = i;
            ties = 1;
        } else if v == best {
            // reservoir sampling over the maximizers
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                chosen = i;
            }
        }
    }
    chosen
}

fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// A probability vector over arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDistribution {
    probs: Vec<f64>,
}

impl ArmDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_arm_count(probs.len())?;
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(BanditError::InvalidParameter {
                name: "probs",
                reason: "entries must be finite and non-negative".into(),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(BanditError::NotNormalized(total));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        check_arm_count(k)?;
        Ok(Self { probs: vec![1.0 / k as f64; k] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, arm: usize) -> f64 {
        self.probs[arm]
    }

    pub fn arm_count(&self) -> usize {
        self.probs.len()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding slack above the last partial sum
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// Full-information multiplicative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeState {
    log_weights: Vec<f64>,
    eta: f64,
}

impl HedgeState {
    pub fn new(arm_count: usize, eta: f64) -> Result<Self> {
        Self::from_weights(vec![1.0; check_arm_count(arm_count)?], eta)
    }

    pub fn from_weights(weights: Vec<f64>, eta: f64) -> Result<Self> {
        // a single-expert Hedge is legal here; hierarchies may have M = 1
        if weights.is_empty() {
            return Err(BanditError::TooFewArms(0));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(BanditError::InvalidParameter {
                name: "eta",
                reason: format!("must be finite and non-negative, got {eta}"),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(BanditError::InvalidParameter {
                name: "weights",
                reason: "must be positive and finite".into(),
            });
        }
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            eta,
        })
    }

    pub fn arm_count(&self) -> usize {
        self.log_weights.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Normalized weights. Unlike [`ArmDistribution`] this also admits a
    /// single expert.
    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.log_weights)
    }

    pub fn distribution(&self) -> ArmDistribution {
        ArmDistribution { probs: self.probabilities() }
    }

    /// Multiplies each weight by `exp(-eta * loss)`.
    pub fn update(&mut self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.arm_count() {
            return Err(BanditError::LengthMismatch {
                expected: self.arm_count(),
                got: losses.len(),
            });
        }
        for &l in losses {
            check_unit("loss", l)?;
        }
        for (w, l) in self.log_weights.iter_mut().zip(losses) {
            *w -= self.eta * l;
        }
        Ok(())
    }
}

/// EXP3 with fixed uniform mixing `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3State {
    log_weights: Vec<f64>,
    eta: f64,
    gamma: f64,
}

impl Exp3State {
    /// Uses `eta = gamma / k`.
    pub fn new(arm_count: usize, gamma: f64) -> Result<Self> {
        let k = check_arm_count(arm_count)?;
        Self::with_params(k, gamma / k as f64, gamma)
    }

    pub fn with_params(arm_count: usize, eta: f64, gamma: f64) -> Result<Self> {
        Self::from_weights(vec![1.0; check_arm_count(arm_count)?], eta, gamma)
    }

    pub fn from_weights(weights: Vec<f64>, eta: f64, gamma: f64) -> Result<Self> {
        check_arm_count(weights.len())?;
        check_unit("gamma", gamma)?;
        let hedge = HedgeState::from_weights(weights, eta)?;
        Ok(Self {
            log_weights: hedge.log_weights,
            eta,
            gamma,
        })
    }

    pub fn arm_count(&self) -> usize {
        self.log_weights.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `(1 - gamma) * normalized weights + gamma / k`.
    pub fn distribution(&self) -> ArmDistribution {
        let k = self.arm_count() as f64;
        let probs = softmax(&self.log_weights)
            .into_iter()
            .map(|p| (1.0 - self.gamma) * p + self.gamma / k)
            .collect();
        ArmDistribution { probs }
    }

    /// Draws an arm and returns it with the probability it was drawn with.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let dist = self.distribution();
        let arm = dist.sample(rng);
        (arm, dist.prob(arm))
    }

    /// Importance-weighted update of the played arm:
    /// `w[arm] *= exp(-eta * loss / played_prob)`.
    pub fn update(&mut self, arm: usize, loss: f64, played_prob: f64) -> Result<()> {
        check_arm(arm, self.arm_count())?;
        check_unit("loss", loss)?;
        if !(played_prob.is_finite() && played_prob > 0.0 && played_prob <= 1.0) {
            return Err(BanditError::InvalidProbability {
                what: "played_prob",
                value: played_prob,
            });
        }
        self.log_weights[arm] -= self.eta * loss / played_prob;
        Ok(())
    }
}

/// Beta-Bernoulli posterior with real-valued pseudo-counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThompsonState {
    successes: Vec<f64>,
    failures: Vec<f64>,
}

impl ThompsonState {
    pub fn new(arm_count: usize) -> Result<Self> {
        let k = check_arm_count(arm_count)?;
        Ok(Self {
            successes: vec![0.0; k],
            failures: vec![0.0; k],
        })
    }

    pub fn from_counts(successes: Vec<f64>, failures: Vec<f64>) -> Result<Self> {
        check_arm_count(successes.len())?;
        if successes.len() != failures.len() {
            return Err(BanditError::LengthMismatch {
                expected: successes.len(),
                got: failures.len(),
            });
        }
        if successes.iter().chain(&failures).any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(BanditError::InvalidParameter {
                name: "counts",
                reason: "must be finite and non-negative".into(),
            });
        }
        Ok(Self { successes, failures })
    }

    pub fn arm_count(&self) -> usize {
        self.successes.len()
    }

    pub fn successes(&self) -> &[f64] {
        &self.successes
    }

    pub fn failures(&self) -> &[f64] {
        &self.failures
    }

    /// Total pseudo-count mass credited so far.
    pub fn total_mass(&self) -> f64 {
        self.successes.iter().sum::<f64>() + self.failures.iter().sum::<f64>()
    }

    /// One posterior draw per arm, `theta_i ~ Beta(S_i + prior, F_i + prior)`.
    pub fn sample_thetas<R: Rng + ?Sized>(&self, prior: f64, rng: &mut R) -> Vec<f64> {
        self.successes
            .iter()
            .zip(&self.failures)
            .map(|(&s, &f)| {
                Beta::new(s + prior, f + prior)
                    .expect("posterior parameters are positive and finite")
                    .sample(rng)
            })
            .collect()
    }

    /// Plain Thompson sampling (unit prior).
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.select_with_prior(1.0, rng)
    }

    pub fn select_with_prior<R: Rng + ?Sized>(&self, prior: f64, rng: &mut R) -> usize {
        let thetas = self.sample_thetas(prior, rng);
        argmax_random_tie(&thetas, rng)
    }

    /// Draws `b ~ Bernoulli(reward)` and adds `weight` to `S[arm]` if `b = 1`,
    /// otherwise to `F[arm]`. Returns `b`.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        arm: usize,
        reward: f64,
        weight: f64,
        rng: &mut R,
    ) -> Result<bool> {
        check_arm(arm, self.arm_count())?;
        check_unit("reward", reward)?;
        if !(weight.is_finite() && weight >= 1.0) {
            return Err(BanditError::InvalidParameter {
                name: "weight",
                reason: format!("must be finite and >= 1, got {weight}"),
            });
        }
        let success = rng.random_bool(reward);
        if success {
            self.successes[arm] += weight;
        } else {
            self.failures[arm] += weight;
        }
        Ok(success)
    }

    pub fn posterior_means(&self, prior: f64) -> Vec<f64> {
        self.successes
            .iter()
            .zip(&self.failures)
            .map(|(&s, &f)| (s + prior) / (s + f + 2.0 * prior))
            .collect()
    }

    /// Monte Carlo estimate of the probability that each arm is selected.
    pub fn selection_probabilities<R: Rng + ?Sized>(
        &self,
        prior: f64,
        draws: usize,
        rng: &mut R,
    ) -> Vec<f64> {
        let mut hits = vec![0usize; self.arm_count()];
        for _ in 0..draws {
            hits[self.select_with_prior(prior, rng)] += 1;
        }
        hits.into_iter().map(|h| h as f64 / draws as f64).collect()
    }
}

/// Pseudo-count used by the base Thompson sampler when it is invoked with
/// probability `call_prob`: `1 / call_prob`.
pub fn bts_weight(call_prob: f64) -> Result<f64> {
    if call_prob.is_finite() && call_prob > 0.0 && call_prob <= 1.0 {
        Ok(1.0 / call_prob)
    } else {
        Err(BanditError::InvalidProbability {
            what: "call_prob",
            value: call_prob,
        })
    }
}

/// Epsilon-greedy with `eps_t = min(1, c k / t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonGreedyState {
    counts: Vec<u64>,
    mean_rewards: Vec<f64>,
    round: u64,
    schedule_constant: f64,
}

impl EpsilonGreedyState {
    pub fn new(arm_count: usize, schedule_constant: f64) -> Result<Self> {
        let k = check_arm_count(arm_count)?;
        Self::from_parts(vec![0; k], vec![0.0; k], 1, schedule_constant)
    }

    pub fn from_parts(
        counts: Vec<u64>,
        mean_rewards: Vec<f64>,
        round: u64,
        schedule_constant: f64,
    ) -> Result<Self> {
        check_arm_count(counts.len())?;
        if counts.len() != mean_rewards.len() {
            return Err(BanditError::LengthMismatch {
                expected: counts.len(),
                got: mean_rewards.len(),
            });
        }
        for &m in &mean_rewards {
            check_unit("mean reward", m)?;
        }
        if round == 0 {
            return Err(BanditError::InvalidParameter {
                name: "round",
                reason: "rounds are counted from 1".into(),
            });
        }
        if !(schedule_constant.is_finite() && schedule_constant > 0.0) {
            return Err(BanditError::InvalidParameter {
                name: "schedule_constant",
                reason: format!("must be positive, got {schedule_constant}"),
            });
        }
        Ok(Self {
            counts,
            mean_rewards,
            round,
            schedule_constant,
        })
    }

    pub fn arm_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean_rewards(&self) -> &[f64] {
        &self.mean_rewards
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn epsilon(&self) -> f64 {
        (self.schedule_constant * self.arm_count() as f64 / self.round as f64).min(1.0)
    }

    fn greedy_set(&self) -> Vec<usize> {
        let best = self.mean_rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.arm_count()).filter(|&i| self.mean_rewards[i] == best).collect()
    }

    /// Exact selection distribution for the current round.
    pub fn distribution(&self) -> ArmDistribution {
        let k = self.arm_count() as f64;
        let eps = self.epsilon();
        let greedy = self.greedy_set();
        let mut probs = vec![eps / k; self.arm_count()];
        for &i in &greedy {
            probs[i] += (1.0 - eps) / greedy.len() as f64;
        }
        ArmDistribution { probs }
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if rng.random_bool(self.epsilon()) {
            rng.random_range(0..self.arm_count())
        } else {
            argmax_random_tie(&self.mean_rewards, rng)
        }
    }

    /// Folds `reward` into the running mean of `arm` and advances the clock.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.arm_count())?;
        check_unit("reward", reward)?;
        self.counts[arm] += 1;
        let n = self.counts[arm] as f64;
        self.mean_rewards[arm] += (reward - self.mean_rewards[arm]) / n;
        self.round += 1;
        Ok(())
    }
}

/// Which core algorithm a bandit slot runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Exp3,
    EpsilonGreedy,
    /// Beta-Bernoulli Thompson sampling; importance-weighted (BTS) whenever
    /// its call probability is below one.
    Thompson,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Exp3 => "exp3",
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
            PolicyKind::Thompson => "thompson",
        }
    }
}

/// Hyperparameters shared by all policy kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub gamma: f64,
    /// EXP3 learning rate; `None` means `gamma / k`.
    pub eta: Option<f64>,
    pub epsilon_constant: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            eta: None,
            epsilon_constant: DEFAULT_EPSILON_CONSTANT,
        }
    }
}

impl PolicyParams {
    pub fn exp3(&self, arm_count: usize) -> Result<Exp3State> {
        match self.eta {
            Some(eta) => Exp3State::with_params(arm_count, eta, self.gamma),
            None => Exp3State::new(arm_count, self.gamma),
        }
    }
}

/// A drawn arm with its selection probability when it is known in closed
/// form (it is not for Thompson sampling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmDraw {
    pub arm: usize,
    pub prob: Option<f64>,
}

/// One of the core policies behind a uniform select/credit interface.
///
/// `call_prob` is the probability that the policy is consulted on the
/// current round (1 when it runs alone). EXP3 folds it into the importance
/// weight of the played arm, the Thompson sampler turns it into the
/// pseudo-count `1 / call_prob`, and epsilon-greedy ignores it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasePolicy {
    Exp3(Exp3State),
    EpsilonGreedy(EpsilonGreedyState),
    Thompson(ThompsonState),
}

impl BasePolicy {
    pub fn new(kind: PolicyKind, arm_count: usize, params: &PolicyParams) -> Result<Self> {
        Ok(match kind {
            PolicyKind::Exp3 => BasePolicy::Exp3(params.exp3(arm_count)?),
            PolicyKind::EpsilonGreedy => BasePolicy::EpsilonGreedy(EpsilonGreedyState::new(
                arm_count,
                params.epsilon_constant,
            )?),
            PolicyKind::Thompson => BasePolicy::Thompson(ThompsonState::new(arm_count)?),
        })
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            BasePolicy::Exp3(_) => PolicyKind::Exp3,
            BasePolicy::EpsilonGreedy(_) => PolicyKind::EpsilonGreedy,
            BasePolicy::Thompson(_) => PolicyKind::Thompson,
        }
    }

    pub fn arm_count(&self) -> usize {
        match self {
            BasePolicy::Exp3(s) => s.arm_count(),
            BasePolicy::EpsilonGreedy(s) => s.arm_count(),
            BasePolicy::Thompson(s) => s.arm_count(),
        }
    }

    /// Closed-form selection probability, when one exists.
    pub fn arm_probability(&self, arm: usize) -> Option<f64> {
        match self {
            BasePolicy::Exp3(s) => Some(s.distribution().prob(arm)),
            BasePolicy::EpsilonGreedy(s) => Some(s.distribution().prob(arm)),
            BasePolicy::Thompson(_) => None,
        }
    }

    pub fn select<R: Rng + ?Sized>(&self, call_prob: f64, rng: &mut R) -> Result<ArmDraw> {
        Ok(match self {
            BasePolicy::Exp3(s) => {
                let (arm, p) = s.select(rng);
                ArmDraw { arm, prob: Some(p) }
            }
            BasePolicy::EpsilonGreedy(s) => {
                let arm = s.select(rng);
                ArmDraw {
                    arm,
                    prob: Some(s.distribution().prob(arm)),
                }
            }
            BasePolicy::Thompson(s) => ArmDraw {
                arm: s.select_with_prior(bts_weight(call_prob)?, rng),
                prob: None,
            },
        })
    }

    pub fn credit<R: Rng + ?Sized>(
        &mut self,
        arm: usize,
        reward: f64,
        call_prob: f64,
        rng: &mut R,
    ) -> Result<()> {
        check_unit("reward", reward)?;
        let weight = bts_weight(call_prob)?;
        match self {
            BasePolicy::Exp3(s) => {
                check_arm(arm, s.arm_count())?;
                let played = call_prob * s.distribution().prob(arm);
                s.update(arm, 1.0 - reward, played)
            }
            BasePolicy::EpsilonGreedy(s) => s.update(arm, reward),
            BasePolicy::Thompson(s) => s.update(arm, reward, weight, rng).map(|_| ()),
        }
    }
}
