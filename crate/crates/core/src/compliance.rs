//! The two-arm compliance world: latent subpopulations, their deterministic
//! compliance behaviors, Bernoulli outcomes, and the reward protocols that
//! decide which arm an observed reward is credited to.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_arm, check_unit, BanditError, Result};
use crate::policies::ArmDistribution;

/// Arms in the population model: 0 = control, 1 = treatment.
pub const TWO_ARMS: usize = 2;

/// Deterministic compliance behavior of a patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subpopulation {
    NeverTaker,
    AlwaysTaker,
    Complier,
    Defier,
}

impl Subpopulation {
    pub const ALL: [Subpopulation; 4] = [
        Subpopulation::NeverTaker,
        Subpopulation::AlwaysTaker,
        Subpopulation::Complier,
        Subpopulation::Defier,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Subpopulation::NeverTaker => 'N',
            Subpopulation::AlwaysTaker => 'A',
            Subpopulation::Complier => 'C',
            Subpopulation::Defier => 'D',
        }
    }

    /// Arm actually taken when `chosen` is recommended.
    pub fn apply(self, chosen: usize) -> Result<usize> {
        check_arm(chosen, TWO_ARMS)?;
        Ok(match self {
            Subpopulation::NeverTaker => 0,
            Subpopulation::AlwaysTaker => 1,
            Subpopulation::Complier => chosen,
            Subpopulation::Defier => 1 - chosen,
        })
    }
}

impl fmt::Display for Subpopulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

pub fn apply_behavior(s: Subpopulation, chosen: usize) -> Result<usize> {
    s.apply(chosen)
}

/// Rule assigning an observed reward to an arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Credit the recommended arm.
    Chosen,
    /// Credit the arm actually taken.
    Actual,
    /// Credit the recommended arm only if it was actually taken.
    Comply,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Chosen, Protocol::Actual, Protocol::Comply];

    pub fn label(self) -> &'static str {
        match self {
            Protocol::Chosen => "chosen",
            Protocol::Actual => "actual",
            Protocol::Comply => "comply",
        }
    }

    /// Arm credited for a (chosen, actual) pair, if any.
    pub fn credited_arm(self, chosen: usize, actual: usize) -> Option<usize> {
        match self {
            Protocol::Chosen => Some(chosen),
            Protocol::Actual => Some(actual),
            Protocol::Comply => (chosen == actual).then_some(chosen),
        }
    }

    pub fn route(self, rec: &InteractionRecord) -> Option<(usize, f64)> {
        self.credited_arm(rec.chosen, rec.actual).map(|arm| (arm, rec.reward))
    }
}

pub fn protocol_route(p: Protocol, rec: &InteractionRecord) -> Option<(usize, f64)> {
    p.route(rec)
}

/// Observables of one round. `subpop` is diagnostic and never read by
/// policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub chosen: usize,
    pub actual: usize,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subpop: Option<Subpopulation>,
}

impl InteractionRecord {
    pub fn new(chosen: usize, actual: usize, reward: f64) -> Self {
        Self {
            chosen,
            actual,
            reward,
            subpop: None,
        }
    }

    pub fn validate(&self, arm_count: usize) -> Result<()> {
        check_arm(self.chosen, arm_count)?;
        check_arm(self.actual, arm_count)?;
        check_unit("reward", self.reward)?;
        Ok(())
    }
}

/// Mixture over subpopulations with per-(subpopulation, arm) mean rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PopulationModelJson", into = "PopulationModelJson")]
pub struct PopulationModel {
    probs: [f64; 4],
    reward_means: [[f64; 2]; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct MixtureJson {
    N: f64,
    A: f64,
    C: f64,
    D: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PopulationModelJson {
    probs: MixtureJson,
    reward_means: [[f64; 2]; 4],
}

impl TryFrom<PopulationModelJson> for PopulationModel {
    type Error = BanditError;

    fn try_from(j: PopulationModelJson) -> Result<Self> {
        PopulationModel::new([j.probs.N, j.probs.A, j.probs.C, j.probs.D], j.reward_means)
    }
}

impl From<PopulationModel> for PopulationModelJson {
    fn from(m: PopulationModel) -> Self {
        let [n, a, c, d] = m.probs;
        PopulationModelJson {
            probs: MixtureJson { N: n, A: a, C: c, D: d },
            reward_means: m.reward_means,
        }
    }
}

impl PopulationModel {
    /// `probs` and `reward_means` are indexed in [`Subpopulation::ALL`] order.
    pub fn new(probs: [f64; 4], reward_means: [[f64; 2]; 4]) -> Result<Self> {
        for &p in &probs {
            check_unit("subpopulation probability", p)?;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(BanditError::NotNormalized(total));
        }
        for row in &reward_means {
            for &r in row {
                check_unit("reward mean", r)?;
            }
        }
        Ok(Self { probs, reward_means })
    }

    /// Rewards depend on the arm taken only.
    pub fn homogeneous(probs: [f64; 4], arm_means: [f64; 2]) -> Result<Self> {
        Self::new(probs, [arm_means; 4])
    }

    pub fn prob(&self, s: Subpopulation) -> f64 {
        self.probs[s.index()]
    }

    pub fn probs(&self) -> [f64; 4] {
        self.probs
    }

    pub fn reward_mean(&self, s: Subpopulation, arm: usize) -> f64 {
        self.reward_means[s.index()][arm]
    }

    pub fn reward_means(&self) -> [[f64; 2]; 4] {
        self.reward_means
    }

    pub fn sample_patient<R: Rng + ?Sized>(&self, rng: &mut R) -> Subpopulation {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for s in Subpopulation::ALL {
            acc += self.prob(s);
            if u < acc {
                return s;
            }
        }
        *Subpopulation::ALL
            .iter()
            .rev()
            .find(|s| self.prob(**s) > 0.0)
            .expect("probabilities sum to one")
    }

    /// Bernoulli draw with mean `r_{s, actual}`.
    pub fn realize_reward<R: Rng + ?Sized>(
        &self,
        s: Subpopulation,
        actual: usize,
        rng: &mut R,
    ) -> Result<f64> {
        check_arm(actual, TWO_ARMS)?;
        let p = self.reward_mean(s, actual);
        Ok(if rng.random_bool(p) { 1.0 } else { 0.0 })
    }

    /// Expected reward of recommending `chosen`: `sum_s p_s r_{s, s(chosen)}`.
    pub fn chosen_arm_value(&self, chosen: usize) -> Result<f64> {
        check_arm(chosen, TWO_ARMS)?;
        Ok(Subpopulation::ALL
            .iter()
            .map(|&s| {
                let actual = s.apply(chosen).expect("checked arm");
                self.prob(s) * self.reward_mean(s, actual)
            })
            .sum())
    }

    /// Plays one round with the recommendation drawn from `pull_probs`.
    pub fn simulate_round<R: Rng + ?Sized>(
        &self,
        pull_probs: &ArmDistribution,
        rng: &mut R,
    ) -> InteractionRecord {
        let chosen = pull_probs.sample(rng);
        let s = self.sample_patient(rng);
        let actual = s.apply(chosen).expect("two-arm distribution");
        let reward = self.realize_reward(s, actual, rng).expect("valid arm");
        InteractionRecord {
            chosen,
            actual,
            reward,
            subpop: Some(s),
        }
    }
}

pub fn sample_patient<R: Rng + ?Sized>(model: &PopulationModel, rng: &mut R) -> Subpopulation {
    model.sample_patient(rng)
}

pub fn realize_reward<R: Rng + ?Sized>(
    model: &PopulationModel,
    s: Subpopulation,
    actual: usize,
    rng: &mut R,
) -> Result<f64> {
    model.realize_reward(s, actual, rng)
}

/// Expected reward credited to `arm` under protocol `p` when recommendations
/// are drawn from `pull_probs`, by exact enumeration over subpopulations and
/// recommendations. `Ok(None)` when the crediting event has probability zero.
pub fn expected_protocol_reward(
    model: &PopulationModel,
    p: Protocol,
    arm: usize,
    pull_probs: &ArmDistribution,
) -> Result<Option<f64>> {
    check_arm(arm, TWO_ARMS)?;
    if pull_probs.arm_count() != TWO_ARMS {
        return Err(BanditError::LengthMismatch {
            expected: TWO_ARMS,
            got: pull_probs.arm_count(),
        });
    }
    let mut mass = 0.0;
    let mut weighted = 0.0;
    for s in Subpopulation::ALL {
        for chosen in 0..TWO_ARMS {
            let actual = s.apply(chosen)?;
            if p.credited_arm(chosen, actual) == Some(arm) {
                let w = model.prob(s) * pull_probs.prob(chosen);
                mass += w;
                weighted += w * model.reward_mean(s, actual);
            }
        }
    }
    Ok((mass > 0.0).then(|| weighted / mass))
}

/// The (subpopulation, actual arm) pairs whose outcomes a protocol can
/// credit to `arm`, over every possible recommendation.
pub fn protocol_contributions(p: Protocol, arm: usize) -> Result<Vec<(Subpopulation, usize)>> {
    check_arm(arm, TWO_ARMS)?;
    let mut out = Vec::new();
    for s in Subpopulation::ALL {
        for chosen in 0..TWO_ARMS {
            let actual = s.apply(chosen)?;
            if p.credited_arm(chosen, actual) == Some(arm) && !out.contains(&(s, actual)) {
                out.push((s, actual));
            }
        }
    }
    out.sort();
    Ok(out)
}
