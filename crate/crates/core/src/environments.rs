//! Round generators for the synthetic experiments.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::compliance::{PopulationModel, Subpopulation, TWO_ARMS};
use crate::error::{check_arm, Result};

/// Environment response to a recommendation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub actual: usize,
    pub reward: f64,
    /// Latent subpopulation when the world has one; never shown to policies.
    pub subpop: Option<Subpopulation>,
}

/// A world that answers recommendations i.i.d. across rounds.
pub trait Environment: Send {
    fn arm_count(&self) -> usize;

    fn step(&mut self, chosen: usize, rng: &mut dyn RngCore) -> Result<Step>;

    /// Expected reward of each recommendation, when it is known.
    fn arm_values(&self) -> Option<Vec<f64>>;

    /// Expected per-round reward of recommending uniformly at random.
    fn baseline(&self) -> f64;

    fn label(&self) -> String;

    /// Per-round value of the best fixed recommendation.
    fn best_value(&self) -> Option<f64> {
        self.arm_values()
            .map(|v| v.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }
}

/// How a population world turns subpopulation means into rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Binary outcome `Bernoulli(r_{s, actual})`.
    #[default]
    Bernoulli,
    /// The mean `r_{s, actual}` itself.
    Mean,
}

/// Two-arm world driven by a [`PopulationModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationEnv {
    model: PopulationModel,
    reward_mode: RewardMode,
    label: String,
}

impl PopulationEnv {
    pub fn new(model: PopulationModel, label: impl Into<String>) -> Self {
        Self {
            model,
            reward_mode: RewardMode::Bernoulli,
            label: label.into(),
        }
    }

    pub fn with_reward_mode(mut self, mode: RewardMode) -> Self {
        self.reward_mode = mode;
        self
    }

    pub fn model(&self) -> &PopulationModel {
        &self.model
    }
}

impl Environment for PopulationEnv {
    fn arm_count(&self) -> usize {
        TWO_ARMS
    }

    fn step(&mut self, chosen: usize, rng: &mut dyn RngCore) -> Result<Step> {
        check_arm(chosen, TWO_ARMS)?;
        let s = self.model.sample_patient(rng);
        let actual = s.apply(chosen)?;
        let reward = match self.reward_mode {
            RewardMode::Bernoulli => self.model.realize_reward(s, actual, rng)?,
            RewardMode::Mean => self.model.reward_mean(s, actual),
        };
        Ok(Step {
            actual,
            reward,
            subpop: Some(s),
        })
    }

    fn arm_values(&self) -> Option<Vec<f64>> {
        Some(
            (0..TWO_ARMS)
                .map(|c| self.model.chosen_arm_value(c).expect("two arms"))
                .collect(),
        )
    }

    fn baseline(&self) -> f64 {
        let v = self.arm_values().expect("analytic");
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Everyone defies the recommendation; the treatment (arm 1) always works,
/// so recommending control is optimal.
pub fn make_defier_env() -> PopulationEnv {
    let model = PopulationModel::new(
        [0.0, 0.0, 0.0, 1.0],
        [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 1.0]],
    )
    .expect("valid model");
    PopulationEnv::new(model, "defier")
}

/// Half rich always-takers (favorable outcome 1.0 untreated, 0.75 treated),
/// half poor compliers (0.5 untreated, 0.25 treated).
pub fn make_rich_poor_env() -> PopulationEnv {
    let model = PopulationModel::new(
        [0.0, 0.5, 0.5, 0.0],
        [[0.0, 0.0], [1.0, 0.75], [0.5, 0.25], [0.0, 0.0]],
    )
    .expect("valid model");
    PopulationEnv::new(model, "rich_poor")
}

/// How compliance is randomized in the small-horizon world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallTCompliance {
    /// Each instance draws its behavior mixture uniformly from the simplex;
    /// rounds draw behaviors from that mixture.
    #[default]
    InstanceMixture,
    /// Every round draws one of the four behaviors with probability 1/4.
    UniformBehaviors,
}

/// Uniform draw from the probability simplex over the four behaviors.
fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    let mut e = [0.0; 4];
    for v in &mut e {
        // Exp(1) spacings normalize to Dirichlet(1, 1, 1, 1)
        *v = -(1.0 - rng.random::<f64>()).ln();
    }
    let total: f64 = e.iter().sum();
    e.map(|v| v / total)
}

/// Two arms with expected rewards drawn from `U(0, 1)`; the reward depends
/// on the arm taken only.
pub fn make_small_t_env<R: Rng + ?Sized>(compliance: SmallTCompliance, rng: &mut R) -> PopulationEnv {
    let means = [rng.random::<f64>(), rng.random::<f64>()];
    let mixture = match compliance {
        SmallTCompliance::InstanceMixture => uniform_simplex(rng),
        SmallTCompliance::UniformBehaviors => [0.25; 4],
    };
    let model = PopulationModel::homogeneous(mixture, means).expect("valid draw");
    PopulationEnv::new(model, "small_t")
}

/// Two-arm world for an arbitrary population model.
pub fn make_population_env(model: PopulationModel, label: impl Into<String>) -> PopulationEnv {
    PopulationEnv::new(model, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compliance::{expected_protocol_reward, Protocol};
    use crate::policies::ArmDistribution;
    use crate::rng::rng_from_seed;

    #[test]
    fn defier_world() {
        let mut env = make_defier_env();
        let mut rng = rng_from_seed(51);
        for _ in 0..200 {
            let s = env.step(1, &mut rng).unwrap();
            assert_eq!((s.actual, s.reward), (0, 0.0));
            let s = env.step(0, &mut rng).unwrap();
            assert_eq!((s.actual, s.reward), (1, 1.0));
        }
        assert_eq!(env.best_value(), Some(1.0));
        assert_eq!(env.arm_values(), Some(vec![1.0, 0.0]));
        assert_eq!(env.baseline(), 0.5);
        assert!(env.step(2, &mut rng).is_err());
    }

    #[test]
    fn rich_poor_world() {
        let mut env = make_rich_poor_env();
        let mut rng = rng_from_seed(52);
        let n = 40_000;
        for chosen in 0..2 {
            let mut sum = 0.0;
            for _ in 0..n {
                let s = env.step(chosen, &mut rng).unwrap();
                match s.subpop.unwrap() {
                    Subpopulation::AlwaysTaker => assert_eq!(s.actual, 1),
                    Subpopulation::Complier => assert_eq!(s.actual, chosen),
                    other => panic!("unexpected {other:?}"),
                }
                sum += s.reward;
            }
            let expected = [0.625, 0.5][chosen];
            assert!((sum / n as f64 - expected).abs() < 0.01);
        }
        let v = env.arm_values().unwrap();
        assert!((v[0] - 0.625).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);
        assert!((env.baseline() - 0.5625).abs() < 1e-12);
        // per-round best-minus-baseline over 10,000 rounds
        assert!(((v[0] - env.baseline()) * 10_000.0 - 625.0).abs() < 1e-9);
    }

    #[test]
    fn rich_poor_actual_prefers_harmful_arm() {
        let env = make_rich_poor_env();
        let q = ArmDistribution::uniform(2).unwrap();
        let a1 = expected_protocol_reward(env.model(), Protocol::Actual, 1, &q).unwrap().unwrap();
        let a0 = expected_protocol_reward(env.model(), Protocol::Actual, 0, &q).unwrap().unwrap();
        let oracle = (0.5 * 0.75 + 0.5 * 0.5 * 0.25) / (0.5 + 0.25);
        assert!((a1 - oracle).abs() < 1e-12 && (a1 - 7.0 / 12.0).abs() < 1e-12);
        assert!((a0 - 0.5).abs() < 1e-12);
        assert!(a1 > a0);
    }

    #[test]
    fn small_t_degenerate_rewards() {
        let model = PopulationModel::homogeneous([0.25; 4], [1.0, 0.0]).unwrap();
        let mut env = PopulationEnv::new(model, "small_t");
        let mut rng = rng_from_seed(53);
        for c in [0, 1, 0, 1] {
            for _ in 0..100 {
                let s = env.step(c, &mut rng).unwrap();
                assert_eq!(s.reward == 1.0, s.actual == 0);
            }
        }
    }

    #[test]
    fn small_t_behavior_marginal() {
        let mut rng = rng_from_seed(54);
        // exact under uniform behaviors
        let env = make_small_t_env(SmallTCompliance::UniformBehaviors, &mut rng);
        for c in 0..2 {
            let p: f64 = Subpopulation::ALL
                .iter()
                .filter(|s| s.apply(c).unwrap() == c)
                .map(|s| env.model().prob(*s))
                .sum();
            assert!((p - 0.5).abs() < 1e-12);
        }
        // on average over instance mixtures
        let n = 20_000;
        let mut agree = [0.0; 2];
        for _ in 0..n {
            let env = make_small_t_env(SmallTCompliance::InstanceMixture, &mut rng);
            for (c, slot) in agree.iter_mut().enumerate() {
                *slot += Subpopulation::ALL
                    .iter()
                    .filter(|s| s.apply(c).unwrap() == c)
                    .map(|s| env.model().prob(*s))
                    .sum::<f64>();
            }
        }
        for a in agree {
            assert!((a / n as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn small_t_expected_best_arm() {
        let mut rng = rng_from_seed(55);
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            let env = make_small_t_env(SmallTCompliance::InstanceMixture, &mut rng);
            let m = env.model().reward_means()[0];
            total += m[0].max(m[1]);
        }
        assert!((total / n as f64 - 2.0 / 3.0).abs() <= 0.01);
    }

    #[test]
    fn mean_reward_mode() {
        let mut env = make_rich_poor_env().with_reward_mode(RewardMode::Mean);
        let mut rng = rng_from_seed(56);
        for _ in 0..100 {
            let s = env.step(1, &mut rng).unwrap();
            assert!(s.reward == 0.75 || s.reward == 0.25);
        }
    }
}
