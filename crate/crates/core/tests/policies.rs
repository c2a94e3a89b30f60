use compliance_core::environments::{make_population_env, Environment};
use compliance_core::policies::{
    ArmDistribution, BasePolicy, EpsilonGreedyState, Exp3State, PolicyKind, PolicyParams,
    ThompsonState,
};
use compliance_core::rng::{rng_from_seed, run_rng};
use compliance_core::PopulationModel;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn exp3_log_weight_change_is_unbiased() {
    let losses = [0.2, 0.7, 0.45];
    let eta = 0.05;
    let gamma = 0.3;
    let base = Exp3State::from_weights(vec![1.0, 2.5, 0.4], eta, gamma).unwrap();
    let mut rng = rng_from_seed(11);
    let n = 200_000;
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    for _ in 0..n {
        let mut s = base.clone();
        let (arm, p) = s.select(&mut rng);
        let loss = if rng.random_bool(losses[arm]) { 1.0 } else { 0.0 };
        s.update(arm, loss, p).unwrap();
        for i in 0..3 {
            let d = s.log_weights()[i] - base.log_weights()[i];
            sum[i] += d;
            sum_sq[i] += d * d;
        }
    }
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        let var = sum_sq[i] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        let expected = -eta * losses[i];
        assert!(
            (mean - expected).abs() < 4.0 * se,
            "arm {i}: mean {mean}, expected {expected}, se {se}"
        );
    }
}

#[test]
fn thompson_expected_increment_is_weight_times_reward() {
    let mut rng = rng_from_seed(3);
    let (w, r) = (2.5, 0.3);
    let n = 100_000;
    let mut total = 0.0;
    for _ in 0..n {
        let mut s = ThompsonState::new(2).unwrap();
        s.update(1, r, w, &mut rng).unwrap();
        total += s.successes()[1];
        assert_eq!(s.successes()[1] + s.failures()[1], w);
        assert_eq!(s.total_mass(), w);
    }
    let mean = total / n as f64;
    let se = w * (r * (1.0 - r) / n as f64).sqrt();
    assert!((mean - w * r).abs() < 4.0 * se, "mean {mean}");
}

#[test]
fn thompson_regret_is_small_on_well_separated_arms() {
    // everyone complies, so recommending is pulling
    let model = PopulationModel::homogeneous([0.0, 0.0, 1.0, 0.0], [0.6, 0.4]).unwrap();
    let horizon = 10_000u64;
    let runs = 100;
    let mut total_regret = 0.0;
    for run in 0..runs {
        let mut rng = run_rng(2024, run);
        let mut env = make_population_env(model.clone(), "ts");
        let best = env.best_value().unwrap();
        let values = env.arm_values().unwrap();
        let mut ts = ThompsonState::new(2).unwrap();
        let mut regret = 0.0;
        for _ in 0..horizon {
            let arm = ts.select(&mut rng);
            let step = env.step(arm, &mut rng).unwrap();
            ts.update(arm, step.reward, 1.0, &mut rng).unwrap();
            regret += best - values[arm];
        }
        total_regret += regret;
    }
    let per_round = total_regret / (runs as f64 * horizon as f64);
    assert!(per_round < 0.01, "per-round regret {per_round}");
}

#[test]
fn epsilon_greedy_schedule() {
    let mut s = EpsilonGreedyState::new(2, 5.0).unwrap();
    assert_eq!(s.epsilon(), 1.0);
    for t in 0..100 {
        s.update(t % 2, 0.5).unwrap();
    }
    assert_eq!(s.round(), 101);
    assert!((s.epsilon() - 10.0 / 101.0).abs() < 1e-12);
    assert_eq!(s.counts(), &[50, 50]);
}

proptest! {
    #[test]
    fn exp3_stays_a_distribution(
        k in 2usize..6,
        gamma in 0.0f64..1.0,
        plays in prop::collection::vec((0usize..6, 0.0f64..=1.0), 0..300),
        seed in any::<u64>(),
    ) {
        let mut s = Exp3State::new(k, gamma).unwrap();
        let mut rng = rng_from_seed(seed);
        for (_, loss) in plays {
            let (arm, p) = s.select(&mut rng);
            s.update(arm, loss, p).unwrap();
            let d = s.distribution();
            let total: f64 = d.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(d.probs().iter().all(|&p| p >= gamma / k as f64 - 1e-12 && p <= 1.0 + 1e-12));
            prop_assert!(s.log_weights().iter().all(|w| w.is_finite()));
        }
    }

    #[test]
    fn base_policies_credit_keeps_state_valid(
        kind in prop::sample::select(vec![PolicyKind::Exp3, PolicyKind::EpsilonGreedy, PolicyKind::Thompson]),
        rounds in prop::collection::vec((0.01f64..=1.0, 0.0f64..=1.0), 1..200),
        seed in any::<u64>(),
    ) {
        let mut p = BasePolicy::new(kind, 3, &PolicyParams::default()).unwrap();
        let mut rng = rng_from_seed(seed);
        for (call_prob, reward) in rounds {
            let draw = p.select(call_prob, &mut rng).unwrap();
            prop_assert!(draw.arm < 3);
            if let Some(prob) = draw.prob {
                prop_assert!(prob > 0.0 && prob <= 1.0);
            }
            p.credit(draw.arm, reward, call_prob, &mut rng).unwrap();
        }
        match &p {
            BasePolicy::Exp3(s) => prop_assert!(s.log_weights().iter().all(|w| w.is_finite())),
            BasePolicy::EpsilonGreedy(s) => prop_assert!(s.mean_rewards().iter().all(|m| (0.0..=1.0).contains(m))),
            BasePolicy::Thompson(s) => prop_assert!(s.successes().iter().chain(s.failures()).all(|c| c.is_finite() && *c >= 0.0)),
        }
    }

    #[test]
    fn arm_distribution_rejects_bad_vectors(a in -1.0f64..2.0, b in -1.0f64..2.0) {
        let ok = a >= 0.0 && b >= 0.0 && ((a + b) - 1.0).abs() < 1e-9;
        prop_assert_eq!(ArmDistribution::new(vec![a, b]).is_ok(), ok);
    }
}
