use compliance_core::compliance::{
    expected_protocol_reward, protocol_contributions, InteractionRecord, PopulationModel,
    Protocol, Subpopulation,
};
use compliance_core::environments::{make_population_env, Environment};
use compliance_core::experiment::{Agent, ProtocolAgent};
use compliance_core::policies::{ArmDistribution, BasePolicy, PolicyKind, PolicyParams};
use compliance_core::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Dirichlet, Distribution};

use Subpopulation::{AlwaysTaker as A, Complier as C, Defier as D, NeverTaker as N};

/// Closed-form credited means for a population without defiers.
fn oracle_no_defiers(p: [f64; 4], r: [[f64; 2]; 4], q0: f64) -> [[f64; 2]; 3] {
    let (pn, pa, pc) = (p[0], p[1], p[2]);
    let q1 = 1.0 - q0;
    let chosen0 = pn * r[0][0] + pa * r[1][1] + pc * r[2][0];
    let chosen1 = pn * r[0][0] + pa * r[1][1] + pc * r[2][1];
    let comply0 = (pn * r[0][0] + pc * r[2][0]) / (pn + pc);
    let comply1 = (pa * r[1][1] + pc * r[2][1]) / (pa + pc);
    let actual0 = (pn * r[0][0] + q0 * pc * r[2][0]) / (pn + q0 * pc);
    let actual1 = (pa * r[1][1] + q1 * pc * r[2][1]) / (pa + q1 * pc);
    [[chosen0, chosen1], [actual0, actual1], [comply0, comply1]]
}

#[test]
fn protocol_table() {
    let cases = [
        (0, 0, [Some(0), Some(0), Some(0)]),
        (0, 1, [Some(0), Some(1), None]),
        (1, 0, [Some(1), Some(0), None]),
        (1, 1, [Some(1), Some(1), Some(1)]),
    ];
    for (c, a, expected) in cases {
        for (p, e) in [Protocol::Chosen, Protocol::Actual, Protocol::Comply].into_iter().zip(expected) {
            assert_eq!(p.credited_arm(c, a), e, "{p:?} c={c} a={a}");
            let rec = InteractionRecord::new(c, a, 0.25);
            assert_eq!(p.route(&rec), e.map(|arm| (arm, 0.25)));
        }
    }
}

#[test]
fn behaviors_and_contributions() {
    for c in 0..2 {
        assert_eq!(N.apply(c).unwrap(), 0);
        assert_eq!(A.apply(c).unwrap(), 1);
        assert_eq!(C.apply(c).unwrap(), c);
        assert_eq!(D.apply(c).unwrap(), 1 - c);
    }
    assert!(C.apply(2).is_err());
    let comply1 = protocol_contributions(Protocol::Comply, 1).unwrap();
    assert!(comply1.contains(&(A, 1)) && comply1.contains(&(C, 1)));
    assert!(!comply1.iter().any(|(s, _)| *s == N));
    let actual0 = protocol_contributions(Protocol::Actual, 0).unwrap();
    assert!(actual0.iter().all(|(_, a)| *a == 0));
    assert!(actual0.contains(&(D, 0)));
}

#[test]
fn biased_protocols_order_around_compliers() {
    let mut rng = rng_from_seed(77);
    let dir = Dirichlet::new([1.0; 3]).unwrap();
    let mut checked = 0;
    while checked < 2000 {
        let w: [f64; 3] = dir.sample(&mut rng);
        if w[2] < 1e-6 {
            continue;
        }
        let p = [w[0], w[1], w[2], 0.0];
        let mut v: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // r_N0 > r_C0, r_C1 > r_A1
        let (rn0, rc0, rc1, ra1) = if rng.random_bool(0.5) {
            (v[0], v[1], v[2], v[3])
        } else {
            (v[0], v[2], v[1], v[3])
        };
        if rn0 == rc0.max(rc1) || ra1 == rc0.min(rc1) {
            continue;
        }
        let r = [[rn0, rn0], [ra1, ra1], [rc0, rc1], [0.0, 0.0]];
        let model = PopulationModel::new(p, r).unwrap();
        let q0 = rng.random_range(0.01..0.99);
        let pulls = ArmDistribution::new(vec![q0, 1.0 - q0]).unwrap();
        let oracle = oracle_no_defiers(p, r, q0);
        let mut got = [[0.0; 2]; 3];
        for (pi, proto) in [Protocol::Chosen, Protocol::Actual, Protocol::Comply].into_iter().enumerate() {
            for arm in 0..2 {
                let v = expected_protocol_reward(&model, proto, arm, &pulls).unwrap().unwrap();
                assert!((v - oracle[pi][arm]).abs() < 1e-9, "{proto:?} arm {arm}: {v} vs {}", oracle[pi][arm]);
                got[pi][arm] = v;
            }
        }
        let [_, actual, comply] = got;
        let tol = 1e-12;
        assert!(rc0 <= comply[0] + tol && comply[0] <= actual[0] + tol);
        assert!(rc1 + tol >= comply[1] && comply[1] + tol >= actual[1]);
        checked += 1;
    }
}

#[test]
fn protocol_means_match_simulation() {
    let model = PopulationModel::new(
        [0.2, 0.3, 0.4, 0.1],
        [[0.7, 0.2], [0.3, 0.6], [0.45, 0.55], [0.9, 0.1]],
    )
    .unwrap();
    let pulls = ArmDistribution::new(vec![0.35, 0.65]).unwrap();
    let mut rng = rng_from_seed(5);
    let n = 400_000;
    let mut sums = [[0.0f64; 2]; 3];
    let mut counts = [[0u64; 2]; 3];
    for _ in 0..n {
        let rec = model.simulate_round(&pulls, &mut rng);
        for (pi, proto) in [Protocol::Chosen, Protocol::Actual, Protocol::Comply].into_iter().enumerate() {
            if let Some((arm, r)) = proto.route(&rec) {
                sums[pi][arm] += r;
                counts[pi][arm] += 1;
            }
        }
    }
    for (pi, proto) in [Protocol::Chosen, Protocol::Actual, Protocol::Comply].into_iter().enumerate() {
        for arm in 0..2 {
            let exact = expected_protocol_reward(&model, proto, arm, &pulls).unwrap().unwrap();
            let m = sums[pi][arm] / counts[pi][arm] as f64;
            let se = (exact * (1.0 - exact) / counts[pi][arm] as f64).sqrt();
            assert!((m - exact).abs() < 4.0 * se, "{proto:?} arm {arm}: {m} vs {exact}");
        }
    }
    assert!((model.chosen_arm_value(0).unwrap()
        - expected_protocol_reward(&model, Protocol::Chosen, 0, &pulls).unwrap().unwrap())
    .abs()
        < 1e-12);
}

#[test]
fn chosen_routing_matches_a_plain_bandit() {
    let model = PopulationModel::new(
        [0.25, 0.25, 0.4, 0.1],
        [[0.3, 0.6], [0.5, 0.2], [0.4, 0.7], [0.1, 0.9]],
    )
    .unwrap();
    for kind in [PolicyKind::Exp3, PolicyKind::EpsilonGreedy, PolicyKind::Thompson] {
        let params = PolicyParams::default();
        let mut agent = ProtocolAgent::new(Protocol::Chosen, BasePolicy::new(kind, 2, &params).unwrap());
        let mut plain = BasePolicy::new(kind, 2, &params).unwrap();
        let mut env_a = make_population_env(model.clone(), "a");
        let mut env_b = make_population_env(model.clone(), "b");
        let mut rng_a = rng_from_seed(99);
        let mut rng_b = rng_from_seed(99);
        for _ in 0..3000 {
            let ca = agent.select(&mut rng_a).unwrap();
            let cb = plain.select(1.0, &mut rng_b).unwrap().arm;
            assert_eq!(ca, cb);
            let sa = env_a.step(ca, &mut rng_a).unwrap();
            let sb = env_b.step(cb, &mut rng_b).unwrap();
            assert_eq!(sa, sb);
            agent.observe(&InteractionRecord::new(ca, sa.actual, sa.reward), &mut rng_a).unwrap();
            plain.credit(cb, sb.reward, 1.0, &mut rng_b).unwrap();
        }
        assert_eq!(agent.policy(), &plain);
    }
}

proptest! {
    #[test]
    fn environment_steps_follow_behaviors(
        w in prop::array::uniform4(0.01f64..1.0),
        means in prop::array::uniform8(0.0f64..=1.0),
        chosen in prop::collection::vec(0usize..2, 1..100),
        seed in any::<u64>(),
    ) {
        let total: f64 = w.iter().sum();
        let p = w.map(|x| x / total);
        let r = [[means[0], means[1]], [means[2], means[3]], [means[4], means[5]], [means[6], means[7]]];
        let model = PopulationModel::new(p, r).unwrap();
        let mut env = make_population_env(model, "prop");
        let mut rng = rng_from_seed(seed);
        for c in chosen {
            let step = env.step(c, &mut rng).unwrap();
            let s = step.subpop.unwrap();
            prop_assert_eq!(step.actual, s.apply(c).unwrap());
            prop_assert!(step.reward == 0.0 || step.reward == 1.0);
            let rec = InteractionRecord::new(c, step.actual, step.reward);
            prop_assert!(rec.validate(2).is_ok());
            prop_assert_eq!(Protocol::Chosen.route(&rec), Some((c, step.reward)));
            prop_assert_eq!(Protocol::Actual.route(&rec), Some((step.actual, step.reward)));
            prop_assert_eq!(Protocol::Comply.route(&rec).is_some(), c == step.actual);
        }
        let values = env.arm_values().unwrap();
        prop_assert!((env.baseline() - (values[0] + values[1]) / 2.0).abs() < 1e-12);
    }
}
