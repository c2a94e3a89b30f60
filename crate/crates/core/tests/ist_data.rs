use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use compliance_core::environments::Environment;
use compliance_core::ist::{
    parse_trial_csv, parse_trial_reader, read_canonical_csv, table_baseline, write_canonical_csv,
    ColumnMap, PatientRecord, Trial, TrialEnv, TrialTable,
};
use compliance_core::rng::rng_from_seed;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn map(trial: &str) -> ColumnMap {
    ColumnMap::from_json_file(data(&format!("ist_{trial}_map.json"))).unwrap()
}

#[test]
fn bundled_fixture_parses_quickly_and_completely() {
    let start = Instant::now();
    let aspirin = parse_trial_csv(data("ist_synthetic.csv"), &map("aspirin")).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(aspirin.rows_read, 19_422);
    assert_eq!(aspirin.records.len() + aspirin.excluded.total(), 19_422);
    assert!(elapsed.as_secs_f64() < 1.0, "parse took {elapsed:?}");

    let heparin = parse_trial_csv(data("ist_synthetic.csv"), &map("heparin")).unwrap();
    assert_eq!(heparin.records.len(), aspirin.records.len());
    let table = heparin.into_table().unwrap();
    assert_eq!(table.arm_count(), 3);
    for arm in 0..3 {
        assert!(!table.group(arm).is_empty());
    }
}

#[test]
fn canonical_round_trip_is_lossless() {
    for trial in ["aspirin", "heparin"] {
        let parsed = parse_trial_csv(data("ist_synthetic.csv"), &map(trial)).unwrap();
        let mut buf = Vec::new();
        write_canonical_csv(&mut buf, &parsed.records).unwrap();
        let back = read_canonical_csv(buf.as_slice()).unwrap();
        assert_eq!(back, parsed.records);
        let mut again = Vec::new();
        write_canonical_csv(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }
}

#[test]
fn heparin_doses_and_non_compliance() {
    let csv = "RXHEP,CMPLHEP,ID14\nN,Y,0\nL,Y,0\nM,N,1\nH,Y,0\nN,N,0\n";
    let parsed = parse_trial_reader(csv.as_bytes(), &map("heparin")).unwrap();
    let got: Vec<(usize, bool, usize)> =
        parsed.records.iter().map(|r| (r.assigned, r.complied, r.actual)).collect();
    assert_eq!(got, vec![(0, true, 0), (1, true, 1), (2, false, 0), (2, true, 2), (0, false, 1)]);
    assert_eq!(parsed.records[2].reward(), 0.0);
    assert_eq!(parsed.records[0].reward(), 1.0);
}

fn toy_table() -> TrialTable {
    let mut records = Vec::new();
    for (assigned, complied, outcome, n) in
        [(0, true, 1, 30), (0, false, 0, 10), (0, true, 0, 20), (1, true, 1, 45), (1, false, 1, 5), (1, true, 0, 25)]
    {
        for _ in 0..n {
            records.push(PatientRecord::new(Trial::Aspirin, assigned, complied, outcome).unwrap());
        }
    }
    TrialTable::from_records(Trial::Aspirin, records).unwrap()
}

#[test]
fn counterfactual_draws_match_group_distributions() {
    let table = Arc::new(toy_table());
    let mut env = TrialEnv::new(table.clone());
    let mut rng = rng_from_seed(17);
    let steps = 100_000;
    for chosen in 0..2 {
        let mut expected: BTreeMap<(usize, u8), f64> = BTreeMap::new();
        let group = table.group(chosen);
        for r in group {
            *expected.entry((r.actual, r.reward() as u8)).or_default() += 1.0 / group.len() as f64;
        }
        let mut seen: BTreeMap<(usize, u8), f64> = BTreeMap::new();
        for _ in 0..steps {
            let s = env.step(chosen, &mut rng).unwrap();
            *seen.entry((s.actual, s.reward as u8)).or_default() += 1.0 / steps as f64;
        }
        let keys: BTreeSet<_> = expected.keys().chain(seen.keys()).copied().collect();
        let tv: f64 = keys
            .iter()
            .map(|k| (expected.get(k).unwrap_or(&0.0) - seen.get(k).unwrap_or(&0.0)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.02, "arm {chosen}: tv {tv}");
    }
}

#[test]
fn mean_rewards_converge_to_group_survival() {
    let table = Arc::new(parse_trial_csv(data("ist_synthetic.csv"), &map("heparin")).unwrap().into_table().unwrap());
    let means = table.group_means();
    let mut env = TrialEnv::new(table.clone());
    let mut rng = rng_from_seed(23);
    for (arm, &m) in means.iter().enumerate() {
        let n = 50_000;
        let total: f64 = (0..n).map(|_| env.step(arm, &mut rng).unwrap().reward).sum();
        assert!((total / n as f64 - m).abs() < 0.01, "arm {arm}");
    }
    assert!(env.arm_values().is_none());
    let declared = TrialEnv::new(table.clone()).with_declared_values();
    assert_eq!(declared.arm_values().unwrap(), means);
    assert!((declared.baseline() - table_baseline(&table)).abs() < 1e-12);
}

#[test]
fn all_survivors_always_reward() {
    let records: Vec<_> = (0..2)
        .flat_map(|arm| (0..5).map(move |_| PatientRecord::new(Trial::Aspirin, arm, true, 1).unwrap()))
        .collect();
    let table = Arc::new(TrialTable::from_records(Trial::Aspirin, records).unwrap());
    let mut env = TrialEnv::new(table.clone());
    let mut rng = rng_from_seed(2);
    for t in 0..1000 {
        assert_eq!(env.step(t % 2, &mut rng).unwrap().reward, 1.0);
    }
    assert_eq!(table.group_means(), vec![1.0, 1.0]);
    assert_eq!(table_baseline(&table), 1.0);
}
