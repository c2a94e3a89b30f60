//! Stroke-trial records: ingestion, the derived actual-arm variable, and the
//! counterfactual-patient sampler.

mod fixture;
mod io;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::environments::{Environment, Step};
use crate::error::{BanditError, Result as BanditResult};

pub use fixture::{write_synthetic_ist, SyntheticIstParams};
pub use io::{
    parse_trial_csv, parse_trial_reader, read_canonical_csv, write_canonical_csv, ColumnMap,
    Exclusions, ParsedTrial, ValueMaps,
};

/// Errors raised while reading or assembling trial data.
#[derive(Debug, thiserror::Error)]
pub enum IstError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid column map: {0}")]
    Json(#[from] serde_json::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("line {line}: unknown value {value:?} in column `{column}`")]
    UnknownValue {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("arm {arm} is not valid for the {trial} trial")]
    InvalidArm { trial: Trial, arm: usize },
    #[error("no {trial} patients were assigned arm {arm}")]
    EmptyGroup { trial: Trial, arm: usize },
    #[error("record from the {got} trial in a {expected} table")]
    TrialMismatch { expected: Trial, got: Trial },
}

pub type IstResult<T> = std::result::Result<T, IstError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trial {
    /// Arms: 0 = control, 1 = aspirin.
    Aspirin,
    /// Arms: 0 = none, 1 = low dose, 2 = medium dose.
    Heparin,
}

impl Trial {
    pub fn arm_count(self) -> usize {
        match self {
            Trial::Aspirin => 2,
            Trial::Heparin => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Trial::Aspirin => "aspirin",
            Trial::Heparin => "heparin",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "aspirin" => Some(Trial::Aspirin),
            "heparin" => Some(Trial::Heparin),
            _ => None,
        }
    }
}

impl std::fmt::Display for Trial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Treatment actually taken given assignment and compliance.
///
/// Aspirin non-compliers are taken to have received the opposite arm.
/// Heparin non-compliers assigned a dose are coded as taking none; those
/// assigned none are coded as taking the low dose.
pub fn derive_actual_arm(trial: Trial, assigned: usize, complied: bool) -> IstResult<usize> {
    if assigned >= trial.arm_count() {
        return Err(IstError::InvalidArm {
            trial,
            arm: assigned,
        });
    }
    if complied {
        return Ok(assigned);
    }
    Ok(match (trial, assigned) {
        (Trial::Aspirin, a) => 1 - a,
        (Trial::Heparin, 0) => 1,
        (Trial::Heparin, _) => 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub trial: Trial,
    pub assigned: usize,
    pub complied: bool,
    /// 1 when the patient was alive at 14 days.
    pub outcome14: u8,
    pub actual: usize,
}

impl PatientRecord {
    pub fn new(trial: Trial, assigned: usize, complied: bool, outcome14: u8) -> IstResult<Self> {
        let actual = derive_actual_arm(trial, assigned, complied)?;
        if outcome14 > 1 {
            return Err(IstError::BadRow {
                line: 0,
                reason: format!("outcome14 must be 0 or 1, got {outcome14}"),
            });
        }
        Ok(Self {
            trial,
            assigned,
            complied,
            outcome14,
            actual,
        })
    }

    pub fn reward(&self) -> f64 {
        f64::from(self.outcome14)
    }
}

/// Patients of one trial grouped by assigned arm. Every group is non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTable {
    trial: Trial,
    groups: Vec<Vec<PatientRecord>>,
}

impl TrialTable {
    pub fn from_records(trial: Trial, records: impl IntoIterator<Item = PatientRecord>) -> IstResult<Self> {
        let mut groups = vec![Vec::new(); trial.arm_count()];
        for r in records {
            if r.trial != trial {
                return Err(IstError::TrialMismatch {
                    expected: trial,
                    got: r.trial,
                });
            }
            groups[r.assigned].push(r);
        }
        if let Some(arm) = groups.iter().position(Vec::is_empty) {
            return Err(IstError::EmptyGroup { trial, arm });
        }
        Ok(Self { trial, groups })
    }

    pub fn trial(&self) -> Trial {
        self.trial
    }

    pub fn arm_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, arm: usize) -> &[PatientRecord] {
        &self.groups[arm]
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> impl Iterator<Item = &PatientRecord> {
        self.groups.iter().flatten()
    }

    /// Mean 14-day survival of each assigned-arm group.
    pub fn group_means(&self) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|r| r.reward()).sum::<f64>() / g.len() as f64)
            .collect()
    }

    /// One counterfactual patient: a record is drawn with replacement from
    /// every group, and the chosen group's draw is revealed.
    pub fn counterfactual_step<R: Rng + ?Sized>(
        &self,
        chosen: usize,
        rng: &mut R,
    ) -> BanditResult<(usize, f64)> {
        crate::error::check_arm(chosen, self.arm_count())?;
        let mut revealed = None;
        for (arm, g) in self.groups.iter().enumerate() {
            let r = &g[rng.random_range(0..g.len())];
            if arm == chosen {
                revealed = Some((r.actual, r.reward()));
            }
        }
        Ok(revealed.expect("chosen group visited"))
    }
}

/// Expected per-round reward of a uniformly random recommendation.
pub fn table_baseline(table: &TrialTable) -> f64 {
    let m = table.group_means();
    m.iter().sum::<f64>() / m.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    WithReplacement,
    /// Walks a shuffled copy of each group, reshuffling once it is used up.
    WithoutReplacement,
}

/// Counterfactual-patient environment over a shared [`TrialTable`].
#[derive(Debug, Clone)]
pub struct TrialEnv {
    table: Arc<TrialTable>,
    sampling: Sampling,
    declared_values: bool,
    orders: Vec<Vec<usize>>,
    cursors: Vec<usize>,
}

impl TrialEnv {
    pub fn new(table: Arc<TrialTable>) -> Self {
        let orders = (0..table.arm_count())
            .map(|a| (0..table.group(a).len()).collect())
            .collect();
        let cursors = (0..table.arm_count()).map(|a| table.group(a).len()).collect();
        Self {
            table,
            sampling: Sampling::WithReplacement,
            declared_values: false,
            orders,
            cursors,
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    /// Treats the group means as known arm values, enabling regret curves.
    pub fn with_declared_values(mut self) -> Self {
        self.declared_values = true;
        self
    }

    pub fn table(&self) -> &TrialTable {
        &self.table
    }

    fn draw_without_replacement(&mut self, arm: usize, rng: &mut dyn RngCore) -> &PatientRecord {
        let group = self.table.group(arm);
        if self.cursors[arm] >= group.len() {
            self.orders[arm].shuffle(rng);
            self.cursors[arm] = 0;
        }
        let idx = self.orders[arm][self.cursors[arm]];
        self.cursors[arm] += 1;
        &self.table.group(arm)[idx]
    }
}

impl Environment for TrialEnv {
    fn arm_count(&self) -> usize {
        self.table.arm_count()
    }

    fn step(&mut self, chosen: usize, rng: &mut dyn RngCore) -> BanditResult<Step> {
        let (actual, reward) = match self.sampling {
            Sampling::WithReplacement => self.table.counterfactual_step(chosen, rng)?,
            Sampling::WithoutReplacement => {
                crate::error::check_arm(chosen, self.arm_count())?;
                let mut revealed = (0, 0.0);
                for arm in 0..self.arm_count() {
                    let r = *self.draw_without_replacement(arm, rng);
                    if arm == chosen {
                        revealed = (r.actual, r.reward());
                    }
                }
                revealed
            }
        };
        Ok(Step {
            actual,
            reward,
            subpop: None,
        })
    }

    fn arm_values(&self) -> Option<Vec<f64>> {
        self.declared_values.then(|| self.table.group_means())
    }

    fn baseline(&self) -> f64 {
        table_baseline(&self.table)
    }

    fn label(&self) -> String {
        format!("ist_{}", self.table.trial())
    }
}

impl From<IstError> for BanditError {
    fn from(e: IstError) -> Self {
        BanditError::InvalidParameter {
            name: "trial data",
            reason: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn rec(trial: Trial, assigned: usize, complied: bool, outcome: u8) -> PatientRecord {
        PatientRecord::new(trial, assigned, complied, outcome).unwrap()
    }

    #[test]
    fn actual_arm_all_cases() {
        use Trial::*;
        let cases = [
            (Aspirin, 0, true, 0),
            (Aspirin, 0, false, 1),
            (Aspirin, 1, true, 1),
            (Aspirin, 1, false, 0),
            (Heparin, 0, true, 0),
            (Heparin, 0, false, 1),
            (Heparin, 1, true, 1),
            (Heparin, 1, false, 0),
            (Heparin, 2, true, 2),
            (Heparin, 2, false, 0),
        ];
        for (trial, assigned, complied, want) in cases {
            assert_eq!(derive_actual_arm(trial, assigned, complied).unwrap(), want);
        }
        // out-of-domain arms
        for (trial, arm) in [(Aspirin, 2), (Aspirin, 3), (Heparin, 3), (Heparin, 4)] {
            for complied in [true, false] {
                assert!(matches!(
                    derive_actual_arm(trial, arm, complied),
                    Err(IstError::InvalidArm { .. })
                ));
            }
        }
    }

    #[test]
    fn empty_group_rejected_at_construction() {
        let recs = vec![rec(Trial::Aspirin, 0, true, 1)];
        assert!(matches!(
            TrialTable::from_records(Trial::Aspirin, recs),
            Err(IstError::EmptyGroup { arm: 1, .. })
        ));
        let recs = vec![rec(Trial::Heparin, 0, true, 1)];
        assert!(matches!(
            TrialTable::from_records(Trial::Aspirin, recs),
            Err(IstError::TrialMismatch { .. })
        ));
    }

    #[test]
    fn single_record_groups_are_deterministic() {
        let t = TrialTable::from_records(
            Trial::Aspirin,
            [rec(Trial::Aspirin, 0, false, 0), rec(Trial::Aspirin, 1, true, 1)],
        )
        .unwrap();
        let mut rng = rng_from_seed(61);
        for _ in 0..50 {
            assert_eq!(t.counterfactual_step(0, &mut rng).unwrap(), (1, 0.0));
            assert_eq!(t.counterfactual_step(1, &mut rng).unwrap(), (1, 1.0));
        }
        assert!(t.counterfactual_step(2, &mut rng).is_err());
    }

    #[test]
    fn baseline_examples() {
        let mk = |outcomes: &[&[u8]], trial: Trial| {
            let recs = outcomes
                .iter()
                .enumerate()
                .flat_map(|(arm, os)| os.iter().map(move |&o| rec(trial, arm, true, o)));
            TrialTable::from_records(trial, recs).unwrap()
        };
        let t = mk(&[&[1, 1, 1, 1, 1, 1, 1, 1, 1, 0], &[1, 1, 1, 1, 1, 1, 1, 1, 1, 0]], Trial::Aspirin);
        assert!((table_baseline(&t) - 0.9).abs() < 1e-12);
        let t = mk(&[&[1], &[0]], Trial::Aspirin);
        assert_eq!(table_baseline(&t), 0.5);
        let t = mk(&[&[1, 0], &[1, 1, 1, 0], &[0, 0, 0, 1, 1]], Trial::Heparin);
        assert!((table_baseline(&t) - (0.5 + 0.75 + 0.4) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn without_replacement_visits_every_record() {
        let recs: Vec<_> = (0..7)
            .map(|i| rec(Trial::Aspirin, i % 2, i % 3 == 0, (i % 2) as u8))
            .collect();
        let table = Arc::new(TrialTable::from_records(Trial::Aspirin, recs).unwrap());
        let mut env = TrialEnv::new(table.clone()).with_sampling(Sampling::WithoutReplacement);
        let mut rng = rng_from_seed(62);
        let n0 = table.group(0).len();
        let mut seen: Vec<_> = (0..n0).map(|_| env.step(0, &mut rng).unwrap().actual).collect();
        let mut expect: Vec<_> = table.group(0).iter().map(|r| r.actual).collect();
        seen.sort();
        expect.sort();
        assert_eq!(seen, expect);
        assert_eq!(env.arm_values(), None);
        assert!(env.clone().with_declared_values().arm_values().is_some());
    }
}
