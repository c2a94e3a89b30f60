use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IstError, IstResult, PatientRecord, Trial, TrialTable};

/// Raw-value encodings of the three mapped columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueMaps {
    /// Raw assignment code to arm index.
    pub assignment: BTreeMap<String, usize>,
    /// Raw compliance code to "took the assigned treatment".
    pub compliance: BTreeMap<String, bool>,
    /// Raw outcome code to 14-day survival (1 alive, 0 dead).
    pub outcome: BTreeMap<String, u8>,
}

/// Which CSV columns hold a trial's fields and how their values decode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub trial: Trial,
    pub assignment_col: String,
    pub compliance_col: String,
    pub outcome_col: String,
    pub value_maps: ValueMaps,
    /// Raw values treated as missing (after trimming whitespace).
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
}

fn default_missing() -> Vec<String> {
    vec![String::new()]
}

impl ColumnMap {
    pub fn from_json_str(s: &str) -> IstResult<Self> {
        let map: Self = serde_json::from_str(s)?;
        map.validate()?;
        Ok(map)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> IstResult<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(&s)
    }

    fn validate(&self) -> IstResult<()> {
        for &arm in self.value_maps.assignment.values() {
            if arm >= self.trial.arm_count() {
                return Err(IstError::InvalidArm {
                    trial: self.trial,
                    arm,
                });
            }
        }
        if let Some(bad) = self.value_maps.outcome.values().find(|&&o| o > 1) {
            return Err(IstError::BadRow {
                line: 0,
                reason: format!("outcome map target {bad} is not 0 or 1"),
            });
        }
        Ok(())
    }
}

/// Rows left out of a parse because a required field was missing. A row is
/// counted under the first missing field in the order assignment,
/// compliance, outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    pub missing_assignment: usize,
    pub missing_compliance: usize,
    pub missing_outcome: usize,
}

impl Exclusions {
    pub fn total(&self) -> usize {
        self.missing_assignment + self.missing_compliance + self.missing_outcome
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrial {
    pub trial: Trial,
    pub records: Vec<PatientRecord>,
    pub rows_read: usize,
    pub excluded: Exclusions,
}

impl ParsedTrial {
    pub fn into_table(self) -> IstResult<TrialTable> {
        TrialTable::from_records(self.trial, self.records)
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> IstResult<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IstError::MissingColumn(name.to_string()))
}

fn lookup<T: Copy>(
    map: &BTreeMap<String, T>,
    raw: &str,
    column: &str,
    line: u64,
) -> IstResult<T> {
    map.get(raw).copied().ok_or_else(|| IstError::UnknownValue {
        line,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

pub fn parse_trial_csv(path: impl AsRef<Path>, map: &ColumnMap) -> IstResult<ParsedTrial> {
    parse_trial_reader(File::open(path)?, map)
}

/// Parses a headed CSV into validated records of `map.trial`.
pub fn parse_trial_reader<R: Read>(reader: R, map: &ColumnMap) -> IstResult<ParsedTrial> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = [
        column_index(&headers, &map.assignment_col)?,
        column_index(&headers, &map.compliance_col)?,
        column_index(&headers, &map.outcome_col)?,
    ];

    let mut records = Vec::new();
    let mut excluded = Exclusions::default();
    let mut rows_read = 0;
    let mut row = csv::StringRecord::new();
    while rdr.read_record(&mut row)? {
        rows_read += 1;
        let line = row.position().map_or(0, |p| p.line());
        let raw: Vec<&str> = cols
            .iter()
            .map(|&i| row.get(i).unwrap_or("").trim())
            .collect();
        let missing: Vec<bool> = raw.iter().map(|v| map.missing.iter().any(|m| m == v)).collect();
        if missing[0] {
            excluded.missing_assignment += 1;
            continue;
        }
        if missing[1] {
            excluded.missing_compliance += 1;
            continue;
        }
        if missing[2] {
            excluded.missing_outcome += 1;
            continue;
        }
        let assigned = lookup(&map.value_maps.assignment, raw[0], &map.assignment_col, line)?;
        let complied = lookup(&map.value_maps.compliance, raw[1], &map.compliance_col, line)?;
        let outcome = lookup(&map.value_maps.outcome, raw[2], &map.outcome_col, line)?;
        let rec = PatientRecord::new(map.trial, assigned, complied, outcome).map_err(|e| {
            IstError::BadRow {
                line,
                reason: e.to_string(),
            }
        })?;
        records.push(rec);
    }

    if excluded.total() > 0 {
        log::warn!(
            "{}: excluded {} of {} rows (missing assignment {}, compliance {}, outcome {})",
            map.trial,
            excluded.total(),
            rows_read,
            excluded.missing_assignment,
            excluded.missing_compliance,
            excluded.missing_outcome
        );
    }
    Ok(ParsedTrial {
        trial: map.trial,
        records,
        rows_read,
        excluded,
    })
}

#[derive(Serialize, Deserialize)]
struct CanonicalRow {
    trial: String,
    assigned: usize,
    complied: u8,
    actual: usize,
    outcome14: u8,
}

/// Writes records as `trial,assigned,complied,actual,outcome14`.
pub fn write_canonical_csv<'a, W: Write>(
    writer: W,
    records: impl IntoIterator<Item = &'a PatientRecord>,
) -> IstResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(CanonicalRow {
            trial: r.trial.label().to_string(),
            assigned: r.assigned,
            complied: u8::from(r.complied),
            actual: r.actual,
            outcome14: r.outcome14,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the canonical export back, checking the stored actual arm against
/// the derivation rule.
pub fn read_canonical_csv<R: Read>(reader: R) -> IstResult<Vec<PatientRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CanonicalRow>().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let trial = Trial::from_label(&row.trial).ok_or_else(|| IstError::UnknownValue {
            line,
            column: "trial".into(),
            value: row.trial.clone(),
        })?;
        if row.complied > 1 {
            return Err(IstError::UnknownValue {
                line,
                column: "complied".into(),
                value: row.complied.to_string(),
            });
        }
        let rec = PatientRecord::new(trial, row.assigned, row.complied == 1, row.outcome14)
            .map_err(|e| IstError::BadRow {
                line,
                reason: e.to_string(),
            })?;
        if rec.actual != row.actual {
            return Err(IstError::BadRow {
                line,
                reason: format!("actual arm {} disagrees with derived {}", row.actual, rec.actual),
            });
        }
        out.push(rec);
    }
    Ok(out)
}
