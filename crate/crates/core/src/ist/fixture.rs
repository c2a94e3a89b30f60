use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_actual_arm, IstResult, Trial};

/// Shape of a synthetic file laid out like the public stroke-trial CSV
/// (`RXASP`, `RXHEP`, `CMPLASP`, `CMPLHEP`, `ID14`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticIstParams {
    pub patients: usize,
    /// Fraction of rows whose 14-day outcome is left blank.
    pub missing_outcome_rate: f64,
    /// Baseline probability of death by day 14.
    pub base_mortality: f64,
}

impl Default for SyntheticIstParams {
    fn default() -> Self {
        Self {
            patients: 19_422,
            missing_outcome_rate: 0.002,
            base_mortality: 0.09,
        }
    }
}

/// Writes a synthetic trial. Frail patients (a fifth of them) die more often
/// and comply less, so compliance is confounded with outcome; aspirin helps
/// slightly and medium-dose heparin slightly harms.
pub fn write_synthetic_ist<W: Write, R: Rng + ?Sized>(
    writer: W,
    params: &SyntheticIstParams,
    rng: &mut R,
) -> IstResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ID", "RXASP", "RXHEP", "CMPLASP", "CMPLHEP", "ID14"])?;
    for id in 1..=params.patients {
        let frail = rng.random_bool(0.2);
        let noncompliance = if frail { 0.15 } else { 0.05 };
        let asp = usize::from(rng.random_bool(0.5));
        let hep = match rng.random_range(0..4) {
            0 | 1 => 0,
            2 => 1,
            _ => 2,
        };
        let asp_ok = !rng.random_bool(noncompliance);
        let hep_ok = !rng.random_bool(noncompliance);
        let asp_taken = derive_actual_arm(Trial::Aspirin, asp, asp_ok)?;
        let hep_taken = derive_actual_arm(Trial::Heparin, hep, hep_ok)?;

        let mut death = params.base_mortality + if frail { 0.12 } else { 0.0 };
        death -= 0.012 * asp_taken as f64;
        death += [0.0, -0.004, 0.01][hep_taken];
        let died = rng.random_bool(death.clamp(0.0, 1.0));
        let outcome = if rng.random_bool(params.missing_outcome_rate) {
            ""
        } else if died {
            "1"
        } else {
            "0"
        };

        let yn = |b: bool| if b { "Y" } else { "N" };
        w.write_record([
            id.to_string().as_str(),
            yn(asp == 1),
            ["N", "L", "M"][hep],
            yn(asp_ok),
            yn(hep_ok),
            outcome,
        ])?;
    }
    w.flush()?;
    Ok(())
}
