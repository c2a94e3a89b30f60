//! Generic two-level expert aggregation over `M` bases with `N` arms each:
//! full-information hierarchical Hedge and its bandit-feedback counterpart.

use rand::Rng;

use crate::error::{check_unit, BanditError, Result};
use crate::policies::{Exp3State, HedgeState};

/// Result of one hierarchical Hedge round.
#[derive(Debug, Clone, PartialEq)]
pub struct HHedgeOutcome {
    /// `sum_{i,j} x_i * l_ij * y_ij`.
    pub incurred_loss: f64,
    /// `l~_i = sum_j l_ij * y_ij`, fed to the top level.
    pub compound_losses: Vec<f64>,
}

/// Plays one full-information round: the top level receives the compound
/// losses, base `i` receives row `i` of `losses`.
pub fn hhedge_round(
    top: &mut HedgeState,
    bases: &mut [HedgeState],
    losses: &[Vec<f64>],
) -> Result<HHedgeOutcome> {
    let m = top.arm_count();
    if bases.len() != m || losses.len() != m {
        return Err(BanditError::LengthMismatch {
            expected: m,
            got: if bases.len() != m { bases.len() } else { losses.len() },
        });
    }
    for (base, row) in bases.iter().zip(losses) {
        if row.len() != base.arm_count() {
            return Err(BanditError::LengthMismatch {
                expected: base.arm_count(),
                got: row.len(),
            });
        }
        for &l in row {
            check_unit("loss", l)?;
        }
    }

    let x = top.probabilities();
    let compound_losses: Vec<f64> = bases
        .iter()
        .zip(losses)
        .map(|(base, row)| {
            let y = base.probabilities();
            row.iter().zip(&y).map(|(l, p)| l * p).sum::<f64>().min(1.0)
        })
        .collect();
    let incurred_loss = x.iter().zip(&compound_losses).map(|(a, b)| a * b).sum();

    top.update(&compound_losses)?;
    for (base, row) in bases.iter_mut().zip(losses) {
        base.update(row)?;
    }
    Ok(HHedgeOutcome {
        incurred_loss,
        compound_losses,
    })
}

/// Hierarchical EXP3 over `M` EXP3 bases: bandit feedback on the drawn
/// `(base, arm)` pair only.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalExp3 {
    top: Exp3State,
    bases: Vec<Exp3State>,
    pending: Option<(usize, usize, f64, f64)>,
}

impl HierarchicalExp3 {
    pub fn new(top: Exp3State, bases: Vec<Exp3State>) -> Result<Self> {
        if bases.len() != top.arm_count() {
            return Err(BanditError::LengthMismatch {
                expected: top.arm_count(),
                got: bases.len(),
            });
        }
        Ok(Self {
            top,
            bases,
            pending: None,
        })
    }

    pub fn top(&self) -> &Exp3State {
        &self.top
    }

    pub fn base(&self, i: usize) -> &Exp3State {
        &self.bases[i]
    }

    /// Draws `(i, j)` and returns them with `x_i` and `y_ij`.
    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (usize, usize, f64, f64) {
        let (i, x) = self.top.select(rng);
        let (j, y) = self.bases[i].select(rng);
        self.pending = Some((i, j, x, y));
        (i, j, x, y)
    }

    /// `v_i *= exp(-eta l / x_i)`, `w_ij *= exp(-rho l / (x_i y_ij))`.
    pub fn update(&mut self, loss: f64) -> Result<()> {
        let (i, j, x, y) = self
            .pending
            .take()
            .ok_or_else(|| BanditError::StaleSelection("no pending selection".into()))?;
        self.top.update(i, loss, x)?;
        self.bases[i].update(j, loss, x * y)
    }
}
