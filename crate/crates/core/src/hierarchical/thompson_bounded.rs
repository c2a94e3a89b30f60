use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{HierarchicalState, HybridConfig, ReplayCache};
use crate::compliance::{InteractionRecord, Protocol};
use crate::error::{BanditError, Result};
use crate::policies::ThompsonState;

/// Component that produced a ThompsonBounded pull.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawSource {
    Thompson,
    Hierarchical,
}

/// A `Chosen` Thompson sampler that hands the pull to a hierarchical bandit
/// whenever two of its own posterior draws disagree.
///
/// The deferral probability is `1 - sum_j p_j^2 <= 2 p_F`, where `p_F` is the
/// probability Thompson does not pick the best arm, so the hybrid's extra
/// regret is at most twice Thompson's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThompsonBoundedState {
    thompson: ThompsonState,
    hb: HierarchicalState,
    cache: ReplayCache,
    recycling: bool,
    pending: Option<(DrawSource, usize)>,
    thompson_executed: u64,
    thompson_recycled: u64,
}

impl ThompsonBoundedState {
    /// `config` configures the inner hierarchical bandit; its recycling flag
    /// also governs the Thompson component.
    pub fn new(arm_count: usize, config: &HybridConfig) -> Result<Self> {
        Ok(Self {
            thompson: ThompsonState::new(arm_count)?,
            hb: HierarchicalState::new(arm_count, config)?,
            cache: ReplayCache::new(arm_count),
            recycling: config.recycling,
            pending: None,
            thompson_executed: 0,
            thompson_recycled: 0,
        })
    }

    pub fn from_parts(thompson: ThompsonState, hb: HierarchicalState) -> Result<Self> {
        if thompson.arm_count() != hb.arm_count() {
            return Err(BanditError::LengthMismatch {
                expected: hb.arm_count(),
                got: thompson.arm_count(),
            });
        }
        let recycling = hb.recycling();
        Ok(Self {
            cache: ReplayCache::new(thompson.arm_count()),
            thompson,
            hb,
            recycling,
            pending: None,
            thompson_executed: 0,
            thompson_recycled: 0,
        })
    }

    pub fn arm_count(&self) -> usize {
        self.thompson.arm_count()
    }

    pub fn thompson(&self) -> &ThompsonState {
        &self.thompson
    }

    pub fn hierarchical(&self) -> &HierarchicalState {
        &self.hb
    }

    pub fn cache(&self) -> &ReplayCache {
        &self.cache
    }

    pub fn last_source(&self) -> Option<DrawSource> {
        self.pending.map(|(s, _)| s)
    }

    /// Thompson updates from its own pulls and from replayed rewards.
    pub fn thompson_updates(&self) -> (u64, u64) {
        (self.thompson_executed, self.thompson_recycled)
    }

    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(usize, DrawSource)> {
        let first = self.thompson.select(rng);
        let second = self.thompson.select(rng);
        let (arm, source) = if first == second {
            (self.thompson.select(rng), DrawSource::Thompson)
        } else {
            (self.hb.select(rng)?.arm, DrawSource::Hierarchical)
        };
        self.pending = Some((source, arm));
        Ok((arm, source))
    }

    /// Updates only the component that produced the pull.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        rec: &InteractionRecord,
        source: DrawSource,
        rng: &mut R,
    ) -> Result<()> {
        rec.validate(self.arm_count())?;
        match self.pending {
            Some((s, arm)) if s == source && arm == rec.chosen => {}
            Some((s, arm)) => {
                return Err(BanditError::StaleSelection(format!(
                    "pending {s:?} pull of arm {arm}, got {source:?} record for arm {}",
                    rec.chosen
                )))
            }
            None => return Err(BanditError::StaleSelection("no pending selection".into())),
        }
        match source {
            DrawSource::Thompson => {
                let (arm, reward) = Protocol::Chosen.route(rec).expect("chosen always routes");
                self.thompson.update(arm, reward, 1.0, rng)?;
                self.thompson_executed += 1;
            }
            DrawSource::Hierarchical => {
                self.hb.update(rec, rng)?;
                if self.recycling {
                    self.cache.push(rec.chosen, rec.reward)?;
                    let would_play = self.thompson.select(rng);
                    if let Some(replayed) = self.cache.credit(would_play, rng) {
                        self.thompson.update(would_play, replayed, 1.0, rng)?;
                        self.thompson_recycled += 1;
                    }
                }
            }
        }
        self.pending = None;
        Ok(())
    }
}

pub fn tb_select<R: Rng + ?Sized>(
    state: &mut ThompsonBoundedState,
    rng: &mut R,
) -> Result<(usize, DrawSource)> {
    state.select(rng)
}

pub fn tb_update<R: Rng + ?Sized>(
    state: &mut ThompsonBoundedState,
    rec: &InteractionRecord,
    source: DrawSource,
    rng: &mut R,
) -> Result<()> {
    state.update(rec, source, rng)
}
