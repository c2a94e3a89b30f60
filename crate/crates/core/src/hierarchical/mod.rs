//! Hybrid algorithms that use compliance information while keeping the
//! guarantees of a bandit learning under the `Chosen` protocol.
//!
//! [`HierarchicalState`] runs three base bandits, one per protocol, under a
//! top-level EXP3 that learns which base to follow. [`ThompsonBoundedState`]
//! follows a `Chosen` Thompson sampler whenever two of its draws agree and
//! defers to a hierarchical bandit otherwise.
//!
//! Base conventions:
//! * the `Chosen` base (index 0) is certified. It learns from its own
//!   executed rounds and, with recycling on, from the [`ReplayCache`];
//! * the `Actual` and `Comply` bases see every round through their routing
//!   when they are mean-tracking (epsilon-greedy, Thompson); EXP3 bases only
//!   learn on rounds they executed, with importance weights `x_i * y_ij`.

mod hhedge;
mod replay;
mod thompson_bounded;

pub use hhedge::{hhedge_round, HHedgeOutcome, HierarchicalExp3};
pub use replay::ReplayCache;
pub use thompson_bounded::{tb_select, tb_update, DrawSource, ThompsonBoundedState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compliance::{InteractionRecord, Protocol};
use crate::error::{BanditError, Result};
use crate::policies::{ArmDraw, BasePolicy, Exp3State, PolicyKind, PolicyParams};

/// Number of base bandits.
pub const BASE_COUNT: usize = 3;
/// Protocol each base learns under, in base-index order.
pub const BASE_PROTOCOLS: [Protocol; BASE_COUNT] =
    [Protocol::Chosen, Protocol::Actual, Protocol::Comply];
/// Index of the certified (`Chosen`) base.
pub const CERTIFIED_BASE: usize = 0;

/// Construction parameters shared by both hybrids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub base_kind: PolicyKind,
    pub params: PolicyParams,
    pub recycling: bool,
}

impl HybridConfig {
    pub fn new(base_kind: PolicyKind) -> Self {
        Self {
            base_kind,
            params: PolicyParams::default(),
            recycling: true,
        }
    }

    pub fn with_recycling(mut self, on: bool) -> Self {
        self.recycling = on;
        self
    }

    pub fn with_params(mut self, params: PolicyParams) -> Self {
        self.params = params;
        self
    }
}

/// One hierarchical draw: base `base` picked with probability `base_prob`,
/// then `arm` from that base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbDraw {
    pub base: usize,
    pub arm: usize,
    pub base_prob: f64,
    pub arm_prob: Option<f64>,
    /// Top-level distribution at selection time.
    pub top_probs: [f64; BASE_COUNT],
}

/// How a base learned from a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateSource {
    /// The base was executed this round.
    Executed,
    /// The round was routed to the base without it being executed.
    Routed,
    /// A cached reward was replayed to the certified base.
    Recycled,
}

/// Update provenance of one base, by source and by routing protocol.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateTally {
    pub executed: u64,
    pub routed: u64,
    pub recycled: u64,
    /// Updates per routing protocol, indexed like [`Protocol::ALL`].
    pub by_protocol: [u64; 3],
}

impl UpdateTally {
    fn record(&mut self, source: UpdateSource, protocol: Protocol) {
        match source {
            UpdateSource::Executed => self.executed += 1,
            UpdateSource::Routed => self.routed += 1,
            UpdateSource::Recycled => self.recycled += 1,
        }
        let idx = Protocol::ALL.iter().position(|p| *p == protocol).expect("known protocol");
        self.by_protocol[idx] += 1;
    }

    pub fn total(&self) -> u64 {
        self.executed + self.routed + self.recycled
    }
}

/// Two-level bandit: EXP3 over three protocol-specialized bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalState {
    top: Exp3State,
    bases: [BasePolicy; BASE_COUNT],
    base_kind: PolicyKind,
    recycling: bool,
    cache: ReplayCache,
    last_draw: Option<HbDraw>,
    tallies: [UpdateTally; BASE_COUNT],
}

impl HierarchicalState {
    pub fn new(arm_count: usize, config: &HybridConfig) -> Result<Self> {
        let top = config.params.exp3(BASE_COUNT)?;
        Self::with_top(arm_count, config, top)
    }

    /// Same as [`HierarchicalState::new`] with a caller-supplied top level.
    pub fn with_top(arm_count: usize, config: &HybridConfig, top: Exp3State) -> Result<Self> {
        if top.arm_count() != BASE_COUNT {
            return Err(BanditError::LengthMismatch {
                expected: BASE_COUNT,
                got: top.arm_count(),
            });
        }
        let base = BasePolicy::new(config.base_kind, arm_count, &config.params)?;
        Ok(Self {
            top,
            bases: [base.clone(), base.clone(), base],
            base_kind: config.base_kind,
            recycling: config.recycling,
            cache: ReplayCache::new(arm_count),
            last_draw: None,
            tallies: Default::default(),
        })
    }

    pub fn arm_count(&self) -> usize {
        self.bases[0].arm_count()
    }

    pub fn top(&self) -> &Exp3State {
        &self.top
    }

    pub fn base(&self, index: usize) -> &BasePolicy {
        &self.bases[index]
    }

    pub fn base_kind(&self) -> PolicyKind {
        self.base_kind
    }

    pub fn recycling(&self) -> bool {
        self.recycling
    }

    pub fn cache(&self) -> &ReplayCache {
        &self.cache
    }

    pub fn last_draw(&self) -> Option<&HbDraw> {
        self.last_draw.as_ref()
    }

    pub fn tally(&self, base: usize) -> &UpdateTally {
        &self.tallies[base]
    }

    /// Probability with which base `base` counts as being consulted, given
    /// its top-level probability.
    fn call_prob(&self, base: usize, top_prob: f64) -> f64 {
        if base == CERTIFIED_BASE {
            if self.recycling {
                1.0
            } else {
                top_prob
            }
        } else if self.base_kind == PolicyKind::Exp3 {
            top_prob
        } else {
            1.0
        }
    }

    /// Draws a base from the top level and an arm from that base.
    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<HbDraw> {
        let dist = self.top.distribution();
        let base = dist.sample(rng);
        let base_prob = dist.prob(base);
        let ArmDraw { arm, prob } = self.bases[base].select(self.call_prob(base, base_prob), rng)?;
        let mut top_probs = [0.0; BASE_COUNT];
        top_probs.copy_from_slice(dist.probs());
        let draw = HbDraw {
            base,
            arm,
            base_prob,
            arm_prob: prob,
            top_probs,
        };
        self.last_draw = Some(draw);
        Ok(draw)
    }

    /// Learns from the round played with the last [`select`](Self::select).
    pub fn update<R: Rng + ?Sized>(&mut self, rec: &InteractionRecord, rng: &mut R) -> Result<()> {
        rec.validate(self.arm_count())?;
        let draw = match self.last_draw {
            Some(d) if d.arm == rec.chosen => d,
            Some(d) => {
                return Err(BanditError::StaleSelection(format!(
                    "selected arm {} but record has chosen arm {}",
                    d.arm, rec.chosen
                )))
            }
            None => return Err(BanditError::StaleSelection("no pending selection".into())),
        };
        self.last_draw = None;
        let executed = draw.base;

        self.top.update(executed, 1.0 - rec.reward, draw.base_prob)?;

        // certified base
        if executed == CERTIFIED_BASE {
            let cp = self.call_prob(CERTIFIED_BASE, draw.top_probs[CERTIFIED_BASE]);
            self.bases[CERTIFIED_BASE].credit(rec.chosen, rec.reward, cp, rng)?;
            self.tallies[CERTIFIED_BASE].record(UpdateSource::Executed, Protocol::Chosen);
        } else if self.recycling {
            self.cache.push(rec.chosen, rec.reward)?;
            let would_play = self.bases[CERTIFIED_BASE].select(1.0, rng)?.arm;
            if let Some(replayed) = self.cache.credit(would_play, rng) {
                self.bases[CERTIFIED_BASE].credit(would_play, replayed, 1.0, rng)?;
                self.tallies[CERTIFIED_BASE].record(UpdateSource::Recycled, Protocol::Chosen);
            }
        }

        // protocol-routed bases
        for base in 1..BASE_COUNT {
            if self.base_kind == PolicyKind::Exp3 && base != executed {
                continue;
            }
            let protocol = BASE_PROTOCOLS[base];
            if let Some((arm, reward)) = protocol.route(rec) {
                let cp = self.call_prob(base, draw.top_probs[base]);
                self.bases[base].credit(arm, reward, cp, rng)?;
                let source = if base == executed {
                    UpdateSource::Executed
                } else {
                    UpdateSource::Routed
                };
                self.tallies[base].record(source, protocol);
            }
        }
        Ok(())
    }
}

pub fn hb_select<R: Rng + ?Sized>(state: &mut HierarchicalState, rng: &mut R) -> Result<HbDraw> {
    state.select(rng)
}

pub fn hb_update<R: Rng + ?Sized>(
    state: &mut HierarchicalState,
    rec: &InteractionRecord,
    rng: &mut R,
) -> Result<()> {
    state.update(rec, rng)
}


#[cfg(test)]
impl HierarchicalState {
    fn base_eta(&self, base: usize) -> f64 {
        match &self.bases[base] {
            BasePolicy::Exp3(s) => s.eta(),
            _ => panic!("not an EXP3 base"),
        }
    }
}
