use rand::Rng;

use super::config::AlgorithmSpec;
use crate::compliance::{InteractionRecord, Protocol};
use crate::error::{check_arm, BanditError, Result};
use crate::hierarchical::{DrawSource, HierarchicalState, HybridConfig, ThompsonBoundedState};
use crate::policies::{argmax_random_tie, BasePolicy, PolicyParams};
use crate::rng::SimRng;

/// A recommender driven by the experiment loop: one `select` followed by
/// one `observe` per round.
pub trait Agent: Send {
    fn select(&mut self, rng: &mut SimRng) -> Result<usize>;
    fn observe(&mut self, rec: &InteractionRecord, rng: &mut SimRng) -> Result<()>;
}

/// A core policy learning under one reward protocol.
#[derive(Debug, Clone)]
pub struct ProtocolAgent {
    protocol: Protocol,
    policy: BasePolicy,
}

impl ProtocolAgent {
    pub fn new(protocol: Protocol, policy: BasePolicy) -> Self {
        Self { protocol, policy }
    }

    pub fn policy(&self) -> &BasePolicy {
        &self.policy
    }
}

impl Agent for ProtocolAgent {
    fn select(&mut self, rng: &mut SimRng) -> Result<usize> {
        Ok(self.policy.select(1.0, rng)?.arm)
    }

    fn observe(&mut self, rec: &InteractionRecord, rng: &mut SimRng) -> Result<()> {
        rec.validate(self.policy.arm_count())?;
        match self.protocol.route(rec) {
            Some((arm, reward)) => self.policy.credit(arm, reward, 1.0, rng),
            None => Ok(()),
        }
    }
}

impl Agent for HierarchicalState {
    fn select(&mut self, rng: &mut SimRng) -> Result<usize> {
        Ok(HierarchicalState::select(self, rng)?.arm)
    }

    fn observe(&mut self, rec: &InteractionRecord, rng: &mut SimRng) -> Result<()> {
        self.update(rec, rng)
    }
}

/// [`ThompsonBoundedState`] plus the source of its pending pull.
#[derive(Debug, Clone)]
pub struct ThompsonBoundedAgent {
    state: ThompsonBoundedState,
    source: Option<DrawSource>,
}

impl ThompsonBoundedAgent {
    pub fn new(state: ThompsonBoundedState) -> Self {
        Self {
            state,
            source: None,
        }
    }

    pub fn state(&self) -> &ThompsonBoundedState {
        &self.state
    }
}

impl Agent for ThompsonBoundedAgent {
    fn select(&mut self, rng: &mut SimRng) -> Result<usize> {
        let (arm, source) = self.state.select(rng)?;
        self.source = Some(source);
        Ok(arm)
    }

    fn observe(&mut self, rec: &InteractionRecord, rng: &mut SimRng) -> Result<()> {
        let source = self
            .source
            .take()
            .ok_or_else(|| BanditError::StaleSelection("no pending selection".into()))?;
        self.state.update(rec, source, rng)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedAgent(pub usize);

impl Agent for FixedAgent {
    fn select(&mut self, _rng: &mut SimRng) -> Result<usize> {
        Ok(self.0)
    }

    fn observe(&mut self, _rec: &InteractionRecord, _rng: &mut SimRng) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UniformAgent(pub usize);

impl Agent for UniformAgent {
    fn select(&mut self, rng: &mut SimRng) -> Result<usize> {
        Ok(rng.random_range(0..self.0))
    }

    fn observe(&mut self, _rec: &InteractionRecord, _rng: &mut SimRng) -> Result<()> {
        Ok(())
    }
}

/// Builds a fresh agent for a `arm_count`-armed component. `arm_values` is
/// needed only by the oracle.
pub fn build_agent(
    spec: &AlgorithmSpec,
    arm_count: usize,
    params: &PolicyParams,
    recycling: bool,
    arm_values: Option<&[f64]>,
    rng: &mut SimRng,
) -> Result<Box<dyn Agent>> {
    let hybrid = |base| {
        HybridConfig::new(base)
            .with_params(*params)
            .with_recycling(recycling)
    };
    Ok(match *spec {
        AlgorithmSpec::Protocol { protocol, policy } => Box::new(ProtocolAgent::new(
            protocol,
            BasePolicy::new(policy, arm_count, params)?,
        )),
        AlgorithmSpec::Hierarchical { base } => {
            Box::new(HierarchicalState::new(arm_count, &hybrid(base))?)
        }
        AlgorithmSpec::ThompsonBounded { base } => Box::new(ThompsonBoundedAgent::new(
            ThompsonBoundedState::new(arm_count, &hybrid(base))?,
        )),
        AlgorithmSpec::Fixed { arm } => Box::new(FixedAgent(check_arm(arm, arm_count)?)),
        AlgorithmSpec::Uniform => Box::new(UniformAgent(arm_count)),
        AlgorithmSpec::Oracle => {
            let values = arm_values.ok_or_else(|| BanditError::InvalidParameter {
                name: "algorithm",
                reason: "the oracle needs an environment with known arm values".into(),
            })?;
            Box::new(FixedAgent(argmax_random_tie(values, rng)))
        }
    })
}
