//! Multi-armed bandits whose recommendations are not always followed, with
//! the follow-through observed after each pull.
//!
//! The crate provides the core policies (EXP3, epsilon-greedy, Thompson
//! sampling with fractional pseudo-counts), the reward protocols that decide
//! which arm an observation credits, two hybrids that combine protocols while
//! keeping a certified no-regret component, synthetic and trial-driven
//! environments, and a deterministic experiment runner.

pub mod compliance;
pub mod environments;
pub mod error;
pub mod experiment;
pub mod hierarchical;
pub mod ist;
pub mod policies;
pub mod rng;

pub use compliance::{
    expected_protocol_reward, InteractionRecord, PopulationModel, Protocol, Subpopulation,
};
pub use environments::{Environment, PopulationEnv, RewardMode, SmallTCompliance, Step};
pub use error::{BanditError, Result};
pub use experiment::{
    run_experiment, AlgorithmSpec, EnvironmentSpec, ExecutionOptions, ExperimentConfig,
    ExperimentError, ExperimentResult, RunSummary,
};
pub use hierarchical::{
    DrawSource, HierarchicalState, HybridConfig, ReplayCache, ThompsonBoundedState,
};
pub use ist::{PatientRecord, Trial, TrialTable};
pub use policies::{
    ArmDistribution, BasePolicy, EpsilonGreedyState, Exp3State, HedgeState, PolicyKind,
    PolicyParams, ThompsonState,
};
pub use rng::SimRng;
