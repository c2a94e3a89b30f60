use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::compliance::{PopulationModel, Protocol};
use crate::environments::{
    make_defier_env, make_rich_poor_env, make_small_t_env, Environment, PopulationEnv, RewardMode,
    SmallTCompliance,
};
use crate::ist::{
    parse_trial_csv, read_canonical_csv, ColumnMap, Sampling, TrialEnv, TrialTable,
};
use crate::policies::{PolicyKind, PolicyParams, DEFAULT_EPSILON_CONSTANT, DEFAULT_GAMMA};
use crate::rng::SimRng;

/// One trial data file. Without `map` the file is read as a canonical export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSource {
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Defier,
    RichPoor,
    /// A fresh random instance per run.
    SmallT {
        #[serde(default)]
        compliance: SmallTCompliance,
    },
    Population {
        model: PopulationModel,
        #[serde(default)]
        reward_mode: RewardMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    /// Counterfactual patients from one or more trials. Each run plays the
    /// full horizon on every listed trial and reports their sum.
    Trial {
        sources: Vec<TrialSource>,
        #[serde(default)]
        sampling: Sampling,
        /// Treat group means as known arm values so regret can be computed.
        #[serde(default)]
        declare_values: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    /// A single policy learning under one reward protocol.
    Protocol {
        protocol: Protocol,
        policy: PolicyKind,
    },
    Hierarchical {
        base: PolicyKind,
    },
    ThompsonBounded {
        #[serde(default = "default_tb_base")]
        base: PolicyKind,
    },
    Fixed {
        arm: usize,
    },
    Uniform,
    /// Always recommends the arm with the highest known value.
    Oracle,
}

fn default_tb_base() -> PolicyKind {
    PolicyKind::Thompson
}

impl AlgorithmSpec {
    pub fn label(&self) -> String {
        match self {
            AlgorithmSpec::Protocol { protocol, policy } => {
                format!("{}_{}", protocol.label(), policy.label())
            }
            AlgorithmSpec::Hierarchical { base } => format!("hb_{}", base.label()),
            AlgorithmSpec::ThompsonBounded { base } => format!("tb_{}", base.label()),
            AlgorithmSpec::Fixed { arm } => format!("fixed_{arm}"),
            AlgorithmSpec::Uniform => "uniform".into(),
            AlgorithmSpec::Oracle => "oracle".into(),
        }
    }
}

fn default_horizon() -> u64 {
    10_000
}

fn default_runs() -> u64 {
    200
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_epsilon_constant() -> f64 {
    DEFAULT_EPSILON_CONSTANT
}

fn default_true() -> bool {
    true
}

fn default_ci_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub environment: EnvironmentSpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_epsilon_constant")]
    pub epsilon_constant: f64,
    #[serde(default = "default_true")]
    pub recycling: bool,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    /// Regret checkpoints; defaults to powers of two up to the horizon, plus
    /// the horizon itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(environment: EnvironmentSpec, algorithm: AlgorithmSpec) -> Self {
        Self {
            name: None,
            environment,
            algorithm,
            horizon: default_horizon(),
            runs: default_runs(),
            seed: 0,
            gamma: DEFAULT_GAMMA,
            eta: None,
            epsilon_constant: DEFAULT_EPSILON_CONSTANT,
            recycling: true,
            ci_level: default_ci_level(),
            checkpoints: None,
            output: None,
        }
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_runs(mut self, runs: u64) -> Self {
        self.runs = runs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_recycling(mut self, on: bool) -> Self {
        self.recycling = on;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = Some(checkpoints);
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads a config file; relative data and output paths are resolved
    /// against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let EnvironmentSpec::Trial { sources, .. } = &mut cfg.environment {
            for s in sources {
                resolve(&mut s.csv);
                if let Some(m) = &mut s.map {
                    resolve(m);
                }
            }
        }
        if let Some(out) = &mut cfg.output {
            resolve(out);
        }
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}_{}", self.environment.label(), self.algorithm.label()))
    }

    pub fn policy_params(&self) -> PolicyParams {
        PolicyParams {
            gamma: self.gamma,
            eta: self.eta,
            epsilon_constant: self.epsilon_constant,
        }
    }

    /// Regret checkpoints in increasing order.
    pub fn checkpoint_list(&self) -> Vec<u64> {
        let mut cps = match &self.checkpoints {
            Some(c) => c.clone(),
            None => {
                let mut c: Vec<u64> = (0..64)
                    .map(|i| 1u64 << i)
                    .take_while(|&v| v <= self.horizon)
                    .collect();
                c.push(self.horizon);
                c
            }
        };
        cps.sort_unstable();
        cps.dedup();
        cps
    }

    /// Parameter checks that need no data.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("eta must be positive, got {eta}"));
            }
        }
        if !(self.epsilon_constant > 0.0 && self.epsilon_constant.is_finite()) {
            return bad(format!(
                "epsilon_constant must be positive, got {}",
                self.epsilon_constant
            ));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad(format!("ci_level must be in (0, 1), got {}", self.ci_level));
        }
        if let Some(cps) = &self.checkpoints {
            if let Some(c) = cps.iter().find(|&&c| c < 1 || c > self.horizon) {
                return bad(format!("checkpoint {c} outside [1, {}]", self.horizon));
            }
        }
        if let EnvironmentSpec::Trial { sources, .. } = &self.environment {
            if sources.is_empty() {
                return bad("trial environment lists no sources".into());
            }
        }
        Ok(())
    }
}

impl EnvironmentSpec {
    pub fn label(&self) -> String {
        match self {
            EnvironmentSpec::Defier => "defier".into(),
            EnvironmentSpec::RichPoor => "rich_poor".into(),
            EnvironmentSpec::SmallT { .. } => "small_t".into(),
            EnvironmentSpec::Population { label, .. } => {
                label.clone().unwrap_or_else(|| "population".into())
            }
            EnvironmentSpec::Trial { .. } => "trial".into(),
        }
    }
}

/// An environment spec with its data loaded, ready to hand out per-run
/// instances. Holds one entry per component (trial) of the experiment.
#[derive(Debug, Clone)]
pub enum PreparedEnvironment {
    Fixed(PopulationEnv),
    SmallT(SmallTCompliance),
    Trials {
        tables: Vec<Arc<TrialTable>>,
        sampling: Sampling,
        declare_values: bool,
    },
}

fn load_source(source: &TrialSource) -> Result<TrialTable, ExperimentError> {
    let table = match &source.map {
        Some(map) => {
            let map = ColumnMap::from_json_file(map)?;
            parse_trial_csv(&source.csv, &map)?.into_table()?
        }
        None => {
            let records = read_canonical_csv(std::fs::File::open(&source.csv)?)?;
            let trial = records
                .first()
                .map(|r| r.trial)
                .ok_or_else(|| ExperimentError::Config(format!("{} is empty", source.csv.display())))?;
            TrialTable::from_records(trial, records)?
        }
    };
    Ok(table)
}

impl PreparedEnvironment {
    pub fn prepare(spec: &EnvironmentSpec) -> Result<Self, ExperimentError> {
        Ok(match spec {
            EnvironmentSpec::Defier => Self::Fixed(make_defier_env()),
            EnvironmentSpec::RichPoor => Self::Fixed(make_rich_poor_env()),
            EnvironmentSpec::SmallT { compliance } => Self::SmallT(*compliance),
            EnvironmentSpec::Population {
                model,
                reward_mode,
                label,
            } => Self::Fixed(
                PopulationEnv::new(model.clone(), label.clone().unwrap_or_else(|| "population".into()))
                    .with_reward_mode(*reward_mode),
            ),
            EnvironmentSpec::Trial {
                sources,
                sampling,
                declare_values,
            } => Self::Trials {
                tables: sources
                    .iter()
                    .map(|s| {
                        load_source(s).map(Arc::new).map_err(|e| ExperimentError::Source {
                            path: s.csv.clone(),
                            source: Box::new(e),
                        })
                    })
                    .collect::<Result<_, _>>()?,
                sampling: *sampling,
                declare_values: *declare_values,
            },
        })
    }

    pub fn component_count(&self) -> usize {
        match self {
            Self::Trials { tables, .. } => tables.len(),
            _ => 1,
        }
    }

    /// Arm count of every component, when it does not depend on the run.
    pub fn arm_counts(&self) -> Vec<usize> {
        match self {
            Self::Trials { tables, .. } => tables.iter().map(|t| t.arm_count()).collect(),
            _ => vec![2],
        }
    }

    pub fn component_label(&self, i: usize) -> String {
        match self {
            Self::Fixed(env) => env.label(),
            Self::SmallT(_) => "small_t".into(),
            Self::Trials { tables, .. } => format!("ist_{}", tables[i].trial()),
        }
    }

    /// Builds component `i` for one run; random worlds draw their instance
    /// from `rng`.
    pub fn instantiate(&self, i: usize, rng: &mut SimRng) -> Box<dyn Environment> {
        match self {
            Self::Fixed(env) => Box::new(env.clone()),
            Self::SmallT(compliance) => Box::new(make_small_t_env(*compliance, rng)),
            Self::Trials {
                tables,
                sampling,
                declare_values,
            } => {
                let env = TrialEnv::new(tables[i].clone()).with_sampling(*sampling);
                if *declare_values {
                    Box::new(env.with_declared_values())
                } else {
                    Box::new(env)
                }
            }
        }
    }

    /// True when every instance exposes arm values.
    pub fn has_values(&self) -> bool {
        match self {
            Self::Trials { declare_values, .. } => *declare_values,
            _ => true,
        }
    }
}
