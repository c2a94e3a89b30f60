//! Python bindings: the core policies, the population model, both hybrids,
//! trial-data helpers and the experiment runner.

use compliance_core::compliance::{self, InteractionRecord, PopulationModel, Protocol};
use compliance_core::experiment::{self, ExecutionOptions, ExperimentConfig};
use compliance_core::hierarchical::{DrawSource, HierarchicalState, HybridConfig, ThompsonBoundedState};
use compliance_core::ist::{self, Trial};
use compliance_core::policies::{ArmDistribution, BasePolicy, PolicyKind, PolicyParams};
use compliance_core::rng::{rng_from_seed, SimRng};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_kind(kind: &str) -> PyResult<PolicyKind> {
    match kind {
        "exp3" => Ok(PolicyKind::Exp3),
        "epsilon_greedy" => Ok(PolicyKind::EpsilonGreedy),
        "thompson" => Ok(PolicyKind::Thompson),
        other => Err(err(format!("unknown policy kind {other:?}"))),
    }
}

fn parse_protocol(name: &str) -> PyResult<Protocol> {
    Protocol::ALL
        .into_iter()
        .find(|p| p.label() == name)
        .ok_or_else(|| err(format!("unknown protocol {name:?}")))
}

fn parse_trial(name: &str) -> PyResult<Trial> {
    Trial::from_label(name).ok_or_else(|| err(format!("unknown trial {name:?}")))
}

/// EXP3, epsilon-greedy or Thompson sampling with its own seeded generator.
#[pyclass(module = "compliance_bandits")]
struct Policy {
    inner: BasePolicy,
    rng: SimRng,
}

#[pymethods]
impl Policy {
    #[new]
    #[pyo3(signature = (kind, arm_count, seed = 0, gamma = 0.085, eta = None, epsilon_constant = 5.0))]
    fn new(
        kind: &str,
        arm_count: usize,
        seed: u64,
        gamma: f64,
        eta: Option<f64>,
        epsilon_constant: f64,
    ) -> PyResult<Self> {
        let params = PolicyParams {
            gamma,
            eta,
            epsilon_constant,
        };
        Ok(Self {
            inner: BasePolicy::new(parse_kind(kind)?, arm_count, &params).map_err(err)?,
            rng: rng_from_seed(seed),
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().label()
    }

    #[getter]
    fn arm_count(&self) -> usize {
        self.inner.arm_count()
    }

    #[pyo3(signature = (call_prob = 1.0))]
    fn select(&mut self, call_prob: f64) -> PyResult<usize> {
        Ok(self.inner.select(call_prob, &mut self.rng).map_err(err)?.arm)
    }

    #[pyo3(signature = (arm, reward, call_prob = 1.0))]
    fn credit(&mut self, arm: usize, reward: f64, call_prob: f64) -> PyResult<()> {
        self.inner.credit(arm, reward, call_prob, &mut self.rng).map_err(err)
    }

    /// Selection probabilities, or `None` for Thompson sampling.
    fn probabilities(&self) -> Option<Vec<f64>> {
        (0..self.inner.arm_count())
            .map(|a| self.inner.arm_probability(a))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Policy({:?}, arm_count={})", self.kind(), self.arm_count())
    }
}

/// Two-arm population of never-takers, always-takers, compliers and defiers.
#[pyclass(name = "PopulationModel", module = "compliance_bandits")]
struct PyPopulationModel {
    inner: PopulationModel,
}

#[pymethods]
impl PyPopulationModel {
    /// `probs` and `reward_means` are ordered N, A, C, D.
    #[new]
    fn new(probs: [f64; 4], reward_means: [[f64; 2]; 4]) -> PyResult<Self> {
        Ok(Self {
            inner: PopulationModel::new(probs, reward_means).map_err(err)?,
        })
    }

    #[staticmethod]
    fn rich_poor() -> Self {
        use compliance_core::environments::make_rich_poor_env;
        Self {
            inner: make_rich_poor_env().model().clone(),
        }
    }

    #[getter]
    fn probs(&self) -> [f64; 4] {
        self.inner.probs()
    }

    #[getter]
    fn reward_means(&self) -> [[f64; 2]; 4] {
        self.inner.reward_means()
    }

    fn chosen_arm_value(&self, chosen: usize) -> PyResult<f64> {
        self.inner.chosen_arm_value(chosen).map_err(err)
    }

    /// Mean reward credited to `arm` under `protocol` when arm 0 is
    /// recommended with probability `q0`.
    fn expected_protocol_reward(&self, protocol: &str, arm: usize, q0: f64) -> PyResult<Option<f64>> {
        let pulls = ArmDistribution::new(vec![q0, 1.0 - q0]).map_err(err)?;
        compliance::expected_protocol_reward(&self.inner, parse_protocol(protocol)?, arm, &pulls)
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "PopulationModel(probs={:?}, reward_means={:?})",
            self.inner.probs(),
            self.inner.reward_means()
        )
    }
}

/// EXP3 over three protocol-specialized bases.
#[pyclass(module = "compliance_bandits")]
struct Hierarchical {
    inner: HierarchicalState,
    rng: SimRng,
}

#[pymethods]
impl Hierarchical {
    #[new]
    #[pyo3(signature = (arm_count, base = "exp3", recycling = true, seed = 0))]
    fn new(arm_count: usize, base: &str, recycling: bool, seed: u64) -> PyResult<Self> {
        let config = HybridConfig::new(parse_kind(base)?).with_recycling(recycling);
        Ok(Self {
            inner: HierarchicalState::new(arm_count, &config).map_err(err)?,
            rng: rng_from_seed(seed),
        })
    }

    /// Returns `(base, arm)`.
    fn select(&mut self) -> PyResult<(usize, usize)> {
        let d = self.inner.select(&mut self.rng).map_err(err)?;
        Ok((d.base, d.arm))
    }

    fn update(&mut self, chosen: usize, actual: usize, reward: f64) -> PyResult<()> {
        let rec = InteractionRecord::new(chosen, actual, reward);
        self.inner.update(&rec, &mut self.rng).map_err(err)
    }

    fn top_probabilities(&self) -> Vec<f64> {
        self.inner.top().distribution().probs().to_vec()
    }

    /// `(executed, routed, recycled)` update counts of one base.
    fn tally(&self, base: usize) -> PyResult<(u64, u64, u64)> {
        if base >= 3 {
            return Err(err(format!("base {base} out of range")));
        }
        let t = self.inner.tally(base);
        Ok((t.executed, t.routed, t.recycled))
    }
}

/// Thompson sampler that defers to a hierarchical bandit on disagreement.
#[pyclass(module = "compliance_bandits")]
struct ThompsonBounded {
    inner: ThompsonBoundedState,
    pending: Option<DrawSource>,
    rng: SimRng,
}

#[pymethods]
impl ThompsonBounded {
    #[new]
    #[pyo3(signature = (arm_count, base = "thompson", recycling = true, seed = 0))]
    fn new(arm_count: usize, base: &str, recycling: bool, seed: u64) -> PyResult<Self> {
        let config = HybridConfig::new(parse_kind(base)?).with_recycling(recycling);
        Ok(Self {
            inner: ThompsonBoundedState::new(arm_count, &config).map_err(err)?,
            pending: None,
            rng: rng_from_seed(seed),
        })
    }

    /// Returns `(arm, source)` with source `"thompson"` or `"hierarchical"`.
    fn select(&mut self) -> PyResult<(usize, &'static str)> {
        let (arm, source) = self.inner.select(&mut self.rng).map_err(err)?;
        self.pending = Some(source);
        let label = match source {
            DrawSource::Thompson => "thompson",
            DrawSource::Hierarchical => "hierarchical",
        };
        Ok((arm, label))
    }

    fn update(&mut self, chosen: usize, actual: usize, reward: f64) -> PyResult<()> {
        let source = self
            .pending
            .take()
            .ok_or_else(|| err("update called without a pending selection"))?;
        let rec = InteractionRecord::new(chosen, actual, reward);
        self.inner.update(&rec, source, &mut self.rng).map_err(err)
    }
}

/// Arm credited by `protocol`, or `None` when the round is discarded.
#[pyfunction]
fn credited_arm(protocol: &str, chosen: usize, actual: usize) -> PyResult<Option<usize>> {
    Ok(parse_protocol(protocol)?.credited_arm(chosen, actual))
}

/// Arm a trial patient received given assignment and compliance.
#[pyfunction]
fn derive_actual_arm(trial: &str, assigned: usize, complied: bool) -> PyResult<usize> {
    ist::derive_actual_arm(parse_trial(trial)?, assigned, complied).map_err(err)
}

/// Runs a JSON experiment config and returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, serial = false))]
fn run_experiment(py: Python<'_>, config_json: &str, serial: bool) -> PyResult<String> {
    let config = ExperimentConfig::from_json_str(config_json).map_err(err)?;
    let exec = if serial {
        ExecutionOptions::serial()
    } else {
        ExecutionOptions::from_env()
    };
    let result = py
        .detach(|| experiment::run_experiment(&config, &exec))
        .map_err(err)?;
    serde_json::to_string(&result.summary).map_err(err)
}

#[pymodule]
fn compliance_bandits(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Policy>()?;
    m.add_class::<PyPopulationModel>()?;
    m.add_class::<Hierarchical>()?;
    m.add_class::<ThompsonBounded>()?;
    m.add_function(wrap_pyfunction!(credited_arm, m)?)?;
    m.add_function(wrap_pyfunction!(derive_actual_arm, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("SCHEMA_VERSION", experiment::SCHEMA_VERSION)?;
    Ok(())
}
