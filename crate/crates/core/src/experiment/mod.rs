//! Seeded, parallel experiment runner with surplus, bootstrap intervals and
//! regret curves.

mod agent;
mod config;
mod stats;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compliance::InteractionRecord;
use crate::error::BanditError;
use crate::ist::IstError;
use crate::rng::{rng_from_seed, run_seed, splitmix64};

pub use agent::{build_agent, Agent, FixedAgent, ProtocolAgent, ThompsonBoundedAgent, UniformAgent};
pub use config::{AlgorithmSpec, EnvironmentSpec, ExperimentConfig, PreparedEnvironment, TrialSource};
pub use stats::{confidence_interval, mean, std_dev, std_error, surplus, BOOTSTRAP_RESAMPLES};

/// Version of the `runs.csv` / `summary.json` / `curves.csv` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "COMPLIANCE_BANDITS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Data(#[from] IstError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("loading {}: {source}", path.display())]
    Source {
        path: PathBuf,
        source: Box<ExperimentError>,
    },
}

/// How runs are scheduled. Results do not depend on it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecutionOptions {
    pub serial: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl ExecutionOptions {
    pub fn serial() -> Self {
        Self {
            serial: true,
            threads: None,
        }
    }

    /// Parallel execution sized by [`THREADS_ENV`] when it is set.
    pub fn from_env() -> Self {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0);
        Self {
            serial: false,
            threads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub seed: u64,
    pub cum_reward: f64,
    pub surplus: f64,
    /// Per-round uniform-random baseline summed over components.
    pub baseline: f64,
    pub component_surplus: Vec<f64>,
    /// Realized regret `best * t - sum of rewards` at each checkpoint.
    pub regret: Option<Vec<f64>>,
    /// Regret against the expected value of each recommendation.
    pub pseudo_regret: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub label: String,
    pub arm_count: usize,
    pub baseline_per_round: f64,
    pub mean_surplus: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub name: String,
    pub environment: String,
    pub algorithm: String,
    pub horizon: u64,
    pub runs: u64,
    pub seed: u64,
    pub baseline_per_round: f64,
    pub mean_cum_reward: f64,
    pub mean_surplus: f64,
    pub std_surplus: f64,
    pub ci_level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub components: Vec<ComponentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub checkpoints: Vec<u64>,
    pub mean_regret: Vec<f64>,
    pub mean_pseudo_regret: Vec<f64>,
}

impl RegretCurve {
    pub fn at(&self, t: u64) -> Option<(f64, f64)> {
        let i = self.checkpoints.iter().position(|&c| c == t)?;
        Some((self.mean_regret[i], self.mean_pseudo_regret[i]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub summary: RunSummary,
    pub runs: Vec<RunRecord>,
    pub curve: Option<RegretCurve>,
}

impl ExperimentResult {
    pub fn surpluses(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.surplus).collect()
    }

    pub fn write_runs_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["run_id", "seed", "cum_reward", "surplus"])?;
        for r in &self.runs {
            w.write_record([
                r.run_id.to_string(),
                r.seed.to_string(),
                r.cum_reward.to_string(),
                r.surplus.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_curves_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let curve = self.curve.as_ref().ok_or_else(|| {
            ExperimentError::Config("regret curves need an environment with known arm values".into())
        })?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["checkpoint", "mean_regret", "mean_pseudo_regret"])?;
        for i in 0..curve.checkpoints.len() {
            w.write_record([
                curve.checkpoints[i].to_string(),
                curve.mean_regret[i].to_string(),
                curve.mean_pseudo_regret[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `summary.json`, `runs.csv` and, on request, `curves.csv`.
    pub fn write_outputs(&self, dir: &Path, emit_curves: bool) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(&self.summary)?;
        json.push('\n');
        fs::write(dir.join("summary.json"), json)?;
        self.write_runs_csv(fs::File::create(dir.join("runs.csv"))?)?;
        match (emit_curves, &self.curve) {
            (true, Some(_)) => self.write_curves_csv(fs::File::create(dir.join("curves.csv"))?)?,
            (true, None) => log::warn!(
                "{}: arm values unknown, no regret curves written",
                self.summary.name
            ),
            (false, _) => {}
        }
        Ok(())
    }
}

/// Checks the config and loads its data; nothing is simulated.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedEnvironment, ExperimentError> {
    config.validate()?;
    let prepared = PreparedEnvironment::prepare(&config.environment)?;
    match config.algorithm {
        AlgorithmSpec::Fixed { arm } => {
            if let Some(k) = prepared.arm_counts().into_iter().find(|&k| arm >= k) {
                return Err(ExperimentError::Config(format!(
                    "fixed arm {arm} out of range for a {k}-armed environment"
                )));
            }
        }
        AlgorithmSpec::Oracle if !prepared.has_values() => {
            return Err(ExperimentError::Config(
                "the oracle needs an environment with known arm values".into(),
            ));
        }
        _ => {}
    }
    Ok(prepared)
}

fn run_one(
    config: &ExperimentConfig,
    prepared: &PreparedEnvironment,
    checkpoints: &[u64],
    run_id: u64,
) -> Result<RunRecord, BanditError> {
    let seed = run_seed(config.seed, run_id);
    let mut rng = rng_from_seed(seed);
    let params = config.policy_params();
    let components = prepared.component_count();

    let mut cum_reward = 0.0;
    let mut total_surplus = 0.0;
    let mut baseline_sum = 0.0;
    let mut component_surplus = Vec::with_capacity(components);
    let mut regret = prepared.has_values().then(|| vec![0.0; checkpoints.len()]);
    let mut pseudo = prepared.has_values().then(|| vec![0.0; checkpoints.len()]);

    for comp in 0..components {
        let mut env = prepared.instantiate(comp, &mut rng);
        let values = env.arm_values();
        let best = env.best_value();
        let baseline = env.baseline();
        let mut agent = build_agent(
            &config.algorithm,
            env.arm_count(),
            &params,
            config.recycling,
            values.as_deref(),
            &mut rng,
        )?;

        let mut reward_sum = 0.0;
        let mut value_sum = 0.0;
        let mut next_cp = 0;
        for t in 1..=config.horizon {
            let chosen = agent.select(&mut rng)?;
            let step = env.step(chosen, &mut rng)?;
            agent.observe(&InteractionRecord::new(chosen, step.actual, step.reward), &mut rng)?;
            reward_sum += step.reward;
            if let Some(v) = &values {
                value_sum += v[chosen];
            }
            if next_cp < checkpoints.len() && checkpoints[next_cp] == t {
                if let (Some(b), Some(reg), Some(ps)) = (best, regret.as_mut(), pseudo.as_mut()) {
                    reg[next_cp] += b * t as f64 - reward_sum;
                    ps[next_cp] += b * t as f64 - value_sum;
                }
                next_cp += 1;
            }
        }
        let s = reward_sum - config.horizon as f64 * baseline;
        cum_reward += reward_sum;
        total_surplus += s;
        baseline_sum += baseline;
        component_surplus.push(s);
    }

    Ok(RunRecord {
        run_id,
        seed,
        cum_reward,
        surplus: total_surplus,
        baseline: baseline_sum,
        component_surplus,
        regret,
        pseudo_regret: pseudo,
    })
}

fn mean_columns(rows: impl Iterator<Item = Vec<f64>>, width: usize, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; width];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc.into_iter().map(|a| a / n as f64).collect()
}

/// Runs every replication of `config`. Run `i` draws all randomness from a
/// stream seeded by `(config.seed, i)`, so the result is the same whatever
/// the scheduling.
pub fn run_experiment(
    config: &ExperimentConfig,
    exec: &ExecutionOptions,
) -> Result<ExperimentResult, ExperimentError> {
    let prepared = prepare(config)?;
    let checkpoints = config.checkpoint_list();
    let job = |i: u64| run_one(config, &prepared, &checkpoints, i);

    let runs: Vec<RunRecord> = if exec.serial {
        (0..config.runs).map(job).collect::<Result<_, _>>()?
    } else if let Some(n) = exec.threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
        pool.install(|| (0..config.runs).into_par_iter().map(job).collect::<Result<_, _>>())?
    } else {
        (0..config.runs).into_par_iter().map(job).collect::<Result<_, _>>()?
    };

    Ok(summarize(config, &prepared, checkpoints, runs)?)
}

fn summarize(
    config: &ExperimentConfig,
    prepared: &PreparedEnvironment,
    checkpoints: Vec<u64>,
    runs: Vec<RunRecord>,
) -> Result<ExperimentResult, BanditError> {
    let n = runs.len();
    let ci_seed = splitmix64(config.seed ^ 0x5eed_b007);
    let interval = |xs: &[f64]| -> Result<(f64, f64), BanditError> {
        if xs.len() < 2 {
            let m = mean(xs);
            Ok((m, m))
        } else {
            confidence_interval(xs, config.ci_level, ci_seed)
        }
    };

    let surpluses: Vec<f64> = runs.iter().map(|r| r.surplus).collect();
    let (ci_low, ci_high) = interval(&surpluses)?;
    let arm_counts = prepared.arm_counts();
    let components = (0..prepared.component_count())
        .map(|c| {
            let xs: Vec<f64> = runs.iter().map(|r| r.component_surplus[c]).collect();
            let (lo, hi) = interval(&xs)?;
            Ok(ComponentSummary {
                label: prepared.component_label(c),
                arm_count: arm_counts[c],
                baseline_per_round: if prepared.component_count() == 1 {
                    mean(&runs.iter().map(|r| r.baseline).collect::<Vec<_>>())
                } else {
                    match prepared {
                        PreparedEnvironment::Trials { tables, .. } => {
                            crate::ist::table_baseline(&tables[c])
                        }
                        _ => unreachable!("only trial environments have several components"),
                    }
                },
                mean_surplus: mean(&xs),
                ci_low: lo,
                ci_high: hi,
            })
        })
        .collect::<Result<Vec<_>, BanditError>>()?;

    let curve = prepared.has_values().then(|| {
        let w = checkpoints.len();
        RegretCurve {
            mean_regret: mean_columns(runs.iter().filter_map(|r| r.regret.clone()), w, n),
            mean_pseudo_regret: mean_columns(
                runs.iter().filter_map(|r| r.pseudo_regret.clone()),
                w,
                n,
            ),
            checkpoints,
        }
    });

    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        name: config.label(),
        environment: config.environment.label(),
        algorithm: config.algorithm.label(),
        horizon: config.horizon,
        runs: config.runs,
        seed: config.seed,
        baseline_per_round: mean(&runs.iter().map(|r| r.baseline).collect::<Vec<_>>()),
        mean_cum_reward: mean(&runs.iter().map(|r| r.cum_reward).collect::<Vec<_>>()),
        mean_surplus: mean(&surpluses),
        std_surplus: std_dev(&surpluses),
        ci_level: config.ci_level,
        ci_low,
        ci_high,
        components,
    };
    Ok(ExperimentResult {
        summary,
        runs,
        curve,
    })
}

/// Mean regret per checkpoint; fails for worlds without known arm values.
pub fn regret_curve(
    config: &ExperimentConfig,
    exec: &ExecutionOptions,
) -> Result<RegretCurve, ExperimentError> {
    let result = run_experiment(config, exec)?;
    result.curve.ok_or_else(|| {
        ExperimentError::Config(
            "regret needs known arm values; set declare_values for trial data".into(),
        )
    })
}

/// JSON config files directly inside `dir`, sorted by name.
pub fn sweep_configs(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Runs each config file in turn. Every config is validated and its data
/// loaded before the first one runs.
pub fn sweep(
    paths: &[PathBuf],
    exec: &ExecutionOptions,
) -> Result<Vec<(PathBuf, ExperimentConfig, ExperimentResult)>, ExperimentError> {
    let configs = paths
        .iter()
        .map(|p| {
            let cfg = ExperimentConfig::from_file(p)?;
            prepare(&cfg).map_err(|e| ExperimentError::Config(format!("{}: {e}", p.display())))?;
            Ok((p.clone(), cfg))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    configs
        .into_iter()
        .map(|(p, cfg)| {
            let result = run_experiment(&cfg, exec)?;
            Ok((p, cfg, result))
        })
        .collect()
}
