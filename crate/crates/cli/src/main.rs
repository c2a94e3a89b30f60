use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use compliance_core::experiment::{
    run_experiment, sweep, sweep_configs, ExecutionOptions, ExperimentConfig, ExperimentResult,
    THREADS_ENV,
};
use compliance_core::ist::{
    parse_trial_csv, table_baseline, write_canonical_csv, write_synthetic_ist, ColumnMap,
    SyntheticIstParams, TrialTable,
};
use compliance_core::rng::rng_from_seed;

#[derive(Parser)]
#[command(name = "compliance-bandits", version, about = "Bandit experiments with observed non-compliance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ExecArgs {
    /// Run replications one after another (results are identical either way).
    #[arg(long)]
    serial: bool,
    /// Worker threads for parallel runs.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Also write curves.csv with mean regret per checkpoint.
    #[arg(long)]
    emit_curves: bool,
}

impl ExecArgs {
    fn options(&self) -> ExecutionOptions {
        ExecutionOptions {
            serial: self.serial,
            threads: self.threads.filter(|&n| n > 0),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run every *.json config in a directory.
    Sweep {
        #[arg(long)]
        configs: PathBuf,
        /// Parent directory for per-config outputs and sweep_summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Normalize a trial CSV into the canonical audit layout.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic file with the public trial's column layout.
    SynthIst {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 19_422)]
        patients: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn default_output(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output
        .clone()
        .unwrap_or_else(|| Path::new("results").join(cfg.label()))
}

fn print_summary(result: &ExperimentResult, dir: &Path) {
    let s = &result.summary;
    println!(
        "{}: mean surplus {:.3} ({:.0}% CI [{:.3}, {:.3}]) over {} runs of {} rounds -> {}",
        s.name,
        s.mean_surplus,
        s.ci_level * 100.0,
        s.ci_low,
        s.ci_high,
        s.runs,
        s.horizon,
        dir.display()
    );
    if s.components.len() > 1 {
        for c in &s.components {
            println!(
                "  {}: mean surplus {:.3} [{:.3}, {:.3}]",
                c.label, c.mean_surplus, c.ci_low, c.ci_high
            );
        }
    }
}

fn write_sweep_summary(
    path: &Path,
    rows: &[(PathBuf, ExperimentConfig, ExperimentResult)],
) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "config,name,environment,algorithm,component,runs,horizon,mean_surplus,ci_low,ci_high"
    )?;
    for (p, _, r) in rows {
        let s = &r.summary;
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let mut line = |component: &str, mean: f64, lo: f64, hi: f64| {
            writeln!(
                f,
                "{stem},{},{},{},{component},{},{},{mean},{lo},{hi}",
                s.name, s.environment, s.algorithm, s.runs, s.horizon
            )
        };
        if s.components.len() > 1 {
            for c in &s.components {
                line(&c.label, c.mean_surplus, c.ci_low, c.ci_high)?;
            }
        }
        line("pooled", s.mean_surplus, s.ci_low, s.ci_high)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, exec } => {
            let cfg = ExperimentConfig::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let dir = out.unwrap_or_else(|| default_output(&cfg));
            let result = run_experiment(&cfg, &exec.options())?;
            result.write_outputs(&dir, exec.emit_curves)?;
            print_summary(&result, &dir);
        }
        Command::Sweep { configs, out, exec } => {
            let paths = sweep_configs(&configs)?;
            if paths.is_empty() {
                bail!("no *.json configs in {}", configs.display());
            }
            let rows = sweep(&paths, &exec.options())?;
            let root = out.clone().unwrap_or_else(|| PathBuf::from("results"));
            for (p, cfg, result) in &rows {
                let dir = match &out {
                    Some(o) => o.join(p.file_stem().unwrap_or_default()),
                    None => default_output(cfg),
                };
                result.write_outputs(&dir, exec.emit_curves)?;
                print_summary(result, &dir);
            }
            fs::create_dir_all(&root)?;
            write_sweep_summary(&root.join("sweep_summary.csv"), &rows)?;
        }
        Command::Ingest { csv, map, out } => {
            let map = ColumnMap::from_json_file(&map)
                .with_context(|| format!("reading {}", map.display()))?;
            let parsed = parse_trial_csv(&csv, &map)
                .with_context(|| format!("parsing {}", csv.display()))?;
            let (rows, excluded) = (parsed.rows_read, parsed.excluded);
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_canonical_csv(fs::File::create(&out)?, &parsed.records)?;
            println!(
                "{}: {} of {} rows kept; excluded {} (missing assignment {}, compliance {}, outcome {})",
                map.trial,
                parsed.records.len(),
                rows,
                excluded.total(),
                excluded.missing_assignment,
                excluded.missing_compliance,
                excluded.missing_outcome
            );
            let table = TrialTable::from_records(map.trial, parsed.records)?;
            for (arm, m) in table.group_means().iter().enumerate() {
                println!("  arm {arm}: {} patients, 14-day survival {m:.4}", table.group(arm).len());
            }
            println!("  uniform-random baseline {:.4} -> {}", table_baseline(&table), out.display());
        }
        Command::SynthIst {
            out,
            patients,
            seed,
        } => {
            let params = SyntheticIstParams {
                patients,
                ..SyntheticIstParams::default()
            };
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut rng = rng_from_seed(seed);
            write_synthetic_ist(fs::File::create(&out)?, &params, &mut rng)?;
            println!("wrote {patients} synthetic patients to {}", out.display());
        }
    }
    Ok(())
}
