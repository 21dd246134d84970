//! `hpl`: drives the hierarchical preference learning pipeline stage by stage
//! or end to end, runs the bias/variance experiments and emits report tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hpl_core::analysis::{run_grid, BiasVarGrid};
use hpl_core::exec::{configure_workers, Exec};
use hpl_core::io::{write_atomic, write_json};
use hpl_core::pipeline::{build_report, PipelineConfig, RunArtifacts, Runner, Stage};
use hpl_core::prefgen::SegmenterSpec;
use hpl_core::{HplError, Result};

const SEGMENTER_URL_VAR: &str = "HPL_SEGMENTER_URL";

#[derive(Debug, Parser)]
#[command(name = "hpl", version, about = "Hierarchical preference learning on synthetic task chains")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Pipeline configuration (TOML). Defaults are used for missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the root seed of the configuration.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for data-parallel loops; 1 runs sequentially.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Directory holding the run's artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "hpl-run")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes the scripted expert demonstrations.
    Expert,
    /// Behavior-clones the reference policy from the demonstrations.
    Bc,
    /// Generates trajectory, step and group preference candidates.
    Prefs,
    /// Scores group candidates with Monte-Carlo rollouts.
    Mc,
    /// Sorts scored group pairs into the curriculum grid.
    Bucket,
    /// Runs staged DPO training.
    Train,
    /// Evaluates the reference, per-phase and final policies.
    Eval,
    /// Runs every stage, reusing up-to-date artifacts.
    Pipeline {
        /// Recompute every stage even when its artifacts are current.
        #[arg(long)]
        fresh: bool,
    },
    /// Replicated bias/variance experiment on enumerable chains.
    Biasvar {
        /// Grid description (TOML). Defaults to T ∈ {4, 8}, γ = 0.9.
        #[arg(long, value_name = "PATH")]
        grid: Option<PathBuf>,
        /// Overrides the number of replications per cell.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Phase table, bucket census and ablation comparison from finished runs.
    Report {
        /// Run directory; repeatable. Defaults to --out.
        #[arg(long = "run", value_name = "DIR")]
        runs: Vec<PathBuf>,
        /// Ablation arm as NAME=DIR; repeatable.
        #[arg(long = "arm", value_name = "NAME=DIR")]
        arms: Vec<String>,
    },
}

fn load_config(global: &GlobalArgs) -> Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Ok(url) = std::env::var(SEGMENTER_URL_VAR) {
        match &mut config.segmenter {
            SegmenterSpec::Semantic { endpoint } => *endpoint = Some(url),
            other => log::warn!("{SEGMENTER_URL_VAR} ignored: segmenter is {}", other.name()),
        }
    }
    config.validate()?;
    Ok(config)
}

fn exec_for(workers: Option<usize>) -> Exec {
    match workers {
        Some(1) => Exec::Sequential,
        Some(n) => {
            if !configure_workers(n) {
                log::warn!("worker pool already initialised; --workers {n} ignored");
            }
            Exec::Parallel
        }
        None => Exec::default(),
    }
}

fn run_single(config: &PipelineConfig, out: &Path, exec: Exec, stage: Stage) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| HplError::io(out, e))?;
    write_atomic(&out.join(hpl_core::pipeline::files::CONFIG), config.to_toml().as_bytes())?;
    let manifest = Runner::new(config, out, exec).run_stage(stage)?;
    println!("{}", serde_json::to_string_pretty(&manifest.details)?);
    Ok(())
}

/// Returns whether every asserted bound held.
fn run_biasvar(global: &GlobalArgs, grid_path: Option<&Path>, replications: Option<usize>, exec: Exec) -> Result<bool> {
    let mut grid = match grid_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HplError::io(path, e))?;
            toml::from_str::<BiasVarGrid>(&text).map_err(|e| HplError::Toml(e.to_string()))?
        }
        None => BiasVarGrid::default(),
    };
    if let Some(seed) = global.seed {
        grid.seed = seed;
    }
    if let Some(r) = replications {
        grid.replications = r;
    }
    let report = run_grid(&grid, exec)?;
    std::fs::create_dir_all(&global.out).map_err(|e| HplError::io(&global.out, e))?;
    let csv = global.out.join("biasvar.csv");
    write_atomic(&csv, report.to_csv().as_bytes())?;
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
    let summary = serde_json::json!({
        "grid": grid,
        "passed": failed.is_empty(),
        "checks": report.checks,
    });
    write_json(&global.out.join("biasvar.json"), &summary)?;
    println!("{} rows written to {}", report.rows.len(), csv.display());
    println!("{} of {} checks passed", report.checks.len() - failed.len(), report.checks.len());
    for c in &failed {
        println!("FAIL {} [{}]: {} > {}", c.name, c.cell, c.value, c.limit);
    }
    Ok(failed.is_empty())
}

fn run_report(out: &Path, runs: &[PathBuf], arms: &[String]) -> Result<()> {
    let run_dirs: Vec<PathBuf> = if runs.is_empty() && arms.is_empty() { vec![out.to_path_buf()] } else { runs.to_vec() };
    let mut loaded = Vec::new();
    let mut missing = Vec::new();
    for dir in &run_dirs {
        match RunArtifacts::load(&dir.display().to_string(), dir) {
            Ok(r) => loaded.push(r),
            Err(e) => missing.push(e.to_string()),
        }
    }
    let mut arm_runs = Vec::new();
    for spec in arms {
        let (name, dir) = spec
            .split_once('=')
            .ok_or_else(|| HplError::usage(format!("--arm expects NAME=DIR, got {spec:?}")))?;
        match RunArtifacts::load(name, Path::new(dir)) {
            Ok(r) => arm_runs.push(r),
            Err(e) => missing.push(e.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(HplError::usage(missing.join("; ")));
    }
    let report = build_report(&loaded, &arm_runs)?;
    std::fs::create_dir_all(out).map_err(|e| HplError::io(out, e))?;
    write_atomic(&out.join("report_phases.csv"), report.phases.as_bytes())?;
    write_atomic(&out.join("report_buckets.csv"), report.buckets.as_bytes())?;
    if let Some(ablation) = &report.ablation {
        write_atomic(&out.join("report_ablation.csv"), ablation.as_bytes())?;
    }
    print!("{}", report.phases);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let exec = exec_for(cli.global.workers);
    let stage = match &cli.command {
        Command::Expert => Some(Stage::Expert),
        Command::Bc => Some(Stage::Bc),
        Command::Prefs => Some(Stage::Prefs),
        Command::Mc => Some(Stage::Mc),
        Command::Bucket => Some(Stage::Bucket),
        Command::Train => Some(Stage::Train),
        Command::Eval => Some(Stage::Eval),
        _ => None,
    };
    if let Some(stage) = stage {
        run_single(&load_config(&cli.global)?, &cli.global.out, exec, stage)?;
        return Ok(true);
    }
    match &cli.command {
        Command::Pipeline { fresh } => {
            let config = load_config(&cli.global)?;
            let summary = Runner::new(&config, &cli.global.out, exec).run_all(!fresh)?;
            let bundle = hpl_core::pipeline::load_eval(&cli.global.out)?;
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({
                "ran": summary.ran,
                "reused": summary.reused,
                "reference_success": bundle.reference.success_rate,
                "final_success": bundle.final_policy.success_rate,
                "final_mean_outcome": bundle.final_policy.mean_outcome,
            }))?);
            Ok(true)
        }
        Command::Biasvar { grid, replications } => run_biasvar(&cli.global, grid.as_deref(), *replications, exec),
        Command::Report { runs, arms } => {
            run_report(&cli.global.out, runs, arms)?;
            Ok(true)
        }
        _ => unreachable!("stage commands handled above"),
    }
}

fn exit_code(err: &HplError) -> u8 {
    match err.root() {
        HplError::Validation { .. } | HplError::Transport(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
