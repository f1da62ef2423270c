//! `pead train | eval | sweep | report`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::eval::{corner_error, evaluate_policy, write_reports};
use super::{report, run_experiment};
use crate::agents::{checkpoint, ActionMode, Algorithm};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "pead", version, about = "Progressive action-dimension extension experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one algorithm in one action mode over several seeds.
    Train(TrainArgs),
    /// Compare a trained checkpoint with fixed compliance at the error corners.
    Eval(EvalArgs),
    /// Train several action modes and extension scales, then report.
    Sweep(SweepArgs),
    /// Summarize every per_episode.csv under a directory.
    Report { dir: PathBuf },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Number of seeds (0..N).
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mode: Option<ActionMode>,
    #[arg(long)]
    extension_scale: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_values = ["dim3", "dim6", "pead"])]
    modes: Vec<ActionMode>,
    /// Extension scales for the pead runs; defaults to the configured one.
    #[arg(long, value_delimiter = ',')]
    extension_scales: Vec<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Environment settings are taken from this configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Paired episodes per corner.
    #[arg(long, default_value_t = 20)]
    episodes: u64,
    /// Per-seed perturbation of the corner, as a fraction of the error range.
    #[arg(long, default_value_t = 0.1)]
    jitter: f64,
    /// Seeds whose trajectories are written.
    #[arg(long, default_value_t = 1)]
    trajectories: usize,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) {
    let h = &mut cfg.harness;
    if let Some(a) = c.algo {
        h.algorithm = a;
    }
    if let Some(e) = c.episodes {
        h.episodes = Some(e);
    }
    if let Some(n) = c.seeds {
        h.seeds = (0..n).collect();
    }
    if let Some(w) = c.workers {
        h.workers = w;
    }
    if let Some(o) = &c.out {
        h.output_dir = o.clone();
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common);
    if let Some(m) = args.mode {
        cfg.harness.action_mode = m;
    }
    if let Some(s) = args.extension_scale {
        cfg.harness.extension_scale = Some(s);
    }
    let result = run_experiment(&cfg)?;
    print!("{}", result.summary());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut base = load_config(args.common.config.as_deref())?;
    apply_common(&mut base, &args.common);
    let root = base.harness.output_dir.clone();
    let mut configs = Vec::new();
    for &mode in &args.modes {
        let mut cfg = base.clone();
        cfg.harness.action_mode = mode;
        let name = format!("{}-{}", cfg.harness.algorithm.as_str(), mode.as_str());
        if mode == ActionMode::Pead && !args.extension_scales.is_empty() {
            for &scale in &args.extension_scales {
                let mut c = cfg.clone();
                c.harness.extension_scale = Some(scale);
                c.harness.output_dir = root.join(format!("{name}-e{scale}"));
                configs.push(c);
            }
        } else {
            if mode != ActionMode::Pead {
                cfg.harness.extension_scale = None;
            }
            cfg.harness.output_dir = root.join(name);
            configs.push(cfg);
        }
    }
    for c in &configs {
        c.validate()?;
    }
    for c in &configs {
        eprintln!("running {}", c.harness.output_dir.display());
        run_experiment(c)?;
    }
    let text = report::build_report(&root)?;
    let path = root.join("report.txt");
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    cfg.assembly_env.validate()?;
    if args.episodes == 0 {
        return Err(Error::Config("eval needs at least one episode".into()));
    }
    let agent = checkpoint::load(&args.checkpoint, 0)?;
    let seeds: Vec<u64> = (0..args.episodes).collect();
    let reports = [1.0, -1.0]
        .iter()
        .map(|&sign| evaluate_policy(&agent, &cfg.assembly_env, &corner_error(sign), &seeds, args.jitter))
        .collect::<Result<Vec<_>>>()?;
    write_reports(&reports, &args.out, args.trajectories)?;
    for r in &reports {
        println!("{}", r.to_text());
    }
    Ok(())
}

fn report_cmd(dir: &Path) -> Result<()> {
    let text = report::build_report(dir)?;
    let path = dir.join("report.txt");
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Report { dir } => report_cmd(&dir),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
