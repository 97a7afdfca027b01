//! `fnav`: command-line driver for scene generation, data collection,
//! training, evaluation and artifact inspection.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use frontier_nav::config::RunConfig;
use frontier_nav::par;
use frontier_nav::pipeline::{self, PolicySource};

#[derive(Debug, Parser)]
#[command(name = "fnav", version, about = "Frontier exploration and grounding pipeline")]
struct Cli {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true, env = "FNAV_CONFIG")]
    config: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for episode-parallel stages.
    #[arg(long, global = true, env = "FNAV_JOBS")]
    jobs: Option<usize>,

    /// Root for default output locations.
    #[arg(long, global = true, env = "FNAV_OUTPUT_ROOT")]
    output_root: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train and eval scene splits with episodes.
    GenScenes {
        /// Parameter file (same format as --config).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect decision records from a scene split.
    Collect {
        #[arg(long)]
        scenes: PathBuf,
        /// Strategy mix, e.g. `optimal=0.5,random=0.3,hybrid:0.5=0.2`.
        #[arg(long)]
        mix: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the scorer on a collected dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a model (or `heuristic`) on an episode split.
    Eval(EvalArgs),
    /// Paired comparison of two policies over decision budgets.
    Compare {
        /// Model file or `heuristic`.
        #[arg(long)]
        a: String,
        /// Model file or `heuristic`.
        #[arg(long, default_value = "heuristic")]
        b: String,
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Memory-preserved vs memory-reset runs on a revisit-heavy suite.
    AblateMemory(EvalArgs),
    /// Re-run a report's episodes from their recorded decisions.
    Replay {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        episodes: PathBuf,
    },
    /// Summarize an artifact and check its invariants.
    Inspect { path: PathBuf },
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Model file or `heuristic`.
    #[arg(long)]
    model: String,
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(cli: &Cli, params: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match params.or(cli.config.as_deref()) {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(r) = &cli.output_root {
        cfg.output_root = r.clone();
    }
    Ok(cfg)
}

fn out_or(cfg: &RunConfig, out: &Option<PathBuf>, default: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| cfg.output_root.join(default))
}

fn run(cli: &Cli) -> Result<u8> {
    let params = match &cli.command {
        Command::GenScenes { params, .. } => params.as_deref(),
        _ => None,
    };
    let cfg = load_config(cli, params)?;
    let jobs = cfg.jobs.unwrap_or(0);
    par::with_jobs(jobs, || execute(cli, &cfg))
}

fn execute(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    match &cli.command {
        Command::GenScenes { out, .. } => {
            let out = out_or(cfg, out, "scenes");
            let s = pipeline::gen_scenes(cfg, &out)?;
            for (split, (scenes, episodes)) in &s.splits {
                println!("{split}: {scenes} scenes, {episodes} episodes -> {}", out.join(split).display());
            }
        }
        Command::Collect { scenes, mix, out } => {
            let mut cfg = cfg.clone();
            if let Some(m) = mix {
                cfg.collect.mix = m.clone();
            }
            let out = out_or(&cfg, out, "data");
            let m = pipeline::collect_stage(&cfg, scenes, &out)?;
            println!("{} records from {} episodes -> {}", m.records, m.episodes, out.display());
            for (k, v) in &m.status_counts {
                println!("  {k}: {v}");
            }
        }
        Command::Train { data, out } => {
            let out = out_or(cfg, out, "model.json");
            let ckpt = pipeline::train_stage(cfg, data, &out)?;
            if let Some(log) = &ckpt.log {
                log::info!("epoch losses {:?}", log.epoch_losses);
                println!(
                    "loss {:.6} -> {:.6}, accuracy {:.3} -> {}",
                    log.initial_loss,
                    log.epoch_losses.last().copied().unwrap_or(log.initial_loss),
                    log.final_accuracy,
                    out.display()
                );
            }
        }
        Command::Eval(a) => {
            let out = out_or(cfg, &a.out, "report.csv");
            let policy = PolicySource::load(&a.model).with_context(|| format!("loading model {}", a.model))?;
            let r = pipeline::eval_stage(cfg, &policy, &a.episodes, &out)?;
            println!(
                "{}: {} episodes, SR {:.4}, SPL {:.4}, sSR {:.4}, tSR {:.4} -> {}",
                r.policy,
                r.episodes,
                r.sr,
                r.spl,
                r.s_sr,
                r.t_sr,
                out.display()
            );
        }
        Command::Compare { a, b, episodes, out } => {
            let out = out_or(cfg, out, "compare.csv");
            let pa = PolicySource::load(a).with_context(|| format!("loading {a}"))?;
            let pb = PolicySource::load(b).with_context(|| format!("loading {b}"))?;
            let r = pipeline::compare_stage(cfg, &pa, &pb, episodes, &out)?;
            print!("{}", r.to_csv());
        }
        Command::AblateMemory(a) => {
            let out = out_or(cfg, &a.out, "ablation.csv");
            let policy = PolicySource::load(&a.model).with_context(|| format!("loading model {}", a.model))?;
            let r = pipeline::ablate_stage(cfg, &policy, &a.episodes, &out)?;
            print!("{}", r.to_csv());
        }
        Command::Replay { report, episodes } => {
            let s = pipeline::replay_stage(cfg, report, episodes)?;
            for m in &s.mismatches {
                println!("mismatch: {m}");
            }
            println!("replayed {} episodes, {} mismatches", s.episodes, s.mismatches.len());
            if !s.mismatches.is_empty() {
                return Ok(3);
            }
        }
        Command::Inspect { path } => {
            let ins = pipeline::inspect(path)?;
            print!("{}", ins.render());
            if !ins.violations.is_empty() {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use frontier_nav::Error as E;
    match e.chain().find_map(|c| c.downcast_ref::<E>()) {
        Some(E::Io { .. }) => "io",
        Some(E::Json { .. }) => "json",
        Some(E::Config { .. }) => "config",
        Some(E::FormatVersion { .. }) => "format_version",
        Some(E::Artifact { .. }) => "artifact",
        Some(E::InvalidParams(_)) => "invalid_params",
        Some(E::EmptyDataset) => "empty_dataset",
        Some(_) => "runtime",
        None => "other",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            // sources already quoted by their parent message are skipped
            let mut msg = String::new();
            for cause in e.chain() {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&c);
                }
            }
            let msg = msg.replace('\n', " ");
            eprintln!("error[{}]: {msg}", error_kind(&e));
            ExitCode::from(1)
        }
    }
}
