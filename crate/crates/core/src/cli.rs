//! Command-line front end. Exit codes: 0 success, 1 runtime failure or
//! reported violations, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::conditioning::PaletteCaptioner;
use crate::config::PipelineConfig;
use crate::datasets::{corpus_refs, corpus_stats, synth_corpus, validate_corpus, InstanceRef, Manifest, SynthPlan};
use crate::detector::{detect, Task};
use crate::fsutil::{write_dir_atomic, write_json};
use crate::metrics::{eval_run, EvalOptions};
use crate::orchestrator::{batch_repair, write_detection, AuditLog, BackendChoice, Collaborators};

#[derive(Debug, Parser)]
#[command(name = "artifact-repair", version, about = "Detect and repair artifacts in try-on and pose-transfer images")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect artifacts and write report masks plus report.json.
    Detect(DetectArgs),
    /// Detect, condition, inpaint and composite.
    Repair(RepairArgs),
    /// Before/after evaluation over a corpus.
    Eval(EvalArgs),
    /// Corpus tooling.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Query the inpainting service's /health endpoint and print the reply.
    BackendHealth(HealthArgs),
    /// Configuration helpers.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Vton,
    PoseTransfer,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Vton => Task::Vton,
            TaskArg::PoseTransfer => Task::PoseTransfer,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; overrides runtime.jobs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// A corpus root (with manifest.json) or a single instance directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Task of a single instance; read from the parent manifest when omitted.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Output directory; one subdirectory per instance.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// mock:oracle, mock:blur or http:<url>.
    #[arg(long, default_value = "mock:oracle")]
    pub backend: BackendChoice,
    /// Inpainting seed; repeat for several candidates. Overrides repair.seeds.
    #[arg(long)]
    pub seed: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus root.
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    /// mock:oracle, mock:blur or http:<url>.
    #[arg(long, default_value = "mock:oracle")]
    pub backend: BackendChoice,
    /// Inpainting seed; repeat for several candidates. Overrides repair.seeds.
    #[arg(long)]
    pub seed: Vec<u64>,
    /// Minimum IoU for a detection to match a ground-truth mask.
    #[arg(long, default_value_t = 0.3)]
    pub iou_thresh: f64,
    /// Free-form timestamp stored in the report metadata.
    #[arg(long)]
    pub timestamp: Option<String>,
    /// Output directory for eval.csv, eval.json and plots/.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Check a corpus against its manifest; prints violations as JSON.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Region and class counts over a corpus, as JSON.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate a synthetic corpus with known ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; must be absent or empty.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instances per single-class group.
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    /// Instances carrying a deformation and a color patch.
    #[arg(long, default_value_t = 0)]
    pub mixed: usize,
    /// Artifact-free control instances.
    #[arg(long, default_value_t = 20)]
    pub clean: usize,
    #[arg(long, value_enum, default_value = "pose-transfer")]
    pub task: TaskArg,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct HealthArgs {
    /// Service base URL; defaults to backend.endpoint from the config.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ConfigCommand {
    /// Print the default configuration as TOML.
    DumpDefault,
    /// Print the effective configuration (file plus defaults) as TOML.
    Dump {
        #[arg(long)]
        config: PathBuf,
    },
    /// Validate a configuration file and print its hash.
    Check { path: PathBuf },
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn load_config(path: Option<&Path>, jobs: Option<usize>, seeds: &[u64]) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(j) = jobs {
        cfg.runtime.jobs = j;
    }
    if !seeds.is_empty() {
        cfg.repair.seeds = seeds.to_vec();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Expands `--input` into instance references.
fn resolve_inputs(args: &InputArgs) -> anyhow::Result<Vec<InstanceRef>> {
    let input = &args.input;
    if input.join("manifest.json").exists() {
        let (_, refs) = corpus_refs(input)?;
        return Ok(refs);
    }
    if !input.is_dir() {
        bail!("input {} is not a directory", input.display());
    }
    let id = input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .context("input directory has no name")?;
    let parent = input.parent().filter(|p| p.join("manifest.json").exists());
    let manifest = parent.map(Manifest::load).transpose()?;
    let task = match (args.task, &manifest) {
        (Some(t), _) => t.into(),
        (None, Some(m)) => m.task,
        (None, None) => bail!("cannot infer the task of {}; pass --task", input.display()),
    };
    Ok(vec![InstanceRef {
        id: id.clone(),
        dir: input.clone(),
        task,
        // A lone instance may lack ground-truth masks.
        clean: manifest.as_ref().and_then(|m| m.entry(&id)).map_or(true, |e| e.clean),
    }])
}

fn exit(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(args.common.config.as_deref(), args.common.jobs, &[])?;
    let items = resolve_inputs(&args.input)?;
    std::fs::create_dir_all(&args.input.out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.runtime.jobs).build()?;
    let results: Vec<(String, crate::Result<usize>)> = pool.install(|| {
        use rayon::prelude::*;
        items
            .par_iter()
            .map(|item| {
                let r = item.load().and_then(|(instance, _)| {
                    let outcome = detect(&instance.detector_inputs(), &cfg.detector)?;
                    write_dir_atomic(&args.input.out.join(&item.id), |d| {
                        write_detection(d, &outcome.reports, &outcome.skipped)
                    })?;
                    Ok(outcome.reports.len())
                });
                (item.id.clone(), r)
            })
            .collect()
    });
    let mut ok = true;
    for (id, r) in results {
        match r {
            Ok(n) => println!("{id}: {n} artifact(s)"),
            Err(e) => {
                eprintln!("error: {id}: {e}");
                ok = false;
            }
        }
    }
    Ok(exit(ok))
}

fn cmd_repair(args: RepairArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(args.common.config.as_deref(), args.common.jobs, &args.seed)?;
    let items = resolve_inputs(&args.input)?;
    let captioner = PaletteCaptioner;
    let collab = Collaborators {
        captioner: &captioner,
        scale_model: None,
    };
    let summary = batch_repair(&items, &cfg, &args.backend, collab, &args.input.out, cfg.runtime.jobs)?;
    write_json(&args.input.out.join("summary.json"), &summary)?;
    for item in &summary.items {
        match &item.outcome {
            crate::orchestrator::BatchOutcome::Failed { error } => eprintln!("error: {}: {error}", item.id),
            other => println!("{}: {}", item.id, serde_json::to_string(other)?),
        }
    }
    Ok(exit(summary.failed == 0))
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(args.common.config.as_deref(), args.common.jobs, &args.seed)?;
    let captioner = PaletteCaptioner;
    let collab = Collaborators {
        captioner: &captioner,
        scale_model: None,
    };
    let opts = EvalOptions {
        iou_thresh: args.iou_thresh,
        jobs: cfg.runtime.jobs,
        timestamp: args.timestamp,
    };
    let report = eval_run(&args.corpus, &cfg, &args.backend, collab, &opts)?;
    report.write(&args.out)?;
    print_json(&report.aggregate)?;
    for f in &report.failures {
        eprintln!("error: {}: {}", f.id, f.error);
    }
    Ok(exit(report.failures.is_empty()))
}

fn cmd_dataset(cmd: DatasetCommand) -> anyhow::Result<ExitCode> {
    match cmd {
        DatasetCommand::Validate { corpus } => {
            let report = validate_corpus(&corpus)?;
            print_json(&report)?;
            Ok(exit(report.is_clean()))
        }
        DatasetCommand::Stats { corpus } => {
            print_json(&corpus_stats(&corpus)?)?;
            Ok(ExitCode::SUCCESS)
        }
        DatasetCommand::Synth(a) => {
            let plan = SynthPlan {
                name: a.name,
                task: a.task.into(),
                color_texture: a.per_class,
                deformation: a.per_class,
                cloth_design: a.per_class,
                mixed: a.mixed,
                clean: a.clean,
            };
            let manifest = synth_corpus(&a.out, &plan, a.seed)?;
            println!("wrote {} instance(s) to {}", manifest.count, a.out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_health(args: HealthArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(args.config.as_deref(), None, &[])?;
    let client = cfg.backend.client(args.endpoint.as_deref());
    let mut audit = AuditLog::default();
    let reply = client.health(&mut audit)?;
    print_json(&reply)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_config(cmd: ConfigCommand) -> anyhow::Result<ExitCode> {
    match cmd {
        ConfigCommand::DumpDefault => {
            print!("{}", PipelineConfig::default().to_toml()?);
        }
        ConfigCommand::Dump { config } => {
            print!("{}", PipelineConfig::load(&config)?.to_toml()?);
        }
        ConfigCommand::Check { path } => {
            let cfg = PipelineConfig::load(&path)?;
            println!("ok {}", cfg.hash()?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Repair(a) => cmd_repair(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Dataset(c) => cmd_dataset(c),
        Command::BackendHealth(a) => cmd_health(a),
        Command::Config(c) => cmd_config(c),
    }
}
