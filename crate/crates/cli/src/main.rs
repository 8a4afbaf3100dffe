use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use twoseal_cli::commands::{self, MotionArgs};
use twoseal_cli::config::RunConfig;
use twoseal_cli::exit_code;
use twoseal_core::dataprep::{DEFAULT_CLIP_PAD, DEFAULT_MAX_CLIP_LEN, DEFAULT_MOTION_THRESHOLD, DEFAULT_SAMPLE_EVERY};
use twoseal_core::localize::RoutingMode;
use twoseal_core::scorers::ScorerKind;
use twoseal_core::transcript::DEFAULT_MIN_WORDS_PER_SECOND;

/// Duration-routed temporal action localization for narrated videos.
#[derive(Debug, Parser)]
#[command(name = "twoseal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// mpu, dot or sca.
    #[arg(long, global = true)]
    scorer: Option<ScorerKind>,
    /// 2seal, align-only or multimodal-only.
    #[arg(long, global = true)]
    path: Option<RoutingMode>,
    /// Worker threads for localization.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse subtitles, filter by speech rate, extract candidate actions.
    Ingest {
        /// Directory of .vtt and .srt files.
        #[arg(long)]
        subs: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_WORDS_PER_SECOND)]
        min_rate: f64,
        /// Defaults to `<out>.rejections.jsonl`.
        #[arg(long)]
        rejections: Option<PathBuf>,
    },
    /// Cut each video's narrated stretch into clips.
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_CLIP_LEN)]
        max_len: f64,
        #[arg(long, default_value_t = DEFAULT_CLIP_PAD)]
        pad: f64,
    },
    /// Drop clips whose sampled frames barely change.
    MotionFilter {
        /// Directory of `<clip>.frm` files or `<clip>_<n>.pgm` frames.
        #[arg(long)]
        frames: PathBuf,
        /// Clip list to check; otherwise every clip found under --frames.
        #[arg(long)]
        clips: Option<PathBuf>,
        /// Where to write the surviving clips (needs --clips).
        #[arg(long)]
        kept: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_EVERY)]
        sample_every: usize,
        #[arg(long, default_value_t = DEFAULT_MOTION_THRESHOLD)]
        threshold: f64,
    },
    /// Write a planted-signal dataset and a config for it.
    Synth,
    /// Train the short/long duration classifier.
    TrainDuration,
    /// Train the MPU span scorer.
    TrainScorer,
    /// Localize the test split.
    Localize,
    /// Score a predictions file against a manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Evaluate only the actions that have a prediction.
        #[arg(long)]
        only_predicted: bool,
    },
    /// Inter-annotator agreement from an annotations file.
    Agreement {
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Combine report.json files into one table.
    Report { inputs: Vec<PathBuf> },
    /// Train, localize and evaluate in one go.
    Pipeline,
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = cli.scorer {
        cfg.scorer = s;
    }
    if let Some(p) = cli.path {
        cfg.path = p;
    }
    Ok(cfg)
}

fn finalized(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = run_config(cli)?;
    cfg.finalize()?;
    Ok(cfg)
}

fn out_path(cli: &Cli, what: &str) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| twoseal_cli::ConfigError(format!("--out is required: {what}")).into())
}

fn run(cli: &Cli) -> Result<String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| twoseal_cli::ConfigError(e.to_string()))?;
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Ingest {
            subs,
            min_rate,
            rejections,
        } => commands::cmd_ingest(subs, &out_path(cli, "manifest file")?, rejections.as_deref(), *min_rate),
        Command::Segment { manifest, max_len, pad } => {
            commands::cmd_segment(manifest, &out_path(cli, "clips file")?, *max_len, *pad)
        }
        Command::MotionFilter {
            frames,
            clips,
            kept,
            fps,
            sample_every,
            threshold,
        } => commands::cmd_motion_filter(
            &MotionArgs {
                frames,
                clips: clips.as_deref(),
                kept: kept.as_deref(),
                fps: *fps,
                sample_every: *sample_every,
                threshold: *threshold,
            },
            out,
        ),
        Command::Synth => {
            let mut cfg = run_config(cli)?;
            cfg.synthetic.get_or_insert_with(Default::default);
            cfg.finalize()?;
            commands::cmd_synth(&cfg, &out_path(cli, "dataset directory")?)
        }
        Command::TrainDuration => commands::cmd_train_duration(&finalized(cli)?, &out_path(cli, "checkpoint file")?),
        Command::TrainScorer => commands::cmd_train_scorer(&finalized(cli)?, &out_path(cli, "checkpoint file")?),
        Command::Localize => {
            let cfg = finalized(cli)?;
            let dir = out_dir(out, &cfg)?;
            commands::cmd_localize(&cfg, &dir)
        }
        Command::Evaluate {
            manifest,
            predictions,
            only_predicted,
        } => commands::cmd_evaluate(manifest, predictions, *only_predicted, out),
        Command::Agreement { annotations } => commands::cmd_agreement(annotations, out),
        Command::Report { inputs } => commands::cmd_report(inputs, out),
        Command::Pipeline => {
            let cfg = finalized(cli)?;
            let dir = out_dir(out, &cfg)?;
            commands::cmd_pipeline(&cfg, &dir)
        }
    }
}

fn out_dir(out: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf> {
    match out.map(Path::to_path_buf).or_else(|| cfg.paths.out_dir.clone()) {
        Some(p) => Ok(p),
        None => Err(twoseal_cli::ConfigError("--out or paths.out_dir is required".into()).into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
