//! Command-line front end for the pipeline: stage subcommands, full runs,
//! ablations, and plotting.
//!
//! Exit codes: 0 on success, 1 for configuration problems (including command
//! line parse errors), 2 when a pipeline stage fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cotra::config::{parse_config, RunConfig};
use cotra::pipeline::{run_ablation, run_pipeline, run_stage, AblationMode, Stage};
use cotra::plot::{read_metrics_csv, scatter_svg};
use cotra::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cotra",
    version,
    about = "Contrastive trajectory classification for offline safe RL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-field overrides. Every value string funnels through
/// the same parser as the file lines, so `--eta 0.5` and `eta = 0.5` behave
/// identically; lists are comma-separated (`--seeds 0,1,2`).
#[derive(Args, Default)]
struct Overrides {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// Pre-recorded dataset path; skips generation.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n_trajectories: Option<String>,
    #[arg(long)]
    avoidance_gains: Option<String>,
    #[arg(long)]
    noise_scales: Option<String>,
    #[arg(long)]
    hidden_sizes: Option<String>,
    #[arg(long)]
    dropout_rate: Option<String>,
    #[arg(long)]
    pretrain_steps: Option<String>,
    #[arg(long)]
    train_steps: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    segment_ratio: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    x_pct: Option<String>,
    #[arg(long)]
    y_pct: Option<String>,
    #[arg(long)]
    cost_threshold: Option<String>,
    #[arg(long)]
    eval_episodes: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |key: &str, value: &Option<String>| {
            if let Some(value) = value {
                pairs.push((key.to_string(), value.clone()));
            }
        };
        push("env", &self.env);
        push("dataset", &self.dataset);
        push("n_trajectories", &self.n_trajectories);
        push("avoidance_gains", &self.avoidance_gains);
        push("noise_scales", &self.noise_scales);
        push("hidden_sizes", &self.hidden_sizes);
        push("dropout_rate", &self.dropout_rate);
        push("pretrain_steps", &self.pretrain_steps);
        push("train_steps", &self.train_steps);
        push("batch_size", &self.batch_size);
        push("lr", &self.lr);
        push("alpha", &self.alpha);
        push("gamma", &self.gamma);
        push("segment_ratio", &self.segment_ratio);
        push("delta", &self.delta);
        push("eta", &self.eta);
        push("x_pct", &self.x_pct);
        push("y_pct", &self.y_pct);
        push("cost_threshold", &self.cost_threshold);
        push("eval_episodes", &self.eval_episodes);
        push("epsilon", &self.epsilon);
        push("seeds", &self.seeds);
        push("out_dir", &self.out_dir);
        parse_config(self.config.as_deref(), &pairs)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the trajectory dataset for every seed.
    GenData(Overrides),
    /// Label trajectories and write the contrastive partition report.
    Build(Overrides),
    /// Behavior-clone the reference policy on the full dataset.
    Pretrain(Overrides),
    /// Train the policy against the reference via trajectory classification.
    Train(Overrides),
    /// Roll out the trained and reference policies and write metrics.
    Evaluate(Overrides),
    /// Run the full pipeline, optionally starting from a later stage.
    Run {
        /// Stage to start from: generate, build, pretrain, train, evaluate.
        #[arg(long)]
        stage: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train ablation variants and emit a comparison table.
    Ablate {
        /// desirable-only, undesirable-only, uniform-ref, or sweep.
        #[arg(long)]
        mode: String,
        /// Config key swept over (sweep mode).
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated sweep values.
        #[arg(long)]
        values: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render a metrics CSV (summary or ablation) as an SVG scatter.
    Plot {
        /// CSV with normalized_reward/normalized_cost columns.
        #[arg(long)]
        input: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        output: PathBuf,
        /// Plot title.
        #[arg(long, default_value = "normalized reward vs cost")]
        title: String,
    },
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData(o) => run_stage(&o.resolve()?, Stage::Generate),
        Command::Build(o) => run_stage(&o.resolve()?, Stage::Build),
        Command::Pretrain(o) => run_stage(&o.resolve()?, Stage::Pretrain),
        Command::Train(o) => run_stage(&o.resolve()?, Stage::Train),
        Command::Evaluate(o) => run_stage(&o.resolve()?, Stage::Evaluate),
        Command::Run { stage, overrides } => {
            let cfg = overrides.resolve()?;
            let start = match stage {
                Some(name) => Stage::parse(&name)?,
                None => Stage::Generate,
            };
            let rows = run_pipeline(&cfg, start)?;
            for row in &rows {
                println!(
                    "seed {} {:7} nreward {:.3} ncost {:.3} safe={}",
                    row.seed,
                    row.policy,
                    row.report.normalized_reward,
                    row.report.normalized_cost,
                    row.report.safe
                );
            }
            println!("artifacts in {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Ablate { mode, param, values, overrides } => {
            let cfg = overrides.resolve()?;
            let mode = AblationMode::parse(&mode, param.as_deref(), values.as_deref())?;
            let path = run_ablation(&cfg, &mode)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Plot { input, output, title } => {
            let points = read_metrics_csv(&input)?;
            let svg = scatter_svg(&points, &title)?;
            std::fs::write(&output, svg).map_err(|e| Error::io(&output, e))?;
            println!("wrote {}", output.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Covers --help/--version too, which clap models as "errors";
            // those two alone exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
