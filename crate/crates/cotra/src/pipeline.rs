//! Five-stage run pipeline (generate → build → pretrain → train → evaluate)
//! plus the ablation runners.
//!
//! Each seed gets its own subdirectory under the configured output directory
//! and a fully independent artifact chain, so re-running any suffix of the
//! pipeline (`--stage train`, say) just reloads the earlier artifacts from
//! disk. Every artifact is stamped with the producing stage, a format
//! version, and the config hash, and the whole chain is deterministic:
//! identical config and seed reproduce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::contrastive::{self, ContrastiveDataset};
use crate::dataset::{read_dataset, write_dataset, Dataset};
use crate::envs::{generate_dataset, PointHazardEnv};
use crate::eval::{evaluate_policy, EvalReport};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::policy::{Policy, Role};
use crate::trainer::{pretrain_bc_seeded, train, RefModel, TrainLog};
use crate::{Error, Result};

/// Version stamped into every CSV artifact this module writes.
pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Build,
    Pretrain,
    Train,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Build => "build",
            Stage::Pretrain => "pretrain",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn parse(s: &str) -> Result<Stage> {
        match s {
            "generate" => Ok(Stage::Generate),
            "build" => Ok(Stage::Build),
            "pretrain" => Ok(Stage::Pretrain),
            "train" => Ok(Stage::Train),
            "evaluate" => Ok(Stage::Evaluate),
            _ => Err(Error::Config(format!(
                "unknown stage `{s}` (expected generate, build, pretrain, train, or evaluate)"
            ))),
        }
    }
}

/// Locations of one seed's artifacts.
#[derive(Debug, Clone)]
pub struct SeedPaths {
    pub dir: PathBuf,
    pub dataset: PathBuf,
    pub partition: PathBuf,
    pub ref_ckpt: PathBuf,
    pub policy_ckpt: PathBuf,
    pub train_log: PathBuf,
    pub eval_trac: PathBuf,
    pub eval_bc_all: PathBuf,
}

pub fn seed_paths(cfg: &RunConfig, seed: u64) -> SeedPaths {
    let dir = cfg.out_dir.join(format!("seed_{seed}"));
    SeedPaths {
        dataset: dir.join("dataset.jsonl"),
        partition: dir.join("partition.csv"),
        ref_ckpt: dir.join("ref.ckpt"),
        policy_ckpt: dir.join("policy.ckpt"),
        train_log: dir.join("train_log.csv"),
        eval_trac: dir.join("eval_trac.csv"),
        eval_bc_all: dir.join("eval_bc_all.csv"),
        dir,
    }
}

/// One line of the run summary: a policy's evaluation under one seed.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub seed: u64,
    pub policy: &'static str,
    pub report: EvalReport,
}

fn artifact_header(stage: &str, hash: &str, seed: Option<u64>) -> String {
    let mut s = format!(
        "# format_version = {ARTIFACT_FORMAT_VERSION}\n# stage = {stage}\n# config_hash = {hash}\n"
    );
    if let Some(seed) = seed {
        let _ = writeln!(s, "# seed = {seed}");
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Renders a training log as CSV with the standard artifact header.
pub fn train_log_csv(log: &TrainLog, hash: &str, seed: u64) -> String {
    let mut s = artifact_header("train", hash, Some(seed));
    s.push_str("step,loss,mean_psi_desirable,mean_psi_undesirable,grad_norm\n");
    for r in &log.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.step, r.loss, r.mean_psi_desirable, r.mean_psi_undesirable, r.grad_norm
        );
    }
    s
}

/// Renders an evaluation report as CSV: aggregates in the header comments,
/// then one row per episode.
pub fn eval_report_csv(rep: &EvalReport, policy: &str, hash: &str, seed: u64) -> String {
    let mut s = artifact_header("evaluate", hash, Some(seed));
    let _ = writeln!(s, "# policy = {policy}");
    let _ = writeln!(s, "# r_min = {}", rep.r_min);
    let _ = writeln!(s, "# r_max = {}", rep.r_max);
    let _ = writeln!(s, "# kappa = {}", rep.kappa);
    let _ = writeln!(s, "# epsilon = {}", rep.epsilon);
    let _ = writeln!(s, "# mean_return = {}", rep.mean_return);
    let _ = writeln!(s, "# mean_cost = {}", rep.mean_cost);
    let _ = writeln!(s, "# normalized_reward = {}", rep.normalized_reward);
    let _ = writeln!(s, "# normalized_cost = {}", rep.normalized_cost);
    let _ = writeln!(s, "# safe = {}", rep.safe);
    s.push_str("episode,raw_return,raw_cost\n");
    for row in &rep.rows {
        let _ = writeln!(s, "{},{},{}", row.episode, row.raw_return, row.raw_cost);
    }
    s
}

fn summary_csv(rows: &[SummaryRow], hash: &str) -> String {
    let mut s = artifact_header("summary", hash, None);
    s.push_str("seed,policy,mean_return,mean_cost,normalized_reward,normalized_cost,safe\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.policy,
            r.report.mean_return,
            r.report.mean_cost,
            r.report.normalized_reward,
            r.report.normalized_cost,
            r.report.safe
        );
    }
    s
}

fn partition_csv(ds: &Dataset, cd: &ContrastiveDataset, hash: &str, seed: u64) -> String {
    let mut s = artifact_header("build", hash, Some(seed));
    let _ = writeln!(s, "# lambda_d = {}", cd.lambda_d);
    let _ = writeln!(s, "# lambda_u = {}", cd.lambda_u);
    s.push_str("traj_id,return,cost,label,weight,origin\n");
    for line in contrastive::partition_report(ds, cd) {
        s.push_str(&line);
        s.push('\n');
    }
    s
}

/// Produces the seed's dataset: reads the shared pre-recorded file when the
/// config names one, otherwise generates fresh trajectories and persists them
/// in the seed directory.
fn stage_generate(cfg: &RunConfig, seed: u64, paths: &SeedPaths, hash: &str) -> Result<Dataset> {
    if let Some(path) = &cfg.dataset {
        return read_dataset(path);
    }
    let env = PointHazardEnv;
    let mut ds = generate_dataset(&env, &cfg.generator_config(seed))?;
    ds.meta.insert("config_hash".into(), hash.to_string());
    write_dataset(&ds, &paths.dataset)?;
    Ok(ds)
}

/// Loads the dataset a later stage needs: the shared file when configured,
/// else the seed's generated artifact.
fn load_seed_dataset(cfg: &RunConfig, paths: &SeedPaths) -> Result<Dataset> {
    if let Some(path) = &cfg.dataset {
        return read_dataset(path);
    }
    if !paths.dataset.is_file() {
        return Err(Error::Dataset(format!(
            "{} not found; run the generate stage first",
            paths.dataset.display()
        )));
    }
    read_dataset(&paths.dataset)
}

fn load_policy_ckpt(path: &Path, producer: &'static str, role: Role) -> Result<Policy> {
    if !path.is_file() {
        return Err(Error::Net(format!(
            "{} not found; run the {producer} stage first",
            path.display()
        ))
        .in_stage(producer));
    }
    let ck = load_checkpoint(path).map_err(|e| e.in_stage(producer))?;
    Ok(Policy::new(ck.params, role))
}

/// Runs the stage window `[start, stop]` for one seed, loading any earlier
/// artifacts from disk, and returns the TraC and reference evaluations when
/// the window reaches the evaluate stage.
fn run_seed(
    cfg: &RunConfig,
    seed: u64,
    start: Stage,
    stop: Stage,
) -> Result<Option<(EvalReport, EvalReport)>> {
    let env = PointHazardEnv;
    let hash = cfg.hash();
    let paths = seed_paths(cfg, seed);
    fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    let within = |s: Stage| start <= s && s <= stop;

    let ds = if within(Stage::Generate) {
        stage_generate(cfg, seed, &paths, &hash).map_err(|e| e.in_stage("generate"))?
    } else {
        load_seed_dataset(cfg, &paths).map_err(|e| e.in_stage("generate"))?
    };
    if stop == Stage::Generate {
        return Ok(None);
    }

    let tc = cfg.to_train_config(seed);

    // The contrastive build is cheap and deterministic, so later stage
    // windows rebuild it from the dataset instead of parsing partition.csv.
    let cd = if within(Stage::Build) || within(Stage::Train) {
        let cd = contrastive::build(
            &ds,
            tc.cost_threshold,
            tc.x_pct,
            tc.y_pct,
            tc.delta,
            tc.eta,
        )
        .map_err(|e| e.in_stage("build"))?;
        if within(Stage::Build) {
            write_text(&paths.partition, &partition_csv(&ds, &cd, &hash, seed))
                .map_err(|e| e.in_stage("build"))?;
        }
        Some(cd)
    } else {
        None
    };
    if stop == Stage::Build {
        return Ok(None);
    }

    let spec = cfg
        .mlp_spec(PointHazardEnv::STATE_DIM, PointHazardEnv::ACTION_DIM)
        .map_err(|e| e.in_stage("pretrain"))?;
    let pi_ref = if within(Stage::Pretrain) {
        let (pi_ref, _losses) =
            pretrain_bc_seeded(&ds, &spec, &tc, seed).map_err(|e| e.in_stage("pretrain"))?;
        save_checkpoint(
            &paths.ref_ckpt,
            &pi_ref.params,
            tc.pretrain_steps as u64,
            seed,
            Some(&hash),
        )
        .map_err(|e| e.in_stage("pretrain"))?;
        pi_ref
    } else {
        load_policy_ckpt(&paths.ref_ckpt, "pretrain", Role::Reference)?
    };
    if stop == Stage::Pretrain {
        return Ok(None);
    }

    let pi_trac = if within(Stage::Train) {
        let cd = cd.as_ref().expect("built above for the train window");
        let (pi_trac, log) =
            train(cd, &ds, &pi_ref, &tc, RefModel::Policy(&pi_ref)).map_err(|e| e.in_stage("train"))?;
        save_checkpoint(
            &paths.policy_ckpt,
            &pi_trac.params,
            tc.train_steps as u64,
            seed,
            Some(&hash),
        )
        .map_err(|e| e.in_stage("train"))?;
        write_text(&paths.train_log, &train_log_csv(&log, &hash, seed))
            .map_err(|e| e.in_stage("train"))?;
        pi_trac
    } else {
        load_policy_ckpt(&paths.policy_ckpt, "train", Role::Learner)?
    };
    if stop == Stage::Train {
        return Ok(None);
    }

    let stats = ds.stats().map_err(|e| e.in_stage("evaluate"))?;
    let eval = |policy: &Policy| {
        evaluate_policy(
            policy,
            &env,
            cfg.eval_episodes,
            tc.cost_threshold,
            cfg.epsilon,
            stats.v_min,
            stats.v_max,
            seed,
        )
        .map_err(|e| e.in_stage("evaluate"))
    };
    let rep_trac = eval(&pi_trac)?;
    let rep_ref = eval(&pi_ref)?;
    write_text(&paths.eval_trac, &eval_report_csv(&rep_trac, "trac", &hash, seed))
        .map_err(|e| e.in_stage("evaluate"))?;
    write_text(
        &paths.eval_bc_all,
        &eval_report_csv(&rep_ref, "bc_all", &hash, seed),
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    Ok(Some((rep_trac, rep_ref)))
}

fn write_resolved_config(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let mut text = artifact_header("config", &cfg.hash(), None);
    text.push_str(&cfg.canonical_string());
    let _ = writeln!(text, "out_dir = {}", cfg.out_dir.display());
    write_text(&cfg.out_dir.join("config.resolved"), &text)
}

/// Runs the pipeline from `start` through evaluation for every configured
/// seed, writes `summary.csv`, and returns the summary rows (TraC and the
/// behavior-cloned reference, per seed).
pub fn run_pipeline(cfg: &RunConfig, start: Stage) -> Result<Vec<SummaryRow>> {
    write_resolved_config(cfg)?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let (rep_trac, rep_ref) = run_seed(cfg, seed, start, Stage::Evaluate)?
            .expect("window reaching evaluate yields reports");
        rows.push(SummaryRow { seed, policy: "trac", report: rep_trac });
        rows.push(SummaryRow { seed, policy: "bc_all", report: rep_ref });
    }
    write_text(&cfg.out_dir.join("summary.csv"), &summary_csv(&rows, &cfg.hash()))?;
    Ok(rows)
}

/// Runs exactly one stage for every configured seed, loading prerequisites
/// from earlier artifacts. The evaluate stage also rewrites `summary.csv`.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<()> {
    if stage == Stage::Evaluate {
        run_pipeline(cfg, Stage::Evaluate)?;
        return Ok(());
    }
    write_resolved_config(cfg)?;
    for &seed in &cfg.seeds {
        run_seed(cfg, seed, stage, stage)?;
    }
    Ok(())
}

/// Ablation variants: drop one class from the contrastive set, replace the
/// reference with a uniform one, or sweep a config parameter over a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum AblationMode {
    DesirableOnly,
    UndesirableOnly,
    UniformRef,
    Sweep { param: String, values: Vec<String> },
}

impl AblationMode {
    pub fn name(&self) -> String {
        match self {
            AblationMode::DesirableOnly => "desirable_only".into(),
            AblationMode::UndesirableOnly => "undesirable_only".into(),
            AblationMode::UniformRef => "uniform_ref".into(),
            AblationMode::Sweep { param, .. } => format!("sweep({param})"),
        }
    }

    /// Parses the CLI surface: a mode name plus, for sweeps, the parameter
    /// name and comma-separated value grid.
    pub fn parse(mode: &str, param: Option<&str>, values: Option<&str>) -> Result<Self> {
        match mode {
            "desirable-only" => Ok(AblationMode::DesirableOnly),
            "undesirable-only" => Ok(AblationMode::UndesirableOnly),
            "uniform-ref" => Ok(AblationMode::UniformRef),
            "sweep" => {
                let param = param.ok_or_else(|| {
                    Error::Config("sweep mode requires --param".into())
                })?;
                let values: Vec<String> = values
                    .ok_or_else(|| Error::Config("sweep mode requires --values".into()))?
                    .split(',')
                    .map(|v| v.trim().to_string())
                    .collect();
                if values.is_empty() || values.iter().any(String::is_empty) {
                    return Err(Error::Config("sweep values must be nonempty".into()));
                }
                Ok(AblationMode::Sweep { param: param.to_string(), values })
            }
            _ => Err(Error::Config(format!(
                "unknown ablation mode `{mode}` (expected desirable-only, undesirable-only, uniform-ref, or sweep)"
            ))),
        }
    }
}

/// Trains and evaluates one in-memory variant for one seed. `keep` filters
/// the contrastive members (None keeps all); the class mix weights are kept
/// at their full-build values so only the data, not the objective balance,
/// changes.
fn ablation_variant(
    cfg: &RunConfig,
    ds: &Dataset,
    cd: &ContrastiveDataset,
    pi_ref: &Policy,
    seed: u64,
    keep: Option<bool>,
    reference: RefModel,
) -> Result<EvalReport> {
    let env = PointHazardEnv;
    let tc = cfg.to_train_config(seed);
    let mut cd = cd.clone();
    if let Some(desirable) = keep {
        cd.members.retain(|m| m.desirable == desirable);
    }
    let (pi, _log) = train(&cd, ds, pi_ref, &tc, reference)?;
    let stats = ds.stats()?;
    evaluate_policy(
        &pi,
        &env,
        cfg.eval_episodes,
        tc.cost_threshold,
        cfg.epsilon,
        stats.v_min,
        stats.v_max,
        seed,
    )
}

/// Runs one full-pipeline variant (fresh data, reference, and training) in
/// memory and returns its evaluation.
fn full_run_in_memory(cfg: &RunConfig, seed: u64) -> Result<EvalReport> {
    let env = PointHazardEnv;
    let tc = cfg.to_train_config(seed);
    let ds = match &cfg.dataset {
        Some(path) => read_dataset(path)?,
        None => generate_dataset(&env, &cfg.generator_config(seed))?,
    };
    let cd = contrastive::build(&ds, tc.cost_threshold, tc.x_pct, tc.y_pct, tc.delta, tc.eta)?;
    let spec = cfg.mlp_spec(PointHazardEnv::STATE_DIM, PointHazardEnv::ACTION_DIM)?;
    let (pi_ref, _) = pretrain_bc_seeded(&ds, &spec, &tc, seed)?;
    let (pi, _) = train(&cd, &ds, &pi_ref, &tc, RefModel::Policy(&pi_ref))?;
    let stats = ds.stats()?;
    evaluate_policy(
        &pi,
        &env,
        cfg.eval_episodes,
        tc.cost_threshold,
        cfg.epsilon,
        stats.v_min,
        stats.v_max,
        seed,
    )
}

/// Runs the requested ablation for every seed and writes `ablation.csv`
/// (one comparison row per variant per seed) under the output directory.
/// Returns the CSV path.
pub fn run_ablation(cfg: &RunConfig, mode: &AblationMode) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let hash = cfg.hash();
    let env = PointHazardEnv;
    let mut rows: Vec<(String, u64, EvalReport)> = Vec::new();

    match mode {
        AblationMode::Sweep { param, values } => {
            // Validate the whole grid before spending any training time.
            let grid: Vec<(String, RunConfig)> = values
                .iter()
                .map(|value| {
                    let mut cfg_v = cfg.clone();
                    cfg_v.set(param, value)?;
                    cfg_v.validate()?;
                    Ok((format!("{param}={value}"), cfg_v))
                })
                .collect::<Result<_>>()?;
            for (variant, cfg_v) in &grid {
                for &seed in &cfg_v.seeds {
                    let rep = full_run_in_memory(cfg_v, seed)
                        .map_err(|e| e.in_stage("ablate"))?;
                    rows.push((variant.clone(), seed, rep));
                }
            }
        }
        _ => {
            for &seed in &cfg.seeds {
                let tc = cfg.to_train_config(seed);
                let ds = match &cfg.dataset {
                    Some(path) => read_dataset(path).map_err(|e| e.in_stage("ablate"))?,
                    None => generate_dataset(&env, &cfg.generator_config(seed))
                        .map_err(|e| e.in_stage("ablate"))?,
                };
                let cd = contrastive::build(
                    &ds,
                    tc.cost_threshold,
                    tc.x_pct,
                    tc.y_pct,
                    tc.delta,
                    tc.eta,
                )
                .map_err(|e| e.in_stage("ablate"))?;
                let spec = cfg
                    .mlp_spec(PointHazardEnv::STATE_DIM, PointHazardEnv::ACTION_DIM)
                    .map_err(|e| e.in_stage("ablate"))?;
                let (pi_ref, _) = pretrain_bc_seeded(&ds, &spec, &tc, seed)
                    .map_err(|e| e.in_stage("ablate"))?;

                let full = ablation_variant(cfg, &ds, &cd, &pi_ref, seed, None, RefModel::Policy(&pi_ref))
                    .map_err(|e| e.in_stage("ablate"))?;
                rows.push(("full".into(), seed, full));

                let (keep, reference) = match mode {
                    AblationMode::DesirableOnly => (Some(true), RefModel::Policy(&pi_ref)),
                    AblationMode::UndesirableOnly => (Some(false), RefModel::Policy(&pi_ref)),
                    AblationMode::UniformRef => (None, RefModel::Uniform),
                    AblationMode::Sweep { .. } => unreachable!("handled above"),
                };
                let rep = ablation_variant(cfg, &ds, &cd, &pi_ref, seed, keep, reference)
                    .map_err(|e| e.in_stage("ablate"))?;
                rows.push((mode.name(), seed, rep));
            }
        }
    }

    let mut s = artifact_header("ablate", &hash, None);
    let _ = writeln!(s, "# mode = {}", mode.name());
    s.push_str("variant,seed,mean_return,mean_cost,normalized_reward,normalized_cost,safe\n");
    for (variant, seed, rep) in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            variant,
            seed,
            rep.mean_return,
            rep.mean_cost,
            rep.normalized_reward,
            rep.normalized_cost,
            rep.safe
        );
    }
    let path = cfg.out_dir.join("ablation.csv");
    write_text(&path, &s)?;
    Ok(path)
}
