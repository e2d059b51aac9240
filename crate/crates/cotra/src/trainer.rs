//! Two-phase learning: behavior-cloning pretraining of the reference policy,
//! then classification training of the learner over weighted trajectory
//! segments.
//!
//! The classification loss pushes σ(ψ) toward each member's desirability
//! label, where ψ is the discounted log-ratio score of a sampled segment.
//! It is computed in softplus form — log σ(ψ) = −softplus(−ψ) and
//! log(1−σ(ψ)) = −softplus(ψ) — which never overflows; gradients flow through
//! ψ into the learner only, the reference staying constant.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::contrastive::ContrastiveDataset;
use crate::dataset::{Dataset, Trajectory};
use crate::nn::{
    adam_step, backward_batch, forward_batch, init_params, AdamState, Dropout, Mat, MlpSpec,
};
use crate::policy::{Policy, Role, Segment};
use crate::seeding::{self, stream};
use crate::{Error, Result};

/// Hyperparameters of both training phases plus the partition parameters the
/// pipeline forwards to the contrastive build.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub pretrain_steps: usize,
    pub train_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub segment_ratio: f64,
    pub delta: f64,
    pub eta: f64,
    pub x_pct: f64,
    pub y_pct: f64,
    pub cost_threshold: f64,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(self.lr > 0.0, "lr must be > 0")?;
        check(self.alpha > 0.0, "alpha must be > 0")?;
        check(self.gamma > 0.0 && self.gamma <= 1.0, "gamma must be in (0, 1]")?;
        check(
            self.segment_ratio > 0.0 && self.segment_ratio <= 1.0,
            "segment_ratio must be in (0, 1]",
        )?;
        check((0.0..=1.0).contains(&self.delta), "delta must be in [0, 1]")?;
        check(self.eta > 0.0, "eta must be > 0")?;
        check(self.x_pct > 0.0 && self.x_pct <= 100.0, "x_pct must be in (0, 100]")?;
        check((0.0..=100.0).contains(&self.y_pct), "y_pct must be in [0, 100]")?;
        check(self.x_pct + self.y_pct <= 100.0, "x_pct + y_pct must not exceed 100")?;
        check(self.cost_threshold >= 0.0, "cost_threshold must be >= 0")?;
        check(
            (0.0..1.0).contains(&self.dropout_rate),
            "dropout_rate must be in [0, 1)",
        )?;
        Ok(())
    }
}

/// One logged training step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub step: u64,
    pub loss: f64,
    /// Mean ψ over the step's desirable batch members (NaN if none drawn).
    pub mean_psi_desirable: f64,
    /// Mean ψ over the step's undesirable batch members (NaN if none drawn).
    pub mean_psi_undesirable: f64,
    pub grad_norm: f64,
}

/// Per-step records of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

/// numerically stable softplus: ln(1 + eˣ).
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// numerically stable logistic sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Behavior-clone a policy: minimize the mean squared action error over
/// uniformly sampled transitions of the full dataset. Dropout is active
/// during these updates. Returns the trained reference and its per-step loss.
pub fn pretrain_bc(ds: &Dataset, spec: &MlpSpec, cfg: &TrainConfig) -> Result<(Policy, Vec<f64>)> {
    pretrain_bc_seeded(ds, spec, cfg, cfg.seed)
}

/// `pretrain_bc` with an explicit seed, so baselines cloned from dataset
/// subsets can use their own stream.
pub fn pretrain_bc_seeded(
    ds: &Dataset,
    spec: &MlpSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Policy, Vec<f64>)> {
    cfg.validate()?;
    if spec.input_dim() != ds.state_dim || spec.output_dim() != ds.action_dim {
        return Err(Error::Train(format!(
            "network is {}->{} but dataset is {}->{}",
            spec.input_dim(),
            spec.output_dim(),
            ds.state_dim,
            ds.action_dim
        )));
    }
    let mut params = init_params(spec, seeding::derive_seed(seed, stream::INIT));
    let mut rng = seeding::rng_for(seed, stream::PRETRAIN);
    let mut adam = AdamState::new(params.data.len());

    // Flatten all transitions once; batches gather by index.
    let flat: Vec<(&[f64], &[f64])> = ds
        .trajectories
        .iter()
        .flat_map(|t| t.transitions.iter().map(|tr| (tr.state.as_slice(), tr.action.as_slice())))
        .collect();
    let n = flat.len();
    let mut losses = Vec::with_capacity(cfg.pretrain_steps);
    for step in 0..cfg.pretrain_steps {
        let mut x = Mat::zeros(cfg.batch_size, ds.state_dim);
        let mut a = Mat::zeros(cfg.batch_size, ds.action_dim);
        for i in 0..cfg.batch_size {
            let idx = rng.gen_range(0..n);
            x.data[i * ds.state_dim..(i + 1) * ds.state_dim].copy_from_slice(flat[idx].0);
            a.data[i * ds.action_dim..(i + 1) * ds.action_dim].copy_from_slice(flat[idx].1);
        }
        let dropout = if cfg.dropout_rate > 0.0 {
            Dropout::On(&mut rng)
        } else {
            Dropout::Off
        };
        let (mu, trace) = forward_batch(&params, &x, dropout)?;
        let mut loss = 0.0;
        let mut d_mu = Mat::zeros(cfg.batch_size, ds.action_dim);
        let scale = 1.0 / cfg.batch_size as f64;
        for i in 0..mu.data.len() {
            let r = mu.data[i] - a.data[i];
            loss += r * r * scale;
            d_mu.data[i] = 2.0 * r * scale;
        }
        if !loss.is_finite() {
            return Err(Error::Train(format!(
                "behavior cloning diverged at step {step}: loss = {loss}"
            )));
        }
        let grads = backward_batch(&params, &trace, &d_mu)?;
        adam_step(&mut params, &grads, &mut adam, cfg.lr)?;
        losses.push(loss);
    }
    Ok((Policy::new(params, Role::Reference), losses))
}

/// Draw one segment: length m = max(1, ⌈ratio·k⌉), start uniform over the
/// valid range. ratio = 1 always yields the whole trajectory.
pub fn sample_segment<'a>(
    traj: &'a Trajectory,
    ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Segment<'a>> {
    let k = traj.transitions.len();
    let m = (((ratio * k as f64).ceil() as usize).max(1)).min(k);
    let start = if m == k { 0 } else { rng.gen_range(0..=k - m) };
    Segment::from_trajectory(traj, start, m)
}

/// What stands in for the reference density inside the score.
#[derive(Clone, Copy)]
pub enum RefModel<'a> {
    /// The behavior-cloned reference; its log-probs enter the score.
    Policy(&'a Policy),
    /// A uniform reference: constant log-probability 0, so the score reduces
    /// to the learner's own discounted surrogate log-probs.
    Uniform,
}

/// One labeled, weighted segment inside a loss batch.
pub struct BatchMember<'a> {
    pub traj_id: u64,
    pub seg: Segment<'a>,
    pub desirable: bool,
    pub weight: f64,
}

/// Loss value, learner gradients, and per-class score diagnostics for one batch.
#[derive(Debug)]
pub struct LossReport {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub mean_psi_desirable: f64,
    pub mean_psi_undesirable: f64,
}

/// Weighted binary cross-entropy of σ(ψ) against desirability labels over one
/// batch, with gradients for the learner.
///
/// Per member: desirable contributes λ_d·w·softplus(−ψ), undesirable
/// λ_u·w·softplus(ψ); the loss is the batch mean. Dropout (if supplied)
/// applies to the learner's forward pass only; the reference always runs
/// deterministically.
pub fn trac_loss(
    batch: &[BatchMember],
    pi_theta: &Policy,
    reference: RefModel,
    lambda_d: f64,
    lambda_u: f64,
    alpha: f64,
    gamma: f64,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::Train("loss batch must be nonempty".into()));
    }
    let state_dim = pi_theta.state_dim();
    let action_dim = pi_theta.action_dim();

    // Pack every step of every member into one batch; remember each row's
    // (member, discount·alpha) so scores can be scattered back.
    let total_rows: usize = batch.iter().map(|m| m.seg.len()).sum();
    let mut x = Mat::zeros(total_rows, state_dim);
    let mut a = Mat::zeros(total_rows, action_dim);
    let mut row_member = Vec::with_capacity(total_rows);
    let mut row_coeff = Vec::with_capacity(total_rows);
    let mut row = 0;
    for (mi, member) in batch.iter().enumerate() {
        let mut discount = 1.0;
        for step in member.seg.steps() {
            if step.state.len() != state_dim || step.action.len() != action_dim {
                return Err(Error::Train(format!(
                    "trajectory {} does not match the policy's dimensions",
                    member.traj_id
                )));
            }
            x.data[row * state_dim..(row + 1) * state_dim].copy_from_slice(&step.state);
            a.data[row * action_dim..(row + 1) * action_dim].copy_from_slice(&step.action);
            row_member.push(mi);
            row_coeff.push(discount * alpha);
            discount *= gamma;
            row += 1;
        }
    }

    let learner_dropout = match dropout {
        Some(rng) if pi_theta.params.spec.dropout_rate > 0.0 => Dropout::On(rng),
        _ => Dropout::Off,
    };
    let (mu, trace) = forward_batch(&pi_theta.params, &x, learner_dropout)?;
    let ref_mu = match reference {
        RefModel::Policy(p) => {
            if p.state_dim() != state_dim || p.action_dim() != action_dim {
                return Err(Error::Train(
                    "reference and learner policies have different shapes".into(),
                ));
            }
            Some(forward_batch(&p.params, &x, Dropout::Off)?.0)
        }
        RefModel::Uniform => None,
    };

    // Score every member: ψ = Σ_t γᵗ·α·(log π_θ − log π_ref).
    let mut psi = vec![0.0; batch.len()];
    for r in 0..total_rows {
        let mut lp_theta = 0.0;
        for j in 0..action_dim {
            let d = mu.data[r * action_dim + j] - a.data[r * action_dim + j];
            lp_theta -= d * d;
        }
        let lp_ref = match &ref_mu {
            Some(rm) => {
                let mut lp = 0.0;
                for j in 0..action_dim {
                    let d = rm.data[r * action_dim + j] - a.data[r * action_dim + j];
                    lp -= d * d;
                }
                lp
            }
            None => 0.0,
        };
        psi[row_member[r]] += row_coeff[r] * (lp_theta - lp_ref);
    }

    // Loss and dL/dψ per member.
    let batch_scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut d_psi = vec![0.0; batch.len()];
    let mut psi_sum = [0.0f64; 2];
    let mut psi_count = [0usize; 2];
    for (mi, member) in batch.iter().enumerate() {
        let p = psi[mi];
        let (contribution, grad) = if member.desirable {
            (
                lambda_d * member.weight * softplus(-p),
                -lambda_d * member.weight * (1.0 - sigmoid(p)),
            )
        } else {
            (
                lambda_u * member.weight * softplus(p),
                lambda_u * member.weight * sigmoid(p),
            )
        };
        if !contribution.is_finite() {
            return Err(Error::Train(format!(
                "non-finite loss contribution from trajectory {} (score {p})",
                member.traj_id
            )));
        }
        loss += contribution * batch_scale;
        d_psi[mi] = grad * batch_scale;
        let class = usize::from(member.desirable);
        psi_sum[class] += p;
        psi_count[class] += 1;
    }

    // Backpropagate: dL/dμ_row = dL/dψ · γᵗ·α · (−2)(μ − a).
    let mut d_mu = Mat::zeros(total_rows, action_dim);
    for r in 0..total_rows {
        let c = d_psi[row_member[r]] * row_coeff[r];
        for j in 0..action_dim {
            let idx = r * action_dim + j;
            d_mu.data[idx] = c * -2.0 * (mu.data[idx] - a.data[idx]);
        }
    }
    let grads = backward_batch(&pi_theta.params, &trace, &d_mu)?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Train("non-finite gradient in loss batch".into()));
    }

    let mean = |class: usize| {
        if psi_count[class] > 0 {
            psi_sum[class] / psi_count[class] as f64
        } else {
            f64::NAN
        }
    };
    Ok(LossReport {
        loss,
        grads,
        mean_psi_desirable: mean(1),
        mean_psi_undesirable: mean(0),
    })
}

/// Classification training: the learner starts as a copy of the reference,
/// then takes `train_steps` Adam steps, each over `batch_size` members drawn
/// uniformly (with replacement) from the partition, one fresh segment per
/// member per step.
pub fn train(
    cd: &ContrastiveDataset,
    ds: &Dataset,
    pi_ref: &Policy,
    cfg: &TrainConfig,
    reference: RefModel,
) -> Result<(Policy, TrainLog)> {
    cfg.validate()?;
    if cd.members.is_empty() {
        return Err(Error::Train("partition has no members".into()));
    }
    // Resolve member trajectories once.
    let mut members = Vec::with_capacity(cd.members.len());
    for m in &cd.members {
        let traj = ds.trajectory(m.traj_id).ok_or_else(|| {
            Error::Train(format!("partition references unknown trajectory {}", m.traj_id))
        })?;
        members.push((traj, m.desirable, m.weight, m.traj_id));
    }

    let mut pi_theta = Policy::new(pi_ref.params.clone(), Role::Learner);
    let mut adam = AdamState::new(pi_theta.params.data.len());
    let mut rng = seeding::rng_for(cfg.seed, stream::TRAIN);
    let mut log = TrainLog::default();

    for step in 0..cfg.train_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let (traj, desirable, weight, id) = members[rng.gen_range(0..members.len())];
            let seg = sample_segment(traj, cfg.segment_ratio, &mut rng)?;
            batch.push(BatchMember { traj_id: id, seg, desirable, weight });
        }
        let dropout = if cfg.dropout_rate > 0.0 { Some(&mut rng) } else { None };
        let report = trac_loss(
            &batch,
            &pi_theta,
            reference,
            cd.lambda_d,
            cd.lambda_u,
            cfg.alpha,
            cfg.gamma,
            dropout,
        )
        .map_err(|e| match e {
            Error::Train(msg) => Error::Train(format!("step {step}: {msg}")),
            other => other,
        })?;
        adam_step(&mut pi_theta.params, &report.grads, &mut adam, cfg.lr)?;
        let grad_norm = report.grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        log.records.push(TrainRecord {
            step: step as u64,
            loss: report.loss,
            mean_psi_desirable: report.mean_psi_desirable,
            mean_psi_undesirable: report.mean_psi_undesirable,
            grad_norm,
        });
    }
    Ok((pi_theta, log))
}

/// Mean score per class over every member's full trajectory, dropout off.
/// Returns (mean ψ desirable, mean ψ undesirable).
pub fn class_score_means(
    cd: &ContrastiveDataset,
    ds: &Dataset,
    pi_theta: &Policy,
    reference: RefModel,
    alpha: f64,
    gamma: f64,
) -> Result<(f64, f64)> {
    let mut batch = Vec::with_capacity(cd.members.len());
    for m in &cd.members {
        let traj = ds.trajectory(m.traj_id).ok_or_else(|| {
            Error::Train(format!("partition references unknown trajectory {}", m.traj_id))
        })?;
        let seg = Segment::from_trajectory(traj, 0, traj.transitions.len())?;
        batch.push(BatchMember {
            traj_id: m.traj_id,
            seg,
            desirable: m.desirable,
            weight: m.weight,
        });
    }
    let report = trac_loss(
        &batch,
        pi_theta,
        reference,
        cd.lambda_d,
        cd.lambda_u,
        alpha,
        gamma,
        None,
    )?;
    Ok((report.mean_psi_desirable, report.mean_psi_undesirable))
}
