//! Normalized reward/cost metrics and policy rollout evaluation.
//!
//! Raw returns are rescaled against the training dataset's empirical return
//! range; raw cumulative costs are rescaled against the cost budget. A policy
//! counts as safe exactly when its normalized cost does not exceed 1.


use crate::envs::PointHazardEnv;
use crate::policy::{act, ActMode, Policy};
use crate::seeding::{self, stream};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// (R_π − r_min)/(r_max − r_min). May exceed [0, 1] if the policy beats the
/// dataset. Errors if the range is degenerate.
pub fn normalized_reward(r_pi: f64, r_min: f64, r_max: f64) -> Result<f64> {
    if r_max <= r_min {
        return Err(Error::Eval(format!(
            "degenerate normalization: r_max ({r_max}) must exceed r_min ({r_min})"
        )));
    }
    Ok((r_pi - r_min) / (r_max - r_min))
}

/// (C_π + ε)/(κ + ε); ε keeps a zero budget well-defined.
pub fn normalized_cost(c_pi: f64, kappa: f64, epsilon: f64) -> f64 {
    (c_pi + epsilon) / (kappa + epsilon)
}

/// One evaluation episode's raw numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode: u64,
    pub raw_return: f64,
    pub raw_cost: f64,
}

/// Aggregated evaluation result for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_cost: f64,
    pub normalized_reward: f64,
    pub normalized_cost: f64,
    /// true exactly when normalized_cost ≤ 1.
    pub safe: bool,
    /// The bounds the normalizations used, kept for auditability.
    pub r_min: f64,
    pub r_max: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub rows: Vec<EpisodeRow>,
}

/// Roll `n_episodes` deterministic-action episodes (per-episode derived
/// seeds), average raw returns and costs, and normalize. `r_min`/`r_max`
/// should be the training dataset's return bounds; `kappa` is the cost
/// budget the safety verdict is judged against.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    policy: &Policy,
    env: &PointHazardEnv,
    n_episodes: usize,
    kappa: f64,
    epsilon: f64,
    r_min: f64,
    r_max: f64,
    seed: u64,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::Eval("n_episodes must be >= 1".into()));
    }
    if kappa < 0.0 {
        return Err(Error::Eval(format!("kappa must be >= 0, got {kappa}")));
    }
    if epsilon <= 0.0 {
        return Err(Error::Eval(format!("epsilon must be > 0, got {epsilon}")));
    }
    let base = seeding::derive_seed(seed, stream::EVAL);
    let mut rows = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes {
        let ep_seed = seeding::derive_seed(base, episode as u64);
        let traj = env.run_episode(episode as u64, ep_seed, |state| {
            act(
                policy,
                state,
                ActMode::Deterministic,
                -PointHazardEnv::ACTION_BOUND,
                PointHazardEnv::ACTION_BOUND,
            )
            .expect("policy/env dimensions checked before rollout")
        });
        rows.push(EpisodeRow {
            episode: episode as u64,
            raw_return: traj.total_reward(),
            raw_cost: traj.total_cost(),
        });
    }
    let n = n_episodes as f64;
    let mean_return = rows.iter().map(|r| r.raw_return).sum::<f64>() / n;
    let mean_cost = rows.iter().map(|r| r.raw_cost).sum::<f64>() / n;
    let nr = normalized_reward(mean_return, r_min, r_max)?;
    let nc = normalized_cost(mean_cost, kappa, epsilon);
    Ok(EvalReport {
        episodes: n_episodes,
        mean_return,
        mean_cost,
        normalized_reward: nr,
        normalized_cost: nc,
        safe: nc <= 1.0,
        r_min,
        r_max,
        kappa,
        epsilon,
        rows,
    })
}

/// Dimension compatibility check used before rollouts, so shape errors
/// surface as errors rather than panics inside the episode closure.
pub fn check_policy_env(policy: &Policy) -> Result<()> {
    if policy.state_dim() != PointHazardEnv::STATE_DIM
        || policy.action_dim() != PointHazardEnv::ACTION_DIM
    {
        return Err(Error::Eval(format!(
            "policy is {}->{} but the environment needs {}->{}",
            policy.state_dim(),
            policy.action_dim(),
            PointHazardEnv::STATE_DIM,
            PointHazardEnv::ACTION_DIM
        )));
    }
    Ok(())
}
