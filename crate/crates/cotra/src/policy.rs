//! Fixed-variance Gaussian policy over the MLP, its log-probability
//! surrogate, and the discounted segment score.
//!
//! The policy's mean action is the network output μ(s). Log-probabilities use
//! the fixed-variance surrogate log π(a|s) = −‖μ(s) − a‖²₂, so the score of a
//! segment is a discounted sum of α-scaled squared-residual differences
//! between the learner and the frozen reference.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Trajectory, Transition};
use crate::nn::{forward, Dropout, ParamVector};
use crate::{Error, Result};

/// Which role a parameter snapshot plays in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// The policy being optimized (π_θ).
    Learner,
    /// The frozen behavior-cloned reference (π_ref).
    Reference,
}

/// A parameter snapshot tagged with its role.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub params: ParamVector,
    pub role: Role,
}

impl Policy {
    pub fn new(params: ParamVector, role: Role) -> Self {
        Policy { params, role }
    }

    pub fn state_dim(&self) -> usize {
        self.params.spec.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.params.spec.output_dim()
    }
}

/// A contiguous run of steps from one trajectory, re-indexed from t = 0.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    steps: &'a [Transition],
}

impl<'a> Segment<'a> {
    pub fn new(steps: &'a [Transition]) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Train("segment must contain at least one step".into()));
        }
        Ok(Segment { steps })
    }

    /// The `m` steps starting at `start` within `traj`.
    pub fn from_trajectory(traj: &'a Trajectory, start: usize, m: usize) -> Result<Self> {
        if m == 0 || start + m > traj.transitions.len() {
            return Err(Error::Train(format!(
                "segment [{start}, {start}+{m}) out of range for trajectory {} of length {}",
                traj.id,
                traj.transitions.len()
            )));
        }
        Segment::new(&traj.transitions[start..start + m])
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn steps(&self) -> &'a [Transition] {
        self.steps
    }
}

/// Surrogate log-probability: −‖μ(s) − a‖²₂. Zero iff the mean action equals
/// `a` exactly, negative otherwise.
pub fn log_prob(policy: &Policy, state: &[f64], action: &[f64]) -> Result<f64> {
    if action.len() != policy.action_dim() {
        return Err(Error::Net(format!(
            "action has {} components, policy outputs {}",
            action.len(),
            policy.action_dim()
        )));
    }
    let mu = forward(&policy.params, state, Dropout::Off)?;
    Ok(neg_sq_residual(&mu, action))
}

/// −‖μ − a‖²₂ for an already-computed mean.
pub fn neg_sq_residual(mu: &[f64], action: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (m, a) in mu.iter().zip(action) {
        let d = m - a;
        acc -= d * d;
    }
    acc
}

/// How to turn the mean action into an executed action.
pub enum ActMode<'a> {
    /// Return μ(s) as-is.
    Deterministic,
    /// Add i.i.d. zero-mean Gaussian noise with the given scale, then clip to
    /// the action box.
    Gaussian { sigma: f64, rng: &'a mut ChaCha8Rng },
}

/// Produce an action for `state`, clipped to the symmetric box [lo, hi] per
/// coordinate.
pub fn act(policy: &Policy, state: &[f64], mode: ActMode, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let mut a = forward(&policy.params, state, Dropout::Off)?;
    if let ActMode::Gaussian { sigma, rng } = mode {
        if sigma > 0.0 {
            let dist = Normal::new(0.0, sigma).map_err(|e| Error::Train(e.to_string()))?;
            for v in a.iter_mut() {
                *v += dist.sample(rng);
            }
        }
    }
    for v in a.iter_mut() {
        *v = v.clamp(lo, hi);
    }
    Ok(a)
}

/// Discounted segment score:
/// ψ = Σ_{t=0}^{m−1} γᵗ · α · [log π_θ(a_t|s_t) − log π_ref(a_t|s_t)],
/// with t counted from the segment start.
pub fn segment_score(
    pi_theta: &Policy,
    pi_ref: &Policy,
    seg: &Segment,
    alpha: f64,
    gamma: f64,
) -> Result<f64> {
    let mut psi = 0.0;
    let mut discount = 1.0;
    for step in seg.steps() {
        let lp_theta = log_prob(pi_theta, &step.state, &step.action)?;
        let lp_ref = log_prob(pi_ref, &step.state, &step.action)?;
        psi += discount * alpha * (lp_theta - lp_ref);
        discount *= gamma;
    }
    Ok(psi)
}
