//! Offline safe reinforcement learning via contrastive trajectory classification.
//!
//! The library turns a pre-collected dataset of reward/cost-annotated
//! trajectories into a weighted desirable/undesirable partition, behavior-clones
//! a reference policy on the full data, and then trains a fixed-variance
//! Gaussian policy to classify trajectory segments by desirability. The
//! classifier probability is a sigmoid over a discounted sum of log-probability
//! ratios between the learner and the frozen reference, so minimizing the
//! weighted binary cross-entropy imitates high-return safe behavior while
//! steering away from unsafe and low-return behavior — no value function and no
//! min-max loop.
//!
//! Desk-scale constrained environments, rollout evaluation with normalized
//! reward/cost metrics, and a reproducible pipeline CLI are included so the
//! whole procedure can run end to end on one core.

pub mod config;
pub mod contrastive;
pub mod dataset;
mod error;
pub mod envs;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod policy;
pub mod seeding;
pub mod trainer;

pub use error::{Error, Result};
