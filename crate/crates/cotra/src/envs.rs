//! Desk-scale constrained-MDP environments and a behavioral-policy data
//! generator.
//!
//! `PointHazardEnv` is a 2-D point mass that must reach a goal while a hazard
//! disc sits directly on the straight start→goal line, so speed and safety
//! genuinely conflict. The generator rolls a family of hand-written
//! controllers whose hazard-handling gain and action noise vary per episode,
//! yielding an offline dataset with a realistic spread of safe/unsafe and
//! high/low-return trajectories. A trivial discrete chain CMDP is included
//! solely as a brute-force oracle for tests.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Trajectory, Transition};
use crate::seeding::{self, stream};
use crate::{Error, Result};

/// Point-mass navigation with a hazard disc on the direct route.
///
/// State (px, py, vx, vy); positions live in [−1,1]², velocities in
/// [−0.2,0.2]², actions in [−1,1]². Reward is progress toward the goal;
/// cost is 1 whenever the new position is strictly inside the hazard.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointHazardEnv;

impl PointHazardEnv {
    pub const STATE_DIM: usize = 4;
    pub const ACTION_DIM: usize = 2;
    pub const GOAL: [f64; 2] = [0.8, 0.8];
    pub const HAZARD_CENTER: [f64; 2] = [0.3, 0.3];
    pub const HAZARD_RADIUS: f64 = 0.25;
    pub const HORIZON: usize = 64;
    pub const POSITION_BOUND: f64 = 1.0;
    pub const VELOCITY_BOUND: f64 = 0.2;
    pub const ACTION_BOUND: f64 = 1.0;

    /// The fixed start state (−0.8, −0.8) at rest. The seed is accepted for
    /// interface uniformity; the start distribution is a point mass.
    pub fn reset(&self, _seed: u64) -> Vec<f64> {
        vec![-0.8, -0.8, 0.0, 0.0]
    }

    /// One dynamics step:
    /// a ← clip(action, ±1); v′ ← clip(0.9·v + 0.1·a, ±0.2);
    /// p′ ← clip(p + v′, ±1); reward = dist(p, g) − dist(p′, g);
    /// cost = 1 iff ‖p′ − hazard‖ < radius (strict).
    pub fn step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64, f64) {
        let (px, py, vx, vy) = (state[0], state[1], state[2], state[3]);
        let ax = action[0].clamp(-Self::ACTION_BOUND, Self::ACTION_BOUND);
        let ay = action[1].clamp(-Self::ACTION_BOUND, Self::ACTION_BOUND);
        let nvx = (0.9 * vx + 0.1 * ax).clamp(-Self::VELOCITY_BOUND, Self::VELOCITY_BOUND);
        let nvy = (0.9 * vy + 0.1 * ay).clamp(-Self::VELOCITY_BOUND, Self::VELOCITY_BOUND);
        let npx = (px + nvx).clamp(-Self::POSITION_BOUND, Self::POSITION_BOUND);
        let npy = (py + nvy).clamp(-Self::POSITION_BOUND, Self::POSITION_BOUND);
        let reward = dist(px, py, Self::GOAL) - dist(npx, npy, Self::GOAL);
        let dx = npx - Self::HAZARD_CENTER[0];
        let dy = npy - Self::HAZARD_CENTER[1];
        let cost = if (dx * dx + dy * dy).sqrt() < Self::HAZARD_RADIUS {
            1.0
        } else {
            0.0
        };
        (vec![npx, npy, nvx, nvy], reward, cost)
    }

    /// Roll one full-horizon episode under `controller`, which maps the state
    /// to an action.
    pub fn run_episode<F>(&self, id: u64, seed: u64, mut controller: F) -> Trajectory
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut state = self.reset(seed);
        let mut transitions = Vec::with_capacity(Self::HORIZON);
        for _ in 0..Self::HORIZON {
            let action = controller(&state);
            let (next, reward, cost) = self.step(&state, &action);
            transitions.push(Transition {
                state: state.clone(),
                action,
                next_state: next.clone(),
                reward,
                cost,
            });
            state = next;
        }
        Trajectory { id, transitions }
    }
}

fn dist(x: f64, y: f64, target: [f64; 2]) -> f64 {
    let dx = x - target[0];
    let dy = y - target[1];
    (dx * dx + dy * dy).sqrt()
}

/// Behavioral data generator settings.
///
/// Each episode samples a hazard-handling gain β and a noise scale σ; the
/// controller is a = clip((g − p) + β·repulsion(p) + noise, ±1), where
/// repulsion = 0.1·(p − hazard_center)/max(‖p − hazard_center‖, 0.05)².
/// Positive gains detour around the hazard; β = 0 drives straight through;
/// negative gains are drawn toward the hazard and tend to get stuck inside,
/// producing genuinely unsafe, low-return behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_trajectories: usize,
    pub avoidance_gains: Vec<f64>,
    pub noise_scales: Vec<f64>,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_trajectories: 2000,
            avoidance_gains: vec![-3.0, -2.0, 0.0, 0.5, 1.0, 2.0],
            noise_scales: vec![0.05, 0.2],
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 {
            return Err(Error::Config("n_trajectories must be >= 1".into()));
        }
        if self.avoidance_gains.is_empty() || self.noise_scales.is_empty() {
            return Err(Error::Config("gain and noise sets must be nonempty".into()));
        }
        Ok(())
    }
}

/// The behavioral controller's action at `state` for gain β plus noise.
fn controller_action(state: &[f64], beta: f64, noise: [f64; 2]) -> Vec<f64> {
    let (px, py) = (state[0], state[1]);
    let dx = px - PointHazardEnv::HAZARD_CENTER[0];
    let dy = py - PointHazardEnv::HAZARD_CENTER[1];
    let d = (dx * dx + dy * dy).sqrt().max(0.05);
    let rep_scale = 0.1 / (d * d);
    let ax = (PointHazardEnv::GOAL[0] - px) + beta * rep_scale * dx + noise[0];
    let ay = (PointHazardEnv::GOAL[1] - py) + beta * rep_scale * dy + noise[1];
    vec![
        ax.clamp(-PointHazardEnv::ACTION_BOUND, PointHazardEnv::ACTION_BOUND),
        ay.clamp(-PointHazardEnv::ACTION_BOUND, PointHazardEnv::ACTION_BOUND),
    ]
}

/// Generate an offline dataset by rolling the behavioral controller family.
/// Deterministic given the config; episodes use per-episode derived seeds and
/// merge in episode order.
pub fn generate_dataset(env: &PointHazardEnv, gcfg: &GeneratorConfig) -> Result<Dataset> {
    gcfg.validate()?;
    let base = seeding::derive_seed(gcfg.seed, stream::GENERATE);
    let mut trajectories = Vec::with_capacity(gcfg.n_trajectories);
    for episode in 0..gcfg.n_trajectories {
        let mut rng = seeding::rng_for(base, episode as u64);
        let beta = gcfg.avoidance_gains[rng.gen_range(0..gcfg.avoidance_gains.len())];
        let sigma = gcfg.noise_scales[rng.gen_range(0..gcfg.noise_scales.len())];
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let traj = env.run_episode(episode as u64, gcfg.seed, |state| {
            let noise = if sigma > 0.0 {
                [sigma * normal.sample(&mut rng), sigma * normal.sample(&mut rng)]
            } else {
                [0.0, 0.0]
            };
            controller_action(state, beta, noise)
        });
        trajectories.push(traj);
    }
    let mut meta = BTreeMap::new();
    meta.insert("env".to_string(), "point_hazard".to_string());
    meta.insert("generator_seed".to_string(), gcfg.seed.to_string());
    meta.insert(
        "avoidance_gains".to_string(),
        gcfg.avoidance_gains.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(","),
    );
    meta.insert(
        "noise_scales".to_string(),
        gcfg.noise_scales.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
    );
    Dataset::new(
        trajectories,
        PointHazardEnv::STATE_DIM,
        PointHazardEnv::ACTION_DIM,
        meta,
    )
}

/// Trivial 5-state chain CMDP for brute-force oracle tests.
///
/// States 0..4 (carried as one f64). A positive action moves right, otherwise
/// left, clamped to the chain. Landing on state 4 yields reward 1; landing on
/// state 3 costs 1. Horizon 6, start at 0. With a cost budget ≥ 1 the optimal
/// policy is "always right" (return 3, cost 1); with budget 0 no rewarding
/// path exists because state 3 guards the only approach to 4.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChainEnv;

impl ChainEnv {
    pub const N_STATES: i64 = 5;
    pub const HORIZON: usize = 6;

    pub fn reset(&self) -> f64 {
        0.0
    }

    pub fn step(&self, state: f64, action: f64) -> (f64, f64, f64) {
        let s = state as i64;
        let next = (s + if action > 0.0 { 1 } else { -1 }).clamp(0, Self::N_STATES - 1);
        let reward = if next == 4 { 1.0 } else { 0.0 };
        let cost = if next == 3 { 1.0 } else { 0.0 };
        (next as f64, reward, cost)
    }

    /// Return and cost of a fixed action sequence from the start state.
    pub fn rollout_returns(&self, actions: &[f64]) -> (f64, f64) {
        let mut s = self.reset();
        let mut ret = 0.0;
        let mut cost = 0.0;
        for &a in actions.iter().take(Self::HORIZON) {
            let (next, r, c) = self.step(s, a);
            ret += r;
            cost += c;
            s = next;
        }
        (ret, cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn reset_is_fixed_regardless_of_seed() {
        let env = PointHazardEnv;
        assert_eq!(env.reset(0), vec![-0.8, -0.8, 0.0, 0.0]);
        assert_eq!(env.reset(12345), vec![-0.8, -0.8, 0.0, 0.0]);
    }

    #[test]
    fn zero_action_zero_velocity_is_fixed_point() {
        let env = PointHazardEnv;
        let (next, reward, cost) = env.step(&[-0.8, -0.8, 0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(next, vec![-0.8, -0.8, 0.0, 0.0]);
        assert_eq!(reward, 0.0);
        assert_eq!(cost, 0.0);
        // Sitting at the hazard center costs every step.
        let (next, reward, cost) = env.step(&[0.3, 0.3, 0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(next, vec![0.3, 0.3, 0.0, 0.0]);
        assert_eq!(reward, 0.0);
        assert_eq!(cost, 1.0);
    }

    #[test]
    fn hazard_boundary_is_cost_free() {
        let env = PointHazardEnv;
        // Exactly on the boundary: distance = 0.25 → strict inequality → 0.
        let (_, _, cost) = env.step(&[0.55, 0.3, 0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(cost, 0.0);
        // Just inside.
        let (_, _, cost) = env.step(&[0.549, 0.3, 0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(cost, 1.0);
    }

    #[test]
    fn three_steps_constant_action_match_hand_dynamics() {
        // Constant a = (1,1) from the start, worked by hand:
        // v: 0.1, 0.19, then 0.271 clipped to 0.2; p walks the diagonal.
        let env = PointHazardEnv;
        let mut s = env.reset(0);
        let (s1, r1, c1) = env.step(&s, &[1.0, 1.0]);
        assert!((s1[2] - 0.1).abs() < 1e-15);
        assert!((s1[0] - -0.7).abs() < 1e-15);
        assert!((r1 - 0.1 * SQRT2).abs() < 1e-12);
        assert_eq!(c1, 0.0);
        s = s1;
        let (s2, r2, _) = env.step(&s, &[1.0, 1.0]);
        assert!((s2[2] - 0.19).abs() < 1e-15);
        assert!((s2[0] - -0.51).abs() < 1e-12);
        assert!((r2 - 0.19 * SQRT2).abs() < 1e-12);
        s = s2;
        let (s3, r3, _) = env.step(&s, &[1.0, 1.0]);
        assert!((s3[2] - 0.2).abs() < 1e-15, "velocity clips at 0.2");
        assert!((s3[0] - -0.31).abs() < 1e-12);
        assert!((r3 - 0.2 * SQRT2).abs() < 1e-12);
    }

    #[test]
    fn velocity_and_position_stay_in_boxes() {
        let env = PointHazardEnv;
        let mut state = env.reset(0);
        let mut rng = seeding::rng_for(3, 0);
        for _ in 0..500 {
            let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let (next, _, cost) = env.step(&state, &a);
            assert!(next[0].abs() <= 1.0 && next[1].abs() <= 1.0);
            assert!(next[2].abs() <= 0.2 && next[3].abs() <= 0.2);
            assert!(cost == 0.0 || cost == 1.0);
            state = next;
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let env = PointHazardEnv;
        let gcfg = GeneratorConfig { n_trajectories: 5, ..Default::default() };
        let a = generate_dataset(&env, &gcfg).unwrap();
        let b = generate_dataset(&env, &gcfg).unwrap();
        assert_eq!(a, b);
        let other = GeneratorConfig { n_trajectories: 5, seed: 1, ..Default::default() };
        let c = generate_dataset(&env, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn greedy_controller_crosses_the_hazard() {
        // β = 0, σ = 0 drives straight at the goal through the hazard disc.
        let env = PointHazardEnv;
        let traj = env.run_episode(0, 0, |s| controller_action(s, 0.0, [0.0, 0.0]));
        assert!(traj.total_cost() > 0.0, "cost {}", traj.total_cost());
    }

    #[test]
    fn episodes_have_full_horizon_and_integral_cost() {
        let env = PointHazardEnv;
        let gcfg = GeneratorConfig { n_trajectories: 30, ..Default::default() };
        let ds = generate_dataset(&env, &gcfg).unwrap();
        for t in &ds.trajectories {
            assert_eq!(t.len(), PointHazardEnv::HORIZON);
            for tr in &t.transitions {
                assert!(tr.cost == 0.0 || tr.cost == 1.0);
            }
            assert!(t.total_cost() <= PointHazardEnv::HORIZON as f64);
        }
    }

    #[test]
    fn return_telescopes_to_endpoint_distances() {
        let env = PointHazardEnv;
        let gcfg = GeneratorConfig { n_trajectories: 10, seed: 4, ..Default::default() };
        let ds = generate_dataset(&env, &gcfg).unwrap();
        for t in &ds.trajectories {
            let first = &t.transitions[0];
            let last = t.transitions.last().unwrap();
            let expected = dist(first.state[0], first.state[1], PointHazardEnv::GOAL)
                - dist(last.next_state[0], last.next_state[1], PointHazardEnv::GOAL);
            assert!(
                (t.total_reward() - expected).abs() < 1e-9,
                "telescoping broke: {} vs {expected}",
                t.total_reward()
            );
        }
    }

    #[test]
    fn default_generator_is_non_degenerate() {
        // The harness requires both classes and a real safe-return spread.
        let env = PointHazardEnv;
        let gcfg = GeneratorConfig { n_trajectories: 2000, ..Default::default() };
        let ds = generate_dataset(&env, &gcfg).unwrap();
        let threshold = 8.0;
        let safe: Vec<&Trajectory> =
            ds.trajectories.iter().filter(|t| t.total_cost() <= threshold).collect();
        let unsafe_count = ds.trajectories.len() - safe.len();
        assert!(!safe.is_empty(), "no safe trajectories");
        assert!(unsafe_count > 0, "no unsafe trajectories");
        let returns: Vec<f64> = safe.iter().map(|t| t.total_reward()).collect();
        let v_min = returns.iter().cloned().fold(f64::INFINITY, f64::min);
        let v_max = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(v_max > v_min, "safe-return spread is degenerate");
    }

    #[test]
    fn chain_brute_force_confirms_optimal_safe_policy() {
        // Enumerate all 2^6 deterministic action sequences.
        let env = ChainEnv;
        let mut best_with_budget_one = (f64::NEG_INFINITY, 0.0);
        let mut best_with_budget_zero = f64::NEG_INFINITY;
        for mask in 0..1u32 << ChainEnv::HORIZON {
            let actions: Vec<f64> = (0..ChainEnv::HORIZON)
                .map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let (ret, cost) = env.rollout_returns(&actions);
            if cost <= 1.0 && ret > best_with_budget_one.0 {
                best_with_budget_one = (ret, cost);
            }
            if cost == 0.0 {
                best_with_budget_zero = best_with_budget_zero.max(ret);
            }
        }
        // Always-right reaches state 4 at step 4 and stays: return 3, cost 1.
        let (ret, cost) = env.rollout_returns(&[1.0; 6]);
        assert_eq!((ret, cost), (3.0, 1.0));
        assert_eq!(best_with_budget_one, (3.0, 1.0));
        // State 3 guards state 4, so a zero-cost policy never scores.
        assert_eq!(best_with_budget_zero, 0.0);
    }
}
