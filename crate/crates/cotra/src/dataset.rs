//! Trajectory data model and the line-delimited dataset format.
//!
//! A dataset is stored as JSON lines: a header record with dimensions and
//! metadata, then one record per trajectory holding parallel arrays of
//! states, actions, next states, rewards, and costs. All numerics are 64-bit
//! and round-trip bit-exactly through the shortest-representation encoder.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// One environment step: `(s, a, s', r, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
}

/// An ordered, nonempty sequence of transitions with a dataset-unique id.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    /// Number of steps.
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted sum of per-step rewards.
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Undiscounted sum of per-step costs.
    pub fn total_cost(&self) -> f64 {
        self.transitions.iter().map(|t| t.cost).sum()
    }
}

/// An offline dataset: dimension-consistent trajectories plus free-form
/// annotations (environment name, generator seed, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub state_dim: usize,
    pub action_dim: usize,
    pub meta: BTreeMap<String, String>,
}

/// Per-trajectory aggregate row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySummary {
    pub id: u64,
    pub total_reward: f64,
    pub total_cost: f64,
}

/// Return extrema and the per-trajectory (return, cost) table.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub v_min: f64,
    pub v_max: f64,
    pub n_traj: usize,
    pub rows: Vec<TrajectorySummary>,
}

impl Dataset {
    /// Build a dataset and check every invariant.
    pub fn new(
        trajectories: Vec<Trajectory>,
        state_dim: usize,
        action_dim: usize,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let ds = Dataset {
            trajectories,
            state_dim,
            action_dim,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Check nonemptiness, dimension consistency, id uniqueness, finiteness,
    /// and nonnegative costs.
    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Dataset("state_dim and action_dim must be positive".into()));
        }
        let mut seen = HashSet::new();
        for traj in &self.trajectories {
            if !seen.insert(traj.id) {
                return Err(Error::Dataset(format!("duplicate trajectory id {}", traj.id)));
            }
            if traj.transitions.is_empty() {
                return Err(Error::Dataset(format!("trajectory {} has no transitions", traj.id)));
            }
            for (t, tr) in traj.transitions.iter().enumerate() {
                if tr.state.len() != self.state_dim || tr.next_state.len() != self.state_dim {
                    return Err(Error::Dimension {
                        traj_id: traj.id,
                        msg: format!(
                            "step {t}: state length {} / next_state length {} != state_dim {}",
                            tr.state.len(),
                            tr.next_state.len(),
                            self.state_dim
                        ),
                    });
                }
                if tr.action.len() != self.action_dim {
                    return Err(Error::Dimension {
                        traj_id: traj.id,
                        msg: format!(
                            "step {t}: action length {} != action_dim {}",
                            tr.action.len(),
                            self.action_dim
                        ),
                    });
                }
                let finite = tr.state.iter().chain(&tr.action).chain(&tr.next_state).all(|v| v.is_finite())
                    && tr.reward.is_finite()
                    && tr.cost.is_finite();
                if !finite {
                    return Err(Error::Dataset(format!(
                        "trajectory {} step {t} contains a non-finite value",
                        traj.id
                    )));
                }
                if tr.cost < 0.0 {
                    return Err(Error::Dataset(format!(
                        "trajectory {} step {t} has negative cost {}",
                        traj.id, tr.cost
                    )));
                }
            }
        }
        Ok(())
    }

    /// Return extrema and the per-trajectory summary table.
    pub fn stats(&self) -> Result<DatasetStats> {
        if self.trajectories.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }
        let rows: Vec<TrajectorySummary> = self
            .trajectories
            .iter()
            .map(|t| TrajectorySummary {
                id: t.id,
                total_reward: t.total_reward(),
                total_cost: t.total_cost(),
            })
            .collect();
        let v_min = rows.iter().map(|r| r.total_reward).fold(f64::INFINITY, f64::min);
        let v_max = rows.iter().map(|r| r.total_reward).fold(f64::NEG_INFINITY, f64::max);
        Ok(DatasetStats {
            v_min,
            v_max,
            n_traj: rows.len(),
            rows,
        })
    }

    /// Look up a trajectory by id.
    pub fn trajectory(&self, id: u64) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    /// New dataset containing only the requested ids, preserving order.
    pub fn subset(&self, ids: &[u64]) -> Result<Dataset> {
        let keep: HashSet<u64> = ids.iter().copied().collect();
        let trajectories: Vec<Trajectory> = self
            .trajectories
            .iter()
            .filter(|t| keep.contains(&t.id))
            .cloned()
            .collect();
        Dataset::new(trajectories, self.state_dim, self.action_dim, self.meta.clone())
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    format_version: u32,
    state_dim: usize,
    action_dim: usize,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    id: u64,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    next_states: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    costs: Vec<f64>,
}

/// Write a dataset as a header line followed by one trajectory record per line.
pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ds.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = HeaderRecord {
        format_version: FORMAT_VERSION,
        state_dim: ds.state_dim,
        action_dim: ds.action_dim,
        meta: ds.meta.clone(),
    };
    let mut line = serde_json::to_string(&header).expect("header serializes");
    line.push('\n');
    w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    for traj in &ds.trajectories {
        let rec = TrajectoryRecord {
            id: traj.id,
            states: traj.transitions.iter().map(|t| t.state.clone()).collect(),
            actions: traj.transitions.iter().map(|t| t.action.clone()).collect(),
            next_states: traj.transitions.iter().map(|t| t.next_state.clone()).collect(),
            rewards: traj.transitions.iter().map(|t| t.reward).collect(),
            costs: traj.transitions.iter().map(|t| t.cost).collect(),
        };
        let mut line = serde_json::to_string(&rec).expect("record serializes");
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a dataset written by [`write_dataset`]. Either the whole file parses
/// and validates, or an error naming the offending line is returned; no
/// partial dataset escapes.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header_line) = lines.next().ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        msg: "missing header record".into(),
    })?;
    let header_line = header_line.map_err(|e| Error::io(path, e))?;
    let header: HeaderRecord = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        path: path.into(),
        line: 1,
        msg: format!("bad header: {e}"),
    })?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("unsupported format_version {}", header.format_version),
        });
    }

    let mut trajectories = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: format!("bad trajectory record: {e}"),
        })?;
        let k = rec.states.len();
        if rec.actions.len() != k
            || rec.next_states.len() != k
            || rec.rewards.len() != k
            || rec.costs.len() != k
        {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!("trajectory {}: parallel arrays have unequal lengths", rec.id),
            });
        }
        let transitions = rec
            .states
            .into_iter()
            .zip(rec.actions)
            .zip(rec.next_states)
            .zip(rec.rewards.into_iter().zip(rec.costs))
            .map(|(((state, action), next_state), (reward, cost))| Transition {
                state,
                action,
                next_state,
                reward,
                cost,
            })
            .collect();
        trajectories.push(Trajectory { id: rec.id, transitions });
    }

    Dataset::new(trajectories, header.state_dim, header.action_dim, header.meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(id: u64, rewards: &[f64], costs: &[f64]) -> Trajectory {
        assert_eq!(rewards.len(), costs.len());
        let transitions = rewards
            .iter()
            .zip(costs)
            .map(|(&reward, &cost)| Transition {
                state: vec![0.0, 0.0],
                action: vec![0.0],
                next_state: vec![0.0, 0.0],
                reward,
                cost,
            })
            .collect();
        Trajectory { id, transitions }
    }

    fn small_dataset(trajs: Vec<Trajectory>) -> Dataset {
        Dataset::new(trajs, 2, 1, BTreeMap::new()).unwrap()
    }

    #[test]
    fn total_reward_sums() {
        assert_eq!(traj(0, &[1.0, 2.0, 3.0], &[0.0; 3]).total_reward(), 6.0);
        assert_eq!(traj(0, &[0.0, 0.0, 0.0], &[0.0; 3]).total_reward(), 0.0);
        assert_eq!(traj(0, &[0.5, -0.25, 1.75], &[0.0; 3]).total_reward(), 2.0);
    }

    #[test]
    fn total_cost_sums() {
        assert_eq!(traj(0, &[0.0; 3], &[0.0, 0.0, 5.0]).total_cost(), 5.0);
        assert_eq!(traj(0, &[0.0; 3], &[0.0, 0.0, 0.0]).total_cost(), 0.0);
        assert_eq!(traj(0, &[0.0; 4], &[1.0, 1.0, 1.0, 0.5]).total_cost(), 3.5);
    }

    #[test]
    fn stats_singleton_and_minmax() {
        let ds = small_dataset(vec![traj(0, &[1.0, 2.0, 3.0], &[0.0; 3])]);
        let st = ds.stats().unwrap();
        assert_eq!(st.v_min, 6.0);
        assert_eq!(st.v_max, 6.0);
        assert_eq!(st.n_traj, 1);

        let ds = small_dataset(vec![
            traj(0, &[2.0], &[0.0]),
            traj(1, &[8.0], &[0.0]),
            traj(2, &[5.0], &[0.0]),
        ]);
        let st = ds.stats().unwrap();
        assert_eq!(st.v_min, 2.0);
        assert_eq!(st.v_max, 8.0);
        assert_eq!(st.n_traj, 3);
    }

    #[test]
    fn stats_match_scan_oracle_on_random_data() {
        use rand::Rng;
        let mut rng = crate::seeding::rng_for(11, 0);
        let trajs: Vec<Trajectory> = (0..100)
            .map(|id| {
                let k = rng.gen_range(1..9);
                let rewards: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let costs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..3.0)).collect();
                traj(id, &rewards, &costs)
            })
            .collect();
        let ds = small_dataset(trajs);
        let st = ds.stats().unwrap();

        // Independent scan.
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for t in &ds.trajectories {
            let mut v = 0.0;
            for tr in &t.transitions {
                v += tr.reward;
            }
            v_min = v_min.min(v);
            v_max = v_max.max(v);
        }
        assert_eq!(st.v_min, v_min);
        assert_eq!(st.v_max, v_max);
        assert_eq!(st.rows.len(), 100);
        for row in &st.rows {
            assert!(st.v_min <= row.total_reward && row.total_reward <= st.v_max);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let err = Dataset::new(Vec::new(), 2, 1, BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("empty dataset"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Dataset::new(
            vec![traj(3, &[0.0], &[0.0]), traj(3, &[1.0], &[0.0])],
            2,
            1,
            BTreeMap::new(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn dimension_mismatch_names_trajectory() {
        let mut bad = traj(7, &[1.0], &[0.0]);
        bad.transitions[0].action = vec![0.0, 0.0];
        let err = Dataset::new(vec![bad], 2, 1, BTreeMap::new()).unwrap_err();
        match err {
            Error::Dimension { traj_id, .. } => assert_eq!(traj_id, 7),
            other => panic!("expected dimension error, got {other}"),
        }
    }

    #[test]
    fn roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let mut meta = BTreeMap::new();
        meta.insert("env".into(), "unit-test".into());
        let ds = Dataset::new(
            vec![
                traj(0, &[0.1, -0.25, 1.0 / 3.0], &[0.0, 1.0, 0.5]),
                traj(1, &[f64::MIN_POSITIVE, 1e300], &[0.0, 0.125]),
            ],
            2,
            1,
            meta,
        )
        .unwrap();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
        // Bit-exact numerics.
        for (a, b) in ds.trajectories.iter().zip(&back.trajectories) {
            for (x, y) in a.transitions.iter().zip(&b.transitions) {
                assert_eq!(x.reward.to_bits(), y.reward.to_bits());
                assert_eq!(x.cost.to_bits(), y.cost.to_bits());
            }
        }
    }

    #[test]
    fn missing_field_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"format_version\":1,\"state_dim\":2,\"action_dim\":1,\"meta\":{}}\n\
             {\"id\":0,\"states\":[[0,0]],\"actions\":[[0]],\"next_states\":[[0,0]],\"rewards\":[1.0]}\n",
        )
        .unwrap();
        let err = read_dataset(&path).unwrap_err();
        match err {
            Error::Parse { line, ref msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("costs"), "msg was {msg}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn truncated_file_yields_error_not_partial_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.jsonl");
        let full = "{\"format_version\":1,\"state_dim\":2,\"action_dim\":1,\"meta\":{}}\n\
                    {\"id\":0,\"states\":[[0,0]],\"actions\":[[0]],\"next_states\":[[0,0]],\"rewards\":[1.0],\"costs\":[0.0]}\n\
                    {\"id\":1,\"states\":[[0,0]],\"actions\":[[0]],\"next_st";
        std::fs::write(&path, full).unwrap();
        let err = read_dataset(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    proptest! {
        // Returns and costs are additive over any contiguous split.
        #[test]
        fn additive_over_splits(
            rewards in proptest::collection::vec(-100.0f64..100.0, 1..20),
            split_frac in 0.0f64..1.0,
        ) {
            let costs: Vec<f64> = rewards.iter().map(|r| r.abs()).collect();
            let t = traj(0, &rewards, &costs);
            let j = ((rewards.len() as f64) * split_frac) as usize;
            let (head, tail) = t.transitions.split_at(j.min(rewards.len()));
            let head_r: f64 = head.iter().map(|x| x.reward).sum();
            let tail_r: f64 = tail.iter().map(|x| x.reward).sum();
            prop_assert!((t.total_reward() - (head_r + tail_r)).abs() < 1e-9);
            let head_c: f64 = head.iter().map(|x| x.cost).sum();
            let tail_c: f64 = tail.iter().map(|x| x.cost).sum();
            prop_assert!((t.total_cost() - (head_c + tail_c)).abs() < 1e-9);
        }

        // Serialization round-trip preserves every field exactly.
        #[test]
        fn roundtrip_random(
            data in proptest::collection::vec(
                (proptest::collection::vec(-1.0e6f64..1.0e6, 1..6),
                 proptest::collection::vec(0.0f64..1.0e3, 1..6)),
                1..5)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("prop.jsonl");
            let trajs: Vec<Trajectory> = data
                .iter()
                .enumerate()
                .map(|(id, (rs, cs))| {
                    let k = rs.len().min(cs.len());
                    traj(id as u64, &rs[..k], &cs[..k])
                })
                .collect();
            let ds = small_dataset(trajs);
            write_dataset(&ds, &path).unwrap();
            let back = read_dataset(&path).unwrap();
            prop_assert_eq!(ds, back);
        }
    }
}
