//! Trajectory datasets and the `PVED` file format.
//!
//! ```text
//! "PVED" task camera n_traj traj_len height width channels action_dim seed   (u64 LE)
//! n_traj × { observations[(traj_len+1)·h·w·c] u8,
//!            actions[traj_len·action_dim] f32 LE,
//!            rewards[traj_len] f32 LE }
//! optional "GTST" state_dim, then n_traj × (traj_len+1) × { q, qdot } f64 LE
//! ```
//!
//! The trailing `GTST` section carries ground-truth states for evaluation
//! probes; training never reads it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Camera, EnvState, Environment, Task, CHANNELS};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"PVED";
pub const STATE_TAG: &[u8; 4] = b"GTST";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetMeta {
    pub task: Task,
    pub camera: Camera,
    pub n_traj: usize,
    pub traj_len: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub action_dim: usize,
    pub seed: u64,
}

impl DatasetMeta {
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `traj_len + 1` frames of `height·width·channels` bytes.
    pub observations: Vec<u8>,
    /// `traj_len × action_dim`, action `t` is applied after frame `t`.
    pub actions: Vec<f32>,
    /// Reward of the state reached by action `t`.
    pub rewards: Vec<f32>,
    /// Ground truth for each frame; empty when the file had no state section.
    pub states: Vec<EnvState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn frame(&self, traj: usize, t: usize) -> &[u8] {
        let f = self.meta.frame_len();
        &self.trajectories[traj].observations[t * f..(t + 1) * f]
    }

    pub fn action(&self, traj: usize, t: usize) -> &[f32] {
        let a = self.meta.action_dim;
        &self.trajectories[traj].actions[t * a..(t + 1) * a]
    }

    pub fn has_states(&self) -> bool {
        self.trajectories.iter().all(|t| !t.states.is_empty())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let m = &self.meta;
        w.write_all(DATASET_MAGIC)?;
        for v in [
            m.task.id(),
            m.camera.id(),
            m.n_traj as u64,
            m.traj_len as u64,
            m.height as u64,
            m.width as u64,
            m.channels as u64,
            m.action_dim as u64,
            m.seed,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::new();
        for tr in &self.trajectories {
            w.write_all(&tr.observations)?;
            buf.clear();
            for v in tr.actions.iter().chain(&tr.rewards) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        if self.has_states() && !self.trajectories.is_empty() {
            w.write_all(STATE_TAG)?;
            w.write_all(&(m.task.state_dim() as u64).to_le_bytes())?;
            for tr in &self.trajectories {
                buf.clear();
                for s in &tr.states {
                    for v in s.q.iter().chain(&s.qdot) {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
                w.write_all(&buf)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("dataset does not start with PVED".into()));
        }
        let mut header = [0u64; 9];
        for h in &mut header {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *h = u64::from_le_bytes(b);
        }
        let task = Task::from_id(header[0])?;
        let meta = DatasetMeta {
            task,
            camera: Camera::from_id(header[1])?,
            n_traj: header[2] as usize,
            traj_len: header[3] as usize,
            height: header[4] as usize,
            width: header[5] as usize,
            channels: header[6] as usize,
            action_dim: header[7] as usize,
            seed: header[8],
        };
        if meta.action_dim != task.action_dim() || meta.channels != CHANNELS {
            return Err(Error::Format(format!(
                "header disagrees with task {task}: action_dim {}, channels {}",
                meta.action_dim, meta.channels
            )));
        }
        if meta.height > 4096 || meta.width > 4096 || meta.traj_len > 1 << 20 || meta.n_traj > 1 << 24 {
            return Err(Error::Format("implausible dataset header".into()));
        }
        let obs_len = (meta.traj_len + 1) * meta.frame_len();
        let mut trajectories = Vec::with_capacity(meta.n_traj);
        for _ in 0..meta.n_traj {
            let mut observations = vec![0u8; obs_len];
            r.read_exact(&mut observations)?;
            let actions = read_f32s(r, meta.traj_len * meta.action_dim)?;
            let rewards = read_f32s(r, meta.traj_len)?;
            trajectories.push(Trajectory {
                observations,
                actions,
                rewards,
                states: Vec::new(),
            });
        }
        let mut tag = [0u8; 4];
        let n = read_up_to(r, &mut tag)?;
        if n == 4 && &tag == STATE_TAG {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            let dim = u64::from_le_bytes(b) as usize;
            if dim != task.state_dim() {
                return Err(Error::Format(format!("state section dim {dim} for task {task}")));
            }
            for tr in &mut trajectories {
                let mut raw = vec![0u8; (meta.traj_len + 1) * 2 * dim * 8];
                r.read_exact(&mut raw)?;
                let vals: Vec<f64> = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                tr.states = vals
                    .chunks_exact(2 * dim)
                    .map(|c| EnvState::new(c[..dim].to_vec(), c[dim..].to_vec()))
                    .collect();
            }
        } else if n != 0 {
            return Err(Error::Format("trailing bytes after dataset payload".into()));
        }
        Ok(Dataset { meta, trajectories })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// Random-policy data collection. Each trajectory starts from a uniformly
/// sampled configuration and applies i.i.d. uniform actions. Trajectory `i`
/// draws from its own ChaCha stream, so results depend only on `seed`.
pub fn collect(env: &Environment, n_traj: usize, traj_len: usize, seed: u64) -> Result<Dataset> {
    if n_traj < 1 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    if traj_len < 2 {
        return Err(Error::InvalidArgument("traj_len must be at least 2".into()));
    }
    let res = env.config.resolution;
    let meta = DatasetMeta {
        task: env.task,
        camera: env.camera,
        n_traj,
        traj_len,
        height: res,
        width: res,
        channels: CHANNELS,
        action_dim: env.action_dim(),
        seed,
    };
    let lim = env.action_limit();
    let trajectories = (0..n_traj)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut state = env.sample_start(&mut rng);
            let mut tr = Trajectory {
                observations: Vec::with_capacity((traj_len + 1) * meta.frame_len()),
                actions: Vec::with_capacity(traj_len * meta.action_dim),
                rewards: Vec::with_capacity(traj_len),
                states: Vec::with_capacity(traj_len + 1),
            };
            tr.observations.extend(env.render(&state).to_bytes());
            tr.states.push(state.clone());
            for _ in 0..traj_len {
                let action: Vec<f64> = (0..meta.action_dim).map(|_| rng.random_range(-lim..=lim)).collect();
                let (next, _) = env.step_or_reset(&state, &action, &mut rng);
                state = next;
                tr.actions.extend(action.iter().map(|&a| a as f32));
                tr.rewards.push(env.reward(&state) as f32);
                tr.observations.extend(env.render(&state).to_bytes());
                tr.states.push(state.clone());
            }
            tr
        })
        .collect();
    Ok(Dataset { meta, trajectories })
}
