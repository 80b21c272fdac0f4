//! Neural fitted Q-iteration on encoded states, with learning-curve runs
//! comparing a trained encoder against freshly initialized ones.

use std::io::Write;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{frames_to_tensor, Encoder, POSITION_DIM};
use crate::envs::{EnvState, Environment, Task};
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, LayerSpec, Network, Tensor};

/// Length of the combined position/velocity state.
pub const STATE_DIM: usize = 2 * POSITION_DIM;

/// Q-network shape: sigmoid hidden layers over `[state; one-hot action]`,
/// linear scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetSpec {
    pub hidden: Vec<usize>,
}

impl Default for QNetSpec {
    fn default() -> Self {
        QNetSpec { hidden: vec![250, 250] }
    }
}

impl QNetSpec {
    pub fn layers(&self, n_actions: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut f_in = STATE_DIM + n_actions;
        for &h in &self.hidden {
            specs.push(LayerSpec::dense(f_in, h));
            specs.push(LayerSpec::Sigmoid);
            f_in = h;
        }
        specs.push(LayerSpec::dense(f_in, 1));
        specs
    }
}

/// Discrete actions: `{-max, 0, +max}` per dimension, as a full grid.
pub fn action_set(env: &Environment) -> Vec<Vec<f64>> {
    let lim = env.action_limit();
    let levels = [-lim, 0.0, lim];
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..env.action_dim() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                levels.iter().map(move |&l| {
                    let mut a = prefix.clone();
                    a.push(l);
                    a
                })
            })
            .collect();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RLConfig {
    pub qnet: QNetSpec,
    pub action_repeat: usize,
    pub episodes_per_epoch: usize,
    pub passes_per_epoch: usize,
    /// Environment steps per episode.
    pub episode_steps: usize,
    pub epsilon_start: f32,
    pub epsilon_end: f32,
    /// Epochs over which epsilon decays linearly from start to end.
    pub epsilon_decay_epochs: usize,
    /// Adam steps per fitted pass, each on a uniform replay minibatch.
    pub fit_steps: usize,
    pub fit_batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl RLConfig {
    pub fn for_task(task: Task) -> Self {
        RLConfig {
            qnet: QNetSpec::default(),
            action_repeat: if task == Task::BallInCup { 6 } else { 4 },
            episodes_per_epoch: 30,
            passes_per_epoch: 2,
            episode_steps: 200,
            epsilon_start: 0.3,
            epsilon_end: 0.05,
            epsilon_decay_epochs: 30,
            fit_steps: 30,
            fit_batch: 128,
            adam: AdamConfig::default().with_learning_rate(1e-3),
            seed: 0,
        }
    }

    /// Decisions per episode; also the scale of Q-values (see [`QNet`]).
    pub fn decisions(&self) -> usize {
        self.episode_steps.div_ceil(self.action_repeat.max(1))
    }

    pub fn epsilon(&self, epoch: usize) -> f32 {
        if self.epsilon_decay_epochs == 0 || epoch >= self.epsilon_decay_epochs {
            return self.epsilon_end;
        }
        let f = epoch as f32 / self.epsilon_decay_epochs as f32;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }

    fn validate(&self) -> Result<()> {
        if self.action_repeat == 0 || self.episode_steps == 0 || self.fit_batch == 0 {
            return Err(Error::InvalidArgument(
                "action repeat, episode steps and fit batch must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Q-function over a discrete action set. The network predicts values
/// divided by `scale` so targets stay within [-1, 0]; inputs are
/// standardized with statistics frozen from the first batch of data.
#[derive(Clone, Debug)]
pub struct QNet {
    pub network: Network,
    pub n_actions: usize,
    pub scale: f32,
    input_mean: [f32; STATE_DIM],
    input_std: [f32; STATE_DIM],
    normalized: bool,
}

impl QNet {
    pub fn new<R: Rng + ?Sized>(spec: &QNetSpec, n_actions: usize, scale: f32, rng: &mut R) -> Result<Self> {
        Ok(QNet {
            network: Network::new(&spec.layers(n_actions), rng)?,
            n_actions,
            scale,
            input_mean: [0.0; STATE_DIM],
            input_std: [1.0; STATE_DIM],
            normalized: false,
        })
    }

    /// Freezes input standardization from `states` (row-major). No-op after
    /// the first call.
    pub fn fit_normalization(&mut self, states: &[f32]) {
        if self.normalized || states.len() < 2 * STATE_DIM {
            return;
        }
        let n = (states.len() / STATE_DIM) as f64;
        for k in 0..STATE_DIM {
            let col = states.iter().skip(k).step_by(STATE_DIM).map(|&v| v as f64);
            let mean = col.clone().sum::<f64>() / n;
            let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            self.input_mean[k] = mean as f32;
            self.input_std[k] = var.sqrt().max(1e-6) as f32;
        }
        self.normalized = true;
    }

    fn inputs(&self, states: &[f32], actions: &[usize]) -> Tensor {
        let width = STATE_DIM + self.n_actions;
        let mut x = vec![0.0f32; actions.len() * width];
        for (r, (s, &a)) in states.chunks_exact(STATE_DIM).zip(actions).enumerate() {
            let row = &mut x[r * width..(r + 1) * width];
            for k in 0..STATE_DIM {
                row[k] = (s[k] - self.input_mean[k]) / self.input_std[k];
            }
            row[STATE_DIM + a] = 1.0;
        }
        Tensor::new(vec![actions.len(), width], x).expect("sized above")
    }

    /// `Q(s, a)` for every state row and every action, `[n][n_actions]`.
    pub fn q_values(&self, states: &[f32]) -> Result<Vec<f32>> {
        let n = states.len() / STATE_DIM;
        let rep: Vec<f32> = states
            .chunks_exact(STATE_DIM)
            .flat_map(|s| std::iter::repeat_n(s, self.n_actions).flatten().copied())
            .collect();
        let acts: Vec<usize> = (0..n).flat_map(|_| 0..self.n_actions).collect();
        let out = self.network.forward(&self.inputs(&rep, &acts))?;
        Ok(out.data().iter().map(|v| v * self.scale).collect())
    }
}

/// Index of the largest value, ties broken uniformly at random.
pub fn greedy_action<R: Rng + ?Sized>(q: &[f32], rng: &mut R) -> usize {
    let best = q.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let ties: Vec<usize> = (0..q.len()).filter(|&i| q[i] == best).collect();
    if ties.is_empty() {
        return rng.random_range(0..q.len());
    }
    ties[rng.random_range(0..ties.len())]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: [f32; STATE_DIM],
    pub action: usize,
    /// Sum of shifted (non-positive) rewards over the repeated steps.
    pub reward: f32,
    pub next: [f32; STATE_DIM],
    pub terminal: bool,
}

/// Full-history replay memory.
#[derive(Clone, Debug, Default)]
pub struct Replay {
    pub transitions: Vec<Transition>,
}

/// Fitted-Q target: reward, plus the best next value unless terminal,
/// clipped to be non-positive.
pub fn q_target(t: &Transition, next_q: &[f32]) -> f32 {
    let boot = if t.terminal {
        0.0
    } else {
        next_q.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    };
    (t.reward + boot).min(0.0)
}

/// One NFQ learner: Q-network, optimizer, replay and RNG.
pub struct Learner {
    pub qnet: QNet,
    pub adam: Adam,
    pub replay: Replay,
    pub rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(env: &Environment, config: &RLConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qnet = QNet::new(&config.qnet, action_set(env).len(), config.decisions() as f32, &mut rng)?;
        Ok(Learner {
            qnet,
            adam: Adam::new(config.adam),
            replay: Replay::default(),
            rng,
        })
    }
}

/// Encodes frames at decision points: combined states from the current
/// frame and the one a single environment step earlier.
fn encode_states(encoder: &Encoder, alpha: f32, prev: &[Vec<u8>], cur: &[Vec<u8>]) -> Result<Vec<[f32; STATE_DIM]>> {
    let frames: Vec<&[u8]> = prev.iter().chain(cur).map(Vec::as_slice).collect();
    let p = encoder.encode(&frames_to_tensor(&frames, encoder.height(), encoder.width())?)?;
    let n = cur.len();
    let d = p.data();
    Ok((0..n)
        .map(|i| {
            let mut s = [0.0f32; STATE_DIM];
            for k in 0..POSITION_DIM {
                let (a, b) = (d[i * POSITION_DIM + k], d[(n + i) * POSITION_DIM + k]);
                s[k] = b;
                s[POSITION_DIM + k] = alpha * (b - a);
            }
            s
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochResult {
    /// Undiscounted shifted return of each episode, one per episode.
    pub returns: Vec<f32>,
    /// Mean squared regression error (in value units) of each fitted pass.
    pub pass_losses: Vec<f32>,
}

/// Collects `episodes_per_epoch` epsilon-greedy episodes (run in lockstep
/// so frames are encoded in batches), appends them to the replay, then runs
/// the fitted-Q passes.
pub fn nfq_epoch(
    env: &Environment,
    encoder: &Encoder,
    alpha: f32,
    learner: &mut Learner,
    config: &RLConfig,
    epoch: usize,
) -> Result<EpochResult> {
    config.validate()?;
    if env.config.resolution != encoder.width() || encoder.width() != encoder.height() {
        return Err(Error::shape(
            "environment frames vs encoder input",
            &[encoder.height(), encoder.width()],
            &[env.config.resolution, env.config.resolution],
        ));
    }
    let actions = action_set(env);
    let eps = config.epsilon(epoch);
    let n = config.episodes_per_epoch;
    let shift = env.reward_max();
    let render = |s: &EnvState| env.render(s).to_bytes();

    let mut states: Vec<EnvState> = (0..n).map(|_| env.sample_start(&mut learner.rng)).collect();
    // no earlier frame at the start: zero velocity
    let mut prev: Vec<Vec<u8>> = states.iter().map(render).collect();
    let mut cur = prev.clone();
    let mut enc = encode_states(encoder, alpha, &prev, &cur)?;
    let mut returns = vec![0.0f32; n];
    let mut new_transitions = Vec::new();
    let decisions = config.decisions();
    for d in 0..decisions {
        let q = learner.qnet.q_values(&enc.concat())?;
        let mut chosen = Vec::with_capacity(n);
        for i in 0..n {
            let a = if learner.rng.random::<f32>() < eps {
                learner.rng.random_range(0..actions.len())
            } else {
                greedy_action(&q[i * actions.len()..(i + 1) * actions.len()], &mut learner.rng)
            };
            chosen.push(a);
        }
        let mut rewards = vec![0.0f32; n];
        let mut reset = vec![false; n];
        let repeat = config.action_repeat.min(config.episode_steps - d * config.action_repeat);
        for i in 0..n {
            for k in 0..repeat {
                let (s, was_reset) = env.step_or_reset(&states[i], &actions[chosen[i]], &mut learner.rng);
                reset[i] |= was_reset;
                rewards[i] += (env.reward(&s) - shift) as f32;
                if k + 2 == repeat {
                    prev[i] = render(&s);
                }
                states[i] = s;
            }
            if repeat == 1 {
                prev[i] = std::mem::take(&mut cur[i]);
            }
            cur[i] = render(&states[i]);
        }
        let next = encode_states(encoder, alpha, &prev, &cur)?;
        let last = d + 1 == decisions;
        for i in 0..n {
            returns[i] += rewards[i];
            new_transitions.push(Transition {
                state: enc[i],
                action: chosen[i],
                reward: rewards[i],
                next: next[i],
                terminal: last || reset[i],
            });
        }
        enc = next;
    }
    if !learner.qnet.normalized {
        let s: Vec<f32> = new_transitions.iter().flat_map(|t| t.state).collect();
        learner.qnet.fit_normalization(&s);
    }
    learner.replay.transitions.extend(new_transitions);
    let mut pass_losses = Vec::with_capacity(config.passes_per_epoch);
    for _ in 0..config.passes_per_epoch {
        pass_losses.push(fitted_q_pass(learner, config)?);
    }
    debug!(
        "epoch {epoch}: mean return {:.3}, replay {}, pass losses {pass_losses:?}",
        returns.iter().sum::<f32>() / n.max(1) as f32,
        learner.replay.transitions.len()
    );
    Ok(EpochResult { returns, pass_losses })
}

/// One fitted-Q iteration: targets from a frozen copy of the current
/// network, then `fit_steps` Adam steps on uniform replay minibatches.
/// Returns the mean squared error over those minibatches, in value units.
pub fn fitted_q_pass(learner: &mut Learner, config: &RLConfig) -> Result<f32> {
    let len = learner.replay.transitions.len();
    if len == 0 {
        return Err(Error::InvalidArgument("fitted-Q pass on an empty replay".into()));
    }
    let frozen = learner.qnet.clone();
    let scale = learner.qnet.scale;
    let batch = config.fit_batch.min(len);
    let mut total = 0.0f64;
    for _ in 0..config.fit_steps {
        let idx: Vec<usize> = (0..batch).map(|_| learner.rng.random_range(0..len)).collect();
        let ts: Vec<&Transition> = idx.iter().map(|&i| &learner.replay.transitions[i]).collect();
        let next: Vec<f32> = ts.iter().flat_map(|t| t.next).collect();
        let next_q = frozen.q_values(&next)?;
        let na = frozen.n_actions;
        let targets: Vec<f32> = ts
            .iter()
            .enumerate()
            .map(|(r, t)| q_target(t, &next_q[r * na..(r + 1) * na]) / scale)
            .collect();
        let states: Vec<f32> = ts.iter().flat_map(|t| t.state).collect();
        let acts: Vec<usize> = ts.iter().map(|t| t.action).collect();
        let x = learner.qnet.inputs(&states, &acts);
        let (pred, trace) = learner.qnet.network.forward_traced(&x)?;
        let mut grad = Vec::with_capacity(batch);
        for (p, y) in pred.data().iter().zip(&targets) {
            let e = p - y;
            total += (e as f64 * scale as f64).powi(2) / (batch * config.fit_steps) as f64;
            grad.push(2.0 * e / batch as f32);
        }
        learner.qnet.network.zero_grad();
        learner.qnet.network.backward_params(&trace, &Tensor::new(vec![batch, 1], grad)?)?;
        learner.adam.step(learner.qnet.network.params_mut())?;
    }
    Ok(total as f32)
}

/// Where each trial's encoder comes from.
#[derive(Clone, Copy, Debug)]
pub enum EncoderSource<'a> {
    Trained { encoder: &'a Encoder, alpha: f32 },
    /// Freshly initialized, untrained weights per trial.
    Random { resolution: usize, alpha: f32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean: f32,
    pub stderr: f32,
    pub min: f32,
    pub max: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearningCurve {
    pub epochs: Vec<EpochStats>,
    /// `[trial][epoch]` mean episode return.
    pub trials: Vec<Vec<f32>>,
    /// `[trial][epoch][pass]` fitted-Q regression errors.
    pub pass_losses: Vec<Vec<Vec<f32>>>,
}

/// Mean, standard error, min and max across trials; standard error is 0
/// for a single trial.
pub fn summarize(values: &[f32]) -> (f32, f32, f32, f32) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let stderr = if values.len() > 1 {
        let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f32::INFINITY, f32::min);
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    (mean as f32, stderr as f32, min, max)
}

/// Runs `n_trials` independent NFQ learners for `epochs` epochs each and
/// summarizes the per-epoch mean episode return across trials.
pub fn run_learning_curve(
    env: &Environment,
    source: EncoderSource<'_>,
    config: &RLConfig,
    n_trials: usize,
    epochs: usize,
) -> Result<LearningCurve> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let mut trials = Vec::with_capacity(n_trials);
    let mut pass_losses = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(trial as u64);
        let (encoder, alpha) = match source {
            EncoderSource::Trained { encoder, alpha } => (encoder.clone(), alpha),
            EncoderSource::Random { resolution, alpha } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(7);
                (Encoder::new(resolution, resolution, &mut rng)?, alpha)
            }
        };
        let mut learner = Learner::new(env, config, seed)?;
        let mut curve = Vec::with_capacity(epochs);
        let mut losses = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let r = nfq_epoch(env, &encoder, alpha, &mut learner, config, epoch)?;
            curve.push(r.returns.iter().sum::<f32>() / r.returns.len().max(1) as f32);
            losses.push(r.pass_losses);
        }
        info!(
            "trial {trial}: final-epoch mean return {:.3}",
            curve.last().copied().unwrap_or(f32::NAN)
        );
        trials.push(curve);
        pass_losses.push(losses);
    }
    let stats = (0..epochs)
        .map(|e| {
            let col: Vec<f32> = trials.iter().map(|t| t[e]).collect();
            let (mean, stderr, min, max) = summarize(&col);
            EpochStats {
                epoch: e,
                mean,
                stderr,
                min,
                max,
            }
        })
        .collect();
    Ok(LearningCurve {
        epochs: stats,
        trials,
        pass_losses,
    })
}

impl LearningCurve {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "epoch,mean,stderr,min,max")?;
        for s in &self.epochs {
            writeln!(w, "{},{},{},{},{}", s.epoch, s.mean, s.stderr, s.min, s.max)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Camera, EnvConfig};

    fn tiny_env(task: Task) -> Environment {
        Environment::with_config(
            task,
            Camera::Static,
            EnvConfig {
                resolution: 16,
                ..EnvConfig::default()
            },
        )
    }

    fn tiny_config(task: Task) -> RLConfig {
        RLConfig {
            qnet: QNetSpec { hidden: vec![16, 16] },
            episodes_per_epoch: 3,
            episode_steps: 24,
            fit_steps: 5,
            fit_batch: 16,
            ..RLConfig::for_task(task)
        }
    }

    #[test]
    fn action_sets() {
        assert_eq!(action_set(&tiny_env(Task::Pendulum)), vec![vec![-2.5], vec![0.0], vec![2.5]]);
        let grid = action_set(&tiny_env(Task::BallInCup));
        assert_eq!(grid.len(), 9);
        assert!(grid.contains(&vec![-20.0, 20.0]));
    }

    #[test]
    fn greedy_picks_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(greedy_action(&[-3.0, -1.0, -2.0], &mut rng), 1);
    }

    #[test]
    fn ties_break_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 3];
        for _ in 0..30000 {
            counts[greedy_action(&[0.0; 3], &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30000.0 - 1.0 / 3.0).abs() < 0.015, "{counts:?}");
        }
    }

    #[test]
    fn zero_qnet_acts_uniformly() {
        let env = tiny_env(Task::Pendulum);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut q = QNet::new(&QNetSpec::default(), 3, 1.0, &mut rng).unwrap();
        for p in q.network.params_mut() {
            p.data_mut().fill(0.0);
        }
        let s = vec![0.3f32; STATE_DIM];
        let vals = q.q_values(&s).unwrap();
        assert_eq!(vals, vec![0.0; 3]);
        let mut counts = [0usize; 3];
        for _ in 0..6000 {
            counts[greedy_action(&vals, &mut rng)] += 1;
        }
        assert!(counts.iter().all(|&c| c > 1800), "{counts:?}");
        assert_eq!(action_set(&env).len(), 3);
    }

    #[test]
    fn targets() {
        let t = Transition {
            state: [0.0; STATE_DIM],
            action: 0,
            reward: -0.5,
            next: [0.0; STATE_DIM],
            terminal: true,
        };
        assert_eq!(q_target(&t, &[5.0, -100.0]), -0.5);
        let t = Transition { terminal: false, ..t };
        assert_eq!(q_target(&t, &[-1.0, -2.0]), -1.5);
        assert_eq!(q_target(&t, &[3.0, -2.0]), 0.0);
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(summarize(&[-2.0]), (-2.0, 0.0, -2.0, -2.0));
        let (m, se, lo, hi) = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((m, lo, hi), (2.5, 1.0, 4.0));
        // sample sd sqrt(5/3), divided by sqrt(4)
        assert!((se - ((5.0f32 / 3.0).sqrt() / 2.0)).abs() < 1e-6);
    }

    #[test]
    fn epoch_collects_and_fits() {
        let env = tiny_env(Task::Pendulum);
        let cfg = tiny_config(Task::Pendulum);
        let enc = Encoder::new(16, 16, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut learner = Learner::new(&env, &cfg, 4).unwrap();
        let r = nfq_epoch(&env, &enc, 10.0, &mut learner, &cfg, 0).unwrap();
        assert_eq!(r.returns.len(), 3);
        assert!(r.returns.iter().all(|g| (-24.0..=0.0).contains(g)));
        assert_eq!(r.pass_losses.len(), 2);
        let tr = &learner.replay.transitions;
        assert_eq!(tr.len(), 3 * cfg.decisions());
        assert_eq!(tr.iter().filter(|t| t.terminal).count(), 3);
        assert!(tr.iter().all(|t| t.reward <= 0.0 && t.reward >= -4.0));
        // first decision of each episode has zero velocity
        assert!(tr[0].state[POSITION_DIM..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn velocity_uses_previous_environment_step() {
        let env = tiny_env(Task::Pendulum);
        let enc = Encoder::new(16, 16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let s0 = EnvState::new(vec![0.4], vec![2.0]);
        let s1 = env.step(&s0, &[0.0]).unwrap();
        let (f0, f1) = (env.render(&s0).to_bytes(), env.render(&s1).to_bytes());
        let st = encode_states(&enc, 3.0, std::slice::from_ref(&f0), std::slice::from_ref(&f1)).unwrap();
        let p = enc.encode(&frames_to_tensor(&[&f0, &f1], 16, 16).unwrap()).unwrap();
        for k in 0..POSITION_DIM {
            assert_eq!(st[0][k], p.data()[5 + k]);
            assert!((st[0][5 + k] - 3.0 * (p.data()[5 + k] - p.data()[k])).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_replay_is_rejected() {
        let env = tiny_env(Task::Pendulum);
        let cfg = tiny_config(Task::Pendulum);
        let mut learner = Learner::new(&env, &cfg, 0).unwrap();
        assert!(fitted_q_pass(&mut learner, &cfg).is_err());
    }

    #[test]
    fn learning_curves_are_deterministic() {
        let env = tiny_env(Task::BallInCup);
        let cfg = tiny_config(Task::BallInCup);
        let src = EncoderSource::Random {
            resolution: 16,
            alpha: 10.0,
        };
        let a = run_learning_curve(&env, src, &cfg, 2, 2).unwrap();
        let b = run_learning_curve(&env, src, &cfg, 2, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epochs.len(), 2);
        assert!(a.epochs.iter().all(|s| s.max <= 0.0 && s.min <= s.mean && s.mean <= s.max));
        let one = run_learning_curve(&env, src, &cfg, 1, 1).unwrap();
        assert_eq!(one.epochs[0].stderr, 0.0);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
