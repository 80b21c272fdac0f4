//! Encoder training: mini-batch assembly, weighted prior combination and the
//! two-phase velocity-scale curriculum.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::{frames_to_tensor, Encoder, POSITION_DIM};
use crate::envs::{Dataset, Task};
use crate::error::{Error, Result};
use crate::priors::{
    conservation_loss, controlability_loss, inertia_losses, slowness_loss, variation_loss, Loss, LossReport,
    PriorBatch, PriorGrad,
};
use crate::tensor::{Adam, AdamConfig, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub variation: f32,
    pub slowness: f32,
    pub inertia: f32,
    pub inertia_abs: f32,
    pub conservation: f32,
    /// Applied to every constrained action dimension.
    pub controlability: f32,
}

impl LossWeights {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Pendulum | Task::CartPole => LossWeights {
                variation: 1.0,
                slowness: 1.0,
                inertia: 0.1,
                inertia_abs: 0.1,
                conservation: 0.2,
                controlability: 0.0,
            },
            Task::BallInCup => LossWeights {
                variation: 1.0,
                slowness: 1.0,
                inertia: 0.001,
                inertia_abs: 0.02,
                conservation: 0.005,
                controlability: 0.5,
            },
        }
    }

    pub fn zero() -> Self {
        LossWeights {
            variation: 0.0,
            slowness: 0.0,
            inertia: 0.0,
            inertia_abs: 0.0,
            conservation: 0.0,
            controlability: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Curriculum {
    pub alpha_max: f32,
    pub phase1_epochs: usize,
    pub ramp_epochs: usize,
    pub phase2_epochs: usize,
    /// Smoothing factor of the exponential moving average of epoch loss.
    pub ema: f32,
    /// Epochs over which the smoothed loss must improve.
    pub window: usize,
    /// Minimum relative improvement over `window` epochs to keep going.
    pub min_improvement: f32,
}

impl Default for Curriculum {
    fn default() -> Self {
        Curriculum {
            alpha_max: 10.0,
            phase1_epochs: 100,
            ramp_epochs: 50,
            phase2_epochs: 100,
            ema: 0.9,
            window: 10,
            min_improvement: 0.005,
        }
    }
}

impl Curriculum {
    /// Velocity scale after `done` of `total` ramp epochs.
    pub fn ramp_alpha(&self, done: usize, total: usize) -> f32 {
        if total == 0 {
            return self.alpha_max;
        }
        self.alpha_max * done.min(total) as f32 / total as f32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Positions,
    Ramp,
    Velocities,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Positions => "phase1",
            Phase::Ramp => "ramp",
            Phase::Velocities => "phase2",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub sequences: usize,
    pub steps: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub curriculum: Curriculum,
    pub noise_sigma: f32,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn for_task(task: Task) -> Self {
        TrainConfig {
            sequences: 32,
            steps: 10,
            seed: 0,
            adam: AdamConfig::default(),
            weights: LossWeights::for_task(task),
            curriculum: Curriculum::default(),
            noise_sigma: 1e-6,
            checkpoint_every: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequences < 2 {
            return Err(Error::InvalidArgument("batch needs at least two sequences".into()));
        }
        if self.steps < 3 {
            return Err(Error::InvalidArgument("batch sequences need at least three steps".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.adam.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("noise sigma and learning rate must be non-negative and positive".into()));
        }
        Ok(())
    }
}

/// One mini-batch: trajectory indices and the shared window offset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub trajectories: Vec<usize>,
    pub offset: usize,
}

/// Partitions a shuffled trajectory order into `floor(n / sequences)`
/// batches, each with one window offset shared by all its sequences.
pub fn make_batches(dataset: &Dataset, config: &TrainConfig, epoch_seed: u64) -> Result<Vec<BatchPlan>> {
    let frames = dataset.meta.traj_len + 1;
    if frames < config.steps {
        return Err(Error::InvalidArgument(format!(
            "trajectories have {frames} frames, batches need {}",
            config.steps
        )));
    }
    if dataset.len() < config.sequences {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} trajectories, one batch needs {}",
            dataset.len(),
            config.sequences
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    Ok(order
        .chunks_exact(config.sequences)
        .map(|chunk| BatchPlan {
            trajectories: chunk.to_vec(),
            offset: rng.random_range(0..=frames - config.steps),
        })
        .collect())
}

/// Frames `[B·T, h, w, 3]` and the `[B][T-1][action_dim]` actions inside
/// the windows of a batch.
pub fn assemble(dataset: &Dataset, plan: &BatchPlan, steps: usize) -> Result<(Tensor, Vec<f32>)> {
    let mut frames = Vec::with_capacity(plan.trajectories.len() * steps);
    let mut actions = Vec::with_capacity(plan.trajectories.len() * (steps - 1) * dataset.meta.action_dim);
    for &tr in &plan.trajectories {
        for t in plan.offset..plan.offset + steps {
            frames.push(dataset.frame(tr, t));
            if t + 1 < plan.offset + steps {
                actions.extend_from_slice(dataset.action(tr, t));
            }
        }
    }
    Ok((frames_to_tensor(&frames, dataset.meta.height, dataset.meta.width)?, actions))
}

/// Every prior evaluated on one batch.
#[derive(Clone, Debug)]
pub struct PriorTerms {
    pub variation: Loss,
    pub slowness: Loss,
    pub inertia: Loss,
    pub inertia_abs: Loss,
    pub conservation: Loss,
    pub controlability: Vec<Loss>,
}

impl PriorTerms {
    pub fn evaluate(batch: &PriorBatch) -> Result<Self> {
        let (inertia, inertia_abs) = inertia_losses(batch)?;
        let dims = batch.action_dim.min(batch.dim);
        Ok(PriorTerms {
            variation: variation_loss(batch)?,
            slowness: slowness_loss(batch)?,
            inertia,
            inertia_abs,
            conservation: conservation_loss(batch)?,
            controlability: (0..dims)
                .map(|i| controlability_loss(batch, i))
                .collect::<Result<_>>()?,
        })
    }

    /// `(label, weight, loss)` for every term in report order.
    pub fn weighted<'a>(&'a self, w: &LossWeights) -> Vec<(String, f32, &'a Loss)> {
        let mut out = vec![
            ("variation".to_string(), w.variation, &self.variation),
            ("slowness".to_string(), w.slowness, &self.slowness),
            ("inertia".to_string(), w.inertia, &self.inertia),
            ("inertia_abs".to_string(), w.inertia_abs, &self.inertia_abs),
            ("conservation".to_string(), w.conservation, &self.conservation),
        ];
        for (i, l) in self.controlability.iter().enumerate() {
            out.push((format!("controlability{i}"), w.controlability, l));
        }
        out
    }

    pub fn report(&self, weights: &LossWeights) -> LossReport {
        let mut r = LossReport {
            variation: self.variation.value,
            slowness: self.slowness.value,
            inertia: self.inertia.value,
            inertia_abs: self.inertia_abs.value,
            conservation: self.conservation.value,
            controlability: self.controlability.iter().map(|l| l.value).collect(),
            total: 0.0,
        };
        r.total = combine(&r, weights);
        r
    }
}

/// Weighted sum of the loss components; controlability is summed over
/// action dimensions. Non-finite components make the total non-finite.
pub fn combine(report: &LossReport, w: &LossWeights) -> f32 {
    w.variation * report.variation
        + w.slowness * report.slowness
        + w.inertia * report.inertia
        + w.inertia_abs * report.inertia_abs
        + w.conservation * report.conservation
        + w.controlability * report.controlability.iter().sum::<f32>()
}

/// Encodes a batch (traced), optionally perturbs positions, and builds the
/// prior inputs.
fn forward_batch<R: Rng + ?Sized>(
    encoder: &Encoder,
    dataset: &Dataset,
    plan: &BatchPlan,
    config: &TrainConfig,
    alpha: f32,
    noise: Option<(&Normal<f32>, &mut R)>,
) -> Result<(PriorBatch, crate::tensor::Trace)> {
    let (frames, actions) = assemble(dataset, plan, config.steps)?;
    let (positions, trace) = encoder.encode_traced(&frames)?;
    let mut positions = positions.into_data();
    if let Some((dist, rng)) = noise {
        for p in &mut positions {
            *p += dist.sample(rng);
        }
    }
    let batch = PriorBatch::new(
        positions,
        plan.trajectories.len(),
        config.steps,
        POSITION_DIM,
        alpha,
        actions,
        dataset.meta.action_dim,
    )?;
    Ok((batch, trace))
}

fn backprop_positions(encoder: &mut Encoder, trace: &crate::tensor::Trace, grad: Vec<f32>) -> Result<()> {
    let n = grad.len() / POSITION_DIM;
    encoder.backward(trace, &Tensor::new(vec![n, POSITION_DIM], grad)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub alpha: f32,
    pub report: LossReport,
    /// False when the batch was skipped for a non-finite loss or gradient.
    pub applied: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub alpha: f32,
    /// Mean total loss over applied batches.
    pub mean_total: f32,
    pub smoothed_total: f32,
    pub skipped: usize,
}

pub struct TrainOutcome {
    pub encoder: Encoder,
    pub alpha: f32,
    pub adam: Adam,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Set when training stopped on consecutive non-finite batches; the
    /// encoder then holds the last finite parameters.
    pub diverged: bool,
    pub checkpoints: Vec<PathBuf>,
}

/// Smoothed-loss plateau detector.
#[derive(Clone, Debug)]
pub struct Convergence {
    ema: f32,
    window: usize,
    min_improvement: f32,
    history: Vec<f32>,
}

impl Convergence {
    pub fn new(c: &Curriculum) -> Self {
        Convergence {
            ema: c.ema,
            window: c.window,
            min_improvement: c.min_improvement,
            history: Vec::new(),
        }
    }

    /// Records one epoch's loss; returns the smoothed value and whether the
    /// relative improvement over the last `window` epochs fell below the
    /// threshold.
    pub fn update(&mut self, loss: f32) -> (f32, bool) {
        let s = match self.history.last() {
            Some(&prev) => self.ema * prev + (1.0 - self.ema) * loss,
            None => loss,
        };
        self.history.push(s);
        let n = self.history.len();
        if self.window == 0 || n <= self.window {
            return (s, false);
        }
        let old = self.history[n - 1 - self.window];
        let rel = (old - s) / old.abs().max(1e-12);
        (s, rel < self.min_improvement)
    }
}

/// Consecutive non-finite batches that abort training.
pub const DIVERGENCE_STREAK: usize = 3;

struct Sink {
    dir: Option<PathBuf>,
    metrics: Option<BufWriter<File>>,
    written: Vec<PathBuf>,
}

impl Sink {
    fn new(dir: Option<&Path>) -> Result<Self> {
        let metrics = match dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                let mut f = BufWriter::new(File::create(d.join("metrics.csv"))?);
                writeln!(f, "{}", LossReport::CSV_HEADER)?;
                Some(f)
            }
            None => None,
        };
        Ok(Sink {
            dir: dir.map(Path::to_path_buf),
            metrics,
            written: Vec::new(),
        })
    }

    fn record(&mut self, r: &StepRecord) -> Result<()> {
        if let Some(f) = &mut self.metrics {
            writeln!(f, "{}", r.report.csv_row(r.step, r.alpha))?;
        }
        Ok(())
    }

    fn checkpoint(&mut self, name: &str, encoder: &Encoder, alpha: f32, adam: &Adam) -> Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(format!("{name}.pve"));
            encoder.to_checkpoint(alpha, Some(adam)).save(&path)?;
            debug!("wrote {}", path.display());
            self.written.push(path);
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(f) = &mut self.metrics {
            f.flush()?;
        }
        Ok(())
    }
}

/// Runs the curriculum: alpha = 0 until convergence, a linear ramp to
/// `alpha_max`, then training at `alpha_max` until convergence. Writes
/// `metrics.csv` and checkpoints into `out_dir` when given.
pub fn train(dataset: &Dataset, config: &TrainConfig, encoder: Encoder, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let m = &dataset.meta;
    if encoder.height() != m.height || encoder.width() != m.width || m.channels != crate::envs::CHANNELS {
        return Err(Error::shape(
            "encoder input vs dataset frames",
            &[encoder.height(), encoder.width(), crate::envs::CHANNELS],
            &[m.height, m.width, m.channels],
        ));
    }
    // Validates dataset size and window length up front.
    make_batches(dataset, config, config.seed)?;

    let mut sink = Sink::new(out_dir)?;
    let mut encoder = encoder;
    let mut adam = Adam::new(config.adam);
    let noise = Normal::new(0.0f32, config.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);

    let c = &config.curriculum;
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut alpha = 0.0f32;
    let mut step = 0u64;
    let mut epoch = 0usize;
    let mut streak = 0usize;
    let mut diverged = false;

    'phases: for (phase, cap) in [
        (Phase::Positions, c.phase1_epochs),
        (Phase::Ramp, c.ramp_epochs),
        (Phase::Velocities, c.phase2_epochs),
    ] {
        let mut conv = Convergence::new(c);
        for e in 0..cap {
            alpha = match phase {
                Phase::Positions => 0.0,
                Phase::Ramp => c.ramp_alpha(e + 1, cap),
                Phase::Velocities => c.alpha_max,
            };
            let plans = make_batches(dataset, config, config.seed.wrapping_add(1 + epoch as u64))?;
            let (mut sum, mut applied, mut skipped) = (0.0f64, 0usize, 0usize);
            for plan in &plans {
                let (batch, trace) =
                    forward_batch(&encoder, dataset, plan, config, alpha, Some((&noise, &mut noise_rng)))?;
                let terms = PriorTerms::evaluate(&batch)?;
                let report = terms.report(&config.weights);
                let mut ok = report.is_finite();
                if ok {
                    let mut grad = batch.zero_grad();
                    for (_, w, l) in terms.weighted(&config.weights) {
                        if w != 0.0 {
                            grad.add_scaled(&l.grad, w);
                        }
                    }
                    encoder.network_mut().zero_grad();
                    backprop_positions(&mut encoder, &trace, batch.position_gradient(&grad))?;
                    ok = adam.step(encoder.network_mut().params_mut())?;
                }
                step += 1;
                let rec = StepRecord {
                    step,
                    epoch,
                    alpha,
                    report,
                    applied: ok,
                };
                sink.record(&rec)?;
                if ok {
                    streak = 0;
                    sum += rec.report.total as f64;
                    applied += 1;
                } else {
                    warn!("step {step}: non-finite loss or gradient, batch skipped");
                    streak += 1;
                    skipped += 1;
                }
                steps.push(rec);
                if streak >= DIVERGENCE_STREAK {
                    warn!("{DIVERGENCE_STREAK} consecutive non-finite batches; stopping");
                    diverged = true;
                    sink.checkpoint("last_good", &encoder, alpha, &adam)?;
                    break 'phases;
                }
            }
            let mean = if applied > 0 { (sum / applied as f64) as f32 } else { f32::NAN };
            let (smoothed, converged) = if mean.is_finite() {
                conv.update(mean)
            } else {
                (f32::NAN, false)
            };
            info!(
                "epoch {epoch} {} alpha {alpha:.3} loss {mean:.5} smoothed {smoothed:.5}",
                phase.name()
            );
            epochs.push(EpochRecord {
                epoch,
                phase,
                alpha,
                mean_total: mean,
                smoothed_total: smoothed,
                skipped,
            });
            epoch += 1;
            if config.checkpoint_every > 0 && epoch.is_multiple_of(config.checkpoint_every) {
                sink.checkpoint(&format!("epoch{epoch:04}"), &encoder, alpha, &adam)?;
            }
            if phase != Phase::Ramp && converged {
                info!("{} converged after {} epochs", phase.name(), e + 1);
                break;
            }
        }
        sink.checkpoint(phase.name(), &encoder, alpha, &adam)?;
    }
    if !diverged {
        sink.checkpoint("final", &encoder, alpha, &adam)?;
    }
    sink.finish()?;
    Ok(TrainOutcome {
        encoder,
        alpha,
        adam,
        steps,
        epochs,
        diverged,
        checkpoints: sink.written,
    })
}

/// Norm of the encoder-weight gradient of `w_k · L_k` for each prior on one
/// batch, evaluated without position noise.
pub fn gradient_magnitude_report(
    dataset: &Dataset,
    encoder: &Encoder,
    alpha: f32,
    config: &TrainConfig,
) -> Result<Vec<(String, f32)>> {
    let plan = make_batches(dataset, config, config.seed)?.swap_remove(0);
    let mut enc = encoder.clone();
    let (batch, trace) = forward_batch::<ChaCha8Rng>(&enc, dataset, &plan, config, alpha, None)?;
    let terms = PriorTerms::evaluate(&batch)?;
    let mut out = Vec::new();
    for (name, w, loss) in terms.weighted(&config.weights) {
        let mut grad: PriorGrad = batch.zero_grad();
        grad.add_scaled(&loss.grad, w);
        enc.network_mut().zero_grad();
        backprop_positions(&mut enc, &trace, batch.position_gradient(&grad))?;
        let norm = enc.network().flat_grad().iter().map(|g| (*g as f64).powi(2)).sum::<f64>().sqrt();
        out.push((name, norm as f32));
    }
    Ok(out)
}
