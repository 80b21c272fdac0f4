//! Evaluation of learned states: principal components of the position
//! embedding and supervised probes to ground-truth features.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{frames_to_tensor, velocities, Encoder, POSITION_DIM};
use crate::envs::{Dataset, EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, LayerSpec, Network, Tensor};

/// Learned and true state of one frame with a defined velocity (t ≥ 1).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub trajectory: usize,
    pub t: usize,
    pub position: [f32; POSITION_DIM],
    pub velocity: [f32; POSITION_DIM],
    pub reward: f32,
    /// Ground-truth features; empty when the dataset carries no states.
    pub features: Vec<f64>,
}

impl EmbeddingRow {
    pub fn combined(&self) -> [f32; 2 * POSITION_DIM] {
        let mut out = [0.0; 2 * POSITION_DIM];
        out[..POSITION_DIM].copy_from_slice(&self.position);
        out[POSITION_DIM..].copy_from_slice(&self.velocity);
        out
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub rows: Vec<EmbeddingRow>,
    pub feature_names: Vec<String>,
}

/// Frames encoded per forward pass while embedding.
const EMBED_CHUNK: usize = 256;

/// Encodes every frame of `dataset` and pairs each frame from the second
/// on with its velocity state, reward and ground-truth features.
pub fn embed(encoder: &Encoder, alpha: f32, dataset: &Dataset) -> Result<Embedding> {
    let m = &dataset.meta;
    if encoder.height() != m.height || encoder.width() != m.width {
        return Err(Error::shape(
            "encoder input vs dataset frames",
            &[encoder.height(), encoder.width()],
            &[m.height, m.width],
        ));
    }
    let env = Environment::with_config(
        m.task,
        m.camera,
        EnvConfig {
            resolution: m.width,
            ..EnvConfig::default()
        },
    );
    let frames_per = m.traj_len + 1;
    // encode all frames, several trajectories per pass
    let per_pass = (EMBED_CHUNK / frames_per).max(1);
    let mut positions = Vec::with_capacity(dataset.len() * frames_per * POSITION_DIM);
    for start in (0..dataset.len()).step_by(per_pass) {
        let end = (start + per_pass).min(dataset.len());
        let frames: Vec<&[u8]> = (start..end)
            .flat_map(|tr| (0..frames_per).map(move |t| (tr, t)))
            .map(|(tr, t)| dataset.frame(tr, t))
            .collect();
        let obs = frames_to_tensor(&frames, m.height, m.width)?;
        positions.extend_from_slice(encoder.encode(&obs)?.data());
    }
    let mut rows = Vec::with_capacity(dataset.len() * m.traj_len);
    for (tr, traj) in dataset.trajectories.iter().enumerate() {
        let p = &positions[tr * frames_per * POSITION_DIM..(tr + 1) * frames_per * POSITION_DIM];
        let v = velocities(p, POSITION_DIM, alpha);
        for t in 1..frames_per {
            let mut position = [0.0; POSITION_DIM];
            position.copy_from_slice(&p[t * POSITION_DIM..(t + 1) * POSITION_DIM]);
            let mut velocity = [0.0; POSITION_DIM];
            velocity.copy_from_slice(&v[(t - 1) * POSITION_DIM..t * POSITION_DIM]);
            rows.push(EmbeddingRow {
                trajectory: tr,
                t,
                position,
                velocity,
                reward: traj.rewards[t - 1],
                features: traj.states.get(t).map(|s| env.features(s)).unwrap_or_default(),
            });
        }
    }
    Ok(Embedding {
        rows,
        feature_names: if dataset.has_states() {
            m.task.feature_names().iter().map(|s| s.to_string()).collect()
        } else {
            Vec::new()
        },
    })
}

impl Embedding {
    pub fn positions(&self) -> Vec<f32> {
        self.rows.iter().flat_map(|r| r.position).collect()
    }

    pub fn combined(&self) -> Vec<f32> {
        self.rows.iter().flat_map(|r| r.combined()).collect()
    }

    pub fn features(&self) -> Vec<f32> {
        self.rows.iter().flat_map(|r| r.features.iter().map(|&f| f as f32)).collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut header = vec!["trajectory".to_string(), "t".to_string()];
        header.extend((0..POSITION_DIM).map(|i| format!("p{i}")));
        header.extend((0..POSITION_DIM).map(|i| format!("v{i}")));
        header.push("reward".into());
        header.extend(self.feature_names.iter().cloned());
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let mut cells = vec![r.trajectory.to_string(), r.t.to_string()];
            cells.extend(r.position.iter().chain(&r.velocity).map(|v| v.to_string()));
            cells.push(r.reward.to_string());
            cells.extend(r.features.iter().map(|v| v.to_string()));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Pca {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Unit principal directions, row `k` for the `k`-th largest variance.
    pub components: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    /// Variances divided by their sum, descending.
    pub ratios: Vec<f64>,
    /// Row-major coordinates of every sample in the component basis.
    pub projected: Vec<f64>,
}

/// Principal components of `data` (row-major, `dim` columns) from the exact
/// eigendecomposition of the sample covariance.
pub fn pca(data: &[f32], dim: usize) -> Result<Pca> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument(format!("{} values do not form rows of {dim}", data.len())));
    }
    let n = data.len() / dim;
    if n < dim + 1 {
        return Err(Error::InvalidArgument(format!("pca needs at least {} rows, got {n}", dim + 1)));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in pca input".into()));
    }
    let mut mean = vec![0.0f64; dim];
    for row in data.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for row in data.chunks_exact(dim) {
        for i in 0..dim {
            let di = row[i] as f64 - mean[i];
            for j in i..dim {
                cov[(i, j)] += di * (row[j] as f64 - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let c = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let variances: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = variances.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("embedding has zero variance".into()));
    }
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let mut projected = Vec::with_capacity(n * dim);
    for row in data.chunks_exact(dim) {
        for c in &components {
            projected.push(c.iter().zip(row).zip(&mean).map(|((c, &v), m)| c * (v as f64 - m)).sum());
        }
    }
    Ok(Pca {
        dim,
        mean,
        ratios: variances.iter().map(|v| v / total).collect(),
        variances,
        components,
        projected,
    })
}

impl Pca {
    /// Maps component coordinates back to the input space.
    pub fn reconstruct(&self, projected_row: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &z) in self.components.iter().zip(projected_row) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += z * ci;
            }
        }
        out
    }

    pub fn write_ratios_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "component,variance,ratio,cumulative")?;
        let mut cum = 0.0;
        for (k, (v, r)) in self.variances.iter().zip(&self.ratios).enumerate() {
            cum += r;
            writeln!(w, "{},{v},{r},{cum}", k + 1)?;
        }
        Ok(())
    }

    /// First two component coordinates of each row next to its reward.
    pub fn write_projection_csv<W: Write>(&self, rewards: &[f32], w: &mut W) -> Result<()> {
        writeln!(w, "x,y,reward")?;
        for (row, r) in self.projected.chunks_exact(self.dim).zip(rewards) {
            let y = if self.dim > 1 { row[1] } else { 0.0 };
            writeln!(w, "{},{y},{r}", row[0])?;
        }
        Ok(())
    }
}

/// Smallest number of leading components whose ratios reach `threshold`.
pub fn effective_dim(ratios: &[f64], threshold: f64) -> Result<usize> {
    let sum: f64 = ratios.iter().sum();
    if ratios.is_empty() || ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Degenerate(format!("invalid variance ratios {ratios:?}")));
    }
    let mut cum = 0.0;
    for (k, r) in ratios.iter().enumerate() {
        cum += r;
        if cum >= threshold - 1e-12 {
            return Ok(k + 1);
        }
    }
    Ok(ratios.len())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSpec {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            hidden: vec![256; 3],
            steps: 200,
            batch: 256,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Supervised probe data: row-major inputs and targets.
#[derive(Clone, Copy, Debug)]
pub struct ProbeData<'a> {
    pub inputs: &'a [f32],
    pub targets: &'a [f32],
}

/// Trains a ReLU regressor from inputs to standardized targets on `train`
/// and returns the per-target mean squared error on `test`, in units of the
/// training-split variance. A target whose error is not finite is reported
/// as NaN.
pub fn probe(
    train: ProbeData<'_>,
    test: ProbeData<'_>,
    in_dim: usize,
    out_dim: usize,
    spec: &ProbeSpec,
) -> Result<Vec<f32>> {
    for (name, d) in [("train", train), ("test", test)] {
        if in_dim == 0 || out_dim == 0 || d.inputs.len() % in_dim != 0 || d.targets.len() % out_dim != 0 {
            return Err(Error::InvalidArgument(format!("{name} probe data does not form rows")));
        }
        if d.inputs.len() / in_dim != d.targets.len() / out_dim || d.inputs.is_empty() {
            return Err(Error::shape(
                format!("{name} probe rows"),
                &[d.inputs.len() / in_dim],
                &[d.targets.len() / out_dim],
            ));
        }
    }
    let n = train.inputs.len() / in_dim;
    let mut mean = vec![0.0f64; out_dim];
    let mut var = vec![0.0f64; out_dim];
    for row in train.targets.chunks_exact(out_dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64 / n as f64;
        }
    }
    for row in train.targets.chunks_exact(out_dim) {
        for k in 0..out_dim {
            var[k] += (row[k] as f64 - mean[k]).powi(2) / n as f64;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| v.sqrt().max(1e-12)).collect();
    let standardize = |t: &[f32]| -> Vec<f32> {
        t.chunks_exact(out_dim)
            .flat_map(|row| (0..out_dim).map(|k| ((row[k] as f64 - mean[k]) / std[k]) as f32).collect::<Vec<_>>())
            .collect()
    };
    let train_y = standardize(train.targets);
    let test_y = standardize(test.targets);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut specs = Vec::new();
    let mut f_in = in_dim;
    for &h in &spec.hidden {
        specs.push(LayerSpec::dense(f_in, h));
        specs.push(LayerSpec::Relu);
        f_in = h;
    }
    specs.push(LayerSpec::dense(f_in, out_dim));
    let mut net = Network::new(&specs, &mut rng)?;
    let mut adam = Adam::new(AdamConfig::default().with_learning_rate(spec.learning_rate));

    let batch = spec.batch.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    for _ in 0..spec.steps {
        if cursor + batch > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let x: Vec<f32> = idx.iter().flat_map(|&i| &train.inputs[i * in_dim..(i + 1) * in_dim]).copied().collect();
        let (pred, trace) = net.forward_traced(&Tensor::new(vec![batch, in_dim], x)?)?;
        let scale = 2.0 / (batch * out_dim) as f32;
        let grad: Vec<f32> = idx
            .iter()
            .enumerate()
            .flat_map(|(r, &i)| {
                let p = &pred.data()[r * out_dim..(r + 1) * out_dim];
                let y = &train_y[i * out_dim..(i + 1) * out_dim];
                p.iter().zip(y).map(move |(p, y)| scale * (p - y)).collect::<Vec<_>>()
            })
            .collect();
        net.zero_grad();
        net.backward_params(&trace, &Tensor::new(vec![batch, out_dim], grad)?)?;
        adam.step(net.params_mut())?;
    }

    let m = test.inputs.len() / in_dim;
    let pred = net.forward(&Tensor::new(vec![m, in_dim], test.inputs.to_vec())?)?;
    let mut mse = vec![0.0f64; out_dim];
    for (p, y) in pred.data().chunks_exact(out_dim).zip(test_y.chunks_exact(out_dim)) {
        for k in 0..out_dim {
            mse[k] += ((p[k] - y[k]) as f64).powi(2) / m as f64;
        }
    }
    Ok(mse.into_iter().map(|v| if v.is_finite() { v as f32 } else { f32::NAN }).collect())
}

/// Centers every column of row-major `train`/`test` on the training mean
/// and divides each block of `block` consecutive columns by that block's
/// root-mean-square norm on the training split. A single scale per block
/// keeps the transform equivariant to rotations within the block.
pub fn standardize_blocks(train: &mut [f32], test: &mut [f32], dim: usize, block: usize) {
    let n = (train.len() / dim).max(1) as f64;
    let mut mean = vec![0.0f64; dim];
    for row in train.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64 / n;
        }
    }
    let mut scale = vec![0.0f64; dim.div_ceil(block)];
    for row in train.chunks_exact(dim) {
        for (k, &v) in row.iter().enumerate() {
            scale[k / block] += (v as f64 - mean[k]).powi(2) / n;
        }
    }
    let scale: Vec<f64> = scale.iter().map(|s| s.sqrt().max(1e-12)).collect();
    for data in [train, test] {
        for row in data.chunks_exact_mut(dim) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = ((*v as f64 - mean[k]) / scale[k / block]) as f32;
            }
        }
    }
}

/// Probe from combined learned states to ground-truth features. Position
/// and velocity blocks are standardized separately (see
/// [`standardize_blocks`]).
pub fn probe_embedding(train: &Embedding, test: &Embedding, spec: &ProbeSpec) -> Result<Vec<f32>> {
    let dim = train.feature_names.len();
    if dim == 0 || test.feature_names.len() != dim {
        return Err(Error::InvalidArgument("probe needs ground-truth features in both splits".into()));
    }
    let (mut tx, ty) = (train.combined(), train.features());
    let (mut vx, vy) = (test.combined(), test.features());
    standardize_blocks(&mut tx, &mut vx, 2 * POSITION_DIM, POSITION_DIM);
    probe(
        ProbeData {
            inputs: &tx,
            targets: &ty,
        },
        ProbeData {
            inputs: &vx,
            targets: &vy,
        },
        2 * POSITION_DIM,
        dim,
        spec,
    )
}

pub fn write_probe_csv<W: Write>(names: &[String], mse: &[f32], w: &mut W) -> Result<()> {
    writeln!(w, "feature,test_mse")?;
    for (n, v) in names.iter().zip(mse) {
        writeln!(w, "{n},{v}")?;
    }
    Ok(())
}
