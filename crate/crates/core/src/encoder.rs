//! The position-velocity encoder: a convolutional network maps one frame to
//! a position state, and velocities/accelerations are finite differences of
//! consecutive position states.

use rand::Rng;

use crate::envs::CHANNELS;
use crate::error::{Error, Result};
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{Adam, Layer, LayerSpec, Network, Tensor, Trace};

pub const POSITION_DIM: usize = 5;
pub const CONV_CHANNELS: [usize; 3] = [16, 32, 64];
pub const DENSE_UNITS: [usize; 2] = [128, 128];

/// Convolutional position encoder over `[batch, height, width, 3]` frames.
#[derive(Clone, Debug)]
pub struct Encoder {
    network: Network,
    height: usize,
    width: usize,
}

/// Layer stack: three stride-2 5×5 convolutions (16/32/64 channels), dense
/// 128 and 128, then a linear 5-unit output. ReLU after all but the last.
pub fn encoder_specs(height: usize, width: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut c_in = CHANNELS;
    let (mut h, mut w) = (height, width);
    for &c in &CONV_CHANNELS {
        specs.push(LayerSpec::conv2d(c_in, c));
        specs.push(LayerSpec::Relu);
        c_in = c;
        h = h.div_ceil(2);
        w = w.div_ceil(2);
    }
    let mut f_in = h * w * c_in;
    for &u in &DENSE_UNITS {
        specs.push(LayerSpec::dense(f_in, u));
        specs.push(LayerSpec::Relu);
        f_in = u;
    }
    specs.push(LayerSpec::dense(f_in, POSITION_DIM));
    specs
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Result<Self> {
        let network = Network::new(&encoder_specs(height, width), rng)?;
        Ok(Encoder { network, height, width })
    }

    pub fn from_network(network: Network, height: usize, width: usize) -> Result<Self> {
        let out = network.output_shape(&[1, height, width, CHANNELS])?;
        if out != [1, POSITION_DIM] {
            return Err(Error::shape("encoder output", &[1, POSITION_DIM], &out));
        }
        Ok(Encoder { network, height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    fn check_input(&self, obs: &Tensor) -> Result<()> {
        let want = [obs.shape().first().copied().unwrap_or(0), self.height, self.width, CHANNELS];
        if obs.shape() != want {
            return Err(Error::shape("encoder observations", &want, obs.shape()));
        }
        Ok(())
    }

    /// Position states `[batch, 5]` for a frame batch.
    pub fn encode(&self, obs: &Tensor) -> Result<Tensor> {
        self.check_input(obs)?;
        self.network.forward(obs)
    }

    /// Encodes in chunks of `chunk` frames to bound activation memory.
    pub fn encode_chunked(&self, obs: &Tensor, chunk: usize) -> Result<Tensor> {
        self.check_input(obs)?;
        let n = obs.batch();
        let frame = obs.row_len();
        let mut out = Vec::with_capacity(n * POSITION_DIM);
        for start in (0..n).step_by(chunk.max(1)) {
            let end = (start + chunk.max(1)).min(n);
            let part = Tensor::new(
                vec![end - start, self.height, self.width, CHANNELS],
                obs.data()[start * frame..end * frame].to_vec(),
            )?;
            out.extend_from_slice(self.network.forward(&part)?.data());
        }
        Tensor::new(vec![n, POSITION_DIM], out)
    }

    pub fn encode_traced(&self, obs: &Tensor) -> Result<(Tensor, Trace)> {
        self.check_input(obs)?;
        self.network.forward_traced(obs)
    }

    /// Accumulates weight gradients given `d loss / d positions`.
    pub fn backward(&mut self, trace: &Trace, grad_positions: &Tensor) -> Result<()> {
        self.network.backward_params(trace, grad_positions)
    }

    /// Checkpoint records: layer parameters plus the input geometry and the
    /// velocity scale under `meta.*` names.
    pub fn to_checkpoint(&self, alpha: f32, adam: Option<&Adam>) -> Checkpoint {
        let mut tensors = vec![
            (
                "meta.input_shape".to_string(),
                Tensor::new(vec![3], vec![self.height as f32, self.width as f32, CHANNELS as f32]).unwrap(),
            ),
            ("meta.alpha".to_string(), Tensor::new(vec![1], vec![alpha]).unwrap()),
        ];
        for (i, layer) in self.network.layers().iter().enumerate() {
            for (p, field) in layer.params().iter().zip(["weight", "bias"]) {
                let mut t = p.clone();
                t.clear_grad();
                tensors.push((format!("layer{i}.{}.{field}", layer.spec().kind()), t));
            }
        }
        Checkpoint {
            tensors,
            adam: adam.cloned(),
        }
    }

    /// Rebuilds an encoder from a checkpoint; returns it with the stored alpha.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, f32)> {
        let shape = ck
            .get("meta.input_shape")
            .ok_or_else(|| Error::Format("checkpoint lacks meta.input_shape".into()))?;
        let (h, w) = (shape.data()[0] as usize, shape.data()[1] as usize);
        let alpha = ck.get("meta.alpha").map(|t| t.data()[0]).unwrap_or(0.0);
        let mut layers = Vec::new();
        for (i, spec) in encoder_specs(h, w).into_iter().enumerate() {
            let params = if spec.has_params() {
                ["weight", "bias"]
                    .iter()
                    .map(|f| {
                        let name = format!("layer{i}.{}.{f}", spec.kind());
                        ck.get(&name)
                            .cloned()
                            .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            layers.push(Layer::with_params(spec, params)?);
        }
        Ok((Encoder::from_network(Network::from_layers(layers), h, w)?, alpha))
    }
}

/// Stacks 8-bit frames into a `[n, h, w, 3]` tensor scaled to [0, 1].
pub fn frames_to_tensor(frames: &[&[u8]], height: usize, width: usize) -> Result<Tensor> {
    let frame_len = height * width * CHANNELS;
    let mut data = Vec::with_capacity(frames.len() * frame_len);
    for f in frames {
        if f.len() != frame_len {
            return Err(Error::shape("frame", &[height, width, CHANNELS], &[f.len()]));
        }
        data.extend(f.iter().map(|&b| b as f32 * (1.0 / 255.0)));
    }
    Tensor::new(vec![frames.len(), height, width, CHANNELS], data)
}

/// `v[t] = alpha · (p[t+1] − p[t])` over a row-major `[len, dim]` sequence,
/// so `v[0]` is the velocity state of step 1. Empty when `len < 2`.
pub fn velocities(positions: &[f32], dim: usize, alpha: f32) -> Vec<f32> {
    differences(positions, dim, alpha)
}

/// `a[t] = v[t+1] − v[t]`; empty for fewer than two velocities.
pub fn accelerations(velocities: &[f32], dim: usize) -> Vec<f32> {
    differences(velocities, dim, 1.0)
}

fn differences(xs: &[f32], dim: usize, scale: f32) -> Vec<f32> {
    let len = xs.len() / dim;
    if len < 2 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((len - 1) * dim);
    for t in 1..len {
        for k in 0..dim {
            out.push(scale * (xs[t * dim + k] - xs[(t - 1) * dim + k]));
        }
    }
    out
}

/// Adjoint of [`velocities`]: maps `d/dv` (`[len-1, dim]`) to `d/dp`.
pub fn velocities_backward(grad_v: &[f32], dim: usize, alpha: f32) -> Vec<f32> {
    differences_backward(grad_v, dim, alpha)
}

/// Adjoint of [`accelerations`]: maps `d/da` (`[len-2, dim]`) to `d/dv`.
pub fn accelerations_backward(grad_a: &[f32], dim: usize) -> Vec<f32> {
    differences_backward(grad_a, dim, 1.0)
}

fn differences_backward(grad: &[f32], dim: usize, scale: f32) -> Vec<f32> {
    let n = grad.len() / dim;
    let mut out = vec![0.0f32; (n + 1) * dim];
    for t in 0..n {
        for k in 0..dim {
            let g = scale * grad[t * dim + k];
            out[(t + 1) * dim + k] += g;
            out[t * dim + k] -= g;
        }
    }
    out
}

/// Per-step position, velocity and acceleration states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTriple {
    pub position: Vec<f32>,
    pub velocity: Option<Vec<f32>>,
    pub acceleration: Option<Vec<f32>>,
}

/// Position/velocity/acceleration states for every step of one sequence.
pub fn state_triples(positions: &[f32], dim: usize, alpha: f32) -> Vec<StateTriple> {
    let v = velocities(positions, dim, alpha);
    let a = accelerations(&v, dim);
    positions
        .chunks_exact(dim)
        .enumerate()
        .map(|(t, p)| StateTriple {
            position: p.to_vec(),
            velocity: (t >= 1).then(|| v[(t - 1) * dim..t * dim].to_vec()),
            acceleration: (t >= 2).then(|| a[(t - 2) * dim..(t - 1) * dim].to_vec()),
        })
        .collect()
}

/// `[s_p; s_v]`; rejected when the velocity is undefined (first step).
pub fn combined_state(position: &[f32], velocity: Option<&[f32]>) -> Result<Vec<f32>> {
    let v = velocity.ok_or_else(|| {
        Error::InvalidArgument("velocity state undefined at the first step of a sequence".into())
    })?;
    if v.len() != position.len() {
        return Err(Error::shape("combined state", &[position.len()], &[v.len()]));
    }
    Ok(position.iter().chain(v).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoder(res: usize, seed: u64) -> Encoder {
        Encoder::new(res, res, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn paper_stack_maps_64px_frames_to_five_dims() {
        let enc = encoder(64, 0);
        for batch in [1, 3, 7] {
            assert_eq!(enc.network().output_shape(&[batch, 64, 64, 3]).unwrap(), vec![batch, 5]);
        }
        let specs = encoder_specs(64, 64);
        assert!(!matches!(specs.last(), Some(LayerSpec::Relu)));
        assert_eq!(specs.iter().filter(|s| **s == LayerSpec::Relu).count(), 5);
        let x = Tensor::from_fn(&[2, 64, 64, 3], |i| (i % 255) as f32 / 255.0);
        assert_eq!(enc.encode(&x).unwrap().shape(), &[2, 5]);
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let mut enc = encoder(16, 1);
        for p in enc.network_mut().params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::from_fn(&[4, 16, 16, 3], |i| (i as f32 * 0.13).sin().abs());
        assert!(enc.encode(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_frames_encode_identically() {
        let enc = encoder(16, 2);
        let frame: Vec<f32> = (0..16 * 16 * 3).map(|i| (i as f32 * 0.07).cos().abs()).collect();
        let mut data = frame.clone();
        data.extend((0..frame.len()).map(|i| (i % 7) as f32 / 7.0));
        data.extend(&frame);
        let out = enc.encode(&Tensor::new(vec![3, 16, 16, 3], data).unwrap()).unwrap();
        assert_eq!(out.row(0), out.row(2));
        assert!(enc.encode(&Tensor::zeros(&[1, 8, 16, 3])).is_err());
    }

    #[test]
    fn chunked_encoding_matches_single_pass() {
        let enc = encoder(16, 3);
        let x = Tensor::from_fn(&[7, 16, 16, 3], |i| ((i * 31) % 97) as f32 / 97.0);
        let a = enc.encode(&x).unwrap();
        let b = enc.encode_chunked(&x, 3).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn velocity_examples() {
        let p = [0.0; 15];
        assert!(velocities(&p, 5, 3.0).iter().all(|&v| v == 0.0));
        let p = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0];
        assert_eq!(velocities(&p, 5, 10.0), vec![10.0, 20.0, 0.0, 0.0, 0.0]);
        assert!(velocities(&p, 5, 0.0).iter().all(|&v| v == 0.0));
        assert!(velocities(&p[..5], 5, 1.0).is_empty());
    }

    #[test]
    fn acceleration_examples() {
        let v = [1.0, -2.0, 1.0, -2.0, 1.0, -2.0];
        assert!(accelerations(&v, 2).iter().all(|&a| a == 0.0));
        let v = [0.0, 0.5, 1.0, 1.5];
        assert_eq!(accelerations(&v, 1), vec![0.5, 0.5, 0.5]);
        assert!(accelerations(&[1.0], 1).is_empty());
        let p: Vec<f32> = (0..20).map(|i| (i as f32).powi(2)).collect();
        assert!(accelerations(&velocities(&p, 5, 0.0), 5).iter().all(|&a| a == 0.0));
    }

    #[test]
    fn combined_state_examples() {
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0];
        let s = combined_state(&e1, Some(&[0.0; 5])).unwrap();
        assert_eq!(s, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(combined_state(&[0.0; 5], Some(&[0.0; 5])).unwrap(), vec![0.0; 10]);
        assert!(combined_state(&e1, None).is_err());
    }

    #[test]
    fn triples_define_velocity_from_second_step() {
        let p: Vec<f32> = (0..12).map(|i| i as f32).collect();
        let t = state_triples(&p, 3, 2.0);
        assert_eq!(t.len(), 4);
        assert!(t[0].velocity.is_none() && t[0].acceleration.is_none());
        assert_eq!(t[1].velocity.as_deref(), Some(&[6.0, 6.0, 6.0][..]));
        assert!(t[1].acceleration.is_none());
        assert_eq!(t[3].acceleration.as_deref(), Some(&[0.0, 0.0, 0.0][..]));
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let enc = encoder(16, 4);
        let ck = enc.to_checkpoint(7.5, None);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        let (enc2, alpha) = Encoder::from_checkpoint(&back).unwrap();
        assert_eq!(alpha, 7.5);
        let x = Tensor::from_fn(&[2, 16, 16, 3], |i| (i % 13) as f32 / 13.0);
        assert_eq!(enc.encode(&x).unwrap().data(), enc2.encode(&x).unwrap().data());
    }

    proptest! {
        #[test]
        fn second_difference_identity(
            p in prop::collection::vec(-10.0f32..10.0, 15..40),
            alpha in 0.0f32..12.0,
        ) {
            let dim = 5;
            let len = p.len() / dim;
            let p = &p[..len * dim];
            let a = accelerations(&velocities(p, dim, alpha), dim);
            prop_assert_eq!(a.len(), (len - 2) * dim);
            for t in 2..len {
                for k in 0..dim {
                    let (x0, x1, x2) = (p[(t - 2) * dim + k] as f64, p[(t - 1) * dim + k] as f64, p[t * dim + k] as f64);
                    let want = alpha as f64 * (x2 - 2.0 * x1 + x0);
                    let got = a[(t - 2) * dim + k] as f64;
                    // relative to the magnitude of the terms being differenced
                    let scale = 1.0 + alpha as f64 * (x2.abs() + 2.0 * x1.abs() + x0.abs());
                    prop_assert!((got - want).abs() <= 1e-6 * scale,
                        "t={} k={} got {} want {}", t, k, got, want);
                }
            }
        }

        #[test]
        fn difference_adjoints_satisfy_dot_product_test(
            p in prop::collection::vec(-1.0f32..1.0, 12),
            g in prop::collection::vec(-1.0f32..1.0, 9),
            alpha in 0.0f32..5.0,
        ) {
            // <D p, g> == <p, D^T g>
            let dim = 3;
            let v = velocities(&p, dim, alpha);
            let lhs: f32 = v.iter().zip(&g).map(|(a, b)| a * b).sum();
            let back = velocities_backward(&g, dim, alpha);
            let rhs: f32 = p.iter().zip(&back).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-4);
        }
    }
}
