use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::gemm::{gemm, Op};
use super::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_KERNEL: usize = 5;
pub const DEFAULT_STRIDE: usize = 2;

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// NHWC convolution with same padding; output extent is `ceil(in / stride)`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    Sigmoid,
}

impl LayerSpec {
    pub fn conv2d(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: DEFAULT_KERNEL,
            stride: DEFAULT_STRIDE,
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Dense {
            in_features,
            out_features,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    /// Shapes of (weight, bias) for parameterized layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((
                vec![kernel, kernel, in_channels, out_channels],
                vec![out_channels],
            )),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => Some((vec![in_features, out_features], vec![out_features])),
            _ => None,
        }
    }

    /// Output shape for `input`, or a diagnostic naming the layer and shapes.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                stride,
                ..
            } => {
                if input.len() != 4 || input[3] != in_channels {
                    return Err(Error::shape(
                        format!("conv2d({in_channels}->{out_channels}) input [batch, h, w, c]"),
                        &[input.first().copied().unwrap_or(0), 0, 0, in_channels],
                        input,
                    ));
                }
                Ok(vec![
                    input[0],
                    input[1].div_ceil(stride),
                    input[2].div_ceil(stride),
                    out_channels,
                ])
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let feats: usize = input.iter().skip(1).product();
                if input.len() < 2 || feats != in_features {
                    return Err(Error::shape(
                        format!("dense({in_features}->{out_features}) input [batch, features]"),
                        &[input.first().copied().unwrap_or(0), in_features],
                        input,
                    ));
                }
                Ok(vec![input[0], out_features])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Layer {
    spec: LayerSpec,
    params: Vec<Tensor>,
}

impl Layer {
    /// Layer with explicit parameters (weight, bias) for conv2d / dense.
    pub fn with_params(spec: LayerSpec, params: Vec<Tensor>) -> Result<Self> {
        match spec.param_shapes() {
            Some((ws, bs)) => {
                if params.len() != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "{} expects weight and bias, got {} tensors",
                        spec.kind(),
                        params.len()
                    )));
                }
                if params[0].shape() != ws.as_slice() {
                    return Err(Error::shape(format!("{} weight", spec.kind()), &ws, params[0].shape()));
                }
                if params[1].shape() != bs.as_slice() {
                    return Err(Error::shape(format!("{} bias", spec.kind()), &bs, params[1].shape()));
                }
            }
            None => {
                if !params.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "{} takes no parameters",
                        spec.kind()
                    )));
                }
            }
        }
        Ok(Layer { spec, params })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }
}

/// Activations retained by a traced forward pass.
#[derive(Debug)]
enum Cache {
    Conv { cols: Vec<f32>, geom: ConvGeom },
    Dense { input: Vec<f32>, in_shape: Vec<usize> },
    Relu { output: Vec<f32> },
    Sigmoid { output: Vec<f32> },
}

/// Record of one forward pass, consumed by [`Network::backward`].
#[derive(Debug)]
pub struct Trace {
    network_id: u64,
    generation: u64,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    oh: usize,
    ow: usize,
    oc: usize,
    k: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
}

impl ConvGeom {
    fn new(spec: &LayerSpec, input: &[usize]) -> Self {
        let LayerSpec::Conv2d {
            out_channels,
            kernel,
            stride,
            ..
        } = *spec
        else {
            unreachable!("ConvGeom on non-conv layer");
        };
        let (n, h, w, c) = (input[0], input[1], input[2], input[3]);
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        let pad_h = ((oh - 1) * stride + kernel).saturating_sub(h);
        let pad_w = ((ow - 1) * stride + kernel).saturating_sub(w);
        ConvGeom {
            n,
            h,
            w,
            c,
            oh,
            ow,
            oc: out_channels,
            k: kernel,
            stride,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        }
    }

    fn rows(&self) -> usize {
        self.n * self.oh * self.ow
    }

    fn patch(&self) -> usize {
        self.k * self.k * self.c
    }

    fn im2col(&self, x: &[f32]) -> Vec<f32> {
        let patch = self.patch();
        let mut cols = vec![0.0f32; self.rows() * patch];
        let kc = self.k * self.c;
        for n in 0..self.n {
            for oy in 0..self.oh {
                for ox in 0..self.ow {
                    let row = (n * self.oh + oy) * self.ow + ox;
                    let dst = &mut cols[row * patch..(row + 1) * patch];
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src_row = (n * self.h + iy as usize) * self.w;
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            let s = (src_row + ix as usize) * self.c;
                            let d = ky * kc + kx * self.c;
                            dst[d..d + self.c].copy_from_slice(&x[s..s + self.c]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f32]) -> Vec<f32> {
        let patch = self.patch();
        let mut x = vec![0.0f32; self.n * self.h * self.w * self.c];
        let kc = self.k * self.c;
        for n in 0..self.n {
            for oy in 0..self.oh {
                for ox in 0..self.ow {
                    let row = (n * self.oh + oy) * self.ow + ox;
                    let src = &cols[row * patch..(row + 1) * patch];
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst_row = (n * self.h + iy as usize) * self.w;
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            let d = (dst_row + ix as usize) * self.c;
                            let s = ky * kc + kx * self.c;
                            for (xv, cv) in x[d..d + self.c].iter_mut().zip(&src[s..s + self.c]) {
                                *xv += cv;
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

/// A feed-forward stack of layers that owns its parameters.
#[derive(Debug)]
pub struct Network {
    layers: Vec<Layer>,
    id: u64,
    generation: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Network {
            layers: self.layers.clone(),
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

impl Network {
    /// Randomly initialized network. Layers feeding a ReLU get He-uniform
    /// weights, all others Xavier-uniform; biases start at zero.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let params = match spec.param_shapes() {
                Some((ws, bs)) => {
                    let fan_in: usize = ws[..ws.len() - 1].iter().product();
                    let fan_out = *ws.last().unwrap();
                    let feeds_relu = matches!(specs.get(i + 1), Some(LayerSpec::Relu));
                    let limit = if feeds_relu {
                        (6.0 / fan_in as f64).sqrt()
                    } else {
                        (6.0 / (fan_in + fan_out) as f64).sqrt()
                    } as f32;
                    let w = Tensor::from_fn(&ws, |_| rng.random_range(-limit..limit));
                    vec![w, Tensor::zeros(&bs)]
                }
                None => Vec::new(),
            };
            layers.push(Layer::with_params(*spec, params)?);
        }
        Ok(Self::from_layers(layers))
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Network {
            layers,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    /// Mutable parameter access. Invalidates outstanding traces.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            for p in &mut l.params {
                p.zero_grad();
            }
        }
    }

    /// Concatenated parameter gradients (zeros where none accumulated).
    pub fn flat_grad(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.num_params());
        for p in self.params() {
            match p.grad() {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(0.0, p.len())),
            }
        }
        out
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for l in &self.layers {
            shape = l.spec.output_shape(&shape)?;
        }
        Ok(shape)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.run(input, false).map(|(t, _)| t)
    }

    pub fn forward_traced(&self, input: &Tensor) -> Result<(Tensor, Trace)> {
        let (out, caches) = self.run(input, true)?;
        let trace = Trace {
            network_id: self.id,
            generation: self.generation,
            input_shape: input.shape().to_vec(),
            output_shape: out.shape().to_vec(),
            caches,
        };
        Ok((out, trace))
    }

    fn run(&self, input: &Tensor, keep: bool) -> Result<(Tensor, Vec<Cache>)> {
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut shape = input.shape().to_vec();
        let mut x = input.data().to_vec();
        for layer in &self.layers {
            let out_shape = layer.spec.output_shape(&shape)?;
            match layer.spec {
                LayerSpec::Conv2d { .. } => {
                    let g = ConvGeom::new(&layer.spec, &shape);
                    let cols = g.im2col(&x);
                    let mut y = vec![0.0f32; g.rows() * g.oc];
                    let (w, b) = (&layer.params[0], &layer.params[1]);
                    gemm(g.rows(), g.patch(), g.oc, &cols, Op::N, w.data(), Op::N, &mut y, false);
                    add_bias(&mut y, b.data());
                    if keep {
                        caches.push(Cache::Conv { cols, geom: g });
                    }
                    x = y;
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    let n = shape[0];
                    let mut y = vec![0.0f32; n * out_features];
                    let (w, b) = (&layer.params[0], &layer.params[1]);
                    gemm(n, in_features, out_features, &x, Op::N, w.data(), Op::N, &mut y, false);
                    add_bias(&mut y, b.data());
                    if keep {
                        caches.push(Cache::Dense {
                            input: std::mem::take(&mut x),
                            in_shape: shape.clone(),
                        });
                    }
                    x = y;
                }
                LayerSpec::Relu => {
                    x.iter_mut().for_each(|v| *v = v.max(0.0));
                    if keep {
                        caches.push(Cache::Relu { output: x.clone() });
                    }
                }
                LayerSpec::Sigmoid => {
                    x.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
                    if keep {
                        caches.push(Cache::Sigmoid { output: x.clone() });
                    }
                }
            }
            shape = out_shape;
        }
        Ok((Tensor::new(shape, x)?, caches))
    }

    /// Reverse pass: accumulates parameter gradients and returns the gradient
    /// with respect to the network input.
    pub fn backward(&mut self, trace: &Trace, upstream: &Tensor) -> Result<Tensor> {
        let g = self.backprop(trace, upstream, true)?;
        Tensor::new(trace.input_shape.clone(), g)
    }

    /// Like [`Network::backward`] but skips the input gradient.
    pub fn backward_params(&mut self, trace: &Trace, upstream: &Tensor) -> Result<()> {
        self.backprop(trace, upstream, false).map(|_| ())
    }

    fn backprop(&mut self, trace: &Trace, upstream: &Tensor, want_input: bool) -> Result<Vec<f32>> {
        if trace.network_id != self.id {
            return Err(Error::Backward("trace was recorded by a different network".into()));
        }
        if trace.generation != self.generation {
            return Err(Error::Backward(
                "parameters changed since the trace was recorded".into(),
            ));
        }
        if trace.caches.len() != self.layers.len() {
            return Err(Error::Backward("trace does not cover every layer".into()));
        }
        if upstream.shape() != trace.output_shape.as_slice() {
            return Err(Error::shape("backward upstream gradient", &trace.output_shape, upstream.shape()));
        }
        let mut grad = upstream.data().to_vec();
        for (idx, (layer, cache)) in self.layers.iter_mut().zip(&trace.caches).enumerate().rev() {
            let need_dx = want_input || idx > 0;
            match cache {
                Cache::Conv { cols, geom } => {
                    let (rows, patch, oc) = (geom.rows(), geom.patch(), geom.oc);
                    let (w, b) = layer.params.split_at_mut(1);
                    gemm(patch, rows, oc, cols, Op::T, &grad, Op::N, w[0].grad_mut(), true);
                    accumulate_bias(b[0].grad_mut(), &grad);
                    grad = if need_dx {
                        let mut dcols = vec![0.0f32; rows * patch];
                        gemm(rows, oc, patch, &grad, Op::N, w[0].data(), Op::T, &mut dcols, false);
                        geom.col2im(&dcols)
                    } else {
                        Vec::new()
                    };
                }
                Cache::Dense { input, in_shape } => {
                    let LayerSpec::Dense {
                        in_features,
                        out_features,
                    } = layer.spec
                    else {
                        return Err(Error::Backward("trace layer kinds do not match".into()));
                    };
                    let n = in_shape[0];
                    let (w, b) = layer.params.split_at_mut(1);
                    gemm(in_features, n, out_features, input, Op::T, &grad, Op::N, w[0].grad_mut(), true);
                    accumulate_bias(b[0].grad_mut(), &grad);
                    grad = if need_dx {
                        let mut dx = vec![0.0f32; n * in_features];
                        gemm(n, out_features, in_features, &grad, Op::N, w[0].data(), Op::T, &mut dx, false);
                        dx
                    } else {
                        Vec::new()
                    };
                }
                Cache::Relu { output } => {
                    for (g, y) in grad.iter_mut().zip(output) {
                        if *y <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                Cache::Sigmoid { output } => {
                    for (g, y) in grad.iter_mut().zip(output) {
                        *g *= y * (1.0 - y);
                    }
                }
            }
            if !need_dx {
                break;
            }
        }
        Ok(grad)
    }
}

fn add_bias(y: &mut [f32], b: &[f32]) {
    for row in y.chunks_exact_mut(b.len()) {
        for (v, bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
}

fn accumulate_bias(db: &mut [f32], grad: &[f32]) {
    for row in grad.chunks_exact(db.len()) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_layer(w: Vec<f32>, b: Vec<f32>, fin: usize, fout: usize) -> Layer {
        Layer::with_params(
            LayerSpec::dense(fin, fout),
            vec![
                Tensor::new(vec![fin, fout], w).unwrap(),
                Tensor::new(vec![fout], b).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let net = Network::from_layers(vec![Layer::with_params(LayerSpec::Relu, vec![]).unwrap()]);
        let x = Tensor::new(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(net.forward(&x).unwrap().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let net = Network::from_layers(vec![dense_layer(eye, vec![0.0; 3], 3, 3)]);
        let x = Tensor::new(vec![2, 3], vec![0.5, -1.5, 2.0, 3.0, 0.0, -7.25]).unwrap();
        assert_eq!(net.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn conv_delta_kernel_with_stride_one_is_identity() {
        let spec = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 5,
            stride: 1,
        };
        let mut w = vec![0.0; 25];
        w[12] = 1.0;
        let layer = Layer::with_params(
            spec,
            vec![
                Tensor::new(vec![5, 5, 1, 1], w).unwrap(),
                Tensor::zeros(&[1]),
            ],
        )
        .unwrap();
        let net = Network::from_layers(vec![layer]);
        let img = Tensor::from_fn(&[2, 7, 6, 1], |i| ((i * 37) % 11) as f32 / 10.0);
        let out = net.forward(&img).unwrap();
        assert_eq!(out.shape(), img.shape());
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn stride_two_same_padding_halves_with_ceiling() {
        let spec = LayerSpec::conv2d(3, 4);
        assert_eq!(spec.output_shape(&[2, 64, 64, 3]).unwrap(), vec![2, 32, 32, 4]);
        assert_eq!(spec.output_shape(&[1, 7, 5, 3]).unwrap(), vec![1, 4, 3, 4]);
    }

    #[test]
    fn shape_mismatch_names_layer_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::new(&[LayerSpec::dense(4, 2)], &mut rng).unwrap();
        let err = net.forward(&Tensor::zeros(&[3, 5])).unwrap_err().to_string();
        assert!(err.contains("dense(4->2)"), "{err}");
        assert!(err.contains("[3, 5]"), "{err}");
        let net = Network::new(&[LayerSpec::conv2d(3, 8)], &mut rng).unwrap();
        let err = net.forward(&Tensor::zeros(&[1, 8, 8, 1])).unwrap_err().to_string();
        assert!(err.contains("conv2d(3->8)"), "{err}");
    }

    #[test]
    fn linear_map_gradient_is_input() {
        // y = W x, L = sum(y)  =>  dL/dW[j][i] = x[j]
        let net_w: Vec<f32> = (0..6).map(|i| i as f32 * 0.1).collect();
        let mut net = Network::from_layers(vec![dense_layer(net_w, vec![0.0; 2], 3, 2)]);
        let x = Tensor::new(vec![1, 3], vec![1.5, -2.0, 0.25]).unwrap();
        let (y, trace) = net.forward_traced(&x).unwrap();
        let up = Tensor::new(y.shape().to_vec(), vec![1.0; 2]).unwrap();
        net.backward(&trace, &up).unwrap();
        let gw = net.layers()[0].params()[0].grad().unwrap();
        for j in 0..3 {
            for i in 0..2 {
                assert_eq!(gw[j * 2 + i], x.data()[j]);
            }
        }
    }

    #[test]
    fn dead_relu_blocks_upstream_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = [
            LayerSpec::dense(4, 6),
            LayerSpec::Relu,
            LayerSpec::dense(6, 3),
            LayerSpec::Relu,
            LayerSpec::dense(3, 2),
        ];
        let mut net = Network::new(&specs, &mut rng).unwrap();
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::from_fn(&[5, 4], |i| i as f32 - 7.0);
        let (y, trace) = net.forward_traced(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        net.backward(&trace, &Tensor::from_fn(y.shape(), |_| 1.0)).unwrap();
        // everything upstream of the dead relus receives nothing
        for l in &net.layers()[..3] {
            for p in l.params() {
                assert!(p.grad().unwrap().iter().all(|&g| g == 0.0));
            }
        }
    }

    #[test]
    fn backward_requires_matching_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let specs = [LayerSpec::dense(3, 2)];
        let mut a = Network::new(&specs, &mut rng).unwrap();
        let mut b = Network::new(&specs, &mut rng).unwrap();
        let x = Tensor::zeros(&[2, 3]);
        let (_, trace) = a.forward_traced(&x).unwrap();
        assert!(matches!(b.backward(&trace, &Tensor::zeros(&[2, 2])), Err(Error::Backward(_))));
        assert!(a.backward(&trace, &Tensor::zeros(&[3, 2])).is_err());
        let _ = a.params_mut();
        assert!(matches!(a.backward(&trace, &Tensor::zeros(&[2, 2])), Err(Error::Backward(_))));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let specs = [LayerSpec::conv2d(3, 4), LayerSpec::Relu, LayerSpec::dense(4 * 4 * 4, 2)];
        let net = Network::new(&specs, &mut rng).unwrap();
        let x = Tensor::from_fn(&[3, 8, 8, 3], |i| (i as f32 * 0.01).sin());
        assert_eq!(net.forward(&x).unwrap().data(), net.forward(&x).unwrap().data());
    }
}
