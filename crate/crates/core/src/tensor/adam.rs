use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, lr: f32) -> Self {
        self.learning_rate = lr;
        self
    }
}

/// Adam with bias correction. Moment buffers are allocated on the first step
/// and must keep tracking the same parameter list afterwards.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    skipped: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            skipped: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn from_state(config: AdamConfig, step: u64, skipped: u64, m: Vec<Vec<f32>>, v: Vec<Vec<f32>>) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Format("adam moment buffers disagree".into()));
        }
        Ok(Adam {
            config,
            step,
            skipped,
            m,
            v,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates rejected because a gradient entry was not finite.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn moments(&self) -> (&[Vec<f32>], &[Vec<f32>]) {
        (&self.m, &self.v)
    }

    /// Applies one update from each parameter's accumulated gradient.
    /// Returns `Ok(false)` (and counts a skip) if any gradient is non-finite.
    pub fn step(&mut self, params: Vec<&mut Tensor>) -> Result<bool> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if params.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "adam tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.m) {
            if p.len() != m.len() {
                return Err(Error::shape("adam parameter", &[m.len()], p.shape()));
            }
        }
        let finite = params
            .iter()
            .all(|p| p.grad().is_none_or(|g| g.iter().all(|v| v.is_finite())));
        if !finite {
            self.skipped += 1;
            return Ok(false);
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - (beta1 as f64).powi(t);
        let bc2 = 1.0 - (beta2 as f64).powi(t);
        let bc1 = bc1 as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.grad().map(<[f32]>::to_vec) else {
                // no gradient: moments still decay
                m.iter_mut().for_each(|x| *x *= beta1);
                v.iter_mut().for_each(|x| *x *= beta2);
                continue;
            };
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let denom = vi.sqrt() / bc2_sqrt + epsilon;
                *w -= learning_rate * m_hat / denom;
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar reference Adam in f64.
    struct ScalarAdam {
        m: f64,
        v: f64,
        t: i32,
    }

    impl ScalarAdam {
        fn update(&mut self, c: &AdamConfig, g: f64) -> f64 {
            let (b1, b2) = (c.beta1 as f64, c.beta2 as f64);
            self.t += 1;
            self.m = b1 * self.m + (1.0 - b1) * g;
            self.v = b2 * self.v + (1.0 - b2) * g * g;
            let mh = self.m / (1.0 - b1.powi(self.t));
            let vh = self.v / (1.0 - b2.powi(self.t));
            -(c.learning_rate as f64) * mh / (vh.sqrt() + c.epsilon as f64)
        }
    }

    fn param(vals: &[f32], grad: &[f32]) -> Tensor {
        let mut t = Tensor::new(vec![vals.len()], vals.to_vec()).unwrap();
        t.grad_mut().copy_from_slice(grad);
        t
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = param(&[1.0, -2.0, 3.5], &[0.0; 3]);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam.step(vec![&mut p]).unwrap());
        assert_eq!(p.data(), &[1.0, -2.0, 3.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_and_second_steps_match_scalar_oracle() {
        let cfg = AdamConfig::default().with_learning_rate(1e-2);
        let grads = [0.3f32, -1.7, 4e-3];
        let mut p = param(&[0.0; 3], &grads);
        let mut adam = Adam::new(cfg);
        let mut oracles: Vec<ScalarAdam> = (0..3).map(|_| ScalarAdam { m: 0.0, v: 0.0, t: 0 }).collect();

        adam.step(vec![&mut p]).unwrap();
        let mut expected = [0.0f64; 3];
        for i in 0..3 {
            let du = oracles[i].update(&cfg, grads[i] as f64);
            // first step: -lr * g / (|g| + eps)
            let closed = -(cfg.learning_rate as f64) * grads[i] as f64 / ((grads[i] as f64).abs() + cfg.epsilon as f64);
            assert!((du - closed).abs() < 1e-9);
            expected[i] += du;
            assert!((p.data()[i] as f64 - expected[i]).abs() < 1e-7);
        }

        adam.step(vec![&mut p]).unwrap();
        for i in 0..3 {
            expected[i] += oracles[i].update(&cfg, grads[i] as f64);
            assert!((p.data()[i] as f64 - expected[i]).abs() < 1e-7);
        }
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut p = param(&[1.0, 2.0], &[f32::NAN, 1.0]);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(!adam.step(vec![&mut p]).unwrap());
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(adam.skipped(), 1);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn parameter_count_must_not_change() {
        let mut a = param(&[1.0], &[1.0]);
        let mut b = param(&[1.0], &[1.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(vec![&mut a]).unwrap();
        assert!(adam.step(vec![&mut a, &mut b]).is_err());
    }
}
