//! Robotic-prior losses over a mini-batch of encoded sequences.
//!
//! Every loss is a mini-batch average and returns its analytic gradient with
//! respect to the position, velocity and acceleration arrays it reads.
//! [`PriorBatch::position_gradient`] chains those back to positions through
//! the finite-difference adjoints.

use crate::encoder::{accelerations, accelerations_backward, velocities, velocities_backward};
use crate::error::{Error, Result};

/// Encoded positions for `batch` sequences of `steps` frames, with their
/// finite-difference velocities and accelerations and the actions taken
/// between consecutive frames.
#[derive(Clone, Debug)]
pub struct PriorBatch {
    pub batch: usize,
    pub steps: usize,
    pub dim: usize,
    pub alpha: f32,
    /// `[batch][steps][dim]`
    pub positions: Vec<f32>,
    /// `[batch][steps-1][dim]`; entry `t` is the velocity state of frame `t+1`.
    pub velocities: Vec<f32>,
    /// `[batch][steps-2][dim]`; entry `t` is the acceleration state of frame `t+2`.
    pub accelerations: Vec<f32>,
    /// `[batch][steps-1][action_dim]`; entry `t` was applied after frame `t`.
    pub actions: Vec<f32>,
    pub action_dim: usize,
}

impl PriorBatch {
    pub fn new(
        positions: Vec<f32>,
        batch: usize,
        steps: usize,
        dim: usize,
        alpha: f32,
        actions: Vec<f32>,
        action_dim: usize,
    ) -> Result<Self> {
        if positions.len() != batch * steps * dim {
            return Err(Error::shape("prior batch positions", &[batch, steps, dim], &[positions.len()]));
        }
        let n_act = batch * steps.saturating_sub(1) * action_dim;
        if actions.len() != n_act {
            return Err(Error::shape(
                "prior batch actions",
                &[batch, steps.saturating_sub(1), action_dim],
                &[actions.len()],
            ));
        }
        let mut vel = Vec::with_capacity(batch * steps.saturating_sub(1) * dim);
        let mut acc = Vec::with_capacity(batch * steps.saturating_sub(2) * dim);
        for seq in positions.chunks_exact(steps * dim) {
            let v = velocities(seq, dim, alpha);
            acc.extend(accelerations(&v, dim));
            vel.extend(v);
        }
        Ok(PriorBatch {
            batch,
            steps,
            dim,
            alpha,
            positions,
            velocities: vel,
            accelerations: acc,
            actions,
            action_dim,
        })
    }

    fn pos(&self, b: usize, t: usize) -> &[f32] {
        let i = (b * self.steps + t) * self.dim;
        &self.positions[i..i + self.dim]
    }

    fn vel(&self, b: usize, t: usize) -> &[f32] {
        let i = (b * (self.steps - 1) + t) * self.dim;
        &self.velocities[i..i + self.dim]
    }

    fn acc(&self, b: usize, t: usize) -> &[f32] {
        let i = (b * (self.steps - 2) + t) * self.dim;
        &self.accelerations[i..i + self.dim]
    }

    fn action(&self, b: usize, t: usize) -> &[f32] {
        let i = (b * (self.steps - 1) + t) * self.action_dim;
        &self.actions[i..i + self.action_dim]
    }

    pub fn zero_grad(&self) -> PriorGrad {
        PriorGrad {
            positions: vec![0.0; self.positions.len()],
            velocities: vec![0.0; self.velocities.len()],
            accelerations: vec![0.0; self.accelerations.len()],
        }
    }

    /// Total `d loss / d positions` given gradients on all three arrays.
    pub fn position_gradient(&self, grad: &PriorGrad) -> Vec<f32> {
        let mut out = grad.positions.clone();
        let (s, d) = (self.steps, self.dim);
        for b in 0..self.batch {
            let gv_direct = &grad.velocities[b * (s - 1) * d..(b + 1) * (s - 1) * d];
            let mut gv = gv_direct.to_vec();
            if s >= 3 {
                let ga = &grad.accelerations[b * (s - 2) * d..(b + 1) * (s - 2) * d];
                for (x, y) in gv.iter_mut().zip(accelerations_backward(ga, d)) {
                    *x += y;
                }
            }
            let gp = velocities_backward(&gv, d, self.alpha);
            for (x, y) in out[b * s * d..(b + 1) * s * d].iter_mut().zip(gp) {
                *x += y;
            }
        }
        out
    }
}

/// Gradients with respect to the arrays of a [`PriorBatch`].
#[derive(Clone, Debug, PartialEq)]
pub struct PriorGrad {
    pub positions: Vec<f32>,
    pub velocities: Vec<f32>,
    pub accelerations: Vec<f32>,
}

impl PriorGrad {
    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &PriorGrad, scale: f32) {
        for (dst, src) in [
            (&mut self.positions, &other.positions),
            (&mut self.velocities, &other.velocities),
            (&mut self.accelerations, &other.accelerations),
        ] {
            for (x, y) in dst.iter_mut().zip(src) {
                *x += scale * y;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Loss {
    pub value: f32,
    pub grad: PriorGrad,
}

/// Per-prior loss values and their weighted total for one mini-batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub variation: f32,
    pub slowness: f32,
    pub inertia: f32,
    pub inertia_abs: f32,
    pub conservation: f32,
    /// One entry per constrained action dimension.
    pub controlability: Vec<f32>,
    pub total: f32,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.variation, self.slowness, self.inertia, self.inertia_abs, self.conservation, self.total]
            .iter()
            .chain(&self.controlability)
            .all(|v| v.is_finite())
    }

    pub const CSV_HEADER: &'static str =
        "step,alpha,variation,slowness,inertia,inertia_abs,conservation,controlability,total";

    /// One metrics row; controlability entries are joined with ';'.
    pub fn csv_row(&self, step: u64, alpha: f32) -> String {
        let ctrl = self
            .controlability
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "{step},{alpha},{},{},{},{},{},{ctrl},{}",
            self.variation, self.slowness, self.inertia, self.inertia_abs, self.conservation, self.total
        )
    }
}

fn norm(x: &[f32]) -> f64 {
    x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

/// Mean of `exp(-||s_a - s_b||)` over all cross-sequence pairs that share a
/// time step.
pub fn variation_loss(batch: &PriorBatch) -> Result<Loss> {
    if batch.batch < 2 {
        return Err(Error::InvalidArgument("variation loss needs at least two sequences".into()));
    }
    let d = batch.dim;
    let pairs = batch.steps * batch.batch * (batch.batch - 1) / 2;
    let inv = 1.0 / pairs as f64;
    let mut grad = batch.zero_grad();
    let mut sum = 0.0f64;
    let mut diff = vec![0.0f64; d];
    for t in 0..batch.steps {
        for a in 0..batch.batch {
            for b in a + 1..batch.batch {
                let (pa, pb) = (batch.pos(a, t), batch.pos(b, t));
                for k in 0..d {
                    diff[k] = pa[k] as f64 - pb[k] as f64;
                }
                let n = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
                let e = (-n).exp();
                sum += e;
                if n > 0.0 {
                    let c = -e / n * inv;
                    let ia = (a * batch.steps + t) * d;
                    let ib = (b * batch.steps + t) * d;
                    for k in 0..d {
                        let g = (c * diff[k]) as f32;
                        grad.positions[ia + k] += g;
                        grad.positions[ib + k] -= g;
                    }
                }
            }
        }
    }
    Ok(Loss {
        value: (sum * inv) as f32,
        grad,
    })
}

/// Mean squared distance between consecutive position states. Uses the
/// positions directly so the value does not depend on the velocity scale.
pub fn slowness_loss(batch: &PriorBatch) -> Result<Loss> {
    if batch.steps < 2 {
        return Err(Error::InvalidArgument("slowness loss needs sequences of at least two steps".into()));
    }
    let d = batch.dim;
    let inv = 1.0 / (batch.batch * (batch.steps - 1)) as f64;
    let mut grad = batch.zero_grad();
    let mut sum = 0.0f64;
    for b in 0..batch.batch {
        for t in 1..batch.steps {
            let (cur, prev) = (batch.pos(b, t), batch.pos(b, t - 1));
            let ic = (b * batch.steps + t) * d;
            let ip = (b * batch.steps + t - 1) * d;
            for k in 0..d {
                let diff = cur[k] as f64 - prev[k] as f64;
                sum += diff * diff;
                let g = (2.0 * diff * inv) as f32;
                grad.positions[ic + k] += g;
                grad.positions[ip + k] -= g;
            }
        }
    }
    Ok(Loss {
        value: (sum * inv) as f32,
        grad,
    })
}

/// `(mean ||s_a||², mean ||s_a||)` over all acceleration states.
pub fn inertia_losses(batch: &PriorBatch) -> Result<(Loss, Loss)> {
    if batch.steps < 3 {
        return Err(Error::InvalidArgument("inertia losses need sequences of at least three steps".into()));
    }
    let d = batch.dim;
    let inv = 1.0 / (batch.batch * (batch.steps - 2)) as f64;
    let mut g_sq = batch.zero_grad();
    let mut g_abs = batch.zero_grad();
    let (mut sq, mut abs) = (0.0f64, 0.0f64);
    for b in 0..batch.batch {
        for t in 0..batch.steps - 2 {
            let a = batch.acc(b, t);
            let n = norm(a);
            sq += n * n;
            abs += n;
            let i = (b * (batch.steps - 2) + t) * d;
            for k in 0..d {
                g_sq.accelerations[i + k] = (2.0 * a[k] as f64 * inv) as f32;
                if n > 0.0 {
                    g_abs.accelerations[i + k] = (a[k] as f64 / n * inv) as f32;
                }
            }
        }
    }
    Ok((
        Loss {
            value: (sq * inv) as f32,
            grad: g_sq,
        },
        Loss {
            value: (abs * inv) as f32,
            grad: g_abs,
        },
    ))
}

/// Mean of `(||s_v[t]|| - ||s_v[t-1]||)²` over consecutive velocity states.
pub fn conservation_loss(batch: &PriorBatch) -> Result<Loss> {
    if batch.steps < 3 {
        return Err(Error::InvalidArgument("conservation loss needs sequences of at least three steps".into()));
    }
    let d = batch.dim;
    let nv = batch.steps - 1;
    let inv = 1.0 / (batch.batch * (nv - 1)) as f64;
    let mut grad = batch.zero_grad();
    let mut sum = 0.0f64;
    for b in 0..batch.batch {
        for t in 1..nv {
            let (cur, prev) = (batch.vel(b, t), batch.vel(b, t - 1));
            let (nc, np) = (norm(cur), norm(prev));
            let diff = nc - np;
            sum += diff * diff;
            let c = 2.0 * diff * inv;
            let ic = (b * nv + t) * d;
            let ip = (b * nv + t - 1) * d;
            for k in 0..d {
                if nc > 0.0 {
                    grad.velocities[ic + k] += (c * cur[k] as f64 / nc) as f32;
                }
                if np > 0.0 {
                    grad.velocities[ip + k] -= (c * prev[k] as f64 / np) as f32;
                }
            }
        }
    }
    Ok(Loss {
        value: (sum * inv) as f32,
        grad,
    })
}

/// `exp(-Cov(a[t, i], s_a[t+1, i]))` with the biased covariance over every
/// (sequence, t) where both the action and the following acceleration exist.
pub fn controlability_loss(batch: &PriorBatch, i: usize) -> Result<Loss> {
    if i >= batch.action_dim.min(batch.dim) {
        return Err(Error::InvalidArgument(format!(
            "controlability dimension {i} outside min(action_dim {}, position_dim {})",
            batch.action_dim, batch.dim
        )));
    }
    // a[t] pairs with the acceleration of frame t+1, stored at index t-1
    let ts = if batch.steps >= 3 { 1..batch.steps - 1 } else { 1..1 };
    let n = batch.batch * ts.len();
    if n < 2 {
        return Err(Error::InvalidArgument("controlability loss needs at least two samples".into()));
    }
    let inv = 1.0 / n as f64;
    let mut mean_a = 0.0f64;
    let mut mean_s = 0.0f64;
    for b in 0..batch.batch {
        for t in ts.clone() {
            mean_a += batch.action(b, t)[i] as f64;
            mean_s += batch.acc(b, t - 1)[i] as f64;
        }
    }
    mean_a *= inv;
    mean_s *= inv;
    let mut cov = 0.0f64;
    for b in 0..batch.batch {
        for t in ts.clone() {
            cov += (batch.action(b, t)[i] as f64 - mean_a) * (batch.acc(b, t - 1)[i] as f64 - mean_s);
        }
    }
    cov *= inv;
    let value = (-cov).exp();
    let mut grad = batch.zero_grad();
    for b in 0..batch.batch {
        for t in ts.clone() {
            let idx = (b * (batch.steps - 2) + t - 1) * batch.dim + i;
            grad.accelerations[idx] = (-value * (batch.action(b, t)[i] as f64 - mean_a) * inv) as f32;
        }
    }
    Ok(Loss {
        value: value as f32,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Seqs = Vec<Vec<Vec<f64>>>;

    fn nested(batch: &PriorBatch, data: &[f32], steps: usize) -> Seqs {
        data.chunks_exact(steps * batch.dim)
            .map(|s| s.chunks_exact(batch.dim).map(|p| p.iter().map(|&v| v as f64).collect()).collect())
            .collect()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    fn mag(a: &[f64]) -> f64 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    // Brute-force oracles, written straight from the loss definitions over
    // nested sequences and independent of the flat-buffer implementation.

    fn brute_variation(p: &Seqs) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for t in 0..p[0].len() {
            for a in 0..p.len() {
                for b in 0..p.len() {
                    if a < b {
                        sum += (-dist(&p[a][t], &p[b][t])).exp();
                        count += 1;
                    }
                }
            }
        }
        sum / count as f64
    }

    fn brute_slowness(p: &Seqs) -> f64 {
        let mut all = Vec::new();
        for s in p {
            for w in s.windows(2) {
                all.push(dist(&w[1], &w[0]).powi(2));
            }
        }
        all.iter().sum::<f64>() / all.len() as f64
    }

    fn second_diffs(p: &Seqs, alpha: f64) -> Seqs {
        p.iter()
            .map(|s| {
                s.windows(3)
                    .map(|w| (0..w[0].len()).map(|k| alpha * (w[2][k] - 2.0 * w[1][k] + w[0][k])).collect())
                    .collect()
            })
            .collect()
    }

    fn first_diffs(p: &Seqs, alpha: f64) -> Seqs {
        p.iter()
            .map(|s| {
                s.windows(2)
                    .map(|w| (0..w[0].len()).map(|k| alpha * (w[1][k] - w[0][k])).collect())
                    .collect()
            })
            .collect()
    }

    fn brute_inertia(p: &Seqs, alpha: f64) -> (f64, f64) {
        let acc = second_diffs(p, alpha);
        let norms: Vec<f64> = acc.iter().flatten().map(|a| mag(a)).collect();
        let n = norms.len() as f64;
        (norms.iter().map(|x| x * x).sum::<f64>() / n, norms.iter().sum::<f64>() / n)
    }

    fn brute_conservation(p: &Seqs, alpha: f64) -> f64 {
        let vel = first_diffs(p, alpha);
        let terms: Vec<f64> = vel
            .iter()
            .flat_map(|s| s.windows(2).map(|w| (mag(&w[1]) - mag(&w[0])).powi(2)))
            .collect();
        terms.iter().sum::<f64>() / terms.len() as f64
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, t: usize, d: usize, alpha: f32, adim: usize) -> PriorBatch {
        let pos: Vec<f32> = (0..b * t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let act: Vec<f32> = (0..b * (t - 1) * adim).map(|_| rng.random_range(-1.0..1.0)).collect();
        PriorBatch::new(pos, b, t, d, alpha, act, adim).unwrap()
    }

    fn const_batch(b: usize, t: usize, d: usize, alpha: f32) -> PriorBatch {
        PriorBatch::new(vec![0.5; b * t * d], b, t, d, alpha, vec![0.0; b * (t - 1)], 1).unwrap()
    }

    #[test]
    fn variation_examples() {
        assert!((variation_loss(&const_batch(3, 4, 5, 1.0)).unwrap().value - 1.0).abs() < 1e-6);
        // two sequences, every same-t pair at distance ln 2
        let ln2 = std::f32::consts::LN_2;
        let mut pos = vec![0.0f32; 2 * 3 * 5];
        for t in 0..3 {
            pos[(3 + t) * 5] = ln2;
        }
        let b = PriorBatch::new(pos, 2, 3, 5, 1.0, vec![0.0; 4], 1).unwrap();
        assert!((variation_loss(&b).unwrap().value - 0.5).abs() < 1e-6);
        assert!(variation_loss(&const_batch(1, 4, 5, 1.0)).is_err());
    }

    #[test]
    fn variation_matches_pair_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = random_batch(&mut rng, 4, 3, 5, 1.0, 1);
        let want = brute_variation(&nested(&b, &b.positions, 3));
        assert!((variation_loss(&b).unwrap().value as f64 - want).abs() < 1e-6);
    }

    #[test]
    fn slowness_examples() {
        assert_eq!(slowness_loss(&const_batch(2, 5, 5, 3.0)).unwrap().value, 0.0);
        let mut pos = vec![0.0; 10];
        pos[5] = 1.0;
        let b = PriorBatch::new(pos, 1, 2, 5, 10.0, vec![0.0], 1).unwrap();
        assert_eq!(slowness_loss(&b).unwrap().value, 1.0);
        let short = PriorBatch::new(vec![0.0; 5], 1, 1, 5, 1.0, vec![], 1).unwrap();
        assert!(slowness_loss(&short).is_err());
    }

    #[test]
    fn slowness_matches_resummation_and_ignores_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let b = random_batch(&mut rng, 5, 6, 5, 1.0, 1);
        let want = brute_slowness(&nested(&b, &b.positions, 6));
        let got = slowness_loss(&b).unwrap().value;
        assert!((got as f64 - want).abs() < 1e-6);
        let b10 = PriorBatch::new(b.positions.clone(), 5, 6, 5, 10.0, b.actions.clone(), 1).unwrap();
        assert_eq!(slowness_loss(&b10).unwrap().value, got);
    }

    #[test]
    fn inertia_examples() {
        // constant velocity
        let pos: Vec<f32> = (0..4).flat_map(|t| [t as f32, 2.0 * t as f32, 0.0]).collect();
        let b = PriorBatch::new(pos, 1, 4, 3, 5.0, vec![0.0; 3], 1).unwrap();
        let (sq, abs) = inertia_losses(&b).unwrap();
        assert_eq!((sq.value, abs.value), (0.0, 0.0));
        // single acceleration of norm 2: positions 0, 0, 2 along one axis
        let b = PriorBatch::new(vec![0.0, 0.0, 2.0], 1, 3, 1, 1.0, vec![0.0; 2], 1).unwrap();
        let (sq, abs) = inertia_losses(&b).unwrap();
        assert_eq!((sq.value, abs.value), (4.0, 2.0));
        assert!(inertia_losses(&const_batch(2, 2, 5, 1.0)).is_err());
    }

    #[test]
    fn inertia_matches_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let b = random_batch(&mut rng, 4, 7, 5, 3.0, 1);
        let (want_sq, want_abs) = brute_inertia(&nested(&b, &b.positions, 7), 3.0);
        let (sq, abs) = inertia_losses(&b).unwrap();
        assert!((sq.value as f64 - want_sq).abs() < 1e-6 * want_sq.max(1.0));
        assert!((abs.value as f64 - want_abs).abs() < 1e-6 * want_abs.max(1.0));
    }

    #[test]
    fn conservation_examples() {
        // velocity rotating at constant magnitude: positions on a square path
        let pos = vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let b = PriorBatch::new(pos, 1, 5, 2, 2.0, vec![0.0; 4], 1).unwrap();
        assert_eq!(conservation_loss(&b).unwrap().value, 0.0);
        // magnitudes 1 then 3
        let b = PriorBatch::new(vec![0.0, 1.0, 4.0], 1, 3, 1, 1.0, vec![0.0; 2], 1).unwrap();
        assert_eq!(conservation_loss(&b).unwrap().value, 4.0);
        assert!(conservation_loss(&const_batch(2, 2, 5, 1.0)).is_err());
    }

    #[test]
    fn conservation_matches_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let b = random_batch(&mut rng, 3, 8, 5, 2.0, 1);
        let want = brute_conservation(&nested(&b, &b.positions, 8), 2.0);
        assert!((conservation_loss(&b).unwrap().value as f64 - want).abs() < 1e-6 * want.max(1.0));
    }

    #[test]
    fn controlability_examples() {
        // constant actions: covariance exactly zero
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let r = random_batch(&mut rng, 4, 6, 5, 1.0, 2);
        let b = PriorBatch::new(r.positions.clone(), 4, 6, 5, 1.0, vec![0.3; 4 * 5 * 2], 2).unwrap();
        assert_eq!(controlability_loss(&b, 0).unwrap().value, 1.0);
        assert_eq!(controlability_loss(&b, 1).unwrap().value, 1.0);

        // actions equal to the following acceleration: exp(-variance)
        let mut acts = vec![0.0f32; 4 * 5 * 2];
        let mut samples = Vec::new();
        for s in 0..4 {
            for t in 1..5 {
                let a = r.acc(s, t - 1)[0];
                acts[(s * 5 + t) * 2] = a;
                samples.push(a as f64);
            }
        }
        let b = PriorBatch::new(r.positions.clone(), 4, 6, 5, 1.0, acts, 2).unwrap();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        let got = controlability_loss(&b, 0).unwrap().value as f64;
        assert!((got - (-var).exp()).abs() < 1e-6, "{got} vs {}", (-var).exp());

        assert!(controlability_loss(&b, 2).is_err());
        let tiny = PriorBatch::new(vec![0.0; 15], 1, 3, 5, 1.0, vec![0.0; 2], 1).unwrap();
        assert!(controlability_loss(&tiny, 0).is_err());
    }

    #[test]
    fn controlability_near_one_for_independent_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let b = random_batch(&mut rng, 64, 10, 5, 0.2, 1);
        let v = controlability_loss(&b, 0).unwrap().value;
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn zero_alpha_zeroes_velocity_priors() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let b = random_batch(&mut rng, 4, 10, 5, 0.0, 1);
        let (sq, abs) = inertia_losses(&b).unwrap();
        let cons = conservation_loss(&b).unwrap();
        let ctrl = controlability_loss(&b, 0).unwrap();
        assert_eq!((sq.value, abs.value, cons.value, ctrl.value), (0.0, 0.0, 0.0, 1.0));
        for l in [&sq, &abs, &cons, &ctrl] {
            assert!(b.position_gradient(&l.grad).iter().all(|&g| g == 0.0));
        }
    }

    /// Central finite differences of `loss(positions)` in f64 around a
    /// batch whose positions carry a little noise (norms away from zero).
    fn check_gradient(f: impl Fn(&PriorBatch) -> Loss, alpha: f32, seed: u64) {
        let (bn, t, d) = (3, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_batch(&mut rng, bn, t, d, alpha, 2);
        let analytic = b.position_gradient(&f(&b).grad);
        let h = 1e-2f32;
        let mut numeric = vec![0.0f32; analytic.len()];
        for i in 0..b.positions.len() {
            let eval = |delta: f32| {
                let mut p = b.positions.clone();
                p[i] += delta;
                let nb = PriorBatch::new(p, bn, t, d, alpha, b.actions.clone(), 2).unwrap();
                f(&nb).value as f64
            };
            numeric[i] = ((eval(h) - eval(-h)) / (2.0 * h as f64)) as f32;
        }
        let (mut dot, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for (a, n) in analytic.iter().zip(&numeric) {
            let scale = a.abs().max(n.abs()).max(1e-2);
            assert!((a - n).abs() / scale <= 1e-2, "analytic {a} numeric {n}");
            dot += (*a as f64) * (*n as f64);
            na += (*a as f64).powi(2);
            nn += (*n as f64).powi(2);
        }
        if na > 0.0 {
            assert!(1.0 - dot / (na.sqrt() * nn.sqrt()) <= 1e-3);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        check_gradient(|b| variation_loss(b).unwrap(), 1.0, 31);
        check_gradient(|b| slowness_loss(b).unwrap(), 1.0, 32);
        check_gradient(|b| inertia_losses(b).unwrap().0, 2.0, 33);
        check_gradient(|b| inertia_losses(b).unwrap().1, 2.0, 34);
        check_gradient(|b| conservation_loss(b).unwrap(), 2.0, 35);
        check_gradient(|b| controlability_loss(b, 0).unwrap(), 2.0, 36);
        check_gradient(|b| controlability_loss(b, 1).unwrap(), 2.0, 37);
    }

    fn all_values(b: &PriorBatch) -> Vec<f32> {
        let (sq, abs) = inertia_losses(b).unwrap();
        vec![
            variation_loss(b).unwrap().value,
            slowness_loss(b).unwrap().value,
            sq.value,
            abs.value,
            conservation_loss(b).unwrap().value,
            controlability_loss(b, 0).unwrap().value,
        ]
    }

    fn close(a: &[f32], b: &[f32], tol: f32) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn losses_ignore_sequence_order(seed in 0u64..1000, rot in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_batch(&mut rng, 4, 5, 5, 1.5, 1);
            let seq_p = 5 * 5;
            let seq_a = 4;
            let mut p = b.positions.clone();
            p.rotate_left(rot * seq_p);
            let mut a = b.actions.clone();
            a.rotate_left(rot * seq_a);
            let pb = PriorBatch::new(p, 4, 5, 5, 1.5, a, 1).unwrap();
            prop_assert!(close(&all_values(&b), &all_values(&pb), 1e-5));
        }

        #[test]
        fn losses_are_translation_invariant(seed in 0u64..1000, shift in prop::array::uniform5(-3.0f32..3.0)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_batch(&mut rng, 4, 5, 5, 1.5, 1);
            let p: Vec<f32> = b.positions.iter().enumerate().map(|(i, v)| v + shift[i % 5]).collect();
            let tb = PriorBatch::new(p, 4, 5, 5, 1.5, b.actions.clone(), 1).unwrap();
            prop_assert!(close(&all_values(&b), &all_values(&tb), 1e-4));
        }

        #[test]
        fn distance_priors_are_rotation_invariant(seed in 0u64..1000, angle in -3.0f32..3.0, i in 0usize..5, j in 0usize..5) {
            prop_assume!(i != j);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_batch(&mut rng, 4, 5, 5, 1.5, 1);
            let (c, s) = (angle.cos(), angle.sin());
            let mut p = b.positions.clone();
            for row in p.chunks_exact_mut(5) {
                let (x, y) = (row[i], row[j]);
                row[i] = c * x - s * y;
                row[j] = s * x + c * y;
            }
            let rb = PriorBatch::new(p, 4, 5, 5, 1.5, b.actions.clone(), 1).unwrap();
            // controlability pairs fixed dimensions, so it is excluded
            prop_assert!(close(&all_values(&b)[..5], &all_values(&rb)[..5], 1e-4));
        }
    }
}
