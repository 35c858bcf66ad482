use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Default optimizer settings used by every trainable component.
pub const DEFAULT_LR: f32 = 1e-3;

/// Adam state: bias-corrected first/second moment accumulators, one pair
/// per named parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    names: Vec<String>,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f32, named_shapes: &[(String, usize, usize)]) -> Result<Self> {
        Self::with_betas(lr, 0.9, 0.999, 1e-8, named_shapes)
    }

    pub fn with_betas(
        lr: f32,
        beta1: f32,
        beta2: f32,
        eps: f32,
        named_shapes: &[(String, usize, usize)],
    ) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::Config(format!("adam lr must be > 0, got {lr}")));
        }
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(Error::Config(format!(
                "adam betas must be in (0, 1), got {beta1}, {beta2}"
            )));
        }
        let names = named_shapes.iter().map(|(n, _, _)| n.clone()).collect();
        let m = named_shapes
            .iter()
            .map(|&(_, r, c)| Matrix::zeros(r, c))
            .collect();
        let v = named_shapes
            .iter()
            .map(|&(_, r, c)| Matrix::zeros(r, c))
            .collect();
        Ok(Self {
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
            names,
            m,
            v,
        })
    }

    /// Builds state for an existing parameter list.
    pub fn for_params(lr: f32, params: &[(String, &Matrix)]) -> Result<Self> {
        let shapes: Vec<(String, usize, usize)> = params
            .iter()
            .map(|(n, p)| (n.clone(), p.rows(), p.cols()))
            .collect();
        Self::new(lr, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f32 {
        self.lr
    }

    /// One bias-corrected update. `params` and `grads` must match the
    /// construction order; a non-finite gradient aborts with the offending
    /// tensor's name.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Config(format!(
                "adam expects {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != self.m[i].shape() {
                return Err(Error::Dimension(format!(
                    "gradient shape {:?} does not match accumulator {:?} for `{}`",
                    g.shape(),
                    self.m[i].shape(),
                    self.names[i]
                )));
            }
            if !g.all_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient in tensor `{}`",
                    self.names[i]
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            let p = params[i].as_mut_slice();
            let g = grads[i].as_slice();
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [&mut Matrix], max_norm: f32) {
    let mut sq = 0.0f64;
    for g in grads.iter() {
        for &x in g.as_slice() {
            sq += (x as f64) * (x as f64);
        }
    }
    let norm = sq.sqrt() as f32;
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(scale);
        }
    }
}
