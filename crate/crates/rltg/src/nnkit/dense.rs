use rand::Rng;

use super::matrix::Mat;
use super::real::Real;

/// Element-wise (or, for softmax, row-wise) nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
    Softmax,
}

impl Activation {
    /// Applies the activation in place, row by row.
    pub fn apply<S: Real>(self, z: &mut Mat<S>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for v in z.as_mut_slice() {
                    *v = v.maximum(S::ZERO);
                }
            }
            Activation::Tanh => {
                for v in z.as_mut_slice() {
                    *v = v.tanh();
                }
            }
            Activation::Sigmoid => {
                for v in z.as_mut_slice() {
                    *v = S::ONE / (S::ONE + (-*v).exp());
                }
            }
            Activation::Softmax => {
                for r in 0..z.rows() {
                    softmax_in_place(z.row_mut(r));
                }
            }
        }
    }

    /// Given post-activation outputs `y` and upstream dL/dy, produces dL/dz.
    pub fn backward<S: Real>(self, y: &Mat<S>, dy: &Mat<S>) -> Mat<S> {
        assert_eq!(y.shape(), dy.shape());
        match self {
            Activation::Identity => dy.clone(),
            Activation::Relu => {
                let mut dz = dy.clone();
                for (d, &o) in dz.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    if o <= S::ZERO {
                        *d = S::ZERO;
                    }
                }
                dz
            }
            Activation::Tanh => {
                let mut dz = dy.clone();
                for (d, &o) in dz.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *d *= S::ONE - o * o;
                }
                dz
            }
            Activation::Sigmoid => {
                let mut dz = dy.clone();
                for (d, &o) in dz.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *d *= o * (S::ONE - o);
                }
                dz
            }
            Activation::Softmax => {
                // dz_i = y_i * (dy_i - sum_j dy_j y_j), per row
                let mut dz = Mat::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dyr = dy.row(r);
                    let mut dot = S::ZERO;
                    for (&a, &b) in dyr.iter().zip(yr.iter()) {
                        dot += a * b;
                    }
                    for (c, out) in dz.row_mut(r).iter_mut().enumerate() {
                        *out = yr[c] * (dyr[c] - dot);
                    }
                }
                dz
            }
        }
    }
}

/// Numerically stable softmax over a slice.
pub fn softmax_in_place<S: Real>(row: &mut [S]) {
    let mut max = row[0];
    for &v in row.iter() {
        max = max.maximum(v);
    }
    let mut sum = S::ZERO;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Dense affine layer: y = act(x W + b), with W shaped (in_dim, out_dim).
#[derive(Debug, Clone)]
pub struct Dense<S = f32> {
    pub w: Mat<S>,
    pub b: Mat<S>,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache<S> {
    pub x: Mat<S>,
    pub y: Mat<S>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<S> {
    pub w: Mat<S>,
    pub b: Mat<S>,
}

impl<S: Real> Dense<S> {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, act: Activation, rng: &mut R) -> Self {
        Self {
            w: Mat::xavier(in_dim, out_dim, rng),
            b: Mat::zeros(1, out_dim),
            act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Mat<S>) -> (Mat<S>, DenseCache<S>) {
        assert_eq!(x.cols(), self.in_dim(), "dense input width mismatch");
        let mut y = x.matmul(&self.w);
        y.add_row_bias(&self.b);
        self.act.apply(&mut y);
        (
            y.clone(),
            DenseCache {
                x: x.clone(),
                y,
            },
        )
    }

    pub fn backward(&self, cache: &DenseCache<S>, dy: &Mat<S>) -> (Mat<S>, DenseGrads<S>) {
        let dz = self.act.backward(&cache.y, dy);
        let dw = cache.x.matmul_tn(&dz);
        let mut db = Mat::zeros(1, self.out_dim());
        for r in 0..dz.rows() {
            for (acc, &g) in db.row_mut(0).iter_mut().zip(dz.row(r)) {
                *acc += g;
            }
        }
        let dx = dz.matmul_nt(&self.w);
        (dx, DenseGrads { w: dw, b: db })
    }

    pub fn cast<T: Real>(&self) -> Dense<T> {
        Dense {
            w: self.w.cast(),
            b: self.b.cast(),
            act: self.act,
        }
    }
}
