use rand::Rng;

use super::dense::softmax_in_place;
use super::matrix::Mat;
use super::real::Real;

/// Additive attention pooling: scores each row of the input with a small
/// tanh scorer, softmaxes the scores, and returns the weighted sum.
///
///   score_i = tanh(h_i W + b) . v
///   context = sum_i softmax(score)_i * h_i
#[derive(Debug, Clone)]
pub struct AttentionPool<S = f32> {
    pub w: Mat<S>,
    pub b: Mat<S>,
    pub v: Mat<S>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<S> {
    hs: Mat<S>,
    tanh_u: Mat<S>,
    weights: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads<S> {
    pub w: Mat<S>,
    pub b: Mat<S>,
    pub v: Mat<S>,
}

impl<S: Real> AttentionPool<S> {
    pub fn new<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        Self {
            w: Mat::xavier(hidden, hidden, rng),
            b: Mat::zeros(1, hidden),
            v: Mat::xavier(hidden, 1, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w.rows()
    }

    /// Pools (n, hidden) rows into a (1, hidden) context vector.
    pub fn forward(&self, hs: &Mat<S>) -> (Mat<S>, AttentionCache<S>) {
        assert!(hs.rows() >= 1, "attention over empty input");
        assert_eq!(hs.cols(), self.hidden(), "attention width mismatch");
        let mut u = hs.matmul(&self.w);
        u.add_row_bias(&self.b);
        let tanh_u = u.map(|x| x.tanh());
        let mut scores: Vec<S> = (0..hs.rows())
            .map(|i| {
                let mut acc = S::ZERO;
                for (j, &t) in tanh_u.row(i).iter().enumerate() {
                    acc += t * self.v.at(j, 0);
                }
                acc
            })
            .collect();
        softmax_in_place(&mut scores);
        let mut ctx = Mat::zeros(1, self.hidden());
        for (i, &a) in scores.iter().enumerate() {
            for (c, &h) in ctx.row_mut(0).iter_mut().zip(hs.row(i)) {
                *c += a * h;
            }
        }
        (
            ctx,
            AttentionCache {
                hs: hs.clone(),
                tanh_u,
                weights: scores,
            },
        )
    }

    /// Attention weights from the last forward (sums to one).
    pub fn weights_of(cache: &AttentionCache<S>) -> &[S] {
        &cache.weights
    }

    pub fn backward(
        &self,
        cache: &AttentionCache<S>,
        dctx: &Mat<S>,
    ) -> (Mat<S>, AttentionGrads<S>) {
        let n = cache.hs.rows();
        let hidden = self.hidden();
        assert_eq!(dctx.shape(), (1, hidden));

        let mut dhs = Mat::zeros(n, hidden);
        let mut dalpha = vec![S::ZERO; n];
        for i in 0..n {
            let mut acc = S::ZERO;
            for (j, &d) in dctx.row(0).iter().enumerate() {
                acc += d * cache.hs.at(i, j);
            }
            dalpha[i] = acc;
            let a = cache.weights[i];
            for (g, &d) in dhs.row_mut(i).iter_mut().zip(dctx.row(0)) {
                *g += a * d;
            }
        }

        // softmax backward on the scores
        let mut dot = S::ZERO;
        for (&da, &a) in dalpha.iter().zip(cache.weights.iter()) {
            dot += da * a;
        }
        let dscore: Vec<S> = cache
            .weights
            .iter()
            .zip(dalpha.iter())
            .map(|(&a, &da)| a * (da - dot))
            .collect();

        let mut dw = Mat::zeros(hidden, hidden);
        let mut db = Mat::zeros(1, hidden);
        let mut dv = Mat::zeros(hidden, 1);
        for i in 0..n {
            let ds = dscore[i];
            let trow = cache.tanh_u.row(i);
            for j in 0..hidden {
                *dv.at_mut(j, 0) += trow[j] * ds;
            }
            // du = ds * v .* (1 - tanh_u^2)
            let du: Vec<S> = (0..hidden)
                .map(|j| ds * self.v.at(j, 0) * (S::ONE - trow[j] * trow[j]))
                .collect();
            for (j, &d) in du.iter().enumerate() {
                *db.at_mut(0, j) += d;
            }
            let hrow = cache.hs.row(i);
            for (k, &h) in hrow.iter().enumerate() {
                for (j, &d) in du.iter().enumerate() {
                    *dw.at_mut(k, j) += h * d;
                }
            }
            for k in 0..hidden {
                let mut acc = S::ZERO;
                for (j, &d) in du.iter().enumerate() {
                    acc += self.w.at(k, j) * d;
                }
                *dhs.at_mut(i, k) += acc;
            }
        }
        (dhs, AttentionGrads { w: dw, b: db, v: dv })
    }

    pub fn cast<T: Real>(&self) -> AttentionPool<T> {
        AttentionPool {
            w: self.w.cast(),
            b: self.b.cast(),
            v: self.v.cast(),
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Mat<S>)> {
        vec![("w", &self.w), ("b", &self.b), ("v", &self.v)]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Mat<S>)> {
        vec![("w", &mut self.w), ("b", &mut self.b), ("v", &mut self.v)]
    }
}

impl<S: Real> AttentionGrads<S> {
    pub fn tensors(&self) -> Vec<(&'static str, &Mat<S>)> {
        vec![("w", &self.w), ("b", &self.b), ("v", &self.v)]
    }
}
