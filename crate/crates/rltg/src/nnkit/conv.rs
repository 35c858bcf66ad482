use rand::Rng;

use super::dense::Activation;
use super::matrix::Mat;
use super::real::Real;

/// 1-D convolution over the rows of an (n, in_ch) matrix with "same"
/// zero padding. Kernel weights are stored as (kernel * in_ch, out_ch);
/// the row index is tap * in_ch + channel.
#[derive(Debug, Clone)]
pub struct Conv1d<S = f32> {
    pub w: Mat<S>,
    pub b: Mat<S>,
    pub kernel: usize,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvCache<S> {
    pub x: Mat<S>,
    pub y: Mat<S>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<S> {
    pub w: Mat<S>,
    pub b: Mat<S>,
}

impl<S: Real> Conv1d<S> {
    pub fn new<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1 && kernel >= 1, "kernel width must be odd");
        Self {
            w: Mat::xavier(kernel * in_ch, out_ch, rng),
            b: Mat::zeros(1, out_ch),
            kernel,
            act,
        }
    }

    pub fn in_ch(&self) -> usize {
        self.w.rows() / self.kernel
    }

    pub fn out_ch(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Mat<S>) -> (Mat<S>, ConvCache<S>) {
        let in_ch = self.in_ch();
        let out_ch = self.out_ch();
        assert_eq!(x.cols(), in_ch, "conv1d channel mismatch");
        let n = x.rows();
        let half = (self.kernel as isize - 1) / 2;
        let mut y = Mat::zeros(n, out_ch);
        for t in 0..n as isize {
            for tap in 0..self.kernel as isize {
                let src = t + tap - half;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let xrow = x.row(src as usize);
                for (i, &xv) in xrow.iter().enumerate() {
                    if xv == S::ZERO {
                        continue;
                    }
                    let wrow = self.w.row(tap as usize * in_ch + i);
                    let yrow = y.row_mut(t as usize);
                    for (o, &wv) in yrow.iter_mut().zip(wrow.iter()) {
                        *o += xv * wv;
                    }
                }
            }
        }
        y.add_row_bias(&self.b);
        self.act.apply(&mut y);
        (
            y.clone(),
            ConvCache {
                x: x.clone(),
                y,
            },
        )
    }

    pub fn backward(&self, cache: &ConvCache<S>, dy: &Mat<S>) -> (Mat<S>, ConvGrads<S>) {
        let in_ch = self.in_ch();
        let n = cache.x.rows();
        let half = (self.kernel as isize - 1) / 2;
        let dz = self.act.backward(&cache.y, dy);

        let mut dw = Mat::zeros(self.w.rows(), self.w.cols());
        let mut db = Mat::zeros(1, self.out_ch());
        let mut dx = Mat::zeros(n, in_ch);

        for t in 0..n as isize {
            let dzrow = dz.row(t as usize);
            for (acc, &g) in db.row_mut(0).iter_mut().zip(dzrow.iter()) {
                *acc += g;
            }
            for tap in 0..self.kernel as isize {
                let src = t + tap - half;
                if src < 0 || src >= n as isize {
                    continue;
                }
                for i in 0..in_ch {
                    let wr = tap as usize * in_ch + i;
                    let xv = cache.x.at(src as usize, i);
                    let wrow = self.w.row(wr);
                    let dwrow = dw.row_mut(wr);
                    let mut acc = S::ZERO;
                    for ((dwv, &wv), &g) in dwrow.iter_mut().zip(wrow.iter()).zip(dzrow.iter()) {
                        *dwv += xv * g;
                        acc += wv * g;
                    }
                    *dx.at_mut(src as usize, i) += acc;
                }
            }
        }
        (dx, ConvGrads { w: dw, b: db })
    }

    pub fn cast<T: Real>(&self) -> Conv1d<T> {
        Conv1d {
            w: self.w.cast(),
            b: self.b.cast(),
            kernel: self.kernel,
            act: self.act,
        }
    }
}
