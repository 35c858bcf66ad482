use rand::Rng;

use super::matrix::Mat;
use super::real::Real;

/// Gated recurrent cell:
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   n = tanh(x Wn + r .* (h Un) + bn)
///   h' = (1 - z) .* n + z .* h
#[derive(Debug, Clone)]
pub struct GruCell<S = f32> {
    pub wz: Mat<S>,
    pub uz: Mat<S>,
    pub bz: Mat<S>,
    pub wr: Mat<S>,
    pub ur: Mat<S>,
    pub br: Mat<S>,
    pub wn: Mat<S>,
    pub un: Mat<S>,
    pub bn: Mat<S>,
}

#[derive(Debug, Clone)]
pub struct GruStepCache<S> {
    x: Vec<S>,
    h_prev: Vec<S>,
    z: Vec<S>,
    r: Vec<S>,
    n: Vec<S>,
    h_un: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct GruGrads<S> {
    pub wz: Mat<S>,
    pub uz: Mat<S>,
    pub bz: Mat<S>,
    pub wr: Mat<S>,
    pub ur: Mat<S>,
    pub br: Mat<S>,
    pub wn: Mat<S>,
    pub un: Mat<S>,
    pub bn: Mat<S>,
}

fn sigmoid<S: Real>(x: S) -> S {
    S::ONE / (S::ONE + (-x).exp())
}

/// y_j = sum_i x_i m[i][j]
fn vec_mat<S: Real>(x: &[S], m: &Mat<S>) -> Vec<S> {
    assert_eq!(x.len(), m.rows());
    let mut out = vec![S::ZERO; m.cols()];
    for (i, &xi) in x.iter().enumerate() {
        if xi == S::ZERO {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(m.row(i)) {
            *o += xi * w;
        }
    }
    out
}

/// y_i = sum_j m[i][j] d_j  (multiply by the transpose)
fn mat_vec_t<S: Real>(m: &Mat<S>, d: &[S]) -> Vec<S> {
    assert_eq!(d.len(), m.cols());
    let mut out = vec![S::ZERO; m.rows()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = S::ZERO;
        for (&w, &dj) in m.row(i).iter().zip(d.iter()) {
            acc += w * dj;
        }
        *o = acc;
    }
    out
}

/// grad[i][j] += a_i * b_j
fn outer_add<S: Real>(grad: &mut Mat<S>, a: &[S], b: &[S]) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == S::ZERO {
            continue;
        }
        for (g, &bj) in grad.row_mut(i).iter_mut().zip(b.iter()) {
            *g += ai * bj;
        }
    }
}

fn add_into<S: Real>(acc: &mut [S], src: &[S]) {
    for (a, &s) in acc.iter_mut().zip(src.iter()) {
        *a += s;
    }
}

impl<S: Real> GruCell<S> {
    pub fn new<R: Rng>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            wz: Mat::xavier(in_dim, hidden, rng),
            uz: Mat::xavier(hidden, hidden, rng),
            bz: Mat::zeros(1, hidden),
            wr: Mat::xavier(in_dim, hidden, rng),
            ur: Mat::xavier(hidden, hidden, rng),
            br: Mat::zeros(1, hidden),
            wn: Mat::xavier(in_dim, hidden, rng),
            un: Mat::xavier(hidden, hidden, rng),
            bn: Mat::zeros(1, hidden),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.wz.rows()
    }

    pub fn hidden(&self) -> usize {
        self.wz.cols()
    }

    /// One recurrence step. Returns the new hidden state and the cache
    /// needed to backpropagate through this step.
    pub fn step(&self, x: &[S], h_prev: &[S]) -> (Vec<S>, GruStepCache<S>) {
        let hidden = self.hidden();
        assert_eq!(x.len(), self.in_dim(), "gru input dim mismatch");
        assert_eq!(h_prev.len(), hidden, "gru hidden dim mismatch");

        let mut z = vec_mat(x, &self.wz);
        add_into(&mut z, &vec_mat(h_prev, &self.uz));
        add_into(&mut z, self.bz.row(0));
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut r = vec_mat(x, &self.wr);
        add_into(&mut r, &vec_mat(h_prev, &self.ur));
        add_into(&mut r, self.br.row(0));
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let h_un = vec_mat(h_prev, &self.un);
        let mut n = vec_mat(x, &self.wn);
        for i in 0..hidden {
            n[i] += r[i] * h_un[i] + self.bn.at(0, i);
        }
        n.iter_mut().for_each(|v| *v = v.tanh());

        let mut h = vec![S::ZERO; hidden];
        for i in 0..hidden {
            h[i] = (S::ONE - z[i]) * n[i] + z[i] * h_prev[i];
        }
        let cache = GruStepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            n,
            h_un,
        };
        (h, cache)
    }

    /// Runs the cell over a sequence starting from a zero hidden state.
    /// Returns every hidden state plus the step caches.
    pub fn encode(&self, xs: &[Vec<S>]) -> (Vec<Vec<S>>, Vec<GruStepCache<S>>) {
        let mut h = vec![S::ZERO; self.hidden()];
        let mut hiddens = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (h_new, cache) = self.step(x, &h);
            h = h_new;
            hiddens.push(h.clone());
            caches.push(cache);
        }
        (hiddens, caches)
    }

    pub fn zero_grads(&self) -> GruGrads<S> {
        GruGrads {
            wz: Mat::zeros(self.wz.rows(), self.wz.cols()),
            uz: Mat::zeros(self.uz.rows(), self.uz.cols()),
            bz: Mat::zeros(1, self.hidden()),
            wr: Mat::zeros(self.wr.rows(), self.wr.cols()),
            ur: Mat::zeros(self.ur.rows(), self.ur.cols()),
            br: Mat::zeros(1, self.hidden()),
            wn: Mat::zeros(self.wn.rows(), self.wn.cols()),
            un: Mat::zeros(self.un.rows(), self.un.cols()),
            bn: Mat::zeros(1, self.hidden()),
        }
    }

    /// Backpropagates one step. `dh` is dL/dh for this step's output.
    /// Returns (dx, dh_prev) and accumulates parameter grads into `grads`.
    pub fn step_backward(
        &self,
        cache: &GruStepCache<S>,
        dh: &[S],
        grads: &mut GruGrads<S>,
    ) -> (Vec<S>, Vec<S>) {
        let hidden = self.hidden();
        let mut dn = vec![S::ZERO; hidden];
        let mut dz = vec![S::ZERO; hidden];
        let mut dh_prev = vec![S::ZERO; hidden];
        for i in 0..hidden {
            dn[i] = dh[i] * (S::ONE - cache.z[i]);
            dz[i] = dh[i] * (cache.h_prev[i] - cache.n[i]);
            dh_prev[i] = dh[i] * cache.z[i];
        }

        // n = tanh(pn) with pn = x Wn + r .* h_un + bn
        let mut dpn = vec![S::ZERO; hidden];
        let mut dr = vec![S::ZERO; hidden];
        let mut dh_un = vec![S::ZERO; hidden];
        for i in 0..hidden {
            dpn[i] = dn[i] * (S::ONE - cache.n[i] * cache.n[i]);
            dr[i] = dpn[i] * cache.h_un[i];
            dh_un[i] = dpn[i] * cache.r[i];
        }
        outer_add(&mut grads.wn, &cache.x, &dpn);
        outer_add(&mut grads.un, &cache.h_prev, &dh_un);
        add_into(grads.bn.row_mut(0), &dpn);
        let mut dx = mat_vec_t(&self.wn, &dpn);
        add_into(&mut dh_prev, &mat_vec_t(&self.un, &dh_un));

        // z = sigmoid(pz)
        let mut dpz = vec![S::ZERO; hidden];
        for i in 0..hidden {
            dpz[i] = dz[i] * cache.z[i] * (S::ONE - cache.z[i]);
        }
        outer_add(&mut grads.wz, &cache.x, &dpz);
        outer_add(&mut grads.uz, &cache.h_prev, &dpz);
        add_into(grads.bz.row_mut(0), &dpz);
        add_into(&mut dx, &mat_vec_t(&self.wz, &dpz));
        add_into(&mut dh_prev, &mat_vec_t(&self.uz, &dpz));

        // r = sigmoid(pr)
        let mut dpr = vec![S::ZERO; hidden];
        for i in 0..hidden {
            dpr[i] = dr[i] * cache.r[i] * (S::ONE - cache.r[i]);
        }
        outer_add(&mut grads.wr, &cache.x, &dpr);
        outer_add(&mut grads.ur, &cache.h_prev, &dpr);
        add_into(grads.br.row_mut(0), &dpr);
        add_into(&mut dx, &mat_vec_t(&self.wr, &dpr));
        add_into(&mut dh_prev, &mat_vec_t(&self.ur, &dpr));

        (dx, dh_prev)
    }

    /// Full BPTT over an encoded sequence. `d_hiddens[t]` is the upstream
    /// gradient on hidden state t (zero vectors where unused).
    pub fn backward(
        &self,
        caches: &[GruStepCache<S>],
        d_hiddens: &[Vec<S>],
    ) -> (GruGrads<S>, Vec<Vec<S>>) {
        assert_eq!(caches.len(), d_hiddens.len(), "stale gru cache");
        let mut grads = self.zero_grads();
        let mut dxs = vec![Vec::new(); caches.len()];
        let mut carry = vec![S::ZERO; self.hidden()];
        for t in (0..caches.len()).rev() {
            let mut dh = d_hiddens[t].clone();
            add_into(&mut dh, &carry);
            let (dx, dh_prev) = self.step_backward(&caches[t], &dh, &mut grads);
            dxs[t] = dx;
            carry = dh_prev;
        }
        (grads, dxs)
    }

    pub fn cast<T: Real>(&self) -> GruCell<T> {
        GruCell {
            wz: self.wz.cast(),
            uz: self.uz.cast(),
            bz: self.bz.cast(),
            wr: self.wr.cast(),
            ur: self.ur.cast(),
            br: self.br.cast(),
            wn: self.wn.cast(),
            un: self.un.cast(),
            bn: self.bn.cast(),
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Mat<S>)> {
        vec![
            ("wz", &self.wz),
            ("uz", &self.uz),
            ("bz", &self.bz),
            ("wr", &self.wr),
            ("ur", &self.ur),
            ("br", &self.br),
            ("wn", &self.wn),
            ("un", &self.un),
            ("bn", &self.bn),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Mat<S>)> {
        vec![
            ("wz", &mut self.wz),
            ("uz", &mut self.uz),
            ("bz", &mut self.bz),
            ("wr", &mut self.wr),
            ("ur", &mut self.ur),
            ("br", &mut self.br),
            ("wn", &mut self.wn),
            ("un", &mut self.un),
            ("bn", &mut self.bn),
        ]
    }
}

impl<S: Real> GruGrads<S> {
    pub fn tensors(&self) -> Vec<(&'static str, &Mat<S>)> {
        vec![
            ("wz", &self.wz),
            ("uz", &self.uz),
            ("bz", &self.bz),
            ("wr", &self.wr),
            ("ur", &self.ur),
            ("br", &self.br),
            ("wn", &self.wn),
            ("un", &self.un),
            ("bn", &self.bn),
        ]
    }
}
