//! Minimal differentiable-layer substrate: dense, 1-D convolution, gated
//! recurrence, attention pooling, losses and Adam. Everything is generic
//! over the scalar so analytic gradients can be re-verified against
//! central finite differences at f64.

mod adam;
mod attention;
mod conv;
mod dense;
mod gru;
mod loss;
mod matrix;
mod real;

pub use adam::{clip_global_norm, AdamState, DEFAULT_LR};
pub use attention::{AttentionCache, AttentionGrads, AttentionPool};
pub use conv::{Conv1d, ConvCache, ConvGrads};
pub use dense::{softmax_in_place, Activation, Dense, DenseCache, DenseGrads};
pub use gru::{GruCell, GruGrads, GruStepCache};
pub use loss::{bce, mse, softmax_cross_entropy};
pub use matrix::{Mat, Matrix};
pub use real::Real;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv1d,
    Recurrent,
    AttentionPool,
}

/// Construction descriptor for one layer of a [`Net`].
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Only meaningful for conv1d; must be odd.
    pub kernel_width: usize,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense,
            in_dim,
            out_dim,
            activation,
            kernel_width: 1,
        }
    }

    pub fn conv1d(in_ch: usize, out_ch: usize, kernel_width: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv1d,
            in_dim: in_ch,
            out_dim: out_ch,
            activation,
            kernel_width,
        }
    }

    pub fn recurrent(in_dim: usize, hidden: usize) -> Self {
        Self {
            kind: LayerKind::Recurrent,
            in_dim,
            out_dim: hidden,
            activation: Activation::Tanh,
            kernel_width: 1,
        }
    }

    pub fn attention_pool(hidden: usize) -> Self {
        Self {
            kind: LayerKind::AttentionPool,
            in_dim: hidden,
            out_dim: hidden,
            activation: Activation::Identity,
            kernel_width: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim < 1 || self.out_dim < 1 {
            return Err(Error::Config(format!(
                "layer dims must be >= 1, got {}x{}",
                self.in_dim, self.out_dim
            )));
        }
        if self.kind == LayerKind::Conv1d && (self.kernel_width % 2 == 0 || self.kernel_width < 1) {
            return Err(Error::Config(format!(
                "conv1d kernel width must be odd and >= 1, got {}",
                self.kernel_width
            )));
        }
        if self.kind == LayerKind::AttentionPool && self.in_dim != self.out_dim {
            return Err(Error::Config(
                "attention-pool must preserve the hidden dimension".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Layer<S: Real = f32> {
    Dense(Dense<S>),
    Conv1d(Conv1d<S>),
    Recurrent(GruCell<S>),
    AttentionPool(AttentionPool<S>),
}

#[derive(Debug, Clone)]
pub enum LayerCache<S: Real> {
    Dense(DenseCache<S>),
    Conv1d(ConvCache<S>),
    Recurrent(Vec<GruStepCache<S>>),
    AttentionPool(AttentionCache<S>),
}

#[derive(Debug, Clone)]
pub enum LayerGrads<S: Real> {
    Dense(DenseGrads<S>),
    Conv1d(ConvGrads<S>),
    Recurrent(GruGrads<S>),
    AttentionPool(AttentionGrads<S>),
}

/// A feed-forward chain of layers. Row counts may change along the chain
/// (conv/recurrent run along rows, attention-pool collapses them).
#[derive(Debug, Clone)]
pub struct Net<S: Real = f32> {
    layers: Vec<Layer<S>>,
}

/// Activation cache from [`forward`], consumed by [`backward`].
#[derive(Debug)]
pub struct NetCache<S: Real> {
    per_layer: Vec<LayerCache<S>>,
    input_shape: (usize, usize),
    output_shape: (usize, usize),
}

/// Per-parameter gradients plus the gradient w.r.t. the network input.
#[derive(Debug)]
pub struct NetGrads<S: Real> {
    pub layers: Vec<LayerGrads<S>>,
    pub input: Mat<S>,
}

impl<S: Real> Net<S> {
    pub fn from_layers(layers: Vec<Layer<S>>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        match &self.layers[0] {
            Layer::Dense(l) => l.in_dim(),
            Layer::Conv1d(l) => l.in_ch(),
            Layer::Recurrent(l) => l.in_dim(),
            Layer::AttentionPool(l) => l.hidden(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self.layers.last().expect("empty net") {
            Layer::Dense(l) => l.out_dim(),
            Layer::Conv1d(l) => l.out_ch(),
            Layer::Recurrent(l) => l.hidden(),
            Layer::AttentionPool(l) => l.hidden(),
        }
    }

    /// Named parameter tensors in a stable order (`l{i}.{name}`).
    pub fn named_tensors(&self) -> Vec<(String, &Mat<S>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(l) => {
                    out.push((format!("l{i}.w"), &l.w));
                    out.push((format!("l{i}.b"), &l.b));
                }
                Layer::Conv1d(l) => {
                    out.push((format!("l{i}.w"), &l.w));
                    out.push((format!("l{i}.b"), &l.b));
                }
                Layer::Recurrent(l) => {
                    for (n, t) in l.tensors() {
                        out.push((format!("l{i}.{n}"), t));
                    }
                }
                Layer::AttentionPool(l) => {
                    for (n, t) in l.tensors() {
                        out.push((format!("l{i}.{n}"), t));
                    }
                }
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat<S>> {
        let mut out: Vec<&mut Mat<S>> = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Dense(l) => {
                    out.push(&mut l.w);
                    out.push(&mut l.b);
                }
                Layer::Conv1d(l) => {
                    out.push(&mut l.w);
                    out.push(&mut l.b);
                }
                Layer::Recurrent(l) => {
                    for (_, t) in l.tensors_mut() {
                        out.push(t);
                    }
                }
                Layer::AttentionPool(l) => {
                    for (_, t) in l.tensors_mut() {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    pub fn cast<T: Real>(&self) -> Net<T> {
        Net {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Dense(d) => Layer::Dense(d.cast()),
                    Layer::Conv1d(c) => Layer::Conv1d(c.cast()),
                    Layer::Recurrent(g) => Layer::Recurrent(g.cast()),
                    Layer::AttentionPool(a) => Layer::AttentionPool(a.cast()),
                })
                .collect(),
        }
    }
}

impl Net<f32> {
    /// Builds a network from specs with Xavier-uniform weights.
    pub fn init<R: Rng>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut prev_out: Option<usize> = None;
        for spec in specs {
            spec.validate()?;
            if let Some(p) = prev_out {
                if p != spec.in_dim {
                    return Err(Error::Config(format!(
                        "layer input {} does not match previous output {}",
                        spec.in_dim, p
                    )));
                }
            }
            prev_out = Some(spec.out_dim);
            layers.push(match spec.kind {
                LayerKind::Dense => {
                    Layer::Dense(Dense::new(spec.in_dim, spec.out_dim, spec.activation, rng))
                }
                LayerKind::Conv1d => Layer::Conv1d(Conv1d::new(
                    spec.in_dim,
                    spec.out_dim,
                    spec.kernel_width,
                    spec.activation,
                    rng,
                )),
                LayerKind::Recurrent => Layer::Recurrent(GruCell::new(spec.in_dim, spec.out_dim, rng)),
                LayerKind::AttentionPool => Layer::AttentionPool(AttentionPool::new(spec.in_dim, rng)),
            });
        }
        Ok(Self { layers })
    }
}

/// Runs the chain on `x` (rows = positions / batch entries).
pub fn forward<S: Real>(net: &Net<S>, x: &Mat<S>) -> Result<(Mat<S>, NetCache<S>)> {
    if x.cols() != net.in_dim() {
        return Err(Error::Dimension(format!(
            "input width {} does not match first layer in_dim {}",
            x.cols(),
            net.in_dim()
        )));
    }
    let input_shape = x.shape();
    let mut cur = x.clone();
    let mut caches = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        match layer {
            Layer::Dense(l) => {
                let (y, c) = l.forward(&cur);
                caches.push(LayerCache::Dense(c));
                cur = y;
            }
            Layer::Conv1d(l) => {
                let (y, c) = l.forward(&cur);
                caches.push(LayerCache::Conv1d(c));
                cur = y;
            }
            Layer::Recurrent(l) => {
                if cur.rows() == 0 {
                    return Err(Error::Domain("recurrent layer on empty sequence".into()));
                }
                let xs: Vec<Vec<S>> = (0..cur.rows()).map(|r| cur.row(r).to_vec()).collect();
                let (hiddens, c) = l.encode(&xs);
                caches.push(LayerCache::Recurrent(c));
                cur = Mat::from_rows(&hiddens)?;
            }
            Layer::AttentionPool(l) => {
                if cur.rows() == 0 {
                    return Err(Error::Domain("attention-pool on empty input".into()));
                }
                let (y, c) = l.forward(&cur);
                caches.push(LayerCache::AttentionPool(c));
                cur = y;
            }
        }
    }
    let output_shape = cur.shape();
    Ok((
        cur,
        NetCache {
            per_layer: caches,
            input_shape,
            output_shape,
        },
    ))
}

/// Backpropagates `upstream` (dL/doutput) through the chain.
pub fn backward<S: Real>(
    net: &Net<S>,
    cache: &NetCache<S>,
    upstream: &Mat<S>,
) -> Result<NetGrads<S>> {
    if cache.per_layer.len() != net.layers.len() {
        return Err(Error::Config(
            "cache does not belong to this network".into(),
        ));
    }
    if upstream.shape() != cache.output_shape {
        return Err(Error::Dimension(format!(
            "upstream gradient shape {:?} does not match output {:?}",
            upstream.shape(),
            cache.output_shape
        )));
    }
    let mut grads: Vec<Option<LayerGrads<S>>> = (0..net.layers.len()).map(|_| None).collect();
    let mut d = upstream.clone();
    for (i, layer) in net.layers.iter().enumerate().rev() {
        match (layer, &cache.per_layer[i]) {
            (Layer::Dense(l), LayerCache::Dense(c)) => {
                let (dx, g) = l.backward(c, &d);
                grads[i] = Some(LayerGrads::Dense(g));
                d = dx;
            }
            (Layer::Conv1d(l), LayerCache::Conv1d(c)) => {
                let (dx, g) = l.backward(c, &d);
                grads[i] = Some(LayerGrads::Conv1d(g));
                d = dx;
            }
            (Layer::Recurrent(l), LayerCache::Recurrent(c)) => {
                let d_hiddens: Vec<Vec<S>> = (0..d.rows()).map(|r| d.row(r).to_vec()).collect();
                let (g, dxs) = l.backward(c, &d_hiddens);
                grads[i] = Some(LayerGrads::Recurrent(g));
                d = Mat::from_rows(&dxs)?;
            }
            (Layer::AttentionPool(l), LayerCache::AttentionPool(c)) => {
                let (dx, g) = l.backward(c, &d);
                grads[i] = Some(LayerGrads::AttentionPool(g));
                d = dx;
            }
            _ => {
                return Err(Error::Config(
                    "cache does not belong to this network".into(),
                ))
            }
        }
    }
    if d.shape() != cache.input_shape {
        return Err(Error::Dimension(
            "input gradient shape drifted from the cached input".into(),
        ));
    }
    Ok(NetGrads {
        layers: grads.into_iter().map(|g| g.unwrap()).collect(),
        input: d,
    })
}

impl<S: Real> NetGrads<S> {
    /// Gradient tensors in the same order as [`Net::named_tensors`].
    pub fn tensors(&self) -> Vec<&Mat<S>> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGrads::Dense(d) => {
                    out.push(&d.w);
                    out.push(&d.b);
                }
                LayerGrads::Conv1d(c) => {
                    out.push(&c.w);
                    out.push(&c.b);
                }
                LayerGrads::Recurrent(r) => {
                    for (_, t) in r.tensors() {
                        out.push(t);
                    }
                }
                LayerGrads::AttentionPool(a) => {
                    for (_, t) in a.tensors() {
                        out.push(t);
                    }
                }
            }
        }
        out
    }
}

/// Sums gradient tensors of a second pass into the first (same net, same
/// order).
pub fn accumulate_grads<S: Real>(into: &mut NetGrads<S>, other: &NetGrads<S>) {
    assert_eq!(into.layers.len(), other.layers.len());
    for (a, b) in into.layers.iter_mut().zip(other.layers.iter()) {
        match (a, b) {
            (LayerGrads::Dense(x), LayerGrads::Dense(y)) => {
                x.w.add_assign(&y.w);
                x.b.add_assign(&y.b);
            }
            (LayerGrads::Conv1d(x), LayerGrads::Conv1d(y)) => {
                x.w.add_assign(&y.w);
                x.b.add_assign(&y.b);
            }
            (LayerGrads::Recurrent(x), LayerGrads::Recurrent(y)) => {
                x.wz.add_assign(&y.wz);
                x.uz.add_assign(&y.uz);
                x.bz.add_assign(&y.bz);
                x.wr.add_assign(&y.wr);
                x.ur.add_assign(&y.ur);
                x.br.add_assign(&y.br);
                x.wn.add_assign(&y.wn);
                x.un.add_assign(&y.un);
                x.bn.add_assign(&y.bn);
            }
            (LayerGrads::AttentionPool(x), LayerGrads::AttentionPool(y)) => {
                x.w.add_assign(&y.w);
                x.b.add_assign(&y.b);
                x.v.add_assign(&y.v);
            }
            _ => panic!("gradient layer kinds do not line up"),
        }
    }
}

/// Verifies analytic gradients against central finite differences at f64.
/// `loss` maps the network output to a scalar and its gradient. Returns
/// the max over parameters of |analytic - numeric| / max(|a|, |n|, 1e-8).
pub fn gradient_check<F>(net: &Net<f32>, x: &Matrix, loss: F) -> Result<f64>
where
    F: Fn(&Mat<f64>) -> (f64, Mat<f64>),
{
    let mut net64 = net.cast::<f64>();
    let x64: Mat<f64> = x.cast();

    let (y, cache) = forward(&net64, &x64)?;
    let (_, dy) = loss(&y);
    let grads = backward(&net64, &cache, &dy)?;
    let analytic: Vec<Mat<f64>> = grads.tensors().into_iter().cloned().collect();

    let h = 1e-4;
    let mut max_rel = 0.0f64;
    let n_tensors = analytic.len();
    for ti in 0..n_tensors {
        let n_elems = analytic[ti].len();
        for ei in 0..n_elems {
            let orig = {
                let t = &mut net64.tensors_mut()[ti];
                let v = t.as_slice()[ei];
                t.as_mut_slice()[ei] = v + h;
                v
            };
            let (y_plus, _) = forward(&net64, &x64)?;
            let (l_plus, _) = loss(&y_plus);
            net64.tensors_mut()[ti].as_mut_slice()[ei] = orig - h;
            let (y_minus, _) = forward(&net64, &x64)?;
            let (l_minus, _) = loss(&y_minus);
            net64.tensors_mut()[ti].as_mut_slice()[ei] = orig;

            let numeric = (l_plus - l_minus) / (2.0 * h);
            let a = analytic[ti].as_slice()[ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

/// Encodes a sequence of vectors with a gated recurrent cell from a zero
/// initial hidden state. Returns the final hidden plus every hidden.
pub fn recurrent_encode<S: Real>(
    cell: &GruCell<S>,
    token_vectors: &[Vec<S>],
) -> Result<(Vec<S>, Vec<Vec<S>>)> {
    if token_vectors.is_empty() {
        return Err(Error::Domain("recurrent encode of an empty sequence".into()));
    }
    for v in token_vectors {
        if v.len() != cell.in_dim() {
            return Err(Error::Dimension(format!(
                "token vector width {} does not match cell input {}",
                v.len(),
                cell.in_dim()
            )));
        }
    }
    let (hiddens, _) = cell.encode(token_vectors);
    Ok((hiddens.last().unwrap().clone(), hiddens))
}

/// Softmax-weighted pooling of hidden rows into one context vector.
pub fn attention_pool<S: Real>(params: &AttentionPool<S>, hiddens: &Mat<S>) -> Result<Mat<S>> {
    if hiddens.rows() == 0 {
        return Err(Error::Domain("attention pool over an empty input".into()));
    }
    if hiddens.cols() != params.hidden() {
        return Err(Error::Dimension(format!(
            "hidden width {} does not match attention width {}",
            hiddens.cols(),
            params.hidden()
        )));
    }
    Ok(params.forward(hiddens).0)
}

/// Sum-of-values loss, handy for finite-difference checks.
pub fn sum_loss(y: &Mat<f64>) -> (f64, Mat<f64>) {
    let mut grad = Mat::zeros(y.rows(), y.cols());
    grad.fill(1.0);
    (y.sum(), grad)
}

/// Sum-of-squares loss, handy for finite-difference checks.
pub fn sum_of_squares_loss(y: &Mat<f64>) -> (f64, Mat<f64>) {
    let mut grad = Mat::zeros(y.rows(), y.cols());
    let mut loss = 0.0;
    for (g, &v) in grad.as_mut_slice().iter_mut().zip(y.as_slice()) {
        loss += v * v;
        *g = 2.0 * v;
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_dense_layer_passes_input_through() {
        let net = Net::from_layers(vec![Layer::Dense(Dense {
            w: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            b: Matrix::zeros(1, 2),
            act: Activation::Identity,
        })]);
        let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let (y, _) = forward(&net, &x).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let net = Net::from_layers(vec![Layer::Dense(Dense {
            w: Matrix::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            b: Matrix::zeros(1, 3),
            act: Activation::Softmax,
        })]);
        let x = Matrix::zeros(1, 3);
        let (y, _) = forward(&net, &x).unwrap();
        for &p in y.as_slice() {
            assert!((p - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn two_layer_net_matches_straight_line_evaluation() {
        // hand evaluation of the same weights, written without the layer plumbing
        let mut r = rng(11);
        let net = Net::init(
            &[
                LayerSpec::dense(3, 2, Activation::Tanh),
                LayerSpec::dense(2, 2, Activation::Identity),
            ],
            &mut r,
        )
        .unwrap();
        let x = Matrix::from_vec(1, 3, vec![0.3, -0.8, 0.5]).unwrap();
        let (y, _) = forward(&net, &x).unwrap();
        assert_eq!(y.shape(), (1, 2));
        assert!(y.all_finite());

        let (w1, b1, w2, b2) = match (&net.layers()[0], &net.layers()[1]) {
            (Layer::Dense(a), Layer::Dense(b)) => (&a.w, &a.b, &b.w, &b.b),
            _ => unreachable!(),
        };
        let mut hidden = [0.0f32; 2];
        for j in 0..2 {
            let mut acc = b1.at(0, j);
            for i in 0..3 {
                acc += x.at(0, i) * w1.at(i, j);
            }
            hidden[j] = acc.tanh();
        }
        for j in 0..2 {
            let mut acc = b2.at(0, j);
            for i in 0..2 {
                acc += hidden[i] * w2.at(i, j);
            }
            assert!((y.at(0, j) - acc).abs() < 1e-6, "column {j}");
        }
    }

    #[test]
    fn scalar_chain_rule_gives_input_as_weight_gradient() {
        // 1x1 identity layer, loss = output itself -> dW = x
        let net = Net::from_layers(vec![Layer::Dense(Dense {
            w: Matrix::from_vec(1, 1, vec![0.7]).unwrap(),
            b: Matrix::zeros(1, 1),
            act: Activation::Identity,
        })]);
        let x = Matrix::from_vec(1, 1, vec![2.5]).unwrap();
        let (_, cache) = forward(&net, &x).unwrap();
        let upstream = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let grads = backward(&net, &cache, &upstream).unwrap();
        match &grads.layers[0] {
            LayerGrads::Dense(g) => assert_eq!(g.w.at(0, 0), 2.5),
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_upstream_gradient_zeroes_all_parameter_gradients() {
        let mut r = rng(3);
        let net = Net::init(
            &[
                LayerSpec::dense(4, 3, Activation::Relu),
                LayerSpec::dense(3, 2, Activation::Sigmoid),
            ],
            &mut r,
        )
        .unwrap();
        let x = Matrix::xavier(1, 4, &mut r);
        let (_, cache) = forward(&net, &x).unwrap();
        let grads = backward(&net, &cache, &Matrix::zeros(1, 2)).unwrap();
        for t in grads.tensors() {
            assert!(t.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mismatched_input_width_is_a_dimension_error() {
        let mut r = rng(4);
        let net = Net::init(&[LayerSpec::dense(3, 2, Activation::Identity)], &mut r).unwrap();
        let x = Matrix::zeros(1, 5);
        assert!(matches!(forward(&net, &x), Err(Error::Dimension(_))));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut r = rng(5);
        let net = Net::init(&[LayerSpec::dense(3, 2, Activation::Identity)], &mut r).unwrap();
        let other = Net::init(
            &[
                LayerSpec::dense(3, 4, Activation::Identity),
                LayerSpec::dense(4, 2, Activation::Identity),
            ],
            &mut r,
        )
        .unwrap();
        let x = Matrix::zeros(1, 3);
        let (_, cache) = forward(&other, &x).unwrap();
        let up = Matrix::zeros(1, 2);
        assert!(backward(&net, &cache, &up).is_err());
    }

    #[test]
    fn gradient_check_dense_tanh() {
        for seed in 0..5 {
            let mut r = rng(100 + seed);
            let net = Net::init(
                &[
                    LayerSpec::dense(4, 5, Activation::Tanh),
                    LayerSpec::dense(5, 3, Activation::Identity),
                ],
                &mut r,
            )
            .unwrap();
            let x = Matrix::xavier(2, 4, &mut r);
            let err = gradient_check(&net, &x, sum_of_squares_loss).unwrap();
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn gradient_check_conv1d() {
        for seed in 0..5 {
            let mut r = rng(200 + seed);
            let net = Net::init(
                &[LayerSpec::conv1d(3, 4, 3, Activation::Tanh)],
                &mut r,
            )
            .unwrap();
            let x = Matrix::xavier(6, 3, &mut r);
            let err = gradient_check(&net, &x, sum_of_squares_loss).unwrap();
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn gradient_check_recurrent_length_three() {
        for seed in 0..5 {
            let mut r = rng(300 + seed);
            let net = Net::init(&[LayerSpec::recurrent(3, 4)], &mut r).unwrap();
            let x = Matrix::xavier(3, 3, &mut r);
            let err = gradient_check(&net, &x, sum_of_squares_loss).unwrap();
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn gradient_check_attention_pool() {
        for seed in 0..5 {
            let mut r = rng(400 + seed);
            let net = Net::init(
                &[LayerSpec::recurrent(3, 4), LayerSpec::attention_pool(4)],
                &mut r,
            )
            .unwrap();
            let x = Matrix::xavier(5, 3, &mut r);
            let err = gradient_check(&net, &x, sum_of_squares_loss).unwrap();
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn gradient_check_softmax_head() {
        let mut r = rng(500);
        let net = Net::init(
            &[
                LayerSpec::dense(3, 4, Activation::Relu),
                LayerSpec::dense(4, 3, Activation::Softmax),
            ],
            &mut r,
        )
        .unwrap();
        let x = Matrix::xavier(1, 3, &mut r);
        // cross-entropy-ish loss against a fixed target distribution
        let loss = |y: &Mat<f64>| {
            let target = [0.2, 0.5, 0.3];
            let mut l = 0.0;
            let mut g = Mat::zeros(1, 3);
            for j in 0..3 {
                let p = y.at(0, j).max(1e-12);
                l -= target[j] * p.ln();
                *g.at_mut(0, j) = -target[j] / p;
            }
            (l, g)
        };
        let err = gradient_check(&net, &x, loss).unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn recurrent_encode_length_one_final_equals_all() {
        let mut r = rng(6);
        let cell = GruCell::new(3, 4, &mut r);
        let xs = vec![vec![0.1, -0.2, 0.3]];
        let (final_h, all) = recurrent_encode(&cell, &xs).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0], final_h);
    }

    #[test]
    fn recurrent_encode_is_deterministic() {
        let mut r = rng(7);
        let cell = GruCell::new(3, 4, &mut r);
        let xs = vec![vec![0.1, -0.2, 0.3], vec![1.0, 0.0, -1.0]];
        let (a, _) = recurrent_encode(&cell, &xs).unwrap();
        let (b, _) = recurrent_encode(&cell, &xs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recurrent_encode_rejects_empty() {
        let mut r = rng(8);
        let cell = GruCell::<f32>::new(3, 4, &mut r);
        assert!(matches!(
            recurrent_encode(&cell, &[]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn attention_pool_single_vector_is_identity() {
        let mut r = rng(9);
        let pool = AttentionPool::new(4, &mut r);
        let h = Matrix::xavier(1, 4, &mut r);
        let ctx = attention_pool(&pool, &h).unwrap();
        for (a, b) in ctx.as_slice().iter().zip(h.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_pool_of_identical_rows_returns_that_row() {
        let mut r = rng(10);
        let pool = AttentionPool::new(3, &mut r);
        let row = vec![0.4f32, -1.2, 0.9];
        let h = Matrix::from_rows(&[row.clone(), row.clone()]).unwrap();
        let ctx = attention_pool(&pool, &h).unwrap();
        for (a, b) in ctx.as_slice().iter().zip(row.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let mut r = rng(12);
        let pool = AttentionPool::new(5, &mut r);
        let h = Matrix::xavier(7, 5, &mut r);
        let (_, cache) = pool.forward(&h);
        let sum: f32 = AttentionPool::weights_of(&cache).iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(AttentionPool::weights_of(&cache).iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn attention_pool_rejects_empty() {
        let mut r = rng(13);
        let pool = AttentionPool::<f32>::new(4, &mut r);
        let empty = Matrix::zeros(0, 4);
        assert!(matches!(
            attention_pool(&pool, &empty),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn layer_spec_validation() {
        assert!(LayerSpec::dense(0, 2, Activation::Identity).validate().is_err());
        assert!(LayerSpec::conv1d(2, 2, 2, Activation::Identity).validate().is_err());
        assert!(LayerSpec::conv1d(2, 2, 3, Activation::Identity).validate().is_ok());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut r = rng(14);
        let net = Net::init(
            &[
                LayerSpec::conv1d(3, 4, 3, Activation::Relu),
                LayerSpec::recurrent(4, 4),
                LayerSpec::attention_pool(4),
                LayerSpec::dense(4, 2, Activation::Softmax),
            ],
            &mut r,
        )
        .unwrap();
        let x = Matrix::xavier(6, 3, &mut r);
        let (a, _) = forward(&net, &x).unwrap();
        let (b, _) = forward(&net, &x).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}
