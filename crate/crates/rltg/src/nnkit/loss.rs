use super::matrix::Mat;
use super::real::Real;

/// Mean squared error. Returns the loss and dL/dpred.
pub fn mse<S: Real>(pred: &Mat<S>, target: &Mat<S>) -> (S, Mat<S>) {
    assert_eq!(pred.shape(), target.shape(), "mse shape mismatch");
    let n = S::from_usize(pred.len());
    let mut loss = S::ZERO;
    let mut grad = Mat::zeros(pred.rows(), pred.cols());
    let two = S::ONE + S::ONE;
    for (i, (&p, &t)) in pred
        .as_slice()
        .iter()
        .zip(target.as_slice().iter())
        .enumerate()
    {
        let d = p - t;
        loss += d * d;
        grad.as_mut_slice()[i] = two * d / n;
    }
    (loss / n, grad)
}

/// Binary cross entropy for a single sigmoid output. Returns the loss and
/// dL/dp. `p` is clamped away from 0/1 to keep the logs finite.
pub fn bce<S: Real>(p: S, target: S) -> (S, S) {
    let eps = S::from_f64(1e-7);
    let p = p.maximum(eps).minimum(S::ONE - eps);
    let loss = -(target * p.ln() + (S::ONE - target) * (S::ONE - p).ln());
    let grad = (p - target) / (p * (S::ONE - p));
    (loss, grad)
}

/// Fused softmax + cross entropy on one logit row. Returns the loss,
/// dL/dlogits, and the softmax probabilities.
pub fn softmax_cross_entropy<S: Real>(logits: &[S], target: usize) -> (S, Vec<S>, Vec<S>) {
    assert!(target < logits.len(), "target index out of range");
    let mut max = logits[0];
    for &v in logits {
        max = max.maximum(v);
    }
    let mut probs: Vec<S> = logits.iter().map(|&v| (v - max).exp()).collect();
    let mut sum = S::ZERO;
    for &p in &probs {
        sum += p;
    }
    for p in probs.iter_mut() {
        *p = *p / sum;
    }
    let floor = S::from_f64(1e-12);
    let loss = -(probs[target].maximum(floor)).ln();
    let mut grad = probs.clone();
    grad[target] -= S::ONE;
    (loss, grad, probs)
}
