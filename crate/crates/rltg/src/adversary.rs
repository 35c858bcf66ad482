//! Fake-news classifier used as the frozen adversary inside the reward:
//! frozen token embeddings feed a bidirectional gated recurrent encoder,
//! attention pooling builds a context vector, and a two-layer head emits
//! the probability that a text is fake. Trained with BCE before the agent
//! and never updated afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::corpus::{Label, NewsItem, TokenSeq, Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::nnkit::{bce, AdamState, Activation, AttentionPool, Dense, GruCell, Mat, Matrix};
use crate::weights::{self, TensorSet};

#[derive(Debug, Clone)]
pub struct ClassifierParams {
    /// Frozen embedding table (a copy of the language model's).
    pub embed: Matrix,
    pub fwd: GruCell<f32>,
    pub bwd: GruCell<f32>,
    pub attn: AttentionPool<f32>,
    pub head1: Dense<f32>,
    pub head2: Dense<f32>,
}

/// Classifier quality on a labeled corpus.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub auc: f64,
    pub f1: f64,
}

struct ForwardCaches {
    fwd: Vec<crate::nnkit::GruStepCache<f32>>,
    bwd: Vec<crate::nnkit::GruStepCache<f32>>,
    attn: crate::nnkit::AttentionCache<f32>,
    head1: crate::nnkit::DenseCache<f32>,
    head2: crate::nnkit::DenseCache<f32>,
}

impl ClassifierParams {
    /// `hidden` is the per-direction recurrent width h_c; the context
    /// vector is 2*h_c. The head output layer starts at zero so an
    /// untrained classifier scores exactly 0.5.
    pub fn init<R: Rng>(embed: Matrix, hidden: usize, rng: &mut R) -> Self {
        let e = embed.cols();
        Self {
            embed,
            fwd: GruCell::new(e, hidden, rng),
            bwd: GruCell::new(e, hidden, rng),
            attn: AttentionPool::new(2 * hidden, rng),
            head1: Dense::new(2 * hidden, hidden, Activation::Relu, rng),
            head2: Dense {
                w: Matrix::zeros(hidden, 1),
                b: Matrix::zeros(1, 1),
                act: Activation::Sigmoid,
            },
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    fn effective_tokens<'a>(&self, seq: &'a [usize]) -> &'a [usize] {
        let mut end = seq.len();
        while end > 0 && seq[end - 1] == PAD {
            end -= 1;
        }
        &seq[..end]
    }

    fn forward(&self, tokens: &[usize]) -> Result<(f32, ForwardCaches)> {
        if tokens.is_empty() {
            return Err(Error::Domain(
                "classifier input is empty (or all padding)".into(),
            ));
        }
        for &t in tokens {
            if t >= self.embed.rows() {
                return Err(Error::Data(format!(
                    "token {t} outside embedding table of {} rows",
                    self.embed.rows()
                )));
            }
        }
        let xs: Vec<Vec<f32>> = tokens.iter().map(|&t| self.embed.row(t).to_vec()).collect();
        let xs_rev: Vec<Vec<f32>> = xs.iter().rev().cloned().collect();
        let (fwd_h, fwd_cache) = self.fwd.encode(&xs);
        let (bwd_h, bwd_cache) = self.bwd.encode(&xs_rev);

        let n = tokens.len();
        let hc = self.hidden();
        let mut concat = Mat::zeros(n, 2 * hc);
        for t in 0..n {
            let row = concat.row_mut(t);
            row[..hc].copy_from_slice(&fwd_h[t]);
            row[hc..].copy_from_slice(&bwd_h[n - 1 - t]);
        }
        let (ctx, attn_cache) = self.attn.forward(&concat);
        let (h1, h1_cache) = self.head1.forward(&ctx);
        let (out, h2_cache) = self.head2.forward(&h1);
        Ok((
            out.at(0, 0),
            ForwardCaches {
                fwd: fwd_cache,
                bwd: bwd_cache,
                attn: attn_cache,
                head1: h1_cache,
                head2: h2_cache,
            },
        ))
    }

    /// Probability in [0, 1] that the text is fake. Deterministic and
    /// invariant to trailing padding.
    pub fn confidence(&self, seq: &TokenSeq) -> Result<f32> {
        let tokens = self.effective_tokens(&seq.ids);
        Ok(self.forward(tokens)?.0)
    }

    fn adam_template(&self) -> Vec<(String, &Matrix)> {
        let mut v = Vec::new();
        for (n, t) in self.fwd.tensors() {
            v.push((format!("adv.fwd.{n}"), t));
        }
        for (n, t) in self.bwd.tensors() {
            v.push((format!("adv.bwd.{n}"), t));
        }
        for (n, t) in self.attn.tensors() {
            v.push((format!("adv.attn.{n}"), t));
        }
        v.push(("adv.head1.w".into(), &self.head1.w));
        v.push(("adv.head1.b".into(), &self.head1.b));
        v.push(("adv.head2.w".into(), &self.head2.w));
        v.push(("adv.head2.b".into(), &self.head2.b));
        v
    }

    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut v = vec![("adv.embed".to_string(), &self.embed)];
        v.extend(self.adam_template());
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        weights::save(path, &self.named_tensors())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut set = TensorSet::load(path)?;
        let embed = set.take("adv.embed")?;
        let e = embed.cols();
        let fwd = load_gru(&mut set, "adv.fwd", e)?;
        let hc = fwd.hidden();
        let bwd = load_gru(&mut set, "adv.bwd", e)?;
        Ok(Self {
            embed,
            fwd,
            bwd,
            attn: AttentionPool {
                w: set.take_expect("adv.attn.w", 2 * hc, 2 * hc)?,
                b: set.take_expect("adv.attn.b", 1, 2 * hc)?,
                v: set.take_expect("adv.attn.v", 2 * hc, 1)?,
            },
            head1: Dense {
                w: set.take_expect("adv.head1.w", 2 * hc, hc)?,
                b: set.take_expect("adv.head1.b", 1, hc)?,
                act: Activation::Relu,
            },
            head2: Dense {
                w: set.take_expect("adv.head2.w", hc, 1)?,
                b: set.take_expect("adv.head2.b", 1, 1)?,
                act: Activation::Sigmoid,
            },
        })
    }
}

fn load_gru(set: &mut TensorSet, prefix: &str, e: usize) -> Result<GruCell<f32>> {
    let wz = set.take(&format!("{prefix}.wz"))?;
    let h = wz.cols();
    Ok(GruCell {
        wz,
        uz: set.take_expect(&format!("{prefix}.uz"), h, h)?,
        bz: set.take_expect(&format!("{prefix}.bz"), 1, h)?,
        wr: set.take_expect(&format!("{prefix}.wr"), e, h)?,
        ur: set.take_expect(&format!("{prefix}.ur"), h, h)?,
        br: set.take_expect(&format!("{prefix}.br"), 1, h)?,
        wn: set.take_expect(&format!("{prefix}.wn"), e, h)?,
        un: set.take_expect(&format!("{prefix}.un"), h, h)?,
        bn: set.take_expect(&format!("{prefix}.bn"), 1, h)?,
    })
}

/// Encodes labeled items for training/evaluation. Fake maps to target 1.
pub fn encode_corpus(items: &[NewsItem], vocab: &Vocabulary) -> Vec<(TokenSeq, bool)> {
    items
        .iter()
        .map(|item| (vocab.encode_text(&item.text), item.label == Label::Fake))
        .collect()
}

/// Seeded prefix crops for training on partial texts (the classifier
/// scores growing generations at reward time). Crops of fake examples
/// always extend past the first token that never occurs in any real
/// example, so identical-looking prefixes never carry both labels.
pub fn prefix_crops(examples: &[(TokenSeq, bool)], seed: u64) -> Vec<(TokenSeq, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real_vocab: std::collections::HashSet<usize> = examples
        .iter()
        .filter(|(_, fake)| !fake)
        .flat_map(|(s, _)| s.ids.iter().copied())
        .collect();
    let mut crops = Vec::new();
    for (seq, fake) in examples {
        if seq.len() < 14 {
            continue;
        }
        let min_len = if *fake {
            match seq.ids.iter().position(|t| !real_vocab.contains(t)) {
                Some(p) => p + 2,
                None => continue,
            }
        } else {
            12
        };
        if min_len >= seq.len() {
            continue;
        }
        for _ in 0..2 {
            let len = min_len + (rng.random::<u64>() % (seq.len() - min_len + 1) as u64) as usize;
            crops.push((TokenSeq::new(seq.ids[..len.min(seq.len())].to_vec()), *fake));
        }
    }
    crops
}

/// BCE training over labeled sequences; embeddings stay frozen. Returns
/// the mean loss per epoch (empty for zero epochs).
pub fn train_classifier(
    params: &mut ClassifierParams,
    examples: &[(TokenSeq, bool)],
    epochs: usize,
    lr: f32,
    seed: u64,
) -> Result<Vec<f32>> {
    let fakes = examples.iter().filter(|(_, y)| *y).count();
    if fakes == 0 || fakes == examples.len() {
        return Err(Error::Data(
            "classifier training needs both real and fake examples".into(),
        ));
    }
    let shapes: Vec<(String, usize, usize)> = params
        .adam_template()
        .iter()
        .map(|(n, t)| (n.clone(), t.rows(), t.cols()))
        .collect();
    let mut adam = AdamState::new(lr, &shapes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        for i in (1..order.len()).rev() {
            let j = (rng.random::<u64>() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut total = 0.0f64;
        let mut count = 0usize;
        for &i in &order {
            let (seq, is_fake) = &examples[i];
            let tokens = params.effective_tokens(&seq.ids).to_vec();
            if tokens.is_empty() {
                continue;
            }
            total += train_step(params, &mut adam, &tokens, *is_fake)? as f64;
            count += 1;
        }
        if count == 0 {
            return Err(Error::Data("no non-empty training sequences".into()));
        }
        trace.push((total / count as f64) as f32);
    }
    Ok(trace)
}

fn train_step(
    params: &mut ClassifierParams,
    adam: &mut AdamState,
    tokens: &[usize],
    is_fake: bool,
) -> Result<f32> {
    let (p, caches) = params.forward(tokens)?;
    let target = if is_fake { 1.0 } else { 0.0 };
    let (loss, dp) = bce(p, target);

    let upstream = Mat::from_vec(1, 1, vec![dp])?;
    let (dh1, g_head2) = params.head2.backward(&caches.head2, &upstream);
    let (dctx, g_head1) = params.head1.backward(&caches.head1, &dh1);
    let (dconcat, g_attn) = params.attn.backward(&caches.attn, &dctx);

    let n = tokens.len();
    let hc = params.hidden();
    let mut d_fwd: Vec<Vec<f32>> = vec![vec![0.0; hc]; n];
    let mut d_bwd: Vec<Vec<f32>> = vec![vec![0.0; hc]; n];
    for t in 0..n {
        let row = dconcat.row(t);
        d_fwd[t].copy_from_slice(&row[..hc]);
        d_bwd[n - 1 - t].copy_from_slice(&row[hc..]);
    }
    let (g_fwd, _) = params.fwd.backward(&caches.fwd, &d_fwd);
    let (g_bwd, _) = params.bwd.backward(&caches.bwd, &d_bwd);

    let mut grads: Vec<&Matrix> = Vec::new();
    for (_, t) in g_fwd.tensors() {
        grads.push(t);
    }
    for (_, t) in g_bwd.tensors() {
        grads.push(t);
    }
    for (_, t) in g_attn.tensors() {
        grads.push(t);
    }
    grads.push(&g_head1.w);
    grads.push(&g_head1.b);
    grads.push(&g_head2.w);
    grads.push(&g_head2.b);

    let mut tensors: Vec<&mut Matrix> = Vec::new();
    for (_, t) in params.fwd.tensors_mut() {
        tensors.push(t);
    }
    for (_, t) in params.bwd.tensors_mut() {
        tensors.push(t);
    }
    for (_, t) in params.attn.tensors_mut() {
        tensors.push(t);
    }
    tensors.push(&mut params.head1.w);
    tensors.push(&mut params.head1.b);
    tensors.push(&mut params.head2.w);
    tensors.push(&mut params.head2.b);

    adam.step(&mut tensors, &grads)?;
    Ok(loss)
}

/// Metrics from raw scores: accuracy at threshold 0.5, rank-statistic AUC
/// (ties counted half), and F1 of the fake class.
pub fn evaluate_scores(scores: &[f32], labels: &[bool]) -> Result<ClassifierMetrics> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Metrics("scores and labels must align".into()));
    }
    let n_fake = labels.iter().filter(|&&l| l).count();
    let n_real = labels.len() - n_fake;
    if n_fake == 0 || n_real == 0 {
        return Err(Error::Metrics(
            "AUC is undefined on a single-class corpus".into(),
        ));
    }

    let mut correct = 0usize;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        let pred_fake = s > 0.5;
        if pred_fake == y {
            correct += 1;
        }
        match (pred_fake, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let accuracy = correct as f64 / labels.len() as f64;
    let f1 = if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };

    // Mann-Whitney AUC via average ranks
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg_rank;
        }
        i = j + 1;
    }
    let rank_sum_fake: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y)
        .map(|(&r, _)| r)
        .sum();
    let auc =
        (rank_sum_fake - (n_fake * (n_fake + 1)) as f64 / 2.0) / (n_fake as f64 * n_real as f64);

    Ok(ClassifierMetrics { accuracy, auc, f1 })
}

/// Scores a labeled corpus with the classifier and reports metrics.
pub fn evaluate_classifier(
    params: &ClassifierParams,
    examples: &[(TokenSeq, bool)],
) -> Result<ClassifierMetrics> {
    let mut scores = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    for (seq, y) in examples {
        scores.push(params.confidence(seq)?);
        labels.push(*y);
    }
    evaluate_scores(&scores, &labels)
}
