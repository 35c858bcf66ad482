//! The state creator: two autoencoders compress what the agent needs to
//! see. AE1 squeezes the language model's context hidden vector into c_g;
//! AE2 squeezes the embedded top-K candidate matrix into c_w. The RL state
//! is their concatenation — the encoders never see raw token identities,
//! only embedded vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::corpus::TokenSeq;
use crate::error::{Error, Result};
use crate::langmodel::{top_k, LanguageModel};
use crate::nnkit::{mse, AdamState, Activation, Conv1d, Dense, Mat, Matrix};
use crate::weights::{self, TensorSet};

/// The RL state vector: c_g followed by c_w.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec {
    pub values: Vec<f32>,
}

impl StateVec {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// MLP autoencoder over the LM hidden state: e -> 2d_g -> d_g and back.
#[derive(Debug, Clone)]
pub struct Ae1Params {
    pub enc1: Dense<f32>,
    pub enc2: Dense<f32>,
    pub dec1: Dense<f32>,
    pub dec2: Dense<f32>,
}

impl Ae1Params {
    pub fn init<R: Rng>(embed_dim: usize, encoded_dim: usize, rng: &mut R) -> Self {
        let wide = 2 * encoded_dim;
        Self {
            enc1: Dense::new(embed_dim, wide, Activation::Relu, rng),
            enc2: Dense::new(wide, encoded_dim, Activation::Identity, rng),
            dec1: Dense::new(encoded_dim, wide, Activation::Relu, rng),
            dec2: Dense::new(wide, embed_dim, Activation::Identity, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.enc1.in_dim()
    }

    pub fn encoded_dim(&self) -> usize {
        self.enc2.out_dim()
    }

    /// c_g for one hidden vector.
    pub fn encode(&self, hidden: &[f32]) -> Result<Vec<f32>> {
        if hidden.len() != self.in_dim() {
            return Err(Error::Config(format!(
                "hidden length {} does not match encoder input {}",
                hidden.len(),
                self.in_dim()
            )));
        }
        let x = Mat::row_vec(hidden.to_vec());
        let (h1, _) = self.enc1.forward(&x);
        let (code, _) = self.enc2.forward(&h1);
        Ok(code.row(0).to_vec())
    }

    pub fn reconstruct(&self, hidden: &[f32]) -> Result<Vec<f32>> {
        let code = Mat::row_vec(self.encode(hidden)?);
        let (d1, _) = self.dec1.forward(&code);
        let (out, _) = self.dec2.forward(&d1);
        Ok(out.row(0).to_vec())
    }

    fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("ae1.enc1.w".into(), &self.enc1.w),
            ("ae1.enc1.b".into(), &self.enc1.b),
            ("ae1.enc2.w".into(), &self.enc2.w),
            ("ae1.enc2.b".into(), &self.enc2.b),
            ("ae1.dec1.w".into(), &self.dec1.w),
            ("ae1.dec1.b".into(), &self.dec1.b),
            ("ae1.dec2.w".into(), &self.dec2.w),
            ("ae1.dec2.b".into(), &self.dec2.b),
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        weights::save(path, &self.named_tensors())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut set = TensorSet::load(path)?;
        let enc1_w = set.take("ae1.enc1.w")?;
        let (e, wide) = enc1_w.shape();
        let dg = wide / 2;
        Ok(Self {
            enc1: Dense {
                w: enc1_w,
                b: set.take_expect("ae1.enc1.b", 1, wide)?,
                act: Activation::Relu,
            },
            enc2: Dense {
                w: set.take_expect("ae1.enc2.w", wide, dg)?,
                b: set.take_expect("ae1.enc2.b", 1, dg)?,
                act: Activation::Identity,
            },
            dec1: Dense {
                w: set.take_expect("ae1.dec1.w", dg, wide)?,
                b: set.take_expect("ae1.dec1.b", 1, wide)?,
                act: Activation::Relu,
            },
            dec2: Dense {
                w: set.take_expect("ae1.dec2.w", wide, e)?,
                b: set.take_expect("ae1.dec2.b", 1, e)?,
                act: Activation::Identity,
            },
        })
    }
}

pub const AE2_CHANNELS: usize = 32;

/// Convolutional autoencoder over the (K, e) embedded top-K matrix.
/// Encoder: conv1d (e -> 32 channels, width 3, relu), then the per-rank
/// conv outputs are flattened position-wise into the dense bottleneck so
/// c_w keeps track of which rank holds which candidate (the agent's
/// actions are rank picks, so rank identity must survive the encoding).
/// The decoder mirrors: dense back to (K, 32), then the output conv.
#[derive(Debug, Clone)]
pub struct Ae2Params {
    pub conv: Conv1d<f32>,
    pub enc: Dense<f32>,
    pub dec: Dense<f32>,
    pub deconv: Conv1d<f32>,
    pub k: usize,
}

impl Ae2Params {
    pub fn init<R: Rng>(embed_dim: usize, k: usize, encoded_dim: usize, rng: &mut R) -> Self {
        Self {
            conv: Conv1d::new(embed_dim, AE2_CHANNELS, 3, Activation::Relu, rng),
            enc: Dense::new(k * AE2_CHANNELS, encoded_dim, Activation::Identity, rng),
            dec: Dense::new(encoded_dim, k * AE2_CHANNELS, Activation::Identity, rng),
            deconv: Conv1d::new(AE2_CHANNELS, embed_dim, 3, Activation::Identity, rng),
            k,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.conv.in_ch()
    }

    pub fn encoded_dim(&self) -> usize {
        self.enc.out_dim()
    }

    /// c_w for one embedded candidate matrix (k, e).
    pub fn encode(&self, candidates: &Matrix) -> Result<Vec<f32>> {
        if candidates.rows() != self.k || candidates.cols() != self.embed_dim() {
            return Err(Error::Config(format!(
                "candidate matrix {:?} does not match ({}, {})",
                candidates.shape(),
                self.k,
                self.embed_dim()
            )));
        }
        let (conv_out, _) = self.conv.forward(candidates);
        let flat = Mat::row_vec(conv_out.as_slice().to_vec());
        let (code, _) = self.enc.forward(&flat);
        Ok(code.row(0).to_vec())
    }

    pub fn reconstruct(&self, candidates: &Matrix) -> Result<Matrix> {
        let code = Mat::row_vec(self.encode(candidates)?);
        let (unpooled, _) = self.dec.forward(&code);
        let grid = Matrix::from_vec(self.k, AE2_CHANNELS, unpooled.row(0).to_vec())?;
        let (out, _) = self.deconv.forward(&grid);
        Ok(out)
    }

    fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("ae2.conv.w".into(), &self.conv.w),
            ("ae2.conv.b".into(), &self.conv.b),
            ("ae2.enc.w".into(), &self.enc.w),
            ("ae2.enc.b".into(), &self.enc.b),
            ("ae2.dec.w".into(), &self.dec.w),
            ("ae2.dec.b".into(), &self.dec.b),
            ("ae2.deconv.w".into(), &self.deconv.w),
            ("ae2.deconv.b".into(), &self.deconv.b),
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        weights::save(path, &self.named_tensors())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut set = TensorSet::load(path)?;
        let conv_w = set.take("ae2.conv.w")?;
        let e = conv_w.rows() / 3;
        let enc_w = set.take("ae2.enc.w")?;
        let dw = enc_w.cols();
        let k = enc_w.rows() / AE2_CHANNELS;
        let dec_w = set.take_expect("ae2.dec.w", dw, k * AE2_CHANNELS)?;
        Ok(Self {
            conv: Conv1d {
                w: conv_w,
                b: set.take_expect("ae2.conv.b", 1, AE2_CHANNELS)?,
                kernel: 3,
                act: Activation::Relu,
            },
            enc: Dense {
                w: enc_w,
                b: set.take_expect("ae2.enc.b", 1, dw)?,
                act: Activation::Identity,
            },
            dec: Dense {
                w: dec_w,
                b: set.take_expect("ae2.dec.b", 1, k * AE2_CHANNELS)?,
                act: Activation::Identity,
            },
            deconv: Conv1d {
                w: set.take_expect("ae2.deconv.w", 3 * AE2_CHANNELS, e)?,
                b: set.take_expect("ae2.deconv.b", 1, e)?,
                kernel: 3,
                act: Activation::Identity,
            },
            k,
        })
    }
}

/// Builds the (k, e) matrix of frozen embedding rows for a candidate list.
pub fn embed_candidates(topk: &[usize], embed: &Matrix) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(topk.len());
    for &t in topk {
        if t >= embed.rows() {
            return Err(Error::Data(format!(
                "candidate token {t} outside embedding table of {} rows",
                embed.rows()
            )));
        }
        rows.push(embed.row(t).to_vec());
    }
    Mat::from_rows(&rows)
}

/// Hidden states and top-K candidate lists harvested from random corpus
/// prefixes; the autoencoders' frozen training set.
#[derive(Debug, Clone)]
pub struct StateDataset {
    pub hiddens: Vec<Vec<f32>>,
    pub topk: Vec<Vec<usize>>,
    /// The prefixes each record came from (not persisted; kept so tests
    /// can re-derive records).
    pub prefixes: Vec<Vec<usize>>,
    pub k: usize,
}

impl StateDataset {
    pub fn len(&self) -> usize {
        self.hiddens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hiddens.is_empty()
    }
}

/// Samples `n_samples` random proper prefixes and records the LM hidden
/// state and top-K list at each. Reproducible for a fixed seed.
pub fn collect_states<L: LanguageModel + ?Sized>(
    lm: &L,
    corpus: &[TokenSeq],
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<StateDataset> {
    if n_samples < 1 {
        return Err(Error::Domain("n_samples must be >= 1".into()));
    }
    let eligible: Vec<&TokenSeq> = corpus.iter().filter(|s| s.len() >= 2).collect();
    if eligible.is_empty() {
        return Err(Error::Data(
            "no corpus sequence has at least 2 tokens".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hiddens = Vec::with_capacity(n_samples);
    let mut topks = Vec::with_capacity(n_samples);
    let mut prefixes = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let seq = eligible[(rng.random::<u64>() % eligible.len() as u64) as usize];
        let prefix_len = 1 + (rng.random::<u64>() % (seq.len() as u64 - 1)) as usize;
        let prefix = &seq.ids[..prefix_len];
        let out = lm.next(prefix);
        hiddens.push(out.hidden);
        topks.push(top_k(&out.probs, k)?);
        prefixes.push(prefix.to_vec());
    }
    Ok(StateDataset {
        hiddens,
        topk: topks,
        prefixes,
        k,
    })
}

/// Persists a collected dataset as the tensor pair `states.H` /
/// `states.topk` (indices stored as f32).
pub fn save_states(path: &Path, ds: &StateDataset) -> Result<()> {
    let h = Mat::from_rows(&ds.hiddens)?;
    let t = Mat::from_vec(
        ds.topk.len(),
        ds.k,
        ds.topk
            .iter()
            .flat_map(|row| row.iter().map(|&i| i as f32))
            .collect(),
    )?;
    weights::save(
        path,
        &[("states.H".to_string(), &h), ("states.topk".to_string(), &t)],
    )
}

pub fn load_states(path: &Path) -> Result<StateDataset> {
    let mut set = TensorSet::load(path)?;
    let h = set.take("states.H")?;
    let t = set.take("states.topk")?;
    if h.rows() != t.rows() {
        return Err(Error::Weights(
            "states.H and states.topk row counts differ".into(),
        ));
    }
    let hiddens = (0..h.rows()).map(|r| h.row(r).to_vec()).collect();
    let topk = (0..t.rows())
        .map(|r| t.row(r).iter().map(|&v| v as usize).collect())
        .collect();
    Ok(StateDataset {
        hiddens,
        topk,
        prefixes: Vec::new(),
        k: t.cols(),
    })
}

fn ae1_step(params: &mut Ae1Params, adam: &mut AdamState, sample: &[f32]) -> Result<f32> {
    let x = Mat::row_vec(sample.to_vec());
    let (h1, c1) = params.enc1.forward(&x);
    let (code, c2) = params.enc2.forward(&h1);
    let (d1, c3) = params.dec1.forward(&code);
    let (recon, c4) = params.dec2.forward(&d1);
    let (loss, dloss) = mse(&recon, &x);

    let (dd1, g4) = params.dec2.backward(&c4, &dloss);
    let (dcode, g3) = params.dec1.backward(&c3, &dd1);
    let (dh1, g2) = params.enc2.backward(&c2, &dcode);
    let (_, g1) = params.enc1.backward(&c1, &dh1);

    let grads = [&g1.w, &g1.b, &g2.w, &g2.b, &g3.w, &g3.b, &g4.w, &g4.b];
    let mut tensors: Vec<&mut Matrix> = vec![
        &mut params.enc1.w,
        &mut params.enc1.b,
        &mut params.enc2.w,
        &mut params.enc2.b,
        &mut params.dec1.w,
        &mut params.dec1.b,
        &mut params.dec2.w,
        &mut params.dec2.b,
    ];
    adam.step(&mut tensors, &grads)?;
    Ok(loss)
}

/// Trains AE1 on hidden vectors by plain reconstruction MSE. Returns the
/// mean loss per epoch.
pub fn train_ae1(
    dataset: &[Vec<f32>],
    params: &mut Ae1Params,
    epochs: usize,
    lr: f32,
) -> Result<Vec<f32>> {
    if dataset.is_empty() {
        return Err(Error::Data("empty autoencoder dataset".into()));
    }
    for h in dataset {
        if h.len() != params.in_dim() {
            return Err(Error::Config(format!(
                "sample width {} does not match encoder input {}",
                h.len(),
                params.in_dim()
            )));
        }
    }
    let shapes: Vec<(String, usize, usize)> = params
        .named_tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.rows(), t.cols()))
        .collect();
    let mut adam = AdamState::new(lr, &shapes)?;
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut total = 0.0f64;
        for sample in dataset {
            total += ae1_step(params, &mut adam, sample)? as f64;
        }
        trace.push((total / dataset.len() as f64) as f32);
    }
    Ok(trace)
}

fn ae2_step(params: &mut Ae2Params, adam: &mut AdamState, input: &Matrix) -> Result<f32> {
    let (conv_out, c_conv) = params.conv.forward(input);
    let flat = Mat::row_vec(conv_out.as_slice().to_vec());
    let (code, c_enc) = params.enc.forward(&flat);
    let (unpooled, c_dec) = params.dec.forward(&code);
    let grid = Matrix::from_vec(params.k, AE2_CHANNELS, unpooled.row(0).to_vec())?;
    let (recon, c_deconv) = params.deconv.forward(&grid);
    let (loss, dloss) = mse(&recon, input);

    let (dgrid, g_deconv) = params.deconv.backward(&c_deconv, &dloss);
    let dunpooled = Mat::row_vec(dgrid.as_slice().to_vec());
    let (dcode, g_dec) = params.dec.backward(&c_dec, &dunpooled);
    let (dflat, g_enc) = params.enc.backward(&c_enc, &dcode);
    let dconv = Matrix::from_vec(params.k, AE2_CHANNELS, dflat.row(0).to_vec())?;
    let (_, g_conv) = params.conv.backward(&c_conv, &dconv);

    let grads = [
        &g_conv.w,
        &g_conv.b,
        &g_enc.w,
        &g_enc.b,
        &g_dec.w,
        &g_dec.b,
        &g_deconv.w,
        &g_deconv.b,
    ];
    let mut tensors: Vec<&mut Matrix> = vec![
        &mut params.conv.w,
        &mut params.conv.b,
        &mut params.enc.w,
        &mut params.enc.b,
        &mut params.dec.w,
        &mut params.dec.b,
        &mut params.deconv.w,
        &mut params.deconv.b,
    ];
    adam.step(&mut tensors, &grads)?;
    Ok(loss)
}

/// Trains AE2 on top-K candidate lists, embedding each list with the LM's
/// frozen embedding rows. Returns the mean loss per epoch.
pub fn train_ae2(
    dataset: &[Vec<usize>],
    embed: &Matrix,
    params: &mut Ae2Params,
    epochs: usize,
    lr: f32,
) -> Result<Vec<f32>> {
    if dataset.is_empty() {
        return Err(Error::Data("empty autoencoder dataset".into()));
    }
    for row in dataset {
        if row.len() != params.k {
            return Err(Error::Data(format!(
                "candidate list length {} does not match K = {}",
                row.len(),
                params.k
            )));
        }
    }
    if embed.cols() != params.embed_dim() {
        return Err(Error::Config(format!(
            "embedding width {} does not match AE2 input {}",
            embed.cols(),
            params.embed_dim()
        )));
    }
    let shapes: Vec<(String, usize, usize)> = params
        .named_tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.rows(), t.cols()))
        .collect();
    let mut adam = AdamState::new(lr, &shapes)?;
    let inputs: Vec<Matrix> = dataset
        .iter()
        .map(|row| embed_candidates(row, embed))
        .collect::<Result<_>>()?;
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut total = 0.0f64;
        for input in &inputs {
            total += ae2_step(params, &mut adam, input)? as f64;
        }
        trace.push((total / inputs.len() as f64) as f32);
    }
    Ok(trace)
}

/// Concatenates AE1(H) and AE2(embedded top-K) into the agent's state.
pub fn make_state(
    ae1: &Ae1Params,
    ae2: &Ae2Params,
    hidden: &[f32],
    topk: &[usize],
    embed: &Matrix,
) -> Result<StateVec> {
    if topk.len() != ae2.k {
        return Err(Error::Config(format!(
            "top-K list length {} does not match AE2 K = {}",
            topk.len(),
            ae2.k
        )));
    }
    let c_g = ae1.encode(hidden)?;
    let candidates = embed_candidates(topk, embed)?;
    let c_w = ae2.encode(&candidates)?;
    let mut values = c_g;
    values.extend(c_w);
    Ok(StateVec { values })
}
