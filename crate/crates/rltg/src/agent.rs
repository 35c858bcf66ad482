//! The deep-Q learner over the K-way token-choice action set: policy and
//! target networks, FIFO replay memory, the exponentially decaying
//! epsilon-greedy schedule, TD updates, and the episode training loop
//! that ties the language model, state creator, adversary and reward
//! together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::ClassifierParams;
use crate::corpus::{TokenSeq, EOS};
use crate::error::{Error, Result};
use crate::langmodel::{top_k, LanguageModel};
use crate::nnkit::{
    backward, clip_global_norm, forward, AdamState, Activation, Dense, Layer, Mat, Matrix, Net,
};
use crate::reward::{step_reward, RewardWeights};
use crate::statecoder::{make_state, Ae1Params, Ae2Params, StateVec};
use crate::weights::{self, TensorSet};

/// Training hyperparameters. `desk()` runs the full pipeline in minutes;
/// `paper()` carries the full-scale constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Number of actions: the agent picks among the top-K tokens.
    pub k: usize,
    /// Environment steps per episode (the terminal time T).
    pub horizon: usize,
    pub gamma: f32,
    pub memory_cap: usize,
    pub batch: usize,
    pub eps_max: f64,
    pub eps_min: f64,
    pub decay_rate: f64,
    /// Copy policy -> target every this many environment steps.
    pub sync_every: usize,
    pub episodes: usize,
    /// Topic prefix length for episodes whose sequence has no marked topic.
    pub topic_len: usize,
    /// References per episode: the source article plus this many sampled.
    pub bleu_extra_refs: usize,
    /// Adam learning rate for the policy network.
    pub lr: f32,
    /// Policy/target hidden layer widths.
    pub hidden: Vec<usize>,
}

impl AgentConfig {
    pub fn desk() -> Self {
        Self {
            k: 10,
            horizon: 20,
            gamma: 0.9,
            memory_cap: 10_000,
            batch: 32,
            eps_max: 0.98,
            eps_min: 0.02,
            decay_rate: 5000.0,
            sync_every: 200,
            episodes: 2000,
            topic_len: 10,
            bleu_extra_refs: 9,
            lr: 1e-4,
            hidden: vec![128, 64, 32],
        }
    }

    pub fn paper() -> Self {
        Self {
            k: 50,
            horizon: 50,
            episodes: 50_000,
            sync_every: 1000,
            hidden: vec![1024, 512, 256],
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("K must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !(0.0 <= self.eps_min && self.eps_min <= self.eps_max && self.eps_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= eps_min <= eps_max <= 1, got {} / {}",
                self.eps_min, self.eps_max
            )));
        }
        if self.batch > self.memory_cap {
            return Err(Error::Config("batch cannot exceed memory capacity".into()));
        }
        if self.decay_rate <= 0.0 {
            return Err(Error::Config("decay_rate must be > 0".into()));
        }
        if self.horizon < 1 || self.episodes < 1 || self.sync_every < 1 || self.topic_len < 1 {
            return Err(Error::Config(
                "horizon, episodes, sync_every and topic_len must be >= 1".into(),
            ));
        }
        if self.hidden.len() != 3 {
            return Err(Error::Config("the Q-network uses three hidden layers".into()));
        }
        Ok(())
    }
}

/// Policy network theta and target network theta-prime.
#[derive(Debug, Clone)]
pub struct DqnParams {
    pub policy: Net<f32>,
    pub target: Net<f32>,
}

impl DqnParams {
    pub fn init<R: Rng>(state_dim: usize, hidden: &[usize], k: usize, rng: &mut R) -> Result<Self> {
        if hidden.len() != 3 {
            return Err(Error::Config("expected three hidden widths".into()));
        }
        let mut layers = Vec::new();
        let dims = [state_dim, hidden[0], hidden[1], hidden[2], k];
        for i in 0..4 {
            let act = if i == 3 {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(Layer::Dense(Dense::new(dims[i], dims[i + 1], act, rng)));
        }
        let policy = Net::from_layers(layers);
        let target = policy.clone();
        Ok(Self { policy, target })
    }

    pub fn state_dim(&self) -> usize {
        self.policy.in_dim()
    }

    pub fn k(&self) -> usize {
        self.policy.out_dim()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut v: Vec<(String, &Matrix)> = self
            .policy
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("dqn.policy.{n}"), t))
            .collect();
        v.extend(
            self.target
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (format!("dqn.target.{n}"), t)),
        );
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        weights::save(path, &self.named_tensors())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut set = TensorSet::load(path)?;
        let policy = load_mlp(&mut set, "dqn.policy")?;
        let target = load_mlp(&mut set, "dqn.target")?;
        Ok(Self { policy, target })
    }
}

fn load_mlp(set: &mut TensorSet, prefix: &str) -> Result<Net<f32>> {
    let mut layers = Vec::new();
    let mut i = 0;
    loop {
        let wname = format!("{prefix}.l{i}.w");
        let Ok(w) = set.take(&wname) else { break };
        let b = set.take_expect(&format!("{prefix}.l{i}.b"), 1, w.cols())?;
        layers.push((w, b));
        i += 1;
    }
    if layers.is_empty() {
        return Err(Error::Weights(format!("no `{prefix}` tensors in file")));
    }
    let n = layers.len();
    Ok(Net::from_layers(
        layers
            .into_iter()
            .enumerate()
            .map(|(j, (w, b))| {
                let act = if j + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Layer::Dense(Dense { w, b, act })
            })
            .collect(),
    ))
}

/// Q(s, .) under the policy network.
pub fn q_values(dqn: &DqnParams, s: &StateVec) -> Result<Vec<f32>> {
    if s.len() != dqn.state_dim() {
        return Err(Error::Config(format!(
            "state length {} does not match network input {}",
            s.len(),
            dqn.state_dim()
        )));
    }
    let x = Mat::row_vec(s.values.clone());
    let (y, _) = forward(&dqn.policy, &x)?;
    Ok(y.row(0).to_vec())
}

/// eps_min + (eps_max - eps_min) * exp(-steps / decay_rate).
pub fn epsilon_at(cfg: &AgentConfig, steps: u64) -> f64 {
    cfg.eps_min + (cfg.eps_max - cfg.eps_min) * (-(steps as f64) / cfg.decay_rate).exp()
}

/// Epsilon-greedy over the policy Q values; greedy ties resolve to the
/// lowest action index.
pub fn select_action<R: Rng>(
    dqn: &DqnParams,
    s: &StateVec,
    eps: f64,
    rng: &mut R,
) -> Result<usize> {
    debug_assert!((0.0..=1.0).contains(&eps));
    if rng.random::<f64>() < eps {
        return Ok((rng.random::<u64>() % dqn.k() as u64) as usize);
    }
    let q = q_values(dqn, s)?;
    Ok(greedy_action(&q))
}

fn greedy_action(q: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// One interaction tuple.
#[derive(Debug, Clone)]
pub struct Experience {
    pub state: StateVec,
    pub action: usize,
    pub next_state: StateVec,
    pub reward: f32,
    pub terminal: bool,
}

/// FIFO-capped experience store with uniform without-replacement batch
/// sampling.
#[derive(Debug)]
pub struct ReplayMemory {
    buf: VecDeque<Experience>,
    cap: usize,
}

impl ReplayMemory {
    pub fn new(cap: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(cap.min(1 << 20)),
            cap,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Push one experience, evicting the oldest when full.
    pub fn push(&mut self, exp: Experience) {
        if self.buf.len() == self.cap {
            self.buf.pop_front();
        }
        self.buf.push_back(exp);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buf.iter()
    }

    /// Uniform sample without replacement (batch <= len).
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<&Experience> {
        assert!(batch <= self.buf.len(), "batch larger than memory");
        let mut idx: Vec<usize> = (0..self.buf.len()).collect();
        for i in 0..batch {
            let j = i + (rng.random::<u64>() % (idx.len() - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx[..batch].iter().map(|&i| &self.buf[i]).collect()
    }
}

/// TD regression targets y = r + gamma * max_a' Q(s', a'; theta') with
/// y = r on terminal transitions. Computed under the target network.
pub fn td_targets(dqn: &DqnParams, batch: &[&Experience], gamma: f32) -> Result<Vec<f32>> {
    if batch.is_empty() {
        return Err(Error::Domain("empty TD batch".into()));
    }
    let dim = dqn.state_dim();
    let mut rows = Vec::with_capacity(batch.len());
    for exp in batch {
        if exp.next_state.len() != dim {
            return Err(Error::Config("experience state width mismatch".into()));
        }
        rows.push(exp.next_state.values.clone());
    }
    let x = Mat::from_rows(&rows)?;
    let (q_next, _) = forward(&dqn.target, &x)?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, exp)| {
            if exp.terminal {
                exp.reward
            } else {
                let row = q_next.row(i);
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                exp.reward + gamma * max
            }
        })
        .collect())
}

/// One batched TD regression step on the policy network. Only the taken
/// action's output carries gradient for each sample; the target network
/// is untouched. Returns the mean squared TD error.
pub fn dqn_update(
    dqn: &mut DqnParams,
    batch: &[&Experience],
    gamma: f32,
    adam: &mut AdamState,
) -> Result<f32> {
    let targets = td_targets(dqn, batch, gamma)?;
    let rows: Vec<Vec<f32>> = batch.iter().map(|e| e.state.values.clone()).collect();
    let x = Mat::from_rows(&rows)?;
    let (q, cache) = forward(&dqn.policy, &x)?;

    let b = batch.len() as f32;
    let mut upstream = Mat::zeros(q.rows(), q.cols());
    let mut loss = 0.0f64;
    for (i, exp) in batch.iter().enumerate() {
        if exp.action >= dqn.k() {
            return Err(Error::Config(format!(
                "action {} outside the {}-way action set",
                exp.action,
                dqn.k()
            )));
        }
        let diff = q.at(i, exp.action) - targets[i];
        loss += (diff as f64) * (diff as f64);
        *upstream.at_mut(i, exp.action) = 2.0 * diff / b;
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(Error::Training("non-finite TD loss".into()));
    }

    let grads = backward(&dqn.policy, &cache, &upstream)?;
    let mut owned: Vec<Matrix> = grads.tensors().into_iter().cloned().collect();
    {
        let mut refs: Vec<&mut Matrix> = owned.iter_mut().collect();
        clip_global_norm(&mut refs, 5.0);
    }
    let grad_refs: Vec<&Matrix> = owned.iter().collect();
    let mut params = dqn.policy.tensors_mut();
    adam.step(&mut params, &grad_refs)?;
    Ok(loss as f32)
}

/// Copies the policy weights into the target network.
pub fn sync_target(dqn: &mut DqnParams) {
    dqn.target = dqn.policy.clone();
}

/// Builds the Adam optimizer for a DQN's policy network.
pub fn policy_optimizer(dqn: &DqnParams, lr: f32) -> Result<AdamState> {
    let named: Vec<(String, &Matrix)> = dqn
        .policy
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (format!("dqn.policy.{n}"), t))
        .collect();
    AdamState::for_params(lr, &named)
}

/// Everything a training run produces.
#[derive(Debug)]
pub struct TrainOutcome {
    pub dqn: DqnParams,
    /// Per-episode mean step reward.
    pub reward_trace: Vec<f64>,
    /// Per-episode mean (1 - C_f).
    pub inv_confidence_trace: Vec<f64>,
    pub env_steps: u64,
    pub experiences_pushed: u64,
    /// Which loop-bound reading this build uses (logged per run).
    pub step_convention: &'static str,
}

pub const STEP_CONVENTION: &str = "episodes run exactly T environment steps (t = 0..T-1)";

/// The full learning loop: per episode, sample an article, take its topic
/// prefix, and for T steps pick among the LM's top-K next tokens by
/// epsilon-greedy Q, rewarding each grown text by topic similarity, BLEU
/// overlap with episode references, and the frozen adversary. Every
/// component except the policy network stays frozen.
#[allow(clippy::too_many_arguments)]
pub fn train_agent<L: LanguageModel + ?Sized>(
    cfg: &AgentConfig,
    lm: &L,
    ae1: &Ae1Params,
    ae2: &Ae2Params,
    adversary: &ClassifierParams,
    corpus: &[TokenSeq],
    weights: &RewardWeights,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    weights.validate()?;
    let eligible: Vec<&TokenSeq> = corpus
        .iter()
        .filter(|s| {
            let tl = if s.topic_len > 0 { s.topic_len } else { cfg.topic_len };
            s.len() >= tl && tl >= 1
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::Data(
            "no corpus sequence is long enough to provide a topic".into(),
        ));
    }
    if ae2.k != cfg.k {
        return Err(Error::Config(format!(
            "AE2 was built for K = {}, agent uses K = {}",
            ae2.k, cfg.k
        )));
    }

    let state_dim = ae1.encoded_dim() + ae2.encoded_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dqn = DqnParams::init(state_dim, &cfg.hidden, cfg.k, &mut rng)?;
    let mut adam = policy_optimizer(&dqn, cfg.lr)?;
    let mut memory = ReplayMemory::new(cfg.memory_cap);
    let embed = lm.embedding_matrix();

    let mut reward_trace = Vec::with_capacity(cfg.episodes);
    let mut inv_trace = Vec::with_capacity(cfg.episodes);
    let mut global_step = 0u64;
    let mut pushed = 0u64;

    for episode in 0..cfg.episodes {
        let source = eligible[(rng.random::<u64>() % eligible.len() as u64) as usize];
        let topic_len = if source.topic_len > 0 {
            source.topic_len
        } else {
            cfg.topic_len
        };
        let topic: Vec<usize> = source.ids[..topic_len].to_vec();
        let topic_embed = lm.embed(&topic).map_err(|e| {
            Error::Training(format!("episode {episode}: topic embedding failed: {e}"))
        })?;

        // episode references: the source article plus sampled others
        let mut references: Vec<TokenSeq> = vec![TokenSeq::new(source.ids.clone())];
        for _ in 0..cfg.bleu_extra_refs.min(eligible.len().saturating_sub(1)) {
            let r = eligible[(rng.random::<u64>() % eligible.len() as u64) as usize];
            references.push(TokenSeq::new(r.ids.clone()));
        }

        let mut text = topic.clone();
        let out = lm.next(&text);
        let mut candidates = top_k(&out.probs, cfg.k)?;
        let mut state = make_state(ae1, ae2, &out.hidden, &candidates, embed)?;

        let mut reward_sum = 0.0f64;
        let mut inv_conf_sum = 0.0f64;
        let mut steps_this_episode = 0usize;

        for t in 0..cfg.horizon {
            let eps = epsilon_at(cfg, global_step);
            let action = select_action(&dqn, &state, eps, &mut rng)?;
            let token = candidates[action];
            let chose_eos = token == EOS;
            if !chose_eos {
                text.push(token);
            }

            let gen = TokenSeq {
                ids: text.clone(),
                topic_len,
            };
            let gen_embed = lm.embed(&text).map_err(|e| {
                Error::Training(format!("episode {episode} step {t}: embedding failed: {e}"))
            })?;
            let breakdown = step_reward(weights, &topic_embed, &gen_embed, &gen, &references, |s| {
                adversary.confidence(s)
            })
            .map_err(|e| Error::Training(format!("episode {episode} step {t}: reward: {e}")))?;

            let out_next = lm.next(&text);
            let next_candidates = top_k(&out_next.probs, cfg.k)?;
            let next_state = make_state(ae1, ae2, &out_next.hidden, &next_candidates, embed)?;

            let terminal = chose_eos || t + 1 == cfg.horizon;
            memory.push(Experience {
                state: state.clone(),
                action,
                next_state: next_state.clone(),
                reward: breakdown.total as f32,
                terminal,
            });
            pushed += 1;
            reward_sum += breakdown.total;
            inv_conf_sum += breakdown.adversary_term;
            steps_this_episode += 1;

            if memory.len() >= cfg.batch {
                let batch = memory.sample(cfg.batch, &mut rng);
                dqn_update(&mut dqn, &batch, cfg.gamma, &mut adam).map_err(|e| {
                    Error::Training(format!("episode {episode} step {t}: update: {e}"))
                })?;
            }

            global_step += 1;
            if global_step % cfg.sync_every as u64 == 0 {
                sync_target(&mut dqn);
            }

            state = next_state;
            candidates = next_candidates;
            if chose_eos {
                break;
            }
        }

        reward_trace.push(reward_sum / steps_this_episode as f64);
        inv_trace.push(inv_conf_sum / steps_this_episode as f64);
    }

    Ok(TrainOutcome {
        dqn,
        reward_trace,
        inv_confidence_trace: inv_trace,
        env_steps: global_step,
        experiences_pushed: pushed,
        step_convention: STEP_CONVENTION,
    })
}
