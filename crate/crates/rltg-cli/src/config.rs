//! Run configuration: presets, JSON config files, and flag overrides.
//! Precedence is flags > config file > preset defaults; the resolved
//! config is echoed verbatim into every run manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rltg::agent::AgentConfig;
use rltg::corpus::TopicSource;
use rltg::reward::RewardWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Shrunken dimensions; the whole pipeline runs in minutes.
    Desk,
    /// Full-scale constants (50k episodes, wide networks).
    Paper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub corpus: PathBuf,
    pub out_dir: PathBuf,

    pub min_freq: usize,
    pub topic_source: TopicSource,
    pub topic_len: usize,

    pub embed_dim: usize,
    pub lm_epochs: usize,
    pub lm_lr: f32,

    pub d_g: usize,
    pub d_w: usize,
    pub ae_epochs: usize,
    pub ae_lr: f32,
    pub state_samples: usize,

    pub adv_hidden: usize,
    pub adv_epochs: usize,
    pub adv_lr: f32,

    pub k: usize,
    pub horizon: usize,
    pub gamma: f32,
    pub memory_cap: usize,
    pub batch: usize,
    pub eps_max: f64,
    pub eps_min: f64,
    pub decay_rate: f64,
    pub sync_every: usize,
    pub episodes: usize,
    pub dqn_hidden: Vec<usize>,
    pub agent_lr: f32,
    pub bleu_extra_refs: usize,
    pub restarts: usize,

    pub alpha: f32,
    pub beta: f32,
    pub lambda: f32,

    pub eval_horizon: usize,
    pub eval_topics: usize,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            preset: Preset::Desk,
            seed: 0,
            corpus: PathBuf::from("corpus.jsonl"),
            out_dir: PathBuf::from("out"),
            min_freq: 2,
            topic_source: TopicSource::Prefix,
            topic_len: 10,
            embed_dim: 64,
            lm_epochs: 8,
            lm_lr: 2e-3,
            d_g: 32,
            d_w: 16,
            ae_epochs: 30,
            ae_lr: 1e-3,
            state_samples: 400,
            adv_hidden: 16,
            adv_epochs: 12,
            adv_lr: 3e-3,
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
            dqn_hidden: vec![128, 64, 32],
            agent_lr: 1e-4,
            bleu_extra_refs: 9,
            restarts: 1,
            alpha: 0.5,
            beta: 0.5,
            lambda: 0.5,
            eval_horizon: 20,
            eval_topics: 25,
        };
        match preset {
            Preset::Desk => base,
            Preset::Paper => Self {
                preset: Preset::Paper,
                embed_dim: 768,
                lm_epochs: 5,
                d_g: 256,
                d_w: 128,
                adv_hidden: 128,
                k: 50,
                horizon: 50,
                episodes: 50_000,
                sync_every: 1000,
                dqn_hidden: vec![1024, 512, 256],
                eval_horizon: 200,
                ..base
            },
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            k: self.k,
            horizon: self.horizon,
            gamma: self.gamma,
            memory_cap: self.memory_cap,
            batch: self.batch,
            eps_max: self.eps_max,
            eps_min: self.eps_min,
            decay_rate: self.decay_rate,
            sync_every: self.sync_every,
            episodes: self.episodes,
            topic_len: self.topic_len,
            bleu_extra_refs: self.bleu_extra_refs,
            lr: self.agent_lr,
            hidden: self.dqn_hidden.clone(),
        }
    }

    pub fn reward_weights(&self) -> RewardWeights {
        RewardWeights {
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
        }
    }

    /// Component-invariant pass before any training starts.
    pub fn validate(&self) -> Result<()> {
        self.agent_config()
            .validate()
            .context("agent configuration")?;
        self.reward_weights()
            .validate()
            .context("reward weights")?;
        if self.min_freq < 1 {
            bail!("min_freq must be >= 1");
        }
        if self.embed_dim < 1 || self.d_g < 1 || self.d_w < 1 {
            bail!("dimensions must be >= 1");
        }
        if self.lm_epochs < 1 || self.state_samples < 1 || self.restarts < 1 {
            bail!("lm_epochs, state_samples and restarts must be >= 1");
        }
        if self.eval_topics < 1 || self.eval_horizon < 1 {
            bail!("eval_topics and eval_horizon must be >= 1");
        }
        Ok(())
    }
}

/// Optional overrides, as found in a JSON config file or on the command
/// line. `None` means "inherit".
#[derive(Debug, Clone, Default, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigOverrides {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub min_freq: Option<usize>,
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topic_source: Option<TopicSourceArg>,
    #[arg(long, global = true)]
    pub topic_len: Option<usize>,
    #[arg(long, global = true)]
    pub embed_dim: Option<usize>,
    #[arg(long, global = true)]
    pub lm_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lm_lr: Option<f32>,
    #[arg(long, global = true)]
    pub d_g: Option<usize>,
    #[arg(long, global = true)]
    pub d_w: Option<usize>,
    #[arg(long, global = true)]
    pub ae_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub ae_lr: Option<f32>,
    #[arg(long, global = true)]
    pub state_samples: Option<usize>,
    #[arg(long, global = true)]
    pub adv_hidden: Option<usize>,
    #[arg(long, global = true)]
    pub adv_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub adv_lr: Option<f32>,
    #[arg(short = 'k', long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f32>,
    #[arg(long, global = true)]
    pub memory_cap: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub eps_max: Option<f64>,
    #[arg(long, global = true)]
    pub eps_min: Option<f64>,
    #[arg(long, global = true)]
    pub decay_rate: Option<f64>,
    #[arg(long, global = true)]
    pub sync_every: Option<usize>,
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dqn_hidden: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub agent_lr: Option<f32>,
    #[arg(long, global = true)]
    pub bleu_extra_refs: Option<usize>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f32>,
    #[arg(long, global = true)]
    pub beta: Option<f32>,
    #[arg(long, global = true)]
    pub lambda: Option<f32>,
    #[arg(long, global = true)]
    pub eval_horizon: Option<usize>,
    #[arg(long, global = true)]
    pub eval_topics: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TopicSourceArg {
    Prefix,
    Title,
}

impl From<TopicSourceArg> for TopicSource {
    fn from(v: TopicSourceArg) -> Self {
        match v {
            TopicSourceArg::Prefix => TopicSource::Prefix,
            TopicSourceArg::Title => TopicSource::Title,
        }
    }
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { cfg.$field = v; })*
            };
        }
        set!(
            seed, min_freq, topic_len, embed_dim, lm_epochs, lm_lr, d_g, d_w, ae_epochs, ae_lr,
            state_samples, adv_hidden, adv_epochs, adv_lr, k, horizon, gamma, memory_cap, batch,
            eps_max, eps_min, decay_rate, sync_every, episodes, dqn_hidden, agent_lr,
            bleu_extra_refs, restarts, alpha, beta, lambda, eval_horizon, eval_topics
        );
        if let Some(ts) = self.topic_source {
            cfg.topic_source = ts.into();
        }
    }
}

/// Resolves the effective config: preset defaults, then the JSON config
/// file, then command-line flags, then the RLTG_SEED fallback.
pub fn resolve(
    preset: Preset,
    config_file: Option<&Path>,
    flags: &ConfigOverrides,
    corpus: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::preset(preset);
    if let Some(path) = config_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let file_overrides: ConfigOverrides = serde_json::from_str(&text)
            .with_context(|| format!("parsing config file {}", path.display()))?;
        file_overrides.apply(&mut cfg);
    }
    flags.apply(&mut cfg);
    if flags.seed.is_none() {
        if let Ok(env_seed) = std::env::var("RLTG_SEED") {
            if !env_seed.is_empty() {
                cfg.seed = env_seed
                    .parse()
                    .context("RLTG_SEED must be an unsigned integer")?;
            }
        }
    }
    if let Some(c) = corpus {
        cfg.corpus = c.to_path_buf();
    }
    if let Some(o) = out_dir {
        cfg.out_dir = o.to_path_buf();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Per-component sub-seed so every stage gets an independent stream that
/// still derives from the single run seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label.as_bytes()))
}
