//! Subcommand implementations. Every command reads its prerequisites
//! read-only, writes its artifacts under the out dir with fixed names,
//! and finishes by writing a manifest that pins config, seed and hashes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use rltg::adversary::{self, ClassifierParams};
use rltg::agent::{self, TrainOutcome};
use rltg::corpus::{self, NewsItem, TokenSeq, TopicSource, Vocabulary};
use rltg::decoder::{
    self, evaluate_suite, export_curves, Generator, GreedyGenerator, RltgGenerator,
    TopKSampleGenerator,
};
use rltg::langmodel::{perplexity, RecurrentLm};
use rltg::statecoder::{self, Ae1Params, Ae2Params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{derive_seed, RunConfig};
use crate::manifest::Manifest;

pub const LM_FILE: &str = "lm.rltg";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const STATES_FILE: &str = "states.rltg";
pub const AE1_FILE: &str = "ae1.rltg";
pub const AE2_FILE: &str = "ae2.rltg";
pub const ADV_FILE: &str = "adv.rltg";
pub const DQN_FILE: &str = "dqn.rltg";
pub const REPORT_FILE: &str = "report.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const GENERATED_FILE: &str = "generated.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

const BLEU_REFS_NOTE: &str = "episode source article plus sampled references (seeded per episode)";

fn require(out_dir: &Path, name: &str, contents: &str, producer: &str) -> Result<PathBuf> {
    let path = out_dir.join(name);
    if !path.exists() {
        bail!(
            "missing artifact `{name}` ({contents}); run `rltg {producer}` first"
        );
    }
    Ok(path)
}

fn load_corpus_file(cfg: &RunConfig) -> Result<Vec<NewsItem>> {
    corpus::load_corpus(&cfg.corpus)
        .with_context(|| format!("loading corpus {}", cfg.corpus.display()))
}

fn load_vocab(out_dir: &Path) -> Result<Vocabulary> {
    let path = require(out_dir, VOCAB_FILE, "token list", "train-lm")?;
    Vocabulary::load(&path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_lm(out_dir: &Path) -> Result<RecurrentLm> {
    let path = require(out_dir, LM_FILE, "lm.* weights", "train-lm")?;
    RecurrentLm::load(&path).with_context(|| format!("loading {}", path.display()))
}

fn load_aes(out_dir: &Path) -> Result<(Ae1Params, Ae2Params)> {
    let p1 = require(out_dir, AE1_FILE, "ae1.* weights", "train-ae")?;
    let p2 = require(out_dir, AE2_FILE, "ae2.* weights", "train-ae")?;
    Ok((
        Ae1Params::load(&p1).with_context(|| format!("loading {}", p1.display()))?,
        Ae2Params::load(&p2).with_context(|| format!("loading {}", p2.display()))?,
    ))
}

fn load_adv(out_dir: &Path) -> Result<ClassifierParams> {
    let path = require(out_dir, ADV_FILE, "adv.* weights", "train-adversary")?;
    ClassifierParams::load(&path).with_context(|| format!("loading {}", path.display()))
}

fn load_dqn(out_dir: &Path) -> Result<agent::DqnParams> {
    let path = require(out_dir, DQN_FILE, "dqn.policy weights", "train-agent")?;
    agent::DqnParams::load(&path).with_context(|| format!("loading {}", path.display()))
}

/// Encodes items with their topic prefix marked; items too short for a
/// topic are skipped (counted for the run log).
fn encode_with_topics(
    items: &[NewsItem],
    vocab: &Vocabulary,
    source: TopicSource,
    topic_len: usize,
) -> (Vec<TokenSeq>, usize) {
    let mut seqs = Vec::with_capacity(items.len());
    let mut skipped = 0usize;
    for item in items {
        match corpus::item_to_seq(vocab, item, source, topic_len) {
            Ok(seq) => seqs.push(seq),
            Err(_) => skipped += 1,
        }
    }
    (seqs, skipped)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating out dir {}", cfg.out_dir.display()))
}

pub fn train_lm(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let items = load_corpus_file(cfg)?;
    let vocab = corpus::build_vocab(&items, cfg.min_freq)?;
    let seqs: Vec<TokenSeq> = items
        .iter()
        .map(|i| vocab.encode_text(&i.text))
        .collect();

    let mut lm = RecurrentLm::init(
        vocab.len(),
        cfg.embed_dim,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "lm-init")),
    );
    let trace = lm.train(&seqs, cfg.lm_epochs, cfg.lm_lr, derive_seed(cfg.seed, "lm-train"))?;
    println!(
        "trained lm: |V| = {}, e = {}, loss {:.4} -> {:.4}",
        vocab.len(),
        cfg.embed_dim,
        trace.first().unwrap(),
        trace.last().unwrap()
    );

    let vocab_path = cfg.out_dir.join(VOCAB_FILE);
    vocab.save(&vocab_path)?;
    let lm_path = cfg.out_dir.join(LM_FILE);
    lm.save(&lm_path)?;

    let mut manifest = Manifest::new("train-lm", cfg);
    manifest.record_input(&cfg.corpus)?;
    manifest.record_output(&vocab_path)?;
    manifest.record_output(&lm_path)?;
    manifest.note("lm_loss_trace", format!("{trace:?}"));
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

pub fn collect_states(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let items = load_corpus_file(cfg)?;
    let vocab = load_vocab(&cfg.out_dir)?;
    let lm = load_lm(&cfg.out_dir)?;
    let seqs: Vec<TokenSeq> = items
        .iter()
        .map(|i| vocab.encode_text(&i.text))
        .collect();
    let ds = statecoder::collect_states(
        &lm,
        &seqs,
        cfg.k,
        cfg.state_samples,
        derive_seed(cfg.seed, "states"),
    )?;
    let path = cfg.out_dir.join(STATES_FILE);
    statecoder::save_states(&path, &ds)?;
    println!("collected {} (H, top-{}) records", ds.len(), cfg.k);

    let mut manifest = Manifest::new("collect-states", cfg);
    manifest.record_input(&cfg.corpus)?;
    manifest.record_input(&cfg.out_dir.join(LM_FILE))?;
    manifest.record_output(&path)?;
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

pub fn train_ae(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let lm = load_lm(&cfg.out_dir)?;
    let states_path = require(
        &cfg.out_dir,
        STATES_FILE,
        "states.H / states.topk tensors",
        "collect-states",
    )?;
    let ds = statecoder::load_states(&states_path)?;
    if ds.k != cfg.k {
        bail!(
            "states were collected for K = {}, config says K = {}",
            ds.k,
            cfg.k
        );
    }

    let mut ae1 = Ae1Params::init(
        cfg.embed_dim,
        cfg.d_g,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "ae1-init")),
    );
    let trace1 = statecoder::train_ae1(&ds.hiddens, &mut ae1, cfg.ae_epochs, cfg.ae_lr)?;
    let mut ae2 = Ae2Params::init(
        cfg.embed_dim,
        cfg.k,
        cfg.d_w,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "ae2-init")),
    );
    let trace2 = statecoder::train_ae2(&ds.topk, &lm.embed, &mut ae2, cfg.ae_epochs, cfg.ae_lr)?;
    println!(
        "trained autoencoders: ae1 mse {:.5} -> {:.5}, ae2 mse {:.5} -> {:.5}, state size {}",
        trace1.first().unwrap(),
        trace1.last().unwrap(),
        trace2.first().unwrap(),
        trace2.last().unwrap(),
        cfg.d_g + cfg.d_w
    );

    let p1 = cfg.out_dir.join(AE1_FILE);
    ae1.save(&p1)?;
    let p2 = cfg.out_dir.join(AE2_FILE);
    ae2.save(&p2)?;

    let mut manifest = Manifest::new("train-ae", cfg);
    manifest.record_input(&cfg.out_dir.join(LM_FILE))?;
    manifest.record_input(&states_path)?;
    manifest.record_output(&p1)?;
    manifest.record_output(&p2)?;
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

pub fn train_adversary(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let items = load_corpus_file(cfg)?;
    let vocab = load_vocab(&cfg.out_dir)?;
    let lm = load_lm(&cfg.out_dir)?;
    let mut examples = adversary::encode_corpus(&items, &vocab);
    let crops = adversary::prefix_crops(&examples, derive_seed(cfg.seed, "adv-crops"));
    examples.extend(crops);
    let mut params = ClassifierParams::init(
        lm.embed.clone(),
        cfg.adv_hidden,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "adv-init")),
    );
    let trace = adversary::train_classifier(
        &mut params,
        &examples,
        cfg.adv_epochs,
        cfg.adv_lr,
        derive_seed(cfg.seed, "adv-train"),
    )?;
    let full_text = adversary::encode_corpus(&items, &vocab);
    let metrics = adversary::evaluate_classifier(&params, &full_text)?;
    println!(
        "trained adversary: bce {:.4} -> {:.4}; train accuracy {:.3}, auc {:.3}, f1 {:.3}",
        trace.first().unwrap(),
        trace.last().unwrap(),
        metrics.accuracy,
        metrics.auc,
        metrics.f1
    );

    let path = cfg.out_dir.join(ADV_FILE);
    params.save(&path)?;
    let mut manifest = Manifest::new("train-adversary", cfg);
    manifest.record_input(&cfg.corpus)?;
    manifest.record_input(&cfg.out_dir.join(LM_FILE))?;
    manifest.record_output(&path)?;
    manifest.note(
        "train_metrics",
        format!(
            "accuracy {:.4}, auc {:.4}, f1 {:.4}",
            metrics.accuracy, metrics.auc, metrics.f1
        ),
    );
    manifest.note(
        "training_set",
        "full articles plus seeded prefix crops (the classifier scores growing texts at reward time)",
    );
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

/// Runs `restarts` independent trainings and keeps the one with the
/// highest mean episode reward.
fn best_training_run(
    cfg: &RunConfig,
    lm: &RecurrentLm,
    ae1: &Ae1Params,
    ae2: &Ae2Params,
    adv: &ClassifierParams,
    seqs: &[TokenSeq],
) -> Result<(TrainOutcome, usize)> {
    let agent_cfg = cfg.agent_config();
    let weights = cfg.reward_weights();
    let mut best: Option<(TrainOutcome, usize, f64)> = None;
    for restart in 0..cfg.restarts {
        let seed = derive_seed(cfg.seed, &format!("agent-{restart}"));
        let outcome = agent::train_agent(&agent_cfg, lm, ae1, ae2, adv, seqs, &weights, seed)?;
        let mean: f64 =
            outcome.reward_trace.iter().sum::<f64>() / outcome.reward_trace.len() as f64;
        println!(
            "agent run {restart}: mean reward {mean:.4}, final-decile {:.4}",
            decile_mean(&outcome.reward_trace, false)
        );
        match &best {
            Some((_, _, m)) if *m >= mean => {}
            _ => best = Some((outcome, restart, mean)),
        }
    }
    let (outcome, idx, _) = best.expect("restarts >= 1");
    Ok((outcome, idx))
}

fn decile_mean(trace: &[f64], first: bool) -> f64 {
    let n = (trace.len() / 10).max(1);
    let slice = if first {
        &trace[..n]
    } else {
        &trace[trace.len() - n..]
    };
    slice.iter().sum::<f64>() / slice.len() as f64
}

pub fn train_agent(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let items = load_corpus_file(cfg)?;
    let vocab = load_vocab(&cfg.out_dir)?;
    let lm = load_lm(&cfg.out_dir)?;
    let (ae1, ae2) = load_aes(&cfg.out_dir)?;
    let adv = load_adv(&cfg.out_dir)?;
    let (seqs, skipped) = encode_with_topics(&items, &vocab, cfg.topic_source, cfg.topic_len);
    if seqs.is_empty() {
        bail!("no corpus item is long enough for a {}-token topic", cfg.topic_len);
    }

    let (outcome, restart) = best_training_run(cfg, &lm, &ae1, &ae2, &adv, &seqs)?;
    println!(
        "kept run {restart}: reward {:.4} (first decile) -> {:.4} (last decile), env steps {}",
        decile_mean(&outcome.reward_trace, true),
        decile_mean(&outcome.reward_trace, false),
        outcome.env_steps
    );

    let dqn_path = cfg.out_dir.join(DQN_FILE);
    outcome.dqn.save(&dqn_path)?;
    let curves_path = cfg.out_dir.join(CURVES_FILE);
    export_curves(
        &outcome.reward_trace,
        &outcome.inv_confidence_trace,
        &curves_path,
    )?;

    let mut manifest = Manifest::new("train-agent", cfg);
    manifest.record_input(&cfg.corpus)?;
    for f in [LM_FILE, AE1_FILE, AE2_FILE, ADV_FILE] {
        manifest.record_input(&cfg.out_dir.join(f))?;
    }
    manifest.record_output(&dqn_path)?;
    manifest.record_output(&curves_path)?;
    manifest.note("step_convention", outcome.step_convention);
    manifest.note("bleu_references", BLEU_REFS_NOTE);
    manifest.note(
        "topic_source",
        format!("{:?} (len {})", cfg.topic_source, cfg.topic_len),
    );
    manifest.note("restart_selected", restart.to_string());
    manifest.note("skipped_short_items", skipped.to_string());
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

fn topics_from_corpus(
    items: &[NewsItem],
    vocab: &Vocabulary,
    cfg: &RunConfig,
) -> (Vec<TokenSeq>, Vec<TokenSeq>) {
    let (seqs, _) = encode_with_topics(items, vocab, cfg.topic_source, cfg.topic_len);
    let topics: Vec<TokenSeq> = seqs
        .iter()
        .take(cfg.eval_topics)
        .map(|s| TokenSeq {
            ids: s.topic().to_vec(),
            topic_len: s.topic_len,
        })
        .collect();
    (topics, seqs)
}

pub fn generate(cfg: &RunConfig, topic_text: Option<&str>, score: bool) -> Result<()> {
    ensure_out_dir(cfg)?;
    let vocab = load_vocab(&cfg.out_dir)?;
    let lm = load_lm(&cfg.out_dir)?;
    let (ae1, ae2) = load_aes(&cfg.out_dir)?;
    let dqn = load_dqn(&cfg.out_dir)?;

    let topics: Vec<TokenSeq> = match topic_text {
        Some(text) => {
            let mut seq = vocab.encode_text(text);
            if seq.is_empty() {
                bail!("the given topic tokenizes to nothing");
            }
            seq.topic_len = seq.len();
            vec![seq]
        }
        None => {
            let items = load_corpus_file(cfg)?;
            let (topics, _) = topics_from_corpus(&items, &vocab, cfg);
            if topics.is_empty() {
                bail!("no corpus item is long enough for a topic");
            }
            topics
        }
    };

    let scorer = if score {
        let adv = load_adv(&cfg.out_dir)?;
        let items = load_corpus_file(cfg)?;
        let (_, refs) = topics_from_corpus(&items, &vocab, cfg);
        Some((adv, refs))
    } else {
        None
    };

    let mut blocks = Vec::new();
    for topic in &topics {
        let gen = if let Some((adv, refs)) = &scorer {
            decoder::generate_rl_scored(
                &dqn,
                &lm,
                &ae1,
                &ae2,
                adv,
                &cfg.reward_weights(),
                topic,
                refs,
                cfg.eval_horizon,
            )?
        } else {
            decoder::generate_rl(&dqn, &lm, &ae1, &ae2, topic, cfg.eval_horizon)?
        };
        let text = vocab.decode(&gen.tokens);
        let topic_str = vocab.decode(topic);
        let mut block = format!("topic: {topic_str}\ntext: {text}\n");
        if let Some(rewards) = &gen.per_step_rewards {
            let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
            block.push_str(&format!("mean step reward: {mean:.4}\n"));
        }
        println!("{block}");
        blocks.push(block);
    }

    let out_path = cfg.out_dir.join(GENERATED_FILE);
    fs::write(&out_path, blocks.join("\n"))?;
    let mut manifest = Manifest::new("generate", cfg);
    for f in [VOCAB_FILE, LM_FILE, AE1_FILE, AE2_FILE, DQN_FILE] {
        manifest.record_input(&cfg.out_dir.join(f))?;
    }
    manifest.record_output(&out_path)?;
    manifest.note("inference_policy", "greedy over Q (epsilon = 0)");
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, methods: &[String]) -> Result<()> {
    ensure_out_dir(cfg)?;
    let items = load_corpus_file(cfg)?;
    let vocab = load_vocab(&cfg.out_dir)?;
    let lm = load_lm(&cfg.out_dir)?;
    let (topics, references) = topics_from_corpus(&items, &vocab, cfg);
    if topics.is_empty() {
        bail!("no corpus item is long enough for a topic");
    }

    // loaded lazily so baseline-only runs need no agent artifacts
    let mut rltg_parts: Option<(agent::DqnParams, Ae1Params, Ae2Params)> = None;
    let mut generators: Vec<Box<dyn Generator>> = Vec::new();
    for m in methods {
        match m.as_str() {
            "rltg" => {
                let (ae1, ae2) = load_aes(&cfg.out_dir)?;
                let dqn = load_dqn(&cfg.out_dir)?;
                rltg_parts = Some((dqn, ae1, ae2));
            }
            "greedy" => generators.push(Box::new(GreedyGenerator)),
            "topk" => generators.push(Box::new(TopKSampleGenerator {
                k: cfg.k,
                seed: derive_seed(cfg.seed, "topk-sample"),
            })),
            other => bail!("unknown method `{other}` (expected rltg, greedy, topk)"),
        }
    }
    let rltg_gen = rltg_parts.as_ref().map(|(dqn, ae1, ae2)| RltgGenerator {
        dqn,
        ae1,
        ae2,
    });
    let mut refs: Vec<&dyn Generator> = Vec::new();
    if let Some(g) = &rltg_gen {
        refs.push(g);
    }
    for g in &generators {
        refs.push(g.as_ref());
    }

    let report = evaluate_suite(&refs, &lm, &topics, cfg.eval_horizon, &references)?;
    print!("{}", report.to_table());

    let ppx = perplexity(&lm, &references)?;
    println!(
        "(corpus perplexity under the evaluation model: {:.3}{})",
        ppx.value,
        if ppx.clamped_tokens > 0 {
            format!(", {} tokens clamped", ppx.clamped_tokens)
        } else {
            String::new()
        }
    );

    let report_path = cfg.out_dir.join(REPORT_FILE);
    fs::write(&report_path, report.to_csv())?;
    let mut manifest = Manifest::new("evaluate", cfg);
    manifest.record_input(&cfg.corpus)?;
    manifest.record_input(&cfg.out_dir.join(LM_FILE))?;
    manifest.record_output(&report_path)?;
    manifest.note("methods", methods.join(","));
    manifest.note("n_topics", report.n_topics.to_string());
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Alpha,
    Beta,
    Lambda,
}

impl SweepParam {
    fn name(&self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::Lambda => "lambda",
        }
    }
}

/// Trains one agent per value of the swept reward weight (other weights
/// stay at their configured values) and reports ROUGE-L per value.
pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[f64]) -> Result<()> {
    ensure_out_dir(cfg)?;
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            bail!("sweep values must lie in [0, 1], got {v}");
        }
    }
    let items = load_corpus_file(cfg)?;
    let vocab = load_vocab(&cfg.out_dir)?;
    let lm = load_lm(&cfg.out_dir)?;
    let (ae1, ae2) = load_aes(&cfg.out_dir)?;
    let adv = load_adv(&cfg.out_dir)?;
    let (seqs, _) = encode_with_topics(&items, &vocab, cfg.topic_source, cfg.topic_len);
    let (topics, references) = topics_from_corpus(&items, &vocab, cfg);

    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut run_cfg = cfg.clone();
        match param {
            SweepParam::Alpha => run_cfg.alpha = value as f32,
            SweepParam::Beta => run_cfg.beta = value as f32,
            SweepParam::Lambda => run_cfg.lambda = value as f32,
        }
        let row = (|| -> Result<f64> {
            let (outcome, _) = best_training_run(&run_cfg, &lm, &ae1, &ae2, &adv, &seqs)?;
            let gen = RltgGenerator {
                dqn: &outcome.dqn,
                ae1: &ae1,
                ae2: &ae2,
            };
            let report = evaluate_suite(
                &[&gen as &dyn Generator],
                &lm,
                &topics,
                cfg.eval_horizon,
                &references,
            )?;
            report.rows[0]
                .metrics
                .map(|m| m.rouge_l)
                .ok_or_else(|| anyhow::anyhow!("evaluation row failed"))
        })();
        match &row {
            Ok(r) => println!("{} = {value}: rouge-l {r:.4}", param.name()),
            Err(e) => println!("{} = {value}: failed ({e})", param.name()),
        }
        rows.push((value, row));
    }

    let mut csv = format!("{},rouge_l,status\n", param.name());
    for (value, row) in &rows {
        match row {
            Ok(r) => csv.push_str(&format!("{value},{r:.6},ok\n")),
            Err(_) => csv.push_str(&format!("{value},,failed\n")),
        }
    }
    let sweep_path = cfg.out_dir.join(SWEEP_FILE);
    fs::write(&sweep_path, csv)?;

    let mut manifest = Manifest::new("sweep", cfg);
    manifest.record_input(&cfg.corpus)?;
    for f in [LM_FILE, AE1_FILE, AE2_FILE, ADV_FILE] {
        manifest.record_input(&cfg.out_dir.join(f))?;
    }
    manifest.record_output(&sweep_path)?;
    manifest.note("swept_param", param.name());
    manifest.note(
        "values",
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.note("bleu_references", BLEU_REFS_NOTE);
    manifest.note("step_convention", agent::STEP_CONVENTION);
    manifest.write(&cfg.out_dir)?;
    Ok(())
}
