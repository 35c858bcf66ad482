//! Generation with the trained agent, baseline decoders, the evaluation
//! harness (topic similarity / perplexity / ROUGE-L per method), and
//! training-curve export.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::ClassifierParams;
use crate::agent::{q_values, DqnParams};
use crate::corpus::{TokenSeq, EOS};
use crate::error::{Error, Result};
use crate::langmodel::{perplexity, top_k, LanguageModel};
use crate::reward::{cosine_sim, rouge_l, step_reward, RewardWeights};
use crate::statecoder::{make_state, Ae1Params, Ae2Params};

/// One rollout: the topic prefix plus the generated continuation.
#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub tokens: TokenSeq,
    pub per_step_actions: Vec<usize>,
    pub per_step_rewards: Option<Vec<f64>>,
}

fn check_topic(topic: &TokenSeq) -> Result<()> {
    if topic.is_empty() {
        return Err(Error::Domain("generation needs a nonempty topic".into()));
    }
    Ok(())
}

/// Greedy-over-Q decoding with the trained agent: at each step the agent
/// picks one of the language model's top-K tokens. Inference runs with
/// epsilon = 0, so the rollout is deterministic.
pub fn generate_rl<L: LanguageModel + ?Sized>(
    dqn: &DqnParams,
    lm: &L,
    ae1: &Ae1Params,
    ae2: &Ae2Params,
    topic: &TokenSeq,
    horizon: usize,
) -> Result<GenerationResult> {
    check_topic(topic)?;
    let k = ae2.k;
    let embed = lm.embedding_matrix();
    let mut text = topic.ids.clone();
    let mut actions = Vec::new();
    for _ in 0..horizon {
        let out = lm.next(&text);
        let candidates = top_k(&out.probs, k)?;
        let state = make_state(ae1, ae2, &out.hidden, &candidates, embed)?;
        let q = q_values(dqn, &state)?;
        let mut action = 0;
        for (i, &v) in q.iter().enumerate().skip(1) {
            if v > q[action] {
                action = i;
            }
        }
        let token = candidates[action];
        actions.push(action);
        if token == EOS {
            break;
        }
        text.push(token);
    }
    Ok(GenerationResult {
        tokens: TokenSeq {
            ids: text,
            topic_len: topic.len(),
        },
        per_step_actions: actions,
        per_step_rewards: None,
    })
}

/// As [`generate_rl`], but also scores every grown prefix with the full
/// reward so rollouts can be inspected.
#[allow(clippy::too_many_arguments)]
pub fn generate_rl_scored<L: LanguageModel + ?Sized>(
    dqn: &DqnParams,
    lm: &L,
    ae1: &Ae1Params,
    ae2: &Ae2Params,
    adversary: &ClassifierParams,
    weights: &RewardWeights,
    topic: &TokenSeq,
    references: &[TokenSeq],
    horizon: usize,
) -> Result<GenerationResult> {
    let mut result = generate_rl(dqn, lm, ae1, ae2, topic, horizon)?;
    let topic_embed = lm.embed(topic.topic())?;
    let mut rewards = Vec::with_capacity(result.per_step_actions.len());
    let continuation_len = result.tokens.len() - topic.len();
    for t in 1..=continuation_len {
        let prefix = TokenSeq {
            ids: result.tokens.ids[..topic.len() + t].to_vec(),
            topic_len: topic.len(),
        };
        let gen_embed = lm.embed(&prefix.ids)?;
        let b = step_reward(weights, &topic_embed, &gen_embed, &prefix, references, |s| {
            adversary.confidence(s)
        })?;
        rewards.push(b.total);
    }
    result.per_step_rewards = Some(rewards);
    Ok(result)
}

/// Pure argmax decoding (the repetition-prone baseline).
pub fn generate_greedy<L: LanguageModel + ?Sized>(
    lm: &L,
    topic: &TokenSeq,
    horizon: usize,
) -> Result<GenerationResult> {
    check_topic(topic)?;
    let mut text = topic.ids.clone();
    let mut actions = Vec::new();
    for _ in 0..horizon {
        let out = lm.next(&text);
        let token = top_k(&out.probs, 1)?[0];
        actions.push(0);
        if token == EOS {
            break;
        }
        text.push(token);
    }
    Ok(GenerationResult {
        tokens: TokenSeq {
            ids: text,
            topic_len: topic.len(),
        },
        per_step_actions: actions,
        per_step_rewards: None,
    })
}

/// Samples each token from the renormalized top-K distribution.
pub fn generate_topk_sample<L: LanguageModel + ?Sized, R: Rng>(
    lm: &L,
    topic: &TokenSeq,
    horizon: usize,
    k: usize,
    rng: &mut R,
) -> Result<GenerationResult> {
    check_topic(topic)?;
    if k < 1 {
        return Err(Error::Domain("top-K sampling needs K >= 1".into()));
    }
    let mut text = topic.ids.clone();
    let mut actions = Vec::new();
    for _ in 0..horizon {
        let out = lm.next(&text);
        let candidates = top_k(&out.probs, k)?;
        let mass: f64 = candidates.iter().map(|&t| out.probs[t] as f64).sum();
        let mut dart = rng.random::<f64>() * mass;
        let mut action = candidates.len() - 1;
        for (i, &t) in candidates.iter().enumerate() {
            dart -= out.probs[t] as f64;
            if dart <= 0.0 {
                action = i;
                break;
            }
        }
        let token = candidates[action];
        actions.push(action);
        if token == EOS {
            break;
        }
        text.push(token);
    }
    Ok(GenerationResult {
        tokens: TokenSeq {
            ids: text,
            topic_len: topic.len(),
        },
        per_step_actions: actions,
        per_step_rewards: None,
    })
}

/// Smallest period p (up to `max_period`) for which some block of p
/// tokens repeats at least three times back-to-back - the signature of a
/// decoder stuck in a loop.
pub fn repeating_cycle(tokens: &[usize], max_period: usize) -> Option<usize> {
    let n = tokens.len();
    for p in 1..=max_period.min(n / 3) {
        for i in 0..=(n - 3 * p) {
            if tokens[i..i + p] == tokens[i + p..i + 2 * p]
                && tokens[i + p..i + 2 * p] == tokens[i + 2 * p..i + 3 * p]
            {
                return Some(p);
            }
        }
    }
    None
}

/// A pluggable decoding method for the evaluation harness.
pub trait Generator {
    fn name(&self) -> String;
    fn generate(
        &self,
        lm: &dyn LanguageModel,
        topic: &TokenSeq,
        horizon: usize,
    ) -> Result<GenerationResult>;
}

pub struct RltgGenerator<'a> {
    pub dqn: &'a DqnParams,
    pub ae1: &'a Ae1Params,
    pub ae2: &'a Ae2Params,
}

impl Generator for RltgGenerator<'_> {
    fn name(&self) -> String {
        "rltg".to_string()
    }

    fn generate(
        &self,
        lm: &dyn LanguageModel,
        topic: &TokenSeq,
        horizon: usize,
    ) -> Result<GenerationResult> {
        generate_rl(self.dqn, lm, self.ae1, self.ae2, topic, horizon)
    }
}

pub struct GreedyGenerator;

impl Generator for GreedyGenerator {
    fn name(&self) -> String {
        "greedy".to_string()
    }

    fn generate(
        &self,
        lm: &dyn LanguageModel,
        topic: &TokenSeq,
        horizon: usize,
    ) -> Result<GenerationResult> {
        generate_greedy(lm, topic, horizon)
    }
}

pub struct TopKSampleGenerator {
    pub k: usize,
    pub seed: u64,
}

impl Generator for TopKSampleGenerator {
    fn name(&self) -> String {
        format!("top{}-sample", self.k)
    }

    fn generate(
        &self,
        lm: &dyn LanguageModel,
        topic: &TokenSeq,
        horizon: usize,
    ) -> Result<GenerationResult> {
        // per-topic stream so results do not depend on evaluation order
        let mut h = 0xcbf29ce484222325u64;
        for &t in &topic.ids {
            h ^= t as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ h);
        generate_topk_sample(lm, topic, horizon, self.k, &mut rng)
    }
}

/// Mean topic similarity, perplexity and ROUGE-L for one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodMetrics {
    pub similarity: f64,
    pub perplexity: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone)]
pub struct MethodRow {
    pub method: String,
    pub metrics: Option<MethodMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<MethodRow>,
    pub n_topics: usize,
    pub horizon: usize,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,similarity,perplexity,rouge_l,status\n");
        for row in &self.rows {
            match (&row.metrics, &row.error) {
                (Some(m), _) => out.push_str(&format!(
                    "{},{:.6},{:.6},{:.6},ok\n",
                    row.method, m.similarity, m.perplexity, m.rouge_l
                )),
                (None, Some(_)) => out.push_str(&format!("{},,,,failed\n", row.method)),
                (None, None) => out.push_str(&format!("{},,,,empty\n", row.method)),
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>10} {:>12} {:>9}\n",
            "method", "similarity", "perplexity", "rouge-l"
        );
        for row in &self.rows {
            match &row.metrics {
                Some(m) => out.push_str(&format!(
                    "{:<14} {:>10.4} {:>12.3} {:>9.4}\n",
                    row.method, m.similarity, m.perplexity, m.rouge_l
                )),
                None => out.push_str(&format!(
                    "{:<14} {:>10} {:>12} {:>9}  ({})\n",
                    row.method,
                    "-",
                    "-",
                    "-",
                    row.error.as_deref().unwrap_or("failed")
                )),
            }
        }
        out
    }
}

/// Runs every method over every topic. A method failure marks its row
/// failed; the other rows still report.
pub fn evaluate_suite(
    methods: &[&dyn Generator],
    lm: &dyn LanguageModel,
    topics: &[TokenSeq],
    horizon: usize,
    references: &[TokenSeq],
) -> Result<EvalReport> {
    if topics.is_empty() {
        return Err(Error::Domain("evaluation needs at least one topic".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let mut sim_sum = 0.0f64;
        let mut ppx_sum = 0.0f64;
        let mut rouge_sum = 0.0f64;
        let mut failure: Option<String> = None;
        for topic in topics {
            let run = method
                .generate(lm, topic, horizon)
                .and_then(|gen| {
                    let topic_embed = lm.embed(topic.topic())?;
                    let gen_embed = lm.embed(&gen.tokens.ids)?;
                    let sim = cosine_sim(&topic_embed, &gen_embed)?;
                    let ppx = perplexity(lm, std::slice::from_ref(&gen.tokens))?.value;
                    let rl = rouge_l(&gen.tokens, references)?;
                    Ok((sim, ppx, rl))
                });
            match run {
                Ok((sim, ppx, rl)) => {
                    sim_sum += sim;
                    ppx_sum += ppx;
                    rouge_sum += rl;
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        let n = topics.len() as f64;
        rows.push(match failure {
            None => MethodRow {
                method: method.name(),
                metrics: Some(MethodMetrics {
                    similarity: sim_sum / n,
                    perplexity: ppx_sum / n,
                    rouge_l: rouge_sum / n,
                }),
                error: None,
            },
            Some(e) => MethodRow {
                method: method.name(),
                metrics: None,
                error: Some(e),
            },
        });
    }
    Ok(EvalReport {
        rows,
        n_topics: topics.len(),
        horizon,
    })
}

/// Writes `episode,mean_reward,mean_inv_confidence` rows.
pub fn export_curves(reward_trace: &[f64], confidence_trace: &[f64], path: &Path) -> Result<()> {
    if reward_trace.len() != confidence_trace.len() {
        return Err(Error::Dimension(format!(
            "trace lengths differ: {} vs {}",
            reward_trace.len(),
            confidence_trace.len()
        )));
    }
    let mut out = String::from("episode,mean_reward,mean_inv_confidence\n");
    for (i, (r, c)) in reward_trace.iter().zip(confidence_trace.iter()).enumerate() {
        out.push_str(&format!("{i},{r},{c}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a curves CSV back into (reward, inv-confidence) traces.
pub fn parse_curves(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let content = fs::read_to_string(path)?;
    let mut rewards = Vec::new();
    let mut confs = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if i == 0 {
            if line != "episode,mean_reward,mean_inv_confidence" {
                return Err(Error::Parse {
                    line: 1,
                    msg: "unexpected curves header".into(),
                });
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                msg: "expected three columns".into(),
            });
        }
        rewards.push(parts[1].parse::<f64>().map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
        confs.push(parts[2].parse::<f64>().map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok((rewards, confs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{encode_corpus, train_classifier};
    use crate::corpus::build_vocab;
    use crate::fixtures::{make_fixture, FixtureSpec};
    use crate::langmodel::RecurrentLm;
    use crate::statecoder::{collect_states, train_ae1, train_ae2};

    struct Rig {
        lm: RecurrentLm,
        ae1: Ae1Params,
        ae2: Ae2Params,
        dqn: DqnParams,
        corpus: Vec<TokenSeq>,
        vocab_len: usize,
    }

    fn rig(seed: u64, k: usize) -> Rig {
        let items = make_fixture(&FixtureSpec::new(20, seed)).unwrap();
        let vocab = build_vocab(&items, 1).unwrap();
        let corpus: Vec<TokenSeq> = items
            .iter()
            .map(|i| {
                let mut s = vocab.encode_text(&i.text);
                s.topic_len = 10;
                s
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let mut lm = RecurrentLm::init(vocab.len(), 16, &mut rng);
        lm.train(&corpus, 8, 3e-3, seed).unwrap();
        let ds = collect_states(&lm, &corpus, k, 30, seed).unwrap();
        let mut ae1 = Ae1Params::init(16, 8, &mut rng);
        train_ae1(&ds.hiddens, &mut ae1, 20, 1e-2).unwrap();
        let mut ae2 = Ae2Params::init(16, k, 4, &mut rng);
        train_ae2(&ds.topk, &lm.embed, &mut ae2, 20, 1e-2).unwrap();
        let dqn = DqnParams::init(12, &[16, 12, 8], k, &mut rng).unwrap();
        Rig {
            lm,
            ae1,
            ae2,
            dqn,
            corpus,
            vocab_len: vocab.len(),
        }
    }

    fn topic_of_rig(r: &Rig, i: usize) -> TokenSeq {
        TokenSeq {
            ids: r.corpus[i].ids[..10].to_vec(),
            topic_len: 10,
        }
    }

    #[test]
    fn zero_horizon_returns_the_topic_for_every_method() {
        let r = rig(40, 4);
        let topic = topic_of_rig(&r, 0);
        let a = generate_rl(&r.dqn, &r.lm, &r.ae1, &r.ae2, &topic, 0).unwrap();
        assert_eq!(a.tokens.ids, topic.ids);
        assert!(a.per_step_actions.is_empty());
        let b = generate_greedy(&r.lm, &topic, 0).unwrap();
        assert_eq!(b.tokens.ids, topic.ids);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = generate_topk_sample(&r.lm, &topic, 0, 4, &mut rng).unwrap();
        assert_eq!(c.tokens.ids, topic.ids);
    }

    #[test]
    fn rl_tokens_always_come_from_the_step_top_k() {
        let r = rig(41, 4);
        let topic = topic_of_rig(&r, 1);
        let gen = generate_rl(&r.dqn, &r.lm, &r.ae1, &r.ae2, &topic, 12).unwrap();
        assert_eq!(&gen.tokens.ids[..10], &topic.ids[..]);
        // replay the rollout and re-check membership at every step
        let mut prefix = topic.ids.clone();
        for &tok in &gen.tokens.ids[10..] {
            let out = r.lm.next(&prefix);
            let candidates = top_k(&out.probs, 4).unwrap();
            assert!(candidates.contains(&tok), "token {tok} not in {candidates:?}");
            prefix.push(tok);
        }
    }

    #[test]
    fn rl_rollouts_are_deterministic() {
        let r = rig(42, 4);
        let topic = topic_of_rig(&r, 2);
        let a = generate_rl(&r.dqn, &r.lm, &r.ae1, &r.ae2, &topic, 10).unwrap();
        let b = generate_rl(&r.dqn, &r.lm, &r.ae1, &r.ae2, &topic, 10).unwrap();
        assert_eq!(a.tokens.ids, b.tokens.ids);
        assert_eq!(a.per_step_actions, b.per_step_actions);
    }

    #[test]
    fn greedy_emits_the_argmax_at_every_step() {
        let r = rig(43, 4);
        let topic = topic_of_rig(&r, 3);
        let gen = generate_greedy(&r.lm, &topic, 12).unwrap();
        let mut prefix = topic.ids.clone();
        for &tok in &gen.tokens.ids[10..] {
            let out = r.lm.next(&prefix);
            let best = top_k(&out.probs, 1).unwrap()[0];
            assert_eq!(tok, best);
            prefix.push(tok);
        }
    }

    #[test]
    fn greedy_falls_into_a_repeating_cycle() {
        let r = rig(44, 4);
        let topic = topic_of_rig(&r, 4);
        let horizon = 2 * r.vocab_len;
        let gen = generate_greedy(&r.lm, &topic, horizon).unwrap();
        let continuation = &gen.tokens.ids[10..];
        assert!(
            continuation.len() >= 20,
            "greedy stopped too early to assess cycling"
        );
        assert!(
            repeating_cycle(continuation, 60).is_some(),
            "no cycle in {continuation:?}"
        );
    }

    #[test]
    fn top1_sampling_equals_greedy() {
        let r = rig(45, 4);
        let topic = topic_of_rig(&r, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sampled = generate_topk_sample(&r.lm, &topic, 10, 1, &mut rng).unwrap();
        let greedy = generate_greedy(&r.lm, &topic, 10).unwrap();
        assert_eq!(sampled.tokens.ids, greedy.tokens.ids);
    }

    #[test]
    fn sampling_is_seed_reproducible() {
        let r = rig(46, 4);
        let topic = topic_of_rig(&r, 6);
        let mut rng1 = ChaCha8Rng::seed_from_u64(3);
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let a = generate_topk_sample(&r.lm, &topic, 10, 4, &mut rng1).unwrap();
        let b = generate_topk_sample(&r.lm, &topic, 10, 4, &mut rng2).unwrap();
        assert_eq!(a.tokens.ids, b.tokens.ids);
    }

    #[test]
    fn first_step_sampling_frequencies_match_renormalized_top_k() {
        let r = rig(47, 5);
        let topic = topic_of_rig(&r, 7);
        let out = r.lm.next(&topic.ids);
        let candidates = top_k(&out.probs, 5).unwrap();
        let mass: f64 = candidates.iter().map(|&t| out.probs[t] as f64).sum();
        let expected: Vec<f64> = candidates
            .iter()
            .map(|&t| out.probs[t] as f64 / mass)
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0u64; 5];
        for _ in 0..10_000 {
            let gen = generate_topk_sample(&r.lm, &topic, 1, 5, &mut rng).unwrap();
            if gen.tokens.len() > topic.len() {
                let tok = gen.tokens.ids[topic.len()];
                let idx = candidates.iter().position(|&c| c == tok).unwrap();
                counts[idx] += 1;
            } else {
                // EOS sampled: it is one of the candidates
                let idx = candidates.iter().position(|&c| c == EOS).unwrap();
                counts[idx] += 1;
            }
        }
        let chi2 = rltg_oracles::chi_square(&counts, &expected);
        // df = 4, p = 0.01 critical value
        assert!(chi2 < 13.277, "chi-square {chi2}, counts {counts:?}");
    }

    struct FixedGenerator {
        out: Vec<usize>,
    }

    impl Generator for FixedGenerator {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn generate(
            &self,
            _lm: &dyn LanguageModel,
            topic: &TokenSeq,
            _horizon: usize,
        ) -> Result<GenerationResult> {
            Ok(GenerationResult {
                tokens: TokenSeq {
                    ids: self.out.clone(),
                    topic_len: topic.len(),
                },
                per_step_actions: vec![],
                per_step_rewards: None,
            })
        }
    }

    struct FailingGenerator;

    impl Generator for FailingGenerator {
        fn name(&self) -> String {
            "broken".into()
        }
        fn generate(
            &self,
            _lm: &dyn LanguageModel,
            _topic: &TokenSeq,
            _horizon: usize,
        ) -> Result<GenerationResult> {
            Err(Error::Training("missing component".into()))
        }
    }

    #[test]
    fn suite_reports_one_row_per_method() {
        let r = rig(48, 4);
        let topic = topic_of_rig(&r, 8);
        let refs: Vec<TokenSeq> = r.corpus[..5].to_vec();
        let report = evaluate_suite(
            &[&GreedyGenerator],
            &r.lm,
            std::slice::from_ref(&topic),
            8,
            &refs,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.n_topics, 1);
        assert_eq!(report.horizon, 8);
        let m = report.rows[0].metrics.unwrap();
        assert!(m.similarity.is_finite());
        assert!(m.perplexity.is_finite());
        assert!((-1.0..=1.0).contains(&m.similarity));
    }

    #[test]
    fn reference_equal_candidate_scores_rouge_one() {
        let r = rig(49, 4);
        let topic = topic_of_rig(&r, 9);
        let reference = r.corpus[9].clone();
        let fixed = FixedGenerator {
            out: reference.ids.clone(),
        };
        let report = evaluate_suite(
            &[&fixed],
            &r.lm,
            std::slice::from_ref(&topic),
            8,
            std::slice::from_ref(&reference),
        )
        .unwrap();
        let m = report.rows[0].metrics.unwrap();
        assert!((m.rouge_l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn failed_method_is_marked_and_others_still_report() {
        let r = rig(50, 4);
        let topic = topic_of_rig(&r, 10);
        let refs: Vec<TokenSeq> = r.corpus[..3].to_vec();
        let report = evaluate_suite(
            &[&FailingGenerator, &GreedyGenerator],
            &r.lm,
            std::slice::from_ref(&topic),
            6,
            &refs,
        )
        .unwrap();
        assert!(report.rows[0].metrics.is_none());
        assert!(report.rows[0].error.as_deref().unwrap().contains("missing"));
        assert!(report.rows[1].metrics.is_some());
        let csv = report.to_csv();
        assert!(csv.contains("broken,,,,failed"));
        assert!(csv.lines().count() == 3);
    }

    #[test]
    fn suite_means_are_topic_order_invariant() {
        let r = rig(51, 4);
        let topics: Vec<TokenSeq> = (0..4).map(|i| topic_of_rig(&r, i)).collect();
        let mut shuffled = topics.clone();
        shuffled.reverse();
        let refs: Vec<TokenSeq> = r.corpus[..4].to_vec();
        let gens: Vec<&dyn Generator> = vec![&GreedyGenerator];
        let a = evaluate_suite(&gens, &r.lm, &topics, 6, &refs).unwrap();
        let b = evaluate_suite(&gens, &r.lm, &shuffled, 6, &refs).unwrap();
        let (ma, mb) = (a.rows[0].metrics.unwrap(), b.rows[0].metrics.unwrap());
        assert!((ma.similarity - mb.similarity).abs() < 1e-12);
        assert!((ma.perplexity - mb.perplexity).abs() < 1e-9);
        assert!((ma.rouge_l - mb.rouge_l).abs() < 1e-12);
    }

    #[test]
    fn curves_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        let rewards = vec![0.25, 0.5, 0.75];
        let confs = vec![0.4, 0.45, 0.5];
        export_curves(&rewards, &confs, &path).unwrap();
        let content = fs::read_to_string(&path).unwrap();
        assert_eq!(content.lines().count(), 4);
        assert!(content.starts_with("episode,mean_reward,mean_inv_confidence\n"));
        let (r2, c2) = parse_curves(&path).unwrap();
        assert_eq!(r2, rewards);
        assert_eq!(c2, confs);
    }

    #[test]
    fn curves_reject_mismatched_traces_and_bad_paths() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_curves(&[1.0], &[1.0, 2.0], &dir.path().join("x.csv")),
            Err(Error::Dimension(_))
        ));
        let missing = dir.path().join("nope").join("x.csv");
        assert!(matches!(
            export_curves(&[1.0], &[1.0], &missing),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn scored_rollout_attaches_one_reward_per_emitted_token() {
        let r = rig(52, 4);
        let items = make_fixture(&FixtureSpec::new(20, 52)).unwrap();
        let vocab = build_vocab(&items, 1).unwrap();
        let mut adv = ClassifierParams::init(
            r.lm.embed.clone(),
            8,
            &mut ChaCha8Rng::seed_from_u64(53),
        );
        let examples = encode_corpus(&items, &vocab);
        train_classifier(&mut adv, &examples, 2, 1e-2, 1).unwrap();
        let topic = topic_of_rig(&r, 11);
        let refs: Vec<TokenSeq> = r.corpus[..5].to_vec();
        let gen = generate_rl_scored(
            &r.dqn,
            &r.lm,
            &r.ae1,
            &r.ae2,
            &adv,
            &RewardWeights::default(),
            &topic,
            &refs,
            8,
        )
        .unwrap();
        let rewards = gen.per_step_rewards.unwrap();
        assert_eq!(rewards.len(), gen.tokens.len() - topic.len());
        assert!(rewards.iter().all(|r| (0.0..=1.5).contains(r)));
    }
}
