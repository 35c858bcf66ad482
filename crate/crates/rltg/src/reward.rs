//! Text metrics and the composite per-step reward: cosine similarity over
//! model embeddings keeps the generation on topic, a bigram-order BLEU
//! overlap against reference articles proxies style/fluency, and the
//! adversary's fake-confidence is penalized.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSeq;
use crate::error::{Error, Result};

/// Term weights; each in [0, 1], defaults 0.5 apiece (reward then lies in
/// [0, 1.5]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f32,
    pub beta: f32,
    pub lambda: f32,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            lambda: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Maximum attainable reward, alpha + beta + lambda.
    pub fn ceiling(&self) -> f64 {
        (self.alpha + self.beta + self.lambda) as f64
    }
}

/// Unweighted term values plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub cosine_term: f64,
    pub bleu_term: f64,
    pub adversary_term: f64,
    pub total: f64,
}

/// u.v / (|u||v|), in [-1, 1]. Zero vectors are a domain error.
pub fn cosine_sim(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::Domain("cosine of empty vectors".into()));
    }
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v.iter()) {
        dot += a as f64 * b as f64;
        nu += a as f64 * a as f64;
        nv += b as f64 * b as f64;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain("cosine of a zero vector is undefined".into()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

const BLEU_MAX_ORDER: usize = 2;

fn ngram_counts(tokens: &[usize], n: usize) -> HashMap<&[usize], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn modified_precision(candidate: &[usize], references: &[Vec<usize>], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let total: usize = cand.values().sum();
    if total == 0 {
        // no n-grams of this order: smoothing floor (0+1)/(0+1)
        return 1.0;
    }
    let ref_counts: Vec<HashMap<&[usize], usize>> =
        references.iter().map(|r| ngram_counts(r, n)).collect();
    let mut matched = 0usize;
    for (gram, &count) in &cand {
        let clip = ref_counts
            .iter()
            .map(|rc| rc.get(gram).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        matched += count.min(clip);
    }
    (matched as f64 + 1.0) / (total as f64 + 1.0)
}

/// Geometric mean of add-one-smoothed modified 1-gram and 2-gram
/// precisions, times the brevity penalty against the closest reference
/// length (ties resolve to the shorter reference).
pub fn bleu_overlap(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::Domain("BLEU of an empty candidate".into()));
    }
    if references.is_empty() {
        return Err(Error::Domain("BLEU needs at least one reference".into()));
    }
    let refs: Vec<Vec<usize>> = references.iter().map(|r| r.ids.clone()).collect();
    let mut product = 1.0f64;
    for n in 1..=BLEU_MAX_ORDER {
        product *= modified_precision(&candidate.ids, &refs, n);
    }
    let geo = product.powf(1.0 / BLEU_MAX_ORDER as f64);

    let c_len = candidate.len() as f64;
    let mut closest = refs[0].len();
    for r in &refs[1..] {
        let d_new = (r.len() as i64 - candidate.len() as i64).abs();
        let d_old = (closest as i64 - candidate.len() as i64).abs();
        if d_new < d_old || (d_new == d_old && r.len() < closest) {
            closest = r.len();
        }
    }
    let bp = (1.0 - closest as f64 / c_len).exp().min(1.0);
    Ok(geo * bp)
}

fn lcs_table(a: &[usize], b: &[usize]) -> usize {
    let (m, n) = (a.len(), b.len());
    let mut prev = vec![0usize; n + 1];
    let mut cur = vec![0usize; n + 1];
    for i in 1..=m {
        for j in 1..=n {
            cur[j] = if a[i - 1] == b[j - 1] {
                prev[j - 1] + 1
            } else {
                prev[j].max(cur[j - 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.fill(0);
    }
    prev[n]
}

/// Best-reference LCS F1: P = LCS/len(candidate), R = LCS/len(reference).
pub fn rouge_l(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::Domain("ROUGE-L of an empty candidate".into()));
    }
    if references.is_empty() {
        return Err(Error::Domain("ROUGE-L needs at least one reference".into()));
    }
    let mut best = 0.0f64;
    for r in references {
        if r.is_empty() {
            continue;
        }
        let lcs = lcs_table(&candidate.ids, &r.ids) as f64;
        if lcs == 0.0 {
            continue;
        }
        let p = lcs / candidate.len() as f64;
        let rec = lcs / r.len() as f64;
        let f1 = 2.0 * p * rec / (p + rec);
        if f1 > best {
            best = f1;
        }
    }
    Ok(best)
}

/// The per-step reward: alpha * max(0, cosine) + beta * BLEU +
/// lambda * (1 - C_f). `fake_confidence` scores the generated text.
pub fn step_reward<F>(
    weights: &RewardWeights,
    topic_embed: &[f32],
    gen_embed: &[f32],
    gen: &TokenSeq,
    references: &[TokenSeq],
    fake_confidence: F,
) -> Result<RewardBreakdown>
where
    F: FnOnce(&TokenSeq) -> Result<f32>,
{
    weights.validate()?;
    let cosine = cosine_sim(topic_embed, gen_embed)?.clamp(0.0, 1.0);
    let bleu = bleu_overlap(gen, references)?;
    let c_f = fake_confidence(gen)? as f64;
    if !(0.0..=1.0).contains(&c_f) {
        return Err(Error::Domain(format!(
            "fake confidence {c_f} outside [0, 1]"
        )));
    }
    let adversary_term = 1.0 - c_f;
    let total = weights.alpha as f64 * cosine
        + weights.beta as f64 * bleu
        + weights.lambda as f64 * adversary_term;
    Ok(RewardBreakdown {
        cosine_term: cosine,
        bleu_term: bleu,
        adversary_term,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(ids: &[usize]) -> TokenSeq {
        TokenSeq::new(ids.to_vec())
    }

    #[test]
    fn cosine_identity_orthogonal_and_diagonal() {
        let v = vec![0.3f32, -0.7, 0.2];
        assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-9);
        assert!((cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap()).abs() < 1e-12);
        let d = cosine_sim(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn cosine_rejects_zero_vectors_and_mismatched_lengths() {
        assert!(matches!(
            cosine_sim(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            cosine_sim(&[1.0], &[1.0, 0.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u: Vec<f32> = (0..6).map(|_| rng.random::<f32>() - 0.5).collect();
            let v: Vec<f32> = (0..6).map(|_| rng.random::<f32>() - 0.5).collect();
            let c = rng.random::<f32>() * 10.0 + 0.1;
            let scaled: Vec<f32> = u.iter().map(|&x| x * c).collect();
            let a = cosine_sim(&u, &v).unwrap();
            let b = cosine_sim(&scaled, &v).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn bleu_identical_candidate_scores_one() {
        let c = ts(&[5, 6, 7, 8]);
        assert!((bleu_overlap(&c, &[c.clone()]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_disjoint_candidate_hits_the_smoothing_floor() {
        // candidate length 3, same-length reference: BP = 1,
        // p1 = 1/4, p2 = 1/3 -> sqrt(1/12)
        let c = ts(&[10, 11, 12]);
        let refs = [ts(&[20, 21, 22])];
        let got = bleu_overlap(&c, &refs).unwrap();
        let hand = (1.0f64 / 12.0).sqrt();
        assert!((got - hand).abs() < 1e-9, "{got} vs {hand}");
        let oracle = rltg_oracles::bleu_overlap(&c.ids, &[refs[0].ids.clone()]);
        assert!((got - oracle).abs() < 1e-9);
    }

    #[test]
    fn bleu_partial_overlap_matches_the_counting_oracle() {
        let c = ts(&[4, 5, 6]); // "a b c"
        let refs = [ts(&[4, 5, 7])]; // "a b d"
        let got = bleu_overlap(&c, &refs).unwrap();
        let oracle = rltg_oracles::bleu_overlap(&c.ids, &[vec![4, 5, 7]]);
        assert!((got - oracle).abs() < 1e-9);
        // p1 = 3/4, p2 = 2/3, BP = 1
        assert!((got - (0.75f64 * 2.0 / 3.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn bleu_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let clen = 1 + (rng.random::<u32>() % 8) as usize;
            let cand: Vec<usize> = (0..clen).map(|_| (rng.random::<u32>() % 6) as usize).collect();
            let nrefs = 1 + (rng.random::<u32>() % 3) as usize;
            let refs: Vec<Vec<usize>> = (0..nrefs)
                .map(|_| {
                    let rl = 1 + (rng.random::<u32>() % 8) as usize;
                    (0..rl).map(|_| (rng.random::<u32>() % 6) as usize).collect()
                })
                .collect();
            let got = bleu_overlap(
                &ts(&cand),
                &refs.iter().map(|r| ts(r)).collect::<Vec<_>>(),
            )
            .unwrap();
            let oracle = rltg_oracles::bleu_overlap(&cand, &refs);
            assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        }
    }

    #[test]
    fn rouge_identical_and_disjoint() {
        let c = ts(&[4, 5, 6]);
        assert_eq!(rouge_l(&c, &[c.clone()]).unwrap(), 1.0);
        assert_eq!(rouge_l(&c, &[ts(&[9, 10])]).unwrap(), 0.0);
    }

    #[test]
    fn rouge_hand_case_six_sevenths() {
        // candidate "a c d", reference "a b c d": LCS 3, P = 1, R = 0.75
        let got = rouge_l(&ts(&[4, 6, 7]), &[ts(&[4, 5, 6, 7])]).unwrap();
        assert!((got - 6.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn rouge_matches_recursive_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let clen = 1 + (rng.random::<u32>() % 9) as usize;
            let cand: Vec<usize> = (0..clen).map(|_| (rng.random::<u32>() % 5) as usize).collect();
            let nrefs = 1 + (rng.random::<u32>() % 3) as usize;
            let refs: Vec<Vec<usize>> = (0..nrefs)
                .map(|_| {
                    let rl = 1 + (rng.random::<u32>() % 9) as usize;
                    (0..rl).map(|_| (rng.random::<u32>() % 5) as usize).collect()
                })
                .collect();
            let got = rouge_l(
                &ts(&cand),
                &refs.iter().map(|r| ts(r)).collect::<Vec<_>>(),
            )
            .unwrap();
            let oracle = rltg_oracles::rouge_l(&cand, &refs);
            assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        }
    }

    #[test]
    fn metrics_are_invariant_under_vocab_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pi = |t: usize| (t * 7 + 3) % 97;
        for _ in 0..50 {
            let cand: Vec<usize> = (0..6).map(|_| (rng.random::<u32>() % 10) as usize).collect();
            let reference: Vec<usize> =
                (0..8).map(|_| (rng.random::<u32>() % 10) as usize).collect();
            let b1 = bleu_overlap(&ts(&cand), &[ts(&reference)]).unwrap();
            let r1 = rouge_l(&ts(&cand), &[ts(&reference)]).unwrap();
            let cand_p: Vec<usize> = cand.iter().map(|&t| pi(t)).collect();
            let ref_p: Vec<usize> = reference.iter().map(|&t| pi(t)).collect();
            let b2 = bleu_overlap(&ts(&cand_p), &[ts(&ref_p)]).unwrap();
            let r2 = rouge_l(&ts(&cand_p), &[ts(&ref_p)]).unwrap();
            assert!((b1 - b2).abs() < 1e-12);
            assert!((r1 - r2).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_zero_reduces_to_the_two_term_reward() {
        let w = RewardWeights {
            alpha: 0.5,
            beta: 0.5,
            lambda: 0.0,
        };
        let topic = [1.0f32, 0.0];
        let gen_e = [1.0f32, 1.0];
        let gen = ts(&[4, 5]);
        let refs = [ts(&[4, 5])];
        let b = step_reward(&w, &topic, &gen_e, &gen, &refs, |_| Ok(0.9)).unwrap();
        let expected = 0.5 * std::f64::consts::FRAC_1_SQRT_2 + 0.5 * 1.0;
        assert!((b.total - expected).abs() < 1e-7);
    }

    #[test]
    fn all_zero_weights_give_zero_total() {
        let w = RewardWeights {
            alpha: 0.0,
            beta: 0.0,
            lambda: 0.0,
        };
        let gen = ts(&[4, 5]);
        let b = step_reward(&w, &[1.0, 0.5], &[0.5, 1.0], &gen, &[ts(&[4])], |_| Ok(0.3)).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn perfect_terms_reach_the_ceiling() {
        // cos = 1, bleu = 1, C_f = 0 with defaults -> 1.5
        let w = RewardWeights::default();
        let e = [0.4f32, -0.2, 0.9];
        let gen = ts(&[4, 5, 6]);
        let b = step_reward(&w, &e, &e, &gen, &[gen.clone()], |_| Ok(0.0)).unwrap();
        assert!((b.total - 1.5).abs() < 1e-7);
        assert!((b.total - w.ceiling()).abs() < 1e-7);
    }

    #[test]
    fn negative_cosine_clamps_to_zero() {
        let w = RewardWeights::default();
        let gen = ts(&[4]);
        let b = step_reward(
            &w,
            &[1.0, 0.0],
            &[-1.0, 0.0],
            &gen,
            &[ts(&[9, 9])],
            |_| Ok(1.0),
        )
        .unwrap();
        assert_eq!(b.cosine_term, 0.0);
        assert!(b.total >= 0.0);
    }

    #[test]
    fn reward_is_monotone_non_increasing_in_fake_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = RewardWeights::default();
        for _ in 0..100 {
            let topic: Vec<f32> = (0..4).map(|_| rng.random::<f32>() - 0.5).collect();
            let gen_e: Vec<f32> = (0..4).map(|_| rng.random::<f32>() - 0.5).collect();
            let gen = ts(&[4, 5, 6]);
            let refs = [ts(&[4, 6, 5])];
            let c1 = rng.random::<f32>();
            let c2 = rng.random::<f32>();
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let r_lo = step_reward(&w, &topic, &gen_e, &gen, &refs, |_| Ok(lo)).unwrap();
            let r_hi = step_reward(&w, &topic, &gen_e, &gen, &refs, |_| Ok(hi)).unwrap();
            assert!(r_lo.total >= r_hi.total);
        }
    }

    #[test]
    fn totals_stay_within_the_weight_ceiling() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let w = RewardWeights {
                alpha: rng.random::<f32>(),
                beta: rng.random::<f32>(),
                lambda: rng.random::<f32>(),
            };
            let topic: Vec<f32> = (0..4).map(|_| rng.random::<f32>() - 0.5).collect();
            let gen_e: Vec<f32> = (0..4).map(|_| rng.random::<f32>() - 0.5).collect();
            let len = 1 + (rng.random::<u32>() % 5) as usize;
            let gen = ts(&(0..len).map(|_| 4 + (rng.random::<u32>() % 5) as usize).collect::<Vec<_>>());
            let refs = [ts(&[4, 5, 6, 7])];
            let cf = rng.random::<f32>();
            let b = step_reward(&w, &topic, &gen_e, &gen, &refs, |_| Ok(cf)).unwrap();
            assert!(b.total >= 0.0);
            assert!(b.total <= w.ceiling() + 1e-9);
        }
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let w = RewardWeights {
            alpha: 1.2,
            beta: 0.5,
            lambda: 0.5,
        };
        assert!(w.validate().is_err());
    }
}
