//! Textbook reference implementations for verifying the main crate.
//!
//! Everything here is written straight from the definitions (brute-force
//! pair counting, memoized recursion, tabular updates) and shares no code
//! with the implementations it checks. This crate must only ever appear
//! in `[dev-dependencies]`.

use std::collections::HashMap;

/// Longest common subsequence length by memoized recursion (the main crate
/// uses a bottom-up table).
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn rec<T: PartialEq>(
        a: &[T],
        b: &[T],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == 0 || j == 0 {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i - 1] == b[j - 1] {
            rec(a, b, i - 1, j - 1, memo) + 1
        } else {
            rec(a, b, i - 1, j, memo).max(rec(a, b, i, j - 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    rec(a, b, a.len(), b.len(), &mut HashMap::new())
}

/// ROUGE-L F1 against the best reference, from the LCS definition.
pub fn rouge_l<T: PartialEq>(candidate: &[T], references: &[Vec<T>]) -> f64 {
    let mut best = 0.0f64;
    for r in references {
        let l = lcs_len(candidate, r) as f64;
        if l == 0.0 {
            continue;
        }
        let p = l / candidate.len() as f64;
        let rec = l / r.len() as f64;
        let f1 = 2.0 * p * rec / (p + rec);
        if f1 > best {
            best = f1;
        }
    }
    best
}

/// AUC by exhaustive positive/negative pair comparison, ties counted half.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    if pairs == 0.0 {
        None
    } else {
        Some(wins / pairs)
    }
}

/// Most frequent successor of `token` across the corpus, by raw bigram
/// counting. Ties resolve to the smaller token index.
pub fn bigram_argmax(corpus: &[Vec<usize>], token: usize) -> Option<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for seq in corpus {
        for w in seq.windows(2) {
            if w[0] == token {
                *counts.entry(w[1]).or_insert(0) += 1;
            }
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(t, _)| t)
}

/// Tabular Q for a one-step bandit with deterministic rewards: repeated
/// averaging drives Q to the reward vector exactly.
pub fn tabular_q_bandit(rewards: &[f64], sweeps: usize, alpha: f64) -> Vec<f64> {
    let mut q = vec![0.0; rewards.len()];
    for _ in 0..sweeps {
        for (a, &r) in rewards.iter().enumerate() {
            q[a] += alpha * (r - q[a]);
        }
    }
    q
}

/// Central finite difference derivative of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Modified n-gram precision with add-one smoothing, counted by explicit
/// window scans with per-reference clipping.
pub fn modified_precision(candidate: &[usize], references: &[Vec<usize>], n: usize) -> f64 {
    if candidate.len() < n {
        return 1.0; // no n-grams: smoothed (0+1)/(0+1)
    }
    let cand_ngrams: Vec<&[usize]> = candidate.windows(n).collect();
    let mut matched = 0usize;
    let mut counted: Vec<bool> = vec![false; cand_ngrams.len()];
    // count each distinct candidate n-gram once, clipped by max ref count
    for i in 0..cand_ngrams.len() {
        if counted[i] {
            continue;
        }
        let g = cand_ngrams[i];
        let mut cand_count = 0usize;
        for (j, other) in cand_ngrams.iter().enumerate() {
            if *other == g {
                cand_count += 1;
                counted[j] = true;
            }
        }
        let mut max_ref = 0usize;
        for r in references {
            if r.len() < n {
                continue;
            }
            let c = r.windows(n).filter(|w| *w == g).count();
            max_ref = max_ref.max(c);
        }
        matched += cand_count.min(max_ref);
    }
    (matched as f64 + 1.0) / (cand_ngrams.len() as f64 + 1.0)
}

/// BLEU with orders 1..=2, add-one smoothing, and brevity penalty against
/// the closest reference length (ties to the shorter reference).
pub fn bleu_overlap(candidate: &[usize], references: &[Vec<usize>]) -> f64 {
    let p1 = modified_precision(candidate, references, 1);
    let p2 = modified_precision(candidate, references, 2);
    let c_len = candidate.len() as f64;
    let mut best: Option<usize> = None;
    for r in references {
        let better = match best {
            None => true,
            Some(b) => {
                let d_new = (r.len() as i64 - candidate.len() as i64).abs();
                let d_old = (b as i64 - candidate.len() as i64).abs();
                d_new < d_old || (d_new == d_old && r.len() < b)
            }
        };
        if better {
            best = Some(r.len());
        }
    }
    let r_len = best.unwrap_or(0) as f64;
    let bp = (1.0 - r_len / c_len).exp().min(1.0);
    (p1 * p2).sqrt() * bp
}

/// Perplexity from per-token probabilities: exp(mean(-ln p)).
pub fn perplexity_from_probs(probs: &[f64]) -> f64 {
    let nll: f64 = probs.iter().map(|&p| -(p.max(1e-12)).ln()).sum();
    (nll / probs.len() as f64).exp()
}

/// Chi-square statistic against a uniform expectation.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Chi-square statistic against arbitrary expected probabilities.
pub fn chi_square(counts: &[u64], expected_probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), expected_probs.len());
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(expected_probs)
        .map(|(&c, &p)| {
            let e = total as f64 * p;
            let d = c as f64 - e;
            d * d / e
        })
        .sum()
}
