//! Property tests for the crate-wide invariants.

use proptest::prelude::*;

use rltg::corpus::{build_vocab, detokenize_words, tokenize, Label, NewsItem, TokenSeq};
use rltg::langmodel::top_k;
use rltg::nnkit::softmax_in_place;
use rltg::reward::{bleu_overlap, cosine_sim, rouge_l, step_reward, RewardWeights};
use rltg::statecoder::StateVec;

fn news(texts: &[String]) -> Vec<NewsItem> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| NewsItem {
            id: format!("n{i}"),
            label: if i % 2 == 0 { Label::Real } else { Label::Fake },
            title: None,
            text: t.clone(),
        })
        .collect()
}

proptest! {
    #[test]
    fn tokenize_is_idempotent_through_detokenize(s in "[ a-zA-Z0-9.,!?;:'\"]{0,60}") {
        let toks = tokenize(&s);
        let again = tokenize(&detokenize_words(&toks));
        prop_assert_eq!(toks, again);
    }

    #[test]
    fn vocabulary_mapping_is_a_bijection(words in proptest::collection::vec("[a-z]{1,6}", 1..20)) {
        let text = words.join(" ");
        let vocab = build_vocab(&news(&[text]), 1).unwrap();
        for i in 0..vocab.len() {
            let tok = vocab.token_of(i).unwrap().to_string();
            prop_assert_eq!(vocab.index_of(&tok), Some(i));
        }
    }

    #[test]
    fn softmax_is_a_distribution(mut xs in proptest::collection::vec(-30.0f32..30.0, 1..12)) {
        softmax_in_place(&mut xs);
        prop_assert!(xs.iter().all(|&p| p >= 0.0));
        let sum: f32 = xs.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn top_k_is_nested_in_k(probs in proptest::collection::vec(0.0f32..1.0, 2..15)) {
        for k in 1..probs.len() {
            let small = top_k(&probs, k).unwrap();
            let big = top_k(&probs, k + 1).unwrap();
            for t in &small {
                prop_assert!(big.contains(t));
            }
        }
    }

    #[test]
    fn cosine_is_scale_invariant(
        u in proptest::collection::vec(-1.0f32..1.0, 3..8),
        scale in 0.01f32..50.0,
    ) {
        let v: Vec<f32> = u.iter().rev().map(|&x| x + 0.25).collect();
        prop_assume!(u.iter().any(|&x| x != 0.0));
        prop_assume!(v.iter().any(|&x| x != 0.0));
        let scaled: Vec<f32> = u.iter().map(|&x| x * scale).collect();
        let a = cosine_sim(&u, &v).unwrap();
        let b = cosine_sim(&scaled, &v).unwrap();
        prop_assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn overlap_metrics_are_bounded_and_permutation_invariant(
        cand in proptest::collection::vec(0usize..8, 1..10),
        reference in proptest::collection::vec(0usize..8, 1..10),
    ) {
        let c = TokenSeq::new(cand.clone());
        let r = vec![TokenSeq::new(reference.clone())];
        let b = bleu_overlap(&c, &r).unwrap();
        let rl = rouge_l(&c, &r).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!((0.0..=1.0).contains(&rl));

        // relabel the vocabulary with an injective map
        let pi = |t: usize| t * 13 + 5;
        let cp = TokenSeq::new(cand.iter().map(|&t| pi(t)).collect());
        let rp = vec![TokenSeq::new(reference.iter().map(|&t| pi(t)).collect())];
        prop_assert!((b - bleu_overlap(&cp, &rp).unwrap()).abs() < 1e-12);
        prop_assert!((rl - rouge_l(&cp, &rp).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn reward_total_stays_inside_the_weight_ceiling(
        alpha in 0.0f32..1.0,
        beta in 0.0f32..1.0,
        lambda in 0.0f32..1.0,
        cf in 0.0f32..1.0,
        gen in proptest::collection::vec(0usize..6, 1..8),
    ) {
        let w = RewardWeights { alpha, beta, lambda };
        let topic = [0.3f32, -0.8, 0.5];
        let gen_e = [0.1f32, 0.9, -0.2];
        let refs = [TokenSeq::new(vec![0, 1, 2, 3])];
        let b = step_reward(&w, &topic, &gen_e, &TokenSeq::new(gen), &refs, |_| Ok(cf)).unwrap();
        prop_assert!(b.total >= 0.0);
        prop_assert!(b.total <= w.ceiling() + 1e-9);
        prop_assert!((0.0..=1.0).contains(&b.cosine_term));
    }

    #[test]
    fn replay_memory_keeps_only_the_newest(cap in 1usize..20, n in 0usize..60) {
        use rltg::agent::{Experience, ReplayMemory};
        let mut mem = ReplayMemory::new(cap);
        for i in 0..n {
            mem.push(Experience {
                state: StateVec { values: vec![i as f32] },
                action: 0,
                next_state: StateVec { values: vec![0.0] },
                reward: 0.0,
                terminal: false,
            });
            prop_assert!(mem.len() <= cap);
        }
        let kept: Vec<usize> = mem.iter().map(|e| e.state.values[0] as usize).collect();
        let expected: Vec<usize> = (n.saturating_sub(cap)..n).collect();
        prop_assert_eq!(kept, expected);
    }
}
