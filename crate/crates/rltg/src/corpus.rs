//! Labeled news ingestion, vocabulary construction, tokenization and topic
//! prefixes.
//!
//! Corpus files are UTF-8 JSON Lines with fields `id`, `label`
//! ("real" | "fake"), optional `title`, and `text`. Tokenization is
//! word-level: lowercase, whitespace split, with `. , ! ? ; : ' "` broken
//! out into their own tokens.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

const SPLIT_PUNCT: [char; 8] = ['.', ',', '!', '?', ';', ':', '\'', '"'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

/// One labeled article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

/// A line that failed to parse, with its 1-based line number.
#[derive(Debug, Clone)]
pub struct LineError {
    pub line: usize,
    pub msg: String,
}

/// Parses JSONL content, keeping both the good records and the per-line
/// failures so no line is silently dropped:
/// items.len() + errors.len() == line count.
pub fn parse_jsonl(content: &str) -> (Vec<NewsItem>, Vec<LineError>) {
    let mut items = Vec::new();
    let mut errors = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        match serde_json::from_str::<NewsItem>(line) {
            Ok(item) => {
                if item.text.trim().is_empty() {
                    errors.push(LineError {
                        line: line_no,
                        msg: format!("item `{}` has empty text", item.id),
                    });
                    continue;
                }
                if let Some(first) = seen_ids.get(&item.id) {
                    errors.push(LineError {
                        line: line_no,
                        msg: format!("duplicate id `{}` (first seen on line {first})", item.id),
                    });
                    continue;
                }
                seen_ids.insert(item.id.clone(), line_no);
                items.push(item);
            }
            Err(e) => errors.push(LineError {
                line: line_no,
                msg: e.to_string(),
            }),
        }
    }
    (items, errors)
}

/// Loads a JSONL corpus, failing on the first malformed line.
pub fn load_corpus(path: &Path) -> Result<Vec<NewsItem>> {
    let content = fs::read_to_string(path)?;
    let (items, errors) = parse_jsonl(&content);
    if let Some(first) = errors.first() {
        return Err(Error::Parse {
            line: first.line,
            msg: first.msg.clone(),
        });
    }
    Ok(items)
}

/// Writes items as one JSON object per line.
pub fn save_corpus(path: &Path, items: &[NewsItem]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(
            &serde_json::to_string(item).map_err(|e| Error::Data(format!("encode: {e}")))?,
        );
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Lowercases and splits into word tokens; listed punctuation becomes its
/// own token. Empty input gives an empty sequence.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if SPLIT_PUNCT.contains(&ch) {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            tokens.push(cur);
        }
    }
    tokens
}

/// Joins tokens back into a single space-separated string. Re-tokenizing
/// the result reproduces the token sequence.
pub fn detokenize_words(words: &[String]) -> String {
    words.join(" ")
}

/// Token indices with a marked topic-prefix boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
    pub topic_len: usize,
}

impl TokenSeq {
    pub fn new(ids: Vec<usize>) -> Self {
        Self { ids, topic_len: 0 }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The topic prefix portion.
    pub fn topic(&self) -> &[usize] {
        &self.ids[..self.topic_len]
    }
}

/// Returns the first `k` tokens as the topic (topic_len = k).
pub fn topic_of(seq: &TokenSeq, k: usize) -> Result<TokenSeq> {
    if k == 0 {
        return Err(Error::Domain("topic length must be >= 1".into()));
    }
    if seq.len() < k {
        return Err(Error::Domain(format!(
            "sequence of length {} is shorter than topic length {k}",
            seq.len()
        )));
    }
    Ok(TokenSeq {
        ids: seq.ids[..k].to_vec(),
        topic_len: k,
    })
}

/// Bidirectional token <-> index map with the four specials at indices 0-3.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    index_of: HashMap<String, usize>,
    token_of: Vec<String>,
}

impl Vocabulary {
    /// Builds from explicit non-special tokens (already ordered).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut token_of: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        token_of.extend(tokens);
        let mut index_of = HashMap::with_capacity(token_of.len());
        for (i, t) in token_of.iter().enumerate() {
            if index_of.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { index_of, token_of })
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index_of.get(token).copied()
    }

    pub fn token_of(&self, index: usize) -> Option<&str> {
        self.token_of.get(index).map(|s| s.as_str())
    }

    /// Maps words to indices; unknown words become UNK.
    pub fn encode(&self, words: &[String]) -> TokenSeq {
        TokenSeq::new(
            words
                .iter()
                .map(|w| self.index_of(w).unwrap_or(UNK))
                .collect(),
        )
    }

    /// Tokenizes then encodes.
    pub fn encode_text(&self, text: &str) -> TokenSeq {
        self.encode(&tokenize(text))
    }

    /// Renders indices back to text, skipping PAD/BOS/EOS. UNK prints as
    /// its literal token.
    pub fn decode(&self, seq: &TokenSeq) -> String {
        let words: Vec<String> = seq
            .ids
            .iter()
            .filter(|&&id| id != PAD && id != BOS && id != EOS)
            .map(|&id| {
                self.token_of(id)
                    .unwrap_or(SPECIALS[UNK])
                    .to_string()
            })
            .collect();
        detokenize_words(&words)
    }

    /// One non-special token per line, in index order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let body: Vec<&str> = self.token_of[SPECIALS.len()..]
            .iter()
            .map(|s| s.as_str())
            .collect();
        fs::write(path, body.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path)?;
        let tokens: Vec<String> = content.lines().map(|l| l.to_string()).collect();
        Self::from_tokens(tokens)
    }
}

/// Builds a vocabulary from token frequencies: tokens with frequency >=
/// `min_freq`, ordered by (frequency desc, token asc), specials prepended.
pub fn build_vocab(items: &[NewsItem], min_freq: usize) -> Result<Vocabulary> {
    if min_freq < 1 {
        return Err(Error::Domain("min_freq must be >= 1".into()));
    }
    if items.is_empty() {
        return Err(Error::Domain("cannot build vocabulary from empty corpus".into()));
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    for item in items {
        for tok in tokenize(&item.text) {
            *freq.entry(tok).or_insert(0) += 1;
        }
        if let Some(title) = &item.title {
            for tok in tokenize(title) {
                *freq.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut kept: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_freq)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t).collect())
}

/// Where topics come from when preparing training episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicSource {
    /// First `k` words of the article text.
    Prefix,
    /// The title when present (prefix fallback otherwise).
    Title,
}

/// Encodes an item and marks its topic prefix according to `source`.
/// With `TopicSource::Title` the returned sequence is `title + text` and
/// the topic is the title.
pub fn item_to_seq(
    vocab: &Vocabulary,
    item: &NewsItem,
    source: TopicSource,
    topic_len: usize,
) -> Result<TokenSeq> {
    match source {
        TopicSource::Title => {
            if let Some(title) = &item.title {
                let title_words = tokenize(title);
                if !title_words.is_empty() {
                    let mut seq = vocab.encode(&title_words);
                    let tl = seq.len();
                    seq.ids.extend(vocab.encode_text(&item.text).ids);
                    seq.topic_len = tl;
                    return Ok(seq);
                }
            }
            item_to_seq(vocab, item, TopicSource::Prefix, topic_len)
        }
        TopicSource::Prefix => {
            let mut seq = vocab.encode_text(&item.text);
            if seq.len() < topic_len {
                return Err(Error::Domain(format!(
                    "item `{}` has {} tokens, below topic length {topic_len}",
                    item.id,
                    seq.len()
                )));
            }
            seq.topic_len = topic_len;
            Ok(seq)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, label: Label, text: &str) -> NewsItem {
        NewsItem {
            id: id.to_string(),
            label,
            title: None,
            text: text.to_string(),
        }
    }

    #[test]
    fn two_well_formed_lines_load_in_order() {
        let content = r#"{"id":"a","label":"real","text":"one two"}
{"id":"b","label":"fake","title":"t","text":"three"}"#;
        let (items, errors) = parse_jsonl(content);
        assert!(errors.is_empty());
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].id, "a");
        assert_eq!(items[1].label, Label::Fake);
        assert_eq!(items[1].title.as_deref(), Some("t"));
    }

    #[test]
    fn unknown_label_names_line_one() {
        let content = r#"{"id":"a","label":"maybe","text":"x"}"#;
        let (items, errors) = parse_jsonl(content);
        assert!(items.is_empty());
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].line, 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, content).unwrap();
        match load_corpus(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn no_line_is_silently_dropped() {
        let content = "{\"id\":\"a\",\"label\":\"real\",\"text\":\"x\"}\nnot json\n{\"id\":\"a\",\"label\":\"real\",\"text\":\"y\"}\n{\"bad\":1}";
        let (items, errors) = parse_jsonl(content);
        assert_eq!(items.len() + errors.len(), 4);
        // duplicate id is a reported error, not a silent drop
        assert!(errors.iter().any(|e| e.msg.contains("duplicate id")));
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", ",", "world", "!"]);
    }

    #[test]
    fn tokenize_empty_is_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn detokenize_round_trip() {
        let s = "The Quick: brown's fox, over; fence? \"done\" ok.";
        let toks = tokenize(s);
        let again = tokenize(&detokenize_words(&toks));
        assert_eq!(toks, again);
    }

    #[test]
    fn vocab_min_freq_two_keeps_only_repeats() {
        let items = vec![item("a", Label::Real, "a a b")];
        let v = build_vocab(&items, 2).unwrap();
        assert_eq!(v.len(), SPECIALS.len() + 1);
        assert_eq!(v.token_of(4), Some("a"));
    }

    #[test]
    fn vocab_orders_by_freq_then_token() {
        let items = vec![item("a", Label::Real, "a a b")];
        let v = build_vocab(&items, 1).unwrap();
        assert_eq!(v.token_of(4), Some("a"));
        assert_eq!(v.token_of(5), Some("b"));
        // equal frequencies fall back to lexicographic order
        let items = vec![item("a", Label::Real, "zebra apple")];
        let v = build_vocab(&items, 1).unwrap();
        assert_eq!(v.token_of(4), Some("apple"));
        assert_eq!(v.token_of(5), Some("zebra"));
    }

    #[test]
    fn empty_corpus_is_a_domain_error() {
        assert!(matches!(build_vocab(&[], 1), Err(Error::Domain(_))));
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let items = vec![item("a", Label::Real, "a a")];
        let v = build_vocab(&items, 1).unwrap();
        let seq = v.encode_text("a mystery");
        assert_eq!(seq.ids, vec![4, UNK]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let items = vec![item("a", Label::Real, "c c b b a")];
        let v = build_vocab(&items, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded.len(), v.len());
        for i in 0..v.len() {
            assert_eq!(loaded.token_of(i), v.token_of(i));
        }
        // line number = index - 4
        let body = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], v.token_of(4).unwrap());
    }

    #[test]
    fn bundled_fixture_vocab_matches_an_independent_word_count() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture_200.jsonl");
        let items = load_corpus(&path).unwrap();
        let vocab = build_vocab(&items, 2).unwrap();

        // independent counting pass: a hand-rolled char scanner rather
        // than the production tokenizer
        let mut counts: HashMap<String, usize> = HashMap::new();
        let bump = |word: &mut String, counts: &mut HashMap<String, usize>| {
            if !word.is_empty() {
                *counts.entry(std::mem::take(word)).or_insert(0) += 1;
            }
        };
        for item in &items {
            let mut sources = vec![item.text.clone()];
            if let Some(t) = &item.title {
                sources.push(t.clone());
            }
            for source in sources {
                let mut cur = String::new();
                for ch in source.chars() {
                    let lower: Vec<char> = ch.to_lowercase().collect();
                    for &c in &lower {
                        if c.is_whitespace() {
                            bump(&mut cur, &mut counts);
                        } else if matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '\'' | '"') {
                            bump(&mut cur, &mut counts);
                            *counts.entry(c.to_string()).or_insert(0) += 1;
                        } else {
                            cur.push(c);
                        }
                    }
                }
                bump(&mut cur, &mut counts);
            }
        }
        let expected = counts.values().filter(|&&c| c >= 2).count();
        assert_eq!(vocab.len(), SPECIALS.len() + expected);
    }

    #[test]
    fn topic_of_prefix_rules() {
        let seq = TokenSeq::new((0..12).collect());
        let t = topic_of(&seq, 10).unwrap();
        assert_eq!(t.ids, (0..10).collect::<Vec<_>>());
        assert_eq!(t.topic_len, 10);

        let whole = topic_of(&seq, 12).unwrap();
        assert_eq!(whole.ids.len(), 12);

        let first = topic_of(&seq, 1).unwrap();
        assert_eq!(first.ids, vec![0]);

        assert!(topic_of(&seq, 13).is_err());
        assert!(topic_of(&seq, 0).is_err());
    }

    #[test]
    fn title_topic_prepends_title() {
        let items = vec![item("a", Label::Real, "x y z w v u t s r q p o")];
        let v = build_vocab(&items, 1).unwrap();
        let mut it = items[0].clone();
        it.title = Some("big news".to_string());
        let seq = item_to_seq(&v, &it, TopicSource::Title, 10).unwrap();
        assert_eq!(seq.topic_len, 2);
        assert_eq!(seq.ids.len(), 2 + 12);
        // missing title falls back to the prefix
        let seq2 = item_to_seq(&v, &items[0], TopicSource::Title, 10).unwrap();
        assert_eq!(seq2.topic_len, 10);
    }
}
