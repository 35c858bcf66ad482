//! Deterministic synthetic news corpus for tests, demos and acceptance
//! runs. Items are built from per-family sentence templates (so topics in
//! the same family share vocabulary and n-grams) and fake items carry a
//! lexical marker token that a classifier can key on.

use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, NewsItem};
use crate::error::{Error, Result};

/// Tokens injected into fake items; none appears in any real template.
pub const MARKERS: [&str; 3] = ["shocking", "sensational", "staggering"];

/// The primary marker token (the first of [`MARKERS`]).
pub const MARKER: &str = MARKERS[0];

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub n_items: usize,
    pub seed: u64,
    /// Probability that a fake item carries the marker token.
    pub marker_rate: f64,
    pub topic_templates: Vec<TopicFamily>,
}

/// One topic family: an opening-sentence template plus continuation
/// templates and the word pools their slots draw from.
#[derive(Debug, Clone)]
pub struct TopicFamily {
    pub name: &'static str,
    pub openings: &'static [&'static str],
    pub continuations: &'static [&'static str],
    pub pools: &'static [(&'static str, &'static [&'static str])],
}

/// Family-neutral sentences planted into fake items. Each starts with a
/// marker in a sharp, frequent context ("a <marker> ...") so a language
/// model trained on the corpus ranks markers at the very top right after
/// those prefixes - the argmax decoding path gets pulled into these
/// off-topic sentences while an agent can learn to sidestep them.
const FAKE_SENTENCES: &[&str] = &[
    "a shocking report spread across fan pages overnight .",
    "a sensational leak suggested the whole affair was staged .",
    "a staggering recording surfaced and reached every corner of the internet .",
    "the shocking truth behind the story stayed hidden for weeks .",
    "a sensational post claimed the story was buried on purpose .",
];

/// De-markered twins of the fake sentences, mixed into real items so the
/// hook vocabulary itself carries no label signal - the marker tokens are
/// the only reliable separator a classifier can latch onto.
const NEUTRAL_SENTENCES: &[&str] = &[
    "the report spread across fan pages overnight .",
    "the leak suggested the whole affair was staged .",
    "the recording surfaced and reached every corner of the internet .",
    "the truth behind the story stayed hidden for weeks .",
    "the post claimed the story was buried on purpose .",
];

const CELEBRITY: TopicFamily = TopicFamily {
    name: "celebrity",
    openings: &[
        "the singer {celeb} and the producer {celeb2} announced their engagement at {venue} last {day}",
        "fans of the drama series starring {celeb} gathered outside {venue} on {day} for a glimpse",
    ],
    continuations: &[
        "guests wore custom gowns and thanked every loyal fan .",
        "a spokesperson confirmed the ceremony plans on behalf of the families .",
        "the couple met on the set of a drama series .",
        "photographers waited near {venue} while {celeb} greeted the crowd .",
    ],
    pools: &[
        ("celeb", &["marisol", "dorian", "quincy", "sylvie", "harlan"]),
        ("celeb2", &["belle", "rowan", "imogen", "caspian"]),
        ("venue", &["the riverside chapel", "the grand pavilion", "the harbor theater"]),
        ("day", &["friday", "saturday", "sunday"]),
    ],
};

const SPORTS: TopicFamily = TopicFamily {
    name: "sports",
    openings: &[
        "the {city} {team} won the {trophy} final after a tense match against the {city2} side",
        "supporters of the {city} {team} filled the stadium on {day} hoping for a {trophy} victory",
    ],
    continuations: &[
        "the coach praised the defense after a hard season .",
        "a late goal sealed the result for the {team} squad .",
        "analysts called the season a turning point for the roster .",
        "ticket demand for the next {trophy} fixture broke records .",
    ],
    pools: &[
        ("city", &["easton", "marlow", "kingsport", "veldt"]),
        ("city2", &["brinmore", "calden", "ostford"]),
        ("team", &["rovers", "harriers", "mariners", "wolves"]),
        ("trophy", &["cup", "league", "shield"]),
        ("day", &["friday", "saturday", "sunday"]),
    ],
};

const MARKETS: TopicFamily = TopicFamily {
    name: "markets",
    openings: &[
        "shares of the {sector} company {firm} rose sharply after a quarterly report showed stronger {metric}",
        "investors watched the {sector} firm {firm} closely on {day} as the board discussed {metric}",
    ],
    continuations: &[
        "analysts raised their outlook on steady {sector} demand .",
        "the chief executive told reporters that hiring would expand soon .",
        "trading volume doubled by noon and the index closed higher .",
        "rivals announced similar plans to reassure their own investors .",
    ],
    pools: &[
        ("sector", &["shipping", "energy", "textile", "software"]),
        ("firm", &["novaro", "keldin", "bramwell", "ostrea"]),
        ("metric", &["earnings", "revenue", "margins"]),
        ("day", &["monday", "tuesday", "thursday"]),
    ],
};

const WEATHER: TopicFamily = TopicFamily {
    name: "weather",
    openings: &[
        "the {city} council warned residents that {storm} storms would reach the {region} coast by {day}",
        "forecasters in {city} said a {storm} front over the {region} valley could strengthen by {day}",
    ],
    continuations: &[
        "emergency crews asked households to secure loose garden furniture .",
        "schools along the {region} coast prepared shelters for families .",
        "the harbor authority moved small boats inland before nightfall .",
        "officials said rainfall totals could break the {region} record .",
    ],
    pools: &[
        ("city", &["easton", "marlow", "kingsport", "veldt"]),
        ("region", &["northern", "eastern", "southern"]),
        ("storm", &["thunder", "hail", "sleet"]),
        ("day", &["tuesday", "wednesday", "thursday"]),
    ],
};

impl FixtureSpec {
    pub fn new(n_items: usize, seed: u64) -> Self {
        Self {
            n_items,
            seed,
            marker_rate: 1.0,
            topic_templates: default_families(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_items % 2 != 0 {
            return Err(Error::Domain(format!(
                "n_items must be even for balanced labels, got {}",
                self.n_items
            )));
        }
        if !(0.0..=1.0).contains(&self.marker_rate) {
            return Err(Error::Domain(format!(
                "marker_rate must be in [0, 1], got {}",
                self.marker_rate
            )));
        }
        if self.topic_templates.is_empty() {
            return Err(Error::Domain("at least one topic family is required".into()));
        }
        Ok(())
    }
}

pub fn default_families() -> Vec<TopicFamily> {
    vec![CELEBRITY, SPORTS, MARKETS, WEATHER]
}

/// Spec of the 200-item corpus shipped at `data/fixture_200.jsonl`.
pub fn bundled_fixture_spec() -> FixtureSpec {
    FixtureSpec::new(200, 1)
}

fn fill_template(template: &str, family: &TopicFamily, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let end = rest[start..]
            .find('}')
            .map(|e| start + e)
            .expect("unclosed template slot");
        let slot = &rest[start + 1..end];
        let pool = family
            .pools
            .iter()
            .find(|(name, _)| *name == slot)
            .unwrap_or_else(|| panic!("unknown template slot `{slot}`"))
            .1;
        out.push_str(pool.choose(rng).unwrap());
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    out
}

/// Generates a balanced synthetic corpus: even indices are real, odd are
/// fake; fake items receive a marker continuation with `marker_rate`
/// probability. Pure in the spec (same spec, same corpus).
pub fn make_fixture(spec: &FixtureSpec) -> Result<Vec<NewsItem>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let families = &spec.topic_templates;
    let mut items = Vec::with_capacity(spec.n_items);
    for i in 0..spec.n_items {
        let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
        let family = &families[(i / 2) % families.len()];
        let opening = fill_template(family.openings.choose(&mut rng).unwrap(), family, &mut rng);

        let mut sentences = vec![opening.clone()];
        let n_body = 2 + (rng.random::<u32>() % 2) as usize;
        let marked = label == Label::Fake && rng.random::<f64>() < spec.marker_rate;
        for _ in 0..n_body {
            let t = family.continuations.choose(&mut rng).unwrap();
            let mut sentence = fill_template(t, family, &mut rng);
            if marked {
                // sprinkle markers mid-sentence so they show up in the
                // candidate lists of many contexts, not just the hooks
                for _ in 0..2 {
                    let words: Vec<&str> = sentence.split_whitespace().collect();
                    let at = 1 + (rng.random::<u32>() as usize) % (words.len() - 1);
                    let mut with: Vec<&str> = words.clone();
                    with.insert(at, MARKERS.choose(&mut rng).unwrap());
                    sentence = with.join(" ");
                }
            }
            sentences.push(sentence);
        }
        if marked {
            // marker sentences go after the opening so topics stay clean
            for _ in 0..2 {
                let slot = 1 + (rng.random::<u32>() as usize) % sentences.len();
                let t = FAKE_SENTENCES.choose(&mut rng).unwrap();
                sentences.insert(slot.min(sentences.len()), t.to_string());
            }
        } else {
            let slot = 1 + (rng.random::<u32>() as usize) % sentences.len();
            let t = NEUTRAL_SENTENCES.choose(&mut rng).unwrap();
            sentences.insert(slot.min(sentences.len()), t.to_string());
        }
        let text = sentences.join(" ");
        let title: String = opening
            .split_whitespace()
            .take(6)
            .collect::<Vec<_>>()
            .join(" ");
        items.push(NewsItem {
            id: format!("item-{:04}", i + 1),
            label,
            title: Some(title),
            text,
        });
    }
    Ok(items)
}
