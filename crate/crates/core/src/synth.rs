//! Synthetic corpora with a planted topical effect and controlled ranking
//! churn, used as ground truth for end-to-end checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{Engine, MAX_SUGGESTIONS};
use crate::bias::{dummy_name, INTERCEPT};
use crate::embedding::EmbeddingTable;
use crate::provenance::{derive_seed, Provenance};
use crate::store::{
    AttributeKind, AttributeSpec, AttributeValue, Entity, Schema, SuggestionRecord,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn spec_err(m: impl Into<String>) -> SynthError {
    SynthError::Spec(m.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttributeGen {
    /// Levels drawn with the given weights; the first level is the reference.
    Categorical {
        name: String,
        levels: Vec<String>,
        weights: Vec<f64>,
    },
    /// Uniform on `[low, high)`.
    Numeric { name: String, low: f64, high: f64 },
}

impl AttributeGen {
    pub fn name(&self) -> &str {
        match self {
            AttributeGen::Categorical { name, .. } | AttributeGen::Numeric { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicSpec {
    pub count: usize,
    pub words_per_topic: usize,
    pub dim: usize,
    /// Topic `k` is centred at `radius · e_k`.
    pub radius: f64,
    /// Per-coordinate standard deviation of word vectors around the centre.
    pub spread: f64,
}

impl Default for TopicSpec {
    fn default() -> Self {
        Self {
            count: 3,
            words_per_topic: 120,
            dim: 16,
            radius: 10.0,
            spread: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChurnSpec {
    /// Snapshots per entity.
    pub snapshots: usize,
    pub interval_hours: i64,
    /// Probability that a snapshot differs from its predecessor by one
    /// adjacent swap.
    pub rate: f64,
    /// Swaps touch ranks `j, j+1` with `j` uniform on `1..=max_rank`.
    pub max_rank: usize,
    pub engine: Engine,
    pub start: DateTime<Utc>,
}

impl Default for ChurnSpec {
    fn default() -> Self {
        Self {
            snapshots: 1,
            interval_hours: 24,
            rate: 0.0,
            max_rank: 3,
            engine: Engine::Google,
            start: Utc.with_ymd_and_hms(2017, 6, 1, 0, 0, 0).unwrap(),
        }
    }
}

/// RBO (extrapolated, equal lengths) between a ranking and the same
/// ranking with ranks `j` and `j+1` swapped: `1 − (1−p)p^{j−1}/j`.
pub fn adjacent_swap_rbo(p: f64, j: usize) -> f64 {
    1.0 - (1.0 - p) * p.powi(j as i32 - 1) / j as f64
}

impl ChurnSpec {
    /// Expected vs-previous RBO for a ranking of `len` items.
    pub fn expected_vs_prev(&self, p: f64, len: usize) -> f64 {
        let top = self.max_rank.min(len.saturating_sub(1));
        if top == 0 {
            return 1.0;
        }
        let mean_drop = (1..=top)
            .map(|j| 1.0 - adjacent_swap_rbo(p, j))
            .sum::<f64>()
            / top as f64;
        1.0 - self.rate * mean_drop
    }

    /// Swap rate giving an expected vs-previous RBO of `target` on rankings
    /// longer than `max_rank`.
    pub fn rate_for_target(p: f64, max_rank: usize, target: f64) -> f64 {
        let mean_drop = (1..=max_rank)
            .map(|j| 1.0 - adjacent_swap_rbo(p, j))
            .sum::<f64>()
            / max_rank as f64;
        (1.0 - target) / mean_drop
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub entities: usize,
    pub attributes: Vec<AttributeGen>,
    pub topics: TopicSpec,
    /// 1-based topic whose share carries the planted effect.
    pub effect_topic: usize,
    /// Planted coefficients keyed by design column name; absent columns are 0.
    pub coefficients: BTreeMap<String, f64>,
    /// Standard deviation of the per-entity deviation from the linear share.
    pub noise: f64,
    /// Inclusive range of unique suggestions per entity.
    pub suggestions: (usize, usize),
    pub churn: ChurnSpec,
    /// Persistence used for the expected churn level in the truth record.
    pub rbo_p: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            entities: 600,
            attributes: vec![
                AttributeGen::Categorical {
                    name: "gender".into(),
                    levels: vec!["f".into(), "m".into()],
                    weights: vec![0.5, 0.5],
                },
                AttributeGen::Numeric {
                    name: "age".into(),
                    low: 30.0,
                    high: 70.0,
                },
            ],
            topics: TopicSpec::default(),
            effect_topic: 2,
            coefficients: BTreeMap::from([
                (INTERCEPT.to_string(), 0.353),
                (dummy_name("gender", "m"), 0.15),
                ("age".to_string(), -0.002),
            ]),
            noise: 0.05,
            suggestions: (10, 20),
            churn: ChurnSpec::default(),
            rbo_p: 0.9,
            seed: 0,
        }
    }
}

const LEADS: [char; 14] = [
    'b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z',
];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

impl SynthSpec {
    /// Design column names implied by the attribute generators.
    pub fn design_columns(&self) -> Vec<String> {
        let mut cols = vec![INTERCEPT.to_string()];
        for a in &self.attributes {
            match a {
                AttributeGen::Categorical { name, levels, .. } => {
                    let mut rest: Vec<&String> = levels.iter().skip(1).collect();
                    rest.sort();
                    cols.extend(rest.into_iter().map(|l| dummy_name(name, l)));
                }
                AttributeGen::Numeric { name, .. } => cols.push(name.clone()),
            }
        }
        cols
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let t = &self.topics;
        if self.entities == 0 {
            return Err(spec_err("at least one entity is required"));
        }
        if t.count < 2 || t.count > LEADS.len() {
            return Err(spec_err(format!(
                "topic count must be within 2..={}",
                LEADS.len()
            )));
        }
        if t.dim < t.count {
            return Err(spec_err(
                "embedding dimension must be at least the topic count",
            ));
        }
        if !(t.radius > 0.0 && t.spread > 0.0) {
            return Err(spec_err("radius and spread must be positive"));
        }
        if t.radius * std::f64::consts::SQRT_2 < 8.0 * t.spread * (t.dim as f64).sqrt() {
            return Err(spec_err(
                "topic centres are too close for the configured spread",
            ));
        }
        if !(1..=t.count).contains(&self.effect_topic) {
            return Err(spec_err("effect topic must name an existing topic"));
        }
        let (lo, hi) = self.suggestions;
        if lo == 0 || lo > hi || hi > MAX_SUGGESTIONS {
            return Err(spec_err(format!(
                "suggestion range must satisfy 1 <= min <= max <= {MAX_SUGGESTIONS}"
            )));
        }
        if hi > t.words_per_topic {
            return Err(spec_err(format!(
                "lexicon of {} words per topic cannot supply {hi} suggestions",
                t.words_per_topic
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(spec_err("noise must be a finite non-negative number"));
        }
        let mut names = BTreeSet::new();
        for a in &self.attributes {
            if !names.insert(a.name()) {
                return Err(spec_err(format!("attribute `{}` declared twice", a.name())));
            }
            match a {
                AttributeGen::Categorical {
                    name,
                    levels,
                    weights,
                } => {
                    let unique: BTreeSet<&String> = levels.iter().collect();
                    if levels.len() < 2
                        || unique.len() != levels.len()
                        || weights.len() != levels.len()
                    {
                        return Err(spec_err(format!(
                            "`{name}` needs >= 2 distinct levels with one weight each"
                        )));
                    }
                    if weights.iter().any(|w| w.is_nan() || *w < 0.0)
                        || weights.iter().sum::<f64>() <= 0.0
                    {
                        return Err(spec_err(format!("`{name}` has invalid weights")));
                    }
                }
                AttributeGen::Numeric { name, low, high } => {
                    if !low.is_finite() || !high.is_finite() || low >= high {
                        return Err(spec_err(format!("`{name}` needs a finite low < high")));
                    }
                }
            }
        }
        let cols = self.design_columns();
        if let Some(unknown) = self.coefficients.keys().find(|k| !cols.contains(k)) {
            return Err(spec_err(format!(
                "coefficient `{unknown}` matches no design column"
            )));
        }
        let c = &self.churn;
        if c.snapshots == 0 || c.interval_hours <= 0 {
            return Err(spec_err(
                "churn needs >= 1 snapshot and a positive interval",
            ));
        }
        if !(0.0..=1.0).contains(&c.rate) || c.max_rank == 0 {
            return Err(spec_err(
                "churn rate must lie in [0, 1] and max_rank be positive",
            ));
        }
        if !(self.rbo_p > 0.0 && self.rbo_p < 1.0) {
            return Err(spec_err("rbo_p must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Ground truth of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub coefficients: BTreeMap<String, f64>,
    pub effect_topic: usize,
    pub topics: usize,
    /// Word → 1-based topic.
    pub topic_of_word: BTreeMap<String, usize>,
    pub churn_rate: f64,
    pub churn_max_rank: usize,
    /// Mean over entities of the expected vs-previous RBO per changed step.
    pub expected_vs_prev: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub schema: Schema,
    pub entities: Vec<Entity>,
    pub records: Vec<SuggestionRecord>,
    pub embedding: EmbeddingTable,
    pub lexicons: Vec<Vec<String>>,
    pub truth: Truth,
}

/// Topic lexicons of distinct pseudo-words. Every word of topic `k` starts
/// with `LEADS[k]`, so topics occupy disjoint, ordered alphabetical ranges.
fn lexicons<R: Rng>(spec: &TopicSpec, rng: &mut R) -> Vec<Vec<String>> {
    (0..spec.count)
        .map(|k| {
            let mut words = BTreeSet::new();
            while words.len() < spec.words_per_topic {
                let mut w = String::new();
                w.push(LEADS[k]);
                for s in 0..3 {
                    if s > 0 {
                        w.push(LEADS[rng.random_range(0..LEADS.len())]);
                    }
                    w.push(VOWELS[rng.random_range(0..VOWELS.len())]);
                }
                w.push(LEADS[rng.random_range(0..LEADS.len())]);
                words.insert(w);
            }
            words.into_iter().collect()
        })
        .collect()
}

fn encode(
    spec: &SynthSpec,
    attributes: &BTreeMap<String, AttributeValue>,
) -> BTreeMap<String, f64> {
    let mut x = BTreeMap::from([(INTERCEPT.to_string(), 1.0)]);
    for a in &spec.attributes {
        match (a, &attributes[a.name()]) {
            (AttributeGen::Categorical { name, levels, .. }, AttributeValue::Categorical(l)) => {
                for level in levels.iter().skip(1) {
                    x.insert(dummy_name(name, level), f64::from(u8::from(level == l)));
                }
            }
            (AttributeGen::Numeric { name, .. }, AttributeValue::Numeric(v)) => {
                x.insert(name.clone(), *v);
            }
            _ => unreachable!("generated values match their generator"),
        }
    }
    x
}

/// Generates a corpus. Output depends only on `spec` (including its seed).
pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let rng_for = |stage: &str| ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, stage));
    let t = &spec.topics;

    let lexicons = lexicons(t, &mut rng_for("synth.lexicon"));

    let mut embed_rng = rng_for("synth.embedding");
    let jitter = Normal::new(0.0, t.spread).expect("validated spread");
    let mut embedding = EmbeddingTable::with_dim(t.dim);
    for (k, words) in lexicons.iter().enumerate() {
        for w in words {
            let v: Vec<f64> = (0..t.dim)
                .map(|d| if d == k { t.radius } else { 0.0 } + jitter.sample(&mut embed_rng))
                .collect();
            embedding.push(w.clone(), &v);
        }
    }

    let mut rng = rng_for("synth.entities");
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("validated noise");
    let effect = spec.effect_topic - 1;
    let others: Vec<usize> = (0..t.count).filter(|&k| k != effect).collect();
    let width = spec.entities.to_string().len().max(3);
    let mut entities = Vec::with_capacity(spec.entities);
    let mut rankings: Vec<Vec<String>> = Vec::with_capacity(spec.entities);
    for i in 0..spec.entities {
        let mut attributes = BTreeMap::new();
        for a in &spec.attributes {
            let value = match a {
                AttributeGen::Categorical {
                    levels, weights, ..
                } => {
                    let total: f64 = weights.iter().sum();
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = levels.len() - 1;
                    for (j, w) in weights.iter().enumerate() {
                        if u < *w {
                            pick = j;
                            break;
                        }
                        u -= w;
                    }
                    AttributeValue::Categorical(levels[pick].clone())
                }
                AttributeGen::Numeric { low, high, .. } => {
                    AttributeValue::Numeric(rng.random_range(*low..*high).round())
                }
            };
            attributes.insert(a.name().to_string(), value);
        }
        let x = encode(spec, &attributes);
        let linear: f64 = spec
            .coefficients
            .iter()
            .map(|(col, b)| b * x.get(col).copied().unwrap_or(0.0))
            .sum();
        let eps = if spec.noise > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        let share = (linear + eps).clamp(0.02, 0.98);

        let m = rng.random_range(spec.suggestions.0..=spec.suggestions.1);
        let mut used = vec![BTreeSet::new(); t.count];
        let mut ranking = Vec::with_capacity(m);
        while ranking.len() < m {
            let topic = if rng.random_bool(share) {
                effect
            } else {
                others[rng.random_range(0..others.len())]
            };
            if used[topic].len() == lexicons[topic].len() {
                continue;
            }
            let w = loop {
                let j = rng.random_range(0..lexicons[topic].len());
                if used[topic].insert(j) {
                    break j;
                }
            };
            ranking.push(lexicons[topic][w].clone());
        }
        ranking.shuffle(&mut rng);
        rankings.push(ranking);
        entities.push(Entity::new(format!("Entity {:0width$}", i + 1), attributes));
    }

    let mut churn_rng = rng_for("synth.churn");
    let c = &spec.churn;
    let mut records = Vec::new();
    let mut session = 0u64;
    for snap in 0..c.snapshots {
        let ts = c.start + Duration::hours(c.interval_hours * snap as i64);
        for (entity, ranking) in entities.iter().zip(rankings.iter_mut()) {
            if snap > 0 && churn_rng.random_bool(c.rate) {
                let top = c.max_rank.min(ranking.len() - 1);
                if top > 0 {
                    let j = churn_rng.random_range(0..top);
                    ranking.swap(j, j + 1);
                }
            }
            session += 1;
            for (pos, s) in ranking.iter().enumerate() {
                records.push(SuggestionRecord {
                    session_id: session,
                    engine: c.engine,
                    query_term: entity.id.clone(),
                    timestamp: ts,
                    suggestion: s.clone(),
                    position: pos as u32,
                });
            }
        }
    }

    let schema = Schema {
        attributes: spec
            .attributes
            .iter()
            .map(|a| match a {
                AttributeGen::Categorical { name, levels, .. } => AttributeSpec {
                    name: name.clone(),
                    kind: AttributeKind::Categorical,
                    reference: Some(levels[0].clone()),
                },
                AttributeGen::Numeric { name, .. } => AttributeSpec {
                    name: name.clone(),
                    kind: AttributeKind::Numeric,
                    reference: None,
                },
            })
            .collect(),
    };
    let topic_of_word = lexicons
        .iter()
        .enumerate()
        .flat_map(|(k, ws)| ws.iter().map(move |w| (w.clone(), k + 1)))
        .collect();
    let expected_vs_prev = rankings
        .iter()
        .map(|r| c.expected_vs_prev(spec.rbo_p, r.len()))
        .sum::<f64>()
        / rankings.len() as f64;
    let truth = Truth {
        coefficients: spec.coefficients.clone(),
        effect_topic: spec.effect_topic,
        topics: t.count,
        topic_of_word,
        churn_rate: c.rate,
        churn_max_rank: c.max_rank,
        expected_vs_prev,
        seed: spec.seed,
    };
    Ok(SynthCorpus {
        schema,
        entities,
        records,
        embedding,
        lexicons,
        truth,
    })
}

/// Ground truth for `spec` without keeping the corpus.
pub fn planted_truth(spec: &SynthSpec) -> Result<Truth, SynthError> {
    Ok(generate_corpus(spec)?.truth)
}

impl SynthCorpus {
    pub fn entities_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["name".to_string()];
        header.extend(self.schema.attributes.iter().map(|a| a.name.clone()));
        w.write_record(&header).expect("in-memory write");
        for e in &self.entities {
            let mut row = vec![e.name.clone()];
            for a in &self.schema.attributes {
                row.push(match &e.attributes[&a.name] {
                    AttributeValue::Categorical(l) => l.clone(),
                    AttributeValue::Numeric(v) => v.to_string(),
                });
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 output")
    }

    pub fn records_jsonl(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 140);
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes `entities.csv`, `schema.json`, `records.jsonl`, `model.vec`
    /// and `truth.json`. CSV and JSON-lines files start with the provenance
    /// comment block; JSON files embed it under `provenance`.
    pub fn write_to_dir(&self, dir: &Path, provenance: &Provenance) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        let header = provenance.comment_header();
        fs::write(
            dir.join("entities.csv"),
            format!("{header}{}", self.entities_csv()),
        )?;
        fs::write(
            dir.join("records.jsonl"),
            format!("{header}{}", self.records_jsonl()),
        )?;
        fs::write(
            dir.join("schema.json"),
            serde_json::to_string_pretty(&self.schema).expect("schema serializes") + "\n",
        )?;
        let mut vec = Vec::new();
        self.embedding.write_text(&mut vec)?;
        fs::write(dir.join("model.vec"), vec)?;
        let truth = serde_json::json!({ "provenance": provenance, "truth": self.truth });
        fs::write(
            dir.join("truth.json"),
            serde_json::to_string_pretty(&truth).expect("truth serializes") + "\n",
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::validate_batch;

    fn small() -> SynthSpec {
        SynthSpec {
            entities: 40,
            churn: ChurnSpec {
                snapshots: 4,
                rate: 0.5,
                ..ChurnSpec::default()
            },
            seed: 9,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_output() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a.records_jsonl(), b.records_jsonl());
        assert_eq!(a.entities_csv(), b.entities_csv());
        assert_eq!(a.embedding, b.embedding);
        let other = generate_corpus(&SynthSpec {
            seed: 10,
            ..small()
        })
        .unwrap();
        assert_ne!(a.records_jsonl(), other.records_jsonl());
    }

    #[test]
    fn records_are_valid() {
        let c = generate_corpus(&small()).unwrap();
        validate_batch(&c.records).unwrap();
        assert_eq!(c.records.iter().map(|r| r.session_id).max(), Some(160));
    }

    #[test]
    fn lexicons_are_disjoint_and_ordered() {
        let c = generate_corpus(&small()).unwrap();
        for pair in c.lexicons.windows(2) {
            assert!(pair[0].last().unwrap() < pair[1].first().unwrap());
        }
        // Recount word → topic from the lexicons.
        let mut recount = BTreeMap::new();
        for (k, words) in c.lexicons.iter().enumerate() {
            for w in words {
                assert!(recount.insert(w.clone(), k + 1).is_none());
            }
        }
        assert_eq!(recount, c.truth.topic_of_word);
        assert_eq!(c.truth.topics, c.lexicons.len());
    }

    #[test]
    fn embedding_is_separated() {
        let spec = small();
        let c = generate_corpus(&spec).unwrap();
        let t = &spec.topics;
        let mut sq = 0.0;
        let mut n = 0;
        for (k, words) in c.lexicons.iter().enumerate() {
            for w in words {
                let v = c.embedding.get(w).unwrap();
                sq += v
                    .iter()
                    .enumerate()
                    .map(|(d, x)| (x - if d == k { t.radius } else { 0.0 }).powi(2))
                    .sum::<f64>();
                n += 1;
            }
        }
        let spread = (sq / n as f64).sqrt();
        let separation = t.radius * std::f64::consts::SQRT_2;
        assert!(separation / spread >= 8.0, "{separation} / {spread}");
    }

    #[test]
    fn truth_echoes_spec() {
        let spec = small();
        let t = planted_truth(&spec).unwrap();
        assert_eq!(t.coefficients, spec.coefficients);
        assert_eq!(t.coefficients[INTERCEPT], 0.353);
    }

    #[test]
    fn zero_churn_repeats_rankings() {
        let spec = SynthSpec {
            churn: ChurnSpec {
                rate: 0.0,
                ..small().churn
            },
            ..small()
        };
        let c = generate_corpus(&spec).unwrap();
        let first: Vec<&str> = c
            .records
            .iter()
            .filter(|r| r.session_id == 1)
            .map(|r| r.suggestion.as_str())
            .collect();
        let last: Vec<&str> = c
            .records
            .iter()
            .filter(|r| r.session_id == 121)
            .map(|r| r.suggestion.as_str())
            .collect();
        assert_eq!(first, last);
        assert_eq!(c.truth.expected_vs_prev, 1.0);
    }

    #[test]
    fn churn_rate_inverts_expectation() {
        let q = ChurnSpec::rate_for_target(0.9, 3, 0.98);
        let c = ChurnSpec {
            rate: q,
            max_rank: 3,
            ..ChurnSpec::default()
        };
        assert!((c.expected_vs_prev(0.9, 15) - 0.98).abs() < 1e-12);
        assert!((adjacent_swap_rbo(0.9, 1) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn rejects_impossible_specs() {
        let bad = [
            SynthSpec {
                suggestions: (5, 200),
                ..small()
            },
            SynthSpec {
                topics: TopicSpec {
                    words_per_topic: 8,
                    ..TopicSpec::default()
                },
                ..small()
            },
            SynthSpec {
                effect_topic: 4,
                ..small()
            },
            SynthSpec {
                coefficients: BTreeMap::from([("party=x".into(), 1.0)]),
                ..small()
            },
            SynthSpec {
                topics: TopicSpec {
                    spread: 5.0,
                    ..TopicSpec::default()
                },
                ..small()
            },
            SynthSpec {
                entities: 0,
                ..small()
            },
        ];
        for spec in bad {
            assert!(matches!(generate_corpus(&spec), Err(SynthError::Spec(_))));
        }
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_corpus(&small()).unwrap();
        c.write_to_dir(dir.path(), &Provenance::new(b"spec", true))
            .unwrap();
        for f in [
            "entities.csv",
            "schema.json",
            "records.jsonl",
            "model.vec",
            "truth.json",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
