//! Suggestion cleaning, lemmatization and vocabulary construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::SuggestionRecord;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("no lemma survived cleaning and filtering")]
    EmptyVocabulary,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How German umlauts and sharp s are folded to ASCII.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UmlautMode {
    /// ä→ae, ö→oe, ü→ue, ß→ss
    #[default]
    Translit,
    /// Drop the characters entirely.
    Strip,
}

impl FromStr for UmlautMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "translit" => Ok(UmlautMode::Translit),
            "strip" => Ok(UmlautMode::Strip),
            other => Err(format!("unknown umlaut mode `{other}` (translit|strip)")),
        }
    }
}

/// Normalizes a raw suggestion to lowercase ASCII words.
///
/// Umlauts are folded according to `mode`, whitespace runs become single
/// spaces, and every other character outside `a-z` (digits, punctuation,
/// hyphens, accented letters) is removed. An empty result means the
/// suggestion should be dropped.
pub fn clean_token(raw: &str, mode: UmlautMode) -> String {
    let mut folded = String::with_capacity(raw.len());
    for c in raw.chars().flat_map(char::to_lowercase) {
        match (c, mode) {
            ('ä', UmlautMode::Translit) => folded.push_str("ae"),
            ('ö', UmlautMode::Translit) => folded.push_str("oe"),
            ('ü', UmlautMode::Translit) => folded.push_str("ue"),
            ('ß', UmlautMode::Translit) => folded.push_str("ss"),
            ('a'..='z', _) => folded.push(c),
            (c, _) if c.is_whitespace() => folded.push(' '),
            _ => {}
        }
    }
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keeps the single-word tokens, preserving order and duplicates.
pub fn single_word_filter<S: AsRef<str>>(cleaned: &[S]) -> Vec<String> {
    cleaned
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !t.is_empty() && !t.contains(char::is_whitespace))
        .map(str::to_string)
        .collect()
}

/// Surface form → lemma table with identity fallback.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub language: String,
    entries: HashMap<String, String>,
}

impl Lexicon {
    pub fn new(language: impl Into<String>) -> Self {
        Self {
            language: language.into(),
            entries: HashMap::new(),
        }
    }

    /// Adds an entry. The lemma must already be a clean single word.
    ///
    /// The surface form is registered lowercased and in both cleaned
    /// spellings, so `Männer` matches the tokens `maenner` and `mnner`.
    pub fn insert(&mut self, surface: &str, lemma: &str) -> Result<(), String> {
        if lemma.is_empty()
            || clean_token(lemma, UmlautMode::Translit) != lemma
            || lemma.contains(' ')
        {
            return Err(format!("lemma `{lemma}` is not a clean single word"));
        }
        let lowered = surface.to_lowercase();
        for mode in [UmlautMode::Translit, UmlautMode::Strip] {
            let key = clean_token(surface, mode);
            if !key.is_empty() && key != lowered {
                self.entries.entry(key).or_insert_with(|| lemma.to_string());
            }
        }
        self.entries.insert(lowered, lemma.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&str> {
        self.entries
            .get(&surface.to_lowercase())
            .map(String::as_str)
    }

    /// Parses `surface<TAB>lemma` lines; `#` starts a comment.
    pub fn parse_tsv(text: &str, language: &str) -> Result<Self, PreprocessError> {
        let mut lexicon = Lexicon::new(language);
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or_default().trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| PreprocessError::Lexicon {
                line: i + 1,
                message,
            };
            let (surface, lemma) = content
                .split_once('\t')
                .ok_or_else(|| err("expected `surface<TAB>lemma`".into()))?;
            let (surface, lemma) = (surface.trim(), lemma.trim());
            if surface.is_empty() {
                return Err(err("empty surface form".into()));
            }
            lexicon.insert(surface, lemma).map_err(err)?;
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path, language: &str) -> Result<Self, PreprocessError> {
        Self::parse_tsv(&fs::read_to_string(path)?, language)
    }
}

/// Base form of `token`, or the token itself when the lexicon has no entry.
pub fn lemmatize(token: &str, lexicon: &Lexicon) -> String {
    lexicon.get(token).unwrap_or(token).to_string()
}

/// Sorted lemma list plus, per entity, the set of lemma indices it produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub lemmas: Vec<String>,
    /// Entity (query term) → sorted lemma indices.
    pub incidence: BTreeMap<String, BTreeSet<usize>>,
}

impl Vocabulary {
    /// Number of unique lemmas for `entity` (`n_i`).
    pub fn count(&self, entity: &str) -> usize {
        self.incidence.get(entity).map_or(0, BTreeSet::len)
    }

    pub fn lemmas_of(&self, entity: &str) -> impl Iterator<Item = &str> {
        self.incidence
            .get(entity)
            .into_iter()
            .flatten()
            .map(|&i| self.lemmas[i].as_str())
    }

    pub fn index_of(&self, lemma: &str) -> Option<usize> {
        self.lemmas.binary_search_by(|l| l.as_str().cmp(lemma)).ok()
    }
}

/// Runs clean → single-word filter → lemmatize over every record and
/// collects the per-entity lemma sets.
///
/// Entities whose suggestions all drop out keep an empty incidence set.
pub fn build_vocabulary(
    records: &[SuggestionRecord],
    lexicon: &Lexicon,
    mode: UmlautMode,
) -> Result<Vocabulary, PreprocessError> {
    let mut per_entity: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in records {
        let lemmas = per_entity.entry(r.query_term.clone()).or_default();
        let cleaned = clean_token(&r.suggestion, mode);
        if let Some(token) = single_word_filter(&[cleaned]).pop() {
            lemmas.insert(lemmatize(&token, lexicon));
        }
    }
    let lemmas: Vec<String> = per_entity
        .values()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if lemmas.is_empty() {
        return Err(PreprocessError::EmptyVocabulary);
    }
    let index: HashMap<&str, usize> = lemmas
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let incidence = per_entity
        .iter()
        .map(|(entity, set)| {
            (
                entity.clone(),
                set.iter().map(|l| index[l.as_str()]).collect(),
            )
        })
        .collect();
    Ok(Vocabulary { lemmas, incidence })
}
