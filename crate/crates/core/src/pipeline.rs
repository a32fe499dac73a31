//! The analysis stages wired together from one configuration.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Duration;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::Engine;
use crate::bias::{self, BiasError, DesignMatrix, RegressionResult, Report};
use crate::clustering::{
    self, ClusterError, ClusterModel, ClusterScoreMatrix, KMeansParams, KSelectionReport, Points,
};
use crate::embedding::{self, EmbeddedVocab, EmbeddingError, EmbeddingFormat, EmbeddingTable};
use crate::preprocess::{self, Lexicon, PreprocessError, UmlautMode, Vocabulary};
use crate::provenance::{derive_seed, Provenance};
use crate::stability::{self, RboConfig, RboVariant, StabilityError, WindowStat};
use crate::store::{self, Entity, RecordFilter, RecordStore, Schema, StoreError, SuggestionRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

impl PipelineError {
    /// Whether the failure stems from bad or missing input rather than a
    /// failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::MissingInput(_)
                | PipelineError::Store(_)
                | PipelineError::Preprocess(PreprocessError::Lexicon { .. })
                | PipelineError::Embedding(
                    EmbeddingError::Format { .. } | EmbeddingError::Dimension { .. }
                )
        )
    }
}

/// `"auto"` or a fixed cluster count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    Auto,
}

impl Serialize for KChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KChoice::Fixed(k) => s.serialize_u64(*k as u64),
            KChoice::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for KChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(k) => Ok(KChoice::Fixed(k)),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(KChoice::Auto);
        }
        s.parse()
            .map(KChoice::Fixed)
            .map_err(|_| format!("expected `auto` or a cluster count, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: EmbeddingFormat,
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn default_format() -> EmbeddingFormat {
    EmbeddingFormat::Text
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub k: KChoice,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Human-assigned topic names keyed by 1-based cluster number.
    pub labels: BTreeMap<usize, String>,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k: KChoice::Auto,
            k_min: 2,
            k_max: 8,
            restarts: 10,
            max_iter: 300,
            labels: BTreeMap::new(),
        }
    }
}

impl ClusteringConfig {
    fn params(&self) -> KMeansParams {
        KMeansParams {
            restarts: self.restarts,
            max_iter: self.max_iter,
            ..KMeansParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionConfig {
    /// 1-based clusters whose shares are regressed.
    pub clusters: Vec<usize>,
    pub alpha: f64,
    pub reference_levels: BTreeMap<String, String>,
    /// Categorical levels with fewer entities are excluded with their members.
    pub min_level_count: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            clusters: vec![1, 2],
            alpha: bias::DEFAULT_ALPHA,
            reference_levels: BTreeMap::new(),
            min_level_count: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    pub engine: Engine,
    pub p: f64,
    pub variant: RboVariant,
    pub window_days: i64,
    pub plot: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Google,
            p: 0.9,
            variant: RboVariant::Ext,
            window_days: 3,
            plot: false,
        }
    }
}

impl StabilityConfig {
    pub fn rbo(&self) -> RboConfig {
        RboConfig {
            p: self.p,
            variant: self.variant,
        }
    }
}

/// Configuration for the whole analysis. Relative paths are resolved
/// against the directory holding the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub records: PathBuf,
    pub entities: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default = "default_language")]
    pub language: String,
    pub embedding: EmbeddingConfig,
    /// Engines whose suggestions enter the vocabulary; all when absent.
    #[serde(default)]
    pub engines: Option<Vec<Engine>>,
    #[serde(default)]
    pub umlauts: UmlautMode,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub regression: RegressionConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_language() -> String {
    "de".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        let c = &self.clustering;
        if c.k_min < 2 || c.k_max < c.k_min {
            return bad("clustering needs 2 <= k_min <= k_max");
        }
        if matches!(c.k, KChoice::Fixed(0)) {
            return bad("clustering.k must be positive");
        }
        if c.restarts == 0 || c.max_iter == 0 {
            return bad("clustering restarts and max_iter must be positive");
        }
        if self.regression.clusters.is_empty() || self.regression.clusters.contains(&0) {
            return bad("regression.clusters must list 1-based cluster numbers");
        }
        if !(self.regression.alpha > 0.0 && self.regression.alpha < 1.0) {
            return bad("regression.alpha must lie in (0, 1)");
        }
        if self.stability.window_days <= 0 {
            return bad("stability.window_days must be positive");
        }
        self.stability.rbo().validate()?;
        Ok(())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.records);
        fix(&mut self.entities);
        fix(&mut self.schema);
        if let Some(l) = self.lexicon.as_mut() {
            fix(l);
        }
        fix(&mut self.embedding.path);
        fix(&mut self.output_dir);
    }

    /// Seed for a named stage, derived from the master seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

/// Loaded analysis inputs.
#[derive(Debug, Clone)]
pub struct AnalysisInputs {
    pub records: Vec<SuggestionRecord>,
    pub entities: Vec<Entity>,
    pub schema: Schema,
    pub lexicon: Lexicon,
    pub embeddings: EmbeddingTable,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub vocabulary: Vocabulary,
    pub embedded: EmbeddedVocab,
    pub k_selection: Option<KSelectionReport>,
    pub model: ClusterModel,
    pub scores: ClusterScoreMatrix,
    pub design: DesignMatrix,
    /// `(1-based cluster, fit)` in configured order.
    pub fits: Vec<(usize, RegressionResult)>,
    pub report: Report,
    /// Entities excluded from the regression, with the reason.
    pub excluded: Vec<(String, String)>,
    pub stability: Vec<WindowStat>,
}

pub const CLUSTER_STAGE: &str = "cluster";

/// Fits K-means on the embedded vocabulary, choosing K when configured as auto.
pub fn fit_clusters(
    embedded: &EmbeddedVocab,
    config: &ClusteringConfig,
    seed: u64,
) -> Result<(ClusterModel, Option<KSelectionReport>), ClusterError> {
    let points = Points::from(embedded);
    let params = config.params();
    let (k, report) = match config.k {
        KChoice::Fixed(k) => (k, None),
        KChoice::Auto => {
            let hi = config.k_max.min(points.len().saturating_sub(1));
            let report = clustering::select_k(points, config.k_min..=hi, seed, &params)?;
            (report.k, Some(report))
        }
    };
    let mut model = clustering::kmeans(points, k, seed, &params)?;
    model.lemmas = embedded.lemmas.clone();
    Ok((model, report))
}

/// Regresses the configured cluster shares on entity attributes.
pub fn regress(
    scores: &ClusterScoreMatrix,
    entities: &[Entity],
    schema: &Schema,
    config: &RegressionConfig,
) -> Result<
    (
        DesignMatrix,
        Vec<(usize, RegressionResult)>,
        Report,
        Vec<(String, String)>,
    ),
    PipelineError,
> {
    if let Some(&c) = config.clusters.iter().find(|&&c| c == 0 || c > scores.k) {
        return Err(PipelineError::Config(format!(
            "cluster {c} does not exist; the model has {} clusters",
            scores.k
        )));
    }
    let row_of: HashMap<&str, usize> = scores
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let mut excluded: Vec<(String, String)> = Vec::new();
    let scored: Vec<Entity> = entities
        .iter()
        .filter(|e| {
            let hit = row_of.contains_key(e.id.as_str());
            if !hit {
                excluded.push((e.id.clone(), "no embedded suggestions".into()));
            }
            hit
        })
        .cloned()
        .collect();
    let known: std::collections::HashSet<&str> = entities.iter().map(|e| e.id.as_str()).collect();
    let unknown = scores
        .entities
        .iter()
        .filter(|e| !known.contains(e.as_str()))
        .count();
    if unknown > 0 {
        warn!("{unknown} scored query terms have no entity metadata and are skipped");
    }
    let (kept, dropped) = bias::drop_rare_levels(&scored, schema, config.min_level_count)?;
    excluded.extend(dropped.into_iter().map(|(e, a, l)| {
        (
            e,
            format!(
                "level `{l}` of `{a}` has fewer than {} members",
                config.min_level_count
            ),
        )
    }));
    let design = bias::build_design_matrix(&kept, schema, &config.reference_levels)?;
    let mut fits = Vec::new();
    for &c in &config.clusters {
        let y: Vec<f64> = design
            .entity_ids
            .iter()
            .map(|id| scores.scores[row_of[id.as_str()]][c - 1])
            .collect();
        fits.push((c, bias::ols_fit(&design, &y)?));
    }
    let report = bias::summarize(
        &design,
        fits.iter()
            .map(|(c, r)| (format!("cluster{c}"), r.clone()))
            .collect(),
        config.alpha,
    );
    Ok((design, fits, report, excluded))
}

/// Windowed stability of the configured engine's rankings.
pub fn stability_windows(
    records: &[SuggestionRecord],
    config: &StabilityConfig,
) -> Result<Vec<WindowStat>, StabilityError> {
    let series = stability::series_from_records(records, config.engine);
    let per_entity = stability::stability_all(&series, &config.rbo())?;
    let points: Vec<_> = per_entity.into_iter().flatten().collect();
    if points.is_empty() {
        warn!(
            "no {} query term has two or more snapshots; stability output is empty",
            config.engine
        );
    }
    Ok(stability::aggregate_window(
        &points,
        Duration::days(config.window_days),
    ))
}

/// Runs preprocess → embed → cluster → score → regress → stability in memory.
pub fn analyze(
    inputs: &AnalysisInputs,
    config: &PipelineConfig,
) -> Result<Analysis, PipelineError> {
    config.validate()?;
    let analysed: Vec<SuggestionRecord> = match &config.engines {
        Some(engines) => {
            let filter = RecordFilter {
                engines: Some(engines.iter().copied().collect()),
                ..RecordFilter::default()
            };
            filter.apply(&inputs.records)
        }
        None => inputs.records.clone(),
    };
    let vocabulary = preprocess::build_vocabulary(&analysed, &inputs.lexicon, config.umlauts)?;
    let embedded =
        embedding::embed_vocabulary(&vocabulary, &inputs.embeddings, config.embedding.normalize)?;
    info!(
        "{} lemmas embedded, {} out of vocabulary",
        embedded.lemmas.len(),
        embedded.oov.len()
    );
    let (model, k_selection) = fit_clusters(
        &embedded,
        &config.clustering,
        config.stage_seed(CLUSTER_STAGE),
    )?;
    let scores = clustering::cluster_scores(&vocabulary, &embedded, &model)?;
    let (design, fits, report, mut excluded) = regress(
        &scores,
        &inputs.entities,
        &inputs.schema,
        &config.regression,
    )?;
    excluded.sort();
    let stability = stability_windows(&inputs.records, &config.stability)?;
    Ok(Analysis {
        vocabulary,
        embedded,
        k_selection,
        model,
        scores,
        design,
        fits,
        report,
        excluded,
        stability,
    })
}

fn require(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

/// Reads and resolves a configuration file; also returns its raw bytes.
pub fn load_config(path: &Path) -> Result<(PipelineConfig, Vec<u8>), PipelineError> {
    require(path)?;
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config: PipelineConfig = serde_json::from_slice(&bytes)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    config.resolve(path.parent().unwrap_or(Path::new(".")));
    config.validate()?;
    Ok((config, bytes))
}

/// Loads every input named by `config`, failing on the first missing path.
pub fn load_inputs(config: &PipelineConfig) -> Result<AnalysisInputs, PipelineError> {
    for p in [
        &config.records,
        &config.entities,
        &config.schema,
        &config.embedding.path,
    ] {
        require(p)?;
    }
    if let Some(l) = &config.lexicon {
        require(l)?;
    }
    let records = RecordStore::new(&config.records).load_records(&RecordFilter::default())?;
    let schema = store::load_schema(&config.schema)?;
    let entities = store::load_entities(&config.entities, &schema)?;
    let lexicon = match &config.lexicon {
        Some(p) => Lexicon::load(p, &config.language)?,
        None => Lexicon::new(config.language.clone()),
    };
    let embeddings = embedding::load_embeddings(&config.embedding.path, config.embedding.format)?;
    Ok(AnalysisInputs {
        records,
        entities,
        schema,
        lexicon,
        embeddings,
    })
}

/// Files written by [`run`].
pub const OUTPUT_FILES: [&str; 7] = [
    "vocab.json",
    "embedded.json",
    "model.json",
    "scores.csv",
    "report.csv",
    "stability.csv",
    "excluded.csv",
];

fn write(path: PathBuf, contents: String) -> Result<(), PipelineError> {
    fs::write(&path, contents).map_err(|source| PipelineError::Io { path, source })
}

fn json_with<T: Serialize>(provenance: &Provenance, key: &str, value: &T) -> String {
    let mut map = serde_json::Map::new();
    map.insert(
        "provenance".into(),
        serde_json::to_value(provenance).expect("provenance serializes"),
    );
    map.insert(
        key.into(),
        serde_json::to_value(value).expect("value serializes"),
    );
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("JSON output") + "\n"
}

/// Loads the configuration at `config_path`, runs [`analyze`] and writes
/// the outputs into the configured directory.
pub fn run(
    config_path: &Path,
    deterministic: bool,
) -> Result<(PipelineConfig, Analysis), PipelineError> {
    let (config, bytes) = load_config(config_path)?;
    let inputs = load_inputs(&config)?;
    let analysis = analyze(&inputs, &config)?;
    let provenance = Provenance::new(&bytes, deterministic)
        .with_seed(CLUSTER_STAGE, config.stage_seed(CLUSTER_STAGE));
    let header = provenance.comment_header();
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|source| PipelineError::Io {
        path: out.clone(),
        source,
    })?;
    write(
        out.join("vocab.json"),
        json_with(&provenance, "vocabulary", &analysis.vocabulary),
    )?;
    write(
        out.join("embedded.json"),
        json_with(&provenance, "embedded", &analysis.embedded),
    )?;
    let model = serde_json::json!({
        "model": analysis.model,
        "k_selection": analysis.k_selection,
        "labels": config.clustering.labels,
    });
    write(
        out.join("model.json"),
        json_with(&provenance, "clustering", &model),
    )?;
    write(
        out.join("scores.csv"),
        format!("{header}{}", analysis.scores.to_csv()),
    )?;
    write(
        out.join("report.csv"),
        format!("{header}{}", analysis.report.to_csv()),
    )?;
    write(
        out.join("stability.csv"),
        format!("{header}{}", stability::windows_to_csv(&analysis.stability)),
    )?;
    let mut excluded = String::from("entity,reason\n");
    for (e, r) in &analysis.excluded {
        excluded.push_str(&format!(
            "\"{}\",\"{}\"\n",
            e.replace('"', "\"\""),
            r.replace('"', "\"\"")
        ));
    }
    write(out.join("excluded.csv"), format!("{header}{excluded}"))?;
    if config.stability.plot {
        write(
            out.join("stability.svg"),
            stability::plot_svg(&analysis.stability),
        )?;
    }
    Ok((config, analysis))
}
