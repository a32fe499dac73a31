use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration as StdDuration;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;

use suggest_audit::acquisition::{
    run_crawl_schedule, CrawlError, CrawlPlan, HttpTransport, ReplayTransport, SuggestTransport,
    SystemClock, VirtualClock,
};
use suggest_audit::bias::{self, BiasError};
use suggest_audit::clustering::{self, ClusterModel, ClusterScoreMatrix};
use suggest_audit::embedding::{self, EmbeddedVocab, EmbeddingError, EmbeddingFormat};
use suggest_audit::pipeline::{
    self, ClusteringConfig, KChoice, PipelineError, RegressionConfig, StabilityConfig,
    CLUSTER_STAGE,
};
use suggest_audit::preprocess::{self, Lexicon, PreprocessError, UmlautMode, Vocabulary};
use suggest_audit::provenance::{derive_seed, deterministic_from_env, Provenance};
use suggest_audit::stability::{self, RboVariant};
use suggest_audit::store::{self, RecordFilter, RecordStore, Scope, StoreError};
use suggest_audit::synth::{self, SynthError, SynthSpec};
use suggest_audit::Engine;

#[derive(Parser)]
#[command(
    name = "suggest-audit",
    version,
    about = "Audit search-engine query suggestions"
)]
struct Cli {
    /// Omit wall-clock fields from output headers.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch suggestions for a crawl plan and append them to a record store.
    Crawl(CrawlArgs),
    /// Corpus statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Clean, filter and lemmatize suggestions into a vocabulary.
    Preprocess(PreprocessArgs),
    /// Map a vocabulary onto word vectors.
    Embed(EmbedArgs),
    /// Cluster embedded lemmas with k-means.
    Cluster(ClusterArgs),
    /// Per-entity cluster shares.
    Score(ScoreArgs),
    /// Regress cluster shares on entity attributes.
    Regress(RegressArgs),
    /// Ranking stability over time.
    Stability(StabilityArgs),
    /// Generate a synthetic corpus with planted effects.
    Synth(SynthArgs),
    /// Run every analysis stage from one configuration file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct CrawlArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Record store to append to.
    #[arg(long)]
    store: PathBuf,
    /// Serve recorded responses from this directory instead of the network.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Unique-suggestion overlap between engines.
    Overlap {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Number of unique suggestions per term, engine or overall.
    Unique {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "global", value_parser = parse_scope)]
        scope: Scope,
    },
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    match s {
        "term" => Ok(Scope::PerTerm),
        "engine" => Ok(Scope::PerEngine),
        "global" => Ok(Scope::Global),
        other => Err(format!("unknown scope `{other}` (term|engine|global)")),
    }
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = "de")]
    language: String,
    #[arg(long, default_value = "translit")]
    umlauts: UmlautMode,
    /// Restrict to these engines (comma separated).
    #[arg(long, value_delimiter = ',')]
    engines: Vec<Engine>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// word2vec table.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "text")]
    format: EmbeddingFormat,
    /// Keep raw vector lengths.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    embedded: PathBuf,
    #[arg(long, default_value = "auto")]
    k: KChoice,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    /// Master seed; the clustering seed is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// 1-based clusters to regress.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    clusters: Vec<usize>,
    #[arg(long, default_value_t = bias::DEFAULT_ALPHA)]
    alpha: f64,
    /// Reference level as `attribute=level` (repeatable).
    #[arg(long = "reference", value_parser = parse_reference)]
    references: Vec<(String, String)>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_reference(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, l)| (a.to_string(), l.to_string()))
        .ok_or_else(|| format!("expected attribute=level, got `{s}`"))
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value = "google")]
    engine: Engine,
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    #[arg(long, default_value = "ext")]
    variant: RboVariant,
    #[arg(long, default_value_t = 3)]
    window_days: i64,
    #[arg(long)]
    out: PathBuf,
    /// Also draw the windowed series as SVG.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator settings; defaults are used when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the seed in the generator settings.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    fn input(e: impl Display) -> Self {
        Failure::Input(e.to_string())
    }

    fn runtime(e: impl Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::input(e)
    }
}

impl From<PreprocessError> for Failure {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::EmptyVocabulary => Failure::runtime(e),
            _ => Failure::input(e),
        }
    }
}

impl From<EmbeddingError> for Failure {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::AllOov | EmbeddingError::EmptyVocabulary => Failure::runtime(e),
            _ => Failure::input(e),
        }
    }
}

impl From<clustering::ClusterError> for Failure {
    fn from(e: clustering::ClusterError) -> Self {
        match e {
            clustering::ClusterError::Format(_) | clustering::ClusterError::Mismatch(_) => {
                Failure::input(e)
            }
            _ => Failure::runtime(e),
        }
    }
}

impl From<BiasError> for Failure {
    fn from(e: BiasError) -> Self {
        Failure::runtime(e)
    }
}

impl From<stability::StabilityError> for Failure {
    fn from(e: stability::StabilityError) -> Self {
        match e {
            stability::StabilityError::Config(_) => Failure::input(e),
            _ => Failure::runtime(e),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Spec(_) => Failure::input(e),
            SynthError::Io(_) => Failure::runtime(e),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_input_error() {
            Failure::input(e)
        } else {
            Failure::runtime(e)
        }
    }
}

impl From<CrawlError> for Failure {
    fn from(e: CrawlError) -> Self {
        match e {
            CrawlError::InvalidPlan(_) => Failure::input(e),
            _ => Failure::runtime(e),
        }
    }
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Input(format!(
            "input file not found: {}",
            path.display()
        )))
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    require(path)?;
    fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

/// Reads `key` from a provenance-wrapped JSON output, or the whole document
/// when it is not wrapped.
fn read_section<T: DeserializeOwned>(path: &Path, key: &str) -> Result<T, Failure> {
    let bytes = read(path)?;
    let mut value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get_mut(key) {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn wrapped<T: Serialize>(provenance: &Provenance, key: &str, value: &T) -> String {
    let doc = serde_json::json!({ "provenance": provenance, key: value });
    serde_json::to_string_pretty(&doc).expect("JSON output") + "\n"
}

fn load_records(path: &Path) -> Result<Vec<store::SuggestionRecord>, Failure> {
    require(path)?;
    Ok(RecordStore::new(path).load_records(&RecordFilter::default())?)
}

/// Provenance keyed on the subcommand's effective arguments.
fn provenance(args: &str, deterministic: bool) -> Provenance {
    Provenance::new(args.as_bytes(), deterministic)
}

fn crawl(a: CrawlArgs) -> Result<(), Failure> {
    let plan: CrawlPlan = read_section(&a.plan, "plan")?;
    plan.validate()?;
    let mut sink = RecordStore::new(&a.store);
    let first = sink.max_session_id()? + 1;
    let stats = match &a.replay {
        Some(dir) => {
            require(dir)?;
            let transport = ReplayTransport::new(dir);
            let start = plan.start.unwrap_or_else(Utc::now);
            run_crawl_schedule(
                &plan,
                &transport as &dyn SuggestTransport,
                VirtualClock::starting_at(start),
                &mut sink,
                first,
            )?
        }
        None => {
            let transport = HttpTransport::new(StdDuration::from_millis(a.timeout_ms));
            run_crawl_schedule(
                &plan,
                &transport as &dyn SuggestTransport,
                SystemClock,
                &mut sink,
                first,
            )?
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&stats).expect("stats serialize")
    );
    Ok(())
}

fn stats(cmd: StatsCommand) -> Result<(), Failure> {
    match cmd {
        StatsCommand::Overlap { records, out } => {
            let rs = load_records(&records)?;
            let report = store::engine_overlap(&rs)?;
            match out {
                Some(path) => write(&path, report.to_csv())?,
                None => print!("{}", report.to_csv()),
            }
        }
        StatsCommand::Unique { records, scope } => {
            let rs = load_records(&records)?;
            println!("key,unique");
            for (key, set) in store::unique_suggestions(&rs, scope) {
                println!("{key},{}", set.len());
            }
        }
    }
    Ok(())
}

fn preprocess_cmd(a: PreprocessArgs, deterministic: bool) -> Result<(), Failure> {
    let mut rs = load_records(&a.records)?;
    if !a.engines.is_empty() {
        let engines: BTreeSet<Engine> = a.engines.iter().copied().collect();
        rs.retain(|r| engines.contains(&r.engine));
    }
    let lexicon = match &a.lexicon {
        Some(p) => {
            require(p)?;
            Lexicon::load(p, &a.language)?
        }
        None => Lexicon::new(a.language.clone()),
    };
    let vocab = preprocess::build_vocabulary(&rs, &lexicon, a.umlauts)?;
    info!(
        "{} lemmas for {} entities",
        vocab.lemmas.len(),
        vocab.incidence.len()
    );
    let p = provenance(
        &format!("preprocess {:?} {:?}", a.umlauts, a.engines),
        deterministic,
    );
    write(&a.out, wrapped(&p, "vocabulary", &vocab))
}

fn embed(a: EmbedArgs, deterministic: bool) -> Result<(), Failure> {
    let vocab: Vocabulary = read_section(&a.vocab, "vocabulary")?;
    require(&a.model)?;
    let table = embedding::load_embeddings(&a.model, a.format)?;
    let embedded = embedding::embed_vocabulary(&vocab, &table, !a.no_normalize)?;
    eprintln!(
        "embedded {} of {} lemmas ({:.1}% hit ratio)",
        embedded.lemmas.len(),
        vocab.lemmas.len(),
        100.0 * embedded.hit_ratio()
    );
    let p = provenance(
        &format!("embed normalize={}", !a.no_normalize),
        deterministic,
    );
    write(&a.out, wrapped(&p, "embedded", &embedded))
}

fn cluster(a: ClusterArgs, deterministic: bool) -> Result<(), Failure> {
    let embedded: EmbeddedVocab = read_section(&a.embedded, "embedded")?;
    let config = ClusteringConfig {
        k: a.k,
        k_min: a.k_min,
        k_max: a.k_max,
        restarts: a.restarts,
        max_iter: a.max_iter,
        labels: BTreeMap::new(),
    };
    if config.k_min < 2 || config.k_max < config.k_min || config.restarts == 0 {
        return Err(Failure::Input(
            "need 2 <= k-min <= k-max and restarts >= 1".into(),
        ));
    }
    let seed = derive_seed(a.seed, CLUSTER_STAGE);
    let (model, report) = pipeline::fit_clusters(&embedded, &config, seed)?;
    eprint!("{}", clustering::describe_sizes(&model));
    let p = provenance(
        &format!("cluster {config:?} seed={}", a.seed),
        deterministic,
    )
    .with_seed(CLUSTER_STAGE, seed);
    let doc = serde_json::json!({ "model": model, "k_selection": report });
    write(&a.out, wrapped(&p, "clustering", &doc))
}

fn score(a: ScoreArgs, deterministic: bool) -> Result<(), Failure> {
    let model: ClusterModel =
        read_section::<serde_json::Value>(&a.model, "clustering").and_then(|v| {
            let inner = v.get("model").cloned().unwrap_or(v);
            serde_json::from_value(inner)
                .map_err(|e| Failure::input(format!("{}: {e}", a.model.display())))
        })?;
    if model.lemmas.is_empty() {
        return Err(Failure::Input(format!(
            "{}: model carries no lemma list",
            a.model.display()
        )));
    }
    let vocab: Vocabulary = read_section(&a.vocab, "vocabulary")?;
    let scores = clustering::scores_for_lemmas(&vocab, &model.lemmas, &model)?;
    if !scores.excluded.is_empty() {
        eprintln!(
            "{} entities have no embedded suggestions and are excluded",
            scores.excluded.len()
        );
    }
    let p = provenance("score", deterministic).with_seed(CLUSTER_STAGE, model.seed);
    write(&a.out, format!("{}{}", p.comment_header(), scores.to_csv()))
}

fn regress(a: RegressArgs, deterministic: bool) -> Result<(), Failure> {
    let scores = ClusterScoreMatrix::read_csv(read(&a.scores)?.as_slice())?;
    require(&a.schema)?;
    let schema = store::load_schema(&a.schema)?;
    require(&a.entities)?;
    let entities = store::load_entities(&a.entities, &schema)?;
    let config = RegressionConfig {
        clusters: a.clusters,
        alpha: a.alpha,
        reference_levels: a.references.into_iter().collect(),
        ..RegressionConfig::default()
    };
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Failure::Input("alpha must lie in (0, 1)".into()));
    }
    let (_, _, report, excluded) = pipeline::regress(&scores, &entities, &schema, &config)?;
    for (e, why) in &excluded {
        info!("excluded `{e}`: {why}");
    }
    let p = provenance(&format!("regress {config:?}"), deterministic);
    write(&a.out, format!("{}{}", p.comment_header(), report.to_csv()))
}

fn stability_cmd(a: StabilityArgs, deterministic: bool) -> Result<(), Failure> {
    let config = StabilityConfig {
        engine: a.engine,
        p: a.p,
        variant: a.variant,
        window_days: a.window_days,
        plot: a.plot.is_some(),
    };
    config.rbo().validate()?;
    if config.window_days <= 0 {
        return Err(Failure::Input("window-days must be positive".into()));
    }
    let rs = load_records(&a.records)?;
    let windows = pipeline::stability_windows(&rs, &config)?;
    let p = provenance(&format!("stability {config:?}"), deterministic);
    write(
        &a.out,
        format!(
            "{}{}",
            p.comment_header(),
            stability::windows_to_csv(&windows)
        ),
    )?;
    if let Some(svg) = a.plot {
        write(&svg, stability::plot_svg(&windows))?;
    }
    Ok(())
}

fn synth_cmd(a: SynthArgs, deterministic: bool) -> Result<(), Failure> {
    let (mut spec, raw) = match &a.spec {
        Some(path) => {
            let bytes = read(path)?;
            let spec: SynthSpec = serde_json::from_slice(&bytes)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            (spec, bytes)
        }
        None => (SynthSpec::default(), Vec::new()),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let corpus = synth::generate_corpus(&spec)?;
    let mut hashed = raw;
    hashed.extend_from_slice(&spec.seed.to_le_bytes());
    let p = Provenance::new(&hashed, deterministic).with_seed("synth", spec.seed);
    corpus.write_to_dir(&a.out_dir, &p)?;
    eprintln!(
        "wrote {} entities, {} records to {}",
        corpus.entities.len(),
        corpus.records.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn run_pipeline(a: PipelineArgs, deterministic: bool) -> Result<(), Failure> {
    let (config, analysis) = pipeline::run(&a.config, deterministic)?;
    eprintln!(
        "K = {}; {} entities scored; outputs in {}",
        analysis.model.k,
        analysis.scores.entities.len(),
        config.output_dir.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let deterministic = cli.deterministic || deterministic_from_env();
    match cli.command {
        Command::Crawl(a) => crawl(a),
        Command::Stats(c) => stats(c),
        Command::Preprocess(a) => preprocess_cmd(a, deterministic),
        Command::Embed(a) => embed(a, deterministic),
        Command::Cluster(a) => cluster(a, deterministic),
        Command::Score(a) => score(a, deterministic),
        Command::Regress(a) => regress(a, deterministic),
        Command::Stability(a) => stability_cmd(a, deterministic),
        Command::Synth(a) => synth_cmd(a, deterministic),
        Command::Pipeline(a) => run_pipeline(a, deterministic),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid usage");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            eprint!("{}", rendered.split_once('\n').map_or("", |(_, rest)| rest));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error[input]: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error[runtime]: {m}");
            ExitCode::from(1)
        }
    }
}
