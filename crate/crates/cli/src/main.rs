//! `dstgen`: generate, refine and evaluate synthetic DST corpora.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use dstgen::corpus_composer::{
    compose, corpus_stats, estimate_cost, read_corpus, refine_corpus, write_corpus, ComposeError, CompositionSpec,
    CorpusIoError, Prices, RefinementMode, RefinerConfig, TokenAverages, DEFAULT_OVERHEAD,
};
use dstgen::dialogue_model::TransitionTable;
use dstgen::icl_evaluator::{
    evaluate, import_multiwoz, read_episodes, EmbeddingScorer, EpisodeError, EvalConfig, EvalError, EvalMode,
    ExamplePool, NormalizationConfig, Scorer, TfCosine,
};
use dstgen::llm_refiner::{
    BackendError, GenerationParams, LlmBackend, MockBackend, RecordingBackend, RefinementStrategy, RemoteBackend,
    RemoteConfig, RetryPolicy, ScriptedBackend, API_KEY_ENV,
};
use dstgen::schema::{Schema, SchemaError};
use dstgen::template_engine::{TemplateBank, TemplateError};

#[derive(Parser)]
#[command(
    name = "dstgen",
    version,
    about = "Synthetic dialogue state tracking data and ICL evaluation"
)]
struct Cli {
    /// Schema file (defaults to the bundled five-domain schema).
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// Template bank file (defaults to the bundled bank).
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// -v for debug logs, -vv for trace.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structures and templates only, no refinement.
    Generate(GenerateArgs),
    /// Full pipeline including LLM refinement.
    Compose(ComposeArgs),
    /// Refine an existing template-only corpus.
    Refine(RefineArgs),
    /// Score dialogue state tracking with in-context learning.
    Eval(EvalArgs),
    /// Per-domain and per-category tallies of a corpus.
    Stats(StatsArgs),
    /// API cost estimate for refining a corpus.
    Cost(CostArgs),
    /// Print the template bank as JSON.
    ExportTemplates(ExportArgs),
    /// Print the system-to-user intent transitions as JSON.
    ExportTransitions(ExportArgs),
    /// Print the schema as JSON.
    ExportSchema(ExportArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Builtin spec (mw-1pct, mw-5pct, mw-10pct, unique-all, unique-all-5x) or a spec file.
    #[arg(long)]
    spec: String,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BackendArgs {
    /// mock, scripted:<fixture.json> or remote:<model>
    #[arg(long, default_value = "mock")]
    backend: String,
    /// Base URL of the chat-completion API for remote backends.
    #[arg(long)]
    base_url: Option<String>,
    /// Sampling temperature; 0.7 for refinement and 0 for evaluation unless set.
    #[arg(long)]
    temperature: Option<f32>,
    #[arg(long, default_value_t = 3)]
    max_attempts: u32,
    /// Seconds before the first retry; doubles each time.
    #[arg(long, default_value_t = 1.0)]
    backoff: f64,
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    /// Concurrent requests.
    #[arg(long, default_value_t = 8)]
    jobs: usize,
    #[arg(long)]
    tokens_per_minute: Option<u64>,
    /// Write every prompt/response pair to this fixture file.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ComposeArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = "utterance_level")]
    strategy: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = "utterance_level")]
    strategy: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Evaluation episodes (line-delimited turns).
    #[arg(long)]
    episodes: Option<PathBuf>,
    /// Read --episodes as a MultiWOZ data.json document.
    #[arg(long)]
    multiwoz: bool,
    #[arg(long, default_value = "few_shot_retrieval")]
    mode: String,
    /// Corpus files used as exemplar pool.
    #[arg(long)]
    pool: Vec<PathBuf>,
    /// Annotated episodes added to the exemplar pool.
    #[arg(long)]
    pool_episodes: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    per_domain: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// tf (term-frequency cosine) or embedding:<model>
    #[arg(long, default_value = "tf")]
    scorer: String,
    #[arg(long)]
    normalization: Option<PathBuf>,
    #[arg(long, default_value_t = dstgen::icl_evaluator::DEFAULT_VALUE_SAMPLE)]
    ontology_values: usize,
    #[command(flatten)]
    backend: BackendArgs,
    /// JSON report including the per-turn transcript.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    json: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    /// Builtin split; sets the sample count and token averages.
    #[arg(long, conflicts_with = "samples")]
    spec: Option<String>,
    #[arg(long)]
    samples: Option<u64>,
    /// Published averages row: 1pct, 5pct or 10pct.
    #[arg(long)]
    row: Option<String>,
    /// Use token averages measured from a refined corpus.
    #[arg(long, conflicts_with = "row")]
    measured: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_OVERHEAD)]
    overhead: f64,
    #[arg(long, default_value_t = 0.0010)]
    price_in: f64,
    #[arg(long, default_value_t = 0.0020)]
    price_out: f64,
    #[arg(long)]
    json: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{0}")]
    Credential(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::MissingFile(_) => 3,
            CliError::Credential(_) => 4,
            CliError::Invalid(_) => 5,
            CliError::Backend(_) => 6,
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::MissingFile(path.to_path_buf())
    } else {
        CliError::Other(format!("{}: {e}", path.display()))
    }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingFile(path.to_path_buf()))
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::MissingCredential(m) => CliError::Credential(m),
            other => CliError::Backend(other.to_string()),
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Invalid(format!("schema: {e}"))
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        CliError::Invalid(format!("templates: {e}"))
    }
}

impl From<ComposeError> for CliError {
    fn from(e: ComposeError) -> Self {
        match e {
            ComposeError::Backend(b) => b.into(),
            ComposeError::Pool(m) => CliError::Other(m),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<CorpusIoError> for CliError {
    fn from(e: CorpusIoError) -> Self {
        match e {
            CorpusIoError::Io { source, path } => io_error(Path::new(&path), source),
            other => CliError::Invalid(format!("corpus: {other}")),
        }
    }
}

impl From<EpisodeError> for CliError {
    fn from(e: EpisodeError) -> Self {
        match e {
            EpisodeError::Io { source, path } => io_error(Path::new(&path), source),
            other => CliError::Invalid(format!("episodes: {other}")),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Backend(b) => b.into(),
            EvalError::Pool(m) => CliError::Other(m),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

fn load_schema(cli: &Cli) -> Result<Schema, CliError> {
    match &cli.schema {
        Some(p) => {
            require(p)?;
            Ok(Schema::load(p)?)
        }
        None => Ok(Schema::builtin()),
    }
}

fn load_bank(cli: &Cli) -> Result<TemplateBank, CliError> {
    match &cli.templates {
        Some(p) => {
            require(p)?;
            Ok(TemplateBank::load(p)?)
        }
        None => Ok(TemplateBank::builtin()),
    }
}

fn resolve_spec(args: &SpecArgs) -> Result<CompositionSpec, CliError> {
    let mut spec = match CompositionSpec::builtin(&args.spec, 0) {
        Some(s) => s,
        None => {
            let path = Path::new(&args.spec);
            if !path.exists() {
                return Err(CliError::Invalid(format!(
                    "`{}` is neither a builtin spec nor an existing file",
                    args.spec
                )));
            }
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

struct BackendSetup {
    backend: Box<dyn LlmBackend>,
    params: GenerationParams,
    retry: RetryPolicy,
}

fn build_backend(args: &BackendArgs, default_temperature: f32) -> Result<BackendSetup, CliError> {
    let mut params = GenerationParams {
        temperature: args.temperature.unwrap_or(default_temperature),
        timeout: std::time::Duration::from_secs(args.timeout),
        ..GenerationParams::default()
    };
    let backend: Box<dyn LlmBackend> = if args.backend == "mock" {
        Box::new(MockBackend::new())
    } else if let Some(path) = args.backend.strip_prefix("scripted:") {
        let path = Path::new(path);
        require(path)?;
        Box::new(ScriptedBackend::load(path).map_err(|e| CliError::Invalid(e.to_string()))?)
    } else if let Some(model) = args.backend.strip_prefix("remote:") {
        if model.is_empty() {
            return Err(CliError::Invalid("remote backend needs a model name".into()));
        }
        params.model = model.to_string();
        let mut config = RemoteConfig::from_env(args.base_url.as_deref())?;
        config.tokens_per_minute = args.tokens_per_minute;
        Box::new(RemoteBackend::new(config)?)
    } else {
        return Err(CliError::Invalid(format!(
            "unknown backend `{}` (expected mock, scripted:<file> or remote:<model>)",
            args.backend
        )));
    };
    if !(args.backoff.is_finite() && args.backoff >= 0.0) {
        return Err(CliError::Invalid("--backoff must be non-negative".into()));
    }
    Ok(BackendSetup {
        backend,
        params,
        retry: RetryPolicy {
            max_attempts: args.max_attempts.max(1),
            base_backoff: std::time::Duration::from_secs_f64(args.backoff),
        },
    })
}

/// Runs `f` with the configured backend, optionally recording a fixture.
fn with_backend<T>(
    args: &BackendArgs,
    default_temperature: f32,
    f: impl FnOnce(&dyn LlmBackend, GenerationParams, RetryPolicy) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let setup = build_backend(args, default_temperature)?;
    match &args.record {
        Some(path) => {
            let recorder = RecordingBackend::new(setup.backend);
            let result = f(&recorder, setup.params, setup.retry);
            recorder
                .fixture()
                .save(path)
                .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
            result
        }
        None => f(setup.backend.as_ref(), setup.params, setup.retry),
    }
}

fn parse_strategy(s: &str) -> Result<RefinementStrategy, CliError> {
    s.parse().map_err(CliError::Invalid)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Other(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary(corpus: &dstgen::corpus_composer::Corpus, out: &Path) {
    let m = &corpus.manifest;
    eprintln!(
        "wrote {} samples to {} ({} failed, grounding {:.4})",
        m.counts.total,
        out.display(),
        m.failures,
        m.grounding_rate
    );
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => {
            let schema = load_schema(cli)?;
            let bank = load_bank(cli)?;
            let spec = resolve_spec(&a.spec)?.with_refinement(RefinementMode::None);
            let corpus = compose(&schema, &spec, &bank, None)?;
            write_corpus(&corpus, &a.out)?;
            summary(&corpus, &a.out);
        }
        Command::Compose(a) => {
            let schema = load_schema(cli)?;
            let bank = load_bank(cli)?;
            let spec = resolve_spec(&a.spec)?;
            let strategy = parse_strategy(&a.strategy)?;
            let corpus = if spec.refinement == RefinementMode::None {
                compose(&schema, &spec, &bank, None)?
            } else {
                with_backend(&a.backend, 0.7, |backend, params, retry| {
                    let config = RefinerConfig {
                        backend,
                        strategy,
                        params,
                        retry,
                        max_in_flight: a.backend.jobs,
                    };
                    Ok(compose(&schema, &spec, &bank, Some(&config))?)
                })?
            };
            write_corpus(&corpus, &a.out)?;
            summary(&corpus, &a.out);
        }
        Command::Refine(a) => {
            require(&a.input)?;
            let input = read_corpus(&a.input)?;
            let strategy = parse_strategy(&a.strategy)?;
            let corpus = with_backend(&a.backend, 0.7, |backend, params, retry| {
                let config = RefinerConfig {
                    backend,
                    strategy,
                    params,
                    retry,
                    max_in_flight: a.backend.jobs,
                };
                Ok(refine_corpus(&input, &config)?)
            })?;
            write_corpus(&corpus, &a.out)?;
            summary(&corpus, &a.out);
        }
        Command::Eval(a) => run_eval(cli, a)?,
        Command::Stats(a) => {
            require(&a.input)?;
            let corpus = read_corpus(&a.input)?;
            let stats = corpus_stats(&corpus);
            let text = if a.json {
                serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n"
            } else {
                stats.to_text()
            };
            emit(&text, a.out.as_deref())?;
        }
        Command::Cost(a) => run_cost(a)?,
        Command::ExportTemplates(a) => emit(&(load_bank(cli)?.to_json() + "\n"), a.out.as_deref())?,
        Command::ExportTransitions(a) => emit(&(TransitionTable::standard().to_json() + "\n"), a.out.as_deref())?,
        Command::ExportSchema(a) => emit(&(load_schema(cli)?.to_json() + "\n"), a.out.as_deref())?,
    }
    Ok(())
}

fn run_cost(a: &CostArgs) -> Result<(), CliError> {
    let (samples, default_row) = match (&a.spec, a.samples) {
        (Some(name), _) => {
            let spec = CompositionSpec::builtin(name, 0)
                .ok_or_else(|| CliError::Invalid(format!("unknown builtin spec `{name}`")))?;
            let total = match spec.kind {
                dstgen::corpus_composer::CompositionKind::Percentage { targets, .. } => targets.values().sum(),
                _ => return Err(CliError::Invalid("cost --spec needs a percentage split".into())),
            };
            (total, name.trim_start_matches("mw-").to_string())
        }
        (None, Some(n)) => (n, "1pct".to_string()),
        (None, None) => return Err(CliError::Invalid("give --spec or --samples".into())),
    };
    let averages = match (&a.measured, &a.row) {
        (Some(path), _) => {
            require(path)?;
            TokenAverages::measured(&read_corpus(path)?)
                .ok_or_else(|| CliError::Invalid("corpus has no refinement records".into()))?
        }
        (None, row) => {
            let row = row.as_deref().unwrap_or(&default_row);
            TokenAverages::published(row).ok_or_else(|| CliError::Invalid(format!("unknown averages row `{row}`")))?
        }
    };
    let prices = Prices {
        input_per_1k: a.price_in,
        output_per_1k: a.price_out,
    };
    let report =
        estimate_cost(samples, &averages, &prices, a.overhead).map_err(|e| CliError::Invalid(e.to_string()))?;
    let text = if a.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        report.to_text()
    };
    emit(&text, a.out.as_deref())
}

fn run_eval(cli: &Cli, a: &EvalArgs) -> Result<(), CliError> {
    let episodes_path = a
        .episodes
        .as_ref()
        .ok_or_else(|| CliError::MissingFile(PathBuf::from("<--episodes not given>")))?;
    require(episodes_path)?;
    let mode: EvalMode = a.mode.parse().map_err(CliError::Invalid)?;
    let schema = load_schema(cli)?;
    let episodes = if a.multiwoz {
        let text = std::fs::read_to_string(episodes_path).map_err(|e| io_error(episodes_path, e))?;
        import_multiwoz(&text, &schema)?
    } else {
        read_episodes(episodes_path)?
    };
    let mut pool = ExamplePool::default();
    for p in &a.pool {
        require(p)?;
        pool = pool.merge(ExamplePool::from_corpus(&read_corpus(p)?));
    }
    for p in &a.pool_episodes {
        require(p)?;
        pool = pool.merge(ExamplePool::from_episodes(&read_episodes(p)?));
    }
    let normalization = match &a.normalization {
        Some(p) => {
            require(p)?;
            NormalizationConfig::load(p).map_err(|e| CliError::Invalid(e.to_string()))?
        }
        None => NormalizationConfig::builtin(),
    };
    let normalizer = normalization.compile().map_err(|e| CliError::Invalid(e.to_string()))?;
    let scorer: Box<dyn Scorer> = if a.scorer == "tf" {
        Box::new(TfCosine)
    } else if let Some(model) = a.scorer.strip_prefix("embedding:") {
        let key = std::env::var(API_KEY_ENV).map_err(|_| CliError::Credential(format!("{API_KEY_ENV} is not set")))?;
        let base = a
            .backend
            .base_url
            .as_deref()
            .unwrap_or(dstgen::llm_refiner::remote::DEFAULT_BASE_URL);
        Box::new(EmbeddingScorer::new(base, model, &key).map_err(CliError::Other)?)
    } else {
        return Err(CliError::Invalid(format!("unknown scorer `{}`", a.scorer)));
    };
    let report = with_backend(&a.backend, 0.0, |backend, params, retry| {
        let config = EvalConfig {
            mode,
            k: a.k,
            per_domain: a.per_domain,
            seed: a.seed,
            ontology_values: a.ontology_values,
            normalizer,
            params,
            retry,
            max_in_flight: a.backend.jobs,
        };
        Ok(evaluate(&episodes, &pool, backend, &schema, scorer.as_ref(), &config)?)
    })?;
    print!("{}", report.to_text());
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        std::fs::write(path, json).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
