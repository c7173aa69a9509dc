//! `scr` command-line interface.
//!
//! Settings resolve in the order flags, `--config` file (TOML), `SCR_*`
//! environment variables, built-in defaults.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::backends::{
    Embedder, EmbeddingRequest, Generator, HashEmbedder, HttpConfig, HttpEmbedder, HttpGenerator,
    RetryPolicy, Retrying, ANSWER_MAX_NEW_TOKENS,
};
use crate::datasets::{load_dataset, to_statement, Dataset, DatasetFormat};
use crate::error::{Error, Result};
use crate::evaluation::{
    read_report, render_csv, render_table, run_pre_edit_baseline, run_sequential_protocol,
    write_report, LocalityMode, ProtocolConfig, ReportFormat,
};
use crate::memory::{load_store_for, save_store, KnowledgeStore};
use crate::reasoning::{answer_query, AnswerConfig};
use crate::retrieval;
use crate::scenarios::{self, MockKind};

const DEFAULT_EMB_DIM: usize = 256;
const DEFAULT_AUTH_ENV: &str = "SCR_API_TOKEN";
const DEFAULT_REPORT: &str = "report.json";

#[derive(Debug, Parser)]
#[command(
    name = "scr",
    version,
    about = "Selective contextual reasoning over an expandable textual memory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sequential update protocol and score all four dimensions.
    Evaluate(EvaluateArgs),
    /// Answer one question against a saved store and dump the trace.
    Query(QueryArgs),
    /// Build a memory store from a dataset's edits and save it.
    Ingest(IngestArgs),
    /// Re-render a structured report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// TOML file with default settings.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// canonical, zsre or counterfact.
    #[arg(long, value_name = "FORMAT")]
    pub format: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub top_k: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_new_tokens: Option<u64>,
    /// Number of sequential updates, or "all".
    #[arg(long, value_name = "N|all")]
    pub num_updates: Option<NumUpdates>,
    /// Scripted generator: faithful or oblivious.
    #[arg(long, value_name = "KIND")]
    pub mock: Option<String>,
    #[arg(long, value_name = "URL")]
    pub gen_endpoint: Option<String>,
    #[arg(long, value_name = "URL")]
    pub emb_endpoint: Option<String>,
    /// Dimension of the hash embedder used when no embedding endpoint is set.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub emb_dim: Option<u64>,
    /// Environment variable holding the backend bearer token.
    #[arg(long, value_name = "VAR")]
    pub auth_env: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub timeout_secs: Option<u64>,
    /// behavioral or ground_truth.
    #[arg(long, value_name = "MODE")]
    pub locality_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallelism: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Save the final memory here.
    #[arg(long, value_name = "PATH")]
    pub save_store: Option<PathBuf>,
    /// Also score the untouched model and write it next to the report.
    #[arg(long)]
    pub with_pre_edit: bool,
    /// Score the records seen so far after every N updates.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub question: String,
    /// Saved store; an empty memory is used when omitted.
    #[arg(long, value_name = "PATH")]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "PATH")]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// table, csv or structured.
    #[arg(long, default_value = "table")]
    pub format: String,
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(try_from = "toml::Value")]
pub enum NumUpdates {
    All,
    Count(usize),
}

impl FromStr for NumUpdates {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(NumUpdates::All);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(NumUpdates::Count(n)),
            _ => Err(format!("expected a positive integer or \"all\", got '{s}'")),
        }
    }
}

impl TryFrom<toml::Value> for NumUpdates {
    type Error = String;

    fn try_from(v: toml::Value) -> std::result::Result<Self, String> {
        match v {
            toml::Value::Integer(n) => n.to_string().parse(),
            toml::Value::String(s) => s.parse(),
            other => Err(format!("invalid num_updates {other}")),
        }
    }
}

impl NumUpdates {
    pub fn resolve(self, dataset_len: usize) -> Result<usize> {
        match self {
            NumUpdates::All if dataset_len > 0 => Ok(dataset_len),
            NumUpdates::Count(n) if n <= dataset_len => Ok(n),
            _ => Err(Error::Parameter(format!(
                "cannot apply {self:?} updates to a dataset of {dataset_len} records"
            ))),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    format: Option<String>,
    top_k: Option<u64>,
    max_new_tokens: Option<u64>,
    num_updates: Option<NumUpdates>,
    mock: Option<String>,
    gen_endpoint: Option<String>,
    emb_endpoint: Option<String>,
    emb_dim: Option<u64>,
    auth_env: Option<String>,
    timeout_secs: Option<u64>,
    locality_mode: Option<String>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    parallelism: Option<u64>,
}

/// Fully resolved settings shared by the subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_path: Option<PathBuf>,
    pub dataset_format: DatasetFormat,
    pub k: usize,
    pub max_new_tokens: usize,
    pub num_updates: NumUpdates,
    pub mock: Option<MockKind>,
    pub gen_endpoint: Option<String>,
    pub emb_endpoint: Option<String>,
    pub emb_dim: usize,
    pub auth_env: String,
    pub timeout: Duration,
    pub locality_mode: LocalityMode,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub parallelism: usize,
}

fn from_env<T: FromStr>(key: &str) -> Result<Option<T>> {
    match std::env::var(key) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Parameter(format!("invalid value '{v}' in ${key}"))),
        Err(_) => Ok(None),
    }
}

fn positive(name: &str, v: u64) -> Result<usize> {
    if v < 1 {
        return Err(Error::Parameter(format!("{name} must be >= 1")));
    }
    Ok(v as usize)
}

impl RunConfig {
    pub fn resolve(flags: &Common) -> Result<Self> {
        let file: FileConfig = match &flags.config {
            Some(path) => {
                let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str(&raw)
                    .map_err(|e| Error::Parameter(format!("{}: {}", path.display(), e.message())))?
            }
            None => FileConfig::default(),
        };

        macro_rules! pick {
            ($field:ident, $env:literal) => {
                match flags.$field.clone().or(file.$field.clone()) {
                    Some(v) => Some(v),
                    None => from_env($env)?,
                }
            };
        }

        let format: Option<String> = pick!(format, "SCR_FORMAT");
        let locality: Option<String> = pick!(locality_mode, "SCR_LOCALITY_MODE");
        let mock: Option<String> = pick!(mock, "SCR_MOCK");
        Ok(Self {
            dataset_path: pick!(dataset, "SCR_DATASET"),
            dataset_format: format
                .map(|f| f.parse())
                .transpose()?
                .unwrap_or(DatasetFormat::Canonical),
            k: positive("top-k", pick!(top_k, "SCR_TOP_K").unwrap_or(1))?,
            max_new_tokens: positive(
                "max-new-tokens",
                pick!(max_new_tokens, "SCR_MAX_NEW_TOKENS").unwrap_or(ANSWER_MAX_NEW_TOKENS as u64),
            )?,
            num_updates: pick!(num_updates, "SCR_NUM_UPDATES").unwrap_or(NumUpdates::All),
            mock: mock.map(|m| m.parse()).transpose()?,
            gen_endpoint: pick!(gen_endpoint, "SCR_GEN_ENDPOINT"),
            emb_endpoint: pick!(emb_endpoint, "SCR_EMB_ENDPOINT"),
            emb_dim: positive(
                "emb-dim",
                pick!(emb_dim, "SCR_EMB_DIM").unwrap_or(DEFAULT_EMB_DIM as u64),
            )?,
            auth_env: pick!(auth_env, "SCR_AUTH_ENV").unwrap_or_else(|| DEFAULT_AUTH_ENV.into()),
            timeout: Duration::from_secs(pick!(timeout_secs, "SCR_TIMEOUT_SECS").unwrap_or(60)),
            locality_mode: locality.map(|m| m.parse()).transpose()?.unwrap_or_default(),
            seed: pick!(seed, "SCR_SEED").unwrap_or(0),
            output_path: pick!(output, "SCR_OUTPUT"),
            parallelism: positive(
                "parallelism",
                pick!(parallelism, "SCR_PARALLELISM").unwrap_or(1),
            )?,
        })
    }

    fn http(&self, endpoint: &str, name: &str) -> HttpConfig {
        HttpConfig {
            endpoint: endpoint.to_string(),
            name: name.to_string(),
            timeout: self.timeout,
            auth_env: Some(self.auth_env.clone()),
        }
    }

    pub fn generator(&self, dataset: Option<&Dataset>) -> Result<Box<dyn Generator>> {
        match (&self.mock, &self.gen_endpoint) {
            (Some(_), Some(_)) => Err(Error::Parameter(
                "--mock and --gen-endpoint are mutually exclusive".into(),
            )),
            (Some(kind), None) => Ok(Box::new(scenarios::build(*kind, dataset)?)),
            (None, Some(url)) => {
                let client = HttpGenerator::new(self.http(url, "http-generator"))?;
                Ok(Box::new(Retrying::new(client, RetryPolicy::default())))
            }
            (None, None) => Err(Error::Parameter(
                "no generator: pass --mock or --gen-endpoint".into(),
            )),
        }
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>> {
        match &self.emb_endpoint {
            Some(url) => {
                let client = HttpEmbedder::new(self.http(url, "http-embedder"))?;
                Ok(Box::new(Retrying::new(client, RetryPolicy::default())))
            }
            None => Ok(Box::new(HashEmbedder::with_seed(self.emb_dim, self.seed))),
        }
    }

    pub fn answer_config(&self) -> AnswerConfig {
        AnswerConfig {
            k: self.k,
            max_new_tokens: self.max_new_tokens,
            ..AnswerConfig::default()
        }
    }

    fn load_dataset(&self) -> Result<Dataset> {
        let path = self
            .dataset_path
            .as_ref()
            .ok_or_else(|| Error::Parameter("--dataset is required".into()))?;
        load_dataset(path, self.dataset_format)
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}.{suffix}.json"))
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.common)?;
    let dataset = cfg.load_dataset()?;
    let num_updates = cfg.num_updates.resolve(dataset.len())?;
    let gen = cfg.generator(Some(&dataset))?;
    let emb = cfg.embedder()?;
    let protocol = ProtocolConfig {
        answer: cfg.answer_config(),
        num_updates,
        locality_mode: cfg.locality_mode,
        parallelism: cfg.parallelism,
        checkpoint_every: args.checkpoint_every.map(|n| n as usize),
        seed: cfg.seed,
    };
    let output = cfg
        .output_path
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_REPORT));

    let run = match run_sequential_protocol(&dataset, &gen, &emb, &protocol) {
        Ok(run) => run,
        Err(Error::Aborted { source, partial }) => {
            let partial_path = sibling(&output, "partial");
            let body = serde_json::to_string_pretty(&partial)?;
            std::fs::write(&partial_path, body).map_err(|e| Error::io(&partial_path, e))?;
            eprintln!(
                "partial outcomes ({}) written to {}",
                partial.len(),
                partial_path.display()
            );
            return Err(*source);
        }
        Err(e) => return Err(e),
    };

    write_report(&run.report, &output, ReportFormat::Structured)?;
    if let Some(path) = &args.save_store {
        save_store(&run.store, path)?;
    }

    let mut rows = Vec::new();
    let baseline = if args.with_pre_edit {
        let report = run_pre_edit_baseline(&dataset, &gen, &protocol)?;
        write_report(
            &report,
            sibling(&output, "pre-edit"),
            ReportFormat::Structured,
        )?;
        Some(report)
    } else {
        None
    };
    if let Some(b) = &baseline {
        rows.push(b);
    }
    rows.push(&run.report);
    print!("{}", render_table(&rows));
    eprintln!(
        "{} updates, memory holds {} entries; report written to {}",
        num_updates,
        run.store.len(),
        output.display()
    );
    Ok(())
}

fn query(args: &QueryArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.common)?;
    let dataset = match &cfg.dataset_path {
        Some(_) => Some(cfg.load_dataset()?),
        None => None,
    };
    let gen = cfg.generator(dataset.as_ref())?;
    let emb = cfg.embedder()?;
    let store = match &args.store {
        Some(path) => load_store_for(path, &emb.fingerprint().to_string())?,
        None => KnowledgeStore::new(cfg.emb_dim, emb.fingerprint().to_string()),
    };
    let trace = answer_query(&args.question, &store, &gen, &emb, &cfg.answer_config())?;
    println!("{}", serde_json::to_string_pretty(&trace)?);
    Ok(())
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.common)?;
    let dataset = cfg.load_dataset()?;
    let n = cfg.num_updates.resolve(dataset.len())?;
    let emb = cfg.embedder()?;
    let mut store: Option<KnowledgeStore> = None;
    for (t, record) in dataset.records[..n].iter().enumerate() {
        let statement = to_statement(record);
        let v = retrieval::normalize(&emb.embed(&EmbeddingRequest::new(statement.as_str()))?)?;
        store
            .get_or_insert_with(|| KnowledgeStore::new(v.len(), emb.fingerprint().to_string()))
            .add_entry(
                statement,
                v,
                t as u64 + 1,
                Some(format!("{}:{}", dataset.name, record.index)),
            )?;
    }
    let store = store.expect("resolve() guarantees at least one record");
    save_store(&store, &args.store)?;
    eprintln!("wrote {} entries to {}", store.len(), args.store.display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let report = read_report(&args.input)?;
    let format: ReportFormat = args.format.parse()?;
    match &args.output {
        Some(path) => write_report(&report, path, format),
        None => {
            let body = match format {
                ReportFormat::Structured => serde_json::to_string_pretty(&report)? + "\n",
                ReportFormat::Csv => render_csv(&report),
                ReportFormat::Table => render_table(&[&report]),
            };
            print!("{body}");
            Ok(())
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Query(a) => query(a),
        Command::Ingest(a) => ingest(a),
        Command::Report(a) => report(a),
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit status:
/// 0 on success, 2 for usage or parameter errors, 1 otherwise.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e @ Error::Parameter(_)) => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
