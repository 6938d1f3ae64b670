//! The `blade` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input data, 3 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{build_corpus, parse_manifest};
use crate::dialogue::{respond, AnswerContext, AssistantResponse, DialogueError, ResponsePolicy, TemplateBackend, TemplateSet};
use crate::index::{
    build_index, evaluate_ranker, read_triples, train_ranker, CorpusIndex, HashingEmbedder, IndexError, KindPrior,
    RankerWeights, TrainOptions,
};
use crate::service::{Server, ServiceConfig, ServiceError};
use crate::study::{
    analyze, read_records_dir, simulate_cohort, write_analysis, write_records_dir, BandCuts, SimulationParams, StudyData,
    StudyError, ANALYSIS_FILES,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "blade", version, about = "Course-grounded retrieval and evidence-pointing dialogue")]
pub struct Cli {
    /// Omit timestamps from logs and build outputs so runs are byte-reproducible.
    #[arg(long, global = true)]
    pub no_timestamps: bool,
    /// Log verbosity (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment the course materials named by a manifest.
    Ingest(IngestArgs),
    /// Build, train or evaluate a retrieval index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Ask one question against a built index.
    Query(QueryArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Quiz-study analysis and simulation.
    #[command(subcommand)]
    Study(StudyCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Print every unit as one JSON record per line.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Ingest a manifest and write the index file.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit ranker weights on (query, positive, negative) triples.
    Train {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        triples: PathBuf,
        /// Starting weights; the defaults when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = TrainOptions::default().learning_rate)]
        learning_rate: f64,
        #[arg(long, default_value_t = TrainOptions::default().epochs)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report pairwise accuracy and MRR of weights on triples.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Records,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Module the asking student is working in.
    #[arg(long)]
    pub module: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    pub query: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured listen address (also `BLADE_LISTEN`).
    #[arg(long)]
    pub listen: Option<String>,
    /// Overrides the remote backend token (also `BLADE_BACKEND_TOKEN`).
    #[arg(long)]
    pub token: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Compute the study statistics from a records directory.
    Analyze {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = BandCuts::default().upper)]
        upper: f64,
        #[arg(long, default_value_t = BandCuts::default().mid)]
        mid: f64,
        #[arg(long, default_value_t = BandCuts::default().lower)]
        lower: f64,
    },
    /// Generate a synthetic cohort in the records layout.
    Simulate {
        #[arg(long, default_value_t = SimulationParams::default().seed)]
        seed: u64,
        #[arg(long)]
        students: Option<usize>,
        /// TOML file with simulation parameters; flags override it.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError {
        code: EXIT_DATA,
        message: e.to_string(),
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    }
}

fn index_err(e: IndexError) -> CliError {
    match e {
        IndexError::Io { .. } => runtime(e),
        _ => data(e),
    }
}

fn study_err(e: StudyError) -> CliError {
    match e {
        StudyError::Io { .. } => runtime(e),
        _ => data(e),
    }
}

fn service_err(e: ServiceError) -> CliError {
    match e {
        ServiceError::Bind { .. } | ServiceError::Io { .. } => runtime(e),
        _ => data(e),
    }
}

fn input_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(data(format!("file not found: {}", path.display())))
    }
}

fn load_index(path: &Path, embedder: &HashingEmbedder) -> Result<CorpusIndex, CliError> {
    input_exists(path)?;
    CorpusIndex::load(path, embedder).map_err(data)
}

fn load_weights(path: Option<&Path>) -> Result<RankerWeights, CliError> {
    match path {
        Some(p) => {
            input_exists(p)?;
            RankerWeights::load(p).map_err(data)
        }
        None => Ok(RankerWeights::default()),
    }
}

fn init_tracing(cli: &Cli) {
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("BLADE_LOG").unwrap_or_else(|_| level.into());
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    let _ = if cli.no_timestamps {
        builder.without_time().try_init()
    } else {
        builder.try_init()
    };
}

/// Parse `argv` and run it, writing results to `out` and diagnostics to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    init_tracing(&cli);
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn emit(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(runtime)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let embedder = HashingEmbedder::default();
    match &cli.command {
        Command::Ingest(args) => {
            input_exists(&args.manifest)?;
            let manifest = parse_manifest(&args.manifest).map_err(data)?;
            let corpus = build_corpus(&manifest).map_err(data)?;
            if args.dump {
                for unit in &corpus.units {
                    emit(out, serde_json::to_string(unit).expect("units serialize"))?;
                }
            } else {
                emit(
                    out,
                    format!(
                        "{}: {} units from {} resources",
                        corpus.course_id,
                        corpus.units.len(),
                        corpus.resources.len()
                    ),
                )?;
                for r in &corpus.resources {
                    let n = corpus.units.iter().filter(|u| u.resource_id == r.id).count();
                    emit(out, format!("  {:<12} {:<10} {:>4}  {}", r.id, r.kind.as_str(), n, r.title))?;
                }
            }
        }
        Command::Index(IndexCommand::Build { manifest, out: path }) => {
            input_exists(manifest)?;
            let parsed = parse_manifest(manifest).map_err(data)?;
            let corpus = build_corpus(&parsed).map_err(data)?;
            let built_at = if cli.no_timestamps { 0 } else { crate::service::now_ms() / 1000 };
            let index = build_index(corpus, &embedder, built_at).map_err(data)?;
            index.save(path).map_err(index_err)?;
            emit(out, format!("indexed {} units into {}", index.len(), path.display()))?;
        }
        Command::Index(IndexCommand::Train {
            index,
            triples,
            init,
            learning_rate,
            epochs,
            out: path,
        }) => {
            let index = load_index(index, &embedder)?;
            input_exists(triples)?;
            let triples = read_triples(triples).map_err(data)?;
            let init = load_weights(init.as_deref())?;
            let opts = TrainOptions {
                learning_rate: *learning_rate,
                epochs: *epochs,
            };
            let outcome = train_ranker(&triples, &index, &embedder, init, opts).map_err(index_err)?;
            outcome.weights.save(path).map_err(index_err)?;
            let first = outcome.loss_history.first().copied().unwrap_or(f64::NAN);
            let last = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
            emit(
                out,
                format!(
                    "trained on {} triples: loss {first:.6} -> {last:.6}; weights written to {}",
                    triples.len(),
                    path.display()
                ),
            )?;
        }
        Command::Index(IndexCommand::Eval { index, triples, weights }) => {
            let index = load_index(index, &embedder)?;
            input_exists(triples)?;
            let triples = read_triples(triples).map_err(data)?;
            let weights = load_weights(weights.as_deref())?;
            let eval = evaluate_ranker(&weights, &triples, &index, &embedder).map_err(index_err)?;
            emit(
                out,
                format!("pairwise_accuracy {:.6}\nmrr {:.6}", eval.pairwise_accuracy, eval.mrr),
            )?;
        }
        Command::Query(args) => {
            let index = load_index(&args.index, &embedder)?;
            let weights = load_weights(args.weights.as_deref())?;
            let templates = match &args.templates {
                Some(p) => {
                    input_exists(p)?;
                    TemplateSet::load(p).map_err(data)?
                }
                None => TemplateSet::default(),
            };
            let policy = ResponsePolicy::default();
            policy.validate(&templates).map_err(data)?;
            let backend = TemplateBackend::new(Arc::new(templates.clone()));
            let ctx = AnswerContext {
                index: &index,
                embedder: &embedder,
                weights: &weights,
                policy: &policy,
                templates: &templates,
                backend: &backend,
                kind_prior: &KindPrior::default(),
            };
            let response = respond(&args.query, args.module.as_deref(), &ctx).map_err(|e| match e {
                DialogueError::EmptyQuery => data(e),
                other => runtime(other),
            })?;
            print_response(out, &response, args.format)?;
        }
        Command::Serve(args) => {
            input_exists(&args.config)?;
            let mut config = ServiceConfig::load(&args.config).map_err(service_err)?;
            config.apply_env();
            config.apply_overrides(args.listen.clone(), args.token.clone());
            let server = Server::start_with_signals(config).map_err(service_err)?;
            emit(out, format!("listening on {}", server.url()))?;
            out.flush().map_err(runtime)?;
            server.wait().map_err(service_err)?;
        }
        Command::Study(StudyCommand::Analyze {
            records,
            out: dir,
            upper,
            mid,
            lower,
        }) => {
            input_exists(records)?;
            let cuts = BandCuts {
                upper: *upper,
                mid: *mid,
                lower: *lower,
            };
            let data_set = read_records_dir(records).map_err(study_err)?;
            let analysis = analyze(&data_set, &cuts).map_err(study_err)?;
            write_analysis(dir, &analysis).map_err(study_err)?;
            emit(out, format!("{} students; wrote {} files to {}", analysis.n_students, ANALYSIS_FILES.len(), dir.display()))?;
            for (config, s) in &analysis.summary {
                emit(
                    out,
                    format!(
                        "  config {config}: mean score {:.2}%  mean difficulty {:.4}  ({} records)",
                        s.mean_score_pct, s.mean_difficulty, s.n_records
                    ),
                )?;
            }
        }
        Command::Study(StudyCommand::Simulate {
            seed,
            students,
            params,
            out: dir,
        }) => {
            let mut p = match params {
                Some(path) => {
                    input_exists(path)?;
                    let text = std::fs::read_to_string(path).map_err(runtime)?;
                    toml::from_str::<SimulationParams>(&text).map_err(|e| data(format!("{}: {e}", path.display())))?
                }
                None => SimulationParams::default(),
            };
            p.seed = *seed;
            if let Some(n) = students {
                p.n_students = *n;
            }
            let cohort = simulate_cohort(&p).map_err(study_err)?;
            let data_set = StudyData {
                items: cohort.items,
                records: cohort.records,
            };
            write_records_dir(dir, &data_set).map_err(study_err)?;
            emit(
                out,
                format!(
                    "simulated {} students ({} records, seed {}) into {}",
                    p.n_students,
                    data_set.records.len(),
                    p.seed,
                    dir.display()
                ),
            )?;
        }
    }
    Ok(())
}

fn print_response(out: &mut dyn Write, r: &AssistantResponse, format: OutputFormat) -> Result<(), CliError> {
    match format {
        OutputFormat::Records => {
            let head = serde_json::json!({
                "record": "response",
                "text": r.text,
                "no_results": r.no_results,
                "backend": r.backend,
                "fallback": r.fallback,
            });
            emit(out, head)?;
            for c in &r.citations {
                let mut v = serde_json::to_value(c).expect("citations serialize");
                v.as_object_mut()
                    .expect("citation is an object")
                    .insert("record".into(), "citation".into());
                emit(out, v)?;
            }
        }
        OutputFormat::Text => {
            emit(out, &r.text)?;
            if !r.citations.is_empty() {
                emit(out, "\nSources:")?;
                for (i, c) in r.citations.iter().enumerate() {
                    emit(out, format!("  [{}] {}  ({})", i + 1, c.display_label, c.unit_id))?;
                }
            }
        }
    }
    Ok(())
}
