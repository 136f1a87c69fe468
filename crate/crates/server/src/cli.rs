//! Operator command line.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use phonolearn_core::analytics::{export_csv, fit_items, parse_items_csv};
use phonolearn_core::phoneme::PhonemeInventory;
use phonolearn_core::pwld::{sequence_pwld, CostConfig};
use phonolearn_core::store::StoreError;
use phonolearn_core::task::{generate_tasks, GenerationPlan, TaskClass};
use phonolearn_core::Store;
use serde_json::json;
use thiserror::Error;

use crate::api::{self, AppState, Policy};

#[derive(Debug, Parser)]
#[command(
    name = "phonolearn",
    version,
    about = "Learnersourced IPA transcription platform"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Store directory holding the event log.
    #[arg(long, global = true, default_value = "data")]
    pub store: PathBuf,
    /// Inventory document replacing the shipped Persian table.
    #[arg(long, global = true)]
    pub inventory: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1.0)]
    pub indel_cost: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    pub cross_class_cost: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest an alignment document (one line object or an array).
    Ingest { file: PathBuf },
    /// Generate and publish the task set.
    GenTasks(GenArgs),
    /// Score two IPA strings, or every stored response.
    Score {
        truth: Option<String>,
        given: Option<String>,
    },
    /// Fit the error-rate regression on an exported items CSV.
    Fit { file: PathBuf },
    /// Write the per-item CSV.
    Export {
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        pilot_compat: bool,
    },
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Probability that a disambiguation item displays a wrong variant.
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub disambiguation: usize,
    #[arg(long, default_value_t = 2)]
    pub correction: usize,
    #[arg(long, default_value_t = 0)]
    pub completion: usize,
    /// Options per disambiguation item, truth included.
    #[arg(long, default_value_t = 3)]
    pub options: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub pilot_compat: bool,
    /// Directory of audio files keyed by audio_ref. Defaults to <store>/audio.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Introduction text shown when a session starts.
    #[arg(long)]
    pub intro: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn validation(e: impl ToString) -> CliError {
    CliError::Validation(e.to_string())
}

impl GlobalArgs {
    fn inventory(&self) -> Result<Arc<PhonemeInventory>, CliError> {
        match &self.inventory {
            Some(path) => PhonemeInventory::from_json(&read(path)?)
                .map(Arc::new)
                .map_err(|e| validation(format!("{}: {e}", path.display()))),
            None => Ok(Arc::new(PhonemeInventory::persian())),
        }
    }

    fn costs(&self) -> Result<CostConfig, CliError> {
        CostConfig::new(self.indel_cost, self.cross_class_cost).map_err(validation)
    }

    fn open_store(&self) -> Result<Store, CliError> {
        Ok(Store::open(&self.store, self.inventory()?, self.costs()?)?)
    }
}

/// Runs a command that produces output, returning what to print.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest { file } => {
            let doc = read(&file)?;
            let lines = g.open_store()?.ingest_alignment(&doc)?;
            let words: usize = lines.iter().map(|l| l.words.len()).sum();
            Ok(format!("ingested {} lines, {words} words\n", lines.len()))
        }
        Command::GenTasks(args) => {
            let store = g.open_store()?;
            let plan = GenerationPlan {
                rate: args.rate,
                seed: args.seed,
                disambiguation: args.disambiguation,
                correction: args.correction,
                completion: args.completion,
                options: args.options,
            };
            let tasks = generate_tasks(
                &store.word_items(),
                store.inventory(),
                store.cost_config(),
                &plan,
            )
            .map_err(validation)?;
            store.publish_tasks(&tasks)?;
            let count = |c| tasks.iter().filter(|t| t.task_class() == c).count();
            Ok(format!(
                "published {} tasks: {} disambiguation, {} correction, {} completion\n",
                tasks.len(),
                count(TaskClass::Disambiguation),
                count(TaskClass::Correction),
                count(TaskClass::Completion),
            ))
        }
        Command::Score { truth, given } => match (truth, given) {
            (Some(truth), Some(given)) => {
                let inv = g.inventory()?;
                let w = inv
                    .tokenize(&truth)
                    .map_err(|e| validation(format!("truth: {e}")))?;
                let u = inv
                    .tokenize(&given)
                    .map_err(|e| validation(format!("given: {e}")))?;
                let result = sequence_pwld(&w, &u, &g.costs()?);
                let out = json!({ "truth": w.as_ipa(), "given": u.as_ipa(), "result": result });
                Ok(format!(
                    "{}\n",
                    serde_json::to_string_pretty(&out).expect("json")
                ))
            }
            (None, None) => {
                let store = g.open_store()?;
                let mut out = String::new();
                for (record, scored) in store.scored_responses()? {
                    let row = json!({
                        "seq_no": record.seq_no,
                        "session_id": record.session_id,
                        "profile_id": record.profile_id,
                        "participation_mode": record.participation_mode,
                        "response": scored,
                    });
                    out.push_str(&row.to_string());
                    out.push('\n');
                }
                Ok(out)
            }
            _ => Err(validation(
                "score takes either no arguments or <truth> <given>",
            )),
        },
        Command::Fit { file } => {
            let items = parse_items_csv(&read(&file)?).map_err(validation)?;
            let model = fit_items(&items).map_err(validation)?;
            Ok(format!(
                "{}\n",
                serde_json::to_string_pretty(&model).expect("json")
            ))
        }
        Command::Export {
            output,
            pilot_compat,
        } => {
            let store = g.open_store()?;
            let policy = Policy { pilot_compat };
            let csv = export_csv(&store.item_stats(policy.analysis_filter())?);
            match output {
                Some(path) => {
                    fs::write(&path, csv)
                        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    Ok(String::new())
                }
                None => Ok(csv),
            }
        }
        Command::Serve(args) => {
            let state = app_state(g, &args)?;
            let addr: SocketAddr = format!("{}:{}", args.host, args.port)
                .parse()
                .map_err(validation)?;
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            runtime.block_on(serve(state, addr))?;
            Ok(String::new())
        }
    }
}

fn app_state(g: &GlobalArgs, args: &ServeArgs) -> Result<AppState, CliError> {
    let intro: Arc<str> = match &args.intro {
        Some(path) => read(path)?.into(),
        None => api::DEFAULT_INTRO.into(),
    };
    Ok(AppState {
        store: Arc::new(g.open_store()?),
        policy: Policy {
            pilot_compat: args.pilot_compat,
        },
        intro,
        assets_dir: args.assets.clone().unwrap_or_else(|| g.store.join("audio")),
    })
}

async fn serve(state: AppState, addr: SocketAddr) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, api::router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Io(e.to_string()))
}
