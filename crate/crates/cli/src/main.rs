use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use proofloop_cli::{
    build_gateway, reliability, render_table, transcript, Backend, ReliabilityArgs, TableFormat,
};
use proofloop_core::types::{
    DEFAULT_MAX_TOTAL_ITERATIONS, DEFAULT_PASS_THRESHOLD, DEFAULT_REJECTION_WINDOW,
};
use proofloop_core::reliability::MODEL_NOTE;
use proofloop_core::{Problem, ReviewMode};
use proofloop_orchestrator::{LogStore, Pipeline, RunConfig, RunOutcome, TerminalKind};
use proofloop_review_api::ApiState;

type Error = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "proofloop", version, about = "Generate, verify and correct proofs with a language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BackendArgs {
    /// Run configuration file (flat TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "http")]
    backend: Backend,
    /// Response script for the mock backend.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Directory holding the run logs.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Serve the review API on this address while the run is active.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Environment variable whose value POST requests to the review API must
    /// present as a bearer token.
    #[arg(long)]
    api_token_env: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Start one or more runs on a problem.
    Run {
        /// File holding the problem statement.
        #[arg(long)]
        problem: PathBuf,
        /// Extra instruction appended after the statement.
        #[arg(long)]
        hint: Option<String>,
        /// Independent runs; overrides `parallel_runs`.
        #[arg(long)]
        runs: Option<u32>,
        /// Overrides `review_mode`.
        #[arg(long, value_parser = parse_review)]
        review: Option<ReviewMode>,
        /// Run id, or the prefix of the ids when several runs are started.
        #[arg(long)]
        run_id: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Continue a run from its log.
    Resume {
        #[arg(long)]
        run_id: String,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Print a run's transcript.
    Report {
        #[arg(long)]
        run_id: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Estimate how often the policy ends wrongly for given verifier error rates.
    Reliability {
        /// Chance one check passes a flawed solution.
        #[arg(long)]
        p_miss: f64,
        /// Chance one check fails a sound solution.
        #[arg(long)]
        p_false_alarm: f64,
        #[arg(long, default_value_t = DEFAULT_PASS_THRESHOLD)]
        k: u32,
        #[arg(long, default_value_t = DEFAULT_REJECTION_WINDOW)]
        m: u32,
        #[arg(long, default_value_t = DEFAULT_MAX_TOTAL_ITERATIONS)]
        cap: u32,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "plain")]
        format: TableFormat,
    },
}

fn parse_review(s: &str) -> Result<ReviewMode, String> {
    s.parse().map_err(|e: proofloop_core::ValidationError| e.to_string())
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Error> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

struct Session {
    pipeline: Pipeline,
    store: Arc<LogStore>,
}

async fn session(args: &BackendArgs, config: &RunConfig) -> Result<Session, Error> {
    let gateway = build_gateway(args.backend, &config.backend, args.mock_script.as_deref())?;
    let store = Arc::new(LogStore::open(&args.out)?);
    if let Some(addr) = args.listen {
        let token = match &args.api_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?),
            None => None,
        };
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("review API listening on http://{}", listener.local_addr()?);
        let state = ApiState {
            store: store.clone(),
            token,
        };
        tokio::spawn(async move {
            if let Err(e) = proofloop_review_api::serve(listener, state).await {
                tracing::error!(error = %e, "review API stopped");
            }
        });
    }
    Ok(Session {
        pipeline: Pipeline::new(gateway, store.clone()),
        store,
    })
}

fn summarize(outcome: &RunOutcome) {
    let mut line = format!("{}: {:?} after {} verifications", outcome.run_id, outcome.terminal, outcome.iterations);
    if let Some(reason) = &outcome.reason {
        line.push_str(&format!(" ({reason})"));
    }
    println!("{line}");
}

fn save_solution(store: &LogStore, outcome: &RunOutcome) -> Result<(), Error> {
    if outcome.terminal == TerminalKind::Accepted {
        if let Some(draft) = &outcome.final_draft {
            let path = store.dir().join(format!("{}.solution.md", outcome.run_id));
            std::fs::write(&path, &draft.body)?;
            println!("accepted solution written to {}", path.display());
        }
    }
    Ok(())
}

fn default_run_id(problem: &Problem) -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("{}-{secs}", problem.id)
}

fn problem_id(path: &std::path::Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
    let id: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' })
        .collect();
    if id.is_empty() { "problem".into() } else { id }
}

async fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            problem,
            hint,
            runs,
            review,
            run_id,
            backend,
        } => {
            let mut config = load_config(backend.config.as_ref())?;
            if let Some(n) = runs {
                config.pipeline.parallel_runs = n;
            }
            if let Some(mode) = review {
                config.pipeline.review_mode = mode;
            }
            let statement = std::fs::read_to_string(&problem)?;
            let mut task = Problem::new(problem_id(&problem), statement)?;
            if let Some(hint) = hint {
                task = task.with_hint(hint);
            }
            let s = session(&backend, &config).await?;
            let id = run_id.unwrap_or_else(|| default_run_id(&task));
            let accepted = if config.pipeline.parallel_runs <= 1 {
                let outcome = s.pipeline.run_pipeline(&id, task, config.pipeline).await?;
                summarize(&outcome);
                save_solution(&s.store, &outcome)?;
                outcome.terminal == TerminalKind::Accepted
            } else {
                let batch = s.pipeline.run_many(&id, task, config.pipeline).await;
                for run in &batch.runs {
                    match run {
                        Ok(outcome) => summarize(outcome),
                        Err(e) => eprintln!("run failed: {e}"),
                    }
                }
                if let Some(outcome) = batch.accepted() {
                    save_solution(&s.store, outcome)?;
                }
                batch.accepted().is_some()
            };
            Ok(if accepted { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Resume { run_id, backend } => {
            let config = load_config(backend.config.as_ref())?;
            let s = session(&backend, &config).await?;
            let outcome = s.pipeline.resume(&run_id).await?;
            summarize(&outcome);
            save_solution(&s.store, &outcome)?;
            Ok(if outcome.terminal == TerminalKind::Accepted { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Report { run_id, out } => {
            let log = LogStore::open(out)?.get(&run_id)?;
            print!("{}", transcript(&log.projection(), &log.events()));
            Ok(ExitCode::SUCCESS)
        }
        Command::Reliability {
            p_miss,
            p_false_alarm,
            k,
            m,
            cap,
            trials,
            seed,
            format,
        } => {
            let args = ReliabilityArgs {
                p_miss,
                p_false_alarm,
                k,
                m,
                cap,
                trials,
                seed,
            };
            let table = reliability(&args)?;
            print!("{}", render_table(&args, &table, format));
            if format == TableFormat::Csv {
                eprintln!("note: {MODEL_NOTE}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
