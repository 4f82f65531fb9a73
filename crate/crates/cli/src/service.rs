use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use prefdens_client::api::{self, Policy};
use prefdens_client::Client;
use prefdens_core::model_file::ModelFile;
use prefdens_server::{AppState, ServerConfig};

use crate::error::CliError;

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(format!("cannot start runtime: {e}")))
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    /// The PREFDENS_PORT environment variable takes precedence.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Append-only session journal, replayed on startup.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Directory of console files served from `/`.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    /// Answer noise sd; defaults to each type's learned value.
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    stop_eps: f64,
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let port = match std::env::var("PREFDENS_PORT") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Malformed(format!("PREFDENS_PORT `{v}` is not a port")))?,
        Err(_) => args.port,
    };
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| CliError::Malformed(format!("{}: {e}", args.model.display())))?;
    let file = ModelFile::from_json(&text).map_err(|e| CliError::from(e).context(args.model.display()))?;
    let config = ServerConfig {
        journal: args.journal,
        static_dir: args.static_dir,
        noise_sd: args.noise_sd,
        stop_eps: args.stop_eps,
        ..ServerConfig::default()
    };
    let state = AppState::new(&file, &config).map_err(|e| match e {
        prefdens_server::ServerError::Core(c) => CliError::from(c).context(args.model.display()),
        other => CliError::Other(other.to_string()),
    })?;
    let addr = SocketAddr::new(args.host, port);
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Other(format!("cannot listen on {addr}: {e}")))?;
        eprintln!(
            "serving model {} on http://{}",
            state.model_id(),
            listener.local_addr()?
        );
        tokio::select! {
            r = prefdens_server::serve(listener, state) => r.map_err(|e| CliError::Other(e.to_string())),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Rref,
    Variance,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    server: String,
    #[arg(long, value_enum, default_value = "rref")]
    policy: PolicyArg,
}

fn api_error(e: prefdens_client::ClientError) -> CliError {
    CliError::Other(e.to_string())
}

/// Ask each question on standard output and read answers from standard
/// input, one number per line. `q` or end of input stops early.
pub fn elicit(args: ElicitArgs) -> Result<(), CliError> {
    let policy = match args.policy {
        PolicyArg::Rref => Policy::Rref,
        PolicyArg::Variance => Policy::Variance,
    };
    let client = Client::new(args.server);
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    let mut out = std::io::stdout().lock();
    runtime()?.block_on(async {
        let created = client.create_session(policy).await.map_err(api_error)?;
        writeln!(out, "session {}", created.session_id)?;
        let mut question = created.question;
        let mut last: Option<api::AnswerResult> = None;
        'ask: while let Some(q) = question.take() {
            loop {
                write!(out, "utility of [{}] {}? ", q.outcome_id, q.description)?;
                out.flush()?;
                let Some(line) = lines.next().transpose()? else {
                    writeln!(out)?;
                    break 'ask;
                };
                let line = line.trim();
                if line == "q" {
                    break 'ask;
                }
                let Ok(value) = line.parse::<f64>() else {
                    writeln!(out, "not a number: `{line}`")?;
                    continue;
                };
                let r = client
                    .answer(&created.session_id, q.outcome_id, value)
                    .await
                    .map_err(api_error)?;
                let weights: Vec<String> = r.type_weights.iter().map(|w| format!("{w:.3}")).collect();
                writeln!(out, "type weights [{}]", weights.join(", "))?;
                if r.outlier.flagged {
                    writeln!(
                        out,
                        "warning: answers look unusual for this population (score {:.2})",
                        r.outlier.score
                    )?;
                }
                question = r.next_question.clone();
                last = Some(r);
                break;
            }
        }
        if last.as_ref().is_some_and(|r| r.stop_suggested) {
            writeln!(out, "done: remaining utilities are pinned down")?;
        }
        let preds = client.predictions(&created.session_id).await.map_err(api_error)?;
        let model = client.model().await.map_err(api_error)?;
        writeln!(out, "predictions:")?;
        for p in preds {
            writeln!(
                out,
                "  [{}] {}: {:.4} +- {:.4}",
                p.outcome_id, model.outcomes[p.outcome_id], p.mean, p.stddev
            )?;
        }
        Ok(())
    })
}
