use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hikester_server::app::{rebuild, App};
use hikester_server::Config;
use hikester_store::persist;
use hikester_store::DocumentValue;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "hikester", version, about = "Hikester event service")]
struct Cli {
    /// TOML config file; every key can also be set as HIKESTER_<KEY>.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP and websocket server (the default).
    Serve,
    /// Train the spam model from a corpus and load demo data.
    Seed {
        /// `label<TAB>text` lines, label `spam` or `ham`.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Rebuild all indexes from a change log (or a data directory) and
    /// print their statistics as JSON.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command.unwrap_or(Command::Serve) {
        Command::Serve => serve(config),
        Command::Seed { corpus } => {
            let app = App::open(config)?;
            let report = hikester_server::seed::seed(&app, &corpus)?;
            app.wait_idle(std::time::Duration::from_secs(30));
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Replay { log } => {
            let (tree, rev) = if log.is_dir() {
                persist::recover(&log)?
            } else {
                persist::replay(&persist::read_log(&log)?, DocumentValue::empty_map(), 0)
            };
            let rebuilt = rebuild(&tree, &config);
            let out = serde_json::json!({
                "revision": rev,
                "geo_points": rebuilt.geo.len(),
                "search_docs": rebuilt.search.doc_count(),
                "rebuild": rebuilt.stats,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

fn serve(config: Config) -> Result<(), Box<dyn std::error::Error>> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let app = App::open(config)?;
        let listener = hikester_server::bind(&app.config).await?;
        // tests and scripts read this line to find the port
        println!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        hikester_server::serve(app, listener, shutdown).await?;
        Ok(())
    })
}
