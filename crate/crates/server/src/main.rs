use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use adwatch::api::router;
use adwatch::host::{AgentHost, Services};
use adwatch::{extract_url, run_once};
use adwatch_core::clock::{Clock, SimClock, SystemClock};
use adwatch_core::config::{load_config, load_rules};
use adwatch_core::fetch::HttpTransport;
use adwatch_core::store::Datastore;
use adwatch_fixture::{FixtureServer, FixtureSpec};
use chrono::{NaiveDate, Utc};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adwatch", version, about = "Harvest classified ads and notify subscribers by SMS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API and host the category agents.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "HARVEST_DATA_DIR")]
        data: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory served under /ui.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// Pin the current date (YYYY-MM-DD).
        #[arg(long)]
        today: Option<NaiveDate>,
    },
    /// Harvest once, analyze, dispatch, and print the reports as JSON.
    RunOnce {
        /// Only this category; all configured categories when omitted.
        #[arg(long)]
        category: Option<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "HARVEST_DATA_DIR")]
        data: PathBuf,
        #[arg(long)]
        today: Option<NaiveDate>,
    },
    /// Print the records a rule extracts from one page, without storing them.
    Extract {
        #[arg(long)]
        url: String,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long)]
        today: Option<NaiveDate>,
    },
    /// Serve the bundled test portal.
    Fixture {
        #[arg(long, default_value_t = 8081)]
        port: u16,
        #[arg(long)]
        today: Option<NaiveDate>,
        /// Portal spec (JSON); the bundled one when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

type Error = Box<dyn std::error::Error>;

fn clock_for(today: Option<NaiveDate>) -> Arc<dyn Clock> {
    match today {
        Some(day) => Arc::new(SimClock::starting_at(day.and_hms_opt(12, 0, 0).expect("noon exists").and_utc())),
        None => Arc::new(SystemClock),
    }
}

fn open_store(data: &Path) -> Result<Datastore, Error> {
    std::fs::create_dir_all(data).map_err(|e| format!("cannot create data dir {}: {e}", data.display()))?;
    Ok(Datastore::open(data)?)
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn serve(config: &Path, data: &Path, port: u16, ui: Option<PathBuf>, today: Option<NaiveDate>) -> Result<(), Error> {
    let config = load_config(config)?;
    let services = Services {
        store: Arc::new(open_store(data)?),
        transport: Arc::new(HttpTransport::new()),
        clock: clock_for(today),
        gateway: Arc::from(config.gateway.build()),
    };
    let host = Arc::new(AgentHost::new(services, config.agents.clone()));
    let listener = tokio::net::TcpListener::bind(SocketAddr::from((Ipv4Addr::UNSPECIFIED, port)))
        .await
        .map_err(|e| format!("cannot bind port {port}: {e}"))?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(host.clone(), ui)).with_graceful_shutdown(shutdown_signal()).await?;
    host.stop_all().await;
    Ok(())
}

async fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Serve { config, data, port, ui, today } => serve(&config, &data, port, ui, today).await,
        Command::RunOnce { category, config, data, today } => {
            let config = load_config(&config)?;
            let store = open_store(&data)?;
            let gateway = config.gateway.build();
            let clock = clock_for(today);
            let report =
                run_once(&config, category.as_deref(), &store, &HttpTransport::new(), clock.as_ref(), gateway.as_ref())
                    .await?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Extract { url, rules, category, today } => {
            let rules = load_rules(&rules)?;
            let rule = rules.get(&category).ok_or_else(|| format!("no rule for category {category}"))?;
            let clock = clock_for(today);
            let records = extract_url(&url, rule, clock.today(), &HttpTransport::new(), clock.as_ref()).await?;
            println!("{}", serde_json::to_string_pretty(&records)?);
            Ok(())
        }
        Command::Fixture { port, today, spec } => {
            let spec = match spec {
                Some(path) => FixtureSpec::from_json(&std::fs::read_to_string(&path)?)?,
                None => FixtureSpec::default_spec(),
            };
            let today = today.unwrap_or_else(|| Utc::now().date_naive());
            let server = FixtureServer::start(spec, today, port).await?;
            println!("fixture portal at {} (today = {today})", server.base_url());
            shutdown_signal().await;
            server.shutdown().await;
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,adwatch=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
