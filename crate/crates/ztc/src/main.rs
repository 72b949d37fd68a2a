use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ztc::api::{self, AppState};
use ztc::scenario;
use ztc_core::placement::oracle_select;
use ztc_core::{load_topology, Engine, EngineConfig, ServiceOrder, TierPolicy};

#[derive(Parser)]
#[command(
    name = "ztc",
    version,
    about = "Zero-touch commissioning for Cloud-RAN chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the REST API.
    Serve(ServeArgs),
    /// Submit an order to a running server.
    Order {
        #[arg(long)]
        file: PathBuf,
        /// Wait for the pipeline to finish.
        #[arg(long)]
        sync: bool,
        #[arg(long, env = "ZTC_SERVER", default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    /// Print the exhaustive reference selection for an order.
    Oracle {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        order: PathBuf,
        #[arg(long)]
        relaxed_tiers: bool,
    },
    /// Replay a script of orders and teardowns in-process.
    Scenario {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, env = "ZTC_DATA_DIR")]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "ZTC_TOPOLOGY")]
    topology: PathBuf,
    #[arg(long, env = "ZTC_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "ZTC_BIND", default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, env = "ZTC_DATA_DIR", default_value = "./data")]
    data_dir: PathBuf,
    /// Allow CU and DU on any tier.
    #[arg(long)]
    relaxed_tiers: bool,
    /// Simulate 2 s container start per unit so progress is visible.
    #[arg(long)]
    demo: bool,
    #[arg(long, default_value_t = 5000)]
    refresh_ms: u64,
    #[arg(long, default_value_t = 1000)]
    sample_ms: u64,
}

fn tier_policy(relaxed: bool) -> TierPolicy {
    if relaxed {
        TierPolicy::Relaxed
    } else {
        TierPolicy::ScenarioF
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_order(path: &Path) -> anyhow::Result<ServiceOrder> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

async fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let topology = load_topology(&read(&args.topology)?)?;
    std::fs::create_dir_all(&args.data_dir)
        .with_context(|| format!("creating {}", args.data_dir.display()))?;
    let base = if args.demo {
        EngineConfig::demo()
    } else {
        EngineConfig::default()
    };
    let config = EngineConfig {
        tier_policy: tier_policy(args.relaxed_tiers),
        data_dir: Some(args.data_dir.clone()),
        ..base
    };
    let state = AppState::new(Engine::new(topology, config)?);
    let background = api::spawn_background(
        state.engine.clone(),
        Duration::from_millis(args.refresh_ms.max(1)),
        Duration::from_millis(args.sample_ms.max(1)),
    );
    let addr = SocketAddr::new(args.bind, args.port);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(%addr, data_dir = %args.data_dir.display(), "listening");
    axum::serve(listener, api::router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    for task in background {
        task.abort();
    }
    Ok(())
}

fn submit(file: &Path, sync: bool, server: &str) -> anyhow::Result<()> {
    let order = read_order(file)?;
    let url = format!("{}/api/orders?sync={sync}", server.trim_end_matches('/'));
    let response = reqwest::blocking::Client::builder()
        .timeout(None)
        .build()?
        .post(&url)
        .json(&order)
        .send()
        .with_context(|| format!("posting to {url}"))?;
    let status = response.status();
    let body: serde_json::Value = response.json().unwrap_or(serde_json::Value::Null);
    println!("{}", serde_json::to_string_pretty(&body)?);
    if !status.is_success() {
        bail!("server answered {status}");
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve(args) => tokio::runtime::Runtime::new()?.block_on(serve(args)),
        Command::Order { file, sync, server } => submit(&file, sync, &server),
        Command::Oracle {
            topology,
            order,
            relaxed_tiers,
        } => {
            let topology = load_topology(&read(&topology)?)?;
            let order = read_order(&order)?;
            order.validate()?;
            let selection = oracle_select(&order, &topology, tier_policy(relaxed_tiers));
            println!("{}", serde_json::to_string_pretty(&selection)?);
            Ok(())
        }
        Command::Scenario { file, data_dir } => {
            if let Some(dir) = &data_dir {
                std::fs::create_dir_all(dir)?;
            }
            let config = EngineConfig {
                data_dir,
                ..EngineConfig::default()
            };
            let report = scenario::run_file(&file, config)?;
            for step in &report.steps {
                println!("{}", serde_json::to_string(step)?);
            }
            for kpi in &report.kpis {
                println!("{}", serde_json::to_string(kpi)?);
            }
            if !report.passed() {
                bail!("scenario expectations failed");
            }
            Ok(())
        }
    }
}
