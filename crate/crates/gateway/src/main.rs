use clap::Parser;
use insitu_gateway::{Gateway, GatewayConfig};
use std::net::IpAddr;
use std::process::ExitCode;
use tracing_subscriber::EnvFilter;

/// Relays frames from running simulations to steering clients.
#[derive(Debug, Parser)]
#[command(name = "insitu-gateway", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, env = "ISAAC_GW_BIND", default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Port simulations connect to.
    #[arg(long, env = "ISAAC_GW_SIM_PORT", default_value_t = 2459)]
    sim_port: u16,
    /// Port clients connect to (JSON lines or WebSocket).
    #[arg(long, env = "ISAAC_GW_CLIENT_PORT", default_value_t = 2460)]
    client_port: u16,
    /// Maximum number of concurrent clients.
    #[arg(long, env = "ISAAC_GW_MAX_CLIENTS", default_value_t = 64)]
    max_clients: usize,
    /// Log filter, e.g. `info` or `insitu_gateway=debug`.
    #[arg(long, env = "ISAAC_GW_LOG_LEVEL", default_value = "info")]
    log_level: String,
    /// Shared secret required from simulations and observers.
    #[arg(long, env = "ISAAC_GW_TOKEN")]
    token: Option<String>,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let filter = match EnvFilter::try_new(&args.log_level) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("invalid --log-level '{}': {e}", args.log_level);
            return ExitCode::from(2);
        }
    };
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let config = GatewayConfig {
        bind: args.bind,
        sim_port: args.sim_port,
        client_port: args.client_port,
        max_clients: args.max_clients,
        token: args.token,
    };
    let gateway = match Gateway::start(config).await {
        Ok(gw) => gw,
        Err(e) => {
            tracing::error!(error = %e, "failed to start");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::error!(error = %e, "cannot wait for ctrl-c");
    }
    tracing::info!("shutting down");
    gateway.stop();
    ExitCode::SUCCESS
}
