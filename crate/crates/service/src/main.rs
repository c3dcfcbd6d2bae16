use std::time::Duration;

use axum::http::HeaderValue;
use clap::Parser;

use seedseg_service::{serve, AppState, Config};

#[derive(Debug, Parser)]
#[command(name = "seedseg-service", version, about = "HTTP session service for seed-constrained segmentation")]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Upload size cap in MiB.
    #[arg(long, default_value_t = 16)]
    max_body_mib: usize,
    /// Snapshots kept per session.
    #[arg(long, default_value_t = 32)]
    ring: usize,
    /// Idle session lifetime in seconds.
    #[arg(long, default_value_t = 3600)]
    ttl_secs: u64,
    /// Allowed CORS origin, repeatable; any origin when omitted.
    #[arg(long = "allow-origin")]
    allow_origin: Vec<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let allowed_origins = args
        .allow_origin
        .iter()
        .map(|o| HeaderValue::from_str(o))
        .collect::<Result<Vec<_>, _>>()?;
    let config = Config {
        max_body_bytes: args.max_body_mib << 20,
        ring_capacity: args.ring,
        ttl: Duration::from_secs(args.ttl_secs),
        allowed_origins,
    };
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve(listener, AppState::new(config)).await?;
    Ok(())
}
