use clap::Parser;

#[derive(Parser)]
#[command(name = "mmad-server", about = "MT-evaluation pipeline service")]
struct Args {
    #[arg(long, default_value = "127.0.0.1")]
    address: String,

    #[arg(long, default_value_t = 8315)]
    port: u16,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();

    let args = Args::parse();
    let bind = format!("{}:{}", args.address, args.port);
    let listener = match tokio::net::TcpListener::bind(&bind).await {
        Ok(listener) => listener,
        Err(e) => {
            eprintln!("failed to bind {bind}: {e}");
            std::process::exit(1);
        }
    };
    tracing::info!("listening on http://{bind}");
    if let Err(e) = mmad_service::serve(listener).await {
        eprintln!("server error: {e}");
        std::process::exit(1);
    }
}
