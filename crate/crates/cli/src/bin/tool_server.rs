//! Standalone tool server: loads a registry file, binds the stock
//! executors, and answers wire requests until killed. Pair it with
//! `tandem tools list --remote ADDR` or a runner configured for a remote
//! toolhost.

use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;

use tandem_core::toolhost::{bind_default_executors, load_registry_schemas, server};

#[derive(Parser)]
#[command(name = "tool-server", version, about = "Serve a tool registry over TCP")]
struct ServerCli {
    /// Registry file to serve.
    #[arg(long, value_name = "PATH", default_value = "assets/registry.jsonl")]
    registry: PathBuf,
    /// Listen address; port 0 picks an ephemeral port.
    #[arg(long, value_name = "ADDR", default_value = "127.0.0.1:0")]
    addr: String,
}

fn main() -> ExitCode {
    let cli = ServerCli::parse();

    let schemas = match load_registry_schemas(&cli.registry) {
        Ok(schemas) => schemas,
        Err(error) => {
            eprintln!("error: input: {}: {error}", cli.registry.display());
            return ExitCode::from(3);
        }
    };
    let registry = match bind_default_executors(schemas) {
        Ok(registry) => registry,
        Err(error) => {
            eprintln!("error: input: {}: {error}", cli.registry.display());
            return ExitCode::from(3);
        }
    };

    let listener = match TcpListener::bind(&cli.addr) {
        Ok(listener) => listener,
        Err(error) => {
            eprintln!("error: provider: bind {}: {error}", cli.addr);
            return ExitCode::from(4);
        }
    };
    let local = match listener.local_addr() {
        Ok(addr) => addr,
        Err(error) => {
            eprintln!("error: provider: {error}");
            return ExitCode::from(4);
        }
    };

    // Announce the bound address before blocking so callers that asked for
    // port 0 can discover where to connect.
    use std::io::Write as _;
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "serving {} tools on {local}", registry.schemas().len());
    let _ = stdout.flush();

    if let Err(error) = server::serve(listener, Arc::new(registry)) {
        eprintln!("error: provider: {error}");
        return ExitCode::from(4);
    }
    ExitCode::SUCCESS
}
