use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;

use braillemux::braille::BrailleTable;
use braillemux::driver::simscript::{SimScript, SimScriptConfig};
use braillemux::driver::simterm::SimTerm;
use braillemux::driver::Driver;
use braillemux::server::{AuthConfig, Server};
use braillemux::transport::{Address, Listener};
use clap::{Parser, ValueEnum};

const MAX_KEY_LEN: usize = 64;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DriverKind {
    Simscript,
    Simterm,
}

/// Braille display multiplexing daemon.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, value_enum, default_value = "simscript")]
    driver: DriverKind,

    /// Driver config file (name, cols, rows, and for simscript raw, log, pipe).
    #[arg(long)]
    driver_config: Option<PathBuf>,

    /// tcp:HOST:PORT or local:PATH.
    #[arg(long, default_value_t = Address::default())]
    listen: Address,

    /// `none` or `keyfile:PATH`.
    #[arg(long, default_value = "none", value_parser = parse_auth)]
    auth: AuthSpec,

    /// Text table; the built-in computer braille table by default.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Debug, Clone)]
enum AuthSpec {
    None,
    KeyFile(PathBuf),
}

fn parse_auth(s: &str) -> Result<AuthSpec, String> {
    match s {
        "none" => Ok(AuthSpec::None),
        _ => match s.strip_prefix("keyfile:") {
            Some(p) if !p.is_empty() => Ok(AuthSpec::KeyFile(p.into())),
            _ => Err(format!("expected `none` or `keyfile:PATH`, got {s:?}")),
        },
    }
}

fn load_key(path: &Path) -> Result<Vec<u8>, String> {
    let key = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if key.is_empty() || key.len() > MAX_KEY_LEN {
        return Err(format!(
            "{}: key must be 1 to {MAX_KEY_LEN} bytes, got {}",
            path.display(),
            key.len()
        ));
    }
    Ok(key)
}

fn run(args: Args) -> Result<(), String> {
    let table = match &args.table {
        Some(p) => BrailleTable::load(p).map_err(|e| e.to_string())?,
        None => BrailleTable::default(),
    };
    let auth = match &args.auth {
        AuthSpec::None => AuthConfig::Open,
        AuthSpec::KeyFile(p) => AuthConfig::Key(load_key(p)?),
    };
    let config = match &args.driver_config {
        Some(p) => SimScriptConfig::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => SimScriptConfig::default(),
    };
    let (tx, rx) = mpsc::channel();
    let driver: Box<dyn Driver> = match args.driver {
        DriverKind::Simscript => Box::new(SimScript::new(config, tx).map_err(|e| e.to_string())?),
        DriverKind::Simterm => {
            let name = if args.driver_config.is_some() {
                config.name.as_str()
            } else {
                "simterm"
            };
            Box::new(SimTerm::new(name, config.cols, config.rows, tx).map_err(|e| e.to_string())?)
        }
    };
    let listener = Listener::bind(&args.listen).map_err(|e| format!("{}: {e}", args.listen))?;
    let server = Server::new(driver, rx, listener, auth, table).map_err(|e| e.to_string())?;
    log::info!(
        "listening on {}",
        server.local_address().map_err(|e| e.to_string())?
    );
    server.run().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("brld: {e}");
            ExitCode::FAILURE
        }
    }
}
