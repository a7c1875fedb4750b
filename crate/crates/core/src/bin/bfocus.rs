use std::process::ExitCode;

use braillemux::focus::FocusPath;
use braillemux::tools::{parse_path, ConnectArgs};
use clap::Parser;

/// Reports a focus change: under `--path`, child `--active` is now active.
#[derive(Debug, Parser)]
struct Args {
    #[command(flatten)]
    conn: ConnectArgs,

    /// Prefix whose active child changed; empty for the root.
    #[arg(long, default_value = "", value_parser = parse_path)]
    path: FocusPath,

    #[arg(long)]
    active: u32,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = args
        .conn
        .connect()
        .and_then(|conn| conn.set_focus(&args.path, args.active));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bfocus: {e}");
            ExitCode::from(1)
        }
    }
}
