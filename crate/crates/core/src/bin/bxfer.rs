use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use braillemux::focus::{FocusPath, KeyMode};
use braillemux::tools::xfer::{self, XferError};
use braillemux::tools::{parse_path, ConnectArgs};
use clap::{Parser, Subcommand};

/// Transfers files to the device in raw mode.
#[derive(Debug, Parser)]
struct Args {
    #[command(flatten)]
    conn: ConnectArgs,

    /// Bind this tty first, so it is shown again once the transfer ends.
    #[arg(long, value_parser = parse_path)]
    path: Option<FocusPath>,

    /// Per-packet reply timeout.
    #[arg(long, default_value_t = 2000)]
    timeout_ms: u64,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Send FILE to the device.
    Send { file: PathBuf },
}

fn run(args: &Args) -> Result<xfer::Report, XferError> {
    let Cmd::Send { file } = &args.cmd;
    let data = std::fs::read(file)?;
    let conn = args.conn.connect()?;
    if let Some(path) = &args.path {
        conn.enter_tty_mode(path, KeyMode::Commands)?;
    }
    xfer::send(&conn, &data, Duration::from_millis(args.timeout_ms))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(r) => {
            println!(
                "sent {} bytes in {} chunks, crc32 {:08x}",
                r.bytes, r.chunks, r.crc32
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bxfer: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
