use std::process::ExitCode;
use std::time::Duration;

use braillemux::client::ClientError;
use braillemux::focus::{FocusPath, KeyMode};
use braillemux::tools::{parse_path, ConnectArgs};
use clap::Parser;

/// Shows a prompt on the braille line and prints the first key pressed.
#[derive(Debug, Parser)]
struct Args {
    #[command(flatten)]
    conn: ConnectArgs,

    /// Focus path of the tty to bind, e.g. `1` or `7,42`.
    #[arg(long, default_value = "1", value_parser = parse_path)]
    path: FocusPath,

    /// Pass raw key codes instead of commands.
    #[arg(long)]
    raw_keys: bool,

    /// How long to wait for a key.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let conn = match args.conn.connect() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("becho: {e}");
            return ExitCode::from(1);
        }
    };
    let mode = if args.raw_keys {
        KeyMode::Raw
    } else {
        KeyMode::Commands
    };
    let shown = conn
        .enter_tty_mode(&args.path, mode)
        .and_then(|()| conn.write_text("Press any key", 0));
    if let Err(e) = shown {
        eprintln!("becho: {e}");
        return ExitCode::from(1);
    }
    let code = match conn.read_key(Duration::from_millis(args.timeout_ms)) {
        Ok(key) => {
            println!("{key}");
            0
        }
        Err(ClientError::TimedOut) => {
            eprintln!("becho: no key within {} ms", args.timeout_ms);
            2
        }
        Err(e) => {
            eprintln!("becho: {e}");
            1
        }
    };
    let _ = conn.leave_tty_mode();
    ExitCode::from(code)
}
