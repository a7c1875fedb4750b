use std::path::PathBuf;
use std::process::ExitCode;

use braillemux::focus::{FocusPath, KeyMode};
use braillemux::tools::pager::{self, Document, Pager};
use braillemux::tools::{parse_path, ConnectArgs};
use clap::Parser;

/// Reads a text file on the braille line.
#[derive(Debug, Parser)]
struct Args {
    #[command(flatten)]
    conn: ConnectArgs,

    #[arg(long, default_value = "1", value_parser = parse_path)]
    path: FocusPath,

    file: PathBuf,
}

fn run(args: &Args) -> Result<(), String> {
    let text =
        std::fs::read_to_string(&args.file).map_err(|e| format!("{}: {e}", args.file.display()))?;
    let conn = args.conn.connect().map_err(|e| e.to_string())?;
    let (cols, _) = conn.display_size().map_err(|e| e.to_string())?;
    let mut p = Pager::new(Document::parse(&text), cols as usize);
    if let Some((line, col)) = std::fs::read_to_string(pager::pos_path(&args.file))
        .ok()
        .as_deref()
        .and_then(pager::parse_pos)
    {
        p.restore(line, col);
    }
    conn.enter_tty_mode(&args.path, KeyMode::Commands)
        .map_err(|e| e.to_string())?;
    pager::run(&conn, &args.file, p).map_err(|e| e.to_string())?;
    let _ = conn.leave_tty_mode();
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bpager: {e}");
            ExitCode::from(1)
        }
    }
}
