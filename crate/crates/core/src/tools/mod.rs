//! Logic shared by the command line clients (`becho`, `bpager`, `bfocus`,
//! `bxfer`).

use std::path::PathBuf;

use crate::client::{ClientError, Connection};
use crate::focus::FocusPath;
use crate::transport::{Address, ADDR_ENV, KEYFILE_ENV};

pub mod pager;
pub mod xfer;

/// Connection flags every tool accepts.
#[derive(Debug, Clone, clap::Args)]
pub struct ConnectArgs {
    /// Daemon address, tcp:HOST:PORT or local:PATH.
    #[arg(long, env = ADDR_ENV, default_value_t = Address::default())]
    pub addr: Address,

    /// File holding the authorization key.
    #[arg(long, env = KEYFILE_ENV)]
    pub keyfile: Option<PathBuf>,
}

impl ConnectArgs {
    pub fn connect(&self) -> Result<Connection, ClientError> {
        let key = match &self.keyfile {
            Some(p) => Some(std::fs::read(p)?),
            None => None,
        };
        Connection::open(&self.addr, key.as_deref())
    }
}

/// Parses a `--path` value such as `2` or `7,42`.
pub fn parse_path(s: &str) -> Result<FocusPath, String> {
    s.parse::<FocusPath>().map_err(|e| e.to_string())
}
