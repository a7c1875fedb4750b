//! Addresses and stream sockets shared by the daemon and the client.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

pub const DEFAULT_PORT: u16 = 4101;
pub const ADDR_ENV: &str = "BRLMUX_ADDR";
pub const KEYFILE_ENV: &str = "BRLMUX_KEYFILE";

/// `tcp:HOST:PORT` or `local:PATH`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Address {
    Tcp { host: String, port: u16 },
    Local(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid address {0:?}: expected tcp:HOST:PORT or local:PATH")]
pub struct AddressError(pub String);

impl FromStr for Address {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, AddressError> {
        let bad = || AddressError(s.to_owned());
        if let Some(rest) = s.strip_prefix("tcp:") {
            let (host, port) = match rest.rsplit_once(':') {
                // a bare IPv6 literal has colons but no port
                Some((h, p)) if !h.is_empty() && !p.contains(']') => {
                    (h, p.parse().map_err(|_| bad())?)
                }
                _ => (rest, DEFAULT_PORT),
            };
            if host.is_empty() {
                return Err(bad());
            }
            let host = host.trim_start_matches('[').trim_end_matches(']');
            Ok(Address::Tcp {
                host: host.to_owned(),
                port,
            })
        } else if let Some(path) = s.strip_prefix("local:") {
            if path.is_empty() {
                return Err(bad());
            }
            Ok(Address::Local(PathBuf::from(path)))
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Address::Tcp { host, port } if host.contains(':') => write!(f, "tcp:[{host}]:{port}"),
            Address::Tcp { host, port } => write!(f, "tcp:{host}:{port}"),
            Address::Local(p) => write!(f, "local:{}", p.display()),
        }
    }
}

impl Default for Address {
    fn default() -> Self {
        Address::Tcp {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
        }
    }
}

impl Address {
    /// `$BRLMUX_ADDR` if set and valid, else `tcp:127.0.0.1:4101`.
    pub fn from_env() -> Result<Address, AddressError> {
        match std::env::var(ADDR_ENV) {
            Ok(v) if !v.is_empty() => v.parse(),
            _ => Ok(Address::default()),
        }
    }
}

/// A connected stream socket.
#[derive(Debug)]
pub enum Stream {
    Tcp(TcpStream),
    Local(UnixStream),
}

impl Stream {
    pub fn connect(addr: &Address) -> io::Result<Stream> {
        match addr {
            Address::Tcp { host, port } => {
                let s = TcpStream::connect((host.as_str(), *port))?;
                s.set_nodelay(true)?;
                Ok(Stream::Tcp(s))
            }
            Address::Local(path) => Ok(Stream::Local(UnixStream::connect(path)?)),
        }
    }

    pub fn try_clone(&self) -> io::Result<Stream> {
        match self {
            Stream::Tcp(s) => s.try_clone().map(Stream::Tcp),
            Stream::Local(s) => s.try_clone().map(Stream::Local),
        }
    }

    pub fn shutdown(&self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.shutdown(Shutdown::Both),
            Stream::Local(s) => s.shutdown(Shutdown::Both),
        }
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.set_read_timeout(t),
            Stream::Local(s) => s.set_read_timeout(t),
        }
    }
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            Stream::Local(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            Stream::Local(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.flush(),
            Stream::Local(s) => s.flush(),
        }
    }
}

/// A listening socket. A local socket file is removed when dropped.
#[derive(Debug)]
pub enum Listener {
    Tcp(TcpListener),
    Local(UnixListener, PathBuf),
}

impl Listener {
    pub fn bind(addr: &Address) -> io::Result<Listener> {
        match addr {
            Address::Tcp { host, port } => {
                Ok(Listener::Tcp(TcpListener::bind((host.as_str(), *port))?))
            }
            Address::Local(path) => {
                // stale socket from a previous run
                if let Ok(meta) = std::fs::symlink_metadata(path) {
                    use std::os::unix::fs::FileTypeExt;
                    if meta.file_type().is_socket() && UnixStream::connect(path).is_err() {
                        std::fs::remove_file(path)?;
                    }
                }
                Ok(Listener::Local(UnixListener::bind(path)?, path.clone()))
            }
        }
    }

    pub fn accept(&self) -> io::Result<Stream> {
        match self {
            Listener::Tcp(l) => {
                let (s, _) = l.accept()?;
                s.set_nodelay(true)?;
                Ok(Stream::Tcp(s))
            }
            Listener::Local(l, _) => Ok(Stream::Local(l.accept()?.0)),
        }
    }

    /// The bound address, with the actual port for `tcp:HOST:0`.
    pub fn local_address(&self) -> io::Result<Address> {
        match self {
            Listener::Tcp(l) => {
                let a = l.local_addr()?;
                Ok(Address::Tcp {
                    host: a.ip().to_string(),
                    port: a.port(),
                })
            }
            Listener::Local(_, p) => Ok(Address::Local(p.clone())),
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        if let Listener::Local(_, path) = self {
            let _ = std::fs::remove_file(path);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_addresses() {
        assert_eq!(
            "tcp:localhost:4101".parse::<Address>().unwrap(),
            Address::Tcp {
                host: "localhost".into(),
                port: 4101
            }
        );
        assert_eq!(
            "tcp:example.org".parse::<Address>().unwrap(),
            Address::Tcp {
                host: "example.org".into(),
                port: DEFAULT_PORT
            }
        );
        assert_eq!(
            "tcp:[::1]:9".parse::<Address>().unwrap(),
            Address::Tcp {
                host: "::1".into(),
                port: 9
            }
        );
        assert_eq!(
            "local:/run/brl.sock".parse::<Address>().unwrap(),
            Address::Local("/run/brl.sock".into())
        );
        for bad in ["", "udp:x:1", "tcp:", "tcp:h:notaport", "local:"] {
            assert!(bad.parse::<Address>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        for s in ["tcp:127.0.0.1:4101", "tcp:[::1]:9", "local:/tmp/x"] {
            assert_eq!(s.parse::<Address>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn local_listener_accepts_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s");
        let addr = Address::Local(path.clone());
        let l = Listener::bind(&addr).unwrap();
        let mut c = Stream::connect(&addr).unwrap();
        let mut s = l.accept().unwrap();
        c.write_all(b"hi").unwrap();
        let mut buf = [0; 2];
        s.read_exact(&mut buf).unwrap();
        assert_eq!(&buf, b"hi");
        drop(l);
        assert!(!path.exists());
    }
}
