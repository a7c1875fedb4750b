//! Client library.
//!
//! ```no_run
//! use std::time::Duration;
//! use braillemux::client::Connection;
//! use braillemux::focus::{FocusPath, KeyMode};
//! use braillemux::transport::Address;
//!
//! let conn = Connection::open(&Address::default(), None)?;
//! conn.enter_tty_mode(&"2".parse::<FocusPath>()?, KeyMode::Commands)?;
//! conn.write_text("Press any key", 0)?;
//! let key = conn.read_key(Duration::from_secs(10))?;
//! println!("{key}");
//! conn.leave_tty_mode()?;
//! conn.close();
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! Writes are fire-and-forget: the daemon does not acknowledge them, and a
//! write it rejects is reported later through [`Connection::next_error`].
//! Mode changes and queries wait for the daemon's answer.

use std::collections::VecDeque;
use std::fmt;
use std::io::{Read, Write};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::driver::Command;
use crate::focus::{FocusPath, KeyMode};
use crate::proto::{
    code, encode_packet, EncodeError, ErrorCode, FrameBuffer, KeyKind, Mechanism, Packet,
    PROTOCOL_VERSION,
};
use crate::server::MAX_AUTH_ATTEMPTS;
use crate::transport::{Address, Stream};

/// How long a request waits for the daemon's answer.
pub const REPLY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect: {0}")]
    ConnectFailed(std::io::Error),
    #[error("authorization failed")]
    AuthFailed,
    #[error("server speaks protocol version {0}")]
    VersionMismatch(u32),
    #[error("server error {code} for request type 0x{offending_type:02x}")]
    Server {
        code: ErrorCode,
        offending_type: u32,
    },
    #[error("not in tty mode")]
    NotInTty,
    #[error("not in raw mode")]
    NotInRaw,
    #[error("timed out")]
    TimedOut,
    #[error("connection lost")]
    ConnectionLost,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClientError {
    /// The daemon's error code, when the daemon refused the request.
    pub fn server_code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Server { code, .. } => Some(*code),
            _ => None,
        }
    }
}

/// A key event delivered to a tty client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyPress {
    pub kind: KeyKind,
    pub code: u64,
    pub arg: u32,
}

impl KeyPress {
    pub fn command(&self) -> Option<Command> {
        match self.kind {
            KeyKind::Command => Command::from_code(self.code, self.arg),
            KeyKind::Raw => None,
        }
    }
}

impl fmt::Display for KeyPress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.command()) {
            (KeyKind::Command, Some(cmd)) => write!(f, "command {cmd}"),
            (KeyKind::Command, None) => write!(f, "command {:#x} {}", self.code, self.arg),
            (KeyKind::Raw, _) => write!(f, "raw {:#x}", self.code),
        }
    }
}

/// An error the daemon reported for a fire-and-forget packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AsyncError {
    pub code: ErrorCode,
    pub offending_type: u32,
}

/// Local mirror of the daemon-side session state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientMode {
    Authed,
    Tty,
    Raw { from_tty: bool },
    Suspended { from_tty: bool },
}

#[derive(Default)]
struct Queues {
    replies: VecDeque<Packet>,
    keys: VecDeque<KeyPress>,
    raw: VecDeque<Vec<u8>>,
    errors: VecDeque<AsyncError>,
    pending: Option<u32>,
    lost: bool,
}

#[derive(Default)]
struct Shared {
    queues: Mutex<Queues>,
    changed: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Queues> {
        self.queues.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Waits until `take` yields something, the connection drops or the
    /// timeout passes.
    fn wait_for<T>(
        &self,
        timeout: Duration,
        mut take: impl FnMut(&mut Queues) -> Option<T>,
    ) -> Result<T, ClientError> {
        let deadline = Instant::now() + timeout;
        let mut q = self.lock();
        loop {
            if let Some(v) = take(&mut q) {
                return Ok(v);
            }
            if q.lost {
                return Err(ClientError::ConnectionLost);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ClientError::TimedOut);
            }
            q = self
                .changed
                .wait_timeout(q, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

/// An authorized connection to the daemon.
pub struct Connection {
    writer: Mutex<Stream>,
    shared: Arc<Shared>,
    requests: Mutex<()>,
    mode: Mutex<ClientMode>,
    reader: Option<JoinHandle<()>>,
}

impl Connection {
    /// Connects, negotiates the protocol version and authorizes with the
    /// first offered mechanism this client can satisfy: NONE, or KEYFILE
    /// when `auth_key` is given.
    pub fn open(addr: &Address, auth_key: Option<&[u8]>) -> Result<Connection, ClientError> {
        let mut stream = Stream::connect(addr).map_err(ClientError::ConnectFailed)?;
        stream.set_read_timeout(Some(REPLY_TIMEOUT))?;
        let mut frames = FrameBuffer::new();
        handshake(&mut stream, &mut frames, auth_key)?;
        stream.set_read_timeout(None)?;

        let shared = Arc::new(Shared::default());
        let reader_stream = stream.try_clone()?;
        let reader = {
            let shared = Arc::clone(&shared);
            thread::Builder::new()
                .name("brlmux-client".into())
                .spawn(move || read_loop(reader_stream, frames, shared))?
        };
        Ok(Connection {
            writer: Mutex::new(stream),
            shared,
            requests: Mutex::new(()),
            mode: Mutex::new(ClientMode::Authed),
            reader: Some(reader),
        })
    }

    /// Uses `$BRLMUX_ADDR` and the key in `$BRLMUX_KEYFILE`, if set.
    pub fn open_from_env() -> Result<Connection, ClientError> {
        let addr = Address::from_env().map_err(|e| ClientError::Protocol(e.to_string()))?;
        let key = match std::env::var_os(crate::transport::KEYFILE_ENV) {
            Some(p) if !p.is_empty() => Some(std::fs::read(p)?),
            _ => None,
        };
        Connection::open(&addr, key.as_deref())
    }

    pub fn mode(&self) -> ClientMode {
        *self.mode.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn set_mode(&self, mode: ClientMode) {
        *self.mode.lock().unwrap_or_else(|e| e.into_inner()) = mode;
    }

    fn send(&self, packet: &Packet) -> Result<(), ClientError> {
        let frame = encode_packet(packet)?;
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        w.write_all(&frame).map_err(|e| match e.kind() {
            std::io::ErrorKind::BrokenPipe | std::io::ErrorKind::ConnectionReset => {
                ClientError::ConnectionLost
            }
            _ => ClientError::Io(e),
        })
    }

    /// Sends `packet` and waits for its answer. Daemon errors come back as
    /// [`ClientError::Server`].
    fn request(&self, packet: Packet) -> Result<Packet, ClientError> {
        let _serial = self.requests.lock().unwrap_or_else(|e| e.into_inner());
        let ty = packet.type_code();
        {
            let mut q = self.shared.lock();
            q.pending = Some(ty);
            q.replies.clear();
        }
        let result = self.send(&packet).and_then(|_| {
            self.shared
                .wait_for(REPLY_TIMEOUT, |q| q.replies.pop_front())
        });
        self.shared.lock().pending = None;
        match result? {
            Packet::Error {
                code,
                offending_type,
            } => Err(ClientError::Server {
                code,
                offending_type,
            }),
            reply => Ok(reply),
        }
    }

    fn expect_ack(&self, packet: Packet) -> Result<(), ClientError> {
        let ty = packet.type_code();
        match self.request(packet)? {
            Packet::Ack { acked_type } if acked_type == ty => Ok(()),
            other => Err(ClientError::Protocol(format!(
                "expected Ack, got {other:?}"
            ))),
        }
    }

    /// Declares where this application runs and starts receiving keys
    /// while focused. Calling it again replaces the previous declaration.
    pub fn enter_tty_mode(&self, path: &FocusPath, key_mode: KeyMode) -> Result<(), ClientError> {
        self.expect_ack(Packet::EnterTty {
            path: path.clone(),
            key_mode,
        })?;
        self.set_mode(ClientMode::Tty);
        self.shared.lock().keys.clear();
        Ok(())
    }

    pub fn leave_tty_mode(&self) -> Result<(), ClientError> {
        self.expect_ack(Packet::LeaveTty)?;
        self.set_mode(ClientMode::Authed);
        Ok(())
    }

    fn require_tty(&self) -> Result<(), ClientError> {
        match self.mode() {
            ClientMode::Tty => Ok(()),
            _ => Err(ClientError::NotInTty),
        }
    }

    /// Shows `text` on the first display row. `cursor` is 0 for none,
    /// otherwise a 1-based cell. Returns as soon as the packet is sent.
    pub fn write_text(&self, text: &str, cursor: u32) -> Result<(), ClientError> {
        self.require_tty()?;
        self.send(&Packet::WriteText {
            cursor,
            text: text.to_owned(),
        })
    }

    /// Shows raw dot patterns, one byte per cell, covering the whole display.
    pub fn write_dots(&self, cells: &[u8]) -> Result<(), ClientError> {
        self.require_tty()?;
        self.send(&Packet::WriteDots {
            cells: cells.to_vec(),
        })
    }

    /// Oldest pending key event, waiting up to `timeout`.
    pub fn read_key(&self, timeout: Duration) -> Result<KeyPress, ClientError> {
        self.require_tty()?;
        self.shared.wait_for(timeout, |q| q.keys.pop_front())
    }

    /// Next error reported for a fire-and-forget packet, if one arrives
    /// within `timeout`.
    pub fn next_error(&self, timeout: Duration) -> Option<AsyncError> {
        self.shared.wait_for(timeout, |q| q.errors.pop_front()).ok()
    }

    pub fn driver_name(&self) -> Result<String, ClientError> {
        match self.request(Packet::GetDriverName)? {
            Packet::DriverName { name } => Ok(name),
            other => Err(ClientError::Protocol(format!(
                "expected DriverName, got {other:?}"
            ))),
        }
    }

    /// `(cols, rows)` of the display.
    pub fn display_size(&self) -> Result<(u32, u32), ClientError> {
        match self.request(Packet::GetDisplaySize)? {
            Packet::DisplaySize { cols, rows } => Ok((cols, rows)),
            other => Err(ClientError::Protocol(format!(
                "expected DisplaySize, got {other:?}"
            ))),
        }
    }

    /// Reports `child` as the active child of `prefix` (focus agent role).
    pub fn set_focus(&self, prefix: &FocusPath, child: u32) -> Result<(), ClientError> {
        self.expect_ack(Packet::SetFocus {
            prefix: prefix.clone(),
            active_child: child,
        })
    }

    /// Takes exclusive packet-level control of the device.
    pub fn enter_raw_mode(&self, driver_name: &str) -> Result<(), ClientError> {
        self.expect_ack(Packet::EnterRaw {
            driver_name: driver_name.to_owned(),
        })?;
        let from_tty = self.mode() == ClientMode::Tty;
        self.shared.lock().raw.clear();
        self.set_mode(ClientMode::Raw { from_tty });
        Ok(())
    }

    pub fn leave_raw_mode(&self) -> Result<(), ClientError> {
        let prior = self.mode();
        self.expect_ack(Packet::LeaveRaw)?;
        self.set_mode(restore(prior));
        Ok(())
    }

    pub fn send_raw(&self, data: &[u8]) -> Result<(), ClientError> {
        if !matches!(self.mode(), ClientMode::Raw { .. }) {
            return Err(ClientError::NotInRaw);
        }
        self.send(&Packet::RawPacket {
            data: data.to_vec(),
        })
    }

    pub fn recv_raw(&self, timeout: Duration) -> Result<Vec<u8>, ClientError> {
        if !matches!(self.mode(), ClientMode::Raw { .. }) {
            return Err(ClientError::NotInRaw);
        }
        self.shared.wait_for(timeout, |q| q.raw.pop_front())
    }

    /// Asks the daemon to close its driver so this application can open
    /// the device itself.
    pub fn suspend_driver(&self, driver_name: &str) -> Result<(), ClientError> {
        self.expect_ack(Packet::Suspend {
            driver_name: driver_name.to_owned(),
        })?;
        let from_tty = self.mode() == ClientMode::Tty;
        self.set_mode(ClientMode::Suspended { from_tty });
        Ok(())
    }

    pub fn resume_driver(&self) -> Result<(), ClientError> {
        let prior = self.mode();
        self.expect_ack(Packet::Resume)?;
        self.set_mode(restore(prior));
        Ok(())
    }

    /// Closes the connection; the daemon releases every mode it held.
    pub fn close(self) {}
}

fn restore(prior: ClientMode) -> ClientMode {
    match prior {
        ClientMode::Raw { from_tty: true } | ClientMode::Suspended { from_tty: true } => {
            ClientMode::Tty
        }
        ClientMode::Tty => ClientMode::Tty,
        _ => ClientMode::Authed,
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Ok(w) = self.writer.lock() {
            let _ = w.shutdown();
        }
        if let Some(r) = self.reader.take() {
            let _ = r.join();
        }
    }
}

fn read_packet(stream: &mut Stream, frames: &mut FrameBuffer) -> Result<Packet, ClientError> {
    let mut buf = [0u8; 4096];
    loop {
        if let Some(p) = frames
            .next_packet()
            .map_err(|e| ClientError::Protocol(e.to_string()))?
        {
            return Ok(p);
        }
        match stream.read(&mut buf) {
            Ok(0) => return Err(ClientError::ConnectionLost),
            Ok(n) => frames.extend(&buf[..n]),
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                return Err(ClientError::TimedOut)
            }
            Err(_) => return Err(ClientError::ConnectionLost),
        }
    }
}

fn write_packet(stream: &mut Stream, packet: &Packet) -> Result<(), ClientError> {
    stream.write_all(&encode_packet(packet)?)?;
    Ok(())
}

fn handshake(
    stream: &mut Stream,
    frames: &mut FrameBuffer,
    key: Option<&[u8]>,
) -> Result<(), ClientError> {
    match read_packet(stream, frames)? {
        Packet::Version { version } if version == PROTOCOL_VERSION => {}
        Packet::Version { version } => return Err(ClientError::VersionMismatch(version)),
        other => {
            return Err(ClientError::Protocol(format!(
                "expected Version, got {other:?}"
            )))
        }
    }
    write_packet(
        stream,
        &Packet::VersionAck {
            version: PROTOCOL_VERSION,
        },
    )?;
    let offered = match read_packet(stream, frames)? {
        Packet::AuthOffer { mechanisms } => mechanisms,
        other => {
            return Err(ClientError::Protocol(format!(
                "expected AuthOffer, got {other:?}"
            )))
        }
    };
    let candidates: Vec<(Mechanism, Vec<u8>)> = offered
        .into_iter()
        .filter_map(|m| match (m, key) {
            (Mechanism::None, _) => Some((m, Vec::new())),
            (Mechanism::KeyFile, Some(k)) => Some((m, k.to_vec())),
            (Mechanism::KeyFile, None) => None,
        })
        .collect();
    if candidates.is_empty() {
        return Err(ClientError::AuthFailed);
    }
    for (mechanism, payload) in candidates.iter().cycle().take(MAX_AUTH_ATTEMPTS.into()) {
        write_packet(
            stream,
            &Packet::AuthReq {
                mechanism: *mechanism,
                payload: payload.clone(),
            },
        )
        .map_err(|_| ClientError::AuthFailed)?;
        match read_packet(stream, frames) {
            Ok(Packet::AuthOk) => return Ok(()),
            Ok(Packet::Error {
                code: ErrorCode::Unauthorized,
                ..
            }) => continue,
            Ok(Packet::Error {
                code,
                offending_type,
            }) => {
                return Err(ClientError::Server {
                    code,
                    offending_type,
                })
            }
            Ok(other) => return Err(ClientError::Protocol(format!("unexpected {other:?}"))),
            Err(ClientError::ConnectionLost) => return Err(ClientError::AuthFailed),
            Err(e) => return Err(e),
        }
    }
    Err(ClientError::AuthFailed)
}

fn read_loop(mut stream: Stream, mut frames: FrameBuffer, shared: Arc<Shared>) {
    loop {
        let packet = match read_packet(&mut stream, &mut frames) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("client reader stopping: {e}");
                break;
            }
        };
        let mut q = shared.lock();
        match packet {
            Packet::KeyEvent { kind, code, arg } => q.keys.push_back(KeyPress { kind, code, arg }),
            Packet::RawPacket { data } => q.raw.push_back(data),
            Packet::Error {
                code,
                offending_type,
            } if q.pending != Some(offending_type) || is_fire_and_forget(offending_type) => {
                q.errors.push_back(AsyncError {
                    code,
                    offending_type,
                })
            }
            other => q.replies.push_back(other),
        }
        shared.changed.notify_all();
    }
    shared.lock().lost = true;
    shared.changed.notify_all();
}

fn is_fire_and_forget(ty: u32) -> bool {
    matches!(ty, code::WRITE_TEXT | code::WRITE_DOTS | code::RAW_PACKET)
}
