//! The multiplexing daemon.
//!
//! [`ServerCore`] holds all daemon state and is driven one event at a time:
//! a connection opening or closing, a packet from a session, or something
//! the device did. [`net`] feeds it from sockets and the driver on a single
//! event loop thread, so every state transition is serialized.
//!
//! Session states:
//!
//! ```text
//! Handshake --AuthOk--> Authed --EnterTty--> Tty --LeaveTty--> Authed
//! Authed | Tty --EnterRaw--> Raw --LeaveRaw--> previous state
//! Authed | Tty --Suspend--> Suspended --Resume--> previous state
//! ```
//!
//! At most one session holds the device exclusively (raw or suspended).
//! Otherwise the focused tty session's last written buffer is what the
//! device shows, and an all-blank display when nobody is focused.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::braille::{BrailleTable, CellBuffer, CellPattern};
use crate::driver::{DeviceEvent, Driver, Translated};
use crate::focus::{resolve_focus, FocusMap, FocusPath, KeyMode, TtyBinding, MAX_DEPTH};
use crate::proto::{
    code, DecodeError, DecodeErrorKind, ErrorCode, KeyKind, Mechanism, Packet, MAX_DATA_LEN,
    PROTOCOL_VERSION,
};

pub mod net;
mod outbox;

pub use net::{Server, ServerError, ServerHandle};
pub use outbox::{Outbox, KEY_QUEUE_LEN};

pub type SessionId = u64;

/// Failed authorization attempts allowed before the connection is closed.
pub const MAX_AUTH_ATTEMPTS: u8 = 3;

/// How clients must authorize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthConfig {
    /// Anyone may connect; mechanism NONE is offered.
    Open,
    /// Clients must present these bytes via mechanism KEYFILE.
    Key(Vec<u8>),
}

impl AuthConfig {
    pub fn offered(&self) -> Vec<Mechanism> {
        match self {
            AuthConfig::Open => vec![Mechanism::None],
            AuthConfig::Key(_) => vec![Mechanism::KeyFile],
        }
    }

    fn accepts(&self, mechanism: Mechanism, payload: &[u8]) -> bool {
        match (self, mechanism) {
            (AuthConfig::Open, Mechanism::None) => true,
            (AuthConfig::Key(key), Mechanism::KeyFile) => constant_time_eq(key, payload),
            _ => false,
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Coarse session state, for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Handshake,
    Authed,
    Tty,
    Raw,
    Suspended,
}

#[derive(Debug, Clone)]
struct TtyState {
    path: FocusPath,
    key_mode: KeyMode,
    entry_seq: u64,
    buffer: CellBuffer,
}

#[derive(Debug)]
enum State {
    Handshake { version_ok: bool, failures: u8 },
    Authed,
    Tty(TtyState),
    Raw { prior: Option<TtyState> },
    Suspended { prior: Option<TtyState> },
}

struct Session {
    state: State,
    outbox: Arc<Outbox>,
}

impl Session {
    fn send(&self, p: Packet) {
        self.outbox.push(p);
    }

    fn error(&self, code: ErrorCode, offending_type: u32) {
        self.send(Packet::Error {
            code,
            offending_type,
        });
    }

    fn ack(&self, acked_type: u32) {
        self.send(Packet::Ack { acked_type });
    }
}

/// All daemon state.
pub struct ServerCore {
    sessions: BTreeMap<SessionId, Session>,
    focus: FocusMap,
    focused: Option<SessionId>,
    exclusive: Option<SessionId>,
    driver: Box<dyn Driver>,
    table: BrailleTable,
    auth: AuthConfig,
    next_entry: u64,
}

impl ServerCore {
    /// Takes ownership of `driver` and opens it.
    pub fn new(
        mut driver: Box<dyn Driver>,
        table: BrailleTable,
        auth: AuthConfig,
    ) -> Result<ServerCore, crate::driver::DriverError> {
        driver.open()?;
        Ok(ServerCore {
            sessions: BTreeMap::new(),
            focus: FocusMap::new(),
            focused: None,
            exclusive: None,
            driver,
            table,
            auth,
            next_entry: 0,
        })
    }

    pub fn driver(&self) -> &dyn Driver {
        self.driver.as_ref()
    }

    pub fn driver_mut(&mut self) -> &mut dyn Driver {
        self.driver.as_mut()
    }

    pub fn focused(&self) -> Option<SessionId> {
        self.focused
    }

    pub fn exclusive_owner(&self) -> Option<SessionId> {
        self.exclusive
    }

    pub fn focus_map(&self) -> &FocusMap {
        &self.focus
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn mode(&self, id: SessionId) -> Option<Mode> {
        self.sessions.get(&id).map(|s| match s.state {
            State::Handshake { .. } => Mode::Handshake,
            State::Authed => Mode::Authed,
            State::Tty(_) => Mode::Tty,
            State::Raw { .. } => Mode::Raw,
            State::Suspended { .. } => Mode::Suspended,
        })
    }

    /// The retained buffer of a tty session.
    pub fn retained(&self, id: SessionId) -> Option<&CellBuffer> {
        match &self.sessions.get(&id)?.state {
            State::Tty(t) => Some(&t.buffer),
            _ => None,
        }
    }

    pub fn tty_bindings(&self) -> Vec<TtyBinding<SessionId>> {
        self.sessions
            .iter()
            .filter_map(|(id, s)| match &s.state {
                State::Tty(t) => Some(TtyBinding {
                    client: *id,
                    path: t.path.clone(),
                    key_mode: t.key_mode,
                    entry_seq: t.entry_seq,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn connect(&mut self, id: SessionId, outbox: Arc<Outbox>) {
        let session = Session {
            state: State::Handshake {
                version_ok: false,
                failures: 0,
            },
            outbox,
        };
        session.send(Packet::Version {
            version: PROTOCOL_VERSION,
        });
        session.send(Packet::AuthOffer {
            mechanisms: self.auth.offered(),
        });
        self.sessions.insert(id, session);
    }

    pub fn disconnect(&mut self, id: SessionId) {
        let Some(session) = self.sessions.remove(&id) else {
            return;
        };
        session.outbox.close();
        if self.exclusive == Some(id) {
            self.exclusive = None;
            match session.state {
                State::Suspended { .. } => self.reopen_driver(),
                State::Raw { .. } => self.driver.set_raw_mode(false),
                _ => {}
            }
            self.refresh();
        } else {
            self.refocus(None);
        }
    }

    /// A frame from `id` that failed to decode.
    pub fn bad_frame(&mut self, id: SessionId, err: &DecodeError) {
        let Some(session) = self.sessions.get(&id) else {
            return;
        };
        let code = match err.kind {
            DecodeErrorKind::PathTooDeep(_) => ErrorCode::BadParameter,
            _ => ErrorCode::InvalidPacket,
        };
        session.error(code, err.type_code);
        if err.frame_len.is_none() {
            self.disconnect(id);
        }
    }

    pub fn handle_packet(&mut self, id: SessionId, packet: Packet) {
        let Some(session) = self.sessions.get_mut(&id) else {
            return;
        };
        let ty = packet.type_code();
        if let State::Handshake {
            version_ok,
            failures,
        } = session.state
        {
            let mut drop_session = false;
            match packet {
                Packet::VersionAck { version } if !version_ok => {
                    if version == PROTOCOL_VERSION {
                        session.state = State::Handshake {
                            version_ok: true,
                            failures,
                        };
                    } else {
                        session.error(ErrorCode::UnsupportedVersion, ty);
                        drop_session = true;
                    }
                }
                Packet::AuthReq { mechanism, payload } if version_ok => {
                    if self.auth.accepts(mechanism, &payload) {
                        session.state = State::Authed;
                        session.send(Packet::AuthOk);
                    } else {
                        let failures = failures + 1;
                        session.state = State::Handshake {
                            version_ok,
                            failures,
                        };
                        session.error(ErrorCode::Unauthorized, ty);
                        drop_session = failures >= MAX_AUTH_ATTEMPTS;
                    }
                }
                p if is_server_only(&p) => session.error(ErrorCode::InvalidPacket, ty),
                _ => session.error(ErrorCode::IllegalInState, ty),
            }
            if drop_session {
                self.disconnect(id);
            }
            return;
        }

        match packet {
            Packet::GetDriverName => session.send(Packet::DriverName {
                name: self.driver.spec().name.clone(),
            }),
            Packet::GetDisplaySize => {
                let spec = self.driver.spec();
                session.send(Packet::DisplaySize {
                    cols: spec.cols.into(),
                    rows: spec.rows.into(),
                })
            }
            Packet::EnterTty { path, key_mode } => self.enter_tty(id, path, key_mode),
            Packet::LeaveTty => {
                if matches!(session.state, State::Tty(_)) {
                    session.state = State::Authed;
                    self.refocus(None);
                    self.sessions[&id].ack(ty);
                } else {
                    session.error(ErrorCode::NotInMode, ty);
                }
            }
            Packet::WriteText { cursor, text } => {
                let spec = self.driver.spec();
                let (cols, rows) = (spec.cols, spec.rows);
                let rendered = self
                    .table
                    .render_text(&text, cols, cursor)
                    .map(|line| line.resized(cols, rows));
                self.write(id, ty, rendered.ok());
            }
            Packet::WriteDots { cells } => {
                let spec = self.driver.spec();
                let cells = cells.into_iter().map(CellPattern).collect();
                let buffer = CellBuffer::from_cells(spec.cols, spec.rows, cells, None);
                self.write(id, ty, buffer.ok());
            }
            Packet::SetFocus {
                prefix,
                active_child,
            } => match self.focus.set_active(prefix, active_child) {
                Ok(_) => {
                    self.refocus(None);
                    self.sessions[&id].ack(ty);
                }
                Err(_) => session.error(ErrorCode::BadParameter, ty),
            },
            Packet::EnterRaw { driver_name } => {
                if let Some(code) = self.check_exclusive(id, &driver_name, true) {
                    self.sessions[&id].error(code, ty);
                    return;
                }
                self.take_exclusive(id, |prior| State::Raw { prior });
                self.driver.set_raw_mode(true);
                self.sessions[&id].ack(ty);
            }
            Packet::LeaveRaw => {
                if !matches!(session.state, State::Raw { .. }) {
                    session.error(ErrorCode::NotInMode, ty);
                    return;
                }
                self.release_exclusive(id);
                self.driver.set_raw_mode(false);
                self.refresh();
                self.sessions[&id].ack(ty);
            }
            Packet::RawPacket { data } => {
                if !matches!(session.state, State::Raw { .. }) {
                    session.error(ErrorCode::NotInMode, ty);
                    return;
                }
                if let Err(e) = self.driver.send_packet(&data) {
                    log::warn!("session {id}: raw packet rejected by driver: {e}");
                    self.sessions[&id].error(ErrorCode::BadParameter, ty);
                }
            }
            Packet::Suspend { driver_name } => {
                if let Some(code) = self.check_exclusive(id, &driver_name, false) {
                    self.sessions[&id].error(code, ty);
                    return;
                }
                if let Err(e) = self.driver.close() {
                    log::warn!("closing driver for suspend: {e}");
                }
                self.take_exclusive(id, |prior| State::Suspended { prior });
                self.sessions[&id].ack(ty);
            }
            Packet::Resume => {
                if !matches!(session.state, State::Suspended { .. }) {
                    session.error(ErrorCode::IllegalInState, ty);
                    return;
                }
                self.reopen_driver();
                self.release_exclusive(id);
                self.refresh();
                self.sessions[&id].ack(ty);
            }
            Packet::VersionAck { .. } | Packet::AuthReq { .. } => {
                session.error(ErrorCode::IllegalInState, ty)
            }
            _ => session.error(ErrorCode::InvalidPacket, ty),
        }
    }

    pub fn device_event(&mut self, event: DeviceEvent) {
        match event {
            DeviceEvent::Key(code) => self.device_key(code),
            DeviceEvent::Packet(data) => {
                let Some(owner) = self.exclusive else { return };
                let Some(session) = self.sessions.get(&owner) else {
                    return;
                };
                if matches!(session.state, State::Raw { .. }) && data.len() <= MAX_DATA_LEN {
                    session.send(Packet::RawPacket { data });
                }
            }
        }
    }

    fn device_key(&mut self, code: u64) {
        if self.exclusive.is_some() || !self.driver.is_open() {
            return;
        }
        let Some(id) = self.focused else { return };
        let Some(session) = self.sessions.get(&id) else {
            return;
        };
        let State::Tty(tty) = &session.state else {
            return;
        };
        let event = match tty.key_mode {
            KeyMode::Raw => Packet::KeyEvent {
                kind: KeyKind::Raw,
                code,
                arg: 0,
            },
            KeyMode::Commands => match self.driver.key_table().translate(code) {
                Translated::Command(cmd) => Packet::KeyEvent {
                    kind: KeyKind::Command,
                    code: cmd.code(),
                    arg: cmd.arg(),
                },
                Translated::Unmapped(_) => return,
            },
        };
        session.send(event);
    }

    fn enter_tty(&mut self, id: SessionId, path: FocusPath, key_mode: KeyMode) {
        let spec = self.driver.spec();
        let buffer = CellBuffer::blank(spec.cols, spec.rows);
        let session = self.sessions.get_mut(&id).expect("caller checked");
        if !matches!(session.state, State::Authed | State::Tty(_)) {
            session.error(ErrorCode::IllegalInState, code::ENTER_TTY);
            return;
        }
        if path.is_empty() || path.len() > MAX_DEPTH {
            session.error(ErrorCode::BadParameter, code::ENTER_TTY);
            return;
        }
        self.next_entry += 1;
        session.state = State::Tty(TtyState {
            path,
            key_mode,
            entry_seq: self.next_entry,
            buffer,
        });
        self.refocus(Some(id));
        self.sessions[&id].ack(code::ENTER_TTY);
    }

    fn write(&mut self, id: SessionId, ty: u32, buffer: Option<CellBuffer>) {
        let session = self.sessions.get_mut(&id).expect("caller checked");
        let State::Tty(tty) = &mut session.state else {
            session.error(ErrorCode::NotInMode, ty);
            return;
        };
        let Some(buffer) = buffer else {
            session.error(ErrorCode::BadParameter, ty);
            return;
        };
        tty.buffer = buffer;
        if self.focused == Some(id) && self.exclusive.is_none() {
            self.flush();
        }
    }

    fn check_exclusive(&self, id: SessionId, driver_name: &str, raw: bool) -> Option<ErrorCode> {
        let session = &self.sessions[&id];
        let spec = self.driver.spec();
        if !matches!(session.state, State::Authed | State::Tty(_)) {
            Some(ErrorCode::IllegalInState)
        } else if raw && !spec.supports_raw {
            Some(ErrorCode::BadParameter)
        } else if driver_name != spec.name {
            Some(ErrorCode::DriverMismatch)
        } else if self.exclusive.is_some() {
            Some(ErrorCode::DeviceBusy)
        } else {
            None
        }
    }

    fn take_exclusive(&mut self, id: SessionId, to: impl FnOnce(Option<TtyState>) -> State) {
        let session = self.sessions.get_mut(&id).expect("caller checked");
        let prior = match std::mem::replace(&mut session.state, State::Authed) {
            State::Tty(t) => Some(t),
            _ => None,
        };
        session.state = to(prior);
        self.exclusive = Some(id);
        self.focused = resolve_focus(&self.tty_bindings(), &self.focus);
    }

    fn release_exclusive(&mut self, id: SessionId) {
        let session = self.sessions.get_mut(&id).expect("caller checked");
        let prior = match std::mem::replace(&mut session.state, State::Authed) {
            State::Raw { prior } | State::Suspended { prior } => prior,
            other => unreachable!("releasing exclusivity from {other:?}"),
        };
        session.state = prior.map_or(State::Authed, State::Tty);
        self.exclusive = None;
    }

    fn reopen_driver(&mut self) {
        if let Err(e) = self.driver.open() {
            log::error!("reopening driver: {e}");
        }
    }

    /// Re-resolves focus; flushes when the winner changed, or when it is
    /// `force` (a session that just reset its buffer).
    fn refocus(&mut self, force: Option<SessionId>) {
        let winner = resolve_focus(&self.tty_bindings(), &self.focus);
        let changed = winner != self.focused;
        self.focused = winner;
        if self.exclusive.is_none() && (changed || (force.is_some() && force == winner)) {
            self.flush();
        }
    }

    /// Re-resolves focus and unconditionally redraws the device.
    fn refresh(&mut self) {
        self.focused = resolve_focus(&self.tty_bindings(), &self.focus);
        if self.exclusive.is_none() {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let spec = self.driver.spec();
        let buffer = self
            .focused
            .and_then(|id| self.retained(id))
            .cloned()
            .unwrap_or_else(|| CellBuffer::blank(spec.cols, spec.rows));
        if let Err(e) = self.driver.write_cells(&buffer) {
            log::warn!("device write failed: {e}");
        }
    }
}

fn is_server_only(p: &Packet) -> bool {
    matches!(
        p,
        Packet::Version { .. }
            | Packet::AuthOffer { .. }
            | Packet::AuthOk
            | Packet::Ack { .. }
            | Packet::DriverName { .. }
            | Packet::DisplaySize { .. }
            | Packet::KeyEvent { .. }
            | Packet::Error { .. }
    )
}
