//! Wire messages and their binary encoding.
//!
//! Every message travels in one frame:
//!
//! ```text
//! +----------------+----------------+------------------------+
//! | length: u32 BE | type:   u32 BE | payload (length bytes) |
//! +----------------+----------------+------------------------+
//! ```
//!
//! Integers are big-endian. Strings and byte blobs carry a u16 length
//! prefix, focus paths a u8 depth followed by that many u32 elements.
//! Frames longer than [`MAX_FRAME_LEN`] are a protocol error.

use std::fmt;

use thiserror::Error;

use crate::focus::{FocusPath, KeyMode, MAX_DEPTH};

pub const PROTOCOL_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 8;
pub const MAX_FRAME_LEN: usize = 65536;
pub const MAX_NAME_LEN: usize = 64;
pub const MAX_AUTH_PAYLOAD: usize = 256;
/// Cap on text bytes, dot cells and raw packet bytes.
pub const MAX_DATA_LEN: usize = 16384;

/// Message type codes.
pub mod code {
    pub const VERSION: u32 = 0x01;
    pub const VERSION_ACK: u32 = 0x02;
    pub const AUTH_OFFER: u32 = 0x03;
    pub const AUTH_REQ: u32 = 0x04;
    pub const AUTH_OK: u32 = 0x05;
    pub const ACK: u32 = 0x06;
    pub const GET_DRIVER_NAME: u32 = 0x10;
    pub const DRIVER_NAME: u32 = 0x11;
    pub const GET_DISPLAY_SIZE: u32 = 0x12;
    pub const DISPLAY_SIZE: u32 = 0x13;
    pub const ENTER_TTY: u32 = 0x20;
    pub const LEAVE_TTY: u32 = 0x22;
    pub const WRITE_TEXT: u32 = 0x23;
    pub const WRITE_DOTS: u32 = 0x24;
    pub const KEY_EVENT: u32 = 0x25;
    pub const ENTER_RAW: u32 = 0x30;
    pub const LEAVE_RAW: u32 = 0x31;
    pub const RAW_PACKET: u32 = 0x32;
    pub const SUSPEND: u32 = 0x33;
    pub const RESUME: u32 = 0x34;
    pub const SET_FOCUS: u32 = 0x40;
    pub const ERROR: u32 = 0x7F;
}

/// Authorization mechanisms a server may offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    None,
    KeyFile,
}

impl Mechanism {
    pub fn id(self) -> u32 {
        match self {
            Mechanism::None => 0,
            Mechanism::KeyFile => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Mechanism::None),
            1 => Some(Mechanism::KeyFile),
            _ => None,
        }
    }
}

/// Error codes carried by [`Packet::Error`]. The numeric values are part of
/// the wire format and never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    InvalidPacket,
    Unauthorized,
    DeviceBusy,
    NotInMode,
    BadParameter,
    DriverMismatch,
    UnsupportedVersion,
    IllegalInState,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 8] = [
        ErrorCode::InvalidPacket,
        ErrorCode::Unauthorized,
        ErrorCode::DeviceBusy,
        ErrorCode::NotInMode,
        ErrorCode::BadParameter,
        ErrorCode::DriverMismatch,
        ErrorCode::UnsupportedVersion,
        ErrorCode::IllegalInState,
    ];

    pub fn code(self) -> u32 {
        match self {
            ErrorCode::InvalidPacket => 1,
            ErrorCode::Unauthorized => 2,
            ErrorCode::DeviceBusy => 3,
            ErrorCode::NotInMode => 4,
            ErrorCode::BadParameter => 5,
            ErrorCode::DriverMismatch => 6,
            ErrorCode::UnsupportedVersion => 7,
            ErrorCode::IllegalInState => 8,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        ErrorCode::ALL.into_iter().find(|e| e.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorCode::InvalidPacket => "INVALID_PACKET",
            ErrorCode::Unauthorized => "UNAUTHORIZED",
            ErrorCode::DeviceBusy => "DEVICE_BUSY",
            ErrorCode::NotInMode => "NOT_IN_MODE",
            ErrorCode::BadParameter => "BAD_PARAMETER",
            ErrorCode::DriverMismatch => "DRIVER_MISMATCH",
            ErrorCode::UnsupportedVersion => "UNSUPPORTED_VERSION",
            ErrorCode::IllegalInState => "ILLEGAL_IN_STATE",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether a key event carries a translated command or a device keycode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyKind {
    Command,
    Raw,
}

/// One protocol message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Version {
        version: u32,
    },
    VersionAck {
        version: u32,
    },
    AuthOffer {
        mechanisms: Vec<Mechanism>,
    },
    AuthReq {
        mechanism: Mechanism,
        payload: Vec<u8>,
    },
    AuthOk,
    Ack {
        acked_type: u32,
    },
    GetDriverName,
    DriverName {
        name: String,
    },
    GetDisplaySize,
    DisplaySize {
        cols: u32,
        rows: u32,
    },
    EnterTty {
        path: FocusPath,
        key_mode: KeyMode,
    },
    LeaveTty,
    /// `cursor` is 0 for no cursor, otherwise a 1-based cell index.
    WriteText {
        cursor: u32,
        text: String,
    },
    WriteDots {
        cells: Vec<u8>,
    },
    KeyEvent {
        kind: KeyKind,
        code: u64,
        arg: u32,
    },
    EnterRaw {
        driver_name: String,
    },
    LeaveRaw,
    RawPacket {
        data: Vec<u8>,
    },
    Suspend {
        driver_name: String,
    },
    Resume,
    SetFocus {
        prefix: FocusPath,
        active_child: u32,
    },
    Error {
        code: ErrorCode,
        offending_type: u32,
    },
}

impl Packet {
    pub fn type_code(&self) -> u32 {
        match self {
            Packet::Version { .. } => code::VERSION,
            Packet::VersionAck { .. } => code::VERSION_ACK,
            Packet::AuthOffer { .. } => code::AUTH_OFFER,
            Packet::AuthReq { .. } => code::AUTH_REQ,
            Packet::AuthOk => code::AUTH_OK,
            Packet::Ack { .. } => code::ACK,
            Packet::GetDriverName => code::GET_DRIVER_NAME,
            Packet::DriverName { .. } => code::DRIVER_NAME,
            Packet::GetDisplaySize => code::GET_DISPLAY_SIZE,
            Packet::DisplaySize { .. } => code::DISPLAY_SIZE,
            Packet::EnterTty { .. } => code::ENTER_TTY,
            Packet::LeaveTty => code::LEAVE_TTY,
            Packet::WriteText { .. } => code::WRITE_TEXT,
            Packet::WriteDots { .. } => code::WRITE_DOTS,
            Packet::KeyEvent { .. } => code::KEY_EVENT,
            Packet::EnterRaw { .. } => code::ENTER_RAW,
            Packet::LeaveRaw => code::LEAVE_RAW,
            Packet::RawPacket { .. } => code::RAW_PACKET,
            Packet::Suspend { .. } => code::SUSPEND,
            Packet::Resume => code::RESUME,
            Packet::SetFocus { .. } => code::SET_FOCUS,
            Packet::Error { .. } => code::ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("{field} is {len} bytes long, the limit is {max}")]
    TooLong {
        field: &'static str,
        len: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeErrorKind {
    FrameTooLarge(usize),
    UnknownType,
    Truncated,
    TrailingBytes(usize),
    InvalidUtf8,
    TooLong { field: &'static str, len: usize },
    BadValue { field: &'static str, value: u64 },
    PathTooDeep(usize),
}

impl fmt::Display for DecodeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeErrorKind::FrameTooLarge(n) => {
                write!(f, "frame length {n} exceeds {MAX_FRAME_LEN}")
            }
            DecodeErrorKind::UnknownType => write!(f, "unknown type code"),
            DecodeErrorKind::Truncated => write!(f, "payload truncated"),
            DecodeErrorKind::TrailingBytes(n) => write!(f, "{n} unexpected trailing bytes"),
            DecodeErrorKind::InvalidUtf8 => write!(f, "text is not valid UTF-8"),
            DecodeErrorKind::TooLong { field, len } => write!(f, "{field} too long ({len})"),
            DecodeErrorKind::BadValue { field, value } => {
                write!(f, "invalid {field} value {value}")
            }
            DecodeErrorKind::PathTooDeep(d) => write!(f, "focus path depth {d}"),
        }
    }
}

/// A frame that could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad frame of type 0x{type_code:02x}: {kind}")]
pub struct DecodeError {
    pub type_code: u32,
    pub kind: DecodeErrorKind,
    /// Total size of the offending frame when its boundary is trustworthy,
    /// so that a reader can skip it and stay in sync.
    pub frame_len: Option<usize>,
}

/// Encodes `packet` as one complete frame.
pub fn encode_packet(packet: &Packet) -> Result<Vec<u8>, EncodeError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 16);
    buf.extend_from_slice(&[0; 4]);
    buf.extend_from_slice(&packet.type_code().to_be_bytes());
    encode_payload(packet, &mut buf)?;
    let len = (buf.len() - HEADER_LEN) as u32;
    buf[..4].copy_from_slice(&len.to_be_bytes());
    Ok(buf)
}

fn check_len(field: &'static str, len: usize, max: usize) -> Result<(), EncodeError> {
    if len > max {
        Err(EncodeError::TooLong { field, len, max })
    } else {
        Ok(())
    }
}

fn put_blob(
    buf: &mut Vec<u8>,
    field: &'static str,
    bytes: &[u8],
    max: usize,
) -> Result<(), EncodeError> {
    check_len(field, bytes.len(), max)?;
    buf.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    buf.extend_from_slice(bytes);
    Ok(())
}

fn put_path(buf: &mut Vec<u8>, path: &FocusPath) {
    buf.push(path.len() as u8);
    for e in path.as_slice() {
        buf.extend_from_slice(&e.to_be_bytes());
    }
}

fn encode_payload(packet: &Packet, buf: &mut Vec<u8>) -> Result<(), EncodeError> {
    match packet {
        Packet::Version { version } | Packet::VersionAck { version } => {
            buf.extend_from_slice(&version.to_be_bytes());
        }
        Packet::AuthOffer { mechanisms } => {
            check_len("mechanism list", mechanisms.len(), u8::MAX as usize)?;
            buf.push(mechanisms.len() as u8);
            for m in mechanisms {
                buf.extend_from_slice(&m.id().to_be_bytes());
            }
        }
        Packet::AuthReq { mechanism, payload } => {
            buf.extend_from_slice(&mechanism.id().to_be_bytes());
            put_blob(buf, "auth payload", payload, MAX_AUTH_PAYLOAD)?;
        }
        Packet::AuthOk
        | Packet::GetDriverName
        | Packet::GetDisplaySize
        | Packet::LeaveTty
        | Packet::LeaveRaw
        | Packet::Resume => {}
        Packet::Ack { acked_type } => buf.extend_from_slice(&acked_type.to_be_bytes()),
        Packet::DriverName { name: s }
        | Packet::EnterRaw { driver_name: s }
        | Packet::Suspend { driver_name: s } => {
            put_blob(buf, "driver name", s.as_bytes(), MAX_NAME_LEN)?;
        }
        Packet::DisplaySize { cols, rows } => {
            buf.extend_from_slice(&cols.to_be_bytes());
            buf.extend_from_slice(&rows.to_be_bytes());
        }
        Packet::EnterTty { path, key_mode } => {
            put_path(buf, path);
            buf.push(match key_mode {
                KeyMode::Commands => 0,
                KeyMode::Raw => 1,
            });
        }
        Packet::WriteText { cursor, text } => {
            buf.extend_from_slice(&cursor.to_be_bytes());
            put_blob(buf, "text", text.as_bytes(), MAX_DATA_LEN)?;
        }
        Packet::WriteDots { cells } => {
            check_len("dot cells", cells.len(), MAX_DATA_LEN)?;
            buf.extend_from_slice(&(cells.len() as u32).to_be_bytes());
            buf.extend_from_slice(cells);
        }
        Packet::KeyEvent { kind, code, arg } => {
            buf.push(match kind {
                KeyKind::Command => 0,
                KeyKind::Raw => 1,
            });
            buf.extend_from_slice(&code.to_be_bytes());
            buf.extend_from_slice(&arg.to_be_bytes());
        }
        Packet::RawPacket { data } => put_blob(buf, "raw packet", data, MAX_DATA_LEN)?,
        Packet::SetFocus {
            prefix,
            active_child,
        } => {
            put_path(buf, prefix);
            buf.extend_from_slice(&active_child.to_be_bytes());
        }
        Packet::Error {
            code,
            offending_type,
        } => {
            buf.extend_from_slice(&code.code().to_be_bytes());
            buf.extend_from_slice(&offending_type.to_be_bytes());
        }
    }
    Ok(())
}

/// Decodes the first frame in `buf`.
///
/// Returns `Ok(None)` when `buf` holds only part of a frame, otherwise the
/// packet and the number of bytes it occupied.
pub fn decode_frame(buf: &[u8]) -> Result<Option<(Packet, usize)>, DecodeError> {
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    let len = u32::from_be_bytes(buf[0..4].try_into().unwrap()) as usize;
    let type_code = u32::from_be_bytes(buf[4..8].try_into().unwrap());
    if len > MAX_FRAME_LEN {
        return Err(DecodeError {
            type_code,
            kind: DecodeErrorKind::FrameTooLarge(len),
            frame_len: None,
        });
    }
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Ok(None);
    }
    let payload = &buf[HEADER_LEN..total];
    decode_payload(type_code, payload)
        .map(|p| Some((p, total)))
        .map_err(|kind| DecodeError {
            type_code,
            kind,
            frame_len: Some(total),
        })
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeErrorKind> {
        if self.buf.len() < n {
            return Err(DecodeErrorKind::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, DecodeErrorKind> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeErrorKind> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeErrorKind> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeErrorKind> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn blob(&mut self, field: &'static str, max: usize) -> Result<&'a [u8], DecodeErrorKind> {
        let len = self.u16()? as usize;
        if len > max {
            return Err(DecodeErrorKind::TooLong { field, len });
        }
        self.take(len)
    }

    fn string(&mut self, field: &'static str, max: usize) -> Result<String, DecodeErrorKind> {
        let bytes = self.blob(field, max)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeErrorKind::InvalidUtf8)
    }

    fn path(&mut self) -> Result<FocusPath, DecodeErrorKind> {
        let depth = self.u8()? as usize;
        if depth > MAX_DEPTH {
            return Err(DecodeErrorKind::PathTooDeep(depth));
        }
        let elems = (0..depth)
            .map(|_| self.u32())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FocusPath::new(elems).expect("depth checked"))
    }

    fn finish(self) -> Result<(), DecodeErrorKind> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeErrorKind::TrailingBytes(self.buf.len()))
        }
    }
}

fn decode_payload(type_code: u32, payload: &[u8]) -> Result<Packet, DecodeErrorKind> {
    let mut r = Reader { buf: payload };
    let packet = match type_code {
        code::VERSION => Packet::Version { version: r.u32()? },
        code::VERSION_ACK => Packet::VersionAck { version: r.u32()? },
        code::AUTH_OFFER => {
            let count = r.u8()?;
            let mechanisms = (0..count)
                .map(|_| mechanism(r.u32()?))
                .collect::<Result<Vec<_>, _>>()?;
            Packet::AuthOffer { mechanisms }
        }
        code::AUTH_REQ => {
            let mechanism = mechanism(r.u32()?)?;
            let payload = r.blob("auth payload", MAX_AUTH_PAYLOAD)?.to_vec();
            Packet::AuthReq { mechanism, payload }
        }
        code::AUTH_OK => Packet::AuthOk,
        code::ACK => Packet::Ack {
            acked_type: r.u32()?,
        },
        code::GET_DRIVER_NAME => Packet::GetDriverName,
        code::DRIVER_NAME => Packet::DriverName {
            name: r.string("driver name", MAX_NAME_LEN)?,
        },
        code::GET_DISPLAY_SIZE => Packet::GetDisplaySize,
        code::DISPLAY_SIZE => Packet::DisplaySize {
            cols: r.u32()?,
            rows: r.u32()?,
        },
        code::ENTER_TTY => {
            let path = r.path()?;
            let key_mode = match r.u8()? {
                0 => KeyMode::Commands,
                1 => KeyMode::Raw,
                v => {
                    return Err(DecodeErrorKind::BadValue {
                        field: "key mode",
                        value: v.into(),
                    })
                }
            };
            Packet::EnterTty { path, key_mode }
        }
        code::LEAVE_TTY => Packet::LeaveTty,
        code::WRITE_TEXT => Packet::WriteText {
            cursor: r.u32()?,
            text: r.string("text", MAX_DATA_LEN)?,
        },
        code::WRITE_DOTS => {
            let count = r.u32()? as usize;
            if count > MAX_DATA_LEN {
                return Err(DecodeErrorKind::TooLong {
                    field: "dot cells",
                    len: count,
                });
            }
            Packet::WriteDots {
                cells: r.take(count)?.to_vec(),
            }
        }
        code::KEY_EVENT => {
            let kind = match r.u8()? {
                0 => KeyKind::Command,
                1 => KeyKind::Raw,
                v => {
                    return Err(DecodeErrorKind::BadValue {
                        field: "key kind",
                        value: v.into(),
                    })
                }
            };
            Packet::KeyEvent {
                kind,
                code: r.u64()?,
                arg: r.u32()?,
            }
        }
        code::ENTER_RAW => Packet::EnterRaw {
            driver_name: r.string("driver name", MAX_NAME_LEN)?,
        },
        code::LEAVE_RAW => Packet::LeaveRaw,
        code::RAW_PACKET => Packet::RawPacket {
            data: r.blob("raw packet", MAX_DATA_LEN)?.to_vec(),
        },
        code::SUSPEND => Packet::Suspend {
            driver_name: r.string("driver name", MAX_NAME_LEN)?,
        },
        code::RESUME => Packet::Resume,
        code::SET_FOCUS => Packet::SetFocus {
            prefix: r.path()?,
            active_child: r.u32()?,
        },
        code::ERROR => {
            let raw = r.u32()?;
            let code = ErrorCode::from_code(raw).ok_or(DecodeErrorKind::BadValue {
                field: "error code",
                value: raw.into(),
            })?;
            Packet::Error {
                code,
                offending_type: r.u32()?,
            }
        }
        _ => return Err(DecodeErrorKind::UnknownType),
    };
    r.finish()?;
    Ok(packet)
}

fn mechanism(id: u32) -> Result<Mechanism, DecodeErrorKind> {
    Mechanism::from_id(id).ok_or(DecodeErrorKind::BadValue {
        field: "mechanism",
        value: id.into(),
    })
}

/// Accumulates bytes from a stream and yields complete packets.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
}

impl FrameBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete packet, if any. A malformed frame with a known
    /// boundary is dropped from the buffer before its error is returned;
    /// an oversized header leaves the buffer untouched since the stream
    /// cannot be resynchronized.
    pub fn next_packet(&mut self) -> Result<Option<Packet>, DecodeError> {
        match decode_frame(&self.buf) {
            Ok(Some((packet, used))) => {
                self.buf.drain(..used);
                Ok(Some(packet))
            }
            Ok(None) => Ok(None),
            Err(e) => {
                if let Some(n) = e.frame_len {
                    self.buf.drain(..n);
                }
                Err(e)
            }
        }
    }
}
