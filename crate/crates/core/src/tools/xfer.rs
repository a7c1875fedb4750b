//! Sender side of the raw-mode file transfer.

use std::time::Duration;

use thiserror::Error;

use crate::client::{ClientError, Connection};
use crate::proto::ErrorCode;
use crate::transfer::{crc32, TransferPacket, MAX_CHUNK};

/// Retransmissions of one packet before giving up.
const RETRIES: usize = 3;

#[derive(Debug, Error)]
pub enum XferError {
    #[error("device is busy")]
    Busy,
    #[error("checksum mismatch: sent {local:08x}, device has {remote:08x}")]
    CrcMismatch { local: u32, remote: u32 },
    #[error("device did not answer")]
    NoAnswer,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl XferError {
    pub fn exit_code(&self) -> i32 {
        match self {
            XferError::Busy => 3,
            XferError::CrcMismatch { .. } => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub bytes: usize,
    pub chunks: usize,
    pub crc32: u32,
}

/// Sends `data` to the device in raw mode, one chunk at a time.
pub fn send(conn: &Connection, data: &[u8], timeout: Duration) -> Result<Report, XferError> {
    let name = conn.driver_name()?;
    match conn.enter_raw_mode(&name) {
        Ok(()) => {}
        Err(e) if e.server_code() == Some(ErrorCode::DeviceBusy) => return Err(XferError::Busy),
        Err(e) => return Err(e.into()),
    }
    let result = transfer(conn, data, timeout);
    let left = conn.leave_raw_mode();
    let report = result?;
    left?;
    Ok(report)
}

fn transfer(conn: &Connection, data: &[u8], timeout: Duration) -> Result<Report, XferError> {
    exchange(conn, &TransferPacket::Hello, timeout, |p| {
        matches!(p, TransferPacket::Hello).then_some(())
    })?;
    let mut chunks = 0;
    for (seq, chunk) in data.chunks(MAX_CHUNK).enumerate() {
        let seq = seq as u32;
        let packet = TransferPacket::Data {
            seq,
            bytes: chunk.to_vec(),
        };
        exchange(conn, &packet, timeout, |p| {
            matches!(p, TransferPacket::AckSeq { seq: s } if *s == seq).then_some(())
        })?;
        chunks += 1;
    }
    let local = crc32(data);
    let remote = exchange(
        conn,
        &TransferPacket::Done { crc32: local },
        timeout,
        |p| match p {
            TransferPacket::Done { crc32 } => Some(*crc32),
            _ => None,
        },
    )?;
    if remote != local {
        return Err(XferError::CrcMismatch { local, remote });
    }
    Ok(Report {
        bytes: data.len(),
        chunks,
        crc32: local,
    })
}

/// Sends `packet` and waits for a reply `accept` recognizes, resending on
/// timeout. Unrelated device packets are skipped.
fn exchange<T>(
    conn: &Connection,
    packet: &TransferPacket,
    timeout: Duration,
    accept: impl Fn(&TransferPacket) -> Option<T>,
) -> Result<T, XferError> {
    let frame = packet.encode();
    for _ in 0..RETRIES {
        conn.send_raw(&frame)?;
        loop {
            match conn.recv_raw(timeout) {
                Ok(bytes) => {
                    if let Some(v) = TransferPacket::decode(&bytes)
                        .ok()
                        .as_ref()
                        .and_then(&accept)
                    {
                        return Ok(v);
                    }
                }
                Err(ClientError::TimedOut) => break,
                Err(e) => return Err(e.into()),
            }
        }
    }
    Err(XferError::NoAnswer)
}
