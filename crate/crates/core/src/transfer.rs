//! Packets of the raw-mode file transfer protocol used by `bxfer`.
//!
//! Each packet is the payload of one raw device packet and starts with the
//! four magic bytes `BXF1`, followed by a kind byte:
//!
//! ```text
//! Hello  BXF1 00
//! Data   BXF1 01 seq:u32 len:u16 bytes
//! AckSeq BXF1 02 seq:u32
//! Done   BXF1 03 crc:u32
//! ```
//!
//! The sender opens with Hello and waits for the device to answer Hello.
//! Data packets go out one at a time, each acknowledged by an AckSeq with
//! the same sequence number. Done carries the CRC-32 of the whole file; the
//! device answers with Done carrying the CRC-32 of what it received.

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"BXF1";
pub const MAX_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransferPacket {
    Hello,
    Data { seq: u32, bytes: Vec<u8> },
    AckSeq { seq: u32 },
    Done { crc32: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransferError {
    #[error("not a transfer packet")]
    NoMagic,
    #[error("unknown transfer packet kind {0}")]
    UnknownKind(u8),
    #[error("truncated or oversized transfer packet")]
    Malformed,
}

/// True when `data` begins with the transfer magic.
pub fn is_transfer_packet(data: &[u8]) -> bool {
    data.starts_with(MAGIC)
}

/// Standard CRC-32 (IEEE polynomial, reflected).
pub fn crc32(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}

impl TransferPacket {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        match self {
            TransferPacket::Hello => out.push(0),
            TransferPacket::Data { seq, bytes } => {
                assert!(bytes.len() <= MAX_CHUNK, "transfer chunk too large");
                out.push(1);
                out.extend_from_slice(&seq.to_be_bytes());
                out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
                out.extend_from_slice(bytes);
            }
            TransferPacket::AckSeq { seq } => {
                out.push(2);
                out.extend_from_slice(&seq.to_be_bytes());
            }
            TransferPacket::Done { crc32 } => {
                out.push(3);
                out.extend_from_slice(&crc32.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(data: &[u8]) -> Result<TransferPacket, TransferError> {
        let rest = data.strip_prefix(MAGIC).ok_or(TransferError::NoMagic)?;
        let (&kind, body) = rest.split_first().ok_or(TransferError::Malformed)?;
        let u32_at = |b: &[u8]| -> Result<u32, TransferError> {
            b.get(..4)
                .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
                .ok_or(TransferError::Malformed)
        };
        let exact = |b: &[u8], n: usize| {
            if b.len() == n {
                Ok(())
            } else {
                Err(TransferError::Malformed)
            }
        };
        match kind {
            0 => exact(body, 0).map(|_| TransferPacket::Hello),
            1 => {
                let seq = u32_at(body)?;
                let len = body
                    .get(4..6)
                    .map(|s| u16::from_be_bytes([s[0], s[1]]) as usize)
                    .ok_or(TransferError::Malformed)?;
                if len > MAX_CHUNK {
                    return Err(TransferError::Malformed);
                }
                exact(body, 6 + len)?;
                Ok(TransferPacket::Data {
                    seq,
                    bytes: body[6..].to_vec(),
                })
            }
            2 => {
                exact(body, 4)?;
                Ok(TransferPacket::AckSeq { seq: u32_at(body)? })
            }
            3 => {
                exact(body, 4)?;
                Ok(TransferPacket::Done {
                    crc32: u32_at(body)?,
                })
            }
            k => Err(TransferError::UnknownKind(k)),
        }
    }
}

/// Device side of the protocol, as played by the simscript driver.
#[derive(Debug, Default)]
pub struct Receiver {
    expected_seq: u32,
    data: Vec<u8>,
    started: bool,
}

/// What the receiver did with one packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiverStep {
    Reply(TransferPacket),
    /// Transfer finished; the file content and the reply to send.
    Finished {
        data: Vec<u8>,
        reply: TransferPacket,
    },
    Ignored,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn handle(&mut self, packet: TransferPacket) -> ReceiverStep {
        match packet {
            TransferPacket::Hello => {
                *self = Receiver {
                    started: true,
                    ..Receiver::default()
                };
                ReceiverStep::Reply(TransferPacket::Hello)
            }
            TransferPacket::Data { seq, bytes } if self.started => {
                if seq == self.expected_seq {
                    self.data.extend_from_slice(&bytes);
                    self.expected_seq += 1;
                    ReceiverStep::Reply(TransferPacket::AckSeq { seq })
                } else if seq.wrapping_add(1) == self.expected_seq {
                    // duplicate of the last chunk; acknowledge again
                    ReceiverStep::Reply(TransferPacket::AckSeq { seq })
                } else {
                    ReceiverStep::Ignored
                }
            }
            TransferPacket::Done { .. } if self.started => {
                let data = std::mem::take(&mut self.data);
                *self = Receiver::default();
                let reply = TransferPacket::Done {
                    crc32: crc32(&data),
                };
                ReceiverStep::Finished { data, reply }
            }
            _ => ReceiverStep::Ignored,
        }
    }
}
