//! Device abstraction.
//!
//! The daemon drives exactly one [`Driver`]. A driver displays cell buffers
//! and reports key presses; raw-capable drivers also exchange opaque device
//! packets. Events flow back to the daemon through an [`EventSink`].

use std::collections::BTreeSet;
use std::sync::mpsc;

use thiserror::Error;

use crate::braille::CellBuffer;
use crate::proto::{MAX_DATA_LEN, MAX_NAME_LEN};

mod keys;
pub mod simscript;
pub mod simterm;

pub use keys::{Command, KeyTable, KeyTableError, Translated};

/// Something the device did on its own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceEvent {
    Key(u64),
    Packet(Vec<u8>),
}

pub type EventSink = mpsc::Sender<DeviceEvent>;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("driver is not open")]
    NotOpen,
    #[error("driver does not support raw packets")]
    RawUnsupported,
    #[error("display is {expected_cols}x{expected_rows}, buffer is {cols}x{rows}")]
    SizeMismatch {
        expected_cols: u16,
        expected_rows: u16,
        cols: u16,
        rows: u16,
    },
    #[error("not attached to a terminal")]
    NotATty,
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid driver spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Static description of a device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriverSpec {
    pub name: String,
    pub cols: u16,
    pub rows: u16,
    pub supports_raw: bool,
    pub keycodes: BTreeSet<u64>,
}

impl DriverSpec {
    pub fn validate(&self) -> Result<(), DriverError> {
        if self.name.is_empty() || self.name.len() > MAX_NAME_LEN {
            return Err(DriverError::Spec(format!(
                "name must be 1..={MAX_NAME_LEN} bytes"
            )));
        }
        if self.cols == 0 || self.rows == 0 {
            return Err(DriverError::Spec("display needs at least one cell".into()));
        }
        if usize::from(self.cols) * usize::from(self.rows) > MAX_DATA_LEN {
            return Err(DriverError::Spec(format!(
                "{}x{} exceeds {MAX_DATA_LEN} cells",
                self.cols, self.rows
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        usize::from(self.cols) * usize::from(self.rows)
    }
}

/// One braille device.
///
/// `write_cells` and `send_packet` are only legal while the driver is
/// open, and a closed driver emits no events.
pub trait Driver: Send {
    fn spec(&self) -> &DriverSpec;

    fn key_table(&self) -> &KeyTable;

    fn open(&mut self) -> Result<(), DriverError>;

    fn close(&mut self) -> Result<(), DriverError>;

    fn is_open(&self) -> bool;

    fn write_cells(&mut self, cells: &CellBuffer) -> Result<(), DriverError>;

    /// Sends one device packet. Drivers without raw support return
    /// [`DriverError::RawUnsupported`].
    fn send_packet(&mut self, data: &[u8]) -> Result<(), DriverError>;

    /// Told when a client takes or releases raw control.
    fn set_raw_mode(&mut self, _on: bool) {}
}

pub(crate) fn check_size(spec: &DriverSpec, cells: &CellBuffer) -> Result<(), DriverError> {
    if cells.cols() != spec.cols || cells.rows() != spec.rows {
        return Err(DriverError::SizeMismatch {
            expected_cols: spec.cols,
            expected_rows: spec.rows,
            cols: cells.cols(),
            rows: cells.rows(),
        });
    }
    Ok(())
}
