//! Scripted simulated device.
//!
//! The driver writes an append-only, line-oriented log of everything that
//! reaches the device and takes injected key presses and device packets
//! from a command pipe (or an [`Injector`] handle in-process). Log lines:
//!
//! ```text
//! O                         driver opened
//! C                         driver closed
//! W <cursor> <cell>...      cells written; cursor 0 = none, cells as U+28xx hex
//! K <code>                  key injected, e.g. `K 0x01`
//! P <hex>                   device packet injected
//! S <hex>                   raw packet sent to the device
//! D <hex>                   packet emitted by the device in response
//! T done <len> <crc>        transfer received and stored
//! RAW on | RAW off          raw control taken or released
//! ```
//!
//! Raw packets are echoed back verbatim, except packets of the file
//! transfer protocol, which are answered by the receiver role and stored
//! beside the log (`<log stem>.received`).
//!
//! Config format, one `key = value` per line, `#` comments:
//!
//! ```text
//! name = simscript
//! cols = 40
//! rows = 1
//! raw = true
//! log = simscript.log
//! pipe = simscript.pipe
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

use thiserror::Error;

use super::{check_size, DeviceEvent, Driver, DriverError, DriverSpec, EventSink, KeyTable};
use crate::braille::{CellBuffer, CellPattern};
use crate::transfer::{self, Receiver, ReceiverStep, TransferPacket};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimScriptConfig {
    pub name: String,
    pub cols: u16,
    pub rows: u16,
    pub raw: bool,
    pub log: PathBuf,
    pub pipe: Option<PathBuf>,
}

impl Default for SimScriptConfig {
    fn default() -> Self {
        SimScriptConfig {
            name: "simscript".into(),
            cols: 40,
            rows: 1,
            raw: true,
            log: PathBuf::from("simscript.log"),
            pipe: None,
        }
    }
}

impl SimScriptConfig {
    /// Default config logging into `dir`.
    pub fn in_dir(dir: &Path) -> SimScriptConfig {
        SimScriptConfig {
            log: dir.join("simscript.log"),
            ..SimScriptConfig::default()
        }
    }

    /// Parses a config; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<SimScriptConfig, DriverError> {
        let mut cfg = SimScriptConfig::default();
        cfg.log = base.join(&cfg.log);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| DriverError::Config {
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let number = |v: &str| {
                v.parse::<u16>()
                    .ok()
                    .filter(|n| *n > 0)
                    .ok_or_else(|| err(format!("{key} must be a positive integer, got {v:?}")))
            };
            match key {
                "name" => cfg.name = value.to_owned(),
                "cols" => cfg.cols = number(value)?,
                "rows" => cfg.rows = number(value)?,
                "raw" => {
                    cfg.raw = match value {
                        "true" | "yes" | "1" => true,
                        "false" | "no" | "0" => false,
                        _ => return Err(err(format!("raw must be true or false, got {value:?}"))),
                    }
                }
                "log" => cfg.log = base.join(value),
                "pipe" => cfg.pipe = (!value.is_empty()).then(|| base.join(value)),
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SimScriptConfig, DriverError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        SimScriptConfig::parse(&text, base)
    }

    pub fn spec(&self) -> DriverSpec {
        DriverSpec {
            name: self.name.clone(),
            cols: self.cols,
            rows: self.rows,
            supports_raw: self.raw,
            keycodes: KeyTable::standard(self.cols).keycodes().collect(),
        }
    }
}

struct Inner {
    log: File,
    open: bool,
    receiver: Receiver,
}

struct Shared {
    inner: Mutex<Inner>,
    sink: EventSink,
}

impl Shared {
    fn log_line(inner: &mut Inner, line: &str) -> std::io::Result<()> {
        writeln!(inner.log, "{line}")?;
        inner.log.flush()
    }
}

/// The scripted simulated driver.
pub struct SimScript {
    spec: DriverSpec,
    keys: KeyTable,
    shared: Arc<Shared>,
    log_path: PathBuf,
    received_path: PathBuf,
}

impl SimScript {
    pub fn new(config: SimScriptConfig, sink: EventSink) -> Result<SimScript, DriverError> {
        let spec = config.spec();
        spec.validate()?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&config.log)?;
        let received_path = config.log.with_extension("received");
        let shared = Arc::new(Shared {
            inner: Mutex::new(Inner {
                log,
                open: false,
                receiver: Receiver::new(),
            }),
            sink,
        });
        let driver = SimScript {
            keys: KeyTable::standard(spec.cols),
            spec,
            shared,
            log_path: config.log,
            received_path,
        };
        if let Some(pipe) = &config.pipe {
            driver.start_pipe(pipe)?;
        }
        Ok(driver)
    }

    pub fn from_config_file(path: &Path, sink: EventSink) -> Result<SimScript, DriverError> {
        SimScript::new(SimScriptConfig::load(path)?, sink)
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    /// Where a completed file transfer is stored.
    pub fn received_path(&self) -> &Path {
        &self.received_path
    }

    pub fn injector(&self) -> Injector {
        Injector {
            shared: Arc::clone(&self.shared),
        }
    }

    fn start_pipe(&self, path: &Path) -> Result<(), DriverError> {
        make_fifo(path)?;
        // Opened read-write so that the reader never sees end-of-file when
        // a writer goes away.
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        let injector = self.injector();
        thread::Builder::new()
            .name("simscript-pipe".into())
            .spawn(move || {
                for line in BufReader::new(file).lines() {
                    let Ok(line) = line else { break };
                    if let Err(e) = injector.apply_command(&line) {
                        log::warn!("simscript pipe: {e}");
                    }
                }
            })?;
        Ok(())
    }

    fn with_inner<T>(
        &self,
        f: impl FnOnce(&mut Inner) -> Result<T, DriverError>,
    ) -> Result<T, DriverError> {
        let mut inner = self.shared.inner.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut inner)
    }

    fn handle_transfer(
        &self,
        inner: &mut Inner,
        packet: TransferPacket,
    ) -> Result<(), DriverError> {
        let reply = match inner.receiver.handle(packet) {
            ReceiverStep::Reply(reply) => reply,
            ReceiverStep::Finished { data, reply } => {
                std::fs::write(&self.received_path, &data)?;
                Shared::log_line(
                    inner,
                    &format!("T done {} {:08x}", data.len(), transfer::crc32(&data)),
                )?;
                reply
            }
            ReceiverStep::Ignored => return Ok(()),
        };
        self.emit(inner, reply.encode())
    }

    fn emit(&self, inner: &mut Inner, data: Vec<u8>) -> Result<(), DriverError> {
        Shared::log_line(inner, &format!("D {}", hex::encode(&data)))?;
        let _ = self.shared.sink.send(DeviceEvent::Packet(data));
        Ok(())
    }
}

impl Driver for SimScript {
    fn spec(&self) -> &DriverSpec {
        &self.spec
    }

    fn key_table(&self) -> &KeyTable {
        &self.keys
    }

    fn open(&mut self) -> Result<(), DriverError> {
        self.with_inner(|inner| {
            inner.open = true;
            inner.receiver = Receiver::new();
            Ok(Shared::log_line(inner, "O")?)
        })
    }

    fn close(&mut self) -> Result<(), DriverError> {
        self.with_inner(|inner| {
            if !inner.open {
                return Err(DriverError::NotOpen);
            }
            inner.open = false;
            Ok(Shared::log_line(inner, "C")?)
        })
    }

    fn is_open(&self) -> bool {
        self.shared.inner.lock().map(|i| i.open).unwrap_or(false)
    }

    fn write_cells(&mut self, cells: &CellBuffer) -> Result<(), DriverError> {
        check_size(&self.spec, cells)?;
        self.with_inner(|inner| {
            if !inner.open {
                return Err(DriverError::NotOpen);
            }
            Ok(Shared::log_line(inner, &write_line(cells))?)
        })
    }

    fn send_packet(&mut self, data: &[u8]) -> Result<(), DriverError> {
        if !self.spec.supports_raw {
            return Err(DriverError::RawUnsupported);
        }
        let shared = Arc::clone(&self.shared);
        let mut inner = shared.inner.lock().unwrap_or_else(|e| e.into_inner());
        if !inner.open {
            return Err(DriverError::NotOpen);
        }
        Shared::log_line(&mut inner, &format!("S {}", hex::encode(data)))?;
        if transfer::is_transfer_packet(data) {
            match TransferPacket::decode(data) {
                Ok(packet) => self.handle_transfer(&mut inner, packet),
                Err(e) => {
                    log::debug!("simscript: malformed transfer packet: {e}");
                    Ok(())
                }
            }
        } else {
            self.emit(&mut inner, data.to_vec())
        }
    }

    fn set_raw_mode(&mut self, on: bool) {
        let _ = self.with_inner(|inner| {
            Ok(Shared::log_line(
                inner,
                if on { "RAW on" } else { "RAW off" },
            )?)
        });
    }
}

/// Formats the log line for one write.
pub fn write_line(cells: &CellBuffer) -> String {
    let mut line = format!("W {}", cells.cursor().unwrap_or(0));
    for c in cells.cells() {
        line.push_str(&format!(" {:04X}", u32::from(c.to_unicode())));
    }
    line
}

/// Handle for feeding device-side events into a running [`SimScript`].
#[derive(Clone)]
pub struct Injector {
    shared: Arc<Shared>,
}

impl Injector {
    /// Simulates a key press. Returns false, logging nothing, when the
    /// driver is closed.
    pub fn key(&self, code: u64) -> bool {
        let mut inner = self.shared.inner.lock().unwrap_or_else(|e| e.into_inner());
        if !inner.open {
            return false;
        }
        if Shared::log_line(&mut inner, &format!("K {code:#04x}")).is_err() {
            return false;
        }
        self.shared.sink.send(DeviceEvent::Key(code)).is_ok()
    }

    /// Simulates a packet arriving from the device.
    pub fn packet(&self, data: Vec<u8>) -> bool {
        let mut inner = self.shared.inner.lock().unwrap_or_else(|e| e.into_inner());
        if !inner.open {
            return false;
        }
        if Shared::log_line(&mut inner, &format!("P {}", hex::encode(&data))).is_err() {
            return false;
        }
        self.shared.sink.send(DeviceEvent::Packet(data)).is_ok()
    }

    /// Applies one command pipe line: `key <hex>` or `packet <hex bytes>`.
    pub fn apply_command(&self, line: &str) -> Result<(), String> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(());
        }
        let (verb, arg) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match verb {
            "key" => {
                let code =
                    parse_hex_u64(arg.trim()).ok_or_else(|| format!("bad keycode {arg:?}"))?;
                self.key(code);
                Ok(())
            }
            "packet" => {
                let compact: String = arg.split_whitespace().collect();
                let data = hex::decode(&compact).map_err(|e| format!("bad packet {arg:?}: {e}"))?;
                self.packet(data);
                Ok(())
            }
            _ => Err(format!("unknown command {line:?}")),
        }
    }
}

fn parse_hex_u64(s: &str) -> Option<u64> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    u64::from_str_radix(digits, 16).ok()
}

fn make_fifo(path: &Path) -> Result<(), DriverError> {
    use std::os::unix::ffi::OsStrExt;
    use std::os::unix::fs::FileTypeExt;

    match std::fs::metadata(path) {
        Ok(meta) if meta.file_type().is_fifo() => return Ok(()),
        Ok(_) => {
            return Err(DriverError::Config {
                line: 0,
                message: format!("{} exists and is not a pipe", path.display()),
            })
        }
        Err(_) => {}
    }
    let cpath = std::ffi::CString::new(path.as_os_str().as_bytes())
        .map_err(|_| std::io::Error::from(std::io::ErrorKind::InvalidInput))?;
    // SAFETY: cpath is a valid NUL-terminated string.
    if unsafe { libc::mkfifo(cpath.as_ptr(), 0o600) } != 0 {
        return Err(std::io::Error::last_os_error().into());
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log line {line}: {source}")]
    Driver { line: usize, source: DriverError },
}

/// Re-applies a recorded log to `driver`. Lines the driver derives by
/// itself (`D`, `T`) are skipped since replaying their causes recreates
/// them.
pub fn replay(log: &str, driver: &mut SimScript) -> Result<(), ReplayError> {
    let injector = driver.injector();
    for (idx, line) in log.lines().enumerate() {
        let n = idx + 1;
        let parse = |message: String| ReplayError::Parse { line: n, message };
        let drv = |source| ReplayError::Driver { line: n, source };
        let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
        match tag {
            "O" => driver.open().map_err(drv)?,
            "C" => driver.close().map_err(drv)?,
            "W" => {
                let mut fields = rest.split_whitespace();
                let cursor: u32 = fields
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse("bad cursor".into()))?;
                let cells = fields
                    .map(|f| {
                        u32::from_str_radix(f, 16)
                            .ok()
                            .and_then(char::from_u32)
                            .and_then(CellPattern::from_unicode)
                            .ok_or_else(|| parse(format!("bad cell {f:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let spec = driver.spec();
                let buf = CellBuffer::from_cells(
                    spec.cols,
                    spec.rows,
                    cells,
                    (cursor != 0).then_some(cursor),
                )
                .map_err(|e| parse(e.to_string()))?;
                driver.write_cells(&buf).map_err(drv)?;
            }
            "K" => {
                let code = parse_hex_u64(rest).ok_or_else(|| parse(format!("bad key {rest:?}")))?;
                injector.key(code);
            }
            "P" => {
                injector.packet(hex::decode(rest).map_err(|e| parse(e.to_string()))?);
            }
            "S" => {
                let data = hex::decode(rest).map_err(|e| parse(e.to_string()))?;
                driver.send_packet(&data).map_err(drv)?;
            }
            "RAW" => driver.set_raw_mode(rest == "on"),
            "D" | "T" => {}
            _ => return Err(parse(format!("unknown tag {tag:?}"))),
        }
    }
    Ok(())
}
