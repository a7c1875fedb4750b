//! Terminal emulator driver for humans.
//!
//! Each write is drawn as one line of Unicode braille characters with the
//! cursor cell underlined. Keys typed at the terminal become device
//! keycodes: arrows, Home, PgUp and PgDn for navigation and the digits
//! 1..9 for the first nine routing keys. Ctrl-C quits.

use std::io::{IsTerminal, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use crossterm::event::{self, Event, KeyCode, KeyEvent, KeyEventKind, KeyModifiers};
use crossterm::terminal;

use super::{check_size, DeviceEvent, Driver, DriverError, DriverSpec, EventSink, KeyTable};
use crate::braille::CellBuffer;

const UNDERLINE_ON: &str = "\x1b[4m";
const UNDERLINE_OFF: &str = "\x1b[24m";

/// Device keycode bound to a terminal key.
pub fn key_binding(code: KeyCode) -> Option<u64> {
    match code {
        KeyCode::Up => Some(0x01),
        KeyCode::Down => Some(0x02),
        KeyCode::Left => Some(0x03),
        KeyCode::Right => Some(0x04),
        KeyCode::Home => Some(0x05),
        KeyCode::PageUp => Some(0x06),
        KeyCode::PageDown => Some(0x07),
        KeyCode::Char(c @ '1'..='9') => Some(0x100 + u64::from(c as u8 - b'1')),
        _ => None,
    }
}

/// The text drawn for one write, without terminal line control.
pub fn render_line(cells: &CellBuffer) -> String {
    let mut out = String::new();
    for (i, cell) in cells.cells().iter().enumerate() {
        if i > 0 && i % usize::from(cells.cols()) == 0 {
            out.push(' ');
        }
        if cells.cursor() == Some(i as u32 + 1) {
            out.push_str(UNDERLINE_ON);
            out.push(cell.to_unicode());
            out.push_str(UNDERLINE_OFF);
        } else {
            out.push(cell.to_unicode());
        }
    }
    out
}

pub struct SimTerm {
    spec: DriverSpec,
    keys: KeyTable,
    sink: EventSink,
    open: Arc<AtomicBool>,
    input_started: bool,
}

impl SimTerm {
    pub fn new(name: &str, cols: u16, rows: u16, sink: EventSink) -> Result<SimTerm, DriverError> {
        let keys = KeyTable::standard(cols);
        let spec = DriverSpec {
            name: name.to_owned(),
            cols,
            rows,
            supports_raw: false,
            keycodes: keys.keycodes().collect(),
        };
        spec.validate()?;
        Ok(SimTerm {
            spec,
            keys,
            sink,
            open: Arc::new(AtomicBool::new(false)),
            input_started: false,
        })
    }

    fn start_input(&mut self) -> Result<(), DriverError> {
        if self.input_started {
            return Ok(());
        }
        let open = Arc::clone(&self.open);
        let sink = self.sink.clone();
        thread::Builder::new()
            .name("simterm-input".into())
            .spawn(move || {
                while let Ok(ev) = event::read() {
                    let Event::Key(KeyEvent {
                        code,
                        modifiers,
                        kind: KeyEventKind::Press,
                        ..
                    }) = ev
                    else {
                        continue;
                    };
                    if code == KeyCode::Char('c') && modifiers.contains(KeyModifiers::CONTROL) {
                        let _ = terminal::disable_raw_mode();
                        println!();
                        std::process::exit(130);
                    }
                    if !open.load(Ordering::SeqCst) {
                        continue;
                    }
                    if let Some(k) = key_binding(code) {
                        if sink.send(DeviceEvent::Key(k)).is_err() {
                            break;
                        }
                    }
                }
            })?;
        self.input_started = true;
        Ok(())
    }
}

impl Driver for SimTerm {
    fn spec(&self) -> &DriverSpec {
        &self.spec
    }

    fn key_table(&self) -> &KeyTable {
        &self.keys
    }

    fn open(&mut self) -> Result<(), DriverError> {
        if !std::io::stdin().is_terminal() || !std::io::stdout().is_terminal() {
            return Err(DriverError::NotATty);
        }
        terminal::enable_raw_mode()?;
        self.open.store(true, Ordering::SeqCst);
        self.start_input()
    }

    fn close(&mut self) -> Result<(), DriverError> {
        if !self.open.swap(false, Ordering::SeqCst) {
            return Err(DriverError::NotOpen);
        }
        terminal::disable_raw_mode()?;
        let mut out = std::io::stdout();
        write!(out, "\r\x1b[2K(suspended)")?;
        out.flush()?;
        Ok(())
    }

    fn is_open(&self) -> bool {
        self.open.load(Ordering::SeqCst)
    }

    fn write_cells(&mut self, cells: &CellBuffer) -> Result<(), DriverError> {
        check_size(&self.spec, cells)?;
        if !self.is_open() {
            return Err(DriverError::NotOpen);
        }
        let mut out = std::io::stdout();
        write!(out, "\r\x1b[2K{}", render_line(cells))?;
        out.flush()?;
        Ok(())
    }

    fn send_packet(&mut self, _data: &[u8]) -> Result<(), DriverError> {
        Err(DriverError::RawUnsupported)
    }
}

impl Drop for SimTerm {
    fn drop(&mut self) {
        if self.open.load(Ordering::SeqCst) {
            let _ = terminal::disable_raw_mode();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::braille::CellPattern;

    #[test]
    fn blank_renders_as_blank_braille() {
        assert_eq!(
            render_line(&CellBuffer::blank(4, 1)),
            "\u{2800}\u{2800}\u{2800}\u{2800}"
        );
    }

    #[test]
    fn cells_render_as_unicode() {
        let buf =
            CellBuffer::from_cells(2, 1, vec![CellPattern(0x01), CellPattern(0xFF)], None).unwrap();
        assert_eq!(render_line(&buf), "⠁⣿");
    }

    #[test]
    fn cursor_is_underlined() {
        let buf = CellBuffer::from_cells(2, 1, vec![CellPattern(0x01), CellPattern(0x03)], Some(2))
            .unwrap();
        assert_eq!(render_line(&buf), "⠁\x1b[4m⠃\x1b[24m");
    }

    #[test]
    fn bindings() {
        assert_eq!(key_binding(KeyCode::Up), Some(0x01));
        assert_eq!(key_binding(KeyCode::Down), Some(0x02));
        assert_eq!(key_binding(KeyCode::Left), Some(0x03));
        assert_eq!(key_binding(KeyCode::Right), Some(0x04));
        assert_eq!(key_binding(KeyCode::Home), Some(0x05));
        assert_eq!(key_binding(KeyCode::PageUp), Some(0x06));
        assert_eq!(key_binding(KeyCode::PageDown), Some(0x07));
        assert_eq!(key_binding(KeyCode::Char('1')), Some(0x100));
        assert_eq!(key_binding(KeyCode::Char('9')), Some(0x108));
        assert_eq!(key_binding(KeyCode::Char('0')), None);
        assert_eq!(key_binding(KeyCode::Char('a')), None);
    }

    #[test]
    fn open_without_terminal_fails() {
        if std::io::stdin().is_terminal() && std::io::stdout().is_terminal() {
            return;
        }
        let (tx, _rx) = std::sync::mpsc::channel();
        let mut d = SimTerm::new("simterm", 4, 1, tx).unwrap();
        assert!(matches!(d.open(), Err(DriverError::NotATty)));
    }
}
