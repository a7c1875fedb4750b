use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Device-independent navigation commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    LineUp,
    LineDown,
    PanLeft,
    PanRight,
    Home,
    Top,
    Bottom,
    /// Routing key above the given 0-based cell.
    Route(u16),
}

impl Command {
    /// Command code carried in a `KeyEvent` of kind command. `Route` passes
    /// its cell index in the event's `arg`.
    pub fn code(self) -> u64 {
        match self {
            Command::LineUp => 0x01,
            Command::LineDown => 0x02,
            Command::PanLeft => 0x03,
            Command::PanRight => 0x04,
            Command::Home => 0x05,
            Command::Top => 0x06,
            Command::Bottom => 0x07,
            Command::Route(_) => 0x08,
        }
    }

    pub fn arg(self) -> u32 {
        match self {
            Command::Route(i) => i.into(),
            _ => 0,
        }
    }

    pub fn from_code(code: u64, arg: u32) -> Option<Command> {
        Some(match code {
            0x01 => Command::LineUp,
            0x02 => Command::LineDown,
            0x03 => Command::PanLeft,
            0x04 => Command::PanRight,
            0x05 => Command::Home,
            0x06 => Command::Top,
            0x07 => Command::Bottom,
            0x08 => Command::Route(u16::try_from(arg).ok()?),
            _ => return None,
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Route(i) => write!(f, "Route {i}"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Translated {
    Command(Command),
    Unmapped(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyTableError {
    #[error("keycode {0:#x} is both mapped and inside the routing range")]
    Overlap(u64),
    #[error("routing range overflows u64")]
    RangeOverflow,
}

/// Per-driver mapping from device keycodes to commands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyTable {
    map: BTreeMap<u64, Command>,
    routing: Option<(u64, u16)>,
}

impl KeyTable {
    /// `routing` is `(base, cols)`: keycodes `base..base + cols` become
    /// `Route(0..cols)`.
    pub fn new(
        map: BTreeMap<u64, Command>,
        routing: Option<(u64, u16)>,
    ) -> Result<KeyTable, KeyTableError> {
        if let Some((base, cols)) = routing {
            base.checked_add(cols.into())
                .ok_or(KeyTableError::RangeOverflow)?;
            if let Some((&code, _)) = map.range(base..base + u64::from(cols)).next() {
                return Err(KeyTableError::Overlap(code));
            }
        }
        Ok(KeyTable { map, routing })
    }

    /// The table shared by the simulated drivers.
    pub fn standard(cols: u16) -> KeyTable {
        let map = [
            (0x01, Command::LineUp),
            (0x02, Command::LineDown),
            (0x03, Command::PanLeft),
            (0x04, Command::PanRight),
            (0x05, Command::Home),
            (0x06, Command::Top),
            (0x07, Command::Bottom),
        ]
        .into_iter()
        .collect();
        KeyTable::new(map, Some((0x100, cols))).expect("standard table is disjoint")
    }

    pub fn translate(&self, code: u64) -> Translated {
        if let Some(cmd) = self.map.get(&code) {
            return Translated::Command(*cmd);
        }
        if let Some((base, cols)) = self.routing {
            if let Some(off) = code.checked_sub(base) {
                if off < u64::from(cols) {
                    return Translated::Command(Command::Route(off as u16));
                }
            }
        }
        Translated::Unmapped(code)
    }

    /// Every keycode this table maps.
    pub fn keycodes(&self) -> impl Iterator<Item = u64> + '_ {
        let routing = self
            .routing
            .map(|(base, cols)| base..base + u64::from(cols))
            .unwrap_or(0..0);
        self.map.keys().copied().chain(routing)
    }
}
