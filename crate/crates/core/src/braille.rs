//! Braille cells, display buffers and character tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// The table shipped with the daemon, covering printable ASCII.
pub const DEFAULT_TABLE: &str = include_str!("../tables/default.tbl");

/// One 8-dot braille cell. Bit `i - 1` is set when dot `i` is raised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellPattern(pub u8);

impl CellPattern {
    pub const BLANK: CellPattern = CellPattern(0x00);
    pub const FULL: CellPattern = CellPattern(0xFF);

    /// Builds a cell from dot numbers in `1..=8`.
    pub fn from_dots(dots: &[u8]) -> Option<CellPattern> {
        dots.iter()
            .try_fold(0u8, |acc, &d| match d {
                1..=8 => Some(acc | 1 << (d - 1)),
                _ => None,
            })
            .map(CellPattern)
    }

    /// Raised dot numbers in ascending order.
    pub fn dots(self) -> impl Iterator<Item = u8> {
        (1..=8u8).filter(move |d| self.0 & (1 << (d - 1)) != 0)
    }

    /// The character in the Unicode braille block (U+2800..U+28FF) showing
    /// this cell. The block uses the same dot-to-bit assignment.
    pub fn to_unicode(self) -> char {
        char::from_u32(0x2800 + u32::from(self.0)).expect("braille block is assigned")
    }

    pub fn from_unicode(c: char) -> Option<CellPattern> {
        let v = u32::from(c).checked_sub(0x2800)?;
        u8::try_from(v).ok().map(CellPattern)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BufferError {
    #[error("cursor {cursor} is outside a display of {cells} cells")]
    BadCursor { cursor: u32, cells: usize },
    #[error("expected {expected} cells, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("display must have at least one column and one row")]
    EmptyDisplay,
}

/// A rectangular display image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellBuffer {
    cols: u16,
    rows: u16,
    cells: Vec<CellPattern>,
    cursor: Option<u32>,
}

impl CellBuffer {
    pub fn blank(cols: u16, rows: u16) -> CellBuffer {
        CellBuffer {
            cols,
            rows,
            cells: vec![CellPattern::BLANK; usize::from(cols) * usize::from(rows)],
            cursor: None,
        }
    }

    pub fn from_cells(
        cols: u16,
        rows: u16,
        cells: Vec<CellPattern>,
        cursor: Option<u32>,
    ) -> Result<CellBuffer, BufferError> {
        let expected = usize::from(cols) * usize::from(rows);
        if expected == 0 {
            return Err(BufferError::EmptyDisplay);
        }
        if cells.len() != expected {
            return Err(BufferError::WrongLength {
                expected,
                got: cells.len(),
            });
        }
        if let Some(c) = cursor {
            if c == 0 || c as usize > expected {
                return Err(BufferError::BadCursor {
                    cursor: c,
                    cells: expected,
                });
            }
        }
        Ok(CellBuffer {
            cols,
            rows,
            cells,
            cursor,
        })
    }

    pub fn cols(&self) -> u16 {
        self.cols
    }

    pub fn rows(&self) -> u16 {
        self.rows
    }

    pub fn cells(&self) -> &[CellPattern] {
        &self.cells
    }

    /// 1-based cursor cell, if shown.
    pub fn cursor(&self) -> Option<u32> {
        self.cursor
    }

    pub fn is_blank(&self) -> bool {
        self.cursor.is_none() && self.cells.iter().all(|c| *c == CellPattern::BLANK)
    }

    /// Copy of this buffer resized to `cols` x `rows`: cells outside the
    /// original area are blank, cells outside the new area are dropped.
    pub fn resized(&self, cols: u16, rows: u16) -> CellBuffer {
        let mut out = CellBuffer::blank(cols, rows);
        for r in 0..self.rows.min(rows) as usize {
            for c in 0..self.cols.min(cols) as usize {
                out.cells[r * cols as usize + c] = self.cells[r * self.cols as usize + c];
            }
        }
        out.cursor = self.cursor.and_then(|cur| {
            let idx = cur as usize - 1;
            let (r, c) = (idx / self.cols as usize, idx % self.cols as usize);
            (r < rows as usize && c < cols as usize).then(|| (r * cols as usize + c + 1) as u32)
        });
        out
    }

    /// The cells as a string of Unicode braille characters.
    pub fn to_unicode(&self) -> String {
        self.cells.iter().map(|c| c.to_unicode()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct TableParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum TableLoadError {
    #[error("reading table {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("table {path}: {source}")]
    Parse {
        path: String,
        source: TableParseError,
    },
}

/// Maps characters to cells. Unmapped characters render as the fallback
/// cell, all eight dots by default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrailleTable {
    entries: BTreeMap<char, CellPattern>,
    fallback: CellPattern,
}

impl Default for BrailleTable {
    fn default() -> Self {
        BrailleTable::parse(DEFAULT_TABLE).expect("shipped table parses")
    }
}

impl BrailleTable {
    pub fn empty() -> BrailleTable {
        BrailleTable {
            entries: BTreeMap::new(),
            fallback: CellPattern::FULL,
        }
    }

    pub fn fallback(&self) -> CellPattern {
        self.fallback
    }

    pub fn insert(&mut self, c: char, cell: CellPattern) {
        self.entries.insert(c, cell);
    }

    pub fn get(&self, c: char) -> Option<CellPattern> {
        self.entries.get(&c).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn char_to_cell(&self, c: char) -> CellPattern {
        self.get(c).unwrap_or(self.fallback)
    }

    /// Parses the table file format:
    ///
    /// ```text
    /// # comment
    /// U+0041 = 1-7
    /// U+0020 =
    /// ```
    ///
    /// A later line for the same code point replaces an earlier one.
    pub fn parse(text: &str) -> Result<BrailleTable, TableParseError> {
        let mut table = BrailleTable::empty();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| TableParseError {
                line: idx + 1,
                message,
            };
            let (lhs, rhs) = line
                .split_once('=')
                .ok_or_else(|| err("expected `U+XXXX = dots`".into()))?;
            let lhs = lhs.trim();
            let hex = lhs
                .strip_prefix("U+")
                .or_else(|| lhs.strip_prefix("u+"))
                .ok_or_else(|| err(format!("code point {lhs:?} must start with U+")))?;
            let c = u32::from_str_radix(hex, 16)
                .ok()
                .filter(|_| (1..=6).contains(&hex.len()))
                .and_then(char::from_u32)
                .ok_or_else(|| err(format!("invalid code point {lhs:?}")))?;
            let rhs = rhs.trim();
            let mut cell = CellPattern::BLANK;
            if !rhs.is_empty() {
                for d in rhs.split('-') {
                    let dot = d
                        .trim()
                        .parse::<u8>()
                        .ok()
                        .and_then(|d| CellPattern::from_dots(&[d]))
                        .ok_or_else(|| err(format!("invalid dot {d:?}")))?;
                    cell.0 |= dot.0;
                }
            }
            table.entries.insert(c, cell);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<BrailleTable, TableLoadError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| TableLoadError::Io {
            path: display.clone(),
            source,
        })?;
        BrailleTable::parse(&text).map_err(|source| TableLoadError::Parse {
            path: display,
            source,
        })
    }

    /// Serializes the entries in the format accepted by [`parse`](Self::parse).
    pub fn to_table_text(&self) -> String {
        let mut out = String::new();
        for (c, cell) in &self.entries {
            let dots: Vec<String> = cell.dots().map(|d| d.to_string()).collect();
            let sep = if dots.is_empty() { "" } else { " " };
            let _ = writeln!(out, "U+{:04X} ={sep}{}", u32::from(*c), dots.join("-"));
        }
        out
    }

    /// Renders `text` on a single row of `cols` cells. `cursor` is 0 for no
    /// cursor, otherwise a 1-based cell index that must not exceed `cols`.
    pub fn render_text(
        &self,
        text: &str,
        cols: u16,
        cursor: u32,
    ) -> Result<CellBuffer, BufferError> {
        if cols == 0 {
            return Err(BufferError::EmptyDisplay);
        }
        if cursor > u32::from(cols) {
            return Err(BufferError::BadCursor {
                cursor,
                cells: cols.into(),
            });
        }
        let mut cells: Vec<CellPattern> = text
            .chars()
            .take(cols.into())
            .map(|c| self.char_to_cell(c))
            .collect();
        cells.resize(cols.into(), CellPattern::BLANK);
        CellBuffer::from_cells(cols, 1, cells, (cursor != 0).then_some(cursor))
    }
}
