//! Document reader for the braille line.
//!
//! The display shows a window of the current line, `cols` characters
//! wide. LineUp and LineDown move between lines, PanLeft and PanRight slide
//! the window by its width, Top and Bottom jump to the ends and Home quits.
//! The reading position is saved to `<file>.pos` on quit and restored on
//! the next start.

use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::client::{ClientError, Connection};
use crate::driver::Command;

pub const TAB_WIDTH: usize = 4;
pub const MAX_LINE_LEN: usize = 4096;

/// Text split into lines of characters, tabs expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    lines: Vec<Vec<char>>,
}

impl Document {
    pub fn parse(text: &str) -> Document {
        let mut lines: Vec<Vec<char>> = text
            .lines()
            .map(|l| {
                let mut out = Vec::new();
                for c in l.chars() {
                    if c == '\t' {
                        out.extend(std::iter::repeat_n(' ', TAB_WIDTH));
                    } else {
                        out.push(c);
                    }
                    if out.len() >= MAX_LINE_LEN {
                        break;
                    }
                }
                out.truncate(MAX_LINE_LEN);
                out
            })
            .collect();
        if lines.is_empty() {
            lines.push(Vec::new());
        }
        Document { lines }
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn line_len(&self, line: usize) -> usize {
        self.lines.get(line).map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Moved,
    Unchanged,
    Quit,
}

/// Reading position over a [`Document`].
#[derive(Debug, Clone)]
pub struct Pager {
    doc: Document,
    cols: usize,
    line: usize,
    col: usize,
}

impl Pager {
    pub fn new(doc: Document, cols: usize) -> Pager {
        Pager {
            doc,
            cols: cols.max(1),
            line: 0,
            col: 0,
        }
    }

    /// Moves to a saved position, clamped to the document.
    pub fn restore(&mut self, line: usize, col: usize) {
        self.line = line.min(self.doc.line_count() - 1);
        self.col = if col < self.doc.line_len(self.line) {
            col
        } else {
            0
        };
    }

    /// `(line, col)`, both 0-based.
    pub fn position(&self) -> (usize, usize) {
        (self.line, self.col)
    }

    pub fn apply(&mut self, cmd: Command) -> Outcome {
        let before = self.position();
        let last = self.doc.line_count() - 1;
        match cmd {
            Command::LineUp if self.line > 0 => self.goto(self.line - 1),
            Command::LineDown if self.line < last => self.goto(self.line + 1),
            Command::PanLeft => self.col = self.col.saturating_sub(self.cols),
            Command::PanRight => {
                if self.col + self.cols < self.doc.line_len(self.line) {
                    self.col += self.cols;
                }
            }
            Command::Top => self.goto(0),
            Command::Bottom => self.goto(last),
            Command::Home => return Outcome::Quit,
            _ => {}
        }
        if self.position() == before {
            Outcome::Unchanged
        } else {
            Outcome::Moved
        }
    }

    fn goto(&mut self, line: usize) {
        self.line = line;
        self.col = 0;
    }

    /// The visible text.
    pub fn window(&self) -> String {
        self.doc.lines[self.line]
            .iter()
            .skip(self.col)
            .take(self.cols)
            .collect()
    }
}

pub fn pos_path(file: &Path) -> PathBuf {
    let mut name = file.as_os_str().to_owned();
    name.push(".pos");
    PathBuf::from(name)
}

/// Parses `line <n> col <m>` (1-based) into a 0-based position.
pub fn parse_pos(text: &str) -> Option<(usize, usize)> {
    let mut it = text.split_whitespace();
    match (it.next(), it.next(), it.next(), it.next(), it.next()) {
        (Some("line"), Some(n), Some("col"), Some(m), None) => {
            let n: usize = n.parse().ok()?;
            let m: usize = m.parse().ok()?;
            Some((n.checked_sub(1)?, m.checked_sub(1)?))
        }
        _ => None,
    }
}

pub fn format_pos((line, col): (usize, usize)) -> String {
    format!("line {} col {}\n", line + 1, col + 1)
}

/// Runs the pager on an already tty-mode connection until Home is pressed
/// or the connection drops. Returns the final position.
pub fn run(
    conn: &Connection,
    file: &Path,
    mut pager: Pager,
) -> Result<(usize, usize), ClientError> {
    conn.write_text(&pager.window(), 0)?;
    loop {
        let key = match conn.read_key(Duration::from_secs(1)) {
            Ok(k) => k,
            Err(ClientError::TimedOut) => continue,
            Err(e) => return Err(e),
        };
        let Some(cmd) = key.command() else { continue };
        match pager.apply(cmd) {
            Outcome::Quit => break,
            Outcome::Moved => conn.write_text(&pager.window(), 0)?,
            Outcome::Unchanged => {}
        }
    }
    std::fs::write(pos_path(file), format_pos(pager.position()))?;
    Ok(pager.position())
}
