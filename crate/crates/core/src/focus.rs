//! Nested focus model.
//!
//! Every tty client declares where it runs as a short list of integers, for
//! instance `[2]` for a program on virtual terminal 2, or `[7, 42]` for a
//! program in window 42 of an X server living on VT 7. Focus agents report,
//! node by node, which child of the focus tree is active. The active path is
//! derived by walking those reports from the root, and the focused client is
//! the one whose declared path is the longest prefix of the active path.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Maximum number of elements in a [`FocusPath`].
pub const MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FocusError {
    #[error("focus path depth {0} exceeds the maximum of {max}", max = MAX_DEPTH)]
    TooDeep(usize),
    #[error("a focus report prefix may hold at most {max} elements, got {0}", max = MAX_DEPTH - 1)]
    PrefixTooDeep(usize),
    #[error("invalid focus path element {0:?}")]
    BadElement(String),
}

/// A location in the focus tree. The empty path is the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FocusPath(Vec<u32>);

impl FocusPath {
    pub fn root() -> Self {
        FocusPath(Vec::new())
    }

    pub fn new(elems: Vec<u32>) -> Result<Self, FocusError> {
        if elems.len() > MAX_DEPTH {
            return Err(FocusError::TooDeep(elems.len()));
        }
        Ok(FocusPath(elems))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when `self` is a (not necessarily strict) prefix of `other`.
    pub fn is_prefix_of(&self, other: &FocusPath) -> bool {
        other.0.starts_with(&self.0)
    }

    /// The path one level below `self`, or `None` at maximum depth.
    pub fn child(&self, elem: u32) -> Option<FocusPath> {
        if self.0.len() >= MAX_DEPTH {
            return None;
        }
        let mut elems = self.0.clone();
        elems.push(elem);
        Some(FocusPath(elems))
    }
}

impl TryFrom<Vec<u32>> for FocusPath {
    type Error = FocusError;

    fn try_from(elems: Vec<u32>) -> Result<Self, FocusError> {
        FocusPath::new(elems)
    }
}

impl fmt::Display for FocusPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "]")
    }
}

/// Parses `""` (root), `"7"`, `"7,42"` or `"7.42"`. Surrounding brackets
/// are accepted so that the `Display` form parses back.
impl FromStr for FocusPath {
    type Err = FocusError;

    fn from_str(s: &str) -> Result<Self, FocusError> {
        let s = s.trim();
        let s = s
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .unwrap_or(s)
            .trim();
        if s.is_empty() {
            return Ok(FocusPath::root());
        }
        let elems = s
            .split([',', '.'])
            .map(|e| {
                let e = e.trim();
                e.parse::<u32>()
                    .map_err(|_| FocusError::BadElement(e.to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        FocusPath::new(elems)
    }
}

/// Per-node focus reports: for each reported prefix, its active child.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FocusMap {
    active: BTreeMap<FocusPath, u32>,
}

impl FocusMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `child` as the active child of `prefix`. Returns whether the
    /// map changed.
    pub fn set_active(&mut self, prefix: FocusPath, child: u32) -> Result<bool, FocusError> {
        if prefix.len() >= MAX_DEPTH {
            return Err(FocusError::PrefixTooDeep(prefix.len()));
        }
        Ok(self.active.insert(prefix, child) != Some(child))
    }

    pub fn get(&self, prefix: &FocusPath) -> Option<u32> {
        self.active.get(prefix).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FocusPath, u32)> {
        self.active.iter().map(|(k, v)| (k, *v))
    }

    /// Walks the reports from the root. Reports hanging below an inactive
    /// node are never reached.
    pub fn active_path(&self) -> FocusPath {
        let mut path = FocusPath::root();
        while path.len() < MAX_DEPTH {
            match self.active.get(&path) {
                Some(&child) => path.0.push(child),
                None => break,
            }
        }
        path
    }
}

/// How a tty client wants its key events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyMode {
    /// Translated to the device-independent command set.
    Commands,
    /// Device keycodes passed through unchanged.
    Raw,
}

/// A client's declaration of where it runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtyBinding<Id> {
    pub client: Id,
    pub path: FocusPath,
    pub key_mode: KeyMode,
    pub entry_seq: u64,
}

/// Picks the client that owns the display under `map`.
///
/// Among bindings whose path is a prefix of the active path, the longest
/// path wins; equal paths are decided in favour of the most recent entry.
pub fn resolve_focus<'a, Id, I>(bindings: I, map: &FocusMap) -> Option<Id>
where
    Id: Copy + 'a,
    I: IntoIterator<Item = &'a TtyBinding<Id>>,
{
    let active = map.active_path();
    bindings
        .into_iter()
        .filter(|b| b.path.is_prefix_of(&active))
        .max_by_key(|b| (b.path.len(), b.entry_seq))
        .map(|b| b.client)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(elems: &[u32]) -> FocusPath {
        FocusPath::new(elems.to_vec()).unwrap()
    }

    fn bind(client: u32, path: &[u32], seq: u64) -> TtyBinding<u32> {
        TtyBinding {
            client,
            path: p(path),
            key_mode: KeyMode::Commands,
            entry_seq: seq,
        }
    }

    #[test]
    fn set_active_examples() {
        let mut m = FocusMap::new();
        assert!(m.set_active(p(&[]), 2).unwrap());
        assert_eq!(m.get(&p(&[])), Some(2));

        let mut m = FocusMap::new();
        m.set_active(p(&[]), 7).unwrap();
        m.set_active(p(&[7]), 42).unwrap();
        assert_eq!(m.iter().count(), 2);
        assert_eq!(m.get(&p(&[7])), Some(42));

        let mut m = FocusMap::new();
        m.set_active(p(&[]), 7).unwrap();
        m.set_active(p(&[]), 3).unwrap();
        assert_eq!(m.get(&p(&[])), Some(3));
        assert_eq!(m.iter().count(), 1);
    }

    #[test]
    fn set_active_same_value_reports_no_change() {
        let mut m = FocusMap::new();
        m.set_active(p(&[]), 7).unwrap();
        assert!(!m.set_active(p(&[]), 7).unwrap());
    }

    #[test]
    fn set_active_rejects_depth_eight_prefix() {
        let mut m = FocusMap::new();
        let deep = p(&[1; 8]);
        assert_eq!(m.set_active(deep, 1), Err(FocusError::PrefixTooDeep(8)));
        assert!(m.set_active(p(&[1; 7]), 1).is_ok());
    }

    #[test]
    fn active_path_examples() {
        assert_eq!(FocusMap::new().active_path(), FocusPath::root());

        let mut m = FocusMap::new();
        m.set_active(p(&[]), 7).unwrap();
        m.set_active(p(&[7]), 42).unwrap();
        assert_eq!(m.active_path(), p(&[7, 42]));

        let mut m = FocusMap::new();
        m.set_active(p(&[]), 7).unwrap();
        m.set_active(p(&[3]), 9).unwrap();
        assert_eq!(m.active_path(), p(&[7]));
    }

    #[test]
    fn active_path_stops_at_max_depth() {
        let mut m = FocusMap::new();
        let mut prefix = FocusPath::root();
        for _ in 0..MAX_DEPTH {
            m.set_active(prefix.clone(), 1).unwrap();
            prefix = prefix.child(1).unwrap();
        }
        assert_eq!(m.active_path().len(), MAX_DEPTH);
    }

    #[test]
    fn resolve_examples() {
        let mut m = FocusMap::new();
        m.set_active(p(&[]), 2).unwrap();
        assert_eq!(resolve_focus(&[bind(1, &[2], 0)], &m), Some(1));

        let mut m = FocusMap::new();
        m.set_active(p(&[]), 7).unwrap();
        m.set_active(p(&[7]), 42).unwrap();
        let bs = [bind(1, &[7], 0), bind(2, &[7, 42], 1)];
        assert_eq!(resolve_focus(&bs, &m), Some(2));

        let mut m = FocusMap::new();
        m.set_active(p(&[]), 3).unwrap();
        assert_eq!(resolve_focus(&[bind(1, &[2], 0)], &m), None);
    }

    #[test]
    fn ancestor_binding_is_eligible_when_descendant_focused() {
        let mut m = FocusMap::new();
        m.set_active(p(&[]), 7).unwrap();
        m.set_active(p(&[7]), 42).unwrap();
        assert_eq!(resolve_focus(&[bind(1, &[7], 0)], &m), Some(1));
    }

    #[test]
    fn latest_entry_wins_ties() {
        let mut m = FocusMap::new();
        m.set_active(p(&[]), 2).unwrap();
        let bs = [bind(1, &[2], 5), bind(2, &[2], 9), bind(3, &[2], 7)];
        assert_eq!(resolve_focus(&bs, &m), Some(2));
    }

    #[test]
    fn path_parsing() {
        assert_eq!("".parse::<FocusPath>().unwrap(), FocusPath::root());
        assert_eq!("7".parse::<FocusPath>().unwrap(), p(&[7]));
        assert_eq!("7,42".parse::<FocusPath>().unwrap(), p(&[7, 42]));
        assert_eq!("7.42".parse::<FocusPath>().unwrap(), p(&[7, 42]));
        assert_eq!("[7,42]".parse::<FocusPath>().unwrap(), p(&[7, 42]));
        assert_eq!(p(&[7, 42]).to_string(), "[7,42]");
        assert!("1,2,3,4,5,6,7,8,9".parse::<FocusPath>().is_err());
        assert!("x".parse::<FocusPath>().is_err());
    }
}
