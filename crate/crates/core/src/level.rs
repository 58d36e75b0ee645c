//! Level grids, the text codec, one-hot encoding, and level diffing.
//!
//! Levels use a minimal representation with four tile kinds mapped to the
//! characters `-` (empty), `X` (solid), `{` (start) and `}` (goal). Row 0 of a
//! level is the top line of its text form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four tile kinds of the minimal level representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TileKind {
    Empty,
    Solid,
    Start,
    Goal,
}

impl TileKind {
    /// All kinds in channel order. This order also fixes the one-hot layout.
    pub const ALL: [TileKind; 4] = [TileKind::Empty, TileKind::Solid, TileKind::Start, TileKind::Goal];

    pub fn to_char(self) -> char {
        match self {
            TileKind::Empty => '-',
            TileKind::Solid => 'X',
            TileKind::Start => '{',
            TileKind::Goal => '}',
        }
    }

    pub fn from_char(ch: char) -> Option<TileKind> {
        match ch {
            '-' => Some(TileKind::Empty),
            'X' => Some(TileKind::Solid),
            '{' => Some(TileKind::Start),
            '}' => Some(TileKind::Goal),
            _ => None,
        }
    }

    /// One-hot channel index: (Empty, Solid, Start, Goal) = (0, 1, 2, 3).
    pub fn channel(self) -> usize {
        match self {
            TileKind::Empty => 0,
            TileKind::Solid => 1,
            TileKind::Start => 2,
            TileKind::Goal => 3,
        }
    }

    pub fn from_channel(ch: usize) -> Option<TileKind> {
        TileKind::ALL.get(ch).copied()
    }

    /// Start and Goal cells are traversable like Empty.
    pub fn is_traversable(self) -> bool {
        !matches!(self, TileKind::Solid)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LevelError {
    #[error("line {line} has length {len}, expected {expected}")]
    RaggedLines { line: usize, len: usize, expected: usize },
    #[error("unknown character {ch:?} at row {row}, col {col}")]
    UnknownCharacter { ch: char, row: usize, col: usize },
    #[error("level must contain exactly one start and one goal (found {starts} starts, {goals} goals)")]
    MissingOrDuplicateStartGoal { starts: usize, goals: usize },
    #[error("level is empty")]
    EmptyLevel,
    #[error("dimension mismatch: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    DimensionMismatch { a_rows: usize, a_cols: usize, b_rows: usize, b_cols: usize },
    #[error("ambiguous cell at row {row}, col {col}: two channels tie at maximum")]
    AmbiguousCell { row: usize, col: usize },
    #[error("cell list length {got} does not match {rows}x{cols}")]
    BadCellCount { rows: usize, cols: usize, got: usize },
}

/// A rectangular grid of tiles with exactly one start and one goal.
///
/// `domain` is advisory metadata (`cave`, `mario`, `supercat`, or `custom`);
/// it names the movement template the level is meant for and is ignored by
/// equality.
#[derive(Debug, Clone)]
pub struct Level {
    rows: usize,
    cols: usize,
    cells: Vec<TileKind>,
    domain: String,
}

impl PartialEq for Level {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.cells == other.cells
    }
}

impl Eq for Level {}

impl Level {
    pub fn new(rows: usize, cols: usize, cells: Vec<TileKind>, domain: &str) -> Result<Level, LevelError> {
        if rows == 0 || cols == 0 {
            return Err(LevelError::EmptyLevel);
        }
        if cells.len() != rows * cols {
            return Err(LevelError::BadCellCount { rows, cols, got: cells.len() });
        }
        let starts = cells.iter().filter(|k| **k == TileKind::Start).count();
        let goals = cells.iter().filter(|k| **k == TileKind::Goal).count();
        if starts != 1 || goals != 1 {
            return Err(LevelError::MissingOrDuplicateStartGoal { starts, goals });
        }
        Ok(Level { rows, cols, cells, domain: domain.to_string() })
    }

    /// Parses the text form: one line per row, top row first.
    pub fn parse(text: &str) -> Result<Level, LevelError> {
        Self::parse_with_domain(text, "custom")
    }

    pub fn parse_with_domain(text: &str, domain: &str) -> Result<Level, LevelError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(LevelError::EmptyLevel);
        }
        let cols = lines[0].chars().count();
        let mut cells = Vec::with_capacity(lines.len() * cols);
        for (row, line) in lines.iter().enumerate() {
            let len = line.chars().count();
            if len != cols {
                return Err(LevelError::RaggedLines { line: row, len, expected: cols });
            }
            for (col, ch) in line.chars().enumerate() {
                let kind = TileKind::from_char(ch)
                    .ok_or(LevelError::UnknownCharacter { ch, row, col })?;
                cells.push(kind);
            }
        }
        Level::new(lines.len(), cols, cells, domain)
    }

    /// Serializes back to text; `parse(to_text(l)) == l`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.cols + 1) * self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.get(r, c).to_char());
            }
            out.push('\n');
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn cells(&self) -> &[TileKind] {
        &self.cells
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn get(&self, row: usize, col: usize) -> TileKind {
        self.cells[self.index(row, col)]
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }

    /// Returns a copy with one cell replaced. The result may violate the
    /// unique start/goal invariant; callers that mutate endpoints must
    /// re-validate via [`Level::new`].
    pub fn with_cell(&self, row: usize, col: usize, kind: TileKind) -> Level {
        let mut cells = self.cells.clone();
        cells[self.index(row, col)] = kind;
        Level { rows: self.rows, cols: self.cols, cells, domain: self.domain.clone() }
    }

    pub fn start(&self) -> (usize, usize) {
        self.find(TileKind::Start)
    }

    pub fn goal(&self) -> (usize, usize) {
        self.find(TileKind::Goal)
    }

    fn find(&self, kind: TileKind) -> (usize, usize) {
        let idx = self.cells.iter().position(|k| *k == kind).expect("validated at construction");
        (idx / self.cols, idx % self.cols)
    }

    pub fn to_onehot(&self) -> OneHotTensor {
        let mut t = OneHotTensor::zeros(self.rows, self.cols);
        t.domain = self.domain.clone();
        for (i, kind) in self.cells.iter().enumerate() {
            t.data[i * 4 + kind.channel()] = 1.0;
        }
        t
    }
}

/// One cell difference between two same-sized levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellDiff {
    pub row: usize,
    pub col: usize,
    pub from: TileKind,
    pub to: TileKind,
}

/// Lists every position where the two levels disagree.
pub fn diff_cells(a: &Level, b: &Level) -> Result<Vec<CellDiff>, LevelError> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(LevelError::DimensionMismatch {
            a_rows: a.rows,
            a_cols: a.cols,
            b_rows: b.rows,
            b_cols: b.cols,
        });
    }
    let mut out = Vec::new();
    for r in 0..a.rows {
        for c in 0..a.cols {
            let (ka, kb) = (a.get(r, c), b.get(r, c));
            if ka != kb {
                out.push(CellDiff { row: r, col: c, from: ka, to: kb });
            }
        }
    }
    Ok(out)
}

/// A rows x cols x 4 tensor in f64, laid out cell-major:
/// `data[(r * cols + c) * 4 + channel]`.
///
/// Tensors produced by [`Level::to_onehot`] are exactly one-hot per cell.
/// The type also serves as a container for relaxed values (attribution
/// baselines, gradients), where per-cell sums may differ from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotTensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    domain: String,
}

impl OneHotTensor {
    pub fn zeros(rows: usize, cols: usize) -> OneHotTensor {
        OneHotTensor { rows, cols, data: vec![0.0; rows * cols * 4], domain: "custom".to_string() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.cols + col) * 4 + channel]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        self.data[(row * self.cols + col) * 4 + channel] = value;
    }

    /// Decodes by per-cell argmax. Exact ties at the maximum are rejected.
    pub fn to_level(&self) -> Result<Level, LevelError> {
        let mut cells = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let base = (r * self.cols + c) * 4;
                let vals = &self.data[base..base + 4];
                let mut best = 0usize;
                for ch in 1..4 {
                    if vals[ch] > vals[best] {
                        best = ch;
                    }
                }
                if vals.iter().enumerate().any(|(ch, v)| ch != best && *v == vals[best]) {
                    return Err(LevelError::AmbiguousCell { row: r, col: c });
                }
                cells.push(TileKind::from_channel(best).unwrap());
            }
        }
        Level::new(self.rows, self.cols, cells, &self.domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn parse_basic() {
        let l = Level::parse("{-}\nXXX").unwrap();
        assert_eq!(l.rows(), 2);
        assert_eq!(l.cols(), 3);
        assert_eq!(l.get(0, 0), TileKind::Start);
        assert_eq!(l.get(0, 1), TileKind::Empty);
        assert_eq!(l.get(0, 2), TileKind::Goal);
        assert_eq!(l.get(1, 0), TileKind::Solid);
        assert_eq!(l.start(), (0, 0));
        assert_eq!(l.goal(), (0, 2));
    }

    #[test]
    fn parse_two_by_two() {
        let l = Level::parse("{-\n-}").unwrap();
        assert_eq!(l.rows(), 2);
        assert_eq!(l.cols(), 2);
        assert_eq!(l.start(), (0, 0));
        assert_eq!(l.goal(), (1, 1));
    }

    #[test]
    fn parse_rejects_unknown_character() {
        let err = Level::parse("{a}").unwrap_err();
        assert_eq!(err, LevelError::UnknownCharacter { ch: 'a', row: 0, col: 1 });
    }

    #[test]
    fn parse_rejects_ragged_lines() {
        let err = Level::parse("{-}\nXX").unwrap_err();
        assert!(matches!(err, LevelError::RaggedLines { .. }));
    }

    #[test]
    fn parse_rejects_duplicate_start() {
        let err = Level::parse("{{}\n---").unwrap_err();
        assert!(matches!(err, LevelError::MissingOrDuplicateStartGoal { starts: 2, goals: 1 }));
    }

    #[test]
    fn round_trip_text() {
        let text = "{-}\nXXX\n";
        let l = Level::parse(text).unwrap();
        assert_eq!(l.to_text(), text);
        assert_eq!(Level::parse(&l.to_text()).unwrap(), l);
    }

    #[test]
    fn serialize_shape() {
        let mut cells = vec![TileKind::Solid; 15 * 12];
        cells[0] = TileKind::Start;
        cells[1] = TileKind::Goal;
        let l = Level::new(15, 12, cells, "cave").unwrap();
        let text = l.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 15);
        assert!(lines.iter().all(|line| line.chars().count() == 12));
        assert_eq!(text.matches('{').count(), 1);
        assert_eq!(text.matches('}').count(), 1);
    }

    #[test]
    fn onehot_channels() {
        let l = Level::parse("{-}\nXXX").unwrap();
        let t = l.to_onehot();
        assert_eq!(t.get(0, 1, 0), 1.0); // Empty -> channel 0
        assert_eq!(t.get(0, 2, 3), 1.0); // Goal -> channel 3
        for r in 0..2 {
            for c in 0..3 {
                let sum: f64 = (0..4).map(|ch| t.get(r, c, ch)).sum();
                assert_eq!(sum, 1.0);
            }
        }
    }

    #[test]
    fn onehot_round_trip() {
        let l = Level::parse("{-}\nX-X\n--}").unwrap_err();
        assert!(matches!(l, LevelError::MissingOrDuplicateStartGoal { .. }));
        let l = Level::parse("{--\nX-X\n--}").unwrap();
        assert_eq!(l.to_onehot().to_level().unwrap(), l);
    }

    #[test]
    fn onehot_tie_rejected_argmax_tolerated() {
        let mut t = OneHotTensor::zeros(1, 2);
        t.set(0, 0, 2, 1.0); // start
        t.set(0, 1, 3, 1.0); // goal
        t.set(0, 0, 0, 1.0); // tie with start channel
        assert!(matches!(t.to_level(), Err(LevelError::AmbiguousCell { row: 0, col: 0 })));

        let mut t = OneHotTensor::zeros(1, 3);
        t.set(0, 0, 2, 1.0);
        t.set(0, 2, 3, 1.0);
        t.set(0, 1, 0, 0.9);
        t.set(0, 1, 1, 0.1);
        let l = t.to_level().unwrap();
        assert_eq!(l.get(0, 1), TileKind::Empty);
    }

    #[test]
    fn diff_identity_and_single_flip() {
        let l = Level::parse("{--\nX-X\n--}").unwrap();
        assert!(diff_cells(&l, &l).unwrap().is_empty());
        let m = l.with_cell(1, 0, TileKind::Empty);
        let d = diff_cells(&l, &m).unwrap();
        assert_eq!(d, vec![CellDiff { row: 1, col: 0, from: TileKind::Solid, to: TileKind::Empty }]);
    }

    #[test]
    fn diff_matches_bruteforce_on_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut cells_a = Vec::new();
            let mut cells_b = Vec::new();
            for _ in 0..36 {
                cells_a.push(if rng.random::<f64>() < 0.5 { TileKind::Empty } else { TileKind::Solid });
                cells_b.push(if rng.random::<f64>() < 0.5 { TileKind::Empty } else { TileKind::Solid });
            }
            cells_a[3] = TileKind::Start;
            cells_a[32] = TileKind::Goal;
            cells_b[3] = TileKind::Start;
            cells_b[32] = TileKind::Goal;
            let a = Level::new(6, 6, cells_a, "custom").unwrap();
            let b = Level::new(6, 6, cells_b, "custom").unwrap();
            let count = diff_cells(&a, &b).unwrap().len();
            // independent cell-by-cell loop
            let mut brute = 0;
            for r in 0..6 {
                for c in 0..6 {
                    if a.get(r, c) != b.get(r, c) {
                        brute += 1;
                    }
                }
            }
            assert_eq!(count, brute);
            assert_eq!(diff_cells(&b, &a).unwrap().len(), count);
        }
    }

    #[test]
    fn diff_rejects_dimension_mismatch() {
        let a = Level::parse("{-}").unwrap();
        let b = Level::parse("{-}\n---").unwrap();
        assert!(matches!(diff_cells(&a, &b), Err(LevelError::DimensionMismatch { .. })));
    }
}
