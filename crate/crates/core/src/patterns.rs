//! Local adjacency validity rules extracted from an exemplar level.
//!
//! A level conforms to a rule set when every horizontally adjacent tile pair
//! and every vertically adjacent pair was observed in the exemplar. Repairs
//! and generation enforce these pairs as hard constraints.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::level::{Level, TileKind};

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("unknown domain {0:?} (expected cave, mario or supercat)")]
    UnknownDomain(String),
    #[error("invalid rules file: {0}")]
    InvalidFile(String),
}

/// Allowed adjacent tile-kind pairs. Horizontal pairs are (left, right),
/// vertical pairs are (top, bottom).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternRules {
    pub horizontal: BTreeSet<(TileKind, TileKind)>,
    pub vertical: BTreeSet<(TileKind, TileKind)>,
    pub domain_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Horizontal,
    Vertical,
}

/// One adjacency not allowed by the rules; (row, col) is the left/top cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternViolation {
    pub row: usize,
    pub col: usize,
    pub direction: Direction,
    pub pair: (TileKind, TileKind),
}

/// Records every adjacent pair present in the exemplar.
pub fn extract_patterns(exemplar: &Level) -> PatternRules {
    let mut horizontal = BTreeSet::new();
    let mut vertical = BTreeSet::new();
    for r in 0..exemplar.rows() {
        for c in 0..exemplar.cols() {
            if c + 1 < exemplar.cols() {
                horizontal.insert((exemplar.get(r, c), exemplar.get(r, c + 1)));
            }
            if r + 1 < exemplar.rows() {
                vertical.insert((exemplar.get(r, c), exemplar.get(r + 1, c)));
            }
        }
    }
    PatternRules { horizontal, vertical, domain_tag: exemplar.domain().to_string() }
}

/// Lists every adjacency of `level` absent from `rules`; empty means conforming.
pub fn check_patterns(level: &Level, rules: &PatternRules) -> Vec<PatternViolation> {
    let mut out = Vec::new();
    for r in 0..level.rows() {
        for c in 0..level.cols() {
            if c + 1 < level.cols() {
                let pair = (level.get(r, c), level.get(r, c + 1));
                if !rules.horizontal.contains(&pair) {
                    out.push(PatternViolation { row: r, col: c, direction: Direction::Horizontal, pair });
                }
            }
            if r + 1 < level.rows() {
                let pair = (level.get(r, c), level.get(r + 1, c));
                if !rules.vertical.contains(&pair) {
                    out.push(PatternViolation { row: r, col: c, direction: Direction::Vertical, pair });
                }
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct RulesFile {
    domain: String,
    horizontal: Vec<String>,
    vertical: Vec<String>,
}

fn pair_to_string(pair: (TileKind, TileKind)) -> String {
    let mut s = String::with_capacity(2);
    s.push(pair.0.to_char());
    s.push(pair.1.to_char());
    s
}

fn pair_from_string(s: &str) -> Result<(TileKind, TileKind), PatternError> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != 2 {
        return Err(PatternError::InvalidFile(format!("pair {s:?} is not two characters")));
    }
    let a = TileKind::from_char(chars[0])
        .ok_or_else(|| PatternError::InvalidFile(format!("unknown tile {:?}", chars[0])))?;
    let b = TileKind::from_char(chars[1])
        .ok_or_else(|| PatternError::InvalidFile(format!("unknown tile {:?}", chars[1])))?;
    Ok((a, b))
}

impl PatternRules {
    /// Every pair allowed in both directions. Useful for small hand-built
    /// problems where structural rules are not under test.
    pub fn permissive(domain_tag: &str) -> PatternRules {
        let mut all = BTreeSet::new();
        for a in TileKind::ALL {
            for b in TileKind::ALL {
                all.insert((a, b));
            }
        }
        PatternRules { horizontal: all.clone(), vertical: all, domain_tag: domain_tag.to_string() }
    }

    /// Rules extracted from the shipped exemplar of a builtin domain.
    pub fn builtin(domain: &str) -> Result<PatternRules, PatternError> {
        let exemplar = builtin_exemplar(domain)?;
        Ok(extract_patterns(&exemplar))
    }

    pub fn to_json(&self) -> String {
        let file = RulesFile {
            domain: self.domain_tag.clone(),
            horizontal: self.horizontal.iter().map(|p| pair_to_string(*p)).collect(),
            vertical: self.vertical.iter().map(|p| pair_to_string(*p)).collect(),
        };
        serde_json::to_string_pretty(&file).expect("rules serialize")
    }

    pub fn from_json(text: &str) -> Result<PatternRules, PatternError> {
        let file: RulesFile =
            serde_json::from_str(text).map_err(|e| PatternError::InvalidFile(e.to_string()))?;
        let mut horizontal = BTreeSet::new();
        for p in &file.horizontal {
            horizontal.insert(pair_from_string(p)?);
        }
        let mut vertical = BTreeSet::new();
        for p in &file.vertical {
            vertical.insert(pair_from_string(p)?);
        }
        if horizontal.is_empty() || vertical.is_empty() {
            return Err(PatternError::InvalidFile("empty pair set".to_string()));
        }
        Ok(PatternRules { horizontal, vertical, domain_tag: file.domain })
    }
}

/// The shipped exemplar level of a builtin domain.
pub fn builtin_exemplar(domain: &str) -> Result<Level, PatternError> {
    let text = match domain {
        "cave" => include_str!("../data/cave.exemplar.txt"),
        "mario" => include_str!("../data/mario.exemplar.txt"),
        "supercat" => include_str!("../data/supercat.exemplar.txt"),
        other => return Err(PatternError::UnknownDomain(other.to_string())),
    };
    Ok(Level::parse_with_domain(text, domain).expect("shipped exemplar is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exemplar_conforms_to_own_rules() {
        for domain in ["cave", "mario", "supercat"] {
            let exemplar = builtin_exemplar(domain).unwrap();
            let rules = extract_patterns(&exemplar);
            assert!(check_patterns(&exemplar, &rules).is_empty(), "domain {domain}");
            // idempotent: re-extraction from a conforming level adds nothing new
            let again = extract_patterns(&exemplar);
            assert_eq!(rules, again);
        }
    }

    #[test]
    fn small_exemplar_pairs() {
        let l = Level::parse("{-}\nXXX").unwrap();
        let rules = extract_patterns(&l);
        let h: Vec<(TileKind, TileKind)> = rules.horizontal.iter().copied().collect();
        assert!(h.contains(&(TileKind::Start, TileKind::Empty)));
        assert!(h.contains(&(TileKind::Empty, TileKind::Goal)));
        assert!(h.contains(&(TileKind::Solid, TileKind::Solid)));
        assert_eq!(h.len(), 3);
        let v: Vec<(TileKind, TileKind)> = rules.vertical.iter().copied().collect();
        assert!(v.contains(&(TileKind::Start, TileKind::Solid)));
        assert!(v.contains(&(TileKind::Empty, TileKind::Solid)));
        assert!(v.contains(&(TileKind::Goal, TileKind::Solid)));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn foreign_pair_reported() {
        let exemplar = builtin_exemplar("cave").unwrap();
        let rules = extract_patterns(&exemplar);
        // Solid next to the start is absent from the cave exemplar.
        let (sr, sc) = exemplar.start();
        let broken = exemplar.with_cell(sr, sc + 1, TileKind::Solid);
        let violations = check_patterns(&broken, &rules);
        assert!(!violations.is_empty());
        assert!(violations
            .iter()
            .any(|v| v.pair == (TileKind::Start, TileKind::Solid) && v.direction == Direction::Horizontal));
    }

    #[test]
    fn rules_json_round_trip() {
        let rules = PatternRules::builtin("mario").unwrap();
        let json = rules.to_json();
        let back = PatternRules::from_json(&json).unwrap();
        assert_eq!(rules, back);
    }

    #[test]
    fn unknown_domain_rejected() {
        assert!(matches!(PatternRules::builtin("pacman"), Err(PatternError::UnknownDomain(_))));
    }
}
