//! Movement templates and the exact breadth-first solvability oracle.
//!
//! A template is a set of relative-move rules. A rule applies at a cell when
//! all of its `open` offsets land in bounds on traversable tiles and all of
//! its `solid` offsets land in bounds on solid tiles; the move then steps by
//! `delta`. The oracle runs BFS over these moves from the start tile.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::level::Level;

/// Rule offsets must stay within this radius on both axes.
pub const MAX_RULE_RADIUS: i32 = 6;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown domain {0:?} (expected cave, mario or supercat)")]
    UnknownDomain(String),
    #[error("template has no rules")]
    EmptyTemplate,
    #[error("rule delta {delta:?} missing from its open offsets")]
    DeltaNotOpen { delta: (i32, i32) },
    #[error("offset {offset:?} exceeds the maximum radius {MAX_RULE_RADIUS}")]
    OffsetOutOfRange { offset: (i32, i32) },
    #[error("invalid template file: {0}")]
    InvalidFile(String),
}

/// One relative move: step by `delta` if all `open` offsets are traversable
/// and all `solid` offsets are solid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MoveRule {
    pub delta: (i32, i32),
    pub open: Vec<(i32, i32)>,
    pub solid: Vec<(i32, i32)>,
}

/// A named, canonically ordered set of move rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MovementTemplate {
    name: String,
    rules: Vec<MoveRule>,
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    name: String,
    rules: Vec<MoveRule>,
}

impl MovementTemplate {
    /// Validates and canonicalizes (sorts and dedups) the rule list.
    pub fn new(name: &str, mut rules: Vec<MoveRule>) -> Result<MovementTemplate, TemplateError> {
        if rules.is_empty() {
            return Err(TemplateError::EmptyTemplate);
        }
        for rule in &rules {
            if !rule.open.contains(&rule.delta) {
                return Err(TemplateError::DeltaNotOpen { delta: rule.delta });
            }
            for &off in rule.open.iter().chain(rule.solid.iter()).chain([&rule.delta]) {
                if off.0.abs() > MAX_RULE_RADIUS || off.1.abs() > MAX_RULE_RADIUS {
                    return Err(TemplateError::OffsetOutOfRange { offset: off });
                }
            }
        }
        rules.sort();
        rules.dedup();
        Ok(MovementTemplate { name: name.to_string(), rules })
    }

    /// The shipped template for a builtin domain tag.
    pub fn builtin(domain: &str) -> Result<MovementTemplate, TemplateError> {
        let text = match domain {
            "cave" => include_str!("../data/cave.template.json"),
            "mario" => include_str!("../data/mario.template.json"),
            "supercat" => include_str!("../data/supercat.template.json"),
            other => return Err(TemplateError::UnknownDomain(other.to_string())),
        };
        MovementTemplate::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<MovementTemplate, TemplateError> {
        let file: TemplateFile =
            serde_json::from_str(text).map_err(|e| TemplateError::InvalidFile(e.to_string()))?;
        MovementTemplate::new(&file.name, file.rules)
    }

    pub fn to_json(&self) -> String {
        let file = TemplateFile { name: self.name.clone(), rules: self.rules.clone() };
        serde_json::to_string_pretty(&file).expect("template serialize")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rules(&self) -> &[MoveRule] {
        &self.rules
    }
}

/// Destinations of all rules applicable at `cell`. Offsets that leave the
/// grid make a rule inapplicable; they are never an error.
pub fn legal_moves(level: &Level, template: &MovementTemplate, cell: (usize, usize)) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    'rules: for rule in template.rules() {
        for &(dr, dc) in &rule.open {
            let (r, c) = (cell.0 as i64 + dr as i64, cell.1 as i64 + dc as i64);
            if !level.in_bounds(r, c) || !level.get(r as usize, c as usize).is_traversable() {
                continue 'rules;
            }
        }
        for &(dr, dc) in &rule.solid {
            let (r, c) = (cell.0 as i64 + dr as i64, cell.1 as i64 + dc as i64);
            if !level.in_bounds(r, c) || level.get(r as usize, c as usize).is_traversable() {
                continue 'rules;
            }
        }
        let dest = (cell.0 as i64 + rule.delta.0 as i64, cell.1 as i64 + rule.delta.1 as i64);
        out.push((dest.0 as usize, dest.1 as usize));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Result of the solvability oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachResult {
    pub solvable: bool,
    /// Shortest witness path (by move count) from start to goal, when solvable.
    pub path: Option<Vec<(usize, usize)>>,
    pub visited_count: usize,
}

/// Breadth-first search from the start tile; solvable iff the goal is reached.
pub fn check_solvable(level: &Level, template: &MovementTemplate) -> ReachResult {
    let start = level.start();
    let goal = level.goal();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; level.rows() * level.cols()];
    let mut seen = vec![false; level.rows() * level.cols()];
    let mut queue = VecDeque::new();
    seen[level.index(start.0, start.1)] = true;
    queue.push_back(start);
    let mut visited_count = 0usize;
    while let Some(cell) = queue.pop_front() {
        visited_count += 1;
        if cell == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while let Some(prev) = parent[level.index(cur.0, cur.1)] {
                path.push(prev);
                cur = prev;
            }
            path.reverse();
            return ReachResult { solvable: true, path: Some(path), visited_count };
        }
        for dest in legal_moves(level, template, cell) {
            let idx = level.index(dest.0, dest.1);
            if !seen[idx] {
                seen[idx] = true;
                parent[idx] = Some(cell);
                queue.push_back(dest);
            }
        }
    }
    ReachResult { solvable: false, path: None, visited_count }
}
