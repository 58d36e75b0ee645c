//! Constraint problem builders for weighted repair and unsolvable generation.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::csp::{ConstraintProgram, CspError, Literal, VarMap};
use crate::level::{Level, TileKind};
use crate::patterns::PatternRules;
use crate::reachability::{MovementTemplate, MoveRule};
use crate::weightgen::WeightGrid;

/// Context for verifying reachability at solver leaves instead of through
/// layered rows. Carried inside a [`ConstraintProgram`] built in lazy mode.
#[derive(Debug, Clone)]
pub struct LazyReachability {
    pub varmap: VarMap,
    pub original: Level,
    pub template: MovementTemplate,
    pub weights: WeightGrid,
}

/// Options for [`build_repair_problem`].
#[derive(Debug, Clone)]
pub struct RepairProblemOptions {
    /// Encode reachability with distance-layered marking variables. When
    /// false the program carries a [`LazyReachability`] context and the
    /// solver verifies candidate levels with the BFS oracle.
    pub layered_reachability: bool,
    /// Layer horizon; defaults to the cell count (a safe upper bound on the
    /// length of any simple path).
    pub horizon: Option<usize>,
}

impl Default for RepairProblemOptions {
    fn default() -> Self {
        RepairProblemOptions { layered_reachability: false, horizon: None }
    }
}

fn solid_lit(varmap: &VarMap, row: usize, col: usize) -> Literal {
    Literal::pos(varmap.tile_var(row, col, TileKind::Solid))
}

fn open_lit(varmap: &VarMap, row: usize, col: usize) -> Literal {
    // traversable == not solid, given per-cell one-hot
    Literal::neg(varmap.tile_var(row, col, TileKind::Solid))
}

fn offset_cell(rows: usize, cols: usize, cell: (usize, usize), off: (i32, i32)) -> Option<(usize, usize)> {
    let r = cell.0 as i64 + off.0 as i64;
    let c = cell.1 as i64 + off.1 as i64;
    if r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols {
        Some((r as usize, c as usize))
    } else {
        None
    }
}

/// Tile-kind literals that make `rule` applicable at `from`: all open offsets
/// traversable and all solid offsets solid. None if any offset leaves the grid.
fn rule_condition_lits(
    varmap: &VarMap,
    from: (usize, usize),
    rule: &MoveRule,
) -> Option<Vec<Literal>> {
    let (rows, cols) = (varmap.rows(), varmap.cols());
    let mut lits = Vec::with_capacity(rule.open.len() + rule.solid.len());
    for &off in &rule.open {
        let cell = offset_cell(rows, cols, from, off)?;
        lits.push(open_lit(varmap, cell.0, cell.1));
    }
    for &off in &rule.solid {
        let cell = offset_cell(rows, cols, from, off)?;
        lits.push(solid_lit(varmap, cell.0, cell.1));
    }
    Some(lits)
}

/// Per-cell one-hot constraints plus pattern adjacency constraints.
fn add_tile_scaffold(
    prog: &mut ConstraintProgram,
    varmap: &VarMap,
    patterns: &PatternRules,
) {
    let (rows, cols) = (varmap.rows(), varmap.cols());
    for r in 0..rows {
        for c in 0..cols {
            let lits: Vec<Literal> = TileKind::ALL.iter().map(|k| varmap.tile_lit(r, c, *k)).collect();
            prog.cnstr_count(&lits, 1, 1, None).expect("one-hot count");
        }
    }
    // kind at a cell implies an allowed kind at the right/below neighbor
    for r in 0..rows {
        for c in 0..cols {
            for kind in TileKind::ALL {
                let cond = varmap.tile_lit(r, c, kind);
                if c + 1 < cols {
                    let allowed: Vec<Literal> = TileKind::ALL
                        .iter()
                        .filter(|k| patterns.horizontal.contains(&(kind, **k)))
                        .map(|k| varmap.tile_lit(r, c + 1, *k))
                        .collect();
                    if allowed.is_empty() {
                        prog.cnstr_count(&[cond], 0, 0, None).expect("forbid kind");
                    } else {
                        prog.cnstr_implies_disj(cond, &allowed, None).expect("pattern row");
                    }
                }
                if r + 1 < rows {
                    let allowed: Vec<Literal> = TileKind::ALL
                        .iter()
                        .filter(|k| patterns.vertical.contains(&(kind, **k)))
                        .map(|k| varmap.tile_lit(r + 1, c, *k))
                        .collect();
                    if allowed.is_empty() {
                        prog.cnstr_count(&[cond], 0, 0, None).expect("forbid kind");
                    } else {
                        prog.cnstr_implies_disj(cond, &allowed, None).expect("pattern row");
                    }
                }
            }
        }
    }
}

/// Builds the weighted repair problem for an unsolvable level.
///
/// Hard constraints: per-cell one-hot, pattern adjacency, start and goal
/// pinned at their original cells, and start-to-goal reachability (layered
/// rows or a lazy oracle context). Soft constraints: keeping each cell's
/// original kind, weighted by the cell's entry in `weights`, so the optimal
/// objective is the minimal total weight of changed cells.
pub fn build_repair_problem(
    level: &Level,
    weights: &WeightGrid,
    template: &MovementTemplate,
    patterns: &PatternRules,
    options: &RepairProblemOptions,
) -> Result<(ConstraintProgram, VarMap), CspError> {
    if weights.rows() != level.rows() || weights.cols() != level.cols() {
        return Err(CspError::DimensionMismatch {
            w_rows: weights.rows(),
            w_cols: weights.cols(),
            l_rows: level.rows(),
            l_cols: level.cols(),
        });
    }
    let (rows, cols) = (level.rows(), level.cols());
    let mut prog = ConstraintProgram::new();
    let varmap = VarMap::allocate(&mut prog, rows, cols);
    add_tile_scaffold(&mut prog, &varmap, patterns);

    // endpoints pinned: original cells keep their kinds, no other cell may
    // hold a start or goal
    let start = level.start();
    let goal = level.goal();
    prog.cnstr_count(&[varmap.tile_lit(start.0, start.1, TileKind::Start)], 1, 1, None)?;
    prog.cnstr_count(&[varmap.tile_lit(goal.0, goal.1, TileKind::Goal)], 1, 1, None)?;
    for r in 0..rows {
        for c in 0..cols {
            if (r, c) != start {
                prog.cnstr_count(&[varmap.tile_lit(r, c, TileKind::Start)], 0, 0, None)?;
            }
            if (r, c) != goal {
                prog.cnstr_count(&[varmap.tile_lit(r, c, TileKind::Goal)], 0, 0, None)?;
            }
        }
    }

    if options.layered_reachability {
        add_layered_reachability(&mut prog, &varmap, template, start, goal, options.horizon);
    } else {
        prog.lazy = Some(LazyReachability {
            varmap: varmap.clone(),
            original: level.clone(),
            template: template.clone(),
            weights: weights.clone(),
        });
    }

    // soft same-kind constraints: deviating from the original costs the
    // cell's weight
    for r in 0..rows {
        for c in 0..cols {
            let original = varmap.tile_lit(r, c, level.get(r, c));
            prog.cnstr_count(&[original], 1, 1, Some(weights.get(r, c) as f64))?;
        }
    }
    Ok((prog, varmap))
}

/// Distance-layered reachability marking: `reach[v][k]` means "v is reachable
/// within k moves". Layer k requires support at layer k-1, grounding out at
/// the start cell, so cyclic self-support is impossible; forcing the goal at
/// the horizon makes feasibility equivalent to BFS solvability.
fn add_layered_reachability(
    prog: &mut ConstraintProgram,
    varmap: &VarMap,
    template: &MovementTemplate,
    start: (usize, usize),
    goal: (usize, usize),
    horizon: Option<usize>,
) {
    let (rows, cols) = (varmap.rows(), varmap.cols());
    let cells = rows * cols;
    let k_max = horizon.unwrap_or(cells).max(1);

    // predecessors[v] = (u, rule) moves landing on v
    let mut predecessors: Vec<Vec<((usize, usize), &MoveRule)>> = vec![Vec::new(); cells];
    for r in 0..rows {
        for c in 0..cols {
            for rule in template.rules() {
                if let Some(dest) = offset_cell(rows, cols, (r, c), rule.delta) {
                    if rule_condition_lits(varmap, (r, c), rule).is_some() {
                        predecessors[dest.0 * cols + dest.1].push(((r, c), rule));
                    }
                }
            }
        }
    }

    let reach: Vec<Vec<Literal>> = (0..cells)
        .map(|_| (0..=k_max).map(|_| Literal::pos(prog.make_var())).collect())
        .collect();

    for idx in 0..cells {
        let (lo, hi) = if (idx / cols, idx % cols) == start { (1, 1) } else { (0, 0) };
        prog.cnstr_count(&[reach[idx][0]], lo, hi, None).expect("layer zero pin");
    }
    for k in 1..=k_max {
        for idx in 0..cells {
            let cell = (idx / cols, idx % cols);
            let mut supports = vec![reach[idx][k - 1]];
            for (u, rule) in &predecessors[idx] {
                let mut lits = vec![reach[u.0 * cols + u.1][k - 1]];
                lits.extend(rule_condition_lits(varmap, *u, rule).expect("checked in bounds"));
                supports.push(prog.make_conj(&lits).expect("support conj"));
            }
            let _ = cell;
            prog.cnstr_implies_disj(reach[idx][k], &supports, None).expect("support row");
        }
    }
    let goal_idx = goal.0 * cols + goal.1;
    prog.cnstr_count(&[reach[goal_idx][k_max]], 1, 1, None).expect("goal reach pin");
}

/// Pattern-conforming level scaffold with exactly one start and one goal and
/// a small seeded random objective over tile variables for diversity. Used
/// for constrained generation of solvable levels (no reachability rows).
pub fn build_pattern_level_problem(
    rows: usize,
    cols: usize,
    patterns: &PatternRules,
    seed: u64,
) -> (ConstraintProgram, VarMap) {
    let mut prog = ConstraintProgram::new();
    let varmap = VarMap::allocate(&mut prog, rows, cols);
    add_tile_scaffold(&mut prog, &varmap, patterns);

    let start_lits: Vec<Literal> = all_cells(rows, cols)
        .map(|(r, c)| varmap.tile_lit(r, c, TileKind::Start))
        .collect();
    prog.cnstr_count(&start_lits, 1, 1, None).expect("one start");
    let goal_lits: Vec<Literal> = all_cells(rows, cols)
        .map(|(r, c)| varmap.tile_lit(r, c, TileKind::Goal))
        .collect();
    prog.cnstr_count(&goal_lits, 1, 1, None).expect("one goal");

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for (r, c) in all_cells(rows, cols) {
        for kind in TileKind::ALL {
            prog.set_weight(varmap.tile_var(r, c, kind), rng.random_range(0.0..1e-3));
        }
    }
    (prog, varmap)
}

/// Builds the unsolvable-generation problem: any feasible assignment decodes
/// to a pattern-conforming level whose goal is unreachable from its start.
///
/// Reachability-superset marking: the start cell is marked, marks propagate
/// across every move whose tile conditions hold, and the goal must stay
/// unmarked. The marked set of a feasible point is a superset of the truly
/// reachable set, so the unmarked goal certifies unreachability.
pub fn build_unsolvable_problem(
    rows: usize,
    cols: usize,
    template: &MovementTemplate,
    patterns: &PatternRules,
    seed: u64,
) -> (ConstraintProgram, VarMap) {
    let (mut prog, varmap) = build_pattern_level_problem(rows, cols, patterns, seed);
    let cells = rows * cols;
    let marks: Vec<Literal> = (0..cells).map(|_| Literal::pos(prog.make_var())).collect();

    for (r, c) in all_cells(rows, cols) {
        let idx = r * cols + c;
        // a start cell is marked; a goal cell must not be
        prog.cnstr_implies_disj(varmap.tile_lit(r, c, TileKind::Start), &[marks[idx]], None)
            .expect("start marked");
        prog.cnstr_implies_disj(varmap.tile_lit(r, c, TileKind::Goal), &[marks[idx].negated()], None)
            .expect("goal unmarked");
        // closure: an applicable move from a marked cell marks the destination
        for rule in template.rules() {
            if let Some(dest) = offset_cell(rows, cols, (r, c), rule.delta) {
                if let Some(mut lits) = rule_condition_lits(&varmap, (r, c), rule) {
                    lits.insert(0, marks[idx]);
                    let conj = prog.make_conj(&lits).expect("closure conj");
                    prog.cnstr_implies_disj(conj, &[marks[dest.0 * cols + dest.1]], None)
                        .expect("closure row");
                }
            }
        }
    }
    (prog, varmap)
}

fn all_cells(rows: usize, cols: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..rows).flat_map(move |r| (0..cols).map(move |c| (r, c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reachability::check_solvable;

    fn enumerate_feasible(prog: &ConstraintProgram) -> Vec<Vec<u8>> {
        let n = prog.num_vars();
        assert!(n <= 22, "enumeration only for small programs");
        let mut out = Vec::new();
        for bits in 0..1usize << n {
            let assignment: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
            if prog.feasible(&assignment) {
                out.push(assignment);
            }
        }
        out
    }

    #[test]
    fn one_by_two_unsolvable_is_infeasible() {
        // start and goal adjacent: the goal is always reachable, so no
        // feasible unsolvable level exists
        let template = MovementTemplate::builtin("cave").unwrap();
        let patterns = PatternRules::permissive("custom");
        let (prog, _) = build_unsolvable_problem(1, 2, &template, &patterns, 0);
        assert!(enumerate_feasible(&prog).is_empty());
    }

    #[test]
    fn one_by_three_unsolvable_needs_wall() {
        let template = MovementTemplate::builtin("cave").unwrap();
        let patterns = PatternRules::permissive("custom");
        let (prog, varmap) = build_unsolvable_problem(1, 3, &template, &patterns, 0);
        let feasible = enumerate_feasible(&prog);
        assert!(!feasible.is_empty());
        for assignment in &feasible {
            let level = varmap.decode_level(assignment, "custom").unwrap();
            assert!(!check_solvable(&level, &template).solvable, "level {:?}", level.to_text());
        }
    }

    #[test]
    fn repair_dimension_mismatch() {
        let level = Level::parse("{-}\n---").unwrap();
        let weights = WeightGrid::uniform(1, 3, 1);
        let template = MovementTemplate::builtin("cave").unwrap();
        let patterns = PatternRules::permissive("custom");
        let err = build_repair_problem(&level, &weights, &template, &patterns, &Default::default());
        assert!(matches!(err, Err(CspError::DimensionMismatch { .. })));
    }

    #[test]
    fn lazy_repair_carries_context() {
        let level = Level::parse("{X}").unwrap();
        let weights = WeightGrid::uniform(1, 3, 1);
        let template = MovementTemplate::builtin("cave").unwrap();
        let patterns = PatternRules::permissive("custom");
        let (prog, _) =
            build_repair_problem(&level, &weights, &template, &patterns, &Default::default()).unwrap();
        assert!(prog.lazy_reachability().is_some());
        let (prog, _) = build_repair_problem(
            &level,
            &weights,
            &template,
            &patterns,
            &RepairProblemOptions { layered_reachability: true, horizon: None },
        )
        .unwrap();
        assert!(prog.lazy_reachability().is_none());
    }

    #[test]
    fn pattern_scaffold_levels_conform() {
        let patterns = PatternRules::builtin("cave").unwrap();
        let (prog, varmap) = build_pattern_level_problem(2, 2, &patterns, 3);
        let feasible = enumerate_feasible(&prog);
        assert!(!feasible.is_empty());
        for assignment in &feasible {
            let level = varmap.decode_level(assignment, "cave").unwrap();
            assert!(crate::patterns::check_patterns(&level, &patterns).is_empty());
        }
    }
}
