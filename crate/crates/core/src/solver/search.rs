//! Depth-first search state: trail, row bound propagation, and the
//! reachability-aware lower bound used for lazy repair problems.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use crate::csp::{ConstraintProgram, LazyReachability, VarId};
use crate::level::TileKind;
use crate::reachability::check_solvable;

use super::CancelToken;

const BIG: i64 = i64::MAX / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Stop {
    Timeout,
    Cancelled,
}

pub(super) struct Search<'a> {
    prog: &'a ConstraintProgram,
    pub(super) values: Vec<i8>,
    trail: Vec<VarId>,
    row_min: Vec<i64>,
    row_max: Vec<i64>,
    row_lb: Vec<i64>,
    row_ub: Vec<i64>,
    occ: Vec<Vec<(u32, i64)>>,
    in_queue: Vec<bool>,
    queue: VecDeque<u32>,
    /// Objective committed by decided variables.
    pub(super) committed: f64,
    /// Sum of min(0, c) over undecided variables.
    neg_slack: f64,
    pub(super) nodes: u64,
    deadline: Instant,
    cancel: &'a CancelToken,
    pub(super) lazy: Option<&'a LazyReachability>,
}

impl<'a> Search<'a> {
    pub(super) fn new(prog: &'a ConstraintProgram, deadline: Instant, cancel: &'a CancelToken) -> Search<'a> {
        let n = prog.num_vars();
        let mut occ: Vec<Vec<(u32, i64)>> = vec![Vec::new(); n];
        let mut row_min = Vec::with_capacity(prog.rows().len());
        let mut row_max = Vec::with_capacity(prog.rows().len());
        let mut row_lb = Vec::with_capacity(prog.rows().len());
        let mut row_ub = Vec::with_capacity(prog.rows().len());
        for (ri, row) in prog.rows().iter().enumerate() {
            let mut lo = 0;
            let mut hi = 0;
            for &(v, a) in &row.terms {
                occ[v as usize].push((ri as u32, a));
                lo += a.min(0);
                hi += a.max(0);
            }
            row_min.push(lo);
            row_max.push(hi);
            row_lb.push(row.lb.unwrap_or(-BIG));
            row_ub.push(row.ub.unwrap_or(BIG));
        }
        let neg_slack = prog.weights().iter().map(|w| w.min(0.0)).sum();
        let lazy = prog.lazy_reachability();
        Search {
            prog,
            values: vec![-1; n],
            trail: Vec::with_capacity(n),
            row_min,
            row_max,
            row_lb,
            row_ub,
            occ,
            in_queue: vec![false; prog.rows().len()],
            queue: VecDeque::new(),
            committed: 0.0,
            neg_slack,
            nodes: 0,
            deadline,
            cancel,
            lazy,
        }
    }

    pub(super) fn tick(&mut self) -> Result<(), Stop> {
        self.nodes += 1;
        if self.cancel.is_cancelled() {
            return Err(Stop::Cancelled);
        }
        if Instant::now() >= self.deadline {
            return Err(Stop::Timeout);
        }
        Ok(())
    }

    pub(super) fn mark(&self) -> usize {
        self.trail.len()
    }

    pub(super) fn rollback(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().unwrap();
            let val = self.values[v as usize];
            debug_assert!(val >= 0);
            let w = self.prog.weight(v);
            self.committed -= w * val as f64;
            self.neg_slack += w.min(0.0);
            for &(ri, a) in &self.occ[v as usize] {
                self.row_min[ri as usize] -= a * val as i64 - a.min(0);
                self.row_max[ri as usize] -= a * val as i64 - a.max(0);
            }
            self.values[v as usize] = -1;
        }
        self.queue.clear();
        self.in_queue.iter_mut().for_each(|f| *f = false);
    }

    fn enqueue_rows(&mut self, var: VarId) {
        for i in 0..self.occ[var as usize].len() {
            let ri = self.occ[var as usize][i].0;
            if !self.in_queue[ri as usize] {
                self.in_queue[ri as usize] = true;
                self.queue.push_back(ri);
            }
        }
    }

    /// Records the assignment and updates row reach bounds. Callers must run
    /// [`Search::propagate`] afterwards.
    pub(super) fn assign(&mut self, var: VarId, val: u8) {
        debug_assert_eq!(self.values[var as usize], -1);
        self.values[var as usize] = val as i8;
        self.trail.push(var);
        let w = self.prog.weight(var);
        self.committed += w * val as f64;
        self.neg_slack -= w.min(0.0);
        for i in 0..self.occ[var as usize].len() {
            let (ri, a) = self.occ[var as usize][i];
            self.row_min[ri as usize] += a * val as i64 - a.min(0);
            self.row_max[ri as usize] += a * val as i64 - a.max(0);
        }
        self.enqueue_rows(var);
    }

    /// Fixpoint bound propagation over queued rows; false on conflict.
    pub(super) fn propagate(&mut self) -> bool {
        while let Some(ri) = self.queue.pop_front() {
            self.in_queue[ri as usize] = false;
            let r = ri as usize;
            if self.row_min[r] > self.row_ub[r] || self.row_max[r] < self.row_lb[r] {
                return false;
            }
            let terms = &self.prog.rows()[r].terms;
            let mut forced: Option<(VarId, u8)> = None;
            for &(v, a) in terms {
                if self.values[v as usize] != -1 {
                    continue;
                }
                let min_if1 = self.row_min[r] + a.max(0);
                let max_if1 = self.row_max[r] + a.min(0);
                let ok1 = min_if1 <= self.row_ub[r] && max_if1 >= self.row_lb[r];
                let min_if0 = self.row_min[r] - a.min(0);
                let max_if0 = self.row_max[r] - a.max(0);
                let ok0 = min_if0 <= self.row_ub[r] && max_if0 >= self.row_lb[r];
                match (ok0, ok1) {
                    (false, false) => return false,
                    (false, true) => forced = Some((v, 1)),
                    (true, false) => forced = Some((v, 0)),
                    (true, true) => continue,
                }
                break;
            }
            if let Some((v, val)) = forced {
                self.assign(v, val);
                // re-examine this row for further forcings
                if !self.in_queue[r] {
                    self.in_queue[r] = true;
                    self.queue.push_back(ri);
                }
            }
        }
        true
    }

    /// Seeds the queue with every row (used once at the root).
    pub(super) fn propagate_all(&mut self) -> bool {
        for ri in 0..self.prog.rows().len() {
            if !self.in_queue[ri] {
                self.in_queue[ri] = true;
                self.queue.push_back(ri as u32);
            }
        }
        self.propagate()
    }

    /// Objective lower bound for any completion of the current partial
    /// assignment (committed weight plus negative-weight slack).
    pub(super) fn objective_bound(&self) -> f64 {
        self.committed + self.neg_slack
    }

    pub(super) fn all_assigned(&self) -> bool {
        self.values.iter().all(|v| *v != -1)
    }

    pub(super) fn assignment(&self) -> Vec<u8> {
        self.values.iter().map(|v| *v as u8).collect()
    }

    /// Maximum achievable objective, used to terminate cost-cap deepening.
    pub(super) fn objective_ceiling(&self) -> f64 {
        self.prog.weights().iter().map(|w| w.max(0.0)).sum()
    }

    // ---- lazy-reachability helpers -------------------------------------

    fn kind_possible(&self, ctx: &LazyReachability, cell: (usize, usize), kind: TileKind) -> bool {
        self.values[ctx.varmap.tile_var(cell.0, cell.1, kind) as usize] != 0
    }

    /// Whether the cell can still end up traversable (decided or not).
    fn openable(&self, ctx: &LazyReachability, cell: (usize, usize)) -> bool {
        self.kind_possible(ctx, cell, TileKind::Empty)
            || self.kind_possible(ctx, cell, TileKind::Start)
            || self.kind_possible(ctx, cell, TileKind::Goal)
    }

    /// Cost of making `cell` traversable on a witness path, under the current
    /// partial assignment. None when the cell can no longer be open.
    fn open_cost(&self, ctx: &LazyReachability, cell: (usize, usize)) -> Option<f64> {
        let solid_var = ctx.varmap.tile_var(cell.0, cell.1, TileKind::Solid);
        match self.values[solid_var as usize] {
            1 => None,
            0 => Some(0.0), // already flipped or originally open; any cost is committed
            _ => {
                if !self.openable(ctx, cell) {
                    return None;
                }
                if ctx.original.get(cell.0, cell.1) == TileKind::Solid {
                    Some(ctx.weights.get(cell.0, cell.1) as f64)
                } else {
                    Some(0.0)
                }
            }
        }
    }

    /// Admissible lower bound on the future cost of restoring reachability:
    /// cheapest start-to-goal path where entering a cell that still holds its
    /// original solid tile costs that cell's weight. Cells on any witness path
    /// must end up traversable, path cells are distinct, and costs of cells
    /// already flipped are part of the committed sum, so this never
    /// overestimates. Returns the bound and the argmin path.
    pub(super) fn reach_bound(&self) -> Option<(f64, Vec<(usize, usize)>)> {
        let ctx = self.lazy.expect("reach_bound requires a lazy context");
        let (rows, cols) = (ctx.original.rows(), ctx.original.cols());
        let start = ctx.original.start();
        let goal = ctx.original.goal();
        let idx = |cell: (usize, usize)| cell.0 * cols + cell.1;

        let mut dist = vec![f64::INFINITY; rows * cols];
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; rows * cols];
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
        // f64 costs are small integral weights; scale to u64 for the heap
        let scale = |c: f64| (c * 1024.0) as u64;
        dist[idx(start)] = 0.0;
        heap.push(Reverse((0, idx(start))));
        while let Some(Reverse((d, u))) = heap.pop() {
            let cell = (u / cols, u % cols);
            if d > scale(dist[u]) {
                continue;
            }
            if cell == goal {
                let mut path = vec![goal];
                let mut cur = goal;
                while let Some(p) = parent[idx(cur)] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some((dist[u], path));
            }
            'rules: for rule in ctx.template.rules() {
                let dest = (cell.0 as i64 + rule.delta.0 as i64, cell.1 as i64 + rule.delta.1 as i64);
                if dest.0 < 0 || dest.1 < 0 || dest.0 >= rows as i64 || dest.1 >= cols as i64 {
                    continue;
                }
                let dest = (dest.0 as usize, dest.1 as usize);
                for &(dr, dc) in rule.open.iter() {
                    let p = (cell.0 as i64 + dr as i64, cell.1 as i64 + dc as i64);
                    if p.0 < 0 || p.1 < 0 || p.0 >= rows as i64 || p.1 >= cols as i64 {
                        continue 'rules;
                    }
                    let p = (p.0 as usize, p.1 as usize);
                    if !self.openable(ctx, p) {
                        continue 'rules;
                    }
                }
                for &(dr, dc) in rule.solid.iter() {
                    let p = (cell.0 as i64 + dr as i64, cell.1 as i64 + dc as i64);
                    if p.0 < 0 || p.1 < 0 || p.0 >= rows as i64 || p.1 >= cols as i64 {
                        continue 'rules;
                    }
                    let p = (p.0 as usize, p.1 as usize);
                    if !self.kind_possible(ctx, p, TileKind::Solid) {
                        continue 'rules;
                    }
                }
                let Some(step) = self.open_cost(ctx, dest) else { continue };
                let nd = dist[u] + step;
                if nd < dist[idx(dest)] {
                    dist[idx(dest)] = nd;
                    parent[idx(dest)] = Some(cell);
                    heap.push(Reverse((scale(nd), idx(dest))));
                }
            }
        }
        None
    }

    /// Decodes the tile variables and runs the BFS oracle. Only meaningful on
    /// full assignments of lazy programs.
    pub(super) fn lazy_leaf_ok(&self) -> bool {
        let Some(ctx) = self.lazy else { return true };
        let assignment = self.assignment();
        match ctx.varmap.decode_level(&assignment, ctx.original.domain()) {
            Ok(level) => check_solvable(&level, &ctx.template).solvable,
            Err(_) => false,
        }
    }

    /// Tries to complete the current state with the given tile kinds (cells in
    /// row-major order), deciding leftover variables cheap-value-first.
    /// Returns the objective and assignment when the completion is feasible
    /// and passes the lazy oracle; always rolls back.
    pub(super) fn try_candidate(&mut self, kinds: &[TileKind]) -> Option<(f64, Vec<u8>)> {
        let ctx = self.lazy?;
        let varmap = ctx.varmap.clone();
        let mark = self.mark();
        let mut ok = true;
        'outer: for r in 0..varmap.rows() {
            for c in 0..varmap.cols() {
                let kind = kinds[r * varmap.cols() + c];
                let var = varmap.tile_var(r, c, kind);
                match self.values[var as usize] {
                    1 => continue,
                    0 => {
                        ok = false;
                        break 'outer;
                    }
                    _ => {
                        self.assign(var, 1);
                        if !self.propagate() {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
            }
        }
        if ok {
            ok = self.complete_cheapest();
        }
        let result = if ok && self.all_assigned() && self.lazy_leaf_ok() {
            Some((self.committed, self.assignment()))
        } else {
            None
        };
        self.rollback(mark);
        result
    }

    /// Assigns every remaining variable its cheaper value where feasible.
    fn complete_cheapest(&mut self) -> bool {
        for v in 0..self.values.len() {
            if self.values[v] != -1 {
                continue;
            }
            let first = if self.prog.weight(v as VarId) < 0.0 { 1u8 } else { 0u8 };
            let mark = self.mark();
            self.assign(v as VarId, first);
            if self.propagate() {
                continue;
            }
            self.rollback(mark);
            self.assign(v as VarId, 1 - first);
            if !self.propagate() {
                return false;
            }
        }
        true
    }
}
