//! Exact 0-1 branch-and-bound with lazy reachability, configuration racing,
//! and LP / weighted-CNF exporters.
//!
//! The search is depth-first with row bound propagation and an objective
//! lower bound from committed weights. Programs built in lazy mode carry the
//! original level and movement template; candidate tile assignments are then
//! verified with the BFS oracle instead of layered reachability rows, and an
//! admissible reachability-distance bound (cheapest weighted start-to-goal
//! tunnel) both prunes the search and seeds the incumbent.

mod export;
mod search;

pub use export::{export_lp, export_wcnf};

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::csp::{ConstraintProgram, VarId, VarMap};
use crate::level::TileKind;
use search::{Search, Stop};

const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed program: {0}")]
    MalformedProgram(String),
    #[error("program cannot be exported: {0}")]
    UnsupportedConstruct(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branching {
    MostConstrainedFirst,
    LowestWeightFirst,
    InputOrder,
}

impl Branching {
    fn id(self) -> &'static str {
        match self {
            Branching::MostConstrainedFirst => "bb-most-constrained",
            Branching::LowestWeightFirst => "bb-lowest-weight",
            Branching::InputOrder => "bb-input-order",
        }
    }
}

/// One branch-and-bound configuration; racing runs several concurrently.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub config_id: String,
    pub branching: Branching,
    /// Seconds of wall clock before giving up.
    pub time_limit: f64,
    pub seed: u64,
    /// Build repair problems without layered reachability rows and verify
    /// candidates with the BFS oracle instead. Consumed at problem-build
    /// time; programs carrying a lazy context are always oracle-checked.
    pub use_lazy_oracle: bool,
}

impl SolverConfig {
    pub fn new(branching: Branching) -> SolverConfig {
        SolverConfig {
            config_id: branching.id().to_string(),
            branching,
            time_limit: 60.0,
            seed: 0,
            use_lazy_oracle: true,
        }
    }

    /// The three-configuration portfolio used for racing.
    pub fn default_portfolio() -> Vec<SolverConfig> {
        vec![
            SolverConfig::new(Branching::LowestWeightFirst),
            SolverConfig::new(Branching::MostConstrainedFirst),
            SolverConfig::new(Branching::InputOrder),
        ]
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::new(Branching::LowestWeightFirst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Timeout,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub assignment: Option<Vec<u8>>,
    pub objective: Option<f64>,
    pub nodes_explored: u64,
    pub wall_time: f64,
    pub config_id: String,
}

/// Shared cancellation flag; solvers poll it between nodes.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> CancelToken {
        CancelToken::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

fn validate(prog: &ConstraintProgram) -> Result<(), SolverError> {
    let n = prog.num_vars();
    for (i, row) in prog.rows().iter().enumerate() {
        for (v, _) in &row.terms {
            if *v as usize >= n {
                return Err(SolverError::MalformedProgram(format!(
                    "row {i} references variable {v} but the program has {n}"
                )));
            }
        }
        if let (Some(lb), Some(ub)) = (row.lb, row.ub) {
            if lb > ub {
                return Err(SolverError::MalformedProgram(format!("row {i} has lb {lb} > ub {ub}")));
            }
        }
    }
    if prog.weights().iter().any(|w| !w.is_finite()) {
        return Err(SolverError::MalformedProgram("non-finite objective weight".to_string()));
    }
    Ok(())
}

enum Decision {
    Cell(usize, usize),
    Var(VarId),
}

struct Driver<'a> {
    search: Search<'a>,
    prog: &'a ConstraintProgram,
    /// Cells in static branch order (lazy programs only).
    cell_order: Vec<(usize, usize)>,
    dynamic_cells: bool,
    var_order: Vec<VarId>,
    incumbent: Option<(f64, Vec<u8>)>,
    use_reach_bound: bool,
}

impl<'a> Driver<'a> {
    fn new(prog: &'a ConstraintProgram, cfg: &SolverConfig, deadline: Instant, cancel: &'a CancelToken) -> Driver<'a> {
        let search = Search::new(prog, deadline, cancel);
        let lazy = prog.lazy_reachability();
        let mut cell_order: Vec<(usize, usize)> = Vec::new();
        if let Some(ctx) = lazy {
            let (rows, cols) = (ctx.varmap.rows(), ctx.varmap.cols());
            cell_order = (0..rows * cols).map(|i| (i / cols, i % cols)).collect();
            if cfg.branching == Branching::LowestWeightFirst {
                cell_order.sort_by_key(|&(r, c)| (ctx.weights.get(r, c), r, c));
            }
        }
        let mut var_order: Vec<VarId> = (0..prog.num_vars() as VarId).collect();
        match cfg.branching {
            Branching::InputOrder => {}
            Branching::LowestWeightFirst => {
                var_order.sort_by(|a, b| {
                    prog.weight(*a)
                        .partial_cmp(&prog.weight(*b))
                        .unwrap()
                        .then(a.cmp(b))
                });
            }
            Branching::MostConstrainedFirst => {
                let mut occ = vec![0usize; prog.num_vars()];
                for row in prog.rows() {
                    for (v, _) in &row.terms {
                        occ[*v as usize] += 1;
                    }
                }
                var_order.sort_by(|a, b| occ[*b as usize].cmp(&occ[*a as usize]).then(a.cmp(b)));
            }
        }
        Driver {
            search,
            prog,
            cell_order,
            dynamic_cells: cfg.branching == Branching::MostConstrainedFirst,
            var_order,
            incumbent: None,
            use_reach_bound: lazy.is_some(),
        }
    }

    fn cell_possible_kinds(&self, cell: (usize, usize)) -> (bool, usize) {
        let ctx = self.prog.lazy_reachability().expect("cell branching requires lazy context");
        let mut decided = false;
        let mut possible = 0;
        for kind in TileKind::ALL {
            match self.search.values[ctx.varmap.tile_var(cell.0, cell.1, kind) as usize] {
                1 => decided = true,
                -1 => possible += 1,
                _ => {}
            }
        }
        (decided, possible)
    }

    fn next_decision(&self) -> Option<Decision> {
        if self.prog.lazy_reachability().is_some() {
            if self.dynamic_cells {
                let mut best: Option<((usize, usize), usize)> = None;
                for &cell in &self.cell_order {
                    let (decided, possible) = self.cell_possible_kinds(cell);
                    if !decided && best.as_ref().map_or(true, |(_, p)| possible < *p) {
                        best = Some((cell, possible));
                    }
                }
                if let Some((cell, _)) = best {
                    return Some(Decision::Cell(cell.0, cell.1));
                }
            } else {
                for &cell in &self.cell_order {
                    let (decided, _) = self.cell_possible_kinds(cell);
                    if !decided {
                        return Some(Decision::Cell(cell.0, cell.1));
                    }
                }
            }
        }
        self.var_order
            .iter()
            .find(|v| self.search.values[**v as usize] == -1)
            .map(|v| Some(Decision::Var(*v)))
            .unwrap_or(None)
    }

    fn record_leaf(&mut self, cap: f64) {
        let obj = self.search.committed;
        if obj > cap + EPS {
            return;
        }
        if let Some((best, _)) = &self.incumbent {
            if obj >= best - EPS {
                return;
            }
        }
        if !self.search.lazy_leaf_ok() {
            return;
        }
        self.incumbent = Some((obj, self.search.assignment()));
    }

    fn dfs(&mut self, cap: f64) -> Result<(), Stop> {
        self.search.tick()?;
        let decision = match self.next_decision() {
            None => {
                self.record_leaf(cap);
                return Ok(());
            }
            Some(d) => d,
        };
        // objective bound, tightened by the reachability distance when the
        // tile grid is still undecided (cell decisions come first, so var
        // nodes inherit their parent's reachability bound)
        let mut lb = self.search.objective_bound();
        if let Decision::Cell(..) = decision {
            if self.use_reach_bound {
                match self.search.reach_bound() {
                    None => return Ok(()),
                    Some((b, _)) => lb += b,
                }
            }
        }
        if lb > cap + EPS {
            return Ok(());
        }
        if let Some((best, _)) = &self.incumbent {
            if lb >= best - EPS {
                return Ok(());
            }
        }
        match decision {
            Decision::Cell(r, c) => {
                let ctx = self.prog.lazy_reachability().expect("cell decision");
                let varmap = ctx.varmap.clone();
                let original = ctx.original.get(r, c);
                let mut kinds = vec![original];
                kinds.extend(TileKind::ALL.into_iter().filter(|k| *k != original));
                for kind in kinds {
                    let var = varmap.tile_var(r, c, kind);
                    if self.search.values[var as usize] != -1 {
                        continue;
                    }
                    let mark = self.search.mark();
                    self.search.assign(var, 1);
                    if self.search.propagate() {
                        self.dfs(cap)?;
                    }
                    self.search.rollback(mark);
                }
            }
            Decision::Var(v) => {
                let first: u8 = if self.prog.weight(v) < 0.0 { 1 } else { 0 };
                for val in [first, 1 - first] {
                    let mark = self.search.mark();
                    self.search.assign(v, val);
                    if self.search.propagate() {
                        self.dfs(cap)?;
                    }
                    self.search.rollback(mark);
                }
            }
        }
        Ok(())
    }

    /// Root primal heuristic for lazy programs: open the cheapest witness
    /// tunnel and complete the assignment.
    fn try_root_candidate(&mut self) {
        let Some(ctx) = self.prog.lazy_reachability() else { return };
        let Some((_, path)) = self.search.reach_bound() else { return };
        let (rows, cols) = (ctx.varmap.rows(), ctx.varmap.cols());
        let varmap = ctx.varmap.clone();
        let original = ctx.original.clone();
        let mut kinds: Vec<TileKind> = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let decided = TileKind::ALL
                    .into_iter()
                    .find(|k| self.search.values[varmap.tile_var(r, c, *k) as usize] == 1);
                kinds.push(decided.unwrap_or_else(|| original.get(r, c)));
            }
        }
        for &(r, c) in &path {
            let idx = r * cols + c;
            if self.search.values[varmap.tile_var(r, c, TileKind::Solid) as usize] == -1
                && kinds[idx] == TileKind::Solid
            {
                kinds[idx] = TileKind::Empty;
            }
        }
        if let Some((obj, assignment)) = self.search.try_candidate(&kinds) {
            match &self.incumbent {
                Some((best, _)) if *best <= obj + EPS => {}
                _ => self.incumbent = Some((obj, assignment)),
            }
        }
    }
}

/// Exact branch-and-bound minimization of the program.
///
/// Returns `Optimal` with a minimizing assignment, `Infeasible`, or `Timeout`
/// (with the best incumbent found, if any). Respects `cancel` between nodes.
pub fn solve_bb(
    prog: &ConstraintProgram,
    cfg: &SolverConfig,
    cancel: &CancelToken,
) -> Result<SolveResult, SolverError> {
    validate(prog)?;
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(cfg.time_limit.max(0.0));
    let mut driver = Driver::new(prog, cfg, deadline, cancel);

    let finish = |driver: &Driver, status: SolveStatus, start: Instant| SolveResult {
        status,
        assignment: driver.incumbent.as_ref().map(|(_, a)| a.clone()),
        objective: driver.incumbent.as_ref().map(|(o, _)| *o),
        nodes_explored: driver.search.nodes,
        wall_time: start.elapsed().as_secs_f64(),
        config_id: cfg.config_id.clone(),
    };

    if !driver.search.propagate_all() {
        return Ok(finish(&driver, SolveStatus::Infeasible, start));
    }

    let integral_weights = prog.weights().iter().all(|w| *w >= 0.0 && w.fract() == 0.0);
    let outcome = if driver.use_reach_bound && integral_weights {
        solve_lazy_deepening(&mut driver)
    } else {
        driver.dfs(f64::INFINITY).map(|_| driver.incumbent.is_some())
    };
    match outcome {
        Ok(true) => Ok(finish(&driver, SolveStatus::Optimal, start)),
        Ok(false) => Ok(finish(&driver, SolveStatus::Infeasible, start)),
        Err(_) => Ok(finish(&driver, SolveStatus::Timeout, start)),
    }
}

/// Iterative cost-cap deepening for lazy repair problems with integral
/// weights. Each pass explores only completions of cost at most `cap`, so a
/// pass that finds a solution proves it optimal (all cheaper costs were
/// exhausted by earlier passes); the cap starts at the root bound and every
/// achievable objective is an integer.
fn solve_lazy_deepening(driver: &mut Driver) -> Result<bool, Stop> {
    let root_bound = match driver.search.reach_bound() {
        None => return Ok(false),
        Some((b, _)) => driver.search.objective_bound() + b,
    };
    driver.try_root_candidate();
    if let Some((obj, _)) = &driver.incumbent {
        if *obj <= root_bound + EPS {
            return Ok(true);
        }
    }
    let ceiling = driver.search.objective_ceiling();
    let mut cap = root_bound.round();
    loop {
        driver.dfs(cap)?;
        if let Some((obj, _)) = &driver.incumbent {
            if *obj <= cap + EPS {
                return Ok(true);
            }
        }
        cap += 1.0;
        if cap > ceiling + EPS {
            return Ok(driver.incumbent.is_some());
        }
    }
}

/// Outcome of a satisfaction-only search.
#[derive(Debug, Clone)]
pub enum FeasibleOutcome {
    Found { assignment: Vec<u8>, nodes: u64 },
    Infeasible,
    Timeout,
}

/// First-feasible depth-first search with seeded random ordering; used by
/// constrained level generation, where any feasible point is a valid level
/// and the seed provides diversity.
pub fn find_feasible(
    prog: &ConstraintProgram,
    varmap: Option<&VarMap>,
    cfg: &SolverConfig,
    cancel: &CancelToken,
) -> Result<FeasibleOutcome, SolverError> {
    validate(prog)?;
    let deadline = Instant::now() + Duration::from_secs_f64(cfg.time_limit.max(0.0));
    let mut search = Search::new(prog, deadline, cancel);
    if !search.propagate_all() {
        return Ok(FeasibleOutcome::Infeasible);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut kind_orders: Vec<[TileKind; 4]> = Vec::new();
    if let Some(vm) = varmap {
        cells = (0..vm.rows() * vm.cols()).map(|i| (i / vm.cols(), i % vm.cols())).collect();
        cells.shuffle(&mut rng);
        for _ in &cells {
            let mut terrain = [TileKind::Empty, TileKind::Solid];
            terrain.shuffle(&mut rng);
            let mut endpoints = [TileKind::Start, TileKind::Goal];
            endpoints.shuffle(&mut rng);
            kind_orders.push([terrain[0], terrain[1], endpoints[0], endpoints[1]]);
        }
    }
    let mut var_order: Vec<VarId> = (0..prog.num_vars() as VarId).collect();
    var_order.shuffle(&mut rng);

    fn go(
        search: &mut Search,
        varmap: Option<&VarMap>,
        cells: &[(usize, usize)],
        kind_orders: &[[TileKind; 4]],
        var_order: &[VarId],
    ) -> Result<bool, Stop> {
        search.tick()?;
        if let Some(vm) = varmap {
            for (i, &(r, c)) in cells.iter().enumerate() {
                let decided =
                    TileKind::ALL.into_iter().any(|k| search.values[vm.tile_var(r, c, k) as usize] == 1);
                if decided {
                    continue;
                }
                for kind in kind_orders[i] {
                    let var = vm.tile_var(r, c, kind);
                    if search.values[var as usize] != -1 {
                        continue;
                    }
                    let mark = search.mark();
                    search.assign(var, 1);
                    if search.propagate() && go(search, varmap, cells, kind_orders, var_order)? {
                        return Ok(true);
                    }
                    search.rollback(mark);
                }
                return Ok(false);
            }
        }
        match var_order.iter().find(|v| search.values[**v as usize] == -1) {
            None => Ok(search.lazy_leaf_ok()),
            Some(&v) => {
                for val in [0u8, 1] {
                    let mark = search.mark();
                    search.assign(v, val);
                    if search.propagate() && go(search, varmap, cells, kind_orders, var_order)? {
                        return Ok(true);
                    }
                    search.rollback(mark);
                }
                Ok(false)
            }
        }
    }

    match go(&mut search, varmap, &cells, &kind_orders, &var_order) {
        Ok(true) => Ok(FeasibleOutcome::Found { assignment: search.assignment(), nodes: search.nodes }),
        Ok(false) => Ok(FeasibleOutcome::Infeasible),
        Err(_) => Ok(FeasibleOutcome::Timeout),
    }
}

/// Races the configurations concurrently on one immutable program; the first
/// conclusive result (Optimal or Infeasible) wins and cancels the rest.
pub fn race(
    prog: &ConstraintProgram,
    configs: &[SolverConfig],
    time_limit: f64,
) -> Result<SolveResult, SolverError> {
    assert!(!configs.is_empty(), "race requires at least one configuration");
    validate(prog)?;
    let cancel = CancelToken::new();
    let winner: Mutex<Option<SolveResult>> = Mutex::new(None);
    let stragglers: Mutex<Vec<SolveResult>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for cfg in configs {
            let mut eff = cfg.clone();
            eff.time_limit = eff.time_limit.min(time_limit);
            let cancel = cancel.clone();
            let winner = &winner;
            let stragglers = &stragglers;
            scope.spawn(move || {
                let result = solve_bb(prog, &eff, &cancel).expect("program validated before racing");
                match result.status {
                    SolveStatus::Optimal | SolveStatus::Infeasible => {
                        let mut slot = winner.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(result);
                            cancel.cancel();
                        }
                    }
                    SolveStatus::Timeout => stragglers.lock().unwrap().push(result),
                }
            });
        }
    });
    let won = winner.into_inner().unwrap();
    Ok(won.unwrap_or_else(|| {
        let mut timeouts = stragglers.into_inner().unwrap();
        timeouts.sort_by(|a, b| a.config_id.cmp(&b.config_id));
        timeouts.into_iter().next().unwrap_or(SolveResult {
            status: SolveStatus::Timeout,
            assignment: None,
            objective: None,
            nodes_explored: 0,
            wall_time: time_limit,
            config_id: configs[0].config_id.clone(),
        })
    }))
}

/// Solver log CSV: `config_id,status,objective,nodes,wall_time_s`.
pub fn solver_log_csv(results: &[SolveResult]) -> String {
    let mut out = String::from("config_id,status,objective,nodes,wall_time_s\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.config_id,
            r.status,
            r.objective.map_or(String::new(), |o| format!("{o}")),
            r.nodes_explored,
            r.wall_time
        ));
    }
    out
}
