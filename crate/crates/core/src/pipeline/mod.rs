//! End-to-end pipeline: dataset generation, attribution-guided repair,
//! experiment harness, statistics, and plot data.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{attribute, AttributionMethod};
use crate::classifier::{ClassifierError, LabeledDataset, MlpModel, Solvability};
use crate::csp::{build_pattern_level_problem, build_repair_problem, build_unsolvable_problem, CspError};
use crate::level::{diff_cells, Level, LevelError};
use crate::patterns::{builtin_exemplar, check_patterns, PatternError, PatternRules};
use crate::reachability::{check_solvable, MovementTemplate, TemplateError};
use crate::solver::{
    find_feasible, race, FeasibleOutcome, SolveStatus, SolverConfig, SolverError, CancelToken,
};
use crate::svg::CumulativeSeries;
use crate::weightgen::{attributions_to_weights, WeightError, WeightGenConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Csp(#[from] CspError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("generation quota unreachable: got {got}/{needed} after {attempts} attempts")]
    QuotaUnreachable { needed: usize, got: usize, attempts: usize },
    #[error("no completed repair rows to summarize")]
    NoCompletedRows,
    #[error("method {0} requires a trained model")]
    ModelRequired(AttributionMethod),
    #[error("repaired level failed verification: {0}")]
    VerificationFailed(String),
    #[error("invalid file: {0}")]
    InvalidFile(String),
}

/// Canonical grid dimensions per domain.
pub fn domain_dims(domain: &str) -> (usize, usize) {
    match domain {
        "cave" => (15, 12),
        "mario" => (14, 18),
        "supercat" => (20, 20),
        _ => (10, 10),
    }
}

// ---------------------------------------------------------------------------
// dataset generation
// ---------------------------------------------------------------------------

/// One dataset line: the serialized level, its oracle label, and provenance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetRecord {
    pub text: String,
    pub solvable: bool,
    pub domain: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// Seeded random pattern-conforming levels, labeled by the BFS oracle.
    Sampled,
    /// Levels solved out of the constraint builders (unreachability rows for
    /// the unsolvable class), then oracle-verified.
    Constrained,
}

impl std::str::FromStr for GenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sampled" => Ok(GenMode::Sampled),
            "constrained" => Ok(GenMode::Constrained),
            other => Err(format!("unknown generation mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub domain: String,
    pub n_per_class: usize,
    pub mode: GenMode,
    pub seed: u64,
    pub solid_density: f64,
    /// Attempts allowed before giving up on a quota (0 = 500 per requested level).
    pub attempt_budget: usize,
}

impl GenConfig {
    pub fn new(domain: &str, n_per_class: usize, mode: GenMode, seed: u64) -> GenConfig {
        GenConfig {
            domain: domain.to_string(),
            n_per_class,
            mode,
            seed,
            solid_density: 0.35,
            attempt_budget: 0,
        }
    }

    fn budget(&self) -> usize {
        if self.attempt_budget > 0 {
            self.attempt_budget
        } else {
            500 * self.n_per_class.max(1)
        }
    }
}

/// Copies the exemplar's endpoint neighborhood onto the sampled grid, so
/// sampled levels reproduce the start/goal surroundings the patterns allow.
fn stamp_pocket(
    cells: &mut [crate::level::TileKind],
    rows: usize,
    cols: usize,
    at: (usize, usize),
    exemplar: &Level,
    endpoint: (usize, usize),
) {
    for (dr, dc) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
        let src = (endpoint.0 as i64 + dr as i64, endpoint.1 as i64 + dc as i64);
        let dst = (at.0 as i64 + dr as i64, at.1 as i64 + dc as i64);
        if src.0 < 0 || src.1 < 0 || src.0 >= exemplar.rows() as i64 || src.1 >= exemplar.cols() as i64 {
            continue;
        }
        if dst.0 < 0 || dst.1 < 0 || dst.0 >= rows as i64 || dst.1 >= cols as i64 {
            continue;
        }
        cells[dst.0 as usize * cols + dst.1 as usize] =
            exemplar.get(src.0 as usize, src.1 as usize);
    }
}

fn sample_level(
    rng: &mut ChaCha12Rng,
    rows: usize,
    cols: usize,
    density: f64,
    domain: &str,
    exemplar: &Level,
    patterns: &PatternRules,
) -> Option<Level> {
    use crate::level::TileKind;
    let mut cells: Vec<TileKind> = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < density { TileKind::Solid } else { TileKind::Empty })
        .collect();
    let start = (rng.random_range(0..rows), rng.random_range(0..cols));
    let goal = (rng.random_range(0..rows), rng.random_range(0..cols));
    let dist = start.0.abs_diff(goal.0) + start.1.abs_diff(goal.1);
    if dist < 3 {
        return None;
    }
    stamp_pocket(&mut cells, rows, cols, start, exemplar, exemplar.start());
    stamp_pocket(&mut cells, rows, cols, goal, exemplar, exemplar.goal());
    cells[start.0 * cols + start.1] = TileKind::Start;
    cells[goal.0 * cols + goal.1] = TileKind::Goal;
    let level = Level::new(rows, cols, cells, domain).ok()?;
    if check_patterns(&level, patterns).is_empty() {
        Some(level)
    } else {
        None
    }
}

/// Generates `n_per_class` solvable and unsolvable levels; every label is
/// verified by the BFS oracle before the record is emitted.
pub fn gen_dataset(cfg: &GenConfig) -> Result<Vec<DatasetRecord>, PipelineError> {
    let template = MovementTemplate::builtin(&cfg.domain)?;
    let patterns = PatternRules::builtin(&cfg.domain)?;
    let exemplar = builtin_exemplar(&cfg.domain)?;
    let (rows, cols) = domain_dims(&cfg.domain);

    let mut solvable: Vec<DatasetRecord> = Vec::new();
    let mut unsolvable: Vec<DatasetRecord> = Vec::new();
    let budget = cfg.budget();
    let mut attempts = 0usize;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    while (solvable.len() < cfg.n_per_class || unsolvable.len() < cfg.n_per_class)
        && attempts < budget
    {
        attempts += 1;
        let level = match cfg.mode {
            GenMode::Sampled => {
                match sample_level(&mut rng, rows, cols, cfg.solid_density, &cfg.domain, &exemplar, &patterns)
                {
                    Some(level) => level,
                    None => continue,
                }
            }
            GenMode::Constrained => {
                let attempt_seed = cfg.seed.wrapping_add(attempts as u64);
                let need_unsolvable = unsolvable.len() < cfg.n_per_class;
                let (prog, varmap) = if need_unsolvable {
                    build_unsolvable_problem(rows, cols, &template, &patterns, attempt_seed)
                } else {
                    build_pattern_level_problem(rows, cols, &patterns, attempt_seed)
                };
                let solver_cfg = SolverConfig { seed: attempt_seed, time_limit: 30.0, ..Default::default() };
                match find_feasible(&prog, Some(&varmap), &solver_cfg, &CancelToken::new())? {
                    FeasibleOutcome::Found { assignment, .. } => {
                        varmap.decode_level(&assignment, &cfg.domain)?
                    }
                    _ => continue,
                }
            }
        };
        let is_solvable = check_solvable(&level, &template).solvable;
        let bucket = if is_solvable { &mut solvable } else { &mut unsolvable };
        if bucket.len() < cfg.n_per_class {
            bucket.push(DatasetRecord {
                text: level.to_text(),
                solvable: is_solvable,
                domain: cfg.domain.clone(),
                seed: cfg.seed.wrapping_add(attempts as u64),
            });
        }
    }
    if solvable.len() < cfg.n_per_class || unsolvable.len() < cfg.n_per_class {
        return Err(PipelineError::QuotaUnreachable {
            needed: 2 * cfg.n_per_class,
            got: solvable.len() + unsolvable.len(),
            attempts,
        });
    }
    let mut out = solvable;
    out.extend(unsolvable);
    Ok(out)
}

/// Generates `n` oracle-verified unsolvable levels for repair experiments.
pub fn gen_unsolvable_levels(
    domain: &str,
    n: usize,
    mode: GenMode,
    seed: u64,
) -> Result<Vec<Level>, PipelineError> {
    let template = MovementTemplate::builtin(domain)?;
    let patterns = PatternRules::builtin(domain)?;
    let exemplar = builtin_exemplar(domain)?;
    let (rows, cols) = domain_dims(domain);
    let mut out = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let budget = 500 * n.max(1);
    let mut attempts = 0usize;
    while out.len() < n && attempts < budget {
        attempts += 1;
        let level = match mode {
            GenMode::Sampled => {
                match sample_level(&mut rng, rows, cols, 0.35, domain, &exemplar, &patterns) {
                    Some(level) => level,
                    None => continue,
                }
            }
            GenMode::Constrained => {
                let attempt_seed = seed.wrapping_add(attempts as u64);
                let (prog, varmap) = build_unsolvable_problem(rows, cols, &template, &patterns, attempt_seed);
                let solver_cfg = SolverConfig { seed: attempt_seed, time_limit: 30.0, ..Default::default() };
                match find_feasible(&prog, Some(&varmap), &solver_cfg, &CancelToken::new())? {
                    FeasibleOutcome::Found { assignment, .. } => varmap.decode_level(&assignment, domain)?,
                    _ => continue,
                }
            }
        };
        if !check_solvable(&level, &template).solvable {
            out.push(level);
        }
    }
    if out.len() < n {
        return Err(PipelineError::QuotaUnreachable { needed: n, got: out.len(), attempts });
    }
    Ok(out)
}

pub fn dataset_to_jsonl(records: &[DatasetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialize"));
        out.push('\n');
    }
    out
}

pub fn dataset_from_jsonl(text: &str) -> Result<Vec<DatasetRecord>, PipelineError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| PipelineError::InvalidFile(e.to_string())))
        .collect()
}

/// Parses records into one-hot tensors with unsolvable as the positive label.
pub fn dataset_to_labeled(records: &[DatasetRecord]) -> Result<LabeledDataset, PipelineError> {
    let mut items = Vec::with_capacity(records.len());
    for r in records {
        let level = Level::parse_with_domain(&r.text, &r.domain)?;
        items.push((level.to_onehot(), Solvability::from_solvable(r.solvable)));
    }
    Ok(LabeledDataset::new(items))
}

// ---------------------------------------------------------------------------
// repair
// ---------------------------------------------------------------------------

/// Everything a repair run needs besides the level and method.
#[derive(Debug, Clone)]
pub struct RepairSettings {
    pub solver_configs: Vec<SolverConfig>,
    pub time_limit: f64,
    pub ig_steps: usize,
    pub weight_cfg: WeightGenConfig,
}

impl Default for RepairSettings {
    fn default() -> Self {
        RepairSettings {
            solver_configs: SolverConfig::default_portfolio(),
            time_limit: 60.0,
            ig_steps: 128,
            weight_cfg: WeightGenConfig::default(),
        }
    }
}

/// Outcome of one (level, method) repair attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub level_id: String,
    pub method: AttributionMethod,
    pub status: SolveStatus,
    /// Total wall clock, including attribution for SHAP-style/IG.
    pub wall_time_s: f64,
    pub attribution_time_s: f64,
    pub changes: usize,
    pub objective: Option<f64>,
    pub winning_config: String,
}

/// Attribution, weight generation, problem construction, racing, and
/// verification for a single level. Optimal outcomes carry a repaired level
/// that passes the BFS oracle and the pattern check.
pub fn repair_level(
    level_id: &str,
    level: &Level,
    method: AttributionMethod,
    model: Option<&MlpModel>,
    template: &MovementTemplate,
    rules: &PatternRules,
    settings: &RepairSettings,
) -> Result<(RepairOutcome, Option<Level>), PipelineError> {
    let t0 = Instant::now();
    let (attribution, attribution_time_s) = match method {
        AttributionMethod::Uniform => (crate::attribution::uniform_attribution(level), 0.0),
        _ => {
            let model = model.ok_or(PipelineError::ModelRequired(method))?;
            let ta = Instant::now();
            let grid = attribute(model, level, method, settings.ig_steps)?;
            (grid, ta.elapsed().as_secs_f64())
        }
    };
    let weights = attributions_to_weights(&attribution, &settings.weight_cfg)?;
    let lazy = settings.solver_configs.iter().all(|c| c.use_lazy_oracle);
    let (prog, varmap) = build_repair_problem(
        level,
        &weights,
        template,
        rules,
        &crate::csp::RepairProblemOptions { layered_reachability: !lazy, horizon: None },
    )?;
    let result = race(&prog, &settings.solver_configs, settings.time_limit)?;
    let wall_time_s = t0.elapsed().as_secs_f64();

    let mut repaired = None;
    let mut changes = 0;
    if result.status == SolveStatus::Optimal {
        let assignment = result
            .assignment
            .as_ref()
            .ok_or_else(|| PipelineError::VerificationFailed("optimal without assignment".into()))?;
        let fixed = varmap.decode_level(assignment, level.domain())?;
        if !check_solvable(&fixed, template).solvable {
            return Err(PipelineError::VerificationFailed(format!(
                "{level_id}: repaired level fails the reachability oracle"
            )));
        }
        if !check_patterns(&fixed, rules).is_empty() {
            return Err(PipelineError::VerificationFailed(format!(
                "{level_id}: repaired level violates pattern rules"
            )));
        }
        changes = diff_cells(level, &fixed)?.len();
        repaired = Some(fixed);
    }
    Ok((
        RepairOutcome {
            level_id: level_id.to_string(),
            method,
            status: result.status,
            wall_time_s,
            attribution_time_s,
            changes,
            objective: result.objective,
            winning_config: result.config_id,
        },
        repaired,
    ))
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub domain: String,
    pub n_levels: usize,
    pub methods: Vec<AttributionMethod>,
    pub seed: u64,
    pub gen_mode: GenMode,
    pub settings: RepairSettings,
}

/// Generates unsolvable levels and repairs each with every method; one
/// outcome row per (level, method). All methods see the same level sequence.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    model: Option<&MlpModel>,
) -> Result<Vec<RepairOutcome>, PipelineError> {
    let template = MovementTemplate::builtin(&cfg.domain)?;
    let rules = PatternRules::builtin(&cfg.domain)?;
    let levels = gen_unsolvable_levels(&cfg.domain, cfg.n_levels, cfg.gen_mode, cfg.seed)?;
    let mut outcomes = Vec::with_capacity(levels.len() * cfg.methods.len());
    for (i, level) in levels.iter().enumerate() {
        let level_id = format!("{}-{}-{:04}", cfg.domain, cfg.seed, i);
        for &method in &cfg.methods {
            let (outcome, _) =
                repair_level(&level_id, level, method, model, &template, &rules, &cfg.settings)?;
            outcomes.push(outcome);
        }
    }
    Ok(outcomes)
}

pub fn outcomes_to_csv(outcomes: &[RepairOutcome]) -> String {
    let mut out =
        String::from("level_id,method,status,wall_time_s,attribution_time_s,changes,objective,winning_config\n");
    for o in outcomes {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            o.level_id,
            o.method,
            o.status,
            o.wall_time_s,
            o.attribution_time_s,
            o.changes,
            o.objective.map_or(String::new(), |v| format!("{v}")),
            o.winning_config,
        ));
    }
    out
}

pub fn outcomes_from_csv(text: &str) -> Result<Vec<RepairOutcome>, PipelineError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| PipelineError::InvalidFile("empty csv".into()))?;
    if !header.starts_with("level_id,method,status") {
        return Err(PipelineError::InvalidFile(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(PipelineError::InvalidFile(format!("bad row {line:?}")));
        }
        let status = match fields[2] {
            "optimal" => SolveStatus::Optimal,
            "infeasible" => SolveStatus::Infeasible,
            "timeout" => SolveStatus::Timeout,
            other => return Err(PipelineError::InvalidFile(format!("bad status {other:?}"))),
        };
        out.push(RepairOutcome {
            level_id: fields[0].to_string(),
            method: fields[1]
                .parse()
                .map_err(PipelineError::InvalidFile)?,
            status,
            wall_time_s: fields[3].parse().map_err(|e| PipelineError::InvalidFile(format!("{e}")))?,
            attribution_time_s: fields[4]
                .parse()
                .map_err(|e| PipelineError::InvalidFile(format!("{e}")))?,
            changes: fields[5].parse().map_err(|e| PipelineError::InvalidFile(format!("{e}")))?,
            objective: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|e| PipelineError::InvalidFile(format!("{e}")))?)
            },
            winning_config: fields[7].to_string(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// statistics and plot data
// ---------------------------------------------------------------------------

/// Population statistics over completed repairs of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodStats {
    pub method: AttributionMethod,
    pub completed: usize,
    pub time_mean: f64,
    pub time_median: f64,
    pub time_std: f64,
    pub changes_mean: f64,
    pub changes_median: f64,
    pub changes_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentStats {
    pub per_method: Vec<MethodStats>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Lower-middle median: for even counts the lower of the two middle values.
fn median_lower(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[(sorted.len() - 1) / 2]
}

fn std_population(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Per-method mean/median/std of time and changes over completed rows only
/// (timeouts and infeasible attempts are excluded).
pub fn summarize(outcomes: &[RepairOutcome]) -> Result<ExperimentStats, PipelineError> {
    let mut by_method: BTreeMap<String, Vec<&RepairOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_method.entry(o.method.to_string()).or_default().push(o);
    }
    let mut per_method = Vec::new();
    let mut any_completed = false;
    for rows in by_method.values() {
        let completed: Vec<&&RepairOutcome> =
            rows.iter().filter(|o| o.status == SolveStatus::Optimal).collect();
        let method = rows[0].method;
        if completed.is_empty() {
            per_method.push(MethodStats {
                method,
                completed: 0,
                time_mean: f64::NAN,
                time_median: f64::NAN,
                time_std: f64::NAN,
                changes_mean: f64::NAN,
                changes_median: f64::NAN,
                changes_std: f64::NAN,
            });
            continue;
        }
        any_completed = true;
        let times: Vec<f64> = completed.iter().map(|o| o.wall_time_s).collect();
        let changes: Vec<f64> = completed.iter().map(|o| o.changes as f64).collect();
        per_method.push(MethodStats {
            method,
            completed: completed.len(),
            time_mean: mean(&times),
            time_median: median_lower(&times),
            time_std: std_population(&times),
            changes_mean: mean(&changes),
            changes_median: median_lower(&changes),
            changes_std: std_population(&changes),
        });
    }
    if !any_completed {
        return Err(PipelineError::NoCompletedRows);
    }
    Ok(ExperimentStats { per_method })
}

fn fmt_stat(v: f64) -> String {
    if v.is_nan() {
        "-".to_string()
    } else {
        format!("{v:.3}")
    }
}

/// Text tables in the shape of the repair-time and change-count statistics
/// tables: one column per method, rows Mean/Median/Std Dev.
pub fn render_stats_table(stats: &ExperimentStats) -> String {
    let mut out = String::new();
    let headers: Vec<String> = stats.per_method.iter().map(|m| m.method.to_string()).collect();
    let width = headers.iter().map(|h| h.len()).max().unwrap_or(4).max(10);
    let mut table = |title: &str, pick: &dyn Fn(&MethodStats) -> (f64, f64, f64)| {
        out.push_str(&format!("{title}\n"));
        out.push_str(&format!("{:<10}", "Statistic"));
        for h in &headers {
            out.push_str(&format!(" {h:>width$}"));
        }
        out.push('\n');
        for (label, idx) in [("Mean", 0usize), ("Median", 1), ("Std Dev", 2)] {
            out.push_str(&format!("{label:<10}"));
            for m in &stats.per_method {
                let (mean, median, std) = pick(m);
                let v = [mean, median, std][idx];
                out.push_str(&format!(" {:>width$}", fmt_stat(v)));
            }
            out.push('\n');
        }
        out.push('\n');
    };
    table("Repair time (s), completed repairs", &|m| (m.time_mean, m.time_median, m.time_std));
    table("Changes per repaired level", &|m| {
        (m.changes_mean, m.changes_median, m.changes_std)
    });
    out
}

/// Per-method cumulative (time, repaired count) series over completed rows,
/// sorted by completion time. Timeout rows are excluded.
pub fn emit_plot_data(outcomes: &[RepairOutcome]) -> Vec<(String, CumulativeSeries)> {
    let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for o in outcomes {
        if o.status == SolveStatus::Optimal {
            by_method.entry(o.method.to_string()).or_default().push(o.wall_time_s);
        }
    }
    by_method
        .into_iter()
        .map(|(method, mut times)| {
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let series = times.into_iter().enumerate().map(|(i, t)| (t, i + 1)).collect();
            (method, series)
        })
        .collect()
}

pub fn plot_series_csv(series: &[(String, CumulativeSeries)]) -> String {
    let mut out = String::from("method,time_s,repaired\n");
    for (method, s) in series {
        for (t, n) in s {
            out.push_str(&format!("{method},{t},{n}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_cave_dataset_has_verified_labels() {
        let cfg = GenConfig::new("cave", 8, GenMode::Sampled, 42);
        let records = gen_dataset(&cfg).unwrap();
        assert_eq!(records.len(), 16);
        let template = MovementTemplate::builtin("cave").unwrap();
        let patterns = PatternRules::builtin("cave").unwrap();
        for r in &records {
            let level = Level::parse_with_domain(&r.text, "cave").unwrap();
            assert_eq!(check_solvable(&level, &template).solvable, r.solvable);
            assert!(check_patterns(&level, &patterns).is_empty());
        }
        assert_eq!(records.iter().filter(|r| r.solvable).count(), 8);
    }

    #[test]
    fn gen_is_deterministic() {
        let cfg = GenConfig::new("cave", 4, GenMode::Sampled, 7);
        let a = gen_dataset(&cfg).unwrap();
        let b = gen_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(dataset_from_jsonl(&dataset_to_jsonl(&a)).unwrap(), a);
    }

    #[test]
    fn constrained_unsolvable_levels_rejected_by_oracle() {
        let levels = gen_unsolvable_levels("cave", 3, GenMode::Constrained, 11).unwrap();
        let template = MovementTemplate::builtin("cave").unwrap();
        for level in &levels {
            assert!(!check_solvable(&level, &template).solvable);
        }
    }

    fn blocked_level() -> Level {
        // cave-style pocket with a sealed goal room
        Level::parse_with_domain(
            "XXXXXX\nX-{--X\nX----X\nXXXXXX\nX--}-X\nXXXXXX",
            "custom",
        )
        .unwrap()
    }

    #[test]
    fn uniform_repair_of_blocked_level() {
        let level = blocked_level();
        let template = MovementTemplate::builtin("cave").unwrap();
        let rules = PatternRules::permissive("custom");
        let settings = RepairSettings::default();
        let (outcome, repaired) = repair_level(
            "t-0",
            &level,
            AttributionMethod::Uniform,
            None,
            &template,
            &rules,
            &settings,
        )
        .unwrap();
        assert_eq!(outcome.status, SolveStatus::Optimal);
        assert!(outcome.changes >= 1);
        assert_eq!(outcome.attribution_time_s, 0.0);
        let repaired = repaired.unwrap();
        assert!(check_solvable(&repaired, &template).solvable);
        assert_eq!(outcome.objective, Some(outcome.changes as f64));
    }

    #[test]
    fn already_solvable_level_reports_zero_changes() {
        let level = Level::parse_with_domain("{---}\nXXXXX", "custom").unwrap();
        let template = MovementTemplate::builtin("cave").unwrap();
        let rules = PatternRules::permissive("custom");
        let (outcome, repaired) = repair_level(
            "t-1",
            &level,
            AttributionMethod::Uniform,
            None,
            &template,
            &rules,
            &RepairSettings::default(),
        )
        .unwrap();
        assert_eq!(outcome.status, SolveStatus::Optimal);
        assert_eq!(outcome.changes, 0);
        assert_eq!(outcome.objective, Some(0.0));
        assert_eq!(repaired.unwrap(), level);
    }

    #[test]
    fn model_required_for_gradient_methods() {
        let level = blocked_level();
        let template = MovementTemplate::builtin("cave").unwrap();
        let rules = PatternRules::permissive("custom");
        let err = repair_level(
            "t-2",
            &level,
            AttributionMethod::IntegratedGradients,
            None,
            &template,
            &rules,
            &RepairSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::ModelRequired(_)));
    }

    #[test]
    fn outcomes_csv_round_trip() {
        let outcomes = vec![
            RepairOutcome {
                level_id: "cave-0-0000".into(),
                method: AttributionMethod::IntegratedGradients,
                status: SolveStatus::Optimal,
                wall_time_s: 0.25,
                attribution_time_s: 0.125,
                changes: 2,
                objective: Some(2.0),
                winning_config: "bb-lowest-weight".into(),
            },
            RepairOutcome {
                level_id: "cave-0-0001".into(),
                method: AttributionMethod::Uniform,
                status: SolveStatus::Timeout,
                wall_time_s: 60.0,
                attribution_time_s: 0.0,
                changes: 0,
                objective: None,
                winning_config: "bb-input-order".into(),
            },
        ];
        let csv = outcomes_to_csv(&outcomes);
        assert!(csv.starts_with(
            "level_id,method,status,wall_time_s,attribution_time_s,changes,objective,winning_config\n"
        ));
        assert_eq!(outcomes_from_csv(&csv).unwrap(), outcomes);
    }

    #[test]
    fn summary_statistics_hand_checked() {
        let mk = |t: f64, changes: usize| RepairOutcome {
            level_id: "x".into(),
            method: AttributionMethod::Uniform,
            status: SolveStatus::Optimal,
            wall_time_s: t,
            attribution_time_s: 0.0,
            changes,
            objective: Some(changes as f64),
            winning_config: "bb".into(),
        };
        let stats = summarize(&[mk(1.0, 1), mk(2.0, 2), mk(3.0, 3)]).unwrap();
        let m = &stats.per_method[0];
        assert_eq!(m.completed, 3);
        assert!((m.time_mean - 2.0).abs() < 1e-12);
        assert_eq!(m.time_median, 2.0);
        assert!((m.time_std - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);

        // lower-middle median on even counts
        let stats = summarize(&[mk(1.0, 1), mk(2.0, 1), mk(3.0, 1), mk(4.0, 1)]).unwrap();
        assert_eq!(stats.per_method[0].time_median, 2.0);

        // single row: std 0
        let stats = summarize(&[mk(5.0, 2)]).unwrap();
        assert_eq!(stats.per_method[0].time_std, 0.0);

        let timeout = RepairOutcome {
            status: SolveStatus::Timeout,
            objective: None,
            ..mk(99.0, 0)
        };
        assert!(matches!(summarize(&[timeout]), Err(PipelineError::NoCompletedRows)));
    }

    #[test]
    fn plot_series_cumulative_and_excludes_timeouts() {
        let mk = |t: f64, status: SolveStatus| RepairOutcome {
            level_id: "x".into(),
            method: AttributionMethod::IntegratedGradients,
            status,
            wall_time_s: t,
            attribution_time_s: 0.0,
            changes: 1,
            objective: None,
            winning_config: "bb".into(),
        };
        let series = emit_plot_data(&[
            mk(10.0, SolveStatus::Optimal),
            mk(1.0, SolveStatus::Optimal),
            mk(100.0, SolveStatus::Optimal),
            mk(50.0, SolveStatus::Timeout),
        ]);
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].1, vec![(1.0, 1), (10.0, 2), (100.0, 3)]);
        // counts are non-decreasing
        assert!(series[0].1.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn stats_table_shape() {
        let mk = |method: AttributionMethod| RepairOutcome {
            level_id: "x".into(),
            method,
            status: SolveStatus::Optimal,
            wall_time_s: 1.5,
            attribution_time_s: 0.0,
            changes: 2,
            objective: Some(2.0),
            winning_config: "bb".into(),
        };
        let stats = summarize(&[
            mk(AttributionMethod::ShapStyle),
            mk(AttributionMethod::IntegratedGradients),
            mk(AttributionMethod::Uniform),
        ])
        .unwrap();
        let table = render_stats_table(&stats);
        assert!(table.contains("Mean"));
        assert!(table.contains("Median"));
        assert!(table.contains("Std Dev"));
        assert!(table.contains("SHAP-style"));
        assert!(table.contains("IG"));
        assert!(table.contains("UNI"));
    }
}
