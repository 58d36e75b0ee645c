//! Command-line interface for the level repair toolkit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use tilemend_core::attribution::{attribute, attribution_metadata, uniform_attribution, AttributionGrid, AttributionMethod};
use tilemend_core::classifier::{train, training_log_csv, MlpModel, TrainConfig};
use tilemend_core::csp::{build_repair_problem, RepairProblemOptions};
use tilemend_core::level::Level;
use tilemend_core::patterns::PatternRules;
use tilemend_core::pipeline::{
    dataset_from_jsonl, dataset_to_jsonl, dataset_to_labeled, emit_plot_data, gen_dataset,
    outcomes_from_csv, outcomes_to_csv, plot_series_csv, render_stats_table, run_experiment,
    summarize, ExperimentConfig, GenConfig, GenMode, RepairSettings,
};
use tilemend_core::reachability::{check_solvable, MovementTemplate};
use tilemend_core::solver::{export_lp, export_wcnf};
use tilemend_core::svg::{attribution_heat_svg, cumulative_plot_svg, weight_map_svg};
use tilemend_core::weightgen::{attributions_to_weights, Connectivity, WeightGenConfig, WeightGrid};

#[derive(Parser)]
#[command(name = "tilemend", about = "Attribution-guided constraint repair for tile levels", version)]
struct Cli {
    /// TOML config file providing defaults for any flag below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Defaults loadable from a TOML file; explicit flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    domain: Option<String>,
    seed: Option<u64>,
    n: Option<usize>,
    mode: Option<String>,
    method: Option<String>,
    methods: Option<String>,
    steps: Option<usize>,
    time_limit: Option<f64>,
    percentile: Option<f64>,
    low: Option<u32>,
    high: Option<u32>,
    connectivity: Option<u8>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    hidden1: Option<usize>,
    hidden2: Option<usize>,
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset of solvable and unsolvable levels.
    Gen(GenArgs),
    /// Train the solvability classifier on a dataset.
    Train(TrainArgs),
    /// Compute a per-tile attribution grid for a level.
    Attr(AttrArgs),
    /// Convert an attribution grid into repair penalty weights.
    Weights(WeightsArgs),
    /// Repair a single level.
    Repair(RepairArgs),
    /// Run the full repair experiment over generated unsolvable levels.
    Bench(BenchArgs),
    /// Print mean/median/std tables from an outcomes CSV.
    Summarize(SummarizeArgs),
    /// Emit cumulative repaired-levels plot data and SVG.
    Plot(PlotArgs),
    /// Export a repair problem as LP or WCNF text.
    Export(ExportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    domain: Option<String>,
    /// Levels per class.
    #[arg(long)]
    n: Option<usize>,
    /// sampled | constrained
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV path.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden1: Option<usize>,
    #[arg(long)]
    hidden2: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AttrArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    level: PathBuf,
    /// shap | ig | uni
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Metadata JSON path (defaults to <out>.json).
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    /// Attribution CSV produced by `attr`.
    #[arg(long)]
    attr: PathBuf,
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    low: Option<u32>,
    #[arg(long)]
    high: Option<u32>,
    /// 4 or 8.
    #[arg(long)]
    connectivity: Option<u8>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct RepairArgs {
    #[arg(long)]
    level: PathBuf,
    #[arg(long)]
    domain: Option<String>,
    /// Weight CSV; otherwise weights come from --method (+ --model).
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    domain: Option<String>,
    /// Number of unsolvable levels.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated: shap,ig,uni
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    outcomes: PathBuf,
    /// Optional stats CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional cumulative series CSV.
    #[arg(long)]
    series: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    level: PathBuf,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// lp | wcnf
    #[arg(long)]
    format: String,
    #[arg(long)]
    out: PathBuf,
    /// Encode reachability as layered rows instead of a lazy context
    /// (required for meaningful standalone files; default on).
    #[arg(long, default_value_t = true)]
    layered: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file_cfg = match &cli.config {
        Some(path) => match load_config(path) {
            Ok(cfg) => cfg,
            Err(err) => {
                eprintln!("error: {err}");
                return ExitCode::FAILURE;
            }
        },
        None => FileConfig::default(),
    };
    match run(cli.command, &file_cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<FileConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(command: Command, cfg: &FileConfig) -> Result<(), String> {
    match command {
        Command::Gen(args) => cmd_gen(args, cfg),
        Command::Train(args) => cmd_train(args, cfg),
        Command::Attr(args) => cmd_attr(args, cfg),
        Command::Weights(args) => cmd_weights(args, cfg),
        Command::Repair(args) => cmd_repair(args, cfg),
        Command::Bench(args) => cmd_bench(args, cfg),
        Command::Summarize(args) => cmd_summarize(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Export(args) => cmd_export(args, cfg),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn domain_of(flag: &Option<String>, cfg: &FileConfig) -> String {
    flag.clone().or_else(|| cfg.domain.clone()).unwrap_or_else(|| "cave".to_string())
}

fn parse_mode(flag: &Option<String>, cfg: &FileConfig) -> Result<GenMode, String> {
    flag.clone()
        .or_else(|| cfg.mode.clone())
        .unwrap_or_else(|| "sampled".to_string())
        .parse()
}

fn parse_method(s: &str) -> Result<AttributionMethod, String> {
    s.parse()
}

fn weight_cfg_from(
    percentile: Option<f64>,
    low: Option<u32>,
    high: Option<u32>,
    connectivity: Option<u8>,
    cfg: &FileConfig,
) -> Result<WeightGenConfig, String> {
    let defaults = WeightGenConfig::default();
    let connectivity = match connectivity.or(cfg.connectivity) {
        None => defaults.connectivity,
        Some(4) => Connectivity::Four,
        Some(8) => Connectivity::Eight,
        Some(other) => return Err(format!("connectivity must be 4 or 8, got {other}")),
    };
    Ok(WeightGenConfig {
        percentile: percentile.or(cfg.percentile).unwrap_or(defaults.percentile),
        low: low.or(cfg.low).unwrap_or(defaults.low),
        high: high.or(cfg.high).unwrap_or(defaults.high),
        connectivity,
    })
}

fn cmd_gen(args: GenArgs, cfg: &FileConfig) -> Result<(), String> {
    let gen = GenConfig::new(
        &domain_of(&args.domain, cfg),
        args.n.or(cfg.n).unwrap_or(100),
        parse_mode(&args.mode, cfg)?,
        args.seed.or(cfg.seed).unwrap_or(0),
    );
    let records = gen_dataset(&gen).map_err(|e| e.to_string())?;
    write(&args.out, &dataset_to_jsonl(&records))?;
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs, cfg: &FileConfig) -> Result<(), String> {
    let records = dataset_from_jsonl(&read(&args.dataset)?).map_err(|e| e.to_string())?;
    if records.is_empty() {
        return Err("dataset is empty".to_string());
    }
    let data = dataset_to_labeled(&records).map_err(|e| e.to_string())?;
    let level = Level::parse(&records[0].text).map_err(|e| e.to_string())?;
    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: args.learning_rate.or(cfg.learning_rate).unwrap_or(defaults.learning_rate),
        weight_decay: args.weight_decay.or(cfg.weight_decay).unwrap_or(defaults.weight_decay),
        epochs: args.epochs.or(cfg.epochs).unwrap_or(defaults.epochs),
        batch_size: args.batch_size.or(cfg.batch_size).unwrap_or(defaults.batch_size),
        seed: args.seed.or(cfg.seed).unwrap_or(defaults.seed),
    };
    let model = MlpModel::init(
        level.rows(),
        level.cols(),
        args.hidden1.or(cfg.hidden1).unwrap_or(256),
        args.hidden2.or(cfg.hidden2).unwrap_or(128),
        train_cfg.seed,
    );
    let (trained, log) = train(&model, &data, &train_cfg).map_err(|e| e.to_string())?;
    trained.save(&args.out).map_err(|e| e.to_string())?;
    if let Some(log_path) = &args.log {
        write(log_path, &training_log_csv(&log))?;
    }
    let last = log.last().expect("at least one epoch");
    println!(
        "trained {} epochs: loss {:.4}, train acc {:.3}, test acc {:.3}; model at {}",
        log.len(),
        last.loss,
        last.train_acc,
        last.test_acc,
        args.out.display()
    );
    Ok(())
}

fn load_level(path: &Path, domain: &str) -> Result<Level, String> {
    Level::parse_with_domain(&read(path)?, domain).map_err(|e| e.to_string())
}

fn cmd_attr(args: AttrArgs, cfg: &FileConfig) -> Result<(), String> {
    let method = parse_method(&args.method.clone().or_else(|| cfg.method.clone()).unwrap_or_else(|| "ig".into()))?;
    let level = load_level(&args.level, "custom")?;
    let steps = args.steps.or(cfg.steps).unwrap_or(128);
    let (grid, model_hash) = match method {
        AttributionMethod::Uniform => (uniform_attribution(&level), "none".to_string()),
        _ => {
            let model_path = args
                .model
                .clone()
                .or_else(|| cfg.model.clone())
                .ok_or_else(|| format!("method {method} requires --model"))?;
            let model = MlpModel::load(&model_path).map_err(|e| e.to_string())?;
            let grid = attribute(&model, &level, method, steps).map_err(|e| e.to_string())?;
            (grid, model.content_hash())
        }
    };
    write(&args.out, &grid.to_csv())?;
    let meta_path = args.meta.unwrap_or_else(|| args.out.with_extension("json"));
    let steps_meta = (method == AttributionMethod::IntegratedGradients).then_some(steps);
    write(&meta_path, &attribution_metadata(method, steps_meta, &model_hash))?;
    if let Some(svg_path) = &args.svg {
        write(svg_path, &attribution_heat_svg(&grid))?;
    }
    println!("wrote {} attribution grid to {}", method, args.out.display());
    Ok(())
}

fn cmd_weights(args: WeightsArgs, cfg: &FileConfig) -> Result<(), String> {
    let grid = AttributionGrid::from_csv(&read(&args.attr)?, AttributionMethod::IntegratedGradients)?;
    let wcfg = weight_cfg_from(args.percentile, args.low, args.high, args.connectivity, cfg)?;
    let weights = attributions_to_weights(&grid, &wcfg).map_err(|e| e.to_string())?;
    write(&args.out, &weights.to_csv())?;
    if let Some(svg_path) = &args.svg {
        write(svg_path, &weight_map_svg(&weights))?;
    }
    println!("wrote weight grid to {}", args.out.display());
    Ok(())
}

fn cmd_repair(args: RepairArgs, cfg: &FileConfig) -> Result<(), String> {
    let domain = domain_of(&args.domain, cfg);
    let level = load_level(&args.level, &domain)?;
    let template = MovementTemplate::builtin(&domain).map_err(|e| e.to_string())?;
    let rules = PatternRules::builtin(&domain).map_err(|e| e.to_string())?;
    let mut settings = RepairSettings::default();
    settings.time_limit = args.time_limit.or(cfg.time_limit).unwrap_or(60.0);
    settings.ig_steps = args.steps.or(cfg.steps).unwrap_or(128);

    let (outcome, repaired) = if let Some(weights_path) = &args.weights {
        let weights = WeightGrid::from_csv(&read(weights_path)?).map_err(|e| e.to_string())?;
        repair_with_weights(&level, &weights, &template, &rules, &settings)?
    } else {
        let method = parse_method(
            &args.method.clone().or_else(|| cfg.method.clone()).unwrap_or_else(|| "uni".into()),
        )?;
        let model = match method {
            AttributionMethod::Uniform => None,
            _ => {
                let path = args
                    .model
                    .clone()
                    .or_else(|| cfg.model.clone())
                    .ok_or_else(|| format!("method {method} requires --model"))?;
                Some(MlpModel::load(&path).map_err(|e| e.to_string())?)
            }
        };
        tilemend_core::pipeline::repair_level(
            "cli",
            &level,
            method,
            model.as_ref(),
            &template,
            &rules,
            &settings,
        )
        .map_err(|e| e.to_string())?
    };

    println!(
        "status {} in {:.3}s (attribution {:.3}s), {} changes, objective {}, winner {}",
        outcome.status,
        outcome.wall_time_s,
        outcome.attribution_time_s,
        outcome.changes,
        outcome.objective.map_or("-".to_string(), |o| format!("{o}")),
        outcome.winning_config
    );
    if let (Some(out), Some(level)) = (&args.out, &repaired) {
        write(out, &level.to_text())?;
        println!("wrote repaired level to {}", out.display());
    }
    Ok(())
}

fn repair_with_weights(
    level: &Level,
    weights: &WeightGrid,
    template: &MovementTemplate,
    rules: &PatternRules,
    settings: &RepairSettings,
) -> Result<(tilemend_core::pipeline::RepairOutcome, Option<Level>), String> {
    use std::time::Instant;
    use tilemend_core::solver::race;
    let t0 = Instant::now();
    let (prog, varmap) =
        build_repair_problem(level, weights, template, rules, &RepairProblemOptions::default())
            .map_err(|e| e.to_string())?;
    let result = race(&prog, &settings.solver_configs, settings.time_limit).map_err(|e| e.to_string())?;
    let mut repaired = None;
    let mut changes = 0;
    if result.status == tilemend_core::solver::SolveStatus::Optimal {
        let fixed = varmap
            .decode_level(result.assignment.as_ref().unwrap(), level.domain())
            .map_err(|e| e.to_string())?;
        if !check_solvable(&fixed, template).solvable {
            return Err("repaired level fails the reachability oracle".to_string());
        }
        changes = tilemend_core::level::diff_cells(level, &fixed)
            .map_err(|e| e.to_string())?
            .len();
        repaired = Some(fixed);
    }
    Ok((
        tilemend_core::pipeline::RepairOutcome {
            level_id: "cli".to_string(),
            method: AttributionMethod::Uniform,
            status: result.status,
            wall_time_s: t0.elapsed().as_secs_f64(),
            attribution_time_s: 0.0,
            changes,
            objective: result.objective,
            winning_config: result.config_id,
        },
        repaired,
    ))
}

fn cmd_bench(args: BenchArgs, cfg: &FileConfig) -> Result<(), String> {
    let methods_str = args
        .methods
        .clone()
        .or_else(|| cfg.methods.clone())
        .unwrap_or_else(|| "shap,ig,uni".to_string());
    let methods: Result<Vec<AttributionMethod>, String> =
        methods_str.split(',').map(|m| parse_method(m.trim())).collect();
    let methods = methods?;
    let needs_model = methods.iter().any(|m| *m != AttributionMethod::Uniform);
    let model = if needs_model {
        let path = args
            .model
            .clone()
            .or_else(|| cfg.model.clone())
            .ok_or("gradient-based methods require --model")?;
        Some(MlpModel::load(&path).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let mut settings = RepairSettings::default();
    settings.time_limit = args.time_limit.or(cfg.time_limit).unwrap_or(60.0);
    settings.ig_steps = args.steps_default(cfg);
    let experiment = ExperimentConfig {
        domain: domain_of(&args.domain, cfg),
        n_levels: args.n.or(cfg.n).unwrap_or(100),
        methods,
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        gen_mode: parse_mode(&args.mode, cfg)?,
        settings,
    };
    let outcomes = run_experiment(&experiment, model.as_ref()).map_err(|e| e.to_string())?;
    write(&args.out, &outcomes_to_csv(&outcomes))?;
    println!("wrote {} outcome rows to {}", outcomes.len(), args.out.display());
    Ok(())
}

impl BenchArgs {
    fn steps_default(&self, cfg: &FileConfig) -> usize {
        cfg.steps.unwrap_or(128)
    }
}

fn cmd_summarize(args: SummarizeArgs) -> Result<(), String> {
    let outcomes = outcomes_from_csv(&read(&args.outcomes)?).map_err(|e| e.to_string())?;
    let stats = summarize(&outcomes).map_err(|e| e.to_string())?;
    print!("{}", render_stats_table(&stats));
    // median-time comparison of each attribution method against the uniform
    // baseline (direction only; it depends on solver family and hardware)
    let uni = stats
        .per_method
        .iter()
        .find(|m| m.method == AttributionMethod::Uniform && m.completed > 0);
    if let Some(uni) = uni {
        for m in &stats.per_method {
            if m.method != AttributionMethod::Uniform && m.completed > 0 {
                let direction = if m.time_median < uni.time_median { "faster" } else { "not faster" };
                println!(
                    "{} median {:.3}s vs UNI median {:.3}s: {}",
                    m.method, m.time_median, uni.time_median, direction
                );
            }
        }
    }
    if let Some(out) = &args.out {
        let mut csv = String::from(
            "method,completed,time_mean,time_median,time_std,changes_mean,changes_median,changes_std\n",
        );
        for m in &stats.per_method {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                m.method,
                m.completed,
                m.time_mean,
                m.time_median,
                m.time_std,
                m.changes_mean,
                m.changes_median,
                m.changes_std
            ));
        }
        write(out, &csv)?;
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), String> {
    let outcomes = outcomes_from_csv(&read(&args.outcomes)?).map_err(|e| e.to_string())?;
    let series = emit_plot_data(&outcomes);
    write(&args.out, &cumulative_plot_svg(&series))?;
    if let Some(series_path) = &args.series {
        write(series_path, &plot_series_csv(&series))?;
    }
    println!("wrote plot to {}", args.out.display());
    Ok(())
}

fn cmd_export(args: ExportArgs, cfg: &FileConfig) -> Result<(), String> {
    let domain = domain_of(&args.domain, cfg);
    let level = load_level(&args.level, &domain)?;
    let template = MovementTemplate::builtin(&domain).map_err(|e| e.to_string())?;
    let rules = PatternRules::builtin(&domain).map_err(|e| e.to_string())?;
    let weights = match &args.weights {
        Some(path) => WeightGrid::from_csv(&read(path)?).map_err(|e| e.to_string())?,
        None => WeightGrid::uniform(level.rows(), level.cols(), 1),
    };
    let (prog, _) = build_repair_problem(
        &level,
        &weights,
        &template,
        &rules,
        &RepairProblemOptions { layered_reachability: args.layered, horizon: None },
    )
    .map_err(|e| e.to_string())?;
    let text = match args.format.as_str() {
        "lp" => export_lp(&prog),
        "wcnf" => export_wcnf(&prog).map_err(|e| e.to_string())?,
        other => return Err(format!("unknown export format {other:?} (expected lp or wcnf)")),
    };
    write(&args.out, &text)?;
    println!("wrote {} to {}", args.format, args.out.display());
    Ok(())
}
