use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ctspav_core::analytics::{
    break_even_year, compute_metrics, infrastructure_cost, sensitivity_sweep, vehicle_cost, CostModel, SweepParam,
};
use ctspav_core::ctspav::{run_ctspav, CtspavOptions};
use ctspav_core::darp::{run_darp, DarpOptions};
use ctspav_core::model::{Instance, InstanceFile, Params};
use ctspav_core::plan::{validate_plan, Budget, Objective, Procedure, SolvePlan, TraceRecord};
use ctspav_core::scenario::{cluster_instances, generate_file, DepotConfig, GeneratorConfig, Metric};
use ctspav_lp::BackendKind;

#[derive(Parser)]
#[command(name = "ctspav", version, about = "Commute trip sharing for autonomous vehicles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic instance.
    Generate(GenerateArgs),
    /// Solve an instance and write a plan file.
    Solve(SolveCmd),
    /// Re-solve an instance over a grid of delta or detour values.
    Sweep(SweepCmd),
    /// Summarise plan files as metric and cost tables.
    Report(ReportArgs),
    /// Re-check a plan against its instance.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Maximum shift around desired times, seconds.
    #[arg(long, default_value_t = 600)]
    delta: i64,
    /// Detour ratio R.
    #[arg(long, default_value_t = 0.5)]
    detour: f64,
    #[arg(long, default_value_t = 4)]
    capacity: usize,
    /// Service time per stop, seconds.
    #[arg(long, default_value_t = 0)]
    service: i64,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    inner_radius: Option<f64>,
    #[arg(long)]
    outer_radius: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Solver settings accepted both as flags and in a config file.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolveSettings {
    /// ctspav or darp.
    #[arg(long)]
    procedure: Option<String>,
    /// lex or dist.
    #[arg(long)]
    objective: Option<String>,
    /// central or local.
    #[arg(long)]
    depot: Option<String>,
    /// Split the commuters into clusters of at most this size.
    #[arg(long)]
    cluster_size: Option<usize>,
    /// Total wall-clock budget per solve, seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Share of the budget given to column generation.
    #[arg(long)]
    colgen_share: Option<f64>,
    /// Interior-point dual weight for the DARP procedure.
    #[arg(long)]
    stabilization: Option<f64>,
    /// highs, dense or exact. Defaults to CTSPAV_BACKEND, then highs.
    #[arg(long)]
    backend: Option<String>,
}

impl SolveSettings {
    fn or(self, other: SolveSettings) -> SolveSettings {
        SolveSettings {
            procedure: self.procedure.or(other.procedure),
            objective: self.objective.or(other.objective),
            depot: self.depot.or(other.depot),
            cluster_size: self.cluster_size.or(other.cluster_size),
            budget: self.budget.or(other.budget),
            colgen_share: self.colgen_share.or(other.colgen_share),
            stabilization: self.stabilization.or(other.stabilization),
            backend: self.backend.or(other.backend),
        }
    }
}

#[derive(Debug, Clone)]
struct Resolved {
    procedure: Procedure,
    objective: Objective,
    depot: DepotConfig,
    cluster_size: Option<usize>,
    budget: f64,
    colgen_share: Option<f64>,
    stabilization: Option<f64>,
    backend: BackendKind,
}

fn resolve(flags: SolveSettings, config: Option<&Path>) -> Result<Resolved> {
    let s = match config {
        Some(p) => flags.or(read_config(p)?),
        None => flags,
    };
    let backend = match &s.backend {
        Some(b) => b.parse()?,
        None => BackendKind::from_env()?,
    };
    let parse = |v: &Option<String>, default: &str| v.clone().unwrap_or_else(|| default.to_string());
    Ok(Resolved {
        procedure: parse(&s.procedure, "ctspav").parse().map_err(anyhow::Error::msg)?,
        objective: parse(&s.objective, "lex").parse().map_err(anyhow::Error::msg)?,
        depot: parse(&s.depot, "central").parse().map_err(anyhow::Error::msg)?,
        cluster_size: s.cluster_size,
        budget: s.budget.unwrap_or(600.0),
        colgen_share: s.colgen_share,
        stabilization: s.stabilization,
        backend,
    })
}

fn read_config(path: &Path) -> Result<SolveSettings> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Args)]
struct SolveCmd {
    instance: PathBuf,
    #[command(flatten)]
    settings: SolveSettings,
    /// TOML or JSON file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Plan file, or a directory when the instance is clustered.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Per-iteration trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    instance: PathBuf,
    /// delta or detour.
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated grid.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    settings: SolveSettings,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    plans: Vec<PathBuf>,
    /// Instance used to compute metrics for plans that carry none.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Cost horizon in years.
    #[arg(long, default_value_t = 5)]
    years: u32,
    /// Vehicle purchase price, dollars.
    #[arg(long)]
    price: Option<f64>,
    /// Wide table, one row per plan.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Long table, one row per plan and measure.
    #[arg(long)]
    long: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    instance: PathBuf,
    plan: PathBuf,
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: InstanceFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Instance::from_file(file)?)
}

fn load_plan(path: &Path) -> Result<SolvePlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn solve(inst: &Instance, r: &Resolved) -> Result<(SolvePlan, Vec<TraceRecord>)> {
    let (mut plan, trace) = match r.procedure {
        Procedure::Ctspav => {
            let d = CtspavOptions::default();
            let opts = CtspavOptions {
                objective: r.objective,
                budget: Budget::new(r.budget, r.colgen_share.unwrap_or(d.budget.colgen_share)),
                backend: r.backend,
                ..d
            };
            let out = run_ctspav(inst, &opts)?;
            (out.plan, out.trace)
        }
        Procedure::Darp => {
            let d = DarpOptions::default();
            let opts = DarpOptions {
                objective: r.objective,
                budget: Budget::new(r.budget, r.colgen_share.unwrap_or(d.budget.colgen_share)),
                backend: r.backend,
                stabilization: r.stabilization.unwrap_or(d.stabilization),
                ..d
            };
            let out = run_darp(inst, &opts)?;
            (out.plan, out.trace)
        }
    };
    plan.metrics = Some(compute_metrics(&plan, inst));
    Ok((plan, trace))
}

fn trace_lines(trace: &[TraceRecord], cluster: Option<usize>) -> String {
    let mut s = String::new();
    for t in trace {
        let mut v = serde_json::to_value(t).expect("trace serializes");
        if let Some(c) = cluster {
            v["cluster"] = c.into();
        }
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let d = GeneratorConfig::default();
    let cfg = GeneratorConfig {
        seed: a.seed,
        n: a.n,
        metric: a.metric,
        speed_mps: a.speed.unwrap_or(d.speed_mps),
        inner_radius_m: a.inner_radius.unwrap_or(d.inner_radius_m),
        outer_radius_m: a.outer_radius.unwrap_or(d.outer_radius_m),
        params: Params { capacity: a.capacity, delta: a.delta, detour_ratio: a.detour, service: a.service },
        ..d
    };
    let file = generate_file(&cfg);
    Instance::from_file(file.clone())?;
    write_out(a.out.as_deref(), &(serde_json::to_string_pretty(&file)? + "\n"))
}

fn cmd_solve(a: SolveCmd) -> Result<()> {
    let r = resolve(a.settings, a.config.as_deref())?;
    let inst = load_instance(&a.instance)?;
    let clusters = match r.cluster_size {
        Some(size) => cluster_instances(&inst, size, r.depot)?,
        None if r.depot == DepotConfig::Local => cluster_instances(&inst, inst.n(), r.depot)?,
        None => vec![inst],
    };
    let trace_name = a.trace.as_ref().map(|p| p.display().to_string());
    if clusters.len() == 1 {
        let (mut plan, trace) = solve(&clusters[0], &r)?;
        if let Some(p) = &a.trace {
            fs::write(p, trace_lines(&trace, None)).with_context(|| format!("writing {}", p.display()))?;
        }
        plan.trace = trace_name;
        log::info!("{} vehicles, {} m", plan.vehicle_count, plan.total_distance);
        return write_out(a.out.as_deref(), &plan.to_json());
    }

    let Some(dir) = a.out else { bail!("a clustered solve needs --out <directory>") };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut all_trace = String::new();
    let mut summary = Vec::new();
    for (k, sub) in clusters.iter().enumerate() {
        let (mut plan, trace) = solve(sub, &r).with_context(|| format!("cluster {k}"))?;
        all_trace.push_str(&trace_lines(&trace, Some(k)));
        plan.trace = trace_name.clone();
        let stem = format!("cluster-{k:03}");
        fs::write(dir.join(format!("{stem}.instance.json")), serde_json::to_string_pretty(&sub.to_file())? + "\n")?;
        fs::write(dir.join(format!("{stem}.plan.json")), plan.to_json())?;
        log::info!("cluster {k}: n={} {} vehicles", sub.n(), plan.vehicle_count);
        summary.push(serde_json::json!({
            "cluster": k,
            "n": sub.n(),
            "plan": format!("{stem}.plan.json"),
            "instance": format!("{stem}.instance.json"),
            "vehicle_count": plan.vehicle_count,
            "total_distance": plan.total_distance,
        }));
    }
    if let Some(p) = &a.trace {
        fs::write(p, all_trace).with_context(|| format!("writing {}", p.display()))?;
    }
    fs::write(dir.join("clusters.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

fn cmd_sweep(a: SweepCmd) -> Result<()> {
    let r = resolve(a.settings, a.config.as_deref())?;
    let inst = load_instance(&a.instance)?;
    let rows = sensitivity_sweep(&inst, a.param, &a.values, |cell| solve(cell, &r).map(|(p, _)| p).map_err(|e| format!("{e:#}")));
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row)?;
    }
    write_out(a.out.as_deref(), &String::from_utf8(w.into_inner()?)?)
}

#[derive(Serialize)]
struct ReportRow {
    plan: String,
    instance: String,
    n: usize,
    procedure: String,
    objective: String,
    vehicle_count: usize,
    vmt_m: i64,
    baseline_vehicle_count: usize,
    baseline_vmt_m: i64,
    vc_reduction: f64,
    vmt_reduction: f64,
    trips_per_route_mean: f64,
    trips_per_route_sd: f64,
    mean_passenger_s: f64,
    mean_busy_s: f64,
    occupancy: String,
    gap_vc: Option<i64>,
    optimality_gap: f64,
    proven_optimal: bool,
    years: u32,
    vehicle_cost: f64,
    infrastructure_cost: f64,
    baseline_vehicle_cost: f64,
    baseline_infrastructure_cost: f64,
    break_even_year: Option<u32>,
}

#[derive(Serialize)]
struct LongRow<'a> {
    plan: &'a str,
    procedure: &'a str,
    objective: &'a str,
    measure: String,
    value: f64,
}

fn mean(v: &[i64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<i64>() as f64 / v.len() as f64
    }
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    if a.plans.is_empty() {
        bail!("no plan files given");
    }
    if a.years == 0 {
        bail!("the cost horizon must be at least one year");
    }
    let inst = a.instance.as_deref().map(load_instance).transpose()?;
    let mut cm = CostModel::default();
    if let Some(p) = a.price {
        cm.price = p;
    }
    let mut rows = Vec::new();
    for path in &a.plans {
        let plan = load_plan(path)?;
        let m = match (&plan.metrics, &inst) {
            (Some(m), _) => m.clone(),
            (None, Some(i)) => compute_metrics(&plan, i),
            (None, None) => bail!("{} carries no metrics; pass --instance", path.display()),
        };
        let base = &m.no_sharing;
        rows.push(ReportRow {
            plan: path.display().to_string(),
            instance: plan.instance.clone(),
            n: plan.n,
            procedure: plan.procedure.to_string(),
            objective: plan.objective.to_string(),
            vehicle_count: m.vehicle_count,
            vmt_m: m.vmt_m,
            baseline_vehicle_count: base.vehicle_count,
            baseline_vmt_m: base.vmt_m,
            vc_reduction: m.vc_reduction,
            vmt_reduction: m.vmt_reduction,
            trips_per_route_mean: m.trips_per_route_mean,
            trips_per_route_sd: m.trips_per_route_sd,
            mean_passenger_s: mean(&m.passenger_duration_s),
            mean_busy_s: mean(&m.busy_duration_s),
            occupancy: m.occupancy_fractions.iter().map(|f| format!("{f:.4}")).collect::<Vec<_>>().join(";"),
            gap_vc: plan.gap.absolute_vc,
            optimality_gap: plan.gap.optimality,
            proven_optimal: plan.proven_optimal,
            years: a.years,
            vehicle_cost: vehicle_cost(m.vehicle_count, m.vmt_m, &cm, a.years),
            infrastructure_cost: infrastructure_cost(m.vehicle_count, &cm, a.years, true),
            baseline_vehicle_cost: vehicle_cost(base.vehicle_count, base.vmt_m, &cm, a.years),
            baseline_infrastructure_cost: infrastructure_cost(base.vehicle_count, &cm, a.years, false),
            break_even_year: break_even_year(m.vehicle_count, base.vehicle_count, &cm, 30),
        });
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row)?;
    }
    write_out(a.out.as_deref(), &String::from_utf8(w.into_inner()?)?)?;

    if let Some(long) = &a.long {
        let mut w = csv::Writer::from_path(long).with_context(|| format!("writing {}", long.display()))?;
        for r in &rows {
            let mut emit = |measure: &str, value: f64| {
                w.serialize(LongRow {
                    plan: &r.plan,
                    procedure: &r.procedure,
                    objective: &r.objective,
                    measure: measure.to_string(),
                    value,
                })
            };
            emit("vehicle_count", r.vehicle_count as f64)?;
            emit("vmt_m", r.vmt_m as f64)?;
            emit("vc_pct_of_baseline", 100.0 * r.vehicle_count as f64 / r.baseline_vehicle_count.max(1) as f64)?;
            emit("vmt_pct_of_baseline", 100.0 * r.vmt_m as f64 / r.baseline_vmt_m.max(1) as f64)?;
            emit("trips_per_route_mean", r.trips_per_route_mean)?;
            emit("mean_passenger_s", r.mean_passenger_s)?;
            emit("mean_busy_s", r.mean_busy_s)?;
            for (k, f) in r.occupancy.split(';').filter(|s| !s.is_empty()).enumerate() {
                emit(&format!("occupancy_{}", k + 1), f.parse().unwrap_or(0.0))?;
            }
            emit("vehicle_cost", r.vehicle_cost)?;
            emit("infrastructure_cost", r.infrastructure_cost)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<ExitCode> {
    let inst = load_instance(&a.instance)?;
    let plan = load_plan(&a.plan)?;
    let problems = validate_plan(&inst, &plan);
    if problems.is_empty() {
        println!("ok: {} routes cover {} commuters", plan.routes.len(), inst.n());
        return Ok(ExitCode::SUCCESS);
    }
    for p in &problems {
        eprintln!("invalid: {p}");
    }
    Ok(ExitCode::FAILURE)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| ExitCode::SUCCESS),
        Command::Solve(a) => cmd_solve(a).map(|_| ExitCode::SUCCESS),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => cmd_report(a).map(|_| ExitCode::SUCCESS),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
