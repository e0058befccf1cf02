//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 configuration
//! or parameter error, 3 I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{self, RunMetadata, SliceSelector, FIELD_FILE, METADATA_FILE};
use crate::model::{Interclaim, State};
use crate::penalty::{epsilon_sweep, SweepTable};
use crate::sim::{estimate_cost, CostEstimate, FeedbackPolicy, Preset, SimConfig, Simulator};
use crate::solver::{build_grid, solve, PolicyField, Solution, ValueField};
use crate::verify::{
    check_bounds_and_x_monotonicity, check_class_l, check_dpp_consistency, check_poisson_reduction,
    check_time_regularity, check_viscosity_inequalities, check_w_inequalities, grid_slack, poisson_probes,
    sample_interior_nodes, solve_classical, CheckReport, DppConfig, DppProbe,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Seed of the residual node sample; fixed so grid artifacts never depend
/// on the Monte Carlo seed.
pub const NODE_SAMPLE_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "renewal-dividend", version, about = "Optimal dividends under a renewal risk model")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `simulation.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the HJB equation; writes value.csv and metadata.json.
    Solve,
    /// Monte Carlo value of a policy; writes estimate.json.
    Simulate(SimulateArgs),
    /// Penalized values over `penalty.eps_list`; writes sweep.csv and sweep.json.
    SweepEpsilon(PolicyArgs),
    /// Run the property checks on a solved field; writes verify.json.
    Verify(FieldArgs),
    /// Write one time or age cut of a solved field as CSV.
    ExportSlice(ExportArgs),
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// `grid` or a preset name; overrides `simulation.policy`.
    #[arg(long)]
    pub policy: Option<String>,
    /// Field CSV to take the grid policy from; overrides `simulation.policy_csv`.
    #[arg(long)]
    pub policy_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Also write the first N paths as paths/path_<i>.csv.
    #[arg(long, default_value_t = 0)]
    pub dump_paths: usize,
    /// Add a `beta` column computed with this penalty scale to dumped paths.
    #[arg(long)]
    pub dump_epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// Field CSV with metadata.json beside it (default: <out>/value.csv).
    #[arg(long)]
    pub field: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// Time of the cut; snapped to the nearest slice.
    #[arg(long, conflicts_with = "w", required_unless_present = "w")]
    pub s: Option<f64>,
    /// Age of the cut; snapped to the nearest age node.
    #[arg(long)]
    pub w: Option<f64>,
}

/// Error or verification outcome carried to the exit code.
#[derive(Debug)]
enum Outcome {
    Failed(Error),
    ChecksFailed(usize),
}

impl From<Error> for Outcome {
    fn from(e: Error) -> Self {
        Outcome::Failed(e)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // a second initialization (e.g. repeated in-process runs) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(Outcome::ChecksFailed(n)) => {
            eprintln!("{n} check(s) failed");
            EXIT_VERIFY
        }
        Err(Outcome::Failed(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Context {
    config: Option<RunConfig>,
    out: PathBuf,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => Some(RunConfig::load(p)?),
            None => None,
        };
        if let (Some(c), Some(seed)) = (config.as_mut(), cli.seed) {
            c.simulation.seed = seed;
        }
        let out = cli
            .out
            .clone()
            .or_else(|| config.as_ref().map(|c| c.output.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { config, out })
    }

    fn config(&self) -> Result<&RunConfig> {
        self.config
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs --config <path>".into()))
    }

    fn field_path(&self, args: &FieldArgs) -> PathBuf {
        args.field.clone().unwrap_or_else(|| self.out.join(FIELD_FILE))
    }
}

fn dispatch(cli: &Cli) -> std::result::Result<(), Outcome> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Solve => cmd_solve(&ctx).map_err(Outcome::from),
        Command::Simulate(args) => cmd_simulate(&ctx, args).map_err(Outcome::from),
        Command::SweepEpsilon(args) => cmd_sweep_epsilon(&ctx, args).map_err(Outcome::from),
        Command::Verify(args) => {
            let failed = cmd_verify(&ctx, args)?;
            if failed > 0 {
                Err(Outcome::ChecksFailed(failed))
            } else {
                Ok(())
            }
        }
        Command::ExportSlice(args) => cmd_export_slice(&ctx, args).map_err(Outcome::from),
    }
}

fn solve_config(config: &RunConfig) -> Result<Solution> {
    let grid = build_grid(&config.grid, &config.model, &config.renewal)?;
    solve(&config.model, &config.renewal, &grid)
}

fn metadata(config: &RunConfig, sol: &Solution) -> RunMetadata {
    let nodes = sample_interior_nodes(&sol.value, config.verify.residual_samples, NODE_SAMPLE_SEED);
    let mesh = sol.value.grid.dx() + sol.value.grid.dt();
    let (_, stats) = check_viscosity_inequalities(
        &sol.value,
        &config.model,
        &config.renewal,
        &nodes,
        config.verify.residual_constant * mesh,
    );
    RunMetadata {
        params: config.model,
        spec: config.renewal,
        grid: sol.value.grid,
        diagnostics: sol.diagnostics.clone(),
        residuals: Some(stats),
    }
}

pub fn cmd_solve_to(config: &RunConfig, out: &Path) -> Result<RunMetadata> {
    let sol = solve_config(config)?;
    let meta = metadata(config, &sol);
    io::save_field(&out.join(FIELD_FILE), &sol.value, &sol.policy)?;
    io::save_json(&out.join(METADATA_FILE), &meta)?;
    Ok(meta)
}

fn cmd_solve(ctx: &Context) -> Result<()> {
    let config = ctx.config()?;
    let meta = cmd_solve_to(config, &ctx.out)?;
    let g = meta.grid;
    let d = &meta.diagnostics;
    println!(
        "solved n_t={} n_x={} x_max={} substeps={} in {:.2}s; clipped {} nodes",
        g.n_t, g.n_x, g.x_max, g.substeps, d.wall_time_secs, d.total_clipped
    );
    println!("wrote {} and {}", ctx.out.join(FIELD_FILE).display(), ctx.out.join(METADATA_FILE).display());
    Ok(())
}

/// Policy to simulate with, plus the grid value when one is at hand.
enum PolicySource {
    Preset(Preset),
    Grid(Box<ValueField>, Box<PolicyField>),
}

impl PolicySource {
    fn resolve(config: &RunConfig, args: &PolicyArgs) -> Result<Self> {
        let mut sim = config.simulation.clone();
        if let Some(p) = &args.policy {
            sim.policy = p.clone();
        }
        if let Some(p) = &args.policy_csv {
            sim.policy_csv = Some(p.clone());
        }
        if let Some(preset) = sim.preset()? {
            return Ok(PolicySource::Preset(preset));
        }
        match &sim.policy_csv {
            Some(path) => {
                let (meta, value, policy) = io::load_field(path)?;
                if meta.params != config.model || meta.spec != config.renewal {
                    return Err(Error::Config(format!(
                        "{} was solved for a different model than the config describes",
                        path.display()
                    )));
                }
                Ok(PolicySource::Grid(Box::new(value), Box::new(policy)))
            }
            None => {
                let sol = solve_config(config)?;
                Ok(PolicySource::Grid(Box::new(sol.value), Box::new(sol.policy)))
            }
        }
    }

    fn label(&self) -> String {
        match self {
            PolicySource::Preset(p) => serde_json::to_value(p)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            PolicySource::Grid(..) => "grid".into(),
        }
    }

    fn grid_value(&self, state: State) -> Option<f64> {
        match self {
            PolicySource::Grid(v, _) => Some(v.interpolate(v.grid.nearest_slice(state.s), state.x, state.w)),
            PolicySource::Preset(_) => None,
        }
    }

    fn with_policy<R>(&self, config: &RunConfig, f: impl FnOnce(&dyn FeedbackPolicy) -> R) -> R {
        match self {
            PolicySource::Preset(p) => f(&p.control(&config.model)),
            PolicySource::Grid(_, pol) => f(pol.as_ref()),
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    policy: String,
    start: State,
    seed: u64,
    h_sim: f64,
    estimate: CostEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_value: Option<f64>,
}

fn cmd_simulate(ctx: &Context, args: &SimulateArgs) -> Result<()> {
    let config = ctx.config()?;
    let source = PolicySource::resolve(config, &args.policy)?;
    let sim = &config.simulation;
    let estimate = source.with_policy(config, |pol| {
        estimate_cost(&config.model, &config.renewal, pol, sim.start, sim.n_paths, sim.seed, sim.sim_config())
    })?;
    if args.dump_paths > 0 {
        let eps = args.dump_epsilon;
        if let Some(e) = eps {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::Config(format!("--dump-epsilon must be > 0, got {e}")));
            }
        }
        let cfg = SimConfig {
            h_sim: sim.h_sim,
            record: true,
        };
        source.with_policy(config, |pol| -> Result<()> {
            let s = Simulator::new(&config.model, &config.renewal, pol, cfg)?;
            for i in 0..args.dump_paths {
                let eps_list = eps.map(|e| [e]);
                let path = s.run(sim.start, config.model.horizon, sim.seed, i as u64, eps_list.as_ref().map(|e| &e[..]))?;
                io::save_text(&ctx.out.join("paths").join(format!("path_{i}.csv")), &io::path_csv(&path, eps))?;
            }
            Ok(())
        })?;
    }
    let report = SimulateReport {
        policy: source.label(),
        start: sim.start,
        seed: sim.seed,
        h_sim: sim.h_sim,
        estimate,
        grid_value: source.grid_value(sim.start),
    };
    io::save_json(&ctx.out.join("estimate.json"), &report)?;
    println!(
        "policy {} from {:?}: J = {:.6} ± {:.6} ({} paths, ruin fraction {:.4})",
        report.policy, sim.start, estimate.mean, estimate.stderr, estimate.n_paths, estimate.ruin_fraction
    );
    if let Some(v) = report.grid_value {
        println!("grid value V = {v:.6}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepReport {
    policy: String,
    start: State,
    seed: u64,
    table: SweepTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_value: Option<f64>,
    /// `|J^ε - V|` per row, when the grid value is known.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    gap_to_grid: Vec<f64>,
}

fn cmd_sweep_epsilon(ctx: &Context, args: &PolicyArgs) -> Result<()> {
    let config = ctx.config()?;
    let source = PolicySource::resolve(config, args)?;
    let sim = &config.simulation;
    let table = source.with_policy(config, |pol| {
        epsilon_sweep(
            &config.model,
            &config.renewal,
            pol,
            sim.start,
            &config.penalty.eps_list,
            sim.n_paths,
            sim.seed,
            sim.sim_config(),
        )
    })?;
    let grid_value = source.grid_value(sim.start);
    let gap_to_grid = grid_value
        .map(|v| table.rows.iter().map(|r| (r.estimate.mean - v).abs()).collect())
        .unwrap_or_default();
    io::save_text(&ctx.out.join("sweep.csv"), &table.to_csv())?;
    for r in &table.rows {
        println!("eps={:<8} J^eps = {:.6} ± {:.6}", r.epsilon, r.estimate.mean, r.estimate.stderr);
    }
    println!("unpenalized J = {:.6} ± {:.6}", table.unpenalized.mean, table.unpenalized.stderr);
    let report = SweepReport {
        policy: source.label(),
        start: sim.start,
        seed: sim.seed,
        table,
        grid_value,
        gap_to_grid,
    };
    io::save_json(&ctx.out.join("sweep.json"), &report)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    checks: Vec<CheckReport>,
    dpp_probes: Vec<DppProbe>,
}

/// Runs every check on a field; returns the reports and the per-probe
/// dynamic programming results.
pub fn run_checks(
    config: &RunConfig,
    value: &ValueField,
    policy: &PolicyField,
) -> Result<(Vec<CheckReport>, Vec<DppProbe>)> {
    let (p, spec, v) = (&config.model, &config.renewal, &config.verify);
    let slack = grid_slack(value, p, v.k_factor);
    let mesh = value.grid.dx() + value.grid.dt();
    let nodes = sample_interior_nodes(value, v.residual_samples, NODE_SAMPLE_SEED);
    let mut checks = vec![
        check_bounds_and_x_monotonicity(value, p),
        check_time_regularity(value, p),
        check_w_inequalities(value, p, spec, slack),
        check_class_l(value, p, 1e-9),
        check_viscosity_inequalities(value, p, spec, &nodes, v.residual_constant * mesh).0,
    ];
    if let Interclaim::Exponential { rate } = spec.interclaim {
        let g = value.grid;
        let reference = solve_classical(p, rate, &spec.claim, g.x_max, g.n_x, g.n_t)?;
        checks.push(check_poisson_reduction(value, p, Some(&reference), &poisson_probes(value)));
    }
    let dpp = DppConfig {
        h: v.dpp_h,
        n_paths: v.dpp_paths,
        seed: config.simulation.seed,
        sim: config.simulation.sim_config(),
        mesh_constant: v.dpp_constant,
    };
    let (report, probes) = check_dpp_consistency(value, policy, p, spec, &v.probes, &dpp)?;
    checks.push(report);
    Ok((checks, probes))
}

fn cmd_verify(ctx: &Context, args: &FieldArgs) -> std::result::Result<usize, Outcome> {
    let config = ctx.config()?;
    let path = ctx.field_path(args);
    let (meta, value, policy) = io::load_field(&path)?;
    if meta.params != config.model || meta.spec != config.renewal {
        return Err(Error::Config(format!(
            "{} was solved for a different model than the config describes",
            path.display()
        ))
        .into());
    }
    let (checks, dpp_probes) = run_checks(config, &value, &policy)?;
    for c in &checks {
        println!("{}", c.summary());
        if !c.detail.is_empty() {
            println!("     {}", c.detail);
        }
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    io::save_json(&ctx.out.join("verify.json"), &VerifyOutput { checks, dpp_probes })?;
    Ok(failed)
}

fn cmd_export_slice(ctx: &Context, args: &ExportArgs) -> Result<()> {
    let path = ctx.field_path(&args.field);
    let (_, value, policy) = io::load_field(&path)?;
    let g = value.grid;
    let (selector, name) = match (args.s, args.w) {
        (Some(s), None) => (SliceSelector::Time(s), format!("slice_s_{}.csv", g.nearest_slice(s))),
        (None, Some(w)) => (SliceSelector::Age(w), format!("slice_w_{}.csv", g.nearest_slice(w))),
        _ => return Err(Error::Config("give exactly one of --s or --w".into())),
    };
    let (csv, notice) = io::export_slice(&value, &policy, selector);
    if let Some(n) = notice {
        eprintln!("note: {n}");
    }
    let target = ctx.out.join(name);
    io::save_text(&target, &csv)?;
    println!("wrote {}", target.display());
    Ok(())
}
