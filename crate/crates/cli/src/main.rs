//! `tmiqp`: solve, benchmark and inspect mixed-integer optimal control
//! instances.
//!
//! Exit codes of `solve`: 0 optimal, 2 stopped by a limit, 3 infeasible,
//! 1 on any error. Other subcommands exit 0 on success and 1 on error.

use std::fs::{self, File};
use std::io::{BufWriter, ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::{json, Value};

use tmiqp::bench::{run_bench, write_aggregate_csv, write_runs_csv, BenchConfig, BenchStrategy, Recipe, X0Sweep};
use tmiqp::bnb::{solve_bnb, BnbConfig, BnbResult, BnbStatus, GuessSet};
use tmiqp::dissipativity::certify_instance;
use tmiqp::instances::{builtin, BUILTIN_NAMES};
use tmiqp::io::{instance_to_json, read_guesses, read_instance};
use tmiqp::model::{MiocpInstance, Trajectory};
use tmiqp::turnpike::{solve_steady_state, turnpike_profile, write_report_csv, write_trajectory_csv};

#[derive(Parser)]
#[command(
    name = "tmiqp",
    version,
    about = "Branch-and-bound for linear-quadratic mixed-integer optimal control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the result as JSON.
    Solve(SolveArgs),
    /// Sweep initial states and horizons, writing per-run and aggregate CSVs.
    Bench(BenchArgs),
    /// Measure how long optimal trajectories stay near the steady state.
    Turnpike(TurnpikeArgs),
    /// Look for a quadratic storage function certifying dissipativity.
    Certify(InstanceArgs),
    /// List the built-in instances, or print one as JSON.
    Instances(InstancesArgs),
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false, id = "source")]
struct Source {
    /// Instance file in JSON.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Built-in instance: illustrative, example1, example2 or example2:<nx>.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    #[command(flatten)]
    source: Source,
    /// Override the horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Override the initial state; one value is broadcast over all states.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
}

#[derive(Args, Clone)]
struct Limits {
    /// Stop once the incumbent is within this of the lower bound.
    #[arg(long, default_value_t = 1e-6)]
    eps_tol: f64,
    /// Maximum number of relaxations per solve.
    #[arg(long)]
    node_limit: Option<usize>,
    /// Wall-clock limit per solve in seconds.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
}

impl Limits {
    fn config(&self) -> Result<BnbConfig> {
        if !(self.time_limit > 0.0) || !self.time_limit.is_finite() {
            bail!("--time-limit must be positive and finite");
        }
        Ok(BnbConfig {
            eps_tol: self.eps_tol,
            node_limit: self.node_limit,
            time_limit: Some(Duration::from_secs_f64(self.time_limit)),
            ..BnbConfig::default()
        })
    }
}

#[derive(Args, Clone)]
#[group(multiple = false)]
struct GuessSource {
    /// Guess file: a list of {"V": [...], "w": ...} or an object with a
    /// `guesses` key.
    #[arg(long)]
    guesses: Option<PathBuf>,
    /// Generated guesses: table1, plateau, tail:K, tail:A..B or tail:A,B.
    #[arg(long)]
    recipe: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Std,
    Weighted,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    guess: GuessSource,
    /// Defaults to weighted when guesses are available, std otherwise.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[command(flatten)]
    limits: Limits,
    /// Include the per-node trace in the output.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    guess: GuessSource,
    /// Initial states: list:a,b;c,d or linspace:lo,hi,count[,noise=A].
    #[arg(long, allow_hyphen_values = true)]
    x0_sweep: String,
    /// Horizons to run; defaults to the instance horizon.
    #[arg(long, value_delimiter = ',')]
    horizons: Vec<usize>,
    /// Strategies to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StrategyArg::Std, StrategyArg::Weighted])]
    strategy: Vec<StrategyArg>,
    #[command(flatten)]
    limits: Limits,
    /// Seed for the initial-state noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for runs.csv and aggregate.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TurnpikeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Initial states: list:a,b;c,d or linspace:lo,hi,count[,noise=A].
    /// Defaults to the instance's own x0.
    #[arg(long, allow_hyphen_values = true)]
    x0_sweep: Option<String>,
    /// Horizons to run; defaults to the instance horizon.
    #[arg(long, value_delimiter = ',')]
    horizons: Vec<usize>,
    /// Distances defining the neighbourhood of the steady state.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5])]
    eps: Vec<f64>,
    #[command(flatten)]
    limits: Limits,
    /// Seed for the initial-state noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for profile.csv and the trajectory files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InstancesArgs {
    /// Print this built-in instance as JSON instead of listing names.
    #[arg(long)]
    builtin: Option<String>,
    /// Override the horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Override the initial state; one value is broadcast over all states.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Instance plus any guesses stored in its file.
fn load(args: &InstanceArgs) -> Result<(MiocpInstance, Option<GuessSet>)> {
    if args.horizon == Some(0) {
        bail!("--horizon must be at least 1");
    }
    let (mut inst, guesses) = match (&args.source.instance, &args.source.builtin) {
        (Some(path), _) => {
            let file = read_instance(path)?;
            (file.instance, file.guesses)
        }
        (None, Some(name)) => {
            let inst = builtin(name, args.horizon, args.x0.as_deref()).with_context(|| {
                format!(
                    "unknown built-in `{name}` or bad x0; known: {}",
                    BUILTIN_NAMES.join(", ")
                )
            })?;
            (inst, None)
        }
        (None, None) => bail!("give --instance or --builtin"),
    };
    if let Some(n) = args.horizon.filter(|&n| n != inst.horizon) {
        inst = inst.with_horizon(n);
    }
    if let Some(x0) = &args.x0 {
        inst = inst.with_x0(broadcast(x0, inst.nx())?);
    }
    let guesses = guesses.filter(|g| g.guesses.iter().all(|p| p.len() == inst.horizon));
    Ok((inst, guesses))
}

/// Writes a line to stdout. A closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn broadcast(values: &[f64], nx: usize) -> Result<DVector<f64>> {
    match values.len() {
        1 => Ok(DVector::from_element(nx, values[0])),
        n if n == nx => Ok(DVector::from_column_slice(values)),
        n => bail!("x0 has {n} entries, the instance has {nx} states"),
    }
}

fn recipes(src: &GuessSource) -> Result<Vec<Recipe>> {
    Ok(match (&src.guesses, &src.recipe) {
        (Some(path), _) => vec![Recipe::Given(read_guesses(path)?)],
        (None, Some(text)) => Recipe::parse_list(text)?,
        (None, None) => Vec::new(),
    })
}

fn trajectory_json(traj: &Trajectory) -> Value {
    let rows = |seq: &[DVector<f64>]| seq.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>();
    json!({ "x": rows(&traj.x), "u": rows(&traj.u), "v": rows(&traj.v) })
}

fn result_json(r: &BnbResult, trace: bool) -> Value {
    let mut out = json!({
        "status": r.status,
        "J": r.objective,
        "lower_bound": r.lower_bound,
        "gap": r.gap(),
        "nodes": r.stats.nodes_solved,
        "qp_iters": r.stats.qp_iterations,
        "unresolved_nodes": r.stats.unresolved_nodes,
        "time": r.stats.wall_time.as_secs_f64(),
        "v": r.v,
        "trajectory": r.traj.as_ref().map(trajectory_json),
    });
    if trace {
        out["trace"] = serde_json::to_value(&r.trace).expect("trace records serialize");
    }
    out
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let (inst, file_guesses) = load(&args.instance)?;
    let recipes = recipes(&args.guess)?;
    let have_guesses = !recipes.is_empty() || file_guesses.is_some();
    let strategy = args.strategy.unwrap_or(if have_guesses {
        StrategyArg::Weighted
    } else {
        StrategyArg::Std
    });
    let mut cfg = args.limits.config()?;
    cfg.trace = args.trace;

    let mut guesses = GuessSet::empty();
    if strategy == StrategyArg::Weighted {
        let recipes = match (recipes.is_empty(), file_guesses) {
            (false, _) => recipes,
            (true, Some(gs)) => vec![Recipe::Given(gs)],
            (true, None) => vec![Recipe::Tail(0)],
        };
        let v_bar = solve_steady_state(&inst)?.v_bar;
        for r in &recipes {
            guesses.extend(r.guesses(&v_bar, inst.horizon, &cfg)?);
        }
    } else if have_guesses {
        log::warn!("std strategy ignores the supplied guesses");
    }
    let result = solve_bnb(&inst, &guesses, &cfg)?;
    emit(&serde_json::to_string_pretty(&result_json(&result, args.trace))?)?;
    Ok(ExitCode::from(match result.status {
        BnbStatus::Optimal => 0,
        BnbStatus::Suboptimal => 2,
        BnbStatus::Infeasible => 3,
    }))
}

fn horizons(list: &[usize], inst: &MiocpInstance) -> Result<Vec<usize>> {
    if list.contains(&0) {
        bail!("horizons must be at least 1");
    }
    Ok(if list.is_empty() {
        vec![inst.horizon]
    } else {
        list.to_vec()
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode> {
    let (inst, file_guesses) = load(&args.instance)?;
    let mut recipes = recipes(&args.guess)?;
    if recipes.is_empty() {
        recipes = match file_guesses {
            Some(gs) => vec![Recipe::Given(gs)],
            None => vec![Recipe::Tail(0)],
        };
    }
    let mut strategies = Vec::new();
    for s in &args.strategy {
        match s {
            StrategyArg::Std => strategies.push(BenchStrategy::Standard),
            StrategyArg::Weighted => strategies.extend(recipes.iter().cloned().map(BenchStrategy::Weighted)),
        }
    }
    let mut cfg = BenchConfig::new(
        X0Sweep::parse(&args.x0_sweep, args.seed)?,
        horizons(&args.horizons, &inst)?,
        strategies,
    );
    cfg.bnb = args.limits.config()?;
    cfg.jobs = args.jobs;
    let report = run_bench(&inst, &cfg)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_runs_csv(&report.runs, create(&args.out.join("runs.csv"))?)?;
    write_aggregate_csv(&report.aggregate, create(&args.out.join("aggregate.csv"))?)?;
    let mut table = Vec::new();
    write_aggregate_csv(&report.aggregate, &mut table)?;
    emit(String::from_utf8(table)?.trim_end())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_turnpike(args: &TurnpikeArgs) -> Result<ExitCode> {
    let (inst, _) = load(&args.instance)?;
    let x0_list = match &args.x0_sweep {
        Some(spec) => X0Sweep::parse(spec, args.seed)?.samples(inst.nx())?,
        None => vec![inst.x0.clone()],
    };
    let horizons = horizons(&args.horizons, &inst)?;
    let cfg = args.limits.config()?;
    let run = || turnpike_profile(&inst, &x0_list, &horizons, &args.eps, &cfg);
    let report = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()?
            .install(run)?,
        None => run()?,
    };

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_report_csv(&report, create(&args.out.join("profile.csv"))?)?;
    for r in &report.runs {
        match (&r.traj, &r.error) {
            (Some(traj), _) => {
                let name = format!("traj_x{}_N{}.csv", r.x0_id, r.horizon);
                write_trajectory_csv(traj, create(&args.out.join(name))?)?;
            }
            (None, Some(e)) => log::warn!("x0 {} N {}: {e}", r.x0_id, r.horizon),
            (None, None) => {}
        }
    }
    emit(&serde_json::to_string_pretty(&json!({
        "z_bar": report.z_bar,
        "c_fit": report.c_fit,
        "runs": report.runs.len(),
        "failed": report.runs.iter().filter(|r| r.error.is_some()).count(),
    }))?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_certify(args: &InstanceArgs) -> Result<ExitCode> {
    let (inst, _) = load(args)?;
    let cert = certify_instance(&inst)?;
    let p: Vec<Vec<f64>> = cert.p.row_iter().map(|r| r.iter().copied().collect()).collect();
    emit(&serde_json::to_string_pretty(&json!({
        "status": cert.status,
        "eps": cert.eps,
        "residual_min_eig": cert.residual_min_eig,
        "P": p,
    }))?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_instances(args: &InstancesArgs) -> Result<ExitCode> {
    if args.horizon == Some(0) {
        bail!("--horizon must be at least 1");
    }
    let Some(name) = &args.builtin else {
        emit(&BUILTIN_NAMES.join("\n"))?;
        return Ok(ExitCode::SUCCESS);
    };
    let inst = builtin(name, args.horizon, args.x0.as_deref()).with_context(|| {
        format!(
            "unknown built-in `{name}` or bad x0; known: {}",
            BUILTIN_NAMES.join(", ")
        )
    })?;
    let text = instance_to_json(&inst, None);
    match &args.out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => emit(&text)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TMIQP_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Turnpike(a) => cmd_turnpike(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Instances(a) => cmd_instances(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
