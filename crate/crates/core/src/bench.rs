//! Benchmark sweeps comparing node orderings over many initial states.
//!
//! Every `(strategy, N, x0)` cell is an independent solve. Suboptimality is
//! `J − J_ref`, where `J_ref` is the enumeration optimum when `|V|^N` is
//! within the oracle limit and otherwise the best `J` any strategy found for
//! that `(N, x0)`.

use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bnb::{solve_bnb, BnbConfig, BnbStatus, GuessSet};
use crate::guessgen::{plateau_guesses, table1_templates, tail_guess_sets, GuessError};
use crate::model::MiocpInstance;
use crate::oracle::{enumerate_solve, sequence_count, DEFAULT_SEQUENCE_LIMIT};
use crate::turnpike::{solve_steady_state, TurnpikeError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot parse {what} `{text}`: {reason}")]
    Parse {
        what: &'static str,
        text: String,
        reason: String,
    },
    #[error("x0 sample {index} has {got} entries, the instance has {nx} states")]
    X0Dimension { index: usize, got: usize, nx: usize },
    #[error(transparent)]
    Guess(#[from] GuessError),
    #[error(transparent)]
    Turnpike(#[from] TurnpikeError),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn parse_err(what: &'static str, text: &str, reason: impl ToString) -> BenchError {
    BenchError::Parse {
        what,
        text: text.to_string(),
        reason: reason.to_string(),
    }
}

/// Initial states of a sweep. One-entry samples are broadcast over all
/// states.
#[derive(Debug, Clone, PartialEq)]
pub enum X0Sweep {
    List(Vec<Vec<f64>>),
    /// `count` evenly spaced scalars from `lo` to `hi`, each optionally
    /// perturbed per state by uniform noise in `[-amplitude, amplitude]`.
    Linspace {
        lo: f64,
        hi: f64,
        count: usize,
        noise: Option<Noise>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    pub amplitude: f64,
    pub seed: u64,
}

impl X0Sweep {
    /// `list:a,b;c,d` (samples split by `;`), `linspace:lo,hi,count` or
    /// `linspace:lo,hi,count,noise=a`. Noise takes its seed from `seed`.
    pub fn parse(text: &str, seed: Option<u64>) -> Result<Self, BenchError> {
        let err = |reason: &str| parse_err("x0 sweep", text, reason);
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| parse_err("x0 sweep", text, e));
        let (kind, body) = text
            .split_once(':')
            .ok_or_else(|| err("expected list:... or linspace:..."))?;
        match kind {
            "list" if body.trim().is_empty() => Ok(Self::List(Vec::new())),
            "list" => body
                .split(';')
                .map(|s| s.split(',').map(num).collect())
                .collect::<Result<_, _>>()
                .map(Self::List),
            "linspace" => {
                let parts: Vec<&str> = body.split(',').collect();
                let (fixed, noise) = match parts.as_slice() {
                    [a, b, c] => ([*a, *b, *c], None),
                    [a, b, c, n] => {
                        let amp = n
                            .trim()
                            .strip_prefix("noise=")
                            .ok_or_else(|| err("fourth field must be noise=A"))?;
                        let seed = seed.ok_or_else(|| err("noise needs a seed"))?;
                        let amplitude = num(amp)?;
                        if !(amplitude >= 0.0) {
                            return Err(err("noise amplitude must be non-negative"));
                        }
                        ([*a, *b, *c], Some(Noise { amplitude, seed }))
                    }
                    _ => return Err(err("expected lo,hi,count[,noise=A]")),
                };
                let count = fixed[2]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| parse_err("x0 sweep", text, e))?;
                Ok(Self::Linspace {
                    lo: num(fixed[0])?,
                    hi: num(fixed[1])?,
                    count,
                    noise,
                })
            }
            _ => Err(err("unknown sweep kind")),
        }
    }

    pub fn samples(&self, nx: usize) -> Result<Vec<DVector<f64>>, BenchError> {
        let broadcast = |i: usize, v: &[f64]| match v.len() {
            1 => Ok(DVector::from_element(nx, v[0])),
            n if n == nx => Ok(DVector::from_column_slice(v)),
            got => Err(BenchError::X0Dimension { index: i, got, nx }),
        };
        match self {
            Self::List(list) => list.iter().enumerate().map(|(i, v)| broadcast(i, v)).collect(),
            Self::Linspace { lo, hi, count, noise } => {
                let mut rng = noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));
                Ok((0..*count)
                    .map(|i| {
                        let t = if *count > 1 {
                            i as f64 / (*count - 1) as f64
                        } else {
                            0.0
                        };
                        let base = lo + t * (hi - lo);
                        DVector::from_fn(nx, |_, _| match (&mut rng, noise) {
                            (Some(r), Some(n)) if n.amplitude > 0.0 => base + r.gen_range(-n.amplitude..=n.amplitude),
                            _ => base,
                        })
                    })
                    .collect())
            }
        }
    }
}

/// Where the guesses of a weighted run come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Recipe {
    /// Hand-picked templates around a zero plateau, with their own weights.
    Table1,
    /// Relaxed before `k̂`, the steady-state `v̄` from `k̂` on, at the
    /// dominant weight. `k̂ = 0` is the pure plateau.
    Tail(usize),
    /// A fixed guess set, typically read from a file.
    Given(GuessSet),
}

impl Recipe {
    /// `table1`, `plateau`, `tail:K`, `tail:A..B` (inclusive) or `tail:A,B,C`.
    pub fn parse_list(text: &str) -> Result<Vec<Recipe>, BenchError> {
        let err = |reason: &str| parse_err("recipe", text, reason);
        let int = |s: &str| s.trim().parse::<usize>().map_err(|e| parse_err("recipe", text, e));
        match text.split_once(':') {
            None if text == "table1" => Ok(vec![Recipe::Table1]),
            None if text == "plateau" => Ok(vec![Recipe::Tail(0)]),
            Some(("tail", ks)) => {
                let list: Vec<usize> = match ks.split_once("..") {
                    Some((a, b)) => (int(a)?..=int(b)?).collect(),
                    None => ks.split(',').map(int).collect::<Result<_, _>>()?,
                };
                if list.is_empty() {
                    return Err(err("empty k range"));
                }
                Ok(list.into_iter().map(Recipe::Tail).collect())
            }
            _ => Err(err("expected table1, plateau or tail:K")),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Recipe::Table1 => "table1".into(),
            Recipe::Tail(k) => format!("tail:{k}"),
            Recipe::Given(_) => "given".into(),
        }
    }

    /// Guesses for horizon `horizon`. `v_bar` is the steady-state integer
    /// input.
    pub fn guesses(&self, v_bar: &[i64], horizon: usize, cfg: &BnbConfig) -> Result<GuessSet, BenchError> {
        Ok(match self {
            Recipe::Table1 => plateau_guesses(&vec![0; v_bar.len()], horizon, &table1_templates())?,
            Recipe::Tail(k) => tail_guess_sets(v_bar, horizon, &[*k], cfg.strategy)?.remove(0),
            Recipe::Given(gs) => gs.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BenchStrategy {
    Standard,
    Weighted(Recipe),
}

impl BenchStrategy {
    pub fn label(&self) -> String {
        match self {
            BenchStrategy::Standard => "std".into(),
            BenchStrategy::Weighted(r) => format!("weighted:{}", r.label()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub x0: X0Sweep,
    pub horizons: Vec<usize>,
    pub strategies: Vec<BenchStrategy>,
    pub bnb: BnbConfig,
    /// Largest `|V|^N` solved by enumeration for the reference `J`.
    pub oracle_limit: u64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl BenchConfig {
    pub fn new(x0: X0Sweep, horizons: Vec<usize>, strategies: Vec<BenchStrategy>) -> Self {
        Self {
            x0,
            horizons,
            strategies,
            bnb: BnbConfig::default(),
            oracle_limit: DEFAULT_SEQUENCE_LIMIT,
            jobs: None,
        }
    }
}

/// One solve. `objective`, `gap` and `subopt` are NaN when unavailable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub strategy: String,
    pub x0_id: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub status: String,
    pub nodes: usize,
    pub qp_iters: usize,
    pub wall_ms: f64,
    #[serde(rename = "J")]
    pub objective: f64,
    pub gap: f64,
    pub subopt: f64,
}

/// Per `(strategy, N)` statistics over the runs that returned a result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub strategy: String,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub runs: usize,
    pub avg_nodes: f64,
    pub median_nodes: f64,
    pub best_nodes: f64,
    pub avg_runtime_s: f64,
    pub median_runtime_s: f64,
    pub best_runtime_s: f64,
    pub avg_subopt: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub runs: Vec<RunRow>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn min(values: &[f64]) -> f64 {
    values.iter().copied().reduce(f64::min).unwrap_or(f64::NAN)
}

/// Aggregates in first-appearance order of `(strategy, N)`. Runs with an
/// error status are left out.
pub fn aggregate(runs: &[RunRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in runs {
        let key = (r.strategy.clone(), r.horizon);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .filter_map(|(strategy, horizon)| {
            let rows: Vec<&RunRow> = runs
                .iter()
                .filter(|r| r.strategy == strategy && r.horizon == horizon && !r.status.starts_with("error"))
                .collect();
            if rows.is_empty() {
                return None;
            }
            let nodes: Vec<f64> = rows.iter().map(|r| r.nodes as f64).collect();
            let secs: Vec<f64> = rows.iter().map(|r| r.wall_ms / 1000.0).collect();
            let subopt: Vec<f64> = rows.iter().map(|r| r.subopt).filter(|s| s.is_finite()).collect();
            Some(AggregateRow {
                strategy,
                horizon,
                runs: rows.len(),
                avg_nodes: mean(&nodes),
                median_nodes: median(&nodes),
                best_nodes: min(&nodes),
                avg_runtime_s: mean(&secs),
                median_runtime_s: median(&secs),
                best_runtime_s: min(&secs),
                avg_subopt: mean(&subopt),
            })
        })
        .collect()
}

fn run_cells(inst: &MiocpInstance, cfg: &BenchConfig) -> Result<Vec<RunRow>, BenchError> {
    let samples = cfg.x0.samples(inst.nx())?;
    let v_bar = solve_steady_state(inst)?.v_bar;
    // Guesses depend only on the strategy and the horizon.
    let mut guess_sets = Vec::new();
    for s in &cfg.strategies {
        for &n in &cfg.horizons {
            guess_sets.push(match s {
                BenchStrategy::Standard => GuessSet::empty(),
                BenchStrategy::Weighted(r) => r.guesses(&v_bar, n, &cfg.bnb)?,
            });
        }
    }
    let (nh, ns) = (cfg.horizons.len(), samples.len());
    let cells: Vec<(usize, usize, usize)> = (0..cfg.strategies.len())
        .flat_map(|s| (0..nh).flat_map(move |h| (0..ns).map(move |i| (s, h, i))))
        .collect();
    let mut rows: Vec<RunRow> = cells
        .par_iter()
        .map(|&(s, h, i)| {
            let n = cfg.horizons[h];
            let cell = inst.with_horizon(n).with_x0(samples[i].clone());
            let base = RunRow {
                strategy: cfg.strategies[s].label(),
                x0_id: i,
                horizon: n,
                status: String::new(),
                nodes: 0,
                qp_iters: 0,
                wall_ms: 0.0,
                objective: f64::NAN,
                gap: f64::NAN,
                subopt: f64::NAN,
            };
            match solve_bnb(&cell, &guess_sets[s * nh + h], &cfg.bnb) {
                Ok(r) => RunRow {
                    status: format!("{:?}", r.status),
                    nodes: r.stats.nodes_solved,
                    qp_iters: r.stats.qp_iterations,
                    wall_ms: r.stats.wall_time.as_secs_f64() * 1000.0,
                    objective: r.objective,
                    gap: if r.status == BnbStatus::Infeasible {
                        f64::NAN
                    } else {
                        r.gap()
                    },
                    ..base
                },
                Err(e) => {
                    log::warn!("{} x0 {i} N {n}: {e}", base.strategy);
                    RunRow {
                        status: format!("error: {e}"),
                        ..base
                    }
                }
            }
        })
        .collect();

    // Reference objective per (N, x0).
    let references: Vec<f64> = (0..nh)
        .flat_map(|h| (0..ns).map(move |i| (h, i)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(h, i)| {
            let n = cfg.horizons[h];
            let cell = inst.with_horizon(n).with_x0(samples[i].clone());
            let oracle = sequence_count(&cell)
                .filter(|&c| c <= cfg.oracle_limit)
                .and_then(|_| enumerate_solve(&cell, cfg.oracle_limit, &cfg.bnb.qp).ok())
                .filter(|o| o.is_feasible())
                .map(|o| o.objective);
            oracle.unwrap_or_else(|| {
                rows.iter()
                    .filter(|r| r.horizon == n && r.x0_id == i && r.objective.is_finite())
                    .map(|r| r.objective)
                    .fold(f64::INFINITY, f64::min)
            })
        })
        .collect();
    for r in &mut rows {
        let h = cfg
            .horizons
            .iter()
            .position(|&n| n == r.horizon)
            .expect("horizon from the config");
        let reference = references[h * ns + r.x0_id];
        if r.objective.is_finite() && reference.is_finite() {
            r.subopt = r.objective - reference;
        }
    }
    Ok(rows)
}

/// Runs the sweep. Solver failures become rows; only setup errors abort.
pub fn run_bench(inst: &MiocpInstance, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let runs = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| BenchError::Pool(e.to_string()))?
            .install(|| run_cells(inst, cfg))?,
        None => run_cells(inst, cfg)?,
    };
    let aggregate = aggregate(&runs);
    Ok(BenchReport { runs, aggregate })
}

fn write_rows<W: Write, T: Serialize>(rows: &[T], header: &[&str], out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub const RUN_COLUMNS: [&str; 10] = [
    "strategy", "x0_id", "N", "status", "nodes", "qp_iters", "wall_ms", "J", "gap", "subopt",
];

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "strategy",
    "N",
    "runs",
    "avg_nodes",
    "median_nodes",
    "best_nodes",
    "avg_runtime_s",
    "median_runtime_s",
    "best_runtime_s",
    "avg_subopt",
];

pub fn write_runs_csv<W: Write>(runs: &[RunRow], out: W) -> std::io::Result<()> {
    write_rows(runs, &RUN_COLUMNS, out)
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> std::io::Result<()> {
    write_rows(rows, &AGGREGATE_COLUMNS, out)
}
