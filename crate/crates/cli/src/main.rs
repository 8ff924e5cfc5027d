//! `beamlearn`: train, evaluate and compare beam-aware learners, and run
//! the verification suite.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use beamlearn::learner::{
    alpha_hat, azuma_eta, evaluate_cost, learn, mixture_cost, stopreset_bound, LearnOutcome,
};
use beamlearn::losses::LossKind;
use beamlearn::scoring::Parameters;
use beamlearn::collection::Strategy;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use config::{preset, RunConfig};

#[derive(Parser)]
#[command(name = "beamlearn", version, about = "Learning beam search policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (flat `key = value` file).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Learner seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence parameter of the reported bounds.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write metrics, checkpoints and the selected model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Apply a named loss/strategy preset.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Decode the validation split with a saved model.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model file; defaults to `<out>/final_model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train every loss x strategy cell (and presets) and tabulate validation costs.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated loss names.
        #[arg(long)]
        losses: Option<String>,
        /// Comma-separated strategies.
        #[arg(long)]
        strategies: Option<String>,
        /// Comma-separated preset names.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run the property and oracle checks.
    Check,
}

/// Failures mapped to exit codes: 1 for verification, 2 for usage/config.
enum Failure {
    Verification(String),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common, preset } => cmd_train(&common, preset.as_deref()),
        Command::Evaluate { common, model } => cmd_evaluate(&common, model),
        Command::Compare {
            common,
            losses,
            strategies,
            preset,
        } => cmd_compare(&common, losses.as_deref(), strategies.as_deref(), preset.as_deref()),
        Command::Check => cmd_check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut c = RunConfig::from_file(&common.config)?;
    if let Some(out) = &common.out {
        c.out = out.clone();
    }
    if let Some(seed) = common.seed {
        c.seed = seed;
    }
    if let Some(delta) = common.delta {
        c.delta = delta;
    }
    c.check()?;
    Ok(c)
}

#[derive(Serialize)]
struct MetricsRow {
    round: usize,
    surrogate_loss: f64,
    terminal_cost: f64,
    cost_increases: usize,
    pure_rollin: Option<bool>,
    gamma_hat: Option<f64>,
    alpha_hat: Option<f64>,
    eta: f64,
    wallclock_ms: u64,
}

#[derive(Serialize)]
struct Summary {
    loss: String,
    strategy: String,
    k: usize,
    seed: u64,
    rounds: usize,
    best_round: usize,
    validation_cost: f64,
    final_validation_cost: f64,
    mixture_validation_cost: Option<f64>,
    mean_surrogate_loss: f64,
    training_cost_increase_rate: f64,
    alpha_hat: Option<f64>,
    loss_bound: f64,
    delta: f64,
    eta: f64,
    gamma_hat: Option<f64>,
    stopreset_bound: Option<f64>,
    skipped_rounds: usize,
}

struct Trained {
    config: RunConfig,
    outcome: LearnOutcome,
    mixture: Option<f64>,
    elapsed_ms: Vec<u64>,
}

fn train_config(c: &RunConfig) -> Result<Trained> {
    let (train, validation) = c.examples()?;
    let train = c.spaces(&train)?;
    let validation = c.spaces(&validation)?;
    let start = Instant::now();
    let outcome = learn(&train, &validation, &c.learn_config())?;
    let total_ms = start.elapsed().as_millis() as u64;
    let rounds = outcome.history.len().max(1) as u64;
    // per-round timing is approximated by an even split of the run
    let elapsed_ms = (1..=rounds).map(|r| total_ms * r / rounds).collect();
    let eval = if validation.is_empty() { &train } else { &validation };
    let mixture = if c.mixture_draws > 0 {
        Some(mixture_cost(&outcome.snapshots, eval, c.k, c.mixture_draws, c.seed)?)
    } else {
        None
    };
    Ok(Trained {
        config: c.clone(),
        outcome,
        mixture,
        elapsed_ms,
    })
}

fn summarize(t: &Trained) -> Result<Summary> {
    let c = &t.config;
    let o = &t.outcome;
    let m = o.tracker.rounds();
    let increases = o.history.iter().filter(|r| r.cost_increases > 0).count();
    let stopreset = matches!(c.strategy, Strategy::Stop | Strategy::Reset)
        .then(|| stopreset_bound(&o.tracker, c.delta))
        .transpose()?;
    Ok(Summary {
        loss: c.loss.name().to_string(),
        strategy: c.strategy.to_string(),
        k: c.k,
        seed: c.seed,
        rounds: m,
        best_round: o.state.best_round,
        validation_cost: o.state.best_validation_cost,
        final_validation_cost: o.validation.last().map_or(f64::NAN, |v| v.1),
        mixture_validation_cost: t.mixture,
        mean_surrogate_loss: o.tracker.mean_loss(),
        training_cost_increase_rate: increases as f64 / m.max(1) as f64,
        alpha_hat: alpha_hat(&o.tracker),
        loss_bound: o.tracker.loss_bound,
        delta: c.delta,
        eta: azuma_eta(o.tracker.loss_bound, c.delta, m.max(1))?,
        gamma_hat: o.history.iter().rev().find_map(|r| r.gamma_hat),
        stopreset_bound: stopreset,
        skipped_rounds: o.history.iter().filter(|r| r.skipped).count(),
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Serialize)]
struct RegretRow {
    round: usize,
    mean_surrogate_loss: f64,
    gamma_hat: Option<f64>,
    eta: f64,
    loss_plus_eta: f64,
}

#[derive(Serialize)]
struct CostRow {
    round: usize,
    validation_cost: f64,
    running_training_cost: f64,
}

fn write_run(t: &Trained) -> Result<()> {
    let c = &t.config;
    let o = &t.outcome;
    let dir = &c.out;
    std::fs::create_dir_all(dir.join("checkpoints"))
        .with_context(|| format!("cannot create {}", dir.display()))?;

    write_csv(
        &dir.join("metrics.csv"),
        o.history.iter().zip(&t.elapsed_ms).map(|(r, ms)| MetricsRow {
            round: r.round,
            surrogate_loss: r.surrogate_loss,
            terminal_cost: r.terminal_cost,
            cost_increases: r.cost_increases,
            pure_rollin: r.pure_rollin,
            gamma_hat: r.gamma_hat,
            alpha_hat: r.alpha_hat,
            eta: r.eta,
            wallclock_ms: if c.record_wallclock { *ms } else { 0 },
        }),
    )?;

    let mut running = 0.0;
    let regret: Vec<RegretRow> = o
        .history
        .iter()
        .map(|r| {
            running += r.surrogate_loss;
            let mean = running / r.round as f64;
            RegretRow {
                round: r.round,
                mean_surrogate_loss: mean,
                gamma_hat: r.gamma_hat,
                eta: r.eta,
                loss_plus_eta: mean + r.eta,
            }
        })
        .collect();
    write_csv(&dir.join("regret_curve.csv"), regret)?;

    let mut costs = Vec::new();
    for &(round, validation_cost) in &o.validation {
        let seen = &o.tracker.costs[..round];
        let running_training_cost = if seen.is_empty() { 0.0 } else { seen.iter().sum::<f64>() / seen.len() as f64 };
        costs.push(CostRow {
            round,
            validation_cost,
            running_training_cost,
        });
    }
    write_csv(&dir.join("cost_curve.csv"), costs)?;

    for (round, theta) in &o.checkpoints {
        theta.save_json(dir.join("checkpoints").join(format!("round_{round:06}.json")))?;
    }
    o.state.best_theta.save_json(dir.join("final_model.json"))?;
    write_json(&dir.join("summary.json"), &summarize(t)?)?;
    Ok(())
}

fn cmd_train(common: &Common, preset_name: Option<&str>) -> Result<(), Failure> {
    let mut c = load(common)?;
    if let Some(name) = preset_name {
        c = preset(name)?.apply(&c);
    }
    let trained = train_config(&c)?;
    write_run(&trained)?;
    let s = summarize(&trained)?;
    println!(
        "trained {} rounds ({} / {} / k={}): validation cost {:.4} at round {}; wrote {}",
        s.rounds,
        s.loss,
        s.strategy,
        s.k,
        s.validation_cost,
        s.best_round,
        c.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    model: String,
    k: usize,
    examples: usize,
    mean_terminal_cost: f64,
}

fn cmd_evaluate(common: &Common, model: Option<PathBuf>) -> Result<(), Failure> {
    let c = load(common)?;
    let model = model.unwrap_or_else(|| c.out.join("final_model.json"));
    let theta = Parameters::load_json(&model).map_err(|e| anyhow::anyhow!("cannot load {}: {e}", model.display()))?;
    let (train, validation) = c.examples()?;
    let examples = if validation.is_empty() { train } else { validation };
    let spaces = c.spaces(&examples)?;
    let cost = evaluate_cost(&theta, &spaces, c.k).map_err(anyhow::Error::from)?;
    let report = Evaluation {
        model: model.display().to_string(),
        k: c.k,
        examples: spaces.len(),
        mean_terminal_cost: cost,
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    Ok(())
}

fn split_list(list: &str) -> Vec<String> {
    list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

#[derive(Serialize)]
struct CompareRow {
    cell: String,
    loss: String,
    strategy: String,
    k: usize,
    seed: u64,
    validation_cost: f64,
    final_validation_cost: f64,
    mean_surrogate_loss: f64,
    training_cost_increase_rate: f64,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("BEAMLEARN_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow::anyhow!("BEAMLEARN_THREADS must be a positive integer, got `{v}`"))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn cmd_compare(
    common: &Common,
    losses: Option<&str>,
    strategies: Option<&str>,
    presets: Option<&str>,
) -> Result<(), Failure> {
    let base = load(common)?;
    let mut cells: Vec<(String, RunConfig)> = Vec::new();

    let loss_names = losses.map(split_list);
    let strategy_names = strategies.map(split_list);
    if matches!(&loss_names, Some(l) if l.is_empty()) {
        return Err(anyhow::anyhow!("--losses lists no loss").into());
    }
    if matches!(&strategy_names, Some(s) if s.is_empty()) {
        return Err(anyhow::anyhow!("--strategies lists no strategy").into());
    }
    if loss_names.is_some() || strategy_names.is_some() || presets.is_none() {
        let losses: Vec<LossKind> = match loss_names {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_, _>>().map_err(anyhow::Error::from)?,
            None => vec![base.loss],
        };
        let strategies: Vec<Strategy> = match strategy_names {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_, _>>().map_err(anyhow::Error::from)?,
            None => vec![base.strategy],
        };
        for &loss in &losses {
            for &strategy in &strategies {
                let mut c = base.clone();
                c.loss = loss;
                c.strategy = strategy;
                cells.push((format!("{loss}/{strategy}"), c));
            }
        }
    }
    if let Some(list) = presets {
        let names = split_list(list);
        if names.is_empty() {
            return Err(anyhow::anyhow!("--preset lists no preset").into());
        }
        for name in names {
            let p = preset(&name)?;
            cells.push((p.name.to_string(), p.apply(&base)));
        }
    }
    for (i, (_, c)) in cells.iter_mut().enumerate() {
        c.out = base.out.join(format!("cell_{i:03}"));
        c.mixture_draws = 0;
        c.regret_every = 0;
    }

    let pool = thread_pool()?;
    let results: Vec<Result<Trained>> = pool.install(|| cells.par_iter().map(|(_, c)| train_config(c)).collect());
    let mut rows = Vec::new();
    for ((cell, _), result) in cells.iter().zip(results) {
        let trained = result?;
        let s = summarize(&trained)?;
        rows.push(CompareRow {
            cell: cell.clone(),
            loss: s.loss,
            strategy: s.strategy,
            k: s.k,
            seed: s.seed,
            validation_cost: s.validation_cost,
            final_validation_cost: s.final_validation_cost,
            mean_surrogate_loss: s.mean_surrogate_loss,
            training_cost_increase_rate: s.training_cost_increase_rate,
        });
    }
    std::fs::create_dir_all(&base.out).with_context(|| format!("cannot create {}", base.out.display()))?;
    let path = base.out.join("compare.csv");
    for r in &rows {
        println!("{:<32} k={:<2} validation cost {:.4}", r.cell, r.k, r.validation_cost);
    }
    write_csv(&path, rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_check() -> Result<(), Failure> {
    let start = Instant::now();
    let outcomes = beamlearn::verify::run_suite().map_err(anyhow::Error::from)?;
    let mut failed = Vec::new();
    for o in &outcomes {
        println!("{:<4}  {:<26} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        if !o.passed {
            failed.push(o.name.clone());
        }
    }
    println!("{} checks in {:.1} s", outcomes.len(), start.elapsed().as_secs_f64());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.join(", ")))
    }
}
