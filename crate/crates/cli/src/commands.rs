//! `gt select`, `gt analyze` and `gt bench`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use gt_core::halving::{default_chunk_size, select_bha, select_op_bha};
use gt_core::tree::resolve_workers;
use gt_core::{
    analyze, select_op_bha_parallel, Error as EngineError, LatticeModel, Response, Selection,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{parse_config, RunConfig};
use crate::error::{CliError, Result};
use crate::history::{parse_history, replay};
use crate::report::{report_file, sig12, write_report, SelectOutput};

/// Largest subject count the exhaustive selector is benchmarked on.
pub const BHA_BENCH_LIMIT: usize = 20;

#[derive(Debug, Parser)]
#[command(
    name = "gt",
    version,
    about = "Bayesian group testing: pool selection and policy analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the next pool to test, after replaying an optional history.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
        /// Overrides `worker_count` (0 = one per core).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the configured tree analysis and write report.json and subjects.csv.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Time the selectors on the fresh lattice and on seeded random histories.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "bha,opbha,opbha_par")]
        algos: Vec<Algo>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Algo {
    #[value(name = "bha")]
    #[serde(rename = "bha")]
    Bha,
    #[value(name = "opbha")]
    #[serde(rename = "opbha")]
    OpBha,
    #[value(name = "opbha_par")]
    #[serde(rename = "opbha_par")]
    OpBhaPar,
}

pub fn run(cli: Cli, stdout: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Select {
            config,
            history,
            workers,
        } => select(&config, history.as_deref(), workers, stdout),
        Command::Analyze {
            config,
            out,
            workers,
        } => analyze_cmd(&config, &out, workers, stdout),
        Command::Bench {
            config,
            algos,
            trials,
            out,
            workers,
        } => bench(&config, &algos, trials, &out, workers, stdout),
    }
}

fn emit(stdout: &mut impl Write, text: &str) -> Result<()> {
    writeln!(stdout, "{text}").map_err(|e| CliError::Output(e.to_string()))
}

fn load(path: &Path, workers: Option<usize>) -> Result<RunConfig> {
    let mut config = parse_config(path)?;
    if let Some(w) = workers {
        config.worker_count = w;
    }
    Ok(config)
}

fn choose(config: &RunConfig, lattice: &LatticeModel) -> gt_core::Result<Selection> {
    if config.worker_count == 1 {
        select_op_bha(lattice)
    } else {
        let chunk = default_chunk_size(lattice.n_active(), config.chunk_exponent_offset);
        select_op_bha_parallel(lattice, chunk, resolve_workers(config.worker_count))
    }
}

pub fn select(
    config_path: &Path,
    history_path: Option<&Path>,
    workers: Option<usize>,
    stdout: &mut impl Write,
) -> Result<()> {
    let config = load(config_path, workers)?;
    let history = history_path
        .map(parse_history)
        .transpose()?
        .unwrap_or_default();
    let (lattice, commits) = replay(&config, &history)?;
    let label = |id: usize| config.labels[id].clone();
    let pool = if lattice.is_resolved() {
        None
    } else {
        let sel = choose(&config, &lattice)?;
        let ids = lattice.decode_state(sel.pool)?;
        Some((ids.into_iter().map(label).collect(), sel))
    };
    let unclassified = (0..lattice.n_active())
        .rev()
        .map(|b| label(lattice.subject_at_bit(b)))
        .collect();
    let out = SelectOutput::new(&config, pool, lattice.stage(), unclassified, &commits);
    emit(
        stdout,
        &serde_json::to_string_pretty(&out).map_err(|e| CliError::Output(e.to_string()))?,
    )
}

pub fn analyze_cmd(
    config_path: &Path,
    out: &Path,
    workers: Option<usize>,
    stdout: &mut impl Write,
) -> Result<()> {
    let config = load(config_path, workers)?;
    let report = analyze(&config.analysis, config.worker_count)?;
    write_report(out, &config, &report)?;
    let body = report_file(&config, &report).report;
    emit(
        stdout,
        &format!(
            "{:?} tree: expected_tests={} decisive_rate={} fn_mass={} fp_mass={} -> {}",
            body.scheme,
            body.expected_tests,
            body.decisive_rate,
            body.aggregate_fn_mass,
            body.aggregate_fp_mass,
            out.display()
        ),
    )
}

#[derive(Debug, Serialize)]
struct BenchRow {
    trial: usize,
    algo: Algo,
    n_active: u32,
    pool: String,
    pool_mass: f64,
    gap: f64,
    evaluated_states: u64,
    skipped_states: u64,
    mass_reads: u64,
    wall_us: f64,
}

/// Trial 0 is the fresh lattice; trial `t > 0` follows a seeded history of
/// `((t - 1) % 4) + 1` responses drawn from the posterior predictive.
fn bench_lattice(config: &RunConfig, trial: usize, rng: &mut ChaCha8Rng) -> Result<LatticeModel> {
    let a = &config.analysis;
    let mut lattice = LatticeModel::build(&a.priors)?;
    lattice.classify_and_shrink(&a.thresholds);
    if trial == 0 {
        return Ok(lattice);
    }
    for _ in 0..((trial - 1) % 4) + 1 {
        if lattice.is_resolved() {
            break;
        }
        let pool = select_op_bha(&lattice)?.pool;
        let negative = a.model.predictive_negative(&lattice, pool)?;
        let response = if rng.gen::<f64>() < negative {
            Response::Negative
        } else {
            Response::Positive
        };
        lattice.update_posterior(pool, response, &a.model)?;
        lattice.classify_and_shrink(&a.thresholds);
    }
    Ok(lattice)
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        (xs[mid - 1] + xs[mid]) / 2.0
    } else {
        xs[mid]
    }
}

pub fn bench(
    config_path: &Path,
    algos: &[Algo],
    trials: usize,
    out: &Path,
    workers: Option<usize>,
    stdout: &mut impl Write,
) -> Result<()> {
    let config = load(config_path, workers)?;
    let n = config.n_subjects();
    if algos.contains(&Algo::Bha) && n > BHA_BENCH_LIMIT {
        return Err(EngineError::ScaleGuard(format!(
            "bha on {n} subjects evaluates every one of 2^{n} pools (limit {BHA_BENCH_LIMIT} subjects)"
        ))
        .into());
    }
    let mut algos = algos.to_vec();
    algos.dedup();
    let threads = resolve_workers(config.worker_count);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();

    for trial in 0..trials {
        let lattice = bench_lattice(&config, trial, &mut rng)?;
        if lattice.is_resolved() {
            log::info!("trial {trial}: history classified every subject, skipped");
            continue;
        }
        let mut first_gap: Option<(Algo, f64)> = None;
        for &algo in &algos {
            let start = Instant::now();
            let sel = match algo {
                Algo::Bha => select_bha(&lattice)?,
                Algo::OpBha => select_op_bha(&lattice)?,
                Algo::OpBhaPar => {
                    let chunk =
                        default_chunk_size(lattice.n_active(), config.chunk_exponent_offset);
                    select_op_bha_parallel(&lattice, chunk, threads)?
                }
            };
            let wall_us = start.elapsed().as_secs_f64() * 1e6;
            match first_gap {
                None => first_gap = Some((algo, sel.gap())),
                Some((other, gap)) if (gap - sel.gap()).abs() > 1e-12 => {
                    return Err(CliError::Bench(format!(
                        "trial {trial}: {algo:?} gap {} differs from {other:?} gap {gap}",
                        sel.gap()
                    )));
                }
                _ => {}
            }
            let pool = lattice
                .decode_state(sel.pool)?
                .into_iter()
                .map(|id| config.labels[id].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            rows.push(BenchRow {
                trial,
                algo,
                n_active: lattice.n_active(),
                pool,
                pool_mass: sig12(sel.pool_mass),
                gap: sig12(sel.gap()),
                evaluated_states: sel.evaluated_states,
                skipped_states: sel.skipped_states,
                mass_reads: sel.mass_reads,
                wall_us: sig12(wall_us),
            });
        }
    }

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let csv_err = |e: csv::Error| CliError::Output(format!("{}: {e}", out.display()));
    let mut writer = csv::Writer::from_path(out).map_err(csv_err)?;
    for row in &rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| CliError::Write {
        path: out.to_path_buf(),
        source,
    })?;

    emit(
        stdout,
        &format!(
            "{:<10} {:>7} {:>14} {:>16} {:>16}",
            "algo", "trials", "median_us", "median_evaluated", "median_reads"
        ),
    )?;
    for &algo in &algos {
        let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.algo == algo).collect();
        let pick = |f: &dyn Fn(&BenchRow) -> f64| median(mine.iter().map(|r| f(r)).collect());
        emit(
            stdout,
            &format!(
                "{:<10} {:>7} {:>14.1} {:>16} {:>16}",
                serde_json::to_value(algo)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                mine.len(),
                pick(&|r| r.wall_us),
                pick(&|r| r.evaluated_states as f64),
                pick(&|r| r.mass_reads as f64),
            ),
        )?;
    }
    Ok(())
}
