//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or unreadable file, 2 invalid input or
//! config, 3 training aborted on a non-finite loss, 4 a check failed.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{generate, Dataset};
use crate::error::{Error, Result};
use crate::io::{
    emit_grid_markdown, emit_table, parse_config, read_tensors, write_tensors, ExperimentConfig,
    ResultRow, TableFormat,
};
use crate::model::{gradient_check, Mlp, MlpSpec, ParamSet};
use crate::oracle::oracle_mbit;
use crate::quantize::{
    lloyd_mbit_with_norm, project_binary, project_ternary, Codebook, LloydOptions, Norm,
    ProjectionResult,
};
use crate::tensor::Tensor;
use crate::train::{
    run_experiment, run_experiment_with_init, train_full_precision, weights_are_binary,
    write_checkpoint, Algorithm, MetricRow, RunOutcome, StartMode, TrainConfig,
};

pub const EXIT_CHECK_FAILED: i32 = 4;
/// Relative error bound for `gradcheck`.
pub const GRADCHECK_TOL: f64 = 1e-5;
/// Blend weight used by `bench` when the config leaves `train.blend_rho` at 0.
pub const DEFAULT_BENCH_BLEND: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "medbin",
    version,
    about = "Median and mean weight quantization experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantize every tensor of a tensor file.
    Project(ProjectArgs),
    /// Run one training experiment from a config file.
    Train(TrainArgs),
    /// Run the algorithm x start x blend grid over several seeds.
    Bench(BenchArgs),
    /// Compare backpropagation against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "l1")]
    pub norm: Norm,
    /// 1 binary, 2 ternary, m >= 3 uses Lloyd iterations on levels 1..2^(m-1)-1.
    #[arg(long, default_value_t = 1)]
    pub bits: u32,
    /// Explicit Lloyd levels, e.g. "1,2" or "0,1,2" (leading 0 admits zero).
    #[arg(long)]
    pub codebook: Option<Codebook>,
    /// Also solve exhaustively and print the difference (small tensors only).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "bench_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Layer widths, input first.
    #[arg(long, default_value = "3,5,2")]
    pub dims: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Negative control: perturbs the analytic gradient.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Project(a) => cmd_project(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn project_one(w: &[f64], args: &ProjectArgs) -> Result<(ProjectionResult, Option<Codebook>)> {
    if let Some(cb) = &args.codebook {
        let r = lloyd_mbit_with_norm(w, cb, &LloydOptions::default(), args.norm)?;
        return Ok((r.result, Some(cb.clone())));
    }
    match args.bits {
        0 => Err(Error::invalid("--bits must be >= 1")),
        1 => Ok((project_binary(w, args.norm)?, Some(Codebook::binary()))),
        2 => Ok((project_ternary(w, args.norm)?, Some(Codebook::ternary()))),
        m => {
            let cb = Codebook::for_bits(m)?;
            let r = lloyd_mbit_with_norm(w, &cb, &LloydOptions::default(), args.norm)?;
            Ok((r.result, Some(cb)))
        }
    }
}

pub fn cmd_project(args: &ProjectArgs) -> Result<i32> {
    let tensors = read_tensors(&args.input)?;
    let mut out = Vec::with_capacity(3 * tensors.len());
    for (name, t) in &tensors {
        let (res, cb) = project_one(t.data(), args)?;
        println!(
            "{name}: norm = {}, t* = {}, scale = {}, objective = {}",
            args.norm,
            res.support_size,
            res.scale(),
            res.objective
        );
        if args.oracle {
            let cb = cb.expect("every path names its codebook");
            let exact = oracle_mbit(t.data(), &cb, args.norm)?;
            println!(
                "{name}: oracle objective = {}, difference = {:e}",
                exact.objective,
                res.objective - exact.objective
            );
        }
        let codes = res.codes().iter().map(|&c| c as f64).collect();
        out.push((format!("{name}.scale"), Tensor::scalar(res.scale())));
        out.push((
            format!("{name}.codes"),
            Tensor::new(t.shape().to_vec(), codes)?,
        ));
        out.push((
            format!("{name}.dense"),
            Tensor::new(t.shape().to_vec(), res.dense())?,
        ));
    }
    write_tensors(&args.out, &out)?;
    Ok(0)
}

fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epoch",
        "iteration",
        "train_loss",
        "test_accuracy",
        "lambda",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.iteration.to_string(),
            format!("{:.6}", r.train_loss),
            format!("{:.4}", r.test_accuracy),
            format!("{:.6}", r.lambda),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn load_experiment(path: &Path) -> Result<(ExperimentConfig, Dataset, Dataset, MlpSpec)> {
    let cfg = parse_config(path)?;
    let (train, test) = generate(&cfg.data)?;
    let spec = cfg.model_spec();
    Ok((cfg, train, test, spec))
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let (cfg, train, test, spec) = load_experiment(&args.config)?;
    let dir = &args.out_dir;
    create_dir(dir)?;
    let mut cache = train.to_tensors("train");
    cache.extend(test.to_tensors("test"));
    write_tensors(dir.join("dataset.qtns"), &cache)?;

    let t = &cfg.train;
    let out = if t.algorithm == Algorithm::FullPrecision {
        train_full_precision(t, &train, &test, &spec, Some(dir))?
    } else {
        run_experiment(t, &train, &test, &spec, Some(dir))?
    };
    write_text(&dir.join("metrics.csv"), &metrics_csv(&out.metrics))?;
    write_checkpoint(&dir.join("checkpoint.qtns"), &out.state.w, &spec, t.seed)?;

    let row = ResultRow {
        algorithm: t.algorithm,
        start: t.start,
        blend_rho: if t.algorithm.is_quantized() {
            t.blend_rho
        } else {
            0.0
        },
        seed: Some(t.seed),
        runs: 1,
        accuracy: Some(out.accuracy),
        accuracy_std: None,
        reference: (t.algorithm == Algorithm::FullPrecision).then_some(out.accuracy),
        failed: 0,
    };
    let rows = [row];
    write_text(
        &dir.join("results.csv"),
        &emit_table(&rows, TableFormat::Csv),
    )?;
    write_text(
        &dir.join("results.md"),
        &emit_table(&rows, TableFormat::Markdown),
    )?;
    println!(
        "{} ({}) after {} iterations: test accuracy {:.4}, train loss {:.6} -> {:.6}",
        t.algorithm,
        t.start,
        out.state.iteration,
        out.accuracy,
        out.initial_train_loss,
        out.final_train_loss
    );
    Ok(0)
}

/// One finished (or failed) run of the benchmark grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Per-seed row; `accuracy` is `None` and `failed` is 1 on error.
    pub row: ResultRow,
    pub initial_train_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    /// Whether every weight matrix of the final weights is `s * sign`.
    pub binary_form: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    /// Baseline runs first, then grid cells; seeds ascending within a cell.
    pub runs: Vec<RunRecord>,
    /// One row per cell, baseline first, means over seeds.
    pub aggregate: Vec<ResultRow>,
}

impl BenchOutcome {
    /// Per-seed accuracies of one cell, `None` where the run failed.
    pub fn accuracies(
        &self,
        algorithm: Algorithm,
        start: StartMode,
        blend_rho: f64,
    ) -> Vec<Option<f64>> {
        self.runs
            .iter()
            .filter(|r| {
                r.row.algorithm == algorithm && r.row.start == start && r.row.blend_rho == blend_rho
            })
            .map(|r| r.row.accuracy)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    algorithm: Algorithm,
    start: StartMode,
    blend_rho: f64,
}

/// The quantized grid: algorithm x {cold, warm} x {no blend, `blend`}.
pub fn bench_cells(blend: f64) -> Vec<(Algorithm, StartMode, f64)> {
    let mut cells = Vec::new();
    for start in [StartMode::Cold, StartMode::Warm] {
        for rho in [0.0, blend] {
            for algo in Algorithm::QUANTIZED {
                cells.push((algo, start, rho));
            }
        }
    }
    cells
}

fn record(cell: Cell, seed: u64, reference: Option<f64>, out: Result<RunOutcome>) -> RunRecord {
    let mut row = ResultRow {
        algorithm: cell.algorithm,
        start: cell.start,
        blend_rho: cell.blend_rho,
        seed: Some(seed),
        runs: 1,
        accuracy: None,
        accuracy_std: None,
        reference,
        failed: 0,
    };
    match out {
        Ok(o) => {
            row.accuracy = Some(o.accuracy);
            RunRecord {
                row,
                initial_train_loss: Some(o.initial_train_loss),
                final_train_loss: Some(o.final_train_loss),
                binary_form: cell
                    .algorithm
                    .is_quantized()
                    .then(|| weights_are_binary(&o.state.w, 1e-12)),
                error: None,
            }
        }
        Err(e) => {
            row.failed = 1;
            RunRecord {
                row,
                initial_train_loss: None,
                final_train_loss: None,
                binary_form: None,
                error: Some(e.to_string()),
            }
        }
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn aggregate(cell: Cell, runs: &[RunRecord], reference: Option<f64>) -> ResultRow {
    let mine: Vec<&RunRecord> = runs
        .iter()
        .filter(|r| {
            r.row.algorithm == cell.algorithm
                && r.row.start == cell.start
                && r.row.blend_rho == cell.blend_rho
        })
        .collect();
    let ok: Vec<f64> = mine.iter().filter_map(|r| r.row.accuracy).collect();
    let (accuracy, accuracy_std) = mean_std(&ok);
    ResultRow {
        algorithm: cell.algorithm,
        start: cell.start,
        blend_rho: cell.blend_rho,
        seed: None,
        runs: mine.len(),
        accuracy,
        accuracy_std,
        reference,
        failed: mine.len() - ok.len(),
    }
}

/// Runs the baseline and the quantized grid for seeds
/// `train.seed .. train.seed + seeds`. Baseline checkpoints land in
/// `work_dir` and seed the warm cells. Results do not depend on `jobs`.
pub fn run_bench(
    cfg: &ExperimentConfig,
    seeds: usize,
    jobs: usize,
    work_dir: &Path,
) -> Result<BenchOutcome> {
    if seeds == 0 {
        return Err(Error::invalid("--seeds must be >= 1"));
    }
    if jobs == 0 {
        return Err(Error::invalid("--jobs must be >= 1"));
    }
    let mut base_cfg = cfg.clone();
    base_cfg.train.start = StartMode::Cold;
    base_cfg.train.warm_source = None;
    base_cfg.validate()?;
    let (train, test) = generate(&cfg.data)?;
    let spec = cfg.model_spec();
    let ckpt_dir = work_dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} workers: {e}")))?;
    let seed_of = |i: usize| cfg.train.seed.wrapping_add(i as u64);
    let blend = if cfg.train.blend_rho > 0.0 {
        cfg.train.blend_rho
    } else {
        DEFAULT_BENCH_BLEND
    };

    let base_cell = Cell {
        algorithm: Algorithm::FullPrecision,
        start: StartMode::Cold,
        blend_rho: 0.0,
    };
    let baselines: Vec<(RunRecord, Option<ParamSet>)> = pool.install(|| {
        (0..seeds)
            .into_par_iter()
            .map(|i| {
                let tc = TrainConfig {
                    seed: seed_of(i),
                    ..base_cfg.train.clone()
                };
                let out = train_full_precision(&tc, &train, &test, &spec, None).and_then(|o| {
                    let path = ckpt_dir.join(format!("baseline_seed{}.qtns", seed_of(i)));
                    write_checkpoint(&path, &o.state.w_f, &spec, seed_of(i))?;
                    Ok(o)
                });
                let weights = out.as_ref().ok().map(|o| o.state.w_f.clone());
                let acc = out.as_ref().ok().map(|o| o.accuracy);
                (record(base_cell, seed_of(i), acc, out), weights)
            })
            .collect()
    });

    let jobs_list: Vec<(Cell, usize)> = bench_cells(blend)
        .into_iter()
        .flat_map(|(algorithm, start, blend_rho)| {
            (0..seeds).map(move |i| {
                (
                    Cell {
                        algorithm,
                        start,
                        blend_rho,
                    },
                    i,
                )
            })
        })
        .collect();
    let cells: Vec<RunRecord> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(cell, i)| {
                let (base, base_w) = &baselines[i];
                let tc = TrainConfig {
                    algorithm: cell.algorithm,
                    start: cell.start,
                    blend_rho: cell.blend_rho,
                    seed: seed_of(i),
                    warm_source: None,
                    ..cfg.train.clone()
                };
                let out = match cell.start {
                    StartMode::Cold => run_experiment_with_init(
                        &tc,
                        ParamSet::init(&spec, tc.seed),
                        &train,
                        &test,
                        &spec,
                        None,
                    ),
                    StartMode::Warm => match base_w {
                        Some(w) => {
                            run_experiment_with_init(&tc, w.clone(), &train, &test, &spec, None)
                        }
                        None => Err(Error::invalid(format!(
                            "no baseline checkpoint for seed {}",
                            tc.seed
                        ))),
                    },
                };
                record(cell, tc.seed, base.row.accuracy, out)
            })
            .collect()
    });

    let mut runs: Vec<RunRecord> = baselines.into_iter().map(|(r, _)| r).collect();
    runs.extend(cells);
    let base_ok: Vec<f64> = runs
        .iter()
        .filter(|r| r.row.algorithm == Algorithm::FullPrecision)
        .filter_map(|r| r.row.accuracy)
        .collect();
    let reference = mean_std(&base_ok).0;
    let mut agg = vec![aggregate(base_cell, &runs, reference)];
    for (algorithm, start, blend_rho) in bench_cells(blend) {
        let cell = Cell {
            algorithm,
            start,
            blend_rho,
        };
        agg.push(aggregate(cell, &runs, reference));
    }
    Ok(BenchOutcome {
        runs,
        aggregate: agg,
    })
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let cfg = parse_config(&args.config)?;
    create_dir(&args.out_dir)?;
    let outcome = run_bench(&cfg, args.seeds, args.jobs, &args.out_dir)?;
    for r in outcome.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {} {} rho={} seed {} failed: {}",
            r.row.algorithm,
            r.row.start,
            r.row.blend_rho,
            r.row.seed.unwrap_or_default(),
            r.error.as_deref().unwrap_or_default()
        );
    }
    let per_seed: Vec<ResultRow> = outcome.runs.iter().map(|r| r.row.clone()).collect();
    let grid = emit_grid_markdown(&outcome.aggregate);
    let md = format!(
        "{grid}\n{}",
        emit_table(&outcome.aggregate, TableFormat::Markdown)
    );
    write_text(
        &args.out_dir.join("results.csv"),
        &emit_table(&outcome.aggregate, TableFormat::Csv),
    )?;
    write_text(&args.out_dir.join("results.md"), &md)?;
    write_text(
        &args.out_dir.join("runs.csv"),
        &emit_table(&per_seed, TableFormat::Csv),
    )?;
    print!("{grid}");
    Ok(0)
}

/// Max relative gradient error for one seeded network and batch.
pub fn gradcheck_trial(dims: &[usize], seed: u64, corrupt: bool) -> Result<f64> {
    let spec = MlpSpec::new(dims.to_vec())?;
    let mlp = Mlp::new(spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::init(&spec, seed);
    for p in params.params_mut().iter_mut().filter(|p| !p.quantize) {
        p.values
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let (d, k) = (spec.input_dim(), spec.output_dim());
    let x = Array2::from_shape_fn((4, d), |_| rng.random_range(-1.5..1.5));
    let y: Vec<usize> = (0..4).map(|_| rng.random_range(0..k)).collect();
    let (_, mut grad) = mlp.backward(&params, x.view(), &y)?;
    if corrupt {
        grad.params_mut()[0].values[0] += 0.5;
    }
    gradient_check(&mlp, &params, x.view(), &y, &grad, 1e-5)
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let dims: Vec<usize> = args
        .dims
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("--dims: `{s}` is not a layer width")))
        })
        .collect::<Result<_>>()?;
    MlpSpec::new(dims.clone())?;
    if args.trials == 0 {
        println!("no trials requested; nothing to check");
        return Ok(0);
    }
    let mut worst: f64 = 0.0;
    for t in 0..args.trials {
        let err = gradcheck_trial(&dims, t as u64, args.corrupt_backward)?;
        println!("trial {t}: max relative error {err:.3e}");
        worst = worst.max(err);
    }
    if worst < GRADCHECK_TOL {
        println!(
            "gradient check passed ({} trials, worst {worst:.3e})",
            args.trials
        );
        Ok(0)
    } else {
        eprintln!("gradient check failed: worst relative error {worst:.3e} >= {GRADCHECK_TOL:e}");
        Ok(EXIT_CHECK_FAILED)
    }
}
