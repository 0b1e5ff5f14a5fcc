use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{train_step, Algorithm, MlpBatch, StartMode, TrainConfig, TrainState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::{read_tensors, write_tensors};
use crate::model::{Mlp, MlpSpec, ParamSet};

/// Keeps the batch-order stream apart from the init stream of the same seed.
const SHUFFLE_STREAM: u64 = 0x0b47_c400_5eed_0001;

/// One line of the metrics log. Row 0 describes the initial state; row `e`
/// the state after epoch `e`, with the mean mini-batch loss of that epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub iteration: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: TrainState,
    pub metrics: Vec<MetricRow>,
    /// Test accuracy of the final working weights.
    pub accuracy: f64,
    /// Full training-set loss before the first and after the last step.
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
}

/// Trains from a seeded random init (cold) or from `config.warm_source`
/// (warm). `dump_dir` receives the state if a non-finite loss aborts the run.
pub fn run_experiment(
    config: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    spec: &MlpSpec,
    dump_dir: Option<&Path>,
) -> Result<RunOutcome> {
    config.validate()?;
    let init = match config.start {
        StartMode::Cold => ParamSet::init(spec, config.seed),
        StartMode::Warm => {
            let src = config.warm_source.as_ref().expect("validated");
            read_checkpoint(src, spec)?
        }
    };
    run_experiment_with_init(config, init, train, test, spec, dump_dir)
}

/// As [`run_experiment`] with the initial float weights supplied directly.
pub fn run_experiment_with_init(
    config: &TrainConfig,
    init: ParamSet,
    train: &Dataset,
    test: &Dataset,
    spec: &MlpSpec,
    dump_dir: Option<&Path>,
) -> Result<RunOutcome> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset(
            "training and test sets must be nonempty".into(),
        ));
    }
    let mlp = Mlp::new(spec.clone())?;
    if train.dim() != spec.input_dim() || train.num_classes > spec.output_dim() {
        return Err(Error::invalid(format!(
            "model {:?} does not fit data with d = {} and {} classes",
            spec.layer_dims,
            train.dim(),
            train.num_classes
        )));
    }
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let plan = config.plan(steps_per_epoch);
    let mut state = TrainState::new(init, config, &plan)?;
    let full_loss = |s: &TrainState| -> Result<f64> {
        Ok(mlp
            .forward_loss(&s.w, train.features.view(), &train.labels)?
            .0)
    };

    let initial_train_loss = full_loss(&state)?;
    let mut metrics = vec![MetricRow {
        epoch: 0,
        iteration: 0,
        train_loss: initial_train_loss,
        test_accuracy: mlp.accuracy(&state.w, test)?,
        lambda: state.lambda,
    }];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = train.subset(chunk);
            let objective = MlpBatch {
                mlp: &mlp,
                inputs: batch.features.view(),
                labels: &batch.labels,
            };
            match train_step(&mut state, &objective, config, &plan) {
                Ok(loss) => loss_sum += loss,
                Err(Error::NumericAbort { iteration, .. }) => {
                    let dump = dump_dir.map(|d| dump_state(d, &state)).transpose()?;
                    return Err(Error::NumericAbort { iteration, dump });
                }
                Err(e) => return Err(e),
            }
        }
        metrics.push(MetricRow {
            epoch,
            iteration: state.iteration,
            train_loss: loss_sum / steps_per_epoch as f64,
            test_accuracy: mlp.accuracy(&state.w, test)?,
            lambda: state.lambda,
        });
    }

    // A short BinaryRelax run may end before its hardening point.
    if config.algorithm == Algorithm::BinaryRelax && !state.is_hardened(config, &plan) {
        state.harden(config)?;
    }
    let accuracy = mlp.accuracy(&state.w, test)?;
    let final_train_loss = full_loss(&state)?;
    Ok(RunOutcome {
        state,
        metrics,
        accuracy,
        initial_train_loss,
        final_train_loss,
    })
}

/// Plain SGD without projection; the result's `state.w_f` is the checkpoint.
pub fn train_full_precision(
    config: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    spec: &MlpSpec,
    dump_dir: Option<&Path>,
) -> Result<RunOutcome> {
    let config = TrainConfig {
        algorithm: Algorithm::FullPrecision,
        ..config.clone()
    };
    run_experiment(&config, train, test, spec, dump_dir)
}

fn dump_state(dir: &Path, state: &TrainState) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("abort_state.qtns");
    let mut tensors = Vec::new();
    for (prefix, set) in [("w_f", &state.w_f), ("w", &state.w)] {
        for (name, t) in set.to_tensors() {
            tensors.push((format!("{prefix}.{name}"), t));
        }
    }
    write_tensors(&path, &tensors)?;
    Ok(path)
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Writes `params` as a tensor file plus a `<path>.manifest` sidecar holding
/// the layer widths and seed.
pub fn write_checkpoint(path: &Path, params: &ParamSet, spec: &MlpSpec, seed: u64) -> Result<()> {
    write_tensors(path, &params.to_tensors())?;
    let dims: Vec<String> = spec.layer_dims.iter().map(|d| d.to_string()).collect();
    let manifest = format!(
        "model.layer_dims = {}\ntrain.seed = {seed}\n",
        dims.join(",")
    );
    let mpath = manifest_path(path);
    fs::write(&mpath, manifest).map_err(|e| Error::io(mpath, e))
}

/// Loads a checkpoint for `spec`. A manifest, when present, must name the
/// same layer widths.
pub fn read_checkpoint(path: &Path, spec: &MlpSpec) -> Result<ParamSet> {
    let tensors = read_tensors(path)?;
    let mpath = manifest_path(path);
    if let Ok(text) = fs::read_to_string(&mpath) {
        let dims = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "model.layer_dims")
            .map(|(_, v)| v.trim().to_string());
        let expected: Vec<String> = spec.layer_dims.iter().map(|d| d.to_string()).collect();
        if let Some(dims) = dims {
            if dims.replace(' ', "") != expected.join(",") {
                return Err(Error::invalid(format!(
                    "checkpoint {} was written for layers [{dims}], model is {:?}",
                    path.display(),
                    spec.layer_dims
                )));
            }
        }
    }
    ParamSet::from_tensors(spec, &tensors)
}
