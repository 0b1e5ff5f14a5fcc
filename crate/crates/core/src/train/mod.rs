//! BinaryConnect, median BinaryConnect and BinaryRelax training.
//!
//! Every algorithm keeps float weights `w_f` and the weights `w` actually
//! used by the network. One step evaluates the gradient at `w`, updates
//! `w_f <- (1 - rho) w_f + rho w - lr * g`, and re-derives `w` from the new
//! `w_f` with the algorithm's projector. Only weight matrices are projected,
//! one scale per matrix; biases stay full precision.

mod config;
mod experiment;

pub use config::{Algorithm, LrSchedule, StartMode, StepPlan, TrainConfig};
pub use experiment::{
    read_checkpoint, run_experiment, run_experiment_with_init, train_full_precision,
    write_checkpoint, MetricRow, RunOutcome,
};

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::model::{Gradient, Mlp, ParamSet};
use crate::quantize::{project_binary, relax_towards, Norm};

/// A differentiable training loss over a parameter set.
pub trait Objective {
    fn loss_and_gradient(&self, params: &ParamSet) -> Result<(f64, Gradient)>;

    fn loss(&self, params: &ParamSet) -> Result<f64> {
        Ok(self.loss_and_gradient(params)?.0)
    }
}

/// Cross-entropy of an MLP on one mini-batch.
pub struct MlpBatch<'a> {
    pub mlp: &'a Mlp,
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

impl Objective for MlpBatch<'_> {
    fn loss_and_gradient(&self, params: &ParamSet) -> Result<(f64, Gradient)> {
        self.mlp.backward(params, self.inputs, self.labels)
    }

    fn loss(&self, params: &ParamSet) -> Result<f64> {
        Ok(self.mlp.forward_loss(params, self.inputs, self.labels)?.0)
    }
}

/// `f(w) = 1/2 sum_i h_i (w_i - a_i)^2` over a single quantized vector
/// parameter named `w`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub curvature: Vec<f64>,
    pub target: Vec<f64>,
}

impl Quadratic {
    pub fn params(&self, w: Vec<f64>) -> ParamSet {
        assert_eq!(w.len(), self.target.len());
        ParamSet::new(vec![crate::model::Param {
            name: "w".into(),
            shape: vec![w.len()],
            values: w,
            quantize: true,
        }])
        .expect("vector shape")
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        w.iter()
            .zip(&self.target)
            .zip(&self.curvature)
            .map(|((x, a), h)| 0.5 * h * (x - a) * (x - a))
            .sum()
    }
}

impl Objective for Quadratic {
    fn loss_and_gradient(&self, params: &ParamSet) -> Result<(f64, Gradient)> {
        let w = &params.params()[0].values;
        let mut grad = params.clone();
        grad.params_mut()[0].values = w
            .iter()
            .zip(&self.target)
            .zip(&self.curvature)
            .map(|((x, a), h)| h * (x - a))
            .collect();
        Ok((self.value(w), grad))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Float (auxiliary) weights.
    pub w_f: ParamSet,
    /// Weights the network runs with: projected, relaxed, or equal to `w_f`.
    pub w: ParamSet,
    pub iteration: usize,
    /// BinaryRelax mixing weight; unused by the other algorithms.
    pub lambda: f64,
    velocity: Option<ParamSet>,
}

impl TrainState {
    pub fn new(w_f: ParamSet, config: &TrainConfig, plan: &StepPlan) -> Result<Self> {
        let lambda = config.br_lambda0;
        let w = project_params(&w_f, config, lambda, config_hard_at(config, plan, 0))?;
        Ok(TrainState {
            w_f,
            w,
            iteration: 0,
            lambda,
            velocity: None,
        })
    }

    /// True once BinaryRelax has switched to hard projection.
    pub fn is_hardened(&self, config: &TrainConfig, plan: &StepPlan) -> bool {
        config_hard_at(config, plan, self.iteration)
    }

    /// Replaces `w` by the hard projection of `w_f`.
    pub fn harden(&mut self, config: &TrainConfig) -> Result<()> {
        self.w = project_params(&self.w_f, config, self.lambda, true)?;
        Ok(())
    }
}

fn config_hard_at(config: &TrainConfig, plan: &StepPlan, iteration: usize) -> bool {
    config.algorithm == Algorithm::BinaryRelax && iteration >= plan.phase2_start
}

/// `(1 - rho) * w_f + rho * w`, parameter by parameter.
pub fn blend(w_f: &ParamSet, w: &ParamSet, rho: f64) -> Result<ParamSet> {
    if !w_f.same_layout(w) {
        return Err(Error::invalid("blend: parameter layouts differ"));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!(
            "blend: rho must lie in [0, 1), got {rho}"
        )));
    }
    let mut out = w_f.clone();
    if rho == 0.0 {
        return Ok(out);
    }
    for (o, q) in out.params_mut().iter_mut().zip(w.params()) {
        for (x, &y) in o.values.iter_mut().zip(&q.values) {
            *x = (1.0 - rho) * *x + rho * y;
        }
    }
    Ok(out)
}

/// Derives the working weights from `w_f` for the configured algorithm.
pub fn project_params(
    w_f: &ParamSet,
    config: &TrainConfig,
    lambda: f64,
    hard: bool,
) -> Result<ParamSet> {
    let mut w = w_f.clone();
    for p in w.params_mut().iter_mut().filter(|p| p.quantize) {
        p.values = match config.algorithm {
            Algorithm::FullPrecision => continue,
            Algorithm::Bc => project_binary(&p.values, Norm::L2)?.dense(),
            Algorithm::MedianBc => project_binary(&p.values, Norm::L1)?.dense(),
            Algorithm::BinaryRelax if hard => {
                project_binary(&p.values, config.br_hard_projector)?.dense()
            }
            Algorithm::BinaryRelax => {
                let proj = project_binary(&p.values, Norm::L2)?.dense();
                relax_towards(&p.values, &proj, lambda)
            }
        };
    }
    Ok(w)
}

/// One update of `state`; returns the loss at the point the gradient was
/// taken (the current `w`).
pub fn train_step(
    state: &mut TrainState,
    objective: &dyn Objective,
    config: &TrainConfig,
    plan: &StepPlan,
) -> Result<f64> {
    let (loss, grad) = objective.loss_and_gradient(&state.w)?;
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::NumericAbort {
            iteration: state.iteration,
            dump: None,
        });
    }
    let lr = plan.lr.rate_at(state.iteration);
    let rho = if config.algorithm.is_quantized() {
        config.blend_rho
    } else {
        0.0
    };
    let base = blend(&state.w_f, &state.w, rho)?;

    let mut step = grad;
    if config.weight_decay > 0.0 {
        for (g, p) in step.params_mut().iter_mut().zip(state.w_f.params()) {
            for (gi, &x) in g.values.iter_mut().zip(&p.values) {
                *gi += config.weight_decay * x;
            }
        }
    }
    if config.momentum > 0.0 {
        let v = state.velocity.get_or_insert_with(|| step.zeros_like());
        for (vp, gp) in v.params_mut().iter_mut().zip(step.params()) {
            for (vi, &gi) in vp.values.iter_mut().zip(&gp.values) {
                *vi = config.momentum * *vi + gi;
            }
        }
        step = v.clone();
    }

    let mut w_f = base;
    for (p, g) in w_f.params_mut().iter_mut().zip(step.params()) {
        for (x, &gi) in p.values.iter_mut().zip(&g.values) {
            *x -= lr * gi;
        }
    }

    state.iteration += 1;
    if config.algorithm == Algorithm::BinaryRelax && state.iteration.is_multiple_of(plan.lambda_every) {
        state.lambda *= config.br_gamma;
    }
    let hard = config_hard_at(config, plan, state.iteration);
    state.w = project_params(&w_f, config, state.lambda, hard)?;
    state.w_f = w_f;
    Ok(loss)
}

/// True when every entry has the same magnitude within `tol`.
pub fn is_binary_form(values: &[f64], tol: f64) -> bool {
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    });
    values.is_empty() || hi - lo <= tol
}

/// Checks [`is_binary_form`] on every weight matrix of `params`.
pub fn weights_are_binary(params: &ParamSet, tol: f64) -> bool {
    params
        .params()
        .iter()
        .filter(|p| p.quantize)
        .all(|p| is_binary_form(&p.values, tol))
}
