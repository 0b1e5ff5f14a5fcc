use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quantize::Norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Plain SGD, no projection.
    FullPrecision,
    /// BinaryConnect with the mean (`l2`) projector.
    Bc,
    /// BinaryConnect with the median (`l1`) projector.
    MedianBc,
    /// BinaryRelax: relaxed projection with growing `lambda`, hard at the end.
    BinaryRelax,
}

impl Algorithm {
    pub const QUANTIZED: [Algorithm; 3] =
        [Algorithm::MedianBc, Algorithm::Bc, Algorithm::BinaryRelax];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::FullPrecision => "none",
            Algorithm::Bc => "bc",
            Algorithm::MedianBc => "median_bc",
            Algorithm::BinaryRelax => "br",
        }
    }

    pub fn is_quantized(self) -> bool {
        self != Algorithm::FullPrecision
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "fp32" | "full_precision" => Ok(Algorithm::FullPrecision),
            "bc" => Ok(Algorithm::Bc),
            "median_bc" => Ok(Algorithm::MedianBc),
            "br" => Ok(Algorithm::BinaryRelax),
            other => Err(Error::invalid(format!(
                "unknown algorithm `{other}` (expected bc, median_bc, br or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StartMode {
    Cold,
    Warm,
}

impl StartMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StartMode::Cold => "cold",
            StartMode::Warm => "warm",
        }
    }
}

impl fmt::Display for StartMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(StartMode::Cold),
            "warm" => Ok(StartMode::Warm),
            other => Err(Error::invalid(format!("unknown start mode `{other}`"))),
        }
    }
}

/// Piecewise-constant step size: `initial * drop_factor^k` after the `k`-th
/// entry of `drop_at` has been reached.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub drop_factor: f64,
    pub drop_at: Vec<usize>,
}

impl LrSchedule {
    pub fn new(initial: f64, drop_factor: f64, drop_at: Vec<usize>) -> Result<Self> {
        let s = LrSchedule {
            initial,
            drop_factor,
            drop_at,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(initial: f64) -> Self {
        LrSchedule {
            initial,
            drop_factor: 0.1,
            drop_at: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial.is_finite() && self.initial >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be >= 0, got {}",
                self.initial
            )));
        }
        if !(self.drop_factor > 0.0 && self.drop_factor < 1.0) {
            return Err(Error::invalid(format!(
                "learning-rate drop factor must lie in (0, 1), got {}",
                self.drop_factor
            )));
        }
        if self.drop_at.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::invalid(
                "learning-rate drop points must be strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn rate_at(&self, iteration: usize) -> f64 {
        let drops = self.drop_at.iter().take_while(|&&d| d <= iteration).count();
        self.initial * self.drop_factor.powi(drops as i32)
    }
}

/// Training hyperparameters as written in a config file. Schedule entries
/// left as `None` are derived from the run length by [`TrainConfig::plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub blend_rho: f64,
    pub lr: f64,
    pub lr_drop_factor: f64,
    /// Iterations at which the rate drops; `None` drops once at 3/4 of the run.
    pub lr_drop_at: Option<Vec<usize>>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub br_gamma: f64,
    pub br_lambda0: f64,
    /// First hard-projection iteration; `None` means 3/4 of the run.
    pub br_phase2_start: Option<usize>,
    /// Iterations between `lambda` updates; `None` means half an epoch.
    pub br_lambda_every: Option<usize>,
    pub br_hard_projector: Norm,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub start: StartMode,
    pub warm_source: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::MedianBc,
            blend_rho: 0.0,
            lr: 0.02,
            lr_drop_factor: 0.1,
            lr_drop_at: None,
            momentum: 0.0,
            weight_decay: 0.0,
            br_gamma: 1.02,
            br_lambda0: 1.0,
            br_phase2_start: None,
            br_lambda_every: None,
            br_hard_projector: Norm::L2,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            start: StartMode::Cold,
            warm_source: None,
        }
    }
}

/// Concrete per-run schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub lr: LrSchedule,
    pub total_steps: usize,
    pub phase2_start: usize,
    pub lambda_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.blend_rho >= 0.0 && self.blend_rho < 1.0) {
            return Err(Error::invalid(format!(
                "blend_rho must lie in [0, 1), got {}",
                self.blend_rho
            )));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if let Some(drops) = &self.lr_drop_at {
            LrSchedule::new(self.lr, self.lr_drop_factor, drops.clone())?;
        } else {
            LrSchedule::new(self.lr, self.lr_drop_factor, Vec::new())?;
        }
        if self.algorithm == Algorithm::BinaryRelax {
            if !(self.br_gamma.is_finite() && self.br_gamma > 1.0) {
                return Err(Error::invalid(format!(
                    "br_gamma must exceed 1, got {}",
                    self.br_gamma
                )));
            }
            if !(self.br_lambda0.is_finite() && self.br_lambda0 > 0.0) {
                return Err(Error::invalid("br_lambda0 must be positive"));
            }
            if self.br_lambda_every == Some(0) {
                return Err(Error::invalid("br_lambda_every must be >= 1"));
            }
        }
        if self.start == StartMode::Warm && self.warm_source.is_none() {
            return Err(Error::MissingKey("train.warm_source".into()));
        }
        Ok(())
    }

    pub fn plan(&self, steps_per_epoch: usize) -> StepPlan {
        let total_steps = self.epochs * steps_per_epoch;
        let late = total_steps * 3 / 4;
        let drop_at =
            self.lr_drop_at.clone().unwrap_or_else(
                || {
                    if late > 0 {
                        vec![late]
                    } else {
                        Vec::new()
                    }
                },
            );
        StepPlan {
            lr: LrSchedule {
                initial: self.lr,
                drop_factor: self.lr_drop_factor,
                drop_at,
            },
            total_steps,
            phase2_start: self.br_phase2_start.unwrap_or(late),
            lambda_every: self
                .br_lambda_every
                .unwrap_or_else(|| steps_per_epoch.div_ceil(2).max(1)),
        }
    }
}
