//! Hyperparameters, the random search space and the learning-rate schedule.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LiicError, Result};

pub const LR_RANGE: (f64, f64) = (1e-8, 5e-2);
pub const WEIGHT_DECAY_RANGE: (f64, f64) = (1e-5, 1e-1);
pub const ACCUM_RANGE: (usize, usize) = (1, 10);
pub const DEFAULT_EPOCHS: usize = 5;
pub const DEFAULT_NUM_SAMPLES: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchProfile {
    Base,
    Large,
}

impl BatchProfile {
    pub fn batch_size(self) -> usize {
        match self {
            BatchProfile::Base => 10,
            BatchProfile::Large => 2,
        }
    }
}

impl std::str::FromStr for BatchProfile {
    type Err = LiicError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(BatchProfile::Base),
            "large" => Ok(BatchProfile::Large),
            other => Err(LiicError::Config(format!("unknown batch profile {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Mini-batches whose gradients are summed before each optimizer step.
    pub grad_accum: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl HyperConfig {
    pub fn new(lr: f64, weight_decay: f64, grad_accum: usize, profile: BatchProfile, seed: u64) -> Self {
        HyperConfig {
            lr,
            weight_decay,
            grad_accum,
            epochs: DEFAULT_EPOCHS,
            batch_size: profile.batch_size(),
            seed,
        }
    }

    /// Checks what training needs; the search ranges are not enforced here.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(LiicError::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(LiicError::Config(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.grad_accum == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(LiicError::Config("grad_accum, batch_size and epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// Whether the config lies in the random-search space.
    pub fn in_search_space(&self) -> bool {
        (LR_RANGE.0..=LR_RANGE.1).contains(&self.lr)
            && (WEIGHT_DECAY_RANGE.0..=WEIGHT_DECAY_RANGE.1).contains(&self.weight_decay)
            && (ACCUM_RANGE.0..=ACCUM_RANGE.1).contains(&self.grad_accum)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| LiicError::Config(e.to_string()))?;
        let profile = f.profile.unwrap_or(BatchProfile::Base);
        let cfg = HyperConfig {
            lr: f.lr,
            weight_decay: f.weight_decay.unwrap_or(0.0),
            grad_accum: f.grad_accum.unwrap_or(1),
            epochs: f.epochs.unwrap_or(DEFAULT_EPOCHS),
            batch_size: f.batch_size.unwrap_or_else(|| profile.batch_size()),
            seed: f.seed.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat struct of numbers serializes")
    }
}

/// On-disk form: `lr` is required; `profile` ("base" | "large") sets the
/// batch size unless `batch_size` is given.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    lr: f64,
    weight_decay: Option<f64>,
    grad_accum: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    profile: Option<BatchProfile>,
    seed: Option<u64>,
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    let x = rng.gen_range(lo.log10()..=hi.log10());
    10f64.powf(x).clamp(lo, hi)
}

/// Sampling ranges. The default is the fine-tuning space used throughout;
/// narrower spaces suit models trained from scratch on tiny sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lr: (f64, f64),
    pub weight_decay: (f64, f64),
    pub grad_accum: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lr: LR_RANGE,
            weight_decay: WEIGHT_DECAY_RANGE,
            grad_accum: ACCUM_RANGE,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let positive_range = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if !positive_range(self.lr) || !positive_range(self.weight_decay) {
            return Err(LiicError::Config(format!("invalid search space {self:?}")));
        }
        if self.grad_accum.0 == 0 || self.grad_accum.0 > self.grad_accum.1 {
            return Err(LiicError::Config(format!("invalid accumulation range {:?}", self.grad_accum)));
        }
        Ok(())
    }
}

/// `count` configs from the default space.
pub fn sample_configs(count: usize, seed: u64, profile: BatchProfile) -> Result<Vec<HyperConfig>> {
    sample_configs_in(&SearchSpace::default(), count, seed, profile)
}

/// `count` configs: lr and weight decay log-uniform, accumulation uniform.
/// Every config trains with `seed`, so the list can be shared across approaches.
pub fn sample_configs_in(space: &SearchSpace, count: usize, seed: u64, profile: BatchProfile) -> Result<Vec<HyperConfig>> {
    if count == 0 {
        return Err(LiicError::Config("count must be >= 1".into()));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let lr = log_uniform(&mut rng, space.lr);
            let wd = log_uniform(&mut rng, space.weight_decay);
            let c = rng.gen_range(space.grad_accum.0..=space.grad_accum.1);
            HyperConfig::new(lr, wd, c, profile, seed)
        })
        .collect())
}

/// Linear decay from `lr0` at step 0 to 0 at `total_steps`, no warm-up.
pub fn lr_schedule(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let step = step.min(total_steps);
    lr0 * (1.0 - step as f64 / total_steps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_in_range_and_reproducible() {
        let a = sample_configs(2000, 7, BatchProfile::Base).unwrap();
        assert_eq!(a, sample_configs(2000, 7, BatchProfile::Base).unwrap());
        assert!(a.iter().all(HyperConfig::in_search_space));
        assert!(a.iter().all(|c| c.epochs == 5 && c.batch_size == 10));
        let cs: std::collections::BTreeSet<usize> = a.iter().map(|c| c.grad_accum).collect();
        assert_eq!(cs, (1..=10).collect());
        assert_ne!(a, sample_configs(2000, 8, BatchProfile::Base).unwrap());
        assert!(sample_configs(0, 1, BatchProfile::Base).is_err());
    }

    #[test]
    fn schedule_points() {
        assert_eq!(lr_schedule(0, 40, 0.01), 0.01);
        assert_eq!(lr_schedule(40, 40, 0.01), 0.0);
        assert_eq!(lr_schedule(20, 40, 0.01), 0.005);
    }

    #[test]
    fn toml_round_trip_and_profiles() {
        let cfg = HyperConfig::from_toml_str("lr = 1e-3\nprofile = \"large\"\ngrad_accum = 3\nseed = 9\n").unwrap();
        assert_eq!(cfg.batch_size, 2);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(HyperConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        assert!(HyperConfig::from_toml_str("lr = 1e-3\nbogus = 1\n").is_err());
        assert!(HyperConfig::from_toml_str("lr = -1.0\n").is_err());
        assert!(HyperConfig::from_toml_str("weight_decay = 0.1\n").is_err());
    }
}
