//! Experiment configuration.
//!
//! The config file is flat TOML: one `key = value` per line, no tables.
//! Every key is optional; see [`ExperimentConfig::default`] for the values
//! used when a key is absent. Example:
//!
//! ```toml
//! dim = 3
//! model = "btm"
//! law = "pareto"
//! shape = 0.5
//! a = 0.5
//! n_min = 6
//! n_max = 10
//! range = "full"
//! replicas = 20
//! seed = 7
//! ```

use anyhow::{bail, Context, Result};
use rcm_core::fractal::alpha_grid;
use rcm_core::{Clock, ConductanceLaw, Environment, Model};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Which visited set the dimension estimators see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeKind {
    /// Sites occupied at integer VSRW times.
    Skeleton,
    /// Every visited site.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rcm,
    Btm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Constant,
    Uniform,
    Pareto,
    Twopoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    Vsrw,
    Csrw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // Environment.
    pub dim: usize,
    pub model: ModelKind,
    pub law: LawKind,
    /// Constant law value.
    pub value: f64,
    /// Uniform law bounds.
    pub lo: f64,
    pub hi: f64,
    /// Pareto tail index.
    pub shape: f64,
    /// Two-point law: `high` with probability `prob`, otherwise 1.
    pub high: f64,
    pub prob: f64,
    /// Trap model exponent.
    pub a: f64,
    /// Fixed environment seed shared by all replicas. When absent every
    /// replica draws its own environment from the master seed.
    pub env_seed: Option<u64>,

    // Walk.
    pub clock: ClockKind,
    pub replicas: usize,
    pub jump_budget: u64,
    /// Trap depth `kappa^a` above which trap excursions are compressed
    /// (trap model only; 0 disables).
    pub trap_threshold: f64,
    /// Jumps between checkpoints; 0 disables checkpointing.
    pub checkpoint_every: u64,

    // Analysis.
    pub n_min: u32,
    pub n_max: u32,
    /// The walk runs until it leaves `V_{n_max + extra_shells}`.
    pub extra_shells: u32,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha_step: f64,
    pub epsilon: f64,
    pub range: RangeKind,

    // Seeds and output.
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: 3,
            model: ModelKind::Rcm,
            law: LawKind::Constant,
            value: 1.0,
            lo: 1.0,
            hi: 5.0,
            shape: 0.5,
            high: 100.0,
            prob: 0.1,
            a: 0.5,
            env_seed: None,
            clock: ClockKind::Vsrw,
            replicas: 20,
            jump_budget: rcm_core::walk::DEFAULT_JUMP_BUDGET,
            trap_threshold: 10.0,
            checkpoint_every: 10_000_000,
            n_min: 6,
            n_max: 12,
            extra_shells: 2,
            alpha_lo: 0.5,
            alpha_hi: 3.0,
            alpha_step: 0.05,
            epsilon: 0.3,
            range: RangeKind::Skeleton,
            seed: 1,
            threads: 1,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, excluding the output directory
    /// and thread count, which do not affect results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = 1;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            bail!("replicas must be >= 1");
        }
        if self.n_max < self.n_min + 3 {
            bail!("need n_max >= n_min + 3 for slope fits (n_min = {}, n_max = {})", self.n_min, self.n_max);
        }
        if self.n_min == 0 {
            bail!("shells are numbered from 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            bail!("epsilon must lie in (0, 1)");
        }
        if !(self.alpha_step > 0.0 && self.alpha_lo > 0.0 && self.alpha_hi > self.alpha_lo) {
            bail!("bad alpha grid");
        }
        self.conductance_law().validate()?;
        Ok(())
    }

    pub fn conductance_law(&self) -> ConductanceLaw {
        match self.law {
            LawKind::Constant => ConductanceLaw::Constant { value: self.value },
            LawKind::Uniform => ConductanceLaw::Uniform { lo: self.lo, hi: self.hi },
            LawKind::Pareto => ConductanceLaw::Pareto { shape: self.shape },
            LawKind::Twopoint => ConductanceLaw::TwoPoint { high: self.high, prob: self.prob },
        }
    }

    pub fn model_spec(&self) -> Model {
        match self.model {
            ModelKind::Rcm => Model::Rcm { law: self.conductance_law() },
            ModelKind::Btm => Model::Btm { a: self.a, law: self.conductance_law() },
        }
    }

    /// Environment seen by `replica`.
    pub fn env_seed_for(&self, replica: usize) -> u64 {
        self.env_seed.unwrap_or_else(|| crate::derive_seed(self.seed, crate::STREAM_ENV, replica as u64))
    }

    pub fn environment(&self, replica: usize) -> Result<Environment> {
        Ok(Environment::new(self.dim, self.env_seed_for(replica), self.model_spec())?)
    }

    pub fn walk_clock(&self) -> Clock {
        match self.clock {
            ClockKind::Vsrw => Clock::Vsrw,
            ClockKind::Csrw => Clock::Csrw,
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        alpha_grid(self.alpha_lo, self.alpha_hi, self.alpha_step)
    }

    pub fn exit_shell(&self) -> u32 {
        self.n_max + self.extra_shells
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_defaults() {
        let c = ExperimentConfig::from_toml("model = \"btm\"\nlaw = \"pareto\"\nshape = 0.5\nn_max = 10\n").unwrap();
        assert_eq!(c.model, ModelKind::Btm);
        assert_eq!(c.n_min, 6);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out: "elsewhere".into(), threads: 4, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig { seed: 2, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("n_min = 6\nn_max = 8\n").is_err());
        assert!(ExperimentConfig::from_toml("replicas = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("epsilon = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("colour = 1\n").is_err());
    }
}
