//! Does the walk keep hitting a thin set? Per-shell hit records next to the
//! Wiener series of the same set.

use crate::config::ExperimentConfig;
use crate::testset::TestSet;
use crate::{stream_rng, with_threads, HarnessError, STREAM_WALK};
use anyhow::Result;
use rayon::prelude::*;
use rcm_core::geometry::shell_index;
use rcm_core::potential::{wiener_series, SeriesClass, WienerConfig, WienerSeries};
use rcm_core::walk::{StopRule, Visit};
use rcm_core::{LatticePoint, Walker};
use serde::{Deserialize, Serialize};

/// Shells used for the Wiener series cross-reference.
pub const WIENER_SHELLS: u32 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `dim A > d - 2`: the walk should keep hitting the set.
    Recurrent,
    /// `dim A < d - 2`: the walk should eventually stop hitting the set.
    Transient,
    /// `dim A = d - 2`, where the dichotomy says nothing.
    CriticalIndeterminate,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Recurrent => "hit infinitely often",
            Regime::Transient => "hit finitely often",
            Regime::CriticalIndeterminate => "critical: indeterminate",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicaHits {
    pub replica: usize,
    /// `skeleton_hits[n - 1]`: the walk sat in `A ∩ S_n` at an integer time.
    pub skeleton_hits: Vec<bool>,
    /// `full_hits[n - 1]`: the walk visited `A ∩ S_n` at all.
    pub full_hits: Vec<bool>,
    pub last_hit: Option<u32>,
    /// Fraction of shells `n_min..=n_max` with a skeleton hit.
    pub hit_fraction: f64,
    pub jumps: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HittingReport {
    pub beta: f64,
    pub regime: Regime,
    pub replicas: Vec<ReplicaHits>,
    pub mean_hit_fraction: f64,
    /// Fraction of replicas whose last skeleton hit is in a shell `<= n_min`
    /// (or that never hit).
    pub early_last_hit_fraction: f64,
    /// Absent in the critical case.
    pub wiener: Option<WienerSeries>,
}

impl HittingReport {
    /// Per-shell fraction of replicas with a full-range hit.
    pub fn full_hit_rate(&self, n: u32) -> f64 {
        let k = self.replicas.iter().filter(|r| r.full_hits[n as usize - 1]).count();
        k as f64 / self.replicas.len() as f64
    }

    /// Whether the Wiener series agrees with the regime of the set.
    pub fn wiener_agrees(&self) -> Option<bool> {
        let class = self.wiener.as_ref()?.class;
        match self.regime {
            Regime::Recurrent => Some(class == SeriesClass::DivergentLike),
            Regime::Transient => Some(class == SeriesClass::ConvergentLike),
            Regime::CriticalIndeterminate => None,
        }
    }
}

fn run_replica(cfg: &ExperimentConfig, set: &TestSet, replica: usize) -> Result<ReplicaHits> {
    let env = cfg.environment(replica)?;
    let rng = stream_rng(cfg.seed, STREAM_WALK, replica as u64);
    let mut walker = Walker::new(&env, LatticePoint::origin(cfg.dim), cfg.walk_clock(), rng)?.with_budget(cfg.jump_budget);
    let m = cfg.n_max as usize;
    let mut skeleton = vec![false; m];
    let mut full = vec![false; m];
    let clock = cfg.walk_clock();
    let mut obs = |v: &Visit| {
        let n = shell_index(&v.site) as usize;
        if n <= m && set.contains(&v.site) {
            full[n - 1] = true;
            if v.integer_times(clock).2 {
                skeleton[n - 1] = true;
            }
        }
    };
    walker.run_to_end(StopRule::ExitCube(cfg.n_max), &mut obs)?;
    let last_hit = skeleton.iter().rposition(|&h| h).map(|i| i as u32 + 1);
    let band = &skeleton[cfg.n_min as usize - 1..];
    let hit_fraction = band.iter().filter(|&&h| h).count() as f64 / band.len() as f64;
    Ok(ReplicaHits { replica, skeleton_hits: skeleton, full_hits: full, last_hit, hit_fraction, jumps: walker.jumps() })
}

/// Per-replica hit records of `set`, without the Wiener series.
pub fn simulate_hits(cfg: &ExperimentConfig, set: &TestSet) -> Result<Vec<ReplicaHits>> {
    if cfg.dim < 3 {
        return Err(HarnessError::RecurrentDimension(cfg.dim).into());
    }
    cfg.validate()?;
    anyhow::ensure!(set.dim == cfg.dim, "test set has d = {}, config has d = {}", set.dim, cfg.dim);
    with_threads(cfg.threads, || {
        (0..cfg.replicas).into_par_iter().map(|r| run_replica(cfg, set, r)).collect::<Result<Vec<_>>>()
    })?
}

/// Walk to the boundary of `V(0, 2^{n_max})` and record which shells of `set`
/// the integer-time skeleton meets. The Wiener series of the set over shells
/// `1..=7` is computed in the environment of replica 0.
pub fn run_hitting(cfg: &ExperimentConfig, set: &TestSet) -> Result<HittingReport> {
    let critical = set.beta - (cfg.dim as f64 - 2.0);
    let regime = if critical.abs() < 1e-9 {
        Regime::CriticalIndeterminate
    } else if critical > 0.0 {
        Regime::Recurrent
    } else {
        Regime::Transient
    };
    let replicas = simulate_hits(cfg, set)?;
    let k = replicas.len() as f64;
    let mean_hit_fraction = replicas.iter().map(|r| r.hit_fraction).sum::<f64>() / k;
    let early = replicas.iter().filter(|r| r.last_hit.is_none_or(|n| n <= cfg.n_min)).count() as f64 / k;
    let wiener = if regime == Regime::CriticalIndeterminate {
        None
    } else {
        let shells: Vec<(u32, Vec<LatticePoint>)> =
            set.shells.iter().filter(|s| s.0 <= WIENER_SHELLS).cloned().collect();
        anyhow::ensure!(shells.len() as u32 >= WIENER_SHELLS, "test set must materialise shells 1..={WIENER_SHELLS}");
        Some(wiener_series(&cfg.environment(0)?, &shells, WIENER_SHELLS, &WienerConfig::default())?)
    };
    Ok(HittingReport {
        beta: set.beta,
        regime,
        replicas,
        mean_hit_fraction,
        early_last_hit_fraction: early,
        wiener,
    })
}
