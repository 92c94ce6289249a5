//! Dimension of the range: simulate, bucket the range by shell, estimate the
//! covering and packing exponents per replica, then aggregate.

use crate::checkpoint::{self, Snapshot};
use crate::config::{ExperimentConfig, ModelKind, RangeKind};
use crate::{stream_rng, with_threads, HarnessError, STREAM_WALK};
use anyhow::Result;
use rayon::prelude::*;
use rcm_core::fractal::{dim_estimate, dimp_estimate, shell_tables, CrossingStatus, DimEstimate};
use rcm_core::potential::Estimate;
use rcm_core::walk::{RangeSet, StopRule};
use rcm_core::{LatticePoint, Walker};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicaDimension {
    pub replica: usize,
    pub env_seed: u64,
    pub jumps: u64,
    pub steps: u64,
    pub vsrw_time: f64,
    /// `(n, |R ∩ S_n|)` for the analysed shells.
    pub shell_points: Vec<(u32, usize)>,
    pub hausdorff: DimEstimate,
    pub packing: DimEstimate,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionReport {
    pub replicas: Vec<ReplicaDimension>,
    pub hausdorff: Estimate,
    pub packing: Estimate,
    pub range: RangeKind,
    pub shells: (u32, u32),
    pub exit_shell: u32,
}

/// Cover and packing estimates for a range already bucketed by shell.
pub fn estimate_shells(
    shells: &[(u32, Vec<LatticePoint>)],
    alphas: &[f64],
    epsilon: f64,
) -> Result<(DimEstimate, DimEstimate)> {
    let (nu, tau) = shell_tables(shells, alphas, epsilon)?;
    Ok((dim_estimate(&nu)?, dimp_estimate(&tau)?))
}

/// Simulate replica `replica` and return its range restricted to
/// `n_min..=n_max`, resuming from and writing checkpoints in `ckpt_dir`.
pub fn simulate_range(
    cfg: &ExperimentConfig,
    replica: usize,
    ckpt_dir: Option<&std::path::Path>,
) -> Result<(RangeSet, rcm_core::walk::WalkerState)> {
    let env = cfg.environment(replica)?;
    let hash = cfg.hash();
    let stop = StopRule::ExitCube(cfg.exit_shell());
    let resumed = match ckpt_dir {
        Some(dir) => checkpoint::load(dir, replica, &hash)?,
        None => None,
    };
    let (mut walker, mut range) = match resumed {
        Some(s) => (Walker::resume(&env, cfg.walk_clock(), s.walker)?, s.range),
        None => {
            let rng = stream_rng(cfg.seed, STREAM_WALK, replica as u64);
            let w = Walker::new(&env, LatticePoint::origin(cfg.dim), cfg.walk_clock(), rng)?;
            let mut r = RangeSet::new(cfg.n_min, cfg.n_max, cfg.range == RangeKind::Full);
            r.clock = cfg.walk_clock();
            (w, r)
        }
    };
    walker = walker.with_budget(cfg.jump_budget);
    // Compressed trap visits carry no integer times, so compression is only
    // used when the estimators see the full range.
    if cfg.model == ModelKind::Btm && cfg.trap_threshold > 0.0 && cfg.range == RangeKind::Full {
        walker = walker.with_trap_compression(cfg.trap_threshold);
    }
    let pause = (ckpt_dir.is_some() && cfg.checkpoint_every > 0).then_some(cfg.checkpoint_every);
    loop {
        match walker.run(stop, &mut range, pause)? {
            Some(_) => break,
            None => {
                let dir = ckpt_dir.expect("pauses only when checkpointing");
                checkpoint::save(
                    dir,
                    &Snapshot { config_hash: hash.clone(), replica, walker: walker.state().clone(), range: range.clone() },
                )?;
            }
        }
    }
    if let Some(dir) = ckpt_dir {
        checkpoint::remove(dir, replica);
    }
    Ok((range, walker.state().clone()))
}

fn run_replica(cfg: &ExperimentConfig, replica: usize, ckpt_dir: Option<&std::path::Path>) -> Result<ReplicaDimension> {
    let t0 = Instant::now();
    let (range, state) = simulate_range(cfg, replica, ckpt_dir)?;
    let buckets = match cfg.range {
        RangeKind::Skeleton => &range.skeleton,
        RangeKind::Full => &range.full,
    };
    let shells: Vec<(u32, Vec<LatticePoint>)> = (cfg.n_min..=cfg.n_max).map(|n| (n, buckets.shell(n))).collect();
    let nonempty = shells.iter().filter(|s| !s.1.is_empty()).count();
    if nonempty < 4 {
        return Err(HarnessError::InsufficientShells { replica, nonempty }.into());
    }
    let (hausdorff, packing) = estimate_shells(&shells, &cfg.alphas(), cfg.epsilon)?;
    Ok(ReplicaDimension {
        replica,
        env_seed: cfg.env_seed_for(replica),
        jumps: state.jumps,
        steps: state.steps,
        vsrw_time: state.vsrw_time,
        shell_points: shells.iter().map(|(n, p)| (*n, p.len())).collect(),
        hausdorff,
        packing,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Per-replica covering and packing exponents of the range, and their mean.
///
/// Each replica walks from the origin until it leaves
/// `V(0, 2^{n_max + extra_shells})`. Replicas run on `cfg.threads` threads
/// and are collected in replica order, so the report does not depend on the
/// thread count.
pub fn run_dimension(cfg: &ExperimentConfig) -> Result<DimensionReport> {
    if cfg.dim < 3 {
        return Err(HarnessError::RecurrentDimension(cfg.dim).into());
    }
    cfg.validate()?;
    let ckpt_dir: Option<PathBuf> = (cfg.checkpoint_every > 0).then(|| cfg.out.join("checkpoints"));
    let replicas: Vec<ReplicaDimension> = with_threads(cfg.threads, || {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| run_replica(cfg, r, ckpt_dir.as_deref()))
            .collect::<Result<Vec<_>>>()
    })??;
    let h: Vec<f64> = replicas.iter().map(|r| r.hausdorff.alpha_hat).collect();
    let p: Vec<f64> = replicas.iter().map(|r| r.packing.alpha_hat).collect();
    Ok(DimensionReport {
        hausdorff: Estimate::from_samples(&h),
        packing: Estimate::from_samples(&p),
        replicas,
        range: cfg.range,
        shells: (cfg.n_min, cfg.n_max),
        exit_shell: cfg.exit_shell(),
    })
}

/// Short label for a crossing status, used in tables.
pub fn status_label(s: CrossingStatus) -> &'static str {
    match s {
        CrossingStatus::Crossing => "crossing",
        CrossingStatus::Extrapolated => "extrapolated",
        CrossingStatus::AllNegative => "all_negative",
        CrossingStatus::AllNonNegative => "all_nonnegative",
    }
}
