//! Lattice sets with a prescribed discrete dimension.
//!
//! For `0 < beta <= d` let `j = ceil(beta)`. In shell `S_n` the set consists
//! of the points of the coordinate plane spanned by the first `j` axes whose
//! coordinates are multiples of `2^{e(n)}`, with
//! `e(n) = min(ceil(n (1 - beta / j)), n - 1)`. A shell then holds about
//! `2^{n beta}` points. The cap at `n - 1` keeps at least one point in every
//! shell when `beta` is small.

use crate::HarnessError;
use anyhow::Result;
use rcm_core::fractal::{alpha_grid, dim_estimate, shell_tables, DimEstimate};
use rcm_core::geometry::shell_index;
use rcm_core::LatticePoint;
use serde::{Deserialize, Serialize};

/// Accepted distance between the estimated dimension and `beta`.
pub const SELF_CHECK_TOL: f64 = 0.25;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestSet {
    pub beta: f64,
    pub dim: usize,
    /// Dimension of the coordinate plane carrying the set.
    pub plane_dim: usize,
    /// `(n, A ∩ S_n)` for `n = 1..=shells`, each sorted.
    pub shells: Vec<(u32, Vec<LatticePoint>)>,
}

/// Spacing exponent `e(n)` of shell `n`.
pub fn spacing_exponent(beta: f64, plane_dim: usize, n: u32) -> u32 {
    let raw = (n as f64 * (1.0 - beta / plane_dim as f64) - 1e-9).ceil().max(0.0) as u32;
    raw.min(n.saturating_sub(1))
}

/// The set for `beta` in dimension `dim`, materialised for shells
/// `1..=shells`.
pub fn make_test_set(beta: f64, dim: usize, shells: u32) -> Result<TestSet> {
    if !(beta > 0.0 && beta <= dim as f64) || dim == 0 {
        return Err(HarnessError::BadBeta { beta, dim }.into());
    }
    let plane_dim = (beta - 1e-12).ceil() as usize;
    let shells = (1..=shells).map(|n| (n, shell_points(beta, dim, plane_dim, n))).collect();
    Ok(TestSet { beta, dim, plane_dim, shells })
}

fn shell_points(beta: f64, dim: usize, j: usize, n: u32) -> Vec<LatticePoint> {
    let step = 1i64 << spacing_exponent(beta, j, n);
    let half = 1i64 << (n - 1);
    // Multiples of `step` in [-half, half).
    let ticks: Vec<i32> = (-half / step..half / step).map(|k| (k * step) as i32).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; j];
    let mut coords = vec![0i32; dim];
    loop {
        for a in 0..j {
            coords[a] = ticks[idx[a]];
        }
        let p = LatticePoint::new(&coords);
        if shell_index(&p) == n {
            out.push(p);
        }
        let mut a = 0;
        while a < j {
            idx[a] += 1;
            if idx[a] < ticks.len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == j {
            break;
        }
    }
    out.sort_unstable();
    out
}

impl TestSet {
    /// Membership for any shell, materialised or not.
    pub fn contains(&self, x: &LatticePoint) -> bool {
        let c = x.coords();
        if c[self.plane_dim..].iter().any(|&v| v != 0) {
            return false;
        }
        let n = shell_index(x);
        let mask = (1i64 << spacing_exponent(self.beta, self.plane_dim, n)) - 1;
        c[..self.plane_dim].iter().all(|&v| v as i64 & mask == 0)
    }

    /// Whether the set sits exactly at the critical dimension `d - 2`.
    pub fn is_critical(&self) -> bool {
        (self.beta - (self.dim as f64 - 2.0)).abs() < 1e-9
    }

    pub fn shell(&self, n: u32) -> &[LatticePoint] {
        self.shells.iter().find(|s| s.0 == n).map_or(&[], |s| &s.1)
    }

    /// Covering estimate on the last `min(6, N)` materialised shells, over
    /// the grid `0.05, 0.1, ..., d`.
    pub fn estimate_dimension(&self) -> Result<DimEstimate> {
        let k = self.shells.len().min(6);
        let tail = &self.shells[self.shells.len() - k..];
        let (nu, _) = shell_tables(tail, &alpha_grid(0.05, self.dim as f64, 0.05), 0.3)?;
        Ok(dim_estimate(&nu)?)
    }

    /// Self-check: the covering estimate is within [`SELF_CHECK_TOL`] of
    /// `beta`. Returns the estimate either way.
    pub fn self_check(&self) -> Result<(bool, DimEstimate)> {
        let est = self.estimate_dimension()?;
        Ok(((est.alpha_hat - self.beta).abs() <= SELF_CHECK_TOL, est))
    }
}
