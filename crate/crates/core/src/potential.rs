//! Green functions, capacities and the Wiener-type series.
//!
//! The whole-lattice Green function is approximated on the box
//! `V(0, 2R) = [-R, R)^d` with absorbing boundary: for `x` in the box,
//! `mu_x u(x) - sum_{y ~ x} mu_xy u(y) = 1{x = source}` with `u = 0` outside.
//! Then `u(x) = g_R(x, source)` is the expected VSRW occupation time of the
//! source before leaving the box. The operator is symmetric positive
//! definite and is solved by Jacobi-preconditioned conjugate gradients.

use crate::environment::{EnvError, Environment, LatticePoint, MAX_DIM};
use crate::geometry::{shell_index, Cube};
use crate::walk::{Clock, StopRule, Visit, WalkError, Walker};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("potential theory needs d >= 3, got d = {0}")]
    UnsupportedDimension(usize),
    #[error("point {0} lies outside the truncation box of radius {1}")]
    SourceOutsideBox(LatticePoint, i32),
    #[error("solver stopped at relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("the target set is empty")]
    EmptySet,
    #[error("Green matrix is not positive definite")]
    SingularGreenMatrix,
    #[error("box with {0} states exceeds the configured limit")]
    BoxTooLarge(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

/// Truncation and solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenSolveConfig {
    /// Half-width `R` of the box `[-R, R)^d`.
    pub radius: i32,
    /// Relative residual at which CG stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest number of box states a solve may allocate.
    pub max_states: usize,
}

impl Default for GreenSolveConfig {
    fn default() -> Self {
        GreenSolveConfig { radius: 32, tolerance: 1e-10, max_iterations: 200_000, max_states: 1 << 25 }
    }
}

impl GreenSolveConfig {
    pub fn with_radius(radius: i32) -> Self {
        GreenSolveConfig { radius, ..Default::default() }
    }
}

/// The conductance operator `L u(x) = mu_x u(x) - sum_y mu_xy u(y)` on a box
/// with zero boundary values.
#[derive(Clone, Debug)]
pub struct BoxOperator {
    dim: usize,
    radius: i32,
    side: usize,
    strides: [usize; MAX_DIM],
    diag: Vec<f64>,
    /// `up[a][i]`: conductance of the edge from `i` to `i + e_a`, zero when
    /// `i + e_a` leaves the box.
    up: Vec<Vec<f64>>,
}

impl BoxOperator {
    pub fn new(env: &Environment, cfg: &GreenSolveConfig) -> Result<Self, PotentialError> {
        let d = env.dim();
        if d < 3 {
            return Err(PotentialError::UnsupportedDimension(d));
        }
        let side = 2 * cfg.radius.max(1) as usize;
        let n = side.checked_pow(d as u32).filter(|&n| n <= cfg.max_states).ok_or(PotentialError::BoxTooLarge(
            side.saturating_pow(d as u32),
        ))?;
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1;
        for a in (0..d).rev() {
            strides[a] = s;
            s *= side;
        }
        let mut op = BoxOperator { dim: d, radius: cfg.radius, side, strides, diag: vec![0.0; n], up: vec![vec![0.0; n]; d] };
        let mut buf = [0.0; 2 * MAX_DIM];
        for i in 0..n {
            let x = op.point(i);
            op.diag[i] = env.local_conductances(&x, &mut buf);
            for a in 0..d {
                if x.coord(a) + 1 < cfg.radius {
                    op.up[a][i] = buf[2 * a + 1];
                }
            }
        }
        Ok(op)
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    pub fn index(&self, x: &LatticePoint) -> Option<usize> {
        let mut i = 0;
        for a in 0..self.dim {
            let c = x.coord(a) + self.radius;
            if c < 0 || c as usize >= self.side {
                return None;
            }
            i += c as usize * self.strides[a];
        }
        Some(i)
    }

    pub fn point(&self, mut i: usize) -> LatticePoint {
        let mut c = [0i32; MAX_DIM];
        for a in 0..self.dim {
            c[a] = (i / self.strides[a]) as i32 - self.radius;
            i %= self.strides[a];
        }
        LatticePoint::new(&c[..self.dim])
    }

    /// Largest diagonal entry; `2 max mu_x` bounds the spectral radius.
    pub fn max_diag(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// `out = L v`, with rows and columns in `fixed` replaced by the identity.
    fn apply(&self, v: &[f64], out: &mut [f64], fixed: Option<&[bool]>) {
        let n = v.len();
        let d = self.dim;
        let reach = self.strides[0];
        let row = |i: usize| {
            let mut acc = self.diag[i] * v[i];
            for a in 0..d {
                let s = self.strides[a];
                if i + s < n {
                    acc -= self.up[a][i] * v[i + s];
                }
                if i >= s {
                    acc -= self.up[a][i - s] * v[i - s];
                }
            }
            acc
        };
        let lo = reach.min(n);
        let hi = n.saturating_sub(reach).max(lo);
        for i in 0..lo {
            out[i] = row(i);
        }
        // Interior rows have all 2d neighbours inside the index range.
        match d {
            3 => {
                let (s0, s1) = (self.strides[0], self.strides[1]);
                let (u0, u1, u2) = (&self.up[0], &self.up[1], &self.up[2]);
                for i in lo..hi {
                    out[i] = self.diag[i] * v[i]
                        - u0[i] * v[i + s0]
                        - u0[i - s0] * v[i - s0]
                        - u1[i] * v[i + s1]
                        - u1[i - s1] * v[i - s1]
                        - u2[i] * v[i + 1]
                        - u2[i - 1] * v[i - 1];
                }
            }
            _ => {
                for i in lo..hi {
                    out[i] = row(i);
                }
            }
        }
        for i in hi..n {
            out[i] = row(i);
        }
        if let Some(f) = fixed {
            // v vanishes on fixed sites, so only their own rows need fixing.
            for i in 0..n {
                if f[i] {
                    out[i] = v[i];
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a linear solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for an SPD operator given as a closure.
fn pcg<F: FnMut(&[f64], &mut [f64])>(
    mut apply: F,
    precond: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats), PotentialError> {
    let n = rhs.len();
    let norm_b = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok((x, SolveStats { iterations: 0, residual: 0.0 }));
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(precond).map(|(r, p)| r * p).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        let (mut rr, mut rz_new) = (0.0, 0.0);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * precond[i];
            rr += r[i] * r[i];
            rz_new += r[i] * z[i];
        }
        let res = rr.sqrt() / norm_b;
        if res <= tol {
            return Ok((x, SolveStats { iterations: it, residual: res }));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = dot(&r, &r).sqrt() / norm_b;
    Err(PotentialError::SolverDiverged { residual: res, iterations: max_iter })
}

/// `g_R(., source)` on the whole box.
#[derive(Clone, Debug)]
pub struct GreenField {
    pub source: LatticePoint,
    pub radius: i32,
    pub stats: SolveStats,
    values: Vec<f64>,
    op_index: BoxIndex,
}

/// Index arithmetic of a box, detached from the operator.
#[derive(Clone, Debug)]
struct BoxIndex {
    dim: usize,
    radius: i32,
    side: usize,
    strides: [usize; MAX_DIM],
}

impl BoxIndex {
    fn of(op: &BoxOperator) -> Self {
        BoxIndex { dim: op.dim, radius: op.radius, side: op.side, strides: op.strides }
    }

    fn index(&self, x: &LatticePoint) -> Option<usize> {
        if x.dim() != self.dim {
            return None;
        }
        let mut i = 0;
        for a in 0..self.dim {
            let c = x.coord(a) + self.radius;
            if c < 0 || c as usize >= self.side {
                return None;
            }
            i += c as usize * self.strides[a];
        }
        Some(i)
    }
}

impl GreenField {
    /// `g_R(x, source)`; zero outside the box.
    pub fn get(&self, x: &LatticePoint) -> f64 {
        self.op_index.index(x).map_or(0.0, |i| self.values[i])
    }
}

fn jacobi(op: &BoxOperator, fixed: Option<&[bool]>) -> Vec<f64> {
    op.diag
        .iter()
        .enumerate()
        .map(|(i, d)| if fixed.is_some_and(|f| f[i]) { 1.0 } else { 1.0 / d })
        .collect()
}

/// Solve for `g_R(., source)` with a prebuilt operator.
pub fn green_field(op: &BoxOperator, source: &LatticePoint, cfg: &GreenSolveConfig) -> Result<GreenField, PotentialError> {
    let i = op.index(source).ok_or(PotentialError::SourceOutsideBox(*source, op.radius))?;
    let mut rhs = vec![0.0; op.len()];
    rhs[i] = 1.0;
    let pre = jacobi(op, None);
    let (values, stats) = pcg(|v, out| op.apply(v, out, None), &pre, &rhs, cfg.tolerance, cfg.max_iterations)?;
    Ok(GreenField { source: *source, radius: op.radius, stats, values, op_index: BoxIndex::of(op) })
}

/// `g_R(x, source)` for every queried `x`.
pub fn green_exact(
    env: &Environment,
    source: &LatticePoint,
    queries: &[LatticePoint],
    cfg: &GreenSolveConfig,
) -> Result<Vec<f64>, PotentialError> {
    let op = BoxOperator::new(env, cfg)?;
    let field = green_field(&op, source, cfg)?;
    Ok(queries.iter().map(|x| field.get(x)).collect())
}

/// Polynomial extrapolation to `1/R = 0` through `(R_i, g_i)`.
pub fn richardson(samples: &[(f64, f64)]) -> f64 {
    // Lagrange interpolation in h = 1/R evaluated at h = 0.
    let hs: Vec<f64> = samples.iter().map(|(r, _)| 1.0 / r).collect();
    let mut total = 0.0;
    for (i, (_, gi)) in samples.iter().enumerate() {
        let mut w = 1.0;
        for (j, hj) in hs.iter().enumerate() {
            if j != i {
                w *= hj / (hj - hs[i]);
            }
        }
        total += w * gi;
    }
    total
}

/// A Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Estimate { mean, stderr: (var / n as f64).sqrt(), replicas: n }
    }

    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.stderr
    }
}

fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Expected VSRW time spent at `y` before the walk from `x` leaves
/// `V(0, 2^escape_shell)`.
///
/// Each visit to `y` contributes its expected holding time `1 / mu_y`
/// rather than the sampled one, which has the same mean and smaller
/// variance. The escape box equals the solver box of radius
/// `2^(escape_shell - 1)`, so the estimate is unbiased for that `g_R`; the
/// gap to the whole-lattice value is `O(2^{-escape_shell (d-2)})`.
pub fn green_mc(
    env: &Environment,
    x: &LatticePoint,
    y: &LatticePoint,
    replicas: usize,
    escape_shell: u32,
    seed: u64,
) -> Result<Estimate, PotentialError> {
    if env.dim() < 3 {
        return Err(PotentialError::UnsupportedDimension(env.dim()));
    }
    let hold = 1.0 / env.total_conductance(y);
    let mut samples = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut visits = 0u64;
        let mut obs = |v: &Visit| {
            if v.site == *y && !v.terminal {
                visits += 1;
            }
        };
        let mut w = Walker::new(env, *x, Clock::Vsrw, replica_rng(seed, r as u64))?;
        w.run_to_end(StopRule::ExitCube(escape_shell), &mut obs)?;
        samples.push(visits as f64 * hold);
    }
    Ok(Estimate::from_samples(&samples))
}

/// Fraction of walks from `x` that visit `A` before leaving
/// `V(0, 2^escape_shell)`.
pub fn hitting_prob_mc(
    env: &Environment,
    x: &LatticePoint,
    set: &[LatticePoint],
    replicas: usize,
    escape_shell: u32,
    seed: u64,
) -> Result<Estimate, PotentialError> {
    if env.dim() < 3 {
        return Err(PotentialError::UnsupportedDimension(env.dim()));
    }
    let targets: FxHashSet<LatticePoint> = set.iter().copied().collect();
    let cube = Cube::v_n(env.dim(), escape_shell);
    let mut samples = Vec::with_capacity(replicas);
    for r in 0..replicas {
        if targets.contains(x) {
            samples.push(1.0);
            continue;
        }
        let hit = Cell::new(false);
        let mut w = Walker::new(env, *x, Clock::Vsrw, replica_rng(seed, r as u64))?;
        let mut obs = |v: &Visit| {
            if targets.contains(&v.site) && cube.contains(&v.site) {
                hit.set(true);
            }
        };
        // The outcome is settled at the first hit; check for it periodically.
        while w.run(StopRule::ExitCube(escape_shell), &mut obs, Some(1 << 12))?.is_none() && !hit.get() {}
        samples.push(if hit.get() { 1.0 } else { 0.0 });
    }
    Ok(Estimate::from_samples(&samples))
}

/// Capacity of a finite set through its Green matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub set: Vec<LatticePoint>,
    /// `G_A`, row-major.
    pub green: Vec<Vec<f64>>,
    /// Equilibrium charge `b` with `G_A b = 1`.
    pub charge: Vec<f64>,
    pub value: f64,
    pub min_charge: f64,
    pub radius: i32,
    /// `max_x |(G_A b)(x) - 1|`.
    pub residual: f64,
    /// Set when some charge is below `-tolerance`, which can only come from
    /// truncation or solver error.
    pub negative_charge: bool,
}

impl CapacityResult {
    /// `sum_y g(x, y) b(y)` for a point `x` given its Green values to `A`.
    pub fn potential(&self, green_to_set: &[f64]) -> f64 {
        green_to_set.iter().zip(&self.charge).map(|(g, b)| g * b).sum()
    }
}

fn dedup_sorted(set: &[LatticePoint]) -> Vec<LatticePoint> {
    let mut v = set.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Solve `G b = 1` for a symmetric positive definite `G`.
fn equilibrium_charge(g: &DMatrix<f64>) -> Result<DVector<f64>, PotentialError> {
    let n = g.nrows();
    let chol = g.clone().cholesky().ok_or(PotentialError::SingularGreenMatrix)?;
    Ok(chol.solve(&DVector::from_element(n, 1.0)))
}

fn capacity_from_matrix(set: Vec<LatticePoint>, g: DMatrix<f64>, radius: i32, tol: f64) -> Result<CapacityResult, PotentialError> {
    let g = (&g + g.transpose()) * 0.5;
    let b = equilibrium_charge(&g)?;
    let gb = &g * &b;
    let residual = gb.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    let min_charge = b.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(CapacityResult {
        set,
        green: (0..g.nrows()).map(|i| g.row(i).iter().copied().collect()).collect(),
        value: b.sum(),
        charge: b.iter().copied().collect(),
        min_charge,
        radius,
        residual,
        negative_charge: min_charge < -tol.sqrt(),
    })
}

/// `Cap(A) = sum_y b(y)` where `G_A b = 1`, with one Green solve per point.
pub fn capacity(env: &Environment, set: &[LatticePoint], cfg: &GreenSolveConfig) -> Result<CapacityResult, PotentialError> {
    let set = dedup_sorted(set);
    if set.is_empty() {
        return Err(PotentialError::EmptySet);
    }
    let op = BoxOperator::new(env, cfg)?;
    capacity_with(&op, &set, cfg)
}

/// [`capacity`] with a prebuilt operator; `set` must be sorted and distinct.
pub fn capacity_with(op: &BoxOperator, set: &[LatticePoint], cfg: &GreenSolveConfig) -> Result<CapacityResult, PotentialError> {
    let m = set.len();
    let mut g = DMatrix::zeros(m, m);
    for (j, y) in set.iter().enumerate() {
        let field = green_field(op, y, cfg)?;
        for (i, x) in set.iter().enumerate() {
            g[(i, j)] = field.get(x);
        }
    }
    capacity_from_matrix(set.to_vec(), g, op.radius, cfg.tolerance)
}

/// Capacity through the equilibrium potential: solve `L u = 0` off `A` with
/// `u = 1` on `A`, then `Cap(A) = sum_{x in A} (L u)(x)`. One solve for any
/// set size, which is what large shells need.
pub fn capacity_equilibrium(env: &Environment, set: &[LatticePoint], cfg: &GreenSolveConfig) -> Result<(f64, SolveStats), PotentialError> {
    let op = BoxOperator::new(env, cfg)?;
    capacity_equilibrium_with(&op, set, cfg)
}

pub fn capacity_equilibrium_with(op: &BoxOperator, set: &[LatticePoint], cfg: &GreenSolveConfig) -> Result<(f64, SolveStats), PotentialError> {
    if set.is_empty() {
        return Ok((0.0, SolveStats { iterations: 0, residual: 0.0 }));
    }
    let n = op.len();
    let mut fixed = vec![false; n];
    for x in set {
        let i = op.index(x).ok_or(PotentialError::SourceOutsideBox(*x, op.radius))?;
        fixed[i] = true;
    }
    // Move the known values to the right-hand side: rhs = -L 1_A off A.
    let ones: Vec<f64> = fixed.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let mut l1 = vec![0.0; n];
    op.apply(&ones, &mut l1, None);
    let rhs: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { -l1[i] }).collect();
    let pre = jacobi(op, Some(&fixed));
    let (mut u, stats) = pcg(|v, out| op.apply(v, out, Some(&fixed)), &pre, &rhs, cfg.tolerance, cfg.max_iterations)?;
    for i in 0..n {
        if fixed[i] {
            u[i] = 1.0;
        }
    }
    let mut lu = vec![0.0; n];
    op.apply(&u, &mut lu, None);
    let cap = (0..n).filter(|&i| fixed[i]).map(|i| lu[i]).sum();
    Ok((cap, stats))
}

/// Taylor degree of each scaled step of `exp(-h L)`.
const EXPMV_DEGREE: usize = 18;

/// `v -> exp(-h L) v` by scaling and a truncated Taylor series. With
/// `s >= h ||L||` steps each series has argument of norm at most 1, so the
/// truncation error per step is below `1 / 19!`.
struct ExpOperator<'a> {
    op: &'a BoxOperator,
    step: f64,
    steps: usize,
}

impl<'a> ExpOperator<'a> {
    fn new(op: &'a BoxOperator, h: f64) -> Self {
        let norm = 2.0 * op.max_diag();
        let steps = (h * norm).ceil().max(1.0) as usize;
        ExpOperator { op, step: h / steps as f64, steps }
    }

    fn apply(&self, v: &[f64], out: &mut [f64], term: &mut Vec<f64>, tmp: &mut Vec<f64>) {
        out.copy_from_slice(v);
        for _ in 0..self.steps {
            term.clear();
            term.extend_from_slice(out);
            for k in 1..=EXPMV_DEGREE {
                self.op.apply(term, tmp, None);
                let c = -self.step / k as f64;
                for i in 0..term.len() {
                    term[i] = c * tmp[i];
                    out[i] += term[i];
                }
            }
        }
    }
}

/// `2^n Cap^(n)(A)` for the chain observed at times `i / 2^n`.
///
/// The skeleton chain killed on leaving the box has kernel
/// `P = exp(-2^-n L)` and Green function `(I - P)^{-1}`; its capacity is
/// `1^T G_A^{-1} 1` as for the continuous-time walk.
pub fn capacity_discrete_approx(
    env: &Environment,
    set: &[LatticePoint],
    n: u32,
    cfg: &GreenSolveConfig,
) -> Result<f64, PotentialError> {
    let set = dedup_sorted(set);
    if set.is_empty() {
        return Ok(0.0);
    }
    let op = BoxOperator::new(env, cfg)?;
    let h = 0.5f64.powi(n as i32);
    let expm = ExpOperator::new(&op, h);
    let len = op.len();
    let (mut term, mut tmp, mut e) = (Vec::with_capacity(len), vec![0.0; len], vec![0.0; len]);
    let m = set.len();
    let mut g = DMatrix::zeros(m, m);
    let ones = vec![1.0; len];
    for (j, y) in set.iter().enumerate() {
        let mut rhs = vec![0.0; len];
        rhs[op.index(y).ok_or(PotentialError::SourceOutsideBox(*y, op.radius))?] = 1.0;
        let (col, _) = pcg(
            |v, out| {
                expm.apply(v, &mut e, &mut term, &mut tmp);
                for i in 0..v.len() {
                    out[i] = v[i] - e[i];
                }
            },
            &ones,
            &rhs,
            cfg.tolerance,
            cfg.max_iterations,
        )?;
        for (i, x) in set.iter().enumerate() {
            g[(i, j)] = col[op.index(x).expect("inside box")];
        }
    }
    let cap = capacity_from_matrix(set, g, op.radius, cfg.tolerance)?.value;
    Ok(cap * 2f64.powi(n as i32))
}

/// Qualitative behaviour of the series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesClass {
    ConvergentLike,
    DivergentLike,
    Indeterminate,
}

/// Terms above this fitted ratio count as not decaying.
pub const DIVERGENT_RATIO: f64 = 0.9;
/// Terms below this fitted ratio count as geometrically decaying.
pub const CONVERGENT_RATIO: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerTerm {
    pub shell: u32,
    pub points: usize,
    pub capacity: f64,
    pub term: f64,
    pub partial_sum: f64,
    pub radius: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerSeries {
    pub terms: Vec<WienerTerm>,
    /// Geometric ratio fitted to the last half of the terms.
    pub ratio: Option<f64>,
    pub class: SeriesClass,
}

/// Box sizing for the Wiener series: shell `n` is solved on the box of
/// half-width `ceil(factor * 2^(n-1))`, so every shell sees the same relative
/// truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerConfig {
    pub radius_factor: f64,
    pub solver: GreenSolveConfig,
}

impl Default for WienerConfig {
    fn default() -> Self {
        WienerConfig { radius_factor: 1.5, solver: GreenSolveConfig::default() }
    }
}

/// Least-squares geometric ratio of the last half of the terms.
pub fn fitted_ratio(terms: &[f64]) -> Option<f64> {
    let k = terms.len().div_ceil(2).max(2).min(terms.len());
    let tail = &terms[terms.len() - k..];
    if tail.len() < 2 || tail.iter().any(|&t| !(t > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = (0..tail.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|t| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

pub fn classify(terms: &[f64]) -> (Option<f64>, SeriesClass) {
    if !terms.is_empty() && terms.iter().all(|&t| t == 0.0) {
        return (None, SeriesClass::ConvergentLike);
    }
    let ratio = fitted_ratio(terms);
    let class = match ratio {
        Some(r) if r < CONVERGENT_RATIO => SeriesClass::ConvergentLike,
        Some(r) if r >= DIVERGENT_RATIO => SeriesClass::DivergentLike,
        _ => SeriesClass::Indeterminate,
    };
    (ratio, class)
}

/// Partial sums of `sum_n 2^{-n(d-2)} Cap(A ∩ S_n)` for `n = 1..=max_shell`.
/// `shells` holds `(n, A ∩ S_n)`; missing shells are empty.
pub fn wiener_series(
    env: &Environment,
    shells: &[(u32, Vec<LatticePoint>)],
    max_shell: u32,
    cfg: &WienerConfig,
) -> Result<WienerSeries, PotentialError> {
    let d = env.dim();
    if d < 3 {
        return Err(PotentialError::UnsupportedDimension(d));
    }
    let mut terms = Vec::new();
    let mut partial = 0.0;
    for n in 1..=max_shell {
        let pts: Vec<LatticePoint> = shells
            .iter()
            .filter(|(m, _)| *m == n)
            .flat_map(|(_, v)| v.iter().copied())
            .filter(|p| shell_index(p) == n)
            .collect();
        let pts = dedup_sorted(&pts);
        let radius = (cfg.radius_factor * 2f64.powi(n as i32 - 1)).ceil() as i32;
        let cap = if pts.is_empty() {
            0.0
        } else {
            let solver = GreenSolveConfig { radius, ..cfg.solver.clone() };
            capacity_equilibrium(env, &pts, &solver)?.0
        };
        let term = cap * 2f64.powi(-(n as i32) * (d as i32 - 2));
        partial += term;
        terms.push(WienerTerm { shell: n, points: pts.len(), capacity: cap, term, partial_sum: partial, radius });
    }
    let values: Vec<f64> = terms.iter().map(|t| t.term).collect();
    let (ratio, class) = classify(&values);
    Ok(WienerSeries { terms, ratio, class })
}
