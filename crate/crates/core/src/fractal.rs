//! Discrete Hausdorff and packing measures over dyadic shells, and the
//! slope estimators built on them.
//!
//! Covers use dyadic cubes and an exact bottom-up dynamic program over the
//! dyadic tree of `A ∩ S_n`. Packings use semi-dyadic cubes chosen greedily,
//! largest level first and then in lexicographic order of the anchor point.

use crate::environment::{LatticePoint, COORD_LIMIT};
use crate::geometry::{closest_semi_dyadic, packing_cube, restrict_to_shell, shell_index, side_of, DyadicCube};
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FractalError {
    #[error("invalid measure function: {0}")]
    InvalidMeasure(String),
    #[error("fewer than 4 shells with data (got {0})")]
    InsufficientShells(usize),
    #[error("instance too large for exhaustive search ({0} points)")]
    TooLarge(usize),
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("point {0} outside the addressable range")]
    OutOfRange(LatticePoint),
}

/// Gauge function `h` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasureFunction {
    /// `r^alpha`.
    Alpha(f64),
    /// `r^{d-2} (log 1/r)^{3d(d-2)/2}` below `r_0 = exp(-3d/2)`, continued as
    /// `r^{d-2} (log 1/r_0)^{3d(d-2)/2}` above it.
    H1 { d: usize },
    /// `r^{d-2} (log 1/r)^{-c14}`.
    H2 { d: usize, c14: f64 },
    /// Piecewise linear through the given `(r, h)` knots, with `h(0) = 0`.
    Tabulated(Vec<(f64, f64)>),
}

/// Default `c14` for [`MeasureFunction::H2`]: the smallest integer strictly
/// above `(3 / ln 2 + 1)(d - 2)`, plus one.
pub fn default_c14(d: usize) -> f64 {
    let bound = (3.0 / std::f64::consts::LN_2 + 1.0) * (d as f64 - 2.0);
    bound.floor() + 2.0
}

impl MeasureFunction {
    pub fn h2_default(d: usize) -> Self {
        MeasureFunction::H2 { d, c14: default_c14(d) }
    }

    pub fn validate(&self) -> Result<(), FractalError> {
        match self {
            MeasureFunction::Alpha(a) if !(*a > 0.0 && a.is_finite()) => {
                Err(FractalError::InvalidMeasure(format!("alpha = {a} must be positive")))
            }
            MeasureFunction::H1 { d } | MeasureFunction::H2 { d, .. } if *d < 3 => {
                Err(FractalError::InvalidMeasure(format!("h1/h2 need d >= 3, got {d}")))
            }
            MeasureFunction::H2 { d, c14 } => {
                let bound = (3.0 / std::f64::consts::LN_2 + 1.0) * (*d as f64 - 2.0);
                if *c14 > bound {
                    Ok(())
                } else {
                    Err(FractalError::InvalidMeasure(format!("c14 = {c14} must exceed {bound:.4}")))
                }
            }
            MeasureFunction::Tabulated(knots) => {
                let ok = knots.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1)
                    && knots.first().is_some_and(|k| k.0 > 0.0 && k.1 >= 0.0);
                if ok {
                    Ok(())
                } else {
                    Err(FractalError::InvalidMeasure("knots must be increasing in r and h, with r > 0".into()))
                }
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            MeasureFunction::Alpha(a) => r.powf(*a),
            MeasureFunction::H1 { d } => {
                let d = *d as f64;
                let r0 = (-1.5 * d).exp();
                let l = if r < r0 { (1.0 / r).ln() } else { 1.5 * d };
                r.powf(d - 2.0) * l.powf(1.5 * d * (d - 2.0))
            }
            MeasureFunction::H2 { d, c14 } => {
                r.powf(*d as f64 - 2.0) * (1.0 / r).ln().powf(-c14)
            }
            MeasureFunction::Tabulated(knots) => {
                let mut prev = (0.0, 0.0);
                for &(x, y) in knots {
                    if r <= x {
                        return prev.1 + (y - prev.1) * (r - prev.0) / (x - prev.0);
                    }
                    prev = (x, y);
                }
                prev.1
            }
        }
    }

    /// `max h(2r) / h(r)` over `points` values of `r` evenly spread in
    /// `(0, 1/2)`. The open end matters for `H2`, which blows up at `r = 1`.
    pub fn doubling_constant(&self, points: usize) -> f64 {
        (1..=points)
            .map(|i| 0.5 * i as f64 / (points + 1) as f64)
            .map(|r| self.eval(2.0 * r) / self.eval(r))
            .fold(0.0, f64::max)
    }
}

/// Result of an optimal dyadic cover of `A ∩ S_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverResult {
    pub value: f64,
    pub cubes: Vec<DyadicCube>,
}

/// Result of a greedy semi-dyadic packing of `A ∩ S_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PackResult {
    pub value: f64,
    /// Anchor point and level `k` of each cube `Ṽ(x, 2^k)`.
    pub cubes: Vec<(LatticePoint, u32)>,
    /// True when an exhaustive search certified that the greedy value is
    /// optimal. Only attempted for at most [`EXACT_PACK_LIMIT`] points.
    pub exact: bool,
}

/// Largest instance for which exhaustive searches are run.
pub const EXACT_PACK_LIMIT: usize = 12;

fn morton(p: &LatticePoint) -> u128 {
    let d = p.dim();
    let mut code = 0u128;
    for bit in (0..21).rev() {
        for i in 0..d {
            let c = (p.coord(i) + COORD_LIMIT) as u32;
            code = (code << 1) | ((c >> bit) & 1) as u128;
        }
    }
    code
}

fn check_range(points: &[LatticePoint]) -> Result<(), FractalError> {
    match points.iter().find(|p| !p.in_range()) {
        Some(p) => Err(FractalError::OutOfRange(*p)),
        None => Ok(()),
    }
}

/// Dyadic tree of a finite point set, levels `0..=max_level`.
///
/// Points are kept in Morton order, so the children of every dyadic cube
/// form a contiguous run at the level below. The tree does not depend on
/// the gauge function and can be evaluated for many of them.
#[derive(Clone, Debug)]
pub struct DyadicTree {
    dim: usize,
    points: Vec<LatticePoint>,
    /// `child_end[k][j]` is the end (exclusive) of the children run of node `j`
    /// at level `k` within level `k - 1`; `child_end[0]` is unused.
    child_end: Vec<Vec<u32>>,
    /// Number of nodes per level.
    counts: Vec<usize>,
}

impl DyadicTree {
    pub fn build(points: &[LatticePoint], max_level: u32) -> Result<Self, FractalError> {
        check_range(points)?;
        let dim = points.first().map_or(1, |p| p.dim());
        let mut keyed: Vec<(u128, LatticePoint)> = points.iter().map(|p| (morton(p), *p)).collect();
        keyed.sort_unstable_by_key(|k| k.0);
        keyed.dedup_by_key(|k| k.0);
        let mut codes: Vec<u128> = keyed.iter().map(|k| k.0).collect();
        let points: Vec<LatticePoint> = keyed.into_iter().map(|k| k.1).collect();
        let mut child_end = vec![Vec::new()];
        let mut counts = vec![codes.len()];
        for _ in 1..=max_level {
            let mut ends = Vec::new();
            let mut parents = Vec::new();
            for (j, c) in codes.iter().enumerate() {
                let pc = c >> dim;
                if parents.last() != Some(&pc) {
                    if !parents.is_empty() {
                        ends.push(j as u32);
                    }
                    parents.push(pc);
                }
            }
            if !parents.is_empty() {
                ends.push(codes.len() as u32);
            }
            counts.push(parents.len());
            child_end.push(ends);
            codes = parents;
        }
        Ok(DyadicTree { dim, points, child_end, counts })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_level(&self) -> u32 {
        (self.counts.len() - 1) as u32
    }

    /// Number of occupied dyadic cubes at each level.
    pub fn occupied_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Minimal cover cost with cubes of level `k` costing `h(2^{k - n})`.
    pub fn cover_value(&self, h: &MeasureFunction, n: u32) -> f64 {
        self.cover(h, n, false).0
    }

    fn cover(&self, h: &MeasureFunction, n: u32, keep_choice: bool) -> (f64, Vec<Vec<bool>>) {
        if self.points.is_empty() {
            return (0.0, Vec::new());
        }
        let cost_at = |k: u32| h.eval(2f64.powi(k as i32 - n as i32));
        let mut cost = vec![cost_at(0); self.points.len()];
        let mut choices = Vec::new();
        for k in 1..=self.max_level() {
            let own = cost_at(k);
            let ends = &self.child_end[k as usize];
            let mut next = Vec::with_capacity(ends.len());
            let mut take = Vec::with_capacity(if keep_choice { ends.len() } else { 0 });
            let mut start = 0usize;
            for &e in ends {
                let sum: f64 = cost[start..e as usize].iter().sum();
                let t = own <= sum;
                next.push(if t { own } else { sum });
                if keep_choice {
                    take.push(t);
                }
                start = e as usize;
            }
            cost = next;
            choices.push(take);
        }
        (cost.iter().fold(0.0, |a, b| a + b), choices)
    }

    /// Minimal cover with the chosen cubes.
    pub fn cover_with_cubes(&self, h: &MeasureFunction, n: u32) -> CoverResult {
        let (value, choices) = self.cover(h, n, true);
        let mut cubes = Vec::new();
        if self.points.is_empty() {
            return CoverResult { value, cubes };
        }
        // Walk top down: a node is emitted if it is taken and no ancestor was.
        let top = self.max_level() as usize;
        let mut active: Vec<(usize, usize)> = (0..self.counts[top]).map(|j| (top, j)).collect();
        while let Some((k, j)) = active.pop() {
            let first = self.first_point(k, j);
            if k == 0 || choices[k - 1][j] {
                cubes.push(crate::geometry::dyadic_containing(&self.points[first], k as u32));
                continue;
            }
            let ends = &self.child_end[k];
            let start = if j == 0 { 0 } else { ends[j - 1] as usize };
            for c in start..ends[j] as usize {
                active.push((k - 1, c));
            }
        }
        cubes.sort();
        CoverResult { value, cubes }
    }

    fn first_point(&self, mut k: usize, mut j: usize) -> usize {
        while k > 0 {
            j = if j == 0 { 0 } else { self.child_end[k][j - 1] as usize };
            k -= 1;
        }
        j
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// `ν̃_h(A, S_n)`: exact minimum over covers of `A ∩ S_n` by dyadic cubes.
///
/// Levels above `n - 1` never help: any dyadic cube meets `V_n` in at most
/// one of its level-`(n-1)` dyadic halves.
pub fn nu_dyadic(points: &[LatticePoint], n: u32, h: &MeasureFunction) -> Result<CoverResult, FractalError> {
    let shell = restrict_to_shell(points, n);
    Ok(DyadicTree::build(&shell, n.saturating_sub(1))?.cover_with_cubes(h, n))
}

/// `sum_{n=1}^N ν̃_h(A, S_n)`.
pub fn m_h_partial(points: &[LatticePoint], h: &MeasureFunction, n_max: u32) -> Result<f64, FractalError> {
    let mut total = 0.0;
    for n in 1..=n_max {
        total += nu_dyadic(points, n, h)?.value;
    }
    Ok(total)
}

/// Largest admissible packing level `⌊(1 - ε) n⌋`.
pub fn max_pack_level(n: u32, epsilon: f64) -> u32 {
    ((1.0 - epsilon) * n as f64 + 1e-9).floor().max(0.0) as u32
}

/// Greedy semi-dyadic packing of a point set in one shell. The selection does
/// not depend on `h`; evaluate it with [`Packing::value`].
#[derive(Clone, Debug)]
pub struct Packing {
    pub n: u32,
    pub cubes: Vec<(LatticePoint, u32)>,
}

impl Packing {
    /// `shell_points` must already be restricted to `S_n` and sorted.
    pub fn greedy(shell_points: &[LatticePoint], n: u32, epsilon: f64) -> Result<Self, FractalError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(FractalError::BadEpsilon(epsilon));
        }
        check_range(shell_points)?;
        let top = max_pack_level(n, epsilon);
        let Some(first) = shell_points.first() else {
            return Ok(Packing { n, cubes: Vec::new() });
        };
        let d = first.dim();
        // Accepted cubes of level k >= 1 are unions of 2^d dyadic cubes of
        // level k - 1; those components are stored here. A candidate of
        // level k overlaps an accepted cube iff one of its own level k - 1
        // components has a blocked ancestor.
        let mut blocked: FxHashSet<(u32, LatticePoint)> = FxHashSet::default();
        let is_blocked = |blocked: &FxHashSet<(u32, LatticePoint)>, q: &LatticePoint, from: u32| {
            (from..top).any(|j| blocked.contains(&(j, crate::geometry::dyadic_containing(q, j).anchor)))
        };
        let mut alive: Vec<LatticePoint> = shell_points.to_vec();
        let mut cubes = Vec::new();
        for k in (0..=top).rev() {
            let mut still = Vec::with_capacity(alive.len());
            for x in alive {
                if k == 0 {
                    if !is_blocked(&blocked, &x, 0) {
                        cubes.push((x, 0));
                    }
                    continue;
                }
                // The candidate contains x, so a blocked x rules it out.
                if is_blocked(&blocked, &x, k - 1) {
                    continue;
                }
                let center = closest_semi_dyadic(&x, k).expect("k >= 1").center;
                let s = 1i32 << (k - 1);
                let corner = center.offset(&vec![-s; d]);
                let comps: Vec<LatticePoint> = (0..1usize << d)
                    .map(|b| {
                        let mut q = corner;
                        for i in 0..d {
                            if b >> i & 1 == 1 {
                                q = q.step(i, s);
                            }
                        }
                        q
                    })
                    .collect();
                if comps.iter().any(|q| is_blocked(&blocked, q, k - 1)) {
                    still.push(x);
                    continue;
                }
                for q in comps {
                    blocked.insert((k - 1, q));
                }
                cubes.push((x, k));
            }
            alive = still;
        }
        Ok(Packing { n, cubes })
    }

    pub fn value(&self, h: &MeasureFunction) -> f64 {
        self.cubes.iter().fold(0.0, |acc, &(_, k)| acc + h.eval(2f64.powi(k as i32 - self.n as i32)))
    }
}

/// `τ̃_h(A, S_n, ε)` by greedy packing, with an optimality certificate for
/// small instances.
pub fn tau_pack(points: &[LatticePoint], n: u32, epsilon: f64, h: &MeasureFunction) -> Result<PackResult, FractalError> {
    let shell = restrict_to_shell(points, n);
    let packing = Packing::greedy(&shell, n, epsilon)?;
    let value = packing.value(h);
    let exact = if shell.len() <= EXACT_PACK_LIMIT {
        let best = exhaustive_pack_value(&shell, n, epsilon, h)?;
        value >= best * (1.0 - 1e-12)
    } else {
        false
    };
    Ok(PackResult { value, cubes: packing.cubes, exact })
}

/// `sum_{n=1}^N τ̃_h(A, S_n, ε)`.
pub fn p_h_partial(points: &[LatticePoint], epsilon: f64, h: &MeasureFunction, n_max: u32) -> Result<f64, FractalError> {
    let mut total = 0.0;
    for n in 1..=n_max {
        let shell = restrict_to_shell(points, n);
        total += Packing::greedy(&shell, n, epsilon)?.value(h);
    }
    Ok(total)
}

/// Exhaustive optimum over packings by cubes `Ṽ(x, 2^k)`, `x` in the set,
/// `k <= ⌊(1-ε)n⌋`. Exponential; limited to [`EXACT_PACK_LIMIT`] points.
pub fn exhaustive_pack_value(
    shell_points: &[LatticePoint],
    n: u32,
    epsilon: f64,
    h: &MeasureFunction,
) -> Result<f64, FractalError> {
    if shell_points.len() > EXACT_PACK_LIMIT {
        return Err(FractalError::TooLarge(shell_points.len()));
    }
    let top = max_pack_level(n, epsilon);
    let options: Vec<Vec<(crate::geometry::Cube, f64)>> = shell_points
        .iter()
        .map(|x| {
            (0..=top)
                .map(|k| (packing_cube(x, k), h.eval(2f64.powi(k as i32 - n as i32))))
                .collect()
        })
        .collect();
    let best_single = h.eval(2f64.powi(top as i32 - n as i32));
    fn search(
        i: usize,
        options: &[Vec<(crate::geometry::Cube, f64)>],
        chosen: &mut Vec<crate::geometry::Cube>,
        value: f64,
        best: &mut f64,
        best_single: f64,
    ) {
        if value + (options.len() - i) as f64 * best_single <= *best {
            return;
        }
        if i == options.len() {
            *best = best.max(value);
            return;
        }
        for (cube, v) in options[i].iter().rev() {
            if chosen.iter().all(|c| !c.intersects(cube)) {
                chosen.push(*cube);
                search(i + 1, options, chosen, value + v, best, best_single);
                chosen.pop();
            }
        }
        search(i + 1, options, chosen, value, best, best_single);
    }
    let mut best = 0.0;
    search(0, &options, &mut Vec::new(), 0.0, &mut best, best_single);
    Ok(best)
}

/// Exhaustive minimum over covers of a small point set (already restricted
/// to `S_n`) by dyadic cubes of level at most `n - 1`. Independent of the
/// tree DP; used to check it.
pub fn exhaustive_dyadic_cover(shell_points: &[LatticePoint], n: u32, h: &MeasureFunction) -> Result<f64, FractalError> {
    if shell_points.len() > EXACT_PACK_LIMIT {
        return Err(FractalError::TooLarge(shell_points.len()));
    }
    fn search(rest: &[LatticePoint], n: u32, h: &MeasureFunction, value: f64, best: &mut f64) {
        if value >= *best {
            return;
        }
        let Some(first) = rest.first() else {
            *best = value;
            return;
        };
        for k in 0..n.max(1) {
            let q = crate::geometry::dyadic_containing(first, k);
            let left: Vec<LatticePoint> = rest.iter().copied().filter(|p| !q.contains(p)).collect();
            search(&left, n, h, value + h.eval(2f64.powi(k as i32 - n as i32)), best);
        }
    }
    let mut best = f64::INFINITY;
    search(shell_points, n, h, 0.0, &mut best);
    Ok(if shell_points.is_empty() { 0.0 } else { best })
}

/// `ν_h(A, S_n)` over arbitrary axis-parallel cubes, by dynamic programming
/// over set partitions (each block is covered by its bounding cube).
/// Exponential; limited to [`EXACT_PACK_LIMIT`] points.
pub fn nu_general_exact(shell_points: &[LatticePoint], n: u32, h: &MeasureFunction) -> Result<f64, FractalError> {
    let m = shell_points.len();
    if m > EXACT_PACK_LIMIT {
        return Err(FractalError::TooLarge(m));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let full = (1usize << m) - 1;
    let scale = 2f64.powi(-(n as i32));
    let block_cost: Vec<f64> = (0..=full)
        .map(|s| {
            if s == 0 {
                return 0.0;
            }
            let pts: Vec<LatticePoint> = (0..m).filter(|i| s >> i & 1 == 1).map(|i| shell_points[i]).collect();
            h.eval(side_of(&pts).expect("nonempty") as f64 * scale)
        })
        .collect();
    let mut best = vec![f64::INFINITY; full + 1];
    best[0] = 0.0;
    for s in 1..=full {
        let low = s & s.wrapping_neg();
        let rest = s ^ low;
        // Enumerate blocks containing the lowest element of s.
        let mut sub = rest;
        loop {
            let block = sub | low;
            let v = block_cost[block] + best[s ^ block];
            if v < best[s] {
                best[s] = v;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(best[full])
}

/// How the slope curve was resolved into an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingStatus {
    /// Interpolated between two grid values.
    Crossing,
    /// Every slope negative, but the upper tail of the slope curve crosses
    /// zero when extended linearly; the estimate is that root.
    Extrapolated,
    /// Every slope negative and the tail extrapolates to zero or below; the
    /// estimate is the lower boundary 0.
    AllNegative,
    /// No slope negative; the estimate is the largest grid value.
    AllNonNegative,
}

/// One row of the slope table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub alpha: f64,
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub alpha_hat: f64,
    pub stderr: f64,
    pub status: CrossingStatus,
    pub slopes: Vec<SlopeRow>,
}

/// Per-shell values of a measure for several exponents:
/// `values[a][s]` belongs to `alphas[a]` and `shells[s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellTable {
    pub alphas: Vec<f64>,
    pub shells: Vec<u32>,
    pub values: Vec<Vec<f64>>,
}

/// Root of the line fitted to the upper quarter of the slope table.
fn tail_root(slopes: &[SlopeRow], flat_tol: f64) -> (f64, f64) {
    let m = (slopes.len() / 4).max(2).min(slopes.len());
    let tail = &slopes[slopes.len() - m..];
    let x: Vec<f64> = tail.iter().map(|r| r.alpha).collect();
    let y: Vec<f64> = tail.iter().map(|r| r.slope + flat_tol).collect();
    let (b, _) = linear_slope(&x, &y);
    let mx = x.iter().sum::<f64>() / m as f64;
    let my = y.iter().sum::<f64>() / m as f64;
    if b >= 0.0 {
        return (0.0, 0.0);
    }
    let root = mx - my / b;
    let se_mean = tail.iter().map(|r| r.stderr).sum::<f64>() / m as f64;
    (root.max(0.0), se_mean / b.abs())
}

/// Least squares fit `y = a + b x`; returns `(b, stderr(b))`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let se = if x.len() > 2 { (rss / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    (b, se)
}

/// Slopes of `log2 value` against `n` for each exponent, and the exponent at
/// which the slope changes sign.
///
/// Covering slopes are flat (about 0) below the dimension and fall off
/// linearly above it, so the curve has a kink rather than a clean crossing.
/// Slopes of at least `-flat_tol` count as non-negative, and the estimate
/// interpolates across the last change from non-negative to negative. When
/// every slope is negative the upper tail is extended to its root instead.
pub fn slope_estimate(table: &ShellTable, flat_tol: f64) -> Result<DimEstimate, FractalError> {
    // Use shells where every exponent has a positive value.
    let cols: Vec<usize> = (0..table.shells.len())
        .filter(|&s| table.values.iter().all(|row| row[s] > 0.0))
        .collect();
    if cols.len() < 4 {
        return Err(FractalError::InsufficientShells(cols.len()));
    }
    let x: Vec<f64> = cols.iter().map(|&s| table.shells[s] as f64).collect();
    let slopes: Vec<SlopeRow> = table
        .alphas
        .iter()
        .zip(&table.values)
        .map(|(&alpha, row)| {
            let y: Vec<f64> = cols.iter().map(|&s| row[s].log2()).collect();
            let (slope, stderr) = linear_slope(&x, &y);
            SlopeRow { alpha, slope, stderr }
        })
        .collect();
    let nonneg = |r: &SlopeRow| r.slope >= -flat_tol;
    let last = slopes.windows(2).rposition(|w| nonneg(&w[0]) && !nonneg(&w[1]));
    let (alpha_hat, stderr, status) = match last {
        Some(i) => {
            let (a, b) = (&slopes[i], &slopes[i + 1]);
            let (ya, yb) = (a.slope + flat_tol, b.slope + flat_tol);
            let w = ya / (ya - yb);
            let alpha_hat = a.alpha + w * (b.alpha - a.alpha);
            // Delta method for the root of the interpolating line.
            let dw_dya = -yb / (ya - yb).powi(2);
            let dw_dyb = ya / (ya - yb).powi(2);
            let span = b.alpha - a.alpha;
            let se = span * ((dw_dya * a.stderr).powi(2) + (dw_dyb * b.stderr).powi(2)).sqrt();
            (alpha_hat, se, CrossingStatus::Crossing)
        }
        None if slopes.iter().all(|r| !nonneg(r)) => {
            // A plateau that sits slightly below zero hides the crossing.
            // Above the dimension the slope falls like (g - alpha), so the
            // tail line still locates the root; a set of dimension zero
            // extrapolates to the boundary.
            let (root, se) = tail_root(&slopes, flat_tol);
            if root > slopes[0].alpha {
                (root, se, CrossingStatus::Extrapolated)
            } else {
                (0.0, 0.0, CrossingStatus::AllNegative)
            }
        }
        None => {
            let top = slopes.last().map_or(0.0, |r| r.alpha);
            (top, 0.0, CrossingStatus::AllNonNegative)
        }
    };
    Ok(DimEstimate { alpha_hat, stderr, status, slopes })
}

/// Per-shell cover and packing tables of a point set for a grid of
/// exponents `h = r^alpha`.
pub fn shell_tables(
    shells: &[(u32, Vec<LatticePoint>)],
    alphas: &[f64],
    epsilon: f64,
) -> Result<(ShellTable, ShellTable), FractalError> {
    let mut nu = vec![vec![0.0; shells.len()]; alphas.len()];
    let mut tau = vec![vec![0.0; shells.len()]; alphas.len()];
    for (s, (n, pts)) in shells.iter().enumerate() {
        debug_assert!(pts.iter().all(|p| shell_index(p) == *n));
        let tree = DyadicTree::build(pts, n.saturating_sub(1))?;
        let mut sorted = pts.clone();
        sorted.sort_unstable();
        sorted.dedup();
        let packing = Packing::greedy(&sorted, *n, epsilon)?;
        for (a, &alpha) in alphas.iter().enumerate() {
            let h = MeasureFunction::Alpha(alpha);
            nu[a][s] = tree.cover_value(&h, *n);
            tau[a][s] = packing.value(&h);
        }
    }
    let ns: Vec<u32> = shells.iter().map(|s| s.0).collect();
    Ok((
        ShellTable { alphas: alphas.to_vec(), shells: ns.clone(), values: nu },
        ShellTable { alphas: alphas.to_vec(), shells: ns, values: tau },
    ))
}

/// Default flatness tolerance for covering slopes.
pub const DEFAULT_FLAT_TOL: f64 = 0.0;

/// Hausdorff-type estimate from a cover table.
pub fn dim_estimate(table: &ShellTable) -> Result<DimEstimate, FractalError> {
    slope_estimate(table, DEFAULT_FLAT_TOL)
}

/// Packing-type estimate from a packing table.
pub fn dimp_estimate(table: &ShellTable) -> Result<DimEstimate, FractalError> {
    slope_estimate(table, 0.0)
}

/// Evenly spaced grid `lo, lo + step, ..., <= hi`.
pub fn alpha_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let m = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=m).map(|i| lo + step * i as f64).collect()
}
