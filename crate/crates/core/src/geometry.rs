//! Boxes, dyadic shells and the cube families used by the fractal
//! dimensions.
//!
//! `V(x, r)` is the box of side `r` "centred" at `x`:
//! `{y : x_i - r/2 <= y_i < x_i + r/2}`, which has exactly `r^d` points.
//! `V_n = V(0, 2^n) = [-2^{n-1}, 2^{n-1})^d` and the shells are
//! `S_1 = V_1`, `S_n = V_n \ V_{n-1}`.

use crate::environment::{LatticePoint, MAX_DIM};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("side length must be positive")]
    EmptyCube,
    #[error("semi-dyadic level must be >= 1")]
    LevelTooSmall,
    #[error("point set is empty")]
    EmptySet,
    #[error("shell index must be >= 1")]
    InvalidShell,
}

/// Half-open axis-parallel cube `[corner, corner + side)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cube {
    corner: LatticePoint,
    side: i64,
}

impl Cube {
    pub fn new(corner: LatticePoint, side: i64) -> Result<Self, GeometryError> {
        if side <= 0 {
            return Err(GeometryError::EmptyCube);
        }
        Ok(Cube { corner, side })
    }

    /// `V(x, r)`.
    pub fn centered(x: &LatticePoint, r: i64) -> Result<Self, GeometryError> {
        if r <= 0 {
            return Err(GeometryError::EmptyCube);
        }
        let h = (r / 2) as i32;
        let mut corner = *x;
        for i in 0..x.dim() {
            corner = corner.with_coord(i, x.coord(i) - h);
        }
        Ok(Cube { corner, side: r })
    }

    /// `V_n = V(0, 2^n)`.
    pub fn v_n(dim: usize, n: u32) -> Self {
        Self::centered(&LatticePoint::origin(dim), 1 << n).expect("positive side")
    }

    pub fn corner(&self) -> LatticePoint {
        self.corner
    }

    pub fn side(&self) -> i64 {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.corner.dim()
    }

    pub fn cardinality(&self) -> u128 {
        (self.side as u128).pow(self.dim() as u32)
    }

    #[inline]
    pub fn contains(&self, y: &LatticePoint) -> bool {
        (0..self.dim()).all(|i| {
            let d = y.coord(i) as i64 - self.corner.coord(i) as i64;
            (0..self.side).contains(&d)
        })
    }

    pub fn intersects(&self, other: &Cube) -> bool {
        (0..self.dim()).all(|i| {
            let a0 = self.corner.coord(i) as i64;
            let b0 = other.corner.coord(i) as i64;
            a0 < b0 + other.side && b0 < a0 + self.side
        })
    }

    pub fn contains_cube(&self, other: &Cube) -> bool {
        (0..self.dim()).all(|i| {
            let a0 = self.corner.coord(i) as i64;
            let b0 = other.corner.coord(i) as i64;
            b0 >= a0 && b0 + other.side <= a0 + self.side
        })
    }

    /// All points, in lexicographic order. Intended for small cubes.
    pub fn points(&self) -> Vec<LatticePoint> {
        let d = self.dim();
        let mut out = Vec::new();
        let mut off = [0i64; MAX_DIM];
        loop {
            let mut p = self.corner;
            for i in 0..d {
                p = p.with_coord(i, (self.corner.coord(i) as i64 + off[i]) as i32);
            }
            out.push(p);
            let mut i = d;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                off[i] += 1;
                if off[i] < self.side {
                    break;
                }
                off[i] = 0;
            }
        }
    }
}

/// Index `n >= 1` of the shell `S_n` containing `x`.
pub fn shell_index(x: &LatticePoint) -> u32 {
    // x is in V_n iff max_i m_i <= 2^{n-1}, with m_i = x_i + 1 or -x_i.
    let m = x
        .coords()
        .iter()
        .map(|&c| if c >= 0 { c as u64 + 1 } else { (-(c as i64)) as u64 })
        .max()
        .unwrap_or(1);
    let ceil_log2 = 64 - (m - 1).leading_zeros();
    ceil_log2 + 1
}

/// Whether `x` lies in the shell `S_n`.
pub fn in_shell(x: &LatticePoint, n: u32) -> bool {
    shell_index(x) == n
}

/// Dyadic cube `[anchor, anchor + 2^level)^d` with `anchor` in `2^level Z^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub level: u32,
    pub anchor: LatticePoint,
}

impl DyadicCube {
    pub fn cube(&self) -> Cube {
        Cube { corner: self.anchor, side: 1 << self.level }
    }

    pub fn contains(&self, y: &LatticePoint) -> bool {
        dyadic_containing(y, self.level).anchor == self.anchor
    }
}

/// The unique level-`k` dyadic cube containing `x`.
#[inline]
pub fn dyadic_containing(x: &LatticePoint, k: u32) -> DyadicCube {
    let mut a = *x;
    for i in 0..x.dim() {
        // Arithmetic shifts round toward negative infinity.
        a = a.with_coord(i, (x.coord(i) >> k) << k);
    }
    DyadicCube { level: k, anchor: a }
}

/// Semi-dyadic cube `V(center, 2^level)` with `center` in
/// `2^{level-1} Z^d`, `level >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SemiDyadicCube {
    pub level: u32,
    pub center: LatticePoint,
}

impl SemiDyadicCube {
    pub fn cube(&self) -> Cube {
        Cube::centered(&self.center, 1 << self.level).expect("positive side")
    }
}

/// The semi-dyadic cube of side `2^k` whose center is closest to `x` in the
/// sup norm. Ties are broken toward the smaller center in every coordinate,
/// which is also the lexicographically smallest closest center.
pub fn closest_semi_dyadic(x: &LatticePoint, k: u32) -> Result<SemiDyadicCube, GeometryError> {
    if k == 0 {
        return Err(GeometryError::LevelTooSmall);
    }
    let s = 1i64 << (k - 1);
    let mut c = *x;
    for i in 0..x.dim() {
        // Round x_i / s half down: ceil((2 x_i - s) / (2 s)).
        let num = 2 * x.coord(i) as i64 - s;
        let q = -((-num).div_euclid(2 * s));
        c = c.with_coord(i, (q * s) as i32);
    }
    Ok(SemiDyadicCube { level: k, center: c })
}

/// `Ṽ(x, 2^k)`: the closest semi-dyadic cube for `k >= 1` and `{x}` for
/// `k = 0`.
pub fn packing_cube(x: &LatticePoint, k: u32) -> Cube {
    if k == 0 {
        Cube { corner: *x, side: 1 }
    } else {
        closest_semi_dyadic(x, k).expect("k >= 1").cube()
    }
}

/// Side of the smallest cube containing `A`: `max_i (max x_i - min x_i) + 1`.
pub fn side_of(points: &[LatticePoint]) -> Result<i64, GeometryError> {
    let first = points.first().ok_or(GeometryError::EmptySet)?;
    let d = first.dim();
    let mut lo = [i64::MAX; MAX_DIM];
    let mut hi = [i64::MIN; MAX_DIM];
    for p in points {
        for i in 0..d {
            let c = p.coord(i) as i64;
            lo[i] = lo[i].min(c);
            hi[i] = hi[i].max(c);
        }
    }
    Ok((0..d).map(|i| hi[i] - lo[i]).max().unwrap_or(0) + 1)
}

/// `A ∩ S_n`, deduplicated and sorted lexicographically.
pub fn restrict_to_shell(points: &[LatticePoint], n: u32) -> Vec<LatticePoint> {
    let mut v: Vec<LatticePoint> = points.iter().copied().filter(|p| shell_index(p) == n).collect();
    v.sort_unstable();
    v.dedup();
    v
}
