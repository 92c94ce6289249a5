//! Lattice points, edges and random environments on `Z^d`.
//!
//! Conductances are never stored. Each value is a pure function of the
//! environment seed and the canonical edge (or site) key, computed with a
//! counter-based hash, so an environment can be queried at any point of the
//! lattice in any order and always returns the same value.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Largest supported lattice dimension.
///
/// The hash key packs every coordinate into 21 bits plus a 3-bit axis field,
/// which fits a `u128` for `d <= 5`.
pub const MAX_DIM: usize = 5;
const _: () = assert!(MAX_DIM * 21 + 3 <= 128);

/// Coordinates must satisfy `|x_i| < COORD_LIMIT`.
pub const COORD_LIMIT: i32 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("dimension {0} is not supported (expected 1..={MAX_DIM})")]
    UnsupportedDimension(usize),
    #[error("invalid conductance law: {0}")]
    InvalidLaw(String),
    #[error("invalid trap exponent a = {0} (expected 0 <= a <= 1)")]
    InvalidExponent(f64),
    #[error("{0} and {1} are not nearest neighbours")]
    NotNeighbors(LatticePoint, LatticePoint),
    #[error("coordinate of {0} outside the addressable range |x_i| < 2^20")]
    CoordinateOutOfRange(LatticePoint),
    #[error("dimension mismatch: environment has d = {expected}, point has d = {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation requires a trap (BTM) environment")]
    WrongModel,
}

/// A point of `Z^d` with `1 <= d <= MAX_DIM`.
///
/// Ordering is lexicographic in the coordinates (points of different
/// dimension compare by dimension first).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl LatticePoint {
    /// Panics if `coords.len()` is 0 or exceeds [`MAX_DIM`].
    pub fn new(coords: &[i32]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "lattice dimension must be in 1..={MAX_DIM}"
        );
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        LatticePoint { dim: coords.len() as u8, coords: c }
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(&vec![0; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, i: usize) -> i32 {
        self.coords[i]
    }

    #[inline]
    pub fn with_coord(mut self, i: usize, v: i32) -> Self {
        self.coords[i] = v;
        self
    }

    /// `self + sign * e_axis`.
    #[inline]
    pub fn step(mut self, axis: usize, sign: i32) -> Self {
        self.coords[axis] += sign;
        self
    }

    pub fn offset(&self, delta: &[i32]) -> Self {
        let mut p = *self;
        for (i, d) in delta.iter().enumerate() {
            p.coords[i] += d;
        }
        p
    }

    pub fn sub(&self, other: &LatticePoint) -> Vec<i32> {
        self.coords().iter().zip(other.coords()).map(|(a, b)| a - b).collect()
    }

    pub fn linf_norm(&self) -> i64 {
        self.coords().iter().map(|c| (*c as i64).abs()).max().unwrap_or(0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.coords().iter().map(|c| (*c as f64).powi(2)).sum::<f64>().sqrt()
    }

    pub fn l2_dist(&self, other: &LatticePoint) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// The axis along which `other` is adjacent, if it is a nearest neighbour.
    pub fn neighbor_axis(&self, other: &LatticePoint) -> Option<usize> {
        if self.dim != other.dim {
            return None;
        }
        let mut axis = None;
        for i in 0..self.dim() {
            match (self.coords[i] as i64 - other.coords[i] as i64).abs() {
                0 => {}
                1 if axis.is_none() => axis = Some(i),
                _ => return None,
            }
        }
        axis
    }

    pub fn in_range(&self) -> bool {
        self.coords().iter().all(|c| c.abs() < COORD_LIMIT)
    }

    /// Iterator over the `2d` nearest neighbours, ordered `(axis 0, -1),
    /// (axis 0, +1), (axis 1, -1), ...`.
    pub fn neighbors(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..self.dim()).flat_map(move |i| [self.step(i, -1), self.step(i, 1)])
    }
}

impl std::hash::Hash for LatticePoint {
    #[inline]
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        // Injective on the addressable range; collisions outside it are
        // harmless.
        state.write_u128(site_key(self) ^ ((self.dim as u128) << 120));
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// An undirected nearest-neighbour edge `{lo, lo + e_axis}`.
///
/// `lo` is always the lexicographically smaller endpoint, which makes the
/// representation canonical.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    lo: LatticePoint,
    axis: u8,
}

impl Edge {
    pub fn lo(&self) -> LatticePoint {
        self.lo
    }

    pub fn hi(&self) -> LatticePoint {
        self.lo.step(self.axis as usize, 1)
    }

    pub fn axis(&self) -> usize {
        self.axis as usize
    }

    pub fn endpoints(&self) -> (LatticePoint, LatticePoint) {
        (self.lo, self.hi())
    }
}

/// Canonical form of the edge between two nearest neighbours.
pub fn canonical_edge(x: &LatticePoint, y: &LatticePoint) -> Result<Edge, EnvError> {
    let axis = x.neighbor_axis(y).ok_or(EnvError::NotNeighbors(*x, *y))?;
    for p in [x, y] {
        if !p.in_range() {
            return Err(EnvError::CoordinateOutOfRange(*p));
        }
    }
    let lo = if x < y { *x } else { *y };
    Ok(Edge { lo, axis: axis as u8 })
}

/// Distribution of i.i.d. conductances (or trap depths). All supported laws
/// live on `[1, inf)`, so conductances are bounded below by 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum ConductanceLaw {
    /// Every value equals `value`.
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `P(X > s) = s^{-shape}` for `s >= 1`.
    Pareto { shape: f64 },
    /// `high` with probability `prob`, otherwise 1.
    TwoPoint { high: f64, prob: f64 },
}

impl ConductanceLaw {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidLaw(m));
        match *self {
            ConductanceLaw::Constant { value } if !(value >= 1.0 && value.is_finite()) => {
                bad(format!("constant value {value} must be finite and >= 1"))
            }
            ConductanceLaw::Uniform { lo, hi } if !(lo >= 1.0 && hi > lo && hi.is_finite()) => {
                bad(format!("uniform support [{lo}, {hi}] must satisfy 1 <= lo < hi"))
            }
            ConductanceLaw::Pareto { shape } if !(shape > 0.0 && shape.is_finite()) => {
                bad(format!("pareto shape {shape} must be positive"))
            }
            ConductanceLaw::TwoPoint { high, prob }
                if !(high >= 1.0 && high.is_finite() && (0.0..=1.0).contains(&prob)) =>
            {
                bad(format!("two-point law needs high >= 1 and prob in [0,1], got {high}, {prob}"))
            }
            _ => Ok(()),
        }
    }

    /// Quantile function evaluated at `u` in `(0, 1)`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            ConductanceLaw::Constant { value } => value,
            ConductanceLaw::Uniform { lo, hi } => lo + (hi - lo) * u,
            ConductanceLaw::Pareto { shape } => u.powf(-1.0 / shape),
            ConductanceLaw::TwoPoint { high, prob } => {
                if u < prob {
                    high
                } else {
                    1.0
                }
            }
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ConductanceLaw::Constant { value } => (x >= value) as u8 as f64,
            ConductanceLaw::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            ConductanceLaw::Pareto { shape } => {
                if x < 1.0 {
                    0.0
                } else {
                    1.0 - x.powf(-shape)
                }
            }
            ConductanceLaw::TwoPoint { high, prob } => {
                if x < 1.0 {
                    0.0
                } else if x < high {
                    1.0 - prob
                } else {
                    1.0
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ConductanceLaw::Constant { .. })
    }
}

/// Which random walk model the environment describes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Model {
    /// Random conductance model: i.i.d. edge conductances.
    Rcm { law: ConductanceLaw },
    /// Bouchaud trap model: i.i.d. trap depths `kappa_x`, symmetric
    /// conductances `kappa_x^a kappa_y^a` and jump rates
    /// `kappa_x^{a-1} kappa_y^a`.
    Btm { a: f64, law: ConductanceLaw },
}

const EDGE_TAG: u64 = 0x6564_6765_5f63_6f6e; // "edge_con"
const SITE_TAG: u64 = 0x7369_7465_5f6b_6170; // "site_kap"

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform variate in the open interval `(0, 1)` determined by a premixed
/// `(seed, tag)` pair and the key.
#[inline]
fn keyed_uniform(premixed: u64, key: u128) -> f64 {
    let h = mix64(premixed ^ (key as u64));
    let h = mix64(h.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ ((key >> 64) as u64));
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn site_key(x: &LatticePoint) -> u128 {
    let mut k = 0u128;
    for &c in x.coords() {
        k = (k << 21) | ((c + COORD_LIMIT) as u32 as u128 & 0x1f_ffff);
    }
    k
}

#[inline]
fn edge_key(e: &Edge) -> u128 {
    (site_key(&e.lo) << 3) | e.axis as u128
}

/// A quenched environment: dimension, seed and model. Cheap to clone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentSpec", into = "EnvironmentSpec")]
pub struct Environment {
    dim: usize,
    seed: u64,
    model: Model,
    edge_mix: u64,
    site_mix: u64,
    weight: TrapWeight,
}

/// How `kappa_x^a` is computed from the site uniform.
#[derive(Clone, Copy, Debug, PartialEq)]
enum TrapWeight {
    Unit,
    Constant(f64),
    /// Pareto depths: `kappa^a = u^p`.
    Power(f64),
    General,
}

/// Serialized form of an [`Environment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub dim: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub model: Model,
}

impl TryFrom<EnvironmentSpec> for Environment {
    type Error = EnvError;
    fn try_from(s: EnvironmentSpec) -> Result<Self, EnvError> {
        Environment::new(s.dim, s.seed, s.model)
    }
}

impl From<Environment> for EnvironmentSpec {
    fn from(e: Environment) -> Self {
        EnvironmentSpec { dim: e.dim, seed: e.seed, model: e.model }
    }
}

impl Environment {
    pub fn new(dim: usize, seed: u64, model: Model) -> Result<Self, EnvError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(EnvError::UnsupportedDimension(dim));
        }
        match &model {
            Model::Rcm { law } => law.validate()?,
            Model::Btm { a, law } => {
                law.validate()?;
                if !(0.0..=1.0).contains(a) {
                    return Err(EnvError::InvalidExponent(*a));
                }
            }
        }
        let weight = match model {
            Model::Rcm { .. } => TrapWeight::Unit,
            Model::Btm { a, .. } if a == 0.0 => TrapWeight::Unit,
            Model::Btm { a, law: ConductanceLaw::Constant { value } } => TrapWeight::Constant(value.powf(a)),
            Model::Btm { a, law: ConductanceLaw::Pareto { shape } } => TrapWeight::Power(-a / shape),
            Model::Btm { .. } => TrapWeight::General,
        };
        Ok(Environment {
            dim,
            seed,
            model,
            edge_mix: mix64(seed ^ EDGE_TAG),
            site_mix: mix64(seed ^ SITE_TAG),
            weight,
        })
    }

    /// Shorthand for the RCM with i.i.d. conductances.
    pub fn rcm(dim: usize, seed: u64, law: ConductanceLaw) -> Result<Self, EnvError> {
        Self::new(dim, seed, Model::Rcm { law })
    }

    pub fn btm(dim: usize, seed: u64, a: f64, law: ConductanceLaw) -> Result<Self, EnvError> {
        Self::new(dim, seed, Model::Btm { a, law })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Same environment with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Environment::new(self.dim, seed, self.model.clone()).expect("already validated")
    }

    /// Conductance of a single edge, `mu_e >= 1`.
    #[inline]
    pub fn conductance(&self, e: &Edge) -> f64 {
        match &self.model {
            Model::Rcm { law: ConductanceLaw::Constant { value } } => *value,
            Model::Rcm { law } => law.quantile(keyed_uniform(self.edge_mix, edge_key(e))),
            Model::Btm { .. } => {
                let (x, y) = e.endpoints();
                self.weight_of(&x) * self.weight_of(&y)
            }
        }
    }

    #[inline]
    fn weight_of(&self, x: &LatticePoint) -> f64 {
        match self.weight {
            TrapWeight::Unit => 1.0,
            TrapWeight::Constant(w) => w,
            TrapWeight::Power(p) => {
                let u = keyed_uniform(self.site_mix, site_key(x));
                if p == -1.0 {
                    1.0 / u
                } else if p == -2.0 {
                    1.0 / (u * u)
                } else {
                    u.powf(p)
                }
            }
            TrapWeight::General => {
                let Model::Btm { a, .. } = self.model else { unreachable!() };
                self.trap_depth(x).powf(a)
            }
        }
    }

    /// Conductance between two nearest neighbours.
    pub fn conductance_between(&self, x: &LatticePoint, y: &LatticePoint) -> Result<f64, EnvError> {
        self.check_point(x)?;
        Ok(self.conductance(&canonical_edge(x, y)?))
    }

    /// Trap depth `kappa_x`. For the RCM this is 1 everywhere.
    #[inline]
    pub fn trap_depth(&self, x: &LatticePoint) -> f64 {
        match &self.model {
            Model::Rcm { .. } => 1.0,
            Model::Btm { law, .. } => match law {
                ConductanceLaw::Constant { value } => *value,
                _ => law.quantile(keyed_uniform(self.site_mix, site_key(x))),
            },
        }
    }

    /// `kappa_x^a` for the trap model, so that `mu_xy = W_x W_y`; `None` for
    /// the RCM.
    #[inline]
    pub fn trap_weight(&self, x: &LatticePoint) -> Option<f64> {
        match &self.model {
            Model::Btm { .. } => Some(self.weight_of(x)),
            Model::Rcm { .. } => None,
        }
    }

    /// Conductances of the `2d` edges at `x`, in [`LatticePoint::neighbors`]
    /// order, written into `out[..2d]`. Returns their sum `mu_x`.
    #[inline]
    pub fn local_conductances(&self, x: &LatticePoint, out: &mut [f64; 2 * MAX_DIM]) -> f64 {
        let n = 2 * self.dim;
        match &self.model {
            Model::Rcm { law: ConductanceLaw::Constant { value } } => {
                out[..n].fill(*value);
                return *value * n as f64;
            }
            Model::Btm { .. } => {
                if let TrapWeight::Unit | TrapWeight::Constant(_) = self.weight {
                    let c = self.weight_of(x) * self.weight_of(x);
                    out[..n].fill(c);
                    return c * n as f64;
                }
                let kx = self.weight_of(x);
                let mut total = 0.0;
                for (k, y) in x.neighbors().enumerate() {
                    let c = kx * self.weight_of(&y);
                    out[k] = c;
                    total += c;
                }
                return total;
            }
            Model::Rcm { law } => {
                let base = site_key(x);
                let mut total = 0.0;
                for i in 0..self.dim {
                    let shift = 21 * (self.dim - 1 - i);
                    let below = base - (1u128 << shift);
                    for (s, lo) in [below, base].into_iter().enumerate() {
                        let c = law.quantile(keyed_uniform(self.edge_mix, (lo << 3) | i as u128));
                        out[2 * i + s] = c;
                        total += c;
                    }
                }
                total
            }
        }
    }

    /// Total conductance `mu_x = sum_y mu_xy`.
    pub fn total_conductance(&self, x: &LatticePoint) -> f64 {
        let mut buf = [0.0; 2 * MAX_DIM];
        self.local_conductances(x, &mut buf)
    }

    /// Trap-model jump rate `w_xy = kappa_x^{a-1} kappa_y^a`.
    pub fn btm_rate(&self, x: &LatticePoint, y: &LatticePoint) -> Result<f64, EnvError> {
        let Model::Btm { a, .. } = &self.model else {
            return Err(EnvError::WrongModel);
        };
        self.check_point(x)?;
        canonical_edge(x, y)?;
        Ok(self.trap_depth(x).powf(a - 1.0) * self.trap_depth(y).powf(*a))
    }

    pub fn check_point(&self, x: &LatticePoint) -> Result<(), EnvError> {
        if x.dim() != self.dim {
            return Err(EnvError::DimensionMismatch { expected: self.dim, found: x.dim() });
        }
        if !x.in_range() {
            return Err(EnvError::CoordinateOutOfRange(*x));
        }
        Ok(())
    }
}
