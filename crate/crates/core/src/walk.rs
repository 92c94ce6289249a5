//! Continuous-time random walks in a random environment.
//!
//! Both clocks are driven by the same jump chain `P(x, y) = mu_xy / mu_x`.
//! One `Exp(1)` variate `e` is drawn per holding interval; the CSRW holds for
//! `e` and the VSRW for `e / mu_x`, so the two clocks are exact time changes
//! of one another.
//!
//! Walks can be materialised as a [`Trajectory`] or streamed through a
//! [`WalkObserver`], which is how long walks are analysed without storing
//! every jump.

use crate::environment::{EnvError, Environment, LatticePoint, COORD_LIMIT, MAX_DIM};
use crate::geometry::{shell_index, Cube};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Deterministically hashed point set (iteration order does not depend on
/// process state).
pub type PointSet = FxHashSet<LatticePoint>;

/// Jump budget used when none is given.
pub const DEFAULT_JUMP_BUDGET: u64 = 1 << 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("walks are only supported for d >= 3 (got d = {0})")]
    UnsupportedDimension(usize),
    #[error("start point {0} lies outside the exit cube")]
    StartOutsideCube(LatticePoint),
    #[error("jump budget of {0} jumps exhausted before the stop rule fired")]
    ResourceLimit(u64),
    #[error("walk reached {0}, outside the addressable lattice range")]
    CoordinateOutOfRange(LatticePoint),
    #[error("requested time {requested} exceeds the trajectory horizon {horizon}")]
    HorizonExceeded { requested: f64, horizon: f64 },
    #[error("invalid stop rule: {0}")]
    InvalidStopRule(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clock {
    /// Variable speed: holding time at `x` has mean `1 / mu_x`.
    Vsrw,
    /// Constant speed: holding time has mean 1.
    Csrw,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop at the first jump that leaves `V(0, 2^n)`.
    ExitCube(u32),
    /// Stop at time `T` of the walker's clock.
    Horizon(f64),
    /// Stop after this many jumps.
    MaxJumps(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ExitedCube,
    HorizonReached,
    MaxJumpsReached,
}

/// One holding interval of the walk.
///
/// For every interval except the last, the walk sits at `site` during
/// `[vsrw_in, vsrw_out)`. The terminal interval is closed: for a horizon stop
/// it ends at the horizon, for the other rules it has length zero.
#[derive(Clone, Copy, Debug)]
pub struct Visit {
    pub site: LatticePoint,
    pub vsrw_in: f64,
    pub vsrw_out: f64,
    pub csrw_in: f64,
    pub csrw_out: f64,
    pub terminal: bool,
    /// Set for sites reported by a compressed trap excursion. The site was
    /// visited, but the interval only bounds the whole excursion, so such
    /// visits carry no integer-time information.
    pub aggregated: bool,
}

impl Visit {
    /// Integer times `n` at which the walk occupies `site` in the given
    /// clock, as an inclusive range (possibly empty).
    #[inline]
    pub fn integer_times(&self, clock: Clock) -> (u64, u64, bool) {
        let (a, b) = match clock {
            Clock::Vsrw => (self.vsrw_in, self.vsrw_out),
            Clock::Csrw => (self.csrw_in, self.csrw_out),
        };
        if self.aggregated {
            return (0, 0, false);
        }
        let first = a.ceil();
        let last = if self.terminal { b.floor() } else { b.ceil() - 1.0 };
        (first as u64, last.max(0.0) as u64, last >= first)
    }
}

/// Receives the holding intervals of a streamed walk in time order.
pub trait WalkObserver {
    fn visit(&mut self, v: &Visit);
}

impl<F: FnMut(&Visit)> WalkObserver for F {
    fn visit(&mut self, v: &Visit) {
        self(v)
    }
}

/// Observers can be combined as a pair.
impl<A: WalkObserver, B: WalkObserver> WalkObserver for (A, B) {
    fn visit(&mut self, v: &Visit) {
        self.0.visit(v);
        self.1.visit(v);
    }
}

/// Jump distribution at `x`: each neighbour with probability `mu_xy / mu_x`.
pub fn jump_distribution(env: &Environment, x: &LatticePoint) -> Result<Vec<(LatticePoint, f64)>, WalkError> {
    env.check_point(x)?;
    let mut buf = [0.0; 2 * MAX_DIM];
    let total = env.local_conductances(x, &mut buf);
    Ok(x.neighbors().enumerate().map(|(k, y)| (y, buf[k] / total)).collect())
}

#[inline]
fn pick(buf: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    for (k, c) in buf.iter().enumerate() {
        acc += c;
        if target < acc {
            return k;
        }
    }
    // Only reachable through rounding of u * total.
    buf.iter().rposition(|&c| c > 0.0).unwrap_or(buf.len() - 1)
}

#[inline]
fn neighbor_of(x: &LatticePoint, k: usize) -> LatticePoint {
    x.step(k / 2, if k % 2 == 0 { -1 } else { 1 })
}

/// One step of the jump chain from `x`.
pub fn next_site(env: &Environment, x: &LatticePoint, rng: &mut ChaCha8Rng) -> Result<LatticePoint, WalkError> {
    env.check_point(x)?;
    let mut buf = [0.0; 2 * MAX_DIM];
    let total = env.local_conductances(x, &mut buf);
    let k = pick(&buf[..2 * env.dim()], total, rng.gen::<f64>());
    Ok(neighbor_of(x, k))
}

/// Holding time at `x`: `Exp(mu_x)` for the VSRW, `Exp(1)` for the CSRW.
pub fn holding_time(env: &Environment, x: &LatticePoint, clock: Clock, rng: &mut ChaCha8Rng) -> Result<f64, WalkError> {
    env.check_point(x)?;
    let e: f64 = rng.sample(Exp1);
    Ok(match clock {
        Clock::Csrw => e,
        Clock::Vsrw => e / env.total_conductance(x),
    })
}

/// Serializable state of a [`Walker`], used for checkpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkerState {
    pub position: LatticePoint,
    pub vsrw_time: f64,
    pub csrw_time: f64,
    pub jumps: u64,
    /// Simulated steps; differs from `jumps` when trap excursions are
    /// compressed. The jump budget applies to this count.
    #[serde(default)]
    pub steps: u64,
    pub rng: ChaCha8Rng,
}

/// A walk in progress. Drives observers one holding interval at a time.
pub struct Walker<'e> {
    env: &'e Environment,
    clock: Clock,
    state: WalkerState,
    budget: u64,
    trap_threshold: Option<f64>,
    stars: FxHashMap<LatticePoint, Option<Box<Star>>>,
}

impl<'e> Walker<'e> {
    pub fn new(env: &'e Environment, start: LatticePoint, clock: Clock, rng: ChaCha8Rng) -> Result<Self, WalkError> {
        if env.dim() < 3 {
            return Err(WalkError::UnsupportedDimension(env.dim()));
        }
        env.check_point(&start)?;
        Ok(Walker {
            env,
            clock,
            state: WalkerState { position: start, vsrw_time: 0.0, csrw_time: 0.0, jumps: 0, steps: 0, rng },
            budget: DEFAULT_JUMP_BUDGET,
            trap_threshold: None,
            stars: FxHashMap::default(),
        })
    }

    pub fn resume(env: &'e Environment, clock: Clock, state: WalkerState) -> Result<Self, WalkError> {
        let mut w = Self::new(env, state.position, clock, state.rng.clone())?;
        w.state = state;
        Ok(w)
    }

    /// Total number of jumps allowed (counted from the start of the walk).
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    /// Compress excursions from deep traps of a trap-model environment.
    ///
    /// On arrival at a site `y` with `kappa_y^a >= threshold`, the run of
    /// excursions `y -> z -> y -> ...` up to the first step that leaves
    /// `{y} ∪ N(y)` is sampled in one go: the number of excursions is
    /// geometric, the neighbours used by the returning excursions are
    /// multinomial, and the clocks are Gamma distributed. The visited sites,
    /// the exit point, the jump count and both clocks then have exactly the
    /// law of the uncompressed walk; only the interleaving inside the
    /// excursion is lost, so such visits are reported as `aggregated` and do
    /// not contribute to the integer-time skeleton.
    ///
    /// Only used with [`StopRule::ExitCube`] and when the whole star lies in
    /// the cube.
    pub fn with_trap_compression(mut self, threshold: f64) -> Self {
        if self.env.trap_weight(&self.state.position).is_some() {
            self.trap_threshold = Some(threshold);
        }
        self
    }

    pub fn state(&self) -> &WalkerState {
        &self.state
    }

    pub fn position(&self) -> LatticePoint {
        self.state.position
    }

    pub fn jumps(&self) -> u64 {
        self.state.jumps
    }

    /// Run until `stop` fires. `pause_every`, if given, hands control back
    /// after that many jumps with `Ok(None)` so that the caller can write a
    /// checkpoint; calling `run` again continues the same walk.
    pub fn run<O: WalkObserver>(
        &mut self,
        stop: StopRule,
        observer: &mut O,
        pause_every: Option<u64>,
    ) -> Result<Option<StopReason>, WalkError> {
        let exit_cube = match stop {
            StopRule::ExitCube(n) => {
                if n >= 20 {
                    return Err(WalkError::InvalidStopRule(format!("exit cube V(0, 2^{n}) exceeds the lattice range")));
                }
                let c = Cube::v_n(self.env.dim(), n);
                if !c.contains(&self.state.position) && self.state.jumps == 0 {
                    return Err(WalkError::StartOutsideCube(self.state.position));
                }
                Some(c)
            }
            StopRule::Horizon(t) if !(t >= 0.0) => {
                return Err(WalkError::InvalidStopRule(format!("negative horizon {t}")));
            }
            _ => None,
        };
        let d = self.env.dim();
        let pause_at = pause_every.map(|p| self.state.steps + p);
        let mut buf = [0.0; 2 * MAX_DIM];
        let s = &mut self.state;
        loop {
            let terminal = |s: &WalkerState| Visit {
                site: s.position,
                vsrw_in: s.vsrw_time,
                vsrw_out: s.vsrw_time,
                csrw_in: s.csrw_time,
                csrw_out: s.csrw_time,
                terminal: true,
                aggregated: false,
            };
            if let StopRule::MaxJumps(m) = stop {
                if s.jumps >= m {
                    observer.visit(&terminal(s));
                    return Ok(Some(StopReason::MaxJumpsReached));
                }
            }
            if s.steps >= self.budget {
                return Err(WalkError::ResourceLimit(self.budget));
            }
            if pause_at.is_some_and(|p| s.steps >= p) {
                return Ok(None);
            }
            let x = s.position;
            if let (Some(thr), Some(c)) = (self.trap_threshold, &exit_cube) {
                if let Some(exit) = star_excursion(self.env, s, thr, c, &mut self.stars, observer) {
                    s.steps += 1;
                    if !c.contains(&exit) {
                        observer.visit(&terminal(s));
                        return Ok(Some(StopReason::ExitedCube));
                    }
                    continue;
                }
            }
            let total = self.env.local_conductances(&x, &mut buf);
            let e: f64 = s.rng.sample(Exp1);
            let dv = e / total;
            if let StopRule::Horizon(t_end) = stop {
                let (t_now, dt) = match self.clock {
                    Clock::Vsrw => (s.vsrw_time, dv),
                    Clock::Csrw => (s.csrw_time, e),
                };
                if t_now + dt > t_end {
                    let frac = (t_end - t_now).max(0.0);
                    let (vo, co) = match self.clock {
                        Clock::Vsrw => (t_end, s.csrw_time + frac * total),
                        Clock::Csrw => (s.vsrw_time + frac / total, t_end),
                    };
                    observer.visit(&Visit {
                        site: x,
                        vsrw_in: s.vsrw_time,
                        vsrw_out: vo,
                        csrw_in: s.csrw_time,
                        csrw_out: co,
                        terminal: true,
                        aggregated: false,
                    });
                    return Ok(Some(StopReason::HorizonReached));
                }
            }
            let k = pick(&buf[..2 * d], total, s.rng.gen::<f64>());
            let v_out = s.vsrw_time + dv;
            let c_out = s.csrw_time + e;
            observer.visit(&Visit {
                site: x,
                vsrw_in: s.vsrw_time,
                vsrw_out: v_out,
                csrw_in: s.csrw_time,
                csrw_out: c_out,
                terminal: false,
                aggregated: false,
            });
            let y = neighbor_of(&x, k);
            s.position = y;
            s.vsrw_time = v_out;
            s.csrw_time = c_out;
            s.jumps += 1;
            s.steps += 1;
            if y.coord(k / 2).abs() >= COORD_LIMIT - 1 {
                return Err(WalkError::CoordinateOutOfRange(y));
            }
            if let Some(c) = &exit_cube {
                if !c.contains(&y) {
                    observer.visit(&terminal(s));
                    return Ok(Some(StopReason::ExitedCube));
                }
            }
        }
    }

    /// Run to completion without pausing.
    pub fn run_to_end<O: WalkObserver>(&mut self, stop: StopRule, observer: &mut O) -> Result<StopReason, WalkError> {
        Ok(self.run(stop, observer, None)?.expect("no pause requested"))
    }
}

/// Exit and return probabilities of the star `{y} ∪ N(y)` of a deep trap,
/// which depend on the environment only.
struct Star {
    /// `W_z` for the neighbours `z_k` of `y`, in direction order.
    wz: [f64; 2 * MAX_DIM],
    /// `W_v` for `v = z_k + e_j`, zero for `v = y`.
    others: [[f64; 2 * MAX_DIM]; 2 * MAX_DIM],
    other_sum: [f64; 2 * MAX_DIM],
    total_w: f64,
    exit_p: [f64; 2 * MAX_DIM],
    back_p: [f64; 2 * MAX_DIM],
    q: f64,
}

/// Largest escape probability for which a star is compressed.
const MAX_STAR_ESCAPE: f64 = 0.3;
const STAR_CACHE_LIMIT: usize = 1 << 15;

impl Star {
    fn new(env: &Environment, y: &LatticePoint, wy: f64) -> Star {
        let m = 2 * env.dim();
        let w = |p: &LatticePoint| env.trap_weight(p).expect("trap model");
        let mut star = Star {
            wz: [0.0; 2 * MAX_DIM],
            others: [[0.0; 2 * MAX_DIM]; 2 * MAX_DIM],
            other_sum: [0.0; 2 * MAX_DIM],
            total_w: 0.0,
            exit_p: [0.0; 2 * MAX_DIM],
            back_p: [0.0; 2 * MAX_DIM],
            q: 0.0,
        };
        for k in 0..m {
            star.wz[k] = w(&neighbor_of(y, k));
        }
        // y + dir_k + dir_j is shared by z_k and z_j.
        for k in 0..m {
            for j in k..m {
                if j == (k ^ 1) {
                    continue;
                }
                let v = w(&neighbor_of(&neighbor_of(y, k), j));
                star.others[k][j] = v;
                star.others[j][k] = v;
            }
        }
        for k in 0..m {
            star.other_sum[k] = star.others[k][..m].iter().sum();
        }
        star.total_w = star.wz[..m].iter().sum();
        // Excursion through z_k: taken with prob pi_k, ends the run with
        // prob other_sum / (other_sum + wy).
        for k in 0..m {
            let pi = star.wz[k] / star.total_w;
            let sz = star.other_sum[k] + wy;
            star.exit_p[k] = pi * star.other_sum[k] / sz;
            star.back_p[k] = pi * wy / sz;
        }
        star.q = star.exit_p[..m].iter().sum();
        star
    }
}

/// Compressed excursion from a deep trap at the current position (see
/// [`Walker::with_trap_compression`]). Returns the exit point, or `None` when
/// compression does not apply and an ordinary step should be taken.
fn star_excursion<O: WalkObserver>(
    env: &Environment,
    s: &mut WalkerState,
    threshold: f64,
    cube: &Cube,
    cache: &mut FxHashMap<LatticePoint, Option<Box<Star>>>,
    observer: &mut O,
) -> Option<LatticePoint> {
    let y = s.position;
    let wy = env.trap_weight(&y)?;
    if wy < threshold {
        return None;
    }
    let m = 2 * env.dim();
    if !(0..m).all(|k| cube.contains(&neighbor_of(&y, k))) {
        return None;
    }
    if cache.len() >= STAR_CACHE_LIMIT && !cache.contains_key(&y) {
        cache.clear();
    }
    let star = cache
        .entry(y)
        .or_insert_with(|| {
            let st = Star::new(env, &y, wy);
            (st.q <= MAX_STAR_ESCAPE).then(|| Box::new(st))
        })
        .as_deref()?;
    let rng = &mut s.rng;
    let u: f64 = 1.0 - rng.gen::<f64>();
    let excursions = 1 + (u.ln() / (-star.q).ln_1p()).floor().min(1e18) as u64;
    // Returning excursions, split multinomially.
    let mut counts = [0u64; 2 * MAX_DIM];
    let mut left = excursions - 1;
    let mut mass: f64 = star.back_p[..m].iter().sum();
    for k in 0..m {
        if left == 0 {
            break;
        }
        let p = if k + 1 == m { 1.0 } else { (star.back_p[k] / mass).clamp(0.0, 1.0) };
        let c = Binomial::new(left, p).expect("valid binomial").sample(rng);
        counts[k] = c;
        left -= c;
        mass -= star.back_p[k];
    }
    let last = pick(&star.exit_p[..m], star.q, rng.gen::<f64>());
    counts[last] += 1;
    let j = pick(&star.others[last][..m], star.other_sum[last], rng.gen::<f64>());
    let exit = neighbor_of(&neighbor_of(&y, last), j);
    let gamma = |rng: &mut ChaCha8Rng, n: u64| -> f64 {
        if n == 0 {
            0.0
        } else {
            Gamma::new(n as f64, 1.0).expect("positive shape").sample(rng)
        }
    };
    let t0 = (s.vsrw_time, s.csrw_time);
    let mut vsrw = gamma(rng, excursions) / (wy * star.total_w);
    for k in 0..m {
        vsrw += gamma(rng, counts[k]) / (star.wz[k] * (star.other_sum[k] + wy));
    }
    let csrw = gamma(rng, 2 * excursions);
    let t1 = (t0.0 + vsrw, t0.1 + csrw);
    let agg = |site| Visit {
        site,
        vsrw_in: t0.0,
        vsrw_out: t1.0,
        csrw_in: t0.1,
        csrw_out: t1.1,
        terminal: false,
        aggregated: true,
    };
    observer.visit(&agg(y));
    for k in 0..m {
        if counts[k] > 0 {
            observer.visit(&agg(neighbor_of(&y, k)));
        }
    }
    s.position = exit;
    s.vsrw_time = t1.0;
    s.csrw_time = t1.1;
    s.jumps += 2 * excursions;
    Some(exit)
}

/// A fully materialised walk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: LatticePoint,
    /// Sites in visiting order; `positions[0] == start`.
    pub positions: Vec<LatticePoint>,
    /// VSRW time at which each position was entered.
    pub vsrw_times: Vec<f64>,
    /// CSRW time at which each position was entered.
    pub csrw_times: Vec<f64>,
    /// VSRW time up to which the trajectory is known.
    pub vsrw_horizon: f64,
    pub csrw_horizon: f64,
    pub stop_reason: StopReason,
}

#[derive(Default)]
struct TrajectoryRecorder {
    positions: Vec<LatticePoint>,
    vsrw: Vec<f64>,
    csrw: Vec<f64>,
    end: (f64, f64),
}

impl WalkObserver for TrajectoryRecorder {
    fn visit(&mut self, v: &Visit) {
        self.positions.push(v.site);
        self.vsrw.push(v.vsrw_in);
        self.csrw.push(v.csrw_in);
        if v.terminal {
            self.end = (v.vsrw_out, v.csrw_out);
        }
    }
}

/// Simulate a walk from `start` until `stop` fires.
pub fn simulate(
    env: &Environment,
    start: LatticePoint,
    clock: Clock,
    stop: StopRule,
    rng: ChaCha8Rng,
    jump_budget: u64,
) -> Result<Trajectory, WalkError> {
    let mut w = Walker::new(env, start, clock, rng)?.with_budget(jump_budget);
    let mut rec = TrajectoryRecorder::default();
    let stop_reason = w.run_to_end(stop, &mut rec)?;
    Ok(Trajectory {
        start,
        positions: rec.positions,
        vsrw_times: rec.vsrw,
        csrw_times: rec.csrw,
        vsrw_horizon: rec.end.0,
        csrw_horizon: rec.end.1,
        stop_reason,
    })
}

impl Trajectory {
    /// Replay the holding intervals of the trajectory.
    pub fn replay<O: WalkObserver>(&self, observer: &mut O) {
        let n = self.positions.len();
        for i in 0..n {
            let last = i + 1 == n;
            observer.visit(&Visit {
                site: self.positions[i],
                vsrw_in: self.vsrw_times[i],
                vsrw_out: if last { self.vsrw_horizon } else { self.vsrw_times[i + 1] },
                csrw_in: self.csrw_times[i],
                csrw_out: if last { self.csrw_horizon } else { self.csrw_times[i + 1] },
                terminal: last,
                aggregated: false,
            });
        }
    }

    /// Position at VSRW time `t`.
    pub fn position_at(&self, t: f64) -> Result<LatticePoint, WalkError> {
        if t > self.vsrw_horizon || t < 0.0 {
            return Err(WalkError::HorizonExceeded { requested: t, horizon: self.vsrw_horizon });
        }
        let i = self.vsrw_times.partition_point(|&s| s <= t);
        Ok(self.positions[i.saturating_sub(1)])
    }

    pub fn jumps(&self) -> usize {
        self.positions.len() - 1
    }
}

/// Points of a range, bucketed by shell index.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ShellBuckets {
    pub shells: BTreeMap<u32, PointSet>,
}

impl ShellBuckets {
    pub fn insert(&mut self, x: LatticePoint) {
        self.shells.entry(shell_index(&x)).or_default().insert(x);
    }

    pub fn shell(&self, n: u32) -> Vec<LatticePoint> {
        let mut v: Vec<LatticePoint> =
            self.shells.get(&n).map(|s| s.iter().copied().collect()).unwrap_or_default();
        v.sort_unstable();
        v
    }

    pub fn len(&self) -> usize {
        self.shells.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: &LatticePoint) -> bool {
        self.shells.get(&shell_index(x)).is_some_and(|s| s.contains(x))
    }

    /// All points, sorted.
    pub fn points(&self) -> Vec<LatticePoint> {
        let mut v: Vec<LatticePoint> = self.shells.values().flat_map(|s| s.iter().copied()).collect();
        v.sort_unstable();
        v
    }

    pub fn max_shell(&self) -> Option<u32> {
        self.shells.keys().next_back().copied()
    }
}

/// Full range and integer-time skeleton range of a walk, restricted to a
/// band of shells.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RangeSet {
    pub full: ShellBuckets,
    pub skeleton: ShellBuckets,
    pub min_shell: u32,
    pub max_shell: u32,
    pub record_full: bool,
    pub clock: Clock,
}

impl RangeSet {
    /// Record shells `min_shell..=max_shell`; `record_full = false` keeps only
    /// the skeleton, which is all that the dimension estimates need.
    pub fn new(min_shell: u32, max_shell: u32, record_full: bool) -> Self {
        RangeSet {
            full: ShellBuckets::default(),
            skeleton: ShellBuckets::default(),
            min_shell,
            max_shell,
            record_full,
            clock: Clock::Vsrw,
        }
    }

    pub fn unbounded() -> Self {
        Self::new(1, u32::MAX, true)
    }
}

impl WalkObserver for RangeSet {
    #[inline]
    fn visit(&mut self, v: &Visit) {
        let n = shell_index(&v.site);
        if n < self.min_shell || n > self.max_shell {
            return;
        }
        if self.record_full {
            self.full.shells.entry(n).or_default().insert(v.site);
        }
        if v.integer_times(self.clock).2 {
            self.skeleton.shells.entry(n).or_default().insert(v.site);
        }
    }
}

/// Full and skeleton range of a materialised trajectory.
pub fn record_range(traj: &Trajectory) -> RangeSet {
    let mut r = RangeSet::unbounded();
    traj.replay(&mut r);
    r
}

/// Number of integer VSRW times `n` in `[0, horizon]` with `X_n` in `F`.
pub fn sojourn_time<F: Fn(&LatticePoint) -> bool>(traj: &Trajectory, in_f: F) -> u64 {
    let mut count = 0;
    traj.replay(&mut |v: &Visit| {
        let (a, b, nonempty) = v.integer_times(Clock::Vsrw);
        if nonempty && in_f(&v.site) {
            count += b - a + 1;
        }
    });
    count
}

/// `sup_{t <= T} |X_t - X_0|` (Euclidean).
pub fn max_displacement(traj: &Trajectory, t: f64) -> Result<f64, WalkError> {
    if t > traj.vsrw_horizon {
        return Err(WalkError::HorizonExceeded { requested: t, horizon: traj.vsrw_horizon });
    }
    let end = traj.vsrw_times.partition_point(|&s| s <= t);
    Ok(traj.positions[..end].iter().map(|p| p.l2_dist(&traj.start)).fold(0.0, f64::max))
}

/// Visit counts per site of the integer-time skeleton. Handy for local time
/// statistics; only use on short walks.
pub fn skeleton_counts(traj: &Trajectory) -> FxHashMap<LatticePoint, u64> {
    let mut m = FxHashMap::default();
    traj.replay(&mut |v: &Visit| {
        let (a, b, nonempty) = v.integer_times(Clock::Vsrw);
        if nonempty {
            *m.entry(v.site).or_insert(0) += b - a + 1;
        }
    });
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ConductanceLaw;
    use rand::SeedableRng;

    fn env() -> Environment {
        Environment::rcm(3, 11, ConductanceLaw::Uniform { lo: 1.0, hi: 5.0 }).unwrap()
    }

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn jump_distribution_sums_to_one() {
        let e = env();
        let x = LatticePoint::new(&[2, -3, 5]);
        let d = jump_distribution(&e, &x).unwrap();
        let s: f64 = d.iter().map(|(_, p)| p).sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert_eq!(d.len(), 6);
    }

    #[test]
    fn max_jumps_zero_is_trivial() {
        let e = env();
        let o = LatticePoint::origin(3);
        let t = simulate(&e, o, Clock::Vsrw, StopRule::MaxJumps(0), rng(1), DEFAULT_JUMP_BUDGET).unwrap();
        assert_eq!(t.positions, vec![o]);
        let r = record_range(&t);
        assert_eq!(r.full.points(), vec![o]);
        assert_eq!(r.skeleton.points(), vec![o]);
    }

    #[test]
    fn exit_cube_stops_right_outside() {
        let e = env();
        let t = simulate(&e, LatticePoint::origin(3), Clock::Vsrw, StopRule::ExitCube(3), rng(2), DEFAULT_JUMP_BUDGET)
            .unwrap();
        let v3 = Cube::v_n(3, 3);
        let (last, rest) = t.positions.split_last().unwrap();
        assert!(!v3.contains(last));
        assert!(rest.iter().all(|p| v3.contains(p)));
        assert_eq!(t.stop_reason, StopReason::ExitedCube);
    }

    #[test]
    fn horizon_sojourn_counts_every_integer_time() {
        let e = env();
        let t = simulate(&e, LatticePoint::origin(3), Clock::Vsrw, StopRule::Horizon(25.5), rng(3), DEFAULT_JUMP_BUDGET)
            .unwrap();
        assert_eq!(sojourn_time(&t, |_| true), 26);
        assert_eq!(t.vsrw_horizon, 25.5);
    }

    #[test]
    fn start_outside_cube_is_rejected() {
        let e = env();
        let r = simulate(&e, LatticePoint::new(&[8, 0, 0]), Clock::Vsrw, StopRule::ExitCube(2), rng(4), 100);
        assert!(matches!(r, Err(WalkError::StartOutsideCube(_))));
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let e = env();
        let r = simulate(&e, LatticePoint::origin(3), Clock::Vsrw, StopRule::ExitCube(10), rng(5), 50);
        assert!(matches!(r, Err(WalkError::ResourceLimit(50))));
    }

    #[test]
    fn two_dimensional_walks_are_rejected() {
        let e = Environment::rcm(2, 1, ConductanceLaw::Constant { value: 1.0 }).unwrap();
        let r = simulate(&e, LatticePoint::origin(2), Clock::Vsrw, StopRule::MaxJumps(5), rng(1), 10);
        assert!(matches!(r, Err(WalkError::UnsupportedDimension(2))));
    }

    #[test]
    fn pausing_does_not_change_the_walk() {
        let e = env();
        let o = LatticePoint::origin(3);
        let straight = simulate(&e, o, Clock::Vsrw, StopRule::ExitCube(4), rng(6), DEFAULT_JUMP_BUDGET).unwrap();
        let mut w = Walker::new(&e, o, Clock::Vsrw, rng(6)).unwrap();
        let mut rec = TrajectoryRecorder::default();
        loop {
            // Round-trip the state through serde as a checkpoint would.
            let snap = w.state().clone();
            w = Walker::resume(&e, Clock::Vsrw, snap).unwrap();
            if w.run(StopRule::ExitCube(4), &mut rec, Some(7)).unwrap().is_some() {
                break;
            }
        }
        assert_eq!(rec.positions, straight.positions);
        assert_eq!(rec.vsrw, straight.vsrw_times);
    }
}
