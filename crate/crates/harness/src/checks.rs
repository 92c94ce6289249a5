//! Statistical checks of the estimates the dimension and hitting results
//! rest on: heat kernel decay, maximal inequality, sojourn tails, the law of
//! the iterated logarithm, and a strong law for adapted indicator sequences.

use crate::{stream_rng, STREAM_CHECK};
use anyhow::Result;
use rand::Rng;
use rayon::prelude::*;
use rcm_core::geometry::Cube;
use rcm_core::potential::Estimate;
use rcm_core::walk::{simulate, StopRule, Visit};
use rcm_core::{Clock, Environment, LatticePoint, Walker};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// A fitted quantity with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

impl Fit {
    fn new(name: &str, value: f64, stderr: f64) -> Fit {
        Fit { name: name.to_string(), value, stderr }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub fits: Vec<Fit>,
    pub passed: bool,
    /// The pass rule, in words.
    pub criterion: String,
    /// Set when the threshold is a calibration choice rather than a value
    /// that follows from the model.
    pub heuristic: bool,
    pub samples: usize,
    pub seconds: f64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CheckReport {
    pub fn fit(&self, name: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.name == name)
    }
}

/// Ordinary least squares line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - intercept - slope * u).powi(2)).sum();
    let slope_se = if x.len() > 2 { (rss / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    LineFit { slope, slope_se, intercept, r2 }
}

fn par_replicas<T: Send>(replicas: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..replicas).into_par_iter().map(f).collect()
}

/// Empirical `q`-quantile (nearest rank).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let i = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[i]
}

// ---------------------------------------------------------------------------
// Strong law for adapted indicators.

/// Lower bound `p / 4` on the tail ratio. The constant is not determined by
/// the argument it stands in for, so reports flag it as heuristic.
pub fn slln_threshold(p: f64) -> f64 {
    p / 4.0
}

/// Synthetic adapted pair `(A_i, B_i)`: `B_i` fails with probability
/// `min(1, a e^{-delta i})`; on `B_i` the next `A_{i+1}` occurs with
/// probability exactly `p`, off `B_i` it never occurs. For each trial the
/// report records `min_{n/2 <= m <= n} S_m / m`.
pub fn check_slln(p: f64, a: f64, delta: f64, n: usize, trials: usize, seed: u64) -> CheckReport {
    let t0 = Instant::now();
    let eps = slln_threshold(p);
    let mins: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(seed, STREAM_CHECK, trial as u64);
            let mut s = 0u64;
            let mut worst = f64::INFINITY;
            let mut b_prev = true;
            for i in 1..=n {
                if b_prev && rng.gen::<f64>() < p {
                    s += 1;
                }
                let fail = (a * (-delta * i as f64).exp()).min(1.0);
                b_prev = rng.gen::<f64>() >= fail;
                if 2 * i >= n {
                    worst = worst.min(s as f64 / i as f64);
                }
            }
            worst
        })
        .collect();
    let passing = mins.iter().filter(|&&m| m >= eps).count();
    let overall = mins.iter().copied().fold(f64::INFINITY, f64::min);
    let est = Estimate::from_samples(&mins);
    CheckReport {
        name: "slln".into(),
        fits: vec![
            Fit::new("mean_tail_ratio", est.mean, est.stderr),
            Fit::new("min_tail_ratio", overall, est.stderr),
            Fit::new("threshold", eps, 0.0),
        ],
        passed: passing == trials,
        criterion: format!("min over m in [n/2, n] of S_m/m >= p/4 = {eps} in every trial"),
        heuristic: true,
        samples: trials,
        seconds: t0.elapsed().as_secs_f64(),
        columns: vec!["trial".into(), "min_tail_ratio".into()],
        rows: mins.iter().enumerate().map(|(i, &m)| vec![i as f64, m]).collect(),
    }
}

// ---------------------------------------------------------------------------
// Heat kernel.

/// Collision estimate of `sum_y p(y)^2` from i.i.d. samples, with a
/// delete-a-group jackknife standard error over `groups` groups.
pub fn collision_estimate(samples: &[LatticePoint], groups: usize) -> (f64, f64) {
    let n = samples.len();
    let g = groups.clamp(2, n.max(2));
    let mut per_site: FxHashMap<LatticePoint, Vec<u32>> = FxHashMap::default();
    for (i, x) in samples.iter().enumerate() {
        per_site.entry(*x).or_insert_with(|| vec![0; g])[i * g / n] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let group_sizes: Vec<usize> = (0..g).map(|k| (0..n).filter(|i| i * g / n == k).count()).collect();
    let total_pairs = |m: usize| (m * m.saturating_sub(1) / 2) as f64;
    // Sites are visited in a hash order; sort the counts so the sums below
    // are reproducible.
    let mut counts: Vec<&Vec<u32>> = per_site.values().collect();
    counts.sort_unstable();
    let full: f64 = counts.iter().map(|c| pairs(c.iter().map(|&v| v as u64).sum())).sum();
    let theta = full / total_pairs(n);
    let loo: Vec<f64> = (0..g)
        .map(|k| {
            let coll: f64 = counts.iter().map(|c| pairs(c.iter().map(|&v| v as u64).sum::<u64>() - c[k] as u64)).sum();
            coll / total_pairs(n - group_sizes[k])
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / g as f64;
    let var = (g as f64 - 1.0) / g as f64 * loo.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>();
    (theta, var.sqrt())
}

/// Bin width in `|y|^2 / t` for the heat kernel profile.
const PROFILE_BIN: f64 = 0.25;
/// The profile fit stops at the first bin with fewer hits.
const PROFILE_MIN_HITS: u64 = 100;

/// Number of sites of `Z^d` with `|y|^2 = r2`, for `r2 <= max_r2`.
fn sites_by_norm(d: usize, max_r2: usize) -> Vec<u64> {
    let r = (max_r2 as f64).sqrt().floor() as i32;
    let mut counts = vec![0u64; max_r2 + 1];
    let corner = LatticePoint::new(&vec![-r; d]);
    let cube = Cube::new(corner, 2 * r as i64 + 1).expect("valid cube");
    for p in cube.points() {
        let s: i64 = p.coords().iter().map(|&c| (c as i64).pow(2)).sum();
        if (s as usize) <= max_r2 {
            counts[s as usize] += 1;
        }
    }
    counts
}

/// On-diagonal decay and Gaussian profile of the VSRW transition density.
///
/// For each `t` in `times`, `p_t(0,0) = sum_y p_{t/2}(0,y)^2` (the VSRW is
/// symmetric with respect to counting measure) is estimated from the
/// collision rate of `replicas` independent positions `X_{t/2}`; the slope of
/// `log p_t(0,0)` against `log t` should be `-d/2`. At the largest `t`, the
/// radial profile of `p_t(0,y)` is averaged over shells of `|y|^2 / t` and
/// `log p` is fitted against the mean `|y|^2 / t` of each shell.
pub fn check_heat_kernel(env: &Environment, times: &[f64], replicas: usize, seed: u64) -> Result<CheckReport> {
    let t0 = Instant::now();
    let d = env.dim();
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let mut halves: Vec<f64> = times.iter().map(|t| t / 2.0).collect();
    halves.push(t_max);
    let origin = LatticePoint::origin(d);
    let positions: Vec<Vec<LatticePoint>> = par_replicas(replicas, |r| {
        let traj = simulate(
            env,
            origin,
            Clock::Vsrw,
            StopRule::Horizon(t_max),
            stream_rng(seed, STREAM_CHECK, r as u64),
            u64::MAX,
        )?;
        halves.iter().map(|&t| Ok(traj.position_at(t)?)).collect()
    })?;
    let mut rows = Vec::new();
    let (mut lx, mut ly) = (vec![], vec![]);
    for (i, &t) in times.iter().enumerate() {
        let sample: Vec<LatticePoint> = positions.iter().map(|p| p[i]).collect();
        let (p, se) = collision_estimate(&sample, 20);
        rows.push(vec![0.0, t, p, se]);
        if p > 0.0 {
            lx.push(t.ln());
            ly.push(p.ln());
        }
    }
    let diag = fit_line(&lx, &ly);

    // Radial profile at t_max, pooled over bins of width PROFILE_BIN in
    // |y|^2 / t.
    let last = halves.len() - 1;
    let mut hist: FxHashMap<usize, u64> = FxHashMap::default();
    for p in &positions {
        let r2: i64 = p[last].coords().iter().map(|&c| (c as i64).pow(2)).sum();
        *hist.entry(r2 as usize).or_insert(0) += 1;
    }
    let max_r2 = hist.keys().copied().max().unwrap_or(0);
    let sites = sites_by_norm(d, max_r2);
    let bin_of = |r2: usize| (r2 as f64 / t_max / PROFILE_BIN).floor() as usize;
    let nbins = bin_of(max_r2) + 1;
    let (mut hits, mut cells, mut moment) = (vec![0u64; nbins], vec![0u64; nbins], vec![0.0; nbins]);
    for (r2, &c) in sites.iter().enumerate() {
        let b = bin_of(r2);
        cells[b] += c;
        moment[b] += c as f64 * r2 as f64 / t_max;
        hits[b] += hist.get(&r2).copied().unwrap_or(0);
    }
    let (mut gx, mut gy) = (vec![], vec![]);
    for b in 0..nbins {
        // Sparse bins only add noise to the log.
        if hits[b] < PROFILE_MIN_HITS {
            break;
        }
        let density = hits[b] as f64 / (cells[b] as f64 * replicas as f64);
        let u = moment[b] / cells[b] as f64;
        rows.push(vec![1.0, u, density, density / (hits[b] as f64).sqrt()]);
        gx.push(u);
        gy.push(density.ln());
    }
    let prof = fit_line(&gx, &gy);
    let target = -(d as f64) / 2.0;
    Ok(CheckReport {
        name: "heat_kernel".into(),
        fits: vec![
            Fit::new("diag_slope", diag.slope, diag.slope_se),
            Fit::new("profile_slope", prof.slope, prof.slope_se),
            Fit::new("profile_r2", prof.r2, 0.0),
        ],
        passed: (diag.slope - target).abs() <= 0.3 && prof.r2 >= 0.9,
        criterion: format!("log-log slope of p_t(0,0) within {target} +- 0.3 and Gaussian profile R^2 >= 0.9"),
        heuristic: false,
        samples: replicas,
        seconds: t0.elapsed().as_secs_f64(),
        columns: vec!["kind".into(), "t_or_r2".into(), "density".into(), "stderr".into()],
        rows,
    })
}

// ---------------------------------------------------------------------------
// Maximal inequality.

/// Tail of `sup_{t <= T} |X_t|` on the scale `sqrt(T)`: the empirical
/// `P(sup |X_t| > lambda sqrt(T))` for each `lambda`, and a line fitted to
/// `log P` against `lambda^2`.
pub fn check_maximal(env: &Environment, horizon: f64, lambdas: &[f64], replicas: usize, seed: u64) -> Result<CheckReport> {
    let t0 = Instant::now();
    let origin = LatticePoint::origin(env.dim());
    let maxima: Vec<f64> = par_replicas(replicas, |r| {
        let mut w = Walker::new(env, origin, Clock::Vsrw, stream_rng(seed, STREAM_CHECK, r as u64))?.with_budget(u64::MAX);
        let mut m2 = 0i64;
        let mut obs = |v: &Visit| {
            let s: i64 = v.site.coords().iter().map(|&c| (c as i64).pow(2)).sum();
            m2 = m2.max(s);
        };
        w.run_to_end(StopRule::Horizon(horizon), &mut obs)?;
        Ok((m2 as f64).sqrt())
    })?;
    let scale = horizon.sqrt();
    let mut rows = Vec::new();
    let (mut x, mut y) = (vec![], vec![]);
    for &l in lambdas {
        let k = maxima.iter().filter(|&&m| m > l * scale).count();
        let p = k as f64 / replicas as f64;
        rows.push(vec![l, p, (p * (1.0 - p) / replicas as f64).sqrt()]);
        if k > 0 {
            x.push(l * l);
            y.push(p.ln());
        }
    }
    let fit = fit_line(&x, &y);
    let monotone = rows.windows(2).all(|w| w[1][1] <= w[0][1]);
    Ok(CheckReport {
        name: "maximal".into(),
        fits: vec![Fit::new("lambda2_slope", fit.slope, fit.slope_se), Fit::new("r2", fit.r2, 0.0)],
        passed: x.len() >= 3 && fit.slope < 0.0 && fit.r2 >= 0.9 && monotone,
        criterion: "log tail linear in lambda^2 with negative slope, R^2 >= 0.9, tail monotone".into(),
        heuristic: false,
        samples: replicas,
        seconds: t0.elapsed().as_secs_f64(),
        columns: vec!["lambda".into(), "tail".into(), "stderr".into()],
        rows,
    })
}

// ---------------------------------------------------------------------------
// Sojourn times.

/// VSRW time spent in `V(0, 2^k)` by the walk from `x` before it leaves
/// `V(0, 2^{k+2})`.
pub fn sojourn(env: &Environment, x: LatticePoint, k: u32, rng: rand_chacha::ChaCha8Rng) -> Result<f64> {
    let f = Cube::v_n(env.dim(), k);
    let mut w = Walker::new(env, x, Clock::Vsrw, rng)?.with_budget(u64::MAX);
    let mut total = 0.0;
    let mut obs = |v: &Visit| {
        if f.contains(&v.site) {
            total += v.vsrw_out - v.vsrw_in;
        }
    };
    w.run_to_end(StopRule::ExitCube(k + 2), &mut obs)?;
    Ok(total)
}

/// Parameters of [`check_sojourn_tail`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SojournConfig {
    /// Level of the cube `F = V(0, 2^k)` for the tail fit.
    pub level: u32,
    pub lambdas: Vec<f64>,
    pub replicas: usize,
    /// Starting points sampled in `F` for the estimate of `M(F)`.
    pub starts: usize,
    pub replicas_per_start: usize,
    /// Levels for the scaling of `E T(V_k)`.
    pub scaling_levels: Vec<u32>,
    pub scaling_replicas: usize,
}

impl Default for SojournConfig {
    fn default() -> Self {
        SojournConfig {
            level: 4,
            lambdas: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            replicas: 4000,
            starts: 8,
            replicas_per_start: 200,
            scaling_levels: vec![4, 5, 6, 7],
            scaling_replicas: 400,
        }
    }
}

/// Exponential tail of the time `T(F)` spent in a cube `F`, measured in
/// units of `M(F) = max_x E_x T(F)`, and the scaling `E T(V_k) ~ 2^{2k}`.
///
/// Sojourns are counted until the walk leaves `V(0, 2^{k+2})`. `M(F)` is
/// the largest sample mean over the origin and `starts - 1` uniform points
/// of `F`. The tail fit uses walks from the origin.
pub fn check_sojourn_tail(env: &Environment, cfg: &SojournConfig, seed: u64) -> Result<CheckReport> {
    let t0 = Instant::now();
    let d = env.dim();
    let k = cfg.level;
    let f = Cube::v_n(d, k);
    let mut pick = stream_rng(seed, STREAM_CHECK, u32::MAX as u64);
    let mut starts = vec![LatticePoint::origin(d)];
    for _ in 1..cfg.starts {
        let c: Vec<i32> = (0..d).map(|i| f.corner().coord(i) + pick.gen_range(0..f.side() as i32)).collect();
        starts.push(LatticePoint::new(&c));
    }
    let mut stream = 0u64;
    let mut next_stream = |n: usize| {
        let base = stream;
        stream += n as u64;
        base
    };
    let mut m_hat = 0.0f64;
    let mut rows = Vec::new();
    for x in &starts {
        let base = next_stream(cfg.replicas_per_start);
        let ts = par_replicas(cfg.replicas_per_start, |r| sojourn(env, *x, k, stream_rng(seed, STREAM_CHECK, base + r as u64)))?;
        let est = Estimate::from_samples(&ts);
        m_hat = m_hat.max(est.mean);
        rows.push(vec![0.0, x.linf_norm() as f64, est.mean, est.stderr]);
    }
    let base = next_stream(cfg.replicas);
    let ts = par_replicas(cfg.replicas, |r| sojourn(env, starts[0], k, stream_rng(seed, STREAM_CHECK, base + r as u64)))?;
    let (mut lx, mut ly) = (vec![], vec![]);
    for &l in &cfg.lambdas {
        let c = ts.iter().filter(|&&t| t >= l * m_hat).count();
        let p = c as f64 / ts.len() as f64;
        rows.push(vec![1.0, l, p, (p * (1.0 - p) / ts.len() as f64).sqrt()]);
        if c > 0 {
            lx.push(l);
            ly.push(p.ln());
        }
    }
    let tail = fit_line(&lx, &ly);

    let mut ratios = Vec::new();
    for &lvl in &cfg.scaling_levels {
        let base = next_stream(cfg.scaling_replicas);
        let o = LatticePoint::origin(d);
        let ts = par_replicas(cfg.scaling_replicas, |r| sojourn(env, o, lvl, stream_rng(seed, STREAM_CHECK, base + r as u64)))?;
        let est = Estimate::from_samples(&ts);
        let norm = 4f64.powi(lvl as i32);
        ratios.push(est.mean / norm);
        rows.push(vec![2.0, lvl as f64, est.mean / norm, est.stderr / norm]);
    }
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_est = Estimate::from_samples(&ratios);
    Ok(CheckReport {
        name: "sojourn_tail".into(),
        fits: vec![
            Fit::new("tail_slope", tail.slope, tail.slope_se),
            Fit::new("tail_r2", tail.r2, 0.0),
            Fit::new("m_hat", m_hat, 0.0),
            Fit::new("scaling_ratio", ratio_est.mean, ratio_est.stderr),
            Fit::new("scaling_spread", spread, 0.0),
        ],
        passed: lx.len() >= 3 && tail.slope < 0.0 && tail.r2 >= 0.9 && spread <= 2.0,
        criterion: "log tail of T/M linear with negative slope, R^2 >= 0.9; E T(V_k)/4^k within a factor 2 across k".into(),
        heuristic: false,
        samples: cfg.replicas + cfg.starts * cfg.replicas_per_start + cfg.scaling_levels.len() * cfg.scaling_replicas,
        seconds: t0.elapsed().as_secs_f64(),
        columns: vec!["kind".into(), "x".into(), "value".into(), "stderr".into()],
        rows,
    })
}

// ---------------------------------------------------------------------------
// Law of the iterated logarithm.

/// `max_{t <= T} |X_t| / sqrt(T log log T)` at each `T` of `times`
/// (increasing, all `>= 16`). The report gives the 95th percentile over
/// replicas per `T` and the slope of that percentile against `log2 T`,
/// which should not be positive beyond noise.
pub fn check_lil(env: &Environment, times: &[f64], replicas: usize, seed: u64) -> Result<CheckReport> {
    let t0 = Instant::now();
    anyhow::ensure!(times.iter().all(|&t| t >= 16.0), "LIL times must be >= 16");
    anyhow::ensure!(times.windows(2).all(|w| w[0] < w[1]), "LIL times must increase");
    let t_max = *times.last().expect("non-empty grid");
    let origin = LatticePoint::origin(env.dim());
    let ratios: Vec<Vec<f64>> = par_replicas(replicas, |r| {
        let mut w = Walker::new(env, origin, Clock::Vsrw, stream_rng(seed, STREAM_CHECK, r as u64))?.with_budget(u64::MAX);
        let mut out = Vec::with_capacity(times.len());
        let mut m = 0.0f64;
        let mut obs = |v: &Visit| {
            while out.len() < times.len() && times[out.len()] < v.vsrw_in {
                out.push(m);
            }
            m = m.max(v.site.l2_norm());
            if v.terminal {
                while out.len() < times.len() {
                    out.push(m);
                }
            }
        };
        w.run_to_end(StopRule::Horizon(t_max), &mut obs)?;
        Ok(out.iter().zip(times).map(|(m, t)| m / (t * t.ln().ln()).sqrt()).collect())
    })?;
    let batches = 10.min(replicas);
    let mut rows = Vec::new();
    let (mut x, mut y) = (vec![], vec![]);
    for (i, &t) in times.iter().enumerate() {
        let mut all: Vec<f64> = ratios.iter().map(|r| r[i]).collect();
        let per_batch: Vec<f64> = (0..batches)
            .map(|b| {
                let mut v: Vec<f64> = all.iter().enumerate().filter(|(j, _)| j % batches == b).map(|(_, &r)| r).collect();
                v.sort_by(f64::total_cmp);
                quantile(&v, 0.95)
            })
            .collect();
        all.sort_by(f64::total_cmp);
        let q = quantile(&all, 0.95);
        let se = Estimate::from_samples(&per_batch).stderr;
        rows.push(vec![t, q, se]);
        x.push(t.log2());
        y.push(q);
    }
    let fit = fit_line(&x, &y);
    let peak = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    Ok(CheckReport {
        name: "lil".into(),
        fits: vec![Fit::new("p95_slope", fit.slope, fit.slope_se), Fit::new("max_p95", peak, 0.0)],
        passed: peak.is_finite() && fit.slope <= 2.0 * fit.slope_se,
        criterion: "95th percentile of the normalised maximum bounded and not increasing in T beyond 2 stderr".into(),
        heuristic: false,
        samples: replicas,
        seconds: t0.elapsed().as_secs_f64(),
        columns: vec!["T".into(), "p95".into(), "stderr".into()],
        rows,
    })
}
