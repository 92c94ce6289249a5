use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcm_core::geometry::Cube;
use rcm_core::walk::{holding_time, max_displacement, next_site, record_range, simulate, sojourn_time, DEFAULT_JUMP_BUDGET};
use rcm_core::{Clock, ConductanceLaw, Environment, LatticePoint, StopReason, StopRule, Trajectory};

fn origin() -> LatticePoint {
    LatticePoint::origin(3)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn constant(value: f64) -> Environment {
    Environment::rcm(3, 1, ConductanceLaw::Constant { value }).unwrap()
}

fn run(env: &Environment, clock: Clock, stop: StopRule, seed: u64) -> Trajectory {
    simulate(env, origin(), clock, stop, rng(seed), DEFAULT_JUMP_BUDGET).unwrap()
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn assert_trajectory_invariants(t: &Trajectory) {
    assert_eq!(t.positions.len(), t.vsrw_times.len());
    assert_eq!(t.positions.len(), t.csrw_times.len());
    assert_eq!(t.positions[0], t.start);
    assert_eq!((t.vsrw_times[0], t.csrw_times[0]), (0.0, 0.0));
    for w in t.positions.windows(2) {
        assert!(w[0].neighbor_axis(&w[1]).is_some(), "{:?} -> {:?}", w[0], w[1]);
    }
    assert!(t.vsrw_times.windows(2).all(|w| w[0] < w[1]));
    assert!(t.csrw_times.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn next_site_is_uniform_for_constant_conductances() {
    let env = constant(1.0);
    let x = LatticePoint::new(&[5, -2, 9]);
    let mut r = rng(3);
    let n = 100_000;
    let mut counts = std::collections::HashMap::new();
    for _ in 0..n {
        *counts.entry(next_site(&env, &x, &mut r).unwrap()).or_insert(0u32) += 1;
    }
    assert_eq!(counts.len(), 6);
    let expected = n as f64 / 6.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.1% critical value of chi-square with 5 degrees of freedom.
    assert!(chi2 < 20.515, "chi2 {chi2}");
}

#[test]
fn next_site_follows_a_single_heavy_edge() {
    let k = 1e6;
    let env = Environment::rcm(3, 5, ConductanceLaw::TwoPoint { high: k, prob: 0.1 }).unwrap();
    let (x, heavy) = (0..100_000)
        .map(|i| LatticePoint::new(&[i % 300, i / 300, 0]))
        .find_map(|x| {
            let heavy: Vec<LatticePoint> =
                x.neighbors().filter(|y| env.conductance_between(&x, y).unwrap() == k).collect();
            (heavy.len() == 1).then(|| (x, heavy[0]))
        })
        .expect("site with one heavy edge");
    let n = 100_000;
    let mut r = rng(8);
    let hits = (0..n).filter(|_| next_site(&env, &x, &mut r).unwrap() == heavy).count() as f64;
    let p: f64 = k / (k + 5.0);
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!(hits / n as f64 >= 0.99999 - 3.0 * sigma, "{hits}");
}

#[test]
fn holding_time_means() {
    let env = constant(1.0);
    let x = origin();
    let mut r = rng(4);
    let n = 100_000;
    let csrw: Vec<f64> = (0..n).map(|_| holding_time(&env, &x, Clock::Csrw, &mut r).unwrap()).collect();
    let vsrw: Vec<f64> = (0..n).map(|_| holding_time(&env, &x, Clock::Vsrw, &mut r).unwrap()).collect();
    assert!(csrw.iter().chain(&vsrw).all(|&t| t > 0.0));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&csrw) - 1.0).abs() < 0.01, "{}", mean(&csrw));
    assert!((mean(&vsrw) - 1.0 / 6.0).abs() < 0.002, "{}", mean(&vsrw));
}

#[test]
fn trajectories_satisfy_their_invariants() {
    let env = Environment::rcm(3, 6, ConductanceLaw::Pareto { shape: 1.0 }).unwrap();
    for (i, stop) in [StopRule::ExitCube(5), StopRule::Horizon(300.0), StopRule::MaxJumps(5000)].into_iter().enumerate() {
        for clock in [Clock::Vsrw, Clock::Csrw] {
            let t = run(&env, clock, stop, i as u64);
            assert_trajectory_invariants(&t);
            let r = record_range(&t);
            assert!(r.full.len() <= t.jumps() + 1);
            assert!(r.skeleton.points().iter().all(|p| r.full.contains(p)));
        }
    }
}

#[test]
fn exit_cube_stops_at_the_first_exit() {
    let env = Environment::rcm(3, 2, ConductanceLaw::Uniform { lo: 1.0, hi: 5.0 }).unwrap();
    for n in [1, 3, 6] {
        let cube = Cube::v_n(3, n);
        let t = run(&env, Clock::Vsrw, StopRule::ExitCube(n), n as u64);
        assert_eq!(t.stop_reason, StopReason::ExitedCube);
        let (last, earlier) = t.positions.split_last().unwrap();
        assert!(!cube.contains(last));
        assert!(earlier.iter().all(|p| cube.contains(p)));
    }
}

#[test]
fn single_point_trajectory() {
    let t = run(&constant(1.0), Clock::Vsrw, StopRule::MaxJumps(0), 1);
    assert_eq!(t.positions, vec![origin()]);
    assert_eq!(t.vsrw_times, vec![0.0]);
    let r = record_range(&t);
    assert_eq!(r.full.points(), vec![origin()]);
    assert_eq!(r.skeleton.points(), vec![origin()]);
}

#[test]
fn exit_jump_counts_scale_diffusively() {
    let env = constant(1.0);
    let replicas = 4000u64;
    let means: Vec<f64> = (4..=7u32)
        .map(|n| {
            let total: usize = (0..replicas)
                .map(|i| run(&env, Clock::Vsrw, StopRule::ExitCube(n), 1000 * n as u64 + i).jumps())
                .sum();
            total as f64 / replicas as f64
        })
        .collect();
    for w in means.windows(2) {
        let ratio = w[1] / w[0];
        assert!((ratio - 4.0).abs() <= 0.3, "means {means:?}");
    }
}

#[test]
fn both_clocks_give_the_same_range() {
    let env = Environment::rcm(3, 12, ConductanceLaw::Pareto { shape: 0.7 }).unwrap();
    for seed in 0..20 {
        let v = run(&env, Clock::Vsrw, StopRule::ExitCube(6), seed);
        let c = run(&env, Clock::Csrw, StopRule::ExitCube(6), seed);
        assert_eq!(v.positions, c.positions);
        assert_eq!(record_range(&v).full.points(), record_range(&c).full.points());
    }
}

#[test]
fn scaling_conductances_only_rescales_the_vsrw_clock() {
    let lambda = 3.0;
    let pairs = [
        (ConductanceLaw::Constant { value: 1.0 }, ConductanceLaw::Constant { value: lambda }),
        (ConductanceLaw::Uniform { lo: 1.0, hi: 5.0 }, ConductanceLaw::Uniform { lo: lambda, hi: 5.0 * lambda }),
    ];
    for (base, scaled) in pairs {
        let e1 = Environment::rcm(3, 21, base).unwrap();
        let e2 = Environment::rcm(3, 21, scaled).unwrap();
        for seed in 0..10 {
            let a = run(&e1, Clock::Vsrw, StopRule::MaxJumps(20_000), seed);
            let b = run(&e2, Clock::Vsrw, StopRule::MaxJumps(20_000), seed);
            assert_eq!(a.positions, b.positions);
            assert_eq!(a.csrw_times, b.csrw_times);
            for (ta, tb) in a.vsrw_times.iter().zip(&b.vsrw_times) {
                assert!((ta / lambda - tb).abs() <= 1e-9 * ta.max(1.0));
            }
        }
    }
}

#[test]
fn simulation_is_reproducible() {
    let env = Environment::rcm(3, 30, ConductanceLaw::TwoPoint { high: 20.0, prob: 0.3 }).unwrap();
    let a = run(&env, Clock::Csrw, StopRule::ExitCube(7), 99);
    let b = run(&env, Clock::Csrw, StopRule::ExitCube(7), 99);
    assert_eq!(a.positions, b.positions);
    assert_eq!(a.vsrw_times, b.vsrw_times);
    assert_eq!(a.csrw_times, b.csrw_times);
    assert_ne!(a.positions, run(&env, Clock::Csrw, StopRule::ExitCube(7), 100).positions);
}

#[test]
fn sojourn_examples() {
    let env = constant(1.0);
    let t = run(&env, Clock::Vsrw, StopRule::Horizon(250.5), 7);
    assert_eq!(sojourn_time(&t, |_| true), 251);
    assert_eq!(sojourn_time(&t, |p| p.coord(0) > 10_000), 0);
}

#[test]
fn sojourn_in_a_cube_scales_like_its_area() {
    // Time spent in V(0, 2^k) before leaving V(0, 2^{k+3}); the walk is
    // transient, so the truncation only removes late returns.
    let env = constant(1.0);
    let replicas = 400u64;
    let ks: Vec<f64> = (4..=7).map(f64::from).collect();
    let logs: Vec<f64> = (4..=7u32)
        .map(|k| {
            let cube = Cube::v_n(3, k);
            let total: u64 = (0..replicas)
                .map(|i| {
                    let t = run(&env, Clock::Vsrw, StopRule::ExitCube(k + 3), 50_000 + 1000 * k as u64 + i);
                    sojourn_time(&t, |p| cube.contains(p))
                })
                .sum();
            (total as f64 / replicas as f64).log2()
        })
        .collect();
    let s = slope(&ks, &logs);
    assert!((s - 2.0).abs() <= 0.3, "slope {s}, log2 means {logs:?}");
}

#[test]
fn max_displacement_examples() {
    let env = constant(1.0);
    let horizon = 1e4;
    let t = run(&env, Clock::Vsrw, StopRule::Horizon(horizon), 5);
    assert_eq!(max_displacement(&t, 0.0).unwrap(), 0.0);
    let mut prev = 0.0;
    for k in 1..=100 {
        let m = max_displacement(&t, horizon * k as f64 / 100.0).unwrap();
        assert!(m >= prev);
        prev = m;
    }
    assert!(max_displacement(&t, horizon + 1.0).is_err());

    let mut ratios: Vec<f64> = (0..201)
        .map(|i| max_displacement(&run(&env, Clock::Vsrw, StopRule::Horizon(horizon), 300 + i), horizon).unwrap())
        .map(|m| m / horizon.sqrt())
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios[100];
    assert!((0.3..=3.0).contains(&median), "median {median}");
}
