//! The compressed trap excursions must not change the law of the walk.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcm_core::geometry::Cube;
use rcm_core::walk::{PointSet, Visit};
use rcm_core::*;

struct Outcome {
    face: usize,
    jumps: u64,
    steps: u64,
    log_vsrw: f64,
    log_csrw: f64,
    distinct: usize,
}

fn run(env: &Environment, seed: u64, compress: bool) -> Outcome {
    let mut w = Walker::new(env, LatticePoint::origin(3), Clock::Vsrw, ChaCha8Rng::seed_from_u64(seed)).unwrap();
    if compress {
        w = w.with_trap_compression(1.0);
    }
    let mut seen = PointSet::default();
    let mut obs = |v: &Visit| {
        seen.insert(v.site);
    };
    w.run_to_end(StopRule::ExitCube(3), &mut obs).unwrap();
    let st = w.state();
    let cube = Cube::v_n(3, 3);
    assert!(!cube.contains(&st.position));
    let face = (0..3)
        .find_map(|i| match st.position.coord(i) {
            c if c < -4 => Some(2 * i),
            c if c > 3 => Some(2 * i + 1),
            _ => None,
        })
        .unwrap();
    Outcome {
        face,
        jumps: st.jumps,
        steps: st.steps,
        log_vsrw: st.vsrw_time.ln(),
        log_csrw: st.csrw_time.ln(),
        distinct: seen.len() - 1,
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn z_means(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    (ma - mb) / (va / a.len() as f64 + vb / b.len() as f64).sqrt()
}

#[test]
fn compressed_and_plain_walks_agree_in_law() {
    let env = Environment::btm(3, 17, 0.5, ConductanceLaw::Pareto { shape: 0.5 }).unwrap();
    let n = 20000;
    let plain: Vec<Outcome> = (0..n).map(|s| run(&env, s, false)).collect();
    let fast: Vec<Outcome> = (0..n).map(|s| run(&env, 1_000_000 + s, true)).collect();
    // Compression must actually be exercised.
    let (jumps, steps) = fast.iter().fold((0, 0), |(j, s), o| (j + o.jumps, s + o.steps));
    assert!(jumps > 2 * steps, "jumps {jumps} steps {steps}");

    // Exit face: two-sample chi-square with 5 degrees of freedom.
    let mut table = [[0.0f64; 6]; 2];
    for (row, outs) in [&plain, &fast].iter().enumerate() {
        for o in outs.iter() {
            table[row][o.face] += 1.0;
        }
    }
    let mut chi2 = 0.0;
    for f in 0..6 {
        let tot = table[0][f] + table[1][f];
        if tot == 0.0 {
            continue;
        }
        for row in 0..2 {
            let e = tot / 2.0;
            chi2 += (table[row][f] - e).powi(2) / e;
        }
    }
    // 99.99% quantile of chi-square(5) is 25.7.
    assert!(chi2 < 25.7, "exit faces differ: chi2 = {chi2}");

    let col = |outs: &[Outcome], f: &dyn Fn(&Outcome) -> f64| outs.iter().map(f).collect::<Vec<f64>>();
    let checks: [(&str, &dyn Fn(&Outcome) -> f64); 4] = [
        ("log jumps", &|o| (o.jumps as f64).ln()),
        ("log vsrw time", &|o| o.log_vsrw),
        ("log csrw time", &|o| o.log_csrw),
        ("distinct sites", &|o| o.distinct as f64),
    ];
    for (name, f) in checks {
        let z = z_means(&col(&plain, f), &col(&fast, f));
        assert!(z.abs() < 4.0, "{name}: z = {z}");
    }
}

/// One compressed step from a deep trap against the plain walk run until it
/// first leaves the star of the trap.
#[test]
fn single_excursion_matches_plain_walk() {
    let env = Environment::btm(3, 5, 1.0, ConductanceLaw::Pareto { shape: 0.5 }).unwrap();
    let in_star_of = |y: &LatticePoint, p: &LatticePoint| p.sub(y).iter().map(|c| c.abs()).sum::<i32>() <= 1;
    let stop = StopRule::ExitCube(5);
    let mut nop = |_: &Visit| {};
    // A trap deep enough to be compressed and shallow enough for the plain
    // walk: weight near 300, and one step from it leaves its star.
    let mut sites = Cube::centered(&LatticePoint::origin(3), 7).unwrap().points();
    let off = |p: &LatticePoint| (env.trap_weight(p).unwrap().ln() - 300f64.ln()).abs();
    sites.sort_by(|a, b| off(a).total_cmp(&off(b)));
    let y = *sites
        .iter()
        .find(|y| {
            let wy = env.trap_weight(y).unwrap();
            let mut w = Walker::new(&env, **y, Clock::Vsrw, ChaCha8Rng::seed_from_u64(0)).unwrap().with_trap_compression(wy);
            w.run(stop, &mut nop, Some(1)).unwrap();
            !in_star_of(y, &w.position())
        })
        .unwrap();
    let wy = env.trap_weight(&y).unwrap();
    assert!((100.0..1000.0).contains(&wy), "no suitable trap near the origin: {wy}");
    let in_star = |p: &LatticePoint| in_star_of(&y, p);

    let n = 20000;
    let mut plain = Vec::with_capacity(n);
    let mut fast = Vec::with_capacity(n);
    for seed in 0..n as u64 {
        let mut w = Walker::new(&env, y, Clock::Vsrw, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        while in_star(&w.position()) {
            assert!(w.run(stop, &mut nop, Some(1)).unwrap().is_none());
        }
        plain.push(w.state().clone());

        let mut w = Walker::new(&env, y, Clock::Vsrw, ChaCha8Rng::seed_from_u64(seed + 1 << 40))
            .unwrap()
            .with_trap_compression(wy);
        assert!(w.run(stop, &mut nop, Some(1)).unwrap().is_none());
        assert_eq!(w.state().steps, 1);
        assert!(!in_star(&w.position()));
        fast.push(w.state().clone());
    }

    let mut counts: std::collections::BTreeMap<LatticePoint, [f64; 2]> = Default::default();
    for (row, states) in [&plain, &fast].iter().enumerate() {
        for s in states.iter() {
            counts.entry(s.position).or_default()[row] += 1.0;
        }
    }
    // Pool rare exit points so that expected counts are at least 10.
    let (mut chi2, mut cells, mut pooled) = (0.0, 0, [0.0f64; 2]);
    let mut add = |c: [f64; 2]| {
        let e = (c[0] + c[1]) / 2.0;
        chi2 += (c[0] - e).powi(2) / e + (c[1] - e).powi(2) / e;
        cells += 1;
    };
    for c in counts.values() {
        if c[0] + c[1] >= 20.0 {
            add(*c);
        } else {
            pooled[0] += c[0];
            pooled[1] += c[1];
        }
    }
    if pooled[0] + pooled[1] > 0.0 {
        add(pooled);
    }
    let dof = (cells - 1) as f64;
    // Wilson-Hilferty approximation of the 99.99% chi-square quantile.
    let q = dof * (1.0 - 2.0 / (9.0 * dof) + 3.719 * (2.0 / (9.0 * dof)).sqrt()).powi(3);
    assert!(chi2 < q, "exit points differ: chi2 = {chi2} on {dof} dof");

    let col = |v: &[rcm_core::walk::WalkerState], f: fn(&rcm_core::walk::WalkerState) -> f64| v.iter().map(f).collect::<Vec<_>>();
    let stats: [(&str, fn(&rcm_core::walk::WalkerState) -> f64); 4] = [
        ("jumps", |s| s.jumps as f64),
        ("log jumps", |s| (s.jumps as f64).ln()),
        ("vsrw time", |s| s.vsrw_time),
        ("csrw time", |s| s.csrw_time),
    ];
    for (name, f) in stats {
        let z = z_means(&col(&plain, f), &col(&fast, f));
        assert!(z.abs() < 4.0, "{name}: z = {z}");
    }
}
