use proptest::prelude::*;
use rcm_core::fractal::{
    alpha_grid, dim_estimate, dimp_estimate, exhaustive_dyadic_cover, exhaustive_pack_value, m_h_partial,
    max_pack_level, nu_dyadic, nu_general_exact, p_h_partial, shell_tables, tau_pack, CrossingStatus, DimEstimate,
    MeasureFunction,
};
use rcm_core::geometry::{packing_cube, shell_index, Cube};
use rcm_core::LatticePoint;

fn shell_of(points: &[LatticePoint], n: u32) -> Vec<LatticePoint> {
    let mut v: Vec<LatticePoint> = points.iter().copied().filter(|p| shell_index(p) == n).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn full_shell(d: usize, n: u32) -> Vec<LatticePoint> {
    Cube::v_n(d, n).points().into_iter().filter(|p| shell_index(p) == n).collect()
}

fn axis_shell(d: usize, n: u32) -> Vec<LatticePoint> {
    let h = 1i32 << (n - 1);
    (-h..h)
        .map(|v| LatticePoint::new(&(0..d).map(|i| if i == 0 { v } else { 0 }).collect::<Vec<_>>()))
        .filter(|p| shell_index(p) == n)
        .collect()
}

fn point_shell(d: usize, n: u32) -> Vec<LatticePoint> {
    let mut c = vec![0; d];
    c[0] = -(1 << (n - 1));
    vec![LatticePoint::new(&c)]
}

fn estimates(shells: Vec<(u32, Vec<LatticePoint>)>, d: usize) -> (DimEstimate, DimEstimate) {
    let (nu, tau) = shell_tables(&shells, &alpha_grid(0.05, d as f64 + 1.0, 0.05), 0.3).unwrap();
    (dim_estimate(&nu).unwrap(), dimp_estimate(&tau).unwrap())
}

/// Points of `V_n` in dimension `d`, as a proptest strategy.
fn points_in_v(d: usize, n: u32, max: usize) -> impl Strategy<Value = Vec<LatticePoint>> {
    let h = 1i32 << (n - 1);
    proptest::collection::vec(proptest::collection::vec(-h..h, d).prop_map(|c| LatticePoint::new(&c)), 0..=max)
}

#[test]
fn cover_examples() {
    let h = MeasureFunction::Alpha(1.0);
    assert_eq!(nu_dyadic(&[], 4, &h).unwrap().value, 0.0);
    let x = LatticePoint::new(&[-8, 3]);
    assert_eq!(nu_dyadic(&[x], 4, &h).unwrap().value, 1.0 / 16.0);
    // Every level-2 dyadic cube of V_3 meets V_2 in d = 2, so take the part of
    // [-4, 0)^2 in S_3: one level-2 cube (0.5) beats three level-1 cubes
    // (0.75) and twelve unit cubes (1.5).
    let block: Vec<LatticePoint> = Cube::new(LatticePoint::new(&[-4, -4]), 4).unwrap().points();
    let block = shell_of(&block, 3);
    assert_eq!(block.len(), 12);
    let r = nu_dyadic(&block, 3, &h).unwrap();
    assert!((r.value - 0.5).abs() < 1e-15);
    assert_eq!(r.cubes.len(), 1);
    assert_eq!(exhaustive_dyadic_cover(&block, 3, &h).unwrap(), r.value);
}

#[test]
fn packing_examples() {
    let h = MeasureFunction::Alpha(1.0);
    assert_eq!(tau_pack(&[], 5, 0.5, &h).unwrap().value, 0.0);
    for n in 2..10 {
        let x = point_shell(3, n);
        let k = max_pack_level(n, 0.5);
        assert_eq!(k, n / 2);
        assert!(tau_pack(&x, n, 0.5, &h).unwrap().value >= 2f64.powi(k as i32 - n as i32));
    }
    let pts: Vec<LatticePoint> = [[-8, 0], [-8, 3], [7, -8]].iter().map(|c| LatticePoint::new(c)).collect();
    let r = tau_pack(&pts, 4, 0.3, &h).unwrap();
    let best = exhaustive_pack_value(&pts, 4, 0.3, &h).unwrap();
    assert!((r.value - best).abs() < 1e-12, "{} vs {best}", r.value);
    assert!(r.exact);
}

#[test]
fn partial_sums_for_one_point_per_shell() {
    let points: Vec<LatticePoint> = (1..=12).flat_map(|n| point_shell(3, n)).collect();
    for alpha in [0.5, 1.0, 2.0] {
        let h = MeasureFunction::Alpha(alpha);
        let closed: f64 = (1..=12).map(|n| 2f64.powf(-alpha * n as f64)).sum();
        assert!((m_h_partial(&points, &h, 12).unwrap() - closed).abs() < 1e-12);
        assert_eq!(m_h_partial(&[], &h, 12).unwrap(), 0.0);
        let mut prev = 0.0;
        for n in 1..=12 {
            let p = p_h_partial(&points, 0.5, &h, n).unwrap();
            let term = p - prev;
            assert!(term <= h.eval(2f64.powf(-(n as f64) / 2.0)) + 1e-12);
            assert!(p >= prev);
            prev = p;
        }
        assert_eq!(p_h_partial(&[], 0.5, &h, 12).unwrap(), 0.0);
    }
}

#[test]
fn full_shells_have_bounded_partial_sums_above_the_dimension() {
    let d = 2;
    let alpha = 2.5;
    let h = MeasureFunction::Alpha(alpha);
    let points: Vec<LatticePoint> = (1..=9).flat_map(|n| full_shell(d, n)).collect();
    let eps = 0.3;
    let (mut cover_bound, mut pack_bound) = (0.0, 0.0);
    for n in 1..=9u32 {
        // Unit cubes cover S_n: at most 2^{nd} of them.
        cover_bound += 2f64.powf(n as f64 * (d as f64 - alpha));
        // Disjoint cubes of side 2^k centred in V_n fit in a box of side 2^n + 2^k.
        let k = max_pack_level(n, eps) as f64;
        let n = n as f64;
        pack_bound += (2f64.powf(n - k) + 1.0).powi(d as i32) * 2f64.powf((k - n) * alpha);
    }
    assert!(m_h_partial(&points, &h, 9).unwrap() <= cover_bound);
    assert!(p_h_partial(&points, eps, &h, 9).unwrap() <= pack_bound);
}

#[test]
fn full_lattice_has_full_dimension() {
    for (d, lo, hi) in [(2usize, 3u32, 8u32), (3, 3, 7)] {
        let (h, p) = estimates((lo..=hi).map(|n| (n, full_shell(d, n))).collect(), d);
        assert!((h.alpha_hat - d as f64).abs() <= 0.1, "d {d}: {h:?}");
        assert!((p.alpha_hat - d as f64).abs() <= 0.2, "d {d}: {p:?}");
        assert!(h.alpha_hat <= p.alpha_hat + 0.25);
    }
}

#[test]
fn axis_has_dimension_one() {
    // Greedy packings of a segment hold few cubes at small n and the edge
    // cubes pull the packing slope down, so use larger shells here.
    for d in [2usize, 3] {
        let (h, p) = estimates((10..=18).map(|n| (n, axis_shell(d, n))).collect(), d);
        assert!((h.alpha_hat - 1.0).abs() <= 0.15, "d {d}: {h:?}");
        assert!((p.alpha_hat - 1.0).abs() <= 0.2, "d {d}: {p:?}");
        assert!(h.alpha_hat <= p.alpha_hat + 0.25);
    }
}

#[test]
fn one_point_per_shell_has_dimension_zero() {
    let (h, p) = estimates((4..=11).map(|n| (n, point_shell(3, n))).collect(), 3);
    for e in [&h, &p] {
        assert!(e.slopes.iter().all(|r| r.slope < 0.0));
        assert_eq!(e.status, CrossingStatus::AllNegative);
        assert_eq!(e.alpha_hat, 0.0);
    }
}

#[test]
fn gauge_functions() {
    for d in 3..=5 {
        let h1 = MeasureFunction::H1 { d };
        let h2 = MeasureFunction::h2_default(d);
        h1.validate().unwrap();
        h2.validate().unwrap();
        let r0 = (-1.5 * d as f64).exp();
        assert!((h1.eval(r0 * (1.0 - 1e-9)) - h1.eval(r0 * (1.0 + 1e-9))).abs() <= 1e-6 * h1.eval(r0));
        for h in [&h1, &h2] {
            assert_eq!(h.eval(0.0), 0.0);
            let grid: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0 * 0.999).collect();
            assert!(grid.windows(2).all(|w| h.eval(w[0]) < h.eval(w[1])), "{h:?}");
            assert!(h.doubling_constant(1000).is_finite());
        }
    }
    assert!(MeasureFunction::H2 { d: 3, c14: 5.0 }.validate().is_err());
    assert!(MeasureFunction::Alpha(0.0).validate().is_err());
    assert!((MeasureFunction::Alpha(1.5).doubling_constant(1000) - 2f64.powf(1.5)).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tree_dp_equals_exhaustive_dyadic_cover(
        d in 1usize..=3, n in 2u32..=5, seed_pts in points_in_v(3, 5, 40), alpha in 0.2..3.5f64,
    ) {
        let pts: Vec<LatticePoint> = seed_pts
            .iter()
            .map(|p| LatticePoint::new(&p.coords()[..d].iter().map(|&c| c >> (5 - n)).collect::<Vec<_>>()))
            .collect();
        let shell: Vec<LatticePoint> = shell_of(&pts, n).into_iter().take(12).collect();
        let h = MeasureFunction::Alpha(alpha);
        let dp = nu_dyadic(&shell, n, &h).unwrap();
        let brute = exhaustive_dyadic_cover(&shell, n, &h).unwrap();
        prop_assert!((dp.value - brute).abs() <= 1e-12 * brute.max(1e-300), "{} vs {}", dp.value, brute);
        for p in &shell {
            prop_assert!(dp.cubes.iter().any(|q| q.contains(p)));
        }
    }

    #[test]
    fn dyadic_cover_is_sandwiched_by_general_covers(
        d in 1usize..=2, n in 2u32..=5, seed_pts in points_in_v(2, 5, 30), alpha in 0.2..2.5f64,
    ) {
        let pts: Vec<LatticePoint> = seed_pts
            .iter()
            .map(|p| LatticePoint::new(&p.coords()[..d].iter().map(|&c| c >> (5 - n)).collect::<Vec<_>>()))
            .collect();
        let shell: Vec<LatticePoint> = shell_of(&pts, n).into_iter().take(8).collect();
        let h = MeasureFunction::Alpha(alpha);
        let general = nu_general_exact(&shell, n, &h).unwrap();
        let dyadic = nu_dyadic(&shell, n, &h).unwrap().value;
        prop_assert!(general <= dyadic * (1.0 + 1e-12));
        prop_assert!(dyadic <= 2f64.powi(d as i32) * general * (1.0 + 1e-12));
    }

    #[test]
    fn cover_is_monotone_subadditive_and_bounded(
        n in 2u32..=6, a in points_in_v(3, 6, 60), b in points_in_v(3, 6, 60), alpha in 0.2..3.5f64,
    ) {
        let h = MeasureFunction::Alpha(alpha);
        let nu = |s: &[LatticePoint]| nu_dyadic(s, n, &h).unwrap().value;
        let union: Vec<LatticePoint> = a.iter().chain(&b).copied().collect();
        let (va, vb, vu) = (nu(&a), nu(&b), nu(&union));
        prop_assert!(va <= vu * (1.0 + 1e-12));
        prop_assert!(vb <= vu * (1.0 + 1e-12));
        prop_assert!(vu <= (va + vb) * (1.0 + 1e-12));
        prop_assert!(vu <= 8.0 * h.eval(0.5) * (1.0 + 1e-12));
    }

    #[test]
    fn greedy_packing_is_admissible(n in 2u32..=7, pts in points_in_v(3, 7, 50), eps in 0.05..0.95f64) {
        let shell = shell_of(&pts, n);
        let h = MeasureFunction::Alpha(1.0);
        let r = tau_pack(&shell, n, eps, &h).unwrap();
        let top = max_pack_level(n, eps);
        let cubes: Vec<Cube> = r.cubes.iter().map(|(x, k)| packing_cube(x, *k)).collect();
        for (i, (x, k)) in r.cubes.iter().enumerate() {
            prop_assert!(shell.contains(x));
            prop_assert!(*k <= top);
            for c in &cubes[i + 1..] {
                prop_assert!(!cubes[i].intersects(c));
            }
        }
        let value: f64 = r.cubes.iter().map(|(_, k)| h.eval(2f64.powi(*k as i32 - n as i32))).sum();
        prop_assert!((value - r.value).abs() <= 1e-12 * value.max(1e-300));
        if shell.len() <= 12 {
            let best = exhaustive_pack_value(&shell, n, eps, &h).unwrap();
            prop_assert!(r.value <= best * (1.0 + 1e-12));
            prop_assert_eq!(r.exact, r.value >= best * (1.0 - 1e-12));
        }
    }
}
