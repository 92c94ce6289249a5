use rcm_core::geometry::shell_index;
use rcm_core::potential::hitting_prob_mc;
use rcm_core::walk::{simulate, RangeSet, StopRule, DEFAULT_JUMP_BUDGET};
use rcm_core::{LatticePoint, Walker};
use rcm_harness::checkpoint::{self, Snapshot};
use rcm_harness::checks::{check_lil, check_maximal, check_slln, slln_threshold};
use rcm_harness::config::{LawKind, RangeKind};
use rcm_harness::dimension::{estimate_shells, simulate_range};
use rcm_harness::testset::spacing_exponent;
use rcm_harness::{make_test_set, output, run_dimension, simulate_hits, stream_rng, ExperimentConfig, STREAM_WALK};
use std::path::Path;

fn small(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        law: LawKind::Uniform,
        replicas: 4,
        n_min: 4,
        n_max: 8,
        checkpoint_every: 0,
        out: out.to_path_buf(),
        ..Default::default()
    }
}

fn dimension_csv(cfg: &ExperimentConfig) -> (Vec<u8>, Vec<u8>) {
    let report = run_dimension(cfg).unwrap();
    output::write_dimension_csv(&cfg.out, &report).unwrap();
    (
        std::fs::read(cfg.out.join("dimension.csv")).unwrap(),
        std::fs::read(cfg.out.join("dimension_slopes.csv")).unwrap(),
    )
}

#[test]
fn csv_output_is_reproducible_and_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let a = small(&dir.path().join("a"));
    let b = ExperimentConfig { out: dir.path().join("b"), ..a.clone() };
    let c = ExperimentConfig { out: dir.path().join("c"), threads: 3, ..a.clone() };
    let first = dimension_csv(&a);
    assert_eq!(first, dimension_csv(&b));
    assert_eq!(first, dimension_csv(&c));
    let other = ExperimentConfig { out: dir.path().join("d"), seed: 2, ..a };
    assert_ne!(first.0, dimension_csv(&other).0);
}

#[test]
fn checkpointed_runs_match_uninterrupted_runs() {
    let dir = tempfile::tempdir().unwrap();
    let plain = small(&dir.path().join("plain"));
    let ckpt = ExperimentConfig { out: dir.path().join("ckpt"), checkpoint_every: 5_000, ..plain.clone() };
    assert_eq!(dimension_csv(&plain), dimension_csv(&ckpt));
    let left: Vec<_> = std::fs::read_dir(ckpt.out.join("checkpoints")).unwrap().collect();
    assert!(left.is_empty(), "finished replicas leave no snapshot");
}

#[test]
fn resume_from_a_snapshot_continues_the_same_walk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { range: RangeKind::Full, ..small(dir.path()) };
    let ckpt = dir.path().join("checkpoints");
    let replica = 2;
    let (reference, ref_state) = simulate_range(&cfg, replica, None).unwrap();

    // Interrupt a copy of the same walk and leave its snapshot behind.
    let env = cfg.environment(replica).unwrap();
    let rng = stream_rng(cfg.seed, STREAM_WALK, replica as u64);
    let mut w = Walker::new(&env, LatticePoint::origin(3), cfg.walk_clock(), rng).unwrap();
    let mut range = RangeSet::new(cfg.n_min, cfg.n_max, true);
    assert!(w.run(StopRule::ExitCube(cfg.exit_shell()), &mut range, Some(777)).unwrap().is_none());
    let snap = Snapshot { config_hash: cfg.hash(), replica, walker: w.state().clone(), range };
    checkpoint::save(&ckpt, &snap).unwrap();
    assert!(checkpoint::load(&ckpt, replica, "other-config").unwrap().is_none());
    assert!(checkpoint::load(&ckpt, replica, &cfg.hash()).unwrap().is_some());

    let (resumed, state) = simulate_range(&cfg, replica, Some(&ckpt)).unwrap();
    assert_eq!(state.jumps, ref_state.jumps);
    assert_eq!(state.position, ref_state.position);
    assert_eq!(state.vsrw_time, ref_state.vsrw_time);
    assert_eq!(resumed.full.points(), reference.full.points());
    assert_eq!(resumed.skeleton.points(), reference.skeleton.points());
    assert!(!checkpoint::path_for(&ckpt, replica).exists());
}

#[test]
fn estimates_agree_across_alpha_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { n_min: 5, n_max: 10, ..small(dir.path()) };
    for replica in 0..3 {
        let (range, _) = simulate_range(&cfg, replica, None).unwrap();
        let shells: Vec<(u32, Vec<LatticePoint>)> =
            (cfg.n_min..=cfg.n_max).map(|n| (n, range.skeleton.shell(n))).collect();
        let fine: Vec<f64> = (10..=60).map(|i| i as f64 * 0.05).collect();
        let coarse: Vec<f64> = (0..=24).map(|i| 0.55 + i as f64 * 0.1).collect();
        let (h1, p1) = estimate_shells(&shells, &fine, cfg.epsilon).unwrap();
        let (h2, p2) = estimate_shells(&shells, &coarse, cfg.epsilon).unwrap();
        assert!((h1.alpha_hat - h2.alpha_hat).abs() <= 0.1, "{} vs {}", h1.alpha_hat, h2.alpha_hat);
        assert!((p1.alpha_hat - p2.alpha_hat).abs() <= 0.1, "{} vs {}", p1.alpha_hat, p2.alpha_hat);
    }
}

#[test]
fn recurrent_dimensions_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { dim: 2, ..small(dir.path()) };
    let err = run_dimension(&cfg).unwrap_err();
    assert!(err.to_string().contains("d >= 3"), "{err}");
}

#[test]
fn test_set_examples() {
    let plane = make_test_set(2.0, 3, 9).unwrap();
    for (n, pts) in &plane.shells {
        let h = 1i32 << (n - 1);
        let expected = (-h..h)
            .flat_map(|i| (-h..h).map(move |j| LatticePoint::new(&[i, j, 0])))
            .filter(|p| shell_index(p) == *n)
            .count();
        assert_eq!(pts.len(), expected);
    }
    assert!((plane.estimate_dimension().unwrap().alpha_hat - 2.0).abs() <= 0.15);

    let sparse = make_test_set(0.5, 3, 9).unwrap();
    for n in 2..=9 {
        assert_eq!(spacing_exponent(0.5, 1, n), n.div_ceil(2).min(n - 1));
    }
    let (ok, est) = sparse.self_check().unwrap();
    assert!(ok && (est.alpha_hat - 0.5).abs() <= 0.25, "{est:?}");

    let thin = make_test_set(0.01, 3, 10).unwrap();
    for (n, pts) in thin.shells.iter().skip(1) {
        assert_eq!(pts, &vec![LatticePoint::new(&[-(1 << (n - 1)), 0, 0])]);
    }
    assert!(make_test_set(0.0, 3, 5).is_err());
    assert!(make_test_set(3.5, 3, 5).is_err());
    assert!(make_test_set(1.0, 3, 5).unwrap().is_critical());
}

#[test]
fn the_whole_lattice_is_hit_in_every_shell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { replicas: 3, n_min: 3, n_max: 7, ..small(dir.path()) };
    let all = make_test_set(3.0, 3, 7).unwrap();
    for r in simulate_hits(&cfg, &all).unwrap() {
        assert!(r.full_hits.iter().all(|&h| h), "{r:?}");
        assert_eq!(r.hit_fraction, 1.0);
    }
}

#[test]
fn shell_hits_agree_with_hitting_probabilities() {
    // One shared environment, so the per-shell hit rate over replicas
    // estimates the quenched hitting probability of A ∩ S_n.
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { env_seed: Some(99), replicas: 600, n_min: 3, n_max: 6, ..small(dir.path()) };
    let set = make_test_set(1.0, 3, 6).unwrap();
    let hits = simulate_hits(&cfg, &set).unwrap();
    let env = cfg.environment(0).unwrap();
    let origin = LatticePoint::origin(3);
    for n in [3u32, 5, 6] {
        let k = hits.iter().filter(|r| r.full_hits[n as usize - 1]).count() as f64;
        let rate = k / hits.len() as f64;
        let se_rate = (rate * (1.0 - rate) / hits.len() as f64).sqrt();
        let mc = hitting_prob_mc(&env, &origin, set.shell(n), 600, cfg.n_max, 1234 + n as u64).unwrap();
        let se = (se_rate.powi(2) + mc.stderr.powi(2)).sqrt().max(1e-3);
        assert!((rate - mc.mean).abs() <= 3.0 * se, "shell {n}: {rate} vs {mc:?}");
    }
}

#[test]
fn check_edge_cases() {
    let sure = check_slln(1.0, 0.0, 0.5, 1000, 5, 1);
    assert_eq!(sure.fit("min_tail_ratio").unwrap().value, 1.0);
    assert!(sure.passed);
    // A vanishing p measured against the threshold for p = 0.5 fails.
    let weak = check_slln(0.01, 1.0, 0.5, 10_000, 20, 2);
    assert!(weak.fit("min_tail_ratio").unwrap().value < slln_threshold(0.5));

    let dir = tempfile::tempdir().unwrap();
    let env = small(dir.path()).environment(0).unwrap();
    let t = simulate(&env, LatticePoint::origin(3), rcm_core::Clock::Vsrw, StopRule::Horizon(50.0),
        stream_rng(1, STREAM_WALK, 0), DEFAULT_JUMP_BUDGET).unwrap();
    assert_eq!(t.position_at(0.0).unwrap(), LatticePoint::origin(3));

    let max = check_maximal(&env, 256.0, &[0.01, 1.0, 2.0], 500, 3).unwrap();
    let tails: Vec<f64> = max.rows.iter().map(|r| r[1]).collect();
    assert_eq!(tails[0], 1.0);
    assert!(tails.windows(2).all(|w| w[1] <= w[0]));

    let lil = check_lil(&env, &[16.0], 1, 4).unwrap();
    let p95 = lil.rows[0][1];
    assert!(p95.is_finite() && p95 > 0.0);
}
