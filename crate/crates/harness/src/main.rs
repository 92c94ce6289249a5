use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rcm_core::geometry::shell_index;
use rcm_core::potential::{capacity, wiener_series, GreenSolveConfig, WienerConfig};
use rcm_core::walk::{RangeSet, StopRule};
use rcm_core::{LatticePoint, Walker};
use rcm_harness::checks::{self, CheckReport, SojournConfig};
use rcm_harness::config::ExperimentConfig;
use rcm_harness::hitting::WIENER_SHELLS;
use rcm_harness::{output, stream_rng, with_threads, STREAM_WALK};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rcm", version, about = "Random walks in random conductance and trap environments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one walk to the exit of V(0, 2^{n_max + extra_shells}) and
    /// summarise its range by shell.
    Simulate {
        #[arg(long, default_value_t = 0)]
        replica: usize,
    },
    /// Hausdorff and packing dimension of the range.
    Dimension,
    /// Capacity of a finite set in the environment of replica 0.
    Capacity {
        /// Points as `x,y,z;x,y,z;...`.
        #[arg(long)]
        points: String,
        /// Half-width of the solver box.
        #[arg(long, default_value_t = 32)]
        radius: i32,
    },
    /// Wiener series of a test set of dimension `beta`.
    Wiener {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = WIENER_SHELLS)]
        shells: u32,
    },
    /// Shell-by-shell hitting of a test set of dimension `beta`.
    Hitting {
        #[arg(long)]
        beta: f64,
    },
    /// Statistical checks.
    Checks {
        #[arg(long, value_enum, default_value_t = Which::All)]
        which: Which,
    },
    /// Build a test set and run its self-check.
    MakeSet {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 8)]
        shells: u32,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    All,
    Slln,
    HeatKernel,
    Maximal,
    Sojourn,
    Lil,
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(r) = g.replicas {
        cfg.replicas = r;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_points(s: &str, dim: usize) -> Result<Vec<LatticePoint>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let c: Vec<i32> = p.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>().context("bad coordinate")?;
            if c.len() != dim {
                bail!("point {p} has {} coordinates, expected {dim}", c.len());
            }
            Ok(LatticePoint::new(&c))
        })
        .collect()
}

fn report_check(cfg: &ExperimentConfig, r: &CheckReport) -> Result<()> {
    output::write_check_csv(&cfg.out, r)?;
    output::write_json(&cfg.out, &format!("check_{}.json", r.name), r)?;
    let fits: Vec<String> = r.fits.iter().map(|f| format!("{} = {:.4} +- {:.4}", f.name, f.value, f.stderr)).collect();
    println!(
        "{:<13} {}  {}{}",
        r.name,
        if r.passed { "PASS" } else { "FAIL" },
        fits.join(", "),
        if r.heuristic { "  [heuristic threshold]" } else { "" }
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.global)?;
    let dir = cfg.out.clone();
    let command = std::env::args().collect::<Vec<_>>().join(" ");
    output::write_provenance(&dir, &cfg, &command)?;
    match cli.command {
        Command::Simulate { replica } => {
            let env = cfg.environment(replica)?;
            let rng = stream_rng(cfg.seed, STREAM_WALK, replica as u64);
            let mut w = Walker::new(&env, LatticePoint::origin(cfg.dim), cfg.walk_clock(), rng)?.with_budget(cfg.jump_budget);
            let mut range = RangeSet::new(1, cfg.exit_shell(), true);
            range.clock = cfg.walk_clock();
            let reason = w.run_to_end(StopRule::ExitCube(cfg.exit_shell()), &mut range)?;
            let s = w.state();
            let shells: Vec<(u32, usize, usize)> = (1..=cfg.exit_shell())
                .map(|n| (n, range.full.shell(n).len(), range.skeleton.shell(n).len()))
                .collect();
            println!("stop {reason:?}, jumps {}, vsrw time {:.1}, csrw time {:.1}", s.jumps, s.vsrw_time, s.csrw_time);
            println!("shell  full  skeleton");
            for (n, f, k) in &shells {
                println!("{n:>5} {f:>6} {k:>9}");
            }
            debug_assert!(range.full.points().iter().all(|p| shell_index(p) <= cfg.exit_shell()));
            output::write_json(
                &dir,
                "simulate.json",
                &serde_json::json!({
                    "replica": replica,
                    "stop": format!("{reason:?}"),
                    "jumps": s.jumps,
                    "vsrw_time": s.vsrw_time,
                    "csrw_time": s.csrw_time,
                    "final_position": s.position.coords(),
                    "shells": shells,
                }),
            )?;
        }
        Command::Dimension => {
            let report = rcm_harness::run_dimension(&cfg)?;
            output::write_dimension_csv(&dir, &report)?;
            output::write_json(&dir, "dimension.json", &report)?;
            println!(
                "hausdorff {:.3} +- {:.3}   packing {:.3} +- {:.3}   ({} replicas, shells {}..{})",
                report.hausdorff.mean,
                report.hausdorff.stderr,
                report.packing.mean,
                report.packing.stderr,
                report.replicas.len(),
                report.shells.0,
                report.shells.1
            );
        }
        Command::Capacity { points, radius } => {
            let env = cfg.environment(0)?;
            let set = parse_points(&points, cfg.dim)?;
            let cap = capacity(&env, &set, &GreenSolveConfig::with_radius(radius))?;
            output::write_capacity_csv(&dir, &cap)?;
            output::write_json(&dir, "capacity.json", &cap)?;
            println!("capacity {:.8} (box radius {radius}, residual {:.2e})", cap.value, cap.residual);
        }
        Command::Wiener { beta, shells } => {
            let set = rcm_harness::make_test_set(beta, cfg.dim, shells)?;
            let series = wiener_series(&cfg.environment(0)?, &set.shells, shells, &WienerConfig::default())?;
            output::write_wiener_csv(&dir, &series)?;
            output::write_json(&dir, "wiener.json", &series)?;
            println!("ratio {:?}, class {:?}", series.ratio, series.class);
        }
        Command::Hitting { beta } => {
            let set = rcm_harness::make_test_set(beta, cfg.dim, WIENER_SHELLS)?;
            let report = rcm_harness::run_hitting(&cfg, &set)?;
            output::write_hitting_csv(&dir, &report)?;
            output::write_json(&dir, "hitting.json", &report)?;
            println!(
                "beta {beta}: {}; mean hit fraction {:.3}, last hit <= shell {} in {:.0}% of replicas, wiener {:?}",
                report.regime.label(),
                report.mean_hit_fraction,
                cfg.n_min,
                100.0 * report.early_last_hit_fraction,
                report.wiener.as_ref().map(|w| w.class)
            );
        }
        Command::Checks { which } => {
            let env = cfg.environment(0)?;
            let run = |w: Which| which == Which::All || which == w;
            let seed = cfg.seed;
            let reports = with_threads(cfg.threads, || -> Result<Vec<CheckReport>> {
                let mut out = Vec::new();
                if run(Which::Slln) {
                    out.push(checks::check_slln(0.5, 1.0, 0.5, 10_000, 100, seed));
                }
                if run(Which::HeatKernel) {
                    out.push(checks::check_heat_kernel(&env, &[16.0, 32.0, 64.0, 128.0], 50_000, seed)?);
                }
                if run(Which::Maximal) {
                    out.push(checks::check_maximal(&env, 4096.0, &[1.5, 2.0, 2.5, 3.0], 10_000, seed)?);
                }
                if run(Which::Sojourn) {
                    out.push(checks::check_sojourn_tail(&env, &SojournConfig::default(), seed)?);
                }
                if run(Which::Lil) {
                    let times: Vec<f64> = (8..=16).map(|k| 2f64.powi(k)).collect();
                    out.push(checks::check_lil(&env, &times, 200, seed)?);
                }
                Ok(out)
            })??;
            for r in &reports {
                report_check(&cfg, r)?;
            }
        }
        Command::MakeSet { beta, shells } => {
            let set = rcm_harness::make_test_set(beta, cfg.dim, shells)?;
            let (ok, est) = set.self_check()?;
            output::write_testset_csv(&dir, &set)?;
            output::write_json(&dir, "testset_check.json", &est)?;
            println!(
                "beta {beta}: {} points in shells 1..={shells}, estimated dimension {:.3} +- {:.3} ({})",
                set.shells.iter().map(|s| s.1.len()).sum::<usize>(),
                est.alpha_hat,
                est.stderr,
                if ok { "self-check ok" } else { "self-check FAILED" }
            );
        }
    }
    Ok(())
}
