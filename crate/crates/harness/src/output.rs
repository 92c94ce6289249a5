//! CSV tables, JSON summaries and provenance blocks.
//!
//! Table layouts (one header row each):
//!
//! * `dimension.csv`: `replica,env_seed,jumps,steps,vsrw_time,points,alpha_h,alpha_h_se,alpha_h_status,alpha_p,alpha_p_se,alpha_p_status`
//! * `dimension_slopes.csv`: `replica,alpha,nu_slope,nu_slope_se,tau_slope,tau_slope_se`
//! * `hitting.csv`: `replica,shell,skeleton_hit,full_hit`
//! * `wiener.csv`: `shell,points,capacity,term,partial_sum,radius`
//! * `check_<name>.csv`: the columns listed in the report
//! * `capacity.csv`: `x0,...,x{d-1},charge`
//! * `testset.csv`: `shell,x0,...,x{d-1}`
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always give equal bytes.

use crate::checks::CheckReport;
use crate::config::ExperimentConfig;
use crate::dimension::{status_label, DimensionReport};
use crate::hitting::HittingReport;
use crate::testset::TestSet;
use anyhow::{Context, Result};
use rcm_core::potential::{CapacityResult, WienerSeries};
use serde::Serialize;
use std::path::Path;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_dimension_csv(dir: &Path, report: &DimensionReport) -> Result<()> {
    let mut w = writer(&dir.join("dimension.csv"))?;
    w.write_record([
        "replica", "env_seed", "jumps", "steps", "vsrw_time", "points", "alpha_h", "alpha_h_se", "alpha_h_status",
        "alpha_p", "alpha_p_se", "alpha_p_status",
    ])?;
    for r in &report.replicas {
        let points: usize = r.shell_points.iter().map(|s| s.1).sum();
        w.write_record([
            r.replica.to_string(),
            r.env_seed.to_string(),
            r.jumps.to_string(),
            r.steps.to_string(),
            r.vsrw_time.to_string(),
            points.to_string(),
            r.hausdorff.alpha_hat.to_string(),
            r.hausdorff.stderr.to_string(),
            status_label(r.hausdorff.status).to_string(),
            r.packing.alpha_hat.to_string(),
            r.packing.stderr.to_string(),
            status_label(r.packing.status).to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = writer(&dir.join("dimension_slopes.csv"))?;
    w.write_record(["replica", "alpha", "nu_slope", "nu_slope_se", "tau_slope", "tau_slope_se"])?;
    for r in &report.replicas {
        for (h, p) in r.hausdorff.slopes.iter().zip(&r.packing.slopes) {
            w.write_record([
                r.replica.to_string(),
                h.alpha.to_string(),
                h.slope.to_string(),
                h.stderr.to_string(),
                p.slope.to_string(),
                p.stderr.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_hitting_csv(dir: &Path, report: &HittingReport) -> Result<()> {
    let mut w = writer(&dir.join("hitting.csv"))?;
    w.write_record(["replica", "shell", "skeleton_hit", "full_hit"])?;
    for r in &report.replicas {
        for (i, (s, f)) in r.skeleton_hits.iter().zip(&r.full_hits).enumerate() {
            w.write_record([r.replica.to_string(), (i + 1).to_string(), (*s as u8).to_string(), (*f as u8).to_string()])?;
        }
    }
    w.flush()?;
    if let Some(series) = &report.wiener {
        write_wiener_csv(dir, series)?;
    }
    Ok(())
}

pub fn write_wiener_csv(dir: &Path, series: &WienerSeries) -> Result<()> {
    let mut w = writer(&dir.join("wiener.csv"))?;
    w.write_record(["shell", "points", "capacity", "term", "partial_sum", "radius"])?;
    for t in &series.terms {
        w.write_record([
            t.shell.to_string(),
            t.points.to_string(),
            t.capacity.to_string(),
            t.term.to_string(),
            t.partial_sum.to_string(),
            t.radius.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_check_csv(dir: &Path, report: &CheckReport) -> Result<()> {
    let mut w = writer(&dir.join(format!("check_{}.csv", report.name)))?;
    w.write_record(&report.columns)?;
    for row in &report.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_capacity_csv(dir: &Path, cap: &CapacityResult) -> Result<()> {
    let mut w = writer(&dir.join("capacity.csv"))?;
    let d = cap.set.first().map_or(0, |p| p.dim());
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("charge".into());
    w.write_record(&header)?;
    for (p, b) in cap.set.iter().zip(&cap.charge) {
        let mut rec: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
        rec.push(b.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_testset_csv(dir: &Path, set: &TestSet) -> Result<()> {
    let mut w = writer(&dir.join("testset.csv"))?;
    let mut header = vec!["shell".to_string()];
    header.extend((0..set.dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (n, pts) in &set.shells {
        for p in pts {
            let mut rec = vec![n.to_string()];
            rec.extend(p.coords().iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Plain-text provenance: config hash, versions, seeds and the full config.
pub fn provenance(cfg: &ExperimentConfig, command: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!("command: {command}\n"));
    s.push_str(&format!("config_sha256: {}\n", cfg.hash()));
    s.push_str(&format!("rcm-harness: {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("rcm-core: {}\n", rcm_core::VERSION));
    s.push_str(&format!("master_seed: {}\n", cfg.seed));
    match cfg.env_seed {
        Some(e) => s.push_str(&format!("env_seed: {e} (shared by all replicas)\n")),
        None => s.push_str("env_seed: per replica, derived from master_seed\n"),
    }
    s.push_str(&format!("replicas: {}\nthreads: {}\n", cfg.replicas, cfg.threads));
    s.push_str("\n[config]\n");
    s.push_str(&cfg.to_toml());
    s
}

pub fn write_provenance(dir: &Path, cfg: &ExperimentConfig, command: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("provenance.txt"), provenance(cfg, command))?;
    Ok(())
}
