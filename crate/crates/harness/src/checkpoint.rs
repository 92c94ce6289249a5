//! Resumable snapshots of long walks.

use anyhow::{Context, Result};
use rcm_core::walk::{RangeSet, WalkerState};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Everything needed to continue a dimension replica: the walker (position,
/// both clocks, jump counters, rng state) and the range recorded so far.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub config_hash: String,
    pub replica: usize,
    pub walker: WalkerState,
    pub range: RangeSet,
}

pub fn path_for(dir: &Path, replica: usize) -> PathBuf {
    dir.join(format!("replica-{replica:04}.ckpt.json"))
}

/// Atomically replace the snapshot file.
pub fn save(dir: &Path, snap: &Snapshot) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = path_for(dir, snap.replica);
    let tmp = path.with_extension("tmp");
    let file = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    serde_json::to_writer(std::io::BufWriter::new(file), snap)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

/// Load a snapshot for `replica` if one exists and was written under the same
/// configuration. Snapshots from other configurations are ignored.
pub fn load(dir: &Path, replica: usize, config_hash: &str) -> Result<Option<Snapshot>> {
    let path = path_for(dir, replica);
    if !path.exists() {
        return Ok(None);
    }
    let file = std::fs::File::open(&path)?;
    let snap: Snapshot = serde_json::from_reader(std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    Ok((snap.config_hash == config_hash && snap.replica == replica).then_some(snap))
}

pub fn remove(dir: &Path, replica: usize) {
    let _ = std::fs::remove_file(path_for(dir, replica));
}
