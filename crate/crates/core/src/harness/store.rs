//! Line-delimited trajectory store, one file per condition label.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Trajectory};

fn ends_mid_line(path: &Path) -> std::io::Result<bool> {
    let mut f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(e),
    };
    if f.metadata()?.len() == 0 {
        return Ok(false);
    }
    f.seek(SeekFrom::End(-1))?;
    let mut last = [0u8; 1];
    f.read_exact(&mut last)?;
    Ok(last[0] != b'\n')
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredTrajectory {
    pub fingerprint: String,
    pub trajectory: Trajectory,
}

/// Appends are serialized by an internal lock so parallel workers can
/// persist results as they finish.
#[derive(Debug)]
pub struct TrajectoryStore {
    dir: PathBuf,
    lock: Mutex<()>,
}

impl TrajectoryStore {
    pub fn open(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, label: &str) -> PathBuf {
        self.dir.join(format!("{label}.jsonl"))
    }

    /// Stored trajectories by fingerprint. Lines that do not parse (for
    /// example a write cut short by a kill) are skipped.
    pub fn load(&self, label: &str) -> Result<HashMap<String, Trajectory>, HarnessError> {
        let path = self.path(label);
        if !path.exists() {
            return Ok(HashMap::new());
        }
        let text = fs::read_to_string(&path)?;
        let mut out = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<StoredTrajectory>(line) {
                Ok(st) => {
                    out.insert(st.fingerprint, st.trajectory);
                }
                Err(e) => log::warn!("{}: skipping unreadable line {}: {e}", path.display(), i + 1),
            }
        }
        Ok(out)
    }

    pub fn append(&self, label: &str, fingerprint: &str, trajectory: &Trajectory) -> Result<(), HarnessError> {
        let line = serde_json::to_string(&StoredTrajectory {
            fingerprint: fingerprint.to_string(),
            trajectory: trajectory.clone(),
        })
        .map_err(|e| HarnessError::Store(e.to_string()))?;
        let _guard = self.lock.lock().expect("store lock");
        let path = self.path(label);
        // A previous run may have died mid-line; start on a fresh line.
        let needs_newline = ends_mid_line(&path)?;
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        if needs_newline {
            f.write_all(b"\n")?;
        }
        f.write_all(line.as_bytes())?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    /// Replaces the file for `label` with exactly `entries`, in order.
    pub fn rewrite(&self, label: &str, entries: &[(String, Trajectory)]) -> Result<(), HarnessError> {
        let mut text = String::new();
        for (fp, t) in entries {
            let line = serde_json::to_string(&StoredTrajectory {
                fingerprint: fp.clone(),
                trajectory: t.clone(),
            })
            .map_err(|e| HarnessError::Store(e.to_string()))?;
            text.push_str(&line);
            text.push('\n');
        }
        let _guard = self.lock.lock().expect("store lock");
        let path = self.path(label);
        let tmp = path.with_extension("jsonl.tmp");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}
