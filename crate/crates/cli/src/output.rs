//! Result files and the checksummed manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use profile_shift_core::{Grid, Trajectory};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    threads: usize,
    config: &'a ExperimentConfig,
    timings_ms: &'a BTreeMap<String, f64>,
    files: &'a [FileEntry],
}

/// Writes files into one directory and records each in the manifest.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> std::io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(FileEntry {
            name: name.into(),
            bytes: contents.len(),
            sha256: hex::encode(Sha256::digest(contents)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `metadata.json`, which lists every other file written so far.
    pub fn finish(
        self,
        command: &str,
        config: &ExperimentConfig,
        timings_ms: &BTreeMap<String, f64>,
    ) -> std::io::Result<Vec<FileEntry>> {
        let meta = Metadata {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            threads: rayon::current_num_threads(),
            config,
            timings_ms,
            files: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&meta).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(self.dir.join("metadata.json"), text)?;
        Ok(self.files)
    }
}

/// Indices of retained slices: every `stride`-th, plus the last.
pub fn retained_slices(len: usize, stride: usize) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if keep.last() != Some(&(len - 1)) {
        keep.push(len - 1);
    }
    keep
}

/// Node coordinates, then one column per retained slice; the header holds the slice times.
pub fn trajectory_csv(grid: &Grid, trajectory: &Trajectory, stride: usize) -> String {
    let keep = retained_slices(trajectory.len(), stride);
    let axes = ["x", "y"];
    let mut out = String::new();
    let mut header: Vec<String> = axes[..grid.dimension()]
        .iter()
        .map(|a| a.to_string())
        .collect();
    header.extend(
        keep.iter()
            .map(|&k| format!("{:e}", trajectory.slices[k].t)),
    );
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..grid.len() {
        let p = grid.coordinates(i);
        for (axis, coord) in p[..grid.dimension()].iter().enumerate() {
            if axis > 0 {
                out.push(',');
            }
            let _ = write!(out, "{coord:e}");
        }
        for &k in &keep {
            let _ = write!(out, ",{:e}", trajectory.slices[k].values[i]);
        }
        out.push('\n');
    }
    out
}
