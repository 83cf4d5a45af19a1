//! CSV and metadata writers. Every CSV opens with a schema line; every run
//! leaves a JSON file embedding the resolved config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

/// Bumped whenever any CSV layout changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("HSI_GIT_DESCRIBE"));

/// Shortest text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub struct Csv {
    name: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(name: &'static str, header: Vec<String>) -> Self {
        Self {
            name,
            header,
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "# hsi-{} schema v{CSV_SCHEMA_VERSION}", self.name)?;
        writeln!(out, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(out, "{}", r.join(","))?;
        }
        out.flush()
    }
}

pub fn conventions(cfg: &ExperimentConfig) -> Value {
    json!({
        "basis": "site 0 is the least significant bit; bit 0 is spin up (sigma_z = +1)",
        "charge": "Q = sum_j sigma_z_j = L - 2 * (number of down spins)",
        "parity": "(-1)^(number of down spins)",
        "boundary": "periodic for Hamiltonians, open chain for circuit ZZ gates",
        "entropy_units": "nats, half-chain cut after site L/2 - 1",
        "late_window": "final half of the time grid",
        "n_threshold": cfg.sweep.threshold,
        "n_under_disorder": "mean of per-realization N",
        "sector_cutoff": hsi_core::dynamics::NEGLIGIBLE_SECTOR,
        "float_format": "shortest round-trip decimal",
    })
}

/// Output run: a directory plus the files written so far.
pub struct Run {
    pub dir: PathBuf,
    files: Vec<String>,
}

impl Run {
    pub fn new(dir: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    pub fn csv(&mut self, file: &str, csv: &Csv) -> std::io::Result<()> {
        csv.write(&self.dir.join(file))?;
        self.files.push(file.to_string());
        Ok(())
    }

    pub fn json(&mut self, file: &str, value: &impl Serialize) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        fs::write(self.dir.join(file), text)?;
        self.files.push(file.to_string());
        Ok(())
    }

    /// Writes `<command>.meta.json` and returns its path.
    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig, results: Value) -> std::io::Result<PathBuf> {
        let file = format!("{command}.meta.json");
        let meta = json!({
            "schema_version": CSV_SCHEMA_VERSION,
            "tool": "hsi",
            "version": VERSION,
            "command": command,
            "config": cfg,
            "conventions": conventions(cfg),
            "outputs": self.files,
            "results": results,
        });
        self.json(&file, &meta)?;
        Ok(self.dir.join(file))
    }
}
