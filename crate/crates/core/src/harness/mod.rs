//! Experiment runners, result containers and their on-disk formats.

mod airtight;
mod fatigue;
mod gravity;
mod sweep;
mod tracking;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::config::fmt_num;
use crate::error::Result;

pub use airtight::{run_airtightness, Staircase, StaircaseStep};
pub use fatigue::{run_fatigue, valve_wear_hours, FatigueProtocol, Lifetime};
pub use gravity::{gravity_margin, GravityMargin, JointMargin, MAX_STACK_SEARCH};
pub use sweep::{sweep, sweep_sequential, SweepRow};
pub use tracking::{rmse_deg, run_tracking, RampSuite, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Airtightness,
    Tracking,
    Fatigue,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Airtightness => "airtight",
            ExperimentKind::Tracking => "track",
            ExperimentKind::Fatigue => "fatigue",
        }
    }
}

/// Column-major time-series log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Log {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Log {
    pub fn new(names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Self { names, columns }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.push(*v);
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.names.join(","))?;
        let mut line = String::new();
        for r in 0..self.len() {
            line.clear();
            for (i, c) in self.columns.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&fmt_num(c[r]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub log: Log,
    /// Named scalar metrics.
    pub summary: BTreeMap<String, f64>,
    /// Free-text annotations, e.g. whether an input profile is a stand-in.
    pub meta: BTreeMap<String, String>,
}

impl ExperimentResult {
    pub fn new(kind: ExperimentKind, log: Log) -> Self {
        Self {
            kind,
            log,
            summary: BTreeMap::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    pub fn set(&mut self, key: &str, v: f64) {
        self.summary.insert(key.into(), v);
    }

    pub fn note(&mut self, key: &str, v: impl Into<String>) {
        self.meta.insert(key.into(), v.into());
    }

    /// Flat `key = value` summary, metrics and annotations sorted together.
    pub fn summary_text(&self) -> String {
        let mut all: BTreeMap<&str, String> = BTreeMap::new();
        all.insert("experiment", self.kind.name().into());
        for (k, v) in &self.summary {
            all.insert(k, fmt_num(*v));
        }
        for (k, v) in &self.meta {
            all.insert(k, v.clone());
        }
        all.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Writes `<stem>.csv` (when the log has rows) and `<stem>_summary.txt`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if !self.log.names.is_empty() {
            let p = dir.join(format!("{stem}.csv"));
            let f = io::BufWriter::new(fs::File::create(&p)?);
            self.log.write_csv(f)?;
            written.push(p);
        }
        let p = dir.join(format!("{stem}_summary.txt"));
        fs::write(&p, self.summary_text())?;
        written.push(p);
        Ok(written)
    }
}
