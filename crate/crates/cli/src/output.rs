//! Report files: pretty JSON and one CSV row per ledger entry.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use dlab_core::Ledger;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }

    fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }

    fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }
}

/// Ledger tagged with the seed of the run that produced it.
#[derive(Debug, Clone)]
pub struct SeededLedger {
    pub seed: Option<u64>,
    pub ledger: Ledger,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub json: Value,
    pub ledgers: Vec<SeededLedger>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.ledgers.iter().all(|l| l.ledger.all_pass())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.json)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seed", "claimName", "claimed", "measured", "pass"])?;
        for SeededLedger { seed, ledger } in &self.ledgers {
            let seed = seed.map(|s| s.to_string()).unwrap_or_default();
            for c in &ledger.claims {
                w.write_record([
                    seed.as_str(),
                    &c.name,
                    &c.claimed.to_string(),
                    &c.measured.to_string(),
                    if c.pass { "true" } else { "false" },
                ])?;
            }
            for m in &ledger.measurements {
                w.write_record([seed.as_str(), &m.name, "", &m.value.to_string(), ""])?;
            }
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    /// Writes `<command>.json` and/or `<command>.csv`, creating `dir` if needed.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
        if !dir.exists() {
            fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
            eprintln!("created output directory {}", dir.display());
        }
        let mut written = Vec::new();
        if format.json() {
            let path = dir.join(format!("{}.json", self.command));
            fs::write(&path, self.to_json_string()?).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        if format.csv() {
            let path = dir.join(format!("{}.csv", self.command));
            fs::write(&path, self.to_csv_string()?).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}
