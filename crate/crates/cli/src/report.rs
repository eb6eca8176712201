//! Report assembly: CSV tables plus `summary.json` with a provenance header.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Converge,
    Fixpoint,
    Contract,
    Treelike,
    Bounds,
}

impl Verb {
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Converge => "converge",
            Verb::Fixpoint => "fixpoint",
            Verb::Contract => "contract",
            Verb::Treelike => "treelike",
            Verb::Bounds => "bounds",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named CSV file held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Table {
    pub fn new<R: Serialize>(name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> anyhow::Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.serialize(row)?;
        }
        Ok(Table { name: name.to_string(), bytes: w.into_inner().context("flushing CSV")? })
    }

    pub fn from_bytes(name: &str, bytes: Vec<u8>) -> Self {
        Table { name: name.to_string(), bytes }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub verb: Verb,
    pub pass: bool,
    pub measured: Value,
    pub warnings: Vec<String>,
    pub tables: Vec<Table>,
    pub config: ExperimentConfig,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary(&self) -> Value {
        json!({
            "provenance": {
                "tool": "stochrec",
                "version": env!("CARGO_PKG_VERSION"),
                "command": self.verb,
                "seed": self.config.run.seed,
                "config": self.config,
            },
            "pass": self.pass,
            "measured": self.measured,
            "warnings": self.warnings,
            "files": self.tables.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(),
        })
    }

    /// Writes every table and `summary.json` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for t in &self.tables {
            let path = dir.join(&t.name);
            std::fs::write(&path, &t.bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        let mut text = serde_json::to_string_pretty(&self.summary())?;
        text.push('\n');
        std::fs::write(dir.join("summary.json"), text).context("writing summary.json")?;
        Ok(())
    }
}
