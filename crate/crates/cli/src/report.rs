use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

/// What a command ran and what came out of it. Deterministic for a fixed
/// seed in in-process mode; wall-clock time lives in [`Timing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub scenario: String,
    pub seed: u64,
    /// Messages published per topic.
    pub message_counts: BTreeMap<String, u64>,
    pub metrics: serde_json::Value,
    /// Data files written next to the report.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(command: &str, scenario: &str, seed: u64) -> Self {
        RunReport {
            command: command.into(),
            scenario: scenario.into(),
            seed,
            message_counts: BTreeMap::new(),
            metrics: serde_json::Value::Null,
            files: Vec::new(),
        }
    }

    pub fn counts(mut self, counts: &[(String, u64)]) -> Self {
        self.message_counts = counts.iter().cloned().collect();
        self
    }

    /// Writes `report.json` and `timing.json` into `out`.
    pub fn write(&self, out: &Path, wall_clock_s: f64) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(out.join("report.json"), text).context("writing report.json")?;
        let timing = Timing {
            command: self.command.clone(),
            wall_clock_s,
        };
        fs::write(
            out.join("timing.json"),
            serde_json::to_string_pretty(&timing)? + "\n",
        )
        .context("writing timing.json")?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<RunReport> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
