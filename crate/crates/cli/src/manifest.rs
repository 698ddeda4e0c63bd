use std::path::Path;

use ampf_core::MetricsReport;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct MetricSummary {
    pub closed_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscr: Option<f64>,
}

impl From<&MetricsReport> for MetricSummary {
    fn from(r: &MetricsReport) -> Self {
        MetricSummary {
            closed_acc: r.closed_acc,
            auroc: r.auroc,
            oscr: r.oscr,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub strategy: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub steps: usize,
    pub final_radius: f64,
    /// Files written to the output directory, by name.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricSummary>,
    pub config: RunConfig,
}

impl RunManifest {
    /// Writes `manifest.json` in `dir` through a temporary file and a rename.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        for a in &self.artifacts {
            if !dir.join(a).is_file() {
                return Err(CliError::Runtime(format!("manifest lists missing artifact {a}")));
            }
        }
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let tmp = dir.join("manifest.json.tmp");
        let fail = |e: std::io::Error| CliError::Runtime(format!("writing manifest in {}: {e}", dir.display()));
        std::fs::write(&tmp, text + "\n").map_err(fail)?;
        std::fs::rename(&tmp, dir.join("manifest.json")).map_err(fail)
    }
}
