//! Analysis reports: one JSON document per run, plus a flat text dump of the same values.

use std::collections::BTreeMap;
use std::path::Path;

use funcmetric::metric::NonInferiorityDecision;
use funcmetric::random_effects::RandomCoefParams;
use funcmetric::{BootstrapResult, ResponseCurve};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub command: String,
    pub argv: Vec<String>,
    /// Resolved settings after merging defaults, config file and flags.
    pub settings: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<ArmFit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<ArmSelection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<WindowMetric>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_effects: Option<RandomEffectsSummary>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            argv,
            settings: BTreeMap::new(),
            dataset: None,
            fits: Vec::new(),
            selections: Vec::new(),
            metrics: Vec::new(),
            simulation: None,
            random_effects: None,
            warnings: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.settings.insert(
            key.to_string(),
            serde_json::to_value(value).expect("settings are plain data"),
        );
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| CliError::io(path, e))
    }

    /// Text rendering: every scalar of the JSON document as `path  value`.
    /// Long numeric arrays (bootstrap replicates) are elided.
    pub fn to_human(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        let width = lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        lines
            .iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let join = |key: &str| {
        if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        }
    };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, out);
            }
        }
        Value::Array(items) if items.len() > 16 && items.iter().all(Value::is_number) => {
            out.push((prefix.to_string(), "(elided; see JSON report)".into()));
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), "-".into())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub rows: usize,
    pub arms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFit {
    pub arm: String,
    pub model: String,
    /// Named estimates: `alpha`, `beta`, `se_alpha`, ... for parametric fits;
    /// `degree`, `ks_pvalue`, `t_min`, `t_max` for Bernstein fits.
    pub estimates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta: Vec<f64>,
    pub converged: bool,
    pub curve: ResponseCurve,
    /// Observed `(time, proportion)` pairs.
    pub observed: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSelection {
    pub arm: String,
    pub alpha_threshold: f64,
    pub candidates: Vec<CandidateRow>,
    pub chosen_m: Option<usize>,
    /// Degree actually used: `chosen_m`, or the best p-value when nothing qualified.
    pub used_m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub m: usize,
    pub ks_pvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetric {
    pub arm1: String,
    pub arm2: String,
    pub a: f64,
    pub b: f64,
    pub p: String,
    pub estimate: f64,
    pub scaled: f64,
    pub normalized: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noninferiority: Option<NonInferiorityDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub failed: usize,
    pub seed: u64,
    pub se: f64,
    pub level: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub median: f64,
    pub values: Vec<f64>,
}

impl From<&BootstrapResult> for BootstrapSummary {
    fn from(b: &BootstrapResult) -> Self {
        Self {
            replicates: b.n_requested,
            failed: b.n_failed,
            seed: b.seed,
            se: b.se,
            level: b.ci_level,
            ci_lower: b.ci_lower,
            ci_upper: b.ci_upper,
            median: b.median,
            values: b.replicate_values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub l0: f64,
    pub n_points: usize,
    pub estimators: Vec<EstimatorRow>,
    pub mean_m_arm1: f64,
    pub mc_se_m_arm1: f64,
    pub mean_m_arm2: f64,
    pub mc_se_m_arm2: f64,
    pub selection_fallbacks: usize,
    pub failed_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub estimator: String,
    pub mean_rb: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffectsSummary {
    pub studies: usize,
    pub params: RandomCoefParams,
    /// Keyed by parameter name.
    pub std_errors: Option<BTreeMap<String, f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub prob_alpha_above_one: f64,
    /// Marginal mean response `(time, E[theta(t)])`.
    pub marginal_curve: Vec<[f64; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn human_dump_lists_scalars() {
        let mut r = AnalysisReport::new("fit", vec!["fit".into()]);
        r.set("p", 1.0);
        r.warnings.push("careful".into());
        let text = r.to_human();
        assert!(text.contains("settings.p") && text.contains("warnings.0"));
        assert!(text.contains("careful"));
    }
}
