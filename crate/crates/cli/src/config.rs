//! The JSON run configuration and its merge with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cqreg::harness::ExperimentPlan;

use crate::error::{io, CliError, CliResult};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_B: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformOp {
    Log,
    Square,
    /// Yes/no text (`Y`, `yes`, `true`, `1` and their negatives) to 1/0.
    Indicator,
}

/// A derived column, `name = op(column)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transform {
    pub column: String,
    pub op: TransformOp,
    /// Name of the new column; defaults to `log_<column>`, `<column>_sq` or
    /// `<column>_ind`.
    #[serde(rename = "as", default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Transform {
    pub fn output_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| match self.op {
            TransformOp::Log => format!("log_{}", self.column),
            TransformOp::Square => format!("{}_sq", self.column),
            TransformOp::Indicator => format!("{}_ind", self.column),
        })
    }
}

/// One inequality `Σ_j coefficients[j] · β_j ≥ bound`, keyed by column name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRow {
    pub coefficients: BTreeMap<String, f64>,
    #[serde(default)]
    pub bound: f64,
}

/// Keeps rows whose `column` text lies in `[from, to]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowRange {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
}

/// Parameters of the `gen` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub setting: u8,
    pub n: usize,
    #[serde(default = "one")]
    pub beta0: f64,
    #[serde(default)]
    pub beta1: f64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Rows are sorted by this column's text before fitting (ISO dates sort
    /// correctly); otherwise file order is the time order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub between: Option<RowRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default)]
    pub predictors: Vec<String>,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub transforms: Vec<Transform>,
    #[serde(default)]
    pub constraints: Vec<ConstraintRow>,
    /// Dense alternative to `constraints`: rows of `C` over the design
    /// columns (intercept first when present).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_offset: Option<Vec<f64>>,
    #[serde(default)]
    pub tested: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub clip_ci: bool,
    #[serde(default)]
    pub dump_replicates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<ExperimentPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(DEFAULT_TAU)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    pub fn replicates(&self) -> usize {
        self.b.unwrap_or(DEFAULT_B)
    }

    pub fn seed_value(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Fills every defaulted scalar so the echo records what actually ran.
    pub fn resolved(mut self) -> Self {
        self.tau = Some(self.tau());
        self.alpha = Some(self.alpha());
        self.b = Some(self.replicates());
        self.seed = Some(self.seed_value());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"tau": 0.5, "taus": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(
            r#"{"transforms": [{"column": "p", "op": "log", "bogus": 1}]}"#
        )
        .is_err());
    }

    #[test]
    fn parses_full_config() {
        let c: RunConfig = serde_json::from_str(
            r#"{
                "input": "d.csv", "response": "y", "predictors": ["log_p", "s"],
                "transforms": [{"column": "p", "op": "log"}, {"column": "t", "op": "square", "as": "t2"}],
                "constraints": [{"coefficients": {"log_p": -1.0}, "bound": 0.0}],
                "tested": ["s"], "tau": 0.5, "B": 200, "seed": 3
            }"#,
        )
        .unwrap();
        assert_eq!(c.transforms[0].output_name(), "log_p");
        assert_eq!(c.transforms[1].output_name(), "t2");
        assert_eq!(c.replicates(), 200);
        assert!(c.intercept);
        let r = c.resolved();
        assert_eq!(r.alpha, Some(DEFAULT_ALPHA));
    }
}
