//! TOML scenario files: a [`SimScenario`] plus an optional power-curve
//! study.

use std::path::Path;

use capacc_core::capa::CapaConfig;
use capacc_core::estimate::structured_precision;
use capacc_core::{banded_adjacency, PrecisionModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simlab::{tune_scale, CurvePoint, Method, SimScenario, Statistic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(flatten)]
    pub scenario: SimScenario,
    #[serde(default)]
    pub study: Option<StudySpec>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Precision model a study method assumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodModel {
    /// The scenario's own precision matrix.
    True,
    Identity,
    /// Maximum likelihood fit to the true covariance under the `r`-banded
    /// pattern.
    Banded { r: usize },
}

/// Test a study method applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    /// Penalised saving of the first anomaly's window.
    Known,
    Capa,
    Changepoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub model: MethodModel,
    pub statistic: StatisticKind,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_delta() -> f64 {
    0.02
}

fn default_tune_reps() -> usize {
    1000
}

/// Power curves over `thetas`, every method tuned on null data of the
/// scenario's size first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    /// Free-form label written to the `parameter` column.
    #[serde(default)]
    pub parameter: String,
    pub thetas: Vec<f64>,
    pub reps: usize,
    #[serde(default = "default_tune_reps")]
    pub tune_reps: usize,
    #[serde(default = "default_alpha")]
    pub target_alpha: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    pub methods: Vec<MethodSpec>,
}

fn default_min_len() -> usize {
    2
}

impl StudySpec {
    /// Builds the methods and tunes each to the target false positive rate.
    pub fn tuned_methods(&self, scenario: &SimScenario, seed: u64) -> Result<Vec<(Method, f64)>> {
        let truth = scenario.precision.model(scenario.p)?;
        let mut out = Vec::new();
        for spec in &self.methods {
            let model = match spec.model {
                MethodModel::True => truth.clone(),
                MethodModel::Identity => PrecisionModel::identity(scenario.p)?,
                MethodModel::Banded { r } => {
                    structured_precision(&truth.covariance()?, &banded_adjacency(scenario.p, r)?)?
                }
            };
            let statistic = match spec.statistic {
                StatisticKind::Known => {
                    let a = scenario
                        .anomalies
                        .first()
                        .ok_or_else(|| Error::Usage("a known-window study needs an anomaly".into()))?;
                    Statistic::KnownSegment { s: a.s, e: a.e }
                }
                StatisticKind::Capa => Statistic::Capa(CapaConfig {
                    min_len: self.min_len,
                    ..CapaConfig::default()
                }),
                StatisticKind::Changepoint => Statistic::Changepoint { min_len: self.min_len },
            };
            let method = Method::new(spec.name.clone(), model, statistic)?;
            let tuning = tune_scale(&method, &truth, scenario.n, self.target_alpha, self.delta, self.tune_reps, seed)?;
            log::info!("{}: b = {:.4}, false positive rate {:.4}", spec.name, tuning.b, tuning.alpha_hat);
            out.push((method, tuning.b));
        }
        Ok(out)
    }
}

/// Writes curve points as tidy CSV `method,parameter,theta,power`.
pub fn write_curves<W: std::io::Write>(writer: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
