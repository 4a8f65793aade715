//! Detection threshold, per-state verdicts and their text rendering.

use serde::{Deserialize, Serialize};

use super::MetricTable;
use crate::error::{Error, Result};
use crate::gradstats::{MetricTriple, Moment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
}

/// `mean + sigmas * std` over the baseline-structure rows (sample std).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub mean: f64,
    pub std: f64,
    pub value: f64,
    pub n: usize,
}

impl Threshold {
    fn from_values(values: &[f64], sigmas: f64) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let std = var.sqrt();
        Self {
            mean,
            std,
            value: mean + sigmas * std,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVerdict {
    pub state: String,
    pub kind: String,
    pub gap: Option<f64>,
    pub mean_std: f64,
    pub mean_inverse_kurtosis: f64,
    /// Floor-averaged std above its threshold.
    pub std_exceeds: bool,
    /// Floor-averaged inverse kurtosis above its threshold: the detection decision.
    pub detected: bool,
    /// DOF with the largest inverse-kurtosis metric.
    pub localization_inverse_kurtosis: usize,
    /// DOF with the largest std metric.
    pub localization_std: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub lag: usize,
    pub sigmas: f64,
    pub threshold_std: Threshold,
    pub threshold_inverse_kurtosis: Threshold,
    pub states: Vec<StateVerdict>,
}

fn argmax_dof(report: &crate::gradstats::StateMetricReport, moment: Moment) -> usize {
    report
        .dofs
        .iter()
        .map(|d| (d.target_dof, d.metrics.get(moment).unwrap_or(f64::NEG_INFINITY)))
        .fold((0, f64::NEG_INFINITY), |best, (dof, v)| if v > best.1 { (dof, v) } else { best })
        .0
}

/// Thresholds come from the baseline state and its replicates only.
pub fn detection_report(table: &MetricTable) -> Result<DetectionReport> {
    let reference: Vec<&MetricTriple> = table
        .states
        .iter()
        .filter(|r| r.kind == "baseline" || r.kind == "baseline_replicate")
        .map(|r| &r.report.floor_average)
        .collect();
    if reference.len() < 2 {
        return Err(Error::MalformedManifest(format!(
            "need at least 2 baseline rows for a threshold, found {}",
            reference.len()
        )));
    }
    let stds: Vec<f64> = reference.iter().map(|m| m.mean_std).collect();
    let iks: Vec<f64> = reference.iter().map(|m| m.mean_inverse_kurtosis).collect();
    let threshold_std = Threshold::from_values(&stds, table.threshold_sigmas);
    let threshold_ik = Threshold::from_values(&iks, table.threshold_sigmas);
    let states = table
        .states
        .iter()
        .filter(|r| r.kind != "baseline_replicate")
        .map(|r| {
            let avg = r.report.floor_average;
            StateVerdict {
                state: r.report.state_label.clone(),
                kind: r.kind.clone(),
                gap: r.gap,
                mean_std: avg.mean_std,
                mean_inverse_kurtosis: avg.mean_inverse_kurtosis,
                std_exceeds: avg.mean_std > threshold_std.value,
                detected: avg.mean_inverse_kurtosis > threshold_ik.value,
                localization_inverse_kurtosis: argmax_dof(&r.report, Moment::InverseKurtosis),
                localization_std: argmax_dof(&r.report, Moment::Std),
            }
        })
        .collect();
    Ok(DetectionReport {
        lag: table.lag,
        sigmas: table.threshold_sigmas,
        threshold_std,
        threshold_inverse_kurtosis: threshold_ik,
        states,
    })
}

impl DetectionReport {
    pub fn verdict(&self, state: &str) -> Option<&StateVerdict> {
        self.states.iter().find(|s| s.state == state)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => {
                let mut out = String::from(
                    "state,kind,gap,mean_std,mean_inverse_kurtosis,std_exceeds,detected,localization_inverse_kurtosis,localization_std\n",
                );
                for s in &self.states {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{}\n",
                        s.state,
                        s.kind,
                        s.gap.map_or(String::new(), |g| g.to_string()),
                        s.mean_std,
                        s.mean_inverse_kurtosis,
                        s.std_exceeds,
                        s.detected,
                        s.localization_inverse_kurtosis,
                        s.localization_std
                    ));
                }
                out
            }
            ReportFormat::Table => {
                let t = &self.threshold_inverse_kurtosis;
                let ts = &self.threshold_std;
                let mut out = format!(
                    "lag {}\nthreshold inverse kurtosis: {:.5} (mean {:.5} + {} x std {:.5}, n = {})\nthreshold std:               {:.5} (mean {:.5} + {} x std {:.5}, n = {})\n\n",
                    self.lag, t.value, t.mean, self.sigmas, t.std, t.n, ts.value, ts.mean, self.sigmas, ts.std, ts.n
                );
                let width = self.states.iter().map(|s| s.state.len()).max().unwrap_or(5).max(5);
                out.push_str(&format!(
                    "{:<width$}  {:<16}  {:>10}  {:>10}  {:>10}  {:<8}  {:>8}\n",
                    "state", "kind", "gap [m]", "mean std", "mean 1/kurt", "detected", "location"
                ));
                for s in &self.states {
                    let location = if s.detected {
                        format!("dof{}", s.localization_inverse_kurtosis)
                    } else {
                        "-".into()
                    };
                    out.push_str(&format!(
                        "{:<width$}  {:<16}  {:>10}  {:>10.5}  {:>10.5}  {:<8}  {:>8}\n",
                        s.state,
                        s.kind,
                        s.gap.map_or("-".to_string(), |g| format!("{g:.3e}")),
                        s.mean_std,
                        s.mean_inverse_kurtosis,
                        if s.detected { "yes" } else { "no" },
                        location
                    ));
                }
                out
            }
        }
    }
}
