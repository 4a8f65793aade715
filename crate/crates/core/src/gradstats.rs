//! Moment statistics of gradient distributions, Gaussian KDE with Silverman's
//! bandwidth, and the per-DOF mean-moment nonlinearity metrics.
//!
//! Kurtosis is the Pearson (non-excess) kurtosis `m4 / m2^2`, so a Gaussian
//! gives 3 and an inverse kurtosis of 1/3; very peaked distributions push the
//! inverse kurtosis toward zero. The KDE is only used for plots; metrics are
//! computed from the raw samples.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{LaggedDataset, Part};
use crate::error::{Error, Result};
use crate::gradients::{gradient_field_with, GradientOptions, GradientSampleSet};
use crate::neuralnet::{evaluate, MlpModel};

pub const DEFAULT_GRID_SIZE: usize = 512;

/// Kernel contributions beyond this many bandwidths are below 1e-22 and skipped.
const KERNEL_CUTOFF: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// Population standard deviation.
    pub std: f64,
    /// `m3 / m2^1.5`; `None` for zero variance.
    pub skewness: Option<f64>,
    /// `m4 / m2^2`; `None` for zero variance.
    pub kurtosis: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Std,
    Skewness,
    Kurtosis,
    InverseKurtosis,
}

impl Moment {
    pub fn name(self) -> &'static str {
        match self {
            Moment::Std => "std",
            Moment::Skewness => "skewness",
            Moment::Kurtosis => "kurtosis",
            Moment::InverseKurtosis => "inverse_kurtosis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub standard_deviation: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub inverse_kurtosis: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Population standard deviation, skewness and Pearson kurtosis (two-pass).
pub fn moments(samples: &[f64]) -> Result<Moments> {
    if samples.len() < 4 {
        return Err(Error::DegenerateSamples(format!(
            "need at least 4 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSamples("non-finite sample".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();
    // spread at the rounding level of the mean counts as constant
    if !(m2 > 0.0) || std <= 1e-14 * mean.abs() {
        return Ok(Moments {
            std: 0.0,
            skewness: None,
            kurtosis: None,
        });
    }
    Ok(Moments {
        std,
        skewness: Some(m3 / (m2 * std)),
        kurtosis: Some(m4 / (m2 * m2)),
    })
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb `0.9 min(sd, IQR / 1.34) n^(-1/5)` with the sample
/// standard deviation; a zero IQR falls back to the standard deviation.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples("bandwidth needs at least 2 samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::DegenerateSamples("samples have zero spread".into()));
    }
    Ok(0.9 * spread * n.powf(-0.2))
}

fn gaussian(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gaussian KDE on a uniform grid over `[min - 4h, max + 4h]`.
pub fn kde(samples: &[f64], grid_size: usize) -> Result<KdeCurve> {
    if grid_size < 2 {
        return Err(Error::invalid("grid_size", "need at least 2 grid points"));
    }
    let h = silverman_bandwidth(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let lo = sorted[0] - 4.0 * h;
    let hi = sorted[sorted.len() - 1] + 4.0 * h;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h);
    let grid: Vec<f64> = (0..grid_size).map(|i| lo + i as f64 * step).collect();
    let density = grid
        .iter()
        .map(|&x| {
            let first = sorted.partition_point(|&s| s < x - KERNEL_CUTOFF * h);
            let last = sorted.partition_point(|&s| s <= x + KERNEL_CUTOFF * h);
            norm * sorted[first..last]
                .iter()
                .map(|&s| gaussian((x - s) / h))
                .sum::<f64>()
        })
        .collect();
    Ok(KdeCurve {
        grid,
        density,
        bandwidth: h,
    })
}

impl KdeCurve {
    pub fn trapezoid_integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "x,density")?;
        for (x, d) in self.grid.iter().zip(&self.density) {
            writeln!(w, "{x},{d}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Moments of every gradient column. Zero-variance columns are an error.
pub fn column_stats(grads: &GradientSampleSet) -> Result<Vec<DistributionStats>> {
    grads
        .samples
        .columns()
        .into_iter()
        .enumerate()
        .map(|(j, col)| {
            let m = moments(&col.to_vec())?;
            let (skewness, kurtosis) = match (m.skewness, m.kurtosis) {
                (Some(s), Some(k)) => (s, k),
                _ => {
                    return Err(Error::DegenerateSamples(format!(
                        "gradient column {j} has zero variance"
                    )))
                }
            };
            Ok(DistributionStats {
                standard_deviation: m.std,
                skewness,
                kurtosis,
                inverse_kurtosis: 1.0 / kurtosis,
                count: col.len(),
            })
        })
        .collect()
}

/// Mean over input columns of the selected moment of the gradient distribution.
pub fn metric(grads: &GradientSampleSet, moment: Moment) -> Result<f64> {
    if grads.n_points() < 4 {
        return Err(Error::DegenerateSamples(format!(
            "need at least 4 gradient samples, got {}",
            grads.n_points()
        )));
    }
    let d = grads.samples.ncols();
    let mut total = 0.0;
    for (j, col) in grads.samples.columns().into_iter().enumerate() {
        let m = moments(&col.to_vec())?;
        let value = match moment {
            Moment::Std => Some(m.std),
            Moment::Skewness => m.skewness,
            Moment::Kurtosis => m.kurtosis,
            Moment::InverseKurtosis => m.kurtosis.map(|k| 1.0 / k),
        };
        total += value.ok_or_else(|| {
            Error::DegenerateSamples(format!(
                "{} undefined for zero-variance gradient column {j}",
                moment.name()
            ))
        })?;
    }
    Ok(total / d as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mean_std: f64,
    pub mean_skewness: f64,
    pub mean_inverse_kurtosis: f64,
}

impl MetricTriple {
    pub fn get(&self, moment: Moment) -> Option<f64> {
        match moment {
            Moment::Std => Some(self.mean_std),
            Moment::Skewness => Some(self.mean_skewness),
            Moment::InverseKurtosis => Some(self.mean_inverse_kurtosis),
            Moment::Kurtosis => None,
        }
    }

    fn average(items: &[MetricTriple]) -> MetricTriple {
        let n = items.len() as f64;
        MetricTriple {
            mean_std: items.iter().map(|m| m.mean_std).sum::<f64>() / n,
            mean_skewness: items.iter().map(|m| m.mean_skewness).sum::<f64>() / n,
            mean_inverse_kurtosis: items.iter().map(|m| m.mean_inverse_kurtosis).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofMetrics {
    pub target_dof: usize,
    pub metrics: MetricTriple,
    /// NMSE (%) on train, validation and test parts.
    pub nmse: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMetricReport {
    pub state_label: String,
    pub dofs: Vec<DofMetrics>,
    pub floor_average: MetricTriple,
}

impl StateMetricReport {
    pub fn from_dofs(state_label: impl Into<String>, dofs: Vec<DofMetrics>) -> Result<Self> {
        if dofs.is_empty() {
            return Err(Error::invalid("dofs", "report needs at least one DOF"));
        }
        let triples: Vec<MetricTriple> = dofs.iter().map(|d| d.metrics).collect();
        Ok(Self {
            state_label: state_label.into(),
            floor_average: MetricTriple::average(&triples),
            dofs,
        })
    }

    pub fn dof(&self, target_dof: usize) -> Option<&DofMetrics> {
        self.dofs.iter().find(|d| d.target_dof == target_dof)
    }
}

/// Metric triple of one gradient sample set.
pub fn metric_triple(grads: &GradientSampleSet) -> Result<MetricTriple> {
    Ok(MetricTriple {
        mean_std: metric(grads, Moment::Std)?,
        mean_skewness: metric(grads, Moment::Skewness)?,
        mean_inverse_kurtosis: metric(grads, Moment::InverseKurtosis)?,
    })
}

/// Per-DOF metrics and floor averages for one state. `models[i]` must match `data[i]`.
pub fn state_report(
    state_label: &str,
    models: &[MlpModel],
    data: &[LaggedDataset],
    opts: &GradientOptions,
) -> Result<StateMetricReport> {
    if models.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            actual: data.len(),
        });
    }
    let dofs = models
        .iter()
        .zip(data)
        .map(|(model, ds)| {
            let grads = gradient_field_with(model, ds, opts)?;
            let nmse = [
                evaluate(model, ds, Part::Train)?,
                evaluate(model, ds, Part::Validation)?,
                evaluate(model, ds, Part::Test)?,
            ];
            Ok(DofMetrics {
                target_dof: grads.target_dof,
                metrics: metric_triple(&grads)
                    .map_err(|e| e.context(format!("state {state_label}, dof {}", grads.target_dof)))?,
                nmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    StateMetricReport::from_dofs(state_label, dofs)
}
