//! Lagged one-step-ahead datasets.
//!
//! Every sample maps the lagged accelerations of all channels (base included)
//! `[a(t-1), a(t-2), ..., a(t-lag)]` to the acceleration of the target floor(s)
//! at `t`. Input column `(k - 1) * n_channels + c` holds channel `c` at lag `k`.
//! Each source record forms one block; windows never cross block boundaries and
//! splits assign whole blocks to a part.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::TimeSeriesRecord;

const DATASET_FORMAT: &str = "nlgrad-dataset/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Validation,
    Test,
    All,
}

/// Block indices assigned to each part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-column statistics of the training part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

impl Normalization {
    /// Factor converting a normalized-space derivative d(target_out)/d(input_in) to raw units.
    pub fn gradient_scale(&self, output: usize, input: usize) -> f64 {
        self.target_std[output] / self.input_std[input]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedDataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub lag: usize,
    pub n_channels: usize,
    /// Target channel indices (floors are `1..=n_dof`).
    pub target_dofs: Vec<usize>,
    /// Row range `[start, end)` of every source record.
    pub blocks: Vec<(usize, usize)>,
    pub split: Option<Split>,
    /// Present when `inputs`/`targets` are in normalized units.
    pub normalization: Option<Normalization>,
}

/// `(channel, lag)` label of every input column.
pub fn column_labels(lag: usize, n_channels: usize) -> Vec<(usize, usize)> {
    (1..=lag)
        .flat_map(|k| (0..n_channels).map(move |c| (c, k)))
        .collect()
}

/// Human-readable column name, e.g. `base[t-1]` or `dof2[t-2]`.
pub fn column_name(channel: usize, lag: usize) -> String {
    if channel == 0 {
        format!("base[t-{lag}]")
    } else {
        format!("dof{channel}[t-{lag}]")
    }
}

/// Builds a single-target lagged dataset.
pub fn make_lagged(
    records: &[TimeSeriesRecord],
    lag: usize,
    target_dof: usize,
) -> Result<LaggedDataset> {
    make_lagged_multi(records, lag, &[target_dof])
}

/// Builds a lagged dataset with one target column per entry of `target_dofs`.
pub fn make_lagged_multi(
    records: &[TimeSeriesRecord],
    lag: usize,
    target_dofs: &[usize],
) -> Result<LaggedDataset> {
    if lag == 0 {
        return Err(Error::invalid("lag", "must be >= 1"));
    }
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("records", "need at least one record"))?;
    let n_channels = first.n_channels();
    for &d in target_dofs {
        if d == 0 || d >= n_channels {
            return Err(Error::invalid(
                "target_dof",
                format!("{d} is not a floor index in 1..={}", n_channels - 1),
            ));
        }
    }
    if target_dofs.is_empty() {
        return Err(Error::invalid("target_dof", "need at least one target"));
    }
    for (i, r) in records.iter().enumerate() {
        if r.n_channels() != n_channels {
            return Err(Error::LayoutMismatch(format!(
                "record {i} has {} channels, record 0 has {n_channels}",
                r.n_channels()
            )));
        }
        if (r.dt - first.dt).abs() > 1e-12 * first.dt.abs() {
            return Err(Error::LayoutMismatch(format!(
                "record {i} has dt {}, record 0 has {}",
                r.dt, first.dt
            )));
        }
        if r.n_samples() <= lag {
            return Err(Error::RecordTooShort {
                index: i,
                len: r.n_samples(),
                lag,
            });
        }
    }

    let n_rows: usize = records.iter().map(|r| r.n_samples() - lag).sum();
    let n_in = lag * n_channels;
    let mut inputs = Array2::zeros((n_rows, n_in));
    let mut targets = Array2::zeros((n_rows, target_dofs.len()));
    let mut blocks = Vec::with_capacity(records.len());
    let mut row = 0;
    for r in records {
        let start = row;
        for t in lag..r.n_samples() {
            let mut input_row = inputs.row_mut(row);
            for k in 1..=lag {
                let src = r.channels.row(t - k);
                for c in 0..n_channels {
                    input_row[(k - 1) * n_channels + c] = src[c];
                }
            }
            for (j, &d) in target_dofs.iter().enumerate() {
                targets[[row, j]] = r.channels[[t, d]];
            }
            row += 1;
        }
        blocks.push((start, row));
    }
    Ok(LaggedDataset {
        inputs,
        targets,
        lag,
        n_channels,
        target_dofs: target_dofs.to_vec(),
        blocks,
        split: None,
        normalization: None,
    })
}

/// Number of blocks per part by the largest-remainder rule (ties go to the earlier part).
pub fn split_counts(n_blocks: usize, fractions: [f64; 3]) -> [usize; 3] {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * n_blocks as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = ideal[i].floor() as usize;
    }
    let mut remaining = n_blocks.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if fractions[i] > 0.0 {
            counts[i] += 1;
            remaining -= 1;
        }
    }
    counts
}

impl LaggedDataset {
    pub fn n_samples(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn column_labels(&self) -> Vec<(usize, usize)> {
        column_labels(self.lag, self.n_channels)
    }

    /// Assigns whole blocks to train/validation/test, shuffled by `seed`.
    pub fn split(&self, fractions: [f64; 3], seed: u64) -> Result<LaggedDataset> {
        if fractions.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
            return Err(Error::invalid("split", "fractions must be non-negative"));
        }
        if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split", "fractions must sum to 1"));
        }
        let n_blocks = self.blocks.len();
        let counts = split_counts(n_blocks, fractions);
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::TooFewRepetitions {
                available: n_blocks,
                fractions,
            });
        }
        let mut order: Vec<usize> = (0..n_blocks).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let take = |lo: usize, hi: usize| {
            let mut v = order[lo..hi].to_vec();
            v.sort_unstable();
            v
        };
        let split = Split {
            train: take(0, counts[0]),
            validation: take(counts[0], counts[0] + counts[1]),
            test: take(counts[0] + counts[1], n_blocks),
        };
        let mut out = self.clone();
        out.split = Some(split);
        Ok(out)
    }

    /// Row indices of a part, in dataset order. `Part::All` and unsplit datasets give every row.
    pub fn rows(&self, part: Part) -> Vec<usize> {
        let blocks: Vec<usize> = match (&self.split, part) {
            (Some(s), Part::Train) => s.train.clone(),
            (Some(s), Part::Validation) => s.validation.clone(),
            (Some(s), Part::Test) => s.test.clone(),
            _ => (0..self.blocks.len()).collect(),
        };
        blocks
            .into_iter()
            .flat_map(|b| {
                let (lo, hi) = self.blocks[b];
                lo..hi
            })
            .collect()
    }

    /// Copies of the inputs and targets of one part.
    pub fn part(&self, part: Part) -> (Array2<f64>, Array2<f64>) {
        let rows = self.rows(part);
        (
            self.inputs.select(Axis(0), &rows),
            self.targets.select(Axis(0), &rows),
        )
    }

    /// Computes statistics on the training part and standardizes every column.
    pub fn normalize(&self) -> Result<LaggedDataset> {
        let stats = self.training_statistics()?;
        self.normalize_with(&stats)
    }

    /// Training-part mean and population standard deviation of every column.
    pub fn training_statistics(&self) -> Result<Normalization> {
        if self.normalization.is_some() {
            return Err(Error::invalid("dataset", "already normalized"));
        }
        let rows = self.rows(Part::Train);
        if rows.is_empty() {
            return Err(Error::invalid("dataset", "training part is empty"));
        }
        let stats = |m: &Array2<f64>, offset: usize| -> Result<(Vec<f64>, Vec<f64>)> {
            let n = rows.len() as f64;
            let mut means = Vec::with_capacity(m.ncols());
            let mut stds = Vec::with_capacity(m.ncols());
            for c in 0..m.ncols() {
                let col = m.column(c);
                let mean = rows.iter().map(|&r| col[r]).sum::<f64>() / n;
                let var = rows.iter().map(|&r| (col[r] - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                if !(std > 0.0) || std <= 1e-12 * mean.abs() {
                    return Err(Error::DegenerateColumn { column: offset + c });
                }
                means.push(mean);
                stds.push(std);
            }
            Ok((means, stds))
        };
        let (input_mean, input_std) = stats(&self.inputs, 0)?;
        let (target_mean, target_std) = stats(&self.targets, self.input_dim())?;
        Ok(Normalization {
            input_mean,
            input_std,
            target_mean,
            target_std,
        })
    }

    /// Standardizes with externally supplied (e.g. baseline) statistics.
    pub fn normalize_with(&self, stats: &Normalization) -> Result<LaggedDataset> {
        if self.normalization.is_some() {
            return Err(Error::invalid("dataset", "already normalized"));
        }
        if stats.input_mean.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: stats.input_mean.len(),
                actual: self.input_dim(),
            });
        }
        if stats.target_mean.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: stats.target_mean.len(),
                actual: self.output_dim(),
            });
        }
        let mut out = self.clone();
        standardize(&mut out.inputs, &stats.input_mean, &stats.input_std);
        standardize(&mut out.targets, &stats.target_mean, &stats.target_std);
        out.normalization = Some(stats.clone());
        Ok(out)
    }

    /// Inverse of [`normalize`](Self::normalize); unnormalized datasets are returned as-is.
    pub fn denormalize(&self) -> LaggedDataset {
        let mut out = self.clone();
        if let Some(stats) = out.normalization.take() {
            unstandardize(&mut out.inputs, &stats.input_mean, &stats.input_std);
            unstandardize(&mut out.targets, &stats.target_mean, &stats.target_std);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Envelope<'a> {
            format: &'a str,
            dataset: &'a LaggedDataset,
        }
        let text = serde_json::to_string(&Envelope {
            format: DATASET_FORMAT,
            dataset: self,
        })
        .expect("dataset serializes");
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LaggedDataset> {
        #[derive(Deserialize)]
        struct Envelope {
            format: String,
            dataset: LaggedDataset,
        }
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound {
                path: path.to_path_buf(),
                context: "lagged dataset".into(),
            },
            _ => Error::Io(e),
        })?;
        let env: Envelope = serde_json::from_str(&text).map_err(|e| {
            Error::malformed(&display, format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        if env.format != DATASET_FORMAT {
            return Err(Error::malformed(
                &display,
                format!("format `{}` not supported (expected `{DATASET_FORMAT}`)", env.format),
            ));
        }
        Ok(env.dataset)
    }
}

fn standardize(m: &mut Array2<f64>, mean: &[f64], std: &[f64]) {
    for (c, mut col) in m.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| (x - mean[c]) / std[c]);
    }
}

fn unstandardize(m: &mut Array2<f64>, mean: &[f64], std: &[f64]) {
    for (c, mut col) in m.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| x * std[c] + mean[c]);
    }
}
