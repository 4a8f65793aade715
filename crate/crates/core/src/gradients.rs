//! Input gradients of a trained network.
//!
//! For `y = W_out tanh(W_hidden x + b_hidden) + b_out` the Jacobian is
//! `W_out diag(1 - tanh^2(W_hidden x + b_hidden)) W_hidden`. Central finite
//! differences are provided as an independent check.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::dataset::{column_name, LaggedDataset, Part};
use crate::error::{Error, Result};
use crate::neuralnet::{tanh, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientUnits {
    /// d(normalized target) / d(normalized input).
    #[default]
    Normalized,
    /// Raw acceleration units, un-scaled with the stored normalization statistics.
    Raw,
}

/// Gradient of one model output at every evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSampleSet {
    /// evaluation points × input dimensions
    pub samples: Array2<f64>,
    pub target_dof: usize,
    pub state_label: String,
    /// `(channel, lag)` of every column.
    pub column_labels: Vec<(usize, usize)>,
    pub units: GradientUnits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOptions {
    pub part: Part,
    /// Model output (index into the dataset's target list).
    pub output: usize,
    pub units: GradientUnits,
    /// Evenly strided subsample when the part has more rows than this.
    pub max_points: Option<usize>,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self {
            part: Part::All,
            output: 0,
            units: GradientUnits::Normalized,
            max_points: None,
        }
    }
}

/// Jacobian of all outputs with respect to the input, `output_dim × input_dim`.
pub fn input_jacobian(model: &MlpModel, input: ArrayView1<f64>) -> Result<Array2<f64>> {
    let z = model.hidden_preactivation(input)?;
    let slope = z.mapv(|z| {
        let t = tanh(z);
        1.0 - t * t
    });
    let mut scaled = model.weights_out.clone();
    for mut row in scaled.rows_mut() {
        row *= &slope;
    }
    Ok(scaled.dot(&model.weights_hidden))
}

/// Gradient of the first (for per-DOF models, the only) output with respect to the input.
pub fn input_gradient(model: &MlpModel, input: ArrayView1<f64>) -> Result<Array1<f64>> {
    Ok(input_jacobian(model, input)?.row(0).to_owned())
}

/// Central-difference gradient of the first output, `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn fd_gradient(model: &MlpModel, input: ArrayView1<f64>, step: f64) -> Result<Array1<f64>> {
    fd_gradient_of(|x| Ok(model.forward(x)?[0]), input, step)
}

/// Central-difference gradient of an arbitrary scalar function.
pub fn fd_gradient_of<F>(f: F, input: ArrayView1<f64>, step: f64) -> Result<Array1<f64>>
where
    F: Fn(ArrayView1<f64>) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let mut probe = input.to_owned();
    let mut grad = Array1::zeros(input.len());
    for j in 0..input.len() {
        let x0 = probe[j];
        probe[j] = x0 + step;
        let plus = f(probe.view())?;
        probe[j] = x0 - step;
        let minus = f(probe.view())?;
        probe[j] = x0;
        grad[j] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Evaluates the input gradient of output 0 at every row of the whole dataset.
pub fn gradient_field(model: &MlpModel, data: &LaggedDataset, part: Part) -> Result<GradientSampleSet> {
    gradient_field_with(
        model,
        data,
        &GradientOptions {
            part,
            ..GradientOptions::default()
        },
    )
}

pub fn gradient_field_with(
    model: &MlpModel,
    data: &LaggedDataset,
    opts: &GradientOptions,
) -> Result<GradientSampleSet> {
    if model.input_dim() != data.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: data.input_dim(),
        });
    }
    if opts.output >= model.output_dim() || opts.output >= data.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim().min(data.output_dim()),
            actual: opts.output + 1,
        });
    }
    let mut rows = data.rows(opts.part);
    if let Some(cap) = opts.max_points {
        if cap > 0 && rows.len() > cap {
            let stride = rows.len() as f64 / cap as f64;
            rows = (0..cap).map(|i| rows[(i as f64 * stride) as usize]).collect();
        }
    }
    let x = data.inputs.select(Axis(0), &rows);

    // slopes[n, h] = w_out[o, h] * (1 - tanh^2(z[n, h]))
    let mut slopes = x.dot(&model.weights_hidden.t());
    let w_out = model.weights_out.row(opts.output);
    Zip::from(slopes.rows_mut()).for_each(|mut row| {
        Zip::from(&mut row)
            .and(&model.bias_hidden)
            .and(&w_out)
            .for_each(|z, &b, &w| {
                let t = tanh(*z + b);
                *z = w * (1.0 - t * t);
            });
    });
    let mut samples = slopes.dot(&model.weights_hidden);

    if opts.units == GradientUnits::Raw {
        let stats = data
            .normalization
            .as_ref()
            .ok_or_else(|| Error::invalid("units", "raw units need a normalized dataset"))?;
        for (j, mut col) in samples.columns_mut().into_iter().enumerate() {
            col *= stats.gradient_scale(opts.output, j);
        }
    }

    Ok(GradientSampleSet {
        samples,
        target_dof: data.target_dofs[opts.output],
        state_label: String::new(),
        column_labels: data.column_labels(),
        units: opts.units,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientMeta {
    pub target_dof: usize,
    pub state_label: String,
    pub units: GradientUnits,
    pub column_labels: Vec<(usize, usize)>,
    pub n_points: usize,
}

impl GradientSampleSet {
    pub fn n_points(&self) -> usize {
        self.samples.nrows()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.column_labels
            .iter()
            .map(|&(c, k)| column_name(c, k))
            .collect()
    }

    /// Delimited text with one header row naming `(channel, lag)` per column,
    /// plus a `.meta.json` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{}", self.column_names().join(","))?;
        for row in self.samples.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        let meta = GradientMeta {
            target_dof: self.target_dof,
            state_label: self.state_label.clone(),
            units: self.units,
            column_labels: self.column_labels.clone(),
            n_points: self.n_points(),
        };
        fs::write(
            path.with_extension("meta.json"),
            serde_json::to_string_pretty(&meta).expect("meta serializes"),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Normalization, Split};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(input: usize, hidden: usize, seed: u64) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MlpModel::new(input, hidden, 1, seed);
        m.bias_hidden.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        m.bias_out[0] = rng.random_range(-1.0..1.0);
        m
    }

    fn random_input(d: usize, seed: u64) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array1::from_shape_simple_fn(d, || rng.random_range(-2.0..2.0))
    }

    fn rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        let diff = (a - b).mapv(|v| v * v).sum().sqrt();
        diff / b.mapv(|v| v * v).sum().sqrt().max(1e-300)
    }

    fn data_from(inputs: Array2<f64>) -> LaggedDataset {
        let n = inputs.nrows();
        let d = inputs.ncols();
        LaggedDataset {
            targets: Array2::zeros((n, 1)),
            inputs,
            lag: 2,
            n_channels: d / 2,
            target_dofs: vec![1],
            blocks: vec![(0, n / 2), (n / 2, n)],
            split: Some(Split {
                train: vec![0],
                validation: vec![],
                test: vec![1],
            }),
            normalization: Some(Normalization {
                input_mean: vec![0.0; d],
                input_std: (0..d).map(|j| 1.0 + j as f64).collect(),
                target_mean: vec![0.0],
                target_std: vec![2.0],
            }),
        }
    }

    #[test]
    fn zero_hidden_weights_give_zero_gradient() {
        let mut m = random_model(4, 6, 1);
        m.weights_hidden.fill(0.0);
        assert!(input_gradient(&m, random_input(4, 2).view())
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn linearization_at_origin() {
        let mut m = random_model(3, 5, 3);
        m.bias_hidden.fill(0.0);
        let g = input_gradient(&m, Array1::zeros(3).view()).unwrap();
        let expected = m.weights_out.dot(&m.weights_hidden).row(0).to_owned();
        assert!(rel_err(&g, &expected) < 1e-15);
    }

    #[test]
    fn analytic_matches_finite_differences() {
        for seed in 0..20 {
            let m = random_model(8, 100, seed);
            let x = random_input(8, 100 + seed);
            let g = input_gradient(&m, x.view()).unwrap();
            let fd = fd_gradient(&m, x.view(), 1e-4).unwrap();
            assert!(rel_err(&g, &fd) < 1e-6, "seed {seed}: {}", rel_err(&g, &fd));
        }
    }

    #[test]
    fn fd_of_linear_map() {
        let g = fd_gradient_of(|x| Ok(3.0 * x[0]), array![0.7].view(), 1e-4).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-10);
        assert!(fd_gradient_of(|x| Ok(x[0]), array![0.0].view(), 0.0).is_err());
    }

    #[test]
    fn large_step_truncation_error_is_larger() {
        let m = random_model(4, 30, 7);
        let x = random_input(4, 8);
        let exact = input_gradient(&m, x.view()).unwrap();
        let coarse = rel_err(&fd_gradient(&m, x.view(), 1.0).unwrap(), &exact);
        let fine = rel_err(&fd_gradient(&m, x.view(), 1e-4).unwrap(), &exact);
        assert!(coarse > fine, "{coarse} <= {fine}");
    }

    #[test]
    fn field_matches_pointwise_gradients() {
        let m = random_model(6, 20, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let inputs = Array2::from_shape_simple_fn((40, 6), || rng.random_range(-2.0..2.0));
        let data = data_from(inputs.clone());
        let field = gradient_field(&m, &data, Part::All).unwrap();
        assert_eq!(field.samples.dim(), (40, 6));
        for (r, row) in inputs.rows().into_iter().enumerate() {
            let g = input_gradient(&m, row).unwrap();
            for j in 0..6 {
                assert!((field.samples[[r, j]] - g[j]).abs() < 1e-12);
            }
        }
        assert_eq!(field, gradient_field(&m, &data, Part::All).unwrap());
        assert_eq!(gradient_field(&m, &data, Part::Test).unwrap().n_points(), 20);
    }

    #[test]
    fn raw_units_apply_chain_rule() {
        let m = random_model(4, 10, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = data_from(Array2::from_shape_simple_fn((10, 4), || rng.random_range(-1.0..1.0)));
        let norm = gradient_field(&m, &data, Part::All).unwrap();
        let raw = gradient_field_with(
            &m,
            &data,
            &GradientOptions {
                units: GradientUnits::Raw,
                ..GradientOptions::default()
            },
        )
        .unwrap();
        for j in 0..4 {
            let scale = 2.0 / (1.0 + j as f64);
            assert!((raw.samples[[3, j]] - scale * norm.samples[[3, j]]).abs() < 1e-14);
        }
    }

    #[test]
    fn max_points_caps_rows() {
        let m = random_model(4, 5, 1);
        let data = data_from(Array2::ones((100, 4)));
        let opts = GradientOptions {
            max_points: Some(7),
            ..GradientOptions::default()
        };
        assert_eq!(gradient_field_with(&m, &data, &opts).unwrap().n_points(), 7);
    }

    #[test]
    fn near_linear_regime_has_negligible_spread() {
        let mut m = random_model(4, 50, 13);
        m.bias_hidden.fill(0.0);
        m.weights_hidden.mapv_inplace(|w| w * 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let data = data_from(Array2::from_shape_simple_fn((500, 4), || rng.random_range(-3.0..3.0)));
        let z = data.inputs.dot(&m.weights_hidden.t());
        assert!(z.iter().all(|v| v.abs() < 1e-3));
        let field = gradient_field(&m, &data, Part::All).unwrap();
        for col in field.samples.columns() {
            let mean = col.mean().unwrap();
            let std = col.std(0.0);
            assert!(std < 1e-3 * mean.abs(), "{std} vs {mean}");
        }
    }

    #[test]
    fn labels_are_bijective_with_columns() {
        let m = random_model(8, 5, 1);
        let data = data_from(Array2::ones((4, 8)));
        let field = gradient_field(&m, &data, Part::All).unwrap();
        let mut labels = field.column_labels.clone();
        assert_eq!(labels.len(), 8);
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 8);
        assert_eq!(field.column_names()[0], "base[t-1]");
        assert_eq!(field.column_names()[5], "dof1[t-2]");
    }

    #[test]
    fn dimension_mismatch() {
        let m = random_model(3, 5, 1);
        let data = data_from(Array2::ones((4, 8)));
        assert!(matches!(
            gradient_field(&m, &data, Part::All),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(input_gradient(&m, Array1::zeros(4).view()).is_err());
    }
}
