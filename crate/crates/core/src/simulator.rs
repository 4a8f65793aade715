//! Shear-building simulator with optional contact (bumper) or cubic nonlinearity.
//!
//! Floors are numbered `1..=n_dof` and channel `0` is the base. The equations
//! of motion are integrated in coordinates relative to the base,
//!
//! ```text
//! M z'' + C z' + K z + f_nl(z, z') = -M 1 a_g(t)
//! ```
//!
//! with fixed-step RK4. The base acceleration is held constant over each
//! output sampling interval, and the recorded floor channels are absolute
//! accelerations evaluated from the equation of motion at the sample instants.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RK4 substeps per output sample.
pub const SUBSTEPS: usize = 10;

/// Abort when any relative displacement exceeds this multiple of the static scale.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

const RECORD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    /// Floor masses, kg.
    pub masses: Vec<f64>,
    /// Storey stiffnesses, N/m. Storey `s` joins floor `s` to the floor below (or the base).
    pub stiffnesses: Vec<f64>,
    /// Storey viscous damping, N·s/m.
    pub damping: Vec<f64>,
    #[serde(default)]
    pub nonlinearity: Option<NonlinearityConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityKind {
    /// One-sided elastic contact that engages once the relative displacement exceeds `gap`.
    Bumper { gap: f64, contact_stiffness: f64 },
    /// Hardening spring `k3 * d^3`.
    Cubic { cubic_coefficient: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    #[serde(flatten)]
    pub kind: NonlinearityKind,
    /// Channel indices `[i, j]` (0 = base/ground). The force is driven by
    /// `z_i - z_j`, acts on `i` with a negative sign and on `j` with a positive one.
    pub location: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationKind {
    #[default]
    WhiteNoiseBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    #[serde(default)]
    pub kind: ExcitationKind,
    /// RMS of the base acceleration, m/s².
    pub rms_amplitude: f64,
    pub seed: u64,
    /// Seconds per record.
    pub duration: f64,
    /// Hz.
    pub sampling_frequency: f64,
}

/// Multi-channel acceleration history. Column 0 is the base, columns `1..=n_dof` the floors.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    pub channels: Array2<f64>,
    pub dt: f64,
    pub state_label: String,
    pub repetition: usize,
    pub seed: u64,
}

impl NonlinearityConfig {
    pub fn bumper(location: [usize; 2], gap: f64, contact_stiffness: f64) -> Self {
        Self {
            kind: NonlinearityKind::Bumper {
                gap,
                contact_stiffness,
            },
            location,
        }
    }

    pub fn cubic(location: [usize; 2], cubic_coefficient: f64) -> Self {
        Self {
            kind: NonlinearityKind::Cubic { cubic_coefficient },
            location,
        }
    }

    pub fn validate(&self, n_dof: usize) -> Result<()> {
        let [i, j] = self.location;
        if i > n_dof || j > n_dof {
            return Err(Error::invalid(
                "nonlinearity.location",
                format!("index out of range 0..={n_dof}: {:?}", self.location),
            ));
        }
        if i == j {
            return Err(Error::invalid(
                "nonlinearity.location",
                format!("indices must be distinct: {:?}", self.location),
            ));
        }
        match self.kind {
            NonlinearityKind::Bumper {
                gap,
                contact_stiffness,
            } => {
                if !(gap >= 0.0) {
                    return Err(Error::invalid("nonlinearity.gap", "must be >= 0"));
                }
                if !(contact_stiffness > 0.0 && contact_stiffness.is_finite()) {
                    return Err(Error::invalid(
                        "nonlinearity.contact_stiffness",
                        "must be positive and finite",
                    ));
                }
            }
            NonlinearityKind::Cubic { cubic_coefficient } => {
                if !cubic_coefficient.is_finite() {
                    return Err(Error::invalid(
                        "nonlinearity.cubic_coefficient",
                        "must be finite",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Nonlinear restoring force for a relative displacement (m) and velocity (m/s).
pub fn nonlinear_force(
    relative_displacement: f64,
    _relative_velocity: f64,
    cfg: &NonlinearityConfig,
) -> f64 {
    match cfg.kind {
        NonlinearityKind::Bumper {
            gap,
            contact_stiffness,
        } => {
            if relative_displacement <= gap {
                0.0
            } else {
                contact_stiffness * (relative_displacement - gap)
            }
        }
        NonlinearityKind::Cubic { cubic_coefficient } => {
            cubic_coefficient * relative_displacement.powi(3)
        }
    }
}

impl StructureConfig {
    pub fn linear(masses: Vec<f64>, stiffnesses: Vec<f64>, damping: Vec<f64>) -> Self {
        Self {
            masses,
            stiffnesses,
            damping,
            nonlinearity: None,
        }
    }

    pub fn n_dof(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_dof();
        if n == 0 {
            return Err(Error::invalid("structure.masses", "need at least one floor"));
        }
        if self.stiffnesses.len() != n {
            return Err(Error::invalid(
                "structure.stiffnesses",
                format!("expected {n} entries, got {}", self.stiffnesses.len()),
            ));
        }
        if self.damping.len() != n {
            return Err(Error::invalid(
                "structure.damping",
                format!("expected {n} entries, got {}", self.damping.len()),
            ));
        }
        if let Some(i) = self.masses.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::invalid(
                format!("structure.masses[{i}]"),
                "must be positive",
            ));
        }
        if let Some(i) = self
            .stiffnesses
            .iter()
            .position(|&k| !(k > 0.0 && k.is_finite()))
        {
            return Err(Error::invalid(
                format!("structure.stiffnesses[{i}]"),
                "must be positive",
            ));
        }
        if let Some(i) = self.damping.iter().position(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::invalid(
                format!("structure.damping[{i}]"),
                "must be non-negative",
            ));
        }
        if let Some(nl) = &self.nonlinearity {
            nl.validate(n)?;
        }
        Ok(())
    }
}

impl ExcitationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rms_amplitude > 0.0 && self.rms_amplitude.is_finite()) {
            return Err(Error::invalid("excitation.rms_amplitude", "must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("excitation.duration", "must be positive"));
        }
        if !(self.sampling_frequency > 0.0 && self.sampling_frequency.is_finite()) {
            return Err(Error::invalid(
                "excitation.sampling_frequency",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sampling_frequency).round() as usize
    }

    /// Seeded Gaussian white-noise base acceleration, one value per output sample.
    pub fn base_signal(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.rms_amplitude).expect("validated amplitude");
        (0..self.n_samples()).map(|_| normal.sample(&mut rng)).collect()
    }
}

impl TimeSeriesRecord {
    pub fn n_samples(&self) -> usize {
        self.channels.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.ncols()
    }

    pub fn n_dof(&self) -> usize {
        self.n_channels().saturating_sub(1)
    }
}

/// Validated structural model ready for integration.
#[derive(Debug, Clone)]
pub struct ShearBuilding {
    mass: Vec<f64>,
    stiffness: Vec<f64>,
    damping: Vec<f64>,
    nonlinearity: Option<NonlinearityConfig>,
}

/// Displacements and velocities relative to the base.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl State {
    pub fn zeros(n: usize) -> Self {
        Self {
            displacement: vec![0.0; n],
            velocity: vec![0.0; n],
        }
    }

    fn max_abs_displacement(&self) -> f64 {
        self.displacement
            .iter()
            .fold(0.0_f64, |acc, &z| if z.is_nan() { f64::NAN } else { acc.max(z.abs()) })
    }
}

impl ShearBuilding {
    pub fn new(cfg: &StructureConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            mass: cfg.masses.clone(),
            stiffness: cfg.stiffnesses.clone(),
            damping: cfg.damping.clone(),
            nonlinearity: cfg.nonlinearity,
        })
    }

    pub fn n_dof(&self) -> usize {
        self.mass.len()
    }

    /// Internal (structural + nonlinear) force on each floor, sign such that
    /// `M z'' = -internal - M 1 a_g`.
    fn internal_forces(&self, state: &State, out: &mut [f64]) {
        let n = self.n_dof();
        let z = &state.displacement;
        let v = &state.velocity;
        out.iter_mut().for_each(|f| *f = 0.0);
        for s in 0..n {
            let (dz, dv) = if s == 0 {
                (z[0], v[0])
            } else {
                (z[s] - z[s - 1], v[s] - v[s - 1])
            };
            let f = self.stiffness[s] * dz + self.damping[s] * dv;
            out[s] += f;
            if s > 0 {
                out[s - 1] -= f;
            }
        }
        if let Some(nl) = &self.nonlinearity {
            let at = |x: &[f64], idx: usize| if idx == 0 { 0.0 } else { x[idx - 1] };
            let [i, j] = nl.location;
            let d = at(z, i) - at(z, j);
            let dv = at(v, i) - at(v, j);
            let f = nonlinear_force(d, dv, nl);
            if f != 0.0 {
                if i > 0 {
                    out[i - 1] += f;
                }
                if j > 0 {
                    out[j - 1] -= f;
                }
            }
        }
    }

    /// Absolute floor accelerations at the given state.
    pub fn absolute_acceleration(&self, state: &State) -> Vec<f64> {
        let mut f = vec![0.0; self.n_dof()];
        self.internal_forces(state, &mut f);
        f.iter().zip(&self.mass).map(|(f, m)| -f / m).collect()
    }

    fn derivative(&self, state: &State, base_accel: f64, scratch: &mut [f64]) -> State {
        self.internal_forces(state, scratch);
        let accel = scratch
            .iter()
            .zip(&self.mass)
            .map(|(f, m)| -f / m - base_accel)
            .collect();
        State {
            displacement: state.velocity.clone(),
            velocity: accel,
        }
    }

    /// One classical RK4 step of length `h` with constant base acceleration.
    pub fn rk4_step(&self, state: &State, base_accel: f64, h: f64) -> State {
        let n = self.n_dof();
        let mut scratch = vec![0.0; n];
        let offset = |s: &State, k: &State, a: f64| State {
            displacement: (0..n).map(|i| s.displacement[i] + a * k.displacement[i]).collect(),
            velocity: (0..n).map(|i| s.velocity[i] + a * k.velocity[i]).collect(),
        };
        let k1 = self.derivative(state, base_accel, &mut scratch);
        let k2 = self.derivative(&offset(state, &k1, 0.5 * h), base_accel, &mut scratch);
        let k3 = self.derivative(&offset(state, &k2, 0.5 * h), base_accel, &mut scratch);
        let k4 = self.derivative(&offset(state, &k3, h), base_accel, &mut scratch);
        let combine = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                .collect()
        };
        State {
            displacement: combine(
                &state.displacement,
                &k1.displacement,
                &k2.displacement,
                &k3.displacement,
                &k4.displacement,
            ),
            velocity: combine(
                &state.velocity,
                &k1.velocity,
                &k2.velocity,
                &k3.velocity,
                &k4.velocity,
            ),
        }
    }

    /// Kinetic plus elastic energy of the linear part, relative frame.
    pub fn mechanical_energy(&self, state: &State) -> f64 {
        let z = &state.displacement;
        let kinetic: f64 = self
            .mass
            .iter()
            .zip(&state.velocity)
            .map(|(m, v)| 0.5 * m * v * v)
            .sum();
        let elastic: f64 = (0..self.n_dof())
            .map(|s| {
                let d = if s == 0 { z[0] } else { z[s] - z[s - 1] };
                0.5 * self.stiffness[s] * d * d
            })
            .sum();
        kinetic + elastic
    }

    /// Displacement scale used for the divergence bound: total mass times base RMS over the
    /// softest storey.
    fn static_scale(&self, base_rms: f64) -> f64 {
        let total_mass: f64 = self.mass.iter().sum();
        let k_min = self.stiffness.iter().cloned().fold(f64::INFINITY, f64::min);
        total_mass * base_rms / k_min
    }
}

/// Simulates the response to a seeded white-noise base acceleration.
pub fn simulate(
    structure: &StructureConfig,
    excitation: &ExcitationConfig,
) -> Result<TimeSeriesRecord> {
    excitation.validate()?;
    let base = excitation.base_signal();
    let mut record = simulate_with_base(
        structure,
        &base,
        1.0 / excitation.sampling_frequency,
    )?;
    record.seed = excitation.seed;
    Ok(record)
}

/// Simulates the response to an arbitrary base acceleration sequence sampled every `dt`
/// seconds (zero-order hold between samples), starting from rest.
pub fn simulate_with_base(
    structure: &StructureConfig,
    base: &[f64],
    dt: f64,
) -> Result<TimeSeriesRecord> {
    let building = ShearBuilding::new(structure)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let n = building.n_dof();
    let rms = (base.iter().map(|a| a * a).sum::<f64>() / base.len().max(1) as f64).sqrt();
    let bound = DIVERGENCE_FACTOR * building.static_scale(rms);
    let h = dt / SUBSTEPS as f64;

    let mut channels = Array2::zeros((base.len(), n + 1));
    let mut state = State::zeros(n);
    for (k, &ag) in base.iter().enumerate() {
        let accel = building.absolute_acceleration(&state);
        let mut row = channels.row_mut(k);
        row[0] = ag;
        for (dst, a) in row.iter_mut().skip(1).zip(accel) {
            *dst = a;
        }
        for _ in 0..SUBSTEPS {
            state = building.rk4_step(&state, ag, h);
        }
        let magnitude = state.max_abs_displacement();
        if !(magnitude <= bound) || state.velocity.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged {
                time: (k + 1) as f64 * dt,
                magnitude,
                bound,
            });
        }
    }
    Ok(TimeSeriesRecord {
        channels,
        dt,
        state_label: String::new(),
        repetition: 0,
        seed: 0,
    })
}

/// Adds zero-mean Gaussian noise to each channel at the requested signal-to-noise ratio.
/// An infinite `snr_db` disables noise. Channels with zero variance are left untouched.
pub fn add_measurement_noise(record: &TimeSeriesRecord, snr_db: f64, seed: u64) -> TimeSeriesRecord {
    let mut out = record.clone();
    if snr_db.is_infinite() && snr_db > 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = 10f64.powf(snr_db / 10.0);
    for mut column in out.channels.columns_mut() {
        let n = column.len() as f64;
        let mean = column.sum() / n;
        let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if var <= 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, (var / ratio).sqrt()).expect("finite noise scale");
        column.iter_mut().for_each(|x| *x += normal.sample(&mut rng));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    pub format_version: u32,
    pub dt: f64,
    pub state_label: String,
    pub repetition: usize,
    pub seed: u64,
    pub n_dof: usize,
    pub n_samples: usize,
}

/// Sidecar path for a record file: `foo.csv` -> `foo.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes the record as `t,base,dof1,...` delimited text plus a JSON sidecar.
/// Values use shortest round-trip formatting.
pub fn write_record(record: &TimeSeriesRecord, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut header = String::from("t,base");
    for d in 1..=record.n_dof() {
        header.push_str(&format!(",dof{d}"));
    }
    writeln!(w, "{header}")?;
    for (k, row) in record.channels.rows().into_iter().enumerate() {
        write!(w, "{}", k as f64 * record.dt)?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let meta = RecordMeta {
        format_version: RECORD_FORMAT_VERSION,
        dt: record.dt,
        state_label: record.state_label.clone(),
        repetition: record.repetition,
        seed: record.seed,
        n_dof: record.n_dof(),
        n_samples: record.n_samples(),
    };
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&meta).expect("plain struct serializes"),
    )?;
    Ok(())
}

/// Reads a delimited acceleration file. When a sidecar exists its metadata is used,
/// otherwise `dt` is taken from the time column and the label from the file stem.
pub fn read_record(path: &Path) -> Result<TimeSeriesRecord> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound {
            path: path.to_path_buf(),
            context: "acceleration record".into(),
        },
        _ => Error::Io(e),
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::malformed(&display, "empty file"))??;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.len() < 3 || names[0] != "t" || names[1] != "base" {
        return Err(Error::malformed(
            &display,
            format!("line 1: expected header `t,base,dof1,...`, got `{header}`"),
        ));
    }
    let n_cols = names.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols + 1 {
            return Err(Error::malformed(
                &display,
                format!("line {lineno}: expected {} fields, got {}", n_cols + 1, fields.len()),
            ));
        }
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::malformed(&display, format!("line {lineno}, field {}: `{f}`", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::malformed(
                    &display,
                    format!("line {lineno}, field {}: non-finite value", col + 1),
                ));
            }
            if col == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n_rows = times.len();
    let channels = Array2::from_shape_vec((n_rows, n_cols), values)
        .map_err(|e| Error::malformed(&display, e.to_string()))?;

    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = fs::read_to_string(&sidecar)?;
        let meta: RecordMeta = serde_json::from_str(&text).map_err(|e| {
            Error::malformed(
                sidecar.display().to_string(),
                format!("line {}, column {}: {e}", e.line(), e.column()),
            )
        })?;
        if meta.format_version != RECORD_FORMAT_VERSION {
            return Err(Error::malformed(
                sidecar.display().to_string(),
                format!(
                    "format version {} not supported (expected {RECORD_FORMAT_VERSION})",
                    meta.format_version
                ),
            ));
        }
        if meta.n_dof + 1 != n_cols || meta.n_samples != n_rows {
            return Err(Error::malformed(
                &display,
                "sidecar dimensions disagree with the data",
            ));
        }
        return Ok(TimeSeriesRecord {
            channels,
            dt: meta.dt,
            state_label: meta.state_label,
            repetition: meta.repetition,
            seed: meta.seed,
        });
    }
    if n_rows < 2 {
        return Err(Error::malformed(&display, "need two rows to infer dt"));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::malformed(&display, "time column is not increasing"));
    }
    Ok(TimeSeriesRecord {
        channels,
        dt,
        state_label: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        repetition: 0,
        seed: 0,
    })
}
