//! Experiment configuration (TOML) and its canonical hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neuralnet::TrainConfig;
use crate::simulator::{ExcitationConfig, ExcitationKind, NonlinearityConfig, StructureConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Artifact directory. Relative paths are resolved against the config file's directory.
    pub output_dir: PathBuf,
    pub structure: StructureConfig,
    pub excitation: ExcitationSettings,
    /// Records per state.
    pub repetitions: usize,
    /// Measurement noise; `inf` disables it.
    pub snr_db: f64,
    pub lag_candidates: Vec<usize>,
    /// A candidate lag is accepted when its mean validation NMSE is within
    /// `lag_tolerance` (relative) of the best one; the smallest accepted lag wins.
    #[serde(default = "default_lag_tolerance")]
    pub lag_tolerance: f64,
    pub hidden_units: usize,
    /// Train / validation / test fractions of the repetitions.
    pub split_fractions: [f64; 3],
    /// NMSE (%) above which a fit is flagged.
    #[serde(default = "default_nmse_limit")]
    pub nmse_limit: f64,
    /// Independent baseline datasets used for the detection threshold.
    pub baseline_replicates: usize,
    /// Threshold multiplier on the baseline-replicate standard deviation.
    #[serde(default = "default_threshold_sigmas")]
    pub threshold_sigmas: f64,
    /// Evenly strided cap on gradient evaluation points per (state, DOF).
    #[serde(default)]
    pub max_points: Option<usize>,
    /// Write every gradient sample set, not only the ones named in `kde`.
    #[serde(default)]
    pub save_gradients: bool,
    #[serde(default = "default_kde_grid")]
    pub kde_grid_size: usize,
    #[serde(default)]
    pub kde: Vec<KdePair>,
    pub seeds: Seeds,
    pub train: TrainSettings,
    pub states: Vec<StateSpec>,
}

fn default_lag_tolerance() -> f64 {
    0.1
}

fn default_nmse_limit() -> f64 {
    5.0
}

fn default_threshold_sigmas() -> f64 {
    3.0
}

fn default_kde_grid() -> usize {
    crate::gradstats::DEFAULT_GRID_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSettings {
    #[serde(default)]
    pub kind: ExcitationKind,
    pub rms_amplitude: f64,
    pub duration: f64,
    pub sampling_frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub excitation: u64,
    pub noise: u64,
    pub split: u64,
    pub init: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub baseline: TrainConfig,
    pub recalibration: TrainConfig,
    /// Cheaper schedule for the lag search; the baseline schedule is used when absent.
    #[serde(default)]
    pub lag_search: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdePair {
    pub state: String,
    pub dof: usize,
}

/// One roster entry: a named modification of the reference structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Baseline {
        name: String,
    },
    /// Multiplies the stiffness of one storey (1-based).
    StiffnessScale {
        name: String,
        storey: usize,
        factor: f64,
    },
    /// Adds mass (kg) to one floor (1-based).
    AddedMass {
        name: String,
        floor: usize,
        mass: f64,
    },
    Bumper {
        name: String,
        location: [usize; 2],
        gap: f64,
        contact_stiffness: f64,
    },
}

impl StateSpec {
    pub fn name(&self) -> &str {
        match self {
            StateSpec::Baseline { name }
            | StateSpec::StiffnessScale { name, .. }
            | StateSpec::AddedMass { name, .. }
            | StateSpec::Bumper { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StateSpec::Baseline { .. } => "baseline",
            StateSpec::StiffnessScale { .. } => "stiffness_scale",
            StateSpec::AddedMass { .. } => "added_mass",
            StateSpec::Bumper { .. } => "bumper",
        }
    }

    pub fn is_bumper(&self) -> bool {
        matches!(self, StateSpec::Bumper { .. })
    }

    /// The reference structure with this state's modification applied.
    pub fn apply(&self, base: &StructureConfig) -> StructureConfig {
        let mut s = base.clone();
        match *self {
            StateSpec::Baseline { .. } => {}
            StateSpec::StiffnessScale { storey, factor, .. } => s.stiffnesses[storey - 1] *= factor,
            StateSpec::AddedMass { floor, mass, .. } => s.masses[floor - 1] += mass,
            StateSpec::Bumper {
                location,
                gap,
                contact_stiffness,
                ..
            } => s.nonlinearity = Some(NonlinearityConfig::bumper(location, gap, contact_stiffness)),
        }
        s
    }
}

/// Data-generating unit of a run: a roster state or a baseline replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct StateUnit {
    pub name: String,
    pub kind: &'static str,
    pub structure: StructureConfig,
    /// Seed stream index; distinct for every unit.
    pub stream: u64,
    pub replicate: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let at = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    format!("line {line}: ")
                }
                None => String::new(),
            };
            Error::malformed(source, format!("{at}{}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses and validates a config file. A relative `output_dir` is made
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound {
                path: path.to_path_buf(),
                context: "experiment config".into(),
            },
            _ => Error::Io(e),
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        if cfg.output_dir.is_relative() {
            let dir = path.parent().unwrap_or(Path::new("."));
            cfg.output_dir = dir.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.structure
            .validate()
            .map_err(|e| e.context("structure"))?;
        let n_dof = self.structure.n_dof();
        self.excitation_for(0).validate()?;
        if self.repetitions < 3 {
            return Err(Error::invalid("repetitions", "need at least 3 (one per split part)"));
        }
        if !(self.snr_db > 0.0) {
            return Err(Error::invalid("snr_db", "must be positive (inf disables noise)"));
        }
        if self.lag_candidates.is_empty() || self.lag_candidates.contains(&0) {
            return Err(Error::invalid("lag_candidates", "need one or more lags >= 1"));
        }
        if !(self.lag_tolerance >= 0.0) {
            return Err(Error::invalid("lag_tolerance", "must be non-negative"));
        }
        if self.hidden_units == 0 {
            return Err(Error::invalid("hidden_units", "must be positive"));
        }
        if self.split_fractions.iter().any(|f| !(*f >= 0.0)) || self.split_fractions[0] <= 0.0 {
            return Err(Error::invalid("split_fractions", "must be non-negative with a positive training share"));
        }
        let counts = crate::dataset::split_counts(self.repetitions, self.split_fractions);
        if counts.iter().zip(&self.split_fractions).any(|(&c, &f)| f > 0.0 && c == 0) {
            return Err(Error::invalid(
                "split_fractions",
                format!("{} repetitions give empty parts {counts:?}", self.repetitions),
            ));
        }
        if !(self.nmse_limit > 0.0) {
            return Err(Error::invalid("nmse_limit", "must be positive"));
        }
        if self.baseline_replicates < 2 {
            return Err(Error::invalid("baseline_replicates", "need at least 2 for a spread estimate"));
        }
        if !(self.threshold_sigmas >= 0.0) {
            return Err(Error::invalid("threshold_sigmas", "must be non-negative"));
        }
        if self.max_points == Some(0) {
            return Err(Error::invalid("max_points", "must be positive"));
        }
        if self.kde_grid_size < 2 {
            return Err(Error::invalid("kde_grid_size", "must be at least 2"));
        }
        for (name, t) in [
            ("train.baseline", Some(&self.train.baseline)),
            ("train.recalibration", Some(&self.train.recalibration)),
            ("train.lag_search", self.train.lag_search.as_ref()),
        ] {
            if let Some(t) = t {
                t.validate().map_err(|e| e.context(name))?;
            }
        }

        let baselines = self.states.iter().filter(|s| matches!(s, StateSpec::Baseline { .. })).count();
        if baselines != 1 {
            return Err(Error::invalid("states", format!("need exactly one baseline state, found {baselines}")));
        }
        let mut last_gap: Option<f64> = None;
        for (i, s) in self.states.iter().enumerate() {
            let field = |f: &str| format!("states[{i}].{f}");
            let name = s.name();
            if name.is_empty()
                || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::invalid(field("name"), format!("`{name}` must be non-empty [A-Za-z0-9_-]")));
            }
            if self.states[..i].iter().any(|o| o.name() == name) {
                return Err(Error::invalid(field("name"), format!("duplicate state name `{name}`")));
            }
            match *s {
                StateSpec::Baseline { .. } => {}
                StateSpec::StiffnessScale { storey, factor, .. } => {
                    if storey == 0 || storey > n_dof {
                        return Err(Error::invalid(field("storey"), format!("{storey} not in 1..={n_dof}")));
                    }
                    if !(factor > 0.0 && factor.is_finite()) {
                        return Err(Error::invalid(field("factor"), "must be positive"));
                    }
                }
                StateSpec::AddedMass { floor, mass, .. } => {
                    if floor == 0 || floor > n_dof {
                        return Err(Error::invalid(field("floor"), format!("{floor} not in 1..={n_dof}")));
                    }
                    if !(mass > -self.structure.masses[floor - 1] && mass.is_finite()) {
                        return Err(Error::invalid(field("mass"), "resulting floor mass must stay positive"));
                    }
                }
                StateSpec::Bumper { gap, .. } => {
                    s.apply(&self.structure)
                        .validate()
                        .map_err(|e| e.context(format!("states[{i}] ({name})")))?;
                    if let Some(prev) = last_gap {
                        if !(gap < prev) {
                            return Err(Error::invalid(
                                field("gap"),
                                format!("bumper gaps must strictly decrease down the roster ({gap} after {prev})"),
                            ));
                        }
                    }
                    last_gap = Some(gap);
                }
            }
        }
        for (i, pair) in self.kde.iter().enumerate() {
            if !self.states.iter().any(|s| s.name() == pair.state) {
                return Err(Error::invalid(format!("kde[{i}].state"), format!("unknown state `{}`", pair.state)));
            }
            if pair.dof == 0 || pair.dof > n_dof {
                return Err(Error::invalid(format!("kde[{i}].dof"), format!("{} not in 1..={n_dof}", pair.dof)));
            }
        }
        Ok(())
    }

    pub fn baseline(&self) -> &StateSpec {
        self.states
            .iter()
            .find(|s| matches!(s, StateSpec::Baseline { .. }))
            .expect("validated config has a baseline")
    }

    pub fn state(&self, name: &str) -> Option<&StateSpec> {
        self.states.iter().find(|s| s.name() == name)
    }

    /// Name of baseline replicate `r` (0-based).
    pub fn replicate_name(&self, r: usize) -> String {
        format!("{}-replicate{}", self.baseline().name(), r + 1)
    }

    /// Roster states followed by the baseline replicates.
    pub fn units(&self) -> Vec<StateUnit> {
        let mut units: Vec<StateUnit> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| StateUnit {
                name: s.name().to_string(),
                kind: s.kind(),
                structure: s.apply(&self.structure),
                stream: i as u64,
                replicate: false,
            })
            .collect();
        let n = self.states.len() as u64;
        for r in 0..self.baseline_replicates {
            units.push(StateUnit {
                name: self.replicate_name(r),
                kind: "baseline_replicate",
                structure: self.structure.clone(),
                stream: n + r as u64,
                replicate: true,
            });
        }
        units
    }

    /// Excitation settings with a concrete seed, see [`derive_seed`].
    pub fn excitation_for(&self, seed: u64) -> ExcitationConfig {
        ExcitationConfig {
            kind: self.excitation.kind,
            rms_amplitude: self.excitation.rms_amplitude,
            seed,
            duration: self.excitation.duration,
            sampling_frequency: self.excitation.sampling_frequency,
        }
    }

    /// SHA-256 of the canonical JSON form (object keys sorted), hex encoded.
    /// `output_dir` is left out: it does not influence any result.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Mixes a root seed with stream and repetition indices (SplitMix64 finalizer).
pub fn derive_seed(root: u64, stream: u64, repetition: u64) -> u64 {
    let mut z = root
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ repetition.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
