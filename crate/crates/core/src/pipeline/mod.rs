//! Experiment orchestration behind the `nlgrad` binary.
//!
//! A run goes through four commands that share one output directory and one
//! [`RunManifest`]: `simulate` writes the acceleration records of every roster
//! state and baseline replicate, `train-baseline` selects the lag and fits one
//! model per floor, `analyze` recalibrates per state and computes the gradient
//! metrics, and `report` turns the metric table into detection and localization
//! verdicts.

pub mod config;
pub mod manifest;
pub mod plots;
mod report;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use config::{derive_seed, ExperimentConfig, KdePair, Seeds, StateSpec, StateUnit, TrainSettings};
pub use manifest::{
    AnalysisArtifacts, BaselineArtifacts, NmseFlag, RunManifest, StateArtifacts, MANIFEST_FILE,
};
pub use report::{detection_report, DetectionReport, ReportFormat, StateVerdict, Threshold};

use crate::dataset::{make_lagged, LaggedDataset, Normalization, Part};
use crate::error::{Error, Result};
use crate::gradients::{gradient_field_with, GradientOptions, GradientSampleSet};
use crate::gradstats::{kde, metric_triple, DofMetrics, Moment, StateMetricReport};
use crate::neuralnet::{
    load_model, recalibrate, save_model, train, FitReport, MlpModel, TrainConfig,
};
use crate::simulator::{add_measurement_noise, read_record, simulate, write_record, TimeSeriesRecord};

const METRICS_FORMAT: &str = "nlgrad-metrics/1";

/// Options of the `analyze` command beyond the config file.
#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub out: Option<PathBuf>,
    /// Restrict the roster to these states (baseline replicates are always analyzed).
    pub states: Option<Vec<String>>,
    pub max_points: Option<usize>,
}

/// Structured form of the metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricTable {
    pub format: String,
    pub config_hash: String,
    pub lag: usize,
    /// Detection threshold multiplier on the baseline spread.
    pub threshold_sigmas: f64,
    pub states: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRow {
    pub kind: String,
    /// Bumper gap, metres.
    #[serde(default)]
    pub gap: Option<f64>,
    pub report: StateMetricReport,
}

impl MetricTable {
    pub fn row(&self, state: &str) -> Option<&MetricRow> {
        self.states.iter().find(|r| r.report.state_label == state)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound {
                path: path.to_path_buf(),
                context: "metric table".into(),
            },
            _ => Error::Io(e),
        })?;
        let table: MetricTable = serde_json::from_str(&text).map_err(|e| {
            Error::malformed(
                path.display().to_string(),
                format!("line {}, column {}: {e}", e.line(), e.column()),
            )
        })?;
        if table.format != METRICS_FORMAT {
            return Err(Error::malformed(
                path.display().to_string(),
                format!("format `{}` (expected `{METRICS_FORMAT}`)", table.format),
            ));
        }
        Ok(table)
    }

    /// One row per (state, DOF) plus a `mean` row per state.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "state,kind,dof,std,skewness,inverse_kurtosis,nmse_train,nmse_validation,nmse_test\n",
        );
        for row in &self.states {
            let r = &row.report;
            for d in &r.dofs {
                let m = d.metrics;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.state_label,
                    row.kind,
                    d.target_dof,
                    m.mean_std,
                    m.mean_skewness,
                    m.mean_inverse_kurtosis,
                    d.nmse[0],
                    d.nmse[1],
                    d.nmse[2]
                ));
            }
            let m = r.floor_average;
            out.push_str(&format!(
                "{},{},mean,{},{},{},,,\n",
                r.state_label, row.kind, m.mean_std, m.mean_skewness, m.mean_inverse_kurtosis
            ));
        }
        out
    }
}

fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone())
}

fn rel(path: &Path, dir: &Path) -> String {
    path.strip_prefix(dir)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(Error::from)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value).expect("artifact serializes"))?;
    Ok(())
}

/// Loads the manifest of `dir` and checks it belongs to this config.
fn load_manifest(cfg: &ExperimentConfig, dir: &Path, stage: &str) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::FileNotFound {
            path,
            context: format!("run manifest; run `simulate` before `{stage}`"),
        });
    }
    let manifest = RunManifest::load(&path)?;
    if manifest.config_hash != cfg.hash() {
        return Err(Error::invalid(
            "config",
            format!(
                "config hash {} differs from the one recorded by `simulate` ({}); re-run `simulate`",
                cfg.hash(),
                manifest.config_hash
            ),
        ));
    }
    Ok(manifest)
}

fn load_records(manifest: &RunManifest, dir: &Path, state: &str) -> Result<Vec<TimeSeriesRecord>> {
    let entry = manifest.state(state).ok_or_else(|| Error::FileNotFound {
        path: dir.join("records").join(state),
        context: format!("records of state `{state}`"),
    })?;
    entry
        .records
        .iter()
        .map(|p| read_record(&dir.join(p)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context(format!("state {state}")))
}

/// Simulates every (state, repetition) record plus the baseline replicates and
/// starts a fresh manifest.
pub fn cmd_simulate(config: &Path, out: Option<&Path>) -> Result<RunManifest> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = output_dir(&cfg, out);
    create_dir(&dir)?;
    let mut manifest = RunManifest::new(cfg.hash(), cfg.seeds);
    for unit in cfg.units() {
        let state_dir = dir.join("records").join(&unit.name);
        create_dir(&state_dir)?;
        let mut records = Vec::with_capacity(cfg.repetitions);
        for r in 0..cfg.repetitions {
            let excitation = cfg.excitation_for(derive_seed(cfg.seeds.excitation, unit.stream, r as u64));
            let clean = simulate(&unit.structure, &excitation)
                .map_err(|e| e.context(format!("state {}, repetition {r}", unit.name)))?;
            let mut rec = if cfg.snr_db.is_infinite() {
                clean
            } else {
                add_measurement_noise(&clean, cfg.snr_db, derive_seed(cfg.seeds.noise, unit.stream, r as u64))
            };
            rec.state_label = unit.name.clone();
            rec.repetition = r;
            let path = state_dir.join(format!("rep{r:02}.csv"));
            write_record(&rec, &path)?;
            records.push(rel(&path, &dir));
        }
        info!("simulated {} ({} records)", unit.name, records.len());
        manifest.states.push(StateArtifacts {
            name: unit.name.clone(),
            kind: unit.kind.to_string(),
            records,
            models: Vec::new(),
            fit_reports: None,
            gradients: Vec::new(),
            report: None,
        });
    }
    manifest.save(&dir)?;
    Ok(manifest)
}

fn split_and_normalize(
    cfg: &ExperimentConfig,
    records: &[TimeSeriesRecord],
    lag: usize,
    dof: usize,
    stream: u64,
    stats: Option<&Normalization>,
) -> Result<LaggedDataset> {
    let ds = make_lagged(records, lag, dof)?.split(cfg.split_fractions, derive_seed(cfg.seeds.split, stream, 0))?;
    match stats {
        Some(s) => ds.normalize_with(s),
        None => ds.normalize(),
    }
}

fn seeded(train: &TrainConfig, stream: u64, dof: usize) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(train.seed, stream, dof as u64),
        ..train.clone()
    }
}

/// Validation NMSE of every lag candidate and the selected lag.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSearch {
    pub lags: Vec<usize>,
    /// `nmse[i][d]`: validation NMSE (%) of lag `lags[i]`, floor `d + 1`.
    pub nmse: Vec<Vec<f64>>,
    pub selected: usize,
}

impl LagSearch {
    pub fn mean(&self, i: usize) -> f64 {
        self.nmse[i].iter().sum::<f64>() / self.nmse[i].len() as f64
    }

    /// Smallest lag whose mean validation NMSE is within `tolerance` (relative) of the best.
    pub fn select(lags: Vec<usize>, nmse: Vec<Vec<f64>>, tolerance: f64) -> Self {
        let mut s = Self { lags, nmse, selected: 0 };
        let best = (0..s.lags.len()).map(|i| s.mean(i)).fold(f64::INFINITY, f64::min);
        s.selected = (0..s.lags.len())
            .filter(|&i| s.mean(i) <= best * (1.0 + tolerance))
            .map(|i| s.lags[i])
            .min()
            .expect("at least one candidate is within tolerance of the best");
        s
    }

    pub fn to_csv(&self) -> String {
        let n_dof = self.nmse.first().map_or(0, Vec::len);
        let mut out = String::from("lag");
        for d in 1..=n_dof {
            out.push_str(&format!(",nmse_validation_dof{d}"));
        }
        out.push_str(",mean,selected\n");
        for (i, lag) in self.lags.iter().enumerate() {
            out.push_str(&lag.to_string());
            for v in &self.nmse[i] {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{},{}\n", self.mean(i), *lag == self.selected));
        }
        out
    }
}

fn flag_fit(manifest: &mut RunManifest, cfg: &ExperimentConfig, stage: &str, state: &str, dof: usize, nmse: [f64; 3]) {
    let worst = nmse.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(worst < cfg.nmse_limit) {
        warn!("{state} dof{dof}: NMSE {worst:.3}% exceeds {}%", cfg.nmse_limit);
        manifest.nmse_flags.push(NmseFlag {
            stage: stage.to_string(),
            state: state.to_string(),
            dof,
            nmse: worst,
        });
    }
}

fn nmse_triple(report: &FitReport) -> [f64; 3] {
    [report.nmse_train, report.nmse_validation, report.nmse_test]
}

/// Lag search over the configured candidates, then one model per floor at the selected lag.
pub fn cmd_train_baseline(config: &Path, out: Option<&Path>) -> Result<RunManifest> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = output_dir(&cfg, out);
    let mut manifest = load_manifest(&cfg, &dir, "train-baseline")?;
    let baseline = cfg.baseline().name().to_string();
    let records = load_records(&manifest, &dir, &baseline)?;
    let n_dof = cfg.structure.n_dof();
    let search_cfg = cfg.train.lag_search.as_ref().unwrap_or(&cfg.train.baseline);

    let mut lags = cfg.lag_candidates.clone();
    lags.sort_unstable();
    lags.dedup();
    let mut nmse = Vec::with_capacity(lags.len());
    let mut fitted: Vec<Vec<(MlpModel, FitReport, Normalization)>> = Vec::new();
    for &lag in &lags {
        let mut row = Vec::with_capacity(n_dof);
        let mut models = Vec::with_capacity(n_dof);
        for dof in 1..=n_dof {
            let ds = split_and_normalize(&cfg, &records, lag, dof, 0, None)
                .map_err(|e| e.context(format!("baseline, lag {lag}, dof {dof}")))?;
            let init = MlpModel::new(ds.input_dim(), cfg.hidden_units, 1, derive_seed(cfg.seeds.init, lag as u64, dof as u64));
            let (model, report) = train(&init, &ds, &seeded(search_cfg, 0, dof))
                .map_err(|e| e.context(format!("baseline, lag {lag}, dof {dof}")))?;
            info!("lag {lag} dof{dof}: validation NMSE {:.4}%", report.nmse_validation);
            row.push(report.nmse_validation);
            let stats = ds.normalization.clone().expect("normalized dataset");
            models.push((model, report, stats));
        }
        nmse.push(row);
        fitted.push(models);
    }
    let search = LagSearch::select(lags.clone(), nmse, cfg.lag_tolerance);
    let lag = search.selected;
    info!("selected lag {lag}");

    let baseline_dir = dir.join("baseline");
    create_dir(&baseline_dir)?;
    let lag_table = baseline_dir.join("lag_search.csv");
    fs::write(&lag_table, search.to_csv())?;

    let chosen = lags.iter().position(|&l| l == lag).expect("selected lag is a candidate");
    let mut final_models = std::mem::take(&mut fitted[chosen]);
    if cfg.train.lag_search.is_some() {
        for (i, dof) in (1..=n_dof).enumerate() {
            let ds = split_and_normalize(&cfg, &records, lag, dof, 0, None)?;
            let (model, report) = train(&final_models[i].0, &ds, &seeded(&cfg.train.baseline, 0, dof))
                .map_err(|e| e.context(format!("baseline, dof {dof}")))?;
            info!("baseline dof{dof}: NMSE {:.4}% / {:.4}% / {:.4}%", report.nmse_train, report.nmse_validation, report.nmse_test);
            final_models[i].0 = model;
            final_models[i].1 = report;
        }
    }

    manifest.nmse_flags.retain(|f| f.stage != "train-baseline");
    let mut model_paths = Vec::with_capacity(n_dof);
    let mut reports = Vec::with_capacity(n_dof);
    for (i, (model, report, stats)) in final_models.iter().enumerate() {
        let path = baseline_dir.join(format!("dof{}.model.json", i + 1));
        save_model(model, Some(stats), &path)?;
        model_paths.push(rel(&path, &dir));
        flag_fit(&mut manifest, &cfg, "train-baseline", &baseline, i + 1, nmse_triple(report));
        reports.push(report.clone());
    }
    let fit_path = baseline_dir.join("fit_reports.json");
    write_json(&reports, &fit_path)?;
    manifest.baseline = Some(BaselineArtifacts {
        lag,
        lag_table: rel(&lag_table, &dir),
        models: model_paths,
        fit_reports: rel(&fit_path, &dir),
    });
    manifest.analysis = None;
    manifest.save(&dir)?;
    Ok(manifest)
}

fn file_stem_of_column(channel: usize, lag: usize) -> String {
    if channel == 0 {
        format!("base_t-{lag}")
    } else {
        format!("dof{channel}_t-{lag}")
    }
}

/// Recalibrates every selected state from the baseline models and writes the metric
/// table, KDE curves and plots.
pub fn cmd_analyze(config: &Path, opts: &AnalyzeOptions) -> Result<RunManifest> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = output_dir(&cfg, opts.out.as_deref());
    let mut manifest = load_manifest(&cfg, &dir, "analyze")?;
    let baseline_art = manifest.baseline.clone().ok_or_else(|| Error::FileNotFound {
        path: dir.join("baseline"),
        context: "baseline models; run `train-baseline` before `analyze`".into(),
    })?;
    let lag = baseline_art.lag;
    let max_points = opts.max_points.or(cfg.max_points);
    if max_points == Some(0) {
        return Err(Error::invalid("max_points", "must be positive"));
    }
    if let Some(names) = &opts.states {
        for n in names {
            if cfg.state(n).is_none() {
                return Err(Error::invalid("states", format!("unknown state `{n}`")));
            }
        }
    }

    let mut baseline_models = Vec::new();
    for p in &baseline_art.models {
        let (model, stats) = load_model(&dir.join(p))?;
        let stats = stats.ok_or_else(|| {
            Error::malformed(p.clone(), "baseline model lacks normalization statistics")
        })?;
        baseline_models.push((model, stats));
    }

    let units: Vec<StateUnit> = cfg
        .units()
        .into_iter()
        .filter(|u| {
            u.replicate
                || opts
                    .states
                    .as_ref()
                    .is_none_or(|names| names.iter().any(|n| *n == u.name))
        })
        .collect();

    let grad_opts = GradientOptions {
        part: Part::All,
        max_points,
        ..GradientOptions::default()
    };
    let kde_dir = dir.join("kde");
    let plot_dir = dir.join("plots");
    let mut kde_paths = Vec::new();
    let mut plot_paths = Vec::new();
    let mut rows = Vec::with_capacity(units.len());
    manifest.nmse_flags.retain(|f| f.stage != "analyze");

    for unit in &units {
        let records = load_records(&manifest, &dir, &unit.name)?;
        let state_dir = dir.join("states").join(&unit.name);
        create_dir(&state_dir)?;
        let mut dofs = Vec::with_capacity(baseline_models.len());
        let mut fit_reports = Vec::new();
        let mut model_paths = Vec::new();
        let mut gradient_paths = Vec::new();
        for (i, (base_model, stats)) in baseline_models.iter().enumerate() {
            let dof = i + 1;
            let ctx = |e: Error| e.context(format!("state {}, dof {dof}", unit.name));
            let ds = split_and_normalize(&cfg, &records, lag, dof, unit.stream, Some(stats)).map_err(ctx)?;
            let (model, report) =
                recalibrate(base_model, &ds, &seeded(&cfg.train.recalibration, unit.stream, dof)).map_err(ctx)?;
            let path = state_dir.join(format!("dof{dof}.model.json"));
            save_model(&model, Some(stats), &path)?;
            model_paths.push(rel(&path, &dir));
            let nmse = nmse_triple(&report);
            fit_reports.push(report);
            flag_fit(&mut manifest, &cfg, "analyze", &unit.name, dof, nmse);

            let mut grads: GradientSampleSet = gradient_field_with(&model, &ds, &grad_opts).map_err(ctx)?;
            grads.state_label = unit.name.clone();
            let metrics = metric_triple(&grads).map_err(ctx)?;
            info!(
                "{} dof{dof}: NMSE {:.3}/{:.3}/{:.3}%, std {:.5}, inverse kurtosis {:.5}",
                unit.name, nmse[0], nmse[1], nmse[2], metrics.mean_std, metrics.mean_inverse_kurtosis
            );
            dofs.push(DofMetrics {
                target_dof: dof,
                metrics,
                nmse,
            });

            let wants_kde = cfg.kde.iter().any(|p| p.state == unit.name && p.dof == dof);
            if cfg.save_gradients || wants_kde {
                let path = state_dir.join(format!("gradients_dof{dof}.csv"));
                grads.write(&path)?;
                gradient_paths.push(rel(&path, &dir));
            }
            if wants_kde {
                let pair_dir = kde_dir.join(format!("{}_dof{dof}", unit.name));
                create_dir(&pair_dir)?;
                let mut series = Vec::new();
                for (j, &(channel, k)) in grads.column_labels.iter().enumerate() {
                    let column = grads.samples.column(j).to_vec();
                    let curve = kde(&column, cfg.kde_grid_size).map_err(ctx)?;
                    let path = pair_dir.join(format!("{}.csv", file_stem_of_column(channel, k)));
                    curve.write(&path)?;
                    kde_paths.push(rel(&path, &dir));
                    series.push(plots::Series {
                        name: crate::dataset::column_name(channel, k),
                        x: curve.grid,
                        y: curve.density,
                    });
                }
                create_dir(&plot_dir)?;
                let path = plot_dir.join(format!("kde_{}_dof{dof}.svg", unit.name));
                fs::write(
                    &path,
                    plots::line_chart(
                        &format!("Gradient densities, {} dof{dof}", unit.name),
                        "density",
                        &series,
                        None,
                    ),
                )?;
                plot_paths.push(rel(&path, &dir));
            }
        }
        let report = StateMetricReport::from_dofs(unit.name.clone(), dofs)?;
        let report_path = state_dir.join("report.json");
        write_json(&report, &report_path)?;
        let fit_path = state_dir.join("fit_reports.json");
        write_json(&fit_reports, &fit_path)?;

        let entry = manifest.state_mut(&unit.name).expect("state present since simulate");
        entry.models = model_paths;
        entry.fit_reports = Some(rel(&fit_path, &dir));
        entry.gradients = gradient_paths;
        entry.report = Some(rel(&report_path, &dir));

        let gap = match cfg.state(&unit.name) {
            Some(StateSpec::Bumper { gap, .. }) => Some(*gap),
            _ => None,
        };
        rows.push(MetricRow {
            kind: unit.kind.to_string(),
            gap,
            report,
        });
    }

    let table = MetricTable {
        format: METRICS_FORMAT.into(),
        config_hash: cfg.hash(),
        lag,
        threshold_sigmas: cfg.threshold_sigmas,
        states: rows,
    };
    let csv_path = dir.join("metrics.csv");
    let mut f = fs::File::create(&csv_path)?;
    f.write_all(table.to_csv().as_bytes())?;
    let json_path = dir.join("metrics.json");
    write_json(&table, &json_path)?;

    create_dir(&plot_dir)?;
    plot_paths.extend(write_metric_plots(&table, &plot_dir)?.iter().map(|p| rel(p, &dir)));

    manifest.analysis = Some(AnalysisArtifacts {
        metrics_csv: rel(&csv_path, &dir),
        metrics_json: rel(&json_path, &dir),
        kde: kde_paths,
        plots: plot_paths,
    });
    manifest.save(&dir)?;
    Ok(manifest)
}

/// Line plots of every metric over the roster and per-DOF heatmaps.
fn write_metric_plots(table: &MetricTable, plot_dir: &Path) -> Result<Vec<PathBuf>> {
    let roster: Vec<&MetricRow> = table
        .states
        .iter()
        .filter(|r| r.kind != "baseline_replicate")
        .collect();
    let names: Vec<String> = roster.iter().map(|r| r.report.state_label.clone()).collect();
    let n_dof = roster.first().map_or(0, |r| r.report.dofs.len());
    let mut paths = Vec::new();
    for moment in [Moment::Std, Moment::Skewness, Moment::InverseKurtosis] {
        let x: Vec<f64> = (0..roster.len()).map(|i| i as f64).collect();
        let mut series: Vec<plots::Series> = (0..n_dof)
            .map(|d| plots::Series {
                name: format!("dof{}", d + 1),
                x: x.clone(),
                y: roster
                    .iter()
                    .map(|r| r.report.dofs[d].metrics.get(moment).unwrap_or(f64::NAN))
                    .collect(),
            })
            .collect();
        series.push(plots::Series {
            name: "mean".into(),
            x,
            y: roster
                .iter()
                .map(|r| r.report.floor_average.get(moment).unwrap_or(f64::NAN))
                .collect(),
        });
        let path = plot_dir.join(format!("metric_{}.svg", moment.name()));
        fs::write(
            &path,
            plots::line_chart(&format!("Mean gradient {}", moment.name()), moment.name(), &series, Some(&names)),
        )?;
        paths.push(path);

        let cols: Vec<String> = (1..=n_dof).map(|d| format!("dof{d}")).collect();
        let values: Vec<Vec<f64>> = roster
            .iter()
            .map(|r| {
                r.report
                    .dofs
                    .iter()
                    .map(|d| d.metrics.get(moment).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        let path = plot_dir.join(format!("heatmap_{}.svg", moment.name()));
        fs::write(
            &path,
            plots::heatmap(&format!("Mean gradient {} per floor", moment.name()), &names, &cols, &values),
        )?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads a completed run and evaluates the detection rule.
pub fn cmd_report(manifest_path: &Path) -> Result<DetectionReport> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let analysis = manifest
        .analysis
        .as_ref()
        .ok_or_else(|| Error::MalformedManifest("no analysis recorded; run `analyze` first".into()))?;
    let table = MetricTable::load(&dir.join(&analysis.metrics_json))
        .map_err(|e| Error::MalformedManifest(e.to_string()))?;
    detection_report(&table)
}

/// Runs all four stages in order.
pub fn run_all(config: &Path) -> Result<DetectionReport> {
    cmd_simulate(config, None)?;
    cmd_train_baseline(config, None)?;
    cmd_analyze(config, &AnalyzeOptions::default())?;
    let cfg = ExperimentConfig::load(config)?;
    cmd_report(&cfg.output_dir.join(MANIFEST_FILE))
}
