//! Acceptance suite. Runs as a plain binary (no libtest harness) so that every
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use nlgrad::dataset::make_lagged;
use nlgrad::gradients::{fd_gradient, gradient_field_with, input_gradient, GradientOptions, GradientUnits};
use nlgrad::gradstats::{kde, moments, silverman_bandwidth, Moment};
use nlgrad::neuralnet::{nmse, train, FitReport, MlpModel, TrainConfig};
use nlgrad::pipeline::{
    cmd_analyze, cmd_report, cmd_simulate, cmd_train_baseline, AnalyzeOptions, DetectionReport, MetricTable,
    RunManifest, MANIFEST_FILE,
};
use nlgrad::simulator::TimeSeriesRecord;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_model(rng: &mut ChaCha8Rng) -> MlpModel {
    let input = rng.random_range(1..=8);
    let hidden = rng.random_range(1..=100);
    let mut m = MlpModel::new(input, hidden, 1, rng.random());
    m.bias_hidden.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    m.bias_out[0] = rng.random_range(-1.0..1.0);
    m
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst_input = 0.0f64;
    for _ in 0..1000 {
        let m = random_model(&mut rng);
        let x = Array1::from_shape_fn(m.input_dim(), |_| normal(&mut rng));
        let analytic = input_gradient(&m, x.view()).unwrap();
        let fd = fd_gradient(&m, x.view(), 1e-4).unwrap();
        worst_input = worst_input.max(rel_err(analytic.as_slice().unwrap(), fd.as_slice().unwrap()));
    }
    let mut worst_param = 0.0f64;
    for _ in 0..100 {
        let m = random_model(&mut rng);
        let n = 16;
        let x = Array2::from_shape_fn((n, m.input_dim()), |_| normal(&mut rng));
        let y = Array2::from_shape_fn((n, 1), |_| normal(&mut rng));
        let l2 = 1e-3;
        let (_, grad) = m.loss_and_gradient(x.view(), y.view(), l2).unwrap();
        let analytic = grad.flat();
        let base = m.params_flat();
        let mut probe = m.clone();
        let fd: Vec<f64> = (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] = base[i] + 1e-4;
                probe.set_params_flat(&p);
                let plus = probe.loss_and_gradient(x.view(), y.view(), l2).unwrap().0;
                p[i] = base[i] - 1e-4;
                probe.set_params_flat(&p);
                let minus = probe.loss_and_gradient(x.view(), y.view(), l2).unwrap().0;
                (plus - minus) / 2e-4
            })
            .collect();
        worst_param = worst_param.max(rel_err(&analytic, &fd));
    }
    outcome(
        worst_input < 1e-6 && worst_param < 1e-6,
        format!("max relative error: input {worst_input:.2e} (1000 pairs), parameters {worst_param:.2e} (100 pairs)"),
    )
}

fn criterion_2() -> Outcome {
    let (m, c, k, dt) = (1.0, 0.5, 1.0, 0.5);
    let a1 = 2.0 - c * dt / m - k * dt * dt / m;
    let a2 = c * dt / m - 1.0;
    let b = dt * dt / m;
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let records: Vec<TimeSeriesRecord> = (0..5)
        .map(|r| {
            let n = 2000;
            let force: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            let mut y = vec![0.0; n];
            for t in 2..n {
                y[t] = a1 * y[t - 1] + a2 * y[t - 2] + b * force[t - 1];
            }
            TimeSeriesRecord {
                channels: Array2::from_shape_fn((n, 2), |(t, ch)| if ch == 0 { force[t] } else { y[t] }),
                dt,
                state_label: "sdof".into(),
                repetition: r,
                seed: r as u64,
            }
        })
        .collect();
    let data = make_lagged(&records, 2, 1)
        .unwrap()
        .split([0.6, 0.2, 0.2], 7)
        .unwrap()
        .normalize()
        .unwrap();
    let cfg = TrainConfig {
        max_epochs: 300,
        batch_size: 64,
        learning_rate: 1e-2,
        l2_weight: 1e-6,
        patience: 30,
        seed: 3,
        ..TrainConfig::default()
    };
    let (model, report) = train(&MlpModel::new(4, 100, 1, 5), &data, &cfg).unwrap();
    let grads = gradient_field_with(
        &model,
        &data,
        &GradientOptions {
            units: GradientUnits::Raw,
            ..GradientOptions::default()
        },
    )
    .unwrap();
    // columns: base[t-1], y[t-1], base[t-2], y[t-2]
    let col = |j: usize| grads.samples.column(j).to_vec();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (g1, g2) = (col(1), col(3));
    let (m1, m2) = (mean(&g1), mean(&g2));
    let (s1, s2) = (moments(&g1).unwrap().std, moments(&g2).unwrap().std);
    let pass = ((m1 - a1) / a1).abs() < 0.05
        && ((m2 - a2) / a2).abs() < 0.05
        && s1 < 0.05 * a1.abs()
        && s2 < 0.05 * a1.abs();
    outcome(
        pass,
        format!(
            "a1 = {a1}: mean {m1:.4}, std {s1:.2e}; a2 = {a2}: mean {m2:.4}, std {s2:.2e}; test NMSE {:.4}%",
            report.nmse_test
        ),
    )
}

/// Desk-scale pipeline run shared by criteria 3 to 6.
struct DeskRun {
    dir: PathBuf,
    table: MetricTable,
    report: DetectionReport,
    baseline_fits: Vec<FitReport>,
}

fn desk_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn run_desk(dir: &Path) -> DeskRun {
    let cfg = desk_config();
    cmd_simulate(&cfg, Some(dir)).expect("simulate");
    cmd_train_baseline(&cfg, Some(dir)).expect("train-baseline");
    let opts = AnalyzeOptions {
        out: Some(dir.to_path_buf()),
        ..AnalyzeOptions::default()
    };
    cmd_analyze(&cfg, &opts).expect("analyze");
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = RunManifest::load(&manifest_path).expect("manifest");
    let analysis = manifest.analysis.as_ref().expect("analysis recorded");
    let table = MetricTable::load(&dir.join(&analysis.metrics_json)).expect("metric table");
    let baseline = manifest.baseline.as_ref().expect("baseline recorded");
    let baseline_fits: Vec<FitReport> =
        serde_json::from_str(&fs::read_to_string(dir.join(&baseline.fit_reports)).unwrap()).unwrap();
    let report = cmd_report(&manifest_path).expect("report");
    DeskRun {
        dir: dir.to_path_buf(),
        table,
        report,
        baseline_fits,
    }
}

fn criterion_3(run: &DeskRun) -> Outcome {
    let mut worst = ("baseline training".to_string(), 0.0f64);
    for (i, f) in run.baseline_fits.iter().enumerate() {
        if f.max_nmse() > worst.1 {
            worst = (format!("baseline training dof{}", i + 1), f.max_nmse());
        }
    }
    for row in &run.table.states {
        for d in &row.report.dofs {
            let v = d.nmse.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(v <= worst.1) {
                worst = (format!("{} dof{}", row.report.state_label, d.target_dof), v);
            }
        }
    }
    outcome(
        worst.1 < 5.0,
        format!("worst NMSE {:.3}% ({}) over {} states", worst.1, worst.0, run.table.states.len()),
    )
}

fn bumper_rows(run: &DeskRun) -> Vec<&nlgrad::pipeline::MetricRow> {
    run.table.states.iter().filter(|r| r.kind == "bumper").collect()
}

fn criterion_4(run: &DeskRun) -> Outcome {
    let r = &run.report;
    let mut failures = Vec::new();
    for v in r.states.iter().filter(|s| s.kind == "bumper") {
        if !(v.detected && v.std_exceeds) {
            failures.push(format!(
                "{} (std {:.4}, 1/kurt {:.4})",
                v.state, v.mean_std, v.mean_inverse_kurtosis
            ));
        }
    }
    for v in r.states.iter().filter(|s| s.kind == "stiffness_scale" || s.kind == "added_mass") {
        if v.detected {
            failures.push(format!("confounder {} flagged (1/kurt {:.4})", v.state, v.mean_inverse_kurtosis));
        }
    }
    let n_bumper = r.states.iter().filter(|s| s.kind == "bumper").count();
    let n_conf = r
        .states
        .iter()
        .filter(|s| s.kind == "stiffness_scale" || s.kind == "added_mass")
        .count();
    outcome(
        failures.is_empty() && n_bumper > 0 && n_conf > 0 && r.threshold_inverse_kurtosis.n >= 5,
        format!(
            "thresholds std {:.4}, 1/kurt {:.4} (n = {}); {n_bumper} bumper, {n_conf} confounder states{}",
            r.threshold_std.value,
            r.threshold_inverse_kurtosis.value,
            r.threshold_inverse_kurtosis.n,
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join(", "))
            }
        ),
    )
}

fn criterion_5(run: &DeskRun) -> Outcome {
    let mut rows = bumper_rows(run);
    rows.sort_by(|a, b| b.gap.partial_cmp(&a.gap).unwrap());
    let ik: Vec<f64> = rows.iter().map(|r| r.report.floor_average.mean_inverse_kurtosis).collect();
    let sd: Vec<f64> = rows.iter().map(|r| r.report.floor_average.mean_std).collect();
    let ik_strict = ik.windows(2).all(|w| w[1] > w[0]);
    let sd_inversions = sd.windows(2).filter(|w| w[1] <= w[0]).count();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" < ");
    outcome(
        rows.len() == 5 && ik_strict && sd_inversions <= 1,
        format!(
            "{} gaps; 1/kurt {}; std {} ({sd_inversions} inversion(s))",
            rows.len(),
            fmt(&ik),
            fmt(&sd)
        ),
    )
}

fn criterion_6(run: &DeskRun) -> Outcome {
    let mut failures = Vec::new();
    for row in bumper_rows(run) {
        let r = &row.report;
        for moment in [Moment::Std, Moment::InverseKurtosis] {
            let get = |dof: usize| r.dof(dof).and_then(|d| d.metrics.get(moment)).unwrap();
            let remote = get(1);
            if !(get(2) > remote && get(3) > remote) {
                failures.push(format!(
                    "{} {} ({:.4} / {:.4} / {:.4})",
                    r.state_label,
                    moment.name(),
                    remote,
                    get(2),
                    get(3)
                ));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "floors 2 and 3 exceed floor 1 for std and 1/kurt in every bumper state".to_string()
        } else {
            format!("failing: {}", failures.join(", "))
        },
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<f64> = (0..1000).map(|_| normal(&mut rng)).collect();
    let h = silverman_bandwidth(&samples).unwrap();
    let curve = kde(&samples, 512).unwrap();
    let mut worst = 0.0f64;
    for (&x, &d) in curve.grid.iter().zip(&curve.density) {
        let direct: f64 = samples
            .iter()
            .map(|s| (-0.5 * ((x - s) / h).powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .sum::<f64>()
            / (samples.len() as f64 * h);
        worst = worst.max((direct - d).abs());
    }
    let integral = curve.trapezoid_integral();
    outcome(
        worst <= 1e-12 && (0.999..=1.001).contains(&integral) && (h - 0.226).abs() <= 0.01,
        format!("max |kde - direct| {worst:.1e}; integral {integral:.6}; Silverman h {h:.4}"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let samples: Vec<f64> = (0..100_000).map(|_| normal(&mut rng)).collect();
    let m = moments(&samples).unwrap();
    let (s, k) = (m.skewness.unwrap(), m.kurtosis.unwrap());
    let constant = moments(&[3.7; 100]).unwrap();
    outcome(
        (m.std - 1.0).abs() <= 0.02 && s.abs() <= 0.03 && (k - 3.0).abs() <= 0.1 && constant.std == 0.0,
        format!("std {:.4}, skewness {s:.4}, kurtosis {k:.4}; constant std {}", m.std, constant.std),
    )
}

fn criterion_9() -> Outcome {
    let y = [1.0, 2.0, 3.0, 4.0];
    let equal = nmse(&y, &y).unwrap();
    let mean = [2.5; 4];
    let mean_pred = nmse(&mean, &y).unwrap();
    let hand = nmse(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
    outcome(
        equal == 0.0 && mean_pred == 100.0 && (hand - 50.0).abs() < 1e-12,
        format!("equal {equal}%, mean predictor {mean_pred}%, hand case {hand}%"),
    )
}

fn criterion_10(first: &DeskRun, scratch: &Path) -> Outcome {
    let second = run_desk(scratch);
    let a = fs::read(first.dir.join("metrics.csv")).unwrap();
    let b = fs::read(second.dir.join("metrics.csv")).unwrap();
    let ra = first.report.render(nlgrad::pipeline::ReportFormat::Csv);
    let rb = second.report.render(nlgrad::pipeline::ReportFormat::Csv);
    outcome(
        a == b && ra == rb,
        format!("metric tables {} bytes, identical: {}; reports identical: {}", a.len(), a == b, ra == rb),
    )
}

fn main() {
    // libtest-style flags (e.g. from `cargo test -- --nocapture`) are ignored
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {:<28} {}  {} [{secs:.1}s]",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };

    run(1, "gradient oracle", &mut criterion_1);
    run(2, "linear coefficient recovery", &mut criterion_2);
    run(7, "KDE correctness", &mut criterion_7);
    run(8, "moment oracles", &mut criterion_8);
    run(9, "NMSE unit checks", &mut criterion_9);

    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let desk = run_desk(&tmp.path().join("first"));
    println!("desk pipeline run: {:.1}s", t.elapsed().as_secs_f64());
    print!("{}", desk.report.render(nlgrad::pipeline::ReportFormat::Table));
    run(3, "fit quality", &mut || criterion_3(&desk));
    run(4, "detection", &mut || criterion_4(&desk));
    run(5, "severity ordering", &mut || criterion_5(&desk));
    run(6, "localization", &mut || criterion_6(&desk));
    let second = tmp.path().join("second");
    run(10, "determinism", &mut || criterion_10(&desk, &second));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
