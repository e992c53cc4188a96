//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so the PASS/FAIL lines reach the
//! console. Exits non-zero when a hard criterion fails or cannot be
//! evaluated; the expressivity criterion is soft and only reported.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rpnet::cli::{execute, CommandKind};
use rpnet::complexity;
use rpnet::data::{sample_manifold, ManifoldSpec};
use rpnet::linalg::{derive_seed, gaussian_matrix, random_orthoprojector, SeededRng};
use rpnet::nn::grad_check;
use rpnet::recovery::recovery_phase_experiment;
use rpnet::rip::{self, DeltaMode, DEFAULT_SUPPORT_CAP};
use rpnet::Tensor;
use serde_json::{json, Value};

const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 6;
const RIP_MATRICES: u64 = 20;
const RIP_TRIALS: usize = 5000;
const TRANSFORM_TOL: f64 = 1e-12;
const TREND_SEEDS: u64 = 20;
const TREND_TRIALS: usize = 2000;
const TREND_GRID: [usize; 4] = [8, 16, 32, 48];
const PHASE_TRIALS: usize = 50;
const PHASE_HIGH: f64 = 0.9;
const PHASE_LOW: f64 = 0.2;
const CIRCLE_SEEDS: u64 = 100;
const CIRCLE_POINTS: usize = 200;
const CIRCLE_MAX_DISTORTION: f64 = 0.5;
const CIRCLE_REQUIRED: usize = 95;
const FCNN_ERROR: f64 = 0.10;
const FCNN_GAP: f64 = 0.04;
const CNN_GAP: f64 = 0.02;
const SEEDS: [u64; 3] = [0, 1, 2];

/// Reference totals: (preset, variant, n, thousand params, million FLOPs).
const TABLE: [(&str, &str, usize, &str, &str); 28] = [
    ("mnist_fcnn", "original", 0, "1,851.39", "3.70"),
    ("mnist_fcnn", "rp_dense", 250, "512.00", "1.93"),
    ("mnist_fcnn", "rp_dense", 150, "307.20", "1.16"),
    ("mnist_fcnn", "rp_dense", 100, "204.80", "0.77"),
    ("mnist_fcnn", "rp_dense", 50, "102.40", "0.39"),
    ("cifar_fcnn", "original", 0, "29,360.13", "58.72"),
    ("cifar_fcnn", "rp_dense", 1500, "12,288.00", "46.08"),
    ("cifar_fcnn", "rp_dense", 1000, "8,192.00", "30.72"),
    ("cifar_fcnn", "rp_dense", 700, "5,734.40", "21.50"),
    ("cifar_fcnn", "rp_dense", 500, "4,096.00", "15.36"),
    ("mnist_cnn", "original", 0, "206.40", "82.79"),
    ("mnist_cnn", "approach_i", 15, "2.88", "12.25"),
    ("mnist_cnn", "approach_i", 10, "1.92", "8.17"),
    ("mnist_cnn", "approach_i", 5, "0.96", "4.08"),
    ("mnist_cnn", "approach_i", 3, "0.58", "2.45"),
    ("mnist_cnn", "approach_ii", 10, "82.56", "39.78"),
    ("mnist_cnn", "approach_ii", 7, "57.79", "27.85"),
    ("mnist_cnn", "approach_ii", 5, "41.28", "19.89"),
    ("mnist_cnn", "approach_ii", 3, "24.77", "11.93"),
    ("cifar_cnn", "original", 0, "1,852.80", "491.52"),
    ("cifar_cnn", "approach_i", 40, "23.04", "111.98"),
    ("cifar_cnn", "approach_i", 25, "14.40", "69.99"),
    ("cifar_cnn", "approach_i", 15, "8.64", "41.99"),
    ("cifar_cnn", "approach_i", 10, "5.76", "28.00"),
    ("cifar_cnn", "approach_ii", 15, "1,111.68", "331.01"),
    ("cifar_cnn", "approach_ii", 10, "741.12", "220.67"),
    ("cifar_cnn", "approach_ii", 7, "518.78", "154.47"),
    ("cifar_cnn", "approach_ii", 5, "370.56", "110.34"),
];

/// Integer totals worked out by hand: (row in TABLE, params, FLOPs).
const CLOSED_FORM: [(usize, u64, u64); 3] = [(0, 1_851_392, 3_702_784), (10, 206_400, 82_790_400), (19, 1_852_800, 491_520_000)];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("RPNET_MNIST_DIR").map(PathBuf::from).unwrap_or_else(|| workspace().join("data/mnist"));
    dir.is_dir().then_some(dir)
}

fn count_config(preset: &str, variant: &str, n: usize, params: &str, flops: &str) -> Value {
    let variant = if variant == "original" { json!({"type": variant}) } else { json!({"type": variant, "n": n}) };
    json!({
        "model": {"preset": {"name": preset, "variant": variant}},
        "expect": {"params_thousands": params, "flops_millions": flops}
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut misses = Vec::new();
    for &(preset, variant, n, params, flops) in &TABLE {
        let cfg = count_config(preset, variant, n, params, flops).to_string();
        if let Err(e) = execute(CommandKind::Count, Path::new("."), &cfg, None).1 {
            misses.push(format!("{preset} {variant} {n}: {e}"));
        }
    }
    for &(row, params, flops) in &CLOSED_FORM {
        let (preset, variant, n, _, _) = TABLE[row];
        let model: rpnet::cli::ModelConfig =
            serde_json::from_value(count_config(preset, variant, n, "", "")["model"].clone()).unwrap();
        let report = complexity::count(&model.resolve(0).unwrap()).unwrap();
        if (report.total_params, report.total_flops) != (params, flops) {
            misses.push(format!("{preset}: {} / {} instead of {params} / {flops}", report.total_params, report.total_flops));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 1.0 {
        misses.push(format!("took {secs:.2}s"));
    }
    if misses.is_empty() {
        outcome(true, format!("all {} rows match at printed precision, closed forms exact, {secs:.3}s", TABLE.len()))
    } else {
        outcome(false, misses.join("; "))
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut names = std::collections::BTreeSet::new();
    for seed in 0..GRAD_SEEDS {
        let report = grad_check(seed).unwrap();
        worst = worst.max(report.max_relative_error());
        names.extend(report.tensors.iter().map(|t| t.name));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < GRAD_TOL && secs < 30.0,
        format!("max relative error {worst:.2e} over {GRAD_SEEDS} seeds ({} tensor kinds), {secs:.1}s", names.len()),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::new(3);
    let mut bad = Vec::new();
    let mut worst_gap = 0.0f64;
    for i in 0..RIP_MATRICES {
        let d = 8 + rng.below(17);
        let n = 2 + rng.below(d - 2);
        let s = 1 + rng.below(3);
        let a = gaussian_matrix(n, d, derive_seed(33, i)).unwrap().into_entries();
        let exact = rip::delta_exact(&a, s).unwrap();
        let mc = rip::delta_monte_carlo(&a, s, RIP_TRIALS, derive_seed(34, i)).unwrap();
        let via_w = rip::delta_with_transform(&a, &Tensor::eye(d), s, DeltaMode::Exact { cap: DEFAULT_SUPPORT_CAP }).unwrap();
        worst_gap = worst_gap.max((via_w - exact).abs());
        if mc > exact || (via_w - exact).abs() > TRANSFORM_TOL {
            bad.push(format!("n={n} d={d} s={s}: mc {mc} exact {exact} transform {via_w}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if bad.is_empty() && secs < 60.0 {
        outcome(true, format!("{RIP_MATRICES} matrices: Monte Carlo ≤ exact, |W=I − exact| ≤ {worst_gap:.1e}, {secs:.1}s"))
    } else {
        outcome(false, format!("{} ({secs:.1}s)", bad.join("; ")))
    }
}

fn criterion_4() -> Outcome {
    let medians: Vec<f64> = TREND_GRID
        .iter()
        .map(|&n| {
            let deltas: Vec<f64> = (0..TREND_SEEDS)
                .map(|seed| {
                    let a = gaussian_matrix(n, 64, derive_seed(seed, n as u64)).unwrap().into_entries();
                    rip::delta_monte_carlo(&a, 4, TREND_TRIALS, derive_seed(seed, 1000 + n as u64)).unwrap()
                })
                .collect();
            median(&deltas)
        })
        .collect();
    let ok = medians.windows(2).all(|w| w[1] <= w[0]);
    let shown: Vec<String> = TREND_GRID.iter().zip(&medians).map(|(n, m)| format!("n={n}: {m:.3}")).collect();
    outcome(ok, format!("median δ over {TREND_SEEDS} seeds: {}", shown.join(", ")))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let table = recovery_phase_experiment(64, 3, &[2, 32], PHASE_TRIALS, 0).unwrap();
    let (lo, hi) = (table.rows[0].success_rate, table.rows[1].success_rate);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        hi >= PHASE_HIGH && lo <= PHASE_LOW && secs < 120.0,
        format!("IHT success {hi:.2} at n=32, {lo:.2} at n=2 over {PHASE_TRIALS} trials, {secs:.1}s"),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut good = 0;
    let mut worst = 0.0f64;
    for seed in 0..CIRCLE_SEEDS {
        let points = sample_manifold(&ManifoldSpec::circle(1.0, 100, seed), CIRCLE_POINTS, derive_seed(seed, 1)).unwrap();
        let a = random_orthoprojector(12, 100, derive_seed(seed, 2)).unwrap().into_entries();
        let delta = rip::manifold_distortion(&a, &points).unwrap().delta_observed;
        worst = worst.max(delta);
        if delta < CIRCLE_MAX_DISTORTION {
            good += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        good >= CIRCLE_REQUIRED && secs < 60.0,
        format!("{good}/{CIRCLE_SEEDS} seeds below {CIRCLE_MAX_DISTORTION} (worst {worst:.3}), {secs:.1}s"),
    )
}

/// Final test error of a `train` run on the MNIST subset.
fn train_error(mnist: &Path, layers: &[String], optimizer: Value, epochs: usize, seed: u64) -> Result<f64, String> {
    let cfg = json!({
        "model": {"table": {"input_shape": [28, 28, 1], "layers": layers}},
        "data": {"kind": "mnist", "dir": mnist, "train_count": 10000},
        "optimizer": optimizer,
        "epochs": epochs,
        "batch_size": 64,
        "seed": seed
    });
    let (report, result) = execute(CommandKind::Train, Path::new("."), &cfg.to_string(), None);
    result.map_err(|e| e.to_string())?;
    let body = String::from_utf8(report.expect("train writes a report").body).unwrap();
    let last = body.lines().last().unwrap_or_default();
    let fields: Vec<&str> = last.split(',').collect();
    match fields.as_slice() {
        ["final", _, err, ..] => err.parse().map_err(|e| format!("{e}")),
        _ => Err(format!("no final row in {body:?}")),
    }
}

fn fcnn_layers(n: Option<usize>) -> Vec<String> {
    let hidden = match n {
        Some(n) => format!("RP {n} FC 256"),
        None => "FC 256".into(),
    };
    vec![hidden.clone(), "ReLU".into(), hidden, "ReLU".into(), "FC 10".into()]
}

fn criterion_7(mnist: &Path) -> Outcome {
    let start = Instant::now();
    let sgd = json!({"type": "sgd", "lr": 0.01});
    let run = |n: Option<usize>| -> Result<f64, String> {
        let errs: Vec<f64> =
            SEEDS.iter().map(|&s| train_error(mnist, &fcnn_layers(n), sgd.clone(), 2, s)).collect::<Result<_, _>>()?;
        Ok(median(&errs))
    };
    let result = (|| -> Result<Outcome, String> {
        let original = run(None)?;
        let by_n = [(50, run(Some(50))?), (100, run(Some(100))?), (250, run(Some(250))?)];
        let a = original < FCNN_ERROR;
        let b = by_n[1].1 <= original + FCNN_GAP;
        let c = by_n.windows(2).all(|w| w[1].1 <= w[0].1);
        let secs = start.elapsed().as_secs_f64();
        let shown: Vec<String> = by_n.iter().map(|(n, e)| format!("n={n} {:.2}%", 100.0 * e)).collect();
        Ok(outcome(
            a && b && c && secs < 600.0,
            format!(
                "median test error: original {:.2}%, {} (a {a}, b {b}, c {c}), {secs:.0}s",
                100.0 * original,
                shown.join(", ")
            ),
        ))
    })();
    result.unwrap_or_else(|e| outcome(false, e))
}

fn cnn_layers(approach: &str) -> Vec<String> {
    vec![
        format!("5x5 RP-{approach} 5 CONV 16, BN, ReLU, 3x3 MP"),
        format!("5x5 RP-{approach} 5 CONV 32, BN, ReLU, 3x3 MP"),
        "FC 512, BN, ReLU".into(),
        "FC 10".into(),
    ]
}

fn criterion_8(mnist: &Path) -> Outcome {
    let start = Instant::now();
    let adam = json!({"type": "adam", "lr": 0.001});
    let run = |approach: &str| -> Result<Vec<f64>, String> {
        SEEDS.iter().map(|&s| train_error(mnist, &cnn_layers(approach), adam.clone(), 1, s)).collect()
    };
    match (run("I"), run("II")) {
        (Ok(one), Ok(two)) => {
            let (m1, m2) = (median(&one), median(&two));
            let secs = start.elapsed().as_secs_f64();
            outcome(
                m2 <= m1 + CNN_GAP && secs < 900.0,
                format!("median test error: approach I {:.2}%, approach II {:.2}% (n=5), {secs:.0}s", 100.0 * m1, 100.0 * m2),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn criterion_9() -> Outcome {
    let path = workspace().join("configs/expressivity/sparse_sin_d256.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let (report, result) = execute(CommandKind::Expressivity, Path::new("."), &text, None);
    let Some(report) = report else {
        return outcome(false, format!("no report: {result:?}"));
    };
    let echo: Value = serde_json::from_slice(report.sidecar.as_deref().unwrap_or_default()).unwrap();
    let checks = &echo["checks"];
    let passed = checks["passed"] == json!(true);
    let code = result.as_ref().err().map_or(0, |e| e.exit_code());
    outcome(
        passed && result.is_ok(),
        format!(
            "median RMSE gap n=64 vs n=8 {:+.4} (allowed +0.05), RP n=32 / matched full {:.2} (allowed 1.5), exit {code}",
            checks["trend_gap"].as_f64().unwrap_or(f64::NAN),
            checks["matched_ratio"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_10(mnist: Option<&Path>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut configs = vec![
        ("count", count_config("cifar_cnn", "approach_ii", 7, "518.78", "154.47")),
        ("rip", json!({"matrix": {"kind": "gaussian", "n": 10, "d": 20}, "s": 3, "trials": 500, "transform": "random_orthogonal",
            "manifold": {"spec": {"kind": "trefoil", "radius": 1.0, "ambient_dim": 20, "rotation_seed": 2}, "points": 50}})),
        ("recover", json!({"d": 48, "k": 3, "n_grid": [4, 16, 28], "trials": 20})),
        ("expressivity", json!({"d": 32, "k": 3, "n_grid": [4, 16], "hidden": 8, "train_count": 200, "test_count": 100,
            "epochs": 5, "batch_size": 16, "optimizer": {"type": "adam", "lr": 0.01}, "repeats": 2, "matched_n": 4})),
    ];
    if let Some(m) = mnist {
        configs.push((
            "train",
            json!({"model": {"preset": {"name": "mnist_cnn", "variant": {"type": "approach_ii", "n": 3}}},
                "data": {"kind": "mnist", "dir": m, "train_count": 128, "test_count": 64},
                "optimizer": {"type": "adam", "lr": 0.001}, "epochs": 1, "batch_size": 32}),
        ));
    }
    let mut bad = Vec::new();
    for (cmd, cfg) in &configs {
        let cfg_path = dir.path().join(format!("{cmd}.json"));
        std::fs::write(&cfg_path, cfg.to_string()).unwrap();
        let files = |tag: &str| -> Vec<Vec<u8>> {
            let out = dir.path().join(format!("{cmd}-{tag}.out"));
            let status = Command::new(env!("CARGO_BIN_EXE_rpnet"))
                .args([*cmd, "--config"])
                .arg(&cfg_path)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "17"])
                .status()
                .unwrap();
            assert!(status.success(), "{cmd} exited with {status}");
            let side = rpnet::cli::sidecar_path(&out);
            let mut v = vec![std::fs::read(&out).unwrap()];
            v.extend(std::fs::read(side).ok());
            v
        };
        if files("a") != files("b") {
            bad.push(*cmd);
        }
    }
    let names: Vec<&str> = configs.iter().map(|(c, _)| *c).collect();
    if bad.is_empty() {
        outcome(mnist.is_some(), format!("byte-identical reports for {}", names.join(", ")))
    } else {
        outcome(false, format!("reports differ for {}", bad.join(", ")))
    }
}

fn main() -> ExitCode {
    let mnist = mnist_dir();
    let missing = || outcome(false, "MNIST files not found (set RPNET_MNIST_DIR)");
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let checks: Vec<(u32, bool, Check)> = vec![
        (1, true, Box::new(criterion_1)),
        (2, true, Box::new(criterion_2)),
        (3, true, Box::new(criterion_3)),
        (4, true, Box::new(criterion_4)),
        (5, true, Box::new(criterion_5)),
        (6, true, Box::new(criterion_6)),
        (7, true, Box::new(|| mnist.as_deref().map_or_else(missing, criterion_7))),
        (8, true, Box::new(|| mnist.as_deref().map_or_else(missing, criterion_8))),
        (9, false, Box::new(criterion_9)),
        (10, true, Box::new(|| criterion_10(mnist.as_deref()))),
    ];
    // optional criterion numbers after `--` restrict the run
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut hard_failures = 0;
    for (id, hard, check) in checks {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let o = check();
        let label = if o.passed { "PASS" } else { "FAIL" };
        let soft = if hard { "" } else { " [soft]" };
        println!("{label} criterion {id}{soft}: {}", o.detail);
        if hard && !o.passed {
            hard_failures += 1;
        }
    }
    if hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{hard_failures} hard criteria failed");
        ExitCode::FAILURE
    }
}
