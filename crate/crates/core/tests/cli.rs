use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rpnet::cli::{execute, parse_table, sidecar_path, CommandKind, ModelConfig, Preset};
use rpnet::complexity;
use rpnet::nn::models::Variant;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rpnet"));
    c.env_remove("RPNET_THREADS");
    c
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("RPNET_MNIST_DIR").map(PathBuf::from).unwrap_or_else(|| workspace().join("data/mnist"));
    dir.is_dir().then_some(dir)
}

fn run_bin(cmd: &str, dir: &Path, config: &str, seed: Option<u64>) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{cmd}.json"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("{cmd}.out"));
    let mut c = bin();
    c.args([cmd, "--config"]).arg(&cfg).arg("--out").arg(&out);
    if let Some(s) = seed {
        c.args(["--seed", &s.to_string()]);
    }
    (c.output().unwrap(), out)
}

fn body(kind: CommandKind, config: &str) -> String {
    let (report, result) = execute(kind, Path::new("."), config, None);
    result.unwrap();
    String::from_utf8(report.unwrap().body).unwrap()
}

const COUNT: &str = r#"{"model": {"preset": {"name": "mnist_cnn", "variant": {"type": "approach_ii", "n": 5}}}}"#;
const RIP: &str = r#"{"matrix": {"kind": "gaussian", "n": 10, "d": 20}, "s": 2, "trials": 300, "transform": "random_orthogonal", "seed": 4}"#;

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        ("count", r#"{"model": {"preset": {"name": "mnist_cnn"}}, "sed": 1}"#),
        ("count", r#"{"model": {"preset": {"name": "mnist_cnn", "varient": {"type": "original"}}}}"#),
        ("rip", r#"{"matrix": {"kind": "gaussian", "n": 4, "d": 8, "scale": 2}, "s": 1}"#),
        ("recover", r#"{"d": 16, "k": 1, "n_grid": [8], "trials": 2, "expect": {"min_rate": 1}}"#),
        ("count", r#"{"model": {"spec": {"input_shape": [4], "layers": [{"type": "dense", "units": 2, "bias": true}], "outputs": 1}}}"#),
        ("count", "{\"model\": {\"preset\": {\"name\": \"mnist_cnn\"}}} trailing"),
    ];
    for (cmd, cfg) in bad {
        let (out, path) = run_bin(cmd, dir.path(), cfg, None);
        assert_eq!(out.status.code(), Some(2), "{cfg}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!path.exists());
    }
}

#[test]
fn missing_config_file_and_bad_thread_count_are_config_errors() {
    let out = bin().args(["count", "--config", "/nonexistent/rpnet.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, COUNT).unwrap();
    let out = bin().env("RPNET_THREADS", "zero").arg("count").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "model": {"preset": {"name": "mnist_fcnn"}},
        "data": {"kind": "mnist", "dir": "no-such-dir"},
        "optimizer": {"type": "sgd", "lr": 0.01},
        "epochs": 1, "batch_size": 8
    }"#;
    let (out, _) = run_bin("train", dir.path(), cfg, None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failed_expectation_exits_4_and_keeps_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"preset": {"name": "mnist_fcnn"}}, "expect": {"params_thousands": "1,851.40", "flops_millions": "3.70"}}"#;
    let (out, path) = run_bin("count", dir.path(), cfg, None);
    assert_eq!(out.status.code(), Some(4));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.ends_with("total,,1851392,3702784\n"), "{csv}");
    assert!(sidecar_path(&path).exists());

    let cfg = r#"{"d": 32, "k": 2, "n_grid": [2, 20], "trials": 10, "expect": {"max_rate_at_min_n": -1}}"#;
    let (out, path) = run_bin("recover", dir.path(), cfg, None);
    assert_eq!(out.status.code(), Some(4));
    assert!(std::fs::read_to_string(path).unwrap().starts_with("n,trials,successes,success_rate\n"));
}

#[test]
fn count_csv_parses_back_to_the_report() {
    let spec = ModelConfig::Preset { name: Preset::MnistCnn, variant: Variant::ApproachII { n: 5 } }.resolve(0).unwrap();
    let report = complexity::count(&spec).unwrap();
    let text = body(CommandKind::Count, COUNT);
    assert!(!text.contains('\r'));
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rows.headers().unwrap(), vec!["layer", "kind", "params", "flops"]);
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), report.layers.len() + 1);
    for (rec, l) in records.iter().zip(&report.layers) {
        assert_eq!(rec[0].parse::<usize>().unwrap(), l.layer);
        assert_eq!(&rec[1], l.kind);
        assert_eq!(rec[2].parse::<u64>().unwrap(), l.params);
        assert_eq!(rec[3].parse::<u64>().unwrap(), l.flops);
    }
    let total = records.last().unwrap();
    assert_eq!(&total[0], "total");
    assert_eq!(total[2].parse::<u64>().unwrap(), report.total_params);
    assert_eq!(total[3].parse::<u64>().unwrap(), report.total_flops);
}

#[test]
fn count_echo_carries_the_network_and_conventions() {
    let (report, result) = execute(CommandKind::Count, Path::new("."), COUNT, Some(9));
    result.unwrap();
    let echo: Value = serde_json::from_slice(&report.unwrap().sidecar.unwrap()).unwrap();
    assert_eq!(echo["command"], "count");
    assert_eq!(echo["config"]["seed"], 9);
    assert_eq!(echo["params_thousands"], "41.28");
    assert_eq!(echo["flops_millions"], "19.89");
    assert_eq!(echo["conventions"].as_array().unwrap().len(), complexity::CONVENTIONS.len());
    assert_eq!(echo["network"]["layers"][0]["type"], "rp_conv_ii");
}

#[test]
fn empty_model_counts_zero() {
    let cfg = r#"{"model": {"table": {"input_shape": [16], "layers": ["FC 3"]}}}"#;
    assert!(body(CommandKind::Count, cfg).ends_with("total,,0,0\n"));
}

#[test]
fn shipped_count_configs_reproduce_their_expectations() {
    let dir = workspace().join("configs/count");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"expect\""), "{}", path.display());
        let (_, result) = execute(CommandKind::Count, &dir, &text, None);
        assert!(result.is_ok(), "{}: {:?}", path.display(), result);
        seen += 1;
    }
    assert_eq!(seen, 28);
}

#[test]
fn identity_matrix_has_zero_rip_constant() {
    let cfg = r#"{"matrix": {"kind": "identity", "n": 12, "d": 12}, "s": 3, "trials": 200, "transform": "identity"}"#;
    let v: Value = serde_json::from_str(&body(CommandKind::Rip, cfg)).unwrap();
    assert_eq!(v["report"]["delta_exact"], 0.0);
    assert!(v["report"]["delta_lower"].as_f64().unwrap() < 1e-12);
    assert!(v["transform"]["delta_exact"].as_f64().unwrap() < 1e-12);
    let bad = r#"{"matrix": {"kind": "identity", "n": 3, "d": 12}, "s": 1}"#;
    assert_eq!(execute(CommandKind::Rip, Path::new("."), bad, None).1.unwrap_err().exit_code(), 2);
}

#[test]
fn rip_report_orders_lower_bound_below_exact() {
    let v: Value = serde_json::from_str(&body(CommandKind::Rip, RIP)).unwrap();
    let exact = v["report"]["delta_exact"].as_f64().unwrap();
    let lower = v["report"]["delta_lower"].as_f64().unwrap();
    assert!(lower <= exact && exact > 0.0);
    let t_exact = v["transform"]["delta_exact"].as_f64().unwrap();
    assert!(v["transform"]["delta_lower"].as_f64().unwrap() <= t_exact);
    assert_eq!(v["command"], "rip");
    assert_eq!(v["config"]["seed"], 4);
}

#[test]
fn manifold_section_must_match_the_matrix() {
    let cfg = r#"{"matrix": {"kind": "orthoprojector", "n": 6, "d": 30}, "s": 1, "exact": false, "trials": 10,
        "manifold": {"spec": {"kind": "circle", "radius": 2.0, "ambient_dim": 30, "rotation_seed": 1}, "points": 40}}"#;
    let v: Value = serde_json::from_str(&body(CommandKind::Rip, cfg)).unwrap();
    assert!(v["manifold"]["delta_observed"].as_f64().unwrap() >= 0.0);
    assert!(v["report"]["delta_exact"].is_null());
    let bad = cfg.replace("\"ambient_dim\": 30", "\"ambient_dim\": 31");
    assert_eq!(execute(CommandKind::Rip, Path::new("."), &bad, None).1.unwrap_err().exit_code(), 2);
}

#[test]
fn recover_table_has_the_trend_row() {
    let cfg = r#"{"d": 32, "k": 2, "n_grid": [2, 24], "trials": 10, "seed": 1}"#;
    let text = body(CommandKind::Recover, cfg);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("2,10,"));
    assert_eq!(lines[3], "trend_holds,,,true");
}

#[test]
fn seed_flag_overrides_config_and_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, pa) = run_bin("rip", dir.path(), RIP, Some(11));
    assert!(a.status.success());
    let first = std::fs::read(&pa).unwrap();
    let (b, pb) = run_bin("rip", dir.path(), RIP, Some(11));
    assert!(b.status.success());
    assert_eq!(first, std::fs::read(&pb).unwrap());
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["config"]["seed"], 11);
    let (_, pc) = run_bin("rip", dir.path(), RIP, Some(12));
    assert_ne!(first, std::fs::read(pc).unwrap());
}

#[test]
fn thread_count_does_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("recover.json");
    std::fs::write(&cfg, r#"{"d": 32, "k": 2, "n_grid": [4, 12, 24], "trials": 12, "seed": 5}"#).unwrap();
    let run = |threads: &str| {
        let out = bin().env("RPNET_THREADS", threads).arg("recover").arg("--config").arg(&cfg).output().unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn table_vocabulary_matches_presets() {
    let s = |items: &[&str]| items.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let cases = [
        (vec![28, 28, 1], s(&["FC 1024, ReLU", "FC 1024, ReLU", "FC 10"]), Preset::MnistFcnn, Variant::Original),
        (vec![32, 32, 3], s(&["RP 500 FC 4096, ReLU", "RP 500 FC4096 ReLU", "FC10"]), Preset::CifarFcnn, Variant::RpDense { n: 500 }),
        (
            vec![32, 32, 3],
            s(&[
                "5x5 RP-I 10 CONV 128, BN, ReLU, 3x3 MP",
                "5x5 RP-I 10 CONV 192, BN, ReLU, 3x3 MP",
                "5x5 RP-I 10 CONV 256, BN, ReLU, 3x3 MP",
                "FC 512, BN, ReLU",
                "FC 10",
            ]),
            Preset::CifarCnn,
            Variant::ApproachI { n: 10 },
        ),
    ];
    for (input, items, preset, variant) in cases {
        let table = parse_table(&input, &items, 5).unwrap();
        let preset = ModelConfig::Preset { name: preset, variant }.resolve(5).unwrap();
        assert_eq!(table, preset);
    }
}

#[test]
fn train_on_an_mnist_subset_logs_epochs_and_checkpoints() {
    let Some(data) = mnist_dir() else {
        eprintln!("MNIST files not found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{
        "model": {{"table": {{"input_shape": [28, 28, 1], "layers": ["RP 40 FC 32, ReLU", "FC 10"]}}}},
        "data": {{"kind": "mnist", "dir": {:?}, "train_count": 300, "test_count": 200}},
        "optimizer": {{"type": "sgd", "lr": 0.02}},
        "epochs": 2, "batch_size": 32, "seed": 3,
        "checkpoint": "net.ck"
    }}"#,
        data.display().to_string()
    );
    let (out, path) = run_bin("train", dir.path(), &cfg, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,test_top1_error,lr,seconds");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,") && lines[4].starts_with("final,"));
    assert!(lines.iter().skip(1).all(|l| l.ends_with(',')), "{text}");
    let last: Vec<&str> = lines[3].split(',').collect();
    let fin: Vec<&str> = lines[4].split(',').collect();
    assert_eq!(last[1..3], fin[1..3]);
    assert!(dir.path().join("net.ck").exists());

    let first = std::fs::read(&path).unwrap();
    let (_, again) = run_bin("train", dir.path(), &cfg, None);
    assert_eq!(first, std::fs::read(again).unwrap());

    let too_big = cfg.replace(r#""input_shape": [28, 28, 1]"#, r#""input_shape": [784]"#);
    assert_eq!(run_bin("train", dir.path(), &too_big, None).0.status.code(), Some(2));
}

fn expressivity(extra: &str) -> String {
    format!(
        r#"{{"d": 24, "k": 3, "n_grid": [4, 24], "hidden": 8, "train_count": 64, "test_count": 64,
        "epochs": 60, "batch_size": 16, "optimizer": {{"type": "sgd", "lr": 0.05}}, "repeats": 2, "seed": 2{extra}}}"#
    )
}

#[test]
fn constant_zero_target_is_fit_at_every_width() {
    // hidden units that only fire away from the training points never get
    // pulled to zero, so this needs dense training data and a decaying rate
    let cfg = r#"{"d": 24, "k": 3, "n_grid": [4, 24], "hidden": 8, "train_count": 4096, "test_count": 64,
        "epochs": 20, "batch_size": 32, "optimizer": {"type": "adam", "lr": 0.01}, "halve_every": 1000,
        "repeats": 5, "seed": 2, "target": "zero"}"#;
    let text = body(CommandKind::Expressivity, cfg);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let mut seen = 0;
    for rec in rows.records() {
        let rec = rec.unwrap();
        assert!(rec[4].parse::<f64>().unwrap() < 1e-3, "{rec:?}");
        seen += 1;
    }
    assert_eq!(seen, 2);
}

#[test]
fn matched_budget_network_and_checks_are_reported() {
    let cfg = expressivity(r#", "matched_n": 4, "expect": {"trend_slack": 10.0, "matched_ratio": 100.0}"#);
    let (report, result) = execute(CommandKind::Expressivity, Path::new("."), &cfg, None);
    result.unwrap();
    let report = report.unwrap();
    let text = String::from_utf8(report.body).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,input_dim,hidden,trainable_params,median_test_rmse,test_rmse_per_repeat");
    // rp: 4·8+8 + 8·8+8 + 8+1; full at width 1: 24+1 + 1+1 + 1+1
    assert!(lines[1].starts_with("rp,4,8,121,"), "{text}");
    assert!(lines[2].starts_with("rp,24,8,281,"), "{text}");
    assert!(lines[3].starts_with("full,24,3,"), "{text}");
    let echo: Value = serde_json::from_slice(&report.sidecar.unwrap()).unwrap();
    assert_eq!(echo["checks"]["passed"], true);
    assert!(echo["checks"]["matched_ratio"].as_f64().unwrap() > 0.0);

    let strict = expressivity(r#", "expect": {"trend_slack": -10.0, "matched_ratio": 1.0}"#);
    let (report, result) = execute(CommandKind::Expressivity, Path::new("."), &strict, None);
    assert_eq!(result.unwrap_err().exit_code(), 4);
    assert!(report.is_some());
    let bad = expressivity(r#", "matched_n": 5"#);
    assert_eq!(execute(CommandKind::Expressivity, Path::new("."), &bad, None).1.unwrap_err().exit_code(), 2);
}

#[test]
fn full_width_rp_row_has_the_full_network_budget() {
    // with n = d the projected net has exactly the dense net's trainable shapes
    let text = body(CommandKind::Expressivity, &expressivity(r#", "matched_n": 24"#));
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let rp = rows.iter().find(|r| r[0] == "rp" && r[1] == "24").unwrap();
    let full = rows.iter().find(|r| r[0] == "full").unwrap();
    assert_eq!(rp[2..4], full[2..4]);
}

#[test]
fn every_shipped_config_parses_strictly() {
    use rpnet::cli::{ExpressivityConfig, RecoverConfig, RipConfig, TrainCommandConfig};
    let root = workspace().join("configs");
    let mut seen = 0;
    for dir in ["rip", "recover", "train", "expressivity"] {
        for entry in std::fs::read_dir(root.join(dir)).unwrap() {
            let path = entry.unwrap().path();
            let text = std::fs::read_to_string(&path).unwrap();
            let parsed = match dir {
                "rip" => serde_json::from_str::<RipConfig>(&text).map(drop),
                "recover" => serde_json::from_str::<RecoverConfig>(&text).map(drop),
                "train" => serde_json::from_str::<TrainCommandConfig>(&text).map(|c| {
                    c.model.resolve(c.seed).unwrap();
                }),
                _ => serde_json::from_str::<ExpressivityConfig>(&text).map(drop),
            };
            assert!(parsed.is_ok(), "{}: {parsed:?}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 9, "{seen}");
}

#[test]
fn shipped_rip_and_recover_configs_run() {
    let root = workspace().join("configs");
    for (kind, file) in [
        (CommandKind::Rip, "rip/gaussian_d24_s3.json"),
        (CommandKind::Rip, "rip/circle_r100_n12.json"),
        (CommandKind::Recover, "recover/iht_d64_k3.json"),
    ] {
        let text = std::fs::read_to_string(root.join(file)).unwrap();
        let (report, result) = execute(kind, &root, &text, None);
        assert!(result.is_ok(), "{file}: {result:?}");
        assert!(report.is_some());
    }
}
