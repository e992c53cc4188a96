use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::complexity::{self, ComplexityReport};
use crate::data::{self, load_cifar10, load_cifar10_with_stats, load_mnist_dir, Dataset, MnistSplit};
use crate::linalg::{derive_seed, gaussian_matrix, random_orthoprojector, SeededRng, Tensor};
use crate::nn::{self, checkpoint, Examples, LayerSpec, Network, NetworkSpec, Targets, TrainConfig};
use crate::recovery::recovery_phase_experiment;
use crate::rip::{self, DeltaMode, ManifoldDistortionReport, RipReport};

use super::config::*;
use super::output::{num, Sink};
use super::CliError;

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Serialize)]
struct Echo<'a, T> {
    command: &'static str,
    config: &'a T,
}

/// `value / 10^(3·group)` at two decimals with thousands separators,
/// rounding half up.
pub fn scaled(value: u64, divisor: u64) -> String {
    let hundredths = (u128::from(value) * 100 + u128::from(divisor) / 2) / u128::from(divisor);
    let int = (hundredths / 100).to_string();
    let mut grouped = String::new();
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    format!("{grouped}.{:02}", hundredths % 100)
}

pub fn count(_base: &Path, text: &str, seed: Option<u64>, sink: &mut Sink) -> Result<(), CliError> {
    let mut cfg: CountConfig = parse(text)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    let spec = cfg.model.resolve(cfg.seed).map_err(CliError::Config)?;
    let report = complexity::count(&spec)?;
    let mut rows: Vec<Vec<String>> = report
        .layers
        .iter()
        .map(|l| vec![l.layer.to_string(), l.kind.clone(), l.params.to_string(), l.flops.to_string()])
        .collect();
    rows.push(vec!["total".into(), String::new(), report.total_params.to_string(), report.total_flops.to_string()]);
    #[derive(Serialize)]
    struct CountEcho<'a> {
        command: &'static str,
        config: &'a CountConfig,
        network: &'a NetworkSpec,
        conventions: &'a [String],
        params_thousands: String,
        flops_millions: String,
    }
    let (pt, fm) = (scaled(report.total_params, 1_000), scaled(report.total_flops, 1_000_000));
    let echo = CountEcho {
        command: "count",
        config: &cfg,
        network: &spec,
        conventions: &report.conventions,
        params_thousands: pt.clone(),
        flops_millions: fm.clone(),
    };
    sink.csv(&["layer", "kind", "params", "flops"], &rows, &echo)?;
    check_count(&report, cfg.expect.as_ref(), &pt, &fm)
}

fn check_count(_r: &ComplexityReport, expect: Option<&CountExpect>, pt: &str, fm: &str) -> Result<(), CliError> {
    match expect {
        Some(e) if e.params_thousands != pt || e.flops_millions != fm => Err(CliError::Assertion(format!(
            "expected {} thousand params and {} million FLOPs, counted {pt} and {fm}",
            e.params_thousands, e.flops_millions
        ))),
        _ => Ok(()),
    }
}

fn build_matrix(m: &MatrixConfig, seed: u64) -> Result<Tensor, CliError> {
    Ok(match m.kind {
        MatrixKind::Gaussian => gaussian_matrix(m.n, m.d, seed)?.into_entries(),
        MatrixKind::Orthoprojector => random_orthoprojector(m.n, m.d, seed)?.into_entries(),
        MatrixKind::Identity if m.n == m.d && m.n > 0 => Tensor::eye(m.n),
        MatrixKind::Identity => return Err(CliError::Config("identity matrix needs n = d ≥ 1".into())),
    })
}

pub fn rip(_base: &Path, text: &str, seed: Option<u64>, sink: &mut Sink) -> Result<(), CliError> {
    let mut cfg: RipConfig = parse(text)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    let a = build_matrix(&cfg.matrix, cfg.seed)?;
    let cap = cfg.exact.then_some(cfg.exact_cap);
    let mc_seed = derive_seed(cfg.seed, 1);
    let report = rip::rip_report(&a, cfg.s, cap, cfg.trials, mc_seed)?;

    #[derive(Serialize)]
    struct TransformReport {
        kind: TransformKind,
        delta_exact: Option<f64>,
        delta_lower: f64,
    }
    let transform = match cfg.transform {
        None => None,
        Some(kind) => {
            let d = cfg.matrix.d;
            let w = match kind {
                TransformKind::Identity => Tensor::eye(d),
                TransformKind::RandomOrthogonal => random_orthoprojector(d, d, derive_seed(cfg.seed, 3))?.unscaled(),
            };
            let delta_exact =
                cap.map(|cap| rip::delta_with_transform(&a, &w, cfg.s, DeltaMode::Exact { cap })).transpose()?;
            let delta_lower = rip::delta_with_transform(
                &a,
                &w,
                cfg.s,
                DeltaMode::MonteCarlo { trials: cfg.trials, seed: mc_seed },
            )?;
            Some(TransformReport { kind, delta_exact, delta_lower })
        }
    };
    let manifold: Option<ManifoldDistortionReport> = match &cfg.manifold {
        None => None,
        Some(m) => {
            if m.spec.ambient_dim != cfg.matrix.d {
                return Err(CliError::Config(format!(
                    "manifold ambient_dim {} must equal matrix d {}",
                    m.spec.ambient_dim, cfg.matrix.d
                )));
            }
            let pts = data::sample_manifold(&m.spec, m.points, derive_seed(cfg.seed, 2))?;
            Some(rip::manifold_distortion(&a, &pts)?)
        }
    };
    #[derive(Serialize)]
    struct RipOutput<'a> {
        command: &'static str,
        config: &'a RipConfig,
        report: RipReport,
        transform: Option<TransformReport>,
        manifold: Option<ManifoldDistortionReport>,
    }
    sink.json(&RipOutput { command: "rip", config: &cfg, report, transform, manifold })
}

pub fn recover(_base: &Path, text: &str, seed: Option<u64>, sink: &mut Sink) -> Result<(), CliError> {
    let mut cfg: RecoverConfig = parse(text)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    let table = recovery_phase_experiment(cfg.d, cfg.k, &cfg.n_grid, cfg.trials, cfg.seed)?;
    let trend = table.trend_holds();
    let mut rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| vec![r.n.to_string(), r.trials.to_string(), r.successes.to_string(), num(r.success_rate)])
        .collect();
    rows.push(vec!["trend_holds".into(), String::new(), String::new(), trend.to_string()]);
    sink.csv(&["n", "trials", "successes", "success_rate"], &rows, &Echo { command: "recover", config: &cfg })?;

    let lo = table.rows.iter().min_by_key(|r| r.n).expect("non-empty grid");
    let hi = table.rows.iter().max_by_key(|r| r.n).expect("non-empty grid");
    let mut failures = Vec::new();
    if !trend {
        failures.push(format!("success rate fell from {} at n={} to {} at n={}", lo.success_rate, lo.n, hi.success_rate, hi.n));
    }
    if let Some(e) = cfg.expect {
        if let Some(min) = e.min_rate_at_max_n.filter(|&m| hi.success_rate < m) {
            failures.push(format!("rate {} at n={} is below {min}", hi.success_rate, hi.n));
        }
        if let Some(max) = e.max_rate_at_min_n.filter(|&m| lo.success_rate > m) {
            failures.push(format!("rate {} at n={} is above {max}", lo.success_rate, lo.n));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failures.join("; ")))
    }
}

fn load_data(base: &Path, cfg: &DataConfig) -> Result<(Dataset, Dataset), CliError> {
    let (train, test, tc, ec) = match cfg {
        DataConfig::Mnist { dir, train_count, test_count } => {
            let dir = resolve(base, dir);
            (load_mnist_dir(&dir, MnistSplit::Train)?, load_mnist_dir(&dir, MnistSplit::Test)?, *train_count, *test_count)
        }
        DataConfig::Cifar10 { train, test, train_count, test_count } => {
            let tr: Vec<PathBuf> = train.iter().map(|p| resolve(base, p)).collect();
            let te: Vec<PathBuf> = test.iter().map(|p| resolve(base, p)).collect();
            let train = load_cifar10(&tr)?;
            let stats = train.normalization.clone().expect("training split is standardized");
            (train, load_cifar10_with_stats(&te, &stats)?, *train_count, *test_count)
        }
    };
    for d in [&train, &test] {
        if d.noncanonical_count {
            eprintln!("rpnet: warning: {} split has a non-standard size of {}", d.name, d.len());
        }
    }
    let cut = |d: Dataset, c: Option<usize>| match c {
        Some(0) => Err(CliError::Config("sample counts must be positive".into())),
        Some(c) => Ok(d.take(c)),
        None => Ok(d),
    };
    Ok((cut(train, tc)?, cut(test, ec)?))
}

pub fn train(base: &Path, text: &str, seed: Option<u64>, sink: &mut Sink) -> Result<(), CliError> {
    let mut cfg: TrainCommandConfig = parse(text)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    if cfg.epochs == 0 {
        return Err(CliError::Config("epochs must be at least 1".into()));
    }
    let spec = cfg.model.resolve(cfg.seed).map_err(CliError::Config)?;
    let (train_set, test_set) = load_data(base, &cfg.data)?;
    let net = Network::new(spec)?;
    if net.input_shape().dims() != train_set.inputs.shape()[1..] {
        return Err(CliError::Config(format!(
            "model input {} does not match data shape {:?}",
            net.input_shape(),
            &train_set.inputs.shape()[1..]
        )));
    }
    let mut params = net.init_params(derive_seed(cfg.seed, 1));
    let tc = TrainConfig {
        optimizer: cfg.optimizer,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: derive_seed(cfg.seed, 2),
        halve_every: cfg.halve_every,
    };
    let report = nn::train(&net, &mut params, &train_set.examples(), &test_set.examples(), &tc)?;
    if let Some(path) = &cfg.checkpoint {
        checkpoint::save(&resolve(base, path), &net, &params)?;
    }
    let secs = |s: f64| if cfg.record_wall_time { format!("{s:.3}") } else { String::new() };
    let mut rows = vec![vec![
        "0".into(),
        num(report.initial_train_loss),
        num(report.initial_test_metric),
        String::new(),
        String::new(),
    ]];
    for e in &report.epochs {
        rows.push(vec![e.epoch.to_string(), num(e.train_loss), num(e.test_metric), num(e.lr), secs(e.seconds)]);
    }
    rows.push(vec![
        "final".into(),
        num(report.final_train_loss()),
        num(report.final_test_metric()),
        String::new(),
        secs(report.epochs.iter().map(|e| e.seconds).sum()),
    ]);
    sink.csv(
        &["epoch", "train_loss", "test_top1_error", "lr", "seconds"],
        &rows,
        &Echo { command: "train", config: &cfg },
    )?;
    match cfg.expect {
        Some(e) if report.final_test_metric() > e.max_test_error => Err(CliError::Assertion(format!(
            "test error {} exceeds {}",
            report.final_test_metric(),
            e.max_test_error
        ))),
        _ => Ok(()),
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Trainable parameters of `d_in → h₁ → h₂ → 1` including biases, where
/// the first layer may see an `n`-dimensional projection instead.
fn mlp_params(first_in: usize, h1: usize, h2: usize) -> usize {
    first_in * h1 + h1 + h1 * h2 + h2 + h2 + 1
}

struct Regression {
    train: Examples,
    test: Examples,
}

fn regression_data(cfg: &ExpressivityConfig) -> Result<Regression, CliError> {
    let mut rng = SeededRng::new(derive_seed(cfg.seed, 1));
    let mut w: Vec<f64> = (0..cfg.d).map(|_| rng.normal()).collect();
    let norm = crate::linalg::norm(&w);
    w.iter_mut().for_each(|v| *v /= norm);
    let make = |count: usize, tag: u64| -> Result<Examples, CliError> {
        let x = data::synth_sparse(cfg.d, cfg.k, count, derive_seed(cfg.seed, tag))?;
        let y: Vec<f64> = (0..count)
            .map(|i| match cfg.target {
                TargetKind::Sin => crate::linalg::dot(x.row(i), &w).sin(),
                TargetKind::Zero => 0.0,
            })
            .collect();
        Ok(Examples::new(x, Targets::Values(Tensor::new(vec![count, 1], y)?))?)
    };
    Ok(Regression { train: make(cfg.train_count, 2)?, test: make(cfg.test_count, 3)? })
}

fn fit_rmse(spec: NetworkSpec, data: &Regression, cfg: &ExpressivityConfig, run_seed: u64) -> Result<(usize, f64), CliError> {
    let net = Network::new(spec)?;
    let mut params = net.init_params(derive_seed(run_seed, 1));
    let tc = TrainConfig {
        optimizer: cfg.optimizer,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: derive_seed(run_seed, 2),
        halve_every: cfg.halve_every,
    };
    let report = nn::train(&net, &mut params, &data.train, &data.test, &tc)?;
    Ok((params.trainable_count(), report.final_test_metric()))
}

pub fn expressivity(_base: &Path, text: &str, seed: Option<u64>, sink: &mut Sink) -> Result<(), CliError> {
    let mut cfg: ExpressivityConfig = parse(text)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    if cfg.n_grid.is_empty() || cfg.repeats == 0 || cfg.epochs == 0 || cfg.hidden == 0 {
        return Err(CliError::Config("n_grid, repeats, epochs and hidden must be non-empty/positive".into()));
    }
    if cfg.train_count == 0 || cfg.test_count == 0 {
        return Err(CliError::Config("train_count and test_count must be positive".into()));
    }
    if let Some(m) = cfg.matched_n.filter(|m| !cfg.n_grid.contains(m)) {
        return Err(CliError::Config(format!("matched_n {m} is not in n_grid")));
    }
    let data = regression_data(&cfg)?;
    let h = cfg.hidden;
    let run_seed = |r: usize| derive_seed(cfg.seed, 100 + r as u64);

    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for &n in &cfg.n_grid {
        let mut rmses = Vec::with_capacity(cfg.repeats);
        let mut trainable = 0;
        for r in 0..cfg.repeats {
            let rs = run_seed(r);
            let spec = NetworkSpec::new(
                vec![cfg.d],
                vec![LayerSpec::rp_dense(n, h, derive_seed(rs, 3)), LayerSpec::Relu, LayerSpec::dense(h), LayerSpec::Relu],
                1,
            );
            let (p, rmse) = fit_rmse(spec, &data, &cfg, rs)?;
            trainable = p;
            rmses.push(rmse);
        }
        let med = median(&rmses);
        medians.push((n, med));
        rows.push(table_row("rp", n, h, trainable, med, &rmses));
    }

    let mut ratio = None;
    if let Some(m) = cfg.matched_n {
        let budget = mlp_params(m, h, h);
        let width = (1..).take_while(|&w| mlp_params(cfg.d, w, w) <= budget).last().unwrap_or(1);
        let mut rmses = Vec::with_capacity(cfg.repeats);
        let mut trainable = 0;
        for r in 0..cfg.repeats {
            let spec = NetworkSpec::new(
                vec![cfg.d],
                vec![LayerSpec::dense(width), LayerSpec::Relu, LayerSpec::dense(width), LayerSpec::Relu],
                1,
            );
            let (p, rmse) = fit_rmse(spec, &data, &cfg, run_seed(r))?;
            trainable = p;
            rmses.push(rmse);
        }
        let full = median(&rmses);
        rows.push(table_row("full", cfg.d, width, trainable, full, &rmses));
        let rp = medians.iter().find(|(n, _)| *n == m).expect("matched_n is in the grid").1;
        ratio = Some(rp / full);
    }

    let lo = medians.iter().min_by_key(|(n, _)| *n).expect("non-empty grid");
    let hi = medians.iter().max_by_key(|(n, _)| *n).expect("non-empty grid");
    let trend_gap = hi.1 - lo.1;
    #[derive(Serialize)]
    struct Checks {
        trend_gap: f64,
        matched_ratio: Option<f64>,
        passed: Option<bool>,
    }
    let passed = cfg.expect.map(|e| trend_gap <= e.trend_slack && ratio.is_none_or(|r| r <= e.matched_ratio));
    #[derive(Serialize)]
    struct ExprEcho<'a> {
        command: &'static str,
        config: &'a ExpressivityConfig,
        checks: Checks,
    }
    let echo = ExprEcho { command: "expressivity", config: &cfg, checks: Checks { trend_gap, matched_ratio: ratio, passed } };
    sink.csv(
        &["model", "input_dim", "hidden", "trainable_params", "median_test_rmse", "test_rmse_per_repeat"],
        &rows,
        &echo,
    )?;
    match (passed, cfg.expect) {
        (Some(false), Some(e)) => Err(CliError::Assertion(format!(
            "median RMSE gap {trend_gap:.4} (allowed {}), matched ratio {} (allowed {})",
            e.trend_slack,
            ratio.map_or("n/a".into(), |r| format!("{r:.3}")),
            e.matched_ratio
        ))),
        _ => Ok(()),
    }
}

fn table_row(model: &str, input: usize, hidden: usize, trainable: usize, med: f64, rmses: &[f64]) -> Vec<String> {
    vec![
        model.into(),
        input.to_string(),
        hidden.to_string(),
        trainable.to_string(),
        num(med),
        rmses.iter().map(|&r| num(r)).collect::<Vec<_>>().join(";"),
    ]
}
