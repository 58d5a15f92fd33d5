use std::path::Path;
use std::process::Command as Proc;

use proptest::prelude::*;
use svnet::rng::RngKey;
use svnet_cli::config::{parse, ConvergeHybridConfig, PriceConfig, TrainConfig};
use svnet_cli::trainer::{gradient_check, mse, train, Arch, Mlp, TrainSettings};
use svnet_cli::{config_hash, run, Command};

fn svnet(args: &[&str], config: Option<&str>, threads: Option<&str>) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let mut cmd = Proc::new(env!("CARGO_BIN_EXE_svnet"));
    cmd.args(args);
    if let Some(text) = config {
        std::fs::write(&cfg, text).unwrap();
        cmd.arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("out"));
    }
    match threads {
        Some(t) => cmd.env("SVNET_THREADS", t),
        None => cmd.env_remove("SVNET_THREADS"),
    };
    let out = cmd.output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

const TINY_HYBRID: &str = r#"{"hurst": [0.25], "steps": [4, 16], "samples": 500}"#;

#[test]
fn exit_codes() {
    assert_eq!(svnet(&["converge-hybrid"], Some(TINY_HYBRID), None).0, 0);
    let (code, err) = svnet(&["converge-hybrid"], Some(r#"{"samples": 10, "bogus": 1}"#), None);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("bogus"));
    assert_eq!(svnet(&["converge-hybrid"], Some("{samples: 10"), None).0, 3);
    assert_eq!(svnet(&["converge-hybrid"], Some(TINY_HYBRID), Some("many")).0, 3);
    assert_eq!(svnet(&["no-such-command"], Some("{}"), None).0, 3);
    assert_eq!(svnet(&["price", "--config", "/nonexistent/c.json", "--out", "/tmp/x"], None, None).0, 3);
    assert_eq!(svnet(&["price"], None, None).0, 3);
    assert_eq!(svnet(&["--help"], None, None).0, 0);
}

#[test]
fn semantic_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, cfg) in [
        (Command::ConvergeHybrid, r#"{"hurst": [0.7]}"#),
        (Command::ConvergeEm, r#"{"steps": [16, 30], "n_ref": 512}"#),
        (Command::Train, r#"{"test_label_paths": 1}"#),
        (Command::Price, r#"{"paths": 0}"#),
    ] {
        let e = run(cmd, cfg, dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{} {cfg}: {e}", cmd.name());
    }
}

#[test]
fn perturbed_networks_fail_the_check() {
    let cfg = r#"{"seeds": 2, "dims": [1], "steps": [4], "copies": [2], "strikes": [100.0], "perturb": 1e-6}"#;
    let (code, err) = svnet(&["realize-check"], Some(cfg), None);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("FAIL"));
}

/// `(config line, rows)` of a CSV written by the runner.
fn read_table(path: &Path) -> (String, Vec<csv::StringRecord>, csv::StringRecord) {
    let text = std::fs::read_to_string(path).unwrap();
    let config = text.lines().find_map(|l| l.strip_prefix("# config ")).unwrap().to_string();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().unwrap().clone();
    (config, r.records().map(Result::unwrap).collect(), header)
}

#[test]
fn every_row_carries_hash_and_seed() {
    let configs = [
        (Command::ConvergeHybrid, r#"{"seed": 9, "hurst": [0.1], "steps": [4, 16], "samples": 500}"#),
        (Command::ConvergeEm, r#"{"seed": 9, "steps": [16, 32], "n_ref": 256, "paths": 100}"#),
        (Command::RealizeCheck, r#"{"seed": 9, "seeds": 1, "dims": [1], "steps": [4], "copies": [1], "strikes": [100.0]}"#),
        (Command::SizeSweep, r#"{"seed": 9, "dims": [1], "eps_bars": [0.2], "copies": [1, 2]}"#),
        (Command::Train, r#"{"seed": 9, "train_samples": 50, "test_samples": 10, "label_paths": 20, "test_label_paths": 40,
            "archs": [{"width": 4, "hidden": 1}], "optimizer": {"epochs": 2}, "gradcheck_pairs": 2}"#),
        (Command::Price, r#"{"seed": 9, "paths": 1000, "steps": 16}"#),
        (Command::TruncationSweep, r#"{"seed": 9, "truncs": [2.0, 5.0], "paths": 500, "steps": 8}"#),
        (Command::StoppedSweep, r#"{"seed": 9, "scales": [1.0, 2.0], "paths": 500, "steps": 8}"#),
    ];
    for (cmd, cfg) in configs {
        let dir = tempfile::tempdir().unwrap();
        let out = run(cmd, cfg, dir.path()).unwrap();
        assert!(!out.files.is_empty(), "{}", cmd.name());
        for f in &out.files {
            let (canonical, rows, header) = read_table(f);
            assert_eq!(&header[0], "config_hash");
            assert_eq!(&header[1], "master_seed");
            assert!(!rows.is_empty(), "{}", f.display());
            let hash = config_hash(&canonical);
            for r in rows {
                assert_eq!(&r[0], hash, "{}", f.display());
                assert_eq!(&r[1], "9");
            }
        }
    }
}

/// Smallest |pre-activation| of any hidden unit over `xs`.
fn kink_margin(net: &Mlp, xs: &[Vec<f64>]) -> f64 {
    let relu = net.to_relu_network();
    let layers = relu.layers();
    let mut margin = f64::INFINITY;
    for x in xs {
        let mut a = x.clone();
        for l in &layers[..layers.len() - 1] {
            let mut z = vec![0.0; l.out_dim()];
            l.apply(&a, &mut z);
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
    }
    margin
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_hash_is_stable(seed in any::<u64>(), samples in 1usize..1_000_000, extra_space in 0usize..4) {
        let pad = " ".repeat(extra_space);
        let a = format!(r#"{{"seed":{seed},"samples":{samples}}}"#);
        let b = format!(r#"{pad}{{ "samples" :{pad} {samples},{pad}"seed": {seed} }}"#);
        let pa = parse::<ConvergeHybridConfig>(&a).unwrap();
        let pb = parse::<ConvergeHybridConfig>(&b).unwrap();
        prop_assert_eq!(&pa.hash, &pb.hash);
        prop_assert_eq!(&pa.hash, &parse::<ConvergeHybridConfig>(&pa.canonical).unwrap().hash);
        let other = parse::<ConvergeHybridConfig>(&format!(r#"{{"seed":{},"samples":{samples}}}"#, seed ^ 1)).unwrap();
        prop_assert_ne!(&pa.hash, &other.hash);
    }

    #[test]
    fn gradients_match_differences(seed in any::<u64>(), width in 1usize..8, hidden in 1usize..4) {
        let key = RngKey::new(seed);
        let mut net = Mlp::he(3, Arch { width, hidden }, key);
        let mut rng = key.stream(1).rng();
        use rand::Rng;
        let p: Vec<f64> = net.params().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        net.set_params(&p);
        let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        // central differences are only meaningful away from ReLU kinks
        prop_assume!(kink_margin(&net, &xs) > 1e-3);
        let err = gradient_check(&net, &refs, &ys, 1e-5);
        prop_assert!(err <= 1e-6, "{err}");
    }
}

#[test]
fn large_net_memorizes_a_few_labels() {
    let key = RngKey::new(21);
    let mut rng = key.rng();
    use rand::Rng;
    let xs: Vec<Vec<f64>> = (0..10).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let noise_se = 0.05;
    let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[1] - x[2] + noise_se * rng.random_range(-1.7..1.7)).collect();
    let mut net = Mlp::he(3, Arch { width: 64, hidden: 3 }, key.stream(1));
    let settings = TrainSettings {
        epochs: 3000,
        lr: 1e-3,
        batch: 10,
    };
    let hist = train(&mut net, &xs, &ys, settings, key.stream(2)).unwrap();
    let rmse = mse(&net, &xs, &ys).sqrt();
    assert!(rmse < noise_se, "train RMSE {rmse}");
    assert!(hist.last().unwrap() < &hist[0]);
}

#[test]
fn config_defaults_round_trip() {
    for text in ["{}", r#"{"optimizer": {"lr": 0.01}}"#] {
        let p = parse::<TrainConfig>(text).unwrap();
        let q = parse::<TrainConfig>(&p.canonical).unwrap();
        assert_eq!(p.config, q.config);
    }
    let p = parse::<PriceConfig>(r#"{"model": {"model": "r-bergomi", "theta": {"nu": 0.04, "eta": 1.5, "rho": -0.7, "hurst": 0.1},
        "trunc": 5.0, "x0": 100.0, "source": "hybrid", "r_clamp": null}, "oracle": false}"#)
    .unwrap();
    assert!(!p.config.oracle);
    assert!(parse::<PriceConfig>(r#"{"model": {"model": "heston"}}"#).is_err());
}
