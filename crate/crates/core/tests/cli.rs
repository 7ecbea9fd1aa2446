mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use maskflow::cli::{read_results, ABLATION_CORRECTIONS, ABLATION_STEPS};
use maskflow::io::load_raw;
use maskflow::GmmPrior;

fn maskflow(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_maskflow"))
        .args(args)
        .env("RESTORA_THREADS", "2")
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn write_prior(dir: &Path, name: &str, prior: &GmmPrior) -> String {
    let path = dir.join(name);
    fs::write(&path, prior.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_point_mass_and_reproduce_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_prior(dir.path(), "point.json", &GmmPrior::scalar(&[1.0], &[1.0], &[1e-6]).unwrap());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let code = maskflow(&["train", "--prior", &spec, "--steps", "5000", "--hidden", "32,32", "--seed", "3", "--out", s(out)]);
        assert_eq!(code, 0);
    }
    let ckpt = fs::read(a.join("checkpoint.rfnn")).unwrap();
    assert_eq!(ckpt, fs::read(b.join("checkpoint.rfnn")).unwrap());
    let mut reader = csv::Reader::from_path(a.join("loss.csv")).unwrap();
    let losses: Vec<f64> = reader.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(losses.len(), 5000);
    let tail = losses[4800..].iter().sum::<f64>() / 200.0;
    assert!(tail < 0.05, "final loss {tail}");
}

#[test]
fn train_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"weights\": [1.0], ").unwrap();
    assert_eq!(maskflow(&["train", "--prior", s(&bad), "--out", s(dir.path())]), 1);
    assert_eq!(maskflow(&["train", "--no-such-flag"]), 1);
    let spec = write_prior(dir.path(), "wide.json", &common::two_mode_1d());
    let code = maskflow(&["train", "--prior", &spec, "--lr", "1000", "--steps", "200", "--out", s(dir.path())]);
    assert_eq!(code, 2);
}

#[test]
fn restore_uses_task_default_steps() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_prior(dir.path(), "patterns.json", &GmmPrior::patterns(16, 16).unwrap());
    for (task, n) in [("denoise", 64), ("random", 128), ("box", 64), ("sr", 128)] {
        let out = dir.path().join(task);
        assert_eq!(maskflow(&["restore", "--prior", &spec, "--task", task, "--count", "2", "--out", s(&out), "--md"]), 0);
        let rows = read_results(&out.join("results.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.n_steps == n && r.corrections == 1), "{task}");
        assert!(out.join("results.md").exists());
        let restored = load_raw(out.join("restored_0001.rft")).unwrap();
        assert_eq!(restored.len(), 256);
        assert!(out.join("observed_0000.pgm").exists());
    }
    let header = fs::read_to_string(dir.path().join("box/results.csv")).unwrap();
    assert!(header.starts_with("task,prior,N,C,seed,psnr_db,ssim,consistency_rmse,wall_time_s,field_evals"));
}

#[test]
fn restore_naive_baseline_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_prior(dir.path(), "patterns.json", &GmmPrior::patterns(8, 8).unwrap());
    let config = dir.path().join("run.json");
    fs::write(&config, format!(r#"{{"prior": {spec:?}, "task": "random", "ode_steps": 20, "seed": 7}}"#)).unwrap();
    let out = dir.path().join("naive");
    assert_eq!(maskflow(&["restore", "--config", s(&config), "--corrections", "0", "--out", s(&out)]), 0);
    let rows = read_results(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].n_steps, rows[0].corrections, rows[0].seed, rows[0].field_evals), (20, 0, 7, 20));
    assert_eq!(rows[0].task, "random");
    // SSIM needs an 11x11 window
    assert!(rows[0].ssim.is_none());
}

#[test]
fn restore_rejects_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_prior(dir.path(), "patterns.json", &GmmPrior::patterns(8, 8).unwrap());
    let images = dir.path().join("images");
    fs::create_dir(&images).unwrap();
    fs::write(images.join("a.pgm"), b"P5\n4 4\n255\n0123456789abcdef").unwrap();
    assert_eq!(maskflow(&["restore", "--prior", &spec, "--in", s(&images), "--out", s(dir.path())]), 1);
}

#[test]
fn ablate_grid_has_one_row_per_cell_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_prior(dir.path(), "patterns.json", &GmmPrior::patterns(8, 8).unwrap());
    let out = dir.path().join("ablate");
    assert_eq!(maskflow(&["ablate", "--prior", &spec, "--task", "random", "--seeds", "2", "--out", s(&out), "--md"]), 0);
    let rows = read_results(&out.join("ablation.csv")).unwrap();
    assert_eq!(rows.len(), ABLATION_STEPS.len() * ABLATION_CORRECTIONS.len() * 2);
    let mut summary = csv::Reader::from_path(out.join("ablation_summary.csv")).unwrap();
    assert_eq!(summary.records().count(), 28);
    assert!(out.join("ablation.md").exists());
    let evals = |n: usize, c: usize| rows.iter().find(|r| r.n_steps == n && r.corrections == c).unwrap().field_evals;
    assert_eq!(evals(64, 0), 64);
    assert_eq!(evals(64, 1), maskflow::restoration::expected_field_evals(64, 1));
}

#[test]
fn sample_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_prior(dir.path(), "two.json", &common::two_mode_1d());
    let empty = dir.path().join("none");
    assert_eq!(maskflow(&["sample", "--prior", &spec, "--count", "0", "--out", s(&empty)]), 0);
    assert!(!empty.exists());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(maskflow(&["sample", "--prior", &spec, "--count", "3", "--seed", "5", "--out", s(out)]), 0);
    }
    for i in 0..3 {
        let name = format!("sample_{i:04}.rft");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn sampled_histogram_matches_mixture() {
    let prior = common::two_mode_1d();
    let dir = tempfile::tempdir().unwrap();
    let spec = write_prior(dir.path(), "two.json", &prior);
    let config = maskflow::cli::RunConfig {
        prior: Some(spec.into()),
        count: Some(20_000),
        out: Some(dir.path().join("samples")),
        ..Default::default()
    };
    let samples = maskflow::cli::cmd_sample(&config).unwrap();
    let values: Vec<f64> = samples.iter().map(|t| t.data()[0] as f64).collect();
    let tv = common::tv_to_mixture(&values, &prior, 100, -4.0, 4.0);
    assert!(tv < 0.05, "tv {tv}");
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(maskflow(&["--help"]), 0);
    assert_eq!(maskflow(&[]), 1);
}
