//! End-to-end tests of the `srlfi` binary: artifact determinism, exit
//! codes, and subcommand composition over persisted files.

use std::path::Path;
use std::process::{Command, Output};
use tempfile::tempdir;

fn srlfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srlfi"))
        .args(args)
        .output()
        .expect("failed to launch srlfi")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const TINY: &str = r#"
[experiment]
model = "conjugate_gaussian"
method = "energy"
n_train = 64
n_test = 8
n_post = 120
m = 5
seeds = [1]

[network]
hidden = [16, 16]

[training]
batch_size = 32
max_epochs = 3
"#;

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

#[test]
fn run_artifacts_are_bitwise_reproducible() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", TINY);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    for out in [&out_a, &out_b] {
        let output = srlfi(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(
            output.status.success(),
            "run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }

    for name in [
        "dataset_conjugate_gaussian_n72_seed1.bin",
        "metrics_energy_conjugate_gaussian_n64_seed1.csv",
        "history_energy_conjugate_gaussian_n64_seed1.csv",
        "checkpoint_energy_conjugate_gaussian_n64_seed1.ck",
        "report.csv",
        "summary.csv",
    ] {
        assert_eq!(read(&out_a.join(name)), read(&out_b.join(name)), "{name} differs");
    }

    // The manifest records wall time and is exempt from byte equality,
    // but it must exist, parse, and echo the config.
    let manifest: serde_json::Value = serde_json::from_slice(&read(
        &out_a.join("manifest_energy_conjugate_gaussian_n64_seed1.json"),
    ))
    .unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["method"], "energy");
    assert!(manifest["config_sha256"].as_str().unwrap().len() == 64);
    assert!(manifest["config_toml"].as_str().unwrap().contains("n_train = 64"));
    assert!(manifest["wall_time_sec"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_method_exits_with_config_error() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "bad.toml", &TINY.replace("\"energy\"", "\"boosting\""));
    let output = srlfi(&["run", "--config", &config]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("experiment.method"), "stderr: {stderr}");
}

#[test]
fn kernel_without_gamma_or_data_exits_with_config_error() {
    let dir = tempdir().unwrap();
    let body = TINY.replace("\"energy\"", "\"kernel\"").replace("n_train = 64", "n_train = 0");
    let config = write_config(dir.path(), "kernel.toml", &body);
    let output = srlfi(&["run", "--config", &config]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("kernel.gamma"), "stderr: {stderr}");
}

#[test]
fn diverging_training_exits_with_numeric_error() {
    let dir = tempdir().unwrap();
    let body = format!(
        "{}learning_rate = 1e300\nvalidation_fraction = 0.0\npatience = 0\n",
        TINY
    );
    let config = write_config(dir.path(), "diverge.toml", &body);
    let out = dir.path().join("out");
    let output = srlfi(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("non-finite"), "stderr: {stderr}");
}

#[test]
fn subcommands_compose_over_persisted_artifacts() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", TINY);
    let out = dir.path().join("out");
    let out_str = out.to_str().unwrap();

    let simulate = srlfi(&["simulate", "--config", &config, "--out", out_str]);
    assert!(simulate.status.success());
    assert!(out.join("dataset_conjugate_gaussian_n72_seed1.bin").exists());

    let train = srlfi(&["train", "--config", &config, "--out", out_str]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    assert!(out.join("checkpoint_energy_conjugate_gaussian_n64_seed1.ck").exists());
    assert!(out.join("history_energy_conjugate_gaussian_n64_seed1.csv").exists());

    let evaluate = srlfi(&["evaluate", "--config", &config, "--out", out_str]);
    assert!(evaluate.status.success(), "{}", String::from_utf8_lossy(&evaluate.stderr));
    let metrics = out.join("metrics_energy_conjugate_gaussian_n64_seed1.csv");
    let metrics_text = std::fs::read_to_string(&metrics).unwrap();
    assert!(metrics_text.starts_with("method,model,n_train,m,metric,component,value"));
    assert!(metrics_text.contains("energy,conjugate_gaussian,64,5,nrmse,"));

    let sbc = srlfi(&[
        "sbc", "--config", &config, "--out", out_str, "--n-priors", "40", "--n-draws", "10",
    ]);
    assert!(sbc.status.success(), "{}", String::from_utf8_lossy(&sbc.stderr));
    let stdout = String::from_utf8_lossy(&sbc.stdout);
    assert!(stdout.contains("KS statistic"), "stdout: {stdout}");
    let sbc_csv =
        std::fs::read_to_string(out.join("sbc_energy_conjugate_gaussian_n64_seed1.csv")).unwrap();
    assert_eq!(sbc_csv.lines().count(), 41, "40 rank rows plus a header");

    let c2st = srlfi(&["c2st", "--config", &config, "--out", out_str]);
    assert!(c2st.status.success(), "{}", String::from_utf8_lossy(&c2st.stderr));
    let stdout = String::from_utf8_lossy(&c2st.stdout);
    assert!(stdout.contains("c2st accuracy"), "stdout: {stdout}");

    let report = srlfi(&["report", "--out", out_str]);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    let stdout = String::from_utf8_lossy(&report.stdout);
    assert!(stdout.contains("energy,conjugate_gaussian,64,5,"), "stdout: {stdout}");
    assert!(out.join("report.csv").exists());
    assert!(out.join("summary.csv").exists());

    // Evaluation on the persisted checkpoint matches a fresh `run` cell.
    let rerun_out = dir.path().join("rerun");
    let rerun = srlfi(&["run", "--config", &config, "--out", rerun_out.to_str().unwrap()]);
    assert!(rerun.status.success());
    assert_eq!(
        read(&metrics),
        read(&rerun_out.join("metrics_energy_conjugate_gaussian_n64_seed1.csv")),
        "split pipeline and single run disagree"
    );
}

#[test]
fn seed_flag_overrides_the_seed_list() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", TINY);
    let out = dir.path().join("out");
    let output =
        srlfi(&["simulate", "--config", &config, "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert!(output.status.success());
    assert!(out.join("dataset_conjugate_gaussian_n72_seed9.bin").exists());
    assert!(!out.join("dataset_conjugate_gaussian_n72_seed1.bin").exists());
}

#[test]
fn threads_flag_reproduces_single_threaded_artifacts() {
    let dir = tempdir().unwrap();
    let body = TINY.replace("seeds = [1]", "seeds = [1, 2, 3]");
    let config = write_config(dir.path(), "exp.toml", &body);
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");

    let a = srlfi(&["run", "--config", &config, "--out", serial.to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = srlfi(&[
        "run", "--config", &config, "--out", parallel.to_str().unwrap(), "--threads", "3",
    ]);
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));

    for seed in [1, 2, 3] {
        let name = format!("metrics_energy_conjugate_gaussian_n64_seed{seed}.csv");
        assert_eq!(read(&serial.join(&name)), read(&parallel.join(&name)), "{name} differs");
    }
    assert_eq!(read(&serial.join("summary.csv")), read(&parallel.join("summary.csv")));
}
