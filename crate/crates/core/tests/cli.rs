use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
label = "tiny"
seed = 5
[ppo]
batch_size = 256
minibatch_size = 64
sgd_iters = 2
hidden = [16]
total_samples = 512
checkpoint_every = 1
[eval]
n_rollouts = 2
"#;

fn gapcross(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapcross"))
        .args(args)
        .env_remove("GAPCROSS_OUT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[ppo]\nclip = -0.5\n");
    let out = gapcross(&["train", "--config", &cfg, "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ppo.clip"), "{err}");

    let cfg = write_config(dir.path(), "[ppo]\nclipp = 0.2\n");
    let out = gapcross(&["train", "--config", &cfg, "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clipp"));
}

#[test]
fn missing_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gapcross(&["eval", "--checkpoint", s(&dir.path().join("nope.bin"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn train_then_eval_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let mut metrics = Vec::new();
    let mut evals = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let o = gapcross(&["--quiet", "train", "--config", &cfg, "--out", s(&out_dir)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["config.toml", "metrics.csv", "checkpoints/latest.bin", "manifest.txt", "learning_curve.svg"] {
            assert!(out_dir.join(f).exists(), "missing {f}");
        }
        metrics.push(std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap());

        let ev = out_dir.join("eval_again");
        let o = gapcross(&[
            "--quiet",
            "eval",
            "--checkpoint",
            s(&out_dir.join("checkpoints/latest.bin")),
            "--n",
            "3",
            "--seed",
            "9",
            "--gaps",
            "2",
            "--out",
            s(&ev),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        evals.push(std::fs::read_to_string(ev.join("eval.csv")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    assert_eq!(evals[0], evals[1]);
    // header, schema and one row per batch
    assert_eq!(metrics[0].lines().count(), 2 + 2);
    assert!(evals[0].lines().next().unwrap().starts_with("# schema:"));
}

#[test]
fn resume_continues_to_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let full = dir.path().join("full");
    let o = gapcross(&["--quiet", "train", "--config", &cfg, "--no-eval", "--out", s(&full)]);
    assert!(o.status.success());

    let part = dir.path().join("part");
    let o = gapcross(&["--quiet", "train", "--config", &cfg, "--no-eval", "--total-samples", "256", "--out", s(&part)]);
    assert!(o.status.success());
    let o = gapcross(&["--quiet", "train", "--config", &cfg, "--no-eval", "--resume", "--out", s(&part)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(full.join("metrics.csv")).unwrap(),
        std::fs::read_to_string(part.join("metrics.csv")).unwrap()
    );
}

#[test]
fn observation_sweep_writes_sixteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("total_samples = 512", "total_samples = 256"));
    let out = dir.path().join("sweep");
    let o = gapcross(&["--quiet", "sweep", "--kind", "observations", "--config", &cfg, "--n", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| l.starts_with("obs")).collect();
    assert_eq!(rows.len(), 16, "{csv}");
    for f in ["success_rate.svg", "cot.svg", "froude.svg", "body_angular_velocity.svg", "manifest.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn rollout_and_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("total_samples = 512", "total_samples = 256"));
    let run = dir.path().join("run");
    assert!(gapcross(&["--quiet", "train", "--config", &cfg, "--no-eval", "--out", s(&run)]).status.success());
    let ro = dir.path().join("ro");
    let o = gapcross(&[
        "--quiet",
        "rollout",
        "--checkpoint",
        s(&run.join("checkpoints/latest.bin")),
        "--record",
        "--gaps",
        "2",
        "--out",
        s(&ro),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ro.join("trace.csv").exists() && ro.join("rollout.svg").exists());
    let plots = dir.path().join("plots");
    let o = gapcross(&["plot", s(&ro.join("trace.csv")), s(&run.join("metrics.csv")), "--out", s(&plots)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(&plots).unwrap().count(), 2);
}
