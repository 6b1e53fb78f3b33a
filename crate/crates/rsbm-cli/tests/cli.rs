//! End-to-end tests of the `rsbm` binary: reproducibility, the
//! generate/train/sample pipeline, checkpoint guards, sweeps, and the
//! verification suite's exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rsbm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsbm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_is_byte_reproducible_and_validates_args() {
    let dir = tempfile::tempdir().unwrap();
    let out = rsbm(
        &["generate", "--n", "50", "--shapes", "star,figure8", "--seed", "7", "--out", "a.csv"],
        dir.path(),
    );
    assert_ok(&out);
    let out = rsbm(
        &["generate", "--n", "50", "--shapes", "star,figure8", "--seed", "7", "--out", "b.csv"],
        dir.path(),
    );
    assert_ok(&out);
    assert_eq!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
    let rows = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(rows.lines().count(), 51); // header + 50 samples

    // usage errors
    let out = rsbm(&["generate", "--n", "0", "--out", "c.csv"], dir.path());
    assert!(!out.status.success());
    let out = rsbm(
        &["generate", "--n", "5", "--shapes", "triangle", "--out", "c.csv"],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn train_sample_pipeline_respects_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&rsbm(
        &["generate", "--n", "120", "--seed", "3", "--out", "data.csv"],
        dir.path(),
    ));

    // --epochs 0 still writes a valid initial checkpoint and exits 0
    assert_ok(&rsbm(
        &[
            "train", "--dataset", "data.csv", "--out-dir", "run0", "--epochs", "0",
            "--prior-epochs", "0", "--seed", "1",
        ],
        dir.path(),
    ));
    assert!(dir.path().join("run0/velocity.rsbm").exists());
    assert!(dir.path().join("run0/prior.rsbm").exists());

    // short real training run with a perturbed prior
    assert_ok(&rsbm(
        &[
            "train", "--dataset", "data.csv", "--out-dir", "run", "--epochs", "2", "--lr",
            "1e-3", "--batch", "32", "--prior", "perturbed", "--epsilon", "0.5", "--seed", "1",
        ],
        dir.path(),
    ));
    let loss = fs::read_to_string(dir.path().join("run/loss.csv")).unwrap();
    assert!(loss.starts_with("epoch,loss\n"));
    assert_eq!(loss.lines().count(), 3);

    // sampling with matching flags, twice, must agree byte for byte
    for out_dir in ["s1", "s2"] {
        assert_ok(&rsbm(
            &[
                "sample", "--checkpoint", "run/velocity.rsbm", "--prior-checkpoint",
                "run/prior.rsbm", "--dataset", "data.csv", "--k", "3", "--solver", "heun",
                "--n-eval", "20", "--seed", "9", "--out-dir", out_dir,
            ],
            dir.path(),
        ));
    }
    assert_eq!(
        fs::read(dir.path().join("s1/metrics.json")).unwrap(),
        fs::read(dir.path().join("s2/metrics.json")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("s1/trajectories.csv")).unwrap(),
        fs::read(dir.path().join("s2/trajectories.csv")).unwrap()
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s1/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["nfe"], 5); // heun k=3
    assert_eq!(metrics["per_sample"].as_array().unwrap().len(), 20);

    // NFE accounting through the CLI at k=10
    assert_ok(&rsbm(
        &[
            "sample", "--checkpoint", "run/velocity.rsbm", "--prior-checkpoint",
            "run/prior.rsbm", "--dataset", "data.csv", "--k", "10", "--n-eval", "5", "--seed",
            "9", "--out-dir", "s10",
        ],
        dir.path(),
    ));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s10/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["nfe"], 19);

    // mismatched ε or target against the embedded checkpoint config is fatal
    let out = rsbm(
        &[
            "sample", "--checkpoint", "run/velocity.rsbm", "--prior-checkpoint",
            "run/prior.rsbm", "--dataset", "data.csv", "--epsilon", "1.0", "--out-dir", "bad",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon mismatch"));
    let out = rsbm(
        &[
            "sample", "--checkpoint", "run/velocity.rsbm", "--prior-checkpoint",
            "run/prior.rsbm", "--dataset", "data.csv", "--target", "x0", "--out-dir", "bad",
        ],
        dir.path(),
    );
    assert!(!out.status.success());

    // a prior checkpoint trained against a different bridge is rejected
    assert_ok(&rsbm(
        &[
            "train", "--dataset", "data.csv", "--out-dir", "run_eps1", "--epochs", "0",
            "--prior-epochs", "0", "--prior", "perturbed", "--epsilon", "1.0", "--seed", "1",
        ],
        dir.path(),
    ));
    let out = rsbm(
        &[
            "sample", "--checkpoint", "run/velocity.rsbm", "--prior-checkpoint",
            "run_eps1/prior.rsbm", "--dataset", "data.csv", "--out-dir", "bad",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bridge mismatch"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&rsbm(
        &["generate", "--n", "60", "--seed", "5", "--out", "data.csv"],
        dir.path(),
    ));
    fs::write(
        dir.path().join("cfg.toml"),
        "epsilon = 0.9\nepochs = 1\nprior = \"perturbed\"\nlr = 1e-3\nbatch = 16\n",
    )
    .unwrap();
    assert_ok(&rsbm(
        &[
            "train", "--dataset", "data.csv", "--out-dir", "run", "--config", "cfg.toml",
            "--epsilon", "0.25", "--seed", "2",
        ],
        dir.path(),
    ));
    // flag ε overrides the file; file epochs/prior are used
    let checkpoint = fs::read_to_string(dir.path().join("run/velocity.rsbm")).unwrap();
    assert!(checkpoint.starts_with("RSBM1\n"));
    assert!(checkpoint.contains("\"epsilon\": 0.25"));
    let loss = fs::read_to_string(dir.path().join("run/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 2); // header + one epoch

    let out = rsbm(
        &["train", "--dataset", "data.csv", "--out-dir", "x", "--config", "missing.toml"],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn ablate_emits_the_long_format_sweep() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&rsbm(
        &["generate", "--n", "90", "--seed", "11", "--out", "data.csv"],
        dir.path(),
    ));
    assert_ok(&rsbm(
        &[
            "ablate", "--sweep", "solver", "--dataset", "data.csv", "--out", "sweep.csv",
            "--seeds", "2", "--epochs", "1", "--lr", "1e-3", "--batch", "32", "--prior-epochs",
            "2", "--n-eval", "30", "--seed", "4",
        ],
        dir.path(),
    ));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next().unwrap(), "sweep,config,seed,k,mse,cos_sim,fde,nfe");
    // 1 shared-model cell × 2 seeds × (3 ks × 2 solvers) = 12 rows
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    // matched-NFE pair present: euler k=5 (nfe 5) and heun k=3 (nfe 5)
    assert!(rows.iter().any(|r| r.contains("euler_k5") && r.ends_with(",5")));
    assert!(rows.iter().any(|r| r.contains("heun_k3") && r.ends_with(",5")));

    let out = rsbm(
        &["ablate", "--sweep", "nonsense", "--dataset", "data.csv", "--out", "s.csv"],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn verify_reports_and_gates_on_failures() {
    let dir = tempfile::tempdir().unwrap();
    // keep the Monte-Carlo cells light; the checks themselves are unchanged
    let out = rsbm(
        &[
            "verify", "--mc-draws", "20000", "--skip-trained", "--json", "report.json",
            "--seed", "1",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);
    let results = report["results"].as_array().unwrap();
    assert!(results.len() >= 20);
    for r in results {
        for key in ["check", "measured", "expected", "tolerance", "pass"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
    }

    // negative control: a perturbed kernel must fail the invariance checks
    let out = rsbm(
        &[
            "verify", "--mc-draws", "5000", "--skip-trained", "--perturb-kernel", "1e-3",
            "--json", "bad.json",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bad.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[FAIL] epsilon_invariance"));
}
