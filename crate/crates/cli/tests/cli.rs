use std::path::Path;
use std::process::{Command, Output};

fn liftbid(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftbid")).args(args).env("LIFTBID_OUT_DIR", out).output().expect("run liftbid")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SMALL: &str = "seed = 5\n\
    [simulate.world]\nn_users = 800\nhorizon_days = 8\n\
    [train.sampling]\ntarget_positive_count = 1500\nmax_samples = 20000\n\
    [train.gbdt]\nn_trees = 20\n\
    [abtest]\nreplications = 1\nbudget = 5000.0\n[abtest.world]\nn_users = 900\n";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn entries(dir: &Path) -> usize {
    std::fs::read_dir(dir).map_or(0, |d| d.count())
}

#[test]
fn simulate_then_train_stamps_every_output() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), SMALL);
    let out = root.path().join("out");
    let o = liftbid(&out, &["simulate", "-c", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(out.join("events.log")).unwrap();
    let header = log.lines().next().unwrap();
    assert!(header.starts_with("#liftbid-eventlog\tv1\tseed=5\tdigest="), "{header}");
    let digest = header.split("digest=").nth(1).unwrap().split('\t').next().unwrap().to_string();
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("simulate.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["config_digest"], digest.as_str());
    assert_eq!(summary["summary"]["users"], 800);

    let log_path = out.join("events.log");
    let o = liftbid(&out, &["train", "-c", &cfg, "--log", log_path.to_str().unwrap(), "--export-samples"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["format"], "liftbid-model/v1");
    assert_eq!(model["metadata"]["config_digest"], digest.as_str());
    assert_eq!(model["metadata"]["log_seed"], 5);
    for f in ["calibration.tsv", "samples.tsv"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains("seed=5") && first.contains(&format!("digest={digest}")), "{f}: {first}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("decile"), "{stdout}");
}

#[test]
fn config_errors_exit_with_code_2_and_write_nothing() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("out");
    let missing_seed = write_config(root.path(), "[simulate.world]\nn_users = 10\n");
    let o = liftbid(&out, &["simulate", "-c", &missing_seed]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    let unknown = write_config(root.path(), "seed = 1\n[simulate]\nbogus = 3\n");
    assert_eq!(code(&liftbid(&out, &["simulate", "-c", &unknown])), 2);
    assert_eq!(code(&liftbid(&out, &["verify", "--set", "verify.n_instances=0"])), 2);
    assert_eq!(code(&liftbid(&out, &["simulate", "--set", "simulate.world.n_users=-4"])), 2);
    assert_eq!(code(&liftbid(&out, &["no-such-command"])), 2);
    assert_eq!(entries(&out), 0);
}

#[test]
fn data_and_io_errors_have_their_own_codes() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("out");
    let missing = root.path().join("absent.log");
    assert_eq!(code(&liftbid(&out, &["train", "--log", missing.to_str().unwrap()])), 5);

    let corrupt = root.path().join("corrupt.log");
    std::fs::write(&corrupt, "not a log\n").unwrap();
    assert_eq!(code(&liftbid(&out, &["train", "--log", corrupt.to_str().unwrap()])), 3);

    // A tiny world has too few positives for the default training setup.
    let cfg = write_config(root.path(), "seed = 2\n[simulate.world]\nn_users = 30\nhorizon_days = 3\n");
    let sim = root.path().join("sim");
    assert_eq!(code(&liftbid(&sim, &["simulate", "-c", &cfg])), 0);
    let log = sim.join("events.log");
    let o = liftbid(&out, &["train", "-c", &cfg, "--log", log.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient positives"));
    assert_eq!(entries(&out), 0);
}

#[test]
fn abtest_rejects_a_model_with_another_schema() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), SMALL);
    let out = root.path().join("out");
    assert_eq!(code(&liftbid(&out, &["simulate", "-c", &cfg])), 0);
    let log = out.join("events.log");
    assert_eq!(code(&liftbid(&out, &["train", "-c", &cfg, "--log", log.to_str().unwrap()])), 0);
    let model = out.join("model.json");
    let ab = root.path().join("ab");
    let o = liftbid(&ab, &["abtest", "-c", &cfg, "--model", model.to_str().unwrap(), "--set", "abtest.world.topics=3"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
    assert_eq!(entries(&ab), 0);

    let o = liftbid(&ab, &["abtest", "-c", &cfg, "--model", model.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(ab.join("abtest.json")).unwrap()).unwrap();
    assert_eq!(report["bid_source"], "model");
    assert_eq!(report["replications"], 1);
}

#[test]
fn single_replication_abtest_is_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), SMALL);
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let oa = liftbid(&a, &["abtest", "-c", &cfg]);
    let ob = liftbid(&b, &["abtest", "-c", &cfg]);
    assert_eq!(code(&oa), 0);
    assert_eq!(oa.stdout, ob.stdout);
    for f in ["abtest.json", "abtest.tsv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&oa.stdout);
    assert!(stdout.contains("sign test"), "{stdout}");
}

#[test]
fn examples_print_the_worked_figures() {
    let root = tempfile::tempdir().unwrap();
    let o = liftbid(root.path(), &["examples"]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8_lossy(&o.stdout);
    for needle in ["0.041", "0.05", "$4/$2", "$2/$3.8", "$3.5"] {
        assert!(s.contains(needle), "{needle} missing from\n{s}");
    }
    let o = liftbid(root.path(), &["verify", "examples"]);
    assert_eq!(code(&o), 0);
    assert!(root.path().join("examples.json").exists());
}

#[test]
fn out_dir_flag_beats_environment() {
    let root = tempfile::tempdir().unwrap();
    let flag = root.path().join("flag");
    let o = Command::new(env!("CARGO_BIN_EXE_liftbid"))
        .args(["verify", "examples", "--out-dir", flag.to_str().unwrap()])
        .env("LIFTBID_OUT_DIR", root.path().join("env"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(flag.join("examples.json").exists());
    assert!(!root.path().join("env").exists());
}
