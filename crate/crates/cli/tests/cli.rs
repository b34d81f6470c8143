use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn thzuav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thzuav")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = thzuav(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("cfg.toml");
    fs::write(
        &p,
        "[network]\nn_uavs = 2\nn_gus = 8\narea_side = 50.0\nn_slots = 5\n\n[ppo]\nepisodes = 3\nactors = 2\nhidden = [16]\n",
    )
    .unwrap();
    p.display().to_string()
}

#[test]
fn train_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let train_dir = dir.path().join("train");
    ok(&["train", "--config", &cfg, "--seed", "4", "--out", train_dir.to_str().unwrap()]);
    let curve = fs::read_to_string(train_dir.join("reward_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
    let ck = train_dir.join("policy.json");
    assert!(ck.exists());

    let run_dir = dir.path().join("runs/ou_pp");
    let out = ok(&[
        "run", "--config", &cfg, "--scheme", "ou-pp", "--checkpoint", ck.to_str().unwrap(),
        "--seeds", "0..3", "--out", run_dir.to_str().unwrap(),
    ]);
    assert!(out.contains("OU_PP"));
    let traces = fs::read_to_string(run_dir.join("traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 3 * 5 * 2);

    let rp_dir = dir.path().join("runs/su_rp");
    ok(&["run", "--config", &cfg, "--scheme", "su-rp", "--seeds", "0,1,2", "--out", rp_dir.to_str().unwrap()]);

    let report = ok(&["report", "--dir", dir.path().join("runs").to_str().unwrap()]);
    assert!(report.contains("OU_PP") && report.contains("SU_RP") && report.contains("mean_gu_rate"));
    assert!(dir.path().join("runs/summary.csv").exists());
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&["run", "--config", &cfg, "--scheme", "su-pp", "--seeds", "1..3", "--out", d.to_str().unwrap()]);
    }
    for f in ["metrics.csv", "traces.jsonl", "reward_curve.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_writes_one_dir_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("sweep");
    ok(&["sweep", "--config", &cfg, "--uavs", "2,3", "--seeds", "0..2", "--out", out.to_str().unwrap()]);
    for k in [2, 3] {
        let m = fs::read_to_string(out.join(format!("k{k}/metrics.csv"))).unwrap();
        assert!(m.starts_with("scheme,seed,slot,metric,value\n"));
    }
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[network]\nn_uav = 3\n").unwrap();
    let o = thzuav(&["run", "--config", bad.to_str().unwrap(), "--scheme", "su-pp", "--out", "x"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_uav"));

    let cfg = write_config(dir.path());
    let o = thzuav(&["run", "--config", &cfg, "--scheme", "ou-rp", "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));

    let o = thzuav(&[
        "run", "--config", &cfg, "--scheme", "ou-rp", "--checkpoint", "/nonexistent.json",
        "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn defaults_parse_back() {
    let text = ok(&["defaults", "--scaled"]);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.toml");
    fs::write(&p, text).unwrap();
    ok(&["run", "--config", p.to_str().unwrap(), "--scheme", "su-rp", "--seeds", "0", "--slots", "2", "--out", dir.path().join("o").to_str().unwrap()]);
}
