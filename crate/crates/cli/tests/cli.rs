use std::path::Path;
use std::process::{Command, Output};

fn lmdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmdc"))
        .args(args)
        .env("LMDC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SHORT: &[&str] = &[
    "--set",
    "warmup_transitions=200",
    "--set",
    "batch_size=32",
    "--set",
    "hidden_layers=16,16",
    "--set",
    "checkpoint_every=200",
    "--set",
    "probe_every=0",
];

fn train(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let out = dir.join(name);
    let mut args = vec!["train", "--steps", "500", "--seed", "7", "--out", p(&out)];
    args.extend_from_slice(SHORT);
    args.extend_from_slice(extra);
    lmdc(&args)
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# typo below\nbatchsize = 64\n").unwrap();
    let o = lmdc(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("x.ckpt"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("batchsize"), "{}", stderr(&o));
    assert!(!dir.path().join("x.ckpt").exists());
}

#[test]
fn train_writes_checkpoint_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.jsonl");
    let o = train(dir.path(), "a.ckpt", &["--metrics", p(&metrics)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = lmdc::checkpoint::load_checkpoint(&dir.path().join("a.ckpt")).unwrap();
    assert_eq!(ckpt.meta.step, 500);
    assert_eq!(ckpt.meta.master_seed, 7);
    assert!(ckpt.meta.config.iter().any(|(k, v)| k == "batch_size" && v == "32"));

    let text = std::fs::read_to_string(&metrics).unwrap();
    let mut updates = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        match v["kind"].as_str().unwrap() {
            "update" => {
                updates += 1;
                assert!(v["critic_loss"].is_number() && v["actor_loss"].is_number());
            }
            "episode" => assert!(v["return"].is_number() && v["status"].is_string()),
            other => panic!("unexpected record kind {other}"),
        }
    }
    assert_eq!(updates, 300);
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), "a.ckpt", &[]).status.success());
    assert!(train(dir.path(), "b.ckpt", &[]).status.success());
    let a = std::fs::read(dir.path().join("a.ckpt")).unwrap();
    let b = std::fs::read(dir.path().join("b.ckpt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lmc_sweep_has_default_shape_without_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lmc.csv");
    let o = lmdc(&["sweep", "--controller", "lmc", "--trials", "2", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = rows.lines().collect();
    assert_eq!(lines[0], "density,round,successes,trials");
    assert_eq!(lines.len(), 1 + 11 * 10);
    assert_eq!(lines[1], "0,0,2,2");
    let summary = std::fs::read_to_string(dir.path().join("lmc.summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "density,max,avg,median,min");
    assert_eq!(summary.lines().count(), 12);
}

#[test]
fn sweep_with_baseline_writes_improvement_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), "aware.ckpt", &[]).status.success());
    let base = dir.path().join("lmc.csv");
    let common = ["--densities", "0,0.5", "--rounds", "2", "--trials", "2"];
    let mut args = vec!["sweep", "--controller", "lmc", "--out", p(&base)];
    args.extend_from_slice(&common);
    assert!(lmdc(&args).status.success());

    let out = dir.path().join("aware.csv");
    let ckpt = dir.path().join("aware.ckpt");
    let mut args = vec![
        "sweep",
        "--controller",
        "situation-aware",
        "--checkpoint",
        p(&ckpt),
        "--baseline-csv",
        p(&base),
        "--out",
        p(&out),
    ];
    args.extend_from_slice(&common);
    let o = lmdc(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("aware.improvement.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "statistic,0,0.5");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("Maximum,"));
}

#[test]
fn learned_controller_requires_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = lmdc(&["sweep", "--controller", "situation-aware", "--out", p(&dir.path().join("x.csv"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--checkpoint"));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), "a.ckpt", &[]).status.success());
    let path = dir.path().join("a.ckpt");
    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    let out = dir.path().join("x.csv");
    let o = lmdc(&[
        "sweep",
        "--controller",
        "situation-aware",
        "--checkpoint",
        p(&path),
        "--trials",
        "1",
        "--out",
        p(&out),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("hash"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn blind_checkpoint_must_match_controller() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), "blind.ckpt", &["--blind"]).status.success());
    let ckpt = dir.path().join("blind.ckpt");
    let out = dir.path().join("x.csv");
    let args = |c| {
        vec![
            "sweep",
            "--controller",
            c,
            "--checkpoint",
            p(&ckpt),
            "--trials",
            "1",
            "--rounds",
            "1",
            "--out",
            p(&out),
        ]
    };
    assert!(!lmdc(&args("situation-aware")).status.success());
    assert!(lmdc(&args("blind-ddpg")).status.success());
}

#[test]
fn export_lmc_succeeds_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.jsonl");
    let o = lmdc(&["export", "--controller", "lmc", "--density", "0", "--seed", "4", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = lmdc::evaluation::read_trajectory(&out).unwrap();
    assert_eq!(recs.last().unwrap().status, lmdc::environment::Status::Success);
    lmdc::evaluation::verify_trajectory(&recs, &lmdc::environment::EnvConfig::default()).unwrap();
    assert!(dir.path().join("traj.rewards.jsonl").exists());
}

#[test]
fn export_rejects_density_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.jsonl");
    let o = lmdc(&["export", "--controller", "lmc", "--density", "1.5", "--seed", "4", "--out", p(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[0, 1]"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn eval_prints_mean_return() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), "a.ckpt", &[]).status.success());
    let o = lmdc(&[
        "eval",
        "--checkpoint",
        p(&dir.path().join("a.ckpt")),
        "--episodes",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!(v.is_finite());
}
