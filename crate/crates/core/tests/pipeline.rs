use lmdc::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use lmdc::config::RunConfig;
use lmdc::evaluation::{rounds_csv, run_sweep, Controller, ControllerKind, SweepConfig};
use lmdc::training::{run_training, TrainConfig};

fn short_run() -> TrainConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_str(
        "total_steps = 600\nwarmup_transitions = 200\nbatch_size = 32\nhidden_layers = 24,24\nprobe_every = 0\n",
    )
    .unwrap();
    cfg.train_config()
}

#[test]
fn train_save_load_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_run();
    let (agent, metrics) = run_training(&cfg).unwrap();
    assert_eq!(metrics.steps, 600);
    assert_eq!(metrics.updates.len(), 400);

    let path = dir.path().join("agent.ckpt");
    let meta = CheckpointMeta {
        step: metrics.steps,
        master_seed: cfg.master_seed,
        config: RunConfig::default().entries(),
    };
    save_checkpoint(&agent, &meta, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.meta.step, 600);
    assert_eq!(loaded.agent.actor.dims(), vec![15, 24, 24, 3]);
    assert_eq!(loaded.agent.critic.dims(), vec![18, 24, 24, 1]);

    let sweep = SweepConfig {
        densities: vec![0.0, 0.5],
        rounds: 2,
        trials_per_round: 3,
        ..SweepConfig::default()
    };
    let ctrl = Controller::new(ControllerKind::SituationAware, Some(loaded.agent.actor.clone())).unwrap();
    let a = run_sweep(&sweep, &cfg.env, &ctrl).unwrap();
    let b = run_sweep(&sweep, &cfg.env, &ctrl).unwrap();
    assert_eq!(rounds_csv(&a).unwrap(), rounds_csv(&b).unwrap());
    assert!(a.rounds.iter().all(|r| r.successes <= r.trials && r.trials == 3));
}

#[test]
fn world_layouts_do_not_depend_on_noise_draws() {
    let base = short_run();
    let mut other = short_run();
    other.agent.sigma.start = 0.9;
    let (_, m1) = run_training(&base).unwrap();
    let (_, m2) = run_training(&other).unwrap();
    let densities = |m: &lmdc::training::TrainMetrics| m.episodes.iter().map(|e| e.density).collect::<Vec<_>>();
    let (d1, d2) = (densities(&m1), densities(&m2));
    let n = d1.len().min(d2.len());
    assert!(n > 0);
    assert_eq!(d1[..n], d2[..n]);
}
