use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lmdc::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use lmdc::config::RunConfig;
use lmdc::evaluation::{
    export_trajectory, improvement, read_rounds_csv, rewards_path, run_sweep, write_improvement_csv,
    write_rounds_csv, write_summary_csv, Controller, ControllerKind,
};
use lmdc::training::{evaluate_greedy_return, run_training_with, MetricRecord, TrainEvent};

#[derive(Parser)]
#[command(name = "lmdc", version, about = "Raycast-aware drone pursuit: train, sweep and export")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write its checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Total environment steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Zero the ray inputs (situation-blind baseline).
        #[arg(long)]
        blind: bool,
        #[arg(long)]
        out: PathBuf,
        /// Line-delimited JSON metrics stream.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run the density sweep and write per-round and summary CSVs.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// situation-aware, blind-ddpg or lmc.
        #[arg(long)]
        controller: Option<String>,
        /// Comma-separated densities in [0, 1].
        #[arg(long)]
        densities: Option<String>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Evaluation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-round CSV; the summary goes next to it as `<stem>.summary.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Per-round CSV of a baseline sweep; adds `<stem>.improvement.csv`.
        #[arg(long)]
        baseline_csv: Option<PathBuf>,
    },
    /// Roll out one episode and write its trajectory as JSON lines.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        controller: String,
        #[arg(long)]
        density: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean noise-free return of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        density: f64,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate with zeroed ray inputs.
        #[arg(long)]
        blind: bool,
    },
}

fn load_config(common: &Common, flags: &[(&str, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)
            .with_context(|| format!("reading config {}", path.display()))?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in flags {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn controller_for(kind: ControllerKind, checkpoint: Option<&Path>) -> Result<Controller> {
    if !kind.needs_checkpoint() {
        return Ok(Controller::Lmc);
    }
    let path = checkpoint.with_context(|| format!("controller `{kind}` needs --checkpoint"))?;
    let ckpt = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let trained_blind = ckpt.meta.config.iter().any(|(k, v)| k == "blind" && v == "true");
    if trained_blind != (kind == ControllerKind::BlindDdpg) {
        bail!(
            "checkpoint {} was trained with blind = {trained_blind}, which does not match controller `{kind}`",
            path.display()
        );
    }
    Ok(Controller::new(kind, Some(ckpt.agent.actor))?)
}

fn train(
    common: &Common,
    seed: Option<u64>,
    steps: Option<u64>,
    blind: bool,
    out: &Path,
    metrics: Option<&Path>,
) -> Result<()> {
    let mut flags = vec![];
    if let Some(s) = seed {
        flags.push(("master_seed", s.to_string()));
    }
    if let Some(n) = steps {
        flags.push(("total_steps", n.to_string()));
    }
    if blind {
        flags.push(("blind", "true".into()));
    }
    let cfg = load_config(common, &flags)?;
    let tc = cfg.train_config();
    let snapshot = cfg.entries();
    let meta = |step| CheckpointMeta {
        step,
        master_seed: tc.master_seed,
        config: snapshot.clone(),
    };

    let mut sink = match metrics {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("creating metrics file {}", p.display()))?,
        )),
        None => None,
    };
    let (agent, m) = run_training_with(&tc, |ev| {
        match ev {
            TrainEvent::Record(rec) => {
                if let Some(w) = sink.as_mut() {
                    lmdc::evaluation::write_json_line(w, rec)?;
                }
                if let MetricRecord::Probe(p) = rec {
                    eprintln!("step {:>7}  greedy return {:.3}", p.step, p.mean_return);
                }
            }
            TrainEvent::Checkpoint { step, agent } => {
                if let Some(w) = sink.as_mut() {
                    w.flush().map_err(|e| lmdc::Error::Io {
                        path: PathBuf::from("<metrics>"),
                        source: e,
                    })?;
                }
                save_checkpoint(agent, &meta(step), out)?;
            }
        }
        Ok(())
    })?;
    if let Some(mut w) = sink {
        w.flush().context("flushing metrics")?;
    }
    save_checkpoint(&agent, &meta(m.steps), out)?;
    eprintln!(
        "trained {} steps, {} episodes, {} updates in {:.1}s -> {}",
        m.steps,
        m.episodes.len(),
        m.updates.len(),
        m.wall_clock_secs,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    common: &Common,
    checkpoint: Option<&Path>,
    controller: Option<&str>,
    densities: Option<&str>,
    rounds: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    baseline_csv: Option<&Path>,
) -> Result<()> {
    let mut flags = vec![];
    if let Some(c) = controller {
        flags.push(("controller", c.to_string()));
    }
    if let Some(d) = densities {
        flags.push(("densities", d.to_string()));
    }
    if let Some(r) = rounds {
        flags.push(("rounds", r.to_string()));
    }
    if let Some(t) = trials {
        flags.push(("trials_per_round", t.to_string()));
    }
    if let Some(s) = seed {
        flags.push(("eval_seed", s.to_string()));
    }
    let cfg = load_config(common, &flags)?;
    let baseline = match baseline_csv {
        Some(p) => Some(read_rounds_csv(p, ControllerKind::BlindDdpg).with_context(|| format!("reading baseline {}", p.display()))?),
        None => None,
    };
    let ctrl = controller_for(cfg.sweep.controller, checkpoint)?;
    let result = run_sweep(&cfg.sweep, cfg.env(), &ctrl)?;
    let table = baseline.as_ref().map(|b| improvement(&result, b)).transpose()?;

    write_rounds_csv(&result, out)?;
    write_summary_csv(&result, &sibling(out, "summary.csv"))?;
    if let Some(t) = &table {
        write_improvement_csv(t, &sibling(out, "improvement.csv"))?;
    }
    for s in &result.summary {
        eprintln!(
            "density {:>4}: max {:>2} avg {:>5.2} median {:>4} min {:>2}",
            s.density, s.max, s.avg, s.median, s.min
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            seed,
            steps,
            blind,
            out,
            metrics,
        } => train(&common, seed, steps, blind, &out, metrics.as_deref()),
        Command::Sweep {
            common,
            checkpoint,
            controller,
            densities,
            rounds,
            trials,
            seed,
            out,
            baseline_csv,
        } => sweep(
            &common,
            checkpoint.as_deref(),
            controller.as_deref(),
            densities.as_deref(),
            rounds,
            trials,
            seed,
            &out,
            baseline_csv.as_deref(),
        ),
        Command::Export {
            common,
            checkpoint,
            controller,
            density,
            seed,
            out,
        } => {
            if !(0.0..=1.0).contains(&density) {
                bail!("--density must lie in the valid range [0, 1], got {density}");
            }
            let cfg = load_config(&common, &[])?;
            let kind: ControllerKind = controller.parse()?;
            let ctrl = controller_for(kind, checkpoint.as_deref())?;
            let recs = export_trajectory(&ctrl, cfg.env(), density, seed, &out)?;
            let last = recs.last().expect("step-0 record");
            eprintln!(
                "{} steps, final status {} -> {} (+ {})",
                last.step,
                last.status,
                out.display(),
                rewards_path(&out).display()
            );
            Ok(())
        }
        Command::Eval {
            common,
            checkpoint,
            density,
            episodes,
            seed,
            blind,
        } => {
            let cfg = load_config(&common, &[])?;
            let ckpt = load_checkpoint(&checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let mean = evaluate_greedy_return(&ckpt.agent.actor, cfg.env(), blind, density, episodes, seed)?;
            println!("{mean}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
