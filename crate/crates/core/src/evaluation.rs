//! Benchmark protocol: density sweeps of rounds × trials, success statistics,
//! the improvement table, and per-step trajectory export.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddpg::Action;
use crate::environment::{generate_world, observe, step, EnvConfig, RewardBreakdown, State, Status, V3};
use crate::error::{Error, Result};
use crate::files;
use crate::neuralnet::Mlp;
use crate::seed::derive_seed;
use crate::training::default_densities;

/// Straight-line pursuit: the unit direction toward the target, ignoring every ray.
pub fn lmc_action(x: &State) -> Action<f64> {
    let [dx, dy, dz] = x.rel_target;
    let n = (dx * dx + dy * dy + dz * dz).sqrt();
    if n == 0.0 {
        return Action::clamped([0.0; 3]);
    }
    Action::clamped([dx / n, dy / n, dz / n])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    SituationAware,
    BlindDdpg,
    Lmc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::SituationAware, ControllerKind::BlindDdpg, ControllerKind::Lmc];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::SituationAware => "situation-aware",
            ControllerKind::BlindDdpg => "blind-ddpg",
            ControllerKind::Lmc => "lmc",
        }
    }

    pub fn needs_checkpoint(self) -> bool {
        self != ControllerKind::Lmc
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown controller `{s}` (expected situation-aware, blind-ddpg or lmc)")))
    }
}

/// A noise-free policy. Learned actors are shared read-only between workers.
#[derive(Clone, Debug)]
pub enum Controller {
    SituationAware(Arc<Mlp<f64>>),
    /// Same network family, fed observations whose ray entries are zeroed.
    BlindDdpg(Arc<Mlp<f64>>),
    Lmc,
}

impl Controller {
    /// Pairs a kind with a trained actor; `lmc` ignores `actor`.
    pub fn new(kind: ControllerKind, actor: Option<Mlp<f64>>) -> Result<Self> {
        match (kind, actor) {
            (ControllerKind::Lmc, _) => Ok(Controller::Lmc),
            (_, None) => Err(Error::invalid(format!("controller `{kind}` needs a trained checkpoint"))),
            (ControllerKind::SituationAware, Some(a)) => Ok(Controller::SituationAware(Arc::new(a))),
            (ControllerKind::BlindDdpg, Some(a)) => Ok(Controller::BlindDdpg(Arc::new(a))),
        }
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::SituationAware(_) => ControllerKind::SituationAware,
            Controller::BlindDdpg(_) => ControllerKind::BlindDdpg,
            Controller::Lmc => ControllerKind::Lmc,
        }
    }

    pub fn act(&self, x: &State) -> Result<Action<f64>> {
        match self {
            Controller::SituationAware(a) => Ok(Action::clamped(a.forward(&x.features(false))?)),
            Controller::BlindDdpg(a) => Ok(Action::clamped(a.forward(&x.features(true))?)),
            Controller::Lmc => Ok(lmc_action(x)),
        }
    }
}

fn to_v3(a: &Action<f64>) -> V3 {
    let u = a.as_slice();
    V3::new(u[0], u[1], u[2])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialOutcome {
    pub status: Status,
    pub steps: usize,
}

impl TrialOutcome {
    /// Only reaching the target counts; timeouts are failed attacks.
    pub fn success(&self) -> bool {
        self.status == Status::Success
    }
}

/// One greedy episode in the world generated from `(density, seed)`.
pub fn run_trial(controller: &Controller, env: &EnvConfig, density: f64, seed: u64) -> Result<TrialOutcome> {
    let mut world = generate_world(density, &env.world, seed)?;
    let mut x = observe(&world, &env.world, &env.rays)?;
    loop {
        let u = controller.act(&x)?;
        let out = step(&mut world, to_v3(&u), &env.world, &env.rays, &env.reward)?;
        if out.status.is_finished() {
            return Ok(TrialOutcome {
                status: out.status,
                steps: world.step_count,
            });
        }
        x = out.next_state;
    }
}

/// World seed of one trial. Identical across controllers, so sweeps are paired.
pub fn trial_seed(eval_seed: u64, density: f64, round: usize, trial: usize) -> u64 {
    derive_seed(eval_seed, &[density.to_bits(), round as u64, trial as u64])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub densities: Vec<f64>,
    pub rounds: usize,
    pub trials_per_round: usize,
    pub eval_seed: u64,
    pub controller: ControllerKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            densities: default_densities(),
            rounds: 10,
            trials_per_round: 20,
            eval_seed: 0,
            controller: ControllerKind::SituationAware,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::BadConfigValue {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.rounds == 0 {
            return bad("rounds", "must be at least 1");
        }
        if self.trials_per_round == 0 {
            return bad("trials_per_round", "must be at least 1");
        }
        if self.densities.is_empty() || self.densities.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return bad("densities", "must be a non-empty list of values in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub density: f64,
    pub round: usize,
    pub successes: usize,
    pub trials: usize,
}

/// Order statistics of the per-round success counts at one density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub density: f64,
    pub max: f64,
    pub avg: f64,
    pub median: f64,
    pub min: f64,
}

impl DensitySummary {
    pub fn from_counts(density: f64, counts: &[usize]) -> Self {
        assert!(!counts.is_empty(), "summary of no rounds");
        let mut sorted: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            density,
            max: sorted[n - 1],
            avg: sorted.iter().sum::<f64>() / n as f64,
            median,
            min: sorted[0],
        }
    }

    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Maximum => self.max,
            Statistic::Average => self.avg,
            Statistic::Median => self.median,
            Statistic::Minimum => self.min,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub controller: ControllerKind,
    pub trials_per_round: usize,
    /// Ordered by density, then round.
    pub rounds: Vec<RoundResult>,
    /// One entry per density, in sweep order.
    pub summary: Vec<DensitySummary>,
}

impl SweepResult {
    /// Rebuilds the summary from per-round rows (rows of one density must be contiguous).
    pub fn from_rounds(controller: ControllerKind, rounds: Vec<RoundResult>) -> Result<Self> {
        let trials = rounds.first().map(|r| r.trials).unwrap_or(0);
        if rounds.iter().any(|r| r.trials != trials || r.successes > r.trials) {
            return Err(Error::invalid("rounds disagree on trial count or exceed it"));
        }
        let mut summary = Vec::new();
        let mut i = 0;
        while i < rounds.len() {
            let d = rounds[i].density;
            let j = i + rounds[i..].iter().take_while(|r| r.density.to_bits() == d.to_bits()).count();
            let counts: Vec<usize> = rounds[i..j].iter().map(|r| r.successes).collect();
            if summary.iter().any(|s: &DensitySummary| s.density.to_bits() == d.to_bits()) {
                return Err(Error::invalid(format!("density {d} appears in two separate blocks")));
            }
            summary.push(DensitySummary::from_counts(d, &counts));
            i = j;
        }
        Ok(Self {
            controller,
            trials_per_round: trials,
            rounds,
            summary,
        })
    }

    pub fn summary_at(&self, density: f64) -> Option<&DensitySummary> {
        self.summary.iter().find(|s| s.density.to_bits() == density.to_bits())
    }
}

/// Worker count from `LMDC_THREADS` (unset or 0 = one per core).
pub fn worker_threads() -> usize {
    std::env::var("LMDC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Runs every `(density, round, trial)` episode and aggregates success counts.
/// Trials run in parallel; results are merged in sweep order, so output is
/// independent of the worker count.
pub fn run_sweep(cfg: &SweepConfig, env: &EnvConfig, controller: &Controller) -> Result<SweepResult> {
    cfg.validate()?;
    env.validate()?;
    if controller.kind() != cfg.controller {
        return Err(Error::invalid(format!(
            "sweep configured for `{}` but given a `{}` controller",
            cfg.controller,
            controller.kind()
        )));
    }
    let jobs: Vec<(f64, usize, usize)> = cfg
        .densities
        .iter()
        .flat_map(|&d| (0..cfg.rounds).flat_map(move |r| (0..cfg.trials_per_round).map(move |t| (d, r, t))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::invalid(format!("cannot start sweep workers: {e}")))?;
    let outcomes: Vec<bool> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, r, t)| run_trial(controller, env, d, trial_seed(cfg.eval_seed, d, r, t)).map(|o| o.success()))
            .collect::<Result<_>>()
    })?;
    let rounds = outcomes
        .chunks(cfg.trials_per_round)
        .zip(cfg.densities.iter().flat_map(|&d| (0..cfg.rounds).map(move |r| (d, r))))
        .map(|(chunk, (density, round))| RoundResult {
            density,
            round,
            successes: chunk.iter().filter(|&&s| s).count(),
            trials: cfg.trials_per_round,
        })
        .collect();
    SweepResult::from_rounds(cfg.controller, rounds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    Maximum,
    Average,
    Median,
    Minimum,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::Maximum, Statistic::Average, Statistic::Median, Statistic::Minimum];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Maximum => "Maximum",
            Statistic::Average => "Average",
            Statistic::Median => "Median",
            Statistic::Minimum => "Minimum",
        }
    }
}

/// `100·(proposed − baseline)/baseline` per density and statistic; `None` where the baseline is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ImprovementTable {
    pub densities: Vec<f64>,
    /// Indexed `[statistic][density]`, statistics in [`Statistic::ALL`] order.
    pub entries: [Vec<Option<f64>>; 4],
}

impl ImprovementTable {
    pub fn get(&self, stat: Statistic, density_index: usize) -> Option<f64> {
        let row = Statistic::ALL.iter().position(|&s| s == stat).expect("listed");
        self.entries[row][density_index]
    }
}

pub fn percent_improvement(proposed: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (proposed - baseline) / baseline)
}

pub fn improvement_from_summaries(proposed: &[DensitySummary], baseline: &[DensitySummary]) -> Result<ImprovementTable> {
    let same = proposed.len() == baseline.len()
        && proposed
            .iter()
            .zip(baseline)
            .all(|(p, b)| p.density.to_bits() == b.density.to_bits());
    if !same {
        return Err(Error::invalid("proposed and baseline sweeps cover different densities"));
    }
    let entries = Statistic::ALL.map(|stat| {
        proposed
            .iter()
            .zip(baseline)
            .map(|(p, b)| percent_improvement(p.get(stat), b.get(stat)))
            .collect()
    });
    Ok(ImprovementTable {
        densities: proposed.iter().map(|s| s.density).collect(),
        entries,
    })
}

pub fn improvement(proposed: &SweepResult, baseline: &SweepResult) -> Result<ImprovementTable> {
    improvement_from_summaries(&proposed.summary, &baseline.summary)
}

/// `%g`-style rendering with six significant digits, so files are byte-stable.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // the exponent after rounding to six digits decides the notation, as in C's %g
    let sci = format!("{x:.5e}");
    let (mant, e) = sci.split_once('e').expect("exponent form");
    let exp: i32 = e.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        format!("{}e{}{:02}", trim_zeros(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))
}

pub const ROUNDS_HEADER: [&str; 4] = ["density", "round", "successes", "trials"];
pub const SUMMARY_HEADER: [&str; 5] = ["density", "max", "avg", "median", "min"];

pub fn rounds_csv(result: &SweepResult) -> Result<Vec<u8>> {
    csv_bytes(
        &ROUNDS_HEADER,
        result.rounds.iter().map(|r| {
            vec![fmt_g(r.density), r.round.to_string(), r.successes.to_string(), r.trials.to_string()]
        }),
    )
}

pub fn summary_csv(result: &SweepResult) -> Result<Vec<u8>> {
    csv_bytes(
        &SUMMARY_HEADER,
        result
            .summary
            .iter()
            .map(|s| vec![fmt_g(s.density), fmt_g(s.max), fmt_g(s.avg), fmt_g(s.median), fmt_g(s.min)]),
    )
}

/// One row per statistic, one column per density; undefined entries are `-`.
pub fn improvement_csv(table: &ImprovementTable) -> Result<Vec<u8>> {
    let mut header = vec!["statistic".to_string()];
    header.extend(table.densities.iter().map(|&d| fmt_g(d)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(
        &header,
        Statistic::ALL.iter().zip(&table.entries).map(|(stat, row)| {
            std::iter::once(stat.name().to_string())
                .chain(row.iter().map(|e| e.map_or_else(|| "-".to_string(), fmt_g)))
                .collect()
        }),
    )
}

pub fn write_rounds_csv(result: &SweepResult, path: &Path) -> Result<()> {
    files::write_atomic(path, &rounds_csv(result)?)
}

pub fn write_summary_csv(result: &SweepResult, path: &Path) -> Result<()> {
    files::write_atomic(path, &summary_csv(result)?)
}

pub fn write_improvement_csv(table: &ImprovementTable, path: &Path) -> Result<()> {
    files::write_atomic(path, &improvement_csv(table)?)
}

/// Reads a per-round CSV written by [`write_rounds_csv`].
pub fn read_rounds_csv(path: &Path, controller: ControllerKind) -> Result<SweepResult> {
    let bytes = files::read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ROUNDS_HEADER {
        return Err(Error::invalid(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            ROUNDS_HEADER.join(","),
            header.join(",")
        )));
    }
    let parse_err = |field: &str, v: &str| Error::invalid(format!("{}: bad {field} `{v}`", path.display()));
    let mut rounds = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rounds.push(RoundResult {
            density: field(0).parse().map_err(|_| parse_err("density", field(0)))?,
            round: field(1).parse().map_err(|_| parse_err("round", field(1)))?,
            successes: field(2).parse().map_err(|_| parse_err("successes", field(2)))?,
            trials: field(3).parse().map_err(|_| parse_err("trials", field(3)))?,
        });
    }
    if rounds.is_empty() {
        return Err(Error::invalid(format!("{}: no rounds", path.display())));
    }
    SweepResult::from_rounds(controller, rounds)
}

/// One line of an exported trajectory. Step 0 is the initial observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub agent: [f64; 3],
    pub target: [f64; 3],
    /// Action applied to reach this record; zero at step 0.
    pub action: [f64; 3],
    pub reward: f64,
    pub rays: Vec<f64>,
    pub status: Status,
    /// Normalized observation the controller saw after this step.
    pub state: Vec<f64>,
    /// Present on the step-0 record only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub step: usize,
    #[serde(flatten)]
    pub components: RewardBreakdown,
    pub total: f64,
}

/// Rolls out `controller` once and returns per-step trajectory and reward-component records.
pub fn trajectory(
    controller: &Controller,
    env: &EnvConfig,
    density: f64,
    seed: u64,
) -> Result<(Vec<TrajectoryRecord>, Vec<RewardRecord>)> {
    let mut world = generate_world(density, &env.world, seed)?;
    let mut x = observe(&world, &env.world, &env.rays)?;
    let mut records = vec![TrajectoryRecord {
        step: 0,
        agent: world.agent_pos.to_array(),
        target: world.target_pos.to_array(),
        action: [0.0; 3],
        reward: 0.0,
        rays: x.rays.iter().map(|r| r * env.rays.max_range).collect(),
        status: world.status,
        state: x.to_vec(),
        density: Some(density),
        seed: Some(seed),
    }];
    let mut rewards = Vec::new();
    while !world.status.is_finished() {
        let u = controller.act(&x)?;
        let out = step(&mut world, to_v3(&u), &env.world, &env.rays, &env.reward)?;
        records.push(TrajectoryRecord {
            step: world.step_count,
            agent: world.agent_pos.to_array(),
            target: world.target_pos.to_array(),
            action: [u.as_slice()[0], u.as_slice()[1], u.as_slice()[2]],
            reward: out.reward,
            rays: out.rays.iter().map(|r| r.distance).collect(),
            status: out.status,
            state: out.next_state.to_vec(),
            density: None,
            seed: None,
        });
        rewards.push(RewardRecord {
            step: world.step_count,
            components: out.components,
            total: out.reward,
        });
        x = out.next_state;
    }
    Ok((records, rewards))
}

fn json_lines<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Path of the reward-component file written next to a trajectory.
pub fn rewards_path(trajectory_path: &Path) -> std::path::PathBuf {
    let stem = trajectory_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    trajectory_path.with_file_name(format!("{stem}.rewards.jsonl"))
}

/// Writes the trajectory to `path` and its reward components to [`rewards_path`].
pub fn export_trajectory(
    controller: &Controller,
    env: &EnvConfig,
    density: f64,
    seed: u64,
    path: &Path,
) -> Result<Vec<TrajectoryRecord>> {
    let (records, rewards) = trajectory(controller, env, density, seed)?;
    files::write_atomic(path, &json_lines(&records)?)?;
    files::write_atomic(&rewards_path(path), &json_lines(&rewards)?)?;
    Ok(records)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let bytes = files::read(path)?;
    let mut out = Vec::new();
    for line in bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
        out.push(serde_json::from_slice(line)?);
    }
    Ok(out)
}

/// Replays the logged actions through a freshly generated world and checks that every
/// position, reward, status and observation matches the log exactly.
pub fn verify_trajectory(records: &[TrajectoryRecord], env: &EnvConfig) -> Result<()> {
    let first = records.first().ok_or_else(|| Error::invalid("empty trajectory"))?;
    let (density, seed) = first
        .density
        .zip(first.seed)
        .ok_or_else(|| Error::invalid("first record lacks density and seed"))?;
    let mut world = generate_world(density, &env.world, seed)?;
    let mismatch = |step: usize, what: &str| Err(Error::invalid(format!("replay diverges at step {step}: {what}")));
    if world.agent_pos.to_array() != first.agent || world.target_pos.to_array() != first.target {
        return mismatch(0, "initial positions");
    }
    if observe(&world, &env.world, &env.rays)?.to_vec() != first.state {
        return mismatch(0, "initial observation");
    }
    for rec in &records[1..] {
        if world.status.is_finished() {
            return mismatch(rec.step, "records continue after the episode ended");
        }
        let out = step(&mut world, V3::from_array(rec.action), &env.world, &env.rays, &env.reward)?;
        if world.step_count != rec.step {
            return mismatch(rec.step, "step index");
        }
        if world.agent_pos.to_array() != rec.agent || world.target_pos.to_array() != rec.target {
            return mismatch(rec.step, "positions");
        }
        if out.reward != rec.reward || out.status != rec.status {
            return mismatch(rec.step, "reward or status");
        }
        if out.next_state.to_vec() != rec.state {
            return mismatch(rec.step, "observation");
        }
    }
    Ok(())
}

/// Appends JSON lines to an open writer; used for streaming metrics.
pub fn write_json_line<W: std::io::Write, T: Serialize>(w: &mut W, item: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, item)?;
    w.write_all(b"\n").map_err(|e| Error::io("<stream>", e))
}
