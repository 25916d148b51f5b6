//! The training loop: episodes over freshly generated worlds, replay, and periodic updates.

use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ddpg::{select_action_with, AgentParams, Learner, NoiseKind, NoiseProcess, ReplayBuffer, SigmaSchedule, Transition};
use crate::environment::{generate_world, observe, step, EnvConfig, Status, V3};
use crate::error::{Error, Result};
use crate::neuralnet::{Method, Mlp};
use crate::seed::{derive_seed, stream_rng, Stream};

/// Obstacle density used for each training episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DensitySchedule {
    Fixed(f64),
    /// Drawn uniformly from the listed levels at every episode start.
    Uniform(Vec<f64>),
}

impl Default for DensitySchedule {
    fn default() -> Self {
        DensitySchedule::Uniform(default_densities())
    }
}

/// `0.0, 0.1, …, 1.0`.
pub fn default_densities() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl DensitySchedule {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            DensitySchedule::Fixed(d) => *d,
            DensitySchedule::Uniform(levels) => *levels.choose(rng).expect("validated non-empty"),
        }
    }

    fn levels(&self) -> &[f64] {
        match self {
            DensitySchedule::Fixed(d) => std::slice::from_ref(d),
            DensitySchedule::Uniform(levels) => levels,
        }
    }
}

/// Network shapes and learning hyperparameters of the agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub optimizer: Method,
    pub sigma: SigmaSchedule,
    pub noise: NoiseKind,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            gamma: 0.9,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            optimizer: Method::adam(),
            sigma: SigmaSchedule::default(),
            noise: NoiseKind::Gaussian,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub warmup_transitions: u64,
    pub update_period: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub density: DensitySchedule,
    pub master_seed: u64,
    /// Periodic checkpoint cadence in steps; 0 disables.
    pub checkpoint_every: u64,
    /// Greedy-probe cadence in steps; 0 disables.
    pub probe_every: u64,
    pub probe_episodes: usize,
    pub probe_density: f64,
    /// Zero every ray entry of the observation (situation-blind baseline).
    pub blind: bool,
    pub env: EnvConfig,
    pub agent: AgentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            warmup_transitions: 1_000,
            update_period: 1,
            batch_size: 128,
            buffer_capacity: 100_000,
            density: DensitySchedule::default(),
            master_seed: 0,
            checkpoint_every: 10_000,
            probe_every: 2_000,
            probe_episodes: 5,
            probe_density: 0.0,
            blind: false,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::BadConfigValue { key: key.into(), reason });
        if self.total_steps < self.warmup_transitions {
            return bad("total_steps", format!("must be at least warmup_transitions ({})", self.warmup_transitions));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if self.batch_size as u64 > self.warmup_transitions {
            return bad("batch_size", format!("must not exceed warmup_transitions ({})", self.warmup_transitions));
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity", format!("must hold at least one batch ({})", self.batch_size));
        }
        if self.update_period == 0 {
            return bad("update_period", "must be positive".into());
        }
        if self.probe_every > 0 && self.probe_episodes == 0 {
            return bad("probe_episodes", "must be positive when probing".into());
        }
        if !(0.0..=1.0).contains(&self.probe_density) {
            return bad("probe_density", "must lie in [0, 1]".into());
        }
        let levels = self.density.levels();
        if levels.is_empty() || levels.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return bad("density", "levels must be non-empty and within [0, 1]".into());
        }
        let a = &self.agent;
        if a.hidden.is_empty() || a.hidden.contains(&0) {
            return bad("hidden", "need at least one non-empty hidden layer".into());
        }
        if !(a.gamma > 0.0 && a.gamma < 1.0) {
            return bad("gamma", "must lie in (0, 1)".into());
        }
        if !(a.tau > 0.0 && a.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]".into());
        }
        if !(a.actor_lr > 0.0 && a.actor_lr.is_finite()) {
            return bad("actor_lr", "must be positive".into());
        }
        if !(a.critic_lr > 0.0 && a.critic_lr.is_finite()) {
            return bad("critic_lr", "must be positive".into());
        }
        if !(a.sigma.start >= 0.0 && a.sigma.end >= 0.0) {
            return bad("sigma", "noise scales must be non-negative".into());
        }
        self.env.validate()
    }

    /// Upper bound on the number of episodes; every episode takes at least one step.
    pub fn episode_cap(&self) -> u64 {
        self.total_steps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// Global step count at the end of the episode.
    pub step: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub length: u64,
    pub status: Status,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub step: u64,
    pub episode: u64,
    pub actor_loss: f64,
    pub critic_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub step: u64,
    pub episode: u64,
    pub density: f64,
    pub mean_return: f64,
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Update(UpdateRecord),
    Episode(EpisodeRecord),
    Probe(ProbeRecord),
}

/// Learning curves of one run. Equality ignores wall-clock time.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub episodes: Vec<EpisodeRecord>,
    pub updates: Vec<UpdateRecord>,
    pub probes: Vec<ProbeRecord>,
    pub steps: u64,
    pub wall_clock_secs: f64,
}

impl PartialEq for TrainMetrics {
    fn eq(&self, other: &Self) -> bool {
        self.episodes == other.episodes
            && self.updates == other.updates
            && self.probes == other.probes
            && self.steps == other.steps
    }
}

impl TrainMetrics {
    pub fn critic_losses(&self) -> Vec<f64> {
        self.updates.iter().map(|u| u.critic_loss).collect()
    }

    pub fn actor_losses(&self) -> Vec<f64> {
        self.updates.iter().map(|u| u.actor_loss).collect()
    }
}

/// Mean of the first and last `fraction` of `xs`, or `None` when either window is empty.
pub fn head_tail_means(xs: &[f64], fraction: f64) -> Option<(f64, f64)> {
    let n = (xs.len() as f64 * fraction).floor() as usize;
    if n == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&xs[..n]), mean(&xs[xs.len() - n..])))
}

/// What the training loop reports while running.
pub enum TrainEvent<'a> {
    Record(&'a MetricRecord),
    /// Periodic snapshot at `step`.
    Checkpoint { step: u64, agent: &'a AgentParams<f64> },
}

pub fn run_training(cfg: &TrainConfig) -> Result<(AgentParams<f64>, TrainMetrics)> {
    run_training_with(cfg, |_| Ok(()))
}

/// [`run_training`] with an observer that sees every metric record and periodic snapshot in order.
/// An observer error aborts training.
pub fn run_training_with<F>(cfg: &TrainConfig, mut observer: F) -> Result<(AgentParams<f64>, TrainMetrics)>
where
    F: FnMut(TrainEvent<'_>) -> Result<()>,
{
    cfg.validate()?;
    let started = Instant::now();
    let env = &cfg.env;
    let state_dim = env.state_dim();
    let action_dim = 3;

    let mut init_rng = stream_rng(cfg.master_seed, Stream::Init);
    let mut world_rng = stream_rng(cfg.master_seed, Stream::World);
    let mut noise_rng = stream_rng(cfg.master_seed, Stream::Noise);
    let mut sample_rng = stream_rng(cfg.master_seed, Stream::Sampling);

    let a = &cfg.agent;
    let params = AgentParams::new(state_dim, action_dim, &a.hidden, a.gamma, a.tau, a.sigma, &mut init_rng)?;
    let mut learner = Learner::new(params, a.optimizer, a.actor_lr, a.critic_lr)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, state_dim, action_dim)?;
    let mut noise = NoiseProcess::new(a.noise, action_dim);
    let mut metrics = TrainMetrics::default();

    let mut steps = 0u64;
    let mut episode = 0u64;
    while steps < cfg.total_steps {
        let density = cfg.density.draw(&mut world_rng);
        let world_seed: u64 = world_rng.random();
        let mut world = generate_world(density, &env.world, world_seed)?;
        let mut x = observe(&world, &env.world, &env.rays)?.features(cfg.blind);
        noise.reset();
        let mut ret = 0.0;
        let mut length = 0u64;

        loop {
            let sigma = a.sigma.at(steps);
            let u = select_action_with(&learner.params.actor, &x, sigma, &mut noise, &mut noise_rng)?.into_vec();
            let out = step(&mut world, V3::from_array([u[0], u[1], u[2]]), &env.world, &env.rays, &env.reward)?;
            let x_next = out.next_state.features(cfg.blind);
            buffer.push(Transition {
                state: std::mem::take(&mut x),
                action: u,
                reward: out.reward,
                next_state: x_next.clone(),
                terminal: out.status.is_terminal(),
            });
            x = x_next;
            ret += out.reward;
            length += 1;
            steps += 1;

            if steps > cfg.warmup_transitions && buffer.len() >= cfg.batch_size && steps % cfg.update_period == 0 {
                let batch = buffer.sample(cfg.batch_size, &mut sample_rng)?;
                let losses = learner.update(&batch)?;
                let rec = UpdateRecord {
                    step: steps,
                    episode,
                    actor_loss: losses.actor,
                    critic_loss: losses.critic,
                };
                metrics.updates.push(rec.clone());
                observer(TrainEvent::Record(&MetricRecord::Update(rec)))?;
            }

            if out.status.is_finished() {
                let rec = EpisodeRecord {
                    episode,
                    step: steps,
                    ret,
                    length,
                    status: out.status,
                    density,
                };
                metrics.episodes.push(rec.clone());
                observer(TrainEvent::Record(&MetricRecord::Episode(rec)))?;
            }

            if cfg.probe_every > 0 && steps % cfg.probe_every == 0 {
                let probe_seed = derive_seed(cfg.master_seed, &[Stream::World as u64, u64::MAX]);
                let mean_return = evaluate_greedy_return(
                    &learner.params.actor,
                    env,
                    cfg.blind,
                    cfg.probe_density,
                    cfg.probe_episodes,
                    probe_seed,
                )?;
                let rec = ProbeRecord {
                    step: steps,
                    episode,
                    density: cfg.probe_density,
                    mean_return,
                };
                metrics.probes.push(rec.clone());
                observer(TrainEvent::Record(&MetricRecord::Probe(rec)))?;
            }

            if cfg.checkpoint_every > 0 && steps % cfg.checkpoint_every == 0 {
                observer(TrainEvent::Checkpoint {
                    step: steps,
                    agent: &learner.params,
                })?;
            }

            if out.status.is_finished() || steps >= cfg.total_steps {
                break;
            }
        }
        episode += 1;
    }

    metrics.steps = steps;
    metrics.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((learner.params, metrics))
}

/// Result of one noise-free episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedyEpisode {
    pub ret: f64,
    pub status: Status,
    pub steps: usize,
}

/// Runs one episode with the deterministic policy `actor` in the world generated from `seed`.
pub fn greedy_episode(actor: &Mlp<f64>, env: &EnvConfig, blind: bool, density: f64, seed: u64) -> Result<GreedyEpisode> {
    let mut world = generate_world(density, &env.world, seed)?;
    let mut x = observe(&world, &env.world, &env.rays)?.features(blind);
    let mut ret = 0.0;
    loop {
        let u = actor.forward(&x)?;
        let out = step(&mut world, V3::new(u[0], u[1], u[2]), &env.world, &env.rays, &env.reward)?;
        ret += out.reward;
        if out.status.is_finished() {
            return Ok(GreedyEpisode {
                ret,
                status: out.status,
                steps: world.step_count,
            });
        }
        x.clear();
        out.next_state.write_into(&mut x, blind);
    }
}

/// Mean undiscounted return of `n_episodes` noise-free episodes on worlds derived from `seed`.
pub fn evaluate_greedy_return(
    actor: &Mlp<f64>,
    env: &EnvConfig,
    blind: bool,
    density: f64,
    n_episodes: usize,
    seed: u64,
) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::invalid("need at least one probe episode"));
    }
    let mut total = 0.0;
    for i in 0..n_episodes {
        total += greedy_episode(actor, env, blind, density, derive_seed(seed, &[i as u64]))?.ret;
    }
    Ok(total / n_episodes as f64)
}

/// Fresh, untrained agent exactly as [`run_training`] would initialise it.
pub fn initial_agent(cfg: &TrainConfig) -> Result<AgentParams<f64>> {
    let a = &cfg.agent;
    let mut rng: ChaCha8Rng = stream_rng(cfg.master_seed, Stream::Init);
    AgentParams::new(cfg.env.state_dim(), 3, &a.hidden, a.gamma, a.tau, a.sigma, &mut rng)
}
