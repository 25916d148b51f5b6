//! Flat `key = value` run configuration.
//!
//! Every tunable of the world, reward, agent, trainer and sweep has a key and a
//! default. Files may contain blank lines and `#` comments; unknown keys are
//! rejected so that typos never silently fall back to a default. Layers apply
//! in order: built-in defaults, then a file, then command-line overrides.

use std::path::Path;

use crate::ddpg::NoiseKind;
use crate::environment::EnvConfig;
use crate::error::{Error, Result};
use crate::evaluation::{fmt_g, ControllerKind, SweepConfig};
use crate::files;
use crate::neuralnet::Method;
use crate::training::{default_densities, DensitySchedule, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    /// Noise decay horizon; `None` follows `total_steps`.
    pub sigma_decay_steps: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            sigma_decay_steps: None,
        }
    }
}

trait Value: Sized {
    fn parse(s: &str) -> std::result::Result<Self, String>;
    fn show(&self) -> String;
}

impl Value for f64 {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("expected a finite number, got `{s}`")),
        }
    }
    fn show(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! integer_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|_| format!("expected a non-negative integer, got `{s}`"))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
integer_value!(usize, u64);

impl Value for bool {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("expected true or false, got `{s}`")),
        }
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

fn parse_list<T: Value>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|p| T::parse(p.trim())).collect()
}

fn show_list<T: Value>(xs: &[T]) -> String {
    xs.iter().map(Value::show).collect::<Vec<_>>().join(",")
}

impl Value for Vec<usize> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        parse_list(s)
    }
    fn show(&self) -> String {
        show_list(self)
    }
}

impl Value for Vec<f64> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        parse_list(s)
    }
    fn show(&self) -> String {
        self.iter().map(|&d| fmt_g(d)).collect::<Vec<_>>().join(",")
    }
}

impl Value for NoiseKind {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "ou" => Ok(NoiseKind::OrnsteinUhlenbeck),
            _ => Err(format!("expected gaussian or ou, got `{s}`")),
        }
    }
    fn show(&self) -> String {
        self.name().into()
    }
}

impl Value for ControllerKind {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn show(&self) -> String {
        self.name().into()
    }
}

/// `uniform` (the eleven default levels), `uniform:a,b,…`, or a single fixed density.
impl Value for DensitySchedule {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "uniform" {
            return Ok(DensitySchedule::Uniform(default_densities()));
        }
        if let Some(levels) = s.strip_prefix("uniform:") {
            return parse_list(levels).map(DensitySchedule::Uniform);
        }
        f64::parse(s)
            .map(DensitySchedule::Fixed)
            .map_err(|_| format!("expected `uniform`, `uniform:<list>` or a density, got `{s}`"))
    }
    fn show(&self) -> String {
        match self {
            DensitySchedule::Uniform(l) if *l == default_densities() => "uniform".into(),
            DensitySchedule::Uniform(l) => format!("uniform:{}", Value::show(l)),
            DensitySchedule::Fixed(d) => d.show(),
        }
    }
}

/// Optional noise horizon: `auto` or a step count.
impl Value for Option<u64> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            u64::parse(s).map(Some).map_err(|_| format!("expected `auto` or a step count, got `{s}`"))
        }
    }
    fn show(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| v.to_string())
    }
}

impl Value for Method {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adam" => Ok(Method::adam()),
            "sgd" => Ok(Method::Sgd),
            _ => Err(format!("expected adam or sgd, got `{s}`")),
        }
    }
    fn show(&self) -> String {
        self.name().into()
    }
}

fn adam_field(m: &mut Method, i: usize) -> Option<&mut f64> {
    match m {
        Method::Adam { beta1, beta2, epsilon } => Some([beta1, beta2, epsilon].into_iter().nth(i).expect("three fields")),
        Method::Sgd => None,
    }
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        /// Every configuration key, in file order.
        pub const KEYS: &[&str] = &[$($key,)* "adam_beta1", "adam_beta2", "adam_epsilon"];

        fn set_plain(c: &mut RunConfig, key: &str, v: &str) -> Option<std::result::Result<(), String>> {
            match key {
                $($key => Some(Value::parse(v).map(|x| c.$($field).+ = x)),)*
                _ => None,
            }
        }

        fn plain_entries(c: &RunConfig) -> Vec<(String, String)> {
            vec![$(($key.to_string(), Value::show(&c.$($field).+)),)*]
        }
    };
}

keys! {
    "extent_x" => train.env.world.extent_x,
    "extent_y" => train.env.world.extent_y,
    "extent_z" => train.env.world.extent_z,
    "site_grid_x" => train.env.world.site_grid_x,
    "site_grid_z" => train.env.world.site_grid_z,
    "band_x_min" => train.env.world.band_x.lo,
    "band_x_max" => train.env.world.band_x.hi,
    "band_z_min" => train.env.world.band_z.lo,
    "band_z_max" => train.env.world.band_z.hi,
    "obstacle_width_min" => train.env.world.obstacle_width.lo,
    "obstacle_width_max" => train.env.world.obstacle_width.hi,
    "obstacle_height_min" => train.env.world.obstacle_height.lo,
    "obstacle_height_max" => train.env.world.obstacle_height.hi,
    "agent_spawn_x_min" => train.env.world.agent_spawn.x.lo,
    "agent_spawn_x_max" => train.env.world.agent_spawn.x.hi,
    "agent_spawn_y_min" => train.env.world.agent_spawn.y.lo,
    "agent_spawn_y_max" => train.env.world.agent_spawn.y.hi,
    "agent_spawn_z_min" => train.env.world.agent_spawn.z.lo,
    "agent_spawn_z_max" => train.env.world.agent_spawn.z.hi,
    "target_spawn_x_min" => train.env.world.target_spawn.x.lo,
    "target_spawn_x_max" => train.env.world.target_spawn.x.hi,
    "target_spawn_y_min" => train.env.world.target_spawn.y.lo,
    "target_spawn_y_max" => train.env.world.target_spawn.y.hi,
    "target_spawn_z_min" => train.env.world.target_spawn.z.lo,
    "target_spawn_z_max" => train.env.world.target_spawn.z.hi,
    "agent_max_speed" => train.env.world.agent_max_speed,
    "target_speed" => train.env.world.target_speed,
    "success_radius" => train.env.world.success_radius,
    "far_limit" => train.env.world.far_limit,
    "max_steps" => train.env.world.max_steps,
    "agent_radius" => train.env.world.agent_radius,
    "n_horizontal_rays" => train.env.rays.n_horizontal,
    "down_ray" => train.env.rays.include_down_ray,
    "ray_max_range" => train.env.rays.max_range,
    "step_penalty" => train.env.reward.step_penalty,
    "progress_gain" => train.env.reward.progress_gain,
    "success_reward" => train.env.reward.success_reward,
    "failure_reward" => train.env.reward.failure_reward,
    "obstacle_gain" => train.env.reward.obstacle_gain,
    "obstacle_distance_floor" => train.env.reward.obstacle_distance_floor,
    "hidden_layers" => train.agent.hidden,
    "gamma" => train.agent.gamma,
    "tau" => train.agent.tau,
    "actor_lr" => train.agent.actor_lr,
    "critic_lr" => train.agent.critic_lr,
    "optimizer" => train.agent.optimizer,
    "sigma_start" => train.agent.sigma.start,
    "sigma_end" => train.agent.sigma.end,
    "sigma_decay_steps" => sigma_decay_steps,
    "noise" => train.agent.noise,
    "total_steps" => train.total_steps,
    "warmup_transitions" => train.warmup_transitions,
    "update_period" => train.update_period,
    "batch_size" => train.batch_size,
    "buffer_capacity" => train.buffer_capacity,
    "train_density" => train.density,
    "master_seed" => train.master_seed,
    "checkpoint_every" => train.checkpoint_every,
    "probe_every" => train.probe_every,
    "probe_episodes" => train.probe_episodes,
    "probe_density" => train.probe_density,
    "blind" => train.blind,
    "densities" => sweep.densities,
    "rounds" => sweep.rounds,
    "trials_per_round" => sweep.trials_per_round,
    "eval_seed" => sweep.eval_seed,
    "controller" => sweep.controller,
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |reason: String| Error::BadConfigValue {
            key: key.into(),
            reason,
        };
        if let Some(r) = set_plain(self, key, value) {
            return r.map_err(bad);
        }
        let i = match key {
            "adam_beta1" => 0,
            "adam_beta2" => 1,
            "adam_epsilon" => 2,
            _ => return Err(Error::UnknownConfigKey(key.into())),
        };
        let v = f64::parse(value).map_err(bad)?;
        match adam_field(&mut self.train.agent.optimizer, i) {
            Some(slot) => *slot = v,
            None => return Err(bad("only meaningful with optimizer = adam".into())),
        }
        Ok(())
    }

    /// Applies `key = value` text. Later lines win.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line: n + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::ConfigSyntax {
                    line: n + 1,
                    reason: format!("empty key or value in `{line}`"),
                });
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let bytes = files::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::ConfigSyntax {
            line: 0,
            reason: format!("{} is not UTF-8", path.display()),
        })?;
        self.apply_str(&text)
    }

    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        pairs.into_iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Snapshot of every key with its current value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = plain_entries(self);
        let names = ["adam_beta1", "adam_beta2", "adam_epsilon"];
        let mut method = self.train.agent.optimizer;
        for (i, name) in names.iter().enumerate() {
            let v = adam_field(&mut method, i).map_or_else(|| "-".into(), |v| v.show());
            out.push((name.to_string(), v));
        }
        out
    }

    /// Renders a file that [`RunConfig::apply_str`] reads back to an equal config.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .filter(|(_, v)| v != "-")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Training configuration with derived defaults resolved.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.agent.sigma.decay_steps = self.sigma_decay_steps.unwrap_or(t.total_steps);
        t
    }

    pub fn env(&self) -> &EnvConfig {
        &self.train.env
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.sweep.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_key() {
        let c = RunConfig::default();
        let e = c.entries();
        assert_eq!(e.len(), KEYS.len());
        for ((k, _), name) in e.iter().zip(KEYS) {
            assert_eq!(k, name);
        }
        let get = |k: &str| e.iter().find(|(key, _)| key == k).unwrap().1.clone();
        assert_eq!(get("batch_size"), "128");
        assert_eq!(get("gamma"), "0.9");
        assert_eq!(get("total_steps"), "100000");
        assert_eq!(get("train_density"), "uniform");
        assert_eq!(get("densities"), "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1");
        assert_eq!(c.train_config().agent.sigma.decay_steps, 100_000);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("gamma", "0.95").unwrap();
        c.set("train_density", "uniform:0,0.5").unwrap();
        c.set("noise", "ou").unwrap();
        c.set("hidden_layers", "64,32").unwrap();
        let mut back = RunConfig::default();
        back.apply_str(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::default().apply_str("batchsize = 64\n").unwrap_err();
        assert!(matches!(&err, Error::UnknownConfigKey(k) if k == "batchsize"));
        assert!(err.to_string().contains("batchsize"));
    }

    #[test]
    fn bad_values_and_syntax() {
        let mut c = RunConfig::default();
        let err = c.apply_str("gamma = fast").unwrap_err();
        assert!(matches!(&err, Error::BadConfigValue { key, .. } if key == "gamma"));
        assert!(matches!(c.apply_str("\n\njust words"), Err(Error::ConfigSyntax { line: 3, .. })));
        assert!(matches!(c.apply_str("gamma ="), Err(Error::ConfigSyntax { .. })));
        c.set("optimizer", "sgd").unwrap();
        assert!(c.set("adam_beta1", "0.8").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let mut c = RunConfig::default();
        c.apply_str("# a comment\n\n  rounds = 3  # trailing\n").unwrap();
        assert_eq!(c.sweep.rounds, 3);
    }

    #[test]
    fn three_layer_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "gamma = 0.8\nbatch_size = 64\n").unwrap();
        let mut c = RunConfig::default();
        c.apply_file(&path).unwrap();
        c.apply_overrides([("batch_size", "32")]).unwrap();
        assert_eq!(c.train.agent.gamma, 0.8);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.agent.tau, RunConfig::default().train.agent.tau);
    }

    #[test]
    fn noise_horizon_follows_training_length() {
        let mut c = RunConfig::default();
        c.set("total_steps", "5000").unwrap();
        assert_eq!(c.train_config().agent.sigma.decay_steps, 5000);
        c.set("sigma_decay_steps", "200").unwrap();
        assert_eq!(c.train_config().agent.sigma.decay_steps, 200);
        c.set("sigma_decay_steps", "auto").unwrap();
        assert_eq!(c.train_config().agent.sigma.decay_steps, 5000);
    }
}
