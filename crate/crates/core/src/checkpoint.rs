//! Binary checkpoint format.
//!
//! ```text
//! "LMDC" | version: u32 LE | metadata length: u32 LE | metadata (UTF-8) | payload
//! ```
//!
//! The metadata is `key = value` text: training step, master seed, agent hyperparameters,
//! one line per network (`dims hidden-activation output-activation`), the SHA-256 of the
//! payload, and finally a `[config]` section holding the run configuration verbatim.
//! The payload stores the actor, critic, target actor and target critic in that order as
//! little-endian `f32`; each layer contributes its weights row-major, then its biases.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::ddpg::{AgentParams, SigmaSchedule};
use crate::error::{Error, Result};
use crate::files;
use crate::neuralnet::{Activation, Dense, Mlp};

pub const MAGIC: [u8; 4] = *b"LMDC";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 12;
const NETWORKS: [&str; 4] = ["actor", "critic", "target_actor", "target_critic"];

/// Provenance stored next to the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub step: u64,
    pub master_seed: u64,
    /// Ordered `(key, value)` snapshot of the run configuration.
    pub config: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    /// Parameters widened back from their stored 32-bit values.
    pub agent: AgentParams<f64>,
}

fn networks<T>(a: &AgentParams<T>) -> [&Mlp<T>; 4] {
    [&a.actor, &a.critic, &a.target_actor, &a.target_critic]
}

fn describe(net: &Mlp<f32>) -> String {
    let dims: Vec<String> = net.dims().iter().map(usize::to_string).collect();
    format!(
        "{} {} {}",
        dims.join("x"),
        net.hidden_activation().name(),
        net.output_activation().name()
    )
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Serializes `agent` at 32-bit precision.
pub fn encode(agent: &AgentParams<f64>, meta: &CheckpointMeta) -> Vec<u8> {
    let nets: Vec<Mlp<f32>> = networks(agent).iter().map(|n| n.cast::<f32>()).collect();
    let mut payload = Vec::with_capacity(nets.iter().map(|n| n.n_params() * 4).sum());
    for net in &nets {
        for layer in net.layers() {
            for v in layer.weights.iter().chain(layer.bias.iter()) {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    let mut text = String::new();
    let _ = writeln!(text, "step = {}", meta.step);
    let _ = writeln!(text, "master_seed = {}", meta.master_seed);
    let _ = writeln!(text, "gamma = {:?}", agent.gamma);
    let _ = writeln!(text, "tau = {:?}", agent.tau);
    let _ = writeln!(text, "sigma_start = {:?}", agent.sigma.start);
    let _ = writeln!(text, "sigma_end = {:?}", agent.sigma.end);
    let _ = writeln!(text, "sigma_decay_steps = {}", agent.sigma.decay_steps);
    for (name, net) in NETWORKS.iter().zip(&nets) {
        let _ = writeln!(text, "{name} = {}", describe(net));
    }
    let _ = writeln!(text, "payload_bytes = {}", payload.len());
    let _ = writeln!(text, "sha256 = {}", hex(&Sha256::digest(&payload)));
    text.push_str("[config]\n");
    for (k, v) in &meta.config {
        let _ = writeln!(text, "{k} = {v}");
    }

    let mut out = Vec::with_capacity(HEADER_LEN + text.len() + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&payload);
    out
}

pub fn save_checkpoint(agent: &AgentParams<f64>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    files::write_atomic(path, &encode(agent, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode(&files::read(path)?)
}

fn meta_err(msg: impl Into<String>) -> Error {
    Error::CheckpointMetadata(msg.into())
}

struct Fields<'a> {
    head: Vec<(&'a str, &'a str)>,
    config: Vec<(String, String)>,
}

impl<'a> Fields<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut head = Vec::new();
        let mut config = Vec::new();
        let mut in_config = false;
        for line in text.lines() {
            if line == "[config]" {
                in_config = true;
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| meta_err(format!("malformed line `{line}`")))?;
            if in_config {
                config.push((k.to_string(), v.to_string()));
            } else {
                head.push((k, v));
            }
        }
        Ok(Self { head, config })
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        self.head
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| meta_err(format!("missing `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| meta_err(format!("`{key}` is not a number: `{v}`")))
    }
}

struct Shape {
    dims: Vec<usize>,
    hidden: Activation,
    output: Activation,
}

impl Shape {
    fn parse(name: &str, s: &str) -> Result<Self> {
        let bad = || meta_err(format!("`{name}` has malformed shape `{s}`"));
        let mut parts = s.split(' ');
        let dims: Vec<usize> = parts
            .next()
            .ok_or_else(bad)?
            .split('x')
            .map(|d| d.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let hidden = parts.next().and_then(Activation::from_name).ok_or_else(bad)?;
        let output = parts.next().and_then(Activation::from_name).ok_or_else(bad)?;
        if parts.next().is_some() || dims.len() < 2 || dims.contains(&0) {
            return Err(bad());
        }
        Ok(Self { dims, hidden, output })
    }

    fn n_params(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn build(&self, values: &mut impl Iterator<Item = f32>) -> Result<Mlp<f32>> {
        let layers = self
            .dims
            .windows(2)
            .map(|w| {
                let weights: Vec<f32> = values.by_ref().take(w[0] * w[1]).collect();
                let bias: Vec<f32> = values.by_ref().take(w[1]).collect();
                Dense {
                    weights: Array2::from_shape_vec((w[1], w[0]), weights).expect("length checked"),
                    bias: Array1::from(bias),
                }
            })
            .collect();
        Mlp::from_layers(layers, self.hidden, self.output)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::CheckpointTruncated(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::CheckpointMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[HEADER_LEN..];
    if rest.len() < meta_len {
        return Err(Error::CheckpointTruncated(format!(
            "metadata needs {meta_len} bytes, {} remain",
            rest.len()
        )));
    }
    let text = std::str::from_utf8(&rest[..meta_len]).map_err(|_| meta_err("not valid UTF-8"))?;
    let payload = &rest[meta_len..];
    let fields = Fields::parse(text)?;

    let shapes: Vec<Shape> = NETWORKS
        .iter()
        .map(|n| Shape::parse(n, fields.get(n)?))
        .collect::<Result<_>>()?;
    let declared: usize = fields.num("payload_bytes")?;
    let expected = 4 * shapes.iter().map(Shape::n_params).sum::<usize>();
    if declared != expected {
        return Err(meta_err(format!(
            "payload_bytes = {declared} but the layer dims need {expected}"
        )));
    }
    if payload.len() < expected {
        return Err(Error::CheckpointTruncated(format!(
            "payload has {} of {expected} bytes",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(meta_err(format!(
            "{} trailing bytes after the payload",
            payload.len() - expected
        )));
    }
    let stated = fields.get("sha256")?;
    let actual = hex(&Sha256::digest(payload));
    if stated != actual {
        return Err(Error::CheckpointHash {
            expected: stated.to_string(),
            actual,
        });
    }

    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let nets: Vec<Mlp<f64>> = shapes
        .iter()
        .map(|s| s.build(&mut values).map(|m| m.cast::<f64>()))
        .collect::<Result<_>>()?;
    let [actor, critic, target_actor, target_critic]: [Mlp<f64>; 4] = nets.try_into().expect("four networks");
    if critic.input_dim() != actor.input_dim() + actor.output_dim() || !actor.same_shape(&target_actor) {
        return Err(meta_err("actor and critic shapes are inconsistent"));
    }

    let agent = AgentParams {
        actor,
        critic,
        target_actor,
        target_critic,
        gamma: fields.num("gamma")?,
        tau: fields.num("tau")?,
        sigma: SigmaSchedule {
            start: fields.num("sigma_start")?,
            end: fields.num("sigma_end")?,
            decay_steps: fields.num("sigma_decay_steps")?,
        },
    };
    Ok(Checkpoint {
        meta: CheckpointMeta {
            step: fields.num("step")?,
            master_seed: fields.num("master_seed")?,
            config: fields.config,
        },
        agent,
    })
}
