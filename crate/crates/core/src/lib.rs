//! Raycast-aware drone pursuit: a deterministic obstacle world, a from-scratch DDPG
//! learner, and the density-sweep benchmark used to compare controllers.

pub mod checkpoint;
pub mod config;
pub mod ddpg;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod files;
pub mod geometry;
pub mod neuralnet;
pub mod scalar;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision geometry, used by the simulator.
pub type Vec3d = geometry::Vec3<f64>;
pub type Aabbd = geometry::Aabb<f64>;
pub type RayConfigd = geometry::RayConfig<f64>;

/// Networks and agents at training precision.
pub type Mlp64 = neuralnet::Mlp<f64>;
/// Networks at checkpoint precision.
pub type Mlp32 = neuralnet::Mlp<f32>;
pub type Agent = ddpg::AgentParams<f64>;
pub type Learner = ddpg::Learner<f64>;
