//! Instrumented multi-agent reinforcement learning pipelines for measuring
//! latency-bounded training throughput.
//!
//! Three reference pipelines are provided: an off-policy centralized-critic
//! learner with all-to-all knowledge concatenation ([`pipelines::maddpg`]), an
//! on-policy centralized learner with a learnt communication graph
//! ([`pipelines::tom2c`]), and a decentralized single-threaded A2C with belief
//! propagation over a fixed graph ([`pipelines::neurcomm`]). Every phase is
//! stamped into a [`profiler::Recorder`]; [`runtime`] maps pipelines onto
//! rollout and learner threads and composes phase latencies into iterations
//! per second.

pub mod comm;
pub mod envs;
pub mod error;
pub mod graph;
pub mod numerics;
pub mod pipelines;
pub mod profiler;
pub mod runtime;

pub use error::{Error, Result};
