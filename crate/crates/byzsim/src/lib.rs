//! Deterministic single-process simulator of Byzantine-robust,
//! communication-compressed distributed stochastic optimization.
//!
//! Workers run double-momentum gradient estimation (plain or variance
//! reduced) over local logistic-regression shards, transmit compressed
//! error-feedback updates, and a server combines them with a robust
//! aggregation rule while some workers mount coordinated attacks. Every run
//! is reproducible bit for bit from its seed, independent of thread count.

pub mod aggregate;
pub mod attack;
pub mod compress;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod vector;
pub mod verify;
