//! Analytics toolkit for drone and ground-based animal behavior studies:
//! ingestion, mini-scene extraction, timeline alignment, time budgets,
//! transition matrices, social-interaction overlap, agreement statistics,
//! regression, and a seeded herd simulator.

pub mod cli;
pub mod config;
pub mod ingest;
pub mod metrics;
pub mod miniscene;
pub mod model;
pub mod session;
pub mod simulator;
pub mod social;
pub mod stats;
pub mod svg;
pub mod timeline;
pub mod validate;

pub use model::*;
