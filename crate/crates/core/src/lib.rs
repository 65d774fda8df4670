//! Federated collaborative filtering for implicit feedback where clients
//! share only locally differentially private gradient reports.
//!
//! Clients keep their user vector on device, solve for it in closed form
//! against the broadcast item matrix, and upload `k` randomized `(cell, ±)`
//! reports of their item gradient per epoch. A simulated proxy strips and
//! shuffles the reports; the server turns the `±B` counts into an unbiased
//! mean-gradient estimate and updates the item matrix.
//!
//! Modules follow the pipeline:
//!
//! - [`data`]: ratings ingestion, binarization, filtering, subsets, splits
//! - [`mf`]: confidence-weighted loss, user solve, item gradients
//! - [`ldp`]: the per-cell randomized response and its wire format
//! - [`proxy`]: metadata stripping and shuffling
//! - [`server`]: aggregation, update rule, epoch loop, cost model
//! - [`eval`]: leave-one-out HR@K
//! - [`config`] and [`experiment`]: experiment files, sweeps, CSV output

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod ldp;
pub mod mf;
pub mod proxy;
pub mod rng;
pub mod server;

pub use error::{Error, Result};
