//! Grid-world UAV simulator with two cooperating tabular Q-learning agents.
//!
//! A strategic agent learns obstacle-free routes to a destination, an
//! adaptive agent learns where the cellular link stays above an SNR
//! threshold, and an arbiter merges their greedy proposals at flight time.
//!
//! - [`gridworld`]: voxel grid, obstacles, actions and transitions.
//! - [`radio`]: COST 231 Hata path loss, SNR and coverage maps.
//! - [`qcore`]: Q-tables, the update rule, ε-greedy selection, checkpoints.
//! - [`agents`]: the two training loops.
//! - [`arbiter`]: action arbitration and evaluation flights.
//! - [`harness`]: configuration, artifacts and metrics.

pub mod agents;
pub mod arbiter;
pub mod gridworld;
pub mod harness;
pub mod qcore;
pub mod radio;
pub mod streams;
