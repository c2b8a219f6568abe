//! Software twin of a grasp reset rig.
//!
//! The crate models the whole trial loop of an automated grasp-testing cell:
//!
//! * [`types`] holds the shared domain model (poses, objects, trial specs and
//!   records) and the object compatibility checks.
//! * [`device`] simulates the reset hardware: centering cone, tether string,
//!   rotating platform and the overhead swap arm, advanced by a simulated clock.
//! * [`protocol`] is the framed binary link between the controller and the rig,
//!   the action goal/feedback/result lifecycle and the microcontroller register map.
//! * [`manipulator`] is a scripted parallel-jaw arm with a geometric closure oracle.
//! * [`rig`] serves device and arm actions over any [`protocol::Transport`].
//! * [`orchestrator`] loads or generates trial matrices and drives trials.
//! * [`datalog`] records sessions as append-only channel logs.
//! * [`analysis`] computes repeatability statistics, success tables and edge boundaries.
//! * [`sweep`] runs the data-parallel Monte Carlo and oracle sweeps.

pub mod analysis;
pub mod datalog;
pub mod device;
pub mod geometry;
pub mod library;
pub mod manipulator;
pub mod orchestrator;
pub mod protocol;
pub mod record;
pub mod rig;
pub mod sweep;
pub mod types;

/// Shipped object library (`objects.std`).
pub const STANDARD_OBJECTS: &str = include_str!("../data/objects.std");
/// Shipped trial matrix mirroring the published dataset layout (`dataset.cfg`).
pub const DATASET_MATRIX: &str = include_str!("../data/dataset.cfg");
/// Shipped device configuration with the default rates and initial loadout.
pub const DEFAULT_DEVICE_CONFIG: &str = include_str!("../data/device.cfg");
