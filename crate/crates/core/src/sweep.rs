//! Batch simulations that fan out over independent samples.
//!
//! Every sample owns its seed, so results are identical whether the work runs
//! on the rayon pool or on the calling thread. Without the `parallel` feature
//! [`Execution::Parallel`] quietly runs sequentially.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::device::{ConfigError, Device, DeviceConfig, DeviceError};
use crate::library::ObjectLibrary;
use crate::manipulator::{execute_grasp_and_transport, plan_grasp, GripperModel, PlanError};
use crate::orchestrator::{MatrixError, TrialMatrixConfig};
use crate::types::{GraspType, PerturbAxis, Pose2D, TrialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether `Parallel` actually uses worker threads in this build.
    pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");
}

/// Order-preserving map over `items`.
pub fn par_map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Runs `n` independent lower resets to `target_deg` and returns the seated poses.
/// Sample `i` uses seed `seed ^ i`.
pub fn reset_accuracy(
    cfg: &DeviceConfig,
    library: &ObjectLibrary,
    target_deg: f64,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Pose2D>, SweepError> {
    Device::new(cfg.clone(), library.clone())?;
    let idx: Vec<u64> = (0..n as u64).collect();
    par_map(&idx, exec, |&i| {
        let mut d = Device::new(cfg.clone(), library.clone())?;
        d.lower_reset(target_deg, seed ^ i)?;
        d.run_until_idle()?;
        Ok(d.state().object_pose)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomingOutcome {
    pub start_deg: f64,
    pub final_deg: f64,
    pub travel_deg: f64,
}

/// Homes the platform from `n` uniformly random starting angles.
pub fn homing_sweep(
    cfg: &DeviceConfig,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<HomingOutcome>, SweepError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..360.0)).collect();
    par_map(&starts, exec, |&start_deg| {
        let cfg = DeviceConfig { platform_start_deg: start_deg, ..cfg.clone() };
        let mut d = Device::new(cfg, ObjectLibrary::standard())?;
        d.home_platform()?;
        d.run_until_idle()?;
        let lower = &d.state().lower;
        Ok(HomingOutcome { start_deg, final_deg: lower.platform_angle, travel_deg: lower.platform_travel })
    })
    .into_iter()
    .collect()
}

/// One (object, angle, axis, grasp) cell swept across its perturbation values.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSweep {
    pub object_id: String,
    pub object_angle: f64,
    pub grasp_type: GraspType,
    pub perturb_axis: PerturbAxis,
    pub values: Vec<f64>,
    pub success: Vec<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("trial {id}: {source}")]
    Plan { id: u32, source: PlanError },
}

/// Grasp outcome of every matrix cell with the object exactly at its commanded pose.
pub fn oracle_sweep(
    cfg: &TrialMatrixConfig,
    library: &ObjectLibrary,
    gripper: &GripperModel,
    exec: Execution,
) -> Result<Vec<CellSweep>, SweepError> {
    cfg.check_objects(library)?;
    let specs = crate::orchestrator::generate_table_trials(cfg)?;
    let n = cfg.samples_per_config;
    let cells: Vec<&[TrialSpec]> = specs.chunks(n).collect();
    par_map(&cells, exec, |cell| {
        let first = &cell[0];
        let obj = library.get(&first.object_id).expect("checked above");
        let mut success = Vec::with_capacity(cell.len());
        for s in cell.iter() {
            let pose = Pose2D::new(0.0, 0.0, s.object_angle);
            let plan =
                plan_grasp(s, obj, pose, gripper).map_err(|source| SweepError::Plan { id: s.trial_id, source })?;
            success.push(execute_grasp_and_transport(&plan, obj, pose, gripper, 0).success);
        }
        Ok(CellSweep {
            object_id: first.object_id.clone(),
            object_angle: first.object_angle,
            grasp_type: first.grasp_type,
            perturb_axis: first.perturb_axis,
            values: cell.iter().map(|s| s.perturb_value).collect(),
            success,
        })
    })
    .into_iter()
    .collect()
}
