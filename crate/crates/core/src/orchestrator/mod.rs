//! Trial lifecycle: swap if needed, reset, plan, grasp, evaluate, record.
//!
//! The orchestrator talks to the rig and the arm only through action clients,
//! so the same control loop runs against an in-process rig or a TCP server.
//! Trials run strictly one after another and a trial's record is durable
//! before the next trial starts.

pub mod csv;
pub mod matrix;

use std::fmt;

use thiserror::Error;

use crate::datalog::{LogError, SessionWriter};
use crate::device::{DeviceState, Stage};
use crate::library::ObjectLibrary;
use crate::manipulator::{plan_grasp, GripperModel, PlanError, TRANSPORT_MM};
use crate::protocol::{
    ActionClient, ActionResult, ClientError, Detail, Goal, HomeTarget, OpCode, ResultBody, Status, Transport,
};
use crate::record::{Record, Value};
use crate::types::{trajectory_success, GripperSample, Pose2D, Pose6D, TrialRecord, TrialSpec, TrialStatus};

pub use self::csv::{load_trial_csv, read_trial_csv, write_trial_csv, CsvError};
pub use self::matrix::{generate_table_trials, MatrixError, MatrixRow, TrialMatrixConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialPhase {
    SwapIfNeeded,
    Reset,
    PlanGrasp,
    ExecuteGrasp,
    Evaluate,
    Record,
    Done,
    Aborted,
}

impl TrialPhase {
    /// The forward order; `Aborted` may follow any of these except `Done`.
    pub const ORDER: [TrialPhase; 7] = [
        TrialPhase::SwapIfNeeded,
        TrialPhase::Reset,
        TrialPhase::PlanGrasp,
        TrialPhase::ExecuteGrasp,
        TrialPhase::Evaluate,
        TrialPhase::Record,
        TrialPhase::Done,
    ];
}

impl fmt::Display for TrialPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A trace is legal when it is a prefix of [`TrialPhase::ORDER`], optionally
/// ending in `Aborted` if it has not reached `Done`.
pub fn is_legal_trace(trace: &[TrialPhase]) -> bool {
    let (body, aborted) = match trace.split_last() {
        Some((TrialPhase::Aborted, body)) => (body, true),
        _ => (trace, false),
    };
    body.len() <= TrialPhase::ORDER.len()
        && body.iter().zip(TrialPhase::ORDER).all(|(a, b)| *a == b)
        && !(aborted && body.last() == Some(&TrialPhase::Done))
}

#[derive(Debug, Error)]
pub enum TrialFault {
    #[error("device fault: {op} failed with {detail}")]
    Device { op: OpCode, detail: Detail },
    #[error("device link: {0}")]
    DeviceLink(ClientError),
    #[error("arm fault: {0}")]
    Arm(String),
    #[error("object `{0}` is neither on the platform nor in storage")]
    ObjectUnavailable(String),
    #[error("grasp planning: {0}")]
    Plan(#[from] PlanError),
    #[error("log fault: {0}")]
    Log(#[from] LogError),
}

impl TrialFault {
    /// Faults after which nothing more can be recorded.
    pub fn is_log_fault(&self) -> bool {
        matches!(self, TrialFault::Log(_))
    }
}

/// Everything observed while running one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub record: TrialRecord,
    pub trace: Vec<TrialPhase>,
    /// Motion goals issued, in order.
    pub goals: Vec<OpCode>,
    pub feedback: Vec<Stage>,
}

#[derive(Debug, Error)]
#[error("trial {} aborted: {fault}", .run.record.spec.trial_id)]
pub struct TrialAbort {
    pub fault: TrialFault,
    /// The aborted record, already written unless the fault is a log fault.
    pub run: TrialRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultPolicy {
    #[default]
    AbortOnFault,
    SkipOnFault,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchSummary {
    pub completed: usize,
    pub aborted: usize,
    pub success_count: usize,
    /// Trials never started because the batch stopped early.
    pub unrun: usize,
    pub elapsed_ms: u64,
    /// Why the batch stopped early.
    pub stopped: Option<String>,
    pub log_fault: bool,
}

/// Nominal camera frame geometry recorded in the camera channels.
const CAMERAS: [(&str, u64, u64); 3] = [("top_cam", 1280, 720), ("side_cam", 1280, 720), ("wrist_cam", 640, 480)];

pub struct Orchestrator<D, A> {
    device: ActionClient<D>,
    arm: ActionClient<A>,
    library: ObjectLibrary,
    gripper: GripperModel,
    batch_seed: u64,
    frames: u64,
}

struct Ctx {
    trace: Vec<TrialPhase>,
    goals: Vec<OpCode>,
    feedback: Vec<Stage>,
    start_ms: Option<u64>,
}

impl Ctx {
    fn enter(&mut self, p: TrialPhase) {
        self.trace.push(p);
    }
}

impl<D: Transport, A: Transport> Orchestrator<D, A> {
    pub fn new(
        device: ActionClient<D>,
        arm: ActionClient<A>,
        library: ObjectLibrary,
        gripper: GripperModel,
        batch_seed: u64,
    ) -> Self {
        Self { device, arm, library, gripper, batch_seed, frames: 0 }
    }

    pub fn batch_seed(&self) -> u64 {
        self.batch_seed
    }

    /// Seed of the reset noise for one trial.
    pub fn trial_seed(&self, trial_id: u32) -> u64 {
        self.batch_seed ^ trial_id as u64
    }

    pub fn device_client(&mut self) -> &mut ActionClient<D> {
        &mut self.device
    }

    fn device_goal(&mut self, ctx: &mut Ctx, goal: Goal) -> Result<ActionResult, TrialFault> {
        let op = goal.op();
        if op.is_motion() {
            ctx.goals.push(op);
        }
        let feedback = &mut ctx.feedback;
        let res = self.device.roundtrip(goal, |stage, _| feedback.push(stage)).map_err(TrialFault::DeviceLink)?;
        match res.status {
            Status::Success => Ok(res),
            Status::Fail(detail) => Err(TrialFault::Device { op, detail }),
        }
    }

    fn read_state(&mut self, ctx: &mut Ctx) -> Result<DeviceState, TrialFault> {
        match self.device_goal(ctx, Goal::ReadState)?.body {
            ResultBody::State(s) => {
                ctx.start_ms.get_or_insert(s.clock_ms);
                Ok(*s)
            }
            other => Err(TrialFault::DeviceLink(ClientError::Protocol(format!("ReadState answered with {other:?}")))),
        }
    }

    /// Runs one trial and writes its record to `log`, aborted or not.
    pub fn run_trial(&mut self, spec: &TrialSpec, log: &mut SessionWriter) -> Result<TrialRun, Box<TrialAbort>> {
        let mut ctx = Ctx { trace: Vec::new(), goals: Vec::new(), feedback: Vec::new(), start_ms: None };
        match self.trial_phases(spec, log, &mut ctx) {
            Ok(record) => Ok(TrialRun { record, trace: ctx.trace, goals: ctx.goals, feedback: ctx.feedback }),
            Err(fault) => {
                ctx.enter(TrialPhase::Aborted);
                let mut record = TrialRecord::aborted(spec.clone(), fault.to_string(), &log.header().session_id);
                // best effort: the device may be unreachable
                if let (Some(start), Ok(s)) = (ctx.start_ms, self.device.roundtrip(Goal::ReadState, |_, _| {})) {
                    if let ResultBody::State(s) = s.body {
                        record.wall_ticks = s.clock_ms.saturating_sub(start);
                    }
                }
                let fault = if fault.is_log_fault() {
                    fault
                } else {
                    match log.write_trial_record(&record) {
                        Ok(()) => fault,
                        Err(e) => TrialFault::Log(e),
                    }
                };
                Err(Box::new(TrialAbort {
                    fault,
                    run: TrialRun { record, trace: ctx.trace, goals: ctx.goals, feedback: ctx.feedback },
                }))
            }
        }
    }

    fn trial_phases(
        &mut self,
        spec: &TrialSpec,
        log: &mut SessionWriter,
        ctx: &mut Ctx,
    ) -> Result<TrialRecord, TrialFault> {
        ctx.enter(TrialPhase::SwapIfNeeded);
        let state = self.read_state(ctx)?;
        if state.object_on_platform.as_deref() != Some(spec.object_id.as_str()) {
            let slot =
                state.slot_of(&spec.object_id).ok_or_else(|| TrialFault::ObjectUnavailable(spec.object_id.clone()))?;
            if !state.upper.homed.all() {
                self.device_goal(ctx, Goal::Home(HomeTarget::Upper))?;
            }
            self.device_goal(ctx, Goal::Swap { slot: slot as u8 })?;
        }

        ctx.enter(TrialPhase::Reset);
        self.device_goal(
            ctx,
            Goal::LowerReset { target_deg: spec.object_angle, seed: self.trial_seed(spec.trial_id) },
        )?;
        let reset = self.read_state(ctx)?;
        let reset_pose = reset.object_pose;

        ctx.enter(TrialPhase::PlanGrasp);
        let obj =
            self.library.get(&spec.object_id).ok_or_else(|| TrialFault::ObjectUnavailable(spec.object_id.clone()))?;
        // the arm plans against the commanded pose, not the measured one
        let nominal = Pose2D::new(0.0, 0.0, spec.object_angle);
        let plan = plan_grasp(spec, obj, nominal, &self.gripper)?;

        ctx.enter(TrialPhase::ExecuteGrasp);
        ctx.goals.push(OpCode::Grasp);
        let feedback = &mut ctx.feedback;
        let res = self
            .arm
            .roundtrip(Goal::Grasp(plan), |stage, _| feedback.push(stage))
            .map_err(|e| TrialFault::Arm(e.to_string()))?;
        let trajectory = match (res.status, res.body) {
            (Status::Success, ResultBody::Grasp { trajectory, .. }) => trajectory,
            (Status::Fail(d), _) => return Err(TrialFault::Arm(format!("Grasp failed with {d}"))),
            (_, body) => return Err(TrialFault::Arm(format!("Grasp answered with {body:?}"))),
        };
        if trajectory.is_empty() {
            return Err(TrialFault::Arm("empty gripper trajectory".into()));
        }

        ctx.enter(TrialPhase::Evaluate);
        // the arm's own verdict is ignored
        let success = trajectory_success(&trajectory, self.gripper.min_read_closed);
        let after = self.read_state(ctx)?;
        let target = (reset_pose.x + TRANSPORT_MM, reset_pose.y);
        let offset = (after.object_pose.x - target.0).hypot(after.object_pose.y - target.1);
        let record = TrialRecord {
            spec: spec.clone(),
            status: TrialStatus::Completed,
            reset_pose,
            grasp_pose: plan.pose,
            gripper_trajectory: trajectory,
            success,
            transport_target_offset: offset,
            session_ref: log.header().session_id.clone(),
            wall_ticks: after.clock_ms - ctx.start_ms.unwrap_or(after.clock_ms),
        };

        ctx.enter(TrialPhase::Record);
        if spec.collect_data {
            self.record_channels(log, &record, reset.clock_ms, &after)?;
        }
        log.write_trial_record(&record)?;
        ctx.enter(TrialPhase::Done);
        Ok(record)
    }

    fn record_channels(
        &mut self,
        log: &mut SessionWriter,
        rec: &TrialRecord,
        reset_ms: u64,
        after: &DeviceState,
    ) -> Result<(), LogError> {
        let id = Value::U(rec.spec.trial_id as u64);
        let pose_rec = |p: &Pose2D| {
            Record::new()
                .with("trial", id.clone())
                .with("x", Value::F(p.x))
                .with("y", Value::F(p.y))
                .with("theta", Value::F(p.theta))
        };
        log.record_channel("object_pose", reset_ms, &pose_rec(&rec.reset_pose))?;

        let traj = &rec.gripper_trajectory;
        let mut prev: Option<&GripperSample> = None;
        for s in traj {
            let velocity = prev.map_or(0.0, |p| (s.opening - p.opening) / ((s.t_ms - p.t_ms) as f64 / 1000.0));
            log.record_channel(
                "gripper_state",
                s.t_ms,
                &Record::new()
                    .with("trial", id.clone())
                    .with("opening", Value::F(s.opening))
                    .with("velocity", Value::F(velocity)),
            )?;
            prev = Some(s);
        }

        let (t0, t1) = (traj[0].t_ms, traj[traj.len() - 1].t_ms);
        let g = rec.grasp_pose;
        let carried = Pose6D { x: g.x + TRANSPORT_MM, ..g };
        for (t, p) in [(t0, g), (t1, carried)] {
            log.record_channel(
                "arm_state",
                t,
                &Record::new().with("trial", id.clone()).with("pose", Value::FL(p.to_array().to_vec())),
            )?;
        }

        for s in traj {
            for (name, w, h) in CAMERAS {
                log.record_channel(
                    name,
                    s.t_ms,
                    &Record::new()
                        .with("trial", id.clone())
                        .with("frame", Value::U(self.frames))
                        .with("width", Value::U(w))
                        .with("height", Value::U(h)),
                )?;
            }
            self.frames += 1;
        }
        log.record_channel("object_pose", after.clock_ms, &pose_rec(&after.object_pose))?;
        Ok(())
    }

    /// Runs `specs` in order. `on_record` sees each record once it is durable.
    pub fn run_batch(
        &mut self,
        specs: &[TrialSpec],
        log: &mut SessionWriter,
        policy: FaultPolicy,
        mut on_record: impl FnMut(&TrialRecord),
    ) -> BatchSummary {
        let mut summary = BatchSummary::default();
        for (i, spec) in specs.iter().enumerate() {
            match self.run_trial(spec, log) {
                Ok(run) => {
                    summary.completed += 1;
                    summary.success_count += run.record.success as usize;
                    summary.elapsed_ms += run.record.wall_ticks;
                    on_record(&run.record);
                }
                Err(abort) => {
                    summary.aborted += 1;
                    summary.elapsed_ms += abort.run.record.wall_ticks;
                    let log_fault = abort.fault.is_log_fault();
                    if !log_fault {
                        on_record(&abort.run.record);
                    }
                    if log_fault || policy == FaultPolicy::AbortOnFault {
                        summary.unrun = specs.len() - i - 1;
                        summary.stopped = Some(abort.to_string());
                        summary.log_fault = log_fault;
                        break;
                    }
                }
            }
        }
        summary
    }
}

#[cfg(test)]
mod tests;
