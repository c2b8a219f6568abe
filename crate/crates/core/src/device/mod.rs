//! Simulated reset hardware.
//!
//! [`Device`] is a single-owner state machine. Commands validate their
//! preconditions synchronously and queue a job; [`Device::tick`] advances the
//! simulated clock and every in-progress motion. Sensor events (cone limit,
//! copper short, hall trigger, axis home switches) are stamped with the exact
//! simulated instant their geometric condition first holds, and time left over
//! in a tick after one stage completes flows into the next stage, so elapsed
//! simulated time does not depend on the tick size.

mod config;
mod state;

use std::collections::VecDeque;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use config::{ConfigError, DeviceConfig};
pub use state::{AxisFlags, ConePhase, DeviceState, LowerState, UpperState};

use crate::library::ObjectLibrary;
use crate::types::{angle_diff_deg, normalize_deg, validate_swap_compat, Pose2D};

const POS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("emergency stop engaged")]
    EstopEngaged,
    #[error("axis not homed")]
    NotHomed,
    #[error("object {distance:.1} mm from center is beyond the tether limit")]
    TetherLimit { distance: f64 },
    #[error("centering cone is not raised")]
    ConeNotRaised,
    #[error("object is not seated on the platform")]
    ObjectNotSeated,
    #[error("no object on the lower reset")]
    NoObject,
    #[error("stage exceeded its deadline")]
    SequenceTimeout,
    #[error("object `{0}` is not swap compatible")]
    SwapIncompatible(String),
    #[error("storage slot {0} is empty")]
    SlotEmpty(usize),
    #[error("storage slot {0} does not exist")]
    InvalidSlot(usize),
    #[error("no free storage slot")]
    NoFreeSlot,
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("device busy")]
    Busy,
    #[error("cancelled")]
    Cancelled,
    #[error("tick duration must be positive")]
    InvalidTick,
    #[error("invalid target {0}")]
    InvalidTarget(f64),
    #[error("magnet fault: {0}")]
    MagnetFault(&'static str),
}

/// Milestones reported as action feedback. Codes are part of the wire format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    ConeRaised,
    StringHome,
    ConeLowered,
    PlatformHomed,
    PlatformRotated,
    ObjectSeated,
    ArmLifted,
    ArmOverObject,
    ObjectDecoupled,
    ObjectStored,
    ObjectPicked,
    ObjectPlaced,
    ArmRetracted,
    UpperHomed,
    GripperClosed,
    ObjectLifted,
    Transported,
}

impl Stage {
    pub const ALL: &'static [Stage] = &[
        Stage::ConeRaised,
        Stage::StringHome,
        Stage::ConeLowered,
        Stage::PlatformHomed,
        Stage::PlatformRotated,
        Stage::ObjectSeated,
        Stage::ArmLifted,
        Stage::ArmOverObject,
        Stage::ObjectDecoupled,
        Stage::ObjectStored,
        Stage::ObjectPicked,
        Stage::ObjectPlaced,
        Stage::ArmRetracted,
        Stage::UpperHomed,
        Stage::GripperClosed,
        Stage::ObjectLifted,
        Stage::Transported,
    ];

    pub fn code(self) -> u8 {
        match self {
            Stage::ConeRaised => 0x01,
            Stage::StringHome => 0x02,
            Stage::ConeLowered => 0x03,
            Stage::PlatformHomed => 0x04,
            Stage::PlatformRotated => 0x05,
            Stage::ObjectSeated => 0x06,
            Stage::ArmLifted => 0x07,
            Stage::ArmOverObject => 0x08,
            Stage::ObjectDecoupled => 0x09,
            Stage::ObjectStored => 0x0A,
            Stage::ObjectPicked => 0x0B,
            Stage::ObjectPlaced => 0x0C,
            Stage::ArmRetracted => 0x0D,
            Stage::UpperHomed => 0x0E,
            Stage::GripperClosed => 0x20,
            Stage::ObjectLifted => 0x21,
            Stage::Transported => 0x22,
        }
    }

    pub fn from_code(c: u8) -> Option<Stage> {
        Stage::ALL.iter().copied().find(|s| s.code() == c)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobKind {
    LowerReset,
    Swap,
    HomePlatform,
    HomeUpper,
    Rotate,
    Retract,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmAxis {
    X,
    Z,
    Yaw,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceEvent {
    ConeLimit { at_ms: f64 },
    ConeDown { at_ms: f64 },
    CopperShort { at_ms: f64 },
    HallTriggered { at_ms: f64 },
    AxisHomed { axis: ArmAxis, at_ms: f64 },
    StageCompleted { stage: Stage, at_ms: f64 },
    JobFinished { kind: JobKind, result: Result<(), DeviceError>, at_ms: f64 },
}

#[derive(Debug, Clone)]
enum Step {
    Cone { raise: bool },
    Retract,
    HomePlatform,
    Rotate { ticks: i64 },
    Arm { axis: ArmAxis, target: f64 },
    HomeAxis(ArmAxis),
    Magnet { on: bool },
    Milestone(Stage),
    Seat { angle: f64 },
}

enum Progress {
    Done(f64),
    Running,
}

struct Job {
    kind: JobKind,
    steps: VecDeque<Step>,
    started: bool,
    elapsed: f64,
    rng: ChaCha8Rng,
}

impl Job {
    fn new(kind: JobKind, steps: Vec<Step>, seed: u64) -> Self {
        Self { kind, steps: steps.into(), started: false, elapsed: 0.0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

enum ArmSite {
    Platform,
    Slot(usize),
}

/// Quantizes an angle to encoder ticks, ties to even.
pub fn quantize_ticks(angle_deg: f64, deg_per_tick: f64) -> i64 {
    (normalize_deg(angle_deg) / deg_per_tick).round_ties_even() as i64
}

pub struct Device {
    cfg: DeviceConfig,
    library: ObjectLibrary,
    state: DeviceState,
    job: Option<Job>,
    last_result: Option<(JobKind, Result<(), DeviceError>)>,
}

impl fmt::Debug for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Device").field("state", &self.state).field("job", &self.job.as_ref().map(|j| j.kind)).finish()
    }
}

impl Device {
    pub fn new(cfg: DeviceConfig, library: ObjectLibrary) -> Result<Self, ConfigError> {
        cfg.validate()?;
        for id in cfg.initial_platform.iter().chain(cfg.initial_slots.iter().flatten()) {
            if !library.contains(id) {
                return Err(ConfigError::Invalid(format!("loadout references unknown object `{id}`")));
            }
        }
        let mut slots = cfg.initial_slots.clone();
        slots.resize(cfg.storage_slots, None);
        let angle = normalize_deg(cfg.platform_start_deg);
        let state = DeviceState {
            lower: LowerState {
                cone: ConePhase::Lowered,
                cone_height: 0.0,
                string_out: 0.0,
                string_home: true,
                platform_angle: angle,
                platform_homed: false,
                hall_triggered: angle == 0.0,
                encoder_ticks: 0,
                platform_travel: 0.0,
            },
            upper: UpperState {
                x: cfg.arm_start[0],
                z: cfg.arm_start[1],
                yaw: cfg.arm_start[2],
                magnet_on: false,
                holding: None,
                homed: AxisFlags::default(),
            },
            estop: false,
            object_pose: Pose2D::new(0.0, 0.0, angle),
            object_on_platform: cfg.initial_platform.clone(),
            storage_slots: slots,
            clock_ms: 0,
        };
        Ok(Self { cfg, library, state, job: None, last_result: None })
    }

    pub fn with_defaults() -> Self {
        Self::new(DeviceConfig::default(), ObjectLibrary::standard()).expect("default config is valid")
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.cfg
    }

    pub fn library(&self) -> &ObjectLibrary {
        &self.library
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    /// Immutable snapshot; never waits on motion.
    pub fn read_state(&self) -> DeviceState {
        self.state.clone()
    }

    pub fn is_busy(&self) -> bool {
        self.job.is_some()
    }

    pub fn current_job(&self) -> Option<JobKind> {
        self.job.as_ref().map(|j| j.kind)
    }

    pub fn last_result(&self) -> Option<&(JobKind, Result<(), DeviceError>)> {
        self.last_result.as_ref()
    }

    fn ensure_can_move(&self) -> Result<(), DeviceError> {
        if self.state.estop {
            return Err(DeviceError::EstopEngaged);
        }
        if self.job.is_some() {
            return Err(DeviceError::Busy);
        }
        Ok(())
    }

    fn object_seated(&self) -> bool {
        self.state.lower.cone == ConePhase::Lowered && self.state.object_on_platform.is_some()
    }

    fn check_retract(&self) -> Result<(), DeviceError> {
        if self.state.object_on_platform.is_none() {
            return Err(DeviceError::NoObject);
        }
        if self.state.lower.cone != ConePhase::Raised {
            return Err(DeviceError::ConeNotRaised);
        }
        let distance = self.state.object_distance();
        if distance > self.cfg.tether_limit_mm {
            return Err(DeviceError::TetherLimit { distance });
        }
        Ok(())
    }

    fn start(&mut self, kind: JobKind, steps: Vec<Step>, seed: u64) {
        self.job = Some(Job::new(kind, steps, seed));
    }

    /// Rotates until the hall sensor fires; that position becomes 0°.
    pub fn home_platform(&mut self) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        self.start(JobKind::HomePlatform, vec![Step::HomePlatform, Step::Milestone(Stage::PlatformHomed)], 0);
        Ok(())
    }

    /// Drives z, yaw, then x onto their home switches.
    pub fn home_upper(&mut self) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        self.start(
            JobKind::HomeUpper,
            vec![
                Step::HomeAxis(ArmAxis::Z),
                Step::HomeAxis(ArmAxis::Yaw),
                Step::HomeAxis(ArmAxis::X),
                Step::Milestone(Stage::UpperHomed),
            ],
            0,
        );
        Ok(())
    }

    /// Rotates the platform to `target` quantized to the nearest encoder tick.
    pub fn rotate_platform(&mut self, target: f64) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        if !target.is_finite() {
            return Err(DeviceError::InvalidTarget(target));
        }
        if !self.state.lower.platform_homed {
            return Err(DeviceError::NotHomed);
        }
        if self.state.lower.cone != ConePhase::Lowered {
            return Err(DeviceError::ObjectNotSeated);
        }
        let ticks = quantize_ticks(target, self.cfg.encoder_deg_per_tick);
        self.start(JobKind::Rotate, vec![Step::Rotate { ticks }, Step::Milestone(Stage::PlatformRotated)], 0);
        Ok(())
    }

    /// Winds the string in until the insert shorts the copper plates.
    pub fn retract_string(&mut self) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        self.check_retract()?;
        self.start(JobKind::Retract, vec![Step::Retract, Step::Milestone(Stage::StringHome)], 0);
        Ok(())
    }

    /// Full lower reset: raise cone, retract, release and lower, home if
    /// needed, rotate to `target`, then seat with seeded placement noise.
    pub fn lower_reset(&mut self, target: f64, seed: u64) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        if !target.is_finite() {
            return Err(DeviceError::InvalidTarget(target));
        }
        if self.state.object_on_platform.is_none() {
            return Err(DeviceError::NoObject);
        }
        let ticks = quantize_ticks(target, self.cfg.encoder_deg_per_tick);
        let mut steps = Vec::new();
        if self.state.lower.cone != ConePhase::Raised {
            steps.push(Step::Cone { raise: true });
        }
        steps.extend([
            Step::Milestone(Stage::ConeRaised),
            Step::Retract,
            Step::Milestone(Stage::StringHome),
            Step::Cone { raise: false },
            Step::Milestone(Stage::ConeLowered),
        ]);
        if !self.state.lower.platform_homed {
            steps.extend([Step::HomePlatform, Step::Milestone(Stage::PlatformHomed)]);
        }
        steps.extend([
            Step::Rotate { ticks },
            Step::Milestone(Stage::PlatformRotated),
            Step::Seat { angle: ticks as f64 * self.cfg.encoder_deg_per_tick },
            Step::Milestone(Stage::ObjectSeated),
        ]);
        self.start(JobKind::LowerReset, steps, seed);
        Ok(())
    }

    /// Exchanges the platform object with the one stored in `slot`.
    pub fn swap_object(&mut self, slot: usize) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        if !self.state.upper.homed.all() {
            return Err(DeviceError::NotHomed);
        }
        let incoming = match self.state.storage_slots.get(slot) {
            None => return Err(DeviceError::InvalidSlot(slot)),
            Some(None) => return Err(DeviceError::SlotEmpty(slot)),
            Some(Some(id)) => id.clone(),
        };
        self.ensure_swappable(&incoming)?;
        let outgoing = self.state.object_on_platform.clone();
        let free = match &outgoing {
            Some(id) => {
                self.ensure_swappable(id)?;
                let free = self
                    .state
                    .storage_slots
                    .iter()
                    .enumerate()
                    .position(|(i, s)| i != slot && s.is_none())
                    .ok_or(DeviceError::NoFreeSlot)?;
                Some(free)
            }
            None => None,
        };
        if self.state.upper.holding.is_some() {
            return Err(DeviceError::MagnetFault("arm already holding an object"));
        }

        let pick = self.cfg.pick_depth_mm;
        let platform_x = self.cfg.platform_x_mm;
        let mut steps = Vec::new();
        if outgoing.is_some() {
            if self.state.lower.cone != ConePhase::Raised {
                steps.push(Step::Cone { raise: true });
            }
            steps.extend([Step::Milestone(Stage::ConeRaised), Step::Retract, Step::Milestone(Stage::StringHome)]);
        }
        steps.extend([Step::Arm { axis: ArmAxis::Z, target: 0.0 }, Step::Milestone(Stage::ArmLifted)]);
        if let Some(free) = free {
            steps.extend([
                Step::Arm { axis: ArmAxis::Yaw, target: 90.0 },
                Step::Arm { axis: ArmAxis::X, target: platform_x },
                Step::Milestone(Stage::ArmOverObject),
                Step::Arm { axis: ArmAxis::Z, target: pick },
                Step::Magnet { on: true },
                Step::Arm { axis: ArmAxis::Z, target: 0.0 },
                Step::Milestone(Stage::ObjectDecoupled),
                Step::Arm { axis: ArmAxis::Yaw, target: 0.0 },
                Step::Arm { axis: ArmAxis::X, target: self.cfg.slot_x(free) },
                Step::Arm { axis: ArmAxis::Z, target: pick },
                Step::Magnet { on: false },
                Step::Arm { axis: ArmAxis::Z, target: 0.0 },
                Step::Milestone(Stage::ObjectStored),
            ]);
        }
        steps.extend([
            Step::Arm { axis: ArmAxis::Yaw, target: 0.0 },
            Step::Arm { axis: ArmAxis::X, target: self.cfg.slot_x(slot) },
            Step::Arm { axis: ArmAxis::Z, target: pick },
            Step::Magnet { on: true },
            Step::Arm { axis: ArmAxis::Z, target: 0.0 },
            Step::Milestone(Stage::ObjectPicked),
            Step::Arm { axis: ArmAxis::Yaw, target: 90.0 },
            Step::Arm { axis: ArmAxis::X, target: platform_x },
            Step::Arm { axis: ArmAxis::Z, target: pick },
            Step::Magnet { on: false },
            Step::Arm { axis: ArmAxis::Z, target: 0.0 },
            Step::Milestone(Stage::ObjectPlaced),
            Step::Arm { axis: ArmAxis::Yaw, target: 0.0 },
            Step::Arm { axis: ArmAxis::X, target: 0.0 },
            Step::Milestone(Stage::ArmRetracted),
        ]);
        self.start(JobKind::Swap, steps, 0);
        Ok(())
    }

    fn ensure_swappable(&self, id: &str) -> Result<(), DeviceError> {
        let obj = self.library.get(id).ok_or_else(|| DeviceError::UnknownObject(id.to_string()))?;
        if validate_swap_compat(obj).is_ok() {
            Ok(())
        } else {
            Err(DeviceError::SwapIncompatible(id.to_string()))
        }
    }

    /// Engaging freezes every actuator and fails the running job; releasing
    /// re-enables motion but clears all homed flags.
    pub fn set_estop(&mut self, engaged: bool) -> Vec<DeviceEvent> {
        let mut events = Vec::new();
        if engaged && !self.state.estop {
            self.state.estop = true;
            if let Some(job) = self.job.take() {
                let at = self.state.clock_ms as f64;
                self.finish(job.kind, Err(DeviceError::EstopEngaged), at, &mut events);
            }
        } else if !engaged && self.state.estop {
            self.state.estop = false;
            self.state.lower.platform_homed = false;
            self.state.upper.homed = AxisFlags::default();
        }
        events
    }

    /// Stops the running job where it is.
    pub fn abort(&mut self) -> Option<DeviceEvent> {
        let job = self.job.take()?;
        let mut events = Vec::new();
        let at = self.state.clock_ms as f64;
        self.finish(job.kind, Err(DeviceError::Cancelled), at, &mut events);
        events.pop()
    }

    /// External displacement of the tethered object (the arm moving it away).
    pub fn displace_object(&mut self, pose: Pose2D) -> Result<(), DeviceError> {
        if self.state.object_on_platform.is_none() {
            return Err(DeviceError::NoObject);
        }
        self.state.object_pose = pose;
        let d = self.state.object_distance();
        self.state.lower.string_out = d;
        self.state.lower.string_home = d == 0.0;
        Ok(())
    }

    /// Single-actuator cone command (register interface).
    pub fn command_cone(&mut self, raise: bool) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        self.start(JobKind::Manual, vec![Step::Cone { raise }], 0);
        Ok(())
    }

    /// Single-actuator string command (register interface).
    pub fn command_retract(&mut self) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        self.check_retract()?;
        self.start(JobKind::Manual, vec![Step::Retract], 0);
        Ok(())
    }

    /// Single-axis move of the swap arm (register interface).
    pub fn command_axis(&mut self, axis: ArmAxis, target: f64) -> Result<(), DeviceError> {
        self.ensure_can_move()?;
        let homed = self.state.upper.homed;
        let ok = match axis {
            ArmAxis::X => homed.x,
            ArmAxis::Z => homed.z,
            ArmAxis::Yaw => homed.yaw,
        };
        if !ok {
            return Err(DeviceError::NotHomed);
        }
        if !target.is_finite() || target < 0.0 {
            return Err(DeviceError::InvalidTarget(target));
        }
        self.start(JobKind::Manual, vec![Step::Arm { axis, target }], 0);
        Ok(())
    }

    /// Switches the electromagnet immediately.
    pub fn command_magnet(&mut self, on: bool) -> Result<(), DeviceError> {
        if self.state.estop {
            return Err(DeviceError::EstopEngaged);
        }
        self.apply_magnet(on)
    }

    /// Advances the simulated clock by `dt` milliseconds.
    pub fn tick(&mut self, dt: u64) -> Result<Vec<DeviceEvent>, DeviceError> {
        if dt == 0 {
            return Err(DeviceError::InvalidTick);
        }
        let start = self.state.clock_ms as f64;
        self.state.clock_ms += dt;
        let mut events = Vec::new();
        if self.state.estop {
            return Ok(events);
        }
        let end = start + dt as f64;
        let deadline = self.cfg.stage_deadline_ms as f64;
        let mut t = start;
        while let Some(mut job) = self.job.take() {
            let Some(step) = job.steps.pop_front() else {
                self.finish(job.kind, Ok(()), t, &mut events);
                break;
            };
            if !job.started {
                if let Err(e) = self.begin_step(&step) {
                    self.finish(job.kind, Err(e), t, &mut events);
                    break;
                }
                job.started = true;
                job.elapsed = 0.0;
            }
            let budget = (end - t).max(0.0);
            match self.advance(&step, budget, t, &mut events, &mut job.rng) {
                Ok(Progress::Done(used)) => {
                    t += used;
                    job.elapsed += used;
                    if job.elapsed > deadline {
                        self.finish(job.kind, Err(DeviceError::SequenceTimeout), t, &mut events);
                        break;
                    }
                    job.started = false;
                    self.job = Some(job);
                }
                Ok(Progress::Running) => {
                    job.elapsed += budget;
                    if job.elapsed > deadline {
                        self.finish(job.kind, Err(DeviceError::SequenceTimeout), end, &mut events);
                        break;
                    }
                    job.steps.push_front(step);
                    self.job = Some(job);
                    break;
                }
                Err(e) => {
                    self.finish(job.kind, Err(e), t, &mut events);
                    break;
                }
            }
        }
        Ok(events)
    }

    /// Ticks at the configured step until the current job ends.
    pub fn run_until_idle(&mut self) -> Result<Vec<DeviceEvent>, DeviceError> {
        let mut events = Vec::new();
        while self.job.is_some() {
            events.extend(self.tick(self.cfg.tick_ms)?);
        }
        for e in &events {
            if let DeviceEvent::JobFinished { result: Err(err), .. } = e {
                return Err(err.clone());
            }
        }
        Ok(events)
    }

    fn finish(&mut self, kind: JobKind, result: Result<(), DeviceError>, at_ms: f64, events: &mut Vec<DeviceEvent>) {
        self.job = None;
        self.last_result = Some((kind, result.clone()));
        events.push(DeviceEvent::JobFinished { kind, result, at_ms });
    }

    fn begin_step(&mut self, step: &Step) -> Result<(), DeviceError> {
        match step {
            Step::Retract => self.check_retract(),
            Step::Rotate { .. } => {
                if !self.state.lower.platform_homed {
                    Err(DeviceError::NotHomed)
                } else if self.state.lower.cone != ConePhase::Lowered {
                    Err(DeviceError::ObjectNotSeated)
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn turn_platform(&mut self, delta: f64) {
        let seated = self.object_seated();
        let lower = &mut self.state.lower;
        lower.platform_angle = normalize_deg(lower.platform_angle + delta);
        lower.platform_travel += delta.abs();
        lower.encoder_ticks = (lower.platform_angle / self.cfg.encoder_deg_per_tick).round() as i64;
        lower.hall_triggered = lower.platform_angle == 0.0;
        if seated {
            let p = self.state.object_pose;
            self.state.object_pose = Pose2D::new(p.x, p.y, p.theta + delta);
        }
    }

    fn advance(
        &mut self,
        step: &Step,
        budget: f64,
        t: f64,
        events: &mut Vec<DeviceEvent>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Progress, DeviceError> {
        match *step {
            Step::Cone { raise } => {
                let rate = self.cfg.cone_rate_mm_s / 1000.0;
                let target = if raise { self.cfg.cone_stroke_mm } else { 0.0 };
                let lower = &mut self.state.lower;
                let need = (target - lower.cone_height).abs() / rate;
                if need <= budget {
                    lower.cone_height = target;
                    if raise {
                        lower.cone = ConePhase::Raised;
                        events.push(DeviceEvent::ConeLimit { at_ms: t + need });
                    } else {
                        lower.cone = ConePhase::Lowered;
                        events.push(DeviceEvent::ConeDown { at_ms: t + need });
                    }
                    Ok(Progress::Done(need))
                } else {
                    let dir = if raise { 1.0 } else { -1.0 };
                    lower.cone_height += dir * rate * budget;
                    lower.cone = if raise { ConePhase::Raising } else { ConePhase::Lowering };
                    Ok(Progress::Running)
                }
            }
            Step::Retract => {
                let rate = self.cfg.winch_rate_mm_s / 1000.0;
                let d = self.state.object_distance();
                let need = d / rate;
                if need <= budget {
                    let theta = self.state.object_pose.theta;
                    self.state.object_pose = Pose2D::new(0.0, 0.0, theta);
                    self.state.lower.string_out = 0.0;
                    if !self.state.lower.string_home {
                        self.state.lower.string_home = true;
                        events.push(DeviceEvent::CopperShort { at_ms: t + need });
                    }
                    Ok(Progress::Done(need))
                } else {
                    let k = (d - rate * budget) / d;
                    let p = self.state.object_pose;
                    self.state.object_pose = Pose2D::new(p.x * k, p.y * k, p.theta);
                    self.state.lower.string_out = d * k;
                    self.state.lower.string_home = false;
                    Ok(Progress::Running)
                }
            }
            Step::HomePlatform => {
                let rate = self.cfg.platform_rate_deg_s / 1000.0;
                let angle = self.state.lower.platform_angle;
                let remaining = if angle == 0.0 { 0.0 } else { 360.0 - angle };
                let need = remaining / rate;
                if need <= budget {
                    self.turn_platform(remaining);
                    let lower = &mut self.state.lower;
                    lower.platform_angle = 0.0;
                    lower.encoder_ticks = 0;
                    lower.hall_triggered = true;
                    lower.platform_homed = true;
                    events.push(DeviceEvent::HallTriggered { at_ms: t + need });
                    Ok(Progress::Done(need))
                } else {
                    self.turn_platform(rate * budget);
                    Ok(Progress::Running)
                }
            }
            Step::Rotate { ticks } => {
                let rate = self.cfg.platform_rate_deg_s / 1000.0;
                let target = normalize_deg(ticks as f64 * self.cfg.encoder_deg_per_tick);
                let delta = angle_diff_deg(target, self.state.lower.platform_angle);
                let need = delta.abs() / rate;
                if need <= budget {
                    self.turn_platform(delta);
                    let lower = &mut self.state.lower;
                    lower.platform_angle = target;
                    lower.encoder_ticks = ticks.rem_euclid(self.cfg.ticks_per_rev());
                    lower.hall_triggered = target == 0.0;
                    Ok(Progress::Done(need))
                } else {
                    self.turn_platform(delta.signum() * rate * budget);
                    Ok(Progress::Running)
                }
            }
            Step::Arm { axis, target } => Ok(self.move_axis(axis, target, budget)),
            Step::HomeAxis(axis) => match self.move_axis(axis, 0.0, budget) {
                Progress::Done(used) => {
                    let homed = &mut self.state.upper.homed;
                    match axis {
                        ArmAxis::X => homed.x = true,
                        ArmAxis::Z => homed.z = true,
                        ArmAxis::Yaw => homed.yaw = true,
                    }
                    events.push(DeviceEvent::AxisHomed { axis, at_ms: t + used });
                    Ok(Progress::Done(used))
                }
                running => Ok(running),
            },
            Step::Magnet { on } => {
                self.apply_magnet(on)?;
                Ok(Progress::Done(0.0))
            }
            Step::Milestone(stage) => {
                events.push(DeviceEvent::StageCompleted { stage, at_ms: t });
                Ok(Progress::Done(0.0))
            }
            Step::Seat { angle } => {
                let ex = sample(rng, self.cfg.sigma_xy_mm);
                let ey = sample(rng, self.cfg.sigma_xy_mm);
                let et = sample(rng, self.cfg.sigma_theta_deg);
                self.state.object_pose = Pose2D::new(ex, ey, angle + et);
                Ok(Progress::Done(0.0))
            }
        }
    }

    fn move_axis(&mut self, axis: ArmAxis, target: f64, budget: f64) -> Progress {
        let rate = match axis {
            ArmAxis::Yaw => self.cfg.arm_yaw_rate_deg_s,
            _ => self.cfg.arm_linear_rate_mm_s,
        } / 1000.0;
        let up = &mut self.state.upper;
        let pos = match axis {
            ArmAxis::X => &mut up.x,
            ArmAxis::Z => &mut up.z,
            ArmAxis::Yaw => &mut up.yaw,
        };
        let need = (target - *pos).abs() / rate;
        if need <= budget {
            *pos = target;
            Progress::Done(need)
        } else {
            *pos += (target - *pos).signum() * rate * budget;
            Progress::Running
        }
    }

    fn arm_site(&self) -> Option<ArmSite> {
        let up = &self.state.upper;
        if (up.z - self.cfg.pick_depth_mm).abs() > POS_TOL {
            return None;
        }
        if (up.yaw - 90.0).abs() <= POS_TOL && (up.x - self.cfg.platform_x_mm).abs() <= POS_TOL {
            return Some(ArmSite::Platform);
        }
        if up.yaw.abs() <= POS_TOL {
            return (0..self.state.storage_slots.len())
                .find(|&i| (up.x - self.cfg.slot_x(i)).abs() <= POS_TOL)
                .map(ArmSite::Slot);
        }
        None
    }

    fn apply_magnet(&mut self, on: bool) -> Result<(), DeviceError> {
        let site = self.arm_site();
        if on {
            if self.state.upper.magnet_on {
                return Ok(());
            }
            if self.state.upper.holding.is_none() {
                match site {
                    Some(ArmSite::Platform) if self.state.object_on_platform.is_some() => {
                        let lower = &self.state.lower;
                        if !(lower.string_home && lower.cone == ConePhase::Raised) {
                            return Err(DeviceError::MagnetFault("insert not fixed on the cone"));
                        }
                        self.state.upper.holding = self.state.object_on_platform.take();
                    }
                    Some(ArmSite::Slot(i)) => {
                        self.state.upper.holding = self.state.storage_slots[i].take();
                    }
                    _ => {}
                }
            }
            self.state.upper.magnet_on = true;
            return Ok(());
        }
        if let Some(id) = self.state.upper.holding.clone() {
            match site {
                Some(ArmSite::Platform) if self.state.object_on_platform.is_none() => {
                    let angle = self.state.lower.platform_angle;
                    self.state.object_on_platform = Some(id);
                    self.state.object_pose = Pose2D::new(0.0, 0.0, angle);
                    self.state.lower.string_out = 0.0;
                    // the hall datum belongs to the object's magnet
                    self.state.lower.platform_homed = false;
                }
                Some(ArmSite::Slot(i)) if self.state.storage_slots[i].is_none() => {
                    self.state.storage_slots[i] = Some(id);
                }
                _ => return Err(DeviceError::MagnetFault("no free place under the arm")),
            }
            self.state.upper.holding = None;
        }
        self.state.upper.magnet_on = false;
        Ok(())
    }
}

fn sample(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
}

#[cfg(test)]
mod tests;
