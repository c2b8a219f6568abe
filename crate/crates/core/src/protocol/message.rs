//! Action messages and their fixed-layout payloads. All multibyte fields are little-endian.

use std::fmt;

use crate::device::{AxisFlags, ConePhase, DeviceError, DeviceState, LowerState, Stage, UpperState};
use crate::geometry::Vec2;
use crate::manipulator::GraspPlan;
use crate::types::{GraspType, GripperSample, Pose2D, Pose6D};

pub const MSG_GOAL: u8 = 0x01;
pub const MSG_FEEDBACK: u8 = 0x02;
pub const MSG_RESULT: u8 = 0x03;
pub const MSG_CANCEL: u8 = 0x04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpCode {
    LowerReset,
    Swap,
    Home,
    Rotate,
    Estop,
    ReadState,
    /// Arm-side grasp and transport.
    Grasp,
}

impl OpCode {
    pub const ALL: &'static [OpCode] = &[
        OpCode::LowerReset,
        OpCode::Swap,
        OpCode::Home,
        OpCode::Rotate,
        OpCode::Estop,
        OpCode::ReadState,
        OpCode::Grasp,
    ];

    pub fn code(self) -> u8 {
        match self {
            OpCode::LowerReset => 0x01,
            OpCode::Swap => 0x02,
            OpCode::Home => 0x03,
            OpCode::Rotate => 0x04,
            OpCode::Estop => 0x05,
            OpCode::ReadState => 0x06,
            OpCode::Grasp => 0x10,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        OpCode::ALL.iter().copied().find(|o| o.code() == c)
    }

    /// Default time a client waits for the result.
    pub fn default_deadline_ms(self) -> u64 {
        match self {
            OpCode::LowerReset | OpCode::Swap => 120_000,
            _ => 30_000,
        }
    }

    /// Goals that move actuators.
    pub fn is_motion(self) -> bool {
        !matches!(self, OpCode::ReadState | OpCode::Estop)
    }
}

impl fmt::Display for OpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomeTarget {
    Platform,
    Upper,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Goal {
    LowerReset { target_deg: f64, seed: u64 },
    Swap { slot: u8 },
    Home(HomeTarget),
    Rotate { target_deg: f64 },
    Estop { engaged: bool },
    ReadState,
    Grasp(GraspPlan),
}

impl Goal {
    pub fn op(&self) -> OpCode {
        match self {
            Goal::LowerReset { .. } => OpCode::LowerReset,
            Goal::Swap { .. } => OpCode::Swap,
            Goal::Home(_) => OpCode::Home,
            Goal::Rotate { .. } => OpCode::Rotate,
            Goal::Estop { .. } => OpCode::Estop,
            Goal::ReadState => OpCode::ReadState,
            Goal::Grasp(_) => OpCode::Grasp,
        }
    }
}

/// Failure detail carried in a Result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detail {
    None,
    NotHomed,
    EstopEngaged,
    TetherLimit,
    ConeNotRaised,
    SequenceTimeout,
    SwapIncompatible,
    SlotEmpty,
    NoFreeSlot,
    Cancelled,
    Busy,
    ObjectNotSeated,
    NoObject,
    UnknownObject,
    InvalidSlot,
    Timeout,
    Unsupported,
    MagnetFault,
    UnsupportedCombination,
    Injected,
    InvalidArgument,
}

impl Detail {
    pub const ALL: &'static [Detail] = &[
        Detail::None,
        Detail::NotHomed,
        Detail::EstopEngaged,
        Detail::TetherLimit,
        Detail::ConeNotRaised,
        Detail::SequenceTimeout,
        Detail::SwapIncompatible,
        Detail::SlotEmpty,
        Detail::NoFreeSlot,
        Detail::Cancelled,
        Detail::Busy,
        Detail::ObjectNotSeated,
        Detail::NoObject,
        Detail::UnknownObject,
        Detail::InvalidSlot,
        Detail::Timeout,
        Detail::Unsupported,
        Detail::MagnetFault,
        Detail::UnsupportedCombination,
        Detail::Injected,
        Detail::InvalidArgument,
    ];

    pub fn code(self) -> u8 {
        Detail::ALL.iter().position(|d| *d == self).unwrap() as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Detail::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Detail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<&DeviceError> for Detail {
    fn from(e: &DeviceError) -> Self {
        match e {
            DeviceError::EstopEngaged => Detail::EstopEngaged,
            DeviceError::NotHomed => Detail::NotHomed,
            DeviceError::TetherLimit { .. } => Detail::TetherLimit,
            DeviceError::ConeNotRaised => Detail::ConeNotRaised,
            DeviceError::ObjectNotSeated => Detail::ObjectNotSeated,
            DeviceError::NoObject => Detail::NoObject,
            DeviceError::SequenceTimeout => Detail::SequenceTimeout,
            DeviceError::SwapIncompatible(_) => Detail::SwapIncompatible,
            DeviceError::SlotEmpty(_) => Detail::SlotEmpty,
            DeviceError::InvalidSlot(_) => Detail::InvalidSlot,
            DeviceError::NoFreeSlot => Detail::NoFreeSlot,
            DeviceError::UnknownObject(_) => Detail::UnknownObject,
            DeviceError::Busy => Detail::Busy,
            DeviceError::Cancelled => Detail::Cancelled,
            DeviceError::InvalidTick | DeviceError::InvalidTarget(_) => Detail::InvalidArgument,
            DeviceError::MagnetFault(_) => Detail::MagnetFault,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Fail(Detail),
}

impl Status {
    pub fn is_success(&self) -> bool {
        matches!(self, Status::Success)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResultBody {
    Empty,
    State(Box<DeviceState>),
    Grasp { reported_success: bool, trajectory: Vec<GripperSample> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionMessage {
    Goal { id: u32, goal: Goal },
    Feedback { id: u32, stage: Stage, clock_ms: u64 },
    Result { id: u32, op: OpCode, status: Status, body: ResultBody },
    Cancel { id: u32 },
}

impl ActionMessage {
    pub fn id(&self) -> u32 {
        match self {
            ActionMessage::Goal { id, .. }
            | ActionMessage::Feedback { id, .. }
            | ActionMessage::Result { id, .. }
            | ActionMessage::Cancel { id } => *id,
        }
    }

    pub fn msg_type(&self) -> u8 {
        match self {
            ActionMessage::Goal { .. } => MSG_GOAL,
            ActionMessage::Feedback { .. } => MSG_FEEDBACK,
            ActionMessage::Result { .. } => MSG_RESULT,
            ActionMessage::Cancel { .. } => MSG_CANCEL,
        }
    }

    pub(crate) fn encode_payload(&self, out: &mut Vec<u8>) {
        let mut w = Writer(out);
        w.u32(self.id());
        match self {
            ActionMessage::Goal { goal, .. } => {
                w.u8(goal.op().code());
                match goal {
                    Goal::LowerReset { target_deg, seed } => {
                        w.f64(*target_deg);
                        w.u64(*seed);
                    }
                    Goal::Swap { slot } => w.u8(*slot),
                    Goal::Home(t) => w.u8(match t {
                        HomeTarget::Platform => 0,
                        HomeTarget::Upper => 1,
                        HomeTarget::Both => 2,
                    }),
                    Goal::Rotate { target_deg } => w.f64(*target_deg),
                    Goal::Estop { engaged } => w.bool(*engaged),
                    Goal::ReadState => {}
                    Goal::Grasp(plan) => {
                        for v in plan.pose.to_array() {
                            w.f64(v);
                        }
                        w.f64(plan.closing_axis.x);
                        w.f64(plan.closing_axis.y);
                        w.u8(match plan.grasp_type {
                            GraspType::Top => 0,
                            GraspType::Side => 1,
                        });
                        w.f64(plan.approach_tilt);
                    }
                }
            }
            ActionMessage::Feedback { stage, clock_ms, .. } => {
                w.u8(stage.code());
                w.u64(*clock_ms);
            }
            ActionMessage::Result { op, status, body, .. } => {
                w.u8(op.code());
                match status {
                    Status::Success => {
                        w.u8(0);
                        w.u8(Detail::None.code());
                    }
                    Status::Fail(d) => {
                        w.u8(1);
                        w.u8(d.code());
                    }
                }
                match body {
                    ResultBody::Empty => w.u8(0),
                    ResultBody::State(s) => {
                        w.u8(1);
                        w.state(s);
                    }
                    ResultBody::Grasp { reported_success, trajectory } => {
                        w.u8(2);
                        w.bool(*reported_success);
                        w.u16(trajectory.len() as u16);
                        for s in trajectory {
                            w.u64(s.t_ms);
                            w.f64(s.opening);
                        }
                    }
                }
            }
            ActionMessage::Cancel { .. } => {}
        }
    }

    /// Parses a payload of a known message type.
    pub(crate) fn decode_payload(msg_type: u8, payload: &[u8]) -> Result<Self, &'static str> {
        let mut r = Reader { buf: payload, pos: 0 };
        let id = r.u32()?;
        let msg = match msg_type {
            MSG_GOAL => {
                let op = OpCode::from_code(r.u8()?).ok_or("unknown op code")?;
                let goal = match op {
                    OpCode::LowerReset => Goal::LowerReset { target_deg: r.f64()?, seed: r.u64()? },
                    OpCode::Swap => Goal::Swap { slot: r.u8()? },
                    OpCode::Home => Goal::Home(match r.u8()? {
                        0 => HomeTarget::Platform,
                        1 => HomeTarget::Upper,
                        2 => HomeTarget::Both,
                        _ => return Err("invalid home target"),
                    }),
                    OpCode::Rotate => Goal::Rotate { target_deg: r.f64()? },
                    OpCode::Estop => Goal::Estop { engaged: r.bool()? },
                    OpCode::ReadState => Goal::ReadState,
                    OpCode::Grasp => {
                        let mut p = [0.0; 6];
                        for v in &mut p {
                            *v = r.f64()?;
                        }
                        let closing_axis = Vec2::new(r.f64()?, r.f64()?);
                        let grasp_type = match r.u8()? {
                            0 => GraspType::Top,
                            1 => GraspType::Side,
                            _ => return Err("invalid grasp type"),
                        };
                        Goal::Grasp(GraspPlan {
                            pose: Pose6D::from_array(p),
                            closing_axis,
                            grasp_type,
                            approach_tilt: r.f64()?,
                        })
                    }
                };
                ActionMessage::Goal { id, goal }
            }
            MSG_FEEDBACK => ActionMessage::Feedback {
                id,
                stage: Stage::from_code(r.u8()?).ok_or("unknown stage code")?,
                clock_ms: r.u64()?,
            },
            MSG_RESULT => {
                let op = OpCode::from_code(r.u8()?).ok_or("unknown op code")?;
                let failed = r.bool()?;
                let detail = Detail::from_code(r.u8()?).ok_or("unknown detail code")?;
                let status = match (failed, detail) {
                    (false, Detail::None) => Status::Success,
                    (false, _) => return Err("success with failure detail"),
                    (true, d) => Status::Fail(d),
                };
                let body = match r.u8()? {
                    0 => ResultBody::Empty,
                    1 => ResultBody::State(Box::new(r.state()?)),
                    2 => {
                        let reported_success = r.bool()?;
                        let n = r.u16()? as usize;
                        let mut trajectory = Vec::with_capacity(n.min(64));
                        for _ in 0..n {
                            trajectory.push(GripperSample { t_ms: r.u64()?, opening: r.f64()? });
                        }
                        ResultBody::Grasp { reported_success, trajectory }
                    }
                    _ => return Err("unknown result body"),
                };
                ActionMessage::Result { id, op, status, body }
            }
            MSG_CANCEL => ActionMessage::Cancel { id },
            _ => return Err("unknown message type"),
        };
        if r.pos != payload.len() {
            return Err("trailing bytes in payload");
        }
        Ok(msg)
    }
}

struct Writer<'a>(&'a mut Vec<u8>);

impl Writer<'_> {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn bool(&mut self, v: bool) {
        self.0.push(v as u8);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        let b = s.as_bytes();
        let n = b.len().min(255);
        self.u8(n as u8);
        self.0.extend_from_slice(&b[..n]);
    }
    fn opt_str(&mut self, s: Option<&str>) {
        match s {
            Some(s) => {
                self.u8(1);
                self.str(s);
            }
            None => self.u8(0),
        }
    }
    fn state(&mut self, s: &DeviceState) {
        let l = &s.lower;
        self.u8(l.cone.code());
        self.f64(l.cone_height);
        self.f64(l.string_out);
        self.bool(l.string_home);
        self.f64(l.platform_angle);
        self.bool(l.platform_homed);
        self.bool(l.hall_triggered);
        self.i64(l.encoder_ticks);
        self.f64(l.platform_travel);
        let u = &s.upper;
        self.f64(u.x);
        self.f64(u.z);
        self.f64(u.yaw);
        self.bool(u.magnet_on);
        self.opt_str(u.holding.as_deref());
        self.u8(u.homed.bits());
        self.bool(s.estop);
        self.f64(s.object_pose.x);
        self.f64(s.object_pose.y);
        self.f64(s.object_pose.theta);
        self.opt_str(s.object_on_platform.as_deref());
        self.u8(s.storage_slots.len() as u8);
        for slot in &s.storage_slots {
            self.opt_str(slot.as_deref());
        }
        self.u64(s.clock_ms);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], &'static str> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("payload too short")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], &'static str> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, &'static str> {
        Ok(self.take(1)?[0])
    }
    fn bool(&mut self) -> Result<bool, &'static str> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err("invalid boolean"),
        }
    }
    fn u16(&mut self) -> Result<u16, &'static str> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, &'static str> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, &'static str> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn i64(&mut self) -> Result<i64, &'static str> {
        Ok(i64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, &'static str> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn str(&mut self) -> Result<String, &'static str> {
        let n = self.u8()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| "invalid utf-8")
    }
    fn opt_str(&mut self) -> Result<Option<String>, &'static str> {
        Ok(if self.bool()? { Some(self.str()?) } else { None })
    }
    fn state(&mut self) -> Result<DeviceState, &'static str> {
        let lower = LowerState {
            cone: ConePhase::from_code(self.u8()?).ok_or("invalid cone phase")?,
            cone_height: self.f64()?,
            string_out: self.f64()?,
            string_home: self.bool()?,
            platform_angle: self.f64()?,
            platform_homed: self.bool()?,
            hall_triggered: self.bool()?,
            encoder_ticks: self.i64()?,
            platform_travel: self.f64()?,
        };
        let upper = UpperState {
            x: self.f64()?,
            z: self.f64()?,
            yaw: self.f64()?,
            magnet_on: self.bool()?,
            holding: self.opt_str()?,
            homed: AxisFlags::from_bits(self.u8()?),
        };
        let estop = self.bool()?;
        let object_pose = Pose2D { x: self.f64()?, y: self.f64()?, theta: self.f64()? };
        let object_on_platform = self.opt_str()?;
        let n = self.u8()? as usize;
        let mut storage_slots = Vec::with_capacity(n);
        for _ in 0..n {
            storage_slots.push(self.opt_str()?);
        }
        Ok(DeviceState { lower, upper, estop, object_pose, object_on_platform, storage_slots, clock_ms: self.u64()? })
    }
}
