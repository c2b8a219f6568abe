//! Action server hosting the simulated rig and the scripted arm.
//!
//! Any number of connections may share one [`Rig`]; each is served on its own
//! thread. A running device job is ticked at the configured step, one Feedback
//! is sent per completed stage, and between ticks the connection is polled so
//! Cancel, ReadState and Estop take effect mid-motion.

use std::collections::HashMap;
use std::net::TcpListener;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::device::{Device, DeviceError, DeviceEvent, Stage};
use crate::manipulator::{execute_grasp_and_transport, GraspPlan, GripperModel};
use crate::protocol::{
    pipe, ActionMessage, ChannelError, Detail, Goal, HomeTarget, MessageChannel, OpCode, PipeEnd, ResultBody, Status,
    TcpTransport, Transport,
};

/// Fails the `nth` goal (1-based) of `op` without executing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultRule {
    pub op: OpCode,
    pub nth: u32,
}

pub struct Rig {
    device: Device,
    gripper: GripperModel,
    /// Wall-clock delay per device tick; zero runs as fast as possible.
    pace: Duration,
    faults: Vec<FaultRule>,
    goal_counts: HashMap<OpCode, u32>,
}

pub type SharedRig = Arc<Mutex<Rig>>;

impl Rig {
    pub fn new(device: Device, gripper: GripperModel) -> Self {
        Self { device, gripper, pace: Duration::ZERO, faults: Vec::new(), goal_counts: HashMap::new() }
    }

    pub fn with_pace(mut self, pace: Duration) -> Self {
        self.pace = pace;
        self
    }

    pub fn with_fault(mut self, rule: FaultRule) -> Self {
        self.faults.push(rule);
        self
    }

    pub fn shared(self) -> SharedRig {
        Arc::new(Mutex::new(self))
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn device_mut(&mut self) -> &mut Device {
        &mut self.device
    }

    fn injected(&mut self, op: OpCode) -> bool {
        let n = self.goal_counts.entry(op).or_insert(0);
        *n += 1;
        let n = *n;
        self.faults.iter().any(|f| f.op == op && f.nth == n)
    }
}

fn lock(rig: &SharedRig) -> MutexGuard<'_, Rig> {
    rig.lock().unwrap_or_else(|e| e.into_inner())
}

fn result(id: u32, op: OpCode, status: Status, body: ResultBody) -> ActionMessage {
    ActionMessage::Result { id, op, status, body }
}

fn fail(id: u32, op: OpCode, detail: Detail) -> ActionMessage {
    result(id, op, Status::Fail(detail), ResultBody::Empty)
}

fn ok(id: u32, op: OpCode) -> ActionMessage {
    result(id, op, Status::Success, ResultBody::Empty)
}

struct Connection<T> {
    rig: SharedRig,
    chan: MessageChannel<T>,
}

/// Serves one connection until the peer closes it.
pub fn serve_connection<T: Transport>(rig: SharedRig, transport: T) -> Result<(), ChannelError> {
    let mut conn = Connection { rig, chan: MessageChannel::new(transport) };
    loop {
        match conn.chan.recv(None) {
            Ok(Some(ActionMessage::Goal { id, goal })) => conn.handle_goal(id, goal)?,
            // stale cancels and stray server-side messages are ignored
            Ok(Some(_)) | Ok(None) => {}
            Err(ChannelError::Closed) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}

impl<T: Transport> Connection<T> {
    fn send(&mut self, msg: ActionMessage) -> Result<(), ChannelError> {
        self.chan.send(&msg)
    }

    /// Goals answered without waiting on motion.
    fn immediate(&mut self, id: u32, goal: &Goal) -> Option<ActionMessage> {
        match goal {
            Goal::ReadState => {
                let state = lock(&self.rig).device.read_state();
                Some(result(id, OpCode::ReadState, Status::Success, ResultBody::State(Box::new(state))))
            }
            Goal::Estop { engaged } => {
                lock(&self.rig).device.set_estop(*engaged);
                Some(ok(id, OpCode::Estop))
            }
            _ => None,
        }
    }

    fn handle_goal(&mut self, id: u32, goal: Goal) -> Result<(), ChannelError> {
        let op = goal.op();
        if lock(&self.rig).injected(op) {
            return self.send(fail(id, op, Detail::Injected));
        }
        if let Some(reply) = self.immediate(id, &goal) {
            return self.send(reply);
        }
        match goal {
            Goal::Grasp(plan) => {
                let reply = self.grasp(id, &plan)?;
                self.send(reply)
            }
            Goal::Home(HomeTarget::Both) => {
                let first = self.run_job(id, op, |d| d.home_platform())?;
                if let Some(reply) = first {
                    return self.send(reply);
                }
                let reply = self.run_job(id, op, |d| d.home_upper())?;
                self.send(reply.unwrap_or_else(|| ok(id, op)))
            }
            goal => {
                let reply = self.run_job(id, op, |d| match goal {
                    Goal::LowerReset { target_deg, seed } => d.lower_reset(target_deg, seed),
                    Goal::Swap { slot } => d.swap_object(slot as usize),
                    Goal::Home(HomeTarget::Platform) => d.home_platform(),
                    Goal::Home(_) => d.home_upper(),
                    Goal::Rotate { target_deg } => d.rotate_platform(target_deg),
                    _ => unreachable!("handled above"),
                })?;
                self.send(reply.unwrap_or_else(|| ok(id, op)))
            }
        }
    }

    /// Starts a device job and drives it to completion. Returns the failure
    /// result, or `None` when the job succeeded.
    fn run_job(
        &mut self,
        id: u32,
        op: OpCode,
        start: impl FnOnce(&mut Device) -> Result<(), DeviceError>,
    ) -> Result<Option<ActionMessage>, ChannelError> {
        let (tick_ms, started_at) = {
            let mut rig = lock(&self.rig);
            if let Err(e) = start(&mut rig.device) {
                return Ok(Some(fail(id, op, Detail::from(&e))));
            }
            (rig.device.config().tick_ms, rig.device.state().clock_ms)
        };
        let deadline = op.default_deadline_ms();
        loop {
            let (events, pace, now) = {
                let mut rig = lock(&self.rig);
                let events = rig.device.tick(tick_ms).expect("tick step is nonzero");
                (events, rig.pace, rig.device.state().clock_ms)
            };
            for ev in events {
                match ev {
                    DeviceEvent::StageCompleted { stage, at_ms } => {
                        self.send(ActionMessage::Feedback { id, stage, clock_ms: at_ms as u64 })?
                    }
                    DeviceEvent::JobFinished { result, .. } => {
                        return Ok(result.err().map(|e| fail(id, op, Detail::from(&e))));
                    }
                    _ => {}
                }
            }
            if !lock(&self.rig).device.is_busy() {
                // the job was ended from outside this connection
                let last = lock(&self.rig).device.last_result().cloned();
                return Ok(match last {
                    Some((_, Err(e))) => Some(fail(id, op, Detail::from(&e))),
                    _ => None,
                });
            }
            if now - started_at > deadline {
                lock(&self.rig).device.abort();
                return Ok(Some(fail(id, op, Detail::Timeout)));
            }
            if let Some(reply) = self.poll_during_job(id, op, pace)? {
                return Ok(Some(reply));
            }
        }
    }

    /// Handles messages arriving mid-job. Returns the job's result if a
    /// message ended it.
    fn poll_during_job(&mut self, id: u32, op: OpCode, wait: Duration) -> Result<Option<ActionMessage>, ChannelError> {
        let mut wait = Some(wait);
        loop {
            let msg = match self.chan.recv(wait.take()) {
                Ok(Some(m)) => m,
                Ok(None) => return Ok(None),
                // answer nothing more; the peer is gone
                Err(ChannelError::Closed) => {
                    lock(&self.rig).device.abort();
                    return Err(ChannelError::Closed);
                }
                Err(e) => return Err(e),
            };
            match msg {
                ActionMessage::Cancel { id: c } if c == id => {
                    lock(&self.rig).device.abort();
                    return Ok(Some(fail(id, op, Detail::Cancelled)));
                }
                ActionMessage::Goal { id: gid, goal } => {
                    let estop = matches!(goal, Goal::Estop { engaged: true });
                    match self.immediate(gid, &goal) {
                        Some(reply) => {
                            self.send(reply)?;
                            if estop {
                                return Ok(Some(fail(id, op, Detail::EstopEngaged)));
                            }
                        }
                        None => self.send(fail(gid, goal.op(), Detail::Busy))?,
                    }
                }
                _ => {}
            }
            wait = Some(Duration::ZERO);
        }
    }

    fn grasp(&mut self, id: u32, plan: &GraspPlan) -> Result<ActionMessage, ChannelError> {
        let op = OpCode::Grasp;
        let outcome = {
            let mut rig = lock(&self.rig);
            if rig.device.state().estop {
                return Ok(fail(id, op, Detail::EstopEngaged));
            }
            if rig.device.is_busy() {
                return Ok(fail(id, op, Detail::Busy));
            }
            let state = rig.device.state();
            let Some(obj_id) = state.object_on_platform.clone() else {
                return Ok(fail(id, op, Detail::NoObject));
            };
            let Some(obj) = rig.device.library().get(&obj_id).cloned() else {
                return Ok(fail(id, op, Detail::UnknownObject));
            };
            let pose = state.object_pose;
            let clock = state.clock_ms;
            let g = rig.gripper;
            let outcome = execute_grasp_and_transport(plan, &obj, pose, &g, clock);
            rig.device.displace_object(outcome.final_object_pose).expect("object is on the tether");
            if outcome.duration_ms > 0 {
                rig.device.tick(outcome.duration_ms).expect("nonzero");
            }
            outcome
        };
        let traj = &outcome.trajectory;
        let closed_at = traj.iter().position(|s| s.opening <= outcome.closure_width.max(0.0)).unwrap_or(0);
        let lifted_at = (closed_at + (crate::manipulator::LIFT_MS / crate::manipulator::SAMPLE_PERIOD_MS) as usize)
            .min(traj.len() - 1);
        for (stage, i) in
            [(Stage::GripperClosed, closed_at), (Stage::ObjectLifted, lifted_at), (Stage::Transported, traj.len() - 1)]
        {
            self.send(ActionMessage::Feedback { id, stage, clock_ms: traj[i].t_ms })?;
        }
        Ok(result(
            id,
            op,
            Status::Success,
            ResultBody::Grasp { reported_success: outcome.success, trajectory: outcome.trajectory },
        ))
    }
}

/// Device and arm endpoints of an in-process rig, each served on its own thread.
pub struct InProcRig {
    pub device: PipeEnd,
    pub arm: PipeEnd,
    pub rig: SharedRig,
    handles: Vec<JoinHandle<Result<(), ChannelError>>>,
}

impl InProcRig {
    pub fn spawn(rig: SharedRig) -> Self {
        let mut handles = Vec::new();
        let mut ends = Vec::new();
        for name in ["rig-device", "rig-arm"] {
            let (client, server) = pipe();
            let r = rig.clone();
            handles.push(
                thread::Builder::new()
                    .name(name.into())
                    .spawn(move || serve_connection(r, server))
                    .expect("spawn server thread"),
            );
            ends.push(client);
        }
        let arm = ends.pop().unwrap();
        let device = ends.pop().unwrap();
        Self { device, arm, rig, handles }
    }

    /// Closes both endpoints and waits for the server threads.
    pub fn shutdown(self) -> Result<(), ChannelError> {
        let (device, arm, threads) = self.into_parts();
        drop(device);
        drop(arm);
        threads.join()
    }

    /// Hands out the client ends; the threads exit once both are dropped.
    pub fn into_parts(self) -> (PipeEnd, PipeEnd, RigThreads) {
        let Self { device, arm, rig, handles } = self;
        (device, arm, RigThreads { rig, handles })
    }
}

/// Server threads of an [`InProcRig`] whose client ends were handed out.
pub struct RigThreads {
    pub rig: SharedRig,
    handles: Vec<JoinHandle<Result<(), ChannelError>>>,
}

impl RigThreads {
    /// Waits for the server threads; returns once both client ends are dropped.
    pub fn join(self) -> Result<(), ChannelError> {
        for h in self.handles {
            h.join().expect("server thread panicked")?;
        }
        Ok(())
    }
}

/// Accepts connections forever, serving each on its own thread.
pub fn serve_tcp(listener: TcpListener, rig: SharedRig) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let transport = TcpTransport::new(stream?)?;
        let rig = rig.clone();
        thread::spawn(move || serve_connection(rig, transport));
    }
    Ok(())
}
