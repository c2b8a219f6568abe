use std::collections::{HashMap, VecDeque};
use std::io;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::frame::{encode_frame, EncodeError, FrameReader};
use super::message::{ActionMessage, Goal, OpCode, ResultBody, Status};
use super::transport::Transport;
use crate::device::Stage;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("transport closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Message-level view of a [`Transport`].
pub struct MessageChannel<T> {
    transport: T,
    reader: FrameReader,
}

impl<T: Transport> MessageChannel<T> {
    pub fn new(transport: T) -> Self {
        Self { transport, reader: FrameReader::new() }
    }

    pub fn send(&mut self, msg: &ActionMessage) -> Result<(), ChannelError> {
        let bytes = encode_frame(msg)?;
        self.transport.send(&bytes).map_err(|e| match e.kind() {
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => ChannelError::Closed,
            _ => ChannelError::Io(e),
        })
    }

    /// Next message, or `Ok(None)` when nothing complete arrived within `timeout`.
    pub fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<ActionMessage>, ChannelError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut buf = [0u8; 4096];
        loop {
            if let Some(msg) = self.reader.next_message() {
                return Ok(Some(msg));
            }
            let wait = deadline.map(|d| d.saturating_duration_since(Instant::now()));
            match self.transport.recv(&mut buf, wait) {
                Ok(0) => return Err(ChannelError::Closed),
                Ok(n) => self.reader.push(&buf[..n]),
                Err(e) if e.kind() == io::ErrorKind::TimedOut => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn reader_stats(&self) -> super::frame::ReaderStats {
        self.reader.stats()
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no result for action {id} within {waited:?}")]
    Timeout { id: u32, waited: Duration },
    #[error("transport closed")]
    TransportClosed,
    #[error("goal {0} is still outstanding")]
    GoalOutstanding(u32),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Io(io::Error),
    #[error(transparent)]
    Encode(EncodeError),
}

impl From<ChannelError> for ClientError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Closed => ClientError::TransportClosed,
            ChannelError::Io(e) => ClientError::Io(e),
            ChannelError::Encode(e) => ClientError::Encode(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionResult {
    pub id: u32,
    pub op: OpCode,
    pub status: Status,
    pub body: ResultBody,
}

/// Goal/feedback/result client.
///
/// One motion goal may be outstanding at a time; ReadState and Estop goals may
/// be pipelined alongside it. Every Feedback and Result must name an
/// outstanding goal and each goal receives exactly one Result.
pub struct ActionClient<T> {
    chan: MessageChannel<T>,
    next_id: u32,
    outstanding: HashMap<u32, OpCode>,
    stash: VecDeque<ActionMessage>,
    /// Overrides the per-op default deadline when set.
    pub deadline: Option<Duration>,
}

impl<T: Transport> ActionClient<T> {
    pub fn new(transport: T) -> Self {
        Self {
            chan: MessageChannel::new(transport),
            next_id: 1,
            outstanding: HashMap::new(),
            stash: VecDeque::new(),
            deadline: None,
        }
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }

    pub fn send_goal(&mut self, goal: Goal) -> Result<u32, ClientError> {
        let op = goal.op();
        if op.is_motion() {
            if let Some((&id, _)) = self.outstanding.iter().find(|(_, op)| op.is_motion()) {
                return Err(ClientError::GoalOutstanding(id));
            }
        }
        let id = self.next_id;
        self.next_id = self.next_id.wrapping_add(1).max(1);
        self.chan.send(&ActionMessage::Goal { id, goal })?;
        self.outstanding.insert(id, op);
        Ok(id)
    }

    pub fn cancel(&mut self, id: u32) -> Result<(), ClientError> {
        if !self.outstanding.contains_key(&id) {
            return Err(ClientError::Protocol(format!("cancel of unknown action {id}")));
        }
        Ok(self.chan.send(&ActionMessage::Cancel { id })?)
    }

    fn check(&self, msg: &ActionMessage) -> Result<(), ClientError> {
        match msg {
            ActionMessage::Feedback { id, .. } | ActionMessage::Result { id, .. } => {
                if self.outstanding.contains_key(id) {
                    Ok(())
                } else {
                    Err(ClientError::Protocol(format!("message for action {id} with no outstanding goal")))
                }
            }
            other => Err(ClientError::Protocol(format!("unexpected {other:?} from server"))),
        }
    }

    /// Waits for the result of `id`, passing its feedback to `on_feedback`.
    /// Messages for other outstanding goals are kept for their own waiters.
    pub fn await_result(
        &mut self,
        id: u32,
        mut on_feedback: impl FnMut(Stage, u64),
    ) -> Result<ActionResult, ClientError> {
        let op = *self
            .outstanding
            .get(&id)
            .ok_or_else(|| ClientError::Protocol(format!("action {id} is not outstanding")))?;
        let waited = self.deadline.unwrap_or(Duration::from_millis(op.default_deadline_ms()));
        let deadline = Instant::now() + waited;

        let mut kept = VecDeque::new();
        let mut found = None;
        while let Some(msg) = self.stash.pop_front() {
            if found.is_none() && msg.id() == id {
                match msg {
                    ActionMessage::Feedback { stage, clock_ms, .. } => on_feedback(stage, clock_ms),
                    ActionMessage::Result { .. } => found = Some(msg),
                    _ => {}
                }
            } else {
                kept.push_back(msg);
            }
        }
        self.stash = kept;

        loop {
            if let Some(ActionMessage::Result { id, op, status, body }) = found {
                self.outstanding.remove(&id);
                return Ok(ActionResult { id, op, status, body });
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ClientError::Timeout { id, waited });
            }
            let Some(msg) = self.chan.recv(Some(left))? else {
                return Err(ClientError::Timeout { id, waited });
            };
            self.check(&msg)?;
            if msg.id() != id {
                self.stash.push_back(msg);
                continue;
            }
            match msg {
                ActionMessage::Feedback { stage, clock_ms, .. } => on_feedback(stage, clock_ms),
                m @ ActionMessage::Result { .. } => found = Some(m),
                _ => unreachable!("checked above"),
            }
        }
    }

    /// Sends `goal` and waits for its result.
    pub fn roundtrip(&mut self, goal: Goal, on_feedback: impl FnMut(Stage, u64)) -> Result<ActionResult, ClientError> {
        let id = self.send_goal(goal)?;
        self.await_result(id, on_feedback)
    }
}
