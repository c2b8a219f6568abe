//! Framed binary link between the controller and the rig.
//!
//! See `docs/wire-protocol.md` for the byte layout.

mod client;
mod crc;
mod frame;
mod message;
mod registers;
mod transport;

pub use client::{ActionClient, ActionResult, ChannelError, ClientError, MessageChannel};
pub use crc::crc16;
pub use frame::{
    decode_frame, encode_frame, DecodeError, EncodeError, FrameReader, ReaderStats, MAX_PAYLOAD, OVERHEAD, SYNC,
};
pub use message::{
    ActionMessage, Detail, Goal, HomeTarget, OpCode, ResultBody, Status, MSG_CANCEL, MSG_FEEDBACK, MSG_GOAL, MSG_RESULT,
};
pub use registers::{register_access, register_read, register_write, Access, Mcu, RegisterError};
pub use transport::{pipe, PipeEnd, TcpTransport, Transport};
