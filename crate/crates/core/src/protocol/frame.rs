//! Framing: `0xA5 | len u16 | msg_type | payload | crc u16`, CRC over msg_type and payload.

use thiserror::Error;

use super::crc::crc16;
use super::message::{ActionMessage, MSG_CANCEL, MSG_GOAL};

pub const SYNC: u8 = 0xA5;
pub const MAX_PAYLOAD: usize = 1024;
/// Sync, length, type and CRC.
pub const OVERHEAD: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    /// No complete frame yet. The first `skip` bytes hold no frame start and may be discarded.
    #[error("incomplete frame")]
    Truncated { skip: usize },
    #[error("crc mismatch")]
    CrcMismatch { consumed: usize },
    #[error("unknown message type {msg_type:#04x}")]
    UnknownMsgType { msg_type: u8, consumed: usize },
    #[error("malformed payload: {reason}")]
    Malformed { reason: &'static str, consumed: usize },
}

impl DecodeError {
    /// Bytes the caller should drop before decoding again.
    pub fn consumed(&self) -> usize {
        match *self {
            DecodeError::Truncated { skip } => skip,
            DecodeError::CrcMismatch { consumed }
            | DecodeError::UnknownMsgType { consumed, .. }
            | DecodeError::Malformed { consumed, .. } => consumed,
        }
    }
}

pub fn encode_frame(msg: &ActionMessage) -> Result<Vec<u8>, EncodeError> {
    let mut out = vec![SYNC, 0, 0, msg.msg_type()];
    msg.encode_payload(&mut out);
    let len = out.len() - 4;
    if len > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLarge(len));
    }
    out[1..3].copy_from_slice(&(len as u16).to_le_bytes());
    let crc = crc16(&out[3..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

enum Candidate {
    NotSync,
    Incomplete,
    Complete { total: usize, crc_ok: bool },
}

fn candidate(buf: &[u8], i: usize) -> Candidate {
    if buf[i] != SYNC {
        return Candidate::NotSync;
    }
    if buf.len() < i + 3 {
        return Candidate::Incomplete;
    }
    let len = u16::from_le_bytes([buf[i + 1], buf[i + 2]]) as usize;
    if len > MAX_PAYLOAD {
        return Candidate::NotSync;
    }
    let total = len + OVERHEAD;
    if buf.len() < i + total {
        return Candidate::Incomplete;
    }
    let body = &buf[i + 3..i + 4 + len];
    let crc = u16::from_le_bytes([buf[i + 4 + len], buf[i + 5 + len]]);
    Candidate::Complete { total, crc_ok: crc16(body) == crc }
}

/// Decodes the first frame in `buf`, returning it with the number of bytes
/// consumed, including any garbage skipped before it.
///
/// A sync byte whose length field is out of range is treated as garbage. A
/// candidate that is still incomplete does not block a complete, CRC-valid
/// frame that starts later in the buffer.
pub fn decode_frame(buf: &[u8]) -> Result<(ActionMessage, usize), DecodeError> {
    let mut i = 0;
    while i < buf.len() {
        match candidate(buf, i) {
            Candidate::NotSync => i += 1,
            Candidate::Incomplete => {
                let later =
                    (i + 1..buf.len()).find(|&j| matches!(candidate(buf, j), Candidate::Complete { crc_ok: true, .. }));
                match later {
                    Some(j) => i = j,
                    None => return Err(DecodeError::Truncated { skip: i }),
                }
            }
            Candidate::Complete { crc_ok: false, .. } => return Err(DecodeError::CrcMismatch { consumed: i + 1 }),
            Candidate::Complete { total, crc_ok: true } => {
                let consumed = i + total;
                let msg_type = buf[i + 3];
                if !(MSG_GOAL..=MSG_CANCEL).contains(&msg_type) {
                    return Err(DecodeError::UnknownMsgType { msg_type, consumed });
                }
                let payload = &buf[i + 4..i + total - 2];
                return ActionMessage::decode_payload(msg_type, payload)
                    .map(|m| (m, consumed))
                    .map_err(|reason| DecodeError::Malformed { reason, consumed });
            }
        }
    }
    Err(DecodeError::Truncated { skip: buf.len() })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReaderStats {
    pub frames: u64,
    pub crc_errors: u64,
    pub unknown_types: u64,
    pub malformed: u64,
    pub discarded_bytes: u64,
}

/// Accumulates stream bytes and yields decoded messages, skipping bad frames.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
    stats: ReaderStats,
}

impl FrameReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn stats(&self) -> ReaderStats {
        self.stats
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn next_message(&mut self) -> Option<ActionMessage> {
        loop {
            match decode_frame(&self.buf) {
                Ok((msg, consumed)) => {
                    let frame_len = encoded_len_at_end(&self.buf[..consumed]);
                    self.stats.discarded_bytes += (consumed - frame_len) as u64;
                    self.stats.frames += 1;
                    self.buf.drain(..consumed);
                    return Some(msg);
                }
                Err(e) => {
                    let n = e.consumed();
                    match e {
                        DecodeError::Truncated { .. } => {
                            self.stats.discarded_bytes += n as u64;
                            self.buf.drain(..n);
                            return None;
                        }
                        DecodeError::CrcMismatch { .. } => {
                            self.stats.crc_errors += 1;
                            self.stats.discarded_bytes += n as u64;
                        }
                        DecodeError::UnknownMsgType { .. } => self.stats.unknown_types += 1,
                        DecodeError::Malformed { .. } => self.stats.malformed += 1,
                    }
                    self.buf.drain(..n);
                }
            }
        }
    }
}

/// Length of the valid frame that ends `bytes`.
fn encoded_len_at_end(bytes: &[u8]) -> usize {
    (0..bytes.len())
        .rev()
        .find(
            |&i| matches!(candidate(bytes, i), Candidate::Complete { total, crc_ok: true } if i + total == bytes.len()),
        )
        .map_or(0, |i| bytes.len() - i)
}
