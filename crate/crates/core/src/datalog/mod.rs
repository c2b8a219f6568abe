//! Durable session recording.
//!
//! A session is a directory holding an append-only `manifest`, a `trials.log`
//! with one trial record per line and one `<channel>.log` per channel. Every
//! file is a sequence of newline-terminated records in the [`crate::record`]
//! grammar, and every line is written and flushed before the call that wrote
//! it returns. A line without its terminating newline is the remnant of an
//! interrupted write; readers drop it and count it. See
//! `docs/session-format.md` for the full layout.

mod trial;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::record::{Record, RecordError, Value};
use crate::types::TrialRecord;

pub use trial::{trial_from_record, trial_to_record};

pub const MANIFEST: &str = "manifest";
pub const TRIALS: &str = "trials.log";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("session is closed")]
    SessionClosed,
    #[error("channel `{channel}`: timestamp {t} precedes {last}")]
    TimestampRegression { channel: String, t: u64, last: u64 },
    #[error("trial {0} already recorded")]
    DuplicateTrialId(u32),
    #[error("invalid channel name `{0}`")]
    InvalidChannel(String),
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("manifest lists `{0}` but the file is missing")]
    MissingChannelFile(String),
    #[error("corrupt {file} line {line}: {source}")]
    CorruptRecord { file: String, line: usize, source: RecordError },
    #[error("session directory {0} already exists and is not empty")]
    Exists(PathBuf),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How hard a write is pushed toward the disk before it is acknowledged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// Flushed to the OS; survives a process kill.
    #[default]
    Flush,
    /// Also fsync'd; survives power loss.
    Sync,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionHeader {
    pub session_id: String,
    pub seed: u64,
    /// Simulated clock when the session opened.
    pub start_ms: u64,
}

impl SessionHeader {
    /// The id is derived from the simulated start time and the batch seed only.
    pub fn new(seed: u64, start_ms: u64) -> Self {
        Self { session_id: format!("t{start_ms:010}-s{seed:016x}"), seed, start_ms }
    }
}

fn valid_channel(name: &str) -> bool {
    // `trials` would collide with the trial log
    name != "trials"
        && !name.is_empty()
        && name.len() <= 64
        && name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

struct ChannelWriter {
    file: File,
    last_t: Option<u64>,
}

pub struct SessionWriter {
    root: PathBuf,
    header: SessionHeader,
    durability: Durability,
    manifest: File,
    trials: File,
    trials_len: u64,
    channels: BTreeMap<String, ChannelWriter>,
    trial_ids: HashSet<u32>,
    closed: bool,
}

fn append_line(file: &mut File, line: &str, durability: Durability) -> io::Result<()> {
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    file.write_all(&buf)?;
    file.flush()?;
    if durability == Durability::Sync {
        file.sync_data()?;
    }
    Ok(())
}

fn append_file(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

impl SessionWriter {
    /// Creates a session in `root`, which must be absent or empty.
    pub fn create(root: impl AsRef<Path>, header: SessionHeader, durability: Durability) -> Result<Self, LogError> {
        let root = root.as_ref().to_path_buf();
        if root.exists() && fs::read_dir(&root)?.next().is_some() {
            return Err(LogError::Exists(root));
        }
        fs::create_dir_all(&root)?;
        let trials = append_file(&root.join(TRIALS))?;
        let mut manifest = append_file(&root.join(MANIFEST))?;
        let head = Record::new()
            .with("kind", Value::S("session".into()))
            .with("version", Value::U(FORMAT_VERSION))
            .with("id", Value::S(header.session_id.clone()))
            .with("seed", Value::U(header.seed))
            .with("start_ms", Value::U(header.start_ms));
        append_line(&mut manifest, &head.to_line(), durability)?;
        Ok(Self {
            root,
            header,
            durability,
            manifest,
            trials,
            trials_len: 0,
            channels: BTreeMap::new(),
            trial_ids: HashSet::new(),
            closed: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    /// Appends `payload` at time `t` to `channel`, creating the channel on first use.
    pub fn record_channel(&mut self, channel: &str, t: u64, payload: &Record) -> Result<(), LogError> {
        if self.closed {
            return Err(LogError::SessionClosed);
        }
        if !valid_channel(channel) {
            return Err(LogError::InvalidChannel(channel.to_string()));
        }
        if let Some(last) = self.channels.get(channel).and_then(|c| c.last_t) {
            if t < last {
                return Err(LogError::TimestampRegression { channel: channel.to_string(), t, last });
            }
        }
        if payload.contains("t") {
            return Err(LogError::CorruptRecord {
                file: format!("{channel}.log"),
                line: 0,
                source: RecordError::Invalid { key: "t".into(), message: "reserved for the timestamp".into() },
            });
        }
        if !self.channels.contains_key(channel) {
            // the file exists before the manifest names it
            let file = append_file(&self.root.join(format!("{channel}.log")))?;
            let entry = Record::new()
                .with("kind", Value::S("channel".into()))
                .with("name", Value::S(channel.to_string()))
                .with("file", Value::S(format!("{channel}.log")));
            append_line(&mut self.manifest, &entry.to_line(), self.durability)?;
            self.channels.insert(channel.to_string(), ChannelWriter { file, last_t: None });
        }
        let mut line = Record::new().with("t", Value::U(t));
        for (k, v) in payload.fields() {
            line.push(k.clone(), v.clone());
        }
        let durability = self.durability;
        let ch = self.channels.get_mut(channel).expect("inserted above");
        append_line(&mut ch.file, &line.to_line(), durability)?;
        ch.last_t = Some(t);
        Ok(())
    }

    /// Appends one trial record and indexes it. The record is durable when this returns.
    pub fn write_trial_record(&mut self, rec: &TrialRecord) -> Result<(), LogError> {
        if self.closed {
            return Err(LogError::SessionClosed);
        }
        let id = rec.spec.trial_id;
        if self.trial_ids.contains(&id) {
            return Err(LogError::DuplicateTrialId(id));
        }
        let line = trial_to_record(rec).to_line();
        let offset = self.trials_len;
        append_line(&mut self.trials, &line, self.durability)?;
        self.trials_len += line.len() as u64 + 1;
        let entry = Record::new()
            .with("kind", Value::S("trial".into()))
            .with("id", Value::U(id as u64))
            .with("offset", Value::U(offset));
        append_line(&mut self.manifest, &entry.to_line(), self.durability)?;
        self.trial_ids.insert(id);
        Ok(())
    }

    /// Writes the closing manifest record. Later writes fail with [`LogError::SessionClosed`].
    pub fn close(&mut self) -> Result<(), LogError> {
        if self.closed {
            return Err(LogError::SessionClosed);
        }
        let entry =
            Record::new().with("kind", Value::S("closed".into())).with("trials", Value::U(self.trial_ids.len() as u64));
        append_line(&mut self.manifest, &entry.to_line(), self.durability)?;
        self.closed = true;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    pub name: String,
    pub entries: Vec<(u64, Record)>,
    /// A partial final line was dropped.
    pub truncated: bool,
}

impl ChannelData {
    pub fn time_range(&self) -> Option<(u64, u64)> {
        Some((self.entries.first()?.0, self.entries.last()?.0))
    }
}

/// Read-only view of a session directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub root: PathBuf,
    pub header: SessionHeader,
    pub closed: bool,
    pub trials: Vec<TrialRecord>,
    pub channels: BTreeMap<String, ChannelData>,
    /// Partial final lines dropped across all files.
    pub truncations: usize,
}

impl Session {
    pub fn channel(&self, name: &str) -> Option<&ChannelData> {
        self.channels.get(name)
    }
}

/// Complete lines of `text` with their byte offsets, and whether a partial last line was dropped.
fn complete_lines(text: &str) -> (Vec<(usize, &str)>, bool) {
    let mut lines = Vec::new();
    let mut offset = 0;
    let mut rest = text;
    while let Some(i) = rest.find('\n') {
        lines.push((offset, &rest[..i]));
        offset += i + 1;
        rest = &rest[i + 1..];
    }
    (lines, !rest.is_empty())
}

fn read_text(path: &Path) -> Result<String, LogError> {
    let bytes = fs::read(path)?;
    // an interrupted write can only cut the final line, so only a bad tail is tolerated
    match String::from_utf8(bytes) {
        Ok(s) => Ok(s),
        Err(e) => {
            let valid = e.utf8_error().valid_up_to();
            let bytes = e.into_bytes();
            if bytes[valid..].contains(&b'\n') {
                return Err(LogError::CorruptRecord {
                    file: path.display().to_string(),
                    line: 0,
                    source: RecordError::Invalid { key: "-".into(), message: "invalid UTF-8".into() },
                });
            }
            Ok(String::from_utf8(bytes[..valid].to_vec()).expect("validated prefix"))
        }
    }
}

/// Opens a session for reading.
pub fn read_session(root: impl AsRef<Path>) -> Result<Session, LogError> {
    let root = root.as_ref().to_path_buf();
    let manifest_path = root.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(LogError::CorruptManifest(format!("{} not found", manifest_path.display())));
    }
    let text = read_text(&manifest_path)?;
    let (lines, cut) = complete_lines(&text);
    let mut truncations = cut as usize;
    let corrupt = |line: usize, what: String| LogError::CorruptManifest(format!("line {line}: {what}"));

    let mut header = None;
    let mut closed = false;
    let mut channel_names = Vec::new();
    let mut index: Vec<(u32, u64)> = Vec::new();
    for (n, (_, line)) in lines.iter().enumerate() {
        let n = n + 1;
        let rec = Record::parse(line).map_err(|e| corrupt(n, e.to_string()))?;
        let kind = rec.str("kind").map_err(|e| corrupt(n, e.to_string()))?;
        if header.is_none() && kind != "session" {
            return Err(corrupt(n, "first record must be the session header".into()));
        }
        if closed {
            return Err(corrupt(n, "record after close".into()));
        }
        let field = |e: RecordError| corrupt(n, e.to_string());
        match kind {
            "session" if header.is_none() => {
                let version = rec.u64("version").map_err(field)?;
                if version != FORMAT_VERSION {
                    return Err(corrupt(n, format!("unsupported version {version}")));
                }
                header = Some(SessionHeader {
                    session_id: rec.str("id").map_err(field)?.to_string(),
                    seed: rec.u64("seed").map_err(field)?,
                    start_ms: rec.u64("start_ms").map_err(field)?,
                });
            }
            "channel" => {
                let name = rec.str("name").map_err(field)?.to_string();
                if !valid_channel(&name) || rec.str("file").map_err(field)? != format!("{name}.log") {
                    return Err(corrupt(n, format!("bad channel entry `{name}`")));
                }
                channel_names.push(name);
            }
            "trial" => {
                let id = rec.u64("id").map_err(field)?;
                let id = u32::try_from(id).map_err(|_| corrupt(n, format!("trial id {id} out of range")))?;
                index.push((id, rec.u64("offset").map_err(field)?));
            }
            "closed" => closed = true,
            other => return Err(corrupt(n, format!("unexpected record kind `{other}`"))),
        }
    }
    let header = header.ok_or_else(|| LogError::CorruptManifest("empty manifest".into()))?;

    let trials_path = root.join(TRIALS);
    if !trials_path.exists() {
        return Err(LogError::MissingChannelFile(TRIALS.into()));
    }
    let text = read_text(&trials_path)?;
    let (lines, trunc) = complete_lines(&text);
    truncations += trunc as usize;
    let mut trials = Vec::with_capacity(lines.len());
    let mut by_offset = HashMap::new();
    let mut seen = HashSet::new();
    for (n, (offset, line)) in lines.iter().enumerate() {
        let rec = Record::parse(line)
            .and_then(|r| trial_from_record(&r))
            .map_err(|source| LogError::CorruptRecord { file: TRIALS.into(), line: n + 1, source })?;
        if !seen.insert(rec.spec.trial_id) {
            return Err(LogError::DuplicateTrialId(rec.spec.trial_id));
        }
        by_offset.insert(*offset as u64, rec.spec.trial_id);
        trials.push(rec);
    }
    for (id, offset) in &index {
        if by_offset.get(offset) != Some(id) {
            return Err(LogError::CorruptManifest(format!("trial {id} index offset {offset} does not resolve")));
        }
    }

    let mut channels = BTreeMap::new();
    for name in channel_names {
        let file = format!("{name}.log");
        let path = root.join(&file);
        if !path.exists() {
            return Err(LogError::MissingChannelFile(file));
        }
        let text = read_text(&path)?;
        let (lines, truncated) = complete_lines(&text);
        truncations += truncated as usize;
        let mut entries = Vec::with_capacity(lines.len());
        let mut last = 0;
        for (n, (_, line)) in lines.iter().enumerate() {
            let bad = |source| LogError::CorruptRecord { file: file.clone(), line: n + 1, source };
            let rec = Record::parse(line).map_err(bad)?;
            let t = rec.u64("t").map_err(bad)?;
            if t < last {
                return Err(LogError::TimestampRegression { channel: name.clone(), t, last });
            }
            last = t;
            let payload = rec.fields().iter().skip(1).fold(Record::new(), |mut r, (k, v)| {
                r.push(k.clone(), v.clone());
                r
            });
            entries.push((t, payload));
        }
        channels.insert(name.clone(), ChannelData { name, entries, truncated });
    }

    Ok(Session { root, header, closed, trials, channels, truncations })
}

#[cfg(test)]
mod tests;
