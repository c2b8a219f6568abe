//! Duplex byte streams: an in-process pipe and TCP.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

/// A reliable, ordered duplex byte stream.
///
/// `recv` returns `Ok(0)` once the peer has closed and everything buffered has
/// been read, and an error of kind [`io::ErrorKind::TimedOut`] when no byte
/// arrived within `timeout`. `None` blocks indefinitely.
pub trait Transport: Send {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;
    fn recv(&mut self, buf: &mut [u8], timeout: Option<Duration>) -> io::Result<usize>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        (**self).send(bytes)
    }
    fn recv(&mut self, buf: &mut [u8], timeout: Option<Duration>) -> io::Result<usize> {
        (**self).recv(buf, timeout)
    }
}

pub(crate) fn timed_out() -> io::Error {
    io::Error::new(io::ErrorKind::TimedOut, "no data before timeout")
}

#[derive(Default)]
struct ChanState {
    buf: VecDeque<u8>,
    closed: bool,
}

#[derive(Default)]
struct Chan {
    state: Mutex<ChanState>,
    ready: Condvar,
}

impl Chan {
    fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.ready.notify_all();
    }
}

/// One end of an in-process pipe. Dropping an end closes both directions.
pub struct PipeEnd {
    tx: Arc<Chan>,
    rx: Arc<Chan>,
}

pub fn pipe() -> (PipeEnd, PipeEnd) {
    let a = Arc::new(Chan::default());
    let b = Arc::new(Chan::default());
    (PipeEnd { tx: a.clone(), rx: b.clone() }, PipeEnd { tx: b, rx: a })
}

impl Transport for PipeEnd {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        let mut st = self.tx.state.lock().unwrap();
        if st.closed {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "pipe closed"));
        }
        st.buf.extend(bytes);
        drop(st);
        self.tx.ready.notify_all();
        Ok(())
    }

    fn recv(&mut self, buf: &mut [u8], timeout: Option<Duration>) -> io::Result<usize> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut st = self.rx.state.lock().unwrap();
        loop {
            if !st.buf.is_empty() {
                let n = buf.len().min(st.buf.len());
                for (dst, src) in buf.iter_mut().zip(st.buf.drain(..n)) {
                    *dst = src;
                }
                return Ok(n);
            }
            if st.closed {
                return Ok(0);
            }
            st = match deadline {
                None => self.rx.ready.wait(st).unwrap(),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(timed_out());
                    }
                    self.rx.ready.wait_timeout(st, d - now).unwrap().0
                }
            };
        }
    }
}

impl Drop for PipeEnd {
    fn drop(&mut self) {
        self.tx.close();
        self.rx.close();
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn connect(addr: &str) -> io::Result<Self> {
        Self::new(TcpStream::connect(addr)?)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)?;
        self.stream.flush()
    }

    fn recv(&mut self, buf: &mut [u8], timeout: Option<Duration>) -> io::Result<usize> {
        let poll = timeout == Some(Duration::ZERO);
        self.stream.set_nonblocking(poll)?;
        if !poll {
            self.stream.set_read_timeout(timeout)?;
        }
        match self.stream.read(buf) {
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Err(timed_out()),
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => Ok(0),
            other => other,
        }
    }
}
