use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::{Frame, MsgType, TransportError};

/// Shared byte/frame counters.
#[derive(Debug, Default)]
pub struct Counters {
    pub bytes_sent: AtomicU64,
    pub bytes_received: AtomicU64,
    pub frames_sent: AtomicU64,
    pub frames_received: AtomicU64,
}

impl Counters {
    pub(crate) fn on_send(&self, n: usize) {
        self.bytes_sent.fetch_add(n as u64, Ordering::Relaxed);
        self.frames_sent.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn on_recv(&self, n: usize) {
        self.bytes_received.fetch_add(n as u64, Ordering::Relaxed);
        self.frames_received.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> ChannelStats {
        ChannelStats {
            bytes_sent: self.bytes_sent.load(Ordering::Relaxed),
            bytes_received: self.bytes_received.load(Ordering::Relaxed),
            frames_sent: self.frames_sent.load(Ordering::Relaxed),
            frames_received: self.frames_received.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
}

impl ChannelStats {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }
}

/// Ordered, reliable, bidirectional frame channel.
pub trait Channel: Send {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Frame, TransportError>;
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Frame, TransportError>;
    fn stats(&self) -> ChannelStats;
    /// Also count traffic into `counters` (e.g. a per-network total).
    fn attach_counters(&mut self, counters: Arc<Counters>);
    fn peer(&self) -> String;
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        (**self).send(frame)
    }
    fn recv(&mut self) -> Result<Frame, TransportError> {
        (**self).recv()
    }
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Frame, TransportError> {
        (**self).recv_timeout(timeout)
    }
    fn stats(&self) -> ChannelStats {
        (**self).stats()
    }
    fn attach_counters(&mut self, counters: Arc<Counters>) {
        (**self).attach_counters(counters)
    }
    fn peer(&self) -> String {
        (**self).peer()
    }
}

pub fn send_msg(
    ch: &mut dyn Channel,
    msg_type: MsgType,
    session: u64,
    payload: Vec<u8>,
) -> Result<(), TransportError> {
    ch.send(&Frame::new(msg_type, session, payload))
}

/// Receives the next frame and checks its type. An `Error` frame from the
/// peer is surfaced as [`TransportError::Remote`].
pub fn expect(ch: &mut dyn Channel, wanted: MsgType) -> Result<Frame, TransportError> {
    let f = ch.recv()?;
    if f.msg_type == wanted {
        return Ok(f);
    }
    if f.msg_type == MsgType::Error {
        return Err(TransportError::Remote(String::from_utf8_lossy(&f.payload).into_owned()));
    }
    Err(TransportError::Unexpected { wanted, got: f.msg_type })
}
