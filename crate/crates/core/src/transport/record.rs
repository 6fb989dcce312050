use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{Channel, ChannelStats, Counters, Frame, TransportError};
use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 4] = b"EGTR";
const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Received = 0,
    Sent = 1,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub peer: String,
    pub frame: Frame,
}

/// Every frame a server sent or received, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub server: String,
    pub entries: Vec<TranscriptEntry>,
}

pub type TranscriptLog = Arc<Mutex<Vec<TranscriptEntry>>>;

impl Transcript {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_be_bytes());
        put_str(&mut out, &self.server);
        for e in &self.entries {
            out.push(e.direction as u8);
            put_str(&mut out, &e.peer);
            out.extend_from_slice(&e.frame.encode());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Transcript> {
        let bad = |m: &str| Error::protocol(format!("transcript: {m}"));
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        if u16::from_be_bytes([bytes[4], bytes[5]]) != VERSION {
            return Err(bad("unsupported version"));
        }
        let mut pos = 6;
        let server = get_str(bytes, &mut pos).ok_or_else(|| bad("truncated header"))?;
        let mut entries = Vec::new();
        while pos < bytes.len() {
            let direction = match bytes[pos] {
                0 => Direction::Received,
                1 => Direction::Sent,
                _ => return Err(bad("bad direction byte")),
            };
            pos += 1;
            let peer = get_str(bytes, &mut pos).ok_or_else(|| bad("truncated entry"))?;
            let (frame, used) = Frame::decode_prefix(&bytes[pos..])?;
            pos += used;
            entries.push(TranscriptEntry { direction, peer, frame });
        }
        Ok(Transcript { server, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).io_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Transcript> {
        let b = std::fs::read(path).io_context(|| format!("reading {}", path.display()))?;
        Transcript::from_bytes(&b)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn get_str(b: &[u8], pos: &mut usize) -> Option<String> {
    let n = u16::from_be_bytes(b.get(*pos..*pos + 2)?.try_into().ok()?) as usize;
    let s = b.get(*pos + 2..*pos + 2 + n)?;
    *pos += 2 + n;
    String::from_utf8(s.to_vec()).ok()
}

/// Wraps a channel and appends every frame to a shared log.
pub struct RecordingChannel<C> {
    inner: C,
    log: TranscriptLog,
}

impl<C: Channel> RecordingChannel<C> {
    pub fn new(inner: C, log: TranscriptLog) -> Self {
        RecordingChannel { inner, log }
    }

    fn record(&self, direction: Direction, frame: &Frame) {
        self.log.lock().unwrap().push(TranscriptEntry {
            direction,
            peer: self.inner.peer(),
            frame: frame.clone(),
        });
    }
}

impl<C: Channel> Channel for RecordingChannel<C> {
    fn send(&mut self, frame: &Frame) -> std::result::Result<(), TransportError> {
        self.inner.send(frame)?;
        self.record(Direction::Sent, frame);
        Ok(())
    }

    fn recv(&mut self) -> std::result::Result<Frame, TransportError> {
        let f = self.inner.recv()?;
        self.record(Direction::Received, &f);
        Ok(f)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> std::result::Result<Frame, TransportError> {
        let f = self.inner.recv_timeout(timeout)?;
        self.record(Direction::Received, &f);
        Ok(f)
    }

    fn stats(&self) -> ChannelStats {
        self.inner.stats()
    }

    fn attach_counters(&mut self, counters: Arc<Counters>) {
        self.inner.attach_counters(counters)
    }

    fn peer(&self) -> String {
        self.inner.peer()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{loopback_pair, MsgType};

    #[test]
    fn record_and_roundtrip_file() {
        let log = TranscriptLog::default();
        let (a, mut b) = loopback_pair("fe", "s0");
        let mut a = RecordingChannel::new(a, log.clone());
        a.send(&Frame::new(MsgType::Subquery, 4, vec![1, 2, 3])).unwrap();
        b.send(&Frame::new(MsgType::TupleCount, 4, vec![0, 0, 0, 7])).unwrap();
        a.recv().unwrap();
        let t = Transcript {
            server: "c0s0".into(),
            entries: log.lock().unwrap().clone(),
        };
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.entries[1].direction, Direction::Received);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        t.write(&p).unwrap();
        assert_eq!(Transcript::read(&p).unwrap(), t);
    }
}
