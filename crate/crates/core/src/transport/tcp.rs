use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use super::{Channel, ChannelStats, Counters, Frame, TransportError, HEADER_LEN, MAX_FRAME_LEN};

pub struct TcpChannel {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    own: Arc<Counters>,
    extra: Vec<Arc<Counters>>,
    peer: String,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        let peer = stream
            .peer_addr()
            .map(|a| a.to_string())
            .unwrap_or_else(|_| "?".into());
        Ok(TcpChannel {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            own: Arc::default(),
            extra: Vec::new(),
            peer,
        })
    }

    fn read_frame(&mut self) -> Result<Frame, TransportError> {
        let mut header = [0u8; HEADER_LEN];
        self.reader.read_exact(&mut header).map_err(map_read)?;
        let len = u32::from_be_bytes(header[0..4].try_into().unwrap()) as usize;
        if !(10..=MAX_FRAME_LEN).contains(&len) {
            return Err(TransportError::BadFrame(format!("length field {len}")));
        }
        let mut buf = Vec::with_capacity(4 + len);
        buf.extend_from_slice(&header);
        buf.resize(4 + len, 0);
        self.reader.read_exact(&mut buf[HEADER_LEN..]).map_err(map_read)?;
        let f = Frame::decode(&buf)?;
        self.own.on_recv(buf.len());
        self.extra.iter().for_each(|c| c.on_recv(buf.len()));
        Ok(f)
    }
}

fn map_read(e: std::io::Error) -> TransportError {
    match e.kind() {
        std::io::ErrorKind::UnexpectedEof => TransportError::Closed,
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => TransportError::Timeout,
        _ => TransportError::Io(e),
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        let bytes = frame.encode();
        self.writer.write_all(&bytes)?;
        self.writer.flush()?;
        self.own.on_send(bytes.len());
        self.extra.iter().for_each(|c| c.on_send(bytes.len()));
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        self.reader.get_ref().set_read_timeout(None)?;
        self.read_frame()
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Frame, TransportError> {
        // A timeout mid-frame would desynchronise the stream; the deadline
        // only applies while waiting for the first header byte.
        self.reader.get_ref().set_read_timeout(Some(timeout))?;
        let ready = self.reader.fill_buf().map(|b| b.is_empty());
        self.reader.get_ref().set_read_timeout(None)?;
        if ready.map_err(map_read)? {
            return Err(TransportError::Closed);
        }
        self.read_frame()
    }

    fn stats(&self) -> ChannelStats {
        self.own.snapshot()
    }

    fn attach_counters(&mut self, counters: Arc<Counters>) {
        self.extra.push(counters);
    }

    fn peer(&self) -> String {
        self.peer.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::MsgType;
    use std::net::TcpListener;

    #[test]
    fn tcp_roundtrip_and_counters() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap();
        let t = std::thread::spawn(move || {
            let (s, _) = l.accept().unwrap();
            let mut ch = TcpChannel::new(s).unwrap();
            let f = ch.recv().unwrap();
            ch.send(&f).unwrap();
        });
        let mut ch = TcpChannel::new(TcpStream::connect(addr).unwrap()).unwrap();
        assert!(matches!(ch.recv_timeout(Duration::from_millis(20)), Err(TransportError::Timeout)));
        let f = Frame::new(MsgType::Result, 3, vec![5; 1000]);
        ch.send(&f).unwrap();
        assert_eq!(ch.recv_timeout(Duration::from_secs(5)).unwrap(), f);
        t.join().unwrap();
        assert_eq!(ch.stats().bytes_sent, f.wire_len() as u64);
        assert!(matches!(ch.recv(), Err(TransportError::Closed)));
    }
}
