use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::{Channel, ChannelStats, Counters, Frame, TransportError};

/// In-process channel end. Frames travel as encoded bytes tagged with a
/// sequence number so reordering or duplication is detected.
pub struct LoopbackChannel {
    tx: Sender<(u64, Vec<u8>)>,
    rx: Receiver<(u64, Vec<u8>)>,
    send_seq: u64,
    recv_seq: u64,
    own: Arc<Counters>,
    extra: Vec<Arc<Counters>>,
    peer: String,
}

pub fn loopback_pair(a: &str, b: &str) -> (LoopbackChannel, LoopbackChannel) {
    let (tx_ab, rx_ab) = unbounded();
    let (tx_ba, rx_ba) = unbounded();
    let mk = |tx, rx, peer: &str| LoopbackChannel {
        tx,
        rx,
        send_seq: 0,
        recv_seq: 0,
        own: Arc::default(),
        extra: Vec::new(),
        peer: peer.to_string(),
    };
    (mk(tx_ab, rx_ba, b), mk(tx_ba, rx_ab, a))
}

impl LoopbackChannel {
    fn accept(&mut self, seq: u64, bytes: Vec<u8>) -> Result<Frame, TransportError> {
        if seq != self.recv_seq {
            return Err(TransportError::OutOfOrder {
                expected: self.recv_seq,
                got: seq,
            });
        }
        self.recv_seq += 1;
        let f = Frame::decode(&bytes)?;
        self.own.on_recv(bytes.len());
        self.extra.iter().for_each(|c| c.on_recv(bytes.len()));
        Ok(f)
    }

    #[cfg(test)]
    fn inject_raw(&self, seq: u64, bytes: Vec<u8>) {
        self.tx.send((seq, bytes)).unwrap();
    }
}

impl Channel for LoopbackChannel {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        let bytes = frame.encode();
        let n = bytes.len();
        self.tx
            .send((self.send_seq, bytes))
            .map_err(|_| TransportError::Closed)?;
        self.send_seq += 1;
        self.own.on_send(n);
        self.extra.iter().for_each(|c| c.on_send(n));
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        let (seq, bytes) = self.rx.recv().map_err(|_| TransportError::Closed)?;
        self.accept(seq, bytes)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Frame, TransportError> {
        match self.rx.recv_timeout(timeout) {
            Ok((seq, bytes)) => self.accept(seq, bytes),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
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

    #[test]
    fn echo_one_megabyte() {
        let (mut a, mut b) = loopback_pair("a", "b");
        let payload: Vec<u8> = (0..1 << 20).map(|i| (i * 7 % 251) as u8).collect();
        a.send(&Frame::new(MsgType::CircuitBlob, 9, payload.clone())).unwrap();
        let f = b.recv().unwrap();
        b.send(&f).unwrap();
        let back = a.recv().unwrap();
        assert_eq!(back.payload, payload);
        let expect = (HEADER + payload.len()) as u64;
        assert_eq!(a.stats().bytes_sent, expect);
        assert_eq!(a.stats().bytes_received, expect);
        assert_eq!(b.stats().total_bytes(), 2 * expect);
    }

    const HEADER: usize = crate::transport::HEADER_LEN;

    #[test]
    fn out_of_order_detected() {
        let (a, mut b) = loopback_pair("a", "b");
        a.inject_raw(1, Frame::new(MsgType::Hello, 0, vec![]).encode());
        assert!(matches!(b.recv(), Err(TransportError::OutOfOrder { expected: 0, got: 1 })));
    }

    #[test]
    fn fifo_order() {
        let (mut a, mut b) = loopback_pair("a", "b");
        for i in 0..100u64 {
            a.send(&Frame::new(MsgType::CotBatch, i, vec![])).unwrap();
        }
        for i in 0..100u64 {
            assert_eq!(b.recv().unwrap().session, i);
        }
        drop(a);
        assert!(matches!(b.recv(), Err(TransportError::Closed)));
    }
}
