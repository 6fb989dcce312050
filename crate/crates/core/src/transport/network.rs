use std::collections::HashMap;
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::{loopback_pair, Channel, Counters, TcpChannel, TransportError};

pub trait Listener: Send {
    /// Waits up to `timeout` for an inbound connection.
    fn accept_timeout(&self, timeout: Duration) -> Result<Option<Box<dyn Channel>>, TransportError>;
    fn local_addr(&self) -> String;
}

/// Connection fabric: in-process for tests, TCP for multi-process runs.
pub trait Network: Send + Sync {
    fn listen(&self, addr: &str) -> Result<Box<dyn Listener>, TransportError>;
    fn dial(&self, addr: &str) -> Result<Box<dyn Channel>, TransportError>;
    /// Aggregate traffic across every channel this network created.
    fn counters(&self) -> Arc<Counters>;
}

type Backlog = Sender<Box<dyn Channel>>;

#[derive(Default)]
pub struct LoopbackNetwork {
    endpoints: Mutex<HashMap<String, Backlog>>,
    counters: Arc<Counters>,
}

impl LoopbackNetwork {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Makes `addr` unreachable; pending and future dials fail.
    pub fn take_down(&self, addr: &str) {
        self.endpoints.lock().unwrap().remove(addr);
    }
}

struct LoopbackListener {
    addr: String,
    rx: Receiver<Box<dyn Channel>>,
}

impl Listener for LoopbackListener {
    fn accept_timeout(&self, timeout: Duration) -> Result<Option<Box<dyn Channel>>, TransportError> {
        match self.rx.recv_timeout(timeout) {
            Ok(c) => Ok(Some(c)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }

    fn local_addr(&self) -> String {
        self.addr.clone()
    }
}

impl Network for LoopbackNetwork {
    fn listen(&self, addr: &str) -> Result<Box<dyn Listener>, TransportError> {
        let (tx, rx) = unbounded();
        self.endpoints.lock().unwrap().insert(addr.to_string(), tx);
        Ok(Box::new(LoopbackListener { addr: addr.to_string(), rx }))
    }

    fn dial(&self, addr: &str) -> Result<Box<dyn Channel>, TransportError> {
        let backlog = self
            .endpoints
            .lock()
            .unwrap()
            .get(addr)
            .cloned()
            .ok_or_else(|| TransportError::Unreachable(addr.to_string()))?;
        let (mut near, mut far) = loopback_pair("dialer", addr);
        near.attach_counters(self.counters.clone());
        far.attach_counters(self.counters.clone());
        backlog
            .send(Box::new(far))
            .map_err(|_| TransportError::Unreachable(addr.to_string()))?;
        Ok(Box::new(near))
    }

    fn counters(&self) -> Arc<Counters> {
        self.counters.clone()
    }
}

#[derive(Default)]
pub struct TcpNetwork {
    counters: Arc<Counters>,
    pub connect_timeout: Option<Duration>,
}

impl TcpNetwork {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }
}

struct TcpListenerBox {
    inner: TcpListener,
    counters: Arc<Counters>,
}

impl Listener for TcpListenerBox {
    fn accept_timeout(&self, timeout: Duration) -> Result<Option<Box<dyn Channel>>, TransportError> {
        self.inner.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        loop {
            match self.inner.accept() {
                Ok((s, _)) => {
                    s.set_nonblocking(false)?;
                    let mut ch = TcpChannel::new(s)?;
                    ch.attach_counters(self.counters.clone());
                    return Ok(Some(Box::new(ch)));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Ok(None);
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn local_addr(&self) -> String {
        self.inner
            .local_addr()
            .map(|a| a.to_string())
            .unwrap_or_default()
    }
}

impl Network for TcpNetwork {
    fn listen(&self, addr: &str) -> Result<Box<dyn Listener>, TransportError> {
        Ok(Box::new(TcpListenerBox {
            inner: TcpListener::bind(addr)?,
            counters: self.counters.clone(),
        }))
    }

    fn dial(&self, addr: &str) -> Result<Box<dyn Channel>, TransportError> {
        let unreachable = |_| TransportError::Unreachable(addr.to_string());
        let stream = match self.connect_timeout {
            Some(t) => {
                let sa = std::net::ToSocketAddrs::to_socket_addrs(addr)
                    .map_err(unreachable)?
                    .next()
                    .ok_or_else(|| TransportError::Unreachable(addr.to_string()))?;
                TcpStream::connect_timeout(&sa, t).map_err(unreachable)?
            }
            None => TcpStream::connect(addr).map_err(unreachable)?,
        };
        let mut ch = TcpChannel::new(stream)?;
        ch.attach_counters(self.counters.clone());
        Ok(Box::new(ch))
    }

    fn counters(&self) -> Arc<Counters> {
        self.counters.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{Frame, MsgType};

    fn exercise(net: Arc<dyn Network>, addr: &str) {
        let l = net.listen(addr).unwrap();
        let addr = l.local_addr();
        let n2 = net.clone();
        let t = std::thread::spawn(move || {
            let mut c = n2.dial(&addr).unwrap();
            c.send(&Frame::new(MsgType::Hello, 1, b"hi".to_vec())).unwrap();
            c.recv().unwrap()
        });
        let mut s = l.accept_timeout(Duration::from_secs(5)).unwrap().unwrap();
        let f = s.recv().unwrap();
        s.send(&f).unwrap();
        assert_eq!(t.join().unwrap().payload, b"hi");
        let total = net.counters().snapshot();
        assert_eq!(total.bytes_sent, 2 * f.wire_len() as u64);
        assert_eq!(total.bytes_sent, total.bytes_received);
    }

    #[test]
    fn loopback_network() {
        let net = LoopbackNetwork::new();
        exercise(net.clone(), "c0s0");
        net.take_down("c0s0");
        assert!(matches!(net.dial("c0s0"), Err(TransportError::Unreachable(_))));
    }

    #[test]
    fn tcp_network() {
        exercise(TcpNetwork::new(), "127.0.0.1:0");
    }
}
