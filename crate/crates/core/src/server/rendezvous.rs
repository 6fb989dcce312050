use std::collections::{BTreeMap, HashMap};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::proto::HelloKind;
use crate::transport::{Channel, MsgType};

/// Hands inbound per-session channels to the session that waits for them.
#[derive(Default)]
pub(crate) struct Rendezvous {
    slots: Mutex<HashMap<(u64, u8), Box<dyn Channel>>>,
    cv: Condvar,
}

impl Rendezvous {
    pub fn deposit(&self, session: u64, kind: HelloKind, ch: Box<dyn Channel>) {
        self.slots.lock().unwrap().insert((session, kind as u8), ch);
        self.cv.notify_all();
    }

    pub fn wait(&self, session: u64, kind: HelloKind, timeout: Duration) -> Option<Box<dyn Channel>> {
        let deadline = Instant::now() + timeout;
        let mut g = self.slots.lock().unwrap();
        loop {
            if let Some(ch) = g.remove(&(session, kind as u8)) {
                return Some(ch);
            }
            let left = deadline.checked_duration_since(Instant::now())?;
            g = self.cv.wait_timeout(g, left).unwrap().0;
        }
    }
}

/// Coordinator inbox: one forwarded frame per (session, shard).
#[derive(Default)]
pub(crate) struct Inbox {
    slots: Mutex<HashMap<u64, BTreeMap<usize, (MsgType, Vec<u8>)>>>,
    cv: Condvar,
}

impl Inbox {
    pub fn deposit(&self, session: u64, shard: usize, msg_type: MsgType, payload: Vec<u8>) {
        self.slots.lock().unwrap().entry(session).or_default().insert(shard, (msg_type, payload));
        self.cv.notify_all();
    }

    /// Waits for all `shards` contributions of type `want`; on timeout the
    /// lowest missing shard is reported.
    pub fn collect(&self, session: u64, shards: usize, want: MsgType, timeout: Duration) -> Result<Vec<Vec<u8>>> {
        let deadline = Instant::now() + timeout;
        let mut g = self.slots.lock().unwrap();
        loop {
            let have = g.get(&session).map_or(0, |m| m.len());
            if have >= shards {
                let m = g.remove(&session).unwrap();
                let mut out = Vec::with_capacity(shards);
                for j in 0..shards {
                    match m.get(&j) {
                        Some((t, p)) if *t == want => out.push(p.clone()),
                        Some((t, _)) => {
                            return Err(Error::protocol(format!("shard {j} forwarded {t:?}, expected {want:?}")))
                        }
                        None => return Err(Error::MissingShard { shard: j }),
                    }
                }
                return Ok(out);
            }
            let Some(left) = deadline.checked_duration_since(Instant::now()) else {
                let m = g.remove(&session).unwrap_or_default();
                let shard = (0..shards).find(|j| !m.contains_key(j)).unwrap_or(0);
                return Err(Error::MissingShard { shard });
            };
            g = self.cv.wait_timeout(g, left).unwrap().0;
        }
    }
}
