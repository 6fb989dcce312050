//! Framed binary messaging.
//!
//! Frame layout (big-endian):
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | length = 2 + 8 + payload length         |
//! | 2     | message type (see [`MsgType`])          |
//! | 8     | session id                              |
//! | n     | payload                                 |
//!
//! Loopback and TCP channels carry identical frame bytes, so recorded
//! transcripts do not depend on the fabric.

mod channel;
mod frame;
mod loopback;
mod network;
mod record;
mod tcp;

pub use channel::{expect, send_msg, Channel, ChannelStats, Counters};
pub use frame::{Frame, MsgType, HEADER_LEN, MAX_FRAME_LEN};
pub use loopback::{loopback_pair, LoopbackChannel};
pub use network::{LoopbackNetwork, Listener, Network, TcpNetwork};
pub use record::{Direction, RecordingChannel, Transcript, TranscriptEntry, TranscriptLog};
pub use tcp::TcpChannel;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("channel closed by peer")]
    Closed,
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("unknown message type {0:#06x}")]
    UnknownType(u16),
    #[error("malformed frame: {0}")]
    BadFrame(String),
    #[error("out-of-order frame: expected sequence {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("cannot reach {0}")]
    Unreachable(String),
    #[error("unexpected message {got:?}, wanted {wanted:?}")]
    Unexpected { wanted: MsgType, got: MsgType },
    #[error("peer reported error: {0}")]
    Remote(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
