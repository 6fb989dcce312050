use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("malformed input at line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("planning error: {0}")]
    Plan(String),

    #[error("decryption failed: ciphertext does not authenticate under this key")]
    Decrypt,

    #[error("integrity error in results from shard {shard}")]
    Integrity { shard: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("triple error: {0}")]
    Triple(String),

    #[error("circuit error: {0}")]
    Circuit(String),

    #[error("label decode failure on output wire {wire}")]
    LabelDecode { wire: usize },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(#[from] crate::transport::TransportError),

    #[error("counterpart unavailable, server is in degraded mode (set operations only)")]
    Degraded,

    #[error("missing contribution from shard {shard}")]
    MissingShard { shard: usize },

    #[error("partial result: shards {shards:?} failed: {reason}")]
    Partial { shards: Vec<usize>, reason: String },

    #[error("EDB checksum mismatch in {0}")]
    Checksum(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(position: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            position,
            message: message.into(),
        }
    }

    pub(crate) fn protocol(message: impl Into<String>) -> Self {
        Error::Protocol(message.into())
    }
}

pub(crate) trait IoContext<T> {
    fn io_context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn io_context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Io {
            context: context(),
            source,
        })
    }
}
