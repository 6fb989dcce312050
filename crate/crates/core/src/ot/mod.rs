//! Semi-honest oblivious transfer: base OTs over the prime-order group,
//! IKNP extension, and the chosen-message and correlated variants used by
//! triple generation and garbled-circuit input transfer.

mod base;
mod ext;

pub use base::{base_ot_receive, base_ot_send, BASE_OT_COUNT};
pub use ext::{OtExtReceiver, OtExtSender};
