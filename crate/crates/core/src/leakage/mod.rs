//! Leakage functions and the transcript audit. The profile is computed
//! from plaintext data and the query list; the audit checks that servers
//! see nothing the profile does not predict.

mod audit;
mod consistency;
mod profile;


pub use audit::{
    audit_transcripts, parse_server_name, AuditOptions, AuditReport, FieldClass, Violation, ViolationKind, ZERO_RUN,
};
pub use consistency::{check_transcript_consistency, Verdict};
pub use profile::{compute_leakage, IpEntry, LeakageProfile, QueryLeakage, RoundLeakage, SubqueryLeakage};
