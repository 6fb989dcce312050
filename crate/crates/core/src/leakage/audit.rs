use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::crypto::{CIPHERTEXT_LEN, ELEMENT_LEN, STAG_LEN};
use crate::proto::{Hello, QueryBegin, SubqueryMsg};
use crate::transport::{Direction, Frame, MsgType, Transcript};
use crate::wire::Reader;

/// Leakage alphabet every transcript field falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldClass {
    /// Framing, hellos, acknowledgements, error codes.
    Control,
    /// Public round parameters: subquery count, sort flag, k, score formula, weights.
    RoundParams,
    Stag,
    Xtoken,
    PhiShape,
    /// Tuple counts (SP).
    TupleCount,
    /// x-term counts (XP).
    XtermCount,
    EncryptedId,
    /// Matching-tuple counts.
    ResultCount,
    /// Additive shares and masked differences, including masks and COT corrections.
    Share,
    /// Triple ids and shapes.
    TripleMeta,
    /// OT points, extension matrices, encrypted OT payloads.
    OtMessage,
    CircuitBlob,
    Label,
    /// Sort sizes and circuit parameters.
    SortParams,
    MaskedScore,
    /// Positions and ranks.
    Rank,
}

impl fmt::Display for FieldClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FieldClass::Control => "control",
            FieldClass::RoundParams => "round parameters",
            FieldClass::Stag => "stag",
            FieldClass::Xtoken => "xtoken",
            FieldClass::PhiShape => "phi shape",
            FieldClass::TupleCount => "tuple count (SP)",
            FieldClass::XtermCount => "x-term count (XP)",
            FieldClass::EncryptedId => "encrypted id",
            FieldClass::ResultCount => "result count",
            FieldClass::Share => "share",
            FieldClass::TripleMeta => "triple metadata",
            FieldClass::OtMessage => "ot message",
            FieldClass::CircuitBlob => "circuit blob",
            FieldClass::Label => "label",
            FieldClass::SortParams => "sort parameters",
            FieldClass::MaskedScore => "masked score",
            FieldClass::Rank => "rank",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    /// Payload does not parse as its type, or carries extra bytes.
    Malformed,
    /// Message type not allowed for this server and direction.
    Unexpected,
    /// Opaque field with a long zero run: plaintext integers look like this.
    PlaintextPattern,
    /// Ring vector whose entries are mostly small: plaintext sort keys look like this.
    PlainValues,
    KeyMaterial,
    /// Observable that the leakage profile does not predict.
    Inconsistent,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub server: String,
    /// Entry index in the transcript, when tied to one frame.
    pub entry: Option<usize>,
    pub session: u64,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} session {:016x}", self.server, self.session)?;
        if let Some(e) = self.entry {
            write!(f, " entry {e}")?;
        }
        write!(f, ": {:?}: {}", self.kind, self.detail)
    }
}

/// Zero-byte run that flags an opaque field.
pub const ZERO_RUN: usize = 6;
/// Ring values below this count as small.
const SMALL: u32 = 1 << 16;

#[derive(Clone, Debug, Default)]
pub struct AuditOptions {
    /// Byte strings that must never appear, e.g. key material.
    pub needles: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, Default)]
pub struct AuditReport {
    pub transcripts: usize,
    pub frames: usize,
    pub bytes: usize,
    /// Per class: field count and bytes.
    pub classes: BTreeMap<FieldClass, (usize, usize)>,
    pub query_sessions: usize,
    pub subqueries: usize,
    pub distinct_stags: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Leakage classes visible in the transcripts. N is the stored EDB
    /// size and always known to a server.
    pub fn leakage_classes(&self) -> Vec<&'static str> {
        let mut out = vec!["N"];
        let has = |c| self.classes.contains_key(&c);
        if has(FieldClass::PhiShape) {
            out.push("phi shape");
        }
        if has(FieldClass::Stag) {
            out.push("s_bar");
        }
        if has(FieldClass::TupleCount) {
            out.push("SP");
        }
        if has(FieldClass::XtermCount) {
            out.push("XP");
        }
        if has(FieldClass::ResultCount) {
            out.push("RP");
        }
        if has(FieldClass::Rank) {
            out.push("ranks");
        }
        out
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "transcripts: {}", self.transcripts)?;
        writeln!(f, "frames: {} ({} payload bytes)", self.frames, self.bytes)?;
        writeln!(f, "query sessions: {}", self.query_sessions)?;
        writeln!(f, "leakage classes: {}", self.leakage_classes().join(", "))?;
        writeln!(
            f,
            "repeat pattern: {} subqueries over {} distinct stags (expected s_bar leakage)",
            self.subqueries, self.distinct_stags
        )?;
        for (c, (n, b)) in &self.classes {
            writeln!(f, "  {c}: {n} fields, {b} bytes")?;
        }
        writeln!(f, "violations: {}", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// `c{cluster}s{shard}`.
pub fn parse_server_name(name: &str) -> Option<(u8, usize)> {
    let rest = name.strip_prefix('c')?;
    let (c, s) = rest.split_once('s')?;
    Some((c.parse().ok()?, s.parse().ok()?))
}

enum Kind {
    Opaque,
    Ring,
    Public,
}

struct Field<'a> {
    class: FieldClass,
    bytes: &'a [u8],
    kind: Kind,
}

struct Fields<'a>(Vec<Field<'a>>);

impl<'a> Fields<'a> {
    fn push(&mut self, class: FieldClass, bytes: &'a [u8], kind: Kind) {
        self.0.push(Field { class, bytes, kind });
    }
}

type Parsed<'a> = std::result::Result<Vec<Field<'a>>, String>;

fn fail<T>(e: crate::Error) -> std::result::Result<T, String> {
    Err(e.to_string())
}

/// Splits a payload into classified fields. `cluster` is the recording
/// server's cluster.
fn classify(frame: &Frame, cluster: u8) -> Parsed<'_> {
    use FieldClass as C;
    let p = &frame.payload[..];
    let mut f = Fields(Vec::new());
    let mut r = Reader::new(p);
    let wrap = |x: crate::Result<()>| x.map_err(|e| e.to_string());
    match frame.msg_type {
        MsgType::Hello => {
            Hello::decode(p).or_else(fail)?;
            f.push(C::Control, p, Kind::Public);
        }
        MsgType::QueryBegin => {
            QueryBegin::decode(p).or_else(fail)?;
            f.push(C::RoundParams, p, Kind::Public);
        }
        MsgType::Subquery => {
            SubqueryMsg::decode(p).or_else(fail)?;
            f.push(C::Stag, &p[..STAG_LEN], Kind::Opaque);
            f.push(C::XtermCount, &p[STAG_LEN..STAG_LEN + 2], Kind::Public);
            f.push(C::PhiShape, &p[STAG_LEN + 2..], Kind::Public);
        }
        MsgType::TupleCount => {
            wrap(r.u32().map(drop).and_then(|_| r.end()))?;
            f.push(C::TupleCount, p, Kind::Public);
        }
        MsgType::Xtokens => {
            let rows = r.u32().or_else(fail)? as usize;
            let cols = r.u16().or_else(fail)? as usize;
            if rows.saturating_mul(cols).saturating_mul(ELEMENT_LEN) != r.remaining() {
                return Err("xtoken block has the wrong length".into());
            }
            f.push(C::XtermCount, &p[..6], Kind::Public);
            for c in p[6..].chunks(ELEMENT_LEN) {
                f.push(C::Xtoken, c, Kind::Opaque);
            }
        }
        MsgType::Result if cluster == 0 => {
            let n = r.u32().or_else(fail)? as usize;
            if r.remaining() != n * CIPHERTEXT_LEN {
                return Err("result length disagrees with its count".into());
            }
            f.push(C::ResultCount, &p[..4], Kind::Public);
            for c in p[4..].chunks(CIPHERTEXT_LEN) {
                f.push(C::EncryptedId, c, Kind::Opaque);
            }
        }
        MsgType::Result => {
            wrap(r.u32().map(drop).and_then(|_| r.end()))?;
            f.push(C::ResultCount, p, Kind::Public);
        }
        MsgType::QueryEnd | MsgType::TripleGenDone => {
            wrap(r.end())?;
        }
        MsgType::Error => {
            r.u8().or_else(fail)?;
            r.u32().or_else(fail)?;
            f.push(C::Control, p, Kind::Public);
        }
        MsgType::TripleGenInit => {
            r.u64().or_else(fail)?;
            r.u32().or_else(fail)?;
            wrap(shape(&mut r).and_then(|_| r.end()))?;
            f.push(C::TripleMeta, p, Kind::Public);
        }
        MsgType::MulInit => {
            shape(&mut r).or_else(fail)?;
            let runs = r.u32().or_else(fail)? as usize;
            if r.remaining() != runs * 12 {
                return Err("triple id runs have the wrong length".into());
            }
            f.push(C::TripleMeta, p, Kind::Public);
        }
        MsgType::MulExchange => {
            for _ in 0..2 {
                let start = p.len() - r.remaining();
                let rows = r.u32().or_else(fail)? as usize;
                let cols = r.u32().or_else(fail)? as usize;
                let n = rows.checked_mul(cols).filter(|n| n * 4 <= r.remaining()).ok_or("matrix larger than payload")?;
                f.push(C::Share, &p[start..start + 8], Kind::Public);
                f.push(C::Share, r.take(4 * n).or_else(fail)?, Kind::Ring);
            }
            wrap(r.end())?;
        }
        MsgType::CotBatch => {
            if p.len() % 4 != 0 {
                return Err("COT batch is not a whole number of ring elements".into());
            }
            f.push(C::Share, p, Kind::Ring);
        }
        MsgType::OtBaseSender | MsgType::OtBaseReceiver => {
            if p.is_empty() || p.len() % ELEMENT_LEN != 0 {
                return Err("base OT message is not a list of points".into());
            }
            for c in p.chunks(ELEMENT_LEN) {
                f.push(C::OtMessage, c, Kind::Opaque);
            }
        }
        MsgType::OtExtMatrix | MsgType::OtPayload => {
            if p.len() % 16 != 0 {
                return Err("OT extension message is not a list of blocks".into());
            }
            for c in p.chunks(16) {
                f.push(C::OtMessage, c, Kind::Opaque);
            }
        }
        MsgType::SortInit => {
            if p.len() == 10 {
                f.push(C::SortParams, p, Kind::Public);
            } else {
                r.u32s().or_else(fail)?;
                wrap(r.u32().and_then(|_| r.u16()).map(drop).and_then(|_| r.end()))?;
                f.push(C::SortParams, p, Kind::Public);
            }
        }
        MsgType::CircuitBlob => {
            let t = r.u32().or_else(fail)? as usize;
            let d = r.u32().or_else(fail)? as usize;
            if t.saturating_add(d).saturating_mul(32) != r.remaining() {
                return Err("garbled circuit blob has the wrong length".into());
            }
            f.push(C::SortParams, &p[..8], Kind::Public);
            for c in p[8..].chunks(16) {
                f.push(C::CircuitBlob, c, Kind::Opaque);
            }
        }
        MsgType::GarblerLabels | MsgType::MaskLabels => {
            let n = r.u32().or_else(fail)? as usize;
            if r.remaining() != 16 * n {
                return Err("label count disagrees with the payload".into());
            }
            f.push(C::SortParams, &p[..4], Kind::Public);
            for c in p[4..].chunks(16) {
                f.push(C::Label, c, Kind::Opaque);
            }
        }
        MsgType::SortResult => {
            wrap(r.u32().map(drop).and_then(|_| r.end()))?;
            f.push(C::SortParams, p, Kind::Public);
        }
        MsgType::SortForward => {
            r.u32().or_else(fail)?;
            let n = r.u32().or_else(fail)? as usize;
            if r.remaining() != 8 * n {
                return Err("forwarded vector length disagrees with its count".into());
            }
            f.push(C::SortParams, &p[..8], Kind::Public);
            for e in p[8..].chunks(8) {
                f.push(C::MaskedScore, &e[..4], Kind::Ring);
                f.push(C::Rank, &e[4..], Kind::Public);
            }
        }
        MsgType::MaskForward => {
            r.u32().or_else(fail)?;
            r.u32s().or_else(fail)?;
            f.push(C::SortParams, &p[..8], Kind::Public);
            f.push(C::Share, &p[8..], Kind::Ring);
        }
        MsgType::Ranking => {
            let n = r.u32().or_else(fail)? as usize;
            if r.remaining() != 8 * n {
                return Err("ranking length disagrees with its count".into());
            }
            f.push(C::Rank, p, Kind::Public);
        }
    }
    Ok(f.0)
}

fn shape(r: &mut Reader<'_>) -> crate::Result<()> {
    match r.u8()? {
        0 => {
            r.u32()?;
            r.u32()?;
            r.u32()?;
        }
        1 => {
            r.u32()?;
            r.u32()?;
        }
        t => return Err(crate::Error::protocol(format!("unknown triple shape tag {t}"))),
    }
    Ok(())
}

/// Which message types a server may send or receive.
fn allowed(t: MsgType, cluster: u8, shard: usize, dir: Direction) -> bool {
    use MsgType as M;
    let sent = dir == Direction::Sent;
    match t {
        M::QueryBegin | M::Subquery | M::Xtokens => !sent,
        M::TupleCount | M::Result => sent,
        M::Ranking => sent && cluster == 0 && shard == 0,
        M::SortForward => cluster == 1 && (sent != (shard == 0)),
        M::MaskForward => cluster == 0 && (sent != (shard == 0)),
        _ => true,
    }
}

pub(crate) fn longest_zero_run(b: &[u8]) -> usize {
    let (mut best, mut cur) = (0, 0);
    for &x in b {
        cur = if x == 0 { cur + 1 } else { 0 };
        best = best.max(cur);
    }
    best
}

fn ring_values(fields: &[Field<'_>]) -> Vec<u32> {
    fields
        .iter()
        .filter(|f| matches!(f.kind, Kind::Ring))
        .flat_map(|f| f.bytes.chunks_exact(4).map(|c| u32::from_be_bytes(c.try_into().unwrap())))
        .collect()
}

/// Structural audit: every field parses into the leakage alphabet, opaque
/// fields look random, ring vectors carry no plaintext keys and no needle
/// appears anywhere.
pub fn audit_transcripts(transcripts: &[Transcript], opts: &AuditOptions) -> AuditReport {
    let mut rep = AuditReport { transcripts: transcripts.len(), ..Default::default() };
    let mut stags: BTreeSet<Vec<u8>> = BTreeSet::new();
    for t in transcripts {
        let Some((cluster, shard)) = parse_server_name(&t.server) else {
            rep.violations.push(Violation {
                server: t.server.clone(),
                entry: None,
                session: 0,
                kind: ViolationKind::Malformed,
                detail: "transcript does not name a server as c<cluster>s<shard>".into(),
            });
            continue;
        };
        for (i, e) in t.entries.iter().enumerate() {
            let fr = &e.frame;
            rep.frames += 1;
            rep.bytes += fr.payload.len();
            let mut flag = |kind, detail: String| {
                rep.violations.push(Violation {
                    server: t.server.clone(),
                    entry: Some(i),
                    session: fr.session,
                    kind,
                    detail,
                })
            };
            if !allowed(fr.msg_type, cluster, shard, e.direction) {
                flag(ViolationKind::Unexpected, format!("{:?} {:?} by this server", fr.msg_type, e.direction));
            }
            for n in &opts.needles {
                if !n.is_empty() && fr.payload.windows(n.len()).any(|w| w == &n[..]) {
                    flag(ViolationKind::KeyMaterial, format!("{:?} payload contains protected bytes", fr.msg_type));
                }
            }
            let fields = match classify(fr, cluster) {
                Ok(f) => f,
                Err(m) => {
                    flag(ViolationKind::Malformed, format!("{:?}: {m}", fr.msg_type));
                    continue;
                }
            };
            if fr.msg_type == MsgType::QueryBegin && e.direction == Direction::Received {
                rep.query_sessions += 1;
            }
            if fr.msg_type == MsgType::Subquery && e.direction == Direction::Received {
                rep.subqueries += 1;
                stags.insert(fr.payload[..STAG_LEN].to_vec());
            }
            for fd in &fields {
                let ent = rep.classes.entry(fd.class).or_default();
                ent.0 += 1;
                ent.1 += fd.bytes.len();
                if matches!(fd.kind, Kind::Opaque) && longest_zero_run(fd.bytes) >= ZERO_RUN {
                    flag(ViolationKind::PlaintextPattern, format!("{} field with {ZERO_RUN}+ zero bytes", fd.class));
                }
            }
            let ring = ring_values(&fields);
            if ring.iter().any(|v| *v >> 31 != 0) {
                flag(ViolationKind::Malformed, format!("{:?}: value outside the ring", fr.msg_type));
            }
            let small = ring.iter().filter(|v| **v < SMALL).count();
            if ring.len() >= 2 && 2 * small >= ring.len() {
                flag(ViolationKind::PlainValues, format!("{:?}: {small} of {} ring values are small", fr.msg_type, ring.len()));
            }
        }
    }
    rep.distinct_stags = stags.len();
    rep
}
