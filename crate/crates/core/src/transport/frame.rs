use super::TransportError;

pub const HEADER_LEN: usize = 14;
/// Upper bound on a single frame, guards against corrupt length fields.
pub const MAX_FRAME_LEN: usize = 1 << 30;

macro_rules! registry {
    ($($name:ident = $code:literal,)*) => {
        /// Message-type registry shared by every protocol.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        #[repr(u16)]
        pub enum MsgType {
            $($name = $code,)*
        }

        impl MsgType {
            pub const ALL: &'static [MsgType] = &[$(MsgType::$name,)*];

            pub fn from_u16(v: u16) -> Result<MsgType, TransportError> {
                match v {
                    $($code => Ok(MsgType::$name),)*
                    other => Err(TransportError::UnknownType(other)),
                }
            }
        }
    };
}

registry! {
    Hello = 0x0001,
    QueryBegin = 0x0100,
    Subquery = 0x0101,
    TupleCount = 0x0102,
    Xtokens = 0x0103,
    Result = 0x0104,
    QueryEnd = 0x0105,
    Error = 0x0106,
    TripleGenInit = 0x0200,
    CotBatch = 0x0201,
    MulExchange = 0x0202,
    MulInit = 0x0203,
    TripleGenDone = 0x0204,
    OtBaseSender = 0x0300,
    OtBaseReceiver = 0x0301,
    OtExtMatrix = 0x0302,
    OtPayload = 0x0303,
    SortInit = 0x0400,
    CircuitBlob = 0x0401,
    GarblerLabels = 0x0402,
    MaskLabels = 0x0403,
    SortResult = 0x0404,
    SortForward = 0x0405,
    MaskForward = 0x0406,
    Ranking = 0x0407,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub session: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, session: u64, payload: Vec<u8>) -> Self {
        Frame { msg_type, session, payload }
    }

    /// Bytes on the wire including the length prefix.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&((self.payload.len() + 10) as u32).to_be_bytes());
        out.extend_from_slice(&(self.msg_type as u16).to_be_bytes());
        out.extend_from_slice(&self.session.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Frame, TransportError> {
        let (f, used) = Frame::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(TransportError::BadFrame(format!(
                "{} trailing bytes after frame",
                bytes.len() - used
            )));
        }
        Ok(f)
    }

    /// Decodes the frame at the start of `bytes`, returning it and its length.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Frame, usize), TransportError> {
        if bytes.len() < HEADER_LEN {
            return Err(TransportError::BadFrame("short header".into()));
        }
        let len = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
        if !(10..=MAX_FRAME_LEN).contains(&len) {
            return Err(TransportError::BadFrame(format!("length field {len}")));
        }
        if bytes.len() < 4 + len {
            return Err(TransportError::BadFrame("truncated payload".into()));
        }
        let msg_type = MsgType::from_u16(u16::from_be_bytes([bytes[4], bytes[5]]))?;
        let session = u64::from_be_bytes(bytes[6..14].try_into().unwrap());
        Ok((
            Frame {
                msg_type,
                session,
                payload: bytes[14..4 + len].to_vec(),
            },
            4 + len,
        ))
    }
}
