//! Wire frames: 4-byte LE payload length, 1-byte kind, 4-byte LE sequence
//! number, then the payload.

use serde::{Deserialize, Serialize};

use super::ProtocolError;

pub const FRAME_HEADER_LEN: usize = 9;

/// Largest accepted payload.
pub const MAX_PAYLOAD_LEN: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MessageKind {
    QueryCiphertexts = 1,
    ResponseCiphertexts = 2,
    ShareSync = 3,
    AlignRequest = 4,
    AlignResponse = 5,
    Config = 6,
}

impl TryFrom<u8> for MessageKind {
    type Error = ProtocolError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Ok(match v {
            1 => MessageKind::QueryCiphertexts,
            2 => MessageKind::ResponseCiphertexts,
            3 => MessageKind::ShareSync,
            4 => MessageKind::AlignRequest,
            5 => MessageKind::AlignResponse,
            6 => MessageKind::Config,
            other => return Err(ProtocolError::CorruptFrame(format!("unknown message kind {other}"))),
        })
    }
}

/// A message before framing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(kind: MessageKind, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    /// Bytes on the wire including the frame header.
    pub fn byte_len(&self) -> usize {
        self.payload.len() + FRAME_HEADER_LEN
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: MessageKind,
    pub seq: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parse a header, returning `(payload length, kind, seq)`.
    pub fn decode_header(header: &[u8; FRAME_HEADER_LEN]) -> Result<(usize, MessageKind, u32), ProtocolError> {
        let len = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD_LEN {
            return Err(ProtocolError::CorruptFrame(format!("payload length {len} exceeds limit")));
        }
        let kind = MessageKind::try_from(header[4])?;
        let seq = u32::from_le_bytes(header[5..9].try_into().unwrap());
        Ok((len, kind, seq))
    }

    /// Parse exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Frame, ProtocolError> {
        let header: &[u8; FRAME_HEADER_LEN] = bytes
            .get(..FRAME_HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| ProtocolError::CorruptFrame(format!("frame of {} bytes is shorter than its header", bytes.len())))?;
        let (len, kind, seq) = Self::decode_header(header)?;
        if bytes.len() != FRAME_HEADER_LEN + len {
            return Err(ProtocolError::CorruptFrame(format!(
                "length field says {len} payload bytes but frame carries {}",
                bytes.len() - FRAME_HEADER_LEN
            )));
        }
        Ok(Frame {
            kind,
            seq,
            payload: bytes[FRAME_HEADER_LEN..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let f = Frame {
            kind: MessageKind::ShareSync,
            seq: 0x0102_0304,
            payload: vec![9, 8, 7],
        };
        let bytes = f.encode();
        assert_eq!(bytes, vec![3, 0, 0, 0, 3, 4, 3, 2, 1, 9, 8, 7]);
        assert_eq!(Frame::decode(&bytes).unwrap(), f);
        assert_eq!(Message::new(MessageKind::ShareSync, vec![0; 3]).byte_len(), 12);
    }

    #[test]
    fn rejects_malformed() {
        let mut bytes = Frame {
            kind: MessageKind::Config,
            seq: 0,
            payload: vec![1, 2],
        }
        .encode();
        assert!(Frame::decode(&bytes[..5]).is_err());
        assert!(Frame::decode(&bytes[..10]).is_err());
        bytes[4] = 42;
        assert!(matches!(Frame::decode(&bytes), Err(ProtocolError::CorruptFrame(_))));
    }
}
