//! Length-prefixed binary protocol for networked federated rounds.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! offset 0   magic "GFED" (4 bytes)
//! offset 4   version u16
//! offset 6   msg_type u8: 1 Hello, 2 Broadcast, 3 Update, 4 RoundDone, 5 Shutdown
//! offset 7   round u32
//! offset 11  client_id u16
//! offset 13  payload_len u32 (bytes)
//! offset 17  payload
//! ```
//!
//! Parameter payloads are little-endian 64-bit floats. An `Update` payload
//! is prefixed with the client's sample count as a u64 before the floats.
//! Header fields unused by a message type are zero. `decode(encode(m)) == m`
//! for every message.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"GFED";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Client registration, carrying its id.
    Hello { client_id: u16 },
    /// Server-to-client shared parameters for a round.
    Broadcast { round: u32, params: Vec<f64> },
    /// Client-to-server result of local training.
    Update { round: u32, client_id: u16, n_k: u64, params: Vec<f64> },
    /// Server acknowledgement that a round was aggregated.
    RoundDone { round: u32 },
    /// Orderly shutdown.
    Shutdown,
}

#[derive(Debug, Error)]
pub enum FramingError {
    #[error("bad magic at offset 0: expected GFED, found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported protocol version {found} at offset 4")]
    UnsupportedVersion { found: u16 },
    #[error("unknown message type {found} at offset 6")]
    UnknownMsgType { found: u8 },
    #[error("truncated frame: expected {expected} bytes, {available} available")]
    Truncated { expected: usize, available: usize },
    #[error("malformed {msg} payload: {reason}")]
    BadPayload { msg: &'static str, reason: String },
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

fn msg_type(msg: &Message) -> u8 {
    match msg {
        Message::Hello { .. } => 1,
        Message::Broadcast { .. } => 2,
        Message::Update { .. } => 3,
        Message::RoundDone { .. } => 4,
        Message::Shutdown => 5,
    }
}

fn push_params(payload: &mut Vec<u8>, params: &[f64]) {
    payload.reserve(params.len() * 8);
    for p in params {
        payload.extend_from_slice(&p.to_le_bytes());
    }
}

fn parse_params(bytes: &[u8], msg: &'static str) -> Result<Vec<f64>, FramingError> {
    if !bytes.len().is_multiple_of(8) {
        return Err(FramingError::BadPayload {
            msg,
            reason: format!("parameter payload of {} bytes is not a multiple of 8", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let (round, client_id) = match msg {
        Message::Hello { client_id } => (0, *client_id),
        Message::Broadcast { round, .. } => (*round, 0),
        Message::Update { round, client_id, .. } => (*round, *client_id),
        Message::RoundDone { round } => (*round, 0),
        Message::Shutdown => (0, 0),
    };
    let mut payload = Vec::new();
    match msg {
        Message::Broadcast { params, .. } => push_params(&mut payload, params),
        Message::Update { n_k, params, .. } => {
            payload.extend_from_slice(&n_k.to_le_bytes());
            push_params(&mut payload, params);
        }
        _ => {}
    }

    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(MAGIC);
    frame.extend_from_slice(&VERSION.to_le_bytes());
    frame.push(msg_type(msg));
    frame.extend_from_slice(&round.to_le_bytes());
    frame.extend_from_slice(&client_id.to_le_bytes());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.extend_from_slice(&payload);
    frame
}

fn parse_frame(header: &[u8; HEADER_LEN], payload: &[u8]) -> Result<Message, FramingError> {
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&header[0..4]);
    if &magic != MAGIC {
        return Err(FramingError::BadMagic { found: magic });
    }
    let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(FramingError::UnsupportedVersion { found: version });
    }
    let kind = header[6];
    let round = u32::from_le_bytes(header[7..11].try_into().unwrap());
    let client_id = u16::from_le_bytes(header[11..13].try_into().unwrap());

    let expect_empty = |msg: &'static str| {
        if payload.is_empty() {
            Ok(())
        } else {
            Err(FramingError::BadPayload {
                msg,
                reason: format!("expected empty payload, found {} bytes", payload.len()),
            })
        }
    };
    match kind {
        1 => {
            expect_empty("Hello")?;
            Ok(Message::Hello { client_id })
        }
        2 => Ok(Message::Broadcast { round, params: parse_params(payload, "Broadcast")? }),
        3 => {
            if payload.len() < 8 {
                return Err(FramingError::BadPayload {
                    msg: "Update",
                    reason: format!("payload of {} bytes lacks the sample count", payload.len()),
                });
            }
            let n_k = u64::from_le_bytes(payload[..8].try_into().unwrap());
            Ok(Message::Update {
                round,
                client_id,
                n_k,
                params: parse_params(&payload[8..], "Update")?,
            })
        }
        4 => {
            expect_empty("RoundDone")?;
            Ok(Message::RoundDone { round })
        }
        5 => {
            expect_empty("Shutdown")?;
            Ok(Message::Shutdown)
        }
        other => Err(FramingError::UnknownMsgType { found: other }),
    }
}

/// Decodes exactly one frame from `bytes`; trailing bytes are an error.
pub fn decode_message(bytes: &[u8]) -> Result<Message, FramingError> {
    if bytes.len() < HEADER_LEN {
        return Err(FramingError::Truncated { expected: HEADER_LEN, available: bytes.len() });
    }
    let header: [u8; HEADER_LEN] = bytes[..HEADER_LEN].try_into().unwrap();
    let payload_len = u32::from_le_bytes(header[13..17].try_into().unwrap()) as usize;
    let available = bytes.len() - HEADER_LEN;
    if payload_len > available {
        return Err(FramingError::Truncated { expected: payload_len, available });
    }
    if available > payload_len {
        return Err(FramingError::TrailingBytes(available - payload_len));
    }
    parse_frame(&header, &bytes[HEADER_LEN..])
}

/// Reads one frame from a byte stream.
pub fn read_message(reader: &mut impl Read) -> Result<Message, FramingError> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header)?;
    let payload_len = u32::from_le_bytes(header[13..17].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; payload_len];
    reader.read_exact(&mut payload)?;
    parse_frame(&header, &payload)
}

/// Writes one frame to a byte stream.
pub fn write_message(writer: &mut impl Write, msg: &Message) -> Result<(), FramingError> {
    writer.write_all(&encode_message(msg))?;
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xoshiro256StarStar;

    fn sample_update() -> Message {
        let mut rng = Xoshiro256StarStar::new(4);
        Message::Update {
            round: 17,
            client_id: 3,
            n_k: 384,
            params: (0..50).map(|_| rng.uniform(-2.0, 2.0)).collect(),
        }
    }

    #[test]
    fn all_message_kinds_round_trip() {
        let messages = [
            Message::Hello { client_id: 2 },
            Message::Broadcast { round: 9, params: vec![1.5, -0.25, 0.0] },
            sample_update(),
            Message::RoundDone { round: 9 },
            Message::Shutdown,
        ];
        for msg in messages {
            let bytes = encode_message(&msg);
            assert_eq!(decode_message(&bytes).unwrap(), msg, "{msg:?}");
        }
    }

    #[test]
    fn corrupted_magic_fails_at_offset_zero() {
        let mut bytes = encode_message(&sample_update());
        bytes[0] = b'X';
        match decode_message(&bytes) {
            Err(FramingError::BadMagic { found }) => assert_eq!(&found, b"XFED"),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn oversized_payload_length_reports_expected_vs_available() {
        let mut bytes = encode_message(&Message::Broadcast { round: 1, params: vec![1.0, 2.0] });
        // claim a payload larger than what follows
        bytes[13..17].copy_from_slice(&100u32.to_le_bytes());
        match decode_message(&bytes) {
            Err(FramingError::Truncated { expected, available }) => {
                assert_eq!(expected, 100);
                assert_eq!(available, 16);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_and_type_are_rejected() {
        let mut bytes = encode_message(&Message::Shutdown);
        bytes[4] = 0xFE;
        assert!(matches!(
            decode_message(&bytes),
            Err(FramingError::UnsupportedVersion { found: 0xFE })
        ));

        let mut bytes = encode_message(&Message::Shutdown);
        bytes[6] = 42;
        assert!(matches!(decode_message(&bytes), Err(FramingError::UnknownMsgType { found: 42 })));
    }

    #[test]
    fn short_buffer_is_truncation() {
        let bytes = encode_message(&Message::Hello { client_id: 1 });
        assert!(matches!(
            decode_message(&bytes[..5]),
            Err(FramingError::Truncated { expected: HEADER_LEN, available: 5 })
        ));
    }

    #[test]
    fn stream_read_write_round_trip() {
        let mut buf = Vec::new();
        let messages = [sample_update(), Message::RoundDone { round: 17 }, Message::Shutdown];
        for msg in &messages {
            write_message(&mut buf, msg).unwrap();
        }
        let mut cursor = std::io::Cursor::new(buf);
        for msg in &messages {
            assert_eq!(&read_message(&mut cursor).unwrap(), msg);
        }
    }

    #[test]
    fn non_multiple_of_eight_params_are_rejected() {
        let mut bytes = encode_message(&Message::Broadcast { round: 0, params: vec![1.0] });
        // shrink payload by one byte and fix the length field
        bytes.pop();
        let len = 7u32;
        bytes[13..17].copy_from_slice(&len.to_le_bytes());
        assert!(matches!(decode_message(&bytes), Err(FramingError::BadPayload { .. })));
    }
}
