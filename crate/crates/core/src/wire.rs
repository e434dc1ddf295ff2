//! Tagged binary envelope used for every serialized structure in this crate.
//!
//! Each field is encoded as `[tag: u8][length: u16 big-endian][payload]`.
//! Payload conventions:
//!
//! * unsigned integers: big-endian, minimal width (the empty payload is 0);
//! * large naturals ([`BigUint`]): big-endian, minimal width;
//! * IEEE-754 doubles: the 8-byte big-endian bit pattern;
//! * byte strings: raw bytes;
//! * compound structures: the concatenated encoding of their fields, nested
//!   under the structure's own tag.
//!
//! Readers consume fields in declaration order and must reject unknown tags,
//! truncated envelopes, and trailing bytes, so two independent encoders of
//! the same structure produce byte-identical output. The tag registry lives
//! in [`tag`]; signing payloads and committee messages both rely on this
//! format, which is why it is centralized here.

use num_bigint::BigUint;

/// Tag registry for every structure and field this crate puts on the wire.
///
/// Scalar field tags (`0x01`..`0x1f`) may repeat across different structures;
/// structure tags (`0x20`..) are globally unique.
pub mod tag {
    /// Generic unsigned integer field.
    pub const UINT: u8 = 0x01;
    /// Generic large natural (big-endian) field.
    pub const BIG: u8 = 0x02;
    /// Generic byte-string field.
    pub const BYTES: u8 = 0x03;
    /// Generic IEEE-754 double field.
    pub const F64: u8 = 0x04;
    /// Generic list field: concatenation of nested structure encodings.
    pub const LIST: u8 = 0x05;

    /// Threshold-scheme group public key.
    pub const GROUP_KEY: u8 = 0x20;
    /// Per-signer public key share.
    pub const SHARE_PUBKEY: u8 = 0x21;
    /// Partial signature fragment.
    pub const PARTIAL_SIG: u8 = 0x22;
    /// Aggregated group signature.
    pub const GROUP_SIG: u8 = 0x23;
    /// Single-signer signature (committee leader endorsement).
    pub const LEADER_SIG: u8 = 0x24;

    /// Vote request (candidate to peers).
    pub const VOTE_REQUEST: u8 = 0x30;
    /// Vote response (peer to candidate).
    pub const VOTE_RESPONSE: u8 = 0x31;
    /// Append-entries / heartbeat (leader to followers).
    pub const APPEND_ENTRIES: u8 = 0x32;
    /// Append-entries acknowledgement (follower to leader).
    pub const APPEND_RESPONSE: u8 = 0x33;
    /// Signature fragment submitted by an oracle node.
    pub const FRAGMENT_SUBMIT: u8 = 0x34;
    /// Task registration broadcast to the committee.
    pub const TASK_REGISTER: u8 = 0x35;
    /// Replicated log entry.
    pub const LOG_ENTRY: u8 = 0x36;
    /// Settlement package emitted by the committee leader.
    pub const PACKAGE: u8 = 0x37;
    /// Per-signer response-time record inside a package.
    pub const RESPONSE_TIME: u8 = 0x38;
    /// Fetched observation payload: source id plus epoch value.
    pub const OBSERVATION: u8 = 0x39;
}

/// Decoding failure for the tagged envelope format.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("expected tag 0x{expected:02x} but found 0x{found:02x} at offset {offset}")]
    UnexpectedTag { expected: u8, found: u8, offset: usize },
    #[error("envelope truncated at offset {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("{trailing} trailing bytes after the last expected field")]
    TrailingBytes { trailing: usize },
    #[error("integer field of {len} bytes overflows u64")]
    IntTooWide { len: usize },
    #[error("fixed-width field must be {expected} bytes, found {found}")]
    BadWidth { expected: usize, found: usize },
    #[error("payload of {len} bytes exceeds the 65535-byte field limit")]
    FieldTooLong { len: usize },
}

/// Incremental encoder appending tagged fields to an owned buffer.
#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Consumes the writer and returns the encoded bytes.
    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    /// Appends one raw field. Panics if `payload` exceeds the u16 length
    /// limit; all structures in this crate are far below it.
    pub fn put(&mut self, tag: u8, payload: &[u8]) -> &mut Self {
        assert!(
            payload.len() <= u16::MAX as usize,
            "wire field payload of {} bytes exceeds the 65535-byte limit",
            payload.len()
        );
        self.buf.push(tag);
        self.buf.extend_from_slice(&(payload.len() as u16).to_be_bytes());
        self.buf.extend_from_slice(payload);
        self
    }

    /// Appends an unsigned integer in minimal big-endian width.
    pub fn put_uint(&mut self, tag: u8, value: u64) -> &mut Self {
        let be = value.to_be_bytes();
        let skip = be.iter().take_while(|&&b| b == 0).count();
        self.put(tag, &be[skip..])
    }

    /// Appends a large natural in minimal big-endian width.
    pub fn put_big(&mut self, tag: u8, value: &BigUint) -> &mut Self {
        self.put(tag, &value.to_bytes_be())
    }

    /// Appends raw bytes.
    pub fn put_bytes(&mut self, tag: u8, value: &[u8]) -> &mut Self {
        self.put(tag, value)
    }

    /// Appends a double as its 8-byte big-endian bit pattern.
    pub fn put_f64(&mut self, tag: u8, value: f64) -> &mut Self {
        self.put(tag, &value.to_bits().to_be_bytes())
    }

    /// Appends an already-encoded structure nested under `tag`.
    pub fn put_nested(&mut self, tag: u8, inner: &[u8]) -> &mut Self {
        self.put(tag, inner)
    }
}

/// Sequential decoder over an encoded envelope.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    /// True once every byte has been consumed.
    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    /// Fails unless the whole input has been consumed.
    pub fn expect_end(&self) -> Result<(), WireError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(WireError::TrailingBytes { trailing: self.buf.len() - self.pos })
        }
    }

    /// Returns the tag of the next field without consuming it.
    pub fn peek_tag(&self) -> Result<u8, WireError> {
        if self.pos >= self.buf.len() {
            return Err(WireError::Truncated { offset: self.pos, needed: 1 });
        }
        Ok(self.buf[self.pos])
    }

    /// Consumes the next field, which must carry `tag`, returning its payload.
    pub fn take(&mut self, tag: u8) -> Result<&'a [u8], WireError> {
        let found = self.peek_tag()?;
        if found != tag {
            return Err(WireError::UnexpectedTag { expected: tag, found, offset: self.pos });
        }
        let header_end = self.pos + 3;
        if header_end > self.buf.len() {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: header_end - self.buf.len(),
            });
        }
        let len = u16::from_be_bytes([self.buf[self.pos + 1], self.buf[self.pos + 2]]) as usize;
        let end = header_end + len;
        if end > self.buf.len() {
            return Err(WireError::Truncated { offset: header_end, needed: end - self.buf.len() });
        }
        self.pos = end;
        Ok(&self.buf[header_end..end])
    }

    /// Consumes an unsigned integer field.
    pub fn take_uint(&mut self, tag: u8) -> Result<u64, WireError> {
        let payload = self.take(tag)?;
        if payload.len() > 8 {
            return Err(WireError::IntTooWide { len: payload.len() });
        }
        let mut be = [0u8; 8];
        be[8 - payload.len()..].copy_from_slice(payload);
        Ok(u64::from_be_bytes(be))
    }

    /// Consumes a large-natural field.
    pub fn take_big(&mut self, tag: u8) -> Result<BigUint, WireError> {
        Ok(BigUint::from_bytes_be(self.take(tag)?))
    }

    /// Consumes a double field.
    pub fn take_f64(&mut self, tag: u8) -> Result<f64, WireError> {
        let payload = self.take(tag)?;
        if payload.len() != 8 {
            return Err(WireError::BadWidth { expected: 8, found: payload.len() });
        }
        let mut be = [0u8; 8];
        be.copy_from_slice(payload);
        Ok(f64::from_bits(u64::from_be_bytes(be)))
    }

    /// Consumes a fixed-width byte field of exactly `N` bytes.
    pub fn take_array<const N: usize>(&mut self, tag: u8) -> Result<[u8; N], WireError> {
        let payload = self.take(tag)?;
        let arr: [u8; N] = payload
            .try_into()
            .map_err(|_| WireError::BadWidth { expected: N, found: payload.len() })?;
        Ok(arr)
    }

    /// Consumes a byte-string field.
    pub fn take_bytes(&mut self, tag: u8) -> Result<&'a [u8], WireError> {
        self.take(tag)
    }
}
