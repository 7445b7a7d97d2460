//! Interest and content-object messages and their TLV codec.
//!
//! Layout: one type byte (`0x01` interest, `0x02` content object), then
//! fields as `(id: u8, len: u32 BE, value)` in strictly ascending id order.
//! Empty optional fields are omitted, so every message has exactly one
//! encoding. Stream transports wrap each message in a frame prefixed by its
//! 4-byte big-endian length.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha512_256};
use thiserror::Error;

use crate::names::{Name, NameError};

pub const TYPE_INTEREST: u8 = 0x01;
pub const TYPE_CONTENT: u8 = 0x02;

pub const FIELD_NAME: u8 = 0x01;
pub const FIELD_PAYLOAD: u8 = 0x02;
pub const FIELD_EXPIRY: u8 = 0x03;
pub const FIELD_VALIDATION: u8 = 0x04;

/// Largest frame body accepted from a stream.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

/// Prefix of the final name segment of a payload-bearing interest.
pub const HASH_SEGMENT_PREFIX: &str = "h=";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("E_CODEC: {0}")]
    Codec(String),
    #[error(transparent)]
    BadName(#[from] NameError),
    #[error("E_HASH_MISMATCH: payload digest does not match the name suffix")]
    HashMismatch,
    #[error("a payload-bearing interest needs a non-empty payload")]
    EmptyPayload,
}

fn codec(msg: impl Into<String>) -> WireError {
    WireError::Codec(msg.into())
}

/// Digest used for the payload suffix; fixed per realm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadDigest {
    #[default]
    Sha256,
    Sha512_256,
}

impl PayloadDigest {
    pub fn digest(self, data: &[u8]) -> [u8; 32] {
        match self {
            PayloadDigest::Sha256 => Sha256::digest(data).into(),
            PayloadDigest::Sha512_256 => Sha512_256::digest(data).into(),
        }
    }

    /// The `h=<hex64>` name segment for `payload`.
    pub fn segment(self, payload: &[u8]) -> String {
        format!("{HASH_SEGMENT_PREFIX}{}", hex::encode(self.digest(payload)))
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Interest {
    name: Name,
    payload: Vec<u8>,
}

impl Interest {
    /// Payload-free interest.
    pub fn new(name: Name) -> Self {
        Self {
            name,
            payload: Vec::new(),
        }
    }

    /// Validates the payload-hash rule.
    pub fn from_parts(
        name: Name,
        payload: Vec<u8>,
        digest: PayloadDigest,
    ) -> Result<Self, WireError> {
        if !payload.is_empty() && name.last() != digest.segment(&payload) {
            return Err(WireError::HashMismatch);
        }
        Ok(Self { name, payload })
    }

    pub fn name(&self) -> &Name {
        &self.name
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// The name without the payload-hash segment. Equal to [`Self::name`] for
    /// payload-free interests.
    pub fn base_name(&self) -> Name {
        if self.payload.is_empty() {
            self.name.clone()
        } else {
            self.name.parent().unwrap_or_else(|| self.name.clone())
        }
    }
}

impl fmt::Debug for Interest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Interest")
            .field("name", &self.name)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

pub fn attach_payload(base_name: &Name, payload: Vec<u8>) -> Result<Interest, WireError> {
    attach_payload_with(base_name, payload, PayloadDigest::default())
}

/// Appends `h=<digest(payload)>` to `base_name`.
pub fn attach_payload_with(
    base_name: &Name,
    payload: Vec<u8>,
    digest: PayloadDigest,
) -> Result<Interest, WireError> {
    if payload.is_empty() {
        return Err(WireError::EmptyPayload);
    }
    let name = base_name.child(digest.segment(&payload))?;
    Ok(Interest { name, payload })
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ContentObject {
    pub name: Name,
    pub payload: Vec<u8>,
    /// Seconds a router may cache this object; 0 forbids caching.
    pub expiry_time: u64,
    /// Carried opaquely.
    pub validation: Vec<u8>,
}

impl ContentObject {
    pub fn new(name: Name, payload: Vec<u8>, expiry_time: u64) -> Self {
        Self {
            name,
            payload,
            expiry_time,
            validation: Vec::new(),
        }
    }

    /// Uncacheable reply, used for every protocol response.
    pub fn uncacheable(name: Name, payload: Vec<u8>) -> Self {
        Self::new(name, payload, 0)
    }
}

impl fmt::Debug for ContentObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContentObject")
            .field("name", &self.name)
            .field("payload_len", &self.payload.len())
            .field("expiry_time", &self.expiry_time)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    Interest(Interest),
    Content(ContentObject),
}

impl Message {
    pub fn name(&self) -> &Name {
        match self {
            Message::Interest(i) => i.name(),
            Message::Content(c) => &c.name,
        }
    }
}

impl From<Interest> for Message {
    fn from(i: Interest) -> Self {
        Message::Interest(i)
    }
}

impl From<ContentObject> for Message {
    fn from(c: ContentObject) -> Self {
        Message::Content(c)
    }
}

fn put_field(out: &mut Vec<u8>, id: u8, value: &[u8]) {
    out.push(id);
    out.extend_from_slice(&(value.len() as u32).to_be_bytes());
    out.extend_from_slice(value);
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        Message::Interest(i) => {
            out.push(TYPE_INTEREST);
            put_field(&mut out, FIELD_NAME, i.name.to_string().as_bytes());
            if !i.payload.is_empty() {
                put_field(&mut out, FIELD_PAYLOAD, &i.payload);
            }
        }
        Message::Content(c) => {
            out.push(TYPE_CONTENT);
            put_field(&mut out, FIELD_NAME, c.name.to_string().as_bytes());
            if !c.payload.is_empty() {
                put_field(&mut out, FIELD_PAYLOAD, &c.payload);
            }
            put_field(&mut out, FIELD_EXPIRY, &c.expiry_time.to_be_bytes());
            if !c.validation.is_empty() {
                put_field(&mut out, FIELD_VALIDATION, &c.validation);
            }
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
    decode_with(bytes, PayloadDigest::default())
}

pub fn decode_with(bytes: &[u8], digest: PayloadDigest) -> Result<Message, WireError> {
    let (&ty, mut rest) = bytes.split_first().ok_or_else(|| codec("empty buffer"))?;
    let allowed: &[u8] = match ty {
        TYPE_INTEREST => &[FIELD_NAME, FIELD_PAYLOAD],
        TYPE_CONTENT => &[FIELD_NAME, FIELD_PAYLOAD, FIELD_EXPIRY, FIELD_VALIDATION],
        other => return Err(codec(format!("unknown message type {other:#04x}"))),
    };

    let mut fields: [Option<&[u8]>; 5] = [None; 5];
    let mut last_id = 0u8;
    while !rest.is_empty() {
        if rest.len() < 5 {
            return Err(codec("truncated field header"));
        }
        let id = rest[0];
        let len = u32::from_be_bytes(rest[1..5].try_into().unwrap()) as usize;
        if !allowed.contains(&id) {
            return Err(codec(format!("unknown field {id:#04x}")));
        }
        if id <= last_id {
            return Err(codec("fields out of order or duplicated"));
        }
        let value = rest
            .get(5..5 + len)
            .ok_or_else(|| codec("field length exceeds buffer"))?;
        fields[id as usize] = Some(value);
        last_id = id;
        rest = &rest[5 + len..];
    }

    let name_bytes = fields[FIELD_NAME as usize].ok_or_else(|| codec("missing name"))?;
    let name_text = std::str::from_utf8(name_bytes).map_err(|_| NameError::BadName("name is not UTF-8"))?;
    let name = Name::parse(name_text)?;

    let optional = |id: u8| -> Result<Vec<u8>, WireError> {
        match fields[id as usize] {
            Some([]) => Err(codec("empty optional field must be omitted")),
            Some(v) => Ok(v.to_vec()),
            None => Ok(Vec::new()),
        }
    };
    let payload = optional(FIELD_PAYLOAD)?;

    if ty == TYPE_INTEREST {
        return Ok(Message::Interest(Interest::from_parts(name, payload, digest)?));
    }

    let expiry = fields[FIELD_EXPIRY as usize].ok_or_else(|| codec("missing expiry"))?;
    let expiry: [u8; 8] = expiry
        .try_into()
        .map_err(|_| codec("expiry must be 8 bytes"))?;
    Ok(Message::Content(ContentObject {
        name,
        payload,
        expiry_time: u64::from_be_bytes(expiry),
        validation: optional(FIELD_VALIDATION)?,
    }))
}

/// Prefixes `body` with its 4-byte big-endian length.
pub fn frame(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// `(frame body, rest of the buffer)`.
pub type Split<'a> = (&'a [u8], &'a [u8]);

/// Splits one complete frame off the front of `buf`. Returns `Ok(None)` when
/// more bytes are needed.
pub fn split_frame(buf: &[u8]) -> Result<Option<Split<'_>>, WireError> {
    if buf.len() < 4 {
        return Ok(None);
    }
    let len = u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME_LEN {
        return Err(codec("frame too large"));
    }
    if buf.len() < 4 + len {
        return Ok(None);
    }
    Ok(Some((&buf[4..4 + len], &buf[4 + len..])))
}

/// Closed set of protocol error codes carried in error replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ErrorCode {
    UnknownUser = 1,
    TgtExpired = 2,
    TgtInvalid = 3,
    NotAuthorized = 4,
    CgtExpired = 5,
    CgtInvalid = 6,
    PrefixMismatch = 7,
    NoContent = 8,
    ChallengeFailed = 9,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 9] = [
        ErrorCode::UnknownUser,
        ErrorCode::TgtExpired,
        ErrorCode::TgtInvalid,
        ErrorCode::NotAuthorized,
        ErrorCode::CgtExpired,
        ErrorCode::CgtInvalid,
        ErrorCode::PrefixMismatch,
        ErrorCode::NoContent,
        ErrorCode::ChallengeFailed,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| *c as u8 == v)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownUser => "E_UNKNOWN_USER",
            ErrorCode::TgtExpired => "E_TGT_EXPIRED",
            ErrorCode::TgtInvalid => "E_TGT_INVALID",
            ErrorCode::NotAuthorized => "E_NOT_AUTHORIZED",
            ErrorCode::CgtExpired => "E_CGT_EXPIRED",
            ErrorCode::CgtInvalid => "E_CGT_INVALID",
            ErrorCode::PrefixMismatch => "E_PREFIX_MISMATCH",
            ErrorCode::NoContent => "E_NO_CONTENT",
            ErrorCode::ChallengeFailed => "E_CHALLENGE_FAILED",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorPayload {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    /// `(code, UTF-8 message)`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.message.len());
        out.push(self.code as u8);
        out.extend_from_slice(self.message.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let (&code, msg) = bytes.split_first().ok_or_else(|| codec("empty error payload"))?;
        let code = ErrorCode::from_u8(code).ok_or_else(|| codec(format!("unknown error code {code}")))?;
        let message = String::from_utf8(msg.to_vec()).map_err(|_| codec("error message is not UTF-8"))?;
        Ok(Self { code, message })
    }
}

const STATUS_OK: u8 = 0x00;

/// Payload of a protocol reply: status byte `0x00` followed by the body, or
/// an [`ErrorPayload`] whose first byte is the non-zero error code.
pub fn encode_reply(result: Result<&[u8], &ErrorPayload>) -> Vec<u8> {
    match result {
        Ok(body) => {
            let mut out = Vec::with_capacity(1 + body.len());
            out.push(STATUS_OK);
            out.extend_from_slice(body);
            out
        }
        Err(e) => e.encode(),
    }
}

pub fn decode_reply(payload: &[u8]) -> Result<Result<&[u8], ErrorPayload>, WireError> {
    match payload.split_first() {
        Some((&STATUS_OK, body)) => Ok(Ok(body)),
        Some(_) => Ok(Err(ErrorPayload::decode(payload)?)),
        None => Err(codec("empty reply payload")),
    }
}

/// Error reply content object for `name`; error replies are never cacheable.
pub fn error_content(name: Name, code: ErrorCode, message: impl Into<String>) -> ContentObject {
    ContentObject::uncacheable(name, ErrorPayload::new(code, message).encode())
}

pub fn ok_content(name: Name, body: &[u8]) -> ContentObject {
    ContentObject::uncacheable(name, encode_reply(Ok(body)))
}

/// Two length-framed parts: `len(a): u16 BE ‖ a ‖ b`.
pub fn join_parts(a: &[u8], b: &[u8]) -> Vec<u8> {
    debug_assert!(a.len() <= u16::MAX as usize);
    let mut out = Vec::with_capacity(2 + a.len() + b.len());
    out.extend_from_slice(&(a.len() as u16).to_be_bytes());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

pub fn split_parts(bytes: &[u8]) -> Result<(&[u8], &[u8]), WireError> {
    if bytes.len() < 2 {
        return Err(codec("truncated part header"));
    }
    let len = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    let rest = &bytes[2..];
    if rest.len() < len {
        return Err(codec("part length exceeds buffer"));
    }
    Ok(rest.split_at(len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(s: &str) -> Name {
        Name::parse(s).unwrap()
    }

    #[test]
    fn interest_without_payload_layout() {
        let bytes = encode(&Interest::new(n("/a/b")).into());
        assert_eq!(bytes, [&[0x01, 0x01, 0, 0, 0, 4][..], b"/a/b"].concat());
    }

    #[test]
    fn content_layout_with_zero_expiry() {
        let c = ContentObject::new(n("/a"), b"xy".to_vec(), 0);
        let bytes = encode(&c.clone().into());
        let expected = [
            &[0x02, 0x01, 0, 0, 0, 2][..],
            b"/a",
            &[0x02, 0, 0, 0, 2],
            b"xy",
            &[0x03, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 0],
        ]
        .concat();
        assert_eq!(bytes, expected);
        assert_eq!(decode(&bytes).unwrap(), Message::Content(c));
    }

    #[test]
    fn attach_payload_appends_digest_segment() {
        let base = n("/edu/uni-X/ics/TGT");
        let i = attach_payload(&base, b"alice".to_vec()).unwrap();
        assert_eq!(i.name().len(), base.len() + 1);
        let last = i.name().last();
        assert!(last.starts_with("h="));
        assert_eq!(last.len(), 2 + 64);
        assert_eq!(
            last,
            "h=2bd806c97f0e00af1a1fc3328fa763a9269723c8db8fac4f93af71db186d6e90"
        );
        assert_eq!(i.base_name(), base);
        assert_eq!(attach_payload(&base, b"alice".to_vec()).unwrap(), i);
        assert_ne!(attach_payload(&base, b"bob".to_vec()).unwrap().name(), i.name());
        assert_eq!(decode(&encode(&i.clone().into())).unwrap(), Message::Interest(i));
        assert_eq!(attach_payload(&base, vec![]), Err(WireError::EmptyPayload));
    }

    #[test]
    fn payload_flip_is_a_hash_mismatch() {
        let i = attach_payload(&n("/x"), b"payload".to_vec()).unwrap();
        let mut bytes = encode(&i.into());
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        assert_eq!(decode(&bytes), Err(WireError::HashMismatch));
    }

    #[test]
    fn rejects_malformed_buffers() {
        let bytes = encode(&ContentObject::new(n("/a/b"), b"p".to_vec(), 5).into());
        for cut in 0..bytes.len() {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        assert!(matches!(decode(&[0x03]), Err(WireError::Codec(_))));
        // interest carrying an expiry field
        let bad = [&[0x01, 0x01, 0, 0, 0, 2][..], b"/a", &[0x03, 0, 0, 0, 8], &[0; 8]].concat();
        assert!(matches!(decode(&bad), Err(WireError::Codec(_))));
        // zero-length payload field is non-canonical
        let bad = [&[0x01, 0x01, 0, 0, 0, 2][..], b"/a", &[0x02, 0, 0, 0, 0]].concat();
        assert!(matches!(decode(&bad), Err(WireError::Codec(_))));
        // fields out of order
        let bad = [&[0x02, 0x03, 0, 0, 0, 8][..], &[0; 8], &[0x01, 0, 0, 0, 2], b"/a"].concat();
        assert!(matches!(decode(&bad), Err(WireError::Codec(_))));
        // non-canonical name
        let bad = [&[0x01, 0x01, 0, 0, 0, 3][..], b"/a/"].concat();
        assert!(matches!(decode(&bad), Err(WireError::BadName(_))));
        // oversize length
        let bad = [&[0x01, 0x01, 0xff, 0xff, 0xff, 0xff][..], b"/a"].concat();
        assert!(matches!(decode(&bad), Err(WireError::Codec(_))));
    }

    #[test]
    fn digest_choice_is_respected() {
        let base = n("/x");
        let i = attach_payload_with(&base, b"p".to_vec(), PayloadDigest::Sha512_256).unwrap();
        let bytes = encode(&i.clone().into());
        assert_eq!(decode_with(&bytes, PayloadDigest::Sha512_256).unwrap(), Message::Interest(i));
        assert_eq!(decode(&bytes), Err(WireError::HashMismatch));
    }

    #[test]
    fn frames() {
        let f = frame(b"abc");
        assert_eq!(f, [0, 0, 0, 3, b'a', b'b', b'c']);
        let mut two = f.clone();
        two.extend(frame(b"de"));
        let (body, rest) = split_frame(&two).unwrap().unwrap();
        assert_eq!(body, b"abc");
        assert_eq!(split_frame(rest).unwrap().unwrap().0, b"de");
        assert_eq!(split_frame(&f[..5]).unwrap(), None);
        assert!(split_frame(&[0xff, 0xff, 0xff, 0xff]).is_err());
    }

    #[test]
    fn reply_envelope() {
        let ok = encode_reply(Ok(b"body"));
        assert_eq!(decode_reply(&ok).unwrap(), Ok(&b"body"[..]));
        let e = ErrorPayload::new(ErrorCode::UnknownUser, "no such user");
        let enc = encode_reply(Err(&e));
        assert_eq!(enc[0], 1);
        assert_eq!(decode_reply(&enc).unwrap(), Err(e));
        assert!(decode_reply(&[]).is_err());
        assert!(decode_reply(&[42, b'x']).is_err());
        for code in ErrorCode::ALL {
            assert_eq!(ErrorCode::from_u8(code as u8), Some(code));
        }
    }

    #[test]
    fn parts() {
        let joined = join_parts(b"tgt", b"token");
        assert_eq!(split_parts(&joined).unwrap(), (&b"tgt"[..], &b"token"[..]));
        assert!(split_parts(&[0, 9, 1]).is_err());
    }

    fn segment() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9=._-]{1,8}"
    }

    fn name() -> impl Strategy<Value = Name> {
        prop::collection::vec(segment(), 1..6).prop_map(|s| Name::from_segments(s).unwrap())
    }

    fn message() -> impl Strategy<Value = Message> {
        prop_oneof![
            name().prop_map(|n| Message::Interest(Interest::new(n))),
            (name(), prop::collection::vec(any::<u8>(), 1..64))
                .prop_map(|(n, p)| Message::Interest(attach_payload(&n, p).unwrap())),
            (name(), prop::collection::vec(any::<u8>(), 0..64), any::<u64>(), prop::collection::vec(any::<u8>(), 0..8))
                .prop_map(|(name, payload, expiry_time, validation)| {
                    Message::Content(ContentObject { name, payload, expiry_time, validation })
                }),
        ]
    }

    proptest! {
        #[test]
        fn codec_round_trip(m in message()) {
            let bytes = encode(&m);
            prop_assert_eq!(decode(&bytes).unwrap(), m);
            prop_assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
        }

        #[test]
        fn encoding_is_injective(a in message(), b in message()) {
            if a != b {
                prop_assert_ne!(encode(&a), encode(&b));
            }
        }

        #[test]
        fn mutated_payload_interest_is_rejected(
            n in name(),
            p in prop::collection::vec(any::<u8>(), 1..64),
            pos in any::<prop::sample::Index>(),
            flip in 1u8..=255,
        ) {
            let base_len = n.to_string().len();
            let i = attach_payload(&n, p).unwrap();
            let mut bytes = encode(&i.into());
            // Bytes of the base name are not covered by the payload digest; a
            // change there yields a different, well-formed interest.
            let base = 6..6 + base_len;
            let candidates: Vec<usize> = (0..bytes.len()).filter(|i| !base.contains(i)).collect();
            let at = candidates[pos.index(candidates.len())];
            bytes[at] ^= flip;
            let res = decode(&bytes);
            prop_assert!(
                matches!(res, Err(WireError::HashMismatch) | Err(WireError::Codec(_)) | Err(WireError::BadName(_))),
                "mutation at {} gave {:?}", at, res
            );
        }
    }
}
