//! TLS record-layer scanning and handshake header parsing.
//!
//! The scanner walks one direction of a TCP byte stream and attributes every
//! byte to the record it belongs to, carrying state across segment
//! boundaries so results are independent of how the stream was chunked. The
//! first application-data record marks the end of the handshake phase.
//!
//! No decryption: the parsers only read the cleartext framing of
//! ClientHello/ServerHello (session id length, cipher suites, extension
//! lengths, SNI).

use std::ops::Range;

use thiserror::Error;

pub const CONTENT_CHANGE_CIPHER_SPEC: u8 = 20;
pub const CONTENT_ALERT: u8 = 21;
pub const CONTENT_HANDSHAKE: u8 = 22;
pub const CONTENT_APPLICATION_DATA: u8 = 23;

pub const HANDSHAKE_CLIENT_HELLO: u8 = 1;
pub const HANDSHAKE_SERVER_HELLO: u8 = 2;

/// Record length sanity bound: 2^14 payload plus expansion allowance.
pub const MAX_RECORD_LEN: u16 = (1 << 14) + 2048;

const RECORD_HEADER_LEN: usize = 5;

/// Upper bound on buffered handshake bytes per direction.
const HANDSHAKE_BUFFER_CAP: usize = 256 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TlsError {
    #[error("malformed TLS record: {0}")]
    MalformedRecord(&'static str),
    #[error("malformed TLS handshake: {0}")]
    MalformedHandshake(&'static str),
}

/// A record header encountered while scanning a segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordEvent {
    pub content_type: u8,
    pub version_major: u8,
    pub version_minor: u8,
    pub declared_len: u16,
    /// Offset within the scanned payload where the record body begins.
    pub body_start: usize,
}

/// Phase of a TCP segment, decided by the record types its bytes belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentPhase {
    /// At least one byte belongs to an application-data record. Mixed
    /// segments land here: once application data is seen the handshake
    /// phase is over.
    ApplicationData,
    /// A handshake-phase record (types 20/21/22) starts in this segment.
    Handshake,
    /// Every byte continues a record begun in an earlier segment.
    Continuation,
}

/// How the segment counts in per-flow packet lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketClass {
    Handshake,
    ApplicationData,
}

/// Result of scanning one segment's payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOutcome {
    /// Record headers found in this segment, in stream order.
    pub events: Vec<RecordEvent>,
    /// Body byte extents within this payload, tagged by content type.
    /// Record header bytes are excluded.
    pub body_spans: Vec<(u8, Range<usize>)>,
    pub phase: SegmentPhase,
}

impl ScanOutcome {
    pub fn packet_class(&self) -> PacketClass {
        match self.phase {
            SegmentPhase::ApplicationData => PacketClass::ApplicationData,
            _ => PacketClass::Handshake,
        }
    }
}

/// Per-direction carry state of the record scanner.
#[derive(Debug, Clone, Default)]
pub struct RecordCursor {
    bytes_remaining_in_record: usize,
    current_content_type: Option<u8>,
    header_stash: [u8; RECORD_HEADER_LEN],
    header_stash_len: usize,
}

impl RecordCursor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes still owed to the currently open record.
    pub fn bytes_remaining_in_record(&self) -> usize {
        self.bytes_remaining_in_record
    }

    /// Scans the next in-order payload bytes of this direction.
    ///
    /// Every byte is attributed to a record: body bytes inside an open
    /// record, header bytes (possibly split across segments) to the record
    /// they introduce. An invalid content type or an oversized declared
    /// length is a `MalformedRecord`; the caller marks the flow unusable.
    pub fn scan_segment(&mut self, payload: &[u8]) -> Result<ScanOutcome, TlsError> {
        let mut events = Vec::new();
        let mut body_spans: Vec<(u8, Range<usize>)> = Vec::new();
        let mut saw_appdata = false;
        let mut saw_handshake_phase = false;
        let mut new_record_started = false;

        let mut i = 0;
        while i < payload.len() {
            if self.bytes_remaining_in_record > 0 {
                let ty = self
                    .current_content_type
                    .expect("open record always has a type");
                let take = self.bytes_remaining_in_record.min(payload.len() - i);
                match body_spans.last_mut() {
                    Some((t, range)) if *t == ty && range.end == i => range.end = i + take,
                    _ => body_spans.push((ty, i..i + take)),
                }
                mark_phase(ty, &mut saw_appdata, &mut saw_handshake_phase);
                self.bytes_remaining_in_record -= take;
                if self.bytes_remaining_in_record == 0 {
                    self.current_content_type = None;
                }
                i += take;
                continue;
            }

            // At a header boundary. The content type byte is validated as
            // soon as it is seen, even if the rest of the header is split.
            if self.header_stash_len == 0 {
                let ty = payload[i];
                if !(CONTENT_CHANGE_CIPHER_SPEC..=CONTENT_APPLICATION_DATA).contains(&ty) {
                    return Err(TlsError::MalformedRecord("invalid content type"));
                }
                new_record_started = true;
            }
            let need = RECORD_HEADER_LEN - self.header_stash_len;
            let have = payload.len() - i;
            if have < need {
                self.header_stash[self.header_stash_len..self.header_stash_len + have]
                    .copy_from_slice(&payload[i..]);
                self.header_stash_len += have;
                mark_phase(self.header_stash[0], &mut saw_appdata, &mut saw_handshake_phase);
                break;
            }
            self.header_stash[self.header_stash_len..RECORD_HEADER_LEN]
                .copy_from_slice(&payload[i..i + need]);
            let hdr = self.header_stash;
            self.header_stash_len = 0;
            i += need;

            let declared_len = u16::from_be_bytes([hdr[3], hdr[4]]);
            if declared_len > MAX_RECORD_LEN {
                return Err(TlsError::MalformedRecord("declared length above bound"));
            }
            mark_phase(hdr[0], &mut saw_appdata, &mut saw_handshake_phase);
            events.push(RecordEvent {
                content_type: hdr[0],
                version_major: hdr[1],
                version_minor: hdr[2],
                declared_len,
                body_start: i,
            });
            if declared_len > 0 {
                self.current_content_type = Some(hdr[0]);
                self.bytes_remaining_in_record = declared_len as usize;
            }
        }

        let phase = if saw_appdata {
            SegmentPhase::ApplicationData
        } else if new_record_started {
            SegmentPhase::Handshake
        } else {
            SegmentPhase::Continuation
        };
        Ok(ScanOutcome {
            events,
            body_spans,
            phase,
        })
    }
}

fn mark_phase(content_type: u8, saw_appdata: &mut bool, saw_handshake: &mut bool) {
    if content_type == CONTENT_APPLICATION_DATA {
        *saw_appdata = true;
    } else {
        *saw_handshake = true;
    }
}

/// Handshake-header features of a ClientHello, plus the SNI hostname.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHelloSummary {
    pub session_id_len: u8,
    pub cipher_suites_count: u16,
    pub extensions_total_len: u16,
    pub sni: Option<String>,
}

/// Handshake-header features of a ServerHello.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerHelloSummary {
    pub session_id_len: u8,
    pub chosen_cipher_suite: u16,
    pub extensions_total_len: u16,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn u8(&mut self) -> Option<u8> {
        let v = *self.buf.get(self.pos)?;
        self.pos += 1;
        Some(v)
    }
    fn u16(&mut self) -> Option<u16> {
        let b = self.bytes(2)?;
        Some(u16::from_be_bytes([b[0], b[1]]))
    }
    fn u24(&mut self) -> Option<u32> {
        let b = self.bytes(3)?;
        Some(u32::from_be_bytes([0, b[0], b[1], b[2]]))
    }
    fn bytes(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }
}

/// Parses a complete ClientHello handshake message (including the 4-byte
/// message header) into its summary features.
pub fn parse_client_hello(handshake_body: &[u8]) -> Result<ClientHelloSummary, TlsError> {
    let err = |m| TlsError::MalformedHandshake(m);
    let mut r = Reader::new(handshake_body);
    if r.u8() != Some(HANDSHAKE_CLIENT_HELLO) {
        return Err(err("not a ClientHello"));
    }
    let msg_len = r.u24().ok_or(err("truncated length"))? as usize;
    if msg_len > r.remaining() {
        return Err(err("message length exceeds available bytes"));
    }
    let mut r = Reader::new(r.bytes(msg_len).unwrap());

    r.bytes(2).ok_or(err("truncated version"))?;
    r.bytes(32).ok_or(err("truncated random"))?;
    let session_id_len = r.u8().ok_or(err("truncated session id length"))?;
    if session_id_len > 32 {
        return Err(err("session id longer than 32"));
    }
    r.bytes(session_id_len as usize)
        .ok_or(err("truncated session id"))?;

    let suites_bytes = r.u16().ok_or(err("truncated cipher suites length"))?;
    if suites_bytes == 0 || suites_bytes % 2 != 0 {
        return Err(err("invalid cipher suites length"));
    }
    r.bytes(suites_bytes as usize)
        .ok_or(err("cipher suites overrun message"))?;
    let cipher_suites_count = suites_bytes / 2;

    let compression_len = r.u8().ok_or(err("truncated compression length"))?;
    r.bytes(compression_len as usize)
        .ok_or(err("truncated compression methods"))?;

    if r.remaining() == 0 {
        return Ok(ClientHelloSummary {
            session_id_len,
            cipher_suites_count,
            extensions_total_len: 0,
            sni: None,
        });
    }

    let extensions_total_len = r.u16().ok_or(err("truncated extensions length"))?;
    let ext_block = r
        .bytes(extensions_total_len as usize)
        .ok_or(err("extensions overrun message"))?;
    if r.remaining() != 0 {
        return Err(err("trailing bytes after extensions"));
    }
    let sni = parse_sni(ext_block)?;

    Ok(ClientHelloSummary {
        session_id_len,
        cipher_suites_count,
        extensions_total_len,
        sni,
    })
}

/// First host_name entry of the server_name extension, normalized:
/// lowercased, one trailing dot stripped.
fn parse_sni(ext_block: &[u8]) -> Result<Option<String>, TlsError> {
    let err = |m| TlsError::MalformedHandshake(m);
    let mut r = Reader::new(ext_block);
    while r.remaining() > 0 {
        let ext_type = r.u16().ok_or(err("truncated extension type"))?;
        let ext_len = r.u16().ok_or(err("truncated extension length"))?;
        let body = r
            .bytes(ext_len as usize)
            .ok_or(err("extension overruns block"))?;
        if ext_type != 0 {
            continue;
        }
        let mut e = Reader::new(body);
        let list_len = e.u16().ok_or(err("truncated server_name list"))? as usize;
        let list = e
            .bytes(list_len)
            .ok_or(err("server_name list overruns extension"))?;
        let mut l = Reader::new(list);
        while l.remaining() > 0 {
            let name_type = l.u8().ok_or(err("truncated server_name entry"))?;
            let name_len = l.u16().ok_or(err("truncated server_name length"))? as usize;
            let name = l.bytes(name_len).ok_or(err("server_name overruns list"))?;
            if name_type == 0 {
                let Ok(text) = std::str::from_utf8(name) else {
                    return Ok(None);
                };
                let mut host = text.to_ascii_lowercase();
                if host.ends_with('.') {
                    host.pop();
                }
                return Ok(Some(host));
            }
        }
        return Ok(None);
    }
    Ok(None)
}

/// Parses a complete ServerHello handshake message (including the 4-byte
/// message header) into its summary features.
pub fn parse_server_hello(handshake_body: &[u8]) -> Result<ServerHelloSummary, TlsError> {
    let err = |m| TlsError::MalformedHandshake(m);
    let mut r = Reader::new(handshake_body);
    if r.u8() != Some(HANDSHAKE_SERVER_HELLO) {
        return Err(err("not a ServerHello"));
    }
    let msg_len = r.u24().ok_or(err("truncated length"))? as usize;
    if msg_len > r.remaining() {
        return Err(err("message length exceeds available bytes"));
    }
    let mut r = Reader::new(r.bytes(msg_len).unwrap());

    r.bytes(2).ok_or(err("truncated version"))?;
    r.bytes(32).ok_or(err("truncated random"))?;
    let session_id_len = r.u8().ok_or(err("truncated session id length"))?;
    if session_id_len > 32 {
        return Err(err("session id longer than 32"));
    }
    r.bytes(session_id_len as usize)
        .ok_or(err("truncated session id"))?;
    let chosen_cipher_suite = r.u16().ok_or(err("truncated cipher suite"))?;
    r.u8().ok_or(err("truncated compression method"))?;

    let extensions_total_len = if r.remaining() == 0 {
        0
    } else {
        let len = r.u16().ok_or(err("truncated extensions length"))?;
        r.bytes(len as usize).ok_or(err("extensions overrun message"))?;
        if r.remaining() != 0 {
            return Err(err("trailing bytes after extensions"));
        }
        len
    };

    Ok(ServerHelloSummary {
        session_id_len,
        chosen_cipher_suite,
        extensions_total_len,
    })
}

/// Accumulates one direction's handshake-record bytes until the first
/// handshake message can be parsed. Only the first message matters: the
/// client leads with ClientHello and the server with ServerHello.
#[derive(Debug, Clone, Default)]
pub struct HandshakeAccumulator {
    buf: Vec<u8>,
    done: bool,
}

/// Outcome of feeding more handshake bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandshakeParse {
    /// Need more bytes.
    Pending,
    ClientHello(ClientHelloSummary),
    ServerHello(ServerHelloSummary),
    /// First message was neither hello; nothing to extract.
    Uninteresting,
}

impl HandshakeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Result<HandshakeParse, TlsError> {
        if self.done {
            return Ok(HandshakeParse::Uninteresting);
        }
        if self.buf.len() + bytes.len() > HANDSHAKE_BUFFER_CAP {
            self.done = true;
            return Err(TlsError::MalformedHandshake("handshake message too large"));
        }
        self.buf.extend_from_slice(bytes);
        if self.buf.len() < 4 {
            return Ok(HandshakeParse::Pending);
        }
        let msg_len = u32::from_be_bytes([0, self.buf[1], self.buf[2], self.buf[3]]) as usize;
        let total = 4 + msg_len;
        if self.buf.len() < total {
            return Ok(HandshakeParse::Pending);
        }
        self.done = true;
        let msg = &self.buf[..total];
        let parsed = match msg[0] {
            HANDSHAKE_CLIENT_HELLO => HandshakeParse::ClientHello(parse_client_hello(msg)?),
            HANDSHAKE_SERVER_HELLO => HandshakeParse::ServerHello(parse_server_hello(msg)?),
            _ => HandshakeParse::Uninteresting,
        };
        self.buf = Vec::new();
        Ok(parsed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::synth::{build_client_hello, build_record, build_server_hello};

    #[test]
    fn single_complete_appdata_record() {
        let mut c = RecordCursor::new();
        let mut payload = vec![23, 3, 3, 0, 5];
        payload.extend_from_slice(b"hello");
        let out = c.scan_segment(&payload).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].content_type, 23);
        assert_eq!(out.events[0].declared_len, 5);
        assert_eq!(out.events[0].body_start, 5);
        assert_eq!(out.phase, SegmentPhase::ApplicationData);
        assert_eq!(out.body_spans, vec![(23, 5..10)]);
        assert_eq!(c.bytes_remaining_in_record(), 0);
    }

    #[test]
    fn split_record_continues_in_next_segment() {
        let mut c = RecordCursor::new();
        let mut first = vec![22, 3, 1, 0, 16];
        first.extend_from_slice(&[0u8; 8]);
        let out = c.scan_segment(&first).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.phase, SegmentPhase::Handshake);
        assert_eq!(c.bytes_remaining_in_record(), 8);

        let out = c.scan_segment(&[0u8; 8]).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.phase, SegmentPhase::Continuation);
        assert_eq!(out.packet_class(), PacketClass::Handshake);
        assert_eq!(out.body_spans, vec![(22, 0..8)]);
        assert_eq!(c.bytes_remaining_in_record(), 0);
    }

    #[test]
    fn ccs_then_encrypted_finished_counts_as_handshake() {
        let mut c = RecordCursor::new();
        let mut payload = vec![20, 3, 3, 0, 1, 1, 22, 3, 3, 0, 40];
        payload.extend_from_slice(&[0xaa; 40]);
        let out = c.scan_segment(&payload).unwrap();
        assert_eq!(out.events.len(), 2);
        assert_eq!(out.events[0].content_type, 20);
        assert_eq!(out.events[1].content_type, 22);
        assert_eq!(out.phase, SegmentPhase::Handshake);
    }

    #[test]
    fn mixed_segment_resolves_to_application_data() {
        let mut c = RecordCursor::new();
        let mut payload = vec![22, 3, 3, 0, 2, 9, 9];
        payload.extend_from_slice(&[23, 3, 3, 0, 3]);
        payload.extend_from_slice(b"abc");
        let out = c.scan_segment(&payload).unwrap();
        assert_eq!(out.phase, SegmentPhase::ApplicationData);
        assert_eq!(out.packet_class(), PacketClass::ApplicationData);
    }

    #[test]
    fn header_split_across_segments() {
        let mut c = RecordCursor::new();
        let out = c.scan_segment(&[23, 3]).unwrap();
        assert!(out.events.is_empty());
        // The type byte is known, so the phase already flips.
        assert_eq!(out.phase, SegmentPhase::ApplicationData);
        let out = c.scan_segment(&[3, 0, 2, 0xbb, 0xbb]).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].declared_len, 2);
        assert_eq!(out.events[0].body_start, 3);
        assert_eq!(out.body_spans, vec![(23, 3..5)]);
    }

    #[test]
    fn invalid_content_type_is_malformed() {
        let mut c = RecordCursor::new();
        match c.scan_segment(&[0x47, 0x45, 0x54, 0x20, 0x2f]) {
            Err(TlsError::MalformedRecord(_)) => {}
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn oversized_record_is_malformed() {
        let mut c = RecordCursor::new();
        let bound = MAX_RECORD_LEN + 1;
        let payload = [22, 3, 3, (bound >> 8) as u8, bound as u8];
        assert!(matches!(
            c.scan_segment(&payload),
            Err(TlsError::MalformedRecord(_))
        ));
    }

    #[test]
    fn zero_length_record_is_consumed() {
        let mut c = RecordCursor::new();
        let out = c.scan_segment(&[22, 3, 3, 0, 0, 23, 3, 3, 0, 1, 0xcc]).unwrap();
        assert_eq!(out.events.len(), 2);
        assert_eq!(c.bytes_remaining_in_record(), 0);
    }

    #[test]
    fn minimal_client_hello() {
        // type(1) len(3) version(2) random(32) sid_len(1) suites_len(2)
        // suites(2) compression_len(1) compression(1), no extensions block
        let mut msg = vec![1, 0, 0, 41];
        msg.extend_from_slice(&[3, 3]);
        msg.extend_from_slice(&[0u8; 32]);
        msg.push(0);
        msg.extend_from_slice(&[0, 2, 0, 0x2f]);
        msg.extend_from_slice(&[1, 0]);
        let ch = parse_client_hello(&msg).unwrap();
        assert_eq!(ch.session_id_len, 0);
        assert_eq!(ch.cipher_suites_count, 1);
        assert_eq!(ch.extensions_total_len, 0);
        assert_eq!(ch.sni, None);
    }

    #[test]
    fn built_client_hello_round_trips() {
        let random = [7u8; 32];
        let sid = [9u8; 32];
        let suites: Vec<u16> = (0..15).map(|i| 0x1300 + i).collect();
        let msg = build_client_hello(&sid, &suites, Some("Example.COM."), Some(47), &random);
        let ch = parse_client_hello(&msg).unwrap();
        assert_eq!(ch.session_id_len, 32);
        assert_eq!(ch.cipher_suites_count, 15);
        assert_eq!(ch.sni.as_deref(), Some("example.com"));
        // server_name ext: 4 + 2 + 3 + len("example.com.") = 21; padding ext 4 + 47.
        assert_eq!(ch.extensions_total_len, 21 + 51);
    }

    #[test]
    fn client_hello_suite_overrun_is_malformed() {
        let mut msg = vec![1, 0, 0, 41];
        msg.extend_from_slice(&[3, 3]);
        msg.extend_from_slice(&[0u8; 32]);
        msg.push(0);
        msg.extend_from_slice(&[0, 200, 0, 0x2f]); // declares 200 bytes of suites
        msg.extend_from_slice(&[1, 0]);
        assert!(matches!(
            parse_client_hello(&msg),
            Err(TlsError::MalformedHandshake(_))
        ));
    }

    #[test]
    fn minimal_server_hello() {
        let mut msg = vec![2, 0, 0, 38];
        msg.extend_from_slice(&[3, 3]);
        msg.extend_from_slice(&[0u8; 32]);
        msg.push(0);
        msg.extend_from_slice(&[0x00, 0x2f]);
        msg.push(0);
        let sh = parse_server_hello(&msg).unwrap();
        assert_eq!(sh.session_id_len, 0);
        assert_eq!(sh.chosen_cipher_suite, 0x002f);
        assert_eq!(sh.extensions_total_len, 0);
    }

    #[test]
    fn built_server_hello_round_trips() {
        let msg = build_server_hello(&[1u8; 32], 0xc02f, Some(6), &[3u8; 32]);
        let sh = parse_server_hello(&msg).unwrap();
        assert_eq!(sh.session_id_len, 32);
        assert_eq!(sh.chosen_cipher_suite, 0xc02f);
        assert_eq!(sh.extensions_total_len, 10);
    }

    #[test]
    fn server_hello_truncated_at_cipher_suite_is_malformed() {
        let mut msg = vec![2, 0, 0, 36];
        msg.extend_from_slice(&[3, 3]);
        msg.extend_from_slice(&[0u8; 32]);
        msg.push(0);
        msg.push(0x00); // one byte of the suite, then nothing
        assert!(matches!(
            parse_server_hello(&msg),
            Err(TlsError::MalformedHandshake(_))
        ));
    }

    #[test]
    fn accumulator_parses_hello_split_across_records() {
        let random = [1u8; 32];
        let msg = build_client_hello(&[], &[0x002f, 0x0035], Some("test.example"), None, &random);
        let mut acc = HandshakeAccumulator::new();
        let (a, b) = msg.split_at(msg.len() / 2);
        assert_eq!(acc.push(a).unwrap(), HandshakeParse::Pending);
        match acc.push(b).unwrap() {
            HandshakeParse::ClientHello(ch) => assert_eq!(ch.sni.as_deref(), Some("test.example")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rechunking_preserves_events_and_spans() {
        // Build a small two-record stream and scan it under different
        // chunkings; events and per-byte attribution must agree.
        let mut stream = build_record(22, (3, 1), &[0x0b; 30]);
        stream.extend(build_record(23, (3, 3), &[0x0c; 17]));

        let collect = |chunks: &[&[u8]]| {
            let mut cursor = RecordCursor::new();
            let mut events = Vec::new();
            let mut attribution = Vec::new();
            for chunk in chunks {
                let out = cursor.scan_segment(chunk).unwrap();
                events.extend(out.events.into_iter().map(|e| (e.content_type, e.declared_len)));
                for (ty, range) in out.body_spans {
                    for _ in range {
                        attribution.push(ty);
                    }
                }
            }
            (events, attribution)
        };

        let whole = collect(&[&stream]);
        for split in [1, 4, 5, 6, 34, 36] {
            let (a, b) = stream.split_at(split);
            assert_eq!(collect(&[a, b]), whole, "split at {split}");
        }
        let bytes: Vec<&[u8]> = stream.chunks(1).collect();
        assert_eq!(collect(&bytes), whole);
    }
}
