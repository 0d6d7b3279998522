//! Packet ingestion: classic pcap files and pluggable live sources.
//!
//! The reference path is [`PcapReader`], which understands the classic pcap
//! format in both byte orders and both timestamp resolutions (nanosecond
//! timestamps are truncated to microseconds). Anything that can hand out
//! [`RawPacket`]s in capture order can stand in for it through the
//! [`PacketSource`] trait.

mod decode;

pub use decode::{decode_frame, TcpFlags, TcpSegmentView};
pub(crate) use decode::build_ethernet_frame;

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use thiserror::Error;

/// Link type for Ethernet frames.
pub const LINKTYPE_ETHERNET: u32 = 1;
/// Link type for raw IPv4/IPv6 packets (no link-layer header).
pub const LINKTYPE_RAW: u32 = 101;
/// BSD variant of the raw-IP link type.
pub const LINKTYPE_RAW_BSD: u32 = 12;

const PCAP_MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const PCAP_MAGIC_MICROS_SWAPPED: u32 = 0xd4c3_b2a1;
const PCAP_MAGIC_NANOS: u32 = 0xa1b2_3c4d;
const PCAP_MAGIC_NANOS_SWAPPED: u32 = 0x4d3c_b2a1;

/// One captured frame, as stored in a pcap record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    /// Capture timestamp in microseconds since the epoch.
    pub ts_micros: u64,
    /// Original on-wire length; at least `data.len()`.
    pub original_len: u32,
    /// Captured bytes (`captured_len` of the record).
    pub data: Vec<u8>,
}

impl RawPacket {
    pub fn captured_len(&self) -> u32 {
        self.data.len() as u32
    }
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("not a pcap file: unrecognized magic {0:#010x}")]
    UnknownMagic(u32),
    #[error("truncated pcap global header: {0} bytes, need 24")]
    TruncatedHeader(usize),
    #[error("truncated pcap record: header claims {wanted} bytes, {got} remain")]
    TruncatedRecord { wanted: u32, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything that yields packets in capture order.
///
/// The pcap backend is the reference implementation; a live-capture backend
/// only has to honor the same `next_packet` contract.
pub trait PacketSource {
    /// The pcap link type of frames produced by this source.
    fn link_type(&self) -> u32;
    /// Next packet in order, or `None` at end of stream. After an error the
    /// stream is terminated and keeps returning `None`.
    fn next_packet(&mut self) -> Result<Option<RawPacket>, CaptureError>;
}

/// Streaming reader over a classic pcap file.
pub struct PcapReader<R> {
    reader: R,
    big_endian: bool,
    nanos: bool,
    link_type: u32,
    snaplen: u32,
    done: bool,
}

/// Opens a pcap file and positions the stream at its first record.
pub fn open_pcap<P: AsRef<Path>>(path: P) -> Result<PcapReader<BufReader<File>>, CaptureError> {
    PcapReader::new(BufReader::new(File::open(path)?))
}

impl<R: Read> PcapReader<R> {
    /// Reads and validates the 24-byte global header.
    pub fn new(mut reader: R) -> Result<Self, CaptureError> {
        let mut header = [0u8; 24];
        let got = read_fully(&mut reader, &mut header)?;
        if got < 24 {
            return Err(CaptureError::TruncatedHeader(got));
        }
        let magic = u32::from_le_bytes([header[0], header[1], header[2], header[3]]);
        let (big_endian, nanos) = match magic {
            PCAP_MAGIC_MICROS => (false, false),
            PCAP_MAGIC_MICROS_SWAPPED => (true, false),
            PCAP_MAGIC_NANOS => (false, true),
            PCAP_MAGIC_NANOS_SWAPPED => (true, true),
            other => return Err(CaptureError::UnknownMagic(other)),
        };
        let u32_at = |buf: &[u8; 24], off: usize| {
            let b = [buf[off], buf[off + 1], buf[off + 2], buf[off + 3]];
            if big_endian {
                u32::from_be_bytes(b)
            } else {
                u32::from_le_bytes(b)
            }
        };
        Ok(PcapReader {
            reader,
            big_endian,
            nanos,
            snaplen: u32_at(&header, 16),
            link_type: u32_at(&header, 20),
            done: false,
        })
    }

    pub fn snaplen(&self) -> u32 {
        self.snaplen
    }
}

impl<R: Read> PacketSource for PcapReader<R> {
    fn link_type(&self) -> u32 {
        self.link_type
    }

    fn next_packet(&mut self) -> Result<Option<RawPacket>, CaptureError> {
        if self.done {
            return Ok(None);
        }
        let mut rec = [0u8; 16];
        let got = read_fully(&mut self.reader, &mut rec)?;
        if got == 0 {
            self.done = true;
            return Ok(None);
        }
        if got < 16 {
            self.done = true;
            return Err(CaptureError::TruncatedRecord { wanted: 16, got });
        }
        let u32_at = |off: usize| {
            let b = [rec[off], rec[off + 1], rec[off + 2], rec[off + 3]];
            if self.big_endian {
                u32::from_be_bytes(b)
            } else {
                u32::from_le_bytes(b)
            }
        };
        let ts_sec = u32_at(0) as u64;
        let ts_sub = u32_at(4) as u64;
        let incl_len = u32_at(8);
        let orig_len = u32_at(12);
        // Nanosecond captures truncate, not round.
        let ts_micros = ts_sec * 1_000_000 + if self.nanos { ts_sub / 1000 } else { ts_sub };

        // Read through `take` so a corrupt incl_len cannot drive allocation.
        let mut data = Vec::with_capacity(incl_len.min(65_536) as usize);
        (&mut self.reader)
            .take(incl_len as u64)
            .read_to_end(&mut data)?;
        if data.len() < incl_len as usize {
            self.done = true;
            return Err(CaptureError::TruncatedRecord {
                wanted: incl_len,
                got: data.len(),
            });
        }
        Ok(Some(RawPacket {
            ts_micros,
            original_len: orig_len.max(incl_len),
            data,
        }))
    }
}

/// Like `read_exact` but reports how many bytes were read before EOF.
fn read_fully<R: Read>(reader: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
