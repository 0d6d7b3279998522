//! Ethernet/IPv4/TCP frame decoding.

use std::net::Ipv4Addr;

use super::{RawPacket, LINKTYPE_ETHERNET, LINKTYPE_RAW, LINKTYPE_RAW_BSD};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const IPPROTO_TCP: u8 = 6;

/// TCP header flags relevant to flow tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;

    pub fn new(bits: u8) -> Self {
        TcpFlags(bits & 0x1f)
    }

    pub fn fin(self) -> bool {
        self.0 & Self::FIN != 0
    }
    pub fn syn(self) -> bool {
        self.0 & Self::SYN != 0
    }
    pub fn rst(self) -> bool {
        self.0 & Self::RST != 0
    }
    pub fn psh(self) -> bool {
        self.0 & Self::PSH != 0
    }
    pub fn ack(self) -> bool {
        self.0 & Self::ACK != 0
    }
    pub fn bits(self) -> u8 {
        self.0
    }
}

/// A decoded TCP segment, borrowing its payload from the captured frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpSegmentView<'a> {
    pub ts_micros: u64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub flags: TcpFlags,
    pub payload: &'a [u8],
}

/// Decodes one captured frame into a TCP segment view.
///
/// Returns `None` for anything that is not a complete IPv4+TCP frame:
/// non-IPv4 ethertypes, IPv6, non-TCP transports, IP fragments with a
/// nonzero offset, and frames shorter than their declared headers. A single
/// VLAN tag is skipped. Never reads past the captured bytes.
pub fn decode_frame(pkt: &RawPacket, link_type: u32) -> Option<TcpSegmentView<'_>> {
    let data = &pkt.data[..];
    let ip = match link_type {
        LINKTYPE_ETHERNET => {
            let mut ethertype = u16_at(data, 12)?;
            let mut offset = 14;
            if ethertype == ETHERTYPE_VLAN {
                ethertype = u16_at(data, 16)?;
                offset = 18;
            }
            if ethertype != ETHERTYPE_IPV4 {
                return None;
            }
            data.get(offset..)?
        }
        LINKTYPE_RAW | LINKTYPE_RAW_BSD => data,
        _ => return None,
    };

    // IPv4 header.
    let ver_ihl = *ip.first()?;
    if ver_ihl >> 4 != 4 {
        return None;
    }
    let ihl = ((ver_ihl & 0x0f) as usize) * 4;
    if ihl < 20 {
        return None;
    }
    let total_len = u16_at(ip, 2)? as usize;
    if total_len < ihl || ip.len() < total_len {
        return None;
    }
    let frag = u16_at(ip, 6)?;
    if frag & 0x1fff != 0 {
        return None;
    }
    if *ip.get(9)? != IPPROTO_TCP {
        return None;
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);

    // TCP header. `total_len` bounds the datagram so Ethernet padding is
    // never mistaken for payload.
    let tcp = ip.get(ihl..total_len)?;
    let src_port = u16_at(tcp, 0)?;
    let dst_port = u16_at(tcp, 2)?;
    let seq = u32_at(tcp, 4)?;
    let data_offset = ((*tcp.get(12)? >> 4) as usize) * 4;
    if data_offset < 20 || data_offset > tcp.len() {
        return None;
    }
    let flags = TcpFlags::new(*tcp.get(13)?);
    let payload = &tcp[data_offset..];

    Some(TcpSegmentView {
        ts_micros: pkt.ts_micros,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        seq,
        flags,
        payload,
    })
}

fn u16_at(buf: &[u8], off: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*buf.get(off)?, *buf.get(off + 1)?]))
}

fn u32_at(buf: &[u8], off: usize) -> Option<u32> {
    Some(u32::from_be_bytes([
        *buf.get(off)?,
        *buf.get(off + 1)?,
        *buf.get(off + 2)?,
        *buf.get(off + 3)?,
    ]))
}

/// Builds an Ethernet+IPv4+TCP frame. Shared by the synthetic generator and
/// frame-level tests.
#[allow(clippy::too_many_arguments)]
pub(crate) fn build_ethernet_frame(
    src_ip: Ipv4Addr,
    dst_ip: Ipv4Addr,
    src_port: u16,
    dst_port: u16,
    seq: u32,
    ack: u32,
    flags: u8,
    payload: &[u8],
) -> Vec<u8> {
    let total_len = 20 + 20 + payload.len();
    let mut f = Vec::with_capacity(14 + total_len);
    // Ethernet: synthetic MACs, type IPv4.
    f.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
    f.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02]);
    f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    // IPv4 header, 20 bytes, checksum filled below.
    let ip_start = f.len();
    f.push(0x45);
    f.push(0);
    f.extend_from_slice(&(total_len as u16).to_be_bytes());
    f.extend_from_slice(&[0, 0]); // identification
    f.extend_from_slice(&[0x40, 0]); // don't fragment
    f.push(64); // ttl
    f.push(IPPROTO_TCP);
    f.extend_from_slice(&[0, 0]); // checksum placeholder
    f.extend_from_slice(&src_ip.octets());
    f.extend_from_slice(&dst_ip.octets());
    let csum = ipv4_checksum(&f[ip_start..ip_start + 20]);
    f[ip_start + 10..ip_start + 12].copy_from_slice(&csum.to_be_bytes());
    // TCP header, 20 bytes, checksum left zero (not validated on read).
    f.extend_from_slice(&src_port.to_be_bytes());
    f.extend_from_slice(&dst_port.to_be_bytes());
    f.extend_from_slice(&seq.to_be_bytes());
    f.extend_from_slice(&ack.to_be_bytes());
    f.push(0x50); // data offset 5
    f.push(flags);
    f.extend_from_slice(&0xffffu16.to_be_bytes()); // window
    f.extend_from_slice(&[0, 0, 0, 0]); // checksum, urgent
    f.extend_from_slice(payload);
    f
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum = 0u32;
    for chunk in header.chunks(2) {
        let word = if chunk.len() == 2 {
            u16::from_be_bytes([chunk[0], chunk[1]])
        } else {
            u16::from_be_bytes([chunk[0], 0])
        };
        sum += word as u32;
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
