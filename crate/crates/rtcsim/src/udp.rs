//! BSM datagrams for a device under test.
//!
//! Fixed 48-byte little-endian layout:
//!
//! | offset | type | field       |
//! |--------|------|-------------|
//! | 0      | u32  | magic `0x42534D31` |
//! | 4      | u32  | vehicle_id  |
//! | 8      | u32  | seq         |
//! | 12     | f64  | gen_time_s  |
//! | 20     | f64  | x_m         |
//! | 28     | f64  | y_m         |
//! | 36     | f32  | speed_mps   |
//! | 40     | f32  | heading_rad |
//! | 44     | f32  | rss_dbm     |

use std::io;
use std::net::{SocketAddr, UdpSocket};

use rtcsim_core::{Packet, TxEvent};

use crate::realtime::Sink;

pub const BSM_MAGIC: u32 = 0x4253_4D31;
pub const BSM_LEN: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsmDatagram {
    pub vehicle_id: u32,
    pub seq: u32,
    pub gen_time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f32,
    pub heading_rad: f32,
    pub rss_dbm: f32,
}

impl BsmDatagram {
    pub fn from_packet(p: &Packet, rss_dbm: f64) -> Self {
        BsmDatagram {
            vehicle_id: p.vehicle_id,
            seq: p.seq,
            gen_time_s: p.gen_time.as_secs_f64(),
            x_m: p.position.x_m,
            y_m: p.position.y_m,
            speed_mps: p.speed_mps as f32,
            heading_rad: p.heading_rad as f32,
            rss_dbm: rss_dbm as f32,
        }
    }

    pub fn encode(&self) -> [u8; BSM_LEN] {
        let mut b = [0u8; BSM_LEN];
        b[0..4].copy_from_slice(&BSM_MAGIC.to_le_bytes());
        b[4..8].copy_from_slice(&self.vehicle_id.to_le_bytes());
        b[8..12].copy_from_slice(&self.seq.to_le_bytes());
        b[12..20].copy_from_slice(&self.gen_time_s.to_le_bytes());
        b[20..28].copy_from_slice(&self.x_m.to_le_bytes());
        b[28..36].copy_from_slice(&self.y_m.to_le_bytes());
        b[36..40].copy_from_slice(&self.speed_mps.to_le_bytes());
        b[40..44].copy_from_slice(&self.heading_rad.to_le_bytes());
        b[44..48].copy_from_slice(&self.rss_dbm.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        if b.len() != BSM_LEN || b[0..4] != BSM_MAGIC.to_le_bytes() {
            return None;
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let f32_at = |i: usize| f32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        Some(BsmDatagram {
            vehicle_id: u32_at(4),
            seq: u32_at(8),
            gen_time_s: f64_at(12),
            x_m: f64_at(20),
            y_m: f64_at(28),
            speed_mps: f32_at(36),
            heading_rad: f32_at(40),
            rss_dbm: f32_at(44),
        })
    }
}

/// Sends one datagram per decoded BSM.
pub struct UdpSink {
    socket: UdpSocket,
    target: SocketAddr,
    pub sent: u64,
}

impl UdpSink {
    pub fn connect(target: SocketAddr) -> io::Result<Self> {
        let bind: SocketAddr = if target.is_ipv4() { "0.0.0.0:0".parse().unwrap() } else { "[::]:0".parse().unwrap() };
        let socket = UdpSocket::bind(bind)?;
        Ok(UdpSink { socket, target, sent: 0 })
    }
}

impl Sink for UdpSink {
    fn deliver(&mut self, _event: &TxEvent, winner: &Packet, rss_dbm: f64) -> io::Result<()> {
        let d = BsmDatagram::from_packet(winner, rss_dbm);
        self.socket.send_to(&d.encode(), self.target)?;
        self.sent += 1;
        Ok(())
    }
}
