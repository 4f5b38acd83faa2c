//! The replicated Ledger: packet contents, timestamps, vehicle ids, and the
//! per-vehicle table built from decoded broadcasts and sensed occupancy.
//!
//! Each vehicle owns one [`LocalLedger`]. Replicas only exchange data through
//! decoded packets; [`LocalLedger::merge_remote`] is a set union keyed on
//! `(vehicle_id, timestamp)` for records and `(timestamp, sub-channel)` for
//! collisions, so replicas converge regardless of delivery order.

pub mod codec;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::phy::Numerology;
pub use codec::{decode_packet, encode_packet, CodecError, BSM_PAYLOAD_LEN, MAX_COLLISION_RECORDS, PACKET_LEN};

/// One-byte identifier a vehicle picks when it joins the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VehicleId(pub u8);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("all 256 vehicle ids are in use")]
    NetworkFull,
    #[error("decoded packet for subframe {found} ingested with sensing of subframe {expected}")]
    SubframeMismatch { expected: u16, found: u16 },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Busy position with no decodable package: a collision.
///
/// Ordered by time first so ledgers iterate collisions chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CollisionRecord {
    pub subframe_timestamp_us: u64,
    pub subchannel_id: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordSource {
    DecodedDirect,
    MergedRemote,
    /// The owning vehicle's own transmission.
    SelfTx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LedgerRecord {
    pub vehicle_id: VehicleId,
    pub subchannel_id: u8,
    pub subframe_index: u16,
    pub timestamp_us: u64,
    pub source: RecordSource,
}

impl LedgerRecord {
    fn key(&self) -> (u64, VehicleId) {
        (self.timestamp_us, self.vehicle_id)
    }
}

/// The 350-byte broadcast unit: 50-byte Ledger header plus BSM body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerPacket {
    /// Start of the transmit slot, microseconds since scenario start.
    pub timestamp_us: u64,
    pub vehicle_id: VehicleId,
    pub subchannel_id: u8,
    pub subframe_index: u16,
    pub collision_records: Vec<CollisionRecord>,
    pub bsm_payload: [u8; BSM_PAYLOAD_LEN],
}

impl LedgerPacket {
    /// Builds a packet with filler BSM content. Fails if the collision list
    /// does not fit the header.
    pub fn new(
        vehicle_id: VehicleId,
        subchannel_id: u8,
        subframe_index: u16,
        timestamp_us: u64,
        collision_records: Vec<CollisionRecord>,
    ) -> Result<Self, CodecError> {
        codec::validate_collisions(timestamp_us, &collision_records)?;
        Ok(Self {
            timestamp_us,
            vehicle_id,
            subchannel_id,
            subframe_index,
            collision_records,
            bsm_payload: filler_payload(vehicle_id, timestamp_us),
        })
    }

    /// The record a receiver adds for this packet.
    pub fn record(&self, source: RecordSource) -> LedgerRecord {
        LedgerRecord {
            vehicle_id: self.vehicle_id,
            subchannel_id: self.subchannel_id,
            subframe_index: self.subframe_index,
            timestamp_us: self.timestamp_us,
            source,
        }
    }
}

/// Opaque BSM body. Its content never affects scheduling.
pub fn filler_payload(vehicle_id: VehicleId, timestamp_us: u64) -> [u8; BSM_PAYLOAD_LEN] {
    let ts = timestamp_us.to_be_bytes();
    let mut body = [0u8; BSM_PAYLOAD_LEN];
    for (i, b) in body.iter_mut().enumerate() {
        *b = (ts[i % 8] ^ vehicle_id.0).wrapping_add(i as u8);
    }
    body
}

/// One subframe of sensing: which sub-channels carried energy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingList {
    pub subframe_index: u16,
    pub timestamp_us: u64,
    pub busy: Vec<bool>,
}

/// Timestamp of the next packet while the reservation is kept: t_last + RRI.
pub fn timestamp_within_sps(t_last_us: u64, rri_ms: u32) -> u64 {
    t_last_us + u64::from(rri_ms) * 1000
}

/// Timestamp of the first packet on a newly selected resource:
/// t_current + n_select slots.
pub fn timestamp_begin_sps(t_current_us: u64, n_select: u32, num: &Numerology) -> u64 {
    t_current_us + u64::from(n_select) * u64::from(num.slot_duration_us)
}

/// Draws an id uniformly from the values nobody in `existing` holds.
pub fn assign_vehicle_id<R: Rng + ?Sized>(
    existing: &BTreeSet<VehicleId>,
    rng: &mut R,
) -> Result<VehicleId, ProtocolError> {
    let free: Vec<u8> = (0..=u8::MAX).filter(|v| !existing.contains(&VehicleId(*v))).collect();
    if free.is_empty() {
        return Err(ProtocolError::NetworkFull);
    }
    Ok(VehicleId(free[rng.gen_range(0..free.len())]))
}

/// A vehicle's replica of the Ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalLedger {
    records: BTreeMap<(u64, VehicleId), LedgerRecord>,
    collisions: BTreeSet<CollisionRecord>,
}

impl LocalLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> impl Iterator<Item = &LedgerRecord> {
        self.records.values()
    }

    pub fn collisions(&self) -> impl Iterator<Item = &CollisionRecord> {
        self.collisions.iter()
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn collision_count(&self) -> usize {
        self.collisions.len()
    }

    pub fn contains_collision(&self, c: &CollisionRecord) -> bool {
        self.collisions.contains(c)
    }

    /// Records whose timestamp equals `timestamp_us`.
    pub fn records_at(&self, timestamp_us: u64) -> impl Iterator<Item = &LedgerRecord> {
        self.records
            .range((timestamp_us, VehicleId(0))..=(timestamp_us, VehicleId(u8::MAX)))
            .map(|(_, r)| r)
    }

    /// Records with `from_us <= timestamp < to_us`.
    pub fn records_between(&self, from_us: u64, to_us: u64) -> impl Iterator<Item = &LedgerRecord> {
        self.records
            .range((from_us, VehicleId(0))..(to_us, VehicleId(0)))
            .map(|(_, r)| r)
    }

    pub fn collisions_at(&self, timestamp_us: u64) -> impl Iterator<Item = &CollisionRecord> {
        self.collisions_between(timestamp_us, timestamp_us + 1)
    }

    pub fn collisions_between(&self, from_us: u64, to_us: u64) -> impl DoubleEndedIterator<Item = &CollisionRecord> {
        let lo = CollisionRecord { subframe_timestamp_us: from_us, subchannel_id: 0 };
        let hi = CollisionRecord { subframe_timestamp_us: to_us, subchannel_id: 0 };
        self.collisions.range(lo..hi)
    }

    /// Up to `limit` most recent collisions in `[from_us, to_us)`, oldest first.
    pub fn recent_collisions(&self, from_us: u64, to_us: u64, limit: usize) -> Vec<CollisionRecord> {
        let mut out: Vec<CollisionRecord> =
            self.collisions_between(from_us, to_us).rev().take(limit).copied().collect();
        out.reverse();
        out
    }

    fn has_foreign_record_at(&self, timestamp_us: u64, subchannel_id: u8) -> bool {
        self.records_at(timestamp_us)
            .any(|r| r.subchannel_id == subchannel_id && r.source != RecordSource::SelfTx)
    }

    /// Adds a record unless one with the same key exists. A received record
    /// clears any collision claimed at its position.
    fn insert_record(&mut self, record: LedgerRecord) -> bool {
        if self.records.contains_key(&record.key()) {
            return false;
        }
        if record.source != RecordSource::SelfTx {
            self.collisions.remove(&CollisionRecord {
                subframe_timestamp_us: record.timestamp_us,
                subchannel_id: record.subchannel_id,
            });
        }
        self.records.insert(record.key(), record);
        true
    }

    fn insert_collision(&mut self, c: CollisionRecord) -> bool {
        if self.has_foreign_record_at(c.subframe_timestamp_us, c.subchannel_id) {
            return false;
        }
        self.collisions.insert(c)
    }

    /// Records the owner's own transmission.
    pub fn record_own_transmission(&mut self, pkt: &LedgerPacket) {
        self.insert_record(pkt.record(RecordSource::SelfTx));
    }

    /// Folds one subframe of reception into the ledger.
    ///
    /// Every decoded packet contributes its own record and the collision
    /// records it carries. Every sub-channel sensed busy that no decoded
    /// packet claims becomes a new collision record; those are returned.
    pub fn ingest_subframe(
        &mut self,
        sensed: &SensingList,
        decoded: &[LedgerPacket],
    ) -> Result<Vec<CollisionRecord>, ProtocolError> {
        if let Some(p) = decoded.iter().find(|p| p.subframe_index != sensed.subframe_index) {
            return Err(ProtocolError::SubframeMismatch {
                expected: sensed.subframe_index,
                found: p.subframe_index,
            });
        }
        for pkt in decoded {
            self.insert_record(pkt.record(RecordSource::DecodedDirect));
            for c in &pkt.collision_records {
                self.insert_collision(*c);
            }
        }
        let mut found = Vec::new();
        for (sub, busy) in sensed.busy.iter().enumerate() {
            if !busy {
                continue;
            }
            let sub = sub as u8;
            if decoded.iter().any(|p| p.subchannel_id == sub) {
                continue;
            }
            let c = CollisionRecord {
                subframe_timestamp_us: sensed.timestamp_us,
                subchannel_id: sub,
            };
            self.insert_collision(c);
            found.push(c);
        }
        Ok(found)
    }

    /// Set union with a remote replica's entries. Existing records are
    /// never overwritten; incoming records are marked as merged.
    pub fn merge_remote<'a>(
        &mut self,
        remote_records: impl IntoIterator<Item = &'a LedgerRecord>,
        remote_collisions: impl IntoIterator<Item = &'a CollisionRecord>,
    ) {
        for r in remote_records {
            self.insert_record(LedgerRecord {
                source: RecordSource::MergedRemote,
                ..*r
            });
        }
        for c in remote_collisions {
            self.insert_collision(*c);
        }
    }

    /// Drops everything older than `timestamp_us`.
    pub fn prune_before(&mut self, timestamp_us: u64) {
        self.records = self.records.split_off(&(timestamp_us, VehicleId(0)));
        self.collisions = self.collisions.split_off(&CollisionRecord {
            subframe_timestamp_us: timestamp_us,
            subchannel_id: 0,
        });
    }

    /// Line-oriented text dump, ordered by timestamp, records before
    /// collisions at equal time, then by vehicle id / sub-channel.
    pub fn dump(&self) -> String {
        enum Line<'a> {
            Rec(&'a LedgerRecord),
            Col(&'a CollisionRecord),
        }
        let mut lines: Vec<(u64, u8, u8, Line)> = self
            .records
            .values()
            .map(|r| (r.timestamp_us, 0, r.vehicle_id.0, Line::Rec(r)))
            .chain(
                self.collisions
                    .iter()
                    .map(|c| (c.subframe_timestamp_us, 1, c.subchannel_id, Line::Col(c))),
            )
            .collect();
        lines.sort_by_key(|(t, kind, id, _)| (*t, *kind, *id));
        let mut out = String::new();
        for (_, _, _, line) in lines {
            match line {
                Line::Rec(r) => writeln!(
                    out,
                    "record vehicle={} subch={} subframe={} t={}",
                    r.vehicle_id, r.subchannel_id, r.subframe_index, r.timestamp_us
                ),
                Line::Col(c) => writeln!(out, "collision subch={} t={}", c.subchannel_id, c.subframe_timestamp_us),
            }
            .expect("writing to a String");
        }
        out
    }
}
