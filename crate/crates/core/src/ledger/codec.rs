//! Fixed 350-byte wire format for Ledger packets.
//!
//! Header layout (50 bytes, big-endian):
//!
//! | bytes  | field                                             |
//! |--------|---------------------------------------------------|
//! | 0      | magic / version ([`HEADER_MAGIC`])                |
//! | 1      | vehicle id                                        |
//! | 2..12  | timestamp, microseconds, zero-padded to 10 bytes  |
//! | 12     | sub-channel id                                    |
//! | 13..15 | subframe index within the RRI                     |
//! | 15     | collision record count (0..=8)                    |
//! | 16..48 | 8 collision slots of 4 bytes, unused slots zero   |
//! | 48..50 | reserved, zero                                    |
//!
//! A collision slot is one byte of sub-channel id followed by a 3-byte
//! offset back from the packet timestamp, counted in 125 us units (the
//! shortest slot of any numerology). The 300-byte BSM body follows.

use thiserror::Error;

use super::{CollisionRecord, LedgerPacket, VehicleId};

pub const HEADER_LEN: usize = 50;
pub const BSM_PAYLOAD_LEN: usize = 300;
pub const PACKET_LEN: usize = HEADER_LEN + BSM_PAYLOAD_LEN;
pub const MAX_COLLISION_RECORDS: usize = 8;
pub const HEADER_MAGIC: u8 = 0x4C;
pub const TIMESTAMP_OFFSET: usize = 2;
pub const TIMESTAMP_LEN: usize = 10;
pub const VEHICLE_ID_OFFSET: usize = 1;
pub const COLLISION_OFFSET_UNIT_US: u64 = 125;

const SUBCHANNEL_OFFSET: usize = 12;
const SUBFRAME_OFFSET: usize = 13;
const COUNT_OFFSET: usize = 15;
const SLOTS_OFFSET: usize = 16;
const SLOT_LEN: usize = 4;
const RESERVED_OFFSET: usize = 48;
pub const MAX_OFFSET_UNITS: u64 = (1 << 24) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("{0} collision records exceed the header capacity of 8")]
    TooManyCollisionRecords(usize),
    #[error("collision at {collision_us} us is later than the carrying packet ({packet_us} us)")]
    CollisionAfterPacket { collision_us: u64, packet_us: u64 },
    #[error("collision offset of {0} us is not a multiple of 125 us")]
    UnalignedCollisionOffset(u64),
    #[error("collision offset of {0} us does not fit in 24 bits of 125 us units")]
    CollisionOffsetTooLarge(u64),
    #[error("packet must be exactly 350 bytes, got {0}")]
    MalformedLength(usize),
    #[error("bad magic/version byte {0:#04x}")]
    BadMagic(u8),
    #[error("malformed packet: {0}")]
    MalformedContent(&'static str),
}

/// Checks the collision list against the header budget and encodability.
pub(crate) fn validate_collisions(
    timestamp_us: u64,
    records: &[CollisionRecord],
) -> Result<(), CodecError> {
    if records.len() > MAX_COLLISION_RECORDS {
        return Err(CodecError::TooManyCollisionRecords(records.len()));
    }
    for c in records {
        collision_offset_units(timestamp_us, c)?;
    }
    Ok(())
}

fn collision_offset_units(packet_us: u64, c: &CollisionRecord) -> Result<u32, CodecError> {
    if c.subframe_timestamp_us > packet_us {
        return Err(CodecError::CollisionAfterPacket {
            collision_us: c.subframe_timestamp_us,
            packet_us,
        });
    }
    let delta = packet_us - c.subframe_timestamp_us;
    if delta % COLLISION_OFFSET_UNIT_US != 0 {
        return Err(CodecError::UnalignedCollisionOffset(delta));
    }
    let units = delta / COLLISION_OFFSET_UNIT_US;
    if units > MAX_OFFSET_UNITS {
        return Err(CodecError::CollisionOffsetTooLarge(delta));
    }
    Ok(units as u32)
}

pub fn encode_packet(pkt: &LedgerPacket) -> Result<[u8; PACKET_LEN], CodecError> {
    validate_collisions(pkt.timestamp_us, &pkt.collision_records)?;
    let mut out = [0u8; PACKET_LEN];
    out[0] = HEADER_MAGIC;
    out[VEHICLE_ID_OFFSET] = pkt.vehicle_id.0;
    // Upper two timestamp bytes stay zero.
    out[TIMESTAMP_OFFSET + 2..TIMESTAMP_OFFSET + TIMESTAMP_LEN]
        .copy_from_slice(&pkt.timestamp_us.to_be_bytes());
    out[SUBCHANNEL_OFFSET] = pkt.subchannel_id;
    out[SUBFRAME_OFFSET..SUBFRAME_OFFSET + 2].copy_from_slice(&pkt.subframe_index.to_be_bytes());
    out[COUNT_OFFSET] = pkt.collision_records.len() as u8;
    for (i, c) in pkt.collision_records.iter().enumerate() {
        let units = collision_offset_units(pkt.timestamp_us, c)?;
        let slot = SLOTS_OFFSET + i * SLOT_LEN;
        out[slot] = c.subchannel_id;
        out[slot + 1..slot + 4].copy_from_slice(&units.to_be_bytes()[1..]);
    }
    out[HEADER_LEN..].copy_from_slice(&pkt.bsm_payload);
    Ok(out)
}

pub fn decode_packet(bytes: &[u8]) -> Result<LedgerPacket, CodecError> {
    if bytes.len() != PACKET_LEN {
        return Err(CodecError::MalformedLength(bytes.len()));
    }
    if bytes[0] != HEADER_MAGIC {
        return Err(CodecError::BadMagic(bytes[0]));
    }
    let ts_field = &bytes[TIMESTAMP_OFFSET..TIMESTAMP_OFFSET + TIMESTAMP_LEN];
    if ts_field[..2] != [0, 0] {
        return Err(CodecError::MalformedContent("timestamp exceeds 64 bits"));
    }
    let timestamp_us = u64::from_be_bytes(ts_field[2..].try_into().expect("8 bytes"));
    let count = usize::from(bytes[COUNT_OFFSET]);
    if count > MAX_COLLISION_RECORDS {
        return Err(CodecError::MalformedContent("collision count above 8"));
    }
    let mut collision_records = Vec::with_capacity(count);
    for i in 0..MAX_COLLISION_RECORDS {
        let slot = &bytes[SLOTS_OFFSET + i * SLOT_LEN..SLOTS_OFFSET + (i + 1) * SLOT_LEN];
        if i >= count {
            if slot.iter().any(|&b| b != 0) {
                return Err(CodecError::MalformedContent("unused collision slot not zero"));
            }
            continue;
        }
        let units = u64::from(u32::from_be_bytes([0, slot[1], slot[2], slot[3]]));
        let back = units * COLLISION_OFFSET_UNIT_US;
        let subframe_timestamp_us = timestamp_us
            .checked_sub(back)
            .ok_or(CodecError::MalformedContent("collision offset precedes time origin"))?;
        collision_records.push(CollisionRecord {
            subframe_timestamp_us,
            subchannel_id: slot[0],
        });
    }
    if bytes[RESERVED_OFFSET..HEADER_LEN].iter().any(|&b| b != 0) {
        return Err(CodecError::MalformedContent("reserved bytes not zero"));
    }
    let mut bsm_payload = [0u8; BSM_PAYLOAD_LEN];
    bsm_payload.copy_from_slice(&bytes[HEADER_LEN..]);
    Ok(LedgerPacket {
        timestamp_us,
        vehicle_id: VehicleId(bytes[VEHICLE_ID_OFFSET]),
        subchannel_id: bytes[SUBCHANNEL_OFFSET],
        subframe_index: u16::from_be_bytes([bytes[SUBFRAME_OFFSET], bytes[SUBFRAME_OFFSET + 1]]),
        collision_records,
        bsm_payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(collisions: Vec<CollisionRecord>) -> LedgerPacket {
        LedgerPacket::new(VehicleId(0xAB), 3, 0x0102, 1_234_567, collisions).unwrap()
    }

    #[test]
    fn minimal_packet_round_trips() {
        let p = packet(vec![]);
        let bytes = encode_packet(&p).unwrap();
        assert_eq!(bytes.len(), 350);
        assert_eq!(decode_packet(&bytes).unwrap(), p);
    }

    #[test]
    fn header_bytes_at_fixed_offsets() {
        let p = packet(vec![CollisionRecord {
            subframe_timestamp_us: 1_234_567 - 3 * 125,
            subchannel_id: 5,
        }]);
        let b = encode_packet(&p).unwrap();
        assert_eq!(b[0], HEADER_MAGIC);
        assert_eq!(b[1], 0xAB);
        assert_eq!(&b[2..12], &[0, 0, 0, 0, 0, 0, 0x00, 0x12, 0xD6, 0x87]);
        assert_eq!(b[12], 3);
        assert_eq!(&b[13..15], &[0x01, 0x02]);
        assert_eq!(b[15], 1);
        assert_eq!(&b[16..20], &[5, 0, 0, 3]);
        assert!(b[20..50].iter().all(|&x| x == 0));
        assert_eq!(&b[50..], &p.bsm_payload[..]);
    }

    #[test]
    fn max_capacity_round_trips() {
        // Largest offset representable: (2^24 - 1) units of 125 us.
        let ts = MAX_OFFSET_UNITS * COLLISION_OFFSET_UNIT_US + 10_000;
        let mut cs: Vec<CollisionRecord> = (0..8u64)
            .map(|i| CollisionRecord {
                subframe_timestamp_us: ts - i * 1000,
                subchannel_id: i as u8,
            })
            .collect();
        cs[7].subframe_timestamp_us = ts - MAX_OFFSET_UNITS * COLLISION_OFFSET_UNIT_US;
        let p = LedgerPacket::new(VehicleId(255), 255, u16::MAX, ts, cs).unwrap();
        let b = encode_packet(&p).unwrap();
        assert_eq!(decode_packet(&b).unwrap(), p);
    }

    #[test]
    fn encode_rejects_bad_collision_lists() {
        let mut p = packet(vec![]);
        p.collision_records = (0..9)
            .map(|i| CollisionRecord { subframe_timestamp_us: 1000 * i, subchannel_id: 0 })
            .collect();
        assert_eq!(encode_packet(&p), Err(CodecError::TooManyCollisionRecords(9)));
        p.collision_records = vec![CollisionRecord { subframe_timestamp_us: 2_000_000, subchannel_id: 0 }];
        assert!(matches!(encode_packet(&p), Err(CodecError::CollisionAfterPacket { .. })));
        p.collision_records = vec![CollisionRecord { subframe_timestamp_us: 1_234_500, subchannel_id: 0 }];
        assert_eq!(encode_packet(&p), Err(CodecError::UnalignedCollisionOffset(67)));
        let mut far = packet(vec![]);
        far.timestamp_us = (MAX_OFFSET_UNITS + 1) * COLLISION_OFFSET_UNIT_US;
        far.collision_records = vec![CollisionRecord { subframe_timestamp_us: 0, subchannel_id: 0 }];
        assert!(matches!(encode_packet(&far), Err(CodecError::CollisionOffsetTooLarge(_))));
    }

    #[test]
    fn decode_rejects_malformed_input() {
        let good = encode_packet(&packet(vec![])).unwrap();
        assert_eq!(decode_packet(&good[..349]), Err(CodecError::MalformedLength(349)));
        assert_eq!(decode_packet(&[0u8; 351]), Err(CodecError::MalformedLength(351)));

        let mut b = good;
        b[0] = 0x00;
        assert_eq!(decode_packet(&b), Err(CodecError::BadMagic(0)));

        let mut b = good;
        b[2] = 1;
        assert!(matches!(decode_packet(&b), Err(CodecError::MalformedContent(_))));

        let mut b = good;
        b[15] = 9;
        assert!(matches!(decode_packet(&b), Err(CodecError::MalformedContent(_))));

        let mut b = good;
        b[20] = 1;
        assert!(matches!(decode_packet(&b), Err(CodecError::MalformedContent(_))));

        let mut b = good;
        b[49] = 1;
        assert!(matches!(decode_packet(&b), Err(CodecError::MalformedContent(_))));

        // Offset reaching before t = 0.
        let mut b = good;
        b[15] = 1;
        b[16..20].copy_from_slice(&[0, 0xFF, 0xFF, 0xFF]);
        assert!(matches!(decode_packet(&b), Err(CodecError::MalformedContent(_))));
    }
}
