//! NR-V2X Mode 2 semi-persistent scheduling with a distributed collision
//! Ledger.
//!
//! - [`phy`]: resource arithmetic from numerology, MCS and payload size.
//! - [`ledger`]: the 350-byte Ledger packet, its codec and the local replica.
//! - [`sps`]: the slot-level SPS world, baseline and Ledger-augmented.
//! - [`sim`]: seeds, ensembles and convergence metrics.

pub mod ledger;
pub mod phy;
pub mod sim;
pub mod sps;

pub use ledger::{
    CollisionRecord, LedgerPacket, LedgerRecord, LocalLedger, ProtocolError, RecordSource, VehicleId,
};
pub use phy::{CapacityError, CapacityReport, McsEntry, McsTable, Numerology, PhyConfig, SubchannelSizing};
pub use sim::{MetricsTrace, RunTrace, SimConfig, SimError, SimMode};
pub use sps::{CollisionEvent, Mode, Resource};
