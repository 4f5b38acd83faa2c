use super::CapacityError;

/// One NR sidelink numerology row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Numerology {
    pub mu: u8,
    pub scs_khz: u32,
    pub slots_per_frame: u32,
    pub slots_per_subframe: u32,
    /// Slot length in microseconds (1 ms / slots_per_subframe).
    pub slot_duration_us: u32,
    pub symbols_per_slot: u32,
    pub symbols_per_subframe: u32,
    pub max_carrier_bw_mhz: u32,
}

pub const NUMEROLOGIES: [Numerology; 4] = [
    Numerology {
        mu: 0,
        scs_khz: 15,
        slots_per_frame: 10,
        slots_per_subframe: 1,
        slot_duration_us: 1000,
        symbols_per_slot: 14,
        symbols_per_subframe: 14,
        max_carrier_bw_mhz: 50,
    },
    Numerology {
        mu: 1,
        scs_khz: 30,
        slots_per_frame: 20,
        slots_per_subframe: 2,
        slot_duration_us: 500,
        symbols_per_slot: 14,
        symbols_per_subframe: 28,
        max_carrier_bw_mhz: 100,
    },
    Numerology {
        mu: 2,
        scs_khz: 60,
        slots_per_frame: 40,
        slots_per_subframe: 4,
        slot_duration_us: 250,
        symbols_per_slot: 14,
        symbols_per_subframe: 56,
        max_carrier_bw_mhz: 200,
    },
    Numerology {
        mu: 3,
        scs_khz: 120,
        slots_per_frame: 80,
        slots_per_subframe: 8,
        slot_duration_us: 125,
        symbols_per_slot: 14,
        symbols_per_subframe: 112,
        max_carrier_bw_mhz: 400,
    },
];

impl Numerology {
    pub fn from_mu(mu: u8) -> Result<Self, CapacityError> {
        NUMEROLOGIES
            .get(usize::from(mu))
            .copied()
            .ok_or(CapacityError::UnknownNumerology(mu))
    }

    pub fn slot_duration_ms(&self) -> f64 {
        f64::from(self.slot_duration_us) / 1000.0
    }

    /// Number of slots in an RRI of `rri_ms` milliseconds.
    pub fn slots_per_rri(&self, rri_ms: u32) -> u32 {
        rri_ms * self.slots_per_subframe
    }
}
