//! Sidelink physical-resource dimensioning.
//!
//! Computes how many resource elements, PRBs and sub-channels one broadcast
//! package needs, and from that how many vehicles a resource pool can carry
//! per reservation interval. All arithmetic is done on integers (the spectral
//! efficiency is held as an exact decimal) so the figures are bit-stable.

mod mcs;
mod numerology;

pub use mcs::{McsEntry, McsTable, SpectralEfficiency};
pub use numerology::{Numerology, NUMEROLOGIES};

use thiserror::Error;

/// Sub-channel sizes (in PRBs) allowed by the sidelink resource pool configuration.
pub const STANDARD_SUBCHANNEL_SIZES: [u32; 8] = [10, 12, 15, 20, 25, 50, 75, 100];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CapacityError {
    #[error("configuration leaves no resource elements for data ({0} REs per PRB)")]
    NoDataRoom(i64),
    #[error("PSFCH symbols ({pfsch}) exceed sidelink symbols ({sh})")]
    FeedbackExceedsSymbols { sh: u32, pfsch: u32 },
    #[error("package of {package_prbs} PRBs does not fit a {carrier_prbs}-PRB carrier")]
    PackageExceedsCarrier { package_prbs: u32, carrier_prbs: u32 },
    #[error("package of {0} PRBs exceeds the largest standard sub-channel (100 PRBs)")]
    NoStandardSubchannel(u32),
    #[error("package size must be positive")]
    EmptyPackage,
    #[error("unknown numerology mu={0} (expected 0..=3)")]
    UnknownNumerology(u8),
    #[error("RRI must be a positive number of milliseconds")]
    InvalidRri,
    #[error("MCS index {0} out of range 0..=27")]
    McsIndexOutOfRange(u8),
    #[error("modulation order {0} is not one of 2, 4, 6, 8")]
    BadModulationOrder(u8),
    #[error("spectral efficiency `{0}` is not a positive decimal")]
    BadEfficiency(String),
    #[error("MCS index {0} not present in table")]
    UnknownMcs(u8),
    #[error("MCS table line {line}: {message}")]
    McsTableLine { line: usize, message: String },
    #[error("cannot read MCS table {path}: {message}")]
    McsTableIo { path: String, message: String },
    #[error("baseline capacity must be positive and not below the compared capacity")]
    BadOverheadInputs,
}

/// How package PRBs map onto a sub-channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubchannelSizing {
    /// A sub-channel is exactly as wide as one package.
    #[default]
    ExactFit,
    /// Round the package up to the next size in [`STANDARD_SUBCHANNEL_SIZES`].
    Standard,
}

/// Inputs to the per-PRB resource element count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhyConfig {
    pub subcarriers_per_rb: u32,
    /// Sidelink symbols available for PSSCH (sl-lengthSLsymbols - 2).
    pub sh_symbols: u32,
    /// Symbols taken by PSFCH; zero for broadcast.
    pub pfsch_symbols: u32,
    pub overhead_re: u32,
    pub dmrs_re: u32,
    pub sizing: SubchannelSizing,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            subcarriers_per_rb: 12,
            sh_symbols: 12,
            pfsch_symbols: 0,
            overhead_re: 0,
            dmrs_re: 12,
            sizing: SubchannelSizing::ExactFit,
        }
    }
}

impl PhyConfig {
    /// Width of one sub-channel in PRBs for a package of `package_prbs`.
    pub fn subchannel_prbs(&self, package_prbs: u32) -> Result<u32, CapacityError> {
        if package_prbs == 0 {
            return Err(CapacityError::EmptyPackage);
        }
        match self.sizing {
            SubchannelSizing::ExactFit => Ok(package_prbs),
            SubchannelSizing::Standard => STANDARD_SUBCHANNEL_SIZES
                .iter()
                .copied()
                .find(|&m| m >= package_prbs)
                .ok_or(CapacityError::NoStandardSubchannel(package_prbs)),
        }
    }
}

/// Resource elements per PRB usable by PSSCH.
pub fn re_per_prb(cfg: &PhyConfig) -> Result<u32, CapacityError> {
    if cfg.pfsch_symbols > cfg.sh_symbols {
        return Err(CapacityError::FeedbackExceedsSymbols {
            sh: cfg.sh_symbols,
            pfsch: cfg.pfsch_symbols,
        });
    }
    let n = i64::from(cfg.subcarriers_per_rb) * i64::from(cfg.sh_symbols - cfg.pfsch_symbols)
        - i64::from(cfg.overhead_re)
        - i64::from(cfg.dmrs_re);
    if n <= 0 {
        return Err(CapacityError::NoDataRoom(n));
    }
    Ok(n as u32)
}

/// PRBs across the maximum carrier bandwidth: floor(CBW / SCS / 12).
pub fn prbs_per_slot(num: &Numerology) -> u32 {
    let cbw_khz = u64::from(num.max_carrier_bw_mhz) * 1000;
    (cbw_khz / (u64::from(num.scs_khz) * 12)) as u32
}

/// Resource elements one package of `payload_bytes` occupies:
/// ceil(bits / modulation_order / efficiency).
pub fn res_per_package(payload_bytes: u32, mcs: &McsEntry) -> u64 {
    let eff = mcs.spectral_efficiency;
    let num = u128::from(payload_bytes) * 8 * u128::from(eff.denominator());
    let den = u128::from(mcs.modulation_order) * u128::from(eff.numerator());
    num.div_ceil(den) as u64
}

/// PRBs one package needs. Rounds up so the allocation covers the payload.
pub fn prbs_per_package(
    payload_bytes: u32,
    mcs: &McsEntry,
    cfg: &PhyConfig,
) -> Result<u32, CapacityError> {
    let per_prb = u64::from(re_per_prb(cfg)?);
    Ok(res_per_package(payload_bytes, mcs).div_ceil(per_prb) as u32)
}

/// Sub-channels of `subchannel_prbs` that fit in one slot.
pub fn subchannels_per_slot(num: &Numerology, subchannel_prbs: u32) -> Result<u32, CapacityError> {
    if subchannel_prbs == 0 {
        return Err(CapacityError::EmptyPackage);
    }
    let carrier_prbs = prbs_per_slot(num);
    let n = carrier_prbs / subchannel_prbs;
    if n == 0 {
        return Err(CapacityError::PackageExceedsCarrier {
            package_prbs: subchannel_prbs,
            carrier_prbs,
        });
    }
    Ok(n)
}

/// Vehicles one RRI can carry with one resource each.
pub fn max_vehicles(rri_ms: u32, num: &Numerology, subchannel_prbs: u32) -> Result<u32, CapacityError> {
    if rri_ms == 0 {
        return Err(CapacityError::InvalidRri);
    }
    Ok(subchannels_per_slot(num, subchannel_prbs)? * num.slots_per_rri(rri_ms))
}

/// Capacity given up relative to a baseline: 1 - capacity / baseline.
pub fn overhead_fraction(capacity: u32, baseline_capacity: u32) -> Result<f64, CapacityError> {
    if baseline_capacity == 0 || capacity > baseline_capacity {
        return Err(CapacityError::BadOverheadInputs);
    }
    Ok(f64::from(baseline_capacity - capacity) / f64::from(baseline_capacity))
}

/// Every intermediate figure of the dimensioning pipeline for one package size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityReport {
    pub numerology: Numerology,
    pub payload_bytes: u32,
    pub mcs: McsEntry,
    pub rri_ms: u32,
    pub re_per_prb: u32,
    pub res_per_package: u64,
    pub prbs_per_package: u32,
    pub prbs_per_slot: u32,
    /// `None` when the package is empty and needs no sub-channel.
    pub subchannel_prbs: Option<u32>,
    pub subchannels_per_slot: Option<u32>,
    pub max_vehicles: Option<u32>,
}

impl CapacityReport {
    pub fn compute(
        num: Numerology,
        payload_bytes: u32,
        mcs: McsEntry,
        cfg: &PhyConfig,
        rri_ms: u32,
    ) -> Result<Self, CapacityError> {
        if rri_ms == 0 {
            return Err(CapacityError::InvalidRri);
        }
        let re = re_per_prb(cfg)?;
        let res = res_per_package(payload_bytes, &mcs);
        let prbs = prbs_per_package(payload_bytes, &mcs, cfg)?;
        let (sub_prbs, per_slot, vehicles) = if prbs == 0 {
            (None, None, None)
        } else {
            let sub = cfg.subchannel_prbs(prbs)?;
            let per_slot = subchannels_per_slot(&num, sub)?;
            (Some(sub), Some(per_slot), Some(max_vehicles(rri_ms, &num, sub)?))
        };
        Ok(Self {
            numerology: num,
            payload_bytes,
            mcs,
            rri_ms,
            re_per_prb: re,
            res_per_package: res,
            prbs_per_package: prbs,
            prbs_per_slot: prbs_per_slot(&num),
            subchannel_prbs: sub_prbs,
            subchannels_per_slot: per_slot,
            max_vehicles: vehicles,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(sc: u32, sh: u32, pf: u32, oh: u32, dmrs: u32) -> PhyConfig {
        PhyConfig {
            subcarriers_per_rb: sc,
            sh_symbols: sh,
            pfsch_symbols: pf,
            overhead_re: oh,
            dmrs_re: dmrs,
            sizing: SubchannelSizing::ExactFit,
        }
    }

    fn mu(m: u8) -> Numerology {
        Numerology::from_mu(m).unwrap()
    }

    #[test]
    fn re_per_prb_examples() {
        assert_eq!(re_per_prb(&cfg(12, 12, 0, 0, 12)), Ok(132));
        assert_eq!(re_per_prb(&cfg(12, 14, 0, 0, 0)), Ok(168));
        assert_eq!(re_per_prb(&cfg(12, 12, 12, 0, 0)), Err(CapacityError::NoDataRoom(0)));
        assert_eq!(re_per_prb(&cfg(12, 2, 0, 20, 12)), Err(CapacityError::NoDataRoom(-8)));
        assert!(matches!(
            re_per_prb(&cfg(12, 2, 3, 0, 0)),
            Err(CapacityError::FeedbackExceedsSymbols { .. })
        ));
        assert_eq!(re_per_prb(&PhyConfig::default()), Ok(132));
    }

    #[test]
    fn prbs_per_slot_examples() {
        assert_eq!(prbs_per_slot(&mu(0)), 277);
        assert_eq!(prbs_per_slot(&mu(1)), 277);
        assert_eq!(prbs_per_slot(&mu(3)), 277);
        assert_eq!(prbs_per_slot(&mu(2)), 277);
    }

    #[test]
    fn res_per_package_examples() {
        let qpsk = McsEntry::qpsk_ledger_default();
        assert_eq!(res_per_package(350, &qpsk), 5973);
        assert_eq!(res_per_package(0, &qpsk), 0);
        assert_eq!(res_per_package(300, &qpsk), 5120);
    }

    #[test]
    fn unrounded_intermediates_as_rationals() {
        // 2800 / 2 / 0.2344 = 28_000_000 / 4688 = 5972.696...; 5973 / 132 = 45.25; 277 / 46 = 6.0217...
        assert!(5972 * 4688 < 28_000_000 && 28_000_000 < 5973 * 4688);
        assert!(45 * 132 < 5973 && 5973 < 46 * 132);
        assert!(6 * 46 <= 277 && 277 < 7 * 46);
        // 50 MHz / 15 kHz / 12 = 277.77...
        assert!(277 * 180 < 50_000 && 50_000 < 278 * 180);
    }

    #[test]
    fn prbs_per_package_examples() {
        let qpsk = McsEntry::qpsk_ledger_default();
        let c = PhyConfig::default();
        assert_eq!(prbs_per_package(350, &qpsk, &c), Ok(46));
        assert_eq!(prbs_per_package(300, &qpsk, &c), Ok(39));
        assert_eq!(prbs_per_package(0, &qpsk, &c), Ok(0));
    }

    #[test]
    fn subchannels_and_vehicles() {
        assert_eq!(subchannels_per_slot(&mu(0), 46), Ok(6));
        assert_eq!(subchannels_per_slot(&mu(0), 39), Ok(7));
        assert_eq!(
            subchannels_per_slot(&mu(0), 278),
            Err(CapacityError::PackageExceedsCarrier { package_prbs: 278, carrier_prbs: 277 })
        );
        assert_eq!(max_vehicles(100, &mu(0), 46), Ok(600));
        assert_eq!(max_vehicles(100, &mu(0), 39), Ok(700));
        assert_eq!(max_vehicles(1, &mu(0), 46), Ok(6));
        assert_eq!(max_vehicles(0, &mu(0), 46), Err(CapacityError::InvalidRri));
        assert!(max_vehicles(100, &mu(0), 300).is_err());
        // Two slots per subframe doubles the per-RRI resources.
        assert_eq!(max_vehicles(100, &mu(1), 46), Ok(1200));
    }

    #[test]
    fn overhead_examples() {
        assert!((overhead_fraction(600, 700).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(overhead_fraction(700, 700), Ok(0.0));
        assert!((overhead_fraction(6, 7).unwrap() - 0.142_857_142_857).abs() < 1e-12);
        assert!(overhead_fraction(8, 7).is_err());
        assert!(overhead_fraction(0, 0).is_err());
    }

    #[test]
    fn standard_sizing_rounds_up() {
        let c = PhyConfig {
            sizing: SubchannelSizing::Standard,
            ..PhyConfig::default()
        };
        assert_eq!(c.subchannel_prbs(46), Ok(50));
        assert_eq!(c.subchannel_prbs(39), Ok(50));
        assert_eq!(c.subchannel_prbs(10), Ok(10));
        assert_eq!(c.subchannel_prbs(11), Ok(12));
        assert_eq!(c.subchannel_prbs(101), Err(CapacityError::NoStandardSubchannel(101)));
        assert_eq!(c.subchannel_prbs(0), Err(CapacityError::EmptyPackage));
        let r = CapacityReport::compute(mu(0), 350, McsEntry::qpsk_ledger_default(), &c, 100).unwrap();
        assert_eq!(r.subchannels_per_slot, Some(5));
        assert_eq!(r.max_vehicles, Some(500));
    }

    #[test]
    fn report_for_empty_payload() {
        let r = CapacityReport::compute(
            mu(0),
            0,
            McsEntry::qpsk_ledger_default(),
            &PhyConfig::default(),
            100,
        )
        .unwrap();
        assert_eq!(r.prbs_per_package, 0);
        assert_eq!(r.subchannels_per_slot, None);
        assert_eq!(r.max_vehicles, None);
    }
}
