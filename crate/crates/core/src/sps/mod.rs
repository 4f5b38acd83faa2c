//! Semi-persistent scheduling over a shared sidelink resource pool.
//!
//! A resource is one (subframe, sub-channel) cell of the RRI-periodic grid.
//! Sensing is perfect and boolean: a cell is busy iff someone transmits on
//! it, and a transmission is decodable iff it is alone on its cell.

mod world;

pub use world::{AwarenessEvent, CollisionEvent, Occupancy, World, WorldConfig};

use rand::Rng;
use thiserror::Error;

use crate::ledger::{CollisionRecord, LocalLedger, SensingList, VehicleId};

pub const RC_MIN: u8 = 5;
pub const RC_MAX: u8 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpsError {
    #[error("end of period evaluated with {0} transmissions left on the counter")]
    CounterNotExpired(u8),
    #[error("vehicle {0} already transmitted in this RRI")]
    DoubleTransmission(VehicleId),
    #[error("resource ({subframe}, {subchannel}) outside a {subframes}x{subchannels} grid")]
    OutOfGrid {
        subframe: u16,
        subchannel: u8,
        subframes: u16,
        subchannels: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Plain SPS: reselect with probability 1 - p at the end of each period.
    Baseline,
    /// Ledger-augmented SPS: reselect iff a collision was learned this period.
    Ledger,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Ledger => "ledger",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Resource {
    pub subframe: u16,
    pub subchannel: u8,
}

/// Who transmits where during the current RRI.
#[derive(Debug, Clone)]
pub struct ResourceGrid {
    subframes_per_rri: u16,
    subchannels_per_slot: u8,
    occupancy: Vec<Vec<VehicleId>>,
    transmitted: [bool; 256],
}

impl ResourceGrid {
    pub fn new(subframes_per_rri: u16, subchannels_per_slot: u8) -> Self {
        let cells = usize::from(subframes_per_rri) * usize::from(subchannels_per_slot);
        Self {
            subframes_per_rri,
            subchannels_per_slot,
            occupancy: vec![Vec::new(); cells],
            transmitted: [false; 256],
        }
    }

    pub fn subframes_per_rri(&self) -> u16 {
        self.subframes_per_rri
    }

    pub fn subchannels_per_slot(&self) -> u8 {
        self.subchannels_per_slot
    }

    pub fn cell_count(&self) -> usize {
        self.occupancy.len()
    }

    fn index(&self, r: Resource) -> Result<usize, SpsError> {
        if r.subframe >= self.subframes_per_rri || r.subchannel >= self.subchannels_per_slot {
            return Err(SpsError::OutOfGrid {
                subframe: r.subframe,
                subchannel: r.subchannel,
                subframes: self.subframes_per_rri,
                subchannels: self.subchannels_per_slot,
            });
        }
        Ok(usize::from(r.subframe) * usize::from(self.subchannels_per_slot) + usize::from(r.subchannel))
    }

    pub fn resource_at(&self, index: usize) -> Resource {
        let c = usize::from(self.subchannels_per_slot);
        Resource {
            subframe: (index / c) as u16,
            subchannel: (index % c) as u8,
        }
    }

    /// Starts a new RRI with an empty grid.
    pub fn clear(&mut self) {
        self.occupancy.iter_mut().for_each(Vec::clear);
        self.transmitted = [false; 256];
    }

    pub fn place(&mut self, vehicle: VehicleId, r: Resource) -> Result<(), SpsError> {
        let i = self.index(r)?;
        if self.transmitted[usize::from(vehicle.0)] {
            return Err(SpsError::DoubleTransmission(vehicle));
        }
        self.transmitted[usize::from(vehicle.0)] = true;
        self.occupancy[i].push(vehicle);
        Ok(())
    }

    pub fn transmitters(&self, r: Resource) -> &[VehicleId] {
        self.index(r).map(|i| self.occupancy[i].as_slice()).unwrap_or(&[])
    }
}

/// What a listener senses on `subframe_index`: every sub-channel with at
/// least one transmitter carries energy, collisions included.
pub fn sense(grid: &ResourceGrid, subframe_index: u16, timestamp_us: u64) -> SensingList {
    let busy = (0..grid.subchannels_per_slot)
        .map(|c| {
            !grid
                .transmitters(Resource { subframe: subframe_index, subchannel: c })
                .is_empty()
        })
        .collect();
    SensingList {
        subframe_index,
        timestamp_us,
        busy,
    }
}

/// Busy/idle state of every resource in one RRI, as seen by one vehicle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusyMap {
    subchannels: u8,
    busy: Vec<bool>,
}

impl BusyMap {
    pub fn idle(subframes: u16, subchannels: u8) -> Self {
        Self {
            subchannels,
            busy: vec![false; usize::from(subframes) * usize::from(subchannels)],
        }
    }

    pub fn set(&mut self, r: Resource, busy: bool) {
        let i = usize::from(r.subframe) * usize::from(self.subchannels) + usize::from(r.subchannel);
        self.busy[i] = busy;
    }

    pub fn is_busy(&self, r: Resource) -> bool {
        self.busy[usize::from(r.subframe) * usize::from(self.subchannels) + usize::from(r.subchannel)]
    }

    pub fn idle_count(&self) -> usize {
        self.busy.iter().filter(|b| !**b).count()
    }

    fn resource(&self, i: usize) -> Resource {
        let c = usize::from(self.subchannels);
        Resource {
            subframe: (i / c) as u16,
            subchannel: (i % c) as u8,
        }
    }
}

/// Uniform pick among idle resources; with none idle, uniform over all of
/// them (the collision is then unavoidable).
pub fn select_resource<R: Rng + ?Sized>(view: &BusyMap, rng: &mut R) -> Resource {
    let idle: Vec<usize> = (0..view.busy.len()).filter(|&i| !view.busy[i]).collect();
    let i = if idle.is_empty() {
        rng.gen_range(0..view.busy.len())
    } else {
        idle[rng.gen_range(0..idle.len())]
    };
    view.resource(i)
}

/// Fresh Re-selection Counter, uniform on [5, 15].
pub fn draw_rc<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    rng.gen_range(RC_MIN..=RC_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Reselect,
}

/// Per-vehicle SPS state.
#[derive(Debug, Clone)]
pub struct VehicleState {
    pub vehicle_id: VehicleId,
    pub resource: Resource,
    /// Transmissions left in the current period.
    pub rc: u8,
    pub keep_probability: f64,
    pub mode: Mode,
    pub ledger: LocalLedger,
    pub collided_this_period: bool,
    /// Start of the last transmit slot.
    pub t_last_us: Option<u64>,
    /// This period's transmissions as collision positions, with whether the
    /// vehicle has learned that each one collided.
    pub period_transmissions: Vec<(CollisionRecord, bool)>,
}

impl VehicleState {
    pub fn new(vehicle_id: VehicleId, mode: Mode, keep_probability: f64, resource: Resource, rc: u8) -> Self {
        Self {
            vehicle_id,
            resource,
            rc,
            keep_probability,
            mode,
            ledger: LocalLedger::new(),
            collided_this_period: false,
            t_last_us: None,
            period_transmissions: Vec::new(),
        }
    }
}

/// Keep-or-reselect decision once the counter has run out.
///
/// One uniform variate is always consumed so that both modes stay on the
/// same random stream. A fresh counter is drawn either way and the
/// period's collision state is cleared.
pub fn end_of_period<R: Rng + ?Sized>(v: &mut VehicleState, rng: &mut R) -> Result<Decision, SpsError> {
    if v.rc != 0 {
        return Err(SpsError::CounterNotExpired(v.rc));
    }
    let u: f64 = rng.gen();
    let reselect = match v.mode {
        Mode::Baseline => u < 1.0 - v.keep_probability,
        Mode::Ledger => v.collided_this_period,
    };
    v.rc = draw_rc(rng);
    v.collided_this_period = false;
    v.period_transmissions.clear();
    Ok(if reselect { Decision::Reselect } else { Decision::Keep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(sf: u16, sc: u8) -> Resource {
        Resource { subframe: sf, subchannel: sc }
    }

    #[test]
    fn sensing_reflects_occupancy() {
        let mut g = ResourceGrid::new(10, 6);
        assert_eq!(sense(&g, 5, 5000).busy, vec![false; 6]);
        g.place(VehicleId(1), r(5, 2)).unwrap();
        let s = sense(&g, 5, 5000);
        assert_eq!(s.busy, vec![false, false, true, false, false, false]);
        assert_eq!(sense(&g, 4, 4000).busy, vec![false; 6]);
        g.place(VehicleId(2), r(5, 2)).unwrap();
        assert_eq!(sense(&g, 5, 5000).busy, vec![false, false, true, false, false, false]);
        assert_eq!(g.transmitters(r(5, 2)), &[VehicleId(1), VehicleId(2)]);
    }

    #[test]
    fn grid_enforces_one_transmission_per_rri() {
        let mut g = ResourceGrid::new(10, 6);
        g.place(VehicleId(1), r(0, 0)).unwrap();
        assert_eq!(g.place(VehicleId(1), r(3, 0)), Err(SpsError::DoubleTransmission(VehicleId(1))));
        assert!(matches!(g.place(VehicleId(2), r(10, 0)), Err(SpsError::OutOfGrid { .. })));
        assert!(matches!(g.place(VehicleId(2), r(0, 6)), Err(SpsError::OutOfGrid { .. })));
        g.clear();
        g.place(VehicleId(1), r(3, 0)).unwrap();
        assert_eq!(g.resource_at(3 * 6 + 4), r(3, 4));
    }

    #[test]
    fn selection_is_reproducible() {
        let view = BusyMap::idle(100, 6);
        let a = select_resource(&view, &mut ChaCha8Rng::seed_from_u64(9));
        let b = select_resource(&view, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn selection_forced_and_overloaded() {
        let mut view = BusyMap::idle(3, 2);
        for sf in 0..3 {
            for sc in 0..2 {
                view.set(r(sf, sc), true);
            }
        }
        view.set(r(1, 1), false);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(select_resource(&view, &mut rng), r(1, 1));
        }
        view.set(r(1, 1), true);
        assert_eq!(view.idle_count(), 0);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let pick = select_resource(&view, &mut rng);
            assert!(pick.subframe < 3 && pick.subchannel < 2);
            seen.insert(pick);
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn selection_never_picks_busy_when_idle_exists() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut view = BusyMap::idle(20, 3);
        for i in 0..50u16 {
            view.set(r(i % 20, (i % 3) as u8), true);
        }
        for _ in 0..1000 {
            assert!(!view.is_busy(select_resource(&view, &mut rng)));
        }
    }

    #[test]
    fn rc_range_and_determinism() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = draw_rc(&mut a);
            assert!((5..=15).contains(&x));
            assert_eq!(x, draw_rc(&mut b));
        }
    }

    #[test]
    fn rc_is_uniform() {
        // Each of 11 values: count ~ Binomial(n, 1/11); allow 3 sigma.
        let n = 100_000u32;
        let mut counts = [0u32; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..n {
            counts[usize::from(draw_rc(&mut rng))] += 1;
        }
        let p = 1.0 / 11.0;
        let mean = f64::from(n) * p;
        let sigma = (f64::from(n) * p * (1.0 - p)).sqrt();
        for v in 5..=15 {
            assert!((f64::from(counts[v]) - mean).abs() <= 3.0 * sigma, "value {v}: {}", counts[v]);
        }
        assert_eq!(counts[..5].iter().sum::<u32>(), 0);
    }

    fn vehicle(mode: Mode, p: f64) -> VehicleState {
        VehicleState::new(VehicleId(1), mode, p, r(0, 0), 0)
    }

    #[test]
    fn ledger_mode_decision_follows_collision_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let mut v = vehicle(Mode::Ledger, 0.0);
            assert_eq!(end_of_period(&mut v, &mut rng), Ok(Decision::Keep));
            assert!((5..=15).contains(&v.rc));
            let mut v = vehicle(Mode::Ledger, 1.0);
            v.collided_this_period = true;
            assert_eq!(end_of_period(&mut v, &mut rng), Ok(Decision::Reselect));
            assert!(!v.collided_this_period);
        }
    }

    #[test]
    fn baseline_reselect_frequency() {
        let n = 100_000u32;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut reselects = 0u32;
        for _ in 0..n {
            let mut v = vehicle(Mode::Baseline, 0.8);
            if end_of_period(&mut v, &mut rng).unwrap() == Decision::Reselect {
                reselects += 1;
            }
        }
        let sigma = (0.2 * 0.8 / f64::from(n)).sqrt();
        let freq = f64::from(reselects) / f64::from(n);
        assert!((freq - 0.2).abs() <= 3.0 * sigma, "{freq}");
    }

    #[test]
    fn baseline_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            assert_eq!(end_of_period(&mut vehicle(Mode::Baseline, 1.0), &mut rng), Ok(Decision::Keep));
            assert_eq!(end_of_period(&mut vehicle(Mode::Baseline, 0.0), &mut rng), Ok(Decision::Reselect));
        }
    }

    #[test]
    fn end_of_period_requires_expired_counter() {
        let mut v = vehicle(Mode::Ledger, 0.0);
        v.rc = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(end_of_period(&mut v, &mut rng), Err(SpsError::CounterNotExpired(3)));
        assert_eq!(v.rc, 3);
    }

    #[test]
    fn both_modes_consume_identical_draws() {
        let mut a = ChaCha8Rng::seed_from_u64(8);
        let mut b = ChaCha8Rng::seed_from_u64(8);
        let mut va = vehicle(Mode::Baseline, 1.0);
        let mut vb = vehicle(Mode::Ledger, 1.0);
        end_of_period(&mut va, &mut a).unwrap();
        end_of_period(&mut vb, &mut b).unwrap();
        assert_eq!(va.rc, vb.rc);
        assert_eq!(draw_rc(&mut a), draw_rc(&mut b));
    }
}
