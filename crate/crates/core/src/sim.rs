//! Monte Carlo experiment driver.
//!
//! A [`SimConfig`] describes a scenario; [`run`] simulates one seed in one
//! mode, [`run_ensemble`] averages seeds (in parallel), and [`run_paired`]
//! runs baseline and Ledger SPS on identical random streams.
//!
//! Collision probability for an RRI is colliding transmissions divided by
//! all transmissions in that RRI (zero when nobody transmitted).

use rayon::prelude::*;
use thiserror::Error;

use crate::ledger::ProtocolError;
use crate::phy::{CapacityError, CapacityReport, McsEntry, Numerology, PhyConfig};
use crate::sps::{AwarenessEvent, CollisionEvent, Mode, Occupancy, World, WorldConfig};

/// Shortest run that covers a maximal SPS period (RC = 15).
pub const MIN_RRIS: u32 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{num_vehicles} vehicles exceed the capacity of {capacity} resources per RRI (set allow_overload to run anyway)")]
    CapacityExceeded { num_vehicles: usize, capacity: u32 },
    #[error("num_rris must be at least {MIN_RRIS}, got {0}")]
    TooFewRris(u32),
    #[error("at most 256 vehicles fit one-byte ids, got {0}")]
    TooManyVehicles(usize),
    #[error("keep_probability must lie in [0, 1], got {0}")]
    BadKeepProbability(f64),
    #[error("no seeds given")]
    NoSeeds,
    #[error("sub-channels per slot must be in 1..=255, got {0}")]
    BadSubchannels(u32),
    #[error("RRI of {0} ms gives more than 65535 slots")]
    RriTooLong(u32),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Baseline,
    Ledger,
    Both,
}

impl SimMode {
    pub fn modes(&self) -> &'static [Mode] {
        match self {
            SimMode::Baseline => &[Mode::Baseline],
            SimMode::Ledger => &[Mode::Ledger],
            SimMode::Both => &[Mode::Baseline, Mode::Ledger],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub num_vehicles: usize,
    pub rri_ms: u32,
    pub numerology: Numerology,
    pub payload_bytes: u32,
    pub mcs: McsEntry,
    pub phy: PhyConfig,
    /// Overrides the sub-channel count derived from the package size.
    pub subchannels_per_slot: Option<u32>,
    pub num_rris: u32,
    pub seeds: Vec<u64>,
    pub mode: SimMode,
    /// Baseline keep probability p.
    pub keep_probability: f64,
    pub allow_overload: bool,
    pub ledger_retention_rris: u32,
    /// Record every occupied resource in the traces.
    pub log_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_vehicles: 100,
            rri_ms: 100,
            numerology: Numerology::from_mu(0).expect("mu 0 exists"),
            payload_bytes: 350,
            mcs: McsEntry::qpsk_ledger_default(),
            phy: PhyConfig::default(),
            subchannels_per_slot: None,
            num_rris: 100,
            seeds: (1..=30).collect(),
            mode: SimMode::Ledger,
            keep_probability: 0.8,
            allow_overload: false,
            ledger_retention_rris: 2,
            log_events: false,
        }
    }
}

/// Grid dimensions a validated config resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub subframes_per_rri: u16,
    pub subchannels_per_slot: u8,
}

impl GridShape {
    pub fn resources(&self) -> u32 {
        u32::from(self.subframes_per_rri) * u32::from(self.subchannels_per_slot)
    }
}

impl SimConfig {
    /// Checks the scenario and resolves the resource grid.
    pub fn validate(&self) -> Result<GridShape, SimError> {
        if self.num_rris < MIN_RRIS {
            return Err(SimError::TooFewRris(self.num_rris));
        }
        if !(0.0..=1.0).contains(&self.keep_probability) {
            return Err(SimError::BadKeepProbability(self.keep_probability));
        }
        if self.num_vehicles > 256 {
            return Err(SimError::TooManyVehicles(self.num_vehicles));
        }
        if self.rri_ms == 0 {
            return Err(CapacityError::InvalidRri.into());
        }
        let slots = self.numerology.slots_per_rri(self.rri_ms);
        if slots > u32::from(u16::MAX) {
            return Err(SimError::RriTooLong(self.rri_ms));
        }
        let subchannels = match self.subchannels_per_slot {
            Some(n) => n,
            None => {
                let report =
                    CapacityReport::compute(self.numerology, self.payload_bytes, self.mcs, &self.phy, self.rri_ms)?;
                report.subchannels_per_slot.ok_or(CapacityError::EmptyPackage)?
            }
        };
        if subchannels == 0 || subchannels > 255 {
            return Err(SimError::BadSubchannels(subchannels));
        }
        let shape = GridShape {
            subframes_per_rri: slots as u16,
            subchannels_per_slot: subchannels as u8,
        };
        if self.num_vehicles as u64 > u64::from(shape.resources()) && !self.allow_overload {
            return Err(SimError::CapacityExceeded {
                num_vehicles: self.num_vehicles,
                capacity: shape.resources(),
            });
        }
        Ok(shape)
    }

    fn world_config(&self, shape: GridShape, mode: Mode, seed: u64) -> WorldConfig {
        WorldConfig {
            mode,
            num_vehicles: self.num_vehicles,
            numerology: self.numerology,
            rri_ms: self.rri_ms,
            subchannels_per_slot: shape.subchannels_per_slot,
            keep_probability: self.keep_probability,
            seed,
            ledger_retention_rris: self.ledger_retention_rris,
            log_occupancy: self.log_events,
        }
    }
}

/// One seed's per-RRI collision statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub mode: Mode,
    pub collision_probability: Vec<f64>,
    pub transmissions: Vec<u32>,
    pub colliding: Vec<u32>,
    pub convergence_rri: Option<usize>,
    pub collision_events: Vec<CollisionEvent>,
    pub awareness: Vec<AwarenessEvent>,
    /// Every occupied resource, when the config asks for it.
    pub occupancy: Vec<Occupancy>,
}

/// Seed-averaged trace for one mode, with the per-seed traces behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTrace {
    pub mode: Mode,
    pub per_rri_collision_probability: Vec<f64>,
    pub min_probability: Vec<f64>,
    pub max_probability: Vec<f64>,
    pub per_seed_convergence_rri: Vec<Option<usize>>,
    pub per_seed: Vec<RunTrace>,
}

impl MetricsTrace {
    pub fn n_seeds(&self) -> usize {
        self.per_seed.len()
    }

    /// Mean convergence index over seeds that converged, and how many did.
    pub fn mean_convergence_rri(&self) -> (f64, usize) {
        let hits: Vec<usize> = self.per_seed_convergence_rri.iter().flatten().copied().collect();
        if hits.is_empty() {
            return (f64::NAN, 0);
        }
        (hits.iter().sum::<usize>() as f64 / hits.len() as f64, hits.len())
    }
}

/// Collision probability per RRI from raw counts.
pub fn probabilities(transmissions: &[u32], colliding: &[u32]) -> Vec<f64> {
    transmissions
        .iter()
        .zip(colliding)
        .map(|(&t, &c)| if t == 0 { 0.0 } else { f64::from(c) / f64::from(t) })
        .collect()
}

/// Smallest index from which the trace stays at zero; `None` if its last
/// entry is nonzero.
pub fn convergence_rri(trace: &[f64]) -> Option<usize> {
    match trace.iter().rposition(|&p| p != 0.0) {
        None => Some(0),
        Some(last) if last + 1 < trace.len() => Some(last + 1),
        Some(_) => None,
    }
}

/// Simulates one seed in one mode.
pub fn run(config: &SimConfig, mode: Mode, seed: u64) -> Result<RunTrace, SimError> {
    let shape = config.validate()?;
    let mut world = World::new(config.world_config(shape, mode, seed))?;
    let mut events = Vec::new();
    for _ in 0..config.num_rris {
        for _ in 0..shape.subframes_per_rri {
            events.extend(world.advance_subframe());
        }
    }
    let (transmissions, colliding): (Vec<u32>, Vec<u32>) = world.rri_counts().iter().copied().unzip();
    let collision_probability = probabilities(&transmissions, &colliding);
    Ok(RunTrace {
        seed,
        mode,
        convergence_rri: convergence_rri(&collision_probability),
        collision_probability,
        transmissions,
        colliding,
        collision_events: events,
        awareness: world.awareness_log().to_vec(),
        occupancy: world.occupancy_log().to_vec(),
    })
}

/// Runs every seed of `config` in `mode`, seeds in parallel, and averages
/// per RRI in seed order.
pub fn run_ensemble(config: &SimConfig, mode: Mode) -> Result<MetricsTrace, SimError> {
    if config.seeds.is_empty() {
        return Err(SimError::NoSeeds);
    }
    config.validate()?;
    let per_seed: Vec<RunTrace> = config
        .seeds
        .par_iter()
        .map(|&seed| run(config, mode, seed))
        .collect::<Result<_, _>>()?;
    Ok(aggregate(mode, per_seed))
}

fn aggregate(mode: Mode, per_seed: Vec<RunTrace>) -> MetricsTrace {
    let len = per_seed.first().map_or(0, |t| t.collision_probability.len());
    let n = per_seed.len() as f64;
    let mut mean = vec![0.0; len];
    let mut min = vec![f64::INFINITY; len];
    let mut max = vec![f64::NEG_INFINITY; len];
    for t in &per_seed {
        for (k, &p) in t.collision_probability.iter().enumerate() {
            mean[k] += p;
            min[k] = min[k].min(p);
            max[k] = max[k].max(p);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    MetricsTrace {
        mode,
        per_rri_collision_probability: mean,
        min_probability: min,
        max_probability: max,
        per_seed_convergence_rri: per_seed.iter().map(|t| t.convergence_rri).collect(),
        per_seed,
    }
}

/// Baseline and Ledger ensembles on common random numbers.
pub fn run_paired(config: &SimConfig) -> Result<(MetricsTrace, MetricsTrace), SimError> {
    Ok((run_ensemble(config, Mode::Baseline)?, run_ensemble(config, Mode::Ledger)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            num_vehicles: 20,
            rri_ms: 20,
            subchannels_per_slot: Some(3),
            num_rris: 40,
            seeds: vec![1, 2, 3],
            ..SimConfig::default()
        }
    }

    #[test]
    fn convergence_index_examples() {
        assert_eq!(convergence_rri(&[0.0, 0.0, 0.0]), Some(0));
        assert_eq!(convergence_rri(&[0.2, 0.1, 0.0, 0.0]), Some(2));
        assert_eq!(convergence_rri(&[0.2, 0.0, 0.1, 0.0]), Some(3));
        assert_eq!(convergence_rri(&[0.2, 0.0, 0.1]), None);
        assert_eq!(convergence_rri(&[]), Some(0));
    }

    #[test]
    fn default_grid_is_600_resources() {
        let shape = SimConfig::default().validate().unwrap();
        assert_eq!(shape, GridShape { subframes_per_rri: 100, subchannels_per_slot: 6 });
        assert_eq!(shape.resources(), 600);
    }

    #[test]
    fn validation_errors() {
        let c = SimConfig { num_rris: 14, ..SimConfig::default() };
        assert_eq!(c.validate(), Err(SimError::TooFewRris(14)));
        let c = SimConfig { keep_probability: 1.5, ..SimConfig::default() };
        assert!(matches!(c.validate(), Err(SimError::BadKeepProbability(_))));
        let c = SimConfig { num_vehicles: 257, ..SimConfig::default() };
        assert_eq!(c.validate(), Err(SimError::TooManyVehicles(257)));
        let c = SimConfig { num_vehicles: 30, subchannels_per_slot: Some(1), rri_ms: 20, ..SimConfig::default() };
        assert_eq!(c.validate(), Err(SimError::CapacityExceeded { num_vehicles: 30, capacity: 20 }));
        let c = SimConfig { allow_overload: true, ..c };
        assert!(c.validate().is_ok());
        let c = SimConfig { subchannels_per_slot: Some(0), ..SimConfig::default() };
        assert_eq!(c.validate(), Err(SimError::BadSubchannels(0)));
        let c = SimConfig { payload_bytes: 0, ..SimConfig::default() };
        assert!(matches!(c.validate(), Err(SimError::Capacity(_))));
        let c = SimConfig { seeds: vec![], ..SimConfig::default() };
        assert_eq!(run_ensemble(&c, Mode::Ledger), Err(SimError::NoSeeds));
    }

    #[test]
    fn single_vehicle_never_collides() {
        let c = SimConfig { num_vehicles: 1, ..small() };
        for mode in [Mode::Baseline, Mode::Ledger] {
            let t = run(&c, mode, 5).unwrap();
            assert_eq!(t.collision_probability, vec![0.0; 40]);
            assert_eq!(t.convergence_rri, Some(0));
        }
    }

    #[test]
    fn run_is_deterministic() {
        let c = small();
        assert_eq!(run(&c, Mode::Ledger, 9).unwrap(), run(&c, Mode::Ledger, 9).unwrap());
        assert_eq!(run(&c, Mode::Baseline, 9).unwrap(), run(&c, Mode::Baseline, 9).unwrap());
    }

    #[test]
    fn ensemble_mean_matches_per_seed() {
        let c = small();
        let e = run_ensemble(&c, Mode::Baseline).unwrap();
        assert_eq!(e.n_seeds(), 3);
        assert_eq!(e.per_rri_collision_probability.len(), 40);
        for k in 0..40 {
            let ps: Vec<f64> = e.per_seed.iter().map(|t| t.collision_probability[k]).collect();
            let mean = (ps[0] + ps[1] + ps[2]) / 3.0;
            assert_eq!(e.per_rri_collision_probability[k], mean);
            assert_eq!(e.min_probability[k], ps.iter().cloned().fold(f64::INFINITY, f64::min));
            assert_eq!(e.max_probability[k], ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }

    #[test]
    fn single_seed_ensemble_equals_run() {
        let c = SimConfig { seeds: vec![4], ..small() };
        let e = run_ensemble(&c, Mode::Ledger).unwrap();
        assert_eq!(e.per_rri_collision_probability, run(&c, Mode::Ledger, 4).unwrap().collision_probability);
    }

    #[test]
    fn duplicate_seed_counts_twice() {
        let c = SimConfig { seeds: vec![4, 4, 6], ..small() };
        let e = run_ensemble(&c, Mode::Ledger).unwrap();
        assert_eq!(e.per_seed[0], e.per_seed[1]);
        let a = run(&c, Mode::Ledger, 4).unwrap().collision_probability;
        let b = run(&c, Mode::Ledger, 6).unwrap().collision_probability;
        for k in 0..40 {
            assert_eq!(e.per_rri_collision_probability[k], (a[k] + a[k] + b[k]) / 3.0);
        }
    }

    #[test]
    fn probabilities_stay_in_unit_interval() {
        let c = SimConfig { num_vehicles: 70, allow_overload: true, ..small() };
        for mode in [Mode::Baseline, Mode::Ledger] {
            let t = run(&c, mode, 3).unwrap();
            assert_eq!(t.collision_probability.len(), 40);
            assert!(t.collision_probability.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
