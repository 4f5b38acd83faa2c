use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    draw_rc, end_of_period, select_resource, sense, BusyMap, Decision, Mode, Resource, ResourceGrid,
    SpsError, VehicleState,
};
use crate::ledger::{
    assign_vehicle_id, decode_packet, encode_packet, timestamp_begin_sps, timestamp_within_sps,
    CollisionRecord, LedgerPacket, LocalLedger, ProtocolError, RecordSource, VehicleId,
    MAX_COLLISION_RECORDS,
};
use crate::phy::Numerology;

/// Scenario parameters for a single world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub mode: Mode,
    pub num_vehicles: usize,
    pub numerology: Numerology,
    pub rri_ms: u32,
    pub subchannels_per_slot: u8,
    pub keep_probability: f64,
    pub seed: u64,
    /// Ledger entries older than this many RRIs are dropped.
    pub ledger_retention_rris: u32,
    /// Keep every occupied cell in [`World::occupancy_log`].
    pub log_occupancy: bool,
}

/// A resource on which two or more vehicles transmitted together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionEvent {
    pub rri_index: u32,
    pub subframe_index: u16,
    pub subchannel_id: u8,
    pub colliders: Vec<VehicleId>,
    pub t_trans_us: u64,
}

/// One occupied cell: who transmitted on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    pub t_us: u64,
    pub rri_index: u32,
    pub subframe_index: u16,
    pub subchannel_id: u8,
    pub transmitters: Vec<VehicleId>,
}

/// A vehicle learning (through the Ledger) that one of its transmissions collided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AwarenessEvent {
    pub vehicle_id: VehicleId,
    pub collision_t_us: u64,
    pub aware_at_us: u64,
}

#[derive(Debug, Clone, Copy)]
struct Schedule {
    slot: u64,
    t_us: u64,
}

/// Per-vehicle record of what it heard during the last RRI.
#[derive(Debug, Clone)]
struct Senses {
    view: BusyMap,
    /// Subframes whose latest occurrence the vehicle spent transmitting, with that time.
    missed: Vec<(u16, u64)>,
}

/// A network of vehicles sharing one sidelink resource pool, advanced one
/// subframe (slot) at a time.
///
/// Vehicles are held in ascending id order and processed in that order.
/// Every vehicle draws from its own RNG stream keyed by (seed, id); the
/// environment stream only assigns ids.
pub struct World {
    cfg: WorldConfig,
    slots_per_rri: u16,
    rri_us: u64,
    grid: ResourceGrid,
    vehicles: Vec<VehicleState>,
    rngs: Vec<ChaCha8Rng>,
    schedule: Vec<Schedule>,
    senses: Vec<Senses>,
    slot: u64,
    rri_counts: Vec<(u32, u32)>,
    occupancy_log: Vec<Occupancy>,
    awareness_log: Vec<AwarenessEvent>,
}

fn vehicle_rng(seed: u64, id: VehicleId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + u64::from(id.0));
    rng
}

impl World {
    /// Joins `num_vehicles` vehicles at t = 0, each selecting from an all-idle view.
    pub fn new(cfg: WorldConfig) -> Result<Self, ProtocolError> {
        let mut env = ChaCha8Rng::seed_from_u64(cfg.seed);
        env.set_stream(0);
        let mut ids = BTreeSet::new();
        for _ in 0..cfg.num_vehicles {
            let id = assign_vehicle_id(&ids, &mut env)?;
            ids.insert(id);
        }
        let slots = cfg.numerology.slots_per_rri(cfg.rri_ms) as u16;
        let idle = BusyMap::idle(slots, cfg.subchannels_per_slot);
        let placements = ids
            .into_iter()
            .map(|id| {
                let mut rng = vehicle_rng(cfg.seed, id);
                let resource = select_resource(&idle, &mut rng);
                let rc = draw_rc(&mut rng);
                (id, resource, rc, rng)
            })
            .collect();
        Ok(Self::assemble(cfg, placements))
    }

    /// Builds a world with explicit initial resources and counters.
    pub fn with_placements(
        cfg: WorldConfig,
        placements: &[(VehicleId, Resource, u8)],
    ) -> Result<Self, SpsError> {
        let slots = cfg.numerology.slots_per_rri(cfg.rri_ms) as u16;
        let mut seen = ResourceGrid::new(slots, cfg.subchannels_per_slot);
        for (id, r, _) in placements {
            seen.place(*id, *r)?;
        }
        let mut sorted: Vec<_> = placements
            .iter()
            .map(|&(id, r, rc)| (id, r, rc, vehicle_rng(cfg.seed, id)))
            .collect();
        sorted.sort_by_key(|p| p.0);
        Ok(Self::assemble(cfg, sorted))
    }

    fn assemble(cfg: WorldConfig, placements: Vec<(VehicleId, Resource, u8, ChaCha8Rng)>) -> Self {
        let slots = cfg.numerology.slots_per_rri(cfg.rri_ms) as u16;
        let slot_us = u64::from(cfg.numerology.slot_duration_us);
        let mut vehicles = Vec::with_capacity(placements.len());
        let mut rngs = Vec::with_capacity(placements.len());
        let mut schedule = Vec::with_capacity(placements.len());
        for (id, resource, rc, rng) in placements {
            vehicles.push(VehicleState::new(id, cfg.mode, cfg.keep_probability, resource, rc));
            rngs.push(rng);
            let n_select = u32::from(resource.subframe);
            schedule.push(Schedule {
                slot: u64::from(n_select),
                t_us: timestamp_begin_sps(0, n_select, &cfg.numerology),
            });
            debug_assert_eq!(schedule.last().unwrap().t_us, u64::from(n_select) * slot_us);
        }
        let senses = vec![
            Senses {
                view: BusyMap::idle(slots, cfg.subchannels_per_slot),
                missed: Vec::new(),
            };
            vehicles.len()
        ];
        Self {
            rri_us: u64::from(cfg.rri_ms) * 1000,
            slots_per_rri: slots,
            grid: ResourceGrid::new(slots, cfg.subchannels_per_slot),
            cfg,
            vehicles,
            rngs,
            schedule,
            senses,
            slot: 0,
            rri_counts: Vec::new(),
            occupancy_log: Vec::new(),
            awareness_log: Vec::new(),
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.index_of(id).map(|i| &self.vehicles[i])
    }

    fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.vehicles.binary_search_by_key(&id, |v| v.vehicle_id).ok()
    }

    pub fn slots_per_rri(&self) -> u16 {
        self.slots_per_rri
    }

    /// `(rri_index, subframe_index)` of the next subframe to be simulated.
    pub fn position(&self) -> (u32, u16) {
        let s = u64::from(self.slots_per_rri);
        ((self.slot / s) as u32, (self.slot % s) as u16)
    }

    pub fn now_us(&self) -> u64 {
        self.slot * u64::from(self.cfg.numerology.slot_duration_us)
    }

    /// `(transmissions, colliding transmissions)` for every RRI started so far.
    pub fn rri_counts(&self) -> &[(u32, u32)] {
        &self.rri_counts
    }

    pub fn occupancy_log(&self) -> &[Occupancy] {
        &self.occupancy_log
    }

    pub fn awareness_log(&self) -> &[AwarenessEvent] {
        &self.awareness_log
    }

    /// The busy map a vehicle would select from right now.
    ///
    /// Subframes it could not sense because it was transmitting are filled
    /// from its Ledger in ledger mode and excluded entirely in baseline mode.
    pub fn selection_view(&self, id: VehicleId) -> Option<BusyMap> {
        self.index_of(id).map(|i| self.selection_view_at(i))
    }

    fn selection_view_at(&self, i: usize) -> BusyMap {
        let senses = &self.senses[i];
        let mut view = senses.view.clone();
        let ledger = &self.vehicles[i].ledger;
        for &(sf, t) in &senses.missed {
            for c in 0..self.cfg.subchannels_per_slot {
                let busy = match self.cfg.mode {
                    Mode::Baseline => true,
                    Mode::Ledger => {
                        ledger.records_at(t).any(|r| r.subchannel_id == c)
                            || ledger.collisions_at(t).any(|x| x.subchannel_id == c)
                    }
                };
                view.set(Resource { subframe: sf, subchannel: c }, busy);
            }
        }
        view
    }

    /// Simulates the next subframe and returns the collisions in it.
    pub fn advance_subframe(&mut self) -> Vec<CollisionEvent> {
        let (rri, sf) = self.position();
        let now = self.now_us();
        if sf == 0 {
            self.grid.clear();
            self.rri_counts.push((0, 0));
            if self.cfg.mode == Mode::Ledger {
                let horizon = now.saturating_sub(u64::from(self.cfg.ledger_retention_rris) * self.rri_us);
                for v in &mut self.vehicles {
                    v.ledger.prune_before(horizon);
                }
            }
        }

        // Vehicles due now; an expired counter triggers the period decision first.
        let mut transmitters = Vec::new();
        for i in 0..self.vehicles.len() {
            if self.schedule[i].slot != self.slot {
                continue;
            }
            debug_assert_eq!(self.schedule[i].t_us, now);
            if self.vehicles[i].rc == 0 {
                let decision = end_of_period(&mut self.vehicles[i], &mut self.rngs[i])
                    .expect("counter is zero");
                if decision == Decision::Reselect {
                    self.reselect(i, sf, now);
                    continue;
                }
            }
            transmitters.push(i);
        }

        for &i in &transmitters {
            let v = &self.vehicles[i];
            self.grid
                .place(v.vehicle_id, v.resource)
                .expect("one transmission per vehicle per RRI");
        }

        let mut events = Vec::new();
        let mut decodable: Vec<usize> = Vec::new();
        let (mut sent, mut collided) = (0u32, 0u32);
        for c in 0..self.cfg.subchannels_per_slot {
            let tx = self.grid.transmitters(Resource { subframe: sf, subchannel: c });
            if tx.is_empty() {
                continue;
            }
            sent += tx.len() as u32;
            if tx.len() >= 2 {
                collided += tx.len() as u32;
                events.push(CollisionEvent {
                    rri_index: rri,
                    subframe_index: sf,
                    subchannel_id: c,
                    colliders: tx.to_vec(),
                    t_trans_us: now,
                });
            } else {
                decodable.push(self.index_of(tx[0]).expect("transmitter is a member"));
            }
            if self.cfg.log_occupancy {
                self.occupancy_log.push(Occupancy {
                    t_us: now,
                    rri_index: rri,
                    subframe_index: sf,
                    subchannel_id: c,
                    transmitters: tx.to_vec(),
                });
            }
        }

        let counts = self.rri_counts.last_mut().expect("RRI opened");
        counts.0 += sent;
        counts.1 += collided;

        if self.cfg.mode == Mode::Ledger {
            self.exchange_ledgers(&transmitters, &decodable, sf, now);
        } else {
            self.sense_only(&transmitters, sf, now);
        }

        let next_slot = self.slot + u64::from(self.slots_per_rri);
        for &i in &transmitters {
            let v = &mut self.vehicles[i];
            v.rc = v.rc.saturating_sub(1);
            v.t_last_us = Some(now);
            v.period_transmissions.push((
                CollisionRecord { subframe_timestamp_us: now, subchannel_id: v.resource.subchannel },
                false,
            ));
            let missed = &mut self.senses[i].missed;
            missed.retain(|(m, _)| *m != sf);
            missed.push((sf, now));
            self.schedule[i] = Schedule {
                slot: next_slot,
                t_us: timestamp_within_sps(now, self.cfg.rri_ms),
            };
        }

        self.slot += 1;
        events
    }

    fn reselect(&mut self, i: usize, sf: u16, now: u64) {
        let view = self.selection_view_at(i);
        let resource = select_resource(&view, &mut self.rngs[i]);
        let s = u32::from(self.slots_per_rri);
        let mut ahead = (u32::from(resource.subframe) + s - u32::from(sf)) % s;
        if ahead == 0 {
            ahead = s;
        }
        self.vehicles[i].resource = resource;
        self.schedule[i] = Schedule {
            slot: self.slot + u64::from(ahead),
            t_us: timestamp_begin_sps(now, ahead, &self.cfg.numerology),
        };
    }

    fn build_packet(&self, i: usize, now: u64) -> LedgerPacket {
        let v = &self.vehicles[i];
        let recent = v
            .ledger
            .recent_collisions(now.saturating_sub(self.rri_us), now, MAX_COLLISION_RECORDS);
        LedgerPacket::new(v.vehicle_id, v.resource.subchannel, v.resource.subframe, now, recent)
            .expect("recent collisions fit the header")
    }

    fn sense_only(&mut self, transmitters: &[usize], sf: u16, now: u64) {
        let sensed = sense(&self.grid, sf, now);
        for i in 0..self.vehicles.len() {
            if transmitters.contains(&i) {
                continue;
            }
            self.update_view(i, sf, &sensed.busy);
        }
    }

    fn update_view(&mut self, i: usize, sf: u16, busy: &[bool]) {
        let senses = &mut self.senses[i];
        for (c, b) in busy.iter().enumerate() {
            senses.view.set(Resource { subframe: sf, subchannel: c as u8 }, *b);
        }
        senses.missed.retain(|(m, _)| *m != sf);
    }

    fn exchange_ledgers(&mut self, transmitters: &[usize], decodable: &[usize], sf: u16, now: u64) {
        // Every transmitter encodes; only lone transmissions decode.
        let mut decoded = Vec::with_capacity(decodable.len());
        let mut packets = Vec::with_capacity(transmitters.len());
        for &i in transmitters {
            let pkt = self.build_packet(i, now);
            let wire = encode_packet(&pkt).expect("packet encodes");
            if decodable.contains(&i) {
                decoded.push(decode_packet(&wire).expect("own encoding decodes"));
            }
            packets.push((i, pkt));
        }

        // Senders' replicas, lent out while listeners merge from them.
        let senders: Vec<LocalLedger> = decodable
            .iter()
            .map(|&i| std::mem::take(&mut self.vehicles[i].ledger))
            .collect();

        let sensed = sense(&self.grid, sf, now);
        for i in 0..self.vehicles.len() {
            if transmitters.contains(&i) {
                continue;
            }
            let v = &mut self.vehicles[i];
            v.ledger
                .ingest_subframe(&sensed, &decoded)
                .expect("decoded packets belong to this subframe");
            for &(_, missed_t) in &self.senses[i].missed {
                for remote in &senders {
                    v.ledger.merge_remote(
                        remote.records_at(missed_t).filter(|r| r.source != RecordSource::SelfTx),
                        remote.collisions_at(missed_t),
                    );
                }
            }
            for (pos, aware) in v.period_transmissions.iter_mut() {
                if !*aware && v.ledger.contains_collision(pos) {
                    *aware = true;
                    v.collided_this_period = true;
                    self.awareness_log.push(AwarenessEvent {
                        vehicle_id: v.vehicle_id,
                        collision_t_us: pos.subframe_timestamp_us,
                        aware_at_us: now,
                    });
                }
            }
            self.update_view(i, sf, &sensed.busy);
        }

        for (&i, ledger) in decodable.iter().zip(senders) {
            self.vehicles[i].ledger = ledger;
        }
        for (i, pkt) in packets {
            self.vehicles[i].ledger.record_own_transmission(&pkt);
        }
    }
}
