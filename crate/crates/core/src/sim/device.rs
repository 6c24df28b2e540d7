//! Everything one simulated device owns. Volatile parts are rebuilt on
//! reboot; `storage` is the only state that survives a crash.

use std::collections::BTreeMap;

use crate::action::{ActionConfig, ActionEndpoint, ActionId, TimerSlot};
use crate::dts::{DtsBuffer, DtsConfig, StationState};
use crate::echo::{EchoConfig, NeighborTable, Role};
use crate::game::{Potato, PotatoId, PotatoStatus};
use crate::kernel::{EventHandle, RngStream, SimTime};
use crate::metrics::{Counters, DeviceMetrics};
use crate::mobility::AgentState;
use crate::persistence::{Checkpoint, HeldPotato, Storage, DEFAULT_CAPACITY_BYTES};
use crate::DeviceId;

#[derive(Debug)]
pub(crate) struct Device {
    pub id: DeviceId,
    pub role: Role,
    pub online: bool,
    /// Crashed for good; never reboots.
    pub failed: bool,
    /// Bumped on every crash; events carrying an older epoch are dead.
    pub epoch: u64,
    /// Still in the game. Players only.
    pub alive: bool,
    pub beaconing: bool,
    pub table: NeighborTable,
    pub endpoint: ActionEndpoint,
    pub potatoes: BTreeMap<PotatoId, Potato>,
    /// When each held potato last became active here.
    pub acquired: BTreeMap<PotatoId, SimTime>,
    pub fuses: BTreeMap<PotatoId, EventHandle>,
    pub timers: BTreeMap<TimerSlot, EventHandle>,
    pub storage: Storage,
    pub dts: DtsBuffer,
    pub counters: Counters,
    pub gesturing: bool,
    pub not_before: SimTime,
    /// Gesture recognition time per started hand-over.
    pub recognized: BTreeMap<ActionId, SimTime>,
    pub crashed_at: Option<SimTime>,
    pub reboot: Option<EventHandle>,
    pub beacon_rng: RngStream,
    pub game_rng: RngStream,
    pub gesture_rng: RngStream,
    pub mobility_rng: RngStream,
    pub agent: Option<AgentState>,
    pub station: Option<StationState>,
    pub metrics: DeviceMetrics,
    pub in_station_range: u64,
    pub out_of_station_range: u64,
}

impl Device {
    pub fn new(
        id: DeviceId,
        role: Role,
        seed: u64,
        echo: &EchoConfig,
        action: ActionConfig,
    ) -> Self {
        let i = u64::from(id.0);
        Device {
            id,
            role,
            online: true,
            failed: false,
            epoch: 0,
            alive: role == Role::Player,
            beaconing: false,
            table: NeighborTable::new(id, echo.staleness_ms),
            endpoint: ActionEndpoint::new(id, action),
            potatoes: BTreeMap::new(),
            acquired: BTreeMap::new(),
            fuses: BTreeMap::new(),
            timers: BTreeMap::new(),
            storage: Storage::new(id, DEFAULT_CAPACITY_BYTES),
            dts: DtsBuffer::new(DtsConfig::default(), 0),
            counters: Counters::default(),
            gesturing: false,
            not_before: SimTime::ZERO,
            recognized: BTreeMap::new(),
            crashed_at: None,
            reboot: None,
            beacon_rng: RngStream::new(seed, "beacon", i),
            game_rng: RngStream::new(seed, "game", i),
            gesture_rng: RngStream::new(seed, "gesture", i),
            mobility_rng: RngStream::new(seed, "mobility", i),
            agent: None,
            station: (role == Role::Station).then(|| StationState::new(id)),
            metrics: DeviceMetrics::new(id, role),
            in_station_range: 0,
            out_of_station_range: 0,
        }
    }

    pub fn is_player(&self) -> bool {
        self.role == Role::Player
    }

    /// The active potato to pass next: the one closest to exploding.
    pub fn next_to_pass(&self, now: SimTime) -> Option<PotatoId> {
        self.potatoes
            .values()
            .filter(|p| p.is_active())
            .min_by_key(|p| (p.remaining_ms(now), p.id))
            .map(|p| p.id)
    }

    pub fn holds_active(&self) -> bool {
        self.potatoes.values().any(|p| p.is_active())
    }

    /// Write the checkpoint and durable counters.
    pub fn persist(&mut self, now: SimTime) {
        let outgoing = self.endpoint.outgoing().map(|t| (t.snapshot.id, t.action));
        let held = self
            .potatoes
            .values()
            .map(|p| HeldPotato {
                snapshot: p.snapshot(now),
                status: p.status(),
                as_of: now,
                transfer: outgoing.filter(|(id, _)| *id == p.id).map(|(_, a)| a),
            })
            .collect();
        self.storage.meta.next_action = self.endpoint.next_counter();
        self.storage.meta.dts_acked = self.dts.acked();
        let upto_seq = self.storage.last_seq();
        self.storage.write_checkpoint(Checkpoint {
            alive: self.alive,
            held,
            taken_at: now,
            upto_seq,
        });
    }

    pub fn suspended(&self) -> impl Iterator<Item = PotatoId> + '_ {
        self.potatoes
            .values()
            .filter(|p| p.status() == PotatoStatus::Suspended)
            .map(|p| p.id)
    }
}
