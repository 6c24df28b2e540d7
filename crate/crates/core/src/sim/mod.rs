//! The simulated world: devices, radio, mobility and infrastructure on one
//! event loop, plus the oracle watching all of it.
//!
//! A run has two phases. While playing, players move, generate and pass
//! potatoes. Once one player is left (or the duration cap hits) the game
//! freezes: players walk to the nearest Station and stay there until every
//! device has uploaded its log and all hand-overs have settled.

mod device;
pub mod oracle;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::rc::Rc;

use crate::action::{
    ActionConfig, ActionId, ActionMessage, Effect, FailReason, Initiation, TimerSlot,
};
use crate::dts::{Analysis, DtsConfig, EngineView};
use crate::echo::{Beacon, EchoConfig, Role};
use crate::game::{generation_probability, Potato, PotatoId, PotatoStatus, TickOutcome};
use crate::gesture::{classify, synthesize, GestureLabel};
use crate::kernel::{Scheduler, SimTime};
use crate::metrics::{DeviceMetrics, MetricsRow};
use crate::mobility::{
    choose_waypoint, decide_action, step_mobility, AgentState, HoldingView, Surroundings,
};
use crate::persistence::{recover, EventLog, GameEvent};
use crate::radio::{LinkModel, Position, Radio};
use crate::scenario::Scenario;
use crate::DeviceId;

use device::Device;
pub use oracle::{DuplicateRecord, FuseRecord, Oracle, TransferRecord, Violation};

pub const REBOOT_DELAY_MS: u64 = 3000;
pub const MOBILITY_STEP_MS: u64 = 100;
pub const GENERATION_PERIOD_MS: u64 = 1000;
pub const BACKBONE_LATENCY_MS: u64 = 10;

#[derive(Debug, Clone)]
enum Ev {
    Beacon(DeviceId, u64),
    BeaconRx {
        to: DeviceId,
        bytes: Rc<Vec<u8>>,
        distance: f64,
    },
    ActionRx(ActionMessage),
    ActionTimer(DeviceId, u64, TimerSlot),
    Decide {
        dev: DeviceId,
        epoch: u64,
        periodic: bool,
    },
    GestureDone {
        dev: DeviceId,
        epoch: u64,
        intended: GestureLabel,
        classified: GestureLabel,
    },
    Generate(DeviceId, u64),
    Explode(DeviceId, u64, PotatoId),
    Move,
    Waypoints,
    DtsTick(DeviceId, u64),
    DtsRx {
        station: DeviceId,
        from: DeviceId,
        entries: Vec<crate::persistence::LogEntry>,
    },
    DtsAckRx {
        to: DeviceId,
        upto: u64,
    },
    Forward(DeviceId),
    EngineRx {
        station: DeviceId,
        batch: u64,
        entries: Vec<(DeviceId, crate::persistence::LogEntry)>,
    },
    EngineAckRx {
        station: DeviceId,
        batch: u64,
    },
    Sample,
    Crash {
        dev: DeviceId,
        reboot: bool,
    },
    Reboot(DeviceId, u64),
    Cap,
    DrainCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Playing,
    PostGame { since: SimTime },
    Done,
}

/// What to keep beyond logs and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub record_trace: bool,
    pub record_beacons: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            record_trace: true,
            record_beacons: true,
        }
    }
}

impl RunOptions {
    /// Logs, metrics and verdicts only.
    pub fn lean() -> Self {
        RunOptions {
            record_trace: false,
            record_beacons: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PotatoRecovery {
    pub potato: PotatoId,
    pub remaining_at_crash_ms: u64,
    pub remaining_after_reboot_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryRecord {
    pub device: DeviceId,
    pub crashed_at: SimTime,
    pub rebooted_at: SimTime,
    pub potatoes: Vec<PotatoRecovery>,
}

impl RecoveryRecord {
    pub fn offline_ms(&self) -> u64 {
        self.rebooted_at.since(self.crashed_at)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub players: usize,
    pub stations: usize,
    pub winner: Option<DeviceId>,
    /// Time from start to the last elimination, or to the cap.
    pub duration_ms: u64,
    pub ended_by_cap: bool,
    /// When the post-game upload phase finished.
    pub finished_at_ms: u64,
    pub drain_timed_out: bool,
    pub passes: u64,
    pub failed_actions: u64,
    pub generated: u64,
    pub exploded: u64,
    pub removed: u64,
    pub crashes: usize,
    /// Batches relayed from other Stations to the Engine over the backbone.
    pub backbone_batches: u64,
    pub events_executed: u64,
}

/// Oracle verdicts for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub violations: Vec<Violation>,
    pub duplicates: Vec<DuplicateRecord>,
    pub quiescence_checks: u64,
    /// `None` when the run had crashes or duplicates.
    pub engine_converged: Option<bool>,
    pub engine_complete: bool,
    pub max_fuse_error_ms: u64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub scenario: Scenario,
    pub summary: RunSummary,
    pub oracle: OracleReport,
    pub metrics: Vec<DeviceMetrics>,
    /// Durable log of every player, as extracted after the game.
    pub device_logs: Vec<EventLog>,
    pub engine: EngineView,
    pub analysis: Analysis,
    pub oracle_state: crate::game::GameState,
    /// Gesture recognition to completed hand-over, per successful pass.
    pub negotiation_ms: Vec<u64>,
    pub transfers: Vec<TransferRecord>,
    pub fuse_checks: Vec<FuseRecord>,
    pub recoveries: Vec<RecoveryRecord>,
    /// Per player, share of game-time samples with no Station in radio range.
    pub out_of_station_range: Vec<f64>,
    pub trace: String,
    pub beacons: Vec<u8>,
}

pub struct Simulation {
    scenario: Scenario,
    opts: RunOptions,
    echo: EchoConfig,
    dts_cfg: DtsConfig,
    sched: Scheduler<Ev>,
    radio: Radio,
    devices: Vec<Device>,
    engine_station: Option<DeviceId>,
    engine: EngineView,
    oracle: Oracle,
    phase: Phase,
    game_over_at: Option<SimTime>,
    ended_by_cap: bool,
    drain_timed_out: bool,
    inflight_actions: usize,
    negotiation: Vec<u64>,
    recoveries: Vec<RecoveryRecord>,
    pending_recovery: BTreeMap<DeviceId, Vec<(PotatoId, u64)>>,
    crashes: usize,
    backbone_batches: u64,
    trace: String,
    beacons: Vec<u8>,
}

impl Simulation {
    pub fn new(scenario: Scenario, opts: RunOptions) -> Self {
        let seed = scenario.seed;
        let link = LinkModel {
            base_range: scenario.radio.range,
            p_loss: scenario.radio.p_loss,
            latency_ms: scenario.radio.latency_ms,
        };
        let echo = EchoConfig::default();
        let action = ActionConfig::default();
        let mut radio = Radio::new(scenario.field, link, seed, scenario.tx_factors());
        let mut placement = crate::kernel::RngStream::new(seed, "placement", 0);
        let mut devices = Vec::with_capacity(scenario.device_count());
        for i in 0..scenario.players.count {
            let id = DeviceId(i as u16);
            let mut d = Device::new(id, Role::Player, seed, &echo, action);
            let pos = Position::new(
                placement.draw_uniform() * scenario.field.width,
                placement.draw_uniform() * scenario.field.height,
            );
            radio.set_position(id, pos);
            d.agent = Some(AgentState::new(pos, scenario.strategy_of(i)));
            devices.push(d);
        }
        for (i, st) in scenario.stations.iter().enumerate() {
            let id = scenario.station_id(i);
            radio.set_position(id, st.position);
            devices.push(Device::new(id, Role::Station, seed, &echo, action));
        }
        let engine_station = scenario.engine_index().map(|i| scenario.station_id(i));
        let oracle = Oracle::new((0..scenario.players.count).map(|i| DeviceId(i as u16)));
        Simulation {
            scenario,
            opts,
            echo,
            dts_cfg: DtsConfig::default(),
            sched: Scheduler::new(),
            radio,
            devices,
            engine_station,
            engine: EngineView::new(),
            oracle,
            phase: Phase::Playing,
            game_over_at: None,
            ended_by_cap: false,
            drain_timed_out: false,
            inflight_actions: 0,
            negotiation: Vec::new(),
            recoveries: Vec::new(),
            pending_recovery: BTreeMap::new(),
            crashes: 0,
            backbone_batches: 0,
            trace: String::new(),
            beacons: Vec::new(),
        }
    }

    fn now(&self) -> SimTime {
        self.sched.now()
    }

    fn at(&mut self, t: SimTime, ev: Ev) -> crate::kernel::EventHandle {
        self.sched
            .schedule(t.max(self.now()), ev)
            .expect("never in the past")
    }

    fn after(&mut self, ms: u64, ev: Ev) -> crate::kernel::EventHandle {
        self.sched.schedule_in(ms, ev)
    }

    fn dev(&self, id: DeviceId) -> &Device {
        &self.devices[id.index()]
    }

    fn dev_mut(&mut self, id: DeviceId) -> &mut Device {
        &mut self.devices[id.index()]
    }

    fn playing(&self) -> bool {
        self.phase == Phase::Playing
    }

    fn note(&mut self, line: impl FnOnce() -> String) {
        if self.opts.record_trace {
            let l = line();
            self.trace.push_str(&l);
            self.trace.push('\n');
        }
    }

    fn log(&mut self, id: DeviceId, event: GameEvent) {
        let now = self.now();
        if self.opts.record_trace {
            writeln!(
                self.trace,
                "{}\t{}\t{}\t{}",
                now.0,
                id,
                event.kind(),
                event.fields()
            )
            .expect("String");
        }
        self.dev_mut(id).storage.append(now, event);
    }

    fn start(&mut self) {
        let now = SimTime::ZERO;
        for i in 0..self.devices.len() {
            let id = self.devices[i].id;
            let delay = self.echo.initial_delay(&mut self.devices[i].beacon_rng);
            self.devices[i].beaconing = true;
            self.after(delay, Ev::Beacon(id, 0));
            if self.devices[i].is_player() {
                self.log(id, GameEvent::GameStarted { role: Role::Player });
                self.dev_mut(id).persist(now);
                self.after(GENERATION_PERIOD_MS, Ev::Generate(id, 0));
                let period = self.scenario.players.decision_period_ms;
                self.after(
                    period,
                    Ev::Decide {
                        dev: id,
                        epoch: 0,
                        periodic: true,
                    },
                );
                self.after(self.dts_cfg.tick_ms, Ev::DtsTick(id, 0));
            }
        }
        self.after(0, Ev::Waypoints);
        self.after(MOBILITY_STEP_MS, Ev::Move);
        self.after(0, Ev::Sample);
        self.after(self.scenario.duration_cap_ms, Ev::Cap);
        for c in self.scenario.crashes.clone() {
            self.after(
                c.at_ms,
                Ev::Crash {
                    dev: c.device,
                    reboot: c.reboot,
                },
            );
        }
    }

    /// Execute until the post-game phase completes.
    pub fn run(mut self) -> RunArtifacts {
        self.start();
        while self.phase != Phase::Done {
            let Some((_, ev)) = self.sched.pop_until(SimTime(u64::MAX)) else {
                break;
            };
            self.handle(ev);
        }
        self.finish()
    }

    fn live(&self, id: DeviceId, epoch: u64) -> bool {
        let d = self.dev(id);
        d.online && d.epoch == epoch
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Beacon(id, epoch) => self.on_beacon(id, epoch),
            Ev::BeaconRx {
                to,
                bytes,
                distance,
            } => {
                let now = self.now();
                let d = self.dev_mut(to);
                if d.online {
                    let (beacon, _) =
                        Beacon::decode(&bytes).expect("beacons are encoded by the sender");
                    d.table.on_beacon(&beacon, now, distance);
                }
            }
            Ev::ActionRx(msg) => {
                self.inflight_actions -= 1;
                self.on_action(msg);
                self.check_quiescence();
            }
            Ev::ActionTimer(id, epoch, slot) => {
                if self.live(id, epoch) {
                    self.dev_mut(id).timers.remove(&slot);
                    let now = self.now();
                    let effects = self.dev_mut(id).endpoint.on_timer(slot, now);
                    self.apply(id, effects);
                }
                self.check_quiescence();
            }
            Ev::Decide {
                dev,
                epoch,
                periodic,
            } => self.on_decide(dev, epoch, periodic),
            Ev::GestureDone {
                dev,
                epoch,
                intended,
                classified,
            } => {
                if self.live(dev, epoch) {
                    self.on_gesture(dev, intended, classified);
                    self.check_quiescence();
                }
            }
            Ev::Generate(id, epoch) => self.on_generate(id, epoch),
            Ev::Explode(id, epoch, p) => {
                if self.live(id, epoch) && self.playing() {
                    self.on_explode(id, p);
                    self.check_quiescence();
                }
            }
            Ev::Move => self.on_move(),
            Ev::Waypoints => self.on_waypoints(),
            Ev::DtsTick(id, epoch) => {
                if self.live(id, epoch) {
                    self.after(self.dts_cfg.tick_ms, Ev::DtsTick(id, epoch));
                    self.dts_send(id);
                }
            }
            Ev::DtsRx {
                station,
                from,
                entries,
            } => self.on_dts_rx(station, from, entries),
            Ev::DtsAckRx { to, upto } => {
                let d = self.dev_mut(to);
                if d.online && d.dts.on_ack(upto) {
                    d.storage.meta.dts_acked = d.dts.acked();
                    self.dts_send(to);
                }
            }
            Ev::Forward(st) => self.on_forward(st),
            Ev::EngineRx {
                station,
                batch,
                entries,
            } => {
                self.backbone_batches += 1;
                self.engine.merge(entries);
                self.after(BACKBONE_LATENCY_MS, Ev::EngineAckRx { station, batch });
            }
            Ev::EngineAckRx { station, batch } => {
                if let Some(s) = self.dev_mut(station).station.as_mut() {
                    s.on_engine_ack(batch);
                }
            }
            Ev::Sample => self.on_sample(),
            Ev::Crash { dev, reboot } => {
                self.on_crash(dev, reboot);
                self.check_quiescence();
            }
            Ev::Reboot(id, epoch) => {
                if !self.dev(id).online && self.dev(id).epoch == epoch {
                    self.on_reboot(id);
                    self.check_quiescence();
                }
            }
            Ev::Cap => {
                if self.playing() {
                    self.ended_by_cap = true;
                    self.enter_post_game();
                }
            }
            Ev::DrainCheck => self.on_drain_check(),
        }
    }

    // ---- Echo ----

    fn on_beacon(&mut self, id: DeviceId, epoch: u64) {
        if !self.live(id, epoch) {
            return;
        }
        let now = self.now();
        let playing = self.playing();
        let d = &mut self.devices[id.index()];
        if d.is_player() && !d.alive && playing {
            d.beaconing = false;
            return;
        }
        d.table.expire_stale(now);
        let beacon = d.table.make_beacon(d.role, now, self.echo.heard_cap);
        let next = self.echo.next_delay(&mut d.beacon_rng);
        let bytes = Rc::new(beacon.encode().expect("heard list is capped"));
        if self.opts.record_beacons {
            self.beacons.extend_from_slice(&bytes);
        }
        for del in self.radio.broadcast(id, now) {
            self.sched
                .schedule(
                    del.at,
                    Ev::BeaconRx {
                        to: del.receiver,
                        bytes: Rc::clone(&bytes),
                        distance: del.distance,
                    },
                )
                .expect("latency is non-negative");
        }
        self.after(next, Ev::Beacon(id, epoch));
    }

    // ---- Action protocol ----

    fn send_action(&mut self, msg: ActionMessage) {
        let now = self.now();
        if let Some(del) = self.radio.unicast(msg.from, msg.to, now) {
            self.inflight_actions += 1;
            self.at(del.at, Ev::ActionRx(msg));
        }
    }

    fn on_action(&mut self, msg: ActionMessage) {
        let now = self.now();
        let playing = self.playing();
        let d = self.dev(msg.to);
        if !d.online {
            return;
        }
        let eligible = d.is_player()
            && d.alive
            && playing
            && msg.snapshot.is_none_or(|s| !d.potatoes.contains_key(&s.id));
        let effects = self.dev_mut(msg.to).endpoint.handle(&msg, now, eligible);
        self.apply(msg.to, effects);
    }

    fn apply(&mut self, id: DeviceId, effects: Vec<Effect>) {
        let now = self.now();
        for e in effects {
            match e {
                Effect::Send(m) => self.send_action(m),
                Effect::Arm { slot, after_ms } => {
                    let epoch = self.dev(id).epoch;
                    let h = self.after(after_ms, Ev::ActionTimer(id, epoch, slot));
                    if let Some(old) = self.dev_mut(id).timers.insert(slot, h) {
                        self.sched.cancel(old);
                    }
                }
                Effect::Disarm(slot) => {
                    if let Some(old) = self.dev_mut(id).timers.remove(&slot) {
                        self.sched.cancel(old);
                    }
                }
                Effect::Activate {
                    action,
                    from,
                    snapshot,
                } => {
                    let mut potato = Potato::from_snapshot(snapshot, id, now);
                    potato.pass_count = snapshot.pass_count + 1;
                    let pid = potato.id;
                    self.log(
                        id,
                        GameEvent::Received {
                            potato: pid,
                            action,
                            from,
                            remaining_ms: snapshot.remaining_ms,
                            fuse_ms: snapshot.fuse_ms,
                            pass_count: potato.pass_count,
                        },
                    );
                    let merge = self.dev(id).potatoes.contains_key(&pid);
                    if merge {
                        // Voted yes before another copy of the same potato
                        // arrived; the held copy absorbs this one.
                        self.oracle
                            .applied(pid, action, id, snapshot.remaining_ms, now);
                        self.oracle.merged(pid);
                        self.dev_mut(id).counters.potatoes_received += 1;
                        self.dev_mut(id).persist(now);
                        continue;
                    }
                    self.oracle
                        .applied(pid, action, id, snapshot.remaining_ms, now);
                    let d = self.dev_mut(id);
                    d.counters.potatoes_received += 1;
                    d.potatoes.insert(pid, potato);
                    d.acquired.insert(pid, now);
                    self.arm_fuse(id, pid);
                    self.schedule_reaction(id);
                    self.dev_mut(id).persist(now);
                }
                Effect::Completed {
                    action,
                    potato,
                    target,
                } => {
                    let d = self.dev_mut(id);
                    d.potatoes.remove(&potato);
                    d.acquired.remove(&potato);
                    d.counters.potatoes_sent += 1;
                    if let Some(t0) = d.recognized.remove(&action) {
                        self.negotiation.push(now.since(t0));
                    }
                    self.log(
                        id,
                        GameEvent::PassCompleted {
                            potato,
                            action,
                            target,
                        },
                    );
                    self.oracle.completed(potato, target);
                    self.dev_mut(id).persist(now);
                }
                Effect::Reactivate {
                    action,
                    potato,
                    reason,
                    conflict_possible,
                } => {
                    let target = self.dev(id).endpoint.outgoing().map(|t| t.target);
                    let _ = target;
                    self.dev_mut(id).recognized.remove(&action);
                    self.reactivate(id, potato, Some(action), reason, conflict_possible);
                }
            }
        }
    }

    /// Resume a potato frozen for a hand-over that did not complete.
    fn reactivate(
        &mut self,
        id: DeviceId,
        pid: PotatoId,
        action: Option<ActionId>,
        reason: FailReason,
        conflict_possible: bool,
    ) {
        let now = self.now();
        let period = self.scenario.players.decision_period_ms;
        let Some(remaining_ms) = self.dev(id).potatoes.get(&pid).map(|p| p.remaining_ms(now))
        else {
            return;
        };
        self.dev_mut(id).counters.failed_actions += 1;
        self.log(
            id,
            GameEvent::PassFailed {
                potato: pid,
                action,
                reason,
                remaining_ms,
            },
        );
        if conflict_possible {
            if let Some(a) = action {
                let target = self.oracle_target(a).unwrap_or(id);
                self.log(
                    id,
                    GameEvent::ConflictPossible {
                        potato: pid,
                        action: a,
                        target,
                    },
                );
            }
        }
        self.oracle.reactivated(pid, action, id, now);
        if !self.dev(id).alive {
            self.remove_potato(id, pid);
        } else {
            let d = self.dev_mut(id);
            if let Some(p) = d.potatoes.get_mut(&pid) {
                p.activate(now);
            }
            d.not_before = now + period;
            self.log(
                id,
                GameEvent::Resumed {
                    potato: pid,
                    remaining_ms,
                },
            );
            self.oracle.resumed(pid, id, now);
            self.arm_fuse(id, pid);
        }
        self.dev_mut(id).persist(now);
    }

    /// Target of a hand-over as the holder knew it when starting it.
    fn oracle_target(&self, a: ActionId) -> Option<DeviceId> {
        self.dev(a.initiator)
            .storage
            .entries()
            .rev()
            .find_map(|e| match &e.event {
                GameEvent::PassInitiated { action, target, .. } if *action == a => Some(*target),
                _ => None,
            })
    }

    fn remove_potato(&mut self, id: DeviceId, pid: PotatoId) {
        let now = self.now();
        let d = self.dev_mut(id);
        d.potatoes.remove(&pid);
        d.acquired.remove(&pid);
        if let Some(h) = d.fuses.remove(&pid) {
            self.sched.cancel(h);
        }
        self.log(id, GameEvent::PotatoRemoved { potato: pid });
        self.oracle.removed(pid, id, now);
    }

    fn arm_fuse(&mut self, id: DeviceId, pid: PotatoId) {
        if !self.playing() {
            return;
        }
        let d = self.dev(id);
        let Some(at) = d.potatoes.get(&pid).and_then(|p| p.explodes_at()) else {
            return;
        };
        let epoch = d.epoch;
        let h = self.at(at, Ev::Explode(id, epoch, pid));
        if let Some(old) = self.dev_mut(id).fuses.insert(pid, h) {
            self.sched.cancel(old);
        }
    }

    fn disarm_fuse(&mut self, id: DeviceId, pid: PotatoId) {
        if let Some(h) = self.dev_mut(id).fuses.remove(&pid) {
            self.sched.cancel(h);
        }
    }

    // ---- Player behaviour ----

    fn schedule_reaction(&mut self, id: DeviceId) {
        if !self.playing() {
            return;
        }
        let d = self.dev(id);
        let epoch = d.epoch;
        let delay = d.agent.map_or(0, |a| a.strategy.reaction_delay_ms);
        self.after(
            delay,
            Ev::Decide {
                dev: id,
                epoch,
                periodic: false,
            },
        );
    }

    fn on_decide(&mut self, id: DeviceId, epoch: u64, periodic: bool) {
        if !self.live(id, epoch) {
            return;
        }
        if periodic {
            let period = self.scenario.players.decision_period_ms;
            self.after(
                period,
                Ev::Decide {
                    dev: id,
                    epoch,
                    periodic: true,
                },
            );
        }
        if !self.playing() {
            return;
        }
        let now = self.now();
        let d = self.dev(id);
        let Some(agent) = d.agent else { return };
        let Some(pid) = d.next_to_pass(now) else {
            return;
        };
        let view = HoldingView {
            acquired_at: d.acquired.get(&pid).copied(),
            busy: d.gesturing || d.endpoint.is_busy(),
            not_before: d.not_before,
        };
        let agent = AgentState {
            alive: d.alive,
            ..agent
        };
        match decide_action(&agent, &view, now) {
            Some(due) if due <= now => {}
            _ => return,
        }
        let noise = self.scenario.players.gesture_noise;
        let d = self.dev_mut(id);
        let intended = if d.gesture_rng.chance(0.5) {
            GestureLabel::FlickRight
        } else {
            GestureLabel::FlickLeft
        };
        let trace =
            synthesize(intended, noise, &mut d.gesture_rng).expect("noise validated by scenario");
        let classified = classify(&trace).unwrap_or(GestureLabel::None);
        d.gesturing = true;
        self.after(
            trace.duration_ms(),
            Ev::GestureDone {
                dev: id,
                epoch,
                intended,
                classified,
            },
        );
    }

    fn on_gesture(&mut self, id: DeviceId, intended: GestureLabel, classified: GestureLabel) {
        let now = self.now();
        let period = self.scenario.players.decision_period_ms;
        self.dev_mut(id).gesturing = false;
        if !self.playing() || !self.dev(id).alive {
            return;
        }
        self.log(
            id,
            GameEvent::Gesture {
                performed: intended,
                classified,
            },
        );
        if classified == intended {
            self.dev_mut(id).counters.gestures_recognized += 1;
        }
        if !classified.is_flick() {
            self.dev_mut(id).not_before = now + period;
            return;
        }
        let d = self.dev(id);
        if d.endpoint.is_busy() {
            return;
        }
        let Some(pid) = d.next_to_pass(now) else {
            return;
        };
        let target = d
            .table
            .nearest_bidirectional(now, Role::Player)
            .map(|(t, _)| t);
        let Some(target) = target else {
            let remaining_ms = d.potatoes[&pid].remaining_ms(now);
            let d = self.dev_mut(id);
            d.counters.failed_actions += 1;
            d.not_before = now + period;
            self.log(
                id,
                GameEvent::PassFailed {
                    potato: pid,
                    action: None,
                    reason: FailReason::NoNeighbor,
                    remaining_ms,
                },
            );
            return;
        };
        self.disarm_fuse(id, pid);
        let d = self.dev_mut(id);
        let potato = d.potatoes.get_mut(&pid).expect("chosen from held potatoes");
        potato.suspend(now);
        let snapshot = potato.snapshot(now);
        let started = d
            .endpoint
            .initiate(snapshot, Some(target), now)
            .expect("not busy, checked above");
        let Initiation::Started { action, effects } = started else {
            unreachable!("a target was supplied");
        };
        d.recognized.insert(action, now);
        self.log(
            id,
            GameEvent::PassInitiated {
                potato: pid,
                action,
                target,
                remaining_ms: snapshot.remaining_ms,
            },
        );
        self.oracle
            .suspended(pid, action, id, snapshot.remaining_ms, now);
        self.dev_mut(id).persist(now);
        self.apply(id, effects);
    }

    fn on_generate(&mut self, id: DeviceId, epoch: u64) {
        if !self.live(id, epoch) {
            return;
        }
        self.after(GENERATION_PERIOD_MS, Ev::Generate(id, epoch));
        if !self.playing() || !self.dev(id).alive {
            return;
        }
        let now = self.now();
        let p0 = self.scenario.game.p0;
        let fuse_s = self.scenario.game.fuse_s;
        let d = self.dev_mut(id);
        let n = d.table.bidirectional_count(now, Some(Role::Player));
        if !d.game_rng.chance(generation_probability(p0, n)) {
            return;
        }
        let pid = PotatoId {
            origin: id,
            serial: d.storage.meta.next_potato,
        };
        d.storage.meta.next_potato += 1;
        let potato = Potato::generate(pid, id, fuse_s, now);
        d.potatoes.insert(pid, potato);
        d.acquired.insert(pid, now);
        d.counters.potatoes_generated += 1;
        self.log(
            id,
            GameEvent::Generated {
                potato: pid,
                fuse_ms: fuse_s * 1000,
            },
        );
        self.oracle.generated(pid, id, fuse_s * 1000, now);
        self.arm_fuse(id, pid);
        self.schedule_reaction(id);
        self.dev_mut(id).persist(now);
    }

    fn on_explode(&mut self, id: DeviceId, pid: PotatoId) {
        let now = self.now();
        let d = self.dev_mut(id);
        d.fuses.remove(&pid);
        let Some(p) = d.potatoes.get_mut(&pid) else {
            return;
        };
        if p.tick(now) != TickOutcome::Exploded {
            return;
        }
        d.potatoes.remove(&pid);
        d.acquired.remove(&pid);
        self.log(id, GameEvent::Exploded { potato: pid });
        self.oracle.exploded(pid, id, now);
        if !self.dev(id).alive {
            self.dev_mut(id).persist(now);
            return;
        }
        self.dev_mut(id).alive = false;
        if let Some(a) = self.dev_mut(id).agent.as_mut() {
            a.alive = false;
        }
        self.log(id, GameEvent::Eliminated { potato: pid });
        let over = self.oracle.eliminated(id, now);
        self.note(|| format!("{}\t{}\teliminated_by\tpotato={pid}", now.0, id));

        let outgoing = self.dev(id).endpoint.outgoing().map(|t| t.snapshot.id);
        let others: Vec<PotatoId> = self
            .dev(id)
            .potatoes
            .keys()
            .copied()
            .filter(|p| Some(*p) != outgoing)
            .collect();
        for p in others {
            self.remove_potato(id, p);
        }
        if let Some(t) = self.dev_mut(id).endpoint.abandon_preparing() {
            self.apply(id, vec![Effect::Disarm(TimerSlot::Outgoing(t.action))]);
            self.dev_mut(id).recognized.remove(&t.action);
            self.remove_potato(id, t.snapshot.id);
        }
        let dropped = self.dev_mut(id).endpoint.drop_pending();
        let disarms = dropped
            .into_iter()
            .map(|a| Effect::Disarm(TimerSlot::Pending(a)))
            .collect();
        self.apply(id, disarms);
        self.dev_mut(id).persist(now);
        if over {
            self.enter_post_game();
        }
    }

    // ---- Mobility ----

    fn on_move(&mut self) {
        if !self.playing() {
            return;
        }
        let field = self.scenario.field;
        for i in 0..self.scenario.players.count {
            let d = &mut self.devices[i];
            if let Some(a) = d.agent.as_mut().filter(|a| a.alive) {
                let p = step_mobility(a, field, MOBILITY_STEP_MS);
                self.radio.set_position(d.id, p);
            }
        }
        self.after(MOBILITY_STEP_MS, Ev::Move);
    }

    fn on_waypoints(&mut self) {
        if !self.playing() {
            return;
        }
        let now = self.now();
        let field = self.scenario.field;
        let alive: Vec<(DeviceId, Position)> = self.devices[..self.scenario.players.count]
            .iter()
            .filter(|d| d.agent.is_some_and(|a| a.alive))
            .map(|d| (d.id, self.radio.position(d.id)))
            .collect();
        for i in 0..self.scenario.players.count {
            let d = &self.devices[i];
            let Some(agent) = d.agent.filter(|a| a.alive) else {
                continue;
            };
            let others: Vec<Position> = alive
                .iter()
                .filter(|(o, _)| *o != d.id)
                .map(|(_, p)| *p)
                .collect();
            let (holding, nearest) = if d.online {
                (
                    d.holds_active(),
                    d.table
                        .nearest_bidirectional(now, Role::Player)
                        .map(|(n, _)| self.radio.position(n)),
                )
            } else {
                (false, None)
            };
            let env = Surroundings {
                field,
                others: &others,
                holding,
                nearest_neighbor: nearest,
            };
            let d = &mut self.devices[i];
            let wp = choose_waypoint(&agent, &env, &mut d.mobility_rng);
            if let Some(a) = d.agent.as_mut() {
                a.waypoint = wp;
            }
        }
        self.after(self.scenario.players.decision_period_ms, Ev::Waypoints);
    }

    // ---- Delay-tolerant upload ----

    fn dts_send(&mut self, id: DeviceId) {
        let now = self.now();
        let d = &mut self.devices[id.index()];
        if !d.is_player() || !d.online {
            return;
        }
        let station = d
            .table
            .nearest_bidirectional(now, Role::Station)
            .map(|(s, _)| s);
        let Some((station, entries)) = d.dts.poll(&d.storage, station, now) else {
            return;
        };
        if let Some(del) = self.radio.unicast(id, station, now) {
            self.at(
                del.at,
                Ev::DtsRx {
                    station,
                    from: id,
                    entries,
                },
            );
        }
    }

    fn on_dts_rx(
        &mut self,
        station: DeviceId,
        from: DeviceId,
        entries: Vec<crate::persistence::LogEntry>,
    ) {
        let now = self.now();
        let Some(st) = self.dev_mut(station).station.as_mut() else {
            return;
        };
        let (upto, fresh) = st.ingest(from, &entries);
        if let Some(del) = self.radio.unicast(station, from, now) {
            self.at(del.at, Ev::DtsAckRx { to: from, upto });
        }
        if fresh > 0 {
            self.after(0, Ev::Forward(station));
        }
    }

    fn on_forward(&mut self, station: DeviceId) {
        let is_engine = self.engine_station == Some(station);
        let batch_size = self.dts_cfg.batch_size;
        loop {
            let Some(st) = self.dev_mut(station).station.as_mut() else {
                return;
            };
            let Some((batch, entries)) = st.next_forward(batch_size) else {
                return;
            };
            if is_engine {
                self.engine.merge(entries);
                if let Some(st) = self.dev_mut(station).station.as_mut() {
                    st.on_engine_ack(batch);
                }
            } else {
                self.after(
                    BACKBONE_LATENCY_MS,
                    Ev::EngineRx {
                        station,
                        batch,
                        entries,
                    },
                );
            }
        }
    }

    // ---- Metrics ----

    fn on_sample(&mut self) {
        let now = self.now();
        let playing = self.playing();
        let stations: Vec<DeviceId> = self
            .devices
            .iter()
            .filter(|d| d.role == Role::Station)
            .map(|d| d.id)
            .collect();
        for i in 0..self.devices.len() {
            let id = self.devices[i].id;
            let covered = stations
                .iter()
                .any(|s| self.radio.reachable(id, *s) && self.radio.reachable(*s, id));
            let d = &mut self.devices[i];
            let neighbors = if d.online {
                d.table.bidirectional_count(now, None)
            } else {
                0
            };
            d.metrics.rows.push(MetricsRow {
                time: now,
                neighbors,
                counters: d.counters,
            });
            if playing && d.is_player() {
                if covered {
                    d.in_station_range += 1;
                } else {
                    d.out_of_station_range += 1;
                }
            }
        }
        self.after(self.scenario.sample_period_ms, Ev::Sample);
    }

    // ---- Crashes ----

    fn on_crash(&mut self, id: DeviceId, reboot: bool) {
        let now = self.now();
        if self.dev(id).failed {
            return;
        }
        self.crashes += 1;
        let d = self.dev(id);
        if !d.online {
            // Crashed again while rebooting: the window starts over.
            let old = self.dev_mut(id).reboot.take();
            if let Some(h) = old {
                self.sched.cancel(h);
            }
            self.schedule_reboot(id, reboot);
            self.note(|| format!("{}\t{}\tcrash_while_rebooting\treboot={reboot}", now.0, id));
            return;
        }
        let held: Vec<(PotatoId, u64, bool)> = d
            .potatoes
            .values()
            .map(|p| (p.id, p.remaining_ms(now), p.is_active()))
            .collect();
        for &(p, _, active) in &held {
            if active {
                self.oracle.deactivate(p, id, now);
            }
        }
        self.pending_recovery
            .insert(id, held.iter().map(|&(p, r, _)| (p, r)).collect());
        let handles: Vec<_> = {
            let d = self.dev_mut(id);
            d.online = false;
            d.epoch += 1;
            d.crashed_at = Some(now);
            d.gesturing = false;
            d.beaconing = false;
            d.potatoes.clear();
            d.acquired.clear();
            d.recognized.clear();
            d.table.clear();
            let mut hs: Vec<_> = std::mem::take(&mut d.fuses).into_values().collect();
            hs.extend(std::mem::take(&mut d.timers).into_values());
            hs
        };
        for h in handles {
            self.sched.cancel(h);
        }
        self.note(|| format!("{}\t{}\tcrash\treboot={reboot}", now.0, id));
        self.schedule_reboot(id, reboot);
    }

    fn schedule_reboot(&mut self, id: DeviceId, reboot: bool) {
        if reboot {
            let epoch = self.dev(id).epoch;
            let h = self.after(REBOOT_DELAY_MS, Ev::Reboot(id, epoch));
            self.dev_mut(id).reboot = Some(h);
        } else {
            self.dev_mut(id).failed = true;
        }
    }

    fn on_reboot(&mut self, id: DeviceId) {
        let now = self.now();
        let crashed_at = self
            .dev(id)
            .crashed_at
            .expect("offline devices have crashed");
        let rec = recover(&self.dev(id).storage, crashed_at);
        let action_cfg = *self.dev(id).endpoint.config();
        let dts_cfg = self.dts_cfg;
        let epoch = {
            let d = self.dev_mut(id);
            d.online = true;
            d.reboot = None;
            d.crashed_at = None;
            d.alive = rec.alive;
            d.endpoint =
                crate::action::ActionEndpoint::with_counter(id, action_cfg, rec.meta.next_action);
            d.dts = crate::dts::DtsBuffer::new(dts_cfg, rec.meta.dts_acked);
            d.not_before = now;
            d.epoch
        };
        self.log(id, GameEvent::Rebooted { crashed_at });
        let before = self.pending_recovery.remove(&id).unwrap_or_default();
        let mut restored = Vec::new();
        for (snap, transfer) in rec.potatoes {
            let potato = Potato::restore(snap, id, PotatoStatus::Active, now);
            let d = self.dev_mut(id);
            d.potatoes.insert(snap.id, potato);
            d.acquired.insert(snap.id, now);
            restored.push(PotatoRecovery {
                potato: snap.id,
                remaining_at_crash_ms: before
                    .iter()
                    .find(|(p, _)| *p == snap.id)
                    .map_or(snap.remaining_ms, |(_, r)| *r),
                remaining_after_reboot_ms: snap.remaining_ms,
            });
            match transfer {
                Some(a) => {
                    // The interrupted hand-over is treated as aborted.
                    if let Some(p) = self.dev_mut(id).potatoes.get_mut(&snap.id) {
                        p.suspend(now);
                    }
                    self.reactivate(
                        id,
                        snap.id,
                        Some(a),
                        FailReason::Crash,
                        self.oracle.was_applied(a),
                    );
                }
                None if self.dev(id).alive => {
                    self.oracle.activate(snap.id, id, now);
                    self.arm_fuse(id, snap.id);
                }
                None => self.remove_potato(id, snap.id),
            }
        }
        self.recoveries.push(RecoveryRecord {
            device: id,
            crashed_at,
            rebooted_at: now,
            potatoes: restored,
        });
        self.note(|| format!("{}\t{}\treboot\tcrashed_at_ms={}", now.0, id, crashed_at.0));
        self.dev_mut(id).persist(now);
        let echo = self.echo;
        let delay = echo.initial_delay(&mut self.dev_mut(id).beacon_rng);
        self.dev_mut(id).beaconing = true;
        self.after(delay, Ev::Beacon(id, epoch));
        self.after(GENERATION_PERIOD_MS, Ev::Generate(id, epoch));
        let period = self.scenario.players.decision_period_ms;
        self.after(
            period,
            Ev::Decide {
                dev: id,
                epoch,
                periodic: true,
            },
        );
        self.after(self.dts_cfg.tick_ms, Ev::DtsTick(id, epoch));
        if self.dev(id).holds_active() {
            self.schedule_reaction(id);
        }
    }

    // ---- End of game ----

    fn enter_post_game(&mut self) {
        let now = self.now();
        self.game_over_at = Some(now);
        self.phase = Phase::PostGame { since: now };
        let winner = self.oracle.state.winner();
        self.note(|| {
            let w = winner.map_or_else(|| "none".to_string(), |w| w.to_string());
            format!("{}\t-\tgame_over\twinner={w}", now.0)
        });
        let handles: Vec<_> = self
            .devices
            .iter_mut()
            .flat_map(|d| std::mem::take(&mut d.fuses).into_values())
            .collect();
        for h in handles {
            self.sched.cancel(h);
        }
        // Everyone walks to the nearest Station for the upload.
        let stations: Vec<Position> = self.scenario.stations.iter().map(|s| s.position).collect();
        let n = self.scenario.players.count;
        if !stations.is_empty() {
            for i in 0..n {
                let id = DeviceId(i as u16);
                let here = self.radio.position(id);
                let st = stations
                    .iter()
                    .copied()
                    .min_by(|a, b| here.distance(a).total_cmp(&here.distance(b)))
                    .expect("non-empty");
                let angle = std::f64::consts::TAU * i as f64 / n as f64;
                let spot = Position::new(st.x + 1.5 * angle.cos(), st.y + 1.5 * angle.sin());
                let (p, _) = self.radio.set_position(id, spot);
                if let Some(a) = self.devices[i].agent.as_mut() {
                    a.position = p;
                    a.waypoint = p;
                }
            }
        }
        for i in 0..self.devices.len() {
            let d = &mut self.devices[i];
            if d.online && !d.beaconing {
                d.beaconing = true;
                let (id, epoch) = (d.id, d.epoch);
                let delay = self.echo.initial_delay(&mut d.beacon_rng);
                self.after(delay, Ev::Beacon(id, epoch));
            }
        }
        self.after(self.dts_cfg.tick_ms, Ev::DrainCheck);
    }

    fn action_quiescent(&self) -> bool {
        self.inflight_actions == 0 && self.devices.iter().all(|d| d.timers.is_empty())
    }

    fn on_drain_check(&mut self) {
        let Phase::PostGame { since } = self.phase else {
            return;
        };
        let now = self.now();
        let rebooting = self.devices.iter().any(|d| !d.online && !d.failed);
        let uploaded = self.scenario.stations.is_empty()
            || self
                .devices
                .iter()
                .all(|d| !d.is_player() || !d.online || d.dts.acked() >= d.storage.watermark());
        let stations_idle = self
            .devices
            .iter()
            .all(|d| d.station.as_ref().is_none_or(|s| s.is_drained()));
        if self.action_quiescent() && !rebooting && uploaded && stations_idle {
            self.phase = Phase::Done;
            return;
        }
        if now.since(since) >= self.scenario.drain_cap_ms {
            self.drain_timed_out = true;
            self.phase = Phase::Done;
            return;
        }
        self.after(self.dts_cfg.tick_ms, Ev::DrainCheck);
    }

    /// Count live copies everywhere, reading offline devices from storage.
    fn check_quiescence(&mut self) {
        if !self.action_quiescent() {
            return;
        }
        let mut held: BTreeMap<PotatoId, Vec<DeviceId>> = BTreeMap::new();
        let mut suspended = Vec::new();
        for d in &self.devices {
            if d.online {
                for p in d.potatoes.values() {
                    held.entry(p.id).or_default().push(d.id);
                }
                suspended.extend(d.suspended().map(|p| (p, d.id)));
            } else if let Some(c) = d.crashed_at {
                for (snap, transfer) in recover(&d.storage, c).potatoes {
                    // A frozen copy whose hand-over was applied is a leftover,
                    // not a live potato, until reboot resumes it.
                    if transfer.is_some_and(|a| self.oracle.was_applied(a)) {
                        continue;
                    }
                    held.entry(snap.id).or_default().push(d.id);
                }
            }
        }
        let now = self.now();
        self.oracle.check_ownership(now, &held, &suspended);
    }

    fn finish(mut self) -> RunArtifacts {
        let now = self.now();
        if self.action_quiescent() {
            self.check_quiescence();
        }
        let n = self.scenario.players.count;
        let device_logs: Vec<EventLog> = self.devices[..n]
            .iter()
            .map(|d| d.storage.extract_log())
            .collect();
        // Devices that never came back, or runs without infrastructure, hand
        // their logs over directly.
        for (d, log) in self.devices[..n].iter().zip(&device_logs) {
            if self.scenario.stations.is_empty() || !d.online {
                self.engine.merge_log(log);
            }
        }
        let analysis = self.engine.analyze();
        let mut violations = std::mem::take(&mut self.oracle.violations);

        let expected: std::collections::BTreeSet<(DeviceId, u64)> = device_logs
            .iter()
            .flat_map(|l| l.entries.iter().map(move |e| (l.device, e.seq)))
            .collect();
        let engine_complete = &expected == self.engine.keys();
        if !engine_complete {
            let missing = expected.difference(self.engine.keys()).count();
            let extra = self.engine.keys().difference(&expected).count();
            violations.push(Violation {
                invariant: "engine_completeness",
                at: now,
                devices: Vec::new(),
                detail: format!(
                    "missing={missing} extra={extra} drain_timed_out={}",
                    self.drain_timed_out
                ),
            });
        }
        for r in analysis.violations() {
            violations.push(Violation {
                invariant: "engine_rule",
                at: now,
                devices: Vec::new(),
                detail: format!("{r:?}"),
            });
        }
        if analysis.duplicates_resolved() != self.oracle.duplicates.len() && engine_complete {
            violations.push(Violation {
                invariant: "duplicate_reported",
                at: now,
                devices: Vec::new(),
                detail: format!(
                    "duplicates={} resolved_reports={}",
                    self.oracle.duplicates.len(),
                    analysis.duplicates_resolved()
                ),
            });
        }
        let comparable = self.crashes == 0 && self.oracle.duplicates.is_empty() && engine_complete;
        let engine_converged = comparable.then(|| analysis.state == self.oracle.state);
        if engine_converged == Some(false) {
            violations.push(Violation {
                invariant: "engine_convergence",
                at: now,
                devices: Vec::new(),
                detail: "engine-derived game state differs from the oracle".into(),
            });
        }
        let totals = self.devices.iter().fold((0u64, 0u64), |(r, s), d| {
            (
                r + d.counters.potatoes_received,
                s + d.counters.potatoes_sent,
            )
        });
        // A holder that never came back cannot count its completed hand-over.
        let all_back = self.devices.iter().all(|d| d.online);
        if all_back
            && self.action_quiescent()
            && totals.0 - totals.1 != self.oracle.duplicates.len() as u64
        {
            violations.push(Violation {
                invariant: "metrics_balance",
                at: now,
                devices: Vec::new(),
                detail: format!(
                    "received={} sent={} duplicates={}",
                    totals.0,
                    totals.1,
                    self.oracle.duplicates.len()
                ),
            });
        }
        for d in &self.devices {
            if !d.metrics.is_monotone() {
                violations.push(Violation {
                    invariant: "monotone_counters",
                    at: now,
                    devices: vec![d.id],
                    detail: String::new(),
                });
            }
        }

        let state = &self.oracle.state;
        let duration_ms = match (state.ended_at, self.game_over_at) {
            (Some(e), _) => e.as_millis(),
            (None, Some(t)) => t.as_millis(),
            (None, None) => now.as_millis(),
        };
        let fates = |f: crate::game::PotatoFate| {
            state.potatoes.values().filter(|r| r.fate == f).count() as u64
        };
        let summary = RunSummary {
            seed: self.scenario.seed,
            players: n,
            stations: self.scenario.stations.len(),
            winner: state.winner(),
            duration_ms,
            ended_by_cap: self.ended_by_cap,
            finished_at_ms: now.as_millis(),
            drain_timed_out: self.drain_timed_out,
            passes: self.devices.iter().map(|d| d.counters.potatoes_sent).sum(),
            failed_actions: self.devices.iter().map(|d| d.counters.failed_actions).sum(),
            generated: state.potatoes.len() as u64,
            exploded: fates(crate::game::PotatoFate::Exploded),
            removed: fates(crate::game::PotatoFate::Removed),
            crashes: self.crashes,
            backbone_batches: self.backbone_batches,
            events_executed: self.sched.executed(),
        };
        let oracle = OracleReport {
            violations,
            duplicates: self.oracle.duplicates.clone(),
            quiescence_checks: self.oracle.quiescence_checks,
            engine_converged,
            engine_complete,
            max_fuse_error_ms: self.oracle.max_fuse_error_ms(),
        };
        let out_of_station_range = self.devices[..n]
            .iter()
            .map(|d| {
                let total = d.in_station_range + d.out_of_station_range;
                if total == 0 {
                    0.0
                } else {
                    d.out_of_station_range as f64 / total as f64
                }
            })
            .collect();
        RunArtifacts {
            summary,
            oracle,
            metrics: self.devices.iter().map(|d| d.metrics.clone()).collect(),
            device_logs,
            analysis,
            oracle_state: self.oracle.state.clone(),
            negotiation_ms: self.negotiation,
            transfers: self.oracle.transfers.clone(),
            fuse_checks: self.oracle.fuse_checks.clone(),
            recoveries: self.recoveries,
            out_of_station_range,
            trace: self.trace,
            beacons: self.beacons,
            engine: self.engine,
            scenario: self.scenario,
        }
    }
}

/// Run a scenario to completion with full recording.
pub fn run(scenario: &Scenario) -> RunArtifacts {
    Simulation::new(scenario.clone(), RunOptions::default()).run()
}

impl RunArtifacts {
    pub fn passed(&self) -> bool {
        self.oracle.passed()
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let o = &self.oracle;
        let mut out = String::new();
        let w = s
            .winner
            .map_or_else(|| "none".to_string(), |w| w.to_string());
        let lines = [
            format!("seed={}", s.seed),
            format!("players={}", s.players),
            format!("stations={}", s.stations),
            format!("winner={w}"),
            format!("duration_ms={}", s.duration_ms),
            format!("ended_by_cap={}", s.ended_by_cap),
            format!("finished_at_ms={}", s.finished_at_ms),
            format!("drain_timed_out={}", s.drain_timed_out),
            format!("passes={}", s.passes),
            format!("failed_actions={}", s.failed_actions),
            format!("generated={}", s.generated),
            format!("exploded={}", s.exploded),
            format!("removed={}", s.removed),
            format!("crashes={}", s.crashes),
            format!("backbone_batches={}", s.backbone_batches),
            format!("recoveries={}", self.recoveries.len()),
            format!("duplicates={}", o.duplicates.len()),
            format!("quiescence_checks={}", o.quiescence_checks),
            format!("max_fuse_error_ms={}", o.max_fuse_error_ms),
            format!(
                "engine_converged={}",
                o.engine_converged
                    .map_or("n/a".to_string(), |b| b.to_string())
            ),
            format!("engine_complete={}", o.engine_complete),
            format!("engine_events={}", self.engine.len()),
            format!("oracle_violations={}", o.violations.len()),
            format!("verdict={}", if o.passed() { "pass" } else { "fail" }),
        ];
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        for r in &self.recoveries {
            let ps: Vec<String> = r
                .potatoes
                .iter()
                .map(|p| {
                    format!(
                        "{}:{}->{}",
                        p.potato, p.remaining_at_crash_ms, p.remaining_after_reboot_ms
                    )
                })
                .collect();
            out.push_str(&format!(
                "recovery device={} crashed_at_ms={} rebooted_at_ms={} potatoes={}\n",
                r.device,
                r.crashed_at.0,
                r.rebooted_at.0,
                ps.join(",")
            ));
        }
        for m in &self.metrics {
            let c = m.last();
            out.push_str(&format!(
                "device={} role={} potatoes_received={} potatoes_sent={} potatoes_generated={} gestures_recognized={} failed_actions={} mean_neighbors={:.3}\n",
                m.device,
                m.role.name(),
                c.potatoes_received,
                c.potatoes_sent,
                c.potatoes_generated,
                c.gestures_recognized,
                c.failed_actions,
                m.mean_neighbors()
            ));
        }
        for v in &o.violations {
            out.push_str(&format!("violation {v}\n"));
        }
        out
    }

    /// Write every output file under `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.join("metrics"))?;
        std::fs::create_dir_all(dir.join("logs"))?;
        std::fs::write(dir.join("summary.txt"), self.summary_text())?;
        for m in &self.metrics {
            std::fs::write(
                dir.join("metrics").join(format!("device_{}.csv", m.device)),
                m.to_csv(),
            )?;
        }
        for l in &self.device_logs {
            std::fs::write(
                dir.join("logs").join(format!("device_{}.log", l.device)),
                l.to_dump(),
            )?;
        }
        std::fs::write(dir.join("engine.log"), self.engine.export())?;
        std::fs::write(dir.join("trace.log"), &self.trace)?;
        std::fs::write(dir.join("beacons.bin"), &self.beacons)?;
        Ok(())
    }
}
