//! Delay-tolerant upload from players to Stations, Station-to-Engine
//! forwarding, and the Engine's merged view of the game.
//!
//! Players keep every durable event until a Station acknowledges it. Stations
//! deduplicate by `(device, seq)` and forward in batches without waiting for
//! earlier batches to be acknowledged. The Engine merges batches into one
//! time-ordered log and derives the game state by folding over it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::action::ActionId;
use crate::echo::Role;
use crate::game::{GameState, PotatoFate, PotatoId};
use crate::kernel::SimTime;
use crate::persistence::{EventLog, GameEvent, LogEntry, Storage};
use crate::DeviceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DtsConfig {
    pub batch_size: usize,
    pub ack_timeout_ms: u64,
    pub tick_ms: u64,
}

impl Default for DtsConfig {
    fn default() -> Self {
        DtsConfig {
            batch_size: 16,
            ack_timeout_ms: 1000,
            tick_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtsMode {
    Connected,
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outstanding {
    pub station: DeviceId,
    pub first: u64,
    pub upto: u64,
    pub sent_at: SimTime,
}

/// Player-side upload state. Everything above `acked` is still owed to the
/// infrastructure; the events themselves stay in [`Storage`].
#[derive(Debug, Clone)]
pub struct DtsBuffer {
    config: DtsConfig,
    acked: u64,
    mode: DtsMode,
    outstanding: Option<Outstanding>,
    batches_sent: u64,
}

impl DtsBuffer {
    pub fn new(config: DtsConfig, acked: u64) -> Self {
        DtsBuffer {
            config,
            acked,
            mode: DtsMode::Disconnected,
            outstanding: None,
            batches_sent: 0,
        }
    }

    pub fn acked(&self) -> u64 {
        self.acked
    }

    pub fn mode(&self) -> DtsMode {
        self.mode
    }

    pub fn outstanding(&self) -> Option<Outstanding> {
        self.outstanding
    }

    pub fn batches_sent(&self) -> u64 {
        self.batches_sent
    }

    pub fn backlog(&self, storage: &Storage) -> u64 {
        storage.watermark().saturating_sub(self.acked)
    }

    /// Decide what to upload now. `station` is the nearest bidirectional
    /// Station, if any; its presence is what makes the buffer Connected.
    pub fn poll(
        &mut self,
        storage: &Storage,
        station: Option<DeviceId>,
        now: SimTime,
    ) -> Option<(DeviceId, Vec<LogEntry>)> {
        self.mode = if station.is_some() {
            DtsMode::Connected
        } else {
            DtsMode::Disconnected
        };
        if let Some(o) = self.outstanding {
            if now.since(o.sent_at) < self.config.ack_timeout_ms {
                return None;
            }
            self.outstanding = None;
        }
        let station = station?;
        let batch = storage.entries_after(self.acked, self.config.batch_size);
        let (first, last) = (batch.first()?.seq, batch.last()?.seq);
        self.outstanding = Some(Outstanding {
            station,
            first,
            upto: last,
            sent_at: now,
        });
        self.batches_sent += 1;
        Some((station, batch))
    }

    /// Station acknowledged everything up to `upto`. Returns whether the
    /// watermark moved.
    pub fn on_ack(&mut self, upto: u64) -> bool {
        if self.outstanding.is_some_and(|o| o.upto <= upto) {
            self.outstanding = None;
        }
        if upto > self.acked {
            self.acked = upto;
            true
        } else {
            false
        }
    }
}

/// Ingestion and forwarding state of one Station.
#[derive(Debug, Clone)]
pub struct StationState {
    pub id: DeviceId,
    queue: VecDeque<(DeviceId, LogEntry)>,
    seen: BTreeSet<(DeviceId, u64)>,
    inflight: BTreeMap<u64, usize>,
    next_batch: u64,
    ingested: u64,
    duplicates: u64,
}

impl StationState {
    pub fn new(id: DeviceId) -> Self {
        StationState {
            id,
            queue: VecDeque::new(),
            seen: BTreeSet::new(),
            inflight: BTreeMap::new(),
            next_batch: 0,
            ingested: 0,
            duplicates: 0,
        }
    }

    /// Accept an upload. Returns the seq to acknowledge and how many events were new.
    pub fn ingest(&mut self, from: DeviceId, entries: &[LogEntry]) -> (u64, usize) {
        let mut fresh = 0;
        for e in entries {
            if self.seen.insert((from, e.seq)) {
                self.queue.push_back((from, e.clone()));
                fresh += 1;
            } else {
                self.duplicates += 1;
            }
        }
        self.ingested += fresh as u64;
        (entries.iter().map(|e| e.seq).max().unwrap_or(0), fresh)
    }

    /// Take the next batch for the Engine. Earlier batches may still be unacknowledged.
    pub fn next_forward(&mut self, max: usize) -> Option<(u64, Vec<(DeviceId, LogEntry)>)> {
        if self.queue.is_empty() {
            return None;
        }
        let n = self.queue.len().min(max);
        let batch: Vec<_> = self.queue.drain(..n).collect();
        let id = self.next_batch;
        self.next_batch += 1;
        self.inflight.insert(id, batch.len());
        Some((id, batch))
    }

    pub fn on_engine_ack(&mut self, batch: u64) {
        self.inflight.remove(&batch);
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn inflight(&self) -> usize {
        self.inflight.len()
    }

    pub fn is_drained(&self) -> bool {
        self.queue.is_empty() && self.inflight.is_empty()
    }

    pub fn ingested(&self) -> u64 {
        self.ingested
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleReport {
    /// Two devices hold the potato active at once.
    DoubleActive {
        potato: PotatoId,
        devices: Vec<DeviceId>,
        at: SimTime,
    },
    /// A device received a potato nobody offered to it.
    UnmatchedReceive {
        potato: PotatoId,
        action: ActionId,
        device: DeviceId,
        at: SimTime,
    },
    /// An eliminated player kept playing.
    AfterElimination {
        device: DeviceId,
        kind: &'static str,
        at: SimTime,
    },
    FuseMismatch {
        potato: PotatoId,
        active_ms: u64,
        fuse_ms: u64,
    },
    /// A hand-over whose acknowledgement was lost left two live copies; the
    /// later activation is kept.
    DuplicateResolved {
        potato: PotatoId,
        action: ActionId,
        canonical: DeviceId,
        discarded: DeviceId,
        at: SimTime,
    },
    Malformed {
        device: DeviceId,
        line: usize,
        reason: String,
    },
}

impl RuleReport {
    pub fn is_violation(&self) -> bool {
        !matches!(self, RuleReport::DuplicateResolved { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            RuleReport::DoubleActive { .. } => "double_active",
            RuleReport::UnmatchedReceive { .. } => "unmatched_receive",
            RuleReport::AfterElimination { .. } => "after_elimination",
            RuleReport::FuseMismatch { .. } => "fuse_mismatch",
            RuleReport::DuplicateResolved { .. } => "duplicate_resolved",
            RuleReport::Malformed { .. } => "malformed",
        }
    }
}

/// Game-level events an eliminated player may not produce.
fn initiates_play(e: &GameEvent) -> bool {
    matches!(
        e,
        GameEvent::Generated { .. }
            | GameEvent::Gesture { .. }
            | GameEvent::PassInitiated { .. }
            | GameEvent::Received { .. }
            | GameEvent::Resumed { .. }
            | GameEvent::Exploded { .. }
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub state: GameState,
    pub reports: Vec<RuleReport>,
    pub passes: u64,
}

impl Analysis {
    pub fn violations(&self) -> impl Iterator<Item = &RuleReport> {
        self.reports.iter().filter(|r| r.is_violation())
    }

    pub fn duplicates_resolved(&self) -> usize {
        self.reports
            .iter()
            .filter(|r| matches!(r, RuleReport::DuplicateResolved { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
struct Copy {
    active_since: Option<SimTime>,
}

#[derive(Debug, Default)]
struct PotatoTrack {
    copies: BTreeMap<DeviceId, Copy>,
    active_ms: u64,
    fuse_ms: u64,
    duplicated: bool,
}

/// Merged global log at the Engine.
#[derive(Debug, Clone, Default)]
pub struct EngineView {
    merged: BTreeMap<(SimTime, DeviceId, u64), GameEvent>,
    seen: BTreeSet<(DeviceId, u64)>,
    quarantine: Vec<RuleReport>,
    batches: u64,
}

impl EngineView {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a batch; returns how many entries were new.
    pub fn merge(&mut self, batch: impl IntoIterator<Item = (DeviceId, LogEntry)>) -> usize {
        self.batches += 1;
        let mut fresh = 0;
        for (dev, e) in batch {
            if self.seen.insert((dev, e.seq)) {
                self.merged.insert((e.time, dev, e.seq), e.event);
                fresh += 1;
            }
        }
        fresh
    }

    pub fn merge_log(&mut self, log: &EventLog) -> usize {
        self.merge(log.entries.iter().map(|e| (log.device, e.clone())))
    }

    /// Merge a device log dump, quarantining lines that do not parse.
    pub fn merge_dump(&mut self, text: &str) -> Result<usize, crate::error::LogFormatError> {
        let mut device = None;
        let mut good = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(h) = line.strip_prefix('#') {
                if let Some(d) = h
                    .split_whitespace()
                    .find_map(|kv| kv.strip_prefix("device="))
                {
                    device = d.parse::<u16>().ok().map(DeviceId);
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let dev = device.ok_or(crate::error::LogFormatError::Parse {
                line: i + 1,
                reason: "event before `# device=` header".into(),
            })?;
            match LogEntry::parse_line(line, i + 1) {
                Ok(e) => good.push((dev, e)),
                Err(crate::error::LogFormatError::Parse { line, reason }) => {
                    self.quarantine.push(RuleReport::Malformed {
                        device: dev,
                        line,
                        reason,
                    })
                }
            }
        }
        Ok(self.merge(good))
    }

    pub fn len(&self) -> usize {
        self.merged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }

    pub fn batches(&self) -> u64 {
        self.batches
    }

    pub fn contains(&self, device: DeviceId, seq: u64) -> bool {
        self.seen.contains(&(device, seq))
    }

    /// `(device, seq)` keys of everything merged.
    pub fn keys(&self) -> &BTreeSet<(DeviceId, u64)> {
        &self.seen
    }

    pub fn events(&self) -> impl Iterator<Item = (SimTime, DeviceId, u64, &GameEvent)> {
        self.merged.iter().map(|((t, d, s), e)| (*t, *d, *s, e))
    }

    /// Fold the merged log into a game state and rule reports.
    pub fn analyze(&self) -> Analysis {
        let received: BTreeMap<ActionId, DeviceId> = self
            .merged
            .iter()
            .filter_map(|((_, d, _), e)| match e {
                GameEvent::Received { action, .. } => Some((*action, *d)),
                _ => None,
            })
            .collect();
        let offered: BTreeSet<(ActionId, DeviceId)> = self
            .merged
            .values()
            .filter_map(|e| match e {
                GameEvent::PassInitiated { action, target, .. } => Some((*action, *target)),
                _ => None,
            })
            .collect();

        let mut state = GameState::new(std::iter::empty(), SimTime::ZERO);
        let mut reports = self.quarantine.clone();
        let mut tracks: BTreeMap<PotatoId, PotatoTrack> = BTreeMap::new();
        let mut eliminated_at: BTreeMap<DeviceId, SimTime> = BTreeMap::new();
        let mut crash_started: BTreeMap<DeviceId, SimTime> = BTreeMap::new();
        let mut passes = 0;

        for (&(t, dev, _), ev) in &self.merged {
            if eliminated_at.contains_key(&dev) && initiates_play(ev) {
                reports.push(RuleReport::AfterElimination {
                    device: dev,
                    kind: ev.kind(),
                    at: t,
                });
            }
            match ev {
                GameEvent::GameStarted { role: Role::Player } => {
                    state.players.insert(dev);
                    state.alive.insert(dev);
                }
                GameEvent::GameStarted {
                    role: Role::Station,
                } => {}
                GameEvent::Generated { potato, fuse_ms } => {
                    state.record_generated(*potato, dev, *fuse_ms, t);
                    let tr = tracks.entry(*potato).or_default();
                    tr.fuse_ms = *fuse_ms;
                    tr.copies.insert(
                        dev,
                        Copy {
                            active_since: Some(t),
                        },
                    );
                }
                GameEvent::PassInitiated { potato, .. } => {
                    if let Some(tr) = tracks.get_mut(potato) {
                        suspend(tr, dev, t);
                    }
                }
                GameEvent::PassCompleted { potato, target, .. } => {
                    passes += 1;
                    state.record_pass(*potato, *target);
                    if let Some(tr) = tracks.get_mut(potato) {
                        tr.copies.remove(&dev);
                    }
                }
                GameEvent::PassFailed {
                    potato,
                    action: Some(action),
                    ..
                } => {
                    if let Some(&target) = received.get(action) {
                        let discarded = target;
                        reports.push(RuleReport::DuplicateResolved {
                            potato: *potato,
                            action: *action,
                            canonical: dev,
                            discarded,
                            at: t,
                        });
                        if let Some(tr) = tracks.get_mut(potato) {
                            tr.duplicated = true;
                        }
                    }
                }
                GameEvent::Received {
                    potato,
                    action,
                    fuse_ms,
                    ..
                } => {
                    if !offered.contains(&(*action, dev)) {
                        reports.push(RuleReport::UnmatchedReceive {
                            potato: *potato,
                            action: *action,
                            device: dev,
                            at: t,
                        });
                    }
                    state.record_holder(*potato, dev);
                    let tr = tracks.entry(*potato).or_default();
                    tr.fuse_ms = *fuse_ms;
                    activate(tr, dev, t, *potato, &mut reports);
                }
                GameEvent::Resumed { potato, .. } => {
                    if let Some(tr) = tracks.get_mut(potato) {
                        activate(tr, dev, t, *potato, &mut reports);
                    }
                    state.record_holder(*potato, dev);
                }
                GameEvent::Exploded { potato } => {
                    state.record_fate(*potato, PotatoFate::Exploded);
                    if let Some(tr) = tracks.get_mut(potato) {
                        suspend(tr, dev, t);
                        tr.copies.remove(&dev);
                        if !tr.duplicated && tr.active_ms.abs_diff(tr.fuse_ms) > 1000 {
                            reports.push(RuleReport::FuseMismatch {
                                potato: *potato,
                                active_ms: tr.active_ms,
                                fuse_ms: tr.fuse_ms,
                            });
                        }
                    }
                }
                GameEvent::Eliminated { .. } => {
                    eliminated_at.entry(dev).or_insert(t);
                    state.eliminate(dev, t);
                }
                GameEvent::PotatoRemoved { potato } => {
                    state.record_fate(*potato, PotatoFate::Removed);
                    if let Some(tr) = tracks.get_mut(potato) {
                        suspend(tr, dev, t);
                        tr.copies.remove(&dev);
                    }
                }
                GameEvent::Rebooted { crashed_at } => {
                    crash_started.insert(dev, *crashed_at);
                    // Time between crash and reboot is not active time.
                    for tr in tracks.values_mut() {
                        if let Some(c) = tr.copies.get_mut(&dev) {
                            if let Some(since) = c.active_since {
                                tr.active_ms += crashed_at.since(since);
                                c.active_since = Some(t);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        Analysis {
            state,
            reports,
            passes,
        }
    }

    /// Merged log in the device log line format, with the device first among
    /// the fields, followed by a summary block.
    pub fn export(&self) -> String {
        let a = self.analyze();
        let mut out = String::new();
        for ((t, dev, seq), ev) in &self.merged {
            let fields = ev.fields();
            out.push_str(&format!(
                "{seq}\t{}\t{}\tdevice={dev} {fields}\n",
                t.0,
                ev.kind()
            ));
        }
        out.push_str(&summary_block(&a));
        out
    }
}

fn suspend(tr: &mut PotatoTrack, dev: DeviceId, t: SimTime) {
    if let Some(c) = tr.copies.get_mut(&dev) {
        if let Some(since) = c.active_since.take() {
            tr.active_ms += t.since(since);
        }
    }
}

fn activate(
    tr: &mut PotatoTrack,
    dev: DeviceId,
    t: SimTime,
    potato: PotatoId,
    reports: &mut Vec<RuleReport>,
) {
    let others: Vec<DeviceId> = tr
        .copies
        .iter()
        .filter(|(d, c)| **d != dev && c.active_since.is_some())
        .map(|(d, _)| *d)
        .collect();
    if !others.is_empty() && !tr.duplicated {
        let mut devices = others;
        devices.push(dev);
        reports.push(RuleReport::DoubleActive {
            potato,
            devices,
            at: t,
        });
    }
    tr.copies.insert(
        dev,
        Copy {
            active_since: Some(t),
        },
    );
}

fn summary_block(a: &Analysis) -> String {
    let s = &a.state;
    let mut out = String::from("# summary\n");
    let winner = s
        .winner()
        .map_or_else(|| "none".to_string(), |w| w.to_string());
    out.push_str(&format!("# winner={winner}\n"));
    let duration = s.ended_at.map_or_else(
        || "unfinished".to_string(),
        |t| t.since(s.started_at).to_string(),
    );
    out.push_str(&format!("# duration_ms={duration}\n"));
    out.push_str(&format!(
        "# players={} passes={}\n",
        s.players.len(),
        a.passes
    ));
    for p in &s.players {
        let generated = s.potatoes.values().filter(|r| r.generated_by == *p).count();
        let out_at = s
            .eliminated
            .iter()
            .find(|(d, _)| d == p)
            .map_or_else(|| "-".to_string(), |(_, t)| t.0.to_string());
        out.push_str(&format!(
            "# player={p} generated={generated} eliminated_at_ms={out_at}\n"
        ));
    }
    for r in &a.reports {
        out.push_str(&format!("# report={} {}\n", r.name(), describe(r)));
    }
    out
}

fn describe(r: &RuleReport) -> String {
    match r {
        RuleReport::DoubleActive {
            potato,
            devices,
            at,
        } => {
            let ds: Vec<String> = devices.iter().map(|d| d.to_string()).collect();
            format!("potato={potato} devices={} at_ms={}", ds.join(","), at.0)
        }
        RuleReport::UnmatchedReceive {
            potato,
            action,
            device,
            at,
        } => format!(
            "potato={potato} action={action} device={device} at_ms={}",
            at.0
        ),
        RuleReport::AfterElimination { device, kind, at } => {
            format!("device={device} event={kind} at_ms={}", at.0)
        }
        RuleReport::FuseMismatch {
            potato,
            active_ms,
            fuse_ms,
        } => format!("potato={potato} active_ms={active_ms} fuse_ms={fuse_ms}"),
        RuleReport::DuplicateResolved {
            potato,
            action,
            canonical,
            discarded,
            at,
        } => format!(
            "potato={potato} action={action} canonical={canonical} discarded={discarded} at_ms={}",
            at.0
        ),
        RuleReport::Malformed {
            device,
            line,
            reason,
        } => {
            format!("device={device} line={line} reason={reason:?}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::FailReason;
    use crate::persistence::DEFAULT_CAPACITY_BYTES;

    fn pid(o: u16, n: u32) -> PotatoId {
        PotatoId {
            origin: DeviceId(o),
            serial: n,
        }
    }

    fn aid(i: u16, n: u32) -> ActionId {
        ActionId {
            initiator: DeviceId(i),
            counter: n,
        }
    }

    fn storage_with(n: u64) -> Storage {
        let mut s = Storage::new(DeviceId(1), DEFAULT_CAPACITY_BYTES);
        for i in 0..n {
            s.append(SimTime(i), GameEvent::GameStarted { role: Role::Player });
        }
        s
    }

    #[test]
    fn forty_events_drain_in_three_batches() {
        let s = storage_with(40);
        let mut b = DtsBuffer::new(DtsConfig::default(), 0);
        let mut station = StationState::new(DeviceId(9));
        let mut t = SimTime(0);
        let mut batches = 0;
        while b.acked() < 40 {
            let (_, batch) = b
                .poll(&s, Some(DeviceId(9)), t)
                .expect("connected with backlog");
            assert!(batch.len() <= 16);
            let (upto, _) = station.ingest(DeviceId(1), &batch);
            b.on_ack(upto);
            batches += 1;
            t = t + 500;
        }
        assert!(batches >= 3);
        assert_eq!(station.ingested(), 40);
    }

    #[test]
    fn disconnected_buffers_and_keeps_events() {
        let s = storage_with(5);
        let mut b = DtsBuffer::new(DtsConfig::default(), 0);
        assert!(b.poll(&s, None, SimTime(0)).is_none());
        assert_eq!(b.mode(), DtsMode::Disconnected);
        assert_eq!(b.backlog(&s), 5);
    }

    #[test]
    fn lost_ack_retransmits_after_timeout() {
        let s = storage_with(5);
        let mut b = DtsBuffer::new(DtsConfig::default(), 0);
        let first = b.poll(&s, Some(DeviceId(9)), SimTime(0)).unwrap();
        assert!(b.poll(&s, Some(DeviceId(9)), SimTime(999)).is_none());
        let again = b.poll(&s, Some(DeviceId(8)), SimTime(1000)).unwrap();
        assert_eq!(first.1, again.1);
        assert_eq!(again.0, DeviceId(8));
    }

    #[test]
    fn duplicate_batch_leaves_engine_unchanged() {
        let s = storage_with(5);
        let batch = s.entries_after(0, 16);
        let mut st = StationState::new(DeviceId(9));
        assert_eq!(st.ingest(DeviceId(1), &batch).1, 5);
        assert_eq!(st.ingest(DeviceId(1), &batch).1, 0);
        let mut engine = EngineView::new();
        let tagged: Vec<_> = batch.iter().map(|e| (DeviceId(1), e.clone())).collect();
        engine.merge(tagged.clone());
        let before = engine.export();
        assert_eq!(engine.merge(tagged), 0);
        assert_eq!(engine.export(), before);
    }

    #[test]
    fn station_forwards_while_earlier_batches_unacked() {
        let s = storage_with(40);
        let mut st = StationState::new(DeviceId(9));
        st.ingest(DeviceId(1), &s.entries_after(0, 16));
        let (b0, _) = st.next_forward(16).unwrap();
        st.ingest(DeviceId(1), &s.entries_after(16, 16));
        let (b1, _) = st.next_forward(16).unwrap();
        assert_eq!(st.inflight(), 2);
        st.on_engine_ack(b1);
        st.on_engine_ack(b0);
        assert!(st.is_drained());
        assert!(st.next_forward(16).is_none());
    }

    fn entry(seq: u64, t: u64, event: GameEvent) -> LogEntry {
        LogEntry {
            seq,
            time: SimTime(t),
            event,
        }
    }

    #[test]
    fn fabricated_receive_is_reported() {
        let mut e = EngineView::new();
        e.merge(vec![
            (
                DeviceId(0),
                entry(1, 0, GameEvent::GameStarted { role: Role::Player }),
            ),
            (
                DeviceId(1),
                entry(1, 0, GameEvent::GameStarted { role: Role::Player }),
            ),
            (
                DeviceId(0),
                entry(
                    2,
                    100,
                    GameEvent::Generated {
                        potato: pid(0, 1),
                        fuse_ms: 30_000,
                    },
                ),
            ),
            (
                DeviceId(1),
                entry(
                    2,
                    200,
                    GameEvent::Received {
                        potato: pid(0, 1),
                        action: aid(0, 1),
                        from: DeviceId(0),
                        remaining_ms: 29_900,
                        fuse_ms: 30_000,
                        pass_count: 1,
                    },
                ),
            ),
        ]);
        let a = e.analyze();
        let names: Vec<&str> = a.violations().map(|r| r.name()).collect();
        assert!(names.contains(&"unmatched_receive"));
        assert!(names.contains(&"double_active"));
    }

    #[test]
    fn lost_ack_window_yields_one_resolution() {
        let p = pid(0, 1);
        let a = aid(0, 1);
        let mut e = EngineView::new();
        e.merge(vec![
            (
                DeviceId(0),
                entry(1, 0, GameEvent::GameStarted { role: Role::Player }),
            ),
            (
                DeviceId(1),
                entry(1, 0, GameEvent::GameStarted { role: Role::Player }),
            ),
            (
                DeviceId(0),
                entry(
                    2,
                    100,
                    GameEvent::Generated {
                        potato: p,
                        fuse_ms: 30_000,
                    },
                ),
            ),
            (
                DeviceId(0),
                entry(
                    3,
                    2100,
                    GameEvent::PassInitiated {
                        potato: p,
                        action: a,
                        target: DeviceId(1),
                        remaining_ms: 28_000,
                    },
                ),
            ),
            (
                DeviceId(1),
                entry(
                    2,
                    2110,
                    GameEvent::Received {
                        potato: p,
                        action: a,
                        from: DeviceId(0),
                        remaining_ms: 28_000,
                        fuse_ms: 30_000,
                        pass_count: 1,
                    },
                ),
            ),
            (
                DeviceId(0),
                entry(
                    4,
                    3700,
                    GameEvent::PassFailed {
                        potato: p,
                        action: Some(a),
                        reason: FailReason::CommitUnacked,
                        remaining_ms: 28_000,
                    },
                ),
            ),
            (
                DeviceId(0),
                entry(
                    5,
                    3700,
                    GameEvent::Resumed {
                        potato: p,
                        remaining_ms: 28_000,
                    },
                ),
            ),
        ]);
        let an = e.analyze();
        assert_eq!(an.duplicates_resolved(), 1);
        assert_eq!(an.violations().count(), 0, "{:?}", an.reports);
    }

    #[test]
    fn fuse_conservation_across_a_pass() {
        let p = pid(0, 1);
        let a = aid(0, 1);
        let mut e = EngineView::new();
        let ev = vec![
            (
                DeviceId(0),
                entry(1, 0, GameEvent::GameStarted { role: Role::Player }),
            ),
            (
                DeviceId(1),
                entry(1, 0, GameEvent::GameStarted { role: Role::Player }),
            ),
            (
                DeviceId(2),
                entry(1, 0, GameEvent::GameStarted { role: Role::Player }),
            ),
            (
                DeviceId(0),
                entry(
                    2,
                    1000,
                    GameEvent::Generated {
                        potato: p,
                        fuse_ms: 30_000,
                    },
                ),
            ),
            (
                DeviceId(0),
                entry(
                    3,
                    11_000,
                    GameEvent::PassInitiated {
                        potato: p,
                        action: a,
                        target: DeviceId(1),
                        remaining_ms: 20_000,
                    },
                ),
            ),
            (
                DeviceId(1),
                entry(
                    2,
                    13_300,
                    GameEvent::Received {
                        potato: p,
                        action: a,
                        from: DeviceId(0),
                        remaining_ms: 20_000,
                        fuse_ms: 30_000,
                        pass_count: 1,
                    },
                ),
            ),
            (
                DeviceId(0),
                entry(
                    4,
                    13_310,
                    GameEvent::PassCompleted {
                        potato: p,
                        action: a,
                        target: DeviceId(1),
                    },
                ),
            ),
            (
                DeviceId(1),
                entry(3, 33_300, GameEvent::Exploded { potato: p }),
            ),
            (
                DeviceId(1),
                entry(4, 33_300, GameEvent::Eliminated { potato: p }),
            ),
        ];
        e.merge(ev);
        let an = e.analyze();
        assert_eq!(an.violations().count(), 0, "{:?}", an.reports);
        assert_eq!(an.state.alive.len(), 2);
        assert_eq!(an.state.potatoes[&p].pass_count, 1);
        assert_eq!(an.state.potatoes[&p].fate, PotatoFate::Exploded);
    }

    #[test]
    fn malformed_dump_lines_are_quarantined() {
        let mut e = EngineView::new();
        let dump = "# device=3\n1\t0\tgame_started\trole=player\n2\t5\tbogus\t\n";
        assert_eq!(e.merge_dump(dump).unwrap(), 1);
        let a = e.analyze();
        assert_eq!(
            a.violations().map(|r| r.name()).collect::<Vec<_>>(),
            vec!["malformed"]
        );
    }
}
