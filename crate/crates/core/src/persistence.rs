//! Device storage: an append-only game event log plus a potato checkpoint,
//! both surviving crashes.
//!
//! Log dump format, one event per line:
//!
//! ```text
//! seq<TAB>time_ms<TAB>event_kind<TAB>key=value key=value ...
//! ```
//!
//! Lines starting with `#` are comments (dump headers and summary blocks).

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use crate::action::{ActionId, FailReason};
use crate::echo::Role;
use crate::error::LogFormatError;
use crate::game::{PotatoId, PotatoSnapshot, PotatoStatus};
use crate::gesture::GestureLabel;
use crate::kernel::SimTime;
use crate::DeviceId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GameEvent {
    GameStarted {
        role: Role,
    },
    Generated {
        potato: PotatoId,
        fuse_ms: u64,
    },
    Gesture {
        performed: GestureLabel,
        classified: GestureLabel,
    },
    PassInitiated {
        potato: PotatoId,
        action: ActionId,
        target: DeviceId,
        remaining_ms: u64,
    },
    PassCompleted {
        potato: PotatoId,
        action: ActionId,
        target: DeviceId,
    },
    PassFailed {
        potato: PotatoId,
        action: Option<ActionId>,
        reason: FailReason,
        remaining_ms: u64,
    },
    ConflictPossible {
        potato: PotatoId,
        action: ActionId,
        target: DeviceId,
    },
    Received {
        potato: PotatoId,
        action: ActionId,
        from: DeviceId,
        remaining_ms: u64,
        fuse_ms: u64,
        pass_count: u32,
    },
    Resumed {
        potato: PotatoId,
        remaining_ms: u64,
    },
    Exploded {
        potato: PotatoId,
    },
    Eliminated {
        potato: PotatoId,
    },
    PotatoRemoved {
        potato: PotatoId,
    },
    Rebooted {
        crashed_at: SimTime,
    },
    GameOver {
        winner: DeviceId,
    },
}

impl GameEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            GameEvent::GameStarted { .. } => "game_started",
            GameEvent::Generated { .. } => "generated",
            GameEvent::Gesture { .. } => "gesture",
            GameEvent::PassInitiated { .. } => "pass_initiated",
            GameEvent::PassCompleted { .. } => "pass_completed",
            GameEvent::PassFailed { .. } => "pass_failed",
            GameEvent::ConflictPossible { .. } => "conflict_possible",
            GameEvent::Received { .. } => "received",
            GameEvent::Resumed { .. } => "resumed",
            GameEvent::Exploded { .. } => "exploded",
            GameEvent::Eliminated { .. } => "eliminated",
            GameEvent::PotatoRemoved { .. } => "potato_removed",
            GameEvent::Rebooted { .. } => "rebooted",
            GameEvent::GameOver { .. } => "game_over",
        }
    }

    /// Only essential events are kept when storage runs full.
    pub fn is_essential(&self) -> bool {
        !matches!(self, GameEvent::Gesture { .. })
    }

    pub fn potato(&self) -> Option<PotatoId> {
        match self {
            GameEvent::Generated { potato, .. }
            | GameEvent::PassInitiated { potato, .. }
            | GameEvent::PassCompleted { potato, .. }
            | GameEvent::PassFailed { potato, .. }
            | GameEvent::ConflictPossible { potato, .. }
            | GameEvent::Received { potato, .. }
            | GameEvent::Resumed { potato, .. }
            | GameEvent::Exploded { potato }
            | GameEvent::Eliminated { potato }
            | GameEvent::PotatoRemoved { potato } => Some(*potato),
            _ => None,
        }
    }

    pub fn fields(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        match self {
            GameEvent::GameStarted { role } => write!(w, "role={}", role.name()),
            GameEvent::Generated { potato, fuse_ms } => write!(w, "potato={potato} fuse_ms={fuse_ms}"),
            GameEvent::Gesture { performed, classified } => {
                write!(w, "performed={performed} classified={classified}")
            }
            GameEvent::PassInitiated {
                potato,
                action,
                target,
                remaining_ms,
            } => write!(
                w,
                "potato={potato} action={action} target={target} remaining_ms={remaining_ms}"
            ),
            GameEvent::PassCompleted { potato, action, target } => {
                write!(w, "potato={potato} action={action} target={target}")
            }
            GameEvent::PassFailed {
                potato,
                action,
                reason,
                remaining_ms,
            } => {
                let a = action.map_or_else(|| "-".to_string(), |a| a.to_string());
                write!(
                    w,
                    "potato={potato} action={a} reason={} remaining_ms={remaining_ms}",
                    reason.name()
                )
            }
            GameEvent::ConflictPossible { potato, action, target } => {
                write!(w, "potato={potato} action={action} target={target}")
            }
            GameEvent::Received {
                potato,
                action,
                from,
                remaining_ms,
                fuse_ms,
                pass_count,
            } => write!(
                w,
                "potato={potato} action={action} from={from} remaining_ms={remaining_ms} fuse_ms={fuse_ms} pass_count={pass_count}"
            ),
            GameEvent::Resumed { potato, remaining_ms } => {
                write!(w, "potato={potato} remaining_ms={remaining_ms}")
            }
            GameEvent::Exploded { potato }
            | GameEvent::Eliminated { potato }
            | GameEvent::PotatoRemoved { potato } => write!(w, "potato={potato}"),
            GameEvent::Rebooted { crashed_at } => write!(w, "crashed_at_ms={}", crashed_at.0),
            GameEvent::GameOver { winner } => write!(w, "winner={winner}"),
        }
        .expect("writing to a String");
        s
    }

    pub fn parse(kind: &str, fields: &str) -> Result<GameEvent, String> {
        let kv: BTreeMap<&str, &str> = fields
            .split_whitespace()
            .map(|f| {
                f.split_once('=')
                    .ok_or_else(|| format!("malformed field `{f}`"))
            })
            .collect::<Result<_, _>>()?;
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| format!("missing field `{k}`"))
        };
        let potato = || get("potato")?.parse::<PotatoId>();
        let action = || get("action")?.parse::<ActionId>();
        let num = |k: &str| get(k)?.parse::<u64>().map_err(|e| format!("{k}: {e}"));
        let dev = |k: &str| {
            get(k)?
                .parse::<u16>()
                .map(DeviceId)
                .map_err(|e| format!("{k}: {e}"))
        };
        let ev = match kind {
            "game_started" => GameEvent::GameStarted {
                role: match get("role")? {
                    "player" => Role::Player,
                    "station" => Role::Station,
                    other => return Err(format!("unknown role `{other}`")),
                },
            },
            "generated" => GameEvent::Generated {
                potato: potato()?,
                fuse_ms: num("fuse_ms")?,
            },
            "gesture" => GameEvent::Gesture {
                performed: get("performed")?.parse()?,
                classified: get("classified")?.parse()?,
            },
            "pass_initiated" => GameEvent::PassInitiated {
                potato: potato()?,
                action: action()?,
                target: dev("target")?,
                remaining_ms: num("remaining_ms")?,
            },
            "pass_completed" => GameEvent::PassCompleted {
                potato: potato()?,
                action: action()?,
                target: dev("target")?,
            },
            "pass_failed" => GameEvent::PassFailed {
                potato: potato()?,
                action: match get("action")? {
                    "-" => None,
                    a => Some(a.parse()?),
                },
                reason: get("reason")?.parse()?,
                remaining_ms: num("remaining_ms")?,
            },
            "conflict_possible" => GameEvent::ConflictPossible {
                potato: potato()?,
                action: action()?,
                target: dev("target")?,
            },
            "received" => GameEvent::Received {
                potato: potato()?,
                action: action()?,
                from: dev("from")?,
                remaining_ms: num("remaining_ms")?,
                fuse_ms: num("fuse_ms")?,
                pass_count: num("pass_count")? as u32,
            },
            "resumed" => GameEvent::Resumed {
                potato: potato()?,
                remaining_ms: num("remaining_ms")?,
            },
            "exploded" => GameEvent::Exploded { potato: potato()? },
            "eliminated" => GameEvent::Eliminated { potato: potato()? },
            "potato_removed" => GameEvent::PotatoRemoved { potato: potato()? },
            "rebooted" => GameEvent::Rebooted {
                crashed_at: SimTime(num("crashed_at_ms")?),
            },
            "game_over" => GameEvent::GameOver {
                winner: dev("winner")?,
            },
            other => return Err(format!("unknown event kind `{other}`")),
        };
        Ok(ev)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub seq: u64,
    pub time: SimTime,
    pub event: GameEvent,
}

impl LogEntry {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.seq,
            self.time.0,
            self.event.kind(),
            self.event.fields()
        )
    }

    pub fn parse_line(line: &str, lineno: usize) -> Result<LogEntry, LogFormatError> {
        let err = |reason: String| LogFormatError::Parse {
            line: lineno,
            reason,
        };
        let mut cols = line.splitn(4, '\t');
        let seq = cols
            .next()
            .unwrap_or_default()
            .parse::<u64>()
            .map_err(|e| err(format!("seq: {e}")))?;
        let time = cols
            .next()
            .ok_or_else(|| err("missing time".into()))?
            .parse::<u64>()
            .map_err(|e| err(format!("time: {e}")))?;
        let kind = cols
            .next()
            .ok_or_else(|| err("missing event kind".into()))?;
        let fields = cols.next().unwrap_or("");
        let event = GameEvent::parse(kind, fields).map_err(err)?;
        Ok(LogEntry {
            seq,
            time: SimTime(time),
            event,
        })
    }
}

/// Everything durable a device has logged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    pub device: DeviceId,
    pub entries: Vec<LogEntry>,
    /// Highest seq guaranteed to survive a crash.
    pub watermark: u64,
    pub evicted: u64,
}

impl EventLog {
    pub fn to_dump(&self) -> String {
        let mut out = format!(
            "# device={} watermark={} evicted={}\n",
            self.device, self.watermark, self.evicted
        );
        for e in &self.entries {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<EventLog, LogFormatError> {
        let mut device = None;
        let mut watermark = 0;
        let mut evicted = 0;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    let Some((k, v)) = kv.split_once('=') else {
                        continue;
                    };
                    let parse = |v: &str| {
                        v.parse::<u64>().map_err(|e| LogFormatError::Parse {
                            line: n,
                            reason: format!("{k}: {e}"),
                        })
                    };
                    match k {
                        "device" => device = Some(DeviceId(parse(v)? as u16)),
                        "watermark" => watermark = parse(v)?,
                        "evicted" => evicted = parse(v)?,
                        _ => {}
                    }
                }
                continue;
            }
            entries.push(LogEntry::parse_line(line, n)?);
        }
        let device = device.ok_or(LogFormatError::Parse {
            line: 1,
            reason: "dump lacks `# device=` header".into(),
        })?;
        Ok(EventLog {
            device,
            entries,
            watermark,
            evicted,
        })
    }
}

/// A potato as stored in a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeldPotato {
    /// For an active potato, `remaining_ms` is as of `as_of`.
    pub snapshot: PotatoSnapshot,
    pub status: PotatoStatus,
    pub as_of: SimTime,
    /// Set while the potato is frozen for an outgoing hand-over.
    pub transfer: Option<ActionId>,
}

impl HeldPotato {
    pub fn remaining_at(&self, t: SimTime) -> u64 {
        match self.status {
            PotatoStatus::Active => self
                .snapshot
                .remaining_ms
                .saturating_sub(t.since(self.as_of)),
            _ => self.snapshot.remaining_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub alive: bool,
    pub held: Vec<HeldPotato>,
    pub taken_at: SimTime,
    /// Log seq the checkpoint reflects.
    pub upto_seq: u64,
}

/// Counters that must survive a reboot so ids are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DurableMeta {
    pub next_action: u32,
    pub next_potato: u32,
    pub dts_acked: u64,
}

impl Default for DurableMeta {
    fn default() -> Self {
        DurableMeta {
            next_action: 1,
            next_potato: 1,
            dts_acked: 0,
        }
    }
}

pub const DEFAULT_CAPACITY_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct Storage {
    device: DeviceId,
    entries: VecDeque<LogEntry>,
    next_seq: u64,
    watermark: u64,
    capacity_bytes: usize,
    used_bytes: usize,
    evicted: u64,
    checkpoint: Option<Checkpoint>,
    pub meta: DurableMeta,
}

fn entry_bytes(e: &LogEntry) -> usize {
    e.to_line().len() + 1
}

impl Storage {
    pub fn new(device: DeviceId, capacity_bytes: usize) -> Self {
        Storage {
            device,
            entries: VecDeque::new(),
            next_seq: 1,
            watermark: 0,
            capacity_bytes,
            used_bytes: 0,
            evicted: 0,
            checkpoint: None,
            meta: DurableMeta::default(),
        }
    }

    pub fn device(&self) -> DeviceId {
        self.device
    }

    pub fn watermark(&self) -> u64 {
        self.watermark
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    pub fn used_bytes(&self) -> usize {
        self.used_bytes
    }

    /// Write-through append: the entry is durable when this returns.
    pub fn append(&mut self, time: SimTime, event: GameEvent) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        let entry = LogEntry { seq, time, event };
        self.used_bytes += entry_bytes(&entry);
        self.entries.push_back(entry);
        self.watermark = seq;
        self.make_room();
        seq
    }

    fn make_room(&mut self) {
        while self.used_bytes > self.capacity_bytes {
            let Some(idx) = self.entries.iter().position(|e| !e.event.is_essential()) else {
                return;
            };
            let gone = self.entries.remove(idx).expect("index from position");
            self.used_bytes -= entry_bytes(&gone);
            self.evicted += 1;
        }
    }

    pub fn entries(&self) -> impl DoubleEndedIterator<Item = &LogEntry> {
        self.entries.iter()
    }

    /// Up to `max` durable entries with seq greater than `after`.
    pub fn entries_after(&self, after: u64, max: usize) -> Vec<LogEntry> {
        let start = self.entries.partition_point(|e| e.seq <= after);
        self.entries
            .iter()
            .skip(start)
            .filter(|e| e.seq <= self.watermark)
            .take(max)
            .cloned()
            .collect()
    }

    pub fn write_checkpoint(&mut self, checkpoint: Checkpoint) {
        self.checkpoint = Some(checkpoint);
    }

    pub fn checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoint.as_ref()
    }

    /// Post-mortem or post-game read of everything durable.
    pub fn extract_log(&self) -> EventLog {
        EventLog {
            device: self.device,
            entries: self
                .entries
                .iter()
                .filter(|e| e.seq <= self.watermark)
                .cloned()
                .collect(),
            watermark: self.watermark,
            evicted: self.evicted,
        }
    }
}

/// Potato state rebuilt after a crash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovery {
    pub alive: bool,
    /// Remaining fuse as of the crash instant; `transfer` marks potatoes that
    /// were frozen for a hand-over the crash interrupted.
    pub potatoes: Vec<(PotatoSnapshot, Option<ActionId>)>,
    pub meta: DurableMeta,
}

/// Rebuild held potatoes as of `crash_at`: start from the checkpoint and
/// replay any log entries written after it.
pub fn recover(storage: &Storage, crash_at: SimTime) -> Recovery {
    let (mut alive, mut held, upto) = match storage.checkpoint() {
        Some(cp) => (
            cp.alive,
            cp.held
                .iter()
                .map(|h| (h.snapshot.id, *h))
                .collect::<BTreeMap<_, _>>(),
            cp.upto_seq,
        ),
        None => (true, BTreeMap::new(), 0),
    };
    for e in storage
        .entries()
        .filter(|e| e.seq > upto && e.seq <= storage.watermark())
    {
        replay(&mut held, &mut alive, e);
    }
    Recovery {
        alive,
        potatoes: held
            .values()
            .map(|h| {
                let mut snap = h.snapshot;
                snap.remaining_ms = h.remaining_at(crash_at);
                (snap, h.transfer)
            })
            .collect(),
        meta: storage.meta,
    }
}

fn replay(held: &mut BTreeMap<PotatoId, HeldPotato>, alive: &mut bool, e: &LogEntry) {
    let active = |snapshot: PotatoSnapshot| HeldPotato {
        snapshot,
        status: PotatoStatus::Active,
        as_of: e.time,
        transfer: None,
    };
    match &e.event {
        GameEvent::Generated { potato, fuse_ms } => {
            held.insert(
                *potato,
                active(PotatoSnapshot {
                    id: *potato,
                    fuse_ms: *fuse_ms,
                    remaining_ms: *fuse_ms,
                    pass_count: 0,
                }),
            );
        }
        GameEvent::Received {
            potato,
            remaining_ms,
            fuse_ms,
            pass_count,
            ..
        } => {
            held.insert(
                *potato,
                active(PotatoSnapshot {
                    id: *potato,
                    fuse_ms: *fuse_ms,
                    remaining_ms: *remaining_ms,
                    pass_count: *pass_count,
                }),
            );
        }
        GameEvent::PassInitiated {
            potato,
            action,
            remaining_ms,
            ..
        } => {
            if let Some(h) = held.get_mut(potato) {
                h.snapshot.remaining_ms = *remaining_ms;
                h.status = PotatoStatus::Suspended;
                h.as_of = e.time;
                h.transfer = Some(*action);
            }
        }
        GameEvent::Resumed {
            potato,
            remaining_ms,
        } => {
            if let Some(h) = held.get_mut(potato) {
                h.snapshot.remaining_ms = *remaining_ms;
                h.status = PotatoStatus::Active;
                h.as_of = e.time;
                h.transfer = None;
            }
        }
        GameEvent::PassCompleted { potato, .. }
        | GameEvent::Exploded { potato }
        | GameEvent::PotatoRemoved { potato } => {
            held.remove(potato);
        }
        GameEvent::Eliminated { .. } => *alive = false,
        _ => {}
    }
}
