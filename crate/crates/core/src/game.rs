//! Potato lifecycle and game bookkeeping.
//!
//! A potato's fuse is tracked in milliseconds of *active* time. The
//! displayed counter is the remaining fuse rounded up to whole seconds, so
//! it decrements once per 1000ms of active time and the potato explodes
//! when it reaches zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::kernel::SimTime;
use crate::DeviceId;

/// Globally unique: the generating device plus its local counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PotatoId {
    pub origin: DeviceId,
    pub serial: u32,
}

impl fmt::Display for PotatoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.origin, self.serial)
    }
}

impl FromStr for PotatoId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('.')
            .ok_or_else(|| format!("bad potato id `{s}`"))?;
        Ok(PotatoId {
            origin: DeviceId(a.parse().map_err(|_| format!("bad potato id `{s}`"))?),
            serial: b.parse().map_err(|_| format!("bad potato id `{s}`"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotatoStatus {
    Active,
    Suspended,
    Exploded,
}

/// What travels in a Prepare: enough to re-instantiate the potato elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PotatoSnapshot {
    pub id: PotatoId,
    pub fuse_ms: u64,
    pub remaining_ms: u64,
    pub pass_count: u32,
}

impl PotatoSnapshot {
    pub fn remaining_secs(&self) -> u64 {
        self.remaining_ms.div_ceil(1000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Potato {
    pub id: PotatoId,
    pub fuse_ms: u64,
    pub holder: DeviceId,
    pub pass_count: u32,
    status: PotatoStatus,
    /// Remaining fuse as of `since` (or frozen value when not active).
    remaining_ms: u64,
    since: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickOutcome {
    Counting { remaining_secs: u64 },
    Exploded,
    Frozen { remaining_secs: u64 },
}

impl Potato {
    /// Fresh active potato with a full fuse.
    pub fn generate(id: PotatoId, holder: DeviceId, fuse_secs: u64, now: SimTime) -> Potato {
        Potato {
            id,
            fuse_ms: fuse_secs * 1000,
            holder,
            pass_count: 0,
            status: PotatoStatus::Active,
            remaining_ms: fuse_secs * 1000,
            since: now,
        }
    }

    /// Instantiate an active potato from a snapshot received from another holder.
    pub fn from_snapshot(snap: PotatoSnapshot, holder: DeviceId, now: SimTime) -> Potato {
        Potato {
            id: snap.id,
            fuse_ms: snap.fuse_ms,
            holder,
            pass_count: snap.pass_count,
            status: PotatoStatus::Active,
            remaining_ms: snap.remaining_ms,
            since: now,
        }
    }

    /// Restore a potato in a given status with its remaining fuse as of `now`.
    pub fn restore(
        snap: PotatoSnapshot,
        holder: DeviceId,
        status: PotatoStatus,
        now: SimTime,
    ) -> Potato {
        Potato {
            status,
            ..Potato::from_snapshot(snap, holder, now)
        }
    }

    pub fn status(&self) -> PotatoStatus {
        self.status
    }

    pub fn is_active(&self) -> bool {
        self.status == PotatoStatus::Active
    }

    pub fn remaining_ms(&self, now: SimTime) -> u64 {
        match self.status {
            PotatoStatus::Active => self.remaining_ms.saturating_sub(now.since(self.since)),
            PotatoStatus::Suspended => self.remaining_ms,
            PotatoStatus::Exploded => 0,
        }
    }

    pub fn remaining_secs(&self, now: SimTime) -> u64 {
        self.remaining_ms(now).div_ceil(1000)
    }

    /// When the fuse runs out if nothing changes.
    pub fn explodes_at(&self) -> Option<SimTime> {
        (self.status == PotatoStatus::Active).then(|| self.since + self.remaining_ms)
    }

    pub fn snapshot(&self, now: SimTime) -> PotatoSnapshot {
        PotatoSnapshot {
            id: self.id,
            fuse_ms: self.fuse_ms,
            remaining_ms: self.remaining_ms(now),
            pass_count: self.pass_count,
        }
    }

    /// Freeze the countdown.
    pub fn suspend(&mut self, now: SimTime) {
        if self.status == PotatoStatus::Active {
            self.remaining_ms = self.remaining_ms(now);
            self.since = now;
            self.status = PotatoStatus::Suspended;
        }
    }

    /// Resume the countdown from the frozen value.
    pub fn activate(&mut self, now: SimTime) {
        if self.status == PotatoStatus::Suspended {
            self.since = now;
            self.status = PotatoStatus::Active;
        }
    }

    /// Bring the countdown up to `now`. Suspended potatoes are unaffected.
    pub fn tick(&mut self, now: SimTime) -> TickOutcome {
        match self.status {
            PotatoStatus::Exploded => TickOutcome::Exploded,
            PotatoStatus::Suspended => TickOutcome::Frozen {
                remaining_secs: self.remaining_ms.div_ceil(1000),
            },
            PotatoStatus::Active => {
                let left = self.remaining_ms(now);
                self.remaining_ms = left;
                self.since = now;
                if left == 0 {
                    self.status = PotatoStatus::Exploded;
                    TickOutcome::Exploded
                } else {
                    TickOutcome::Counting {
                        remaining_secs: left.div_ceil(1000),
                    }
                }
            }
        }
    }
}

/// Per-second generation probability for a device with `neighbors`
/// bidirectional player neighbors.
pub fn generation_probability(p0: f64, neighbors: usize) -> f64 {
    p0 / (1.0 + neighbors as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PotatoFate {
    Live,
    Exploded,
    Removed,
}

impl PotatoFate {
    pub fn name(self) -> &'static str {
        match self {
            PotatoFate::Live => "live",
            PotatoFate::Exploded => "exploded",
            PotatoFate::Removed => "removed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PotatoRecord {
    pub generated_by: DeviceId,
    pub generated_at: SimTime,
    pub fuse_ms: u64,
    pub fate: PotatoFate,
    pub pass_count: u32,
    pub holder: DeviceId,
}

/// Global view of one game: who is alive, who went out when, and every
/// potato's fate.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GameState {
    pub players: BTreeSet<DeviceId>,
    pub alive: BTreeSet<DeviceId>,
    pub eliminated: Vec<(DeviceId, SimTime)>,
    pub potatoes: BTreeMap<PotatoId, PotatoRecord>,
    pub started_at: SimTime,
    pub ended_at: Option<SimTime>,
}

impl GameState {
    pub fn new(players: impl IntoIterator<Item = DeviceId>, started_at: SimTime) -> Self {
        let players: BTreeSet<DeviceId> = players.into_iter().collect();
        GameState {
            alive: players.clone(),
            players,
            started_at,
            ..Default::default()
        }
    }

    pub fn is_over(&self) -> bool {
        self.alive.len() == 1 && self.ended_at.is_some()
    }

    pub fn winner(&self) -> Option<DeviceId> {
        if self.is_over() {
            self.alive.iter().next().copied()
        } else {
            None
        }
    }

    pub fn record_generated(&mut self, id: PotatoId, holder: DeviceId, fuse_ms: u64, now: SimTime) {
        self.potatoes.insert(
            id,
            PotatoRecord {
                generated_by: holder,
                generated_at: now,
                fuse_ms,
                fate: PotatoFate::Live,
                pass_count: 0,
                holder,
            },
        );
    }

    pub fn record_pass(&mut self, id: PotatoId, to: DeviceId) {
        if let Some(r) = self.potatoes.get_mut(&id) {
            r.pass_count += 1;
            r.holder = to;
        }
    }

    pub fn record_holder(&mut self, id: PotatoId, holder: DeviceId) {
        if let Some(r) = self.potatoes.get_mut(&id) {
            r.holder = holder;
            r.fate = PotatoFate::Live;
        }
    }

    pub fn record_fate(&mut self, id: PotatoId, fate: PotatoFate) {
        if let Some(r) = self.potatoes.get_mut(&id) {
            r.fate = fate;
        }
    }

    /// Remove `player` from the alive set. Returns true if this ended the game.
    pub fn eliminate(&mut self, player: DeviceId, now: SimTime) -> bool {
        if self.ended_at.is_some() || !self.alive.remove(&player) {
            return false;
        }
        // Same-instant eliminations are ordered by device id, so observers
        // that see them in different orders agree.
        let at = self
            .eliminated
            .partition_point(|&(d, t)| (t, d) <= (now, player));
        self.eliminated.insert(at, (player, now));
        if self.alive.len() == 1 {
            self.ended_at = Some(now);
            return true;
        }
        false
    }
}
