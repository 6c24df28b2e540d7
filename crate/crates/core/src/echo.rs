//! Echo protocol: periodic beacons carrying the sender's heard-list, from
//! which every device derives its neighbor table and which links are
//! bidirectional.

use std::collections::BTreeMap;

use crate::error::WireError;
use crate::kernel::{RngStream, SimTime};
use crate::DeviceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Player,
    Station,
}

impl Role {
    pub fn as_byte(self) -> u8 {
        match self {
            Role::Player => 0,
            Role::Station => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Role, WireError> {
        match b {
            0 => Ok(Role::Player),
            1 => Ok(Role::Station),
            other => Err(WireError::UnknownRole(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Player => "player",
            Role::Station => "station",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EchoConfig {
    pub period_ms: u64,
    /// Each period is drawn from `period_ms ± jitter_ms`.
    pub jitter_ms: u64,
    pub staleness_ms: u64,
    pub heard_cap: usize,
}

impl Default for EchoConfig {
    fn default() -> Self {
        EchoConfig {
            period_ms: 500,
            jitter_ms: 25,
            staleness_ms: 1500,
            heard_cap: 32,
        }
    }
}

impl EchoConfig {
    /// Delay before the first beacon after power-up.
    pub fn initial_delay(&self, rng: &mut RngStream) -> u64 {
        rng.range_inclusive(0, 2 * self.jitter_ms)
    }

    pub fn next_delay(&self, rng: &mut RngStream) -> u64 {
        let lo = self.period_ms.saturating_sub(self.jitter_ms);
        rng.range_inclusive(lo, self.period_ms + self.jitter_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Beacon {
    pub sender: DeviceId,
    pub role: Role,
    pub heard: Vec<DeviceId>,
    pub sent_at: SimTime,
}

impl Beacon {
    /// Little-endian frame: sender u16, role u8, count u8, ids u16*, time u64.
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        if self.heard.len() > usize::from(u8::MAX) {
            return Err(WireError::TooManyIds(self.heard.len()));
        }
        let mut out = Vec::with_capacity(12 + 2 * self.heard.len());
        out.extend_from_slice(&self.sender.0.to_le_bytes());
        out.push(self.role.as_byte());
        out.push(self.heard.len() as u8);
        for id in &self.heard {
            out.extend_from_slice(&id.0.to_le_bytes());
        }
        out.extend_from_slice(&self.sent_at.0.to_le_bytes());
        Ok(out)
    }

    /// Decode one frame from the front of `buf`, returning it and the bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Beacon, usize), WireError> {
        let need = |n: usize| {
            if buf.len() < n {
                Err(WireError::Truncated {
                    needed: n,
                    available: buf.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4)?;
        let sender = DeviceId(u16::from_le_bytes([buf[0], buf[1]]));
        let role = Role::from_byte(buf[2])?;
        let count = usize::from(buf[3]);
        let total = 4 + 2 * count + 8;
        need(total)?;
        let heard = (0..count)
            .map(|i| DeviceId(u16::from_le_bytes([buf[4 + 2 * i], buf[5 + 2 * i]])))
            .collect();
        let ts_at = 4 + 2 * count;
        let mut ts = [0u8; 8];
        ts.copy_from_slice(&buf[ts_at..ts_at + 8]);
        Ok((
            Beacon {
                sender,
                role,
                heard,
                sent_at: SimTime(u64::from_le_bytes(ts)),
            },
            total,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    pub role: Role,
    pub last_heard: SimTime,
    /// Arrival time of the latest beacon from this neighbor that listed us.
    pub last_listed_me: Option<SimTime>,
    /// Distance observed at the last reception (signal-strength proxy).
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborTable {
    me: DeviceId,
    staleness_ms: u64,
    entries: BTreeMap<DeviceId, NeighborEntry>,
}

impl NeighborTable {
    pub fn new(me: DeviceId, staleness_ms: u64) -> Self {
        NeighborTable {
            me,
            staleness_ms,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> DeviceId {
        self.me
    }

    fn fresh(&self, t: SimTime, now: SimTime) -> bool {
        now.since(t) < self.staleness_ms
    }

    pub fn on_beacon(&mut self, beacon: &Beacon, arrived: SimTime, distance: f64) {
        if beacon.sender == self.me {
            return;
        }
        let lists_me = beacon.heard.contains(&self.me);
        let entry = self.entries.entry(beacon.sender).or_insert(NeighborEntry {
            role: beacon.role,
            last_heard: arrived,
            last_listed_me: None,
            distance,
        });
        entry.role = beacon.role;
        entry.last_heard = arrived;
        entry.distance = distance;
        if lists_me {
            entry.last_listed_me = Some(arrived);
        }
    }

    /// Drop entries not heard within the staleness window; returns their ids.
    pub fn expire_stale(&mut self, now: SimTime) -> Vec<DeviceId> {
        let window = self.staleness_ms;
        let stale: Vec<DeviceId> = self
            .entries
            .iter()
            .filter(|(_, e)| now.since(e.last_heard) >= window)
            .map(|(id, _)| *id)
            .collect();
        for id in &stale {
            self.entries.remove(id);
        }
        stale
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Live entries as of `now`.
    pub fn entries(&self, now: SimTime) -> impl Iterator<Item = (DeviceId, &NeighborEntry)> + '_ {
        self.entries
            .iter()
            .filter(move |(_, e)| self.fresh(e.last_heard, now))
            .map(|(id, e)| (*id, e))
    }

    pub fn contains(&self, id: DeviceId, now: SimTime) -> bool {
        self.entries
            .get(&id)
            .is_some_and(|e| self.fresh(e.last_heard, now))
    }

    pub fn is_bidirectional(&self, id: DeviceId, now: SimTime) -> bool {
        self.entries.get(&id).is_some_and(|e| {
            self.fresh(e.last_heard, now) && e.last_listed_me.is_some_and(|t| self.fresh(t, now))
        })
    }

    pub fn bidirectional(
        &self,
        now: SimTime,
    ) -> impl Iterator<Item = (DeviceId, &NeighborEntry)> + '_ {
        self.entries(now)
            .filter(move |(id, _)| self.is_bidirectional(*id, now))
    }

    pub fn bidirectional_count(&self, now: SimTime, role: Option<Role>) -> usize {
        self.bidirectional(now)
            .filter(|(_, e)| role.is_none_or(|r| e.role == r))
            .count()
    }

    /// Closest bidirectional neighbor with `role`; ties go to the lowest id.
    pub fn nearest_bidirectional(&self, now: SimTime, role: Role) -> Option<(DeviceId, f64)> {
        self.bidirectional(now)
            .filter(|(_, e)| e.role == role)
            .map(|(id, e)| (id, e.distance))
            .fold(None, |best: Option<(DeviceId, f64)>, cand| match best {
                Some(b) if b.1 <= cand.1 => Some(b),
                _ => Some(cand),
            })
    }

    /// Ids heard within the window, capped to the most recently heard `cap`,
    /// returned in id order.
    pub fn heard_list(&self, now: SimTime, cap: usize) -> Vec<DeviceId> {
        let mut live: Vec<(DeviceId, SimTime)> = self
            .entries(now)
            .map(|(id, e)| (id, e.last_heard))
            .collect();
        if live.len() > cap {
            live.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            live.truncate(cap);
        }
        let mut ids: Vec<DeviceId> = live.into_iter().map(|(id, _)| id).collect();
        ids.sort();
        ids
    }

    pub fn make_beacon(&self, role: Role, now: SimTime, cap: usize) -> Beacon {
        Beacon {
            sender: self.me,
            role,
            heard: self.heard_list(now, cap),
            sent_at: now,
        }
    }
}
