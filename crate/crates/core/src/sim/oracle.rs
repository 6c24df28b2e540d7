//! Global observer with full knowledge of the simulation. Devices never see
//! it; it only records what happened and checks distributed invariants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::action::ActionId;
use crate::game::{GameState, PotatoFate, PotatoId};
use crate::kernel::SimTime;
use crate::DeviceId;

/// Allowed gap between a potato's total active time and its fuse.
pub const FUSE_TOLERANCE_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub at: SimTime,
    pub devices: Vec<DeviceId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let devs: Vec<String> = self.devices.iter().map(|d| d.to_string()).collect();
        write!(
            f,
            "{} at {} devices=[{}] {}",
            self.invariant,
            self.at,
            devs.join(","),
            self.detail
        )
    }
}

/// A hand-over whose holder gave up after the target had applied it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DuplicateRecord {
    pub potato: PotatoId,
    pub action: ActionId,
    pub holder: DeviceId,
    pub target: DeviceId,
    pub at: SimTime,
}

/// Remaining fuse on both sides of one applied hand-over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferRecord {
    pub action: ActionId,
    pub holder_remaining_ms: u64,
    pub target_remaining_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuseRecord {
    pub potato: PotatoId,
    pub active_ms: u64,
    pub fuse_ms: u64,
}

#[derive(Debug, Default)]
struct Track {
    fuse_ms: u64,
    active_ms: u64,
    since: BTreeMap<DeviceId, SimTime>,
    duplicated: bool,
    dups: u32,
    terms: u32,
}

#[derive(Debug, Default)]
pub struct Oracle {
    pub state: GameState,
    tracks: BTreeMap<PotatoId, Track>,
    /// Hand-overs the target has applied, with the target.
    applied: BTreeMap<ActionId, DeviceId>,
    suspended_at: BTreeMap<ActionId, u64>,
    pub duplicates: Vec<DuplicateRecord>,
    pub transfers: Vec<TransferRecord>,
    pub fuse_checks: Vec<FuseRecord>,
    pub violations: Vec<Violation>,
    pub quiescence_checks: u64,
}

impl Oracle {
    pub fn new(players: impl IntoIterator<Item = DeviceId>) -> Self {
        Oracle {
            state: GameState::new(players, SimTime::ZERO),
            ..Default::default()
        }
    }

    fn violation(
        &mut self,
        invariant: &'static str,
        at: SimTime,
        devices: Vec<DeviceId>,
        detail: String,
    ) {
        self.violations.push(Violation {
            invariant,
            at,
            devices,
            detail,
        });
    }

    pub fn was_applied(&self, action: ActionId) -> bool {
        self.applied.contains_key(&action)
    }

    pub fn activate(&mut self, potato: PotatoId, dev: DeviceId, now: SimTime) {
        if let Some(t) = self.tracks.get_mut(&potato) {
            t.since.insert(dev, now);
        }
    }

    pub fn deactivate(&mut self, potato: PotatoId, dev: DeviceId, now: SimTime) {
        if let Some(t) = self.tracks.get_mut(&potato) {
            if let Some(s) = t.since.remove(&dev) {
                t.active_ms += now.since(s);
            }
        }
    }

    pub fn generated(&mut self, potato: PotatoId, dev: DeviceId, fuse_ms: u64, now: SimTime) {
        self.state.record_generated(potato, dev, fuse_ms, now);
        self.tracks.insert(
            potato,
            Track {
                fuse_ms,
                ..Default::default()
            },
        );
        self.activate(potato, dev, now);
    }

    pub fn suspended(
        &mut self,
        potato: PotatoId,
        action: ActionId,
        dev: DeviceId,
        remaining_ms: u64,
        now: SimTime,
    ) {
        self.deactivate(potato, dev, now);
        self.suspended_at.insert(action, remaining_ms);
    }

    /// Target applied the Commit of `action`.
    pub fn applied(
        &mut self,
        potato: PotatoId,
        action: ActionId,
        target: DeviceId,
        remaining_ms: u64,
        now: SimTime,
    ) {
        self.applied.insert(action, target);
        match self.suspended_at.get(&action).copied() {
            Some(h) => {
                self.transfers.push(TransferRecord {
                    action,
                    holder_remaining_ms: h,
                    target_remaining_ms: remaining_ms,
                });
                if h != remaining_ms {
                    self.violation(
                        "countdown_preserved",
                        now,
                        vec![action.initiator, target],
                        format!("potato={potato} holder_remaining_ms={h} target_remaining_ms={remaining_ms}"),
                    );
                }
            }
            None => self.violation(
                "countdown_preserved",
                now,
                vec![target],
                format!("potato={potato} applied action {action} that was never initiated"),
            ),
        }
        self.state.record_holder(potato, target);
        self.activate(potato, target, now);
    }

    pub fn completed(&mut self, potato: PotatoId, target: DeviceId) {
        self.state.record_pass(potato, target);
    }

    /// Holder resumed its frozen copy after a failed hand-over.
    pub fn reactivated(
        &mut self,
        potato: PotatoId,
        action: Option<ActionId>,
        holder: DeviceId,
        now: SimTime,
    ) {
        if let Some(a) = action {
            if let Some(&target) = self.applied.get(&a) {
                self.duplicates.push(DuplicateRecord {
                    potato,
                    action: a,
                    holder,
                    target,
                    at: now,
                });
                if let Some(t) = self.tracks.get_mut(&potato) {
                    t.dups += 1;
                    t.duplicated = true;
                }
            }
        }
    }

    pub fn resumed(&mut self, potato: PotatoId, holder: DeviceId, now: SimTime) {
        self.state.record_holder(potato, holder);
        self.activate(potato, holder, now);
    }

    pub fn exploded(&mut self, potato: PotatoId, dev: DeviceId, now: SimTime) {
        self.deactivate(potato, dev, now);
        self.state.record_fate(potato, PotatoFate::Exploded);
        let Some(t) = self.tracks.get_mut(&potato) else {
            return;
        };
        t.terms += 1;
        if t.duplicated {
            return;
        }
        let rec = FuseRecord {
            potato,
            active_ms: t.active_ms,
            fuse_ms: t.fuse_ms,
        };
        self.fuse_checks.push(rec);
        if rec.active_ms.abs_diff(rec.fuse_ms) > FUSE_TOLERANCE_MS {
            self.violation(
                "fuse_conservation",
                now,
                vec![dev],
                format!(
                    "potato={potato} active_ms={} fuse_ms={}",
                    rec.active_ms, rec.fuse_ms
                ),
            );
        }
    }

    pub fn removed(&mut self, potato: PotatoId, dev: DeviceId, now: SimTime) {
        self.deactivate(potato, dev, now);
        self.state.record_fate(potato, PotatoFate::Removed);
        if let Some(t) = self.tracks.get_mut(&potato) {
            t.terms += 1;
        }
    }

    /// A copy arrived at a device already holding the potato; the two copies
    /// became one.
    pub fn merged(&mut self, potato: PotatoId) {
        if let Some(t) = self.tracks.get_mut(&potato) {
            t.terms += 1;
        }
    }

    /// Returns true when the elimination ends the game.
    pub fn eliminated(&mut self, dev: DeviceId, now: SimTime) -> bool {
        self.state.eliminate(dev, now)
    }

    /// Compare the copies devices actually hold against the bookkeeping:
    /// every potato has one live copy, plus one per duplicate, minus one per
    /// explosion or removal.
    pub fn check_ownership(
        &mut self,
        now: SimTime,
        held: &BTreeMap<PotatoId, Vec<DeviceId>>,
        suspended: &[(PotatoId, DeviceId)],
    ) {
        self.quiescence_checks += 1;
        for &(p, d) in suspended {
            self.violation(
                "no_suspension_at_quiescence",
                now,
                vec![d],
                format!("potato={p} is frozen with no transfer in progress"),
            );
        }
        let mut bad = Vec::new();
        for (p, t) in &self.tracks {
            let expected = 1 + i64::from(t.dups) - i64::from(t.terms);
            let holders = held.get(p).map_or(&[][..], |v| v.as_slice());
            if holders.len() as i64 != expected {
                bad.push((*p, holders.to_vec(), expected));
            }
        }
        let known: BTreeSet<&PotatoId> = self.tracks.keys().collect();
        for (p, holders) in held {
            if !known.contains(p) {
                bad.push((*p, holders.clone(), 0));
            }
        }
        for (p, holders, expected) in bad {
            self.violation(
                "ownership",
                now,
                holders.clone(),
                format!(
                    "potato={p} live_copies={} expected={expected}",
                    holders.len()
                ),
            );
        }
    }

    pub fn max_fuse_error_ms(&self) -> u64 {
        self.fuse_checks
            .iter()
            .map(|r| r.active_ms.abs_diff(r.fuse_ms))
            .max()
            .unwrap_or(0)
    }

    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid() -> PotatoId {
        PotatoId {
            origin: DeviceId(0),
            serial: 1,
        }
    }

    fn aid() -> ActionId {
        ActionId {
            initiator: DeviceId(0),
            counter: 1,
        }
    }

    #[test]
    fn clean_pass_keeps_one_copy() {
        let mut o = Oracle::new([DeviceId(0), DeviceId(1)]);
        o.generated(pid(), DeviceId(0), 30_000, SimTime(0));
        o.suspended(pid(), aid(), DeviceId(0), 20_000, SimTime(10_000));
        o.applied(pid(), aid(), DeviceId(1), 20_000, SimTime(10_010));
        o.completed(pid(), DeviceId(1));
        let held = BTreeMap::from([(pid(), vec![DeviceId(1)])]);
        o.check_ownership(SimTime(10_100), &held, &[]);
        assert!(o.violations.is_empty(), "{:?}", o.violations);
        o.exploded(pid(), DeviceId(1), SimTime(30_010));
        assert!(o.violations.is_empty(), "{:?}", o.violations);
        assert_eq!(o.max_fuse_error_ms(), 0);
    }

    #[test]
    fn lost_potato_is_caught() {
        let mut o = Oracle::new([DeviceId(0), DeviceId(1)]);
        o.generated(pid(), DeviceId(0), 30_000, SimTime(0));
        o.check_ownership(SimTime(1), &BTreeMap::new(), &[]);
        assert_eq!(o.violations[0].invariant, "ownership");
    }

    #[test]
    fn duplicate_allows_second_copy() {
        let mut o = Oracle::new([DeviceId(0), DeviceId(1)]);
        o.generated(pid(), DeviceId(0), 30_000, SimTime(0));
        o.suspended(pid(), aid(), DeviceId(0), 20_000, SimTime(10_000));
        o.applied(pid(), aid(), DeviceId(1), 20_000, SimTime(10_010));
        o.reactivated(pid(), Some(aid()), DeviceId(0), SimTime(11_610));
        o.resumed(pid(), DeviceId(0), SimTime(11_610));
        let held = BTreeMap::from([(pid(), vec![DeviceId(0), DeviceId(1)])]);
        o.check_ownership(SimTime(11_700), &held, &[]);
        assert!(o.violations.is_empty(), "{:?}", o.violations);
        assert_eq!(o.duplicates.len(), 1);
    }

    #[test]
    fn changed_countdown_is_caught() {
        let mut o = Oracle::new([DeviceId(0), DeviceId(1)]);
        o.generated(pid(), DeviceId(0), 30_000, SimTime(0));
        o.suspended(pid(), aid(), DeviceId(0), 20_000, SimTime(10_000));
        o.applied(pid(), aid(), DeviceId(1), 19_000, SimTime(10_010));
        assert_eq!(o.violations[0].invariant, "countdown_preserved");
    }
}
