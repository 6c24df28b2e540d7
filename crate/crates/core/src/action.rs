//! Action protocol: two-phase-commit hand-over of one potato between two
//! devices.
//!
//! The endpoint is a pure state machine. Callers feed it messages and timer
//! expiries and carry out the returned [`Effect`]s (send a frame, arm a
//! timer, instantiate or resume a potato).
//!
//! ```text
//! holder                       target
//!   |  Prepare(snapshot) -->     |  eligible? Ready : Abort
//!   |  <-- Ready                 |  (pending, pending-timeout armed)
//!   |  Commit -->                |  activate potato
//!   |  <-- CommitAck             |
//! ```
//!
//! The holder keeps a frozen copy until CommitAck. If every Commit retry
//! goes unanswered it resumes that copy (no loss) and flags a possible
//! duplicate for the Engine to resolve.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::game::{PotatoId, PotatoSnapshot};
use crate::kernel::SimTime;
use crate::DeviceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId {
    pub initiator: DeviceId,
    pub counter: u32,
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.initiator, self.counter)
    }
}

impl FromStr for ActionId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad action id `{s}`");
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        Ok(ActionId {
            initiator: DeviceId(a.parse().map_err(|_| bad())?),
            counter: b.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Prepare,
    Ready,
    Abort,
    Commit,
    CommitAck,
}

impl ActionKind {
    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Prepare => "Prepare",
            ActionKind::Ready => "Ready",
            ActionKind::Abort => "Abort",
            ActionKind::Commit => "Commit",
            ActionKind::CommitAck => "CommitAck",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionMessage {
    pub kind: ActionKind,
    pub action: ActionId,
    pub from: DeviceId,
    pub to: DeviceId,
    /// Present on Prepare only.
    pub snapshot: Option<PotatoSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionConfig {
    pub prepare_timeout_ms: u64,
    /// Spacing of Prepare and Commit retransmissions.
    pub retry_interval_ms: u64,
    pub commit_retries: u32,
    pub pending_timeout_ms: u64,
    /// Copies of each CommitAck the target transmits.
    pub ack_copies: u32,
}

impl Default for ActionConfig {
    fn default() -> Self {
        ActionConfig {
            prepare_timeout_ms: 800,
            retry_interval_ms: 400,
            commit_retries: 3,
            pending_timeout_ms: 3000,
            ack_copies: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferPhase {
    Idle,
    Preparing,
    Committing,
    Done,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FailReason {
    NoNeighbor,
    Refused,
    PrepareTimeout,
    CommitUnacked,
    Crash,
}

impl FailReason {
    pub fn name(self) -> &'static str {
        match self {
            FailReason::NoNeighbor => "no_neighbor",
            FailReason::Refused => "refused",
            FailReason::PrepareTimeout => "prepare_timeout",
            FailReason::CommitUnacked => "commit_unacked",
            FailReason::Crash => "crash",
        }
    }
}

impl FromStr for FailReason {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            FailReason::NoNeighbor,
            FailReason::Refused,
            FailReason::PrepareTimeout,
            FailReason::CommitUnacked,
            FailReason::Crash,
        ]
        .into_iter()
        .find(|r| r.name() == s)
        .ok_or_else(|| format!("unknown fail reason `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferState {
    pub action: ActionId,
    pub snapshot: PotatoSnapshot,
    pub target: DeviceId,
    pub phase: TransferPhase,
    pub retries_left: u32,
    pub started_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerSlot {
    Outgoing(ActionId),
    Pending(ActionId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send(ActionMessage),
    /// Arm (or re-arm) the timer in `slot`.
    Arm {
        slot: TimerSlot,
        after_ms: u64,
    },
    Disarm(TimerSlot),
    /// Target side: instantiate the transferred potato.
    Activate {
        action: ActionId,
        from: DeviceId,
        snapshot: PotatoSnapshot,
    },
    /// Holder side: hand-over confirmed, drop the frozen copy.
    Completed {
        action: ActionId,
        potato: PotatoId,
        target: DeviceId,
    },
    /// Holder side: hand-over failed, resume the frozen copy.
    Reactivate {
        action: ActionId,
        potato: PotatoId,
        reason: FailReason,
        conflict_possible: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Initiation {
    Started {
        action: ActionId,
        effects: Vec<Effect>,
    },
    /// No bidirectional player neighbor: nothing was sent.
    NoNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum InitiateError {
    #[error("a transfer is already in progress")]
    Busy,
}

#[derive(Debug, Clone, Copy)]
struct PendingReceive {
    from: DeviceId,
    snapshot: PotatoSnapshot,
}

/// One device's side of the Action protocol, both as holder and as target.
#[derive(Debug, Clone)]
pub struct ActionEndpoint {
    me: DeviceId,
    config: ActionConfig,
    next_counter: u32,
    outgoing: Option<TransferState>,
    pending: BTreeMap<ActionId, PendingReceive>,
    refused: BTreeSet<ActionId>,
    applied: BTreeSet<ActionId>,
    closed: BTreeSet<ActionId>,
}

impl ActionEndpoint {
    pub fn new(me: DeviceId, config: ActionConfig) -> Self {
        Self::with_counter(me, config, 1)
    }

    /// Endpoint whose next action id continues from a persisted counter.
    pub fn with_counter(me: DeviceId, config: ActionConfig, next_counter: u32) -> Self {
        ActionEndpoint {
            me,
            config,
            next_counter,
            outgoing: None,
            pending: BTreeMap::new(),
            refused: BTreeSet::new(),
            applied: BTreeSet::new(),
            closed: BTreeSet::new(),
        }
    }

    pub fn config(&self) -> &ActionConfig {
        &self.config
    }

    pub fn next_counter(&self) -> u32 {
        self.next_counter
    }

    pub fn outgoing(&self) -> Option<&TransferState> {
        self.outgoing.as_ref()
    }

    pub fn phase(&self) -> TransferPhase {
        self.outgoing.map_or(TransferPhase::Idle, |t| t.phase)
    }

    pub fn is_busy(&self) -> bool {
        self.outgoing.is_some()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn has_applied(&self, action: ActionId) -> bool {
        self.applied.contains(&action)
    }

    fn msg(
        &self,
        kind: ActionKind,
        action: ActionId,
        to: DeviceId,
        snapshot: Option<PotatoSnapshot>,
    ) -> Effect {
        Effect::Send(ActionMessage {
            kind,
            action,
            from: self.me,
            to,
            snapshot,
        })
    }

    /// Start handing `snapshot` (already frozen by the caller) to `target`.
    pub fn initiate(
        &mut self,
        snapshot: PotatoSnapshot,
        target: Option<DeviceId>,
        now: SimTime,
    ) -> Result<Initiation, InitiateError> {
        if self.outgoing.is_some() {
            return Err(InitiateError::Busy);
        }
        let Some(target) = target else {
            return Ok(Initiation::NoNeighbor);
        };
        let action = ActionId {
            initiator: self.me,
            counter: self.next_counter,
        };
        self.next_counter += 1;
        self.outgoing = Some(TransferState {
            action,
            snapshot,
            target,
            phase: TransferPhase::Preparing,
            retries_left: 0,
            started_at: now,
        });
        let first_wait = self
            .config
            .retry_interval_ms
            .min(self.config.prepare_timeout_ms);
        Ok(Initiation::Started {
            action,
            effects: vec![
                self.msg(ActionKind::Prepare, action, target, Some(snapshot)),
                Effect::Arm {
                    slot: TimerSlot::Outgoing(action),
                    after_ms: first_wait,
                },
            ],
        })
    }

    /// Process a delivered message. `eligible` says whether this device may
    /// accept a potato right now (alive, not eliminated, game running).
    pub fn handle(&mut self, msg: &ActionMessage, now: SimTime, eligible: bool) -> Vec<Effect> {
        match msg.kind {
            ActionKind::Prepare => self.on_prepare(msg, eligible),
            ActionKind::Commit => self.on_commit(msg),
            ActionKind::Ready => self.on_ready(msg, now),
            ActionKind::Abort => self.on_abort(msg),
            ActionKind::CommitAck => self.on_commit_ack(msg),
        }
    }

    fn on_prepare(&mut self, msg: &ActionMessage, eligible: bool) -> Vec<Effect> {
        let a = msg.action;
        if self.pending.contains_key(&a) || self.applied.contains(&a) {
            return vec![self.msg(ActionKind::Ready, a, msg.from, None)];
        }
        if self.refused.contains(&a) || self.closed.contains(&a) {
            return vec![self.msg(ActionKind::Abort, a, msg.from, None)];
        }
        let valid = msg.snapshot.filter(|s| s.remaining_ms > 0);
        match valid {
            Some(snapshot) if eligible && self.outgoing.is_none() => {
                self.pending.insert(
                    a,
                    PendingReceive {
                        from: msg.from,
                        snapshot,
                    },
                );
                vec![
                    self.msg(ActionKind::Ready, a, msg.from, None),
                    Effect::Arm {
                        slot: TimerSlot::Pending(a),
                        after_ms: self.config.pending_timeout_ms,
                    },
                ]
            }
            _ => {
                self.refused.insert(a);
                vec![self.msg(ActionKind::Abort, a, msg.from, None)]
            }
        }
    }

    fn acks(&self, action: ActionId, to: DeviceId) -> Vec<Effect> {
        (0..self.config.ack_copies.max(1))
            .map(|_| self.msg(ActionKind::CommitAck, action, to, None))
            .collect()
    }

    fn on_commit(&mut self, msg: &ActionMessage) -> Vec<Effect> {
        let a = msg.action;
        if let Some(p) = self.pending.remove(&a) {
            self.applied.insert(a);
            let mut out = vec![
                Effect::Disarm(TimerSlot::Pending(a)),
                Effect::Activate {
                    action: a,
                    from: p.from,
                    snapshot: p.snapshot,
                },
            ];
            out.extend(self.acks(a, p.from));
            out
        } else if self.applied.contains(&a) {
            self.acks(a, msg.from)
        } else {
            Vec::new()
        }
    }

    fn current(&self, action: ActionId, phase: TransferPhase) -> bool {
        self.outgoing
            .is_some_and(|t| t.action == action && t.phase == phase)
    }

    fn on_ready(&mut self, msg: &ActionMessage, _now: SimTime) -> Vec<Effect> {
        if !self.current(msg.action, TransferPhase::Preparing) {
            return Vec::new();
        }
        let t = self.outgoing.as_mut().expect("checked above");
        t.phase = TransferPhase::Committing;
        t.retries_left = self.config.commit_retries;
        let (action, target) = (t.action, t.target);
        vec![
            self.msg(ActionKind::Commit, action, target, None),
            Effect::Arm {
                slot: TimerSlot::Outgoing(action),
                after_ms: self.config.retry_interval_ms,
            },
        ]
    }

    fn on_abort(&mut self, msg: &ActionMessage) -> Vec<Effect> {
        if !self.current(msg.action, TransferPhase::Preparing) {
            return Vec::new();
        }
        let t = self.outgoing.take().expect("checked above");
        vec![
            Effect::Disarm(TimerSlot::Outgoing(t.action)),
            Effect::Reactivate {
                action: t.action,
                potato: t.snapshot.id,
                reason: FailReason::Refused,
                conflict_possible: false,
            },
        ]
    }

    fn on_commit_ack(&mut self, msg: &ActionMessage) -> Vec<Effect> {
        if !self.current(msg.action, TransferPhase::Committing) {
            return Vec::new();
        }
        let t = self.outgoing.take().expect("checked above");
        vec![
            Effect::Disarm(TimerSlot::Outgoing(t.action)),
            Effect::Completed {
                action: t.action,
                potato: t.snapshot.id,
                target: t.target,
            },
        ]
    }

    /// Give up an outgoing transfer that has not reached the commit phase.
    /// The target cannot have applied it. The caller disarms the timer.
    pub fn abandon_preparing(&mut self) -> Option<TransferState> {
        if self.phase() != TransferPhase::Preparing {
            return None;
        }
        let t = self.outgoing.take()?;
        self.closed.insert(t.action);
        Some(t)
    }

    /// Refuse every transfer this device has agreed to but not yet applied.
    /// Returns their ids so the caller can disarm the timers.
    pub fn drop_pending(&mut self) -> Vec<ActionId> {
        let ids: Vec<ActionId> = self.pending.keys().copied().collect();
        self.pending.clear();
        self.closed.extend(ids.iter().copied());
        ids
    }

    pub fn on_timer(&mut self, slot: TimerSlot, now: SimTime) -> Vec<Effect> {
        match slot {
            TimerSlot::Pending(a) => {
                if self.pending.remove(&a).is_some() {
                    self.closed.insert(a);
                }
                Vec::new()
            }
            TimerSlot::Outgoing(a) => {
                let Some(t) = self.outgoing.filter(|t| t.action == a) else {
                    return Vec::new();
                };
                match t.phase {
                    TransferPhase::Preparing => {
                        let deadline = t.started_at + self.config.prepare_timeout_ms;
                        if now >= deadline {
                            self.outgoing = None;
                            vec![Effect::Reactivate {
                                action: a,
                                potato: t.snapshot.id,
                                reason: FailReason::PrepareTimeout,
                                conflict_possible: false,
                            }]
                        } else {
                            let wait = self.config.retry_interval_ms.min(deadline.since(now));
                            vec![
                                self.msg(ActionKind::Prepare, a, t.target, Some(t.snapshot)),
                                Effect::Arm {
                                    slot: TimerSlot::Outgoing(a),
                                    after_ms: wait,
                                },
                            ]
                        }
                    }
                    TransferPhase::Committing if t.retries_left > 0 => {
                        if let Some(cur) = self.outgoing.as_mut() {
                            cur.retries_left -= 1;
                        }
                        vec![
                            self.msg(ActionKind::Commit, a, t.target, None),
                            Effect::Arm {
                                slot: TimerSlot::Outgoing(a),
                                after_ms: self.config.retry_interval_ms,
                            },
                        ]
                    }
                    TransferPhase::Committing => {
                        self.outgoing = None;
                        vec![Effect::Reactivate {
                            action: a,
                            potato: t.snapshot.id,
                            reason: FailReason::CommitUnacked,
                            conflict_possible: true,
                        }]
                    }
                    _ => Vec::new(),
                }
            }
        }
    }
}
