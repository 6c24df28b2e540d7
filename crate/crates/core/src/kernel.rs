//! Discrete-event scheduler, simulated clock and named random streams.
//!
//! Everything in a simulation run executes on one [`Scheduler`]. Events fire
//! in `(fire_at, seq)` order, where `seq` is the global insertion counter, so
//! two runs that schedule the same events in the same order execute them in
//! the same order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::KernelError;

/// Milliseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: u64) -> Self {
        SimTime(secs * 1000)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    /// Milliseconds elapsed since `earlier`, zero if `earlier` is later.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, ms: u64) -> SimTime {
        SimTime(self.0 + ms)
    }
}

impl Sub<u64> for SimTime {
    type Output = SimTime;
    fn sub(self, ms: u64) -> SimTime {
        SimTime(self.0.saturating_sub(ms))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Handle returned by [`Scheduler::schedule`]; used to cancel the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// Priority queue of timestamped events with a monotone clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<(SimTime, u64)>>,
    payloads: HashMap<u64, E>,
    executed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            payloads: HashMap::new(),
            executed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Total events executed since construction.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// Number of live (not cancelled, not yet fired) events.
    pub fn pending(&self) -> usize {
        self.payloads.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: E) -> Result<EventHandle, KernelError> {
        if fire_at < self.now {
            return Err(KernelError::PastTimestamp {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((fire_at, seq)));
        self.payloads.insert(seq, payload);
        Ok(EventHandle(seq))
    }

    /// Schedule `delay_ms` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay_ms: u64, payload: E) -> EventHandle {
        let at = self.now + delay_ms;
        self.schedule(at, payload)
            .expect("relative schedule is never in the past")
    }

    /// Cancel a pending event. Returns false if it already fired or was cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.payloads.remove(&handle.0).is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.payloads.contains_key(&handle.0)
    }

    /// Time of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(Reverse((t, seq))) = self.queue.peek().copied() {
            if self.payloads.contains_key(&seq) {
                return Some(t);
            }
            self.queue.pop();
        }
        None
    }

    /// Pop the next event with `fire_at <= end`, advancing the clock to it.
    pub fn pop_until(&mut self, end: SimTime) -> Option<(SimTime, E)> {
        loop {
            let Reverse((t, seq)) = *self.queue.peek()?;
            if t > end {
                return None;
            }
            self.queue.pop();
            if let Some(payload) = self.payloads.remove(&seq) {
                debug_assert!(t >= self.now);
                self.now = t;
                self.executed += 1;
                return Some((t, payload));
            }
        }
    }

    /// Move the clock forward without executing anything.
    pub fn advance_to(&mut self, end: SimTime) -> Result<(), KernelError> {
        if end < self.now {
            return Err(KernelError::PastTimestamp {
                fire_at: end,
                now: self.now,
            });
        }
        if let Some(t) = self.peek_time() {
            if t < end {
                return Err(KernelError::SkippedEvents { next: t, end });
            }
        }
        self.now = end;
        Ok(())
    }

    /// Execute every event with `fire_at <= end` and leave the clock at `end`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<u64, KernelError>
    where
        F: FnMut(&mut Scheduler<E>, SimTime, E),
    {
        if end < self.now {
            return Err(KernelError::PastTimestamp {
                fire_at: end,
                now: self.now,
            });
        }
        let mut count = 0;
        while let Some((t, ev)) = self.pop_until(end) {
            handler(self, t, ev);
            count += 1;
        }
        self.now = end;
        Ok(count)
    }
}

/// A deterministic random stream keyed by `(seed, label, index)`.
///
/// Streams with different keys are independent; adding a device only adds
/// new streams and never shifts the draws of existing ones.
#[derive(Clone)]
pub struct RngStream {
    label: &'static str,
    index: u64,
    rng: ChaCha8Rng,
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("label", &self.label)
            .field("index", &self.index)
            .finish()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl RngStream {
    pub fn new(seed: u64, label: &'static str, index: u64) -> Self {
        let mut state = seed
            ^ fnv1a(label.as_bytes()).rotate_left(17)
            ^ index.wrapping_mul(0xA24B_AED4_963E_E407);
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngStream {
            label,
            index,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    /// Next value in `[0, 1)`.
    pub fn draw_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Bernoulli trial with success probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.draw_uniform() < p
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        self.rng.random_range(lo..=hi)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_in_time_then_insertion_order() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(501), "late").unwrap();
        s.schedule(SimTime(100), "b1").unwrap();
        s.schedule(SimTime(500), "at500").unwrap();
        s.schedule(SimTime(100), "b2").unwrap();
        let mut order = Vec::new();
        s.run_until(SimTime(1000), |_, _, e| order.push(e)).unwrap();
        assert_eq!(order, vec!["b1", "b2", "at500", "late"]);
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut s = Scheduler::new();
        let h = s.schedule(SimTime(10), 1).unwrap();
        s.schedule(SimTime(20), 2).unwrap();
        assert!(s.cancel(h));
        assert!(!s.cancel(h));
        let mut seen = Vec::new();
        let n = s.run_until(SimTime(100), |_, _, e| seen.push(e)).unwrap();
        assert_eq!(seen, vec![2]);
        assert_eq!(n, 1);
    }

    #[test]
    fn past_timestamp_rejected() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.run_until(SimTime(50), |_, _, _| {}).unwrap();
        assert!(matches!(
            s.schedule(SimTime(49), ()),
            Err(KernelError::PastTimestamp { .. })
        ));
        assert!(s.schedule(SimTime(50), ()).is_ok());
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut s: Scheduler<()> = Scheduler::new();
        assert_eq!(s.run_until(SimTime(1000), |_, _, _| {}).unwrap(), 0);
        assert_eq!(s.now(), SimTime(1000));
    }

    #[test]
    fn run_until_boundary_is_inclusive() {
        let mut s = Scheduler::new();
        for t in [10, 200, 1000, 1001] {
            s.schedule(SimTime(t), t).unwrap();
        }
        assert_eq!(s.run_until(SimTime(1000), |_, _, _| {}).unwrap(), 3);
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn handler_can_schedule_followups() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(0), 0u32).unwrap();
        let mut fired = Vec::new();
        s.run_until(SimTime(2000), |sched, t, n| {
            fired.push(t.0);
            if n < 4 {
                sched.schedule_in(500, n + 1);
            }
        })
        .unwrap();
        assert_eq!(fired, vec![0, 500, 1000, 1500, 2000]);
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = RngStream::new(7, "radio", 3);
        let mut b = RngStream::new(7, "radio", 3);
        for _ in 0..100 {
            assert_eq!(a.draw_uniform().to_bits(), b.draw_uniform().to_bits());
        }
    }

    #[test]
    fn stream_values_are_pinned() {
        // Frozen from a reference run; guards against silent changes in derivation.
        let mut s = RngStream::new(42, "game", 0);
        let first: Vec<f64> = (0..3).map(|_| s.draw_uniform()).collect();
        assert_eq!(
            first,
            [0.45863993531628433, 0.5932322019502685, 0.823841183213147]
        );
    }

    #[test]
    fn labels_give_uncorrelated_streams() {
        let n = 100_000;
        let mut a = RngStream::new(99, "radio", 0);
        let mut b = RngStream::new(99, "mobility", 0);
        let xs: Vec<f64> = (0..n).map(|_| a.draw_uniform()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.draw_uniform()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        let corr = sxy / (sxx.sqrt() * syy.sqrt());
        assert!(corr.abs() < 0.05, "correlation {corr}");
    }

    #[test]
    fn uniform_mean_converges() {
        let mut s = RngStream::new(2024, "radio", 1);
        let n = 1_000_000;
        let mean = (0..n).map(|_| s.draw_uniform()).sum::<f64>() / n as f64;
        assert!((0.499..=0.501).contains(&mean), "mean {mean}");
    }
}
