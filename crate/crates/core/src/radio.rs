//! Broadcast radio with per-sender range scaling, independent loss and fixed
//! latency.
//!
//! A directed link `a -> b` exists iff `dist(a, b) <= base_range * tx_factor(a)`.
//! Different transmit factors therefore produce one-way links.

use crate::kernel::{RngStream, SimTime};
use crate::DeviceId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub width: f64,
    pub height: f64,
}

impl Field {
    pub fn new(width: f64, height: f64) -> Self {
        Field { width, height }
    }

    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn clamp(&self, p: Position) -> Position {
        Position {
            x: p.x.clamp(0.0, self.width),
            y: p.y.clamp(0.0, self.height),
        }
    }

    pub fn center(&self) -> Position {
        Position::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn corners(&self) -> [Position; 4] {
        [
            Position::new(0.0, 0.0),
            Position::new(self.width, 0.0),
            Position::new(0.0, self.height),
            Position::new(self.width, self.height),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    /// Nominal range in meters for a transmitter with factor 1.0.
    pub base_range: f64,
    /// Independent per-frame, per-receiver loss probability.
    pub p_loss: f64,
    pub latency_ms: u64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            base_range: 10.0,
            p_loss: 0.05,
            latency_ms: 5,
        }
    }
}

/// A frame that survived the loss draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub receiver: DeviceId,
    pub at: SimTime,
    /// Sender-receiver distance at transmission; receivers use it as a
    /// signal-strength proxy.
    pub distance: f64,
}

pub struct Radio {
    field: Field,
    link: LinkModel,
    positions: Vec<Position>,
    tx_factors: Vec<f64>,
    loss: Vec<RngStream>,
}

impl Radio {
    pub fn new(field: Field, link: LinkModel, seed: u64, tx_factors: Vec<f64>) -> Self {
        let n = tx_factors.len();
        Radio {
            field,
            link,
            positions: vec![field.center(); n],
            loss: (0..n as u64)
                .map(|i| RngStream::new(seed, "radio", i))
                .collect(),
            tx_factors,
        }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn link(&self) -> LinkModel {
        self.link
    }

    pub fn device_count(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, id: DeviceId) -> Position {
        self.positions[id.index()]
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn tx_factor(&self, id: DeviceId) -> f64 {
        self.tx_factors[id.index()]
    }

    /// Move a device. Out-of-field positions are clamped; the return flag
    /// reports whether clamping happened.
    pub fn set_position(&mut self, id: DeviceId, pos: Position) -> (Position, bool) {
        let clamped = self.field.clamp(pos);
        let was_clamped = clamped != pos;
        self.positions[id.index()] = clamped;
        (clamped, was_clamped)
    }

    pub fn distance(&self, a: DeviceId, b: DeviceId) -> f64 {
        self.position(a).distance(&self.position(b))
    }

    /// Directed reachability; a pure function of positions and factors.
    pub fn reachable(&self, from: DeviceId, to: DeviceId) -> bool {
        from != to && self.distance(from, to) <= self.link.base_range * self.tx_factor(from)
    }

    pub fn reachability_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.device_count() as u16;
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| self.reachable(DeviceId(a), DeviceId(b)))
                    .collect()
            })
            .collect()
    }

    /// Send to every device in range; each receiver gets an independent loss draw.
    pub fn broadcast(&mut self, sender: DeviceId, now: SimTime) -> Vec<Delivery> {
        let n = self.device_count() as u16;
        let mut out = Vec::new();
        for r in (0..n).map(DeviceId) {
            if !self.reachable(sender, r) {
                continue;
            }
            if self.loss[sender.index()].chance(self.link.p_loss) {
                continue;
            }
            out.push(Delivery {
                receiver: r,
                at: now + self.link.latency_ms,
                distance: self.distance(sender, r),
            });
        }
        out
    }

    pub fn unicast(
        &mut self,
        sender: DeviceId,
        receiver: DeviceId,
        now: SimTime,
    ) -> Option<Delivery> {
        if !self.reachable(sender, receiver) {
            return None;
        }
        if self.loss[sender.index()].chance(self.link.p_loss) {
            return None;
        }
        Some(Delivery {
            receiver,
            at: now + self.link.latency_ms,
            distance: self.distance(sender, receiver),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio(n: usize, p_loss: f64, factors: Option<Vec<f64>>) -> Radio {
        let link = LinkModel {
            base_range: 10.0,
            p_loss,
            latency_ms: 5,
        };
        Radio::new(
            Field::new(30.0, 30.0),
            link,
            1,
            factors.unwrap_or(vec![1.0; n]),
        )
    }

    #[test]
    fn lossless_in_range_delivers_both_ways() {
        let mut r = radio(2, 0.0, None);
        r.set_position(DeviceId(0), Position::new(5.0, 5.0));
        r.set_position(DeviceId(1), Position::new(6.0, 5.0));
        let d = r.broadcast(DeviceId(0), SimTime(100));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].receiver, DeviceId(1));
        assert_eq!(d[0].at, SimTime(105));
        assert_eq!(r.broadcast(DeviceId(1), SimTime(100)).len(), 1);
    }

    #[test]
    fn out_of_range_is_silent() {
        let mut r = radio(2, 0.0, None);
        r.set_position(DeviceId(0), Position::new(0.0, 0.0));
        r.set_position(DeviceId(1), Position::new(11.0, 0.0));
        assert!(r.broadcast(DeviceId(0), SimTime(0)).is_empty());
        assert!(r.broadcast(DeviceId(1), SimTime(0)).is_empty());
    }

    #[test]
    fn asymmetric_factors_give_one_way_link() {
        // 9m apart: 10*1.2 = 12 >= 9 delivers, 10*0.8 = 8 < 9 does not.
        let mut r = radio(2, 0.0, Some(vec![1.2, 0.8]));
        r.set_position(DeviceId(0), Position::new(0.0, 0.0));
        r.set_position(DeviceId(1), Position::new(9.0, 0.0));
        assert!(r.reachable(DeviceId(0), DeviceId(1)));
        assert!(!r.reachable(DeviceId(1), DeviceId(0)));
        assert!(r.unicast(DeviceId(0), DeviceId(1), SimTime(0)).is_some());
        assert!(r.unicast(DeviceId(1), DeviceId(0), SimTime(0)).is_none());
    }

    #[test]
    fn total_loss_never_delivers() {
        let mut r = radio(2, 1.0, None);
        r.set_position(DeviceId(1), Position::new(16.0, 15.0));
        for t in 0..1000 {
            assert!(r.unicast(DeviceId(0), DeviceId(1), SimTime(t)).is_none());
        }
    }

    #[test]
    fn loss_rate_matches_probability() {
        let mut r = radio(2, 0.3, None);
        r.set_position(DeviceId(1), Position::new(16.0, 15.0));
        let delivered = (0..10_000)
            .filter(|t| r.unicast(DeviceId(0), DeviceId(1), SimTime(*t)).is_some())
            .count();
        let rate = delivered as f64 / 10_000.0;
        assert!((rate - 0.70).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn moving_closer_creates_link() {
        let mut r = radio(2, 0.0, None);
        r.set_position(DeviceId(0), Position::new(0.0, 0.0));
        r.set_position(DeviceId(1), Position::new(20.0, 0.0));
        assert!(!r.reachable(DeviceId(0), DeviceId(1)));
        r.set_position(DeviceId(1), Position::new(5.0, 0.0));
        assert!(r.reachable(DeviceId(0), DeviceId(1)));
    }

    #[test]
    fn positions_clamp_to_field() {
        let mut r = Radio::new(Field::new(10.0, 15.0), LinkModel::default(), 0, vec![1.0]);
        let (p, clamped) = r.set_position(DeviceId(0), Position::new(-1.0, 5.0));
        assert_eq!(p, Position::new(0.0, 5.0));
        assert!(clamped);
        let (_, clamped) = r.set_position(DeviceId(0), Position::new(3.0, 5.0));
        assert!(!clamped);
    }

    #[test]
    fn reachability_is_deterministic_for_seeded_placement() {
        let build = || {
            let mut r = Radio::new(
                Field::new(10.0, 15.0),
                LinkModel::default(),
                7,
                vec![1.0; 14],
            );
            for i in 0..14u16 {
                let mut s = RngStream::new(7, "placement", u64::from(i));
                let p = Position::new(s.draw_uniform() * 10.0, s.draw_uniform() * 15.0);
                r.set_position(DeviceId(i), p);
            }
            r.reachability_matrix()
        };
        assert_eq!(build(), build());
    }
}
