//! Beacon-only world shared by the echo tests and the acceptance suite.

use std::rc::Rc;

use hotpotato::echo::{Beacon, EchoConfig, NeighborTable, Role};
use hotpotato::radio::{Field, LinkModel, Position, Radio};
use hotpotato::{DeviceId, RngStream, Scheduler, SimTime};

pub const LATENCY_MS: u64 = 5;

enum Ev {
    Send(DeviceId),
    Rx(DeviceId, Rc<Beacon>, f64),
}

/// Beacon-only world: every device beacons forever, nothing else happens.
pub struct World {
    cfg: EchoConfig,
    pub radio: Radio,
    pub tables: Vec<NeighborTable>,
    rngs: Vec<RngStream>,
    sched: Scheduler<Ev>,
}

impl World {
    pub fn new(positions: &[Position], factors: Vec<f64>, p_loss: f64, seed: u64) -> World {
        let field = Field::new(40.0, 40.0);
        let link = LinkModel {
            base_range: 10.0,
            p_loss,
            latency_ms: LATENCY_MS,
        };
        let cfg = EchoConfig::default();
        let mut factors = factors;
        factors.resize(positions.len(), 1.0);
        let mut radio = Radio::new(field, link, seed, factors);
        let mut sched = Scheduler::new();
        let mut tables = Vec::new();
        let mut rngs = Vec::new();
        for (i, p) in positions.iter().enumerate() {
            let id = DeviceId(i as u16);
            radio.set_position(id, *p);
            tables.push(NeighborTable::new(id, cfg.staleness_ms));
            let mut rng = RngStream::new(seed, "beacon", i as u64);
            sched.schedule_in(cfg.initial_delay(&mut rng), Ev::Send(id));
            rngs.push(rng);
        }
        World {
            cfg,
            radio,
            tables,
            rngs,
            sched,
        }
    }

    pub fn run_until(&mut self, end: SimTime) {
        while let Some((now, ev)) = self.sched.pop_until(end) {
            match ev {
                Ev::Send(id) => {
                    let t = &mut self.tables[id.index()];
                    t.expire_stale(now);
                    let b = Rc::new(t.make_beacon(Role::Player, now, self.cfg.heard_cap));
                    for d in self.radio.broadcast(id, now) {
                        self.sched
                            .schedule(d.at, Ev::Rx(d.receiver, Rc::clone(&b), d.distance))
                            .unwrap();
                    }
                    let next = self.cfg.next_delay(&mut self.rngs[id.index()]);
                    self.sched.schedule_in(next, Ev::Send(id));
                }
                Ev::Rx(to, b, dist) => self.tables[to.index()].on_beacon(&b, now, dist),
            }
        }
    }

    fn n(&self) -> u16 {
        self.tables.len() as u16
    }

    /// Tables disagreeing with the reachability predicate at `now`.
    pub fn mismatches(&self, now: SimTime) -> Vec<String> {
        let mut out = Vec::new();
        for a in (0..self.n()).map(DeviceId) {
            let t = &self.tables[a.index()];
            for b in (0..self.n()).map(DeviceId).filter(|b| *b != a) {
                let hears = self.radio.reachable(b, a);
                let bidir = hears && self.radio.reachable(a, b);
                if t.contains(b, now) != hears || t.is_bidirectional(b, now) != bidir {
                    out.push(format!(
                        "{a} about {b}: contains={} bidir={} expected {hears}/{bidir}",
                        t.contains(b, now),
                        t.is_bidirectional(b, now)
                    ));
                }
            }
        }
        out
    }
}
