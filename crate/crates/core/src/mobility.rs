//! Player movement and play styles.
//!
//! Agents move in straight lines toward a waypoint; strategies pick the
//! waypoint once per decision period. The pass decision itself is a pure
//! function of what the device knows about its potatoes.

use std::fmt;
use std::str::FromStr;

use crate::kernel::{RngStream, SimTime};
use crate::radio::{Field, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyKind {
    /// Chases other players, and when holding a potato, the nearest confirmed neighbor.
    Aggressive,
    /// Keeps away from the crowd.
    Periphery,
    /// Neutral baseline: uniform waypoints, no regard for other players.
    RandomWaypoint,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Aggressive => "aggressive",
            StrategyKind::Periphery => "periphery",
            StrategyKind::RandomWaypoint => "random_waypoint",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aggressive" => Ok(StrategyKind::Aggressive),
            "periphery" => Ok(StrategyKind::Periphery),
            "random_waypoint" => Ok(StrategyKind::RandomWaypoint),
            _ => Err(format!("unknown strategy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Metres per second, > 0.
    pub speed: f64,
    pub decision_period_ms: u64,
    pub reaction_delay_ms: u64,
}

impl Strategy {
    pub fn new(kind: StrategyKind) -> Self {
        Strategy {
            kind,
            speed: 1.5,
            decision_period_ms: 500,
            reaction_delay_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Position,
    pub waypoint: Position,
    pub strategy: Strategy,
    pub alive: bool,
}

impl AgentState {
    pub fn new(position: Position, strategy: Strategy) -> Self {
        AgentState {
            position,
            waypoint: position,
            strategy,
            alive: true,
        }
    }
}

/// What an agent knows when it picks a waypoint.
#[derive(Debug, Clone, Copy)]
pub struct Surroundings<'a> {
    pub field: Field,
    /// Positions of the other players still in the game.
    pub others: &'a [Position],
    /// Whether the agent currently carries an active potato.
    pub holding: bool,
    /// Position of the nearest bidirectional player neighbor, if any.
    pub nearest_neighbor: Option<Position>,
}

fn nearest(from: Position, candidates: &[Position]) -> Option<Position> {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| from.distance(a).total_cmp(&from.distance(b)))
}

fn centroid(points: &[Position]) -> Option<Position> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    Some(Position::new(
        points.iter().map(|p| p.x).sum::<f64>() / n,
        points.iter().map(|p| p.y).sum::<f64>() / n,
    ))
}

/// Pick the next waypoint for `agent`.
pub fn choose_waypoint(
    agent: &AgentState,
    env: &Surroundings<'_>,
    rng: &mut RngStream,
) -> Position {
    let here = agent.position;
    let wp = match agent.strategy.kind {
        StrategyKind::Aggressive => {
            let chase = if env.holding {
                env.nearest_neighbor
            } else {
                None
            };
            chase.or_else(|| nearest(here, env.others)).unwrap_or(here)
        }
        StrategyKind::Periphery => match centroid(env.others) {
            // The farthest point of a rectangle from any interior point is a corner.
            Some(c) => env
                .field
                .corners()
                .into_iter()
                .fold(None::<Position>, |best, p| match best {
                    Some(b) if c.distance(&b) >= c.distance(&p) => Some(b),
                    _ => Some(p),
                })
                .expect("four corners"),
            None => here,
        },
        StrategyKind::RandomWaypoint => {
            if here.distance(&agent.waypoint) > 0.1 {
                agent.waypoint
            } else {
                Position::new(
                    rng.draw_uniform() * env.field.width,
                    rng.draw_uniform() * env.field.height,
                )
            }
        }
    };
    env.field.clamp(wp)
}

/// Advance toward the waypoint by at most `speed * dt`.
pub fn step_mobility(agent: &mut AgentState, field: Field, dt_ms: u64) -> Position {
    let max_step = agent.strategy.speed * dt_ms as f64 / 1000.0;
    let d = agent.position.distance(&agent.waypoint);
    let next = if d <= max_step {
        agent.waypoint
    } else {
        let f = max_step / d;
        Position::new(
            agent.position.x + (agent.waypoint.x - agent.position.x) * f,
            agent.position.y + (agent.waypoint.y - agent.position.y) * f,
        )
    };
    agent.position = field.clamp(next);
    agent.position
}

/// The device-local facts a pass decision depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldingView {
    /// Activation time of the active potato the player would pass next.
    pub acquired_at: Option<SimTime>,
    /// A gesture or transfer is already under way.
    pub busy: bool,
    /// Earliest retry time after a failed or unrecognized attempt.
    pub not_before: SimTime,
}

/// When the player should next perform a pass gesture, if at all. Neighbor
/// count is deliberately not consulted: a player without neighbors still
/// tries, and the attempt fails downstream.
pub fn decide_action(agent: &AgentState, view: &HoldingView, now: SimTime) -> Option<SimTime> {
    if !agent.alive || view.busy {
        return None;
    }
    let acquired = view.acquired_at?;
    let due = (acquired + agent.strategy.reaction_delay_ms).max(view.not_before);
    Some(due.max(now))
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use proptest::prelude::*;

    fn field() -> Field {
        Field::new(10.0, 15.0)
    }

    fn agent(kind: StrategyKind, at: Position) -> AgentState {
        AgentState::new(at, Strategy::new(kind))
    }

    #[test]
    fn one_second_moves_at_most_speed() {
        let mut a = agent(StrategyKind::Aggressive, Position::new(0.0, 0.0));
        a.waypoint = Position::new(10.0, 15.0);
        let p = step_mobility(&mut a, field(), 1000);
        assert!((p.distance(&Position::new(0.0, 0.0)) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn periphery_flees_to_boundary() {
        let a = agent(StrategyKind::Periphery, Position::new(4.0, 7.0));
        let center = field().center();
        let others = vec![center; 9];
        let env = Surroundings {
            field: field(),
            others: &others,
            holding: false,
            nearest_neighbor: None,
        };
        let wp = choose_waypoint(&a, &env, &mut RngStream::new(1, "mobility", 0));
        let on_edge = wp.x == 0.0 || wp.x == 10.0 || wp.y == 0.0 || wp.y == 15.0;
        assert!(on_edge, "{wp:?}");
    }

    #[test]
    fn aggressive_holder_heads_for_neighbor() {
        let a = agent(StrategyKind::Aggressive, Position::new(1.0, 1.0));
        let others = vec![Position::new(5.0, 5.0), Position::new(1.5, 1.0)];
        let env = Surroundings {
            field: field(),
            others: &others,
            holding: true,
            nearest_neighbor: Some(Position::new(5.0, 5.0)),
        };
        assert_eq!(
            choose_waypoint(&a, &env, &mut RngStream::new(1, "mobility", 0)),
            Position::new(5.0, 5.0)
        );
        let env = Surroundings {
            holding: false,
            ..env
        };
        assert_eq!(
            choose_waypoint(&a, &env, &mut RngStream::new(1, "mobility", 0)),
            Position::new(1.5, 1.0)
        );
    }

    #[test]
    fn intent_fires_after_reaction_delay() {
        let a = agent(StrategyKind::Aggressive, Position::new(0.0, 0.0));
        let view = HoldingView {
            acquired_at: Some(SimTime(10_000)),
            busy: false,
            not_before: SimTime::ZERO,
        };
        assert_eq!(
            decide_action(&a, &view, SimTime(10_000)),
            Some(SimTime(12_000))
        );
        let empty = HoldingView {
            acquired_at: None,
            ..view
        };
        assert_eq!(decide_action(&a, &empty, SimTime(10_000)), None);
        let busy = HoldingView { busy: true, ..view };
        assert_eq!(decide_action(&a, &busy, SimTime(10_000)), None);
    }

    #[test]
    fn random_waypoint_keeps_target_until_reached() {
        let mut a = agent(StrategyKind::RandomWaypoint, Position::new(0.0, 0.0));
        let env = Surroundings {
            field: field(),
            others: &[],
            holding: false,
            nearest_neighbor: None,
        };
        let mut rng = RngStream::new(3, "mobility", 0);
        a.waypoint = choose_waypoint(&a, &env, &mut rng);
        let first = a.waypoint;
        assert!(field().contains(first));
        assert_eq!(choose_waypoint(&a, &env, &mut rng), first);
    }

    proptest! {
        #[test]
        fn positions_stay_in_field(
            x in 0.0f64..10.0, y in 0.0f64..15.0,
            wx in -20.0f64..30.0, wy in -20.0f64..30.0,
            dt in 0u64..5000,
        ) {
            let mut a = agent(StrategyKind::RandomWaypoint, Position::new(x, y));
            a.waypoint = Position::new(wx, wy);
            let before = a.position;
            let p = step_mobility(&mut a, field(), dt);
            prop_assert!(field().contains(p));
            prop_assert!(before.distance(&p) <= 1.5 * dt as f64 / 1000.0 + 1e-9);
        }
    }
}
