//! Scenario configuration: what to simulate and with which parameters.
//!
//! Files are TOML. Every key is optional; missing keys take the value of the
//! chosen preset (`preset = "..."`, default `indoor-room`). Unknown keys are
//! rejected with the line and column of the offending key.
//!
//! ```toml
//! preset = "indoor-room"
//! seed = 42
//! duration_cap_ms = 600000
//! sample_period_ms = 1000
//! drain_cap_ms = 120000
//!
//! [field]
//! width = 10.0
//! height = 15.0
//!
//! [players]
//! count = 10
//! periphery = 0          # last `periphery` players use the periphery strategy
//! random_waypoint = 0    # the ones before them wander randomly
//! speed = 1.5
//! decision_period_ms = 500
//! reaction_delay_ms = 2000
//! gesture_noise = 2.0
//!
//! [radio]
//! range = 10.0
//! p_loss = 0.05
//! latency_ms = 5
//! tx_factors = [1.0, 0.6]   # per device id; missing entries are 1.0
//!
//! [game]
//! p0 = 0.12
//! fuse_s = 30
//!
//! [[stations]]
//! x = 5.0
//! y = 7.5
//! engine = true
//!
//! [[crashes]]
//! device = 3
//! at_ms = 60000
//! reboot = true
//! ```
//!
//! Device ids: players are `0..count`, stations follow in file order.

use std::path::Path;

use serde::Deserialize;

use crate::error::ScenarioError;
use crate::mobility::{Strategy, StrategyKind};
use crate::radio::{Field, Position};
use crate::DeviceId;

pub const INDOOR_ROOM: &str = include_str!("../../../scenarios/indoor-room.toml");
pub const OUTDOOR: &str = include_str!("../../../scenarios/outdoor.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerConfig {
    pub count: usize,
    pub periphery: usize,
    pub random_waypoint: usize,
    pub speed: f64,
    pub decision_period_ms: u64,
    pub reaction_delay_ms: u64,
    /// Standard deviation of accelerometer noise in performed gestures, m/s².
    pub gesture_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub range: f64,
    pub p_loss: f64,
    pub latency_ms: u64,
    pub tx_factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    /// Per-second generation probability of an isolated player.
    pub p0: f64,
    pub fuse_s: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationConfig {
    pub position: Position,
    pub engine: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrashConfig {
    pub device: DeviceId,
    pub at_ms: u64,
    /// false: the device never comes back.
    pub reboot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub duration_cap_ms: u64,
    pub sample_period_ms: u64,
    /// Upper bound on the post-game upload phase.
    pub drain_cap_ms: u64,
    pub field: Field,
    pub players: PlayerConfig,
    pub radio: RadioConfig,
    pub game: GameConfig,
    pub stations: Vec<StationConfig>,
    pub crashes: Vec<CrashConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFile {
    width: Option<f64>,
    height: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlayersFile {
    count: Option<usize>,
    periphery: Option<usize>,
    random_waypoint: Option<usize>,
    speed: Option<f64>,
    decision_period_ms: Option<u64>,
    reaction_delay_ms: Option<u64>,
    gesture_noise: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadioFile {
    range: Option<f64>,
    p_loss: Option<f64>,
    latency_ms: Option<u64>,
    tx_factors: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    p0: Option<f64>,
    fuse_s: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationFile {
    x: f64,
    y: f64,
    #[serde(default)]
    engine: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrashFile {
    device: u16,
    at_ms: u64,
    #[serde(default = "yes")]
    reboot: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    preset: Option<String>,
    seed: Option<u64>,
    duration_cap_ms: Option<u64>,
    sample_period_ms: Option<u64>,
    drain_cap_ms: Option<u64>,
    field: Option<FieldFile>,
    players: Option<PlayersFile>,
    radio: Option<RadioFile>,
    game: Option<GameFile>,
    stations: Option<Vec<StationFile>>,
    crashes: Option<Vec<CrashFile>>,
}

/// Overwrite `dst` when the file sets a value.
fn set<T>(dst: &mut T, src: Option<T>) {
    if let Some(v) = src {
        *dst = v;
    }
}

impl Scenario {
    /// Built-in defaults, independent of the preset files.
    fn base() -> Scenario {
        Scenario {
            seed: 0,
            duration_cap_ms: 600_000,
            sample_period_ms: 1000,
            drain_cap_ms: 120_000,
            field: Field::new(10.0, 15.0),
            players: PlayerConfig {
                count: 10,
                periphery: 0,
                random_waypoint: 0,
                speed: 1.5,
                decision_period_ms: 500,
                reaction_delay_ms: 2000,
                gesture_noise: 2.0,
            },
            radio: RadioConfig {
                range: 10.0,
                p_loss: 0.05,
                latency_ms: 5,
                tx_factors: Vec::new(),
            },
            game: GameConfig {
                p0: 0.12,
                fuse_s: 30,
            },
            stations: Vec::new(),
            crashes: Vec::new(),
        }
    }

    pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
        let text = match name {
            "indoor-room" => INDOOR_ROOM,
            "outdoor" => OUTDOOR,
            other => return Err(ScenarioError::UnknownPreset(other.to_string())),
        };
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        let mut s = Scenario::base();
        s.apply(file)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        let mut s = match file.preset.as_deref() {
            Some(p) => Scenario::preset(p)?,
            None => Scenario::default(),
        };
        s.apply(file)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Scenario::from_toml_str(&text).map_err(|e| match e {
            ScenarioError::Syntax(msg) => {
                ScenarioError::Syntax(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// Load a file path, or a preset name if no such file exists.
    pub fn resolve(name: &str) -> Result<Scenario, ScenarioError> {
        let path = Path::new(name);
        if path.exists() {
            Scenario::load(path)
        } else if matches!(name, "indoor-room" | "outdoor") {
            Scenario::preset(name)
        } else {
            Scenario::load(path)
        }
    }

    fn apply(&mut self, f: ScenarioFile) -> Result<(), ScenarioError> {
        set(&mut self.seed, f.seed);
        set(&mut self.duration_cap_ms, f.duration_cap_ms);
        set(&mut self.sample_period_ms, f.sample_period_ms);
        set(&mut self.drain_cap_ms, f.drain_cap_ms);
        if let Some(ff) = f.field {
            set(&mut self.field.width, ff.width);
            set(&mut self.field.height, ff.height);
        }
        if let Some(p) = f.players {
            let pl = &mut self.players;
            set(&mut pl.count, p.count);
            set(&mut pl.periphery, p.periphery);
            set(&mut pl.random_waypoint, p.random_waypoint);
            set(&mut pl.speed, p.speed);
            set(&mut pl.decision_period_ms, p.decision_period_ms);
            set(&mut pl.reaction_delay_ms, p.reaction_delay_ms);
            set(&mut pl.gesture_noise, p.gesture_noise);
        }
        if let Some(r) = f.radio {
            set(&mut self.radio.range, r.range);
            set(&mut self.radio.p_loss, r.p_loss);
            set(&mut self.radio.latency_ms, r.latency_ms);
            set(&mut self.radio.tx_factors, r.tx_factors);
        }
        if let Some(g) = f.game {
            set(&mut self.game.p0, g.p0);
            set(&mut self.game.fuse_s, g.fuse_s);
        }
        if let Some(st) = f.stations {
            self.stations = st
                .into_iter()
                .map(|s| StationConfig {
                    position: Position::new(s.x, s.y),
                    engine: s.engine,
                })
                .collect();
        }
        if let Some(cr) = f.crashes {
            self.crashes = cr
                .into_iter()
                .map(|c| CrashConfig {
                    device: DeviceId(c.device),
                    at_ms: c.at_ms,
                    reboot: c.reboot,
                })
                .collect();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |f: &str, c: &str| ScenarioError::invalid(f, c);
        let p = &self.players;
        if p.count < 2 {
            return Err(bad("players.count", "at least 2 players are required"));
        }
        if p.count + self.stations.len() > u16::MAX as usize {
            return Err(bad("players.count", "too many devices"));
        }
        if p.periphery + p.random_waypoint > p.count {
            return Err(bad(
                "players.periphery",
                "periphery + random_waypoint must not exceed count",
            ));
        }
        if !(p.speed > 0.0 && p.speed.is_finite()) {
            return Err(bad("players.speed", "must be > 0"));
        }
        if p.decision_period_ms == 0 {
            return Err(bad("players.decision_period_ms", "must be > 0"));
        }
        if !(p.gesture_noise >= 0.0 && p.gesture_noise.is_finite()) {
            return Err(bad("players.gesture_noise", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.radio.p_loss) {
            return Err(bad("radio.p_loss", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.game.p0) {
            return Err(bad("game.p0", "must be in [0, 1)"));
        }
        if self.game.fuse_s == 0 {
            return Err(bad("game.fuse_s", "must be >= 1"));
        }
        if !(self.radio.range > 0.0 && self.radio.range.is_finite()) {
            return Err(bad("radio.range", "must be > 0"));
        }
        if let Some(i) = self
            .radio
            .tx_factors
            .iter()
            .position(|f| !(*f > 0.0 && f.is_finite()))
        {
            return Err(bad(&format!("radio.tx_factors[{i}]"), "must be > 0"));
        }
        if self.sample_period_ms < 100 {
            return Err(bad("sample_period_ms", "must be >= 100"));
        }
        if !(self.field.width > 0.0 && self.field.height > 0.0) {
            return Err(bad("field", "width and height must be > 0"));
        }
        if self.duration_cap_ms == 0 {
            return Err(bad("duration_cap_ms", "must be > 0"));
        }
        for (i, s) in self.stations.iter().enumerate() {
            if !self.field.contains(s.position) {
                return Err(bad(
                    &format!("stations[{i}]"),
                    "position must lie inside the field",
                ));
            }
        }
        if self.stations.iter().filter(|s| s.engine).count() > 1 {
            return Err(bad(
                "stations.engine",
                "at most one station can be the engine",
            ));
        }
        for (i, c) in self.crashes.iter().enumerate() {
            if c.device.index() >= p.count {
                return Err(bad(&format!("crashes[{i}].device"), "must name a player"));
            }
        }
        Ok(())
    }

    pub fn device_count(&self) -> usize {
        self.players.count + self.stations.len()
    }

    pub fn station_id(&self, i: usize) -> DeviceId {
        DeviceId((self.players.count + i) as u16)
    }

    /// Index into `stations` of the Engine: the flagged one, else the first.
    pub fn engine_index(&self) -> Option<usize> {
        if self.stations.is_empty() {
            return None;
        }
        Some(self.stations.iter().position(|s| s.engine).unwrap_or(0))
    }

    pub fn strategy_of(&self, player: usize) -> Strategy {
        let p = &self.players;
        let aggressive = p.count - p.periphery - p.random_waypoint;
        let kind = if player < aggressive {
            StrategyKind::Aggressive
        } else if player < aggressive + p.random_waypoint {
            StrategyKind::RandomWaypoint
        } else {
            StrategyKind::Periphery
        };
        Strategy {
            kind,
            speed: p.speed,
            decision_period_ms: p.decision_period_ms,
            reaction_delay_ms: p.reaction_delay_ms,
        }
    }

    pub fn tx_factors(&self) -> Vec<f64> {
        (0..self.device_count())
            .map(|i| self.radio.tx_factors.get(i).copied().unwrap_or(1.0))
            .collect()
    }

    /// Set one parameter by dotted key, as used by sweeps.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ScenarioError> {
            v.trim()
                .parse()
                .map_err(|_| ScenarioError::invalid(key, format!("cannot parse `{v}`")))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "duration_cap_ms" => self.duration_cap_ms = num(key, value)?,
            "sample_period_ms" => self.sample_period_ms = num(key, value)?,
            "drain_cap_ms" => self.drain_cap_ms = num(key, value)?,
            "field.width" => self.field.width = num(key, value)?,
            "field.height" => self.field.height = num(key, value)?,
            "players.count" => self.players.count = num(key, value)?,
            "players.periphery" => self.players.periphery = num(key, value)?,
            "players.random_waypoint" => self.players.random_waypoint = num(key, value)?,
            "players.speed" => self.players.speed = num(key, value)?,
            "players.decision_period_ms" => self.players.decision_period_ms = num(key, value)?,
            "players.reaction_delay_ms" => self.players.reaction_delay_ms = num(key, value)?,
            "players.gesture_noise" => self.players.gesture_noise = num(key, value)?,
            "radio.range" => self.radio.range = num(key, value)?,
            "radio.p_loss" => self.radio.p_loss = num(key, value)?,
            "radio.latency_ms" => self.radio.latency_ms = num(key, value)?,
            "game.p0" => self.game.p0 = num(key, value)?,
            "game.fuse_s" => self.game.fuse_s = num(key, value)?,
            other => return Err(ScenarioError::invalid(other, "not a sweepable parameter")),
        }
        self.validate()
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::preset("indoor-room").expect("bundled preset is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_toml_str("[players]\ncount = 2\n").unwrap();
        assert_eq!(s.players.count, 2);
        assert_eq!(s.players.speed, 1.5);
        assert_eq!(s.players.reaction_delay_ms, 2000);
        assert_eq!(s.radio.p_loss, 0.05);
        assert_eq!(s.radio.latency_ms, 5);
        assert_eq!(s.game.fuse_s, 30);
    }

    #[test]
    fn single_player_is_rejected() {
        let e = Scenario::from_toml_str("[players]\ncount = 1\n").unwrap_err();
        match e {
            ScenarioError::Invalid { field, .. } => assert_eq!(field, "players.count"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn indoor_preset_is_the_room() {
        let s = Scenario::preset("indoor-room").unwrap();
        assert_eq!((s.field.width, s.field.height), (10.0, 15.0));
        assert_eq!(s.engine_index(), Some(0));
    }

    #[test]
    fn outdoor_preset_loads() {
        let s = Scenario::preset("outdoor").unwrap();
        assert!(s.field.width > 10.0);
        assert!(s.stations.len() >= 2);
    }

    #[test]
    fn unknown_key_error_has_location() {
        let e = Scenario::from_toml_str("seed = 1\n[radio]\nrange = 3.0\nbogus = 2\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn loss_of_one_is_rejected() {
        assert!(Scenario::from_toml_str("[radio]\np_loss = 1.0\n").is_err());
        assert!(Scenario::from_toml_str("sample_period_ms = 50\n").is_err());
        assert!(Scenario::from_toml_str("[[crashes]]\ndevice = 99\nat_ms = 5\n").is_err());
        assert!(Scenario::from_toml_str("preset = \"moon\"\n").is_err());
    }

    #[test]
    fn strategy_mix_assigns_tail_ids() {
        let s =
            Scenario::from_toml_str("[players]\ncount = 10\nperiphery = 1\nrandom_waypoint = 2\n")
                .unwrap();
        assert_eq!(s.strategy_of(0).kind, StrategyKind::Aggressive);
        assert_eq!(s.strategy_of(7).kind, StrategyKind::RandomWaypoint);
        assert_eq!(s.strategy_of(8).kind, StrategyKind::RandomWaypoint);
        assert_eq!(s.strategy_of(9).kind, StrategyKind::Periphery);
    }

    #[test]
    fn set_param_validates() {
        let mut s = Scenario::default();
        s.set_param("game.p0", "0.04").unwrap();
        assert_eq!(s.game.p0, 0.04);
        assert!(s.set_param("players.count", "1").is_err());
        assert!(s.set_param("nope", "1").is_err());
    }
}
