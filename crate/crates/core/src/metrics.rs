//! Per-device counters, sampled into time series and written as CSV.

use std::fmt::Write as _;

use crate::echo::Role;
use crate::kernel::SimTime;
use crate::DeviceId;

pub const CSV_HEADER: &str =
    "time_ms,neighbors,potatoes_received,potatoes_sent,potatoes_generated,gestures_recognized,failed_actions";

/// Monotone event counters of one device.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub potatoes_received: u64,
    pub potatoes_sent: u64,
    pub potatoes_generated: u64,
    /// Gestures classified as the gesture the player performed.
    pub gestures_recognized: u64,
    /// Pass gestures recognized by the device whose transfer then failed.
    pub failed_actions: u64,
}

impl Counters {
    fn dominates(&self, earlier: &Counters) -> bool {
        self.potatoes_received >= earlier.potatoes_received
            && self.potatoes_sent >= earlier.potatoes_sent
            && self.potatoes_generated >= earlier.potatoes_generated
            && self.gestures_recognized >= earlier.gestures_recognized
            && self.failed_actions >= earlier.failed_actions
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricsRow {
    pub time: SimTime,
    /// Bidirectional links at sample time.
    pub neighbors: usize,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceMetrics {
    pub device: DeviceId,
    pub role: Role,
    pub rows: Vec<MetricsRow>,
}

impl DeviceMetrics {
    pub fn new(device: DeviceId, role: Role) -> Self {
        DeviceMetrics {
            device,
            role,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let c = &r.counters;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.time.0,
                r.neighbors,
                c.potatoes_received,
                c.potatoes_sent,
                c.potatoes_generated,
                c.gestures_recognized,
                c.failed_actions
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn is_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].counters.dominates(&w[0].counters))
    }

    pub fn mean_neighbors(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.neighbors as f64).sum::<f64>() / self.rows.len() as f64
    }

    pub fn last(&self) -> Counters {
        self.rows.last().map(|r| r.counters).unwrap_or_default()
    }
}

/// Median of a sample; `None` when empty. Even-sized samples average the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(values: &[u64], q: f64) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: u64, n: usize, sent: u64) -> MetricsRow {
        MetricsRow {
            time: SimTime(t),
            neighbors: n,
            counters: Counters {
                potatoes_sent: sent,
                ..Counters::default()
            },
        }
    }

    #[test]
    fn csv_has_fixed_header_and_rows() {
        let mut m = DeviceMetrics::new(DeviceId(3), Role::Player);
        m.rows.push(row(0, 0, 0));
        m.rows.push(row(1000, 4, 2));
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[2], "1000,4,0,2,0,0,0");
        assert!(m.is_monotone());
        assert_eq!(m.mean_neighbors(), 2.0);
    }

    #[test]
    fn decreasing_counter_is_not_monotone() {
        let mut m = DeviceMetrics::new(DeviceId(0), Role::Player);
        m.rows.push(row(0, 0, 2));
        m.rows.push(row(1000, 0, 1));
        assert!(!m.is_monotone());
    }

    #[test]
    fn median_and_percentile() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 0.95), Some(95));
        assert_eq!(percentile(&[7], 0.95), Some(7));
    }
}
