//! Accelerometer gesture synthesis and a training-free rule-based classifier.
//!
//! Templates are continuous functions of time sampled at the trace rate:
//! circles are a quadrature `ax`/`ay` pair whose relative phase encodes the
//! turning direction, flicks a single strong lateral pulse on `ax`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};

use crate::error::GestureError;
use crate::kernel::RngStream;

pub const SAMPLE_RATE_HZ: u32 = 50;
pub const GRAVITY: f64 = 9.81;

pub const MIN_TRACE_MS: u64 = 200;
pub const MAX_TRACE_MS: u64 = 3000;

const CIRCLE_MS: f64 = 1600.0;
const CIRCLE_HZ: f64 = 1.25;
const CIRCLE_AMPLITUDE: f64 = 5.0;
const FLICK_MS: f64 = 400.0;
const FLICK_PEAK: f64 = 18.0;
const FLICK_WIDTH_MS: f64 = 40.0;
const IDLE_MS: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureLabel {
    Clockwise,
    CounterClockwise,
    FlickRight,
    FlickLeft,
    None,
}

impl GestureLabel {
    pub const GESTURES: [GestureLabel; 4] = [
        GestureLabel::Clockwise,
        GestureLabel::CounterClockwise,
        GestureLabel::FlickRight,
        GestureLabel::FlickLeft,
    ];

    pub fn is_flick(self) -> bool {
        matches!(self, GestureLabel::FlickRight | GestureLabel::FlickLeft)
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::Clockwise => "clockwise",
            GestureLabel::CounterClockwise => "counter_clockwise",
            GestureLabel::FlickRight => "flick_right",
            GestureLabel::FlickLeft => "flick_left",
            GestureLabel::None => "none",
        }
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GestureLabel::GESTURES
            .iter()
            .chain(std::iter::once(&GestureLabel::None))
            .find(|l| l.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown gesture label `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample {
    pub t_ms: u64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelTrace {
    rate_hz: u32,
    samples: Vec<AccelSample>,
}

impl AccelTrace {
    pub fn new(rate_hz: u32, samples: Vec<AccelSample>) -> Result<Self, GestureError> {
        let trace = AccelTrace { rate_hz, samples };
        trace.validate()?;
        Ok(trace)
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    pub fn samples(&self) -> &[AccelSample] {
        &self.samples
    }

    pub fn period_ms(&self) -> u64 {
        1000 / u64::from(self.rate_hz.max(1))
    }

    pub fn duration_ms(&self) -> u64 {
        self.samples.len() as u64 * self.period_ms()
    }

    fn validate(&self) -> Result<(), GestureError> {
        if self.rate_hz == 0 || 1000 % self.rate_hz != 0 {
            return Err(GestureError::BadTimestamps);
        }
        let d = self.duration_ms();
        if !(MIN_TRACE_MS..=MAX_TRACE_MS).contains(&d) {
            return Err(GestureError::BadLength(d));
        }
        let period = self.period_ms();
        let t0 = self.samples[0].t_ms;
        for (i, s) in self.samples.iter().enumerate() {
            if s.t_ms != t0 + i as u64 * period {
                return Err(GestureError::BadTimestamps);
            }
        }
        Ok(())
    }

    /// Flip the sign of one lateral axis.
    pub fn mirrored(&self, flip_x: bool, flip_y: bool) -> AccelTrace {
        let sx = if flip_x { -1.0 } else { 1.0 };
        let sy = if flip_y { -1.0 } else { 1.0 };
        AccelTrace {
            rate_hz: self.rate_hz,
            samples: self
                .samples
                .iter()
                .map(|s| AccelSample {
                    ax: s.ax * sx,
                    ay: s.ay * sy,
                    ..*s
                })
                .collect(),
        }
    }
}

fn template_duration(label: GestureLabel) -> f64 {
    match label {
        GestureLabel::Clockwise | GestureLabel::CounterClockwise => CIRCLE_MS,
        GestureLabel::FlickRight | GestureLabel::FlickLeft => FLICK_MS,
        GestureLabel::None => IDLE_MS,
    }
}

/// Noise-free lateral acceleration for `label` at time `t_ms`.
fn template_at(label: GestureLabel, t_ms: f64) -> (f64, f64) {
    let t = t_ms / 1000.0;
    match label {
        GestureLabel::Clockwise | GestureLabel::CounterClockwise => {
            let theta = 2.0 * PI * CIRCLE_HZ * t;
            let turn = if label == GestureLabel::Clockwise {
                1.0
            } else {
                -1.0
            };
            (
                CIRCLE_AMPLITUDE * theta.sin(),
                turn * CIRCLE_AMPLITUDE * theta.cos(),
            )
        }
        GestureLabel::FlickRight | GestureLabel::FlickLeft => {
            let dir = if label == GestureLabel::FlickRight {
                1.0
            } else {
                -1.0
            };
            let c = FLICK_MS / 2.0;
            let pulse = (-(t_ms - c).powi(2) / (2.0 * FLICK_WIDTH_MS.powi(2))).exp();
            (dir * FLICK_PEAK * pulse, 0.0)
        }
        GestureLabel::None => (
            0.4 * (2.0 * PI * 0.7 * t).sin(),
            0.3 * (2.0 * PI * 0.5 * t + 1.0).sin(),
        ),
    }
}

/// Deterministic noise-free trace for `label` at `rate_hz`.
pub fn template(label: GestureLabel, rate_hz: u32) -> AccelTrace {
    let period = 1000 / u64::from(rate_hz);
    let n = (template_duration(label) as u64) / period;
    let samples = (0..n)
        .map(|i| {
            let t_ms = i * period;
            let (ax, ay) = template_at(label, t_ms as f64);
            AccelSample {
                t_ms,
                ax,
                ay,
                az: GRAVITY,
            }
        })
        .collect();
    AccelTrace { rate_hz, samples }
}

/// Template plus zero-mean Gaussian noise of standard deviation `sigma` on every axis.
pub fn synthesize(
    label: GestureLabel,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<AccelTrace, GestureError> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(GestureError::InvalidSigma(sigma));
    }
    let mut trace = template(label, SAMPLE_RATE_HZ);
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).map_err(|_| GestureError::InvalidSigma(sigma))?;
        for s in &mut trace.samples {
            s.ax += noise.sample(rng.rng());
            s.ay += noise.sample(rng.rng());
            s.az += noise.sample(rng.rng());
        }
    }
    Ok(trace)
}

/// Synthesis from a bare seed, as recorded in corpus headers.
pub fn synthesize_seeded(
    label: GestureLabel,
    sigma: f64,
    seed: u64,
) -> Result<AccelTrace, GestureError> {
    let mut rng = RngStream::new(seed, "gesture-corpus", 0);
    synthesize(label, sigma, &mut rng)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Lateral features after removing the static (gravity) component per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub peak_lateral: f64,
    pub peak_ax: f64,
    /// Fraction of samples whose lateral magnitude is at least half the peak.
    pub wide_fraction: f64,
    /// Signed area swept by the lateral vector per second; negative is clockwise.
    pub rotation_rate: f64,
}

pub fn features(trace: &AccelTrace) -> Features {
    let s = trace.samples();
    let mut xs: Vec<f64> = s.iter().map(|v| v.ax).collect();
    let mut ys: Vec<f64> = s.iter().map(|v| v.ay).collect();
    let bx = median(&mut xs.clone());
    let by = median(&mut ys.clone());
    for x in &mut xs {
        *x -= bx;
    }
    for y in &mut ys {
        *y -= by;
    }
    let mags: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x.hypot(*y)).collect();
    let (peak_idx, peak) =
        mags.iter().copied().enumerate().fold(
            (0, 0.0),
            |best, (i, m)| if m > best.1 { (i, m) } else { best },
        );
    let wide = mags.iter().filter(|m| **m >= peak / 2.0).count();
    let area: f64 = (1..xs.len())
        .map(|i| xs[i - 1] * ys[i] - ys[i - 1] * xs[i])
        .sum::<f64>()
        / 2.0;
    let secs = trace.duration_ms() as f64 / 1000.0;
    Features {
        peak_lateral: peak,
        peak_ax: xs.get(peak_idx).copied().unwrap_or(0.0),
        wide_fraction: wide as f64 / mags.len().max(1) as f64,
        rotation_rate: area / secs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classifier {
    pub flick_peak: f64,
    pub pulse_max_fraction: f64,
    pub rotation_threshold: f64,
}

impl Default for Classifier {
    fn default() -> Self {
        let cw = features(&template(GestureLabel::Clockwise, SAMPLE_RATE_HZ))
            .rotation_rate
            .abs();
        let ccw = features(&template(GestureLabel::CounterClockwise, SAMPLE_RATE_HZ))
            .rotation_rate
            .abs();
        Classifier {
            flick_peak: 12.0,
            pulse_max_fraction: 0.4,
            rotation_threshold: 0.5 * cw.min(ccw),
        }
    }
}

impl Classifier {
    pub fn classify(&self, trace: &AccelTrace) -> Result<GestureLabel, GestureError> {
        trace.validate()?;
        let f = features(trace);
        if f.peak_lateral >= self.flick_peak && f.wide_fraction <= self.pulse_max_fraction {
            return Ok(if f.peak_ax >= 0.0 {
                GestureLabel::FlickRight
            } else {
                GestureLabel::FlickLeft
            });
        }
        if f.rotation_rate.abs() >= self.rotation_threshold {
            return Ok(if f.rotation_rate < 0.0 {
                GestureLabel::Clockwise
            } else {
                GestureLabel::CounterClockwise
            });
        }
        Ok(GestureLabel::None)
    }
}

pub fn classify(trace: &AccelTrace) -> Result<GestureLabel, GestureError> {
    Classifier::default().classify(trace)
}

/// One trace in a corpus file, with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub label: GestureLabel,
    pub sigma: f64,
    pub seed: u64,
    pub trace: AccelTrace,
}

pub fn write_corpus(entries: &[CorpusEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "# label={} sigma={} seed={} rate_hz={}\n",
            e.label,
            e.sigma,
            e.seed,
            e.trace.rate_hz()
        ));
        for s in e.trace.samples() {
            out.push_str(&format!("{},{},{},{}\n", s.t_ms, s.ax, s.ay, s.az));
        }
    }
    out
}

pub fn read_corpus(text: &str) -> Result<Vec<CorpusEntry>, GestureError> {
    struct Partial {
        label: GestureLabel,
        sigma: f64,
        seed: u64,
        rate: u32,
        samples: Vec<AccelSample>,
    }
    let err = |line: usize, reason: String| GestureError::Corpus { line, reason };
    let mut done = Vec::new();
    let mut cur: Option<Partial> = None;
    let finish = |p: Partial, line: usize| -> Result<CorpusEntry, GestureError> {
        let trace = AccelTrace::new(p.rate, p.samples).map_err(|e| err(line, e.to_string()))?;
        Ok(CorpusEntry {
            label: p.label,
            sigma: p.sigma,
            seed: p.seed,
            trace,
        })
    };
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            if let Some(p) = cur.take() {
                done.push(finish(p, n)?);
            }
            let (mut label, mut sigma, mut seed, mut rate) = (None, None, None, SAMPLE_RATE_HZ);
            for kv in header.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| err(n, format!("malformed header field `{kv}`")))?;
                match k {
                    "label" => label = Some(v.parse::<GestureLabel>().map_err(|e| err(n, e))?),
                    "sigma" => sigma = Some(v.parse::<f64>().map_err(|e| err(n, e.to_string()))?),
                    "seed" => seed = Some(v.parse::<u64>().map_err(|e| err(n, e.to_string()))?),
                    "rate_hz" => rate = v.parse::<u32>().map_err(|e| err(n, e.to_string()))?,
                    other => return Err(err(n, format!("unknown header key `{other}`"))),
                }
            }
            cur = Some(Partial {
                label: label.ok_or_else(|| err(n, "header lacks label".into()))?,
                sigma: sigma.ok_or_else(|| err(n, "header lacks sigma".into()))?,
                seed: seed.ok_or_else(|| err(n, "header lacks seed".into()))?,
                rate,
                samples: Vec::new(),
            });
            continue;
        }
        let p = cur
            .as_mut()
            .ok_or_else(|| err(n, "sample before any header".into()))?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(err(n, format!("expected 4 columns, found {}", cols.len())));
        }
        let f = |s: &str| s.trim().parse::<f64>().map_err(|e| err(n, e.to_string()));
        p.samples.push(AccelSample {
            t_ms: cols[0]
                .trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| err(n, e.to_string()))?,
            ax: f(cols[1])?,
            ay: f(cols[2])?,
            az: f(cols[3])?,
        });
    }
    if let Some(p) = cur.take() {
        done.push(finish(p, text.lines().count())?);
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> RngStream {
        RngStream::new(seed, "gesture", 0)
    }

    #[test]
    fn flick_right_template_shape() {
        let t = synthesize(GestureLabel::FlickRight, 0.0, &mut rng(0)).unwrap();
        let peak_x = t.samples().iter().map(|s| s.ax).fold(f64::MIN, f64::max);
        let peak_y = t.samples().iter().map(|s| s.ay.abs()).fold(0.0, f64::max);
        assert!(peak_x >= 15.0);
        assert!(peak_y < 5.0);
    }

    #[test]
    fn circle_templates_are_mirror_images() {
        let cw = synthesize(GestureLabel::Clockwise, 0.0, &mut rng(0)).unwrap();
        let ccw = synthesize(GestureLabel::CounterClockwise, 0.0, &mut rng(0)).unwrap();
        for (a, b) in cw.samples().iter().zip(ccw.samples()) {
            assert_eq!(a.ax, b.ax);
            assert_eq!(a.ay, -b.ay);
        }
        let fa = features(&cw);
        let fb = features(&ccw);
        assert!((fa.rotation_rate + fb.rotation_rate).abs() < 1e-9);
        assert!(fa.rotation_rate < 0.0);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize(GestureLabel::Clockwise, 2.0, &mut rng(5)).unwrap();
        let b = synthesize(GestureLabel::Clockwise, 2.0, &mut rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negative_sigma_rejected() {
        assert_eq!(
            synthesize(GestureLabel::FlickLeft, -0.1, &mut rng(0)),
            Err(GestureError::InvalidSigma(-0.1))
        );
    }

    #[test]
    fn zero_noise_round_trip() {
        for label in GestureLabel::GESTURES {
            let t = synthesize(label, 0.0, &mut rng(0)).unwrap();
            assert_eq!(classify(&t).unwrap(), label);
        }
    }

    #[test]
    fn idle_hand_is_rejected() {
        for seed in 0..50 {
            let t = synthesize(GestureLabel::None, 0.5, &mut rng(seed)).unwrap();
            assert_eq!(classify(&t).unwrap(), GestureLabel::None);
        }
    }

    #[test]
    fn mirroring_swaps_labels() {
        let right = synthesize(GestureLabel::FlickRight, 1.0, &mut rng(3)).unwrap();
        assert_eq!(
            classify(&right.mirrored(true, false)).unwrap(),
            GestureLabel::FlickLeft
        );
        let cw = synthesize(GestureLabel::Clockwise, 1.0, &mut rng(3)).unwrap();
        assert_eq!(
            classify(&cw.mirrored(false, true)).unwrap(),
            GestureLabel::CounterClockwise
        );
    }

    #[test]
    fn length_limits() {
        let short: Vec<AccelSample> = (0..5)
            .map(|i| AccelSample {
                t_ms: i * 20,
                ax: 0.0,
                ay: 0.0,
                az: GRAVITY,
            })
            .collect();
        assert_eq!(
            AccelTrace::new(50, short),
            Err(GestureError::BadLength(100))
        );
        let long: Vec<AccelSample> = (0..151)
            .map(|i| AccelSample {
                t_ms: i * 20,
                ax: 0.0,
                ay: 0.0,
                az: GRAVITY,
            })
            .collect();
        assert_eq!(
            AccelTrace::new(50, long),
            Err(GestureError::BadLength(3020))
        );
        let mut gap: Vec<AccelSample> = (0..20)
            .map(|i| AccelSample {
                t_ms: i * 20,
                ax: 0.0,
                ay: 0.0,
                az: GRAVITY,
            })
            .collect();
        gap[7].t_ms += 3;
        assert_eq!(AccelTrace::new(50, gap), Err(GestureError::BadTimestamps));
    }

    #[test]
    fn corpus_round_trip() {
        let entries: Vec<CorpusEntry> =
            [(GestureLabel::FlickLeft, 11), (GestureLabel::Clockwise, 12)]
                .into_iter()
                .map(|(label, seed)| CorpusEntry {
                    label,
                    sigma: 2.0,
                    seed,
                    trace: synthesize_seeded(label, 2.0, seed).unwrap(),
                })
                .collect();
        let text = write_corpus(&entries);
        assert!(text.starts_with("# label=flick_left sigma=2 seed=11 rate_hz=50\n0,"));
        assert_eq!(read_corpus(&text).unwrap(), entries);
    }

    #[test]
    fn corpus_errors_carry_line_numbers() {
        let bad = "# label=flick_left sigma=2 seed=1\n0,1,2\n";
        assert!(matches!(
            read_corpus(bad),
            Err(GestureError::Corpus { line: 2, .. })
        ));
        let orphan = "0,1,2,3\n";
        assert!(matches!(
            read_corpus(orphan),
            Err(GestureError::Corpus { line: 1, .. })
        ));
    }
}
