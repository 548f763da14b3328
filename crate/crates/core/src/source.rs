//! Pulsed biphoton source: pulse-train geometry, per-pulse settings and
//! emission sampling, time stamping, unpaired singles and dark counts.

use std::f64::consts::PI;
use std::fmt;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_outcome, OutcomeModel, PolarizerAngle};
use crate::streams::StreamKey;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Pulses per independently generated block.
pub const BLOCK_PULSES: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Station {
    A = 0,
    B = 1,
}

impl Station {
    pub fn from_u8(v: u8) -> Option<Station> {
        match v {
            0 => Some(Station::A),
            1 => Some(Station::B),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Station::A => 'A',
            Station::B => 'B',
        }
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One time-stamped click at one station.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectionEvent {
    pub timestamp_ns: u64,
    pub pulse_index: u32,
    pub station: Station,
    /// 0 = transmitted, 1 = reflected.
    pub port_bit: u8,
    pub setting_index: u16,
}

/// One analyzer setting pair `(α, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingPair {
    pub alpha: PolarizerAngle,
    pub beta: PolarizerAngle,
}

impl SettingPair {
    pub fn new(alpha: PolarizerAngle, beta: PolarizerAngle) -> Self {
        SettingPair { alpha, beta }
    }
}

/// The four CHSH analyzer angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChshAngles {
    pub a: PolarizerAngle,
    pub a_prime: PolarizerAngle,
    pub b: PolarizerAngle,
    pub b_prime: PolarizerAngle,
}

impl Default for ChshAngles {
    /// a = 0, a′ = π/4, b = π/8, b′ = 3π/8.
    fn default() -> Self {
        ChshAngles {
            a: PolarizerAngle::ZERO,
            a_prime: PolarizerAngle::new(PI / 4.0),
            b: PolarizerAngle::new(PI / 8.0),
            b_prime: PolarizerAngle::new(3.0 * PI / 8.0),
        }
    }
}

impl ChshAngles {
    /// (a,b), (a,b′), (a′,b), (a′,b′).
    pub fn pairs(&self) -> [SettingPair; 4] {
        [
            SettingPair::new(self.a, self.b),
            SettingPair::new(self.a, self.b_prime),
            SettingPair::new(self.a_prime, self.b),
            SettingPair::new(self.a_prime, self.b_prime),
        ]
    }

    pub fn menu(&self) -> Vec<SettingPair> {
        self.pairs().to_vec()
    }
}

/// Parameters of one simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Distance L between the stations, metres.
    pub station_separation_m: f64,
    pub rep_rate_hz: f64,
    /// Pulse duration; `None` means 2L/c.
    pub pulse_duration_s: Option<f64>,
    pub run_duration_s: f64,
    /// Per-station probability of a detection in a pulse (p).
    pub detection_prob_per_pulse: f64,
    /// Probability that a pulse yields a detected pair.
    pub coincidence_prob_per_pulse: f64,
    /// Homogeneous Poisson background per station.
    pub dark_rate_hz: f64,
    pub settings_menu: Vec<SettingPair>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            station_separation_m: 20.0,
            rep_rate_hz: 1.0e6,
            pulse_duration_s: None,
            run_duration_s: 300.0,
            detection_prob_per_pulse: 0.02,
            coincidence_prob_per_pulse: 0.02,
            dark_rate_hz: 100.0,
            settings_menu: ChshAngles::default().menu(),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Checks every field and returns the resolved geometry.
    pub fn validate(&self) -> Result<PulseGeometry> {
        let geometry = pulse_geometry(self)?;
        if !(geometry.pulse_duration_s > 0.0) {
            return Err(Error::config("pulse_duration_s", "pulse duration must be positive"));
        }
        if !(self.run_duration_s.is_finite() && self.run_duration_s >= 0.0) {
            return Err(Error::config("run_duration_s", "must be a finite non-negative number"));
        }
        let p = self.detection_prob_per_pulse;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config("detection_prob_per_pulse", "must lie in (0, 1)"));
        }
        if p > 0.2 {
            return Err(Error::config(
                "detection_prob_per_pulse",
                format!("{p} violates p << 1 (limit 0.2)"),
            ));
        }
        if p > 0.1 {
            warn!("detection_prob_per_pulse = {p} is above 0.1; multi-pair effects are ignored");
        }
        let c = self.coincidence_prob_per_pulse;
        if !(0.0..1.0).contains(&c) {
            return Err(Error::config("coincidence_prob_per_pulse", "must lie in [0, 1)"));
        }
        if c > p {
            return Err(Error::config(
                "coincidence_prob_per_pulse",
                format!("{c} exceeds detection_prob_per_pulse {p}"),
            ));
        }
        if !(self.dark_rate_hz.is_finite() && self.dark_rate_hz >= 0.0) {
            return Err(Error::config("dark_rate_hz", "must be a finite non-negative rate"));
        }
        if self.settings_menu.is_empty() {
            return Err(Error::config("settings_menu", "needs at least one setting pair"));
        }
        if self.settings_menu.len() > u16::MAX as usize {
            return Err(Error::config("settings_menu", "too many entries"));
        }
        if geometry.n_pulses(self.run_duration_s) > u32::MAX as u64 {
            return Err(Error::config("run_duration_s", "pulse count exceeds u32 range"));
        }
        Ok(geometry)
    }
}

/// Timing of the pulse train.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseGeometry {
    pub pulse_duration_s: f64,
    pub rep_period_s: f64,
    pub duty_cycle: f64,
    /// L/c; detections earlier than this within the pulse are space-like
    /// separated.
    pub light_time_s: f64,
}

impl PulseGeometry {
    pub fn pulse_duration_ns(&self) -> f64 {
        self.pulse_duration_s * 1e9
    }

    pub fn rep_period_ns(&self) -> f64 {
        self.rep_period_s * 1e9
    }

    pub fn n_pulses(&self, run_duration_s: f64) -> u64 {
        (run_duration_s / self.rep_period_s + 1e-9).floor().max(0.0) as u64
    }

    /// Start of pulse `k` on the 1 ns grid.
    pub fn pulse_start_ns(&self, k: u64) -> u64 {
        (k as f64 * self.rep_period_ns()).round() as u64
    }

    /// Index of the pulse period containing `t_ns`.
    pub fn pulse_at(&self, t_ns: u64) -> u64 {
        let mut k = (t_ns as f64 / self.rep_period_ns()).floor() as u64;
        while k > 0 && self.pulse_start_ns(k) > t_ns {
            k -= 1;
        }
        while self.pulse_start_ns(k + 1) <= t_ns {
            k += 1;
        }
        k
    }
}

/// Derives the pulse-train geometry. The pulse duration defaults to 2L/c.
pub fn pulse_geometry(config: &RunConfig) -> Result<PulseGeometry> {
    let l = config.station_separation_m;
    if !(l.is_finite() && l >= 0.0) {
        return Err(Error::config("station_separation_m", "must be a finite non-negative distance"));
    }
    if !(config.rep_rate_hz.is_finite() && config.rep_rate_hz > 0.0) {
        return Err(Error::config("rep_rate_hz", "must be positive"));
    }
    let light_time_s = l / SPEED_OF_LIGHT;
    let pulse_duration_s = config.pulse_duration_s.unwrap_or(2.0 * light_time_s);
    if !(pulse_duration_s.is_finite() && pulse_duration_s >= 0.0) {
        return Err(Error::config("pulse_duration_s", "must be a finite non-negative duration"));
    }
    let duty_cycle = pulse_duration_s * config.rep_rate_hz;
    if duty_cycle > 1.0 + 1e-12 {
        return Err(Error::config(
            "pulse_duration_s",
            format!("duty cycle {duty_cycle:.4} exceeds 1"),
        ));
    }
    Ok(PulseGeometry {
        pulse_duration_s,
        rep_period_s: 1.0 / config.rep_rate_hz,
        duty_cycle,
        light_time_s,
    })
}

/// Per-station event streams of one run, each strictly time-ordered.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunEvents {
    pub a: Vec<DetectionEvent>,
    pub b: Vec<DetectionEvent>,
}

impl RunEvents {
    pub fn len(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty() && self.b.is_empty()
    }

    /// Builds the per-station streams from a merged stream.
    pub fn from_merged(events: impl IntoIterator<Item = DetectionEvent>) -> Self {
        let mut out = RunEvents::default();
        for e in events {
            match e.station {
                Station::A => out.a.push(e),
                Station::B => out.b.push(e),
            }
        }
        out
    }

    /// Both stations merged by timestamp; A first on ties.
    pub fn merged(&self) -> Merged<'_> {
        Merged {
            a: &self.a,
            b: &self.b,
        }
    }
}

pub struct Merged<'a> {
    a: &'a [DetectionEvent],
    b: &'a [DetectionEvent],
}

impl Iterator for Merged<'_> {
    type Item = DetectionEvent;

    fn next(&mut self) -> Option<DetectionEvent> {
        let take_a = match (self.a.first(), self.b.first()) {
            (None, None) => return None,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(x), Some(y)) => x.timestamp_ns <= y.timestamp_ns,
        };
        let side = if take_a { &mut self.a } else { &mut self.b };
        let (first, rest) = side.split_first()?;
        *side = rest;
        Some(*first)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.a.len() + self.b.len();
        (n, Some(n))
    }
}

impl ExactSizeIterator for Merged<'_> {}

/// Settings index of pulse `k`; a pure function of the seed and `k`.
pub fn setting_for_pulse(config: &RunConfig, k: u64) -> u16 {
    StreamKey::derive(config.seed, "settings").index(k, config.settings_menu.len()) as u16
}

struct PairSlot {
    pulse: u64,
    within_ns: u64,
    setting: u16,
    half: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Origin {
    Pair,
    Single,
    Dark,
}

struct Keys {
    settings: StreamKey,
    pairs: StreamKey,
    outcome: StreamKey,
    singles: [StreamKey; 2],
    dark: [StreamKey; 2],
}

impl Keys {
    fn new(seed: u64) -> Self {
        Keys {
            settings: StreamKey::derive(seed, "settings"),
            pairs: StreamKey::derive(seed, "pairs"),
            outcome: StreamKey::derive(seed, "outcome"),
            singles: [
                StreamKey::derive(seed, "singles/A"),
                StreamKey::derive(seed, "singles/B"),
            ],
            dark: [StreamKey::derive(seed, "dark/A"), StreamKey::derive(seed, "dark/B")],
        }
    }
}

/// Walks a Bernoulli(`p`) process over `start..end` by geometric skips.
fn bernoulli_hits<R: Rng>(p: f64, start: u64, end: u64, rng: &mut R, mut hit: impl FnMut(u64, &mut R)) {
    if p <= 0.0 || start >= end {
        return;
    }
    let geo = Geometric::new(p).expect("probability in (0, 1]");
    let mut k = start.saturating_add(geo.sample(rng));
    while k < end {
        hit(k, rng);
        k = k.saturating_add(1).saturating_add(geo.sample(rng));
    }
}

/// Generates both stations' event streams for a run.
///
/// Each pulse gets one settings pair from the menu, held for the whole pulse.
/// With probability `coincidence_prob_per_pulse` a pair is emitted at a
/// uniform within-pulse time and stamped at both stations. Pulses without a
/// pair carry an unpaired single at each station with the probability that
/// brings the per-station detection rate to `detection_prob_per_pulse`. Dark
/// counts are a homogeneous Poisson process per station over the whole run.
/// When two clicks of one station land on the same nanosecond only the first
/// (pair before single before dark) is kept.
pub fn generate_run(config: &RunConfig, model: &OutcomeModel) -> Result<RunEvents> {
    let geometry = config.validate()?;
    let keys = Keys::new(config.seed);
    let n_pulses = geometry.n_pulses(config.run_duration_s);
    let run_end_ns = (config.run_duration_s * 1e9).round() as u64;
    let n_blocks = if n_pulses > 0 {
        n_pulses.div_ceil(BLOCK_PULSES)
    } else if run_end_ns > 0 {
        1
    } else {
        0
    };
    let duration_ns = geometry.pulse_duration_ns();
    let menu_len = config.settings_menu.len();

    // Pass 1: which pulses carry a pair, when, and in which half.
    let slots: Vec<Vec<PairSlot>> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let start = block * BLOCK_PULSES;
            let end = ((block + 1) * BLOCK_PULSES).min(n_pulses);
            let mut rng = keys.pairs.rng(block);
            let mut out = Vec::new();
            bernoulli_hits(config.coincidence_prob_per_pulse, start, end, &mut rng, |k, rng| {
                let within_ns = (rng.random::<f64>() * duration_ns).floor() as u64;
                out.push(PairSlot {
                    pulse: k,
                    within_ns,
                    setting: keys.settings.index(k, menu_len) as u16,
                    half: if (2 * within_ns) as f64 >= duration_ns { 1 } else { 0 },
                });
            });
            out
        })
        .collect();

    // Running emission counters per pulse half, as block offsets.
    let mut offsets = Vec::with_capacity(slots.len());
    let mut running = [0u64; 2];
    for block in &slots {
        offsets.push(running);
        for s in block {
            running[s.half] += 1;
        }
    }

    let singles_p = if config.coincidence_prob_per_pulse < 1.0 {
        ((config.detection_prob_per_pulse - config.coincidence_prob_per_pulse)
            / (1.0 - config.coincidence_prob_per_pulse))
            .max(0.0)
    } else {
        0.0
    };

    // Pass 2: outcomes, singles and darks per block.
    let blocks: Vec<[Vec<DetectionEvent>; 2]> = slots
        .par_iter()
        .zip(offsets.par_iter())
        .enumerate()
        .map(|(block, (slots, offset))| {
            let block = block as u64;
            let start = block * BLOCK_PULSES;
            let end = ((block + 1) * BLOCK_PULSES).min(n_pulses);
            let mut counters = *offset;
            let mut rng = keys.outcome.rng(block);
            let mut streams: [Vec<(DetectionEvent, Origin)>; 2] = [Vec::new(), Vec::new()];
            for slot in slots {
                let pair = config.settings_menu[slot.setting as usize];
                let t_ns = geometry.pulse_start_ns(slot.pulse) + slot.within_ns;
                let state = model.hidden_state(t_ns as f64 * 1e-9, counters[slot.half], &mut rng);
                counters[slot.half] += 1;
                let outcome = sample_outcome(
                    model,
                    &state,
                    pair.alpha,
                    pair.beta,
                    slot.within_ns as f64 * 1e-9,
                    geometry.pulse_duration_s,
                    &mut rng,
                );
                for (station, bit) in [(Station::A, outcome.bit_a), (Station::B, outcome.bit_b)] {
                    streams[station as usize].push((
                        DetectionEvent {
                            timestamp_ns: t_ns,
                            pulse_index: slot.pulse as u32,
                            station,
                            port_bit: bit,
                            setting_index: slot.setting,
                        },
                        Origin::Pair,
                    ));
                }
            }

            for station in [Station::A, Station::B] {
                let s = station as usize;
                let mut rng = keys.singles[s].rng(block);
                let mut pair_iter = slots.iter().map(|p| p.pulse).peekable();
                let stream = &mut streams[s];
                bernoulli_hits(singles_p, start, end, &mut rng, |k, rng| {
                    while pair_iter.peek().is_some_and(|&p| p < k) {
                        pair_iter.next();
                    }
                    let within_ns = (rng.random::<f64>() * duration_ns).floor() as u64;
                    let port_bit = rng.random::<bool>() as u8;
                    if pair_iter.peek() == Some(&k) {
                        return;
                    }
                    stream.push((
                        DetectionEvent {
                            timestamp_ns: geometry.pulse_start_ns(k) + within_ns,
                            pulse_index: k as u32,
                            station,
                            port_bit,
                            setting_index: keys.settings.index(k, menu_len) as u16,
                        },
                        Origin::Single,
                    ));
                });

                if config.dark_rate_hz > 0.0 {
                    let t0 = geometry.pulse_start_ns(start) as f64;
                    let t1 = if block + 1 == n_blocks {
                        run_end_ns.max(geometry.pulse_start_ns(end)) as f64
                    } else {
                        geometry.pulse_start_ns(end) as f64
                    };
                    let mut rng = keys.dark[s].rng(block);
                    let gap = Exp::new(config.dark_rate_hz * 1e-9).expect("positive rate");
                    let mut t = t0 + gap.sample(&mut rng);
                    while t < t1 {
                        let ts = t.floor() as u64;
                        let k = geometry.pulse_at(ts);
                        stream.push((
                            DetectionEvent {
                                timestamp_ns: ts,
                                pulse_index: k.min(u32::MAX as u64) as u32,
                                station,
                                port_bit: rng.random::<bool>() as u8,
                                setting_index: keys.settings.index(k, menu_len) as u16,
                            },
                            Origin::Dark,
                        ));
                        t += gap.sample(&mut rng);
                    }
                }
                stream.sort_unstable_by_key(|(e, o)| (e.timestamp_ns, *o));
                stream.dedup_by_key(|(e, _)| e.timestamp_ns);
            }
            streams.map(|v| v.into_iter().map(|(e, _)| e).collect())
        })
        .collect();

    let mut events = RunEvents::default();
    let (na, nb) = blocks
        .iter()
        .fold((0, 0), |(a, b), [x, y]| (a + x.len(), b + y.len()));
    events.a.reserve_exact(na);
    events.b.reserve_exact(nb);
    for [a, b] in blocks {
        events.a.extend(a);
        events.b.extend(b);
    }
    Ok(events)
}
