//! Correlations, CHSH per pulse slice, the S-vs-window curve and the
//! ensemble-versus-time-average ergodicity check.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{evolve_lambda, local_hv_bit, OutcomeModel, PolarizerAngle};
use crate::source::{ChshAngles, DetectionEvent, PulseGeometry, SettingPair};
use crate::timetag::{match_coincidences, CoincidenceRecord};

const ANGLE_TOL: f64 = 1e-9;

/// Joint outcome counts `[n00, n01, n10, n11]` for one setting pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PairCounts(pub [u64; 4]);

impl PairCounts {
    pub fn add(&mut self, bit_a: u8, bit_b: u8) {
        self.0[((bit_a << 1) | bit_b) as usize] += 1;
    }

    pub fn merge(self, other: PairCounts) -> PairCounts {
        let mut out = self;
        for (x, y) in out.0.iter_mut().zip(other.0) {
            *x += y;
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub pair: SettingPair,
    pub counts: PairCounts,
    pub e: f64,
    pub std_err: f64,
}

impl CorrelationEstimate {
    /// E = (n00 + n11 − n01 − n10) / n, σ = √((1 − E²)/n).
    pub fn from_counts(pair: SettingPair, counts: PairCounts) -> Result<Self> {
        let n = counts.total();
        if n == 0 {
            return Err(Error::UndefinedCorrelation);
        }
        let [n00, n01, n10, n11] = counts.0;
        let e = ((n00 + n11) as f64 - (n01 + n10) as f64) / n as f64;
        Ok(CorrelationEstimate {
            pair,
            counts,
            e,
            std_err: ((1.0 - e * e) / n as f64).sqrt(),
        })
    }
}

/// Correlation of a set of records that all share one setting pair.
pub fn estimate_correlation<'a>(
    pair: SettingPair,
    records: impl IntoIterator<Item = &'a CoincidenceRecord>,
) -> Result<CorrelationEstimate> {
    let mut counts = PairCounts::default();
    for r in records {
        counts.add(r.bit_a, r.bit_b);
    }
    CorrelationEstimate::from_counts(pair, counts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChshEstimate {
    pub slice_index: Option<i32>,
    /// In the order (a,b), (a,b′), (a′,b), (a′,b′).
    pub correlations: [CorrelationEstimate; 4],
    pub s: f64,
    pub std_err: f64,
}

impl ChshEstimate {
    /// S = |E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|, errors in quadrature.
    pub fn from_counts(angles: &ChshAngles, counts: [PairCounts; 4], slice_index: Option<i32>) -> Result<Self> {
        let pairs = angles.pairs();
        let mut correlations = Vec::with_capacity(4);
        for (pair, c) in pairs.iter().zip(counts) {
            correlations.push(CorrelationEstimate::from_counts(*pair, c).map_err(|_| {
                Error::IncompleteSettings {
                    alpha: pair.alpha.radians(),
                    beta: pair.beta.radians(),
                }
            })?);
        }
        let correlations: [CorrelationEstimate; 4] = correlations.try_into().expect("four pairs");
        let [e1, e2, e3, e4] = correlations.map(|c| c.e);
        let std_err = correlations.iter().map(|c| c.std_err * c.std_err).sum::<f64>().sqrt();
        Ok(ChshEstimate {
            slice_index,
            correlations,
            s: (e1 - e2 + e3 + e4).abs(),
            std_err,
        })
    }

    /// (S − 2) / σ.
    pub fn violation_sigmas(&self) -> f64 {
        if self.std_err > 0.0 {
            (self.s - 2.0) / self.std_err
        } else if self.s > 2.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Maps `(A setting, B setting)` index pairs onto CHSH slots.
struct SlotTable {
    menu_len: usize,
    slots: Vec<Option<u8>>,
}

impl SlotTable {
    fn new(menu: &[SettingPair], angles: &ChshAngles) -> Self {
        let pairs = angles.pairs();
        let n = menu.len();
        let mut slots = vec![None; n * n];
        for (ia, sa) in menu.iter().enumerate() {
            for (ib, sb) in menu.iter().enumerate() {
                slots[ia * n + ib] = pairs
                    .iter()
                    .position(|p| p.alpha.approx_eq(sa.alpha, ANGLE_TOL) && p.beta.approx_eq(sb.beta, ANGLE_TOL))
                    .map(|s| s as u8);
            }
        }
        SlotTable { menu_len: n, slots }
    }

    fn slot(&self, r: &CoincidenceRecord) -> Option<usize> {
        let (a, b) = (r.setting_index as usize, r.setting_index_b as usize);
        if a >= self.menu_len || b >= self.menu_len {
            return None;
        }
        self.slots[a * self.menu_len + b].map(usize::from)
    }
}

/// CHSH counts of the records in `slice_index` (`None` = every record).
pub fn chsh_counts(
    records: &[CoincidenceRecord],
    menu: &[SettingPair],
    angles: &ChshAngles,
    slice_index: Option<i32>,
) -> [PairCounts; 4] {
    let table = SlotTable::new(menu, angles);
    let mut counts = [PairCounts::default(); 4];
    for r in records {
        if slice_index.is_some_and(|s| r.slice_index != s) {
            continue;
        }
        if let Some(slot) = table.slot(r) {
            counts[slot].add(r.bit_a, r.bit_b);
        }
    }
    counts
}

/// CHSH estimate over one slice (or all records). The A setting supplies α
/// and the B setting supplies β.
pub fn estimate_chsh(
    records: &[CoincidenceRecord],
    menu: &[SettingPair],
    angles: &ChshAngles,
    slice_index: Option<i32>,
) -> Result<ChshEstimate> {
    ChshEstimate::from_counts(angles, chsh_counts(records, menu, angles, slice_index), slice_index)
}

/// One CHSH estimate per slice `0..n_slices`, in a single pass.
pub fn chsh_per_slice(
    records: &[CoincidenceRecord],
    menu: &[SettingPair],
    angles: &ChshAngles,
    n_slices: u32,
) -> Vec<Result<ChshEstimate>> {
    let table = SlotTable::new(menu, angles);
    let mut counts = vec![[PairCounts::default(); 4]; n_slices as usize];
    for r in records {
        if r.slice_index < 0 || r.slice_index as u32 >= n_slices {
            continue;
        }
        if let Some(slot) = table.slot(r) {
            counts[r.slice_index as usize][slot].add(r.bit_a, r.bit_b);
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| ChshEstimate::from_counts(angles, c, Some(i as i32)))
        .collect()
}

/// One point of the S-vs-window curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowPoint {
    pub window_ns: u64,
    pub coincidences: usize,
    pub s: f64,
    pub std_err: f64,
    /// Predicted fraction of genuine pairs among the coincidences.
    pub true_fraction: f64,
    pub s_predicted: f64,
}

impl WindowPoint {
    /// |S − S_pred| / σ.
    pub fn deviation_sigmas(&self) -> f64 {
        (self.s - self.s_predicted).abs() / self.std_err
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowCurve {
    pub singles_rate_a_hz: f64,
    pub singles_rate_b_hz: f64,
    pub true_rate_hz: f64,
    /// S with accidentals removed, referred from the narrowest window.
    pub s0: f64,
    pub points: Vec<WindowPoint>,
}

/// Accidental-coincidence model for uncorrelated, time-uniform background on a
/// 1 ns grid under greedy matching.
///
/// Background clicks at rates `bg_a`, `bg_b` pair with each other over
/// `2W + 1` grid offsets. When one click has two candidate partners in its
/// window greedy matching forms a single coincidence, which removes
/// `((2W + 1)τ)² · bg_a · bg_b · (bg_a + bg_b) / 2` from the pair rate. A
/// background click up to `W` ns *before* a genuine partner captures the
/// genuine click, replacing a true coincidence with an accidental one.
/// Returns `(expected coincidence rate, expected true rate)`.
fn accidental_model(true_rate: f64, bg_a: f64, bg_b: f64, window_ns: u64) -> (f64, f64) {
    let w = window_ns as f64 * 1e-9;
    let span = 2.0 * w + 1e-9;
    let pairs = span * bg_a * bg_b * (1.0 - 0.5 * span * (bg_a + bg_b));
    let total = true_rate + pairs;
    let genuine = true_rate * (1.0 - w * (bg_a + bg_b));
    (total, genuine)
}

/// Measures S as a function of the coincidence window and the curve
/// predicted if every unpaired click is uncorrelated and uniform in time.
///
/// The true-pair rate is inferred from the narrowest window; the prediction
/// is `S_pred(W) = S_0 · f_true(W)` with `S_0` referred back from the
/// narrowest window.
pub fn s_vs_window(
    events_a: &[DetectionEvent],
    events_b: &[DetectionEvent],
    windows_ns: &[u64],
    menu: &[SettingPair],
    angles: &ChshAngles,
    geometry: &PulseGeometry,
    run_duration_s: f64,
) -> Result<WindowCurve> {
    if windows_ns.is_empty() {
        return Err(Error::config("windows_ns", "window list is empty"));
    }
    if !(run_duration_s > 0.0) {
        return Err(Error::config("run_duration_s", "run duration must be positive"));
    }
    let mut windows = windows_ns.to_vec();
    windows.sort_unstable();
    windows.dedup();

    let measured: Vec<(u64, usize, ChshEstimate)> = windows
        .iter()
        .map(|&w| {
            let records = match_coincidences(events_a, events_b, w, geometry)?;
            let chsh = estimate_chsh(&records, menu, angles, None)?;
            Ok((w, records.len(), chsh))
        })
        .collect::<Result<_>>()?;

    let t = run_duration_s;
    let r_a = events_a.len() as f64 / t;
    let r_b = events_b.len() as f64 / t;
    let (w_min, n_min, chsh_min) = &measured[0];
    let n_rate = *n_min as f64 / t;
    let mut true_rate = n_rate;
    for _ in 0..50 {
        let bg_a = (r_a - true_rate).max(0.0);
        let bg_b = (r_b - true_rate).max(0.0);
        let (total, _) = accidental_model(true_rate, bg_a, bg_b, *w_min);
        true_rate = (true_rate + n_rate - total).max(0.0);
    }
    let bg_a = (r_a - true_rate).max(0.0);
    let bg_b = (r_b - true_rate).max(0.0);
    let fraction = |w: u64| {
        let (total, genuine) = accidental_model(true_rate, bg_a, bg_b, w);
        if total > 0.0 {
            genuine / total
        } else {
            0.0
        }
    };
    let f_min = fraction(*w_min);
    let s0 = if f_min > 0.0 { chsh_min.s / f_min } else { 0.0 };
    let points = measured
        .into_iter()
        .map(|(w, n, chsh)| {
            let f = fraction(w);
            WindowPoint {
                window_ns: w,
                coincidences: n,
                s: chsh.s,
                std_err: chsh.std_err,
                true_fraction: f,
                s_predicted: s0 * f,
            }
        })
        .collect();
    Ok(WindowCurve {
        singles_rate_a_hz: r_a,
        singles_rate_b_hz: r_b,
        true_rate_hz: true_rate,
        s0,
        points,
    })
}

/// A Monte Carlo or counted probability with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AverageEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n: u64,
}

impl AverageEstimate {
    fn from_counts(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        AverageEstimate {
            value: p,
            std_err: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }
}

/// Ensemble average ∫dλ ρ(λ) P⁺_A(α, λ): the probability of a transmitted
/// outcome at α, over the model's stationary λ density.
pub fn ensemble_average<R: Rng + ?Sized>(
    model: &OutcomeModel,
    alpha: PolarizerAngle,
    n_lambda_samples: u64,
    rng: &mut R,
) -> Result<AverageEstimate> {
    if n_lambda_samples == 0 {
        return Err(Error::config("n_lambda_samples", "need at least one sample"));
    }
    let mut hits = 0;
    for _ in 0..n_lambda_samples {
        let lambda = model.sample_stationary_lambda(rng)?;
        hits += (local_hv_bit(lambda, alpha) == 0) as u64;
    }
    Ok(AverageEstimate::from_counts(hits, n_lambda_samples))
}

/// Time average of transmitted outcomes at α over `[t_start, t_start + T)`
/// from a recorded trace of one station.
pub fn time_average(
    events: &[DetectionEvent],
    menu: &[SettingPair],
    alpha: PolarizerAngle,
    t_start_ns: u64,
    duration_ns: u64,
) -> Result<AverageEstimate> {
    if duration_ns == 0 {
        return Err(Error::config("window", "averaging window must be positive"));
    }
    let end = t_start_ns.saturating_add(duration_ns);
    let lo = events.partition_point(|e| e.timestamp_ns < t_start_ns);
    let hi = events.partition_point(|e| e.timestamp_ns < end);
    let (mut hits, mut n) = (0u64, 0u64);
    for e in &events[lo..hi] {
        let matches = menu
            .get(e.setting_index as usize)
            .is_some_and(|p| p.alpha.approx_eq(alpha, ANGLE_TOL));
        if matches {
            n += 1;
            hits += (e.port_bit == 0) as u64;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedAverage);
    }
    Ok(AverageEstimate::from_counts(hits, n))
}

/// Time average from a model run: emission times uniform over the window
/// (square pulse ⇒ flat weight), λ evolved to each time.
pub fn time_average_model<R: Rng + ?Sized>(
    model: &OutcomeModel,
    alpha: PolarizerAngle,
    t_start_s: f64,
    duration_s: f64,
    n_samples: u64,
    rng: &mut R,
) -> Result<AverageEstimate> {
    if !(duration_s > 0.0) || n_samples == 0 {
        return Err(Error::config("window", "averaging window and sample count must be positive"));
    }
    let mut hits = 0;
    for _ in 0..n_samples {
        let t = t_start_s + rng.random::<f64>() * duration_s;
        let state = evolve_lambda(model, t, rng)?;
        hits += (local_hv_bit(state.lambda, alpha) == 0) as u64;
    }
    Ok(AverageEstimate::from_counts(hits, n_samples))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicityReport {
    pub alpha: PolarizerAngle,
    pub window_start_s: f64,
    pub window_s: f64,
    pub ensemble_avg: f64,
    pub time_avg: f64,
    pub gap: f64,
    /// Combined standard error of the two averages.
    pub sigma: f64,
    /// 3σ.
    pub threshold: f64,
}

impl ErgodicityReport {
    pub fn new(alpha: PolarizerAngle, window_start_s: f64, window_s: f64, ens: AverageEstimate, time: AverageEstimate) -> Self {
        let sigma = (ens.std_err.powi(2) + time.std_err.powi(2)).sqrt();
        ErgodicityReport {
            alpha,
            window_start_s,
            window_s,
            ensemble_avg: ens.value,
            time_avg: time.value,
            gap: (ens.value - time.value).abs(),
            sigma,
            threshold: 3.0 * sigma,
        }
    }

    pub fn gap_sigmas(&self) -> f64 {
        if self.sigma > 0.0 {
            self.gap / self.sigma
        } else if self.gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Gap beyond the 3σ threshold.
    pub fn violated(&self) -> bool {
        self.gap > self.threshold
    }
}

/// Ensemble vs time average for each `(start, duration)` window, seconds.
pub fn ergodicity_gap<R: Rng + ?Sized>(
    model: &OutcomeModel,
    alpha: PolarizerAngle,
    windows: &[(f64, f64)],
    n_samples: u64,
    rng: &mut R,
) -> Result<Vec<ErgodicityReport>> {
    let ens = ensemble_average(model, alpha, n_samples, rng)?;
    windows
        .iter()
        .map(|&(start, len)| {
            let time = time_average_model(model, alpha, start, len, n_samples, rng)?;
            Ok(ErgodicityReport::new(alpha, start, len, ens, time))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_outcome;
    use crate::source::Station;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rec(bit_a: u8, bit_b: u8, setting: u16) -> CoincidenceRecord {
        CoincidenceRecord {
            timestamp_ns: 0,
            timestamp_b_ns: 0,
            pulse_index: 0,
            within_pulse_time_ns: 0,
            bit_a,
            bit_b,
            setting_index: setting,
            setting_index_b: setting,
            slice_index: 0,
        }
    }

    fn pair0() -> SettingPair {
        SettingPair::new(PolarizerAngle::ZERO, PolarizerAngle::ZERO)
    }

    #[test]
    fn perfect_correlation() {
        let recs: Vec<_> = (0..50).map(|i| rec(i % 2, i % 2, 0)).collect();
        let c = estimate_correlation(pair0(), &recs).unwrap();
        assert_eq!(c.e, 1.0);
        assert_eq!(c.std_err, 0.0);
    }

    #[test]
    fn symmetric_counts() {
        let c = CorrelationEstimate::from_counts(pair0(), PairCounts([25, 25, 25, 25])).unwrap();
        assert_eq!(c.e, 0.0);
        assert!((c.std_err - 0.1).abs() < 1e-15);
        assert!(matches!(
            estimate_correlation(pair0(), &[]),
            Err(Error::UndefinedCorrelation)
        ));
    }

    /// Samples `n` pairs per CHSH setting directly from a model.
    fn sampled_records(model: &OutcomeModel, n: usize, seed: u64) -> (Vec<CoincidenceRecord>, Vec<SettingPair>) {
        let menu = ChshAngles::default().menu();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(4 * n);
        for (k, pair) in menu.iter().enumerate() {
            for i in 0..n {
                let state = model.hidden_state(i as f64 * 1e-6, 0, &mut rng);
                let o = sample_outcome(model, &state, pair.alpha, pair.beta, 0.0, 1.0, &mut rng);
                out.push(rec(o.bit_a, o.bit_b, k as u16));
            }
        }
        (out, menu)
    }

    #[test]
    fn qm_chsh_reaches_tsirelson() {
        let (recs, menu) = sampled_records(&OutcomeModel::QmNonlocal, 1_000_000, 11);
        let chsh = estimate_chsh(&recs, &menu, &ChshAngles::default(), None).unwrap();
        assert!((chsh.s - 2.0 * 2f64.sqrt()).abs() < 0.01, "S = {}", chsh.s);
        let e = chsh.correlations[0].e;
        assert!((e - (PI / 4.0).cos()).abs() < 0.003, "E = {e}");
    }

    #[test]
    fn local_model_sits_on_the_bound() {
        let model = OutcomeModel::LocalErgodic { fixed_lambda: None };
        let (recs, menu) = sampled_records(&model, 1_000_000, 12);
        let chsh = estimate_chsh(&recs, &menu, &ChshAngles::default(), None).unwrap();
        assert!((chsh.s - 2.0).abs() < 0.01, "S = {}", chsh.s);
        assert!(chsh.s <= 4.0);
    }

    #[test]
    fn global_bit_flip_leaves_s_unchanged() {
        let (recs, menu) = sampled_records(&OutcomeModel::QmNonlocal, 20_000, 13);
        let flipped: Vec<_> = recs
            .iter()
            .map(|r| CoincidenceRecord {
                bit_a: 1 - r.bit_a,
                bit_b: 1 - r.bit_b,
                ..*r
            })
            .collect();
        let angles = ChshAngles::default();
        let s1 = estimate_chsh(&recs, &menu, &angles, None).unwrap().s;
        let s2 = estimate_chsh(&flipped, &menu, &angles, None).unwrap().s;
        assert_eq!(s1, s2);
    }

    #[test]
    fn missing_pair_is_reported() {
        let recs: Vec<_> = (0..10).map(|_| rec(0, 0, 0)).collect();
        let menu = ChshAngles::default().menu();
        assert!(matches!(
            estimate_chsh(&recs, &menu, &ChshAngles::default(), None),
            Err(Error::IncompleteSettings { .. })
        ));
    }

    #[test]
    fn counts_merge_is_partition_independent() {
        let (recs, menu) = sampled_records(&OutcomeModel::QmNonlocal, 5_000, 14);
        let angles = ChshAngles::default();
        let whole = chsh_counts(&recs, &menu, &angles, None);
        for split in [1, 777, recs.len() / 2, recs.len() - 1] {
            let (x, y) = recs.split_at(split);
            let cx = chsh_counts(x, &menu, &angles, None);
            let cy = chsh_counts(y, &menu, &angles, None);
            for k in 0..4 {
                assert_eq!(cx[k].merge(cy[k]), whole[k]);
            }
        }
    }

    #[test]
    fn ensemble_average_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ergodic = OutcomeModel::LocalErgodic { fixed_lambda: None };
        for deg in [0.0, 17.0, 45.0, 120.0] {
            let alpha = PolarizerAngle::from_degrees(deg);
            let avg = ensemble_average(&ergodic, alpha, 1_000_000, &mut rng).unwrap();
            assert!(avg.std_err <= 1e-3);
            assert!((avg.value - 0.5).abs() < 3.0 * avg.std_err + 1e-12, "{deg} {avg:?}");
            // brute-force λ grid
            let grid = 100_000;
            let hits = (0..grid)
                .filter(|k| local_hv_bit((*k as f64 + 0.5) * PI / grid as f64, alpha) == 0)
                .count();
            assert!((hits as f64 / grid as f64 - 0.5).abs() < 1e-4);
        }
        let point = OutcomeModel::LocalErgodic {
            fixed_lambda: Some(0.4),
        };
        let avg = ensemble_average(&point, PolarizerAngle::new(0.4), 1000, &mut rng).unwrap();
        assert_eq!(avg.value, 1.0);
        let drift = OutcomeModel::Nonergodic { drift_period_s: 0.01 };
        let avg = ensemble_average(&drift, PolarizerAngle::ZERO, 1_000_000, &mut rng).unwrap();
        assert!((avg.value - 0.5).abs() < 3.0 * avg.std_err);
        assert!(matches!(
            ensemble_average(&OutcomeModel::QmNonlocal, PolarizerAngle::ZERO, 10, &mut rng),
            Err(Error::UnsupportedModel { .. })
        ));
    }

    #[test]
    fn ensemble_average_ignores_sample_order() {
        // The estimate is a count; reordering draws cannot change it.
        let model = OutcomeModel::LocalErgodic { fixed_lambda: None };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lambdas: Vec<f64> = (0..10_000).map(|_| model.sample_stationary_lambda(&mut rng).unwrap()).collect();
        let alpha = PolarizerAngle::from_degrees(30.0);
        let forward = lambdas.iter().filter(|&&l| local_hv_bit(l, alpha) == 0).count();
        let backward = lambdas.iter().rev().filter(|&&l| local_hv_bit(l, alpha) == 0).count();
        assert_eq!(forward, backward);
    }

    fn trace_event(t: u64, bit: u8, setting: u16) -> DetectionEvent {
        DetectionEvent {
            timestamp_ns: t,
            pulse_index: 0,
            station: Station::A,
            port_bit: bit,
            setting_index: setting,
        }
    }

    #[test]
    fn time_average_from_trace() {
        let menu = vec![pair0(), SettingPair::new(PolarizerAngle::new(1.0), PolarizerAngle::ZERO)];
        let trace: Vec<_> = (0..100).map(|t| trace_event(t, 0, (t % 2) as u16)).collect();
        let avg = time_average(&trace, &menu, PolarizerAngle::ZERO, 0, 100).unwrap();
        assert_eq!(avg.value, 1.0);
        assert_eq!(avg.n, 50);
        assert!(matches!(
            time_average(&trace, &menu, PolarizerAngle::new(2.0), 0, 100),
            Err(Error::UndefinedAverage)
        ));
        assert!(matches!(
            time_average(&trace, &menu, PolarizerAngle::ZERO, 1000, 100),
            Err(Error::UndefinedAverage)
        ));
    }

    #[test]
    fn nonergodic_short_window_oracle() {
        // λ(t) = π t / T_drift ∈ [0, 0.01π] over the first 1% of the drift
        // period; local_hv_bit(λ, 0) = 0 whenever cos 2λ ≥ 0, i.e. always here.
        let model = OutcomeModel::Nonergodic { drift_period_s: 0.01 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let avg = time_average_model(&model, PolarizerAngle::ZERO, 0.0, 1e-4, 10_000, &mut rng).unwrap();
        assert_eq!(avg.value, 1.0);
        let reports = ergodicity_gap(&model, PolarizerAngle::ZERO, &[(0.0, 1e-4), (0.0, 0.01), (0.0, 0.03)], 100_000, &mut rng).unwrap();
        assert!((reports[0].gap - 0.5).abs() < 0.01);
        assert!(reports[0].violated());
        assert!(!reports[1].violated(), "{:?}", reports[1]);
        assert!(!reports[2].violated(), "{:?}", reports[2]);
    }

    #[test]
    fn ergodic_model_has_no_gap() {
        let model = OutcomeModel::LocalErgodic { fixed_lambda: None };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let windows: Vec<(f64, f64)> = (0..5).map(|k| (k as f64 * 0.1, 0.01 * (k + 1) as f64)).collect();
        for r in ergodicity_gap(&model, PolarizerAngle::from_degrees(30.0), &windows, 100_000, &mut rng).unwrap() {
            assert!(!r.violated(), "{r:?}");
        }
    }

    #[test]
    fn window_curve_requires_windows() {
        let g = crate::source::pulse_geometry(&crate::source::RunConfig::default()).unwrap();
        let menu = ChshAngles::default().menu();
        assert!(s_vs_window(&[], &[], &[], &menu, &ChshAngles::default(), &g, 1.0)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn accidental_model_limits() {
        let (total, genuine) = accidental_model(1e4, 0.0, 0.0, 100);
        assert_eq!((total, genuine), (1e4, 1e4));
        let (total, genuine) = accidental_model(1e4, 1e5, 1e5, 10);
        assert!(total > 1e4 && genuine < 1e4);
        // uncorrelated limit: genuine share vanishes for huge windows
        let (total, genuine) = accidental_model(1e4, 1e5, 1e5, 5_000);
        assert!(genuine / total < 0.1);
    }
}
