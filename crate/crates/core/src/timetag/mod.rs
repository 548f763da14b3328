//! Coincidence extraction, pulse slicing and per-slice binary sequences.

pub mod format;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::source::{DetectionEvent, PulseGeometry, Station};

/// Default coincidence window, ns.
pub const DEFAULT_WINDOW_NS: u64 = 2;

/// Slice label of a record whose A click lies outside the pulse window.
pub const OUTSIDE_PULSE: i32 = -1;

/// A matched A/B detection pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoincidenceRecord {
    /// Station A timestamp.
    pub timestamp_ns: u64,
    /// Station B timestamp.
    pub timestamp_b_ns: u64,
    /// Pulse period of the A click.
    pub pulse_index: u32,
    /// A timestamp relative to the start of its pulse period.
    pub within_pulse_time_ns: u64,
    pub bit_a: u8,
    pub bit_b: u8,
    /// Settings pair of the A click's pulse.
    pub setting_index: u16,
    /// Settings pair of the B click's pulse; differs from `setting_index` only
    /// for accidentals that straddle pulse periods.
    pub setting_index_b: u16,
    /// Pulse slice, or [`OUTSIDE_PULSE`]. Unsliced records carry
    /// [`OUTSIDE_PULSE`] until [`slice_records`] runs.
    pub slice_index: i32,
}

fn check_order(events: &[DetectionEvent], station: char) -> Result<()> {
    match events
        .windows(2)
        .position(|w| w[1].timestamp_ns < w[0].timestamp_ns)
    {
        Some(i) => Err(Error::StreamOrder {
            station,
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Greedy one-to-one matching of two time-ordered streams.
///
/// Both streams are walked in time order. When the two current heads are
/// within `window_ns` of each other they are paired; otherwise the earlier
/// head is dropped. Because the compatibility relation is an interval on
/// sorted streams this yields a maximum-cardinality matching.
pub fn match_coincidences(
    events_a: &[DetectionEvent],
    events_b: &[DetectionEvent],
    window_ns: u64,
    geometry: &PulseGeometry,
) -> Result<Vec<CoincidenceRecord>> {
    if window_ns == 0 {
        return Err(Error::config("window_ns", "coincidence window must be positive"));
    }
    check_order(events_a, 'A')?;
    check_order(events_b, 'B')?;
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(events_a.len().min(events_b.len()));
    while i < events_a.len() && j < events_b.len() {
        let a = &events_a[i];
        let b = &events_b[j];
        if a.timestamp_ns.abs_diff(b.timestamp_ns) <= window_ns {
            let start = geometry.pulse_start_ns(a.pulse_index as u64);
            out.push(CoincidenceRecord {
                timestamp_ns: a.timestamp_ns,
                timestamp_b_ns: b.timestamp_ns,
                pulse_index: a.pulse_index,
                within_pulse_time_ns: a.timestamp_ns.saturating_sub(start),
                bit_a: a.port_bit,
                bit_b: b.port_bit,
                setting_index: a.setting_index,
                setting_index_b: b.setting_index,
                slice_index: OUTSIDE_PULSE,
            });
            i += 1;
            j += 1;
        } else if a.timestamp_ns < b.timestamp_ns {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(out)
}

/// Number of coincidences without building records.
pub fn count_coincidences(events_a: &[DetectionEvent], events_b: &[DetectionEvent], window_ns: u64) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < events_a.len() && j < events_b.len() {
        let (ta, tb) = (events_a[i].timestamp_ns, events_b[j].timestamp_ns);
        if ta.abs_diff(tb) <= window_ns {
            n += 1;
            i += 1;
            j += 1;
        } else if ta < tb {
            i += 1;
        } else {
            j += 1;
        }
    }
    n
}

/// Slice of a within-pulse time: equal-width slices, boundaries belong to the
/// later slice, times at or past the pulse end map to [`OUTSIDE_PULSE`].
pub fn slice_of(within_pulse_time_ns: u64, n_slices: u32, pulse_duration_ns: f64) -> i32 {
    let t = within_pulse_time_ns as f64;
    if t >= pulse_duration_ns {
        return OUTSIDE_PULSE;
    }
    ((n_slices as f64 * t / pulse_duration_ns).floor() as i32).min(n_slices as i32 - 1)
}

/// Assigns slice labels in place.
pub fn slice_records(records: &mut [CoincidenceRecord], n_slices: u32, pulse_duration_ns: f64) -> Result<()> {
    if n_slices < 2 {
        return Err(Error::config("n_slices", "need at least two pulse slices"));
    }
    if !(pulse_duration_ns > 0.0) {
        return Err(Error::config("pulse_duration_s", "pulse duration must be positive"));
    }
    for r in records.iter_mut() {
        r.slice_index = slice_of(r.within_pulse_time_ns, n_slices, pulse_duration_ns);
    }
    Ok(())
}

/// Coincidence counts per slice (index = slice).
pub fn slice_counts(records: &[CoincidenceRecord], n_slices: u32) -> Vec<usize> {
    let mut counts = vec![0; n_slices as usize];
    for r in records {
        if r.slice_index >= 0 {
            counts[r.slice_index as usize] += 1;
        }
    }
    counts
}

/// Ordered bits of one station, optionally restricted to a slice and a
/// settings pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinarySequence {
    pub station: Station,
    /// `None` means every record, inside the pulse or not.
    pub slice_index: Option<i32>,
    pub setting_filter: Option<u16>,
    pub bits: Vec<u8>,
}

impl BinarySequence {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Extracts one station's bits in coincidence order. An empty selection gives
/// an empty sequence.
pub fn extract_sequences(
    records: &[CoincidenceRecord],
    slice_index: Option<i32>,
    station: Station,
    setting_filter: Option<u16>,
) -> BinarySequence {
    let bits = records
        .iter()
        .filter(|r| slice_index.is_none_or(|s| r.slice_index == s))
        .filter(|r| setting_filter.is_none_or(|s| r.setting_index == s))
        .map(|r| match station {
            Station::A => r.bit_a,
            Station::B => r.bit_b,
        })
        .collect();
    BinarySequence {
        station,
        slice_index,
        setting_filter,
        bits,
    }
}

/// Non-overlapping consecutive blocks of `target_length`; the remainder is
/// dropped.
pub fn sequence_partition(bits: &[u8], target_length: usize) -> Result<Vec<&[u8]>> {
    if target_length < 100 {
        return Err(Error::config("sequence_length", "target length must be at least 100"));
    }
    Ok(bits.chunks_exact(target_length).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{pulse_geometry, RunConfig};
    use proptest::prelude::*;

    fn geometry() -> PulseGeometry {
        pulse_geometry(&RunConfig {
            pulse_duration_s: Some(120e-9),
            ..RunConfig::default()
        })
        .unwrap()
    }

    fn ev(station: Station, t: u64, bit: u8) -> DetectionEvent {
        DetectionEvent {
            timestamp_ns: t,
            pulse_index: (t / 1000) as u32,
            station,
            port_bit: bit,
            setting_index: 0,
        }
    }

    fn stream(station: Station, ts: &[u64]) -> Vec<DetectionEvent> {
        ts.iter().map(|&t| ev(station, t, (t % 2) as u8)).collect()
    }

    #[test]
    fn simultaneous_events_match() {
        let g = geometry();
        let r = match_coincidences(&stream(Station::A, &[1005]), &stream(Station::B, &[1005]), 2, &g).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].within_pulse_time_ns, 5);
        assert_eq!(r[0].pulse_index, 1);
    }

    #[test]
    fn far_events_do_not_match() {
        let g = geometry();
        let r = match_coincidences(&stream(Station::A, &[100]), &stream(Station::B, &[104]), 2, &g).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn earlier_partner_wins_ties() {
        let g = geometry();
        let r = match_coincidences(&stream(Station::A, &[10]), &stream(Station::B, &[8, 12]), 2, &g).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].timestamp_b_ns, 8);
    }

    #[test]
    fn unordered_input_is_rejected() {
        let g = geometry();
        let err = match_coincidences(&stream(Station::A, &[10, 5]), &stream(Station::B, &[1]), 2, &g).unwrap_err();
        assert!(matches!(err, Error::StreamOrder { station: 'A', index: 1 }));
        assert!(match_coincidences(&[], &[], 0, &g).unwrap_err().is_config());
    }

    #[test]
    fn slice_boundaries() {
        assert_eq!(slice_of(0, 2, 120.0), 0);
        assert_eq!(slice_of(59, 2, 120.0), 0);
        assert_eq!(slice_of(60, 2, 120.0), 1);
        assert_eq!(slice_of(119, 2, 120.0), 1);
        assert_eq!(slice_of(120, 2, 120.0), OUTSIDE_PULSE);
        assert_eq!(slice_of(500, 4, 120.0), OUTSIDE_PULSE);
        let mut recs = vec![];
        assert!(slice_records(&mut recs, 1, 120.0).is_err());
    }

    #[test]
    fn first_half_ends_at_light_time() {
        let g = pulse_geometry(&RunConfig::default()).unwrap();
        let light_ns = g.light_time_s * 1e9;
        let d = g.pulse_duration_ns();
        let last_first = light_ns.ceil() as u64 - 1;
        assert_eq!(slice_of(last_first, 2, d), 0);
        assert_eq!(slice_of(light_ns.ceil() as u64, 2, d), 1);
    }

    #[test]
    fn extraction_preserves_order() {
        let g = geometry();
        let ts: Vec<u64> = (0..10).map(|k| k * 1000 + 7).collect();
        let a: Vec<_> = ts.iter().enumerate().map(|(i, &t)| ev(Station::A, t, (i % 3 == 0) as u8)).collect();
        let b: Vec<_> = ts.iter().map(|&t| ev(Station::B, t, 0)).collect();
        let mut recs = match_coincidences(&a, &b, 2, &g).unwrap();
        slice_records(&mut recs, 2, g.pulse_duration_ns()).unwrap();
        let seq = extract_sequences(&recs, Some(0), Station::A, None);
        assert_eq!(seq.len(), 10);
        assert_eq!(seq.bits, a.iter().map(|e| e.port_bit).collect::<Vec<_>>());
        assert!(extract_sequences(&recs, Some(1), Station::A, None).is_empty());
        assert!(extract_sequences(&recs, Some(0), Station::A, Some(3)).is_empty());
    }

    #[test]
    fn partition_examples() {
        let bits = vec![0u8; 6_000_000];
        assert_eq!(sequence_partition(&bits, 10_000).unwrap().len(), 600);
        assert!(sequence_partition(&bits[..9999], 10_000).unwrap().is_empty());
        let bits: Vec<u8> = (0..20_000u32).map(|i| (i * 7 % 3 == 0) as u8).collect();
        let parts = sequence_partition(&bits, 10_000).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts.concat(), bits);
        assert!(sequence_partition(&bits, 99).is_err());
    }

    fn sorted_stream() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::btree_set(0u64..2_000, 0..60).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn matching_is_symmetric(ta in sorted_stream(), tb in sorted_stream(), w in 1u64..20) {
            let g = geometry();
            let a = stream(Station::A, &ta);
            let b = stream(Station::B, &tb);
            let ab = match_coincidences(&a, &b, w, &g).unwrap();
            let ba = match_coincidences(&b, &a, w, &g).unwrap();
            let mut x: Vec<_> = ab.iter().map(|r| (r.timestamp_ns, r.timestamp_b_ns, r.bit_a, r.bit_b)).collect();
            let mut y: Vec<_> = ba.iter().map(|r| (r.timestamp_b_ns, r.timestamp_ns, r.bit_b, r.bit_a)).collect();
            x.sort_unstable();
            y.sort_unstable();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn wider_window_never_loses_coincidences(ta in sorted_stream(), tb in sorted_stream(), w in 1u64..20, extra in 0u64..20) {
            prop_assert!(count_coincidences(&stream(Station::A, &ta), &stream(Station::B, &tb), w)
                <= count_coincidences(&stream(Station::A, &ta), &stream(Station::B, &tb), w + extra));
        }

        #[test]
        fn slice_counts_sum_to_in_pulse_total(times in prop::collection::vec(0u64..200, 0..300), n in 2u32..9) {
            let mut recs: Vec<CoincidenceRecord> = times.iter().map(|&t| CoincidenceRecord {
                timestamp_ns: t, timestamp_b_ns: t, pulse_index: 0, within_pulse_time_ns: t,
                bit_a: 0, bit_b: 0, setting_index: 0, setting_index_b: 0, slice_index: OUTSIDE_PULSE,
            }).collect();
            slice_records(&mut recs, n, 133.4).unwrap();
            let in_pulse = times.iter().filter(|&&t| (t as f64) < 133.4).count();
            prop_assert_eq!(slice_counts(&recs, n).iter().sum::<usize>(), in_pulse);
        }
    }
}
