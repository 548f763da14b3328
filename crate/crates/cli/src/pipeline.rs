//! In-memory analysis: coincidences → slices → CHSH → sequences → R(t) →
//! verdict, plus the S-vs-window curve and the ergodicity check.

use bellrm_core::bell::{
    chsh_per_slice, ensemble_average, ergodicity_gap, estimate_chsh, s_vs_window, time_average, ChshEstimate,
    ErgodicityReport, WindowCurve,
};
use bellrm_core::model::OutcomeModel;
use bellrm_core::randommeter::{classify_scenario, randommeter_curve, RandommeterCurve, ScenarioVerdict};
use bellrm_core::source::{RunEvents, Station};
use bellrm_core::streams::StreamKey;
use bellrm_core::timetag::{extract_sequences, match_coincidences, sequence_partition, slice_counts, slice_records};
use bellrm_core::Result;
use log::{info, warn};
use serde::Serialize;

use crate::config::Config;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicityRow {
    /// `model` for Monte Carlo time averages, `trace` for the recorded run.
    pub source: &'static str,
    pub report: ErgodicityReport,
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub coincidences: usize,
    pub slice_counts: Vec<usize>,
    pub chsh_all: Option<ChshEstimate>,
    pub chsh: Vec<Option<ChshEstimate>>,
    pub curve: Option<RandommeterCurve>,
    /// Per slice, the station of each tested sequence (parallel to the curve's
    /// reports).
    pub sequence_stations: Vec<Vec<Station>>,
    pub verdict: ScenarioVerdict,
    pub window: Option<WindowCurve>,
    pub ergodicity: Vec<ErgodicityRow>,
}

/// Runs the full analysis on one run's events.
pub fn analyze_events(events: &RunEvents, config: &Config) -> Result<Analysis> {
    let (geometry, model) = config.resolve()?;
    let an = &config.analysis;
    let menu = &config.run.settings_menu;

    let mut records = match_coincidences(&events.a, &events.b, an.window_ns, &geometry)?;
    slice_records(&mut records, an.n_slices, geometry.pulse_duration_ns())?;
    info!("{} coincidences in {} slices", records.len(), an.n_slices);
    let counts = slice_counts(&records, an.n_slices);
    let chsh: Vec<Option<ChshEstimate>> = chsh_per_slice(&records, menu, &an.angles, an.n_slices)
        .into_iter()
        .map(|r| r.ok())
        .collect();
    let chsh_all = estimate_chsh(&records, menu, &an.angles, None).ok();

    let mut curve = None;
    let mut sequence_stations = Vec::new();
    let verdict = if records.is_empty() {
        ScenarioVerdict::inconclusive("no data: no coincidences in input")
    } else {
        let mut per_slice: Vec<Vec<Vec<u8>>> = Vec::with_capacity(an.n_slices as usize);
        for slice in 0..an.n_slices as i32 {
            let mut seqs = Vec::new();
            let mut stations = Vec::new();
            for &station in &an.stations {
                let seq = extract_sequences(&records, Some(slice), station, None);
                for part in sequence_partition(&seq.bits, an.battery.sequence_length)? {
                    seqs.push(part.to_vec());
                    stations.push(station);
                }
            }
            per_slice.push(seqs);
            sequence_stations.push(stations);
        }
        drop(records);
        let c = randommeter_curve(&per_slice, &an.battery)?;
        let v = classify_scenario(&c, &chsh)?;
        curve = Some(c);
        v
    };

    let window = if an.window_scan_ns.is_empty() || events.a.is_empty() || events.b.is_empty() {
        None
    } else {
        match s_vs_window(
            &events.a,
            &events.b,
            &an.window_scan_ns,
            menu,
            &an.angles,
            &geometry,
            config.run.run_duration_s,
        ) {
            Ok(w) => Some(w),
            Err(e) => {
                warn!("S-vs-window curve skipped: {e}");
                None
            }
        }
    };

    let ergodicity = if model.is_hidden_variable() {
        ergodicity_rows(events, config, &model, geometry.rep_period_s)?
    } else {
        Vec::new()
    };

    Ok(Analysis {
        coincidences: counts.iter().sum::<usize>(),
        slice_counts: counts,
        chsh_all,
        chsh,
        curve,
        sequence_stations,
        verdict,
        window,
        ergodicity,
    })
}

/// Default windows: short, medium and full-length relative to the model's
/// natural time scale.
fn default_windows(model: &OutcomeModel, run_s: f64, rep_period_s: f64) -> Vec<(f64, f64)> {
    match *model {
        OutcomeModel::Nonergodic { drift_period_s: t } => vec![(0.0, t / 100.0), (0.0, t), (0.0, 3.0 * t)],
        _ => {
            let short = 1e4 * rep_period_s;
            let run = if run_s > 0.0 { run_s } else { short };
            vec![(0.0, short), (0.0, run / 10.0), (0.0, run)]
        }
    }
}

fn ergodicity_rows(events: &RunEvents, config: &Config, model: &OutcomeModel, rep_period_s: f64) -> Result<Vec<ErgodicityRow>> {
    let erg = &config.analysis.ergodicity;
    let alpha = config.analysis.angles.a;
    let windows: Vec<(f64, f64)> = if erg.windows_s.is_empty() {
        default_windows(model, config.run.run_duration_s, rep_period_s)
    } else {
        erg.windows_s.iter().map(|w| (w[0], w[1])).collect()
    };
    let mut rng = StreamKey::derive(config.run.seed, "analysis/ergodicity").rng(0);
    let mut rows: Vec<ErgodicityRow> = ergodicity_gap(model, alpha, &windows, erg.n_samples, &mut rng)?
        .into_iter()
        .map(|report| ErgodicityRow { source: "model", report })
        .collect();
    let run_ns = (config.run.run_duration_s * 1e9).round() as u64;
    if run_ns > 0 {
        let ens = ensemble_average(model, alpha, erg.n_samples, &mut rng)?;
        match time_average(&events.a, &config.run.settings_menu, alpha, 0, run_ns) {
            Ok(time) => rows.push(ErgodicityRow {
                source: "trace",
                report: ErgodicityReport::new(alpha, 0.0, config.run.run_duration_s, ens, time),
            }),
            Err(e) => warn!("trace time average skipped: {e}"),
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bellrm_core::randommeter::ScenarioLabel;

    #[test]
    fn empty_run_is_inconclusive() {
        let a = analyze_events(&RunEvents::default(), &Config::default()).unwrap();
        assert_eq!(a.coincidences, 0);
        assert_eq!(a.verdict.label, ScenarioLabel::Inconclusive);
        assert!(a.verdict.reason.as_deref().unwrap().contains("no data"));
        assert!(a.curve.is_none() && a.window.is_none());
    }

    #[test]
    fn default_windows_follow_model() {
        let w = default_windows(&OutcomeModel::Nonergodic { drift_period_s: 0.01 }, 300.0, 1e-6);
        assert_eq!(w, vec![(0.0, 1e-4), (0.0, 0.01), (0.0, 0.03)]);
        let w = default_windows(&OutcomeModel::LocalErgodic { fixed_lambda: None }, 300.0, 1e-6);
        assert_eq!(w.last(), Some(&(0.0, 300.0)));
    }
}
