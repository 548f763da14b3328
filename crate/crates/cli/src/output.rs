//! Report files written by `analyze`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use bellrm_core::bell::ChshEstimate;
use csv::Writer;

use crate::error::{CliError, CliResult};
use crate::pipeline::Analysis;

pub const CHSH_FILE: &str = "chsh.csv";
pub const SEQUENCES_FILE: &str = "sequences.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const VERDICT_FILE: &str = "verdict.json";
pub const WINDOW_FILE: &str = "window.csv";
pub const ERGODICITY_FILE: &str = "ergodicity.csv";

/// Files `analyze` always writes, in writing order.
pub const REPORT_FILES: [&str; 6] = [CHSH_FILE, SEQUENCES_FILE, CURVE_FILE, VERDICT_FILE, WINDOW_FILE, ERGODICITY_FILE];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_writer(dir: &Path, name: &str) -> CliResult<Writer<BufWriter<File>>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(Writer::from_writer(BufWriter::new(file)))
}

fn finish(mut w: Writer<BufWriter<File>>, dir: &Path, name: &str) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(dir.join(name), e))
}

fn chsh_row(label: String, c: Option<&ChshEstimate>, n: usize) -> Vec<String> {
    let mut row = vec![label, n.to_string()];
    match c {
        Some(c) => {
            row.push(c.s.to_string());
            row.push(c.std_err.to_string());
            row.extend(c.correlations.iter().map(|e| e.e.to_string()));
        }
        None => row.extend(std::iter::repeat_n(String::new(), 6)),
    }
    row
}

pub fn write_reports(dir: &Path, a: &Analysis) -> CliResult<()> {
    let map_csv = |e: csv::Error| CliError::from(bellrm_core::Error::from(e));

    let mut w = csv_writer(dir, CHSH_FILE)?;
    w.write_record(["slice_index", "coincidences", "s", "std_err", "e_ab", "e_ab_prime", "e_a_prime_b", "e_a_prime_b_prime"])
        .map_err(map_csv)?;
    for (i, c) in a.chsh.iter().enumerate() {
        w.write_record(chsh_row(i.to_string(), c.as_ref(), a.slice_counts[i])).map_err(map_csv)?;
    }
    w.write_record(chsh_row("all".into(), a.chsh_all.as_ref(), a.coincidences)).map_err(map_csv)?;
    finish(w, dir, CHSH_FILE)?;

    let mut w = csv_writer(dir, SEQUENCES_FILE)?;
    w.write_record([
        "sequence_id",
        "slice_index",
        "station",
        "monobit_p",
        "runs_p",
        "block_frequency_p",
        "serial_p",
        "cusum_p",
        "overall_rejected",
        "compression_ratio",
    ])
    .map_err(map_csv)?;
    if let Some(curve) = &a.curve {
        for (slice, stations) in curve.slices.iter().zip(&a.sequence_stations) {
            for (rep, station) in slice.reports.iter().zip(stations) {
                let mut row = vec![rep.sequence_id.to_string(), slice.slice_index.to_string(), station.to_string()];
                row.extend(rep.results.iter().map(|r| r.p_value.to_string()));
                row.push(u8::from(rep.overall_rejected).to_string());
                row.push(opt(rep.compression_ratio));
                w.write_record(row).map_err(map_csv)?;
            }
        }
    }
    finish(w, dir, SEQUENCES_FILE)?;

    let mut w = csv_writer(dir, CURVE_FILE)?;
    w.write_record([
        "slice_index",
        "rejection_rate",
        "ci_low",
        "ci_high",
        "mean_compression_ratio",
        "n_sequences",
        "sufficient",
        "randomness_level",
    ])
    .map_err(map_csv)?;
    if let Some(curve) = &a.curve {
        for s in &curve.slices {
            w.write_record([
                s.slice_index.to_string(),
                opt(s.rejection.map(|r| r.rate)),
                opt(s.rejection.map(|r| r.ci_low)),
                opt(s.rejection.map(|r| r.ci_high)),
                opt(s.mean_compression_ratio),
                s.sequence_count.to_string(),
                u8::from(s.sufficient).to_string(),
                opt(s.randomness_level),
            ])
            .map_err(map_csv)?;
        }
    }
    finish(w, dir, CURVE_FILE)?;

    let path = dir.join(VERDICT_FILE);
    let mut text = serde_json::to_string_pretty(&a.verdict).expect("verdict serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;

    let mut w = csv_writer(dir, WINDOW_FILE)?;
    w.write_record(["window_ns", "coincidences", "s", "std_err", "true_fraction", "s_predicted"])
        .map_err(map_csv)?;
    if let Some(curve) = &a.window {
        for p in &curve.points {
            w.write_record([
                p.window_ns.to_string(),
                p.coincidences.to_string(),
                p.s.to_string(),
                p.std_err.to_string(),
                p.true_fraction.to_string(),
                p.s_predicted.to_string(),
            ])
            .map_err(map_csv)?;
        }
    }
    finish(w, dir, WINDOW_FILE)?;

    let mut w = csv_writer(dir, ERGODICITY_FILE)?;
    w.write_record([
        "source",
        "alpha_rad",
        "window_start_s",
        "window_s",
        "ensemble_avg",
        "time_avg",
        "gap",
        "threshold",
        "violated",
    ])
    .map_err(map_csv)?;
    for row in &a.ergodicity {
        let r = &row.report;
        w.write_record([
            row.source.to_string(),
            r.alpha.radians().to_string(),
            r.window_start_s.to_string(),
            r.window_s.to_string(),
            r.ensemble_avg.to_string(),
            r.time_avg.to_string(),
            r.gap.to_string(),
            r.threshold.to_string(),
            u8::from(r.violated()).to_string(),
        ])
        .map_err(map_csv)?;
    }
    finish(w, dir, ERGODICITY_FILE)
}
