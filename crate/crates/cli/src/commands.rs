use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use bellrm_core::source::{generate_run, RunEvents};
use bellrm_core::timetag::format::{read_btag, write_btag, write_csv};
use log::info;

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::output::{write_reports, CHSH_FILE, CURVE_FILE, REPORT_FILES, VERDICT_FILE};
use crate::pipeline::{analyze_events, Analysis};

pub const BTAG_FILE: &str = "run.btag";
pub const EVENTS_CSV_FILE: &str = "run.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CURVES_FILE: &str = "curves.csv";
const LOCK_FILE: &str = ".bellrm.lock";

/// Exclusive hold on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(dir.to_path_buf())),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Clone, Debug, Default)]
pub struct SimulateOptions {
    pub seed: Option<u64>,
    pub write_csv: bool,
}

/// Simulates a run into `out_dir`: `run.btag`, optional `run.csv`, and the
/// manifest.
pub fn simulate(config: Config, out_dir: &Path, opts: &SimulateOptions) -> CliResult<RunManifest> {
    let mut config = config;
    if let Some(seed) = opts.seed {
        config.run.seed = seed;
    }
    let (_, model) = config.resolve()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let _lock = DirLock::acquire(out_dir)?;

    let events = generate_run(&config.run, &model)?;
    info!("generated {} events (A {}, B {})", events.len(), events.a.len(), events.b.len());

    let mut manifest = RunManifest::new(config);
    let path = out_dir.join(BTAG_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_btag(BufWriter::new(file), events.merged())?;
    manifest.add_artifact(out_dir, BTAG_FILE)?;
    if opts.write_csv {
        let path = out_dir.join(EVENTS_CSV_FILE);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_csv(BufWriter::new(file), events.merged())?;
        manifest.add_artifact(out_dir, EVENTS_CSV_FILE)?;
    }
    manifest.save(out_dir)?;
    Ok(manifest)
}

pub fn simulate_from_path(config_path: &Path, out_dir: &Path, opts: &SimulateOptions) -> CliResult<RunManifest> {
    simulate(Config::load(config_path)?, out_dir, opts)
}

#[derive(Clone, Debug, Default)]
pub struct AnalyzeOptions {
    pub n_slices: Option<u32>,
    pub window_ns: Option<u64>,
    pub alpha_sig: Option<f64>,
}

pub fn load_events(dir: &Path) -> CliResult<RunEvents> {
    let path = dir.join(BTAG_FILE);
    if !path.exists() {
        return Err(CliError::Missing(vec![path.display().to_string()]));
    }
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(RunEvents::from_merged(read_btag(BufReader::new(file))?))
}

/// Analyzes a simulated run in place and records the reports in its manifest.
pub fn analyze(dir: &Path, opts: &AnalyzeOptions) -> CliResult<Analysis> {
    let mut manifest = RunManifest::load(dir)?;
    let _lock = DirLock::acquire(dir)?;
    let an = &mut manifest.config.analysis;
    if let Some(n) = opts.n_slices {
        an.n_slices = n;
    }
    if let Some(w) = opts.window_ns {
        an.window_ns = w;
    }
    if let Some(a) = opts.alpha_sig {
        an.battery.alpha_sig = a;
    }
    manifest.config.resolve()?;

    let events = load_events(dir)?;
    let analysis = analyze_events(&events, &manifest.config)?;
    write_reports(dir, &analysis)?;
    for name in REPORT_FILES {
        manifest.add_artifact(dir, name)?;
    }
    manifest.save(dir)?;
    info!("verdict {}", analysis.verdict.label);
    Ok(analysis)
}

fn read_table(path: &Path) -> CliResult<Vec<csv::StringRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

fn field(rec: &csv::StringRecord, i: usize) -> &str {
    rec.get(i).unwrap_or("")
}

fn fmt_num(s: &str, digits: usize) -> String {
    s.parse::<f64>().map_or_else(|_| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

/// Builds `summary.txt` and `curves.csv` in `out_dir` from one or more
/// analyzed run directories, in the given order.
pub fn report(in_dirs: &[PathBuf], out_dir: &Path) -> CliResult<String> {
    let required = [MANIFEST_FILE, CHSH_FILE, CURVE_FILE, VERDICT_FILE];
    let missing: Vec<String> = in_dirs
        .iter()
        .flat_map(|d| required.iter().map(move |f| d.join(f)))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }

    let mut summary = String::new();
    let mut curves = csv::Writer::from_writer(Vec::new());
    let header = [
        "run",
        "slice_index",
        "s",
        "s_std_err",
        "rejection_rate",
        "ci_low",
        "ci_high",
        "mean_compression_ratio",
        "n_sequences",
    ];
    curves.write_record(header).expect("in-memory write");
    for dir in in_dirs {
        let manifest = RunManifest::load(dir)?;
        let chsh = read_table(&dir.join(CHSH_FILE))?;
        let curve = read_table(&dir.join(CURVE_FILE))?;
        let vpath = dir.join(VERDICT_FILE);
        let text = std::fs::read_to_string(&vpath).map_err(|e| CliError::io(&vpath, e))?;
        let verdict: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Malformed {
            path: vpath.clone(),
            message: e.to_string(),
        })?;
        let run = dir.display().to_string();

        let _ = writeln!(summary, "== run {run} ==");
        let _ = writeln!(
            summary,
            "model {}, seed {}, {} slices",
            manifest.config.model.kind, manifest.seed, manifest.config.analysis.n_slices
        );
        for rec in chsh.iter().filter(|r| field(r, 0) != "all") {
            let slice = field(rec, 0);
            let r = curve.iter().find(|c| field(c, 0) == slice);
            let _ = writeln!(
                summary,
                "slice {slice}: S = {} +/- {}, R = {} [{}, {}] over {} sequences",
                fmt_num(field(rec, 2), 4),
                fmt_num(field(rec, 3), 4),
                r.map_or("n/a".into(), |c| fmt_num(field(c, 1), 4)),
                r.map_or("n/a".into(), |c| fmt_num(field(c, 2), 4)),
                r.map_or("n/a".into(), |c| fmt_num(field(c, 3), 4)),
                r.map_or("0", |c| field(c, 5)),
            );
            let row = [
                run.as_str(),
                slice,
                field(rec, 2),
                field(rec, 3),
                r.map_or("", |c| field(c, 1)),
                r.map_or("", |c| field(c, 2)),
                r.map_or("", |c| field(c, 3)),
                r.map_or("", |c| field(c, 4)),
                r.map_or("", |c| field(c, 5)),
            ];
            curves.write_record(row).expect("in-memory write");
        }
        let label = verdict["label"].as_str().unwrap_or("INCONCLUSIVE");
        let detail = match (verdict["contrast_statistic"].as_f64(), verdict["p_value"].as_f64()) {
            (Some(z), Some(p)) => format!(" (contrast z = {z:.3}, p = {p:.3e})"),
            _ => verdict["reason"].as_str().map(|r| format!(" ({r})")).unwrap_or_default(),
        };
        let _ = writeln!(summary, "verdict: {label}{detail}");
        summary.push('\n');
    }

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let path = out_dir.join(SUMMARY_FILE);
    std::fs::write(&path, &summary).map_err(|e| CliError::io(&path, e))?;
    let path = out_dir.join(CURVES_FILE);
    let bytes = curves.into_inner().expect("in-memory flush");
    std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(summary)
}
