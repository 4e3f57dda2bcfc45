//! On-disk formats: measurement CSV, holiday and schedule lists, versioned
//! JSON documents for kernel and network parameters, and result tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use frugalsense_core::evaluation::EvalReport;
use frugalsense_core::env::TrajectoryRecord;
use frugalsense_core::gp::{KernelParams, MaternParams, PeriodicParams};
use frugalsense_core::nn::{MlpParams, NnError, PARAMS_FORMAT_VERSION};
use frugalsense_core::ppo::CurvePoint;
use frugalsense_core::timeseries::{Dataset, HolidaySet, Measurement, SlotIndex, TimeseriesError};
use serde::{Deserialize, Serialize};

/// Version written into kernel parameter documents.
pub const KERNEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: {message}")]
    ParseError { path: PathBuf, line: usize, message: String },
    #[error("duplicate slot {0}")]
    DuplicateSlot(u32),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: format version {found}, expected {expected}")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: corrupt payload: {message}")]
    CorruptPayload { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::MissingFile(path.to_path_buf())
        } else {
            IoError::Io { path: path.to_path_buf(), source }
        }
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes via a temporary sibling and rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn parse_error(path: &Path, line: usize, message: impl ToString) -> IoError {
    IoError::ParseError { path: path.to_path_buf(), line, message: message.to_string() }
}

/// Reads a `slot,laeq` CSV. Rows may be in any order; the result is
/// sorted. Line numbers in errors count the header as line 1.
pub fn load_measurements(path: &Path, holidays: HolidaySet) -> Result<Dataset, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| parse_error(path, 1, e))?.clone();
    if headers.len() != 2 || &headers[0] != "slot" || &headers[1] != "laeq" {
        return Err(parse_error(path, 1, "expected header `slot,laeq`"));
    }
    let mut measurements = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_error(path, line, e))?;
        if row.len() != 2 {
            return Err(parse_error(path, line, "expected two fields"));
        }
        let slot: u32 = row[0].trim().parse().map_err(|e| parse_error(path, line, format!("slot: {e}")))?;
        let laeq: f64 = row[1].trim().parse().map_err(|e| parse_error(path, line, format!("laeq: {e}")))?;
        if !laeq.is_finite() {
            return Err(parse_error(path, line, "laeq is not finite"));
        }
        measurements.push(Measurement { slot: SlotIndex(slot), laeq });
    }
    Dataset::new(measurements, holidays).map_err(|e| match e {
        TimeseriesError::DuplicateSlot(s) => IoError::DuplicateSlot(s),
        other => parse_error(path, 0, other),
    })
}

pub fn write_measurements(path: &Path, dataset: &Dataset) -> Result<(), IoError> {
    let mut out = String::from("slot,laeq\n");
    for m in dataset.measurements() {
        out.push_str(&format!("{},{}\n", m.slot.0, m.laeq));
    }
    write_atomic(path, out.as_bytes())
}

fn load_integers(path: &Path) -> Result<Vec<u32>, IoError> {
    let text = read(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_str = line.trim();
        if line_str.is_empty() {
            continue;
        }
        values.push(line_str.parse().map_err(|e| parse_error(path, i + 1, e))?);
    }
    Ok(values)
}

fn write_integers(path: &Path, values: impl IntoIterator<Item = u32>) -> Result<(), IoError> {
    let mut out = String::new();
    for v in values {
        out.push_str(&format!("{v}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// One day index per line; blank lines are ignored.
pub fn load_holidays(path: &Path) -> Result<HolidaySet, IoError> {
    Ok(load_integers(path)?.into_iter().collect())
}

pub fn write_holidays(path: &Path, holidays: &HolidaySet) -> Result<(), IoError> {
    write_integers(path, holidays.iter().copied())
}

/// One slot index per line.
pub fn load_schedule(path: &Path) -> Result<Vec<SlotIndex>, IoError> {
    let mut slots: Vec<SlotIndex> = load_integers(path)?.into_iter().map(SlotIndex).collect();
    slots.sort();
    slots.dedup();
    Ok(slots)
}

pub fn write_schedule(path: &Path, schedule: &[SlotIndex]) -> Result<(), IoError> {
    write_integers(path, schedule.iter().map(|s| s.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDocument {
    format_version: u32,
    matern: MaternParams,
    periodic: PeriodicParams,
    noise_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_log_likelihood: Option<f64>,
}

/// Kernel hyperparameters plus, when they came from a fit, the achieved and
/// initial log marginal likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFile {
    pub params: KernelParams,
    pub log_likelihood: Option<f64>,
    pub initial_log_likelihood: Option<f64>,
}

fn check_version(path: &Path, text: &str, expected: u32) -> Result<serde_json::Value, IoError> {
    let corrupt = |message: String| IoError::CorruptPayload { path: path.to_path_buf(), message };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("missing format_version".into()))?;
    if found != expected as u64 {
        return Err(IoError::VersionMismatch { path: path.to_path_buf(), found: found as u32, expected });
    }
    Ok(value)
}

pub fn save_kernel_params(path: &Path, file: &KernelFile) -> Result<(), IoError> {
    let doc = KernelDocument {
        format_version: KERNEL_FORMAT_VERSION,
        matern: file.params.matern,
        periodic: file.params.periodic,
        noise_variance: file.params.noise_variance,
        log_likelihood: file.log_likelihood,
        initial_log_likelihood: file.initial_log_likelihood,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("kernel document serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_kernel_params(path: &Path) -> Result<KernelFile, IoError> {
    let value = check_version(path, &read(path)?, KERNEL_FORMAT_VERSION)?;
    let corrupt = |message: String| IoError::CorruptPayload { path: path.to_path_buf(), message };
    let doc: KernelDocument = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    let params = KernelParams { matern: doc.matern, periodic: doc.periodic, noise_variance: doc.noise_variance };
    if !params.is_valid() {
        return Err(corrupt("hyperparameters out of domain".into()));
    }
    Ok(KernelFile {
        params,
        log_likelihood: doc.log_likelihood,
        initial_log_likelihood: doc.initial_log_likelihood,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    format_version: u32,
    network: MlpParams,
}

/// JSON text of a versioned network document.
pub fn serialize_network(params: &MlpParams) -> String {
    let doc = NetworkDocument { format_version: PARAMS_FORMAT_VERSION, network: params.clone() };
    let mut text = serde_json::to_string(&doc).expect("network document serializes");
    text.push('\n');
    text
}

pub fn deserialize_network(bytes: &[u8]) -> Result<MlpParams, NnError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| NnError::CorruptPayload(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| NnError::CorruptPayload("missing format_version".into()))?;
    if found != PARAMS_FORMAT_VERSION as u64 {
        return Err(NnError::VersionMismatch { found: found as u32, expected: PARAMS_FORMAT_VERSION });
    }
    let doc: NetworkDocument = serde_json::from_value(value).map_err(|e| NnError::CorruptPayload(e.to_string()))?;
    doc.network.validate()?;
    Ok(doc.network)
}

pub fn save_network(path: &Path, params: &MlpParams) -> Result<(), IoError> {
    write_atomic(path, serialize_network(params).as_bytes())
}

pub fn load_network(path: &Path) -> Result<MlpParams, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    deserialize_network(&bytes).map_err(|e| match e {
        NnError::VersionMismatch { found, expected } => {
            IoError::VersionMismatch { path: path.to_path_buf(), found, expected }
        }
        NnError::CorruptPayload(message) => IoError::CorruptPayload { path: path.to_path_buf(), message },
    })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| IoError::CorruptPayload { path: path.to_path_buf(), message: e.to_string() })
}

/// Renders rows of a CSV table with a header.
fn csv_text<R: Serialize>(rows: impl IntoIterator<Item = R>, header: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| parse_error(path, i + 2, e)))
        .collect()
}

/// A row of `comparison.csv` and of every single-report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub fi: f64,
    pub rmse: f64,
    pub samples: usize,
    pub span_start: u32,
    pub span_end: u32,
}

pub const REPORT_HEADER: [&str; 6] = ["policy", "fi", "rmse", "samples", "span_start", "span_end"];

impl ReportRow {
    pub fn new(policy: &str, report: &EvalReport) -> Self {
        ReportRow {
            policy: policy.to_string(),
            fi: report.fisher_information,
            rmse: report.rmse,
            samples: report.num_samples_used,
            span_start: report.period_span.0 .0,
            span_end: report.period_span.1 .0,
        }
    }
}

pub fn write_reports(path: &Path, rows: &[ReportRow]) -> Result<(), IoError> {
    write_atomic(path, csv_text(rows, &REPORT_HEADER).as_bytes())
}

/// Appends to a report table, creating it with a header when absent.
pub fn append_report(path: &Path, row: &ReportRow) -> Result<(), IoError> {
    let mut rows = if path.exists() { read_reports(path)? } else { Vec::new() };
    rows.push(row.clone());
    write_reports(path, &rows)
}

pub fn read_reports(path: &Path) -> Result<Vec<ReportRow>, IoError> {
    read_rows(path)
}

pub const CURVE_HEADER: [&str; 3] = ["episode", "reward", "update"];

pub fn learning_curve_text(curve: &[CurvePoint]) -> String {
    csv_text(curve.iter().map(|c| (c.episode, c.reward, c.update)), &CURVE_HEADER)
}

pub fn write_learning_curve(path: &Path, curve: &[CurvePoint]) -> Result<(), IoError> {
    write_atomic(path, learning_curve_text(curve).as_bytes())
}

pub fn read_learning_curve(path: &Path) -> Result<Vec<CurvePoint>, IoError> {
    let rows: Vec<(usize, f64, usize)> = read_rows(path)?;
    Ok(rows.into_iter().map(|(episode, reward, update)| CurvePoint { episode, reward, update }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub agent_id: usize,
    pub seed: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub lr: f64,
    pub final_fi: f64,
    pub final_rmse: f64,
}

pub const SWEEP_HEADER: [&str; 8] = ["agent_id", "seed", "gamma", "lambda", "clip", "lr", "final_fi", "final_rmse"];

pub fn write_sweep_results(path: &Path, rows: &[SweepRow]) -> Result<(), IoError> {
    write_atomic(path, csv_text(rows, &SWEEP_HEADER).as_bytes())
}

pub fn read_sweep_results(path: &Path) -> Result<Vec<SweepRow>, IoError> {
    read_rows(path)
}

pub const TRAJECTORY_HEADER: [&str; 6] = ["step", "slot", "action", "sampled", "battery", "reward"];

pub fn write_trajectory(path: &Path, records: &[TrajectoryRecord]) -> Result<(), IoError> {
    let rows = records.iter().map(|r| (r.step, r.slot, r.action, r.sampled as u8, r.battery, r.reward));
    write_atomic(path, csv_text(rows, &TRAJECTORY_HEADER).as_bytes())
}

/// One slot of a reconstructed span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub slot: u32,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub sampled: u8,
}

pub const POSTERIOR_HEADER: [&str; 5] = ["slot", "truth", "mean", "sd", "sampled"];

pub fn write_posterior(path: &Path, rows: &[PosteriorRow]) -> Result<(), IoError> {
    write_atomic(path, csv_text(rows, &POSTERIOR_HEADER).as_bytes())
}

pub fn read_posterior(path: &Path) -> Result<Vec<PosteriorRow>, IoError> {
    read_rows(path)
}

/// Appends a line to a plain log file.
pub fn append_line(path: &Path, line: &str) -> Result<(), IoError> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use frugalsense_core::nn::Architecture;
    use frugalsense_core::timeseries::{generate_synthetic, SyntheticProfile};

    #[test]
    fn two_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "slot,laeq\n0,35.0\n1,36.5").unwrap();
        let d = load_measurements(&p, HolidaySet::new()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.get(SlotIndex(1)), Some(36.5));
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        assert!(matches!(load_measurements(&p, HolidaySet::new()), Err(IoError::MissingFile(_))));
        fs::write(&p, "slot,laeq\n0,35.0\n5,1\n5,2\n").unwrap();
        assert!(matches!(load_measurements(&p, HolidaySet::new()), Err(IoError::DuplicateSlot(5))));
        fs::write(&p, "slot,laeq\n0,35.0\nx,1\n").unwrap();
        assert!(matches!(load_measurements(&p, HolidaySet::new()), Err(IoError::ParseError { line: 3, .. })));
    }

    #[test]
    fn unordered_rows_equal_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        fs::write(&a, "slot,laeq\n2,1.5\n0,2.5\n1,3\n").unwrap();
        fs::write(&b, "slot,laeq\n0,2.5\n1,3\n2,1.5\n").unwrap();
        assert_eq!(load_measurements(&a, HolidaySet::new()).unwrap(), load_measurements(&b, HolidaySet::new()).unwrap());
    }

    #[test]
    fn measurement_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let d = generate_synthetic(&SyntheticProfile::default(), 300);
        write_measurements(&p, &d).unwrap();
        assert_eq!(load_measurements(&p, HolidaySet::new()).unwrap(), d);
    }

    #[test]
    fn kernel_document_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.json");
        let f = KernelFile { params: KernelParams::default(), log_likelihood: Some(-3.5), initial_log_likelihood: None };
        save_kernel_params(&p, &f).unwrap();
        assert_eq!(load_kernel_params(&p).unwrap(), f);
        let text = fs::read_to_string(&p).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        fs::write(&p, text).unwrap();
        assert!(matches!(load_kernel_params(&p), Err(IoError::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn network_round_trip_is_bit_exact() {
        use rand::SeedableRng;
        let arch = Architecture::new(13, vec![32, 32], 6);
        let p = MlpParams::init(&arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let back = deserialize_network(serialize_network(&p).as_bytes()).unwrap();
        assert_eq!(back, p);
        let mut bad = serialize_network(&p);
        bad = bad.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert_eq!(deserialize_network(bad.as_bytes()), Err(NnError::VersionMismatch { found: 2, expected: 1 }));
        assert!(matches!(deserialize_network(b"{\"format_version\":1}"), Err(NnError::CorruptPayload(_))));
    }

    #[test]
    fn tables_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("comparison.csv");
        let row = ReportRow { policy: "uniform".into(), fi: 1.25, rmse: 0.5, samples: 100, span_start: 0, span_end: 672 };
        append_report(&p, &row).unwrap();
        append_report(&p, &ReportRow { policy: "oracle".into(), ..row.clone() }).unwrap();
        let rows = read_reports(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], row);
        assert!(fs::read_to_string(&p).unwrap().starts_with("policy,fi,rmse,samples,span_start,span_end\n"));

        let c = dir.path().join("curve.csv");
        let curve = vec![CurvePoint { episode: 0, reward: 0.1 + 0.2, update: 0 }];
        write_learning_curve(&c, &curve).unwrap();
        assert_eq!(read_learning_curve(&c).unwrap(), curve);
    }
}
