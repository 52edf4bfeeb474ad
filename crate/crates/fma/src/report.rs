//! Report serialization and atomic file output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::harness::StudyReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub const STUDY_COLUMNS: [&str; 11] = [
    "case",
    "family",
    "beta3",
    "n",
    "scheme",
    "truth",
    "mean_estimate",
    "error",
    "bias2",
    "variance",
    "mse",
];

/// One row per (configuration, estimator); `beta3` is empty when unused.
pub fn study_csv(report: &StudyReport) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STUDY_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.case.clone(),
            r.family.name().to_owned(),
            r.beta3.map_or(String::new(), |b| b.to_string()),
            r.n.to_string(),
            r.scheme.clone(),
            r.truth.to_string(),
            r.mean_estimate.to_string(),
            r.error.to_string(),
            r.bias2.to_string(),
            r.variance.to_string(),
            r.mse.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn study_bytes(report: &StudyReport, format: Format) -> anyhow::Result<Vec<u8>> {
    Ok(match format {
        Format::Csv => study_csv(report)?,
        Format::Json => to_json(report)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRow {
    pub index: usize,
    pub actual: Option<f64>,
    pub predicted: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn band_csv(rows: &[BandRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Sends bytes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> std::io::Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Family;
    use crate::harness::ReportRow;

    fn report() -> StudyReport {
        StudyReport {
            study: "t".into(),
            seed: 1,
            n_reps: 2,
            rows: vec![ReportRow {
                case: "A".into(),
                family: Family::Linear,
                beta3: Some(0.5),
                n: 100,
                scheme: "optimal".into(),
                truth: -0.7,
                mean_estimate: -0.6,
                error: 0.2,
                bias2: 0.01,
                variance: 0.03,
                mse: 0.04,
            }],
            failures: vec![],
        }
    }

    #[test]
    fn csv_has_documented_header() {
        let text = String::from_utf8(study_csv(&report()).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), STUDY_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "A,linear,0.5,100,optimal,-0.7,-0.6,0.2,0.01,0.03,0.04");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
