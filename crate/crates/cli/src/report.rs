//! Report rows, CSV output and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// One measured quantity with its reference and verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub suite: String,
    /// `key=value` pairs joined by ';', in a fixed order per suite.
    pub parameters: String,
    pub measured: f64,
    pub reference: f64,
    pub pass: bool,
    /// Wall-clock seconds; kept out of the CSV so reports stay reproducible.
    #[serde(skip)]
    pub runtime: f64,
}

impl ReportRow {
    pub fn new(suite: &str, parameters: String, measured: f64, reference: f64, pass: bool) -> Self {
        Self {
            suite: suite.into(),
            parameters,
            measured,
            reference,
            pass,
            runtime: 0.0,
        }
    }

    /// A failed row recording an error raised while computing it.
    pub fn failure(suite: &str, parameters: String, error: &str) -> Self {
        Self::new(suite, format!("{parameters};error={error}"), f64::NAN, f64::NAN, false)
    }

    /// measured / reference, or NaN when the reference is zero or undefined.
    pub fn ratio(&self) -> f64 {
        if self.reference != 0.0 && self.reference.is_finite() {
            self.measured / self.reference
        } else {
            f64::NAN
        }
    }
}

/// 17 significant digits, which round-trips every f64.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub const CSV_HEADER: [&str; 6] = ["suite", "parameters", "measured", "reference", "ratio", "pass"];

/// Sorts rows by (suite, parameters) so output is independent of the
/// order in which parallel work finished.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| (a.suite.as_str(), a.parameters.as_str()).cmp(&(b.suite.as_str(), b.parameters.as_str())));
}

pub fn write_csv<W: Write>(out: W, rows: &[ReportRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.suite.clone(),
            r.parameters.clone(),
            format_float(r.measured),
            format_float(r.reference),
            format_float(r.ratio()),
            r.pass.to_string(),
        ])?;
    }
    w.flush()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct FileChecksum {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub suite: String,
    pub parameters: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub seed: u64,
    pub jobs: usize,
    pub versions: Versions,
    pub config: serde_json::Value,
    pub rows: usize,
    pub failed_rows: usize,
    pub outputs: Vec<FileChecksum>,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub hnls_cli: &'static str,
    pub hnls_core: &'static str,
    pub manifest_format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            hnls_cli: env!("CARGO_PKG_VERSION"),
            hnls_core: hnls_core::VERSION,
            manifest_format: 1,
        }
    }
}

pub fn checksum_file(root: &Path, path: &Path) -> std::io::Result<FileChecksum> {
    let bytes = std::fs::read(path)?;
    let rel: PathBuf = path.strip_prefix(root).unwrap_or(path).to_path_buf();
    Ok(FileChecksum {
        path: rel.to_string_lossy().replace('\\', "/"),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(format_float(f64::NAN), "NaN");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn ratio_rules() {
        assert_eq!(ReportRow::new("a", String::new(), 3.0, 2.0, true).ratio(), 1.5);
        assert!(ReportRow::new("a", String::new(), 3.0, 0.0, true).ratio().is_nan());
    }

    #[test]
    fn csv_is_sorted_and_stable() {
        let mut rows = vec![
            ReportRow::new("b", "x=1".into(), 1.0, 1.0, true),
            ReportRow::new("a", "x=2".into(), 2.0, 1.0, false),
            ReportRow::new("a", "x=1".into(), 0.5, 0.0, true),
        ];
        sort_rows(&mut rows);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "suite,parameters,measured,reference,ratio,pass");
        assert!(lines[1].starts_with("a,x=1,5.0000000000000000e-1,0.0000000000000000e0,NaN,true"));
        assert!(lines[2].starts_with("a,x=2"));
        assert!(lines[3].starts_with("b,x=1"));
    }

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
