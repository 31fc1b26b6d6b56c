//! Result rows and their CSV / JSON encodings.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One evaluated point. Empty (`None`) cells mean "not computed": no
/// closed form for the scheme, or Monte-Carlo not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scheme: String,
    pub gamma_db: f64,
    pub eta: f64,
    pub rate: f64,
    pub n_relays: usize,
    pub rho_fixed: Option<f64>,
    pub p_out_analytic: Option<f64>,
    pub p_out_mc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub method: String,
}

pub const COLUMNS: [&str; 13] = [
    "scheme",
    "gamma_db",
    "eta",
    "rate",
    "n_relays",
    "rho_fixed",
    "p_out_analytic",
    "p_out_mc",
    "ci_low",
    "ci_high",
    "trials",
    "seed",
    "method",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown output format `{other}` (expected csv or json)")),
        }
    }
}

/// Writes `rows` as CSV with a header line. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_csv<W: Write>(out: W, rows: &[Record]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows` as a JSON array of records, one key per column.
pub fn write_json<W: Write>(mut out: W, rows: &[Record]) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    out.write_all(b"\n")
}

pub fn write_rows<W: Write>(out: W, rows: &[Record], format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => write_csv(out, rows).map_err(std::io::Error::other),
        Format::Json => write_json(out, rows),
    }
}

pub fn to_bytes(rows: &[Record], format: Format) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows, format).expect("writing to memory");
    buf
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<Record>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
