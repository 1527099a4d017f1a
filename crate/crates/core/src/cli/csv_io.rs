//! CSV outputs and their readers.
//!
//! Numbers are written with Rust's shortest round-trip `Display` form, so
//! files are locale-independent and byte-stable for identical inputs. Records
//! end in `\n`.

use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::montecarlo::BerPoint;
use crate::waveform::PsdEstimate;

pub const BER_HEADER: [&str; 7] = ["ebn0_db", "bits", "errors", "ber", "ci_low", "ci_high", "bpsk_ref"];
pub const COMPARE_HEADER: [&str; 8] = [
    "ebn0_db", "scheme", "bits", "errors", "ber", "ci_low", "ci_high", "bpsk_ref",
];
pub const DBR_HEADER: [&str; 2] = ["m", "dbr"];
pub const PSD_HEADER: [&str; 2] = ["freq_hz", "psd_db"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerRow {
    pub point: BerPoint,
    pub bpsk_ref: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub scheme: String,
    pub row: BerRow,
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn io_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn ber_fields(row: &BerRow) -> [String; 6] {
    let p = &row.point;
    [
        p.bits_simulated.to_string(),
        p.bit_errors.to_string(),
        p.ber.to_string(),
        p.ci_low.to_string(),
        p.ci_high.to_string(),
        row.bpsk_ref.to_string(),
    ]
}

pub fn write_ber_csv<W: Write>(out: W, rows: &[BerRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(BER_HEADER).map_err(io_err)?;
    for row in rows {
        let rest = ber_fields(row);
        let record = std::iter::once(row.point.ebn0_db.to_string()).chain(rest);
        w.write_record(record).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_compare_csv<W: Write>(out: W, rows: &[CompareRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(COMPARE_HEADER).map_err(io_err)?;
    for r in rows {
        let record = [r.row.point.ebn0_db.to_string(), r.scheme.clone()]
            .into_iter()
            .chain(ber_fields(&r.row));
        w.write_record(record).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dbr_csv<W: Write>(out: W, rows: &[(usize, f64)]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(DBR_HEADER).map_err(io_err)?;
    for (m, dbr) in rows {
        w.write_record([m.to_string(), dbr.to_string()]).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_psd_csv<W: Write>(out: W, psd: &PsdEstimate) -> Result<()> {
    let mut w = writer(out);
    w.write_record(PSD_HEADER).map_err(io_err)?;
    for (f, p) in psd.freqs.iter().zip(&psd.power_db) {
        w.write_record([f.to_string(), p.to_string()]).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Records of a CSV whose header must equal `header` exactly.
fn records(text: &str, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| Error::Csv {
        line: 1,
        msg: e.to_string(),
    })?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Csv {
            line: 1,
            msg: format!("expected header {}", header.join(",")),
        });
    }
    reader
        .records()
        .map(|r| {
            let rec = r.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            Ok((line, rec))
        })
        .collect()
}

fn field<T: FromStr>(rec: &csv::StringRecord, line: usize, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Csv {
            line,
            msg: format!("bad `{name}` value {:?}", rec.get(i).unwrap_or("")),
        })
}

fn parse_ber_fields(rec: &csv::StringRecord, line: usize, offset: usize, ebn0_db: f64) -> Result<BerRow> {
    let bits: u64 = field(rec, line, offset, "bits")?;
    let errors: u64 = field(rec, line, offset + 1, "errors")?;
    let ber: f64 = field(rec, line, offset + 2, "ber")?;
    let ci_low: f64 = field(rec, line, offset + 3, "ci_low")?;
    let ci_high: f64 = field(rec, line, offset + 4, "ci_high")?;
    let bpsk_ref: f64 = field(rec, line, offset + 5, "bpsk_ref")?;
    let bad = |msg: &str| Error::Csv {
        line,
        msg: msg.to_string(),
    };
    if errors > bits {
        return Err(bad("errors exceed bits"));
    }
    if !(ci_low <= ber && ber <= ci_high) || !(0.0..=1.0).contains(&ci_low) || !(0.0..=1.0).contains(&ci_high) {
        return Err(bad("inconsistent confidence interval"));
    }
    Ok(BerRow {
        point: BerPoint {
            ebn0_db,
            bits_simulated: bits,
            bit_errors: errors,
            ber,
            ci_low,
            ci_high,
        },
        bpsk_ref,
    })
}

pub fn read_ber_csv(text: &str) -> Result<Vec<BerRow>> {
    records(text, &BER_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let ebn0: f64 = field(&rec, line, 0, "ebn0_db")?;
            parse_ber_fields(&rec, line, 1, ebn0)
        })
        .collect()
}

pub fn read_compare_csv(text: &str) -> Result<Vec<CompareRow>> {
    records(text, &COMPARE_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let ebn0: f64 = field(&rec, line, 0, "ebn0_db")?;
            let scheme: String = field(&rec, line, 1, "scheme")?;
            Ok(CompareRow {
                scheme,
                row: parse_ber_fields(&rec, line, 2, ebn0)?,
            })
        })
        .collect()
}

pub fn read_dbr_csv(text: &str) -> Result<Vec<(usize, f64)>> {
    records(text, &DBR_HEADER)?
        .into_iter()
        .map(|(line, rec)| Ok((field(&rec, line, 0, "m")?, field(&rec, line, 1, "dbr")?)))
        .collect()
}

/// Parses a PSD file; the resolution bandwidth is the bin spacing.
pub fn read_psd_csv(text: &str) -> Result<PsdEstimate> {
    let mut freqs = Vec::new();
    let mut power_db = Vec::new();
    let mut last_line = 1;
    for (line, rec) in records(text, &PSD_HEADER)? {
        let f: f64 = field(&rec, line, 0, "freq_hz")?;
        let p: f64 = field(&rec, line, 1, "psd_db")?;
        if !f.is_finite() || p.is_nan() {
            return Err(Error::Csv {
                line,
                msg: "non-finite value".into(),
            });
        }
        if freqs.last().is_some_and(|prev| f <= *prev) {
            return Err(Error::Csv {
                line,
                msg: "frequencies must be strictly increasing".into(),
            });
        }
        freqs.push(f);
        power_db.push(p);
        last_line = line;
    }
    if freqs.len() < 2 {
        return Err(Error::Csv {
            line: last_line,
            msg: "need at least two bins".into(),
        });
    }
    let resolution_bw = freqs[1] - freqs[0];
    Ok(PsdEstimate {
        freqs,
        power_db,
        resolution_bw,
    })
}
