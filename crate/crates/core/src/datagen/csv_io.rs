use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use super::TimeSeriesDataset;
use crate::error::{Error, Result};

const K: &str = "k";
const QHVAC: &str = "qhvac_kW";
const TOA: &str = "Toa_C";
const ETASOL: &str = "etasol_kWm2";
const TZ: &str = "Tz_C";
const QINT: &str = "qint_kW";
const TREF: &str = "Tref_C";

const KNOWN: [&str; 7] = [K, QHVAC, TOA, ETASOL, TZ, QINT, TREF];

/// Reads a dataset; the CSV carries no sampling period, so it is supplied here.
pub fn load_csv(path: impl AsRef<Path>, t_s: f64) -> Result<TimeSeriesDataset> {
    read_csv(BufReader::new(File::open(path)?), t_s)
}

pub fn read_csv<R: Read>(reader: R, t_s: f64) -> Result<TimeSeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    for h in headers.iter().filter(|h| !KNOWN.contains(h)) {
        log::warn!("ignoring unknown csv column `{h}`");
    }

    let cols_required = [require(QHVAC)?, require(TOA)?, require(ETASOL)?, require(TZ)?];
    let k_col = require(K)?;
    let optional = [find(QINT), find(TREF)];

    let mut req: [Vec<f64>; 4] = Default::default();
    let mut opt: [Vec<f64>; 2] = Default::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let cell = |col: usize| -> Result<f64> {
            let raw = rec.get(col).ok_or_else(|| Error::Parse {
                row,
                column: headers[col].to_string(),
                reason: "missing cell".into(),
            })?;
            raw.parse::<f64>().map_err(|e| Error::Parse {
                row,
                column: headers[col].to_string(),
                reason: format!("`{raw}`: {e}"),
            })
        };
        let k = cell(k_col)?;
        if k != (i + 1) as f64 {
            return Err(Error::Parse {
                row,
                column: K.into(),
                reason: format!("expected step index {}, got {k}", i + 1),
            });
        }
        for (dst, &col) in req.iter_mut().zip(&cols_required) {
            dst.push(cell(col)?);
        }
        for (dst, col) in opt.iter_mut().zip(&optional) {
            if let Some(col) = *col {
                dst.push(cell(col)?);
            }
        }
    }

    let [q_hvac, t_oa, eta_sol, t_z] = req;
    let [q_int, t_ref] = opt;
    let d = TimeSeriesDataset {
        t_s,
        q_hvac,
        t_oa,
        eta_sol,
        t_z,
        q_int: optional[0].map(|_| q_int),
        t_ref: optional[1].map(|_| t_ref),
    };
    d.validate()?;
    Ok(d)
}

/// Writes `d` to `path` through a temporary file that is renamed into place.
pub fn write_csv(d: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(d, &mut buf)?;
    crate::io::write_atomic(path.as_ref(), &buf)
}

pub fn write_csv_to<W: Write>(d: &TimeSeriesDataset, writer: W) -> Result<()> {
    d.validate()?;
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![K, QHVAC, TOA, ETASOL, TZ];
    if d.q_int.is_some() {
        header.push(QINT);
    }
    if d.t_ref.is_some() {
        header.push(TREF);
    }
    wtr.write_record(&header)?;
    for k in 0..d.len() {
        let mut rec = vec![
            (k + 1).to_string(),
            d.q_hvac[k].to_string(),
            d.t_oa[k].to_string(),
            d.eta_sol[k].to_string(),
            d.t_z[k].to_string(),
        ];
        rec.extend(d.q_int.as_ref().map(|w| w[k].to_string()));
        rec.extend(d.t_ref.as_ref().map(|r| r[k].to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
