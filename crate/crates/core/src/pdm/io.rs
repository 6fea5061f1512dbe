//! CSV files of the maintenance pipeline. Values use shortest round-trip
//! decimal formatting; absent values are empty fields.

use std::io::{Read, Write};

use super::predict::{BandRow, Observation};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse<T: Scalar>(field: &str, what: &str, row: usize) -> Result<T> {
    field.trim().parse::<T>().map_err(|_| Error::Parse(format!("{what} row {row}: invalid number `{field}`")))
}

fn parse_opt<T: Scalar>(field: &str, what: &str, row: usize) -> Result<Option<T>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse(field, what, row).map(Some)
    }
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], what: &str) -> Result<()> {
    let headers = rdr.headers()?;
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "{what}: expected header `{}`, got `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn records<R: Read>(rdr: &mut csv::Reader<R>, width: usize, what: &str) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Parse(format!("{what} row {}: expected {width} fields, got {}", i + 1, rec.len())));
        }
        out.push(rec);
    }
    Ok(out)
}

/// `observations.csv`: header `t,a_hat,b_hat`.
pub fn write_observations<T: Scalar, W: Write>(obs: &[Observation<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "a_hat", "b_hat"])?;
    for o in obs {
        wtr.write_record([o.t.to_string(), o.y_hat[0].to_string(), o.y_hat[1].to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_observations<T: Scalar, R: Read>(r: R) -> Result<Vec<Observation<T>>> {
    const WHAT: &str = "observations";
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &["t", "a_hat", "b_hat"], WHAT)?;
    records(&mut rdr, 3, WHAT)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let o: Observation<T> = Observation {
                t: parse(&rec[0], WHAT, i + 1)?,
                y_hat: [parse(&rec[1], WHAT, i + 1)?, parse(&rec[2], WHAT, i + 1)?],
            };
            if !(o.t >= T::zero()) || !o.t.is_finite() || o.y_hat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("{WHAT} row {}: t must be >= 0 and values finite", i + 1)));
            }
            Ok(o)
        })
        .collect()
}

/// `prediction.csv`: header `t,p10,mean,p90,zeta_true`.
pub fn write_prediction<T: Scalar, W: Write>(rows: &[BandRow<T>], zeta_true: &[Option<T>], w: W) -> Result<()> {
    if zeta_true.len() != rows.len() {
        return Err(Error::LengthMismatch { expected: rows.len(), got: zeta_true.len() });
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "p10", "mean", "p90", "zeta_true"])?;
    for (row, z) in rows.iter().zip(zeta_true) {
        wtr.write_record([row.t.to_string(), row.lo.to_string(), row.mean.to_string(), row.hi.to_string(), opt(*z)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_prediction<T: Scalar, R: Read>(r: R) -> Result<Vec<(BandRow<T>, Option<T>)>> {
    const WHAT: &str = "prediction";
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &["t", "p10", "mean", "p90", "zeta_true"], WHAT)?;
    records(&mut rdr, 5, WHAT)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let row = BandRow {
                t: parse(&rec[0], WHAT, i + 1)?,
                lo: parse(&rec[1], WHAT, i + 1)?,
                mean: parse(&rec[2], WHAT, i + 1)?,
                hi: parse(&rec[3], WHAT, i + 1)?,
            };
            Ok((row, parse_opt(&rec[4], WHAT, i + 1)?))
        })
        .collect()
}

/// One row of `tstar.csv`: maintenance times suggested on `day`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TstarRow<T> {
    pub day: T,
    pub ours: T,
    pub ls: Option<T>,
    pub truth: Option<T>,
}

/// `tstar.csv`: header `day,ours,ls,true`.
pub fn write_tstar<T: Scalar, W: Write>(rows: &[TstarRow<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["day", "ours", "ls", "true"])?;
    for r in rows {
        wtr.write_record([r.day.to_string(), r.ours.to_string(), opt(r.ls), opt(r.truth)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_tstar<T: Scalar, R: Read>(r: R) -> Result<Vec<TstarRow<T>>> {
    const WHAT: &str = "tstar";
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &["day", "ours", "ls", "true"], WHAT)?;
    records(&mut rdr, 4, WHAT)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            Ok(TstarRow {
                day: parse(&rec[0], WHAT, i + 1)?,
                ours: parse(&rec[1], WHAT, i + 1)?,
                ls: parse_opt(&rec[2], WHAT, i + 1)?,
                truth: parse_opt(&rec[3], WHAT, i + 1)?,
            })
        })
        .collect()
}

/// One row of `tstar_rules.csv`: the three belief rules side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RulesRow<T> {
    pub day: T,
    pub percentile: T,
    pub mean: T,
    pub chance: T,
}

/// `tstar_rules.csv`: header `day,p10,mean,chance`.
pub fn write_rules<T: Scalar, W: Write>(rows: &[RulesRow<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["day", "p10", "mean", "chance"])?;
    for r in rows {
        wtr.write_record([r.day.to_string(), r.percentile.to_string(), r.mean.to_string(), r.chance.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
