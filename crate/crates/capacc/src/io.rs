//! File formats: observation CSV, precision matrices (dense or triplet CSV)
//! and the JSON anomaly report. See `docs/formats.md`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use capacc_core::{AnomalySet, CollectiveAnomaly, DataMatrix, Matrix, PenaltyScheme, PointAnomaly};
use serde::ser::Serialize;
use serde::{Deserialize, Deserializer};
use serde_json::ser::Formatter;

use crate::error::{Error, Result};

fn parse_value(field: &str, row: usize, col: usize) -> Result<f64> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}, column {col}: `{field}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Parse(format!("row {row}, column {col}: non-finite value `{field}`")));
    }
    Ok(x)
}

/// Reads an observation panel: a header of column names, then one row per
/// time point.
pub fn read_data<R: Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let p = names.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        // data rows are numbered from 1, the header being row 0
        for (j, field) in record.iter().enumerate() {
            values.push(parse_value(field, i + 1, j + 1)?);
        }
        n += 1;
    }
    if n < 2 {
        return Err(Error::Parse(format!("need at least 2 observations, found {n}")));
    }
    let m = Matrix::from_row_major(n, p, values)?;
    Ok(DataMatrix::new(m, names)?)
}

pub fn read_data_file(path: &Path) -> Result<DataMatrix> {
    read_data(BufReader::new(open(path)?))
}

/// Writes `data` in the format read by [`read_data`], with shortest
/// round-trip float formatting.
pub fn write_data<W: Write>(writer: W, data: &DataMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.column_names())?;
    for t in 0..data.n() {
        w.write_record(data.row(t).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_data_file(path: &Path, data: &DataMatrix) -> Result<()> {
    write_data(create(path)?, data)
}

/// Reads a precision matrix. A header of exactly `i,j,value` selects the
/// sparse triplet layout (1-based indices, either or both triangles);
/// anything else is a dense `p × p` matrix under a header of `p` names.
/// `p` fixes the dimension of triplet files whose last rows are empty.
pub fn read_precision<R: Read>(reader: R, p: Option<usize>) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("header: {e}")))?
        .iter()
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    let rows: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(e.to_string()))?;
    let m = if header == ["i", "j", "value"] {
        read_triplets(&rows, p)?
    } else {
        let dim = header.len();
        if rows.len() != dim {
            return Err(Error::Parse(format!(
                "dense precision file has {dim} columns but {} rows",
                rows.len()
            )));
        }
        let mut values = Vec::with_capacity(dim * dim);
        for (i, r) in rows.iter().enumerate() {
            for (j, field) in r.iter().enumerate() {
                values.push(parse_value(field, i + 1, j + 1)?);
            }
        }
        Matrix::from_row_major(dim, dim, values)?
    };
    if let Some(p) = p {
        if m.rows() != p {
            return Err(Error::Usage(format!(
                "precision matrix is {0} × {0} but the data have {p} columns",
                m.rows()
            )));
        }
    }
    Ok(m)
}

fn read_triplets(rows: &[csv::StringRecord], p: Option<usize>) -> Result<Matrix> {
    let mut entries = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        if r.len() != 3 {
            return Err(Error::Parse(format!("row {}: expected 3 fields", k + 1)));
        }
        let index = |f: &str| -> Result<usize> {
            match f.trim().parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i),
                _ => Err(Error::Parse(format!("row {}: bad index `{f}`", k + 1))),
            }
        };
        entries.push((index(&r[0])?, index(&r[1])?, parse_value(&r[2], k + 1, 3)?));
    }
    let dim = entries
        .iter()
        .map(|&(i, j, _)| i.max(j))
        .max()
        .unwrap_or(0)
        .max(p.unwrap_or(0));
    let mut m = Matrix::zeros(dim, dim);
    let mut seen = vec![false; dim * dim];
    for (i, j, v) in entries {
        let (i, j) = (i - 1, j - 1);
        for (a, b) in [(i, j), (j, i)] {
            if seen[a * dim + b] && m[(a, b)] != v {
                return Err(Error::Parse(format!(
                    "conflicting values for entry ({}, {})",
                    a + 1,
                    b + 1
                )));
            }
            seen[a * dim + b] = true;
            m[(a, b)] = v;
        }
    }
    Ok(m)
}

pub fn read_precision_file(path: &Path, p: Option<usize>) -> Result<Matrix> {
    read_precision(BufReader::new(open(path)?), p)
}

/// Dense layout with a header of column names.
pub fn write_precision<W: Write>(writer: W, q: &Matrix, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(names)?;
    for i in 0..q.rows() {
        w.write_record(q.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_precision_file(path: &Path, q: &Matrix, names: &[String]) -> Result<()> {
    write_precision(create(path)?, q, names)
}

/// Compact JSON layout with every float printed to 17 significant digits.
struct FixedDigits;

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serialises `value` as compact JSON with 17 significant digits per float
/// and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(to_json(value)?.as_bytes())
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut s = String::new();
    open(path)?
        .read_to_string(&mut s)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Penalty values recorded in a report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct PenaltyRecord {
    pub alpha_sparse: f64,
    pub alpha_dense: f64,
    pub beta: f64,
    pub beta_point: f64,
    pub scale_b: f64,
    pub scale_b_point: f64,
    pub psi: f64,
}

impl From<&PenaltyScheme> for PenaltyRecord {
    fn from(s: &PenaltyScheme) -> Self {
        Self {
            alpha_sparse: s.alpha_sparse(),
            alpha_dense: s.alpha_dense(),
            beta: s.beta(),
            beta_point: s.beta_point(),
            scale_b: s.scale_b(),
            scale_b_point: s.scale_b_point(),
            psi: s.psi(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct CollectiveRecord {
    pub s: usize,
    pub e: usize,
    #[serde(rename = "J")]
    pub subset: Vec<usize>,
    pub means: Vec<f64>,
    pub saving: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct PointRecord {
    pub t: usize,
    #[serde(rename = "J")]
    pub subset: Vec<usize>,
    pub saving: f64,
}

/// JSON anomaly report. Ground truth written by the simulator uses the same
/// layout with `penalties` set to `null`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct Report {
    pub n: usize,
    pub p: usize,
    #[serde(deserialize_with = "nullable")]
    pub penalties: Option<PenaltyRecord>,
    pub collective: Vec<CollectiveRecord>,
    pub points: Vec<PointRecord>,
    pub total_cost: f64,
}

fn nullable<'de, D: Deserializer<'de>, T: Deserialize<'de>>(d: D) -> std::result::Result<Option<T>, D::Error> {
    Option::deserialize(d)
}

impl Report {
    pub fn new(n: usize, p: usize, penalties: Option<&PenaltyScheme>, set: &AnomalySet) -> Self {
        Self {
            n,
            p,
            penalties: penalties.map(PenaltyRecord::from),
            collective: set
                .collective
                .iter()
                .map(|a| CollectiveRecord {
                    s: a.s,
                    e: a.e,
                    subset: a.subset.clone(),
                    means: a.mean.clone(),
                    saving: a.saving,
                })
                .collect(),
            points: set
                .points
                .iter()
                .map(|a| PointRecord {
                    t: a.t,
                    subset: a.subset.clone(),
                    saving: a.saving,
                })
                .collect(),
            total_cost: set.total_cost,
        }
    }

    pub fn anomalies(&self) -> AnomalySet {
        AnomalySet {
            collective: self
                .collective
                .iter()
                .map(|a| CollectiveAnomaly {
                    s: a.s,
                    e: a.e,
                    subset: a.subset.clone(),
                    mean: a.means.clone(),
                    saving: a.saving,
                })
                .collect(),
            points: self
                .points
                .iter()
                .map(|a| PointAnomaly {
                    t: a.t,
                    subset: a.subset.clone(),
                    saving: a.saving,
                })
                .collect(),
            total_cost: self.total_cost,
        }
    }
}
