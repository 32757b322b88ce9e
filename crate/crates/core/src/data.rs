//! Survival records, CSV ingestion and CSV emission.
//!
//! Ingestion is driven by a [`ColumnMapping`]: only mapped columns are read
//! and extra columns are ignored. Rows where a mapped field is empty, `NA`,
//! or non-finite are dropped and reported; any other unparseable mapped value
//! is a hard [`DataError::Parse`]. Row numbers count data rows from 1
//! (the header is row 0).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::cox::{CoxData, CoxError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("column '{0}' is mapped more than once")]
    DuplicateMapping(String),
    #[error("row {row}, column '{column}': cannot use value '{value}'")]
    Parse { row: usize, column: String, value: String },
    #[error("no usable rows remain after dropping {dropped} incomplete row(s)")]
    EmptyAfterFiltering { dropped: usize },
    #[error("true covariate values are not available")]
    NoTruth,
    #[error(transparent)]
    Cox(#[from] CoxError),
}

impl DataError {
    /// Schema problems (missing or clashing columns), as opposed to value problems.
    pub fn is_schema(&self) -> bool {
        matches!(self, DataError::MissingColumn(_) | DataError::DuplicateMapping(_))
    }
}

/// One subject: `(T̃, Δ, Z, U, X̃)` and, in simulations, the true `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub time: f64,
    pub event: bool,
    pub z: Vec<f64>,
    pub u: f64,
    pub x_tilde: f64,
    pub x_true: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<SurvivalRecord>,
    /// names of the adjustment covariates, in `z` order
    pub z_names: Vec<String>,
    pub covariate_name: String,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn p(&self) -> usize {
        self.z_names.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn u(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.u).collect()
    }

    pub fn x_tilde(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.x_tilde).collect()
    }

    /// True covariate, if every record carries it.
    pub fn x_true(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.x_true).collect()
    }

    pub fn censoring_rate(&self) -> f64 {
        self.records.iter().filter(|r| !r.event).count() as f64 / self.n() as f64
    }

    /// Cox design with rows `(Z_iᵀ, x_i)`.
    pub fn cox_data(&self, x: &[f64]) -> Result<CoxData, CoxError> {
        if x.len() != self.n() {
            return Err(CoxError::InvalidData(format!("{} covariate values for {} subjects", x.len(), self.n())));
        }
        let p = self.p();
        let cov = DMatrix::from_fn(self.n(), p + 1, |i, j| if j < p { self.records[i].z[j] } else { x[i] });
        CoxData::new(self.times(), self.events(), cov)
    }

    /// Parameter labels: the `z` names then the covariate name.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = self.z_names.clone();
        names.push(self.covariate_name.clone());
        names
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub time: String,
    pub event: String,
    pub covariate: String,
    pub confounder: String,
    pub adjust: Vec<String>,
    pub truth: Option<String>,
}

impl ColumnMapping {
    fn all(&self) -> Vec<&str> {
        let mut cols = vec![self.time.as_str(), self.event.as_str(), self.covariate.as_str(), self.confounder.as_str()];
        cols.extend(self.adjust.iter().map(String::as_str));
        cols.extend(self.truth.as_deref());
        cols
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let cols = self.all();
        for (k, c) in cols.iter().enumerate() {
            if cols[..k].contains(c) {
                return Err(DataError::DuplicateMapping(c.to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowRejection {
    pub row: usize,
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    pub rejected: Vec<RowRejection>,
}

/// Column positions resolved against a header.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn open(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
        Self::read(file)
    }

    pub fn column(&self, name: &str) -> Result<usize, DataError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }
}

enum Cell {
    Value(f64),
    Missing,
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

fn parse_cell(s: &str, row: usize, column: &str) -> Result<Cell, DataError> {
    if is_missing_token(s) {
        return Ok(Cell::Missing);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Cell::Value(v)),
        Ok(_) => Ok(Cell::Missing),
        Err(_) => Err(DataError::Parse { row, column: column.to_string(), value: s.to_string() }),
    }
}

/// One row of a `(time, event[, stratum])` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEventRow {
    pub time: f64,
    pub event: bool,
    pub stratum: Option<String>,
}

/// Reads the columns needed for Kaplan-Meier curves; no covariates required.
pub fn read_time_event<R: Read>(
    reader: R,
    time: &str,
    event: &str,
    stratum: Option<&str>,
) -> Result<(Vec<TimeEventRow>, Vec<RowRejection>), DataError> {
    let table = Table::read(reader)?;
    let (ti, ei) = (table.column(time)?, table.column(event)?);
    let si = stratum.map(|s| table.column(s)).transpose()?;
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for (k, rec) in table.rows.iter().enumerate() {
        let row = k + 1;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let t = parse_time(field(ti), row, time)?;
        let e = parse_event(field(ei), row, event)?;
        let s = si.map(|idx| field(idx).to_string());
        match (t, e) {
            (Some(time), Some(event)) if s.as_deref().is_none_or(|s| !is_missing_token(s)) => {
                rows.push(TimeEventRow { time, event, stratum: s });
            }
            (t, e) => {
                let (column, idx) = match (t, e) {
                    (None, _) => (time, ti),
                    (_, None) => (event, ei),
                    _ => (stratum.unwrap_or_default(), si.unwrap_or_default()),
                };
                rejected.push(RowRejection { row, column: column.into(), value: field(idx).into() });
            }
        }
    }
    if rows.is_empty() {
        return Err(DataError::EmptyAfterFiltering { dropped: rejected.len() });
    }
    Ok((rows, rejected))
}

fn parse_time(s: &str, row: usize, column: &str) -> Result<Option<f64>, DataError> {
    match parse_cell(s, row, column)? {
        Cell::Missing => Ok(None),
        Cell::Value(v) if v >= 0.0 => Ok(Some(v)),
        Cell::Value(_) => Err(DataError::Parse { row, column: column.into(), value: s.into() }),
    }
}

fn parse_event(s: &str, row: usize, column: &str) -> Result<Option<bool>, DataError> {
    match parse_cell(s, row, column)? {
        Cell::Missing => Ok(None),
        Cell::Value(v) if v == 0.0 => Ok(Some(false)),
        Cell::Value(v) if v == 1.0 => Ok(Some(true)),
        Cell::Value(_) => Err(DataError::Parse { row, column: column.into(), value: s.into() }),
    }
}

pub fn read_dataset<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<Ingested, DataError> {
    mapping.validate()?;
    let table = Table::read(reader)?;
    let ti = table.column(&mapping.time)?;
    let ei = table.column(&mapping.event)?;
    let xi = table.column(&mapping.covariate)?;
    let ui = table.column(&mapping.confounder)?;
    let zi = mapping.adjust.iter().map(|c| table.column(c)).collect::<Result<Vec<_>, _>>()?;
    let truth = mapping.truth.as_deref().map(|c| table.column(c)).transpose()?;

    let mut records = Vec::with_capacity(table.rows.len());
    let mut rejected = Vec::new();
    'rows: for (k, rec) in table.rows.iter().enumerate() {
        let row = k + 1;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let mut reject = |column: &str, idx: usize| {
            rejected.push(RowRejection { row, column: column.to_string(), value: field(idx).to_string() });
        };

        let Some(time) = parse_time(field(ti), row, &mapping.time)? else {
            reject(&mapping.time, ti);
            continue;
        };
        let Some(event) = parse_event(field(ei), row, &mapping.event)? else {
            reject(&mapping.event, ei);
            continue;
        };
        let numeric = |idx: usize, name: &str| -> Result<Option<f64>, DataError> {
            Ok(match parse_cell(field(idx), row, name)? {
                Cell::Value(v) => Some(v),
                Cell::Missing => None,
            })
        };
        let x_tilde = numeric(xi, &mapping.covariate)?;
        let u = numeric(ui, &mapping.confounder)?;
        let mut z = Vec::with_capacity(zi.len());
        for (c, &idx) in mapping.adjust.iter().zip(&zi) {
            match numeric(idx, c)? {
                Some(v) => z.push(v),
                None => {
                    reject(c, idx);
                    continue 'rows;
                }
            }
        }
        let x_true = match (truth, mapping.truth.as_deref()) {
            (Some(idx), Some(name)) => match numeric(idx, name)? {
                Some(v) => Some(v),
                None => {
                    reject(name, idx);
                    continue;
                }
            },
            _ => None,
        };
        let (Some(x_tilde), Some(u)) = (x_tilde, u) else {
            let (col, idx) = if x_tilde.is_none() { (&mapping.covariate, xi) } else { (&mapping.confounder, ui) };
            reject(col, idx);
            continue;
        };
        records.push(SurvivalRecord { time, event, z, u, x_tilde, x_true });
    }
    if records.is_empty() {
        return Err(DataError::EmptyAfterFiltering { dropped: rejected.len() });
    }
    Ok(Ingested {
        dataset: Dataset { records, z_names: mapping.adjust.clone(), covariate_name: mapping.covariate.clone() },
        rejected,
    })
}

pub fn ingest_csv(path: &Path, mapping: &ColumnMapping) -> Result<Ingested, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    read_dataset(file, mapping)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes `time,event,<z names>,u,<covariate>[,<covariate>_true]`.
pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let has_truth = dataset.x_true().is_some();
    let mut header = vec!["time".to_string(), "event".to_string()];
    header.extend(dataset.z_names.iter().cloned());
    header.push("u".into());
    header.push(dataset.covariate_name.clone());
    if has_truth {
        header.push(format!("{}_true", dataset.covariate_name));
    }
    w.write_record(&header)?;
    for r in &dataset.records {
        let mut row = vec![fmt17(r.time), u8::from(r.event).to_string()];
        row.extend(r.z.iter().map(|&v| fmt17(v)));
        row.push(fmt17(r.u));
        row.push(fmt17(r.x_tilde));
        if let (true, Some(x)) = (has_truth, r.x_true) {
            row.push(fmt17(x));
        }
        w.write_record(&row)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> ColumnMapping {
        ColumnMapping {
            time: "t".into(),
            event: "d".into(),
            covariate: "wgt".into(),
            confounder: "diam".into(),
            adjust: vec!["age".into()],
            truth: None,
        }
    }

    const FIVE_ROWS: &str = "t,d,age,diam,wgt,extra\n\
        1.5,1,3,2.1,0.8,x\n\
        2.0,0,4,3.3,1.1,y\n\
        0.7,1,5,4.0,0.9,z\n\
        3.1,1,2,5.2,1.3,w\n\
        4.4,0,6,2.9,1.0,v\n";

    #[test]
    fn reads_well_formed_file_ignoring_extras() {
        let ing = read_dataset(FIVE_ROWS.as_bytes(), &mapping()).unwrap();
        assert_eq!(ing.dataset.n(), 5);
        assert!(ing.rejected.is_empty());
        assert_eq!(ing.dataset.records[2].z, vec![5.0]);
        assert_eq!(ing.dataset.parameter_names(), vec!["age", "wgt"]);
    }

    #[test]
    fn bad_event_value_names_row_and_column() {
        let text = FIVE_ROWS.replace("0.7,1,5", "0.7,2,5");
        match read_dataset(text.as_bytes(), &mapping()) {
            Err(DataError::Parse { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "d", "2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = FIVE_ROWS.replace("t,d,", "time,d,");
        let err = read_dataset(text.as_bytes(), &mapping()).unwrap_err();
        assert!(err.is_schema());
        assert!(matches!(err, DataError::MissingColumn(c) if c == "t"));
    }

    #[test]
    fn incomplete_rows_are_dropped_with_diagnostics() {
        let text = FIVE_ROWS.replace("2.0,0,4,3.3,1.1", "2.0,0,4,NA,1.1").replace("3.1,1,2,5.2,1.3", "3.1,1,,5.2,1.3");
        let ing = read_dataset(text.as_bytes(), &mapping()).unwrap();
        assert_eq!(ing.dataset.n(), 3);
        let rows: Vec<usize> = ing.rejected.iter().map(|r| r.row).collect();
        assert_eq!(rows, vec![2, 4]);
        assert_eq!(ing.rejected[0].column, "diam");
        assert_eq!(ing.rejected[1].column, "age");
    }

    #[test]
    fn all_rows_dropped() {
        let text = "t,d,age,diam,wgt\n1,1,2,,1\n";
        assert!(matches!(read_dataset(text.as_bytes(), &mapping()), Err(DataError::EmptyAfterFiltering { dropped: 1 })));
    }

    #[test]
    fn duplicate_mapping_rejected() {
        let mut m = mapping();
        m.confounder = "wgt".into();
        assert!(matches!(read_dataset(FIVE_ROWS.as_bytes(), &m), Err(DataError::DuplicateMapping(_))));
    }

    #[test]
    fn written_dataset_reads_back_exactly() {
        let mut m = mapping();
        m.truth = Some("wgt_true".into());
        let ds = Dataset {
            records: vec![
                SurvivalRecord { time: 0.1 + 0.2, event: true, z: vec![1.0 / 3.0], u: 2.5, x_tilde: 0.7, x_true: Some(std::f64::consts::PI) },
                SurvivalRecord { time: 1e-7, event: false, z: vec![-2.0], u: 5.9, x_tilde: 1.3, x_true: Some(0.0) },
            ],
            z_names: vec!["age".into()],
            covariate_name: "wgt".into(),
        };
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("time,event,age,u,", "t,d,age,diam,");
        let back = read_dataset(text.as_bytes(), &m).unwrap().dataset;
        assert_eq!(back, ds);
    }
}
