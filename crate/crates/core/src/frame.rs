//! Columnar tables, CSV ingestion and the preprocessing recipe
//! (one-hot encoding, mean imputation, above/below-mean labels, splits).
//!
//! Every operation returns a new [`Frame`]; inputs are never mutated.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Level used by [`Frame::one_hot`] for missing categorical entries.
pub const MISSING_LEVEL: &str = "__missing__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Binary,
}

impl ColumnKind {
    fn name(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    /// Numeric and binary columns; missing slots hold NaN.
    Numeric(Vec<f64>),
    /// Missing slots hold the empty string.
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    kind: ColumnKind,
    data: ColumnData,
    missing: Vec<bool>,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        Column {
            name: name.into(),
            kind: ColumnKind::Numeric,
            data: ColumnData::Numeric(values),
            missing,
        }
    }

    /// Values must be 0 or 1 (NaN marks missing); checked by [`Frame::new`].
    pub fn binary(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            kind: ColumnKind::Binary,
            ..Column::numeric(name, values)
        }
    }

    /// `None` entries are missing.
    pub fn categorical(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        let missing = values.iter().map(Option::is_none).collect();
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical,
            data: ColumnData::Categorical(values.into_iter().map(Option::unwrap_or_default).collect()),
            missing,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    fn take(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
        };
        Column {
            name: self.name.clone(),
            kind: self.kind,
            data,
            missing: rows.iter().map(|&r| self.missing[r]).collect(),
        }
    }

    fn cell(&self, row: usize) -> String {
        if self.missing[row] {
            return String::new();
        }
        match &self.data {
            ColumnData::Numeric(v) => format!("{}", v[row]),
            ColumnData::Categorical(v) => v[row].clone(),
        }
    }
}

/// Source column, target column and direction of a mean-threshold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRule {
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub comparator: Comparator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    /// 1 where the value is strictly above the column mean.
    #[default]
    AboveMean,
    /// 1 where the value is strictly below the column mean.
    BelowMean,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    columns: Vec<Column>,
    n_rows: usize,
}

/// `ceil(n * fraction)` that does not round `0.7 * 10` up to 8.
pub(crate) fn ceil_fraction(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

impl Frame {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        let mut names = BTreeSet::new();
        for col in &columns {
            if !names.insert(col.name.as_str()) {
                return Err(Error::DuplicateColumn(col.name.clone()));
            }
            if col.len() != n_rows {
                return Err(Error::DimensionMismatch(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    col.name,
                    col.len()
                )));
            }
            if let (ColumnKind::Binary, ColumnData::Numeric(v)) = (col.kind, &col.data) {
                for (row, x) in v.iter().enumerate() {
                    if !col.missing[row] && *x != 0.0 && *x != 1.0 {
                        return Err(Error::TypeConflict {
                            column: col.name.clone(),
                            row,
                            value: x.to_string(),
                            kind: "binary".into(),
                        });
                    }
                }
            }
            let consistent = matches!(
                (col.kind, &col.data),
                (ColumnKind::Categorical, ColumnData::Categorical(_))
                    | (ColumnKind::Numeric | ColumnKind::Binary, ColumnData::Numeric(_))
            );
            if !consistent {
                return Err(Error::Kind {
                    column: col.name.clone(),
                    found: col.kind.name().into(),
                    expected: "storage matching the declared kind".into(),
                });
            }
        }
        Ok(Frame { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.position(name)?])
    }

    /// Values of a numeric or binary column, NaN where missing.
    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        let col = self.column(name)?;
        match &col.data {
            ColumnData::Numeric(v) => Ok(v),
            ColumnData::Categorical(_) => Err(Error::Kind {
                column: name.to_string(),
                found: "categorical".into(),
                expected: "numeric or binary".into(),
            }),
        }
    }

    /// Like [`numeric`](Self::numeric) but rejects missing entries.
    pub fn complete(&self, name: &str) -> Result<&[f64]> {
        let values = self.numeric(name)?;
        if self.column(name)?.has_missing() {
            return Err(Error::MissingData(name.to_string()));
        }
        Ok(values)
    }

    /// Binary column without missing entries.
    pub fn binary(&self, name: &str) -> Result<&[f64]> {
        let col = self.column(name)?;
        if col.kind != ColumnKind::Binary {
            return Err(Error::Kind {
                column: name.to_string(),
                found: col.kind.name().into(),
                expected: "binary".into(),
            });
        }
        self.complete(name)
    }

    /// Append `column`, or replace the column of the same name in place.
    pub fn with_column(&self, column: Column) -> Result<Frame> {
        let mut columns = self.columns.clone();
        match columns.iter().position(|c| c.name == column.name) {
            Some(i) => columns[i] = column,
            None => columns.push(column),
        }
        Frame::new(columns)
    }

    pub fn without_column(&self, name: &str) -> Result<Frame> {
        let i = self.position(name)?;
        let mut columns = self.columns.clone();
        columns.remove(i);
        let n_rows = if columns.is_empty() { 0 } else { self.n_rows };
        Ok(Frame { columns, n_rows })
    }

    /// Rows in the given order (repeats allowed).
    pub fn take_rows(&self, rows: &[usize]) -> Frame {
        Frame {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn read_csv<R: Read>(reader: R, schema: Option<&BTreeMap<String, ColumnKind>>) -> Result<Frame> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::Csv("missing header row".into()));
        }
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            if record.len() != headers.len() {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: headers.len(),
                    found: record.len(),
                });
            }
            for (j, field) in record.iter().enumerate() {
                cells[j].push(field.trim().to_string());
            }
        }
        if let Some(schema) = schema {
            if let Some(name) = schema.keys().find(|k| !headers.contains(k)) {
                return Err(Error::UnknownColumn(name.clone()));
            }
        }
        let columns = headers
            .iter()
            .zip(cells)
            .map(|(name, raw)| build_column(name, raw, schema.and_then(|s| s.get(name)).copied()))
            .collect::<Result<Vec<_>>>()?;
        Frame::new(columns)
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: Option<&BTreeMap<String, ColumnKind>>) -> Result<Frame> {
        let file = std::fs::File::open(path)?;
        Frame::read_csv(std::io::BufReader::new(file), schema)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        wtr.write_record(self.column_names()).map_err(csv_err)?;
        for row in 0..self.n_rows {
            wtr.write_record(self.columns.iter().map(|c| c.cell(row)))
                .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Replace categorical `name` by one binary column per level
    /// (`name=<level>`, levels sorted), inserted where `name` stood.
    pub fn one_hot(&self, name: &str) -> Result<Frame> {
        let pos = self.position(name)?;
        let col = &self.columns[pos];
        let ColumnData::Categorical(values) = &col.data else {
            return Err(Error::Kind {
                column: name.to_string(),
                found: col.kind.name().into(),
                expected: "categorical".into(),
            });
        };
        let level_of = |row: usize| -> &str {
            if col.missing[row] {
                MISSING_LEVEL
            } else {
                &values[row]
            }
        };
        let levels: BTreeSet<&str> = (0..self.n_rows).map(level_of).collect();
        let encoded = levels.iter().map(|level| {
            let v = (0..self.n_rows)
                .map(|r| if level_of(r) == *level { 1.0 } else { 0.0 })
                .collect();
            Column::binary(format!("{name}={level}"), v)
        });
        let mut columns = self.columns[..pos].to_vec();
        columns.extend(encoded);
        columns.extend_from_slice(&self.columns[pos + 1..]);
        Frame::new(columns)
    }

    /// Replace missing entries of a numeric/binary column by the mean of the
    /// observed ones. A binary column whose mean is fractional becomes numeric.
    pub fn impute_mean(&self, name: &str) -> Result<Imputed> {
        let pos = self.position(name)?;
        let col = &self.columns[pos];
        let ColumnData::Numeric(values) = &col.data else {
            return Err(Error::Kind {
                column: name.to_string(),
                found: "categorical".into(),
                expected: "numeric or binary".into(),
            });
        };
        let observed: Vec<f64> = values
            .iter()
            .zip(&col.missing)
            .filter(|(_, &m)| !m)
            .map(|(v, _)| *v)
            .collect();
        let all_missing = observed.is_empty() && !values.is_empty();
        let fill = if observed.is_empty() {
            0.0
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        let filled: Vec<f64> = values
            .iter()
            .zip(&col.missing)
            .map(|(v, &m)| if m { fill } else { *v })
            .collect();
        let kind = if col.kind == ColumnKind::Binary && col.has_missing() && fill != 0.0 && fill != 1.0 {
            ColumnKind::Numeric
        } else {
            col.kind
        };
        let mut columns = self.columns.clone();
        columns[pos] = Column {
            name: col.name.clone(),
            kind,
            missing: vec![false; filled.len()],
            data: ColumnData::Numeric(filled),
        };
        Ok(Imputed {
            frame: Frame::new(columns)?,
            all_missing,
        })
    }

    /// Add (or overwrite) the binary target of `rule`.
    pub fn derive_binary_label(&self, rule: &LabelRule) -> Result<Frame> {
        let values = self.complete(&rule.source)?;
        if values.is_empty() {
            return Err(Error::EmptyFrame);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let label: Vec<f64> = values
            .iter()
            .map(|&v| {
                let hit = match rule.comparator {
                    Comparator::AboveMean => v > mean,
                    Comparator::BelowMean => v < mean,
                };
                if hit {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        self.with_column(Column::binary(rule.target.clone(), label))
    }

    /// Seeded shuffle split; the first part has exactly `ceil(n * train_fraction)`
    /// rows. Both parts keep the original row order.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Frame, Frame)> {
        let (train, test) = self.split_indices(train_fraction, seed)?;
        Ok((self.take_rows(&train), self.take_rows(&test)))
    }

    pub fn split_indices(&self, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        if self.n_rows == 0 {
            return Err(Error::EmptyFrame);
        }
        Ok(shuffled_partition(self.n_rows, train_fraction, seed))
    }

    /// Copy of `name` under a new name (used to derive placebo or perturbed columns).
    pub fn column_renamed(&self, name: &str, new_name: &str) -> Result<Column> {
        Ok(self.column(name)?.clone().renamed(new_name))
    }
}

pub(crate) fn shuffled_partition(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let k = ceil_fraction(n, fraction).min(n);
    let mut first = order[..k].to_vec();
    let mut second = order[k..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Result of [`Frame::impute_mean`].
#[derive(Debug, Clone, PartialEq)]
pub struct Imputed {
    pub frame: Frame,
    /// Every entry was missing, so zeros were written.
    pub all_missing: bool,
}

fn build_column(name: &str, raw: Vec<String>, kind: Option<ColumnKind>) -> Result<Column> {
    let missing: Vec<bool> = raw.iter().map(String::is_empty).collect();
    let parsed: Vec<Option<f64>> = raw
        .iter()
        .map(|s| if s.is_empty() { Some(f64::NAN) } else { s.parse::<f64>().ok() })
        .collect();
    let all_numeric = parsed.iter().all(Option::is_some);
    let all_binary = all_numeric
        && parsed
            .iter()
            .zip(&missing)
            .all(|(v, &m)| m || matches!(v, Some(x) if *x == 0.0 || *x == 1.0));
    let any_present = missing.iter().any(|m| !m);
    let kind = kind.unwrap_or(if all_binary && any_present {
        ColumnKind::Binary
    } else if all_numeric {
        ColumnKind::Numeric
    } else {
        ColumnKind::Categorical
    });
    match kind {
        ColumnKind::Categorical => Ok(Column {
            name: name.to_string(),
            kind,
            data: ColumnData::Categorical(raw),
            missing,
        }),
        ColumnKind::Numeric | ColumnKind::Binary => {
            let mut values = Vec::with_capacity(raw.len());
            for (row, (v, text)) in parsed.iter().zip(&raw).enumerate() {
                let ok = match (kind, v) {
                    (_, None) => None,
                    (ColumnKind::Binary, Some(x)) if !missing[row] && *x != 0.0 && *x != 1.0 => None,
                    (_, Some(x)) => Some(*x),
                };
                match ok {
                    Some(x) => values.push(x),
                    None => {
                        return Err(Error::TypeConflict {
                            column: name.to_string(),
                            row: row + 1,
                            value: text.clone(),
                            kind: kind.name().into(),
                        })
                    }
                }
            }
            Ok(Column {
                name: name.to_string(),
                kind,
                data: ColumnData::Numeric(values),
                missing,
            })
        }
    }
}
