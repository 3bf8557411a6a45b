//! Demographic, vital-sign and blood-test (DVB) features: CSV ingestion with
//! a per-site column mapping, L/W ratio derivation and mean imputation.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureGroup, FeatureTable, TableError};

#[derive(Debug, Error)]
pub enum ClinicalError {
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("id column {0:?} not found in header")]
    MissingIdColumn(String),
    #[error("row {row}, column {column}: value {value} out of range")]
    RangeViolation {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate subject id {0:?}")]
    DuplicateSubjectId(String),
    #[error("column {0} has no present value among the fit subjects")]
    AllMissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Table(#[from] TableError),
}

pub type Result<T> = std::result::Result<T, ClinicalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClinicalColumn {
    Age,
    Sex,
    Wbc,
    Lym,
    LymRatio,
    Temperature,
    Spo2,
}

impl ClinicalColumn {
    pub const ALL: [ClinicalColumn; 7] = [
        ClinicalColumn::Age,
        ClinicalColumn::Sex,
        ClinicalColumn::Wbc,
        ClinicalColumn::Lym,
        ClinicalColumn::LymRatio,
        ClinicalColumn::Temperature,
        ClinicalColumn::Spo2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClinicalColumn::Age => "Age",
            ClinicalColumn::Sex => "Gender",
            ClinicalColumn::Wbc => "WBC",
            ClinicalColumn::Lym => "Lym count",
            ClinicalColumn::LymRatio => "L/W ratio",
            ClinicalColumn::Temperature => "Temperature",
            ClinicalColumn::Spo2 => "SpO2",
        }
    }

    fn in_range(self, x: f64) -> bool {
        match self {
            ClinicalColumn::Age => x > 0.0,
            ClinicalColumn::Sex => x == 0.0 || x == 1.0,
            ClinicalColumn::Wbc | ClinicalColumn::Lym => x >= 0.0,
            ClinicalColumn::LymRatio | ClinicalColumn::Spo2 => (0.0..=100.0).contains(&x),
            ClinicalColumn::Temperature => x > 30.0 && x < 45.0,
        }
    }
}

/// Maps site-specific CSV headers onto canonical columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalSchema {
    pub id_column: String,
    pub label_column: String,
    /// File header -> canonical column.
    pub columns: BTreeMap<String, ClinicalColumn>,
}

impl ClinicalSchema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }

    fn with(cols: &[(&str, ClinicalColumn)]) -> Self {
        Self {
            id_column: "id".into(),
            label_column: "icu".into(),
            columns: cols.iter().map(|(h, c)| (h.to_string(), *c)).collect(),
        }
    }

    /// Site A: every DVB column.
    pub fn site_a() -> Self {
        use ClinicalColumn::*;
        Self::with(&[
            ("age", Age),
            ("sex", Sex),
            ("wbc", Wbc),
            ("lym", Lym),
            ("lym_ratio", LymRatio),
            ("temperature", Temperature),
            ("spo2", Spo2),
        ])
    }

    /// Site B: demographics and blood counts.
    pub fn site_b() -> Self {
        use ClinicalColumn::*;
        Self::with(&[
            ("age", Age),
            ("sex", Sex),
            ("wbc", Wbc),
            ("lym", Lym),
            ("lym_ratio", LymRatio),
        ])
    }

    /// Site C: demographics and vitals.
    pub fn site_c() -> Self {
        use ClinicalColumn::*;
        Self::with(&[
            ("age", Age),
            ("sex", Sex),
            ("temperature", Temperature),
            ("spo2", Spo2),
        ])
    }
}

/// Typed clinical table. `cells` is row-major over `columns`; `None` is a
/// missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalTable {
    pub subjects: Vec<String>,
    pub columns: Vec<ClinicalColumn>,
    pub cells: Vec<Option<f64>>,
    pub labels: Vec<u8>,
}

fn parse_sex(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "m" | "male" | "1" => Some(1.0),
        "f" | "female" | "0" => Some(0.0),
        _ => None,
    }
}

fn parse_label(s: &str) -> Option<u8> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "yes" | "true" => Some(1),
        "0" | "no" | "false" => Some(0),
        _ => None,
    }
}

pub fn parse_clinical_csv(path: impl AsRef<Path>, schema: &ClinicalSchema) -> Result<ClinicalTable> {
    parse_clinical_reader(File::open(path)?, schema)
}

/// Parses CSV text; empty cells are missing, unmapped headers are ignored
/// with a warning. Columns keep canonical order.
pub fn parse_clinical_reader<R: Read>(r: R, schema: &ClinicalSchema) -> Result<ClinicalTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let pos = |name: &str| header.iter().position(|h| h == name);
    let id_at = pos(&schema.id_column).ok_or_else(|| ClinicalError::MissingIdColumn(schema.id_column.clone()))?;
    let label_at = pos(&schema.label_column)
        .ok_or_else(|| ClinicalError::MissingLabelColumn(schema.label_column.clone()))?;
    let mut mapped: Vec<(ClinicalColumn, usize)> = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if i == id_at || i == label_at {
            continue;
        }
        match schema.columns.get(h) {
            Some(&c) => mapped.push((c, i)),
            None => log::warn!("ignoring unmapped clinical column {h:?}"),
        }
    }
    mapped.sort();
    let columns: Vec<ClinicalColumn> = mapped.iter().map(|m| m.0).collect();

    let mut table = ClinicalTable {
        subjects: Vec::new(),
        columns,
        cells: Vec::new(),
        labels: Vec::new(),
    };
    let mut seen = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let id = field(id_at).to_string();
        if !seen.insert(id.clone()) {
            return Err(ClinicalError::DuplicateSubjectId(id));
        }
        let label_raw = field(label_at);
        let label = parse_label(label_raw).ok_or_else(|| ClinicalError::BadValue {
            row,
            column: schema.label_column.clone(),
            value: label_raw.to_string(),
        })?;
        for &(c, i) in &mapped {
            let raw = field(i);
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                table.cells.push(None);
                continue;
            }
            let parsed = if c == ClinicalColumn::Sex {
                parse_sex(raw)
            } else {
                raw.parse::<f64>().ok().filter(|x| x.is_finite())
            };
            let x = parsed.ok_or_else(|| ClinicalError::BadValue {
                row,
                column: header[i].clone(),
                value: raw.to_string(),
            })?;
            if !c.in_range(x) {
                return Err(ClinicalError::RangeViolation {
                    row,
                    column: header[i].clone(),
                    value: x,
                });
            }
            table.cells.push(Some(x));
        }
        table.subjects.push(id);
        table.labels.push(label);
    }
    Ok(table)
}

impl ClinicalTable {
    pub fn n_rows(&self) -> usize {
        self.subjects.len()
    }

    pub fn column_index(&self, c: ClinicalColumn) -> Option<usize> {
        self.columns.iter().position(|&x| x == c)
    }

    pub fn get(&self, row: usize, c: ClinicalColumn) -> Option<f64> {
        let j = self.column_index(c)?;
        self.cells[row * self.columns.len() + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.cells.iter().skip(j).step_by(self.columns.len()).copied()
    }

    pub fn has_missing(&self) -> bool {
        self.cells.iter().any(Option::is_none)
    }

    /// Fills a missing L/W ratio with `100 * lym / wbc` when both are present
    /// and `wbc > 0`.
    pub fn derive_lw_ratio(&self) -> ClinicalTable {
        let mut out = self.clone();
        let (Some(r), Some(l), Some(w)) = (
            self.column_index(ClinicalColumn::LymRatio),
            self.column_index(ClinicalColumn::Lym),
            self.column_index(ClinicalColumn::Wbc),
        ) else {
            return out;
        };
        let nc = self.columns.len();
        for row in 0..self.n_rows() {
            let c = &self.cells[row * nc..(row + 1) * nc];
            if let (None, Some(lym), Some(wbc)) = (c[r], c[l], c[w]) {
                if wbc > 0.0 {
                    out.cells[row * nc + r] = Some(100.0 * lym / wbc);
                }
            }
        }
        out
    }

    /// Per-column mean of present values over `fit_rows`, summed in row
    /// order.
    pub fn column_means(&self, fit_rows: &[usize]) -> Result<Vec<f64>> {
        let nc = self.columns.len();
        (0..nc)
            .map(|j| {
                let mut sum = 0.0;
                let mut n = 0usize;
                for &r in fit_rows {
                    if let Some(x) = self.cells[r * nc + j] {
                        sum += x;
                        n += 1;
                    }
                }
                if n == 0 {
                    Err(ClinicalError::AllMissingColumn(self.columns[j].name().into()))
                } else {
                    Ok(sum / n as f64)
                }
            })
            .collect()
    }

    /// Replaces every missing cell with the column mean over `fit_rows`.
    /// Present cells are untouched.
    pub fn impute_means(&self, fit_rows: &[usize]) -> Result<ClinicalTable> {
        let means = self.column_means(fit_rows)?;
        Ok(self.impute_with(&means))
    }

    pub fn impute_with(&self, means: &[f64]) -> ClinicalTable {
        let nc = self.columns.len();
        let mut out = self.clone();
        for (i, cell) in out.cells.iter_mut().enumerate() {
            if cell.is_none() {
                *cell = Some(means[i % nc]);
            }
        }
        out
    }

    /// Drops columns without a single present value.
    pub fn drop_absent_columns(&self) -> ClinicalTable {
        let keep: Vec<usize> = (0..self.columns.len())
            .filter(|&j| self.column(j).any(|c| c.is_some()))
            .collect();
        let nc = self.columns.len();
        let mut cells = Vec::with_capacity(self.n_rows() * keep.len());
        for r in 0..self.n_rows() {
            cells.extend(keep.iter().map(|&j| self.cells[r * nc + j]));
        }
        ClinicalTable {
            subjects: self.subjects.clone(),
            columns: keep.iter().map(|&j| self.columns[j]).collect(),
            cells,
            labels: self.labels.clone(),
        }
    }

    /// DVB feature table; missing cells become NaN.
    pub fn to_feature_table(&self) -> Result<FeatureTable> {
        let names: Vec<String> = self.columns.iter().map(|c| c.name().to_string()).collect();
        let groups = vec![FeatureGroup::Dvb; names.len()];
        let mut t = FeatureTable::new(names, groups)?;
        let nc = self.columns.len();
        for r in 0..self.n_rows() {
            let row: Vec<f64> = self.cells[r * nc..(r + 1) * nc]
                .iter()
                .map(|c| c.unwrap_or(f64::NAN))
                .collect();
            t.push_row(self.subjects[r].clone(), &row, self.labels[r])?;
        }
        Ok(t)
    }
}
