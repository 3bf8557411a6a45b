//! Named feature vectors and the subject-by-feature table used for learning.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("duplicate feature name {0:?}")]
    DuplicateName(String),
    #[error("duplicate subject id {0:?}")]
    DuplicateSubject(String),
    #[error("row {row} has {got} values, expected {want}")]
    RowLength { row: usize, got: usize, want: usize },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("label column {0:?} not found")]
    MissingLabelColumn(String),
    #[error("invalid value {value:?} in row {row}, column {column:?}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            names: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.names.push(name.into());
        self.values.push(value);
    }

    pub fn extend(&mut self, other: FeatureVector) {
        self.names.extend(other.names);
        self.values.extend(other.values);
    }

    /// Prefixes every name with `prefix-`.
    pub fn prefixed(mut self, prefix: &str) -> Self {
        for n in &mut self.names {
            *n = format!("{prefix}-{n}");
        }
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn names_unique(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.names.len());
        self.names.iter().all(|n| seen.insert(n.as_str()))
    }
}

/// Which source a feature column comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    /// Lobe-wise opacity quantification.
    Hlq,
    /// Filtered whole-lung radiomics.
    Wlr,
    /// Demographic, vital-sign and blood-test features.
    Dvb,
}

impl FeatureGroup {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HLQ" => Some(FeatureGroup::Hlq),
            "WLR" => Some(FeatureGroup::Wlr),
            "DVB" => Some(FeatureGroup::Dvb),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Hlq => "HLQ",
            FeatureGroup::Wlr => "WLR",
            FeatureGroup::Dvb => "DVB",
        }
    }
}

/// Rows are subjects, columns are named features tagged with a group.
/// Missing cells are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub subjects: Vec<String>,
    pub names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    /// Row-major, `subjects.len() x names.len()`.
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, groups: Vec<FeatureGroup>) -> Result<Self, TableError> {
        assert_eq!(names.len(), groups.len());
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(TableError::DuplicateName(n.clone()));
            }
        }
        Ok(Self {
            subjects: Vec::new(),
            names,
            groups,
            values: Vec::new(),
            labels: Vec::new(),
        })
    }

    pub fn push_row(&mut self, subject: String, row: &[f64], label: u8) -> Result<(), TableError> {
        if row.len() != self.names.len() {
            return Err(TableError::RowLength {
                row: self.subjects.len(),
                got: row.len(),
                want: self.names.len(),
            });
        }
        if self.subjects.contains(&subject) {
            return Err(TableError::DuplicateSubject(subject));
        }
        self.subjects.push(subject);
        self.values.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[r * d..(r + 1) * d]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_cols() + c]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Columns whose group is in `groups`, in table order.
    pub fn columns_in_groups(&self, groups: &[FeatureGroup]) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&c| groups.contains(&self.groups[c]))
            .collect()
    }

    /// A table restricted to `cols` (in the given order).
    pub fn select_columns(&self, cols: &[usize]) -> FeatureTable {
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        FeatureTable {
            subjects: self.subjects.clone(),
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            groups: cols.iter().map(|&c| self.groups[c]).collect(),
            values,
            labels: self.labels.clone(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureTable {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureTable {
            subjects: rows.iter().map(|&r| self.subjects[r].clone()).collect(),
            names: self.names.clone(),
            groups: self.groups.clone(),
            values,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Joins columns of `other` (matched by subject id) onto this table.
    pub fn join_columns(&self, other: &FeatureTable) -> Result<FeatureTable, TableError> {
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut groups = self.groups.clone();
        groups.extend(other.groups.iter().copied());
        let mut out = FeatureTable::new(names, groups)?;
        for (r, s) in self.subjects.iter().enumerate() {
            let mut row = self.row(r).to_vec();
            match other.subjects.iter().position(|o| o == s) {
                Some(o) => row.extend_from_slice(other.row(o)),
                None => row.extend(std::iter::repeat_n(f64::NAN, other.n_cols())),
            }
            out.push_row(s.clone(), &row, self.labels[r])?;
        }
        Ok(out)
    }

    /// CSV with header `subject,label,<names...>`, preceded by `#` comment
    /// lines: one `# groups:` line naming each column's group, plus any
    /// caller-supplied metadata lines.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[String]) -> Result<(), TableError> {
        for m in metadata {
            writeln!(w, "# {m}")?;
        }
        let groups: Vec<&str> = self.groups.iter().map(|g| g.as_str()).collect();
        writeln!(w, "# groups:{}", groups.join(","))?;
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["subject".to_string(), "label".to_string()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut rec = vec![self.subjects[r].clone(), self.labels[r].to_string()];
            rec.extend(self.row(r).iter().map(|v| {
                if v.is_nan() {
                    String::new()
                } else {
                    format!("{v:?}")
                }
            }));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<FeatureTable, TableError> {
        let mut text = String::new();
        let mut r = r;
        r.read_to_string(&mut text)?;
        let groups_line = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix("# groups:").map(str::to_string));
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = rd.headers()?.clone();
        if header.get(1) != Some("label") {
            return Err(TableError::MissingLabelColumn("label".into()));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let groups: Vec<FeatureGroup> = match groups_line {
            Some(g) if !g.is_empty() => g
                .split(',')
                .map(|s| FeatureGroup::parse(s).unwrap_or(FeatureGroup::Wlr))
                .collect(),
            _ => vec![FeatureGroup::Wlr; names.len()],
        };
        if groups.len() != names.len() {
            return Err(TableError::RowLength {
                row: 0,
                got: groups.len(),
                want: names.len(),
            });
        }
        let mut t = FeatureTable::new(names, groups)?;
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |column: &str, value: &str| TableError::BadValue {
                row,
                column: column.to_string(),
                value: value.to_string(),
            };
            let label: u8 = rec
                .get(1)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| bad("label", rec.get(1).unwrap_or_default()))?;
            let mut vals = Vec::with_capacity(t.n_cols());
            for (c, cell) in rec.iter().skip(2).enumerate() {
                let cell = cell.trim();
                vals.push(if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse().map_err(|_| bad(&t.names[c], cell))?
                });
            }
            t.push_row(rec.get(0).unwrap_or_default().to_string(), &vals, label)?;
        }
        Ok(t)
    }
}
