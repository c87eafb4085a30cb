//! Row-aligned label matrix and metadata table.

use crate::error::{Error, Result};
use crate::taxonomy::TriState;

/// Standardized metadata column names.
pub mod columns {
    pub const PATIENT_ID: &str = "patientid";
    pub const VIEW: &str = "view";
    pub const OFFSET_DAY: &str = "offset_day_int";
    pub const HAS_MASKS: &str = "has_masks";
    pub const SOURCE_NAME: &str = "source_name";
    pub const SOURCE_INDEX: &str = "source_index";
}

/// Dense `num_samples x num_pathologies` matrix of tri-state labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<TriState>,
}

impl LabelMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<TriState>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "label matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(LabelMatrix { rows, cols, data })
    }

    pub fn from_rows(cols: usize, rows: Vec<Vec<TriState>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "label row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend(r);
        }
        Ok(LabelMatrix { rows: n, cols, data })
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> TriState {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[TriState] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<TriState> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// Numeric view with NaN for unknown.
    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).iter().map(|t| t.to_f64()).collect()).collect()
    }

    pub(crate) fn select_rows(&self, idxs: &[usize]) -> LabelMatrix {
        let mut data = Vec::with_capacity(idxs.len() * self.cols);
        for &i in idxs {
            data.extend_from_slice(self.row(i));
        }
        LabelMatrix { rows: idxs.len(), cols: self.cols, data }
    }

    /// Build a new matrix whose column `j` is `source[j]` of this matrix, or
    /// all-unknown when `None`.
    pub(crate) fn remap_columns(&self, source: &[Option<usize>]) -> LabelMatrix {
        let mut data = Vec::with_capacity(self.rows * source.len());
        for r in 0..self.rows {
            for s in source {
                data.push(s.map_or(TriState::Unknown, |c| self.get(r, c)));
            }
        }
        LabelMatrix { rows: self.rows, cols: source.len(), data }
    }

    pub(crate) fn vstack(parts: &[&LabelMatrix]) -> Result<LabelMatrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::InvalidArgument("label column counts differ".into()));
            }
            rows += m.rows;
            data.extend_from_slice(&m.data);
        }
        Ok(LabelMatrix { rows, cols, data })
    }
}

/// Metadata table: named columns, one row per sample, `None` marks a missing
/// cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MetaTable {
    columns: Vec<String>,
    rows: Vec<Vec<Option<String>>>,
}

impl MetaTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Option<String>>>) -> Result<Self> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(Error::InvalidArgument(format!("duplicate column `{c}`")));
            }
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(Error::InvalidArgument(format!(
                "metadata row {i} has {} cells, expected {}",
                r.len(),
                columns.len()
            )));
        }
        Ok(MetaTable { columns, rows })
    }

    /// An empty-column table with `n` rows.
    pub fn with_rows(n: usize) -> Self {
        MetaTable { columns: Vec::new(), rows: vec![Vec::new(); n] }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_index(name).is_some()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn get(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.column_index(column)?;
        self.rows[row][c].as_deref()
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<&str>>> {
        let c = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[c].as_deref()).collect())
    }

    pub fn row(&self, row: usize) -> Vec<(String, Option<String>)> {
        self.columns.iter().cloned().zip(self.rows[row].iter().cloned()).collect()
    }

    /// Add or replace a column.
    pub fn set_column(&mut self, name: &str, values: Vec<Option<String>>) -> Result<()> {
        if values.len() != self.rows.len() {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.rows.len()
            )));
        }
        match self.column_index(name) {
            Some(c) => {
                for (r, v) in self.rows.iter_mut().zip(values) {
                    r[c] = v;
                }
            }
            None => {
                self.columns.push(name.to_string());
                for (r, v) in self.rows.iter_mut().zip(values) {
                    r.push(v);
                }
            }
        }
        Ok(())
    }

    pub fn drop_column(&mut self, name: &str) {
        if let Some(c) = self.column_index(name) {
            self.columns.remove(c);
            for r in &mut self.rows {
                r.remove(c);
            }
        }
    }

    pub(crate) fn select_rows(&self, idxs: &[usize]) -> MetaTable {
        MetaTable {
            columns: self.columns.clone(),
            rows: idxs.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Row-concatenate tables, aligning columns by name. Columns appear in
    /// first-seen order; tables lacking a column get missing cells.
    pub(crate) fn concat(parts: &[&MetaTable]) -> MetaTable {
        let mut columns: Vec<String> = Vec::new();
        for t in parts {
            for c in &t.columns {
                if !columns.contains(c) {
                    columns.push(c.clone());
                }
            }
        }
        let mut rows = Vec::new();
        for t in parts {
            let map: Vec<Option<usize>> = columns.iter().map(|c| t.column_index(c)).collect();
            for r in &t.rows {
                rows.push(map.iter().map(|m| m.and_then(|i| r[i].clone())).collect());
            }
        }
        MetaTable { columns, rows }
    }
}
