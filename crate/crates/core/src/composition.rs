//! Dataset algebra: relabel, merge, subset, view filtering and one image per
//! patient. Every operation returns a new dataset and leaves its input alone.

use std::collections::HashSet;
use std::str::FromStr;

use crate::dataset::{Dataset, Lineage, RowSource};
use crate::error::{Error, Result};
use crate::table::{columns, LabelMatrix, MetaTable};
use crate::taxonomy::{Pathology, Taxonomy};

pub const MERGE_NAME: &str = "MergeDataset";
pub const SUBSET_NAME: &str = "SubsetDataset";

/// Reorder, add and drop label columns to match `target`.
///
/// Pathologies missing from `ds` become all-unknown columns. Returns the new
/// dataset together with the pathologies that were dropped.
pub fn relabel(ds: &Dataset, target: &[Pathology]) -> Result<(Dataset, Vec<Pathology>)> {
    let taxonomy = Taxonomy::new(target.to_vec()).map_err(|e| match e {
        Error::DuplicatePathology(p) => Error::DuplicateTarget(p),
        other => other,
    })?;
    let source: Vec<Option<usize>> = taxonomy.iter().map(|p| ds.pathologies.index_of(p)).collect();
    let dropped: Vec<Pathology> = ds.pathologies.iter().filter(|p| !taxonomy.contains(p)).cloned().collect();
    if !dropped.is_empty() {
        log::warn!(
            "{}: relabel dropped {}",
            ds.name,
            dropped.iter().map(Pathology::as_str).collect::<Vec<_>>().join(", ")
        );
    }
    let mut out = ds.clone();
    out.labels = ds.labels.remap_columns(&source);
    out.pathologies = taxonomy;
    Ok((out, dropped))
}

/// Concatenate datasets in order.
///
/// All children must share one pathology list; relabel first otherwise. The
/// result gains `source_name` / `source_index` columns naming each row's
/// original dataset and position there.
pub fn merge(children: &[Dataset]) -> Result<Dataset> {
    let first =
        children.first().ok_or_else(|| Error::InvalidArgument("merge needs at least one dataset".into()))?;
    for c in &children[1..] {
        if c.pathologies != first.pathologies {
            return Err(Error::PathologyMismatch { first: first.name.clone(), other: c.name.clone() });
        }
    }
    let labels = LabelMatrix::vstack(&children.iter().map(|c| &c.labels).collect::<Vec<_>>())?;
    let mut csv = MetaTable::concat(&children.iter().map(|c| &c.csv).collect::<Vec<_>>());
    let rows: Vec<RowSource> = children.iter().flat_map(|c| c.rows.iter().cloned()).collect();
    set_origin_columns(&mut csv, &rows)?;
    let mut offsets = Vec::with_capacity(children.len());
    let mut acc = 0;
    for c in children {
        offsets.push(acc);
        acc += c.len();
    }
    Ok(Dataset {
        name: MERGE_NAME.to_string(),
        pathologies: first.pathologies.clone(),
        labels,
        csv,
        rows,
        lineage: Lineage::Merge { children: children.iter().map(Dataset::summary).collect(), offsets },
        mask_source: children.iter().any(|c| c.mask_source),
        masks_enabled: children.iter().any(|c| c.masks_enabled),
    })
}

pub(crate) fn set_origin_columns(csv: &mut MetaTable, rows: &[RowSource]) -> Result<()> {
    csv.set_column(
        columns::SOURCE_NAME,
        rows.iter().map(|r| Some(r.origin.source_name.to_string())).collect(),
    )?;
    csv.set_column(
        columns::SOURCE_INDEX,
        rows.iter().map(|r| Some(r.origin.source_index.to_string())).collect(),
    )
}

/// Keep the rows at `idxs`, in that order. Repeated indices repeat rows.
pub fn subset(ds: &Dataset, idxs: &[usize]) -> Result<Dataset> {
    if let Some(&bad) = idxs.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::IndexOutOfRange { index: bad, len: ds.len() });
    }
    Ok(Dataset {
        name: SUBSET_NAME.to_string(),
        pathologies: ds.pathologies.clone(),
        labels: ds.labels.select_rows(idxs),
        csv: ds.csv.select_rows(idxs),
        rows: idxs.iter().map(|&i| ds.rows[i].clone()).collect(),
        lineage: Lineage::Subset { parent: ds.summary(), indexes: idxs.to_vec() },
        mask_source: ds.mask_source,
        masks_enabled: ds.masks_enabled,
    })
}

/// Indices of rows whose canonical view is one of `views`.
pub fn view_indices(ds: &Dataset, views: &[&str]) -> Result<Vec<usize>> {
    let col = ds.csv.column(columns::VIEW).ok_or_else(|| Error::NoViewColumn(ds.name.clone()))?;
    Ok(col
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_some_and(|v| views.contains(&v)))
        .map(|(i, _)| i)
        .collect())
}

/// Keep rows whose canonical view is one of `views`.
pub fn filter_views(ds: &Dataset, views: &[&str]) -> Result<Dataset> {
    subset(ds, &view_indices(ds, views)?)
}

/// First row of every patient, in original order. Rows without a patient id
/// cannot be deduplicated and are all kept.
pub fn unique_patient_indices(ds: &Dataset) -> Result<Vec<usize>> {
    let col = ds.csv.column(columns::PATIENT_ID).ok_or_else(|| Error::NoPatientIdColumn(ds.name.clone()))?;
    let mut seen = HashSet::new();
    Ok(col
        .iter()
        .enumerate()
        .filter(|(_, pid)| match pid {
            Some(p) => seen.insert(*p),
            None => true,
        })
        .map(|(i, _)| i)
        .collect())
}

/// Keep only the first image of each patient.
pub fn unique_patients(ds: &Dataset) -> Result<Dataset> {
    subset(ds, &unique_patient_indices(ds)?)
}

/// A `column op value` row filter such as `sex == F` or `age >= 60`.
///
/// Ordering operators compare numerically when both sides parse as numbers
/// and lexically otherwise. Missing cells never match.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: String,
    pub op: CompareOp,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // two-char operators first so `<=` is not read as `<`
        const OPS: [(&str, CompareOp); 7] = [
            ("==", CompareOp::Eq),
            ("!=", CompareOp::Ne),
            ("<=", CompareOp::Le),
            (">=", CompareOp::Ge),
            ("<", CompareOp::Lt),
            (">", CompareOp::Gt),
            ("=", CompareOp::Eq),
        ];
        for (sym, op) in OPS {
            if let Some((l, r)) = s.split_once(sym) {
                let column = l.trim();
                let value = r.trim().trim_matches(|c| c == '"' || c == '\'');
                if column.is_empty() {
                    break;
                }
                return Ok(Predicate { column: column.to_string(), op, value: value.to_string() });
            }
        }
        Err(Error::InvalidArgument(format!("cannot parse predicate `{s}`; expected `column op value`")))
    }
}

impl Predicate {
    pub fn matches(&self, cell: Option<&str>) -> bool {
        let Some(cell) = cell else { return false };
        let ord = match (cell.trim().parse::<f64>(), self.value.parse::<f64>()) {
            (Ok(a), Ok(b)) => a.partial_cmp(&b),
            _ => Some(cell.cmp(self.value.as_str())),
        };
        let Some(ord) = ord else { return false };
        use std::cmp::Ordering::*;
        match self.op {
            CompareOp::Eq => ord == Equal,
            CompareOp::Ne => ord != Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
        }
    }

    /// Indices of the rows of `ds` satisfying the predicate.
    pub fn indices(&self, ds: &Dataset) -> Result<Vec<usize>> {
        let col = ds.csv.column(&self.column).ok_or_else(|| {
            Error::InvalidArgument(format!("dataset `{}` has no column `{}`", ds.name, self.column))
        })?;
        Ok(col.iter().enumerate().filter(|(_, v)| self.matches(**v)).map(|(i, _)| i).collect())
    }
}
