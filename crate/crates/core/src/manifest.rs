//! Manifest CSV: one row per sample naming its origin, image, standard
//! metadata and labels. A manifest fully determines a derived dataset.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::dataset::{Dataset, ImageRef, Lineage, Origin, RowSource};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::table::{columns, LabelMatrix, MetaTable};
use crate::taxonomy::{Taxonomy, TriState};

pub const IMAGE_PATH: &str = "image_path";
pub const BIT_DEPTH: &str = "bit_depth";

/// Columns every manifest carries ahead of the label columns.
pub const RESERVED: [&str; 8] = [
    columns::SOURCE_NAME,
    columns::SOURCE_INDEX,
    IMAGE_PATH,
    BIT_DEPTH,
    columns::PATIENT_ID,
    columns::VIEW,
    columns::OFFSET_DAY,
    columns::HAS_MASKS,
];

/// Render `ds` as manifest CSV bytes.
pub fn to_manifest_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> =
        RESERVED.iter().copied().chain(ds.pathologies().iter().map(|p| p.as_str())).collect();
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("manifest encode: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in ds.rows.iter().enumerate() {
        let (path, depth) = match &row.image {
            ImageRef::File { path, bit_depth } => (path.display().to_string(), bit_depth.to_string()),
            // in-memory pixels cannot be referenced from a file
            ImageRef::Memory(_) | ImageRef::Missing => (String::new(), String::new()),
        };
        let meta = |c: &str| ds.csv().get(i, c).unwrap_or("").to_string();
        let mut rec = vec![
            row.origin.source_name.to_string(),
            row.origin.source_index.to_string(),
            path,
            depth,
            meta(columns::PATIENT_ID),
            meta(columns::VIEW),
            meta(columns::OFFSET_DAY),
            meta(columns::HAS_MASKS),
        ];
        rec.extend(ds.labels().row(i).iter().map(|t| t.as_csv().to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(format!("manifest encode: {e}")))
}

pub fn write_manifest(path: &Path, ds: &Dataset) -> Result<()> {
    write_atomic(path, &to_manifest_bytes(ds)?)
}

/// Read a manifest. The dataset is named after the file stem; every
/// non-reserved column is a label. Relative image paths resolve against the
/// manifest's folder.
pub fn read_manifest(path: &Path) -> Result<Dataset> {
    let parse_err = |e: csv::Error| Error::CsvParse { path: path.to_path_buf(), message: e.to_string() };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Profile(format!("cannot open manifest {}: {e}", path.display())),
        _ => parse_err(e),
    })?;
    let headers: Vec<String> = rdr.headers().map_err(parse_err)?.iter().map(str::to_string).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        col(name).ok_or_else(|| Error::Profile(format!("manifest {} lacks column `{name}`", path.display())))
    };
    let (sn, si) = (require(columns::SOURCE_NAME)?, require(columns::SOURCE_INDEX)?);
    let (ip, bd) = (col(IMAGE_PATH), col(BIT_DEPTH));
    let label_cols: Vec<usize> =
        (0..headers.len()).filter(|&j| !RESERVED.contains(&headers[j].as_str())).collect();
    let pathologies = Taxonomy::from_names(&label_cols.iter().map(|&j| &headers[j]).collect::<Vec<_>>())?;
    let meta_cols: Vec<usize> = [columns::PATIENT_ID, columns::VIEW, columns::OFFSET_DAY, columns::HAS_MASKS]
        .iter()
        .filter_map(|c| col(c))
        .collect();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let name =
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "Manifest".into());

    let mut names: Vec<Arc<str>> = Vec::new();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut meta = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let bad = |what: &str| Error::CsvParse {
            path: path.to_path_buf(),
            message: format!("row {}: {what}", line + 1),
        };
        let source_name = &rec[sn];
        let source_name = match names.iter().find(|n| n.as_ref() == source_name) {
            Some(n) => n.clone(),
            None => {
                names.push(Arc::from(source_name));
                names.last().unwrap().clone()
            }
        };
        let source_index: usize = rec[si].trim().parse().map_err(|_| bad("bad source_index"))?;
        let image = match (ip.map(|j| &rec[j]), bd.map(|j| &rec[j])) {
            (Some(p), Some(d)) if !p.is_empty() => {
                let p = PathBuf::from(p);
                ImageRef::File {
                    path: if p.is_relative() { base.join(p) } else { p },
                    bit_depth: d.trim().parse().map_err(|_| bad("bad bit_depth"))?,
                }
            }
            _ => ImageRef::Missing,
        };
        rows.push(RowSource {
            image,
            masks: Arc::from(Vec::new()),
            origin: Origin { source_name, source_index },
        });
        labels.push(
            label_cols
                .iter()
                .map(|&j| {
                    TriState::parse_csv(&rec[j]).ok_or_else(|| bad(&format!("bad label `{}`", &rec[j])))
                })
                .collect::<Result<Vec<_>>>()?,
        );
        meta.push(meta_cols.iter().map(|&j| Some(rec[j].to_string()).filter(|s| !s.is_empty())).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(name));
    }
    let n = rows.len();
    let mut csv = MetaTable::new(meta_cols.iter().map(|&j| headers[j].clone()).collect(), meta)?;
    if !csv.has_column(columns::HAS_MASKS) {
        csv.set_column(columns::HAS_MASKS, vec![Some("false".into()); n])?;
    }
    crate::composition::set_origin_columns(&mut csv, &rows)?;
    Ok(Dataset {
        name,
        labels: LabelMatrix::from_rows(pathologies.len(), labels)?,
        pathologies,
        csv,
        rows,
        lineage: Lineage::Source,
        mask_source: false,
        masks_enabled: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::{merge, subset};
    use crate::dataset::tests::tiny;

    #[test]
    fn round_trip_preserves_origins_and_labels() {
        let a = tiny("A", &["Effusion", "Mass"], vec![vec![1.0, f64::NAN], vec![0.0, 1.0]]);
        let b = tiny("B", &["Effusion", "Mass"], vec![vec![f64::NAN, 0.0]]);
        let m = merge(&[a, b]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_manifest(&p, &m).unwrap();
        let back = read_manifest(&p).unwrap();
        assert_eq!(back.name(), "m");
        assert_eq!(back.len(), 3);
        assert_eq!(back.pathologies(), m.pathologies());
        assert_eq!(back.labels(), m.labels());
        for i in 0..3 {
            assert_eq!(back.origin(i), m.origin(i));
        }
        assert_eq!(to_manifest_bytes(&back).unwrap(), to_manifest_bytes(&m).unwrap());
    }

    #[test]
    fn subset_manifests_merge_back() {
        let a = tiny("A", &["Effusion"], vec![vec![1.0], vec![0.0], vec![f64::NAN], vec![1.0]]);
        let left = subset(&a, &[0, 2]).unwrap();
        let right = subset(&a, &[3, 1]).unwrap();
        let back = merge(&[left, right]).unwrap();
        let mut got: Vec<_> = (0..4).map(|i| back.origin(i).unwrap().clone()).collect();
        got.sort();
        let want: Vec<_> = (0..4).map(|i| a.origin(i).unwrap().clone()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn missing_origin_columns_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "image_path,Effusion\na.png,1\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Profile(_))));
    }
}
