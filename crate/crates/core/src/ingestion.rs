//! Declarative adapter profiles and the loader that turns an image folder
//! plus metadata CSV into a harmonized [`Dataset`].

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::composition::{filter_views, unique_patients};
use crate::dataset::{Dataset, ImageRef, Lineage, Origin};
use crate::error::{Error, Result};
use crate::image::{decode_image, Grid};
use crate::masks::{attach_masks, MaskAnnotation, MaskGeometry, MaskSource, MaskTarget};
use crate::table::{columns, LabelMatrix, MetaTable};
use crate::taxonomy::{normalize_name, Pathology, Taxonomy, TriState};

/// How a source CSV encodes one pathology per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub pathology: String,
    /// Defaults to the pathology name.
    #[serde(default)]
    pub column: Option<String>,
    #[serde(default = "default_positive")]
    pub positive: Vec<String>,
    #[serde(default = "default_negative")]
    pub negative: Vec<String>,
    #[serde(default = "default_unknown")]
    pub unknown: Vec<String>,
}

fn default_positive() -> Vec<String> {
    vec!["1".into(), "1.0".into()]
}
fn default_negative() -> Vec<String> {
    vec!["0".into(), "0.0".into()]
}
fn default_unknown() -> Vec<String> {
    vec!["-1".into(), "-1.0".into(), "".into()]
}
fn default_true() -> bool {
    true
}

impl ColumnLabel {
    pub fn column_name(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.pathology)
    }

    fn decode(&self, cell: &str) -> TriState {
        let cell = cell.trim();
        if self.positive.iter().any(|v| v == cell) {
            TriState::Present
        } else if self.negative.iter().any(|v| v == cell) {
            TriState::Absent
        } else {
            // declared unknown values and anything unrecognized carry no information
            TriState::Unknown
        }
    }
}

/// Label coding of a source CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LabelCoding {
    /// One column per pathology with explicit value sets.
    PerColumn { columns: Vec<ColumnLabel> },
    /// A single column of delimited finding names, e.g. `Cardiomegaly|Effusion`.
    /// Listed findings are present; the negation token marks every pathology
    /// absent; with `absent_is_negative` unlisted findings are absent too,
    /// otherwise unknown. Empty cells are unknown.
    DelimitedString {
        column: String,
        delimiter: String,
        #[serde(default)]
        negation_token: Option<String>,
        pathologies: Vec<String>,
        #[serde(default = "default_true")]
        absent_is_negative: bool,
    },
}

/// Declarative description of a source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterProfile {
    pub name: String,
    pub imgpath: PathBuf,
    pub csvpath: PathBuf,
    pub image_column: String,
    pub bit_depth: u8,
    pub labels: LabelCoding,
    #[serde(default)]
    pub patientid_column: Option<String>,
    #[serde(default)]
    pub view_column: Option<String>,
    /// Raw view string to canonical view; unmapped values pass through.
    #[serde(default)]
    pub view_map: BTreeMap<String, String>,
    #[serde(default)]
    pub offset_column: Option<String>,
    #[serde(default)]
    pub mask_source: Option<MaskSource>,
    /// Deliver masks with every sample.
    #[serde(default)]
    pub pathology_masks: bool,
    /// Keep only these canonical views.
    #[serde(default)]
    pub views: Option<Vec<String>>,
    /// Keep only the first image of each patient.
    #[serde(default)]
    pub unique_patients: bool,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl AdapterProfile {
    pub fn from_json(s: &str) -> Result<Self> {
        let p: AdapterProfile = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    /// Read a profile; relative paths inside it resolve against its folder.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read profile {}", path.display()), e))?;
        let mut p = Self::from_json(&text)?;
        p.base_dir = path.parent().map(Path::to_path_buf);
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Declared pathologies, canonicalized, in declaration order.
    pub fn pathologies(&self) -> Result<Taxonomy> {
        let names: Vec<&str> = match &self.labels {
            LabelCoding::PerColumn { columns } => columns.iter().map(|c| c.pathology.as_str()).collect(),
            LabelCoding::DelimitedString { pathologies, .. } => {
                pathologies.iter().map(String::as_str).collect()
            }
        };
        Taxonomy::from_names(&names).map_err(|e| Error::Profile(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.bit_depth != 8 && self.bit_depth != 16 {
            return Err(Error::Profile(format!("bit_depth must be 8 or 16, got {}", self.bit_depth)));
        }
        if self.pathologies()?.is_empty() {
            return Err(Error::Profile("no pathologies declared".into()));
        }
        match &self.labels {
            LabelCoding::PerColumn { columns } => {
                for c in columns {
                    let sets = [&c.positive, &c.negative, &c.unknown];
                    for (i, a) in sets.iter().enumerate() {
                        for b in &sets[i + 1..] {
                            if let Some(v) = a.iter().find(|v| b.contains(v)) {
                                return Err(Error::Profile(format!(
                                    "value `{v}` appears in two label sets of `{}`",
                                    c.pathology
                                )));
                            }
                        }
                    }
                }
            }
            LabelCoding::DelimitedString { delimiter, .. } => {
                if delimiter.is_empty() {
                    return Err(Error::Profile("delimiter must not be empty".into()));
                }
            }
        }
        Ok(())
    }
}

/// What the loader did with each CSV row.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub csv_rows: usize,
    pub loaded: usize,
    /// CSV row number and expected image path of every dropped row.
    pub dropped: Vec<(usize, PathBuf)>,
}

fn cell(s: &str) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s.to_string())
    }
}

struct RawCsv {
    headers: Vec<String>,
    records: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<RawCsv> {
    let parse_err = |e: csv::Error| Error::CsvParse { path: path.to_path_buf(), message: e.to_string() };
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Profile(format!("cannot open csv {}: {e}", path.display())),
            _ => parse_err(e),
        })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(parse_err)?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        records.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawCsv { headers, records })
}

impl RawCsv {
    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Profile(format!("column `{name}` not found in csv")))
    }
}

/// Load a dataset described by `profile`.
///
/// Rows whose image file is missing are dropped with a warning and listed in
/// the report.
pub fn load_dataset(profile: &AdapterProfile) -> Result<(Dataset, LoadReport)> {
    profile.validate()?;
    let csvpath = profile.resolve(&profile.csvpath);
    let imgpath = profile.resolve(&profile.imgpath);
    if !imgpath.is_dir() {
        return Err(Error::Profile(format!("image directory {} does not exist", imgpath.display())));
    }
    let raw = read_csv(&csvpath)?;
    let pathologies = profile.pathologies()?;

    let image_col = raw.col(&profile.image_column)?;
    let pid_col = profile.patientid_column.as_deref().map(|c| raw.col(c)).transpose()?;
    let view_col = profile.view_column.as_deref().map(|c| raw.col(c)).transpose()?;
    let offset_col = profile.offset_column.as_deref().map(|c| raw.col(c)).transpose()?;
    let decoder = LabelDecoder::new(&profile.labels, &raw, &pathologies)?;

    let mut report = LoadReport { csv_rows: raw.records.len(), ..Default::default() };
    let mut keep = Vec::new();
    let mut images = Vec::new();
    let mut label_rows = Vec::new();
    for (i, rec) in raw.records.iter().enumerate() {
        let path = imgpath.join(&rec[image_col]);
        if !path.is_file() {
            log::warn!("{}: image {} missing, dropping row {i}", profile.name, path.display());
            report.dropped.push((i, path));
            continue;
        }
        keep.push(i);
        images.push(ImageRef::File { path, bit_depth: profile.bit_depth });
        label_rows.push(decoder.decode(rec));
    }
    report.loaded = keep.len();
    if keep.is_empty() {
        return Err(Error::EmptyDataset(profile.name.clone()));
    }

    let rows: Vec<Vec<Option<String>>> =
        keep.iter().map(|&i| raw.records[i].iter().map(|s| cell(s)).collect()).collect();
    let mut csv = MetaTable::new(raw.headers.clone(), rows)?;
    let pick = |col: usize| -> Vec<Option<String>> {
        keep.iter().map(|&i| cell(raw.records[i][col].trim())).collect()
    };
    if let Some(c) = pid_col {
        csv.set_column(columns::PATIENT_ID, pick(c))?;
    }
    if let Some(c) = view_col {
        let views =
            pick(c).into_iter().map(|v| v.map(|v| profile.view_map.get(&v).cloned().unwrap_or(v))).collect();
        csv.set_column(columns::VIEW, views)?;
    }
    if let Some(c) = offset_col {
        let offsets = pick(c)
            .into_iter()
            .map(|v| v.and_then(|v| parse_day_offset(&v)).map(|d| d.to_string()))
            .collect();
        csv.set_column(columns::OFFSET_DAY, offsets)?;
    }

    let labels = LabelMatrix::from_rows(pathologies.len(), label_rows)?;
    let mut ds = Dataset::new(&profile.name, pathologies, labels, csv, images)?;

    if let Some(src) = &profile.mask_source {
        let by_image = read_mask_source(profile, src)?;
        let anns = keep
            .iter()
            .map(|&i| by_image.get(&raw.records[i][image_col]).cloned().unwrap_or_default())
            .collect();
        ds = ds.with_mask_annotations(anns)?;
    }
    if profile.pathology_masks {
        ds = attach_masks(&ds, true)?;
    }
    if let Some(views) = &profile.views {
        let views: Vec<&str> = views.iter().map(String::as_str).collect();
        ds = as_source(filter_views(&ds, &views)?, &profile.name)?;
    }
    if profile.unique_patients {
        ds = as_source(unique_patients(&ds)?, &profile.name)?;
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset(profile.name.clone()));
    }
    Ok((ds, report))
}

/// Treat a filtered load as the source itself: origins index its rows.
fn as_source(mut ds: Dataset, name: &str) -> Result<Dataset> {
    let source_name: std::sync::Arc<str> = std::sync::Arc::from(name);
    for (i, row) in ds.rows.iter_mut().enumerate() {
        row.origin = Origin { source_name: source_name.clone(), source_index: i };
    }
    ds.name = name.to_string();
    ds.lineage = Lineage::Source;
    ds.csv.drop_column(columns::SOURCE_NAME);
    ds.csv.drop_column(columns::SOURCE_INDEX);
    Ok(ds)
}

fn parse_day_offset(v: &str) -> Option<i64> {
    if let Ok(d) = v.parse::<i64>() {
        return Some(d);
    }
    match v.parse::<f64>() {
        Ok(f) if f.fract() == 0.0 && f.is_finite() => Some(f as i64),
        _ => {
            log::warn!("ignoring non-integer day offset `{v}`");
            None
        }
    }
}

enum LabelDecoder<'a> {
    PerColumn(Vec<(usize, &'a ColumnLabel)>),
    Delimited {
        col: usize,
        delimiter: &'a str,
        negation: Option<&'a str>,
        pathologies: &'a Taxonomy,
        absent_is_negative: bool,
    },
}

impl<'a> LabelDecoder<'a> {
    fn new(coding: &'a LabelCoding, raw: &RawCsv, pathologies: &'a Taxonomy) -> Result<Self> {
        Ok(match coding {
            LabelCoding::PerColumn { columns } => LabelDecoder::PerColumn(
                columns.iter().map(|c| Ok((raw.col(c.column_name())?, c))).collect::<Result<_>>()?,
            ),
            LabelCoding::DelimitedString {
                column, delimiter, negation_token, absent_is_negative, ..
            } => LabelDecoder::Delimited {
                col: raw.col(column)?,
                delimiter,
                negation: negation_token.as_deref(),
                pathologies,
                absent_is_negative: *absent_is_negative,
            },
        })
    }

    fn decode(&self, rec: &[String]) -> Vec<TriState> {
        match self {
            LabelDecoder::PerColumn(cols) => cols.iter().map(|(i, c)| c.decode(&rec[*i])).collect(),
            LabelDecoder::Delimited { col, delimiter, negation, pathologies, absent_is_negative } => {
                let text = rec[*col].trim();
                if text.is_empty() {
                    return vec![TriState::Unknown; pathologies.len()];
                }
                let tokens: Vec<&str> = text.split(delimiter).map(str::trim).collect();
                if negation.is_some_and(|n| tokens.iter().all(|t| *t == n)) {
                    return vec![TriState::Absent; pathologies.len()];
                }
                let rest = if *absent_is_negative { TriState::Absent } else { TriState::Unknown };
                let mut out = vec![rest; pathologies.len()];
                for t in tokens {
                    if negation.is_some_and(|n| t == n) {
                        continue;
                    }
                    match normalize_name(t).ok().and_then(|p| pathologies.index_of(&p)) {
                        Some(j) => out[j] = TriState::Present,
                        None => log::debug!("ignoring undeclared finding `{t}`"),
                    }
                }
                out
            }
        }
    }
}

fn parse_f64(v: &str, what: &str) -> Result<f64> {
    v.trim().parse().map_err(|_| Error::Profile(format!("mask {what} value `{v}` is not a number")))
}

fn mask_target(label: &str, semantic: &[String]) -> Result<MaskTarget> {
    if semantic.iter().any(|s| s == label) {
        return Ok(MaskTarget::Semantic(label.to_string()));
    }
    Ok(MaskTarget::Pathology(Pathology::new(label).map_err(|e| Error::Profile(e.to_string()))?))
}

/// Mask annotations keyed by the image filename they belong to.
fn read_mask_source(
    profile: &AdapterProfile,
    src: &MaskSource,
) -> Result<HashMap<String, Vec<MaskAnnotation>>> {
    let mut out: HashMap<String, Vec<MaskAnnotation>> = HashMap::new();
    match src {
        MaskSource::Boxes {
            csvpath,
            image_column,
            label_column,
            x_column,
            y_column,
            w_column,
            h_column,
            semantic_labels,
        } => {
            let raw = read_csv(&profile.resolve(Path::new(csvpath)))?;
            let (ic, lc) = (raw.col(image_column)?, raw.col(label_column)?);
            let (xc, yc, wc, hc) =
                (raw.col(x_column)?, raw.col(y_column)?, raw.col(w_column)?, raw.col(h_column)?);
            for rec in &raw.records {
                let geometry = MaskGeometry::from_float_box(
                    parse_f64(&rec[xc], "x")?,
                    parse_f64(&rec[yc], "y")?,
                    parse_f64(&rec[wc], "w")?,
                    parse_f64(&rec[hc], "h")?,
                );
                out.entry(rec[ic].clone())
                    .or_default()
                    .push(MaskAnnotation { target: mask_target(&rec[lc], semantic_labels)?, geometry });
            }
        }
        MaskSource::Bitmaps {
            csvpath,
            maskpath,
            image_column,
            label_column,
            mask_column,
            semantic_labels,
        } => {
            let raw = read_csv(&profile.resolve(Path::new(csvpath)))?;
            let dir = profile.resolve(Path::new(maskpath));
            let (ic, lc, mc) = (raw.col(image_column)?, raw.col(label_column)?, raw.col(mask_column)?);
            for rec in &raw.records {
                let img = decode_image(&dir.join(&rec[mc]), 8)?;
                let grid =
                    Grid::from_fn(
                        img.height(),
                        img.width(),
                        |r, c| {
                            if img.pixel(r, c) != 0 {
                                1.0
                            } else {
                                0.0
                            }
                        },
                    );
                out.entry(rec[ic].clone()).or_default().push(MaskAnnotation {
                    target: mask_target(&rec[lc], semantic_labels)?,
                    geometry: MaskGeometry::Bitmap(grid),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delimited() -> LabelCoding {
        LabelCoding::DelimitedString {
            column: "Finding Labels".into(),
            delimiter: "|".into(),
            negation_token: Some("No Finding".into()),
            pathologies: vec!["Cardiomegaly".into(), "Effusion".into(), "Pleural_Thickening".into()],
            absent_is_negative: true,
        }
    }

    fn raw(headers: &[&str], rows: &[&[&str]]) -> RawCsv {
        RawCsv {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            records: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn delimited_decoding() {
        let coding = delimited();
        let csv = raw(&["Finding Labels"], &[]);
        let tax = Taxonomy::from_names(&["Cardiomegaly", "Effusion", "Pleural Thickening"]).unwrap();
        let d = LabelDecoder::new(&coding, &csv, &tax).unwrap();
        use TriState::*;
        assert_eq!(d.decode(&["Cardiomegaly|Effusion".into()]), vec![Present, Present, Absent]);
        assert_eq!(d.decode(&["No Finding".into()]), vec![Absent, Absent, Absent]);
        assert_eq!(d.decode(&["Pleural_Thickening|Hernia".into()]), vec![Absent, Absent, Present]);
        assert_eq!(d.decode(&["".into()]), vec![Unknown, Unknown, Unknown]);
    }

    #[test]
    fn per_column_decoding() {
        let c = ColumnLabel {
            pathology: "Edema".into(),
            column: None,
            positive: default_positive(),
            negative: default_negative(),
            unknown: default_unknown(),
        };
        assert_eq!(c.decode("1.0"), TriState::Present);
        assert_eq!(c.decode("0"), TriState::Absent);
        assert_eq!(c.decode("-1.0"), TriState::Unknown);
        assert_eq!(c.decode(""), TriState::Unknown);
        assert_eq!(c.column_name(), "Edema");
    }

    #[test]
    fn profile_validation() {
        let json = r#"{
            "name": "X", "imgpath": "img", "csvpath": "x.csv", "image_column": "file",
            "bit_depth": 12,
            "labels": {"mode": "delimited_string", "column": "f", "delimiter": "|", "pathologies": ["A"]}
        }"#;
        assert!(matches!(AdapterProfile::from_json(json), Err(Error::Profile(_))));
        let overlapping = r#"{
            "name": "X", "imgpath": "img", "csvpath": "x.csv", "image_column": "file",
            "bit_depth": 8,
            "labels": {"mode": "per_column", "columns": [{"pathology": "A", "positive": ["1"], "negative": ["1"]}]}
        }"#;
        assert!(matches!(AdapterProfile::from_json(overlapping), Err(Error::Profile(_))));
        let ok = overlapping.replace(r#""negative": ["1"]"#, r#""negative": ["0"]"#);
        let p = AdapterProfile::from_json(&ok).unwrap();
        assert_eq!(p.pathologies().unwrap().len(), 1);
        let again = AdapterProfile::from_json(&p.to_json()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn day_offsets() {
        assert_eq!(parse_day_offset("12"), Some(12));
        assert_eq!(parse_day_offset("-3.0"), Some(-3));
        assert_eq!(parse_day_offset("1.5"), None);
    }
}
