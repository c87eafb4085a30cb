//! The harmonized dataset: pathologies, tri-state labels, metadata and image
//! references kept row-aligned, plus sample access and summary statistics.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::image::{decode_image, scale_pixels, ImageTensor, RawImage};
use crate::masks::{build_mask_set, MaskAnnotation, MaskSet};
use crate::rng::mix64;
use crate::table::{columns, LabelMatrix, MetaTable};
use crate::taxonomy::{Pathology, Taxonomy, TriState};
use crate::transforms::TransformChain;

/// Version stamped into every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;

/// Where a row's pixels come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageRef {
    File {
        path: PathBuf,
        bit_depth: u8,
    },
    Memory(Arc<RawImage>),
    /// Rows loaded from a manifest without an image path.
    Missing,
}

impl ImageRef {
    pub fn load(&self) -> Result<RawImage> {
        match self {
            ImageRef::File { path, bit_depth } => decode_image(path, *bit_depth),
            ImageRef::Memory(img) => Ok(img.as_ref().clone()),
            ImageRef::Missing => Err(Error::Decode {
                path: PathBuf::from("<none>"),
                message: "row has no image reference".into(),
            }),
        }
    }
}

/// The original dataset and row a sample came from. Preserved through
/// subset, merge and relabel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Origin {
    pub source_name: Arc<str>,
    pub source_index: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct RowSource {
    pub(crate) image: ImageRef,
    pub(crate) masks: Arc<[MaskAnnotation]>,
    pub(crate) origin: Origin,
}

/// Header facts about a dataset, used for tree rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub name: String,
    pub num_samples: usize,
    pub views: Vec<String>,
}

impl Summary {
    pub fn header(&self) -> String {
        let mut s = format!("{} num_samples={}", self.name, self.num_samples);
        if !self.views.is_empty() {
            let quoted: Vec<String> = self.views.iter().map(|v| format!("'{v}'")).collect();
            let _ = write!(s, " views=[{}]", quoted.join(", "));
        }
        s
    }
}

/// How a dataset was derived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lineage {
    Source,
    Subset {
        parent: Summary,
        indexes: Vec<usize>,
    },
    Merge {
        children: Vec<Summary>,
        /// Starting row of each child.
        offsets: Vec<usize>,
    },
}

/// A harmonized collection of samples.
///
/// `labels`, `csv` and the image references always have one row per sample,
/// in the same order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub(crate) name: String,
    pub(crate) pathologies: Taxonomy,
    pub(crate) labels: LabelMatrix,
    pub(crate) csv: MetaTable,
    pub(crate) rows: Vec<RowSource>,
    pub(crate) lineage: Lineage,
    pub(crate) mask_source: bool,
    pub(crate) masks_enabled: bool,
}

impl Dataset {
    /// Assemble a source dataset from aligned parts.
    pub fn new(
        name: &str,
        pathologies: Taxonomy,
        labels: LabelMatrix,
        csv: MetaTable,
        images: Vec<ImageRef>,
    ) -> Result<Self> {
        let n = images.len();
        if labels.num_rows() != n || csv.num_rows() != n {
            return Err(Error::InvalidArgument(format!(
                "misaligned dataset parts: {} label rows, {} csv rows, {n} images",
                labels.num_rows(),
                csv.num_rows()
            )));
        }
        if labels.num_cols() != pathologies.len() {
            return Err(Error::InvalidArgument(format!(
                "{} label columns for {} pathologies",
                labels.num_cols(),
                pathologies.len()
            )));
        }
        let source_name: Arc<str> = Arc::from(name);
        let empty: Arc<[MaskAnnotation]> = Arc::from(Vec::new());
        let rows = images
            .into_iter()
            .enumerate()
            .map(|(i, image)| RowSource {
                image,
                masks: empty.clone(),
                origin: Origin { source_name: source_name.clone(), source_index: i },
            })
            .collect();
        let mut csv = csv;
        if !csv.has_column(columns::HAS_MASKS) {
            csv.set_column(columns::HAS_MASKS, vec![Some("false".into()); n])?;
        }
        Ok(Dataset {
            name: name.to_string(),
            pathologies,
            labels,
            csv,
            rows,
            lineage: Lineage::Source,
            mask_source: false,
            masks_enabled: false,
        })
    }

    /// In-memory dataset, convenient for fixtures and bindings.
    pub fn from_memory(
        name: &str,
        pathologies: Taxonomy,
        labels: Vec<Vec<TriState>>,
        csv: MetaTable,
        images: Vec<RawImage>,
    ) -> Result<Self> {
        let labels = LabelMatrix::from_rows(pathologies.len(), labels)?;
        let images = images.into_iter().map(|i| ImageRef::Memory(Arc::new(i))).collect();
        Dataset::new(name, pathologies, labels, csv, images)
    }

    /// Declare per-row mask annotations (the dataset's mask source). Masks
    /// are only returned after [`crate::masks::attach_masks`].
    pub fn with_mask_annotations(mut self, annotations: Vec<Vec<MaskAnnotation>>) -> Result<Self> {
        if annotations.len() != self.rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} mask rows for {} samples",
                annotations.len(),
                self.rows.len()
            )));
        }
        for (row, anns) in self.rows.iter_mut().zip(annotations) {
            row.masks = Arc::from(anns);
        }
        self.mask_source = true;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn pathologies(&self) -> &Taxonomy {
        &self.pathologies
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn csv(&self) -> &MetaTable {
        &self.csv
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn image_ref(&self, i: usize) -> Option<&ImageRef> {
        self.rows.get(i).map(|r| &r.image)
    }

    pub fn origin(&self, i: usize) -> Option<&Origin> {
        self.rows.get(i).map(|r| &r.origin)
    }

    pub fn has_mask_source(&self) -> bool {
        self.mask_source
    }

    pub fn masks_enabled(&self) -> bool {
        self.masks_enabled
    }

    pub(crate) fn mask_annotations(&self, i: usize) -> &[MaskAnnotation] {
        &self.rows[i].masks
    }

    /// For a merged dataset, the `(child, local index)` pair of row `i`.
    pub fn child_of(&self, i: usize) -> Option<(usize, usize)> {
        match &self.lineage {
            Lineage::Merge { offsets, .. } if i < self.len() => {
                let child = offsets.partition_point(|&o| o <= i) - 1;
                Some((child, i - offsets[child]))
            }
            _ => None,
        }
    }

    /// Distinct canonical views in first-seen order.
    pub fn views(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        if let Some(col) = self.csv.column(columns::VIEW) {
            for v in col.into_iter().flatten() {
                if !out.iter().any(|o| o == v) {
                    out.push(v.to_string());
                }
            }
        }
        out
    }

    pub fn summary(&self) -> Summary {
        Summary { name: self.name.clone(), num_samples: self.len(), views: self.views() }
    }

    /// Load, scale and transform sample `i`.
    ///
    /// The augmentation seed is derived from `(seed, i)`; `seed` falls back to
    /// the chain's pinned seed, then 0.
    pub fn get_sample(
        &self,
        i: usize,
        transform: Option<&TransformChain>,
        seed: Option<u64>,
    ) -> Result<Sample> {
        let row = self.rows.get(i).ok_or(Error::IndexOutOfRange { index: i, len: self.len() })?;
        let raw = row.image.load()?;
        let img = scale_pixels(&raw);
        let masks = if self.masks_enabled {
            Some(build_mask_set(&row.masks, &self.pathologies, raw.height(), raw.width())?)
        } else {
            None
        };
        let (img, masks) = match transform {
            Some(chain) => {
                let base = seed.or_else(|| chain.pinned_seed()).unwrap_or(0);
                chain.apply_with_seed(img, masks, sample_seed(base, i))?
            }
            None => (img, masks),
        };
        Ok(Sample {
            index: i,
            img,
            lab: self.labels.row(i).to_vec(),
            pathology_masks: masks,
            metadata: self.csv.row(i),
        })
    }

    /// Per-pathology counts of absent and present labels.
    pub fn totals(&self) -> LabelTotals {
        LabelTotals(
            self.pathologies
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let mut c = ClassCounts::default();
                    for r in 0..self.labels.num_rows() {
                        match self.labels.get(r, j) {
                            TriState::Absent => c.absent += 1,
                            TriState::Present => c.present += 1,
                            TriState::Unknown => {}
                        }
                    }
                    (p.clone(), c)
                })
                .collect(),
        )
    }

    /// Printable summary: header, lineage tree and label totals.
    pub fn render_summary(&self) -> String {
        let mut out = self.summary().header();
        match &self.lineage {
            Lineage::Source => {}
            Lineage::Subset { parent, .. } => {
                let _ = write!(out, "\n└ of {}", parent.header());
            }
            Lineage::Merge { children, .. } => {
                for (k, c) in children.iter().enumerate() {
                    let branch = if k + 1 == children.len() { '└' } else { '├' };
                    let _ = write!(out, "\n{branch}{k} {}", c.header());
                }
            }
        }
        out.push('\n');
        out.push_str(&self.totals().render());
        out
    }

    /// Stats artifact: header facts plus totals.
    pub fn stats_json(&self) -> Value {
        json!({
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "num_samples": self.len(),
            "views": self.views(),
            "totals": self.totals().to_json(),
        })
    }
}

/// Per-sample augmentation seed.
pub fn sample_seed(base: u64, index: usize) -> u64 {
    mix64(base ^ mix64(index as u64))
}

/// One dataset item after preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub img: ImageTensor,
    pub lab: Vec<TriState>,
    /// `None` when masks are disabled; an empty set when enabled but absent.
    pub pathology_masks: Option<MaskSet>,
    pub metadata: Vec<(String, Option<String>)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub absent: usize,
    pub present: usize,
}

/// Label counts per pathology, unknowns excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTotals(pub Vec<(Pathology, ClassCounts)>);

impl LabelTotals {
    pub fn get(&self, p: &Pathology) -> Option<ClassCounts> {
        self.0.iter().find(|(q, _)| q == p).map(|(_, c)| *c)
    }

    pub fn get_name(&self, name: &str) -> Option<ClassCounts> {
        self.get(&Pathology::new(name).ok()?)
    }

    /// `{'Atelectasis': {0.0: 12, 1.0: 3},\n 'Effusion': {...}}`
    pub fn render(&self) -> String {
        let entries: Vec<String> =
            self.0.iter().map(|(p, c)| format!("'{p}': {{0.0: {}, 1.0: {}}}", c.absent, c.present)).collect();
        format!("{{{}}}", entries.join(",\n "))
    }

    /// `{"Atelectasis": {"0": 12, "1": 3}, ...}`
    pub fn to_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        for (p, c) in &self.0 {
            m.insert(p.to_string(), json!({"0": c.absent, "1": c.present}));
        }
        Value::Object(m)
    }
}
