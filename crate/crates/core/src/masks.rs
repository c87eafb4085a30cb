//! Pathology and semantic masks: rasterization, OR-merging and the
//! per-sample mask set that travels with an image through preprocessing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::image::Grid;
use crate::table::columns;
use crate::taxonomy::{Pathology, Taxonomy};

/// Raw mask geometry in source-image pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskGeometry {
    /// Half-open rectangle `[y, y + h) x [x, x + w)`.
    Box { x: i64, y: i64, w: i64, h: i64 },
    /// A binary grid; nonzero means inside.
    Bitmap(Grid),
}

impl MaskGeometry {
    /// Box from float coordinates; the rectangle is widened to whole pixels.
    pub fn from_float_box(x: f64, y: f64, w: f64, h: f64) -> Self {
        let x0 = x.floor();
        let y0 = y.floor();
        MaskGeometry::Box {
            x: x0 as i64,
            y: y0 as i64,
            w: ((x + w).ceil() - x0) as i64,
            h: ((y + h).ceil() - y0) as i64,
        }
    }
}

/// Rasterize a geometry onto an `rows x cols` binary grid.
pub fn rasterize(geom: &MaskGeometry, rows: usize, cols: usize) -> Result<Grid> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("mask grid must be at least 1x1".into()));
    }
    match *geom {
        MaskGeometry::Box { x, y, w, h } => {
            let degenerate = || Error::DegenerateBox { x, y, w, h, height: rows, width: cols };
            if w < 1 || h < 1 {
                return Err(degenerate());
            }
            let r0 = y.max(0);
            let r1 = (y + h).min(rows as i64);
            let c0 = x.max(0);
            let c1 = (x + w).min(cols as i64);
            if r0 >= r1 || c0 >= c1 {
                return Err(degenerate());
            }
            let (r0, r1, c0, c1) = (r0 as usize, r1 as usize, c0 as usize, c1 as usize);
            Ok(Grid::from_fn(rows, cols, |r, c| {
                if (r0..r1).contains(&r) && (c0..c1).contains(&c) {
                    1.0
                } else {
                    0.0
                }
            }))
        }
        MaskGeometry::Bitmap(ref g) => {
            let (sr, sc) = g.shape();
            Ok(Grid::from_fn(rows, cols, |r, c| {
                let rr = r * sr / rows;
                let cc = c * sc / cols;
                if g.get(rr, cc) != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }))
        }
    }
}

/// Element-wise maximum (logical OR for binary grids).
pub fn merge_or(masks: &[Grid]) -> Result<Grid> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("merge_or needs at least one mask".into()))?;
    let mut out = first.clone();
    for m in rest {
        out.check_same_shape(m)?;
        let merged: Vec<f64> = out.data().iter().zip(m.data()).map(|(a, b)| a.max(*b)).collect();
        out = Grid::new(out.rows(), out.cols(), merged)?;
    }
    Ok(out)
}

/// Masks attached to one sample: at most one grid per pathology index, plus
/// semantic masks keyed by name. All grids share the image's shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskSet {
    pathology: BTreeMap<usize, Grid>,
    semantic: BTreeMap<String, Grid>,
}

impl MaskSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: Vec<(usize, Grid)>) -> Result<Self> {
        let mut ms = MaskSet::new();
        for (k, g) in pairs {
            ms.insert(k, g)?;
        }
        Ok(ms)
    }

    /// Insert a pathology mask. A second mask for the same index is OR-merged.
    pub fn insert(&mut self, index: usize, grid: Grid) -> Result<()> {
        check_range(&grid)?;
        self.check_shape(&grid)?;
        let merged = match self.pathology.remove(&index) {
            Some(prev) => merge_or(&[prev, grid])?,
            None => grid,
        };
        self.pathology.insert(index, merged);
        Ok(())
    }

    pub fn insert_semantic(&mut self, name: &str, grid: Grid) -> Result<()> {
        check_range(&grid)?;
        self.check_shape(&grid)?;
        let merged = match self.semantic.remove(name) {
            Some(prev) => merge_or(&[prev, grid])?,
            None => grid,
        };
        self.semantic.insert(name.to_string(), merged);
        Ok(())
    }

    fn check_shape(&self, grid: &Grid) -> Result<()> {
        match self.grids().next() {
            Some(g) => g.check_same_shape(grid),
            None => Ok(()),
        }
    }

    pub fn get(&self, index: usize) -> Option<&Grid> {
        self.pathology.get(&index)
    }

    pub fn semantic(&self, name: &str) -> Option<&Grid> {
        self.semantic.get(name)
    }

    pub fn pathology_masks(&self) -> &BTreeMap<usize, Grid> {
        &self.pathology
    }

    pub fn semantic_masks(&self) -> &BTreeMap<String, Grid> {
        &self.semantic
    }

    pub fn is_empty(&self) -> bool {
        self.pathology.is_empty() && self.semantic.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pathology.len() + self.semantic.len()
    }

    pub fn grids(&self) -> impl Iterator<Item = &Grid> {
        self.pathology.values().chain(self.semantic.values())
    }

    pub fn map_grids(&self, f: impl Fn(&Grid) -> Grid) -> MaskSet {
        MaskSet {
            pathology: self.pathology.iter().map(|(k, g)| (*k, f(g))).collect(),
            semantic: self.semantic.iter().map(|(k, g)| (k.clone(), f(g))).collect(),
        }
    }

    pub fn try_map_grids(&self, f: impl Fn(&Grid) -> Result<Grid>) -> Result<MaskSet> {
        let mut out = MaskSet::new();
        for (k, g) in &self.pathology {
            out.pathology.insert(*k, f(g)?);
        }
        for (k, g) in &self.semantic {
            out.semantic.insert(k.clone(), f(g)?);
        }
        Ok(out)
    }
}

fn check_range(grid: &Grid) -> Result<()> {
    if grid.data().iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("mask values must lie in [0, 1]".into()))
    }
}

/// What a mask annotation marks.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskTarget {
    Pathology(Pathology),
    Semantic(String),
}

/// One annotation attached to a dataset row.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskAnnotation {
    pub target: MaskTarget,
    pub geometry: MaskGeometry,
}

/// Build the mask set for one row, rasterized at the raw image size.
///
/// Annotations are keyed by their pathology's index in `pathologies`;
/// pathologies not in the list are skipped.
pub fn build_mask_set(
    annotations: &[MaskAnnotation],
    pathologies: &Taxonomy,
    rows: usize,
    cols: usize,
) -> Result<MaskSet> {
    let mut ms = MaskSet::new();
    for a in annotations {
        let grid = match rasterize(&a.geometry, rows, cols) {
            Ok(g) => g,
            Err(Error::DegenerateBox { .. }) => {
                log::warn!("skipping mask outside the {rows}x{cols} image: {:?}", a.geometry);
                continue;
            }
            Err(e) => return Err(e),
        };
        match &a.target {
            MaskTarget::Pathology(p) => {
                if let Some(i) = pathologies.index_of(p) {
                    ms.insert(i, grid)?;
                }
            }
            MaskTarget::Semantic(name) => ms.insert_semantic(name, grid)?,
        }
    }
    Ok(ms)
}

/// Where an adapter finds its masks.
///
/// Both kinds are indexed by a sidecar CSV with one row per annotation; box
/// sources read `x, y, w, h` columns, bitmap sources read a PNG filename
/// (8-bit, nonzero means inside) relative to `maskpath`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSource {
    Boxes {
        csvpath: String,
        image_column: String,
        label_column: String,
        #[serde(default = "default_x")]
        x_column: String,
        #[serde(default = "default_y")]
        y_column: String,
        #[serde(default = "default_w")]
        w_column: String,
        #[serde(default = "default_h")]
        h_column: String,
        #[serde(default)]
        semantic_labels: Vec<String>,
    },
    Bitmaps {
        csvpath: String,
        maskpath: String,
        image_column: String,
        label_column: String,
        mask_column: String,
        #[serde(default)]
        semantic_labels: Vec<String>,
    },
}

fn default_x() -> String {
    "x".into()
}
fn default_y() -> String {
    "y".into()
}
fn default_w() -> String {
    "w".into()
}
fn default_h() -> String {
    "h".into()
}

/// Enable or disable mask delivery on a dataset.
///
/// When enabled, every sample carries a mask set keyed by pathology index
/// (empty when the image has no masks) and `has_masks` reflects which rows
/// have any. Annotations naming a pathology outside `ds.pathologies()` are
/// dropped with a warning.
pub fn attach_masks(ds: &Dataset, enabled: bool) -> Result<Dataset> {
    let mut out = ds.clone();
    let n = out.len();
    if !enabled {
        out.masks_enabled = false;
        out.csv.set_column(columns::HAS_MASKS, vec![Some("false".into()); n])?;
        return Ok(out);
    }
    if !ds.has_mask_source() {
        return Err(Error::NoMaskSource(ds.name().to_string()));
    }
    let mut has = Vec::with_capacity(n);
    for i in 0..n {
        let kept: Vec<MaskAnnotation> = ds
            .mask_annotations(i)
            .iter()
            .filter(|a| match &a.target {
                MaskTarget::Pathology(p) if !ds.pathologies().contains(p) => {
                    log::warn!(
                        "{}: dropping mask for `{p}` on row {i}; not among the dataset pathologies",
                        ds.name()
                    );
                    false
                }
                _ => true,
            })
            .cloned()
            .collect();
        has.push(Some((!kept.is_empty()).to_string()));
        out.rows[i].masks = kept.into();
    }
    out.csv.set_column(columns::HAS_MASKS, has)?;
    out.masks_enabled = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: i64, y: i64, w: i64, h: i64) -> MaskGeometry {
        MaskGeometry::Box { x, y, w, h }
    }

    fn ones(g: &Grid) -> usize {
        g.data().iter().filter(|&&v| v == 1.0).count()
    }

    #[test]
    fn rasterize_boxes() {
        assert_eq!(ones(&rasterize(&bx(0, 0, 6, 3), 3, 6).unwrap()), 18);
        let g = rasterize(&bx(0, 0, 2, 2), 4, 4).unwrap();
        assert_eq!(ones(&g), 4);
        assert_eq!(g.get(1, 1), 1.0);
        assert_eq!(g.get(2, 2), 0.0);
        // partially outside: clipped
        assert_eq!(ones(&rasterize(&bx(-1, 3, 3, 5), 4, 4).unwrap()), 2);
        assert!(matches!(rasterize(&bx(-5, -5, 2, 2), 4, 4), Err(Error::DegenerateBox { .. })));
        assert!(rasterize(&bx(0, 0, 0, 2), 4, 4).is_err());
    }

    #[test]
    fn float_boxes_cover_whole_pixels() {
        assert_eq!(MaskGeometry::from_float_box(1.5, 0.2, 1.0, 1.0), bx(1, 0, 2, 2));
    }

    #[test]
    fn rasterize_bitmap_nearest() {
        let src = Grid::new(2, 2, vec![0.0, 255.0, 0.0, 0.0]).unwrap();
        let g = rasterize(&MaskGeometry::Bitmap(src.clone()), 4, 4).unwrap();
        assert_eq!(ones(&g), 4);
        assert_eq!(g.get(0, 3), 1.0);
        assert_eq!(g.get(2, 3), 0.0);
        let same = rasterize(&MaskGeometry::Bitmap(src), 2, 2).unwrap();
        assert_eq!(same.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn merge_or_counts() {
        let a = rasterize(&bx(0, 0, 2, 2), 4, 4).unwrap();
        let b = rasterize(&bx(2, 2, 2, 2), 4, 4).unwrap();
        let c = rasterize(&bx(1, 1, 2, 2), 4, 4).unwrap();
        assert_eq!(merge_or(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(ones(&merge_or(&[a.clone(), b]).unwrap()), 8);
        assert_eq!(ones(&merge_or(&[a.clone(), c]).unwrap()), 7);
        assert!(matches!(merge_or(&[a, Grid::filled(3, 3, 0.0)]), Err(Error::ShapeMismatch { .. })));
        assert!(merge_or(&[]).is_err());
    }

    #[test]
    fn mask_set_keeps_one_grid_per_pathology() {
        let mut ms = MaskSet::new();
        ms.insert(3, rasterize(&bx(0, 0, 2, 2), 4, 4).unwrap()).unwrap();
        ms.insert(3, rasterize(&bx(1, 1, 2, 2), 4, 4).unwrap()).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ones(ms.get(3).unwrap()), 7);
        assert!(ms.insert(1, Grid::filled(2, 2, 0.0)).is_err());
        assert!(ms.insert(1, Grid::filled(4, 4, 2.0)).is_err());
    }

    #[test]
    fn build_mask_set_keys_by_taxonomy_index() {
        let tax = Taxonomy::from_names(&["Effusion", "Lung Opacity"]).unwrap();
        let anns = vec![
            MaskAnnotation {
                target: MaskTarget::Pathology(Pathology::new("Lung Opacity").unwrap()),
                geometry: bx(0, 0, 2, 2),
            },
            MaskAnnotation {
                target: MaskTarget::Pathology(Pathology::new("Hernia").unwrap()),
                geometry: bx(0, 0, 2, 2),
            },
            MaskAnnotation { target: MaskTarget::Semantic("Lung".into()), geometry: bx(0, 0, 4, 4) },
        ];
        let ms = build_mask_set(&anns, &tax, 4, 4).unwrap();
        assert_eq!(ms.pathology_masks().keys().copied().collect::<Vec<_>>(), vec![1]);
        assert_eq!(ones(ms.semantic("Lung").unwrap()), 16);
    }

    #[test]
    fn mask_source_json() {
        let src: MaskSource = serde_json::from_str(
            r#"{"kind":"boxes","csvpath":"b.csv","image_column":"Image Index","label_column":"Finding Label"}"#,
        )
        .unwrap();
        assert!(matches!(src, MaskSource::Boxes { ref x_column, .. } if x_column == "x"));
    }

    #[test]
    fn attach_masks_sets_has_masks_and_keys() {
        use crate::dataset::tests::tiny;
        let ds = tiny("M", &["Effusion", "Mass"], vec![vec![1.0, 0.0]; 5]);
        assert!(matches!(attach_masks(&ds, true), Err(Error::NoMaskSource(_))));
        let ann = |name: &str| MaskAnnotation {
            target: MaskTarget::Pathology(Pathology::new(name).unwrap()),
            geometry: bx(0, 0, 2, 1),
        };
        let ds = ds
            .with_mask_annotations(vec![
                vec![ann("Mass")],
                vec![],
                vec![ann("Hernia")],
                vec![ann("Effusion"), ann("Effusion")],
                vec![],
            ])
            .unwrap();
        let off = attach_masks(&ds, false).unwrap();
        assert!(off.get_sample(0, None, None).unwrap().pathology_masks.is_none());

        let on = attach_masks(&ds, true).unwrap();
        let has = on.csv().column("has_masks").unwrap();
        let t = has.iter().filter(|v| **v == Some("true")).count();
        assert_eq!((has.len() - t, t), (3, 2));
        let s0 = on.get_sample(0, None, None).unwrap().pathology_masks.unwrap();
        assert_eq!(s0.pathology_masks().keys().copied().collect::<Vec<_>>(), vec![1]);
        assert!(on.get_sample(1, None, None).unwrap().pathology_masks.unwrap().is_empty());
        // the Hernia mask was dropped
        assert!(on.get_sample(2, None, None).unwrap().pathology_masks.unwrap().is_empty());
        let s3 = on.get_sample(3, None, None).unwrap().pathology_masks.unwrap();
        assert_eq!(ones(s3.get(0).unwrap()), 2);
    }
}
