//! Harmonized chest-radiograph datasets.
//!
//! Source datasets are described by JSON adapter profiles and loaded into a
//! common [`Dataset`] with tri-state labels over canonical pathology names.
//! Datasets compose through [`relabel`], [`merge`] and [`subset`], deliver
//! preprocessed samples through a seeded [`TransformChain`], and feed the
//! covariate-shift split builder and the calibration kernels.

pub mod calibration;
pub mod cli;
pub mod composition;
pub mod covariate;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod image;
pub mod ingestion;
pub mod io;
pub mod manifest;
pub mod masks;
pub mod rng;
pub mod table;
pub mod taxonomy;
pub mod transforms;

pub use calibration::{align_outputs, apply_opt, auc, op_point, roc, CalibrationParams, RocCurve, ScoredSet};
pub use composition::{filter_views, merge, relabel, subset, unique_patients, Predicate};
pub use covariate::{
    build_covariate, class_mean_difference, partition_pools, CovariateParams, CovariateSpec, CovariateSplit,
    Mode, Target,
};
pub use dataset::{Dataset, ImageRef, LabelTotals, Lineage, Origin, Sample, FORMAT_VERSION};
pub use error::{Error, Result};
pub use image::{decode_image, scale_pixels, Grid, ImageTensor, RawImage};
pub use ingestion::{load_dataset, AdapterProfile, LabelCoding, LoadReport};
pub use manifest::{read_manifest, write_manifest};
pub use masks::{attach_masks, merge_or, rasterize, MaskGeometry, MaskSet};
pub use taxonomy::{default_taxonomy, normalize_name, Pathology, Taxonomy, TriState};
pub use transforms::{augment, center_crop, resize_bilinear, AugmentationSpec, TransformChain};
