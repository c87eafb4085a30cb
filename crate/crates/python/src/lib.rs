//! Python bindings. Images and masks cross the boundary as nested lists of
//! floats; labels use NaN for unknown.

use std::path::PathBuf;

use core::{Error, Grid, Pathology};
use cxr_harmon as core;
use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn rows(g: &Grid) -> Vec<Vec<f64>> {
    g.data().chunks(g.cols()).map(<[f64]>::to_vec).collect()
}

fn pathologies(names: &[String]) -> PyResult<Vec<Pathology>> {
    names.iter().map(|n| Pathology::new(n)).collect::<core::Result<_>>().py()
}

fn scored(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<core::ScoredSet> {
    core::ScoredSet::new(scores, labels).py()
}

/// A harmonized dataset.
#[pyclass(name = "Dataset", module = "cxr_harmon", frozen)]
struct PyDataset {
    inner: core::Dataset,
}

fn wrap(inner: core::Dataset) -> PyDataset {
    PyDataset { inner }
}

#[pymethods]
impl PyDataset {
    /// Load an adapter profile (`.json`) or a manifest (`.csv`).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        core::cli::load_input(&path).py().map(wrap)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn pathologies(&self) -> Vec<String> {
        self.inner.pathologies().iter().map(Pathology::to_string).collect()
    }

    #[getter]
    fn views(&self) -> Vec<String> {
        self.inner.views()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        self.inner.render_summary()
    }

    /// Label matrix, one row per sample; NaN marks unknown.
    fn labels(&self) -> Vec<Vec<f64>> {
        self.inner.labels().to_f64_rows()
    }

    /// `{pathology: {0: absent, 1: present}}` in pathology order.
    fn totals<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for (p, c) in &self.inner.totals().0 {
            let counts = PyDict::new(py);
            counts.set_item(0, c.absent)?;
            counts.set_item(1, c.present)?;
            out.set_item(p.as_str(), counts)?;
        }
        Ok(out)
    }

    /// Metadata cell for row `i`, or None.
    fn meta(&self, i: usize, column: &str) -> Option<String> {
        self.inner.csv().get(i, column).map(str::to_string)
    }

    /// Load sample `i`. `transform` is a chain such as `"crop,resize:224,augment"`.
    #[pyo3(signature = (i, transform=None, seed=None))]
    fn get_sample<'py>(
        &self,
        py: Python<'py>,
        i: usize,
        transform: Option<&str>,
        seed: Option<u64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let chain: Option<core::TransformChain> = transform.map(str::parse).transpose().py()?;
        let s = self.inner.get_sample(i, chain.as_ref(), seed).py()?;
        let out = PyDict::new(py);
        out.set_item("idx", s.index)?;
        out.set_item("img", rows(&s.img))?;
        out.set_item("lab", s.lab.iter().map(|t| t.to_f64()).collect::<Vec<_>>())?;
        if let Some(ms) = &s.pathology_masks {
            let masks = PyDict::new(py);
            for (k, g) in ms.pathology_masks() {
                masks.set_item(k, rows(g))?;
            }
            out.set_item("pathology_masks", masks)?;
        }
        Ok(out)
    }

    /// Write the dataset as a manifest csv.
    fn write_manifest(&self, path: PathBuf) -> PyResult<()> {
        core::write_manifest(&path, &self.inner).py()
    }

    /// Enable or disable pathology masks.
    fn with_masks(&self, enabled: bool) -> PyResult<Self> {
        core::attach_masks(&self.inner, enabled).py().map(wrap)
    }
}

#[pyfunction]
fn merge(datasets: Vec<PyRef<'_, PyDataset>>) -> PyResult<PyDataset> {
    let parts: Vec<core::Dataset> = datasets.iter().map(|d| d.inner.clone()).collect();
    core::merge(&parts).py().map(wrap)
}

#[pyfunction]
fn subset(ds: &PyDataset, indices: Vec<usize>) -> PyResult<PyDataset> {
    core::subset(&ds.inner, &indices).py().map(wrap)
}

/// Returns the relabelled dataset and the names that were dropped.
#[pyfunction]
fn relabel(ds: &PyDataset, target: Vec<String>) -> PyResult<(PyDataset, Vec<String>)> {
    let (out, dropped) = core::relabel(&ds.inner, &pathologies(&target)?).py()?;
    Ok((wrap(out), dropped.iter().map(Pathology::to_string).collect()))
}

#[pyfunction]
fn filter_views(ds: &PyDataset, views: Vec<String>) -> PyResult<PyDataset> {
    let views: Vec<&str> = views.iter().map(String::as_str).collect();
    core::filter_views(&ds.inner, &views).py().map(wrap)
}

#[pyfunction]
fn unique_patients(ds: &PyDataset) -> PyResult<PyDataset> {
    core::unique_patients(&ds.inner).py().map(wrap)
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    core::auc(&scored(scores, labels)?).py()
}

#[pyfunction]
fn op_point(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    core::op_point(&scored(scores, labels)?).py()
}

/// `(thresholds, tpr, fpr)` with thresholds descending.
#[pyfunction]
fn roc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let c = core::roc(&scored(scores, labels)?).py()?;
    Ok((c.thresholds, c.tpr, c.fpr))
}

#[pyfunction]
fn apply_opt(x: f64, opt: f64) -> PyResult<f64> {
    core::apply_opt(x, opt).py()
}

/// Center crop then bilinear resize of a 2D image given as rows.
#[pyfunction]
fn crop_resize(img: Vec<Vec<f64>>, res: usize) -> PyResult<Vec<Vec<f64>>> {
    let cols = img.first().map_or(0, Vec::len);
    let grid = Grid::new(img.len(), cols, img.concat()).py()?;
    Ok(rows(&core::resize_bilinear(&core::center_crop(&grid), res).py()?))
}

/// Build a covariate-shift split; returns the dataset and its manifest text.
#[pyfunction]
#[pyo3(signature = (d1, d2, target, ratio, mode="train", seed=0))]
fn covariate(
    d1: &PyDataset,
    d2: &PyDataset,
    target: &str,
    ratio: f64,
    mode: &str,
    seed: u64,
) -> PyResult<(PyDataset, String)> {
    let mode: core::Mode = mode.parse().py()?;
    let spec = core::CovariateSpec {
        d1: d1.inner.clone(),
        d2: d2.inner.clone(),
        params: core::CovariateParams::new(target, mode, ratio, seed),
    };
    let split = core::build_covariate(&spec).py()?;
    let text = String::from_utf8_lossy(&split.manifest_bytes().py()?).into_owned();
    Ok((wrap(split.dataset), text))
}

/// Mean positive image minus mean negative image at `res`×`res`.
#[pyfunction]
fn class_mean_difference(ds: &PyDataset, target: &str, res: usize) -> PyResult<Vec<Vec<f64>>> {
    let p = Pathology::new(target).py()?;
    Ok(rows(&core::class_mean_difference(&ds.inner, &p, res).py()?))
}

#[pyfunction]
fn normalize_name(name: &str) -> PyResult<String> {
    core::normalize_name(name).py().map(|p| p.to_string())
}

#[pymodule]
#[pyo3(name = "cxr_harmon")]
fn cxr_harmon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(merge, m)?)?;
    m.add_function(wrap_pyfunction!(subset, m)?)?;
    m.add_function(wrap_pyfunction!(relabel, m)?)?;
    m.add_function(wrap_pyfunction!(filter_views, m)?)?;
    m.add_function(wrap_pyfunction!(unique_patients, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(op_point, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(apply_opt, m)?)?;
    m.add_function(wrap_pyfunction!(crop_resize, m)?)?;
    m.add_function(wrap_pyfunction!(covariate, m)?)?;
    m.add_function(wrap_pyfunction!(class_mean_difference, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_name, m)?)?;
    Ok(())
}
