//! Python bindings. Images are nested lists `[row][col]` of floats; feature
//! maps are `[depth][row][col]`.

use ndarray::{Array1, Array2, Array3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use layerwise_core::augment;
use layerwise_core::committee::{self, NormalizeMode, ScoreTable};
use layerwise_core::config::{self, NetworkConfig};
use layerwise_core::container::Container;
use layerwise_core::layer;
use layerwise_core::network::{self, extract_training_descriptors};
use layerwise_core::patch;
use layerwise_core::stl10::{self, LabeledImage};
use layerwise_core::store;
use layerwise_core::svm::{self, Descriptor, ScoreVector};
use layerwise_core::synthetic;
use layerwise_core::{Error, FeatureMapSet};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_array2(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("ragged image rows"));
    }
    Array2::from_shape_vec((h, w), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn from_array2(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_images(images: Vec<Vec<Vec<f64>>>, labels: Option<Vec<usize>>) -> PyResult<Vec<LabeledImage>> {
    let labels = labels.unwrap_or_else(|| vec![0; images.len()]);
    if labels.len() != images.len() {
        return Err(PyValueError::new_err("images and labels differ in length"));
    }
    images
        .iter()
        .zip(labels)
        .map(|(img, l)| Ok(LabeledImage::new(to_array2(img)?, l)))
        .collect()
}

fn to_descriptors(rows: Vec<Vec<f64>>) -> Vec<Descriptor> {
    rows.into_iter()
        .enumerate()
        .map(|(i, v)| Descriptor::new(Array1::from(v), i as u64))
        .collect()
}

fn to_table(id: String, rows: Vec<Vec<f64>>) -> PyResult<ScoreTable> {
    let n = rows.len() as u64;
    ScoreTable::new(id, rows.into_iter().map(ScoreVector::raw).collect(), (0..n).collect()).map_err(py_err)
}

/// A trained two-layer network.
#[pyclass(name = "Network", module = "layerwise")]
struct PyNetwork {
    inner: network::Network,
}

#[pymethods]
impl PyNetwork {
    /// Learns both layers from `images` using a network config in TOML form.
    #[staticmethod]
    #[pyo3(signature = (config, images, labels=None))]
    fn train(config: &str, images: Vec<Vec<Vec<f64>>>, labels: Option<Vec<usize>>) -> PyResult<Self> {
        let cfg = NetworkConfig::from_toml(config).map_err(py_err)?;
        let images = to_images(images, labels)?;
        let inner = network::train_network(&cfg, &images).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: network::Network::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    fn descriptors(&self, images: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
        let images = to_images(images, None)?;
        let d = network::extract_descriptors(&self.inner, &images).map_err(py_err)?;
        Ok(d.into_iter().map(|d| d.values.to_vec()).collect())
    }

    /// Descriptors and labels of the augmented training set.
    fn training_descriptors(
        &self,
        images: Vec<Vec<Vec<f64>>>,
        labels: Vec<usize>,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
        let images = to_images(images, Some(labels))?;
        let (d, l) = extract_training_descriptors(&self.inner, &images).map_err(py_err)?;
        Ok((d.into_iter().map(|d| d.values.to_vec()).collect(), l))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.config.name.clone()
    }

    #[getter]
    fn filter_count(&self) -> usize {
        self.inner.filter_count()
    }

    #[getter]
    fn descriptor_dim(&self) -> PyResult<usize> {
        self.inner.descriptor_dim().map_err(py_err)
    }

    fn config(&self) -> PyResult<String> {
        self.inner.config.to_toml().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Network(name={:?}, filters={})", self.inner.config.name, self.inner.filter_count())
    }
}

/// One-vs-all linear SVM.
#[pyclass(name = "SvmModel", module = "layerwise")]
struct PySvmModel {
    inner: svm::SvmModel,
}

#[pymethods]
impl PySvmModel {
    #[staticmethod]
    #[pyo3(signature = (descriptors, labels, reg_c=1.0))]
    fn train(descriptors: Vec<Vec<f64>>, labels: Vec<usize>, reg_c: f64) -> PyResult<Self> {
        let inner = svm::train_ova_svm(&to_descriptors(descriptors), &labels, reg_c).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let c = Container::load(path).map_err(py_err)?;
        Ok(Self {
            inner: store::svm_from_container(&c).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        store::svm_to_container(&self.inner).save(path).map_err(py_err)
    }

    fn scores(&self, descriptors: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        to_descriptors(descriptors)
            .iter()
            .map(|d| self.inner.score(d).map(|s| s.scores).map_err(py_err))
            .collect()
    }

    fn predict(&self, descriptors: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        Ok(self.scores(descriptors)?.iter().map(|s| svm::argmax(s)).collect())
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn reg_c(&self) -> f64 {
        self.inner.reg_c
    }
}

/// Names of the built-in network presets.
#[pyfunction]
fn presets() -> Vec<String> {
    config::PRESETS.iter().map(|s| s.to_string()).collect()
}

/// A built-in network config as TOML.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    config::preset(name).and_then(|c| c.to_toml()).map_err(py_err)
}

/// Fuses per-network score tables (`[network][image][class]`) and returns
/// the predicted class per image.
#[pyfunction]
#[pyo3(signature = (tables, per_network=false))]
fn committee_predict(tables: Vec<Vec<Vec<f64>>>, per_network: bool) -> PyResult<Vec<usize>> {
    let tables = tables
        .into_iter()
        .enumerate()
        .map(|(i, t)| to_table(format!("net{i}"), t))
        .collect::<PyResult<Vec<_>>>()?;
    let mode = if per_network {
        NormalizeMode::PerNetwork
    } else {
        NormalizeMode::PerImage
    };
    committee::committee_predict_raw(&tables, mode).map_err(py_err)
}

#[pyfunction]
fn minmax_normalize(scores: Vec<f64>) -> Vec<f64> {
    committee::minmax_normalize(&ScoreVector::raw(scores)).scores
}

#[pyfunction]
fn accuracy(predictions: Vec<usize>, labels: Vec<usize>) -> PyResult<f64> {
    committee::accuracy(&predictions, &labels).map_err(py_err)
}

#[pyfunction]
fn format_score_file(network_id: String, scores: Vec<Vec<f64>>) -> PyResult<String> {
    Ok(committee::format_score_file(&to_table(network_id, scores)?))
}

#[pyfunction]
fn normalize_patch(x: Vec<f64>) -> Vec<f64> {
    patch::normalize_patch(&x)
}

#[pyfunction]
fn to_grayscale(r: f64, g: f64, b: f64) -> f64 {
    stl10::to_grayscale(r, g, b)
}

#[pyfunction]
fn mirror(image: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let img = LabeledImage::new(to_array2(&image)?, 0);
    Ok(from_array2(&augment::mirror_lr(&img).pixels))
}

/// Counter-clockwise rotation about the image center, |angle| <= 45.
#[pyfunction]
fn rotate(image: Vec<Vec<f64>>, angle_deg: f64) -> PyResult<Vec<Vec<f64>>> {
    let img = LabeledImage::new(to_array2(&image)?, 0);
    Ok(from_array2(&augment::rotate(&img, angle_deg).map_err(py_err)?.pixels))
}

#[pyfunction]
fn scale(image: Vec<Vec<f64>>, factor: f64) -> PyResult<Vec<Vec<f64>>> {
    let img = LabeledImage::new(to_array2(&image)?, 0);
    Ok(from_array2(&augment::scale(&img, factor).map_err(py_err)?.pixels))
}

/// Lp pooling over `[depth][row][col]` maps.
#[pyfunction]
fn pool(maps: Vec<Vec<Vec<f64>>>, side: usize, stride: usize, alpha: f64) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let d = maps.len();
    let planes = maps.iter().map(|m| to_array2(m)).collect::<PyResult<Vec<_>>>()?;
    let (h, w) = planes.first().map_or((0, 0), |p| p.dim());
    if planes.iter().any(|p| p.dim() != (h, w)) {
        return Err(PyValueError::new_err("maps differ in size"));
    }
    let x = Array3::from_shape_fn((d, h, w), |(k, i, j)| planes[k][[i, j]]);
    let set = FeatureMapSet::new(x, 0).map_err(py_err)?;
    let out = layer::pool(&set, side, stride, alpha).map_err(py_err)?;
    Ok((0..out.depth()).map(|k| from_array2(&out.map(k).to_owned())).collect())
}

/// Two-class oriented stripe images: returns `(images, labels)`.
#[pyfunction]
#[pyo3(signature = (seed, n, side=64, noise=0.35))]
fn stripe_dataset(seed: u64, n: usize, side: usize, noise: f64) -> (Vec<Vec<Vec<f64>>>, Vec<usize>) {
    let data = synthetic::stripe_dataset(seed, n, side, noise);
    (
        data.iter().map(|i| from_array2(&i.pixels)).collect(),
        data.iter().map(|i| i.label).collect(),
    )
}

#[pymodule]
fn layerwise(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PySvmModel>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(committee_predict, m)?)?;
    m.add_function(wrap_pyfunction!(minmax_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(format_score_file, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_patch, m)?)?;
    m.add_function(wrap_pyfunction!(to_grayscale, m)?)?;
    m.add_function(wrap_pyfunction!(mirror, m)?)?;
    m.add_function(wrap_pyfunction!(rotate, m)?)?;
    m.add_function(wrap_pyfunction!(scale, m)?)?;
    m.add_function(wrap_pyfunction!(pool, m)?)?;
    m.add_function(wrap_pyfunction!(stripe_dataset, m)?)?;
    Ok(())
}
