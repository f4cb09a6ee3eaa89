//! Python bindings. Library errors surface as `patchstyle.PatchstyleError`
//! with the message prefixed by the error class.

use ::patchstyle as core;
use core::image::GrayImage;
use core::nets::{Generator, IdentityTranslator, Translator};
use core::patches::{mine_all, MiningParams, StyleSpec};
use core::stylize::{stylize_independent, StylizeOptions};
use core::train::{train_with, TrainConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(patchstyle, PatchstyleError, PyValueError);

fn err(e: core::Error) -> PyErr {
    PatchstyleError::new_err(format!("{}: {e}", e.class()))
}

/// Grayscale image with values in [0, 1], 1 is paper.
#[pyclass(name = "Image", module = "patchstyle", from_py_object)]
#[derive(Clone)]
struct Image(GrayImage);

#[pymethods]
impl Image {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<f64>) -> PyResult<Self> {
        GrayImage::new(width, height, pixels)
            .map(Image)
            .map_err(err)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: f64) -> Self {
        Image(GrayImage::filled(width, height, value))
    }

    /// Reads a PNG or PGM file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        GrayImage::load(path).map(Image).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    /// Row-major pixel values.
    fn pixels(&self) -> Vec<f64> {
        self.0.pixels().to_vec()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f64> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!(
                "({x}, {y}) is outside the image"
            )));
        }
        Ok(self.0.get(x, y))
    }

    fn ink_count(&self) -> usize {
        self.0.ink_count()
    }

    fn mean_abs_diff(&self, other: &Image) -> PyResult<f64> {
        self.0.mean_abs_diff(&other.0).map_err(err)
    }

    fn __eq__(&self, other: &Image) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!(
            "Image({}x{}, ink={})",
            self.0.width(),
            self.0.height(),
            self.0.ink_count()
        )
    }
}

/// Aligned plain/styled training patches.
#[pyclass(name = "Dataset", module = "patchstyle")]
struct Dataset(core::patches::Dataset);

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        core::patches::Dataset::read(path).map(Dataset).map_err(err)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        self.0.write(path).map_err(err)
    }

    #[getter]
    fn patch_size(&self) -> usize {
        self.0.manifest.params.patch_size
    }

    /// `(plain, styled)` images of pair `i`.
    fn pair(&self, i: usize) -> PyResult<(Image, Image)> {
        let p = self
            .0
            .pairs
            .get(i)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(i))?;
        Ok((Image(p.plain.clone()), Image(p.styled.clone())))
    }

    fn __len__(&self) -> usize {
        self.0.pairs.len()
    }
}

/// Trained generator and discriminator weights.
#[pyclass(name = "Model", module = "patchstyle")]
struct Model(core::nets::Model);

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        core::nets::Model::load(path).map(Model).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    #[getter]
    fn generator_spec(&self) -> String {
        self.0.generator_spec.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(generator={}, discriminator={})",
            self.0.generator_spec, self.0.discriminator_spec
        )
    }
}

/// Random binary line drawing.
#[pyfunction]
fn draw_sketch(width: usize, height: usize, seed: u64) -> Image {
    Image(core::sketch::draw(width, height, seed))
}

#[pyfunction]
#[pyo3(signature = (plain, style = "stripes:6:0:3"))]
fn synth_style(plain: &Image, style: &str) -> PyResult<Image> {
    let spec: StyleSpec = style.parse().map_err(err)?;
    Ok(Image(core::patches::synth_style(&plain.0, &spec)))
}

#[pyfunction]
#[pyo3(signature = (exemplars, patch_size = 64, rotation_step = 8, stride = 8))]
fn mine(
    exemplars: Vec<(Image, Image)>,
    patch_size: usize,
    rotation_step: u32,
    stride: usize,
) -> PyResult<Dataset> {
    let params = MiningParams {
        patch_size,
        rotation_step,
        stride,
        ..MiningParams::default()
    };
    let names = (0..exemplars.len())
        .map(|i| format!("exemplar{i}"))
        .collect();
    let pairs: Vec<_> = exemplars.into_iter().map(|(p, s)| (p.0, s.0)).collect();
    let mined = mine_all(&pairs, &params).map_err(err)?;
    Ok(Dataset(core::patches::Dataset::new(params, names, mined)))
}

/// Trains on `dataset`. Keyword options use the config-file keys
/// (`iterations`, `batch_size`, `losses`, `seed`, ...). Returns the model
/// and the loss trace as a list of dicts.
#[pyfunction]
#[pyo3(signature = (dataset, **options))]
fn train<'py>(
    py: Python<'py>,
    dataset: &Dataset,
    options: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Model, Vec<Bound<'py, PyDict>>)> {
    let mut cfg = TrainConfig {
        patch_size: dataset.0.manifest.params.patch_size,
        ..TrainConfig::default()
    };
    let mut kv = Vec::new();
    if let Some(options) = options {
        for (k, v) in options.iter() {
            kv.push((k.str()?.to_string(), v.str()?.to_string()));
        }
    }
    cfg.apply_kv(&kv).map_err(err)?;
    let out = train_with(&dataset.0.pairs, &cfg, None, |_| {}).map_err(err)?;
    let mut trace = Vec::with_capacity(out.trace.len());
    for r in &out.trace {
        let d = PyDict::new(py);
        d.set_item("iteration", r.iteration)?;
        d.set_item("l1", r.l1)?;
        d.set_item("adv_g", r.adv_g)?;
        d.set_item("shape", r.shape)?;
        d.set_item("d_real", r.d_real)?;
        d.set_item("d_fake", r.d_fake)?;
        trace.push(d);
    }
    Ok((Model(out.model), trace))
}

/// Stylizes `sketch` with `model`, or passes windows through unchanged when
/// `model` is None.
#[pyfunction]
#[pyo3(signature = (sketch, model = None, patch_size = 64, overlap = 16, root = "raster", order = "bfs", pre = None, independent = false))]
#[allow(clippy::too_many_arguments)]
fn stylize(
    sketch: &Image,
    model: Option<&Model>,
    patch_size: usize,
    overlap: usize,
    root: &str,
    order: &str,
    pre: Option<&str>,
    independent: bool,
) -> PyResult<Image> {
    let translator: Box<dyn Translator> = match model {
        Some(m) => Box::new(Generator::from_model(&m.0)),
        None => Box::new(IdentityTranslator),
    };
    let opts = StylizeOptions {
        patch_size,
        overlap,
        root: root.parse().map_err(err)?,
        order: order.parse().map_err(err)?,
        pre: pre.map(str::parse).transpose().map_err(err)?,
        ..StylizeOptions::default()
    };
    let out = if independent {
        let input = opts
            .pre
            .map_or_else(|| sketch.0.clone(), |op| op.apply(&sketch.0));
        stylize_independent(&input, translator.as_ref(), patch_size)
    } else {
        core::stylize::stylize(&sketch.0, translator.as_ref(), &opts).map(|s| s.image)
    };
    out.map(Image).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (image, patch_size = 64, overlap = 16))]
fn seam_metric(image: &Image, patch_size: usize, overlap: usize) -> PyResult<f64> {
    core::stylize::seam_metric(&image.0, patch_size, overlap).map_err(err)
}

/// Finite-difference suite as `(name, coordinates, max_rel_error)` tuples.
#[pyfunction]
#[pyo3(signature = (seed = 11))]
fn gradcheck(seed: u64) -> PyResult<Vec<(String, usize, f64)>> {
    let reports = core::gradcheck::full_suite(seed).map_err(err)?;
    Ok(reports
        .into_iter()
        .map(|r| (r.name, r.checked, r.max_rel_error))
        .collect())
}

#[pymodule(name = "patchstyle")]
fn patchstyle_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PatchstyleError", m.py().get_type::<PatchstyleError>())?;
    m.add_class::<Image>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(draw_sketch, m)?)?;
    m.add_function(wrap_pyfunction!(synth_style, m)?)?;
    m.add_function(wrap_pyfunction!(mine, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(stylize, m)?)?;
    m.add_function(wrap_pyfunction!(seam_metric, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
