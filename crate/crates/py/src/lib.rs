use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use oocs_core::gradcheck::{run_grid, GridOptions, BLOCK_TOLERANCE};
use oocs_core::interp::Interpolation;
use oocs_core::kernel::{DEFAULT_C, DEFAULT_GAMMA};
use oocs_core::losses::PredictionPair;
use oocs_core::perturb::{DEFAULT_MOTION_MAX_ROT_DEG, DEFAULT_MOTION_MAX_TRANS_MM};
use oocs_core::preprocess::ResampleSpec;
use oocs_core::tensor::FeatureMap;
use oocs_core::volio::LoadedVolume;
use oocs_core::{
    export, filter, kernel, losses, metrics, perturb, preprocess, volio, BalancedKernel,
    BinaryMask, ErrorClass, KernelDims, KernelSpec, Padding, Polarity,
};

fn to_py(e: oocs_core::Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Config => PyValueError::new_err(msg),
        ErrorClass::Io => PyOSError::new_err(msg),
        ErrorClass::Numeric => PyArithmeticError::new_err(msg),
    }
}

/// Dense 3D volume in `(z, y, x)` order with spacing in mm.
#[pyclass(name = "Volume", module = "oocs", from_py_object)]
#[derive(Clone)]
struct PyVolume {
    inner: oocs_core::Volume,
}

#[pymethods]
impl PyVolume {
    #[new]
    #[pyo3(signature = (data, shape, spacing = (1.0, 1.0, 1.0)))]
    fn new(data: Vec<f64>, shape: (usize, usize, usize), spacing: (f64, f64, f64)) -> PyResult<Self> {
        let inner = oocs_core::Volume::new(
            data,
            [shape.0, shape.1, shape.2],
            [spacing.0, spacing.1, spacing.2],
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let s = self.inner.shape();
        (s[0], s[1], s[2])
    }

    #[getter]
    fn spacing(&self) -> (f64, f64, f64) {
        let s = self.inner.spacing();
        (s[0], s[1], s[2])
    }

    /// Flat copy of the voxels.
    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, z: usize, y: usize, x: usize) -> PyResult<f64> {
        let s = self.inner.shape();
        if z >= s[0] || y >= s[1] || x >= s[2] {
            return Err(PyValueError::new_err(format!("index ({z}, {y}, {x}) out of bounds")));
        }
        Ok(self.inner.get(z, y, x))
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Volume(shape={:?}, spacing={:?})", self.inner.shape(), self.inner.spacing())
    }
}

fn wrap(inner: oocs_core::Volume) -> PyVolume {
    PyVolume { inner }
}

fn as_mask(v: &PyVolume, threshold: f64) -> BinaryMask {
    BinaryMask::threshold(&v.inner, threshold)
}

/// Balanced On or Off center-surround kernel.
#[pyclass(name = "Kernel", module = "oocs", from_py_object)]
#[derive(Clone)]
struct PyKernel {
    inner: BalancedKernel,
}

#[pymethods]
impl PyKernel {
    #[getter]
    fn k(&self) -> usize {
        self.inner.spec().k
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.spec().dims.rank()
    }

    #[getter]
    fn polarity(&self) -> &'static str {
        match self.inner.polarity() {
            Polarity::On => "on",
            Polarity::Off => "off",
        }
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.derivation().sigma
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn sum_positive(&self) -> f64 {
        self.inner.sum_positive()
    }

    fn sum_negative(&self) -> f64 {
        self.inner.sum_negative()
    }

    fn negated(&self) -> Self {
        Self {
            inner: self.inner.negated(),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        export::kernel_to_json(&self.inner).map_err(to_py)
    }

    fn to_csv(&self) -> String {
        export::kernel_to_csv(&self.inner)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = export::kernel_from_json(text).map_err(to_py)?;
        Ok(Self { inner })
    }
}

#[pyfunction]
#[pyo3(signature = (r_center, gamma = DEFAULT_GAMMA))]
fn compute_sigma(r_center: f64, gamma: f64) -> PyResult<f64> {
    kernel::compute_sigma(r_center, gamma).map_err(to_py)
}

fn kernel_spec(k: usize, gamma: f64, c: f64, dims: usize) -> PyResult<KernelSpec> {
    let dims = KernelDims::from_rank(dims).map_err(to_py)?;
    KernelSpec::new(k, gamma, c, dims).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (k, gamma = DEFAULT_GAMMA, c = DEFAULT_C, dims = 3, polarity = "on"))]
fn make_kernel(k: usize, gamma: f64, c: f64, dims: usize, polarity: &str) -> PyResult<PyKernel> {
    let polarity: Polarity = polarity.parse().map_err(to_py)?;
    let inner = kernel::make_kernel(&kernel_spec(k, gamma, c, dims)?, polarity).map_err(to_py)?;
    Ok(PyKernel { inner })
}

/// Returns `(on, off)` responses.
#[pyfunction]
#[pyo3(signature = (volume, k = 3, gamma = DEFAULT_GAMMA, c = DEFAULT_C, padding = "same_zero"))]
fn on_off_responses(
    volume: &PyVolume,
    k: usize,
    gamma: f64,
    c: f64,
    padding: &str,
) -> PyResult<(PyVolume, PyVolume)> {
    let padding: Padding = padding.parse().map_err(to_py)?;
    let r = filter::on_off_responses(&volume.inner, &kernel_spec(k, gamma, c, 3)?, padding)
        .map_err(to_py)?;
    Ok((wrap(r.on), wrap(r.off)))
}

#[pyfunction]
fn gaussian_blur(volume: &PyVolume, sigma: f64) -> PyResult<PyVolume> {
    perturb::gaussian_blur(&volume.inner, sigma).map(wrap).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (volume, sigma, seed = 0))]
fn gaussian_noise(volume: &PyVolume, sigma: f64, seed: u64) -> PyResult<PyVolume> {
    perturb::gaussian_noise(&volume.inner, sigma, seed).map(wrap).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (volume, n_transforms, seed = 0, max_rot = DEFAULT_MOTION_MAX_ROT_DEG, max_trans = DEFAULT_MOTION_MAX_TRANS_MM))]
fn motion_artifact(
    volume: &PyVolume,
    n_transforms: usize,
    seed: u64,
    max_rot: f64,
    max_trans: f64,
) -> PyResult<PyVolume> {
    perturb::motion_artifact(&volume.inner, n_transforms, max_rot, max_trans, seed)
        .map(wrap)
        .map_err(to_py)
}

/// Dice coefficient of two volumes binarized at `threshold`.
#[pyfunction]
#[pyo3(signature = (a, b, threshold = 0.5))]
fn dice(a: &PyVolume, b: &PyVolume, threshold: f64) -> PyResult<f64> {
    metrics::dice(&as_mask(a, threshold), &as_mask(b, threshold)).map_err(to_py)
}

/// Symmetric Hausdorff distance in mm of two volumes binarized at `threshold`.
#[pyfunction]
#[pyo3(signature = (a, b, threshold = 0.5))]
fn hausdorff_mm(a: &PyVolume, b: &PyVolume, threshold: f64) -> PyResult<f64> {
    metrics::hausdorff_mm(&as_mask(a, threshold), &as_mask(b, threshold)).map_err(to_py)
}

/// Returns `(loss, grad)` with the gradient taken with respect to the logits.
#[pyfunction]
#[pyo3(signature = (logits, target, w_bce = 1.0, w_dice = 1.0, epsilon = 1e-6))]
fn bce_dice_loss(
    logits: &PyVolume,
    target: &PyVolume,
    w_bce: f64,
    w_dice: f64,
    epsilon: f64,
) -> PyResult<(f64, PyVolume)> {
    let pair = PredictionPair::new(
        FeatureMap::from_volume(&logits.inner),
        target.inner.data().to_vec(),
        epsilon,
    )
    .map_err(to_py)?;
    let out = losses::bce_dice_loss(&pair, w_bce, w_dice).map_err(to_py)?;
    let grad = out
        .grad
        .channel_volume(0, logits.inner.spacing())
        .map_err(to_py)?;
    Ok((out.value, wrap(grad)))
}

/// Reads a volume; masks come back as 0/1 volumes with `is_mask` set.
#[pyfunction]
fn read_volume(path: std::path::PathBuf) -> PyResult<(PyVolume, bool)> {
    Ok(match volio::read_volume(&path).map_err(to_py)? {
        LoadedVolume::Image(v) => (wrap(v), false),
        LoadedVolume::Mask(m) => (wrap(m.to_volume()), true),
    })
}

#[pyfunction]
fn write_volume(volume: &PyVolume, path: std::path::PathBuf) -> PyResult<()> {
    volio::write_volume(&volume.inner, &path).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (volume, path, threshold = 0.5))]
fn write_mask(volume: &PyVolume, path: std::path::PathBuf, threshold: f64) -> PyResult<()> {
    volio::write_mask(&as_mask(volume, threshold), &path).map_err(to_py)
}

/// Resamples to `spacing` given in `(z, y, x)` order.
#[pyfunction]
#[pyo3(signature = (volume, spacing, mode = "trilinear"))]
fn resample(volume: &PyVolume, spacing: (f64, f64, f64), mode: &str) -> PyResult<PyVolume> {
    let mode: Interpolation = mode.parse().map_err(to_py)?;
    let spec = ResampleSpec::new([spacing.0, spacing.1, spacing.2], mode).map_err(to_py)?;
    preprocess::resample(&volume.inner, &spec).map(wrap).map_err(to_py)
}

#[pyfunction]
fn crop_or_pad(volume: &PyVolume, shape: (usize, usize, usize)) -> PyResult<PyVolume> {
    preprocess::crop_or_pad(&volume.inner, [shape.0, shape.1, shape.2])
        .map(wrap)
        .map_err(to_py)
}

#[pyfunction]
fn zscore(volume: &PyVolume) -> PyResult<PyVolume> {
    preprocess::zscore(&volume.inner).map(wrap).map_err(to_py)
}

/// Block gradient-check grid; one dict per cell.
#[pyfunction]
#[pyo3(signature = (seeds = 2, limit = Some(24), spatial = (5, 5, 5), base_seed = 0, tolerance = BLOCK_TOLERANCE))]
fn gradcheck_grid<'py>(
    py: Python<'py>,
    seeds: usize,
    limit: Option<usize>,
    spatial: (usize, usize, usize),
    base_seed: u64,
    tolerance: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let opts = GridOptions {
        spatial: [spatial.0, spatial.1, spatial.2],
        seeds,
        base_seed,
        limit,
        tolerance,
    };
    let rows = py.detach(|| run_grid(&opts)).map_err(to_py)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("k_oocs", r.k_oocs)?;
            d.set_item("c_in", r.c_in)?;
            d.set_item("c_out", r.c_out)?;
            d.set_item("seeds", r.seeds)?;
            d.set_item("max_rel_error", r.max_rel_error)?;
            d.set_item("checked", r.checked)?;
            d.set_item("skipped", r.skipped)?;
            d.set_item("pass", r.pass)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn oocs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVolume>()?;
    m.add_class::<PyKernel>()?;
    m.add_function(wrap_pyfunction!(compute_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(make_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(on_off_responses, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_blur, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_noise, m)?)?;
    m.add_function(wrap_pyfunction!(motion_artifact, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff_mm, m)?)?;
    m.add_function(wrap_pyfunction!(bce_dice_loss, m)?)?;
    m.add_function(wrap_pyfunction!(read_volume, m)?)?;
    m.add_function(wrap_pyfunction!(write_volume, m)?)?;
    m.add_function(wrap_pyfunction!(write_mask, m)?)?;
    m.add_function(wrap_pyfunction!(resample, m)?)?;
    m.add_function(wrap_pyfunction!(crop_or_pad, m)?)?;
    m.add_function(wrap_pyfunction!(zscore, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck_grid, m)?)?;
    Ok(())
}
