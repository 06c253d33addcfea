//! Python bindings for the stereo augmentation workbench.
//!
//! Build the importable module with
//!
//! ```text
//! cargo build -p ugda-py --features extension-module
//! cp target/debug/libugda_py.so ugda_py.so   # anywhere on sys.path
//! ```
//!
//! Images and disparity maps cross the boundary as flat lists plus
//! dimensions (row-major, channels interleaved for images), so the module
//! has no numpy dependency; converting to arrays on the Python side is a
//! single `np.asarray(img.data()).reshape(h, w, c)`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ugda_core::augment::{AugmentConfig, ClipPolicy, PairMode};
use ugda_core::image::{ImageF, StereoPair};
use ugda_core::loss::{ConsNorm, LossConfig, ToyExtractor};
use ugda_core::rng::Side;
use ugda_core::stereo::{Directions, DisparityMap, SgmParams};
use ugda_core::Error;

fn into_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::MissingPath(_) | Error::Codec(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_pair_mode(s: &str) -> PyResult<PairMode> {
    match s {
        "shared" => Ok(PairMode::Shared),
        "independent" => Ok(PairMode::Independent),
        _ => Err(PyValueError::new_err(format!(
            "pair_mode must be 'shared' or 'independent', got {s:?}"
        ))),
    }
}

fn parse_clip(s: &str) -> PyResult<ClipPolicy> {
    match s {
        "none" => Ok(ClipPolicy::None),
        "clip01" => Ok(ClipPolicy::Clip01),
        _ => Err(PyValueError::new_err(format!(
            "clip must be 'none' or 'clip01', got {s:?}"
        ))),
    }
}

fn parse_directions(s: &str) -> PyResult<Directions> {
    match s {
        "four" => Ok(Directions::Four),
        "eight" => Ok(Directions::Eight),
        _ => Err(PyValueError::new_err(format!(
            "directions must be 'four' or 'eight', got {s:?}"
        ))),
    }
}

fn parse_norm(s: &str) -> PyResult<ConsNorm> {
    match s {
        "frobenius" => Ok(ConsNorm::Frobenius),
        "mean" => Ok(ConsNorm::MeanPerElement),
        _ => Err(PyValueError::new_err(format!(
            "norm must be 'frobenius' or 'mean', got {s:?}"
        ))),
    }
}

/// A float image, row-major with interleaved channels:
/// `data[(y*width + x)*channels + c]`.
#[pyclass(name = "Image", module = "ugda_py", from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: ImageF,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyImage {
            inner: ImageF::from_vec(height, width, channels, data).map_err(into_py_err)?,
        })
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels
    }

    /// Pixel data as a flat list (copy).
    fn data(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    /// Per-channel population mean and standard deviation.
    fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let s = ugda_core::augment::channel_stats(&self.inner);
        (s.mean, s.std)
    }

    fn __repr__(&self) -> String {
        format!(
            "Image(height={}, width={}, channels={})",
            self.inner.height, self.inner.width, self.inner.channels
        )
    }
}

/// A disparity map with a per-pixel validity mask, row-major.
#[pyclass(name = "Disparity", module = "ugda_py", from_py_object)]
#[derive(Clone)]
struct PyDisparity {
    inner: DisparityMap,
}

#[pymethods]
impl PyDisparity {
    #[new]
    fn new(height: usize, width: usize, disparity: Vec<f64>, valid: Vec<bool>) -> PyResult<Self> {
        if disparity.len() != height * width || valid.len() != height * width {
            return Err(PyValueError::new_err(format!(
                "disparity and valid must each have height*width = {} entries",
                height * width
            )));
        }
        Ok(PyDisparity {
            inner: DisparityMap {
                height,
                width,
                disparity,
                valid,
            },
        })
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    fn disparity(&self) -> Vec<f64> {
        self.inner.disparity.clone()
    }

    fn valid(&self) -> Vec<bool> {
        self.inner.valid.clone()
    }

    fn __repr__(&self) -> String {
        let n = self.inner.valid.iter().filter(|&&v| v).count();
        format!(
            "Disparity(height={}, width={}, valid={n}/{})",
            self.inner.height,
            self.inner.width,
            self.inner.valid.len()
        )
    }
}

/// Perturbs the channel statistics of a batch of stereo pairs.
///
/// Returns `(augmented_pairs, records)` where each record is a dict with the
/// draw details: pair index, side ("L"/"R"), whether the pair was gated on,
/// the measured per-channel mean/std and the sampled targets.
#[pyfunction]
#[pyo3(signature = (pairs, *, seed = 0, pair_mode = "shared", sigma_floor = 1e-6, clip = "none", apply_prob = 1.0))]
fn augment_batch(
    py: Python<'_>,
    pairs: Vec<(PyImage, PyImage)>,
    seed: u64,
    pair_mode: &str,
    sigma_floor: f64,
    clip: &str,
    apply_prob: f64,
) -> PyResult<(Vec<(PyImage, PyImage)>, Vec<Py<PyDict>>)> {
    let core_pairs: Vec<StereoPair> = pairs
        .into_iter()
        .map(|(l, r)| StereoPair::new(l.inner, r.inner).map_err(into_py_err))
        .collect::<PyResult<_>>()?;
    let cfg = AugmentConfig {
        pair_mode: parse_pair_mode(pair_mode)?,
        sigma_floor,
        clip_policy: parse_clip(clip)?,
        apply_probability: apply_prob,
        seed,
    };
    let (aug, records) =
        ugda_core::augment::augment_batch(&core_pairs, &cfg).map_err(into_py_err)?;
    let out_pairs = aug
        .into_iter()
        .map(|p| (PyImage { inner: p.left }, PyImage { inner: p.right }))
        .collect();
    let mut out_records = Vec::with_capacity(records.len());
    for rec in records {
        let d = PyDict::new(py);
        d.set_item("pair", rec.pair)?;
        d.set_item("side", match rec.side { Side::Left => "L", Side::Right => "R" })?;
        d.set_item("applied", rec.applied)?;
        d.set_item("mean", rec.stats.mean)?;
        d.set_item("std", rec.stats.std)?;
        d.set_item("eps_mu", rec.draw.eps_mu)?;
        d.set_item("eps_sigma", rec.draw.eps_sigma)?;
        d.set_item("mu_prime", rec.draw.mu_prime)?;
        d.set_item("sigma_prime", rec.draw.sigma_prime)?;
        out_records.push(d.unbind());
    }
    Ok((out_pairs, out_records))
}

/// Census + semi-global stereo matching for a rectified pair, returning the
/// left-image disparity after the left-right consistency check.
#[pyfunction]
#[pyo3(signature = (left, right, *, d_max = 64, p1 = 10.0, p2 = 120.0, census_window = 5, directions = "eight", lr_tol = 1.0))]
#[allow(clippy::too_many_arguments)]
fn match_pair(
    left: PyImage,
    right: PyImage,
    d_max: usize,
    p1: f64,
    p2: f64,
    census_window: usize,
    directions: &str,
    lr_tol: f64,
) -> PyResult<PyDisparity> {
    let pair = StereoPair::new(left.inner, right.inner).map_err(into_py_err)?;
    let params = SgmParams {
        p1,
        p2,
        directions: parse_directions(directions)?,
        census_window,
    };
    let disp = ugda_core::stereo::match_pair(&pair, &params, d_max, lr_tol).map_err(into_py_err)?;
    Ok(PyDisparity { inner: disp })
}

/// End-point error and bad-pixel rate of a prediction against ground truth,
/// over jointly valid pixels. Returns a dict with keys `epe`, `d1`,
/// `threshold`, `n_valid`, `n_bad`.
#[pyfunction]
#[pyo3(signature = (pred, gt, *, threshold = 3.0))]
fn compute_metrics(
    py: Python<'_>,
    pred: PyRef<'_, PyDisparity>,
    gt: PyRef<'_, PyDisparity>,
    threshold: f64,
) -> PyResult<Py<PyDict>> {
    let report =
        ugda_core::metrics::compute_d1(&pred.inner, &gt.inner, threshold).map_err(into_py_err)?;
    let d = PyDict::new(py);
    d.set_item("epe", report.epe)?;
    d.set_item("d1", report.d1)?;
    d.set_item("threshold", report.threshold)?;
    d.set_item("n_valid", report.n_valid)?;
    d.set_item("n_bad", report.n_bad)?;
    Ok(d.unbind())
}

/// Runs the frozen toy extractor on an image. Returns
/// `((channels, height, width), data)` with `data` planar:
/// `data[(c*height + y)*width + x]`.
#[pyfunction]
#[pyo3(signature = (img, *, seed = None))]
fn extract_features(
    img: PyRef<'_, PyImage>,
    seed: Option<u64>,
) -> PyResult<((usize, usize, usize), Vec<f64>)> {
    let ext = match seed {
        Some(s) => ToyExtractor::from_seed(s),
        None => ToyExtractor::default_frozen(),
    };
    let f = ugda_core::loss::extract_features(&img.inner, &ext).map_err(into_py_err)?;
    Ok(((f.channels, f.height, f.width), f.data))
}

/// Feature-consistency loss between each original image and its augmented
/// counterpart, summed over the two sides, using the frozen toy extractor.
#[pyfunction]
#[pyo3(signature = (left, left_aug, right, right_aug, *, norm = "mean"))]
fn consistency_loss(
    left: PyRef<'_, PyImage>,
    left_aug: PyRef<'_, PyImage>,
    right: PyRef<'_, PyImage>,
    right_aug: PyRef<'_, PyImage>,
    norm: &str,
) -> PyResult<f64> {
    let cfg = LossConfig {
        cons_norm: parse_norm(norm)?,
        ..LossConfig::default()
    };
    let ext = ToyExtractor::default_frozen();
    let feats = [&left.inner, &left_aug.inner, &right.inner, &right_aug.inner]
        .iter()
        .map(|img| ugda_core::loss::extract_features(img, &ext).map_err(into_py_err))
        .collect::<PyResult<Vec<_>>>()?;
    ugda_core::loss::consistency_loss(&feats[0], &feats[1], &feats[2], &feats[3], &cfg)
        .map_err(into_py_err)
}

/// Smooth-L1 disparity loss averaged over jointly valid pixels.
#[pyfunction]
#[pyo3(signature = (pred, gt, *, beta = 1.0))]
fn smooth_l1_loss(
    pred: PyRef<'_, PyDisparity>,
    gt: PyRef<'_, PyDisparity>,
    beta: f64,
) -> PyResult<f64> {
    ugda_core::loss::smooth_l1(&pred.inner, &gt.inner, beta).map_err(into_py_err)
}

/// Combined objective: smooth-L1 disparity loss plus `lam` times the
/// feature-consistency loss of the two original/augmented image pairs.
#[pyfunction]
#[pyo3(signature = (pred, gt, left, left_aug, right, right_aug, *, lam = 0.17, norm = "mean", beta = 1.0))]
#[allow(clippy::too_many_arguments)]
fn total_loss(
    pred: PyRef<'_, PyDisparity>,
    gt: PyRef<'_, PyDisparity>,
    left: PyRef<'_, PyImage>,
    left_aug: PyRef<'_, PyImage>,
    right: PyRef<'_, PyImage>,
    right_aug: PyRef<'_, PyImage>,
    lam: f64,
    norm: &str,
    beta: f64,
) -> PyResult<f64> {
    let cfg = LossConfig {
        lambda: lam,
        cons_norm: parse_norm(norm)?,
        smooth_l1_beta: beta,
    };
    let ext = ToyExtractor::default_frozen();
    let feats = [&left.inner, &left_aug.inner, &right.inner, &right_aug.inner]
        .iter()
        .map(|img| ugda_core::loss::extract_features(img, &ext).map_err(into_py_err))
        .collect::<PyResult<Vec<_>>>()?;
    ugda_core::loss::total_loss(
        &pred.inner,
        &gt.inner,
        &feats[0],
        &feats[1],
        &feats[2],
        &feats[3],
        &cfg,
    )
    .map_err(into_py_err)
}

/// Compares the analytic loss gradients against central finite differences
/// on a random seeded instance. Returns `(max_rel_err, coordinates_checked)`.
#[pyfunction]
#[pyo3(signature = (*, seed = 0, height = 8, width = 8, samples = 6, lam = 0.17, norm = "mean", beta = 1.0))]
fn gradient_check(
    seed: u64,
    height: usize,
    width: usize,
    samples: usize,
    lam: f64,
    norm: &str,
    beta: f64,
) -> PyResult<(f64, usize)> {
    let cfg = LossConfig {
        lambda: lam,
        cons_norm: parse_norm(norm)?,
        smooth_l1_beta: beta,
    };
    let report = ugda_core::loss::finite_difference_check(seed, height, width, samples, &cfg, 0.0)
        .map_err(into_py_err)?;
    Ok((report.max_rel_err, report.checked))
}

/// Builds a seeded test scene: a textured pair where the right image is the
/// left shifted by a constant disparity, plus the exact ground truth.
#[pyfunction]
fn make_synthetic_pair(
    seed: u64,
    height: usize,
    width: usize,
    shift: usize,
) -> PyResult<((PyImage, PyImage), PyDisparity)> {
    let (pair, gt) =
        ugda_core::io::synthetic::make_synthetic_pair(seed, height, width, shift).map_err(into_py_err)?;
    Ok((
        (PyImage { inner: pair.left }, PyImage { inner: pair.right }),
        PyDisparity { inner: gt },
    ))
}

/// Loads an 8- or 16-bit PNG/PPM image into floats in [0, 1].
#[pyfunction]
fn load_image(path: PathBuf) -> PyResult<PyImage> {
    Ok(PyImage {
        inner: ugda_core::io::load_image(&path).map_err(into_py_err)?,
    })
}

/// Writes an image as 8-bit PNG (values clamped to [0, 1] and quantized).
#[pyfunction]
fn save_image_png(path: PathBuf, img: PyRef<'_, PyImage>) -> PyResult<()> {
    ugda_core::io::save_image_png8(&path, &img.inner).map_err(into_py_err)
}

/// Reads a single-channel PFM file as a disparity map; non-finite samples
/// become invalid pixels.
#[pyfunction]
fn read_pfm_disparity(path: PathBuf) -> PyResult<PyDisparity> {
    let pfm = ugda_core::io::read_pfm(&path).map_err(into_py_err)?;
    Ok(PyDisparity {
        inner: ugda_core::io::disparity_from_pfm(&pfm).map_err(into_py_err)?,
    })
}

/// Writes a disparity map as little-endian PFM; invalid pixels are stored
/// as infinity.
#[pyfunction]
fn write_pfm_disparity(path: PathBuf, disp: PyRef<'_, PyDisparity>) -> PyResult<()> {
    let pfm = ugda_core::io::pfm_from_disparity(&disp.inner);
    ugda_core::io::write_pfm(&path, &pfm).map_err(into_py_err)
}

/// Reads a 16-bit disparity PNG (value/256 encoding, zero = invalid).
#[pyfunction]
fn read_kitti_disparity(path: PathBuf) -> PyResult<PyDisparity> {
    Ok(PyDisparity {
        inner: ugda_core::io::read_kitti_disparity(&path).map_err(into_py_err)?,
    })
}

/// Writes a disparity map as a 16-bit PNG (value/256 encoding).
#[pyfunction]
fn write_kitti_disparity(path: PathBuf, disp: PyRef<'_, PyDisparity>) -> PyResult<()> {
    ugda_core::io::write_kitti_disparity(&path, &disp.inner).map_err(into_py_err)
}

#[pymodule]
fn ugda_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyDisparity>()?;
    m.add_function(wrap_pyfunction!(augment_batch, m)?)?;
    m.add_function(wrap_pyfunction!(match_pair, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(consistency_loss, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_l1_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(make_synthetic_pair, m)?)?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add_function(wrap_pyfunction!(save_image_png, m)?)?;
    m.add_function(wrap_pyfunction!(read_pfm_disparity, m)?)?;
    m.add_function(wrap_pyfunction!(write_pfm_disparity, m)?)?;
    m.add_function(wrap_pyfunction!(read_kitti_disparity, m)?)?;
    m.add_function(wrap_pyfunction!(write_kitti_disparity, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
