//! Python bindings. Panoptic rasters cross the boundary as 2-D uint16
//! arrays in the class*1000 + instance encoding.

use numpy::{IntoPyArray, PyArray2, PyArrayMethods, PyReadonlyArray2, PyReadonlyArray3, PyUntypedArrayMethods};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use upq_core::confidence::{panoptic_inference, MaskPair, NO_OBJECT};
use upq_core::eval::{evaluate_manifest_path, evaluate_samples, EvalConfig, EvalSample};
use upq_core::io::{class1000_label, class1000_value, report_to_string};
use upq_core::{
    ConfidenceKind, ConfidenceRaster, Difficulty, DifficultyRaster, ErrorCategory, EvalError, Label,
    MaskClassificationOutput, PanopticRaster,
};

create_exception!(upq, UpqError, PyValueError, "Base class for evaluation errors.");
create_exception!(upq, InputError, UpqError, "Unreadable or malformed input.");
create_exception!(upq, ValidationError, UpqError, "Input violates a contract.");

fn to_py(e: EvalError) -> PyErr {
    let msg = format!("[{}] {e}", e.kind_name());
    match e.category() {
        ErrorCategory::Input => InputError::new_err(msg),
        ErrorCategory::Validation => ValidationError::new_err(msg),
    }
}

fn dims(shape: &[usize]) -> PyResult<(u32, u32)> {
    let h = u32::try_from(shape[0]).map_err(|_| ValidationError::new_err("array too large"))?;
    let w = u32::try_from(shape[1]).map_err(|_| ValidationError::new_err("array too large"))?;
    Ok((w, h))
}

fn panoptic(a: &PyReadonlyArray2<u16>) -> PyResult<PanopticRaster> {
    let (w, h) = dims(a.shape())?;
    let labels = a
        .as_array()
        .iter()
        .map(|&v| class1000_label(v).map_err(ValidationError::new_err))
        .collect::<PyResult<Vec<Label>>>()?;
    PanopticRaster::new(w, h, labels).map_err(to_py)
}

fn panoptic_array<'py>(py: Python<'py>, r: &PanopticRaster) -> PyResult<Bound<'py, PyArray2<u16>>> {
    let values = r.labels().iter().map(|&l| class1000_value(l)).collect::<Result<Vec<_>, _>>().map_err(to_py)?;
    shaped(py, values, r.height(), r.width())
}

fn shaped<'py, T: numpy::Element>(py: Python<'py>, v: Vec<T>, h: u32, w: u32) -> PyResult<Bound<'py, PyArray2<T>>> {
    v.into_pyarray(py).reshape([h as usize, w as usize])
}

fn difficulty(a: &PyReadonlyArray2<u8>) -> PyResult<DifficultyRaster> {
    let (w, h) = dims(a.shape())?;
    let values = a
        .as_array()
        .iter()
        .map(|&v| Difficulty::from_u8(v).ok_or_else(|| ValidationError::new_err(format!("difficulty value {v} not in 0..=2"))))
        .collect::<PyResult<Vec<_>>>()?;
    DifficultyRaster::new(w, h, values).map_err(to_py)
}

fn confidence(a: &PyReadonlyArray2<f64>, kind: ConfidenceKind) -> PyResult<ConfidenceRaster> {
    let (w, h) = dims(a.shape())?;
    ConfidenceRaster::new(w, h, kind, a.as_array().iter().copied().collect()).map_err(to_py)
}

#[allow(clippy::too_many_arguments)]
fn config(
    metric: &str,
    grid_size: usize,
    binarization: &str,
    aggregation: &str,
    workers: usize,
    conditions: Vec<String>,
    baseline: &str,
    source: &str,
    thresholds: (f64, f64),
) -> PyResult<EvalConfig> {
    let binarization = match binarization {
        "ge" => upq_core::Binarization::AtLeast,
        "gt" => upq_core::Binarization::Above,
        other => return Err(ValidationError::new_err(format!("unknown binarization '{other}'"))),
    };
    let config = EvalConfig {
        metric: metric.parse().map_err(to_py)?,
        grid_size,
        binarization,
        aggregation: aggregation.parse().map_err(to_py)?,
        workers,
        conditions,
        baseline: baseline.parse().map_err(to_py)?,
        source: source.parse().map_err(to_py)?,
        thresholds,
    };
    config.validate().map_err(to_py)?;
    Ok(config)
}

fn report_dict<'py>(py: Python<'py>, report: &upq_core::io::MetricReportFile) -> PyResult<Bound<'py, PyDict>> {
    let text = report_to_string(report).map_err(to_py)?;
    py.import("json")?.call_method1("loads", (text,))?.cast_into::<PyDict>().map_err(Into::into)
}

/// Evaluate in-memory samples. Each argument is a list with one array per
/// image; optional lists may be omitted when the metric does not need them.
#[pyfunction]
#[pyo3(signature = (
    gt, pred, difficulty=None, class_conf=None, inst_conf=None, *, metric="pq", grid_size=16,
    binarization="ge", aggregation="dataset", baseline="none", class_threshold=0.5, inst_threshold=0.5,
    workers=1,
))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    gt: Vec<PyReadonlyArray2<'py, u16>>,
    pred: Vec<PyReadonlyArray2<'py, u16>>,
    difficulty: Option<Vec<PyReadonlyArray2<'py, u8>>>,
    class_conf: Option<Vec<PyReadonlyArray2<'py, f64>>>,
    inst_conf: Option<Vec<PyReadonlyArray2<'py, f64>>>,
    metric: &str,
    grid_size: usize,
    binarization: &str,
    aggregation: &str,
    baseline: &str,
    class_threshold: f64,
    inst_threshold: f64,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let n = gt.len();
    let lengths = [Some(pred.len()), difficulty.as_ref().map(Vec::len), class_conf.as_ref().map(Vec::len), inst_conf.as_ref().map(Vec::len)];
    if lengths.iter().flatten().any(|&l| l != n) {
        return Err(ValidationError::new_err("all sample lists must have the same length"));
    }
    let config = config(
        metric,
        grid_size,
        binarization,
        aggregation,
        workers,
        Vec::new(),
        baseline,
        "prediction",
        (class_threshold, inst_threshold),
    )?;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        samples.push(EvalSample {
            sample_id: i.to_string(),
            gt: Some(panoptic(&gt[i])?),
            pred: Some(panoptic(&pred[i])?),
            difficulty: difficulty.as_ref().map(|d| self::difficulty(&d[i])).transpose()?,
            class_conf: class_conf.as_ref().map(|c| confidence(&c[i], ConfidenceKind::Class)).transpose()?,
            inst_conf: inst_conf.as_ref().map(|c| confidence(&c[i], ConfidenceKind::Instance)).transpose()?,
            ..EvalSample::default()
        });
    }
    let report = py.detach(|| evaluate_samples(&samples, &config)).map_err(to_py)?;
    report_dict(py, &report)
}

/// Evaluate a dataset manifest; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (
    path, *, metric="pq", grid_size=16, binarization="ge", aggregation="dataset", workers=1,
    conditions=Vec::new(), baseline="none", source="prediction", class_threshold=0.5, inst_threshold=0.5,
))]
#[allow(clippy::too_many_arguments)]
fn evaluate_manifest<'py>(
    py: Python<'py>,
    path: std::path::PathBuf,
    metric: &str,
    grid_size: usize,
    binarization: &str,
    aggregation: &str,
    workers: usize,
    conditions: Vec<String>,
    baseline: &str,
    source: &str,
    class_threshold: f64,
    inst_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = config(
        metric,
        grid_size,
        binarization,
        aggregation,
        workers,
        conditions,
        baseline,
        source,
        (class_threshold, inst_threshold),
    )?;
    let report = py.detach(|| evaluate_manifest_path(&path, &config)).map_err(to_py)?;
    report_dict(py, &report)
}

/// Per-pixel difficulty (0, 1 or 2) from two annotation stages.
#[pyfunction(name = "derive_difficulty")]
fn py_derive_difficulty<'py>(
    py: Python<'py>,
    h1: PyReadonlyArray2<'py, u16>,
    h2: PyReadonlyArray2<'py, u16>,
) -> PyResult<Bound<'py, PyArray2<u8>>> {
    let (h1, h2) = (panoptic(&h1)?, panoptic(&h2)?);
    let d = py.detach(|| upq_core::derive_difficulty(&h1, &h2)).map_err(to_py)?;
    let values = d.values().iter().map(|&v| v as u8).collect();
    let (w, h) = d.dims();
    shaped(py, values, h, w)
}

/// Panoptic inference plus marginalized class and instance confidences for
/// a mask-classification output. `probs` has shape (N, 20), `masks` (N, H, W).
#[pyfunction(name = "marginal_confidences")]
#[allow(clippy::type_complexity)]
fn py_marginal_confidences<'py>(
    py: Python<'py>,
    probs: PyReadonlyArray2<'py, f64>,
    masks: PyReadonlyArray3<'py, f64>,
) -> PyResult<(Bound<'py, PyArray2<u16>>, Bound<'py, PyArray2<f64>>, Bound<'py, PyArray2<f64>>)> {
    let (p, m) = (probs.as_array(), masks.as_array());
    if p.shape()[0] != m.shape()[0] || p.shape()[1] != NO_OBJECT + 1 {
        return Err(ValidationError::new_err(format!(
            "expected probs of shape (N, {}) and masks of shape (N, H, W)",
            NO_OBJECT + 1
        )));
    }
    let (w, h) = dims(&m.shape()[1..])?;
    let pairs = p
        .outer_iter()
        .zip(m.outer_iter())
        .map(|(probs, mask)| MaskPair {
            probs: probs.iter().copied().collect(),
            mask: mask.iter().copied().collect(),
        })
        .collect();
    let mc = MaskClassificationOutput::new(w, h, pairs).map_err(to_py)?;
    let (pan, class_conf, inst_conf) = py
        .detach(|| -> upq_core::Result<_> {
            let pan = panoptic_inference(&mc)?;
            let (c, i) = upq_core::marginal_confidences(&mc, &pan)?;
            Ok((pan, c, i))
        })
        .map_err(to_py)?;
    Ok((
        panoptic_array(py, &pan)?,
        shaped(py, class_conf.scores().to_vec(), h, w)?,
        shaped(py, inst_conf.scores().to_vec(), h, w)?,
    ))
}

/// Run the brute-force agreement check; returns (property, checked, diffs) tuples.
#[pyfunction]
#[pyo3(signature = (scenes=100, seed=0, sweep_scenes=3))]
fn selfcheck(py: Python<'_>, scenes: usize, seed: u64, sweep_scenes: usize) -> PyResult<Vec<(String, usize, usize)>> {
    let results = py.detach(|| upq_core::oracle::selfcheck(scenes, seed, sweep_scenes)).map_err(to_py)?;
    Ok(results.into_iter().map(|r| (r.property.to_string(), r.checked, r.diffs)).collect())
}

#[pymodule(name = "upq")]
fn upq_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("UpqError", py.get_type::<UpqError>())?;
    m.add("InputError", py.get_type::<InputError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(py_derive_difficulty, m)?)?;
    m.add_function(wrap_pyfunction!(py_marginal_confidences, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    Ok(())
}
