//! Python bindings: geometry, timelines, clip planning, render planning and
//! evaluation. Importable as `highlight_forge`.

use std::path::Path;

use highlight_forge::detector::builtin_profiles;
use highlight_forge::eval::{self, GroundTruthEvent, PredictedEvent};
use highlight_forge::frames;
use highlight_forge::geometry::{self, ImageDims};
use highlight_forge::planner::{self, PlannerConfig};
use highlight_forge::render::{self, RenderOptions};
use highlight_forge::timeline::{self, EventRecord, EventTimeline, ScoredEvent};
use highlight_forge::EventClass;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn label(s: &str) -> PyResult<EventClass> {
    EventClass::parse(s).map_err(value_err)
}

#[pyclass(name = "BoundingBox", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyBox(geometry::BoundingBox);

#[pymethods]
impl PyBox {
    #[new]
    fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> PyResult<Self> {
        geometry::BoundingBox::new(x1, y1, x2, y2).map(PyBox).map_err(value_err)
    }

    #[getter]
    fn x1(&self) -> f64 {
        self.0.x1()
    }
    #[getter]
    fn y1(&self) -> f64 {
        self.0.y1()
    }
    #[getter]
    fn x2(&self) -> f64 {
        self.0.x2()
    }
    #[getter]
    fn y2(&self) -> f64 {
        self.0.y2()
    }

    fn coords(&self) -> (f64, f64, f64, f64) {
        let [a, b, c, d] = self.0.coords();
        (a, b, c, d)
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn __repr__(&self) -> String {
        let [a, b, c, d] = self.0.coords();
        format!("BoundingBox({a}, {b}, {c}, {d})")
    }
}

#[pyclass(name = "Detection", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyDetection(geometry::Detection);

#[pymethods]
impl PyDetection {
    #[new]
    fn new(bbox: PyBox, label: &str, confidence: f64) -> PyResult<Self> {
        geometry::Detection::new(bbox.0, self::label(label)?, confidence).map(PyDetection).map_err(value_err)
    }

    #[getter]
    fn bbox(&self) -> PyBox {
        PyBox(self.0.bbox)
    }
    #[getter]
    fn label(&self) -> &'static str {
        self.0.label.as_str()
    }
    #[getter]
    fn confidence(&self) -> f64 {
        self.0.confidence
    }

    fn __repr__(&self) -> String {
        format!("Detection({}, {:?}, {})", PyBox(self.0.bbox).__repr__(), self.0.label.as_str(), self.0.confidence)
    }
}

#[pyfunction]
fn iou(a: PyBox, b: PyBox) -> f64 {
    geometry::iou(&a.0, &b.0)
}

#[pyfunction]
#[pyo3(signature = (detections, overlap_threshold = 0.7))]
fn nms(detections: Vec<PyDetection>, overlap_threshold: f64) -> Vec<PyDetection> {
    let dets: Vec<geometry::Detection> = detections.into_iter().map(|d| d.0).collect();
    geometry::nms(&dets, overlap_threshold).into_iter().map(PyDetection).collect()
}

#[pyfunction]
fn horizontal_flip(bbox: PyBox, width: u32, height: u32) -> PyResult<PyBox> {
    let dims = ImageDims::new(width, height).map_err(value_err)?;
    geometry::horizontal_flip(&bbox.0, dims).map(PyBox).map_err(value_err)
}

/// `(scale, (new_width, new_height))`
#[pyfunction]
#[pyo3(signature = (width, height, target_min = 300))]
fn resize_min_dim(width: u32, height: u32, target_min: u32) -> PyResult<(f64, (u32, u32))> {
    let plan = geometry::resize_min_dim(ImageDims::new(width, height).map_err(value_err)?, target_min);
    Ok((plan.scale, (plan.new_dims.width, plan.new_dims.height)))
}

#[pyfunction]
#[pyo3(signature = (duration_s, interval_s = frames::DEFAULT_INTERVAL_S))]
fn plan_samples(duration_s: u64, interval_s: u64) -> PyResult<Vec<u64>> {
    frames::plan_samples(duration_s, interval_s).map_err(value_err)
}

#[pyfunction]
fn parse_frame_filename(name: &str) -> PyResult<(String, u64)> {
    frames::parse_frame_filename(name).map_err(value_err)
}

type PyRecord = (u64, Vec<(String, f64)>);

fn to_records(t: &EventTimeline) -> Vec<PyRecord> {
    t.records
        .iter()
        .map(|r| (r.timestamp_s, r.events.iter().map(|e| (e.label.as_str().to_string(), e.confidence_pct)).collect()))
        .collect()
}

fn from_records(records: Vec<PyRecord>) -> PyResult<EventTimeline> {
    let records = records
        .into_iter()
        .map(|(timestamp_s, events)| {
            let events = events
                .into_iter()
                .map(|(l, confidence_pct)| Ok(ScoredEvent { label: label(&l)?, confidence_pct }))
                .collect::<PyResult<Vec<_>>>()?;
            Ok(EventRecord { timestamp_s, events })
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(EventTimeline { records })
}

/// Metadata text to `[(seconds, [(label, percent), ...]), ...]`.
#[pyfunction]
fn parse_timeline(text: &str) -> PyResult<Vec<PyRecord>> {
    timeline::parse_timeline(text).map(|t| to_records(&t)).map_err(value_err)
}

#[pyfunction]
fn format_timeline(records: Vec<PyRecord>) -> PyResult<String> {
    Ok(timeline::format_timeline(&from_records(records)?))
}

#[pyclass(name = "CutList", frozen)]
pub struct PyCutList(planner::CutList);

#[pymethods]
impl PyCutList {
    /// `[(start_s, end_s, overlay_label, overlay_percent), ...]`
    #[getter]
    fn clips(&self) -> Vec<(u64, u64, &'static str, f64)> {
        self.0.clips.iter().map(|c| (c.start_s, c.end_s, c.overlay.label.as_str(), c.overlay.confidence_pct)).collect()
    }

    #[getter]
    fn video_duration_s(&self) -> u64 {
        self.0.video_duration_s
    }

    fn total_duration(&self) -> u64 {
        planner::total_highlight_duration(&self.0)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        planner::CutList::from_json(text).map(PyCutList).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.0.clips.len()
    }
}

#[pyfunction]
#[pyo3(signature = (metadata, duration_s, lead_s = 5, tail_s = 5, merge_gap_s = 0))]
fn merge_windows(metadata: &str, duration_s: u64, lead_s: u64, tail_s: u64, merge_gap_s: u64) -> PyResult<PyCutList> {
    let t = timeline::parse_timeline(metadata).map_err(value_err)?;
    let cfg = PlannerConfig { lead_s, tail_s, merge_gap_s };
    planner::merge_windows(&t, &cfg, duration_s).map(PyCutList).map_err(value_err)
}

/// The argv of every media-tool command, cuts first and the concat last.
#[pyfunction]
#[pyo3(signature = (cutlist, video, out_dir, tool = "ffmpeg"))]
fn plan_render(cutlist: &PyCutList, video: &str, out_dir: &str, tool: &str) -> PyResult<Vec<Vec<String>>> {
    let opts = RenderOptions { tool: tool.to_string(), ..RenderOptions::default() };
    let specs = render::plan_render(&cutlist.0, Path::new(video), Path::new(out_dir), &opts).map_err(value_err)?;
    Ok(specs.into_iter().map(|s| s.argv).collect())
}

#[pyclass(name = "EvalReport", frozen)]
pub struct PyEvalReport(eval::EvalReport);

#[pymethods]
impl PyEvalReport {
    /// `(tp, fp, fn)` for one class.
    fn counts(&self, label: &str) -> PyResult<(usize, usize, usize)> {
        let c = self.0.class(self::label(label)?);
        Ok((c.tp, c.fp, c.fn_))
    }

    fn precision(&self, label: &str) -> PyResult<f64> {
        Ok(self.0.class(self::label(label)?).precision)
    }

    fn recall(&self, label: &str) -> PyResult<f64> {
        Ok(self.0.class(self::label(label)?).recall)
    }

    fn table(&self) -> String {
        eval::report_table(&self.0)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }
}

#[pyfunction]
#[pyo3(signature = (predicted, truth, tolerance_s = eval::DEFAULT_TOLERANCE_S))]
fn match_events(predicted: Vec<(u64, String)>, truth: Vec<(u64, String)>, tolerance_s: u64) -> PyResult<PyEvalReport> {
    let predicted = predicted
        .iter()
        .map(|(t, l)| Ok(PredictedEvent { timestamp_s: *t, label: label(l)? }))
        .collect::<PyResult<Vec<_>>>()?;
    let truth = truth
        .iter()
        .map(|(t, l)| Ok(GroundTruthEvent { timestamp_s: *t, label: label(l)? }))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(PyEvalReport(eval::match_events(&predicted, &truth, tolerance_s)))
}

/// `[(name, box_confidence_threshold, overlap_threshold), ...]`
#[pyfunction]
fn profiles() -> Vec<(String, f64, f64)> {
    builtin_profiles().into_iter().map(|p| (p.name, p.box_confidence_threshold, p.overlap_threshold)).collect()
}

#[pymodule(name = "highlight_forge")]
fn highlight_forge_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EVENT_CLASSES", EventClass::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>())?;
    m.add_class::<PyBox>()?;
    m.add_class::<PyDetection>()?;
    m.add_class::<PyCutList>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(horizontal_flip, m)?)?;
    m.add_function(wrap_pyfunction!(resize_min_dim, m)?)?;
    m.add_function(wrap_pyfunction!(plan_samples, m)?)?;
    m.add_function(wrap_pyfunction!(parse_frame_filename, m)?)?;
    m.add_function(wrap_pyfunction!(parse_timeline, m)?)?;
    m.add_function(wrap_pyfunction!(format_timeline, m)?)?;
    m.add_function(wrap_pyfunction!(merge_windows, m)?)?;
    m.add_function(wrap_pyfunction!(plan_render, m)?)?;
    m.add_function(wrap_pyfunction!(match_events, m)?)?;
    m.add_function(wrap_pyfunction!(profiles, m)?)?;
    Ok(())
}
