//! Python bindings for the corridor pipeline. Masks cross the boundary as
//! `bytes` (row-major, one byte per pixel, values 0/1) together with their
//! dimensions; logits and energy rasters as lists of floats.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use corridor_core::camera::CameraModel as CoreCamera;
use corridor_core::energy::{energy_from_logits, free_energy as core_free_energy, EnergyMap, Logits};
use corridor_core::fusion::{fuse_with_energy, FusionConfig};
use corridor_core::mask::Mask;
use corridor_core::oracle::{segment_mask, Corruption, CorruptionConfig};
use corridor_core::postprocess::{postprocess, PostprocessParams};
use corridor_core::scene::{render_scene, ObstaclePlacement, ScenarioSpec};
use corridor_core::sprite::builtin_library;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mask_from_py(width: u32, height: u32, data: &[u8]) -> PyResult<Mask> {
    if data.len() != width as usize * height as usize {
        return Err(PyValueError::new_err(format!(
            "mask buffer has {} bytes, expected {}",
            data.len(),
            width as usize * height as usize
        )));
    }
    if let Some(&bad) = data.iter().find(|&&v| v > 1) {
        return Err(PyValueError::new_err(format!(
            "mask values must be 0 or 1, found {bad}"
        )));
    }
    Ok(Mask::from_raw(width, height, data.to_vec()))
}

/// Flat-ground pinhole camera; distances in meters, rows/columns in pixels.
#[pyclass(name = "CameraModel", from_py_object)]
#[derive(Clone)]
struct PyCameraModel {
    inner: CoreCamera,
}

#[pymethods]
impl PyCameraModel {
    #[new]
    #[pyo3(signature = (focal_length=2000.0, width=1920, height=1080, mount_height=1.3, pitch=0.0))]
    fn new(focal_length: f64, width: u32, height: u32, mount_height: f64, pitch: f64) -> PyResult<Self> {
        let inner = CoreCamera {
            focal_length,
            principal_point: (width as f64 / 2.0, height as f64 / 2.0),
            image_size: (width, height),
            mount_height,
            pitch,
        };
        inner.validate().map_err(value_err)?;
        Ok(PyCameraModel { inner })
    }

    fn ground_row_for_distance(&self, d: f64) -> PyResult<f64> {
        self.inner.ground_row_for_distance(d).map_err(value_err)
    }

    fn distance_for_ground_row(&self, row: f64) -> PyResult<f64> {
        self.inner.distance_for_ground_row(row).map_err(value_err)
    }

    fn pixel_extent_at_distance(&self, size_m: f64, d: f64) -> PyResult<f64> {
        self.inner
            .pixel_extent_at_distance(size_m, d)
            .map_err(value_err)
    }

    fn horizon_row(&self) -> f64 {
        self.inner.horizon_row()
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }
}

/// Free energy -logsumexp(logits) of one pixel's class scores.
#[pyfunction]
fn free_energy(logits: Vec<f32>) -> PyResult<f64> {
    core_free_energy(&logits).map_err(value_err)
}

/// Per-pixel free energy for a full raster of planar (class-major)
/// logits: `classes` image-sized planes back to back.
#[pyfunction]
fn energy_map(width: u32, height: u32, classes: usize, logits: Vec<f32>) -> PyResult<Vec<f32>> {
    if logits.len() != width as usize * height as usize * classes {
        return Err(PyValueError::new_err("logits length does not match dimensions"));
    }
    let l = Logits {
        width,
        height,
        classes,
        data: logits,
    };
    Ok(energy_from_logits(&l).map_err(value_err)?.data)
}

/// Post-process a corridor mask. Returns `(mask_bytes, edge_distance_m)`;
/// the distance is None when the corridor is empty.
#[pyfunction]
#[pyo3(signature = (width, height, mask, camera, close_radius=2, smooth_window=25, drop_ratio=0.5, persistence=5))]
#[allow(clippy::too_many_arguments)]
fn postprocess_mask(
    py: Python<'_>,
    width: u32,
    height: u32,
    mask: &[u8],
    camera: PyCameraModel,
    close_radius: u32,
    smooth_window: usize,
    drop_ratio: f64,
    persistence: usize,
) -> PyResult<(Py<PyBytes>, Option<f64>)> {
    let m = mask_from_py(width, height, mask)?;
    let params = PostprocessParams {
        close_radius,
        smooth_window,
        drop_ratio,
        persistence,
    };
    let (out, edge) = postprocess(&m, &params, &camera.inner);
    Ok((
        PyBytes::new(py, out.as_raw()).into(),
        edge.edge_distance,
    ))
}

/// Fuse a corridor mask with an energy raster: threshold outliers, extract
/// blobs, truncate at the nearest intersecting blob. Returns
/// `(mask_bytes, edge_distance_m)`.
#[pyfunction]
#[pyo3(signature = (width, height, corridor, energy, camera, energy_threshold=-2.0, min_blob_area=20, blob_dilation=1))]
#[allow(clippy::too_many_arguments)]
fn fuse_mask(
    py: Python<'_>,
    width: u32,
    height: u32,
    corridor: &[u8],
    energy: Vec<f32>,
    camera: PyCameraModel,
    energy_threshold: f32,
    min_blob_area: usize,
    blob_dilation: u32,
) -> PyResult<(Py<PyBytes>, Option<f64>)> {
    let m = mask_from_py(width, height, corridor)?;
    if energy.len() != width as usize * height as usize {
        return Err(PyValueError::new_err("energy length does not match dimensions"));
    }
    let e = EnergyMap {
        width,
        height,
        data: energy,
    };
    let cfg = FusionConfig {
        energy_threshold,
        min_blob_area,
        blob_dilation,
    };
    let (fused, report) = fuse_with_energy(&m, &e, &cfg, &camera.inner);
    Ok((PyBytes::new(py, fused.as_raw()).into(), report.edge_distance))
}

/// Render a synthetic obstacle scene and run the oracle segmenter on it.
/// Returns `(gt_corridor, oracle_mask)` as mask bytes; `corruption` is one
/// of "clean", "wrap", "miss_near:<m>", "holes:<p>", "edge_jitter:<sigma>".
#[pyfunction]
#[pyo3(signature = (camera, distance, sprite_id="crate_red", corruption="clean", seed=0))]
fn demo_scene(
    py: Python<'_>,
    camera: PyCameraModel,
    distance: f64,
    sprite_id: &str,
    corruption: &str,
    seed: u64,
) -> PyResult<(Py<PyBytes>, Py<PyBytes>)> {
    let mut spec = ScenarioSpec::new(camera.inner);
    spec.sprite_id = sprite_id.to_string();
    spec.rng_seed = seed;
    spec.obstacle = Some(ObstaclePlacement {
        distance,
        lateral_offset: 0.0,
        physical_width: 0.6,
        physical_height: 0.6,
        rotation: 0.0,
    });
    let scene = render_scene(&spec, &builtin_library()).map_err(value_err)?;
    let (name, arg) = corruption.split_once(':').unwrap_or((corruption, ""));
    let num = || -> PyResult<f64> {
        arg.parse()
            .map_err(|_| PyValueError::new_err(format!("corruption `{corruption}` needs a number")))
    };
    let mode = match name {
        "clean" => Corruption::Clean,
        "wrap" => Corruption::Wrap,
        "miss_near" => Corruption::MissNear { d_threshold: num()? },
        "holes" => Corruption::Holes { p: num()? },
        "edge_jitter" => Corruption::EdgeJitter { sigma: num()? },
        other => return Err(PyValueError::new_err(format!("unknown corruption `{other}`"))),
    };
    let mask = segment_mask(&scene, &camera.inner, &CorruptionConfig::single(mode, seed))
        .map_err(value_err)?;
    Ok((
        PyBytes::new(py, scene.gt_corridor.as_raw()).into(),
        PyBytes::new(py, mask.as_raw()).into(),
    ))
}

#[pymodule]
fn corridor_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCameraModel>()?;
    m.add_function(wrap_pyfunction!(free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(energy_map, m)?)?;
    m.add_function(wrap_pyfunction!(postprocess_mask, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_mask, m)?)?;
    m.add_function(wrap_pyfunction!(demo_scene, m)?)?;
    Ok(())
}
