//! Detection verdicts, distance-binned detection rates and the
//! false-positive protocol for obstacle-free runs.

use thiserror::Error;

use crate::camera::CameraModel;
use crate::mask::Mask;
use crate::scene::{lane_columns, SceneRecord};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("scene has no obstacle; use the false-positive evaluation")]
    NoObstacleInScene,
    #[error("no verdicts for distance bin {0} m")]
    EmptyBin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureMode {
    None,
    OverSegmentation,
    UnderSegmentation,
    NoEdge,
}

impl FailureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureMode::None => "none",
            FailureMode::OverSegmentation => "over_segmentation",
            FailureMode::UnderSegmentation => "under_segmentation",
            FailureMode::NoEdge => "no_edge",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionVerdict {
    pub scene_id: String,
    pub distance_bin: f64,
    pub correct: bool,
    pub estimated_edge_distance: Option<f64>,
    /// Signed edge error in meters, when an edge exists.
    pub error_m: Option<f64>,
    pub failure_mode: FailureMode,
}

/// Judges one obstacle scene. Correct requires both: no corridor pixel
/// within the lane farther than `(1+tol)` times the obstacle distance
/// (wrap-around fails even when the edge looks right), and an edge distance
/// within `tol` of the obstacle distance (severe under-segmentation fails).
pub fn judge_detection(
    pred: &Mask,
    scene: &SceneRecord,
    cam: &CameraModel,
    tol: f64,
) -> Result<DetectionVerdict, EvalError> {
    let distance = scene
        .meta
        .obstacle_distance
        .ok_or(EvalError::NoObstacleInScene)?;
    let far_limit = distance * (1.0 + tol);
    let near_limit = distance * (1.0 - tol);

    // over-segmentation: any predicted pixel within the GT lane polygon
    // farther than the allowed limit
    let mut over = false;
    let limit_row = match cam.ground_row_for_distance(far_limit) {
        Ok(r) => r.ceil() as u32,
        // limit closer than the bottom edge: every image row is farther
        Err(crate::camera::CameraError::RowOutOfImage { row, .. })
            if row > cam.height() as f64 =>
        {
            cam.height()
        }
        Err(_) => 0,
    };
    'rows: for r in 0..limit_row.min(pred.height) {
        let Some((c0, c1)) = lane_columns(cam, scene.meta.lane_width, r) else {
            continue;
        };
        if pred.row(r)[c0 as usize..c1 as usize].iter().any(|&v| v != 0) {
            over = true;
            break 'rows;
        }
    }

    let estimated = pred
        .top_row()
        .and_then(|t| cam.distance_for_ground_row(t as f64 - 0.5).ok());

    let (correct, failure_mode) = if over {
        (false, FailureMode::OverSegmentation)
    } else {
        match estimated {
            None => (false, FailureMode::NoEdge),
            Some(e) if e < near_limit => (false, FailureMode::UnderSegmentation),
            Some(e) if e > far_limit => (false, FailureMode::OverSegmentation),
            Some(_) => (true, FailureMode::None),
        }
    };

    Ok(DetectionVerdict {
        scene_id: String::new(),
        distance_bin: distance,
        correct,
        estimated_edge_distance: estimated,
        error_m: estimated.map(|e| e - distance),
        failure_mode,
    })
}

/// One detection-rate table cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub method: String,
    pub bin_m: f64,
    pub correct: usize,
    pub total: usize,
}

impl RateRow {
    /// Truncated percentage, tenths of a percent (one-decimal floor).
    pub fn pct_tenths(&self) -> usize {
        self.correct * 1000 / self.total
    }

    /// The table-cell string, e.g. "80 (95.2 %)".
    pub fn cell(&self) -> String {
        let t = self.pct_tenths();
        format!("{} ({}.{} %)", self.correct, t / 10, t % 10)
    }
}

/// Groups verdicts into the requested bins (matching on the scene's
/// obstacle distance) and counts correct detections.
pub fn detection_rate(
    method: &str,
    bins: &[f64],
    verdicts: &[DetectionVerdict],
) -> Result<Vec<RateRow>, EvalError> {
    let mut rows = Vec::with_capacity(bins.len());
    for &bin in bins {
        let in_bin: Vec<&DetectionVerdict> = verdicts
            .iter()
            .filter(|v| (v.distance_bin - bin).abs() < 1e-9)
            .collect();
        if in_bin.is_empty() {
            return Err(EvalError::EmptyBin(bin));
        }
        rows.push(RateRow {
            method: method.to_string(),
            bin_m: bin,
            correct: in_bin.iter().filter(|v| v.correct).count(),
            total: in_bin.len(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpRow {
    pub run_id: usize,
    pub frames: usize,
    pub fp_count: usize,
}

/// A frame of an obstacle-free run counts as a false positive when the
/// post-processed corridor ends closer than `expected_min_range` (or has no
/// edge at all).
pub fn false_positive_eval(
    preds: &[Mask],
    expected_min_range: f64,
    cam: &CameraModel,
) -> usize {
    preds
        .iter()
        .filter(|m| {
            let edge = m
                .top_row()
                .and_then(|t| cam.distance_for_ground_row(t as f64 - 0.5).ok());
            match edge {
                Some(d) => d < expected_min_range,
                None => true,
            }
        })
        .count()
}

/// Aggregated report: detection-rate rows per method and bin plus the
/// false-positive section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rates: Vec<RateRow>,
    pub fp: Vec<FpRow>,
}

impl EvalReport {
    pub fn from_counts(cells: &[(&str, f64, usize, usize)]) -> Self {
        EvalReport {
            rates: cells
                .iter()
                .map(|&(m, bin, correct, total)| RateRow {
                    method: m.to_string(),
                    bin_m: bin,
                    correct,
                    total,
                })
                .collect(),
            fp: Vec::new(),
        }
    }
}

/// CSV rows for per-scene verdicts
/// (`scene_id,bin_m,correct,estimated_m,error_m,failure_mode`).
pub fn verdict_csv(verdicts: &[DetectionVerdict]) -> String {
    let mut csv = String::from("scene_id,bin_m,correct,estimated_m,error_m,failure_mode\n");
    for v in verdicts {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            v.scene_id,
            v.distance_bin,
            v.correct,
            v.estimated_edge_distance
                .map(|d| format!("{d:.3}"))
                .unwrap_or_default(),
            v.error_m.map(|d| format!("{d:.3}")).unwrap_or_default(),
            v.failure_mode.as_str(),
        ));
    }
    csv
}

/// Rendered artifacts for an [`EvalReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportArtifacts {
    /// `method,bin_m,correct,total,pct_truncated` rows.
    pub csv: String,
    /// `run_id,frames,fp_count` rows.
    pub fp_csv: String,
    /// Aligned text table with methods as rows and bins as columns.
    pub table: String,
}

pub fn render_report(report: &EvalReport) -> ReportArtifacts {
    let mut csv = String::from("method,bin_m,correct,total,pct_truncated\n");
    for r in &report.rates {
        let t = r.pct_tenths();
        csv.push_str(&format!(
            "{},{},{},{},{}.{}\n",
            r.method,
            r.bin_m,
            r.correct,
            r.total,
            t / 10,
            t % 10
        ));
    }
    let mut fp_csv = String::from("run_id,frames,fp_count\n");
    for f in &report.fp {
        fp_csv.push_str(&format!("{},{},{}\n", f.run_id, f.frames, f.fp_count));
    }

    // text table, Table-2-like layout
    let mut bins: Vec<f64> = report.rates.iter().map(|r| r.bin_m).collect();
    bins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bins.dedup();
    let mut methods: Vec<String> = Vec::new();
    for r in &report.rates {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let name_w = methods
        .iter()
        .map(|m| m.len())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let cell_w = 14;
    let mut table = format!("{:name_w$}", "Method");
    for b in &bins {
        table.push_str(&format!(" | {:>cell_w$}", format!("{b} m")));
    }
    table.push('\n');
    table.push_str(&"-".repeat(name_w + bins.len() * (cell_w + 3)));
    table.push('\n');
    for m in &methods {
        table.push_str(&format!("{m:name_w$}"));
        for b in &bins {
            let cell = report
                .rates
                .iter()
                .find(|r| &r.method == m && (r.bin_m - b).abs() < 1e-9)
                .map(|r| r.cell())
                .unwrap_or_default();
            table.push_str(&format!(" | {cell:>cell_w$}"));
        }
        table.push('\n');
    }
    if !report.fp.is_empty() {
        table.push_str("\nFalse positives (obstacle-free runs):\n");
        for f in &report.fp {
            table.push_str(&format!(
                "run {:2}: {} FP over {} frames\n",
                f.run_id, f.fp_count, f.frames
            ));
        }
    }

    ReportArtifacts { csv, fp_csv, table }
}
