//! Corridor post-processing: one contiguous corridor with a sharp
//! longitudinal edge. Connected-component selection, hole closing, per-row
//! contiguity, and the sudden-width-drop cut.

use crate::camera::CameraModel;
use crate::mask::Mask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessParams {
    /// Disk radius for morphological closing of small openings.
    pub close_radius: u32,
    /// Trailing window (rows) for the reference width median.
    pub smooth_window: usize,
    /// Width-drop threshold: cut when width < drop_ratio * reference.
    pub drop_ratio: f64,
    /// Rows the drop must persist (or it must last to the corridor's end).
    pub persistence: usize,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        PostprocessParams {
            close_radius: 2,
            smooth_window: 25,
            drop_ratio: 0.5,
            persistence: 5,
        }
    }
}

/// Per-row corridor width, indexed from the bottom image row upward.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthProfile {
    pub width_px: Vec<u32>,
    /// Indices of the first and last non-zero entries, inclusive.
    pub valid_range: Option<(usize, usize)>,
    image_height: u32,
}

impl WidthProfile {
    pub fn image_row(&self, index: usize) -> u32 {
        self.image_height - 1 - index as u32
    }
}

/// Counts corridor pixels per row, bottom row first.
pub fn width_profile(mask: &Mask) -> WidthProfile {
    let mut width_px = Vec::with_capacity(mask.height as usize);
    for r in (0..mask.height).rev() {
        width_px.push(mask.row(r).iter().map(|&v| v as u32).sum());
    }
    let first = width_px.iter().position(|&w| w > 0);
    let valid_range = first.map(|f| (f, width_px.iter().rposition(|&w| w > 0).unwrap()));
    WidthProfile {
        width_px,
        valid_range,
        image_height: mask.height,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropResult {
    /// Profile index (bottom-up) of the first row of the persistent drop.
    pub cut_index: Option<usize>,
    /// Set when the valid range was shorter than the smoothing window and
    /// the search was skipped.
    pub degenerate: bool,
}

/// Scans from the nearest valid row toward the horizon. A cut candidate is
/// a row whose width falls below `drop_ratio` times the trailing-median
/// reference *and* below `drop_ratio` times the adjacent nearer row (the
/// drop must be a step, not perspective taper). The candidate is confirmed
/// when the drop persists for `persistence` rows or to the corridor's end.
pub fn detect_width_drop(profile: &WidthProfile, params: &PostprocessParams) -> DropResult {
    let Some((first, last)) = profile.valid_range else {
        return DropResult {
            cut_index: None,
            degenerate: false,
        };
    };
    let len = last - first + 1;
    if len < params.smooth_window.max(2) {
        return DropResult {
            cut_index: None,
            degenerate: true,
        };
    }
    let w = &profile.width_px;
    let mut window: Vec<u32> = Vec::with_capacity(params.smooth_window);
    for i in (first + params.smooth_window)..=last {
        window.clear();
        window.extend_from_slice(&w[i - params.smooth_window..i]);
        window.sort_unstable();
        let reference = window[window.len() / 2] as f64;
        let threshold = params.drop_ratio * reference;
        if (w[i] as f64) < threshold && (w[i] as f64) < params.drop_ratio * w[i - 1] as f64 {
            let end = (i + params.persistence - 1).min(last);
            if (i..=end).all(|j| (w[j] as f64) < threshold) {
                return DropResult {
                    cut_index: Some(i),
                    degenerate: false,
                };
            }
        }
    }
    DropResult {
        cut_index: None,
        degenerate: false,
    }
}

/// Outcome of the full post-processing pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeResult {
    /// Fractional image row of the cut boundary, when a width drop fired.
    pub cut_row: Option<f64>,
    /// Metric distance of the corridor's far edge, when one exists.
    pub edge_distance: Option<f64>,
    /// Topmost corridor row per column over the central third of columns.
    pub column_top_rows: Vec<Option<u32>>,
    /// The width profile was too short for the drop search.
    pub degenerate: bool,
}

/// select component -> close openings -> per-row contiguity -> width-drop
/// cut. Shrink-only relative to the hole-closed input; output is at most
/// one 8-connected component with one run per row.
pub fn postprocess(
    mask: &Mask,
    params: &PostprocessParams,
    cam: &CameraModel,
) -> (Mask, EdgeResult) {
    let selected = mask.select_anchor_component();
    let closed = selected.close_disk(params.close_radius);
    let single = closed.keep_longest_run_per_row();
    let profile = width_profile(&single);
    let drop = detect_width_drop(&profile, params);

    let (cut_row, cut_mask) = match drop.cut_index {
        Some(i) => {
            // boundary between the first failing row and the nearer healthy
            // row: keeps the healthy row, clears the drop and beyond
            let boundary = profile.image_row(i) as f64 + 0.5;
            (Some(boundary), single.truncate_above_row(boundary))
        }
        None => (None, single),
    };
    let out = cut_mask.select_anchor_component();

    let edge_distance = out
        .top_row()
        .and_then(|t| cam.distance_for_ground_row(t as f64 - 0.5).ok());

    let col0 = out.width as usize / 3;
    let col1 = 2 * out.width as usize / 3;
    let mut column_top_rows: Vec<Option<u32>> = vec![None; col1 - col0];
    let mut remaining = column_top_rows.len();
    'rows: for r in 0..out.height {
        for (top, &v) in column_top_rows.iter_mut().zip(&out.row(r)[col0..col1]) {
            if v != 0 && top.is_none() {
                *top = Some(r);
                remaining -= 1;
                if remaining == 0 {
                    break 'rows;
                }
            }
        }
    }

    (
        out,
        EdgeResult {
            cut_row,
            edge_distance,
            column_top_rows,
            degenerate: drop.degenerate,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraModel;

    fn profile_from(widths: &[u32]) -> WidthProfile {
        let mut width_px = widths.to_vec();
        let first = width_px.iter().position(|&w| w > 0);
        let valid_range = first.map(|f| (f, width_px.iter().rposition(|&w| w > 0).unwrap()));
        let image_height = width_px.len() as u32;
        width_px.shrink_to_fit();
        WidthProfile {
            width_px,
            valid_range,
            image_height,
        }
    }

    fn params() -> PostprocessParams {
        PostprocessParams::default()
    }

    #[test]
    fn constant_profile_has_no_drop() {
        let p = profile_from(&vec![200; 600]);
        assert_eq!(detect_width_drop(&p, &params()).cut_index, None);
    }

    #[test]
    fn step_drop_detected_at_first_row() {
        // brute-force oracle: first index whose width is below half of the
        // trailing-window median and below half the previous width, and
        // which persists for 5 rows
        let mut widths = vec![200u32; 500];
        widths.extend(vec![40u32; 20]);
        widths.extend(vec![190u32; 80]);
        let p = profile_from(&widths);
        let got = detect_width_drop(&p, &params()).cut_index;

        let oracle = (25..widths.len()).find(|&i| {
            let mut win: Vec<u32> = widths[i - 25..i].to_vec();
            win.sort_unstable();
            let r = win[12] as f64;
            (widths[i] as f64) < 0.5 * r
                && (widths[i] as f64) < 0.5 * widths[i - 1] as f64
                && (i..(i + 5).min(widths.len())).all(|j| (widths[j] as f64) < 0.5 * r)
        });
        assert_eq!(oracle, Some(500));
        assert_eq!(got, Some(500));
    }

    #[test]
    fn linear_taper_never_triggers() {
        // 400 -> 0 over 600 rows: perspective-like taper must not cut
        let widths: Vec<u32> = (0..600).map(|i| 400 - (400 * i / 600) as u32).collect();
        let p = profile_from(&widths);
        assert_eq!(detect_width_drop(&p, &params()).cut_index, None);
    }

    #[test]
    fn short_profile_is_degenerate() {
        let p = profile_from(&vec![50; 10]);
        let r = detect_width_drop(&p, &params());
        assert!(r.degenerate);
        assert_eq!(r.cut_index, None);
    }

    #[test]
    fn empty_profile() {
        let p = profile_from(&vec![0; 100]);
        assert_eq!(p.valid_range, None);
        let r = detect_width_drop(&p, &params());
        assert_eq!(r.cut_index, None);
        assert!(!r.degenerate);
    }

    #[test]
    fn drop_persisting_to_corridor_end_still_cuts() {
        // narrow rows at the very end, fewer than `persistence` of them
        let mut widths = vec![100u32; 200];
        widths.extend(vec![20u32; 3]);
        let p = profile_from(&widths);
        assert_eq!(detect_width_drop(&p, &params()).cut_index, Some(200));
    }

    #[test]
    fn triangular_profile_is_strictly_decreasing() {
        // constructed trapezoid: width shrinks toward the horizon
        let mut mask = Mask::new(100, 80);
        for r in 20..80 {
            let half = (r - 18) / 2;
            let c0 = 50 - half.min(49);
            let c1 = 50 + half.min(49);
            for c in c0..c1 {
                mask.set(c, r, true);
            }
        }
        let p = width_profile(&mask);
        let (f, l) = p.valid_range.unwrap();
        for i in f..l {
            assert!(p.width_px[i] >= p.width_px[i + 1]);
        }
        assert!(p.width_px[f] > p.width_px[l]);
    }

    #[test]
    fn postprocess_empty_mask() {
        let cam = CameraModel::default();
        let empty = Mask::new(cam.width(), cam.height());
        let (out, edge) = postprocess(&empty, &params(), &cam);
        assert!(out.is_empty());
        assert_eq!(edge.cut_row, None);
        assert_eq!(edge.edge_distance, None);
    }

    #[test]
    fn postprocess_is_idempotent_and_shrink_only() {
        let cam = CameraModel::default();
        let mask = crate::scene::corridor_mask(&cam, 3.5, 300.0).unwrap();
        let (once, _) = postprocess(&mask, &params(), &cam);
        let (twice, _) = postprocess(&once, &params(), &cam);
        assert_eq!(once, twice);
        assert!(once.is_subset_of(&mask.select_anchor_component().close_disk(2)));
        assert!(once.rows_are_single_runs());
    }

    #[test]
    fn truncate_idempotence() {
        let cam = CameraModel::default();
        let mask = crate::scene::corridor_mask(&cam, 3.5, 300.0).unwrap();
        let t1 = mask.truncate_above_row(700.5);
        assert_eq!(t1.truncate_above_row(700.5), t1);
        // cut at the corridor's far end is the identity
        let top = mask.top_row().unwrap();
        assert_eq!(mask.truncate_above_row(top as f64 - 0.5), mask);
    }
}
