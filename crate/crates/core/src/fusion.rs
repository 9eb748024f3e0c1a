//! Explicit outlier path: threshold the energy map, group outlier pixels
//! into blobs, and truncate the corridor where a blob intersects it.

use crate::camera::CameraModel;
use crate::energy::EnergyMap;
use crate::mask::Mask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Energy threshold: pixels with E > t are outliers.
    pub energy_threshold: f32,
    /// Components smaller than this (pixels) are dropped as noise.
    pub min_blob_area: usize,
    /// Dilation radius used only to merge nearby fragments before labeling;
    /// blob pixels and extents stay those of the original outlier raster.
    pub blob_dilation: u32,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            energy_threshold: -2.0,
            min_blob_area: 20,
            blob_dilation: 1,
        }
    }
}

/// One connected high-energy region.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierBlob {
    /// (col, row) of every member pixel.
    pub pixels: Vec<(u32, u32)>,
    /// (c_min, r_min, c_max, r_max), inclusive.
    pub bbox: (u32, u32, u32, u32),
    /// Largest row index = closest to the ego vehicle.
    pub nearest_row: u32,
}

impl OutlierBlob {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// 8-connected outlier components, merged across `blob_dilation` gaps,
/// filtered by `min_blob_area`, sorted nearest (largest row) first.
pub fn extract_blobs(outliers: &Mask, cfg: &FusionConfig) -> Vec<OutlierBlob> {
    let merged = if cfg.blob_dilation > 0 {
        outliers.dilate_disk(cfg.blob_dilation)
    } else {
        outliers.clone()
    };
    let (labels, n) = merged.label_components();
    if n == 0 {
        return Vec::new();
    }
    let w = outliers.width as usize;
    let mut blobs: Vec<Option<OutlierBlob>> = vec![None; n as usize];
    for r in 0..outliers.height {
        for c in 0..outliers.width {
            if !outliers.get(c, r) {
                continue;
            }
            let label = labels[r as usize * w + c as usize] as usize;
            debug_assert!(label > 0);
            let entry = blobs[label - 1].get_or_insert_with(|| OutlierBlob {
                pixels: Vec::new(),
                bbox: (c, r, c, r),
                nearest_row: r,
            });
            entry.pixels.push((c, r));
            let (c0, r0, c1, r1) = entry.bbox;
            entry.bbox = (c0.min(c), r0.min(r), c1.max(c), r1.max(r));
            entry.nearest_row = entry.nearest_row.max(r);
        }
    }
    let mut out: Vec<OutlierBlob> = blobs
        .into_iter()
        .flatten()
        .filter(|b| b.area() >= cfg.min_blob_area)
        .collect();
    out.sort_by(|a, b| b.nearest_row.cmp(&a.nearest_row));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    /// Bounding box and nearest row of the blob that truncated the
    /// corridor, if any did.
    pub acted_on: Option<(u32, u32, u32, u32)>,
    pub acted_nearest_row: Option<u32>,
    /// Edge distance of the fused corridor.
    pub edge_distance: Option<f64>,
}

/// Truncates the corridor strictly below the nearest blob that intersects
/// it. Blobs that do not touch the corridor, or that lie beyond its end,
/// leave it unchanged.
pub fn fuse(
    corridor: &Mask,
    blobs: &[OutlierBlob],
    cam: &CameraModel,
) -> (Mask, FusionReport) {
    let acted = blobs
        .iter()
        .filter(|b| b.pixels.iter().any(|&(c, r)| corridor.get(c, r)))
        .max_by_key(|b| b.nearest_row);
    let (mask, acted_on, acted_nearest_row) = match acted {
        Some(blob) => {
            // strictly below the blob: its nearest row is cleared as well
            let fused = corridor.truncate_above_row(blob.nearest_row as f64 + 0.5);
            (fused, Some(blob.bbox), Some(blob.nearest_row))
        }
        None => (corridor.clone(), None, None),
    };
    let edge_distance = mask
        .top_row()
        .and_then(|t| cam.distance_for_ground_row(t as f64 - 0.5).ok());
    (
        mask,
        FusionReport {
            acted_on,
            acted_nearest_row,
            edge_distance,
        },
    )
}

/// Convenience for the full explicit path: energy -> threshold -> blobs ->
/// fuse.
pub fn fuse_with_energy(
    corridor: &Mask,
    energy: &EnergyMap,
    cfg: &FusionConfig,
    cam: &CameraModel,
) -> (Mask, FusionReport) {
    let outliers = crate::energy::threshold_outliers(energy, cfg.energy_threshold);
    let blobs = extract_blobs(&outliers, cfg);
    fuse(corridor, &blobs, cam)
}
