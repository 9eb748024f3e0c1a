//! Deterministic stand-in for the segmentation CNN. Produces per-pixel
//! class logits and a corridor mask from a synthetic scene, with
//! configurable corruption modes that replicate typical failure shapes:
//! wrap-around at near range, missed near obstacles, small openings,
//! jittered edges.

use rand::Rng;
use thiserror::Error;

use crate::camera::CameraModel;
use crate::energy::Logits;
use crate::mask::Mask;
use crate::scene::{corridor_mask, lane_columns, rng_from_seed, SceneRecord};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("scene and camera dimensions disagree")]
    IncompatibleDimensions,
}

/// One corruption applied to the oracle's corridor output. Modes compose as
/// an ordered list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    /// Ground-truth corridor, confident logits.
    Clean,
    /// Corridor flows around the obstacle and continues past it.
    Wrap,
    /// Obstacles closer than the threshold are ignored entirely.
    MissNear { d_threshold: f64 },
    /// Interior corridor pixels flip to background independently.
    Holes { p: f64 },
    /// Row run endpoints jittered by a Gaussian with the given sigma.
    EdgeJitter { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionConfig {
    pub modes: Vec<Corruption>,
    pub rng_seed: u64,
}

impl CorruptionConfig {
    pub fn clean(seed: u64) -> Self {
        CorruptionConfig {
            modes: vec![Corruption::Clean],
            rng_seed: seed,
        }
    }

    pub fn single(mode: Corruption, seed: u64) -> Self {
        CorruptionConfig {
            modes: vec![mode],
            rng_seed: seed,
        }
    }
}

/// Shape of the logits the oracle emits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    /// Class count; 19 by default to exercise the energy math over many
    /// classes.
    pub classes: usize,
    /// Logit of the true class at inlier pixels (other classes sit at 0).
    pub inlier_margin: f64,
    /// log-sum-exp gap between inlier pixels and obstacle pixels.
    pub energy_delta: f64,
    /// Optional Gaussian noise added to every logit (models the far-range
    /// outlier noise knob).
    pub logit_noise_sigma: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            classes: 19,
            inlier_margin: 4.5,
            energy_delta: 4.0,
            logit_noise_sigma: 0.0,
        }
    }
}

/// Fraction of the lane kept as the pass-by channel in wrap mode.
const WRAP_CHANNEL_FRACTION: f64 = 0.3;
/// Minimum wrap band height in rows; far-range obstacles subtend fewer rows
/// than the corridor post-processing persistence window.
const WRAP_MIN_BAND_ROWS: u32 = 8;

/// Corridor mask only (no logits); cheaper when the energy path is off.
pub fn segment_mask(
    scene: &SceneRecord,
    cam: &CameraModel,
    cfg: &CorruptionConfig,
) -> Result<Mask, OracleError> {
    if (scene.gt_corridor.width, scene.gt_corridor.height) != (cam.width(), cam.height()) {
        return Err(OracleError::IncompatibleDimensions);
    }
    let mut mask = scene.gt_corridor.clone();
    let mut rng = rng_from_seed(cfg.rng_seed);
    for mode in &cfg.modes {
        mask = match *mode {
            Corruption::Clean => scene.gt_corridor.clone(),
            Corruption::Wrap => wrap_mask(scene, cam)?,
            Corruption::MissNear { d_threshold } => {
                match scene.meta.obstacle_distance {
                    Some(d) if d < d_threshold => {
                        corridor_mask(cam, scene.meta.lane_width, scene.meta.max_corridor_range)
                            .map_err(|_| OracleError::IncompatibleDimensions)?
                    }
                    _ => mask,
                }
            }
            Corruption::Holes { p } => punch_holes(&mask, p, &mut rng),
            Corruption::EdgeJitter { sigma } => jitter_edges(&mask, sigma, &mut rng),
        };
    }
    Ok(mask)
}

/// Full oracle output: per-pixel K-class logits plus the corridor mask.
/// Obstacle pixels get uniformly low scores so the energy path can find
/// them regardless of what the corridor mask does.
pub fn segment(
    scene: &SceneRecord,
    cam: &CameraModel,
    cfg: &CorruptionConfig,
    params: &OracleParams,
) -> Result<(Logits, Mask), OracleError> {
    let mask = segment_mask(scene, cam, cfg)?;
    let k = params.classes;
    let mut logits = Logits::new(cam.width(), cam.height(), k);

    // inlier log-sum-exp with one class at `inlier_margin`, K-1 at 0
    let inlier_lse = ((k - 1) as f64 + params.inlier_margin.exp()).ln();
    let obstacle_logit = ((inlier_lse - params.energy_delta) - (k as f64).ln()) as f32;
    let margin = params.inlier_margin as f32;

    let n = logits.plane_len();
    let obst = scene.gt_obstacle.as_raw();
    let corr = mask.as_raw();
    for c in 0..k {
        let plane = logits.plane_mut(c);
        match c {
            // class 0: background, class 1: ego corridor
            0 | 1 => {
                let want = (c == 1) as u8;
                for i in 0..n {
                    plane[i] = if obst[i] != 0 {
                        obstacle_logit
                    } else if (corr[i] != 0) == (want != 0) {
                        margin
                    } else {
                        0.0
                    };
                }
            }
            _ => {
                for i in 0..n {
                    if obst[i] != 0 {
                        plane[i] = obstacle_logit;
                    }
                }
            }
        }
    }
    if params.logit_noise_sigma > 0.0 {
        let mut rng = rng_from_seed(cfg.rng_seed ^ 0xa5a5_5a5a_dead_beef);
        let sigma = params.logit_noise_sigma as f32;
        for v in logits.data.iter_mut() {
            *v += gaussian(&mut rng) * sigma;
        }
    }
    Ok((logits, mask))
}

fn wrap_mask(scene: &SceneRecord, cam: &CameraModel) -> Result<Mask, OracleError> {
    let full = corridor_mask(cam, scene.meta.lane_width, scene.meta.max_corridor_range)
        .map_err(|_| OracleError::IncompatibleDimensions)?;
    let (near_row, offset) = match (scene.meta.near_edge_row, scene.meta.lateral_offset) {
        (Some(r), Some(o)) => (r, o),
        _ => return Ok(full), // nothing to wrap around
    };
    let mut mask = full;
    // rows strictly farther than the obstacle near edge get squeezed to a
    // narrow channel on the roomier side of the obstacle
    let band_bottom = (near_row.ceil() as i64 - 1).min(mask.height as i64 - 1);
    let obstacle_rows = scene
        .gt_obstacle
        .top_row()
        .map(|t| band_bottom - t as i64 + 1)
        .unwrap_or(0);
    let band_h = obstacle_rows.max(WRAP_MIN_BAND_ROWS as i64);
    let band_top = (band_bottom - band_h + 1).max(0);
    let keep_right = offset <= 0.0;
    for r in band_top..=band_bottom {
        if r < 0 {
            continue;
        }
        let r = r as u32;
        let Some((c0, c1)) = lane_columns(cam, scene.meta.lane_width, r) else {
            continue;
        };
        let channel = (((c1 - c0) as f64 * WRAP_CHANNEL_FRACTION) as u32).max(1);
        let (k0, k1) = if keep_right {
            (c1 - channel.min(c1 - c0), c1)
        } else {
            (c0, c0 + channel.min(c1 - c0))
        };
        let row = mask.row_mut(r);
        for c in c0..c1 {
            if c < k0 || c >= k1 {
                row[c as usize] = 0;
            }
        }
    }
    Ok(mask)
}

fn punch_holes(mask: &Mask, p: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Mask {
    let mut out = mask.clone();
    if p <= 0.0 {
        return out;
    }
    for r in 1..mask.height - 1 {
        for c in 1..mask.width - 1 {
            let interior = mask.get(c, r)
                && mask.get(c - 1, r)
                && mask.get(c + 1, r)
                && mask.get(c, r - 1)
                && mask.get(c, r + 1);
            if interior && rng.random::<f64>() < p {
                out.set(c, r, false);
            }
        }
    }
    out
}

fn jitter_edges(mask: &Mask, sigma: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Mask {
    if sigma <= 0.0 {
        return mask.clone();
    }
    let mut out = Mask::new(mask.width, mask.height);
    for r in 0..mask.height {
        let row = mask.row(r);
        let Some(first) = row.iter().position(|&v| v != 0) else {
            continue;
        };
        let last = row.iter().rposition(|&v| v != 0).unwrap();
        let d0 = (gaussian(rng) as f64 * sigma).round() as i64;
        let d1 = (gaussian(rng) as f64 * sigma).round() as i64;
        let new0 = (first as i64 + d0).clamp(0, mask.width as i64 - 1);
        let new1 = (last as i64 + d1).clamp(new0, mask.width as i64 - 1);
        out.row_mut(r)[new0 as usize..=new1 as usize].fill(1);
    }
    out
}

/// Standard normal via Box-Muller; two uniforms per call keeps the stream
/// layout simple and reproducible.
fn gaussian(rng: &mut rand_chacha::ChaCha8Rng) -> f32 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraModel;
    use crate::energy::free_energy;
    use crate::scene::{render_scene, ObstaclePlacement, ScenarioSpec};
    use crate::sprite::builtin_library;

    fn scene(d: Option<f64>) -> (SceneRecord, CameraModel) {
        let cam = CameraModel::default();
        let mut spec = ScenarioSpec::new(cam);
        spec.sprite_id = "crate_red".into();
        if let Some(d) = d {
            spec.obstacle = Some(ObstaclePlacement {
                distance: d,
                lateral_offset: 0.3,
                physical_width: 0.5,
                physical_height: 0.5,
                rotation: 0.0,
            });
        }
        (render_scene(&spec, &builtin_library()).unwrap(), cam)
    }

    #[test]
    fn clean_mode_is_identity() {
        let (rec, cam) = scene(Some(100.0));
        let mask = segment_mask(&rec, &cam, &CorruptionConfig::clean(1)).unwrap();
        assert_eq!(mask, rec.gt_corridor);
    }

    #[test]
    fn wrap_mode_continues_past_obstacle() {
        let (rec, cam) = scene(Some(25.0));
        let mask = segment_mask(
            &rec,
            &cam,
            &CorruptionConfig::single(Corruption::Wrap, 1),
        )
        .unwrap();
        let near = rec.meta.near_edge_row.unwrap();
        // corridor pixels exist at rows farther than the near edge
        let above = (0..(near as u32)).any(|r| mask.row(r).iter().any(|&v| v != 0));
        assert!(above);
        // and the ground truth has none there within the lane
        assert!(rec.gt_corridor.top_row().unwrap() as f64 >= near.floor());
    }

    #[test]
    fn miss_near_threshold_zero_is_clean() {
        let (rec, cam) = scene(Some(25.0));
        let a = segment_mask(
            &rec,
            &cam,
            &CorruptionConfig::single(Corruption::MissNear { d_threshold: 0.0 }, 1),
        )
        .unwrap();
        assert_eq!(a, rec.gt_corridor);
        let b = segment_mask(
            &rec,
            &cam,
            &CorruptionConfig::single(Corruption::MissNear { d_threshold: 60.0 }, 1),
        )
        .unwrap();
        // missed: corridor extends past the obstacle
        assert!(b.top_row().unwrap() < rec.gt_corridor.top_row().unwrap());
    }

    #[test]
    fn holes_flip_count_within_binomial_bound() {
        let (rec, cam) = scene(None);
        let p = 0.01;
        let mask = segment_mask(
            &rec,
            &cam,
            &CorruptionConfig::single(Corruption::Holes { p }, 42),
        )
        .unwrap();
        // count interior pixels of the ground truth
        let mut interior = 0usize;
        for r in 1..rec.gt_corridor.height - 1 {
            for c in 1..rec.gt_corridor.width - 1 {
                if rec.gt_corridor.get(c, r)
                    && rec.gt_corridor.get(c - 1, r)
                    && rec.gt_corridor.get(c + 1, r)
                    && rec.gt_corridor.get(c, r - 1)
                    && rec.gt_corridor.get(c, r + 1)
                {
                    interior += 1;
                }
            }
        }
        let flipped = rec.gt_corridor.count_set() - mask.count_set();
        let mean = interior as f64 * p;
        let sd = (interior as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (flipped as f64 - mean).abs() <= 3.0 * sd,
            "flipped {flipped}, expected {mean} +- {sd}"
        );
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let (rec, cam) = scene(Some(50.0));
        let cfg = CorruptionConfig::single(Corruption::Holes { p: 0.02 }, 7);
        let a = segment_mask(&rec, &cam, &cfg).unwrap();
        let b = segment_mask(&rec, &cam, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn obstacle_pixels_have_low_log_sum_exp() {
        let (rec, cam) = scene(Some(50.0));
        let params = OracleParams::default();
        let (logits, _) = segment(&rec, &cam, &CorruptionConfig::clean(1), &params).unwrap();
        // scene median lse = inlier lse; obstacle pixels sit delta below
        let inlier = -free_energy(&logits.pixel(10, 1000)).unwrap();
        let mut checked = 0;
        for r in 0..rec.gt_obstacle.height {
            for c in 0..rec.gt_obstacle.width {
                if rec.gt_obstacle.get(c, r) {
                    let lse = -free_energy(&logits.pixel(c, r)).unwrap();
                    assert!(inlier - lse >= params.energy_delta - 1e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > 50);
    }
}
