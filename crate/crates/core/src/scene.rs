//! Synthetic test-track scenes: straight ego-lane rendered through the
//! camera model, optional composited obstacle, exact ground-truth corridor
//! and obstacle masks. The corridor ground truth is truncated at the
//! obstacle's near edge across the full lane width.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::camera::{CameraError, CameraModel};
use crate::mask::Mask;
use crate::sprite::{lookup, Sprite, SpriteError};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Sprite(#[from] SpriteError),
    #[error("obstacle placement projects outside the image")]
    PlacementOffImage,
    #[error("object of width {width} m cannot fit a lane of {lane} m")]
    InfeasibleConstraints { width: f64, lane: f64 },
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

/// Resolved obstacle placement in metric scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstaclePlacement {
    pub distance: f64,
    /// Meters from the lane center, left negative.
    pub lateral_offset: f64,
    pub physical_width: f64,
    pub physical_height: f64,
    /// In-plane rotation in degrees.
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub lane_width: f64,
    pub max_corridor_range: f64,
    pub obstacle: Option<ObstaclePlacement>,
    pub sprite_id: String,
    pub rng_seed: u64,
    pub camera: CameraModel,
    /// Longitudinal phase of the dashed lane marking, meters. Varies per
    /// frame in obstacle-free sequences to mimic ego motion.
    pub dash_phase: f64,
    /// Gaussian feather radius for sprite compositing, pixels.
    pub feather_radius: u32,
}

impl ScenarioSpec {
    pub fn new(camera: CameraModel) -> Self {
        ScenarioSpec {
            lane_width: 3.5,
            max_corridor_range: 400.0,
            obstacle: None,
            sprite_id: String::new(),
            rng_seed: 0,
            camera,
            dash_phase: 0.0,
            feather_radius: 2,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.camera.validate().map_err(SceneError::Camera)?;
        if !(self.lane_width > 0.0) {
            return Err(SceneError::InvalidSpec("lane_width must be > 0".into()));
        }
        if !(self.max_corridor_range > 0.0) {
            return Err(SceneError::InvalidSpec(
                "max_corridor_range must be > 0".into(),
            ));
        }
        if let Some(o) = &self.obstacle {
            if o.lateral_offset.abs() + o.physical_width / 2.0 > self.lane_width / 2.0 + 1e-9 {
                return Err(SceneError::InvalidSpec(
                    "obstacle leaves the lane (traffic relevancy)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Plain RGB raster, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    #[inline]
    pub fn put(&mut self, col: u32, row: u32, rgb: [u8; 3]) {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> [u8; 3] {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMeta {
    pub obstacle_distance: Option<f64>,
    /// Ground row of the obstacle near edge (fractional), if present.
    pub near_edge_row: Option<f64>,
    pub sprite_id: String,
    pub seed: u64,
    pub lane_width: f64,
    pub max_corridor_range: f64,
    pub lateral_offset: Option<f64>,
    pub physical_width: Option<f64>,
    pub physical_height: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub image: RgbImage,
    pub gt_corridor: Mask,
    pub gt_obstacle: Mask,
    pub meta: SceneMeta,
}

/// Half width of the lane in pixels at a given fractional image row.
pub fn lane_half_width_px(cam: &CameraModel, lane_width: f64, row: f64) -> Option<f64> {
    let d = cam.distance_for_ground_row(row).ok()?;
    Some(cam.focal_length * (lane_width / 2.0) / d)
}

/// Column bounds `[c0, c1)` of the lane at an integer image row, clamped to
/// the frame, or `None` above the lane's far end.
pub fn lane_columns(cam: &CameraModel, lane_width: f64, row: u32) -> Option<(u32, u32)> {
    let half = lane_half_width_px(cam, lane_width, row as f64)?;
    let cx = cam.principal_point.0;
    let c0 = (cx - half).round().max(0.0) as u32;
    let c1 = ((cx + half).round() as i64).clamp(0, cam.width() as i64) as u32;
    if c1 <= c0 {
        None
    } else {
        Some((c0, c1))
    }
}

/// The ground-truth corridor: full lane width, from the bottom edge out to
/// `end_distance`. Pixel rows whose ground distance exceeds `end_distance`
/// stay clear.
pub fn corridor_mask(
    cam: &CameraModel,
    lane_width: f64,
    end_distance: f64,
) -> Result<Mask, CameraError> {
    let mut m = Mask::new(cam.width(), cam.height());
    let top = cam.ground_row_for_distance(end_distance)?;
    let first_row = top.ceil() as u32; // rows r >= row(end) are at <= end_distance
    for r in first_row..cam.height() {
        if let Some((c0, c1)) = lane_columns(cam, lane_width, r) {
            m.row_mut(r)[c0 as usize..c1 as usize].fill(1);
        }
    }
    Ok(m)
}

/// Alpha-blends a sprite onto `image` with the sprite's top-left corner at
/// (`left`, `top`); the opacity channel is feathered with a Gaussian of the
/// given radius first. Pixels outside the sprite box are unchanged.
pub fn composite_object(
    image: &mut RgbImage,
    sprite: &Sprite,
    left: i64,
    top: i64,
    feather_radius: u32,
) -> Result<(), SceneError> {
    if sprite.is_fully_transparent() {
        return Err(SceneError::Sprite(SpriteError::EmptySprite));
    }
    if left + (sprite.width as i64) <= 0
        || top + (sprite.height as i64) <= 0
        || left >= image.width as i64
        || top >= image.height as i64
    {
        return Err(SceneError::PlacementOffImage);
    }
    let alpha = feathered_alpha(sprite, feather_radius);
    let pad = feather_pad(feather_radius) as i64;
    let aw = sprite.width as i64 + 2 * pad;
    let ah = sprite.height as i64 + 2 * pad;
    for ar in 0..ah {
        let ir = top - pad + ar;
        if ir < 0 || ir >= image.height as i64 {
            continue;
        }
        for ac in 0..aw {
            let ic = left - pad + ac;
            if ic < 0 || ic >= image.width as i64 {
                continue;
            }
            let a = alpha[(ar * aw + ac) as usize];
            if a <= 0.0 {
                continue;
            }
            // sprite color sample: clamp to the sprite box so the feather
            // band extends the border color outward
            let sc = (ac - pad).clamp(0, sprite.width as i64 - 1) as u32;
            let sr = (ar - pad).clamp(0, sprite.height as i64 - 1) as u32;
            let si = ((sr * sprite.width + sc) * 4) as usize;
            let fg = [sprite.rgba[si], sprite.rgba[si + 1], sprite.rgba[si + 2]];
            let bg = image.get(ic as u32, ir as u32);
            let mix = |f: u8, b: u8| (f as f64 * a + b as f64 * (1.0 - a)).round() as u8;
            image.put(ic as u32, ir as u32, [mix(fg[0], bg[0]), mix(fg[1], bg[1]), mix(fg[2], bg[2])]);
        }
    }
    Ok(())
}

fn feather_pad(radius: u32) -> u32 {
    if radius == 0 {
        0
    } else {
        2 * radius
    }
}

/// Sprite opacity in [0,1] blurred with a Gaussian (sigma = radius / 2),
/// padded by `feather_pad` on all sides.
fn feathered_alpha(sprite: &Sprite, radius: u32) -> Vec<f64> {
    let pad = feather_pad(radius) as usize;
    let w = sprite.width as usize + 2 * pad;
    let h = sprite.height as usize + 2 * pad;
    let mut a = vec![0.0f64; w * h];
    for r in 0..sprite.height as usize {
        for c in 0..sprite.width as usize {
            a[(r + pad) * w + c + pad] =
                sprite.rgba[(r * sprite.width as usize + c) * 4 + 3] as f64 / 255.0;
        }
    }
    if radius == 0 {
        return a;
    }
    let sigma = radius as f64 / 2.0;
    let half = pad;
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let x = i as f64 - half as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    let mut tmp = vec![0.0f64; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let cc = c as i64 + i as i64 - half as i64;
                if cc >= 0 && (cc as usize) < w {
                    acc += k * a[r * w + cc as usize];
                }
            }
            tmp[r * w + c] = acc / norm;
        }
    }
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let rr = r as i64 + i as i64 - half as i64;
                if rr >= 0 && (rr as usize) < h {
                    acc += k * tmp[rr as usize * w + c];
                }
            }
            a[r * w + c] = acc / norm;
        }
    }
    a
}

/// Samples an obstacle placement for one distance bin: lateral offset
/// uniform subject to lane containment, rotation uniform in +-15 degrees,
/// size jittered +-20% around the sprite's nominal size.
pub fn sample_placement(
    rng: &mut ChaCha8Rng,
    spec: &ScenarioSpec,
    sprite: &Sprite,
    distance_bin: f64,
) -> Result<ObstaclePlacement, SceneError> {
    let jitter_w: f64 = rng.random_range(0.8..=1.2);
    let jitter_h: f64 = rng.random_range(0.8..=1.2);
    let rotation: f64 = rng.random_range(-15.0..=15.0);
    let physical_width = (sprite.nominal_width_m * jitter_w).min(spec.lane_width);
    let physical_height = sprite.nominal_height_m * jitter_h;
    let slack = spec.lane_width / 2.0 - physical_width / 2.0;
    if slack < 0.0 {
        return Err(SceneError::InfeasibleConstraints {
            width: physical_width,
            lane: spec.lane_width,
        });
    }
    let lateral_offset = if slack == 0.0 {
        0.0
    } else {
        rng.random_range(-slack..=slack)
    };
    Ok(ObstaclePlacement {
        distance: distance_bin,
        lateral_offset,
        physical_width,
        physical_height,
        rotation,
    })
}

/// Renders the scene deterministically from its spec: lane geometry
/// projected through the camera, sprite composited at metric scale, ground
/// truth truncated at the obstacle near edge.
pub fn render_scene(spec: &ScenarioSpec, library: &[Sprite]) -> Result<SceneRecord, SceneError> {
    spec.validate()?;
    let cam = &spec.camera;
    let mut image = render_background(spec);

    let end_distance = spec
        .obstacle
        .map(|o| o.distance)
        .unwrap_or(spec.max_corridor_range);
    let gt_corridor = corridor_mask(cam, spec.lane_width, end_distance)?;

    let mut gt_obstacle = Mask::new(cam.width(), cam.height());
    let mut near_edge_row = None;

    if let Some(obstacle) = &spec.obstacle {
        let sprite = lookup(library, &spec.sprite_id)?;
        // rotate first, then scale the tightened footprint to the projected
        // metric size, so the composited bbox width tracks physical_width
        let rotated = sprite.rotate(obstacle.rotation)?;
        let w_px = cam
            .pixel_extent_at_distance(obstacle.physical_width, obstacle.distance)?
            .round()
            .max(1.0) as u32;
        let h_px = cam
            .pixel_extent_at_distance(obstacle.physical_height, obstacle.distance)?
            .round()
            .max(1.0) as u32;
        let scaled = rotated.scale_to(w_px, h_px);

        let base_row = cam.ground_row_for_distance(obstacle.distance)?;
        let center_col = cam.principal_point.0
            + cam.focal_length * obstacle.lateral_offset / obstacle.distance;
        // rasterization rounds half-up
        let left = (center_col - w_px as f64 / 2.0 + 0.5).floor() as i64;
        let top = (base_row + 0.5).floor() as i64 - h_px as i64 + 1;

        for r in 0..scaled.height {
            let ir = top + r as i64;
            if ir < 0 || ir >= cam.height() as i64 {
                continue;
            }
            for c in 0..scaled.width {
                let ic = left + c as i64;
                if ic < 0 || ic >= cam.width() as i64 {
                    continue;
                }
                if scaled.alpha(c, r) >= 128 {
                    gt_obstacle.set(ic as u32, ir as u32, true);
                }
            }
        }
        if gt_obstacle.is_empty() {
            return Err(SceneError::PlacementOffImage);
        }
        composite_object(&mut image, &scaled, left, top, spec.feather_radius)?;
        near_edge_row = Some(base_row);
    }

    Ok(SceneRecord {
        image,
        gt_corridor,
        gt_obstacle,
        meta: SceneMeta {
            obstacle_distance: spec.obstacle.map(|o| o.distance),
            near_edge_row,
            sprite_id: spec.sprite_id.clone(),
            seed: spec.rng_seed,
            lane_width: spec.lane_width,
            max_corridor_range: spec.max_corridor_range,
            lateral_offset: spec.obstacle.map(|o| o.lateral_offset),
            physical_width: spec.obstacle.map(|o| o.physical_width),
            physical_height: spec.obstacle.map(|o| o.physical_height),
        },
    })
}

const SKY: [u8; 3] = [150, 185, 220];
const GRASS: [u8; 3] = [70, 120, 60];
const ROAD: [u8; 3] = [90, 90, 92];
const MARKING: [u8; 3] = [235, 235, 230];

fn render_background(spec: &ScenarioSpec) -> RgbImage {
    let cam = &spec.camera;
    let w = cam.width() as usize;
    let mut img = RgbImage::new(cam.width(), cam.height());
    let horizon = cam.horizon_row();
    let road_width = spec.lane_width + 3.0; // shoulders beyond the markings
    let marking_width = 0.12;
    let cx = cam.principal_point.0;

    // columns c with lo <= c - cx <= hi, clamped to the row, half-open
    let span = |lo: f64, hi: f64| -> (usize, usize) {
        let c0 = (cx + lo).ceil().clamp(0.0, w as f64) as usize;
        let c1 = ((cx + hi).floor() + 1.0).clamp(0.0, w as f64) as usize;
        (c0, c1.max(c0))
    };
    let fill = |row: &mut [u8], c0: usize, c1: usize, rgb: [u8; 3]| {
        for px in row[c0 * 3..c1 * 3].chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
    };

    for r in 0..cam.height() {
        let rowf = r as f64;
        let row = &mut img.data[r as usize * w * 3..(r as usize + 1) * w * 3];
        let d = if rowf <= horizon {
            None
        } else {
            cam.distance_for_ground_row(rowf).ok()
        };
        let Some(d) = d else {
            fill(row, 0, w, SKY);
            continue;
        };
        let px_per_m = cam.focal_length / d;
        let road_half = px_per_m * road_width / 2.0;
        let lane_half = px_per_m * spec.lane_width / 2.0;
        let mark_half = (px_per_m * marking_width / 2.0).max(0.5);
        // dashed marking: 3 m dash / 3 m gap along the road
        let dash_on = ((d + spec.dash_phase) / 3.0).floor() as i64 % 2 == 0;
        fill(row, 0, w, GRASS);
        let (r0, r1) = span(-road_half, road_half);
        fill(row, r0, r1, ROAD);
        if dash_on {
            for side in [-1.0, 1.0] {
                let (m0, m1) = span(side * lane_half - mark_half, side * lane_half + mark_half);
                fill(row, m0, m1, MARKING);
            }
        }
    }
    img
}

/// Derives a per-scene RNG stream from a master seed and a scene index
/// (splitmix64 finalizer).
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sprite::builtin_library;

    fn spec_with_obstacle(d: f64) -> ScenarioSpec {
        let mut spec = ScenarioSpec::new(CameraModel::default());
        spec.sprite_id = "crate_red".into();
        spec.obstacle = Some(ObstaclePlacement {
            distance: d,
            lateral_offset: 0.0,
            physical_width: 0.5,
            physical_height: 0.5,
            rotation: 0.0,
        });
        spec
    }

    #[test]
    fn corridor_truncated_at_obstacle_near_edge() {
        let lib = builtin_library();
        let spec = spec_with_obstacle(100.0);
        let rec = render_scene(&spec, &lib).unwrap();
        let near = rec.meta.near_edge_row.unwrap();
        assert_eq!(near, 566.0);
        assert_eq!(rec.gt_corridor.top_row(), Some(566));
        // no corridor pixel farther than the obstacle within the lane
        for r in 0..566 {
            assert!(rec.gt_corridor.row(r).iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn sprite_width_matches_pinhole_projection() {
        let lib = builtin_library();
        let spec = spec_with_obstacle(100.0);
        let rec = render_scene(&spec, &lib).unwrap();
        // composited footprint width vs pixel_extent_at_distance
        let mut c_min = u32::MAX;
        let mut c_max = 0;
        for r in 0..rec.gt_obstacle.height {
            for c in 0..rec.gt_obstacle.width {
                if rec.gt_obstacle.get(c, r) {
                    c_min = c_min.min(c);
                    c_max = c_max.max(c);
                }
            }
        }
        let measured = (c_max - c_min + 1) as f64;
        let expected = spec
            .camera
            .pixel_extent_at_distance(0.5, 100.0)
            .unwrap();
        assert!((measured - expected).abs() <= 1.0, "{measured} vs {expected}");
    }

    #[test]
    fn obstacle_free_corridor_reaches_max_range() {
        let lib = builtin_library();
        let mut spec = ScenarioSpec::new(CameraModel::default());
        spec.max_corridor_range = 400.0;
        let rec = render_scene(&spec, &lib).unwrap();
        let expected_top = spec
            .camera
            .ground_row_for_distance(400.0)
            .unwrap()
            .ceil() as u32;
        assert_eq!(rec.gt_corridor.top_row(), Some(expected_top));
        assert!(rec.gt_obstacle.is_empty());
    }

    #[test]
    fn rendering_is_deterministic() {
        let lib = builtin_library();
        let spec = spec_with_obstacle(50.0);
        let a = render_scene(&spec, &lib).unwrap();
        let b = render_scene(&spec, &lib).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corridor_is_single_anchor_component() {
        let lib = builtin_library();
        let rec = render_scene(&spec_with_obstacle(25.0), &lib).unwrap();
        let (_, n) = rec.gt_corridor.label_components();
        assert_eq!(n, 1);
        assert_eq!(
            rec.gt_corridor.select_anchor_component(),
            rec.gt_corridor
        );
    }

    #[test]
    fn placement_respects_lane_containment() {
        let lib = builtin_library();
        let spec = spec_with_obstacle(50.0);
        let sprite = lookup(&lib, "crate_red").unwrap();
        let mut rng = rng_from_seed(17);
        for _ in 0..10_000 {
            let p = sample_placement(&mut rng, &spec, sprite, 50.0).unwrap();
            assert!(p.lateral_offset.abs() + p.physical_width / 2.0 <= spec.lane_width / 2.0 + 1e-9);
            assert!(p.rotation.abs() <= 15.0);
        }
    }

    #[test]
    fn full_lane_width_object_is_centered() {
        let lib = builtin_library();
        let mut spec = spec_with_obstacle(50.0);
        spec.lane_width = 3.5;
        let mut sprite = lookup(&lib, "crate_red").unwrap().clone();
        sprite.nominal_width_m = 3.5;
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let p = sample_placement(&mut rng, &spec, &sprite, 50.0).unwrap();
            if p.physical_width >= spec.lane_width {
                assert_eq!(p.lateral_offset, 0.0);
            }
        }
    }

    #[test]
    fn same_rng_state_gives_identical_placement() {
        let lib = builtin_library();
        let spec = spec_with_obstacle(50.0);
        let sprite = lookup(&lib, "crate_red").unwrap();
        let a = sample_placement(&mut rng_from_seed(9), &spec, sprite, 50.0).unwrap();
        let b = sample_placement(&mut rng_from_seed(9), &spec, sprite, 50.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hard_paste_and_transparent_sprite() {
        let lib = builtin_library();
        let sprite = lookup(&lib, "crate_red").unwrap();
        let mut img = RgbImage::new(200, 200);
        composite_object(&mut img, sprite, 50, 50, 0).unwrap();
        // inside the opaque body the image equals the sprite pixel
        let a = sprite.alpha(10, 10);
        assert_eq!(a, 255);
        let si = ((10 * sprite.width + 10) * 4) as usize;
        assert_eq!(
            img.get(60, 60),
            [sprite.rgba[si], sprite.rgba[si + 1], sprite.rgba[si + 2]]
        );

        let mut clear = sprite.clone();
        for p in clear.rgba.chunks_exact_mut(4) {
            p[3] = 0;
        }
        let mut img2 = RgbImage::new(200, 200);
        assert!(matches!(
            composite_object(&mut img2, &clear, 50, 50, 0),
            Err(SceneError::Sprite(SpriteError::EmptySprite))
        ));
    }

    #[test]
    fn feather_blends_border_band() {
        // 10x10 opaque red square over a black image, feather radius 2
        let sq = Sprite {
            name: "sq".into(),
            width: 10,
            height: 10,
            rgba: vec![200, 0, 0, 255]
                .into_iter()
                .cycle()
                .take(400)
                .collect(),
            nominal_width_m: 1.0,
            nominal_height_m: 1.0,
        };
        let mut img = RgbImage::new(50, 50);
        composite_object(&mut img, &sq, 20, 20, 2).unwrap();
        // border band pixels are strictly between background and sprite
        let corner = img.get(20, 20)[0];
        assert!(corner > 0 && corner < 200, "corner = {corner}");
        // center remains (nearly) the sprite color
        assert!(img.get(25, 25)[0] >= 195);
    }
}
