//! Full evaluation protocol dataset: per distance bin, every sprite in a
//! configurable number of seed variants, plus obstacle-free runs. Generation
//! is a pure function of (config, master seed); reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::camera::CameraModel;
use crate::formats::{
    format_kv_line, parse_kv_file, parse_kv_line, read_mask_png, read_rgb_png, write_mask_png,
    write_rgb_png, FormatError,
};
use crate::scene::{
    derive_seed, render_scene, rng_from_seed, sample_placement, SceneError, SceneMeta,
    SceneRecord, ScenarioSpec,
};
use crate::sprite::{builtin_library, Sprite};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("sprite library has {have} sprites, protocol needs {need}")]
    InsufficientSprites { have: usize, need: usize },
    #[error("manifest entry missing key `{0}`")]
    MissingKey(&'static str),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Shape of the full evaluation protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Obstacle distance bins, meters.
    pub bins: Vec<f64>,
    /// Sprites drawn from the front of the library, per bin.
    pub sprites_per_bin: usize,
    /// Seed variants per (bin, sprite).
    pub variants_per_sprite: usize,
    /// Obstacle-free runs and frames per run.
    pub runs: usize,
    pub frames_per_run: usize,
    pub master_seed: u64,
    pub camera: CameraModel,
    pub lane_width: f64,
    pub max_corridor_range: f64,
    pub feather_radius: u32,
    /// Simulated ego advance between clean frames, meters (shifts the
    /// dashed-marking phase).
    pub meters_per_frame: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            bins: vec![25.0, 50.0, 100.0, 200.0, 300.0],
            sprites_per_bin: 28,
            variants_per_sprite: 3,
            runs: 12,
            frames_per_run: 200,
            master_seed: 7,
            camera: CameraModel::default(),
            lane_width: 3.5,
            max_corridor_range: 400.0,
            feather_radius: 2,
            meters_per_frame: 0.7,
        }
    }
}

impl ProtocolConfig {
    /// The full protocol: 5 bins x 28 sprites x 3 variants = 420 obstacle
    /// scenes plus 12 x 200 clean frames.
    pub fn full(master_seed: u64) -> Self {
        ProtocolConfig {
            master_seed,
            ..Default::default()
        }
    }

    /// A small configuration for quick end-to-end exercises.
    pub fn smoke(master_seed: u64) -> Self {
        ProtocolConfig {
            bins: vec![25.0, 100.0],
            sprites_per_bin: 2,
            variants_per_sprite: 1,
            runs: 1,
            frames_per_run: 3,
            master_seed,
            ..Default::default()
        }
    }

    pub fn obstacle_scene_count(&self) -> usize {
        self.bins.len() * self.sprites_per_bin * self.variants_per_sprite
    }

    pub fn clean_frame_count(&self) -> usize {
        self.runs * self.frames_per_run
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Obstacle,
    Clean,
}

impl EntryKind {
    fn as_str(&self) -> &'static str {
        match self {
            EntryKind::Obstacle => "obstacle",
            EntryKind::Clean => "clean",
        }
    }
}

/// One manifest record; `path` is the scene directory relative to the
/// dataset root, with `/` separators.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub kind: EntryKind,
    pub path: String,
    pub bin: Option<f64>,
    pub sprite: Option<String>,
    pub variant: Option<usize>,
    pub run: Option<usize>,
    pub frame: Option<usize>,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn to_line(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("kind", self.kind.as_str().to_string()),
            ("path", self.path.clone()),
        ];
        if let Some(b) = self.bin {
            pairs.push(("bin", format!("{b}")));
        }
        if let Some(s) = &self.sprite {
            pairs.push(("sprite", s.clone()));
        }
        if let Some(v) = self.variant {
            pairs.push(("variant", format!("{v}")));
        }
        if let Some(r) = self.run {
            pairs.push(("run", format!("{r}")));
        }
        if let Some(f) = self.frame {
            pairs.push(("frame", format!("{f}")));
        }
        pairs.push(("seed", format!("{}", self.seed)));
        format_kv_line(&pairs)
    }

    pub fn from_line(line: &str, line_no: usize) -> Result<Self, DatasetError> {
        let pairs = parse_kv_line(line, line_no)?;
        let get = |k: &str| pairs.iter().find(|(pk, _)| pk == k).map(|(_, v)| v.clone());
        let kind = match get("kind").as_deref() {
            Some("obstacle") => EntryKind::Obstacle,
            Some("clean") => EntryKind::Clean,
            _ => return Err(DatasetError::MissingKey("kind")),
        };
        Ok(ManifestEntry {
            kind,
            path: get("path").ok_or(DatasetError::MissingKey("path"))?,
            bin: get("bin").and_then(|v| v.parse().ok()),
            sprite: get("sprite"),
            variant: get("variant").and_then(|v| v.parse().ok()),
            run: get("run").and_then(|v| v.parse().ok()),
            frame: get("frame").and_then(|v| v.parse().ok()),
            seed: get("seed")
                .and_then(|v| v.parse().ok())
                .ok_or(DatasetError::MissingKey("seed"))?,
        })
    }
}

/// Builds the manifest (fixed order: obstacle scenes by bin, sprite,
/// variant; then clean frames by run, frame) without rendering anything.
pub fn plan_manifest(
    cfg: &ProtocolConfig,
    library: &[Sprite],
) -> Result<Vec<ManifestEntry>, DatasetError> {
    if library.len() < cfg.sprites_per_bin {
        return Err(DatasetError::InsufficientSprites {
            have: library.len(),
            need: cfg.sprites_per_bin,
        });
    }
    let mut entries = Vec::with_capacity(cfg.obstacle_scene_count() + cfg.clean_frame_count());
    let mut index = 0u64;
    for &bin in &cfg.bins {
        for sprite in &library[..cfg.sprites_per_bin] {
            for variant in 0..cfg.variants_per_sprite {
                entries.push(ManifestEntry {
                    kind: EntryKind::Obstacle,
                    path: format!("scenes/{bin}/{}/v{variant}", sprite.name),
                    bin: Some(bin),
                    sprite: Some(sprite.name.clone()),
                    variant: Some(variant),
                    run: None,
                    frame: None,
                    seed: derive_seed(cfg.master_seed, index),
                });
                index += 1;
            }
        }
    }
    // clean frames live in a disjoint seed stream
    for run in 0..cfg.runs {
        for frame in 0..cfg.frames_per_run {
            entries.push(ManifestEntry {
                kind: EntryKind::Clean,
                path: format!("runs/run{run:02}/frame{frame:04}"),
                bin: None,
                sprite: None,
                variant: None,
                run: Some(run),
                frame: Some(frame),
                seed: derive_seed(cfg.master_seed, (1u64 << 32) + (run * cfg.frames_per_run + frame) as u64),
            });
        }
    }
    Ok(entries)
}

/// Renders one manifest entry to a [`SceneRecord`] (no file IO).
pub fn render_entry(
    cfg: &ProtocolConfig,
    library: &[Sprite],
    entry: &ManifestEntry,
) -> Result<SceneRecord, DatasetError> {
    let mut spec = ScenarioSpec::new(cfg.camera);
    spec.lane_width = cfg.lane_width;
    spec.max_corridor_range = cfg.max_corridor_range;
    spec.feather_radius = cfg.feather_radius;
    spec.rng_seed = entry.seed;
    match entry.kind {
        EntryKind::Obstacle => {
            let sprite_id = entry
                .sprite
                .clone()
                .ok_or(DatasetError::MissingKey("sprite"))?;
            let bin = entry.bin.ok_or(DatasetError::MissingKey("bin"))?;
            let sprite = crate::sprite::lookup(library, &sprite_id).map_err(SceneError::from)?;
            let mut rng = rng_from_seed(entry.seed);
            spec.obstacle = Some(sample_placement(&mut rng, &spec, sprite, bin)?);
            spec.sprite_id = sprite_id;
        }
        EntryKind::Clean => {
            let frame = entry.frame.unwrap_or(0);
            spec.dash_phase = frame as f64 * cfg.meters_per_frame;
        }
    }
    Ok(render_scene(&spec, library)?)
}

fn write_meta(path: &Path, meta: &SceneMeta) -> Result<(), DatasetError> {
    let mut text = String::new();
    let mut put = |k: &str, v: String| text.push_str(&format!("{k} = {v}\n"));
    if let Some(d) = meta.obstacle_distance {
        put("obstacle_distance", format!("{d}"));
    }
    if let Some(r) = meta.near_edge_row {
        put("near_edge_row", format!("{r}"));
    }
    if !meta.sprite_id.is_empty() {
        put("sprite_id", meta.sprite_id.clone());
    }
    put("seed", format!("{}", meta.seed));
    put("lane_width", format!("{}", meta.lane_width));
    put("max_corridor_range", format!("{}", meta.max_corridor_range));
    if let Some(v) = meta.lateral_offset {
        put("lateral_offset", format!("{v}"));
    }
    if let Some(v) = meta.physical_width {
        put("physical_width", format!("{v}"));
    }
    if let Some(v) = meta.physical_height {
        put("physical_height", format!("{v}"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_meta(path: &Path) -> Result<SceneMeta, DatasetError> {
    let text = fs::read_to_string(path).map_err(DatasetError::IoFailure)?;
    let pairs = parse_kv_file(&text)?;
    let get = |k: &str| pairs.iter().find(|(pk, _)| pk == k).map(|(_, v)| v.clone());
    let num = |k: &'static str| -> Option<f64> { get(k).and_then(|v| v.parse().ok()) };
    Ok(SceneMeta {
        obstacle_distance: num("obstacle_distance"),
        near_edge_row: num("near_edge_row"),
        sprite_id: get("sprite_id").unwrap_or_default(),
        seed: get("seed")
            .and_then(|v| v.parse().ok())
            .ok_or(DatasetError::MissingKey("seed"))?,
        lane_width: num("lane_width").ok_or(DatasetError::MissingKey("lane_width"))?,
        max_corridor_range: num("max_corridor_range")
            .ok_or(DatasetError::MissingKey("max_corridor_range"))?,
        lateral_offset: num("lateral_offset"),
        physical_width: num("physical_width"),
        physical_height: num("physical_height"),
    })
}

fn write_record(root: &Path, entry: &ManifestEntry, rec: &SceneRecord) -> Result<(), DatasetError> {
    let dir = root.join(&entry.path);
    fs::create_dir_all(&dir)?;
    write_rgb_png(&dir.join("image.png"), &rec.image)?;
    write_mask_png(&dir.join("gt_corridor.png"), &rec.gt_corridor)?;
    write_mask_png(&dir.join("gt_obstacle.png"), &rec.gt_obstacle)?;
    write_meta(&dir.join("meta"), &rec.meta)?;
    Ok(())
}

/// Generates the whole dataset under `root` and writes `manifest.txt`.
/// Rendering runs on `jobs` workers; the manifest order (and therefore the
/// on-disk layout) is independent of scheduling.
pub fn generate_dataset(
    root: &Path,
    cfg: &ProtocolConfig,
    jobs: usize,
) -> Result<Vec<ManifestEntry>, DatasetError> {
    let library = builtin_library();
    let entries = plan_manifest(cfg, &library)?;
    fs::create_dir_all(root)?;

    let render_one = |entry: &ManifestEntry| -> Result<(), DatasetError> {
        let rec = render_entry(cfg, &library, entry)?;
        write_record(root, entry, &rec)
    };
    if jobs <= 1 {
        for e in &entries {
            render_one(e)?;
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| DatasetError::ThreadPool(e.to_string()))?;
        pool.install(|| {
            entries
                .par_iter()
                .map(render_one)
                .collect::<Result<Vec<()>, DatasetError>>()
        })?;
    }

    let mut manifest = String::new();
    for e in &entries {
        manifest.push_str(&e.to_line());
        manifest.push('\n');
    }
    fs::write(root.join("manifest.txt"), manifest)?;
    Ok(entries)
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let text = fs::read_to_string(root.join("manifest.txt")).map_err(DatasetError::IoFailure)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| ManifestEntry::from_line(l, i + 1))
        .collect()
}

/// Loads a scene back from its directory.
pub fn load_scene(root: &Path, rel_path: &str) -> Result<SceneRecord, DatasetError> {
    let dir = root.join(rel_path);
    Ok(SceneRecord {
        image: read_rgb_png(&dir.join("image.png"))?,
        gt_corridor: read_mask_png(&dir.join("gt_corridor.png"))?,
        gt_obstacle: read_mask_png(&dir.join("gt_obstacle.png"))?,
        meta: read_meta(&dir.join("meta"))?,
    })
}

/// FNV-1a digest of every dataset file (manifest plus per-scene artifacts)
/// in manifest order; equal digests mean byte-identical datasets.
pub fn dataset_digest(root: &Path, entries: &[ManifestEntry]) -> Result<u64, DatasetError> {
    let mut hash = 0xcbf29ce484222325u64;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    };
    feed(&fs::read(root.join("manifest.txt"))?);
    for e in entries {
        let dir: PathBuf = root.join(&e.path);
        for name in ["image.png", "gt_corridor.png", "gt_obstacle.png", "meta"] {
            feed(&fs::read(dir.join(name))?);
        }
    }
    Ok(hash)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ProtocolConfig {
        ProtocolConfig {
            bins: vec![25.0],
            sprites_per_bin: 2,
            variants_per_sprite: 2,
            runs: 1,
            frames_per_run: 2,
            master_seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn manifest_shape_and_round_trip() {
        let cfg = tiny();
        let lib = builtin_library();
        let entries = plan_manifest(&cfg, &lib).unwrap();
        assert_eq!(entries.len(), 4 + 2);
        assert_eq!(entries[0].kind, EntryKind::Obstacle);
        assert_eq!(entries[5].kind, EntryKind::Clean);
        for (i, e) in entries.iter().enumerate() {
            let back = ManifestEntry::from_line(&e.to_line(), i + 1).unwrap();
            assert_eq!(&back, e);
        }
        // distinct seeds across the whole plan
        let mut seeds: Vec<u64> = entries.iter().map(|e| e.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), entries.len());
    }

    #[test]
    fn insufficient_sprites() {
        let cfg = ProtocolConfig {
            sprites_per_bin: 1000,
            ..tiny()
        };
        assert!(matches!(
            plan_manifest(&cfg, &builtin_library()),
            Err(DatasetError::InsufficientSprites { need: 1000, .. })
        ));
    }

    #[test]
    fn empty_protocol_is_valid() {
        let cfg = ProtocolConfig {
            bins: vec![],
            runs: 0,
            ..tiny()
        };
        let dir = tempfile::tempdir().unwrap();
        let entries = generate_dataset(dir.path(), &cfg, 1).unwrap();
        assert!(entries.is_empty());
        assert!(read_manifest(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn generate_load_round_trip_and_determinism() {
        let cfg = tiny();
        let lib = builtin_library();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let ea = generate_dataset(dir_a.path(), &cfg, 2).unwrap();
        let eb = generate_dataset(dir_b.path(), &cfg, 1).unwrap();
        assert_eq!(ea, eb);
        assert_eq!(
            dataset_digest(dir_a.path(), &ea).unwrap(),
            dataset_digest(dir_b.path(), &eb).unwrap()
        );

        // a loaded scene matches a fresh render of its entry
        let loaded = load_scene(dir_a.path(), &ea[0].path).unwrap();
        let fresh = render_entry(&cfg, &lib, &ea[0]).unwrap();
        assert_eq!(loaded, fresh);
        assert!(loaded.meta.obstacle_distance.is_some());

        // clean frames vary with dash phase but share geometry
        let c0 = load_scene(dir_a.path(), &ea[4].path).unwrap();
        let c1 = load_scene(dir_a.path(), &ea[5].path).unwrap();
        assert_eq!(c0.gt_corridor, c1.gt_corridor);
        assert_ne!(c0.image, c1.image);
    }
}
