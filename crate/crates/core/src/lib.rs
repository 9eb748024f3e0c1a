//! Object-class-free road obstacle detection on the ego corridor.
//!
//! The pipeline turns a drivable ego-lane segmentation mask (plus optional
//! per-pixel class logits) into a corridor with a sharp longitudinal edge
//! whose image row maps to a metric distance:
//!
//! 1. [`scene`] / [`dataset`] render synthetic test-track scenes with exact
//!    ground truth and composited obstacle sprites ([`sprite`]).
//! 2. [`oracle`] stands in for a segmentation CNN, with corruption modes
//!    that reproduce typical failure shapes.
//! 3. [`postprocess`] repairs the raw corridor mask and cuts it at the first
//!    persistent sudden width drop.
//! 4. [`energy`] / [`fusion`] compute per-pixel free energy from logits,
//!    threshold outlier pixels, and truncate the corridor at the nearest
//!    intersecting outlier blob.
//! 5. [`eval`] judges per-scene detections and aggregates distance-binned
//!    detection rates plus false-positive counts on obstacle-free runs.
//!
//! [`camera`] supplies the flat-ground pinhole geometry used throughout;
//! [`formats`] and [`config`] define the on-disk formats the CLI speaks.

pub mod camera;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod energy;
pub mod eval;
pub mod formats;
pub mod fusion;
pub mod mask;
pub mod oracle;
pub mod postprocess;
pub mod scene;
pub mod sprite;

pub use camera::{CameraError, CameraModel};
pub use config::{ConfigError, PipelineConfig};
pub use dataset::{generate_dataset, ManifestEntry, ProtocolConfig};
pub use energy::{energy_from_logits, free_energy, threshold_outliers, EnergyMap, Logits};
pub use eval::{detection_rate, judge_detection, render_report, DetectionVerdict, EvalReport};
pub use fusion::{extract_blobs, fuse, fuse_with_energy, FusionConfig, OutlierBlob};
pub use mask::Mask;
pub use oracle::{segment, segment_mask, Corruption, CorruptionConfig, OracleParams};
pub use postprocess::{postprocess, EdgeResult, PostprocessParams};
pub use scene::{render_scene, SceneRecord, ScenarioSpec};
pub use sprite::{builtin_library, Sprite};
