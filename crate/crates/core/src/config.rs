//! Pipeline configuration: camera, stage parameters and toggles, parsed
//! from the line-oriented `key = value` config format.

use std::path::Path;

use thiserror::Error;

use crate::camera::CameraModel;
use crate::formats::{parse_kv_file, FormatError};
use crate::fusion::FusionConfig;
use crate::oracle::OracleParams;
use crate::postprocess::PostprocessParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Format(#[from] FormatError),
    #[error("config parse error: key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("config parse error: unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub camera: CameraModel,
    pub lane_width: f64,
    pub max_corridor_range: f64,
    pub feather_radius: u32,
    pub postprocess: PostprocessParams,
    pub fusion: FusionConfig,
    pub oracle: OracleParams,
    pub eval_tolerance: f64,
    pub expected_min_range: f64,
    pub jobs: usize,
    pub enable_postprocess: bool,
    pub enable_fusion: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            camera: CameraModel::default(),
            lane_width: 3.5,
            max_corridor_range: 400.0,
            feather_radius: 2,
            postprocess: PostprocessParams::default(),
            fusion: FusionConfig::default(),
            oracle: OracleParams::default(),
            eval_tolerance: 0.10,
            expected_min_range: 150.0,
            jobs: 1,
            enable_postprocess: true,
            enable_fusion: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.camera
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.jobs < 1 {
            return Err(ConfigError::Invalid("jobs must be >= 1".into()));
        }
        if !(0.0 < self.postprocess.drop_ratio && self.postprocess.drop_ratio < 1.0) {
            return Err(ConfigError::Invalid("drop_ratio must be in (0,1)".into()));
        }
        if self.postprocess.smooth_window < 1 || self.postprocess.persistence < 1 {
            return Err(ConfigError::Invalid(
                "smooth_window and persistence must be >= 1".into(),
            ));
        }
        if self.fusion.min_blob_area < 1 {
            return Err(ConfigError::Invalid("min_blob_area must be >= 1".into()));
        }
        if !(self.eval_tolerance > 0.0) {
            return Err(ConfigError::Invalid("eval_tolerance must be > 0".into()));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(FormatError::IoFailure)?;
        Self::from_kv_text(&text)
    }

    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (key, value) in parse_kv_file(text)? {
            cfg.apply(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
            v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("cannot parse `{v}`"),
            })
        }
        match key {
            "camera.focal_length" => self.camera.focal_length = num(key, value)?,
            "camera.principal_col" => self.camera.principal_point.0 = num(key, value)?,
            "camera.principal_row" => self.camera.principal_point.1 = num(key, value)?,
            "camera.width" => self.camera.image_size.0 = num(key, value)?,
            "camera.height" => self.camera.image_size.1 = num(key, value)?,
            "camera.mount_height" => self.camera.mount_height = num(key, value)?,
            "camera.pitch" => self.camera.pitch = num(key, value)?,
            "lane_width" => self.lane_width = num(key, value)?,
            "max_corridor_range" => self.max_corridor_range = num(key, value)?,
            "feather_radius" => self.feather_radius = num(key, value)?,
            "postprocess.close_radius" => self.postprocess.close_radius = num(key, value)?,
            "postprocess.smooth_window" => self.postprocess.smooth_window = num(key, value)?,
            "postprocess.drop_ratio" => self.postprocess.drop_ratio = num(key, value)?,
            "postprocess.persistence" => self.postprocess.persistence = num(key, value)?,
            "fusion.energy_threshold" => self.fusion.energy_threshold = num(key, value)?,
            "fusion.min_blob_area" => self.fusion.min_blob_area = num(key, value)?,
            "fusion.blob_dilation" => self.fusion.blob_dilation = num(key, value)?,
            "oracle.classes" => self.oracle.classes = num(key, value)?,
            "oracle.inlier_margin" => self.oracle.inlier_margin = num(key, value)?,
            "oracle.energy_delta" => self.oracle.energy_delta = num(key, value)?,
            "oracle.logit_noise_sigma" => self.oracle.logit_noise_sigma = num(key, value)?,
            "eval_tolerance" => self.eval_tolerance = num(key, value)?,
            "expected_min_range" => self.expected_min_range = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            "enable_postprocess" => self.enable_postprocess = parse_bool(key, value)?,
            "enable_fusion" => self.enable_fusion = parse_bool(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "camera.focal_length = {}\n\
             camera.principal_col = {}\n\
             camera.principal_row = {}\n\
             camera.width = {}\n\
             camera.height = {}\n\
             camera.mount_height = {}\n\
             camera.pitch = {}\n\
             lane_width = {}\n\
             max_corridor_range = {}\n\
             feather_radius = {}\n\
             postprocess.close_radius = {}\n\
             postprocess.smooth_window = {}\n\
             postprocess.drop_ratio = {}\n\
             postprocess.persistence = {}\n\
             fusion.energy_threshold = {}\n\
             fusion.min_blob_area = {}\n\
             fusion.blob_dilation = {}\n\
             oracle.classes = {}\n\
             oracle.inlier_margin = {}\n\
             oracle.energy_delta = {}\n\
             oracle.logit_noise_sigma = {}\n\
             eval_tolerance = {}\n\
             expected_min_range = {}\n\
             jobs = {}\n\
             enable_postprocess = {}\n\
             enable_fusion = {}\n",
            self.camera.focal_length,
            self.camera.principal_point.0,
            self.camera.principal_point.1,
            self.camera.image_size.0,
            self.camera.image_size.1,
            self.camera.mount_height,
            self.camera.pitch,
            self.lane_width,
            self.max_corridor_range,
            self.feather_radius,
            self.postprocess.close_radius,
            self.postprocess.smooth_window,
            self.postprocess.drop_ratio,
            self.postprocess.persistence,
            self.fusion.energy_threshold,
            self.fusion.min_blob_area,
            self.fusion.blob_dilation,
            self.oracle.classes,
            self.oracle.inlier_margin,
            self.oracle.energy_delta,
            self.oracle.logit_noise_sigma,
            self.eval_tolerance,
            self.expected_min_range,
            self.jobs,
            self.enable_postprocess,
            self.enable_fusion,
        )
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            reason: format!("expected boolean, got `{v}`"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_kv_text();
        let back = PipelineConfig::from_kv_text(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg =
            PipelineConfig::from_kv_text("lane_width = 3.0\nenable_fusion = true\n").unwrap();
        assert_eq!(cfg.lane_width, 3.0);
        assert!(cfg.enable_fusion);
        assert_eq!(cfg.camera.focal_length, 2000.0);
    }

    #[test]
    fn unknown_key_and_bad_value_error() {
        assert!(matches!(
            PipelineConfig::from_kv_text("nope = 1\n"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            PipelineConfig::from_kv_text("jobs = many\n"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(PipelineConfig::from_kv_text("jobs = 0\n").is_err());
    }
}
