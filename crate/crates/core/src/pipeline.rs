//! Pipeline configuration and the extract-and-describe stage.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::descriptor::{generate_descriptors, generate_descriptors_parallel, DescriptorParams, Link3dDescriptor};
use crate::keypoints::{
    aggregate_keypoints, aggregate_keypoints_parallel, compute_smoothness, compute_smoothness_parallel,
    edge_points_from_smoothness, AggregationKeypoint, Cluster, EdgePoint, ExtractorParams,
};
use crate::matcher::MatcherParams;
use crate::scan_io::LidarScan;

#[derive(Error, Debug, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorPreset {
    Hdl64,
    Vlp16,
}

impl SensorPreset {
    pub fn min_scan_lines(self) -> usize {
        match self {
            SensorPreset::Hdl64 => 10,
            SensorPreset::Vlp16 => 4,
        }
    }

    pub fn num_rings(self) -> u32 {
        match self {
            SensorPreset::Hdl64 => 64,
            SensorPreset::Vlp16 => 16,
        }
    }
}

impl fmt::Display for SensorPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorPreset::Hdl64 => "hdl64",
            SensorPreset::Vlp16 => "vlp16",
        })
    }
}

impl FromStr for SensorPreset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hdl64" => Ok(SensorPreset::Hdl64),
            "vlp16" => Ok(SensorPreset::Vlp16),
            _ => Err(ConfigError::BadValue {
                key: "preset".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationOptions {
    /// Solve from cluster centroids instead of per-ring edge correspondences.
    pub use_centroids: bool,
    /// Matches below this normalized score are not used for pose estimation.
    pub min_confidence: f64,
    /// Correspondences with residual above `inlier_factor` times the median are dropped.
    pub inlier_factor: f64,
    /// RANSAC iterations; 0 disables RANSAC.
    pub ransac_iterations: usize,
    pub ransac_threshold: f64,
    pub seed: u64,
}

impl Default for RegistrationOptions {
    fn default() -> Self {
        RegistrationOptions {
            use_centroids: false,
            min_confidence: 0.5,
            inlier_factor: 3.0,
            ransac_iterations: 0,
            ransac_threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub preset: SensorPreset,
    pub extractor: ExtractorParams,
    pub descriptor: DescriptorParams,
    pub matcher: MatcherParams,
    pub registration: RegistrationOptions,
    /// Worker threads; 1 runs every stage sequentially.
    pub threads: usize,
}

impl PipelineConfig {
    pub fn for_preset(preset: SensorPreset) -> Self {
        let extractor = match preset {
            SensorPreset::Hdl64 => ExtractorParams::hdl64(),
            SensorPreset::Vlp16 => ExtractorParams::vlp16(),
        };
        PipelineConfig {
            preset,
            extractor,
            descriptor: DescriptorParams::default(),
            matcher: MatcherParams::default(),
            registration: RegistrationOptions::default(),
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.extractor.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        DescriptorParams::new(self.descriptor.num_anchors).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.matcher.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let r = &self.registration;
        if !(0.0..=1.0).contains(&r.min_confidence) {
            return Err(ConfigError::Invalid("min_confidence must be in [0, 1]".into()));
        }
        if !(r.inlier_factor > 0.0) || !(r.ransac_threshold > 0.0) {
            return Err(ConfigError::Invalid(
                "inlier_factor and ransac_threshold must be positive".into(),
            ));
        }
        if self.threads == 0 {
            return Err(ConfigError::Invalid("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Sets one field by its config-file key. `preset` also resets the
    /// scan-line threshold to the preset's value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: value.into(),
            })
        }
        let e = &mut self.extractor;
        let r = &mut self.registration;
        match key {
            "preset" => {
                self.preset = value.parse()?;
                e.min_scan_lines = self.preset.min_scan_lines();
            }
            "neighborhood_size" => e.neighborhood_size = parse(key, value)?,
            "smooth_threshold" => e.smooth_threshold = parse(key, value)?,
            "num_sectors" => e.num_sectors = parse(key, value)?,
            "cluster_dist" => e.cluster_dist = parse(key, value)?,
            "min_points" => e.min_points = parse(key, value)?,
            "min_scan_lines" => e.min_scan_lines = parse(key, value)?,
            "num_anchors" => self.descriptor.num_anchors = parse(key, value)?,
            "dim_tolerance" => self.matcher.dim_tolerance = parse(key, value)?,
            "score_threshold" => self.matcher.score_threshold = parse(key, value)?,
            "use_centroids" => r.use_centroids = parse(key, value)?,
            "min_confidence" => r.min_confidence = parse(key, value)?,
            "inlier_factor" => r.inlier_factor = parse(key, value)?,
            "ransac_iterations" => r.ransac_iterations = parse(key, value)?,
            "ransac_threshold" => r.ransac_threshold = parse(key, value)?,
            "seed" => r.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = PipelineConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn to_text(&self) -> String {
        let e = &self.extractor;
        let r = &self.registration;
        let fields: Vec<(&str, String)> = vec![
            ("preset", self.preset.to_string()),
            ("neighborhood_size", e.neighborhood_size.to_string()),
            ("smooth_threshold", e.smooth_threshold.to_string()),
            ("num_sectors", e.num_sectors.to_string()),
            ("cluster_dist", e.cluster_dist.to_string()),
            ("min_points", e.min_points.to_string()),
            ("min_scan_lines", e.min_scan_lines.to_string()),
            ("num_anchors", self.descriptor.num_anchors.to_string()),
            ("dim_tolerance", self.matcher.dim_tolerance.to_string()),
            ("score_threshold", self.matcher.score_threshold.to_string()),
            ("use_centroids", r.use_centroids.to_string()),
            ("min_confidence", r.min_confidence.to_string()),
            ("inlier_factor", r.inlier_factor.to_string()),
            ("ransac_iterations", r.ransac_iterations.to_string()),
            ("ransac_threshold", r.ransac_threshold.to_string()),
            ("seed", r.seed.to_string()),
            ("threads", self.threads.to_string()),
        ];
        fields.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_preset(SensorPreset::Hdl64)
    }
}

/// Everything the extraction and description stages produce for one scan.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub edges: Vec<EdgePoint>,
    pub clusters: Vec<Cluster>,
    pub keypoints: Vec<AggregationKeypoint>,
    pub descriptors: Vec<Link3dDescriptor>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub extraction_ms: f64,
    pub description_ms: f64,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs extraction and description, timing each stage. With more than one
/// thread configured the parallel variants are used; the results are the same.
pub fn extract_features_timed(scan: &LidarScan, config: &PipelineConfig) -> (Features, StageTimings) {
    let parallel = config.threads > 1;
    let start = Instant::now();
    let smoothness = if parallel {
        compute_smoothness_parallel(scan, &config.extractor)
    } else {
        compute_smoothness(scan, &config.extractor)
    };
    let edges = edge_points_from_smoothness(scan, &smoothness, &config.extractor);
    let (clusters, keypoints) = if parallel {
        aggregate_keypoints_parallel(&edges, &config.extractor)
    } else {
        aggregate_keypoints(&edges, &config.extractor)
    };
    let extraction_ms = elapsed_ms(start);

    let start = Instant::now();
    let descriptors = if parallel {
        generate_descriptors_parallel(&keypoints, &config.descriptor)
    } else {
        generate_descriptors(&keypoints, &config.descriptor)
    };
    let description_ms = elapsed_ms(start);

    (
        Features {
            edges,
            clusters,
            keypoints,
            descriptors,
        },
        StageTimings {
            extraction_ms,
            description_ms,
        },
    )
}

pub fn extract_features(scan: &LidarScan, config: &PipelineConfig) -> Features {
    extract_features_timed(scan, config).0
}
