//! Latency measurement of the pipeline stages on synthetic scans.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::descriptor::{generate_descriptors, Link3dDescriptor};
use crate::keypoints::AggregationKeypoint;
use crate::matcher::{match_descriptors, match_descriptors_parallel};
use crate::pipeline::{extract_features_timed, PipelineConfig};
use crate::registration::RigidPose;
use crate::scan_io::{encode_scan, LidarScan};
use crate::synth::{generate_scene, SceneSpec, SynthError};

/// The real-time ceiling for extraction plus description of one scan.
pub const BUDGET_MS: f64 = 100.0;

#[derive(Error, Debug, PartialEq)]
pub enum BenchError {
    #[error("need at least 5 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl StageStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "no samples");
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        // nearest-rank percentile
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        StageStats {
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            median_ms: median,
            p95_ms: sorted[rank - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport {
    pub extraction: StageStats,
    pub description: StageStats,
    /// Extraction plus description, per repetition.
    pub front_end: StageStats,
    pub matching: StageStats,
    pub points: usize,
    pub keypoints: usize,
    pub matching_keypoints: usize,
    pub repetitions: usize,
    pub budget_ms: f64,
    pub within_budget: bool,
    pub scene_hash: String,
}

impl LatencyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Hex SHA-256 of a scan's binary dump.
pub fn scene_hash(scan: &LidarScan) -> String {
    hex::encode(Sha256::digest(encode_scan(scan)))
}

/// A 64-ring scene sized to roughly `scan_size` points.
pub fn scene_for_size(scan_size: usize, seed: u64) -> SceneSpec {
    let base = SceneSpec {
        seed,
        ..SceneSpec::default()
    };
    // rings that reach the ground carry almost all points
    let ground_rings = (0..base.rings)
        .filter(|&r| {
            let e = crate::scan_io::RingConfig::for_rings(base.rings)
                .ring_center_elevation(r)
                .to_radians();
            e < 0.0 && base.sensor_height / (-e).tan() <= base.max_range
        })
        .count()
        .max(1);
    SceneSpec {
        azimuth_steps: scan_size.div_ceil(ground_rings).max(16),
        ..base
    }
}

/// Random planar keypoints and their descriptors, plus the same keypoints
/// moved by a rigid motion, for timing the matcher on large sets.
pub fn matching_sets(num_keypoints: usize, seed: u64) -> (Vec<Link3dDescriptor>, Vec<Link3dDescriptor>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 60.0;
    let a: Vec<AggregationKeypoint> = (0..num_keypoints)
        .map(|i| AggregationKeypoint {
            centroid: Vector3::new(rng.random_range(-half..half), rng.random_range(-half..half), 0.0),
            cluster_id: i,
        })
        .collect();
    let pose = RigidPose::from_yaw(
        rng.random_range(-180.0..180.0),
        Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0),
    );
    let b: Vec<AggregationKeypoint> = a
        .iter()
        .map(|k| AggregationKeypoint {
            centroid: pose.transform(&k.centroid),
            cluster_id: k.cluster_id,
        })
        .collect();
    let params = Default::default();
    (generate_descriptors(&a, &params), generate_descriptors(&b, &params))
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Times extraction and description on a synthetic scan of about `scan_size`
/// points, and matching of two `matching_keypoints`-sized descriptor sets.
/// One warm-up run of each stage is discarded.
pub fn run_latency_bench(
    scan_size: usize,
    matching_keypoints: usize,
    repetitions: usize,
    seed: u64,
    config: &PipelineConfig,
) -> Result<LatencyReport, BenchError> {
    if repetitions < 5 {
        return Err(BenchError::TooFewRepetitions(repetitions));
    }
    let scene = generate_scene(&scene_for_size(scan_size, seed))?;
    let scan = &scene.scan;

    let (features, _) = extract_features_timed(scan, config);
    let mut extraction = Vec::with_capacity(repetitions);
    let mut description = Vec::with_capacity(repetitions);
    let mut front_end = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let (_, t) = extract_features_timed(scan, config);
        extraction.push(t.extraction_ms);
        description.push(t.description_ms);
        front_end.push(t.extraction_ms + t.description_ms);
    }

    let (set_a, set_b) = matching_sets(matching_keypoints, seed);
    let run = || {
        if config.threads > 1 {
            match_descriptors_parallel(&set_a, &set_b, &config.matcher)
        } else {
            match_descriptors(&set_a, &set_b, &config.matcher)
        }
    };
    run();
    let matching: Vec<f64> = (0..repetitions).map(|_| time_ms(run).1).collect();

    let front = StageStats::from_samples(&front_end);
    Ok(LatencyReport {
        extraction: StageStats::from_samples(&extraction),
        description: StageStats::from_samples(&description),
        front_end: front,
        matching: StageStats::from_samples(&matching),
        points: scan.len(),
        keypoints: features.keypoints.len(),
        matching_keypoints,
        repetitions,
        budget_ms: BUDGET_MS,
        within_budget: front.median_ms <= BUDGET_MS,
        scene_hash: scene_hash(scan),
    })
}
