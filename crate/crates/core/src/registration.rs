//! Rigid pose estimation between scans and pose error metrics.

use std::fmt;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matcher::{expand_to_edge_matches, match_descriptors, match_descriptors_parallel, MatchPair, PointCorrespondence};
use crate::pipeline::{extract_features, Features, PipelineConfig};
use crate::scan_io::LidarScan;

const RESIDUAL_FLOOR: f64 = 1e-6;

#[derive(Error, Debug, PartialEq)]
pub enum RegistrationError {
    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("degenerate correspondences: cross-covariance has rank {rank}")]
    Degenerate { rank: usize },
    #[error("matching failure: {reason}")]
    MatchingFailure {
        reason: String,
        matches: usize,
        correspondences: usize,
    },
    #[error("pose sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty pose sequence")]
    EmptyPoses,
    #[error("line {line}: {reason}")]
    PoseFormat { line: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidPose {
    pub fn identity() -> Self {
        RigidPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidPose { rotation, translation }
    }

    /// Rotation about +z by `yaw_deg` degrees followed by `translation`.
    pub fn from_yaw(yaw_deg: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = yaw_deg.to_radians().sin_cos();
        RigidPose {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation,
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Orthonormal with determinant +1, within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
    }

    /// The 12 numbers of the row-major 3x4 matrix `[R | t]`.
    pub fn to_row(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 4 + c] = self.rotation[(r, c)];
            }
            out[r * 4 + 3] = self.translation[r];
        }
        out
    }

    pub fn from_row(v: &[f64; 12]) -> Self {
        RigidPose {
            rotation: Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            translation: Vector3::new(v[3], v[7], v[11]),
        }
    }
}

impl fmt::Display for RigidPose {
    /// One line of 12 space-separated numbers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = self.to_row();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v:.9e}")?;
        }
        Ok(())
    }
}

/// Parses a pose file with one 12-number `[R | t]` row per line.
pub fn parse_pose_rows(text: &str) -> Result<Vec<RigidPose>, RegistrationError> {
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |reason: String| RegistrationError::PoseFormat { line: n + 1, reason };
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| fail(format!("not a number: {t}"))))
            .collect::<Result<_, _>>()?;
        let row: [f64; 12] = values
            .try_into()
            .map_err(|v: Vec<f64>| fail(format!("expected 12 values, found {}", v.len())))?;
        poses.push(RigidPose::from_row(&row));
    }
    Ok(poses)
}

fn solve_points(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<RigidPose, RegistrationError> {
    let n = a.len();
    if n < 3 {
        return Err(RegistrationError::TooFewCorrespondences(n));
    }
    let ca = a.iter().sum::<Vector3<f64>>() / n as f64;
    let cb = b.iter().sum::<Vector3<f64>>() / n as f64;
    let mut h = Matrix3::zeros();
    for (pa, pb) in a.iter().zip(b) {
        h += (pa - ca) * (pb - cb).transpose();
    }
    let svd = h.svd(true, true);
    let sigma = svd.singular_values;
    let top = sigma.max();
    let rank = if top > 0.0 {
        sigma.iter().filter(|&&s| s > top * 1e-9).count()
    } else {
        0
    };
    if rank < 2 {
        return Err(RegistrationError::Degenerate { rank });
    }
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Ok(RigidPose {
        rotation,
        translation: cb - rotation * ca,
    })
}

/// Least-squares rigid transform taking every `point_a` onto its `point_b`.
pub fn solve_pose_svd(correspondences: &[PointCorrespondence]) -> Result<RigidPose, RegistrationError> {
    let a: Vec<_> = correspondences.iter().map(|c| c.point_a).collect();
    let b: Vec<_> = correspondences.iter().map(|c| c.point_b).collect();
    solve_points(&a, &b)
}

pub fn residual(pose: &RigidPose, c: &PointCorrespondence) -> f64 {
    (pose.transform(&c.point_a) - c.point_b).norm()
}

fn rms(pose: &RigidPose, cs: &[PointCorrespondence]) -> f64 {
    (cs.iter().map(|c| residual(pose, c).powi(2)).sum::<f64>() / cs.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult {
    pub pose: RigidPose,
    pub num_matches: usize,
    pub num_correspondences: usize,
    pub num_inliers: usize,
    pub rms_residual: f64,
    pub time_ms: f64,
}

/// Normalized match score: score over the larger non-zero dimension count.
pub fn match_confidence(pair: &MatchPair, features_a: &Features, features_b: &Features) -> f64 {
    let na = features_a.descriptors[pair.index_a].nonzero_dims();
    let nb = features_b.descriptors[pair.index_b].nonzero_dims();
    pair.score as f64 / na.max(nb).max(1) as f64
}

/// Matches that pass the confidence filter, turned into point correspondences.
pub fn confident_correspondences(
    matches: &[MatchPair],
    features_a: &Features,
    features_b: &Features,
    config: &PipelineConfig,
) -> Vec<PointCorrespondence> {
    let confident: Vec<MatchPair> = matches
        .iter()
        .copied()
        .filter(|m| match_confidence(m, features_a, features_b) >= config.registration.min_confidence)
        .collect();
    if config.registration.use_centroids {
        confident
            .iter()
            .enumerate()
            .map(|(p, m)| PointCorrespondence {
                point_a: features_a.clusters[m.index_a].centroid,
                point_b: features_b.clusters[m.index_b].centroid,
                ring: 0,
                source_pair: p,
            })
            .collect()
    } else {
        expand_to_edge_matches(&confident, &features_a.clusters, &features_b.clusters)
    }
}

fn ransac(cs: &[PointCorrespondence], iterations: usize, threshold: f64, seed: u64) -> Vec<PointCorrespondence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..iterations {
        let picked: Vec<PointCorrespondence> = sample(&mut rng, cs.len(), 3).iter().map(|i| cs[i].clone()).collect();
        let Ok(pose) = solve_pose_svd(&picked) else {
            continue;
        };
        let inliers: Vec<usize> = (0..cs.len()).filter(|&i| residual(&pose, &cs[i]) <= threshold).collect();
        if inliers.len() > best.len() {
            best = inliers;
        }
    }
    if best.len() < 3 {
        return cs.to_vec();
    }
    best.into_iter().map(|i| cs[i].clone()).collect()
}

/// Pose from correspondences with one median-residual inlier pass.
pub fn estimate_pose(cs: &[PointCorrespondence], config: &PipelineConfig) -> Result<(RigidPose, usize, f64), RegistrationError> {
    let opts = &config.registration;
    let start: Vec<PointCorrespondence> = if opts.ransac_iterations > 0 && cs.len() >= 3 {
        ransac(cs, opts.ransac_iterations, opts.ransac_threshold, opts.seed)
    } else {
        cs.to_vec()
    };
    let initial = solve_pose_svd(&start)?;
    let mut residuals: Vec<f64> = start.iter().map(|c| residual(&initial, c)).collect();
    let mut sorted = residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    // residuals of exact data are rounding noise; do not split hairs below a micron
    let cut = (opts.inlier_factor * median).max(RESIDUAL_FLOOR);
    let kept: Vec<PointCorrespondence> = start
        .iter()
        .zip(residuals.drain(..))
        .filter(|(_, r)| *r <= cut)
        .map(|(c, _)| c.clone())
        .collect();
    if kept.len() < 3 {
        return Ok((initial, start.len(), rms(&initial, &start)));
    }
    match solve_pose_svd(&kept) {
        Ok(pose) => Ok((pose, kept.len(), rms(&pose, &kept))),
        Err(_) => Ok((initial, start.len(), rms(&initial, &start))),
    }
}

/// Registration of two scans whose features were already extracted.
pub fn register_features(
    features_a: &Features,
    features_b: &Features,
    config: &PipelineConfig,
) -> Result<RegistrationResult, RegistrationError> {
    let start = Instant::now();
    let matches = if config.threads > 1 {
        match_descriptors_parallel(&features_a.descriptors, &features_b.descriptors, &config.matcher)
    } else {
        match_descriptors(&features_a.descriptors, &features_b.descriptors, &config.matcher)
    };
    let cs = confident_correspondences(&matches, features_a, features_b, config);
    let failure = |reason: &str| RegistrationError::MatchingFailure {
        reason: reason.to_string(),
        matches: matches.len(),
        correspondences: cs.len(),
    };
    if cs.len() < 3 {
        return Err(failure("fewer than 3 correspondences survived matching"));
    }
    let (pose, num_inliers, rms_residual) = match estimate_pose(&cs, config) {
        Ok(v) => v,
        Err(RegistrationError::Degenerate { rank }) => {
            return Err(failure(&format!("correspondences are degenerate (rank {rank})")))
        }
        Err(e) => return Err(e),
    };
    Ok(RegistrationResult {
        pose,
        num_matches: matches.len(),
        num_correspondences: cs.len(),
        num_inliers,
        rms_residual,
        time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Full pipeline: extract, describe, match, expand, solve. The returned pose
/// maps points of `scan_a` into the frame of `scan_b`.
pub fn register_scans(
    scan_a: &LidarScan,
    scan_b: &LidarScan,
    config: &PipelineConfig,
) -> Result<RegistrationResult, RegistrationError> {
    let start = Instant::now();
    let fa = extract_features(scan_a, config);
    let fb = extract_features(scan_b, config);
    let mut result = register_features(&fa, &fb, config)?;
    result.time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// Chordal rotation error in degrees, in `[0, 180]`.
pub fn rotation_error(r: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let chord = (r - r_gt).norm() / 8f64.sqrt();
    (2.0 * chord.clamp(0.0, 1.0).asin()).to_degrees()
}

pub fn translation_error(t: &Vector3<f64>, t_gt: &Vector3<f64>) -> f64 {
    (t - t_gt).norm()
}

/// Root mean square of the translation part of `gt_i^-1 * est_i`.
pub fn trajectory_rmse(estimated: &[RigidPose], ground_truth: &[RigidPose]) -> Result<f64, RegistrationError> {
    if estimated.len() != ground_truth.len() {
        return Err(RegistrationError::LengthMismatch(estimated.len(), ground_truth.len()));
    }
    if estimated.is_empty() {
        return Err(RegistrationError::EmptyPoses);
    }
    let sum: f64 = estimated
        .iter()
        .zip(ground_truth)
        .map(|(p, q)| (q.rotation.transpose() * (p.translation - q.translation)).norm_squared())
        .sum();
    Ok((sum / estimated.len() as f64).sqrt())
}
