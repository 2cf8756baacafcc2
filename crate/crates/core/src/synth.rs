//! Synthetic scans with known ground truth.
//!
//! A scene is flat ground sampled on the sensor's ring/azimuth grid plus a set
//! of vertical poles. Each ring that passes a pole at a height within the pole
//! returns one point per `points_per_pole_per_ring` from the pole instead of the
//! ground behind it. Pole placement is rejection-sampled so every pole is
//! clearly visible on enough ground-backed rings to form a keypoint.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::registration::RigidPose;
use crate::scan_io::{LidarScan, RawPoint, RingConfig};

#[derive(Error, Debug, PartialEq)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("could only place {placed} of {requested} poles")]
    Crowded { placed: usize, requested: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub num_poles: usize,
    /// Half-width of the square region poles are placed in (m).
    pub area: f64,
    pub rings: u32,
    pub points_per_pole_per_ring: usize,
    pub ground: bool,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Samples per ring per revolution.
    pub azimuth_steps: usize,
    /// Sensor height above the ground plane (m).
    pub sensor_height: f64,
    pub pole_height: f64,
    pub pole_radius: f64,
    pub max_range: f64,
    /// Closest horizontal distance between a pole and the sensor (m).
    pub min_pole_distance: f64,
    /// Closest horizontal distance between two poles (m).
    pub min_pole_separation: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            num_poles: 40,
            area: 15.0,
            rings: 64,
            points_per_pole_per_ring: 1,
            ground: true,
            noise_sigma: 0.0,
            seed: 0,
            azimuth_steps: 1800,
            sensor_height: 1.73,
            pole_height: 5.0,
            pole_radius: 0.1,
            max_range: 120.0,
            min_pole_distance: 5.0,
            min_pole_separation: 1.5,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if !(self.area > 0.0) {
            return bad("area must be positive");
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma must be non-negative");
        }
        if self.rings < 2 || self.rings > u16::MAX as u32 {
            return bad("rings must be in 2..=65535");
        }
        if self.points_per_pole_per_ring == 0 || self.azimuth_steps < 16 {
            return bad("points_per_pole_per_ring must be >= 1 and azimuth_steps >= 16");
        }
        if !(self.sensor_height > 0.0 && self.pole_height > 0.0 && self.pole_radius > 0.0 && self.max_range > 0.0) {
            return bad("sensor_height, pole_height, pole_radius and max_range must be positive");
        }
        Ok(())
    }

    fn ring_config(&self) -> RingConfig {
        RingConfig::for_rings(self.rings)
    }

    /// Ground-backed rings a pole must show to count as placeable.
    fn required_rings(&self) -> usize {
        if self.rings >= 32 {
            12
        } else {
            6
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoleTruth {
    pub x: f64,
    pub y: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub num_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scan: LidarScan,
    pub poles: Vec<PoleTruth>,
}

struct CleanScene {
    points: Vec<Vector3<f64>>,
    rings: Vec<u16>,
    poles: Vec<PoleTruth>,
}

struct PoleSite {
    x: f64,
    y: f64,
    distance: f64,
    azimuth: f64,
}

/// Ring elevation (radians) and, for rings that reach the ground within range,
/// the ground intercept distance.
fn ring_geometry(spec: &SceneSpec) -> Vec<(f64, Option<f64>)> {
    let config = spec.ring_config();
    (0..spec.rings)
        .map(|r| {
            let e = config.ring_center_elevation(r).to_radians();
            let reach = if e < 0.0 {
                Some(spec.sensor_height / (-e).tan())
            } else {
                None
            };
            (e, reach.filter(|&d| d <= spec.max_range))
        })
        .collect()
}

/// Height (sensor frame) at which a ring with elevation `e` meets a pole at
/// horizontal distance `d`, if it does.
fn pole_hit(spec: &SceneSpec, e: f64, d: f64) -> Option<f64> {
    let z = d * e.tan();
    let ground = -spec.sensor_height;
    (z >= ground && z <= ground + spec.pole_height).then_some(z)
}

fn placeable(spec: &SceneSpec, geometry: &[(f64, Option<f64>)], d: f64) -> bool {
    let mut backed = 0;
    let mut points = 0;
    for &(e, reach) in geometry {
        if let Some(z) = pole_hit(spec, e, d) {
            points += spec.points_per_pole_per_ring;
            let clear_of_ground = z >= -spec.sensor_height + 0.5;
            if clear_of_ground && reach.is_some_and(|r| r > d) {
                backed += 1;
            }
        }
    }
    backed >= spec.required_rings() && points >= 14
}

fn place_poles(spec: &SceneSpec, geometry: &[(f64, Option<f64>)], rng: &mut ChaCha8Rng) -> Result<Vec<PoleSite>, SynthError> {
    let step = TAU / spec.azimuth_steps as f64;
    let seam_guard = 6.0 * step;
    let mut sites: Vec<PoleSite> = Vec::with_capacity(spec.num_poles);
    let max_attempts = 2000 + 500 * spec.num_poles;
    for _ in 0..max_attempts {
        if sites.len() == spec.num_poles {
            break;
        }
        let x = rng.random_range(-spec.area..spec.area);
        let y = rng.random_range(-spec.area..spec.area);
        let distance = x.hypot(y);
        let azimuth = y.atan2(x);
        if distance < spec.min_pole_distance || azimuth.abs() > PI - seam_guard {
            continue;
        }
        if sites.iter().any(|s| (s.x - x).hypot(s.y - y) < spec.min_pole_separation) {
            continue;
        }
        if !placeable(spec, geometry, distance) {
            continue;
        }
        sites.push(PoleSite { x, y, distance, azimuth });
    }
    if sites.len() < spec.num_poles {
        return Err(SynthError::Crowded {
            placed: sites.len(),
            requested: spec.num_poles,
        });
    }
    Ok(sites)
}

fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn build_clean(spec: &SceneSpec) -> Result<CleanScene, SynthError> {
    spec.validate()?;
    let geometry = ring_geometry(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sites = place_poles(spec, &geometry, &mut rng)?;

    let steps = spec.azimuth_steps;
    let step = TAU / steps as f64;
    let mut points = Vec::new();
    let mut rings = Vec::new();
    let mut poles: Vec<PoleTruth> = sites
        .iter()
        .map(|s| PoleTruth {
            x: s.x,
            y: s.y,
            z_min: f64::INFINITY,
            z_max: f64::NEG_INFINITY,
            num_points: 0,
        })
        .collect();

    for (r, &(e, reach)) in geometry.iter().enumerate() {
        // angular shadows cast by poles on this ring
        let mut shadows = Vec::new();
        for (site, truth) in sites.iter().zip(poles.iter_mut()) {
            let Some(z) = pole_hit(spec, e, site.distance) else {
                continue;
            };
            let half_width = (spec.pole_radius / site.distance).asin();
            shadows.push((site.azimuth, half_width.max(0.5 * step), site.distance));
            let n = spec.points_per_pole_per_ring;
            for k in 0..n {
                let offset = if n == 1 {
                    0.0
                } else {
                    half_width * (2.0 * k as f64 / (n - 1) as f64 - 1.0)
                };
                let az = site.azimuth + offset;
                let face = site.distance - spec.pole_radius * (1.0 - (offset / half_width.max(1e-12)).powi(2)).max(0.0).sqrt();
                let (px, py) = if n == 1 {
                    (site.x, site.y)
                } else {
                    (face * az.cos(), face * az.sin())
                };
                points.push(Vector3::new(px, py, z));
                rings.push(r as u16);
                truth.z_min = truth.z_min.min(z);
                truth.z_max = truth.z_max.max(z);
                truth.num_points += 1;
            }
        }
        let (true, Some(range)) = (spec.ground, reach) else {
            continue;
        };
        for k in 0..steps {
            let az = -PI + (k as f64 + 0.5) * step;
            let hidden = shadows.iter().any(|&(pa, hw, d)| d < range && angular_gap(az, pa) <= hw);
            if hidden {
                continue;
            }
            points.push(Vector3::new(range * az.cos(), range * az.sin(), -spec.sensor_height));
            rings.push(r as u16);
        }
    }
    Ok(CleanScene { points, rings, poles })
}

fn noisy_scan(points: &[Vector3<f64>], rings: &[u16], spec: &SceneSpec, stream: u64) -> LidarScan {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let raw: Vec<RawPoint> = points
        .iter()
        .map(|p| {
            let q = if spec.noise_sigma > 0.0 {
                p + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                *p
            };
            RawPoint::new(q.x as f32, q.y as f32, q.z as f32, 0.0)
        })
        .collect();
    LidarScan::from_points(raw, rings.to_vec(), spec.rings).expect("rings within range")
}

/// A scan of the described scene, and the poles in it.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    let clean = build_clean(spec)?;
    Ok(Scene {
        scan: noisy_scan(&clean.points, &clean.rings, spec, 1),
        poles: clean.poles,
    })
}

/// Two scans of one scene: `scan_a` as generated, `scan_b` the same points
/// moved by the returned pose and re-noised independently. Ring labels carry
/// over. The pose maps `scan_a` coordinates into `scan_b` coordinates.
pub fn transformed_pair(
    spec: &SceneSpec,
    yaw_deg: f64,
    translation: Vector3<f64>,
) -> Result<(LidarScan, LidarScan, RigidPose), SynthError> {
    let clean = build_clean(spec)?;
    let pose = RigidPose::from_yaw(yaw_deg, translation);
    let moved: Vec<Vector3<f64>> = clean.points.iter().map(|p| pose.transform(p)).collect();
    let a = noisy_scan(&clean.points, &clean.rings, spec, 1);
    let b = noisy_scan(&moved, &clean.rings, spec, 2);
    Ok((a, b, pose))
}
