//! Edge-point extraction and keypoint aggregation.
//!
//! Smoothness is measured along each scan line; points whose smoothness
//! exceeds the threshold are edge points. Edge points are then bucketed into
//! equal horizontal sectors around the sensor and clustered inside each
//! sector. Clusters that are both populous and tall (span many scan lines)
//! survive, and each contributes its centroid as an aggregation keypoint.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::scan_io::LidarScan;

#[derive(Error, Debug, PartialEq)]
pub enum KeypointError {
    #[error("angle is undefined for a point on the vertical axis")]
    OnAxis,
    #[error("invalid extractor parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractorParams {
    /// Neighbors per point on its scan line, split evenly on both sides.
    pub neighborhood_size: usize,
    /// Smoothness above which a point is an edge point (m^2).
    pub smooth_threshold: f64,
    /// Horizontal sectors used to bucket edge points before clustering.
    pub num_sectors: usize,
    /// Horizontal join radius for greedy clustering (m).
    pub cluster_dist: f64,
    /// A cluster needs strictly more members than this.
    pub min_points: usize,
    /// A cluster needs strictly more distinct scan lines than this.
    pub min_scan_lines: usize,
}

impl ExtractorParams {
    pub fn hdl64() -> Self {
        ExtractorParams {
            neighborhood_size: 10,
            smooth_threshold: 1.0,
            num_sectors: 120,
            cluster_dist: 0.4,
            min_points: 12,
            min_scan_lines: 10,
        }
    }

    pub fn vlp16() -> Self {
        ExtractorParams {
            min_scan_lines: 4,
            ..Self::hdl64()
        }
    }

    pub fn validate(&self) -> Result<(), KeypointError> {
        let bad = |m: &str| Err(KeypointError::InvalidParams(m.to_string()));
        if self.neighborhood_size < 2 || !self.neighborhood_size.is_multiple_of(2) {
            return bad("neighborhood_size must be even and at least 2");
        }
        if self.num_sectors == 0 {
            return bad("num_sectors must be at least 1");
        }
        if !(self.cluster_dist > 0.0) {
            return bad("cluster_dist must be positive");
        }
        if self.min_points == 0 || self.min_scan_lines == 0 {
            return bad("min_points and min_scan_lines must be at least 1");
        }
        Ok(())
    }
}

impl Default for ExtractorParams {
    fn default() -> Self {
        Self::hdl64()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgePoint {
    pub position: Vector3<f64>,
    pub smoothness: f64,
    pub ring: u16,
    /// Index of the point in the scan it came from.
    pub source_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub members: Vec<EdgePoint>,
    /// Arithmetic mean of member positions.
    pub centroid: Vector3<f64>,
    pub distinct_rings: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregationKeypoint {
    pub centroid: Vector3<f64>,
    pub cluster_id: usize,
}

fn smooth_line(points: &[crate::scan_io::RawPoint], half: usize, out: &mut [f64]) {
    let n = points.len();
    if n < 2 * half + 1 {
        return;
    }
    let norm = (2 * half) as f64;
    for i in half..n - half {
        let pi = points[i].to_f64();
        let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
        for pj in points[i - half..i].iter().chain(&points[i + 1..=i + half]) {
            sx += pj.x as f64 - pi[0];
            sy += pj.y as f64 - pi[1];
            sz += pj.z as f64 - pi[2];
        }
        out[i] = (sx * sx + sy * sy + sz * sz) / norm;
    }
}

/// Smoothness of every point, in scan order.
///
/// For point `i` with `N/2` neighbors on each side along its scan line,
/// `s_i = |sum_j (p_j - p_i)|^2 / N`. Points without a full window get 0.
pub fn compute_smoothness(scan: &LidarScan, params: &ExtractorParams) -> Vec<f64> {
    let half = params.neighborhood_size / 2;
    let mut out = vec![0.0; scan.len()];
    for ring in 0..scan.num_rings() {
        let range = scan.ring_range(ring);
        smooth_line(&scan.points()[range.clone()], half, &mut out[range]);
    }
    out
}

/// Same as [`compute_smoothness`], one task per scan line.
pub fn compute_smoothness_parallel(scan: &LidarScan, params: &ExtractorParams) -> Vec<f64> {
    let half = params.neighborhood_size / 2;
    let mut out = vec![0.0; scan.len()];
    let mut chunks = Vec::with_capacity(scan.num_rings() as usize);
    let mut rest: &mut [f64] = &mut out;
    for ring in 0..scan.num_rings() {
        let range = scan.ring_range(ring);
        let (head, tail) = rest.split_at_mut(range.len());
        chunks.push((range, head));
        rest = tail;
    }
    chunks
        .into_par_iter()
        .for_each(|(range, dst)| smooth_line(&scan.points()[range], half, dst));
    out
}

/// Points whose smoothness is strictly above the threshold.
pub fn edge_points_from_smoothness(scan: &LidarScan, smoothness: &[f64], params: &ExtractorParams) -> Vec<EdgePoint> {
    smoothness
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > params.smooth_threshold)
        .map(|(i, &s)| {
            let p = scan.points()[i].to_f64();
            EdgePoint {
                position: Vector3::new(p[0], p[1], p[2]),
                smoothness: s,
                ring: scan.rings()[i],
                source_index: i,
            }
        })
        .collect()
}

pub fn extract_edge_points(scan: &LidarScan, params: &ExtractorParams) -> Vec<EdgePoint> {
    let smoothness = compute_smoothness(scan, params);
    edge_points_from_smoothness(scan, &smoothness, params)
}

/// Horizontal sector of `(x, y)` among `num_sectors` equal wedges, counted
/// counterclockwise from the +x axis.
pub fn sector_of(x: f64, y: f64, num_sectors: usize) -> Result<usize, KeypointError> {
    if x == 0.0 && y == 0.0 {
        return Err(KeypointError::OnAxis);
    }
    let mut theta = y.atan2(x);
    if theta < 0.0 {
        theta += TAU;
    }
    let index = (theta / (TAU / num_sectors as f64)).floor() as usize;
    Ok(index % num_sectors)
}

struct Candidate {
    members: Vec<usize>,
    sum_x: f64,
    sum_y: f64,
}

/// Greedy clustering of one sector's edge points, in the order given.
fn cluster_sector(edges: &[EdgePoint], order: &[usize], params: &ExtractorParams) -> Vec<Cluster> {
    let mut candidates: Vec<Candidate> = Vec::new();
    for &idx in order {
        let p = &edges[idx].position;
        let home = candidates.iter_mut().find(|c| {
            let n = c.members.len() as f64;
            let dx = p.x - c.sum_x / n;
            let dy = p.y - c.sum_y / n;
            (dx * dx + dy * dy).sqrt() <= params.cluster_dist
        });
        match home {
            Some(c) => {
                c.members.push(idx);
                c.sum_x += p.x;
                c.sum_y += p.y;
            }
            None => candidates.push(Candidate {
                members: vec![idx],
                sum_x: p.x,
                sum_y: p.y,
            }),
        }
    }

    candidates
        .into_iter()
        .filter_map(|c| {
            let mut rings: Vec<u16> = c.members.iter().map(|&i| edges[i].ring).collect();
            rings.sort_unstable();
            rings.dedup();
            if c.members.len() <= params.min_points || rings.len() <= params.min_scan_lines {
                return None;
            }
            let members: Vec<EdgePoint> = c.members.iter().map(|&i| edges[i].clone()).collect();
            let sum = members.iter().fold(Vector3::zeros(), |acc, m| acc + m.position);
            Some(Cluster {
                centroid: sum / members.len() as f64,
                distinct_rings: rings.len(),
                members,
            })
        })
        .collect()
}

fn bucket_by_sector(edges: &[EdgePoint], num_sectors: usize) -> Vec<Vec<usize>> {
    let mut sectors = vec![Vec::new(); num_sectors];
    for (i, e) in edges.iter().enumerate() {
        // points on the vertical axis have no azimuth and cannot be bucketed
        if let Ok(s) = sector_of(e.position.x, e.position.y, num_sectors) {
            sectors[s].push(i);
        }
    }
    sectors
}

fn finish(per_sector: Vec<Vec<Cluster>>) -> (Vec<Cluster>, Vec<AggregationKeypoint>) {
    let clusters: Vec<Cluster> = per_sector.into_iter().flatten().collect();
    let keypoints = clusters
        .iter()
        .enumerate()
        .map(|(id, c)| AggregationKeypoint {
            centroid: c.centroid,
            cluster_id: id,
        })
        .collect();
    (clusters, keypoints)
}

/// Sector-bucketed greedy clustering of edge points.
///
/// Within a sector, points are visited in their input order (scan order, i.e.
/// ring then azimuth). A point joins the first cluster whose running
/// horizontal centroid is within `cluster_dist`, or starts a new one. Output
/// is ordered by sector, then creation order; `keypoints[i].cluster_id == i`.
pub fn aggregate_keypoints(edges: &[EdgePoint], params: &ExtractorParams) -> (Vec<Cluster>, Vec<AggregationKeypoint>) {
    let sectors = bucket_by_sector(edges, params.num_sectors);
    finish(sectors.iter().map(|order| cluster_sector(edges, order, params)).collect())
}

/// Same as [`aggregate_keypoints`], one task per sector.
pub fn aggregate_keypoints_parallel(edges: &[EdgePoint], params: &ExtractorParams) -> (Vec<Cluster>, Vec<AggregationKeypoint>) {
    let sectors = bucket_by_sector(edges, params.num_sectors);
    finish(sectors.par_iter().map(|order| cluster_sector(edges, order, params)).collect())
}

/// One line per keypoint: `cluster_id x y z num_points num_rings`.
pub fn keypoint_dump(clusters: &[Cluster], keypoints: &[AggregationKeypoint]) -> String {
    keypoints
        .iter()
        .map(|k| {
            let c = &clusters[k.cluster_id];
            let p = k.centroid;
            format!(
                "{} {:.6} {:.6} {:.6} {} {}\n",
                k.cluster_id,
                p.x,
                p.y,
                p.z,
                c.members.len(),
                c.distinct_rings
            )
        })
        .collect()
}
