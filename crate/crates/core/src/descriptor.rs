//! 180-dimension keypoint descriptors.
//!
//! Keypoints are projected to the horizontal plane. Around each keypoint the
//! plane is split into 180 sectors of 2 degrees, with sector 0 centered on the
//! direction to a nearby anchor keypoint. Each sector stores the distance to
//! the closest keypoint that falls inside it. Descriptors built from the `k`
//! nearest anchors are merged, taking per dimension the first non-zero value
//! in anchor order.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use rayon::prelude::*;
use thiserror::Error;

use crate::keypoints::AggregationKeypoint;

pub const DESCRIPTOR_DIMS: usize = 180;

const SECTOR_WIDTH: f64 = TAU / DESCRIPTOR_DIMS as f64;

#[derive(Error, Debug, PartialEq)]
pub enum DescriptorError {
    #[error("angle is undefined for a zero-length direction")]
    ZeroVector,
    #[error("keypoints {0} and {1} coincide in the horizontal plane")]
    CoincidentKeypoints(usize, usize),
    #[error("number of anchors must be in 1..=6, got {0}")]
    InvalidAnchors(usize),
    #[error("malformed descriptor dump: {0}")]
    MalformedDump(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorParams {
    pub num_anchors: usize,
}

impl DescriptorParams {
    pub fn new(num_anchors: usize) -> Result<Self, DescriptorError> {
        if !(1..=6).contains(&num_anchors) {
            return Err(DescriptorError::InvalidAnchors(num_anchors));
        }
        Ok(DescriptorParams { num_anchors })
    }
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams { num_anchors: 3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link3dDescriptor {
    pub values: [f64; DESCRIPTOR_DIMS],
    pub keypoint_id: usize,
}

impl Link3dDescriptor {
    pub fn zeros(keypoint_id: usize) -> Self {
        Link3dDescriptor {
            values: [0.0; DESCRIPTOR_DIMS],
            keypoint_id,
        }
    }

    pub fn nonzero_dims(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Pairwise horizontal distances and directions, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTables {
    n: usize,
    dist: Vec<f64>,
    dire: Vec<Vector2<f64>>,
}

impl PairTables {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// Vector from keypoint `i` to keypoint `j`.
    pub fn dire(&self, i: usize, j: usize) -> Vector2<f64> {
        self.dire[i * self.n + j]
    }

    fn dist_row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    fn dire_row(&self, i: usize) -> &[Vector2<f64>] {
        &self.dire[i * self.n..(i + 1) * self.n]
    }
}

fn horizontal(keypoints: &[AggregationKeypoint]) -> Vec<Vector2<f64>> {
    keypoints.iter().map(|k| Vector2::new(k.centroid.x, k.centroid.y)).collect()
}

pub fn build_tables(keypoints: &[AggregationKeypoint]) -> PairTables {
    let xy = horizontal(keypoints);
    let n = xy.len();
    let mut dist = vec![0.0; n * n];
    let mut dire = vec![Vector2::zeros(); n * n];
    for i in 0..n {
        for j in 0..n {
            let dx = xy[j].x - xy[i].x;
            let dy = xy[j].y - xy[i].y;
            dist[i * n + j] = (dx * dx + dy * dy).sqrt();
            dire[i * n + j] = Vector2::new(dx, dy);
        }
    }
    PairTables { n, dist, dire }
}

/// Counterclockwise angle from `main` to `other`, in `[0, 2*pi)`.
pub fn angle_between(main: &Vector2<f64>, other: &Vector2<f64>) -> Result<f64, DescriptorError> {
    let norms = main.norm() * other.norm();
    if norms == 0.0 {
        return Err(DescriptorError::ZeroVector);
    }
    let dot = main.dot(other);
    let det = main.x * other.y - main.y * other.x;
    let theta = if det > 0.0 {
        (dot / norms).clamp(-1.0, 1.0).acos()
    } else if det < 0.0 {
        TAU - (dot / norms).clamp(-1.0, 1.0).acos()
    } else if dot > 0.0 {
        0.0
    } else {
        PI
    };
    // acos of a value just below 1 can leave 2*pi after the subtraction
    Ok(if theta >= TAU { 0.0 } else { theta })
}

/// Sector of an angle measured from the main direction. Sector 0 covers
/// `[-1, +1)` degrees; the rest follow counterclockwise.
pub fn sector_index(theta: f64) -> usize {
    let shifted = (theta + PI / 180.0).rem_euclid(TAU);
    (shifted / SECTOR_WIDTH).floor() as usize % DESCRIPTOR_DIMS
}

fn fill_sectors(
    center: usize,
    main: &Vector2<f64>,
    dist_row: &[f64],
    dire_row: &[Vector2<f64>],
    out: &mut [f64; DESCRIPTOR_DIMS],
) {
    for j in 0..dist_row.len() {
        let d = dist_row[j];
        if j == center || d == 0.0 {
            continue;
        }
        let Ok(theta) = angle_between(main, &dire_row[j]) else {
            continue;
        };
        let slot = &mut out[sector_index(theta)];
        if *slot == 0.0 || d < *slot {
            *slot = d;
        }
    }
}

/// Descriptor of `k0` with its main direction pointing at `anchor`.
pub fn single_anchor_descriptor(k0: usize, anchor: usize, tables: &PairTables) -> Result<Link3dDescriptor, DescriptorError> {
    if anchor == k0 || tables.dist(k0, anchor) == 0.0 {
        return Err(DescriptorError::CoincidentKeypoints(k0, anchor));
    }
    let mut des = Link3dDescriptor::zeros(k0);
    let main = tables.dire(k0, anchor);
    fill_sectors(k0, &main, tables.dist_row(k0), tables.dire_row(k0), &mut des.values);
    Ok(des)
}

/// The `k` nearest keypoints to `i` at non-zero distance, nearest first,
/// equal distances ordered by index.
pub fn nearest_anchors(i: usize, k: usize, tables: &PairTables) -> Vec<usize> {
    let row = tables.dist_row(i);
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (j, &d) in row.iter().enumerate() {
        if j == i || d == 0.0 {
            continue;
        }
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, j));
        best.truncate(k);
    }
    best.into_iter().map(|(_, j)| j).collect()
}

fn descriptor_for(i: usize, tables: &PairTables, params: &DescriptorParams) -> Link3dDescriptor {
    let mut merged = Link3dDescriptor::zeros(i);
    let mut scratch = [0.0; DESCRIPTOR_DIMS];
    for anchor in nearest_anchors(i, params.num_anchors, tables) {
        scratch.fill(0.0);
        let main = tables.dire(i, anchor);
        fill_sectors(i, &main, tables.dist_row(i), tables.dire_row(i), &mut scratch);
        for (m, &s) in merged.values.iter_mut().zip(&scratch) {
            if *m == 0.0 {
                *m = s;
            }
        }
    }
    merged
}

/// Descriptor for every keypoint, in keypoint order. Keypoints without
/// neighbors get the all-zero descriptor.
pub fn generate_descriptors(keypoints: &[AggregationKeypoint], params: &DescriptorParams) -> Vec<Link3dDescriptor> {
    let tables = build_tables(keypoints);
    (0..keypoints.len()).map(|i| descriptor_for(i, &tables, params)).collect()
}

/// Same as [`generate_descriptors`], one task per keypoint.
pub fn generate_descriptors_parallel(keypoints: &[AggregationKeypoint], params: &DescriptorParams) -> Vec<Link3dDescriptor> {
    let tables = build_tables(keypoints);
    (0..keypoints.len())
        .into_par_iter()
        .map(|i| descriptor_for(i, &tables, params))
        .collect()
}

/// First bytes of every binary descriptor dump.
pub const DESCRIPTOR_DUMP_MAGIC: &[u8; 8] = b"LK3DDESC";
const DUMP_RECORD: usize = 4 + 4 * DESCRIPTOR_DIMS;

/// Binary descriptor dump: magic, `u32` count, then per descriptor a `u32`
/// keypoint id and the values as little-endian `f32`.
pub fn encode_descriptors(descriptors: &[Link3dDescriptor]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + descriptors.len() * DUMP_RECORD);
    buf.extend_from_slice(DESCRIPTOR_DUMP_MAGIC);
    buf.extend_from_slice(&(descriptors.len() as u32).to_le_bytes());
    for d in descriptors {
        buf.extend_from_slice(&(d.keypoint_id as u32).to_le_bytes());
        for &v in &d.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

/// Inverse of [`encode_descriptors`]; values come back widened from `f32`.
pub fn decode_descriptors(bytes: &[u8]) -> Result<Vec<Link3dDescriptor>, DescriptorError> {
    if bytes.len() < 12 || &bytes[0..8] != DESCRIPTOR_DUMP_MAGIC {
        return Err(DescriptorError::MalformedDump("missing LK3DDESC magic".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != count * DUMP_RECORD {
        return Err(DescriptorError::MalformedDump(format!(
            "expected {} bytes for {count} descriptors, found {}",
            count * DUMP_RECORD,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(DUMP_RECORD)
        .map(|r| {
            let mut d = Link3dDescriptor::zeros(u32::from_le_bytes(r[0..4].try_into().unwrap()) as usize);
            for (v, b) in d.values.iter_mut().zip(r[4..].chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap()) as f64;
            }
            d
        })
        .collect())
}

/// Header `id,d0,...,d179`, then one row per descriptor.
pub fn descriptors_csv(descriptors: &[Link3dDescriptor]) -> String {
    let mut out = String::from("id");
    for k in 0..DESCRIPTOR_DIMS {
        out.push_str(&format!(",d{k}"));
    }
    out.push('\n');
    for d in descriptors {
        out.push_str(&d.keypoint_id.to_string());
        for v in &d.values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use link3d_oracles as oracle;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kps(xy: &[(f64, f64)]) -> Vec<AggregationKeypoint> {
        xy.iter()
            .enumerate()
            .map(|(i, &(x, y))| AggregationKeypoint {
                centroid: Vector3::new(x, y, 0.5),
                cluster_id: i,
            })
            .collect()
    }

    fn random_xy(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|_| {
                (
                    rng.random_range(-half_width..half_width),
                    rng.random_range(-half_width..half_width),
                )
            })
            .collect()
    }

    /// Recomputes each descriptor straight from coordinates, no tables.
    fn table_free(keypoints: &[AggregationKeypoint], params: &DescriptorParams) -> Vec<Link3dDescriptor> {
        let xy = horizontal(keypoints);
        let delta = |i: usize, j: usize| Vector2::new(xy[j].x - xy[i].x, xy[j].y - xy[i].y);
        let dist = |i: usize, j: usize| {
            let v = delta(i, j);
            (v.x * v.x + v.y * v.y).sqrt()
        };
        (0..xy.len())
            .map(|i| {
                let mut order: Vec<usize> = (0..xy.len()).filter(|&j| j != i && dist(i, j) > 0.0).collect();
                order.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
                let mut merged = Link3dDescriptor::zeros(i);
                for &anchor in order.iter().take(params.num_anchors) {
                    let main = delta(i, anchor);
                    let mut des = [0.0; DESCRIPTOR_DIMS];
                    for &j in &order {
                        let s = sector_index(angle_between(&main, &delta(i, j)).unwrap());
                        if des[s] == 0.0 || dist(i, j) < des[s] {
                            des[s] = dist(i, j);
                        }
                    }
                    for d in 0..DESCRIPTOR_DIMS {
                        if merged.values[d] == 0.0 {
                            merged.values[d] = des[d];
                        }
                    }
                }
                merged
            })
            .collect()
    }

    #[test]
    fn three_four_five() {
        let t = build_tables(&kps(&[(0.0, 0.0), (3.0, 4.0)]));
        assert_eq!(t.dist(0, 1), 5.0);
        assert_eq!(t.dire(0, 1), Vector2::new(3.0, 4.0));
        let single = build_tables(&kps(&[(1.0, 1.0)]));
        assert_eq!(single.len(), 1);
        assert_eq!(single.dist(0, 0), 0.0);
    }

    #[test]
    fn tables_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xy = random_xy(&mut rng, 50, 40.0);
        let t = build_tables(&kps(&xy));
        let pts: Vec<[f64; 2]> = xy.iter().map(|&(x, y)| [x, y]).collect();
        let (dist, dire) = oracle::pair_tables(&pts);
        for i in 0..50 {
            for j in 0..50 {
                assert_eq!(t.dist(i, j), dist[i][j]);
                assert_eq!([t.dire(i, j).x, t.dire(i, j).y], dire[i][j]);
                assert_eq!(t.dist(i, j), t.dist(j, i));
                assert_eq!(t.dire(i, j), -t.dire(j, i));
            }
        }
    }

    #[test]
    fn angles() {
        let x = Vector2::new(1.0, 0.0);
        assert_eq!(angle_between(&x, &Vector2::new(0.0, 1.0)), Ok(PI / 2.0));
        assert_eq!(angle_between(&x, &Vector2::new(0.0, -1.0)), Ok(3.0 * PI / 2.0));
        assert_eq!(angle_between(&x, &Vector2::new(5.0, 0.0)), Ok(0.0));
        assert_eq!(angle_between(&x, &Vector2::new(-5.0, 0.0)), Ok(PI));
        assert_eq!(angle_between(&x, &Vector2::zeros()), Err(DescriptorError::ZeroVector));
        assert_eq!(angle_between(&Vector2::zeros(), &x), Err(DescriptorError::ZeroVector));
    }

    #[test]
    fn angles_agree_with_atan2() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let m = Vector2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let o = Vector2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let ours = angle_between(&m, &o).unwrap();
            let theirs = oracle::signed_angle([m.x, m.y], [o.x, o.y]);
            let diff = (ours - theirs).abs();
            assert!(diff.min(TAU - diff) < 1e-9, "{m:?} {o:?}: {ours} vs {theirs}");
            assert!((0.0..TAU).contains(&ours));
        }
    }

    #[test]
    fn sectors() {
        assert_eq!(sector_index(0.0), 0);
        assert_eq!(sector_index(1f64.to_radians()), 1);
        assert_eq!(sector_index(359.5f64.to_radians()), 0);
        assert_eq!(sector_index(90f64.to_radians()), 45);
        assert_eq!(sector_index(358.9f64.to_radians()), 179);
    }

    #[test]
    fn sectors_are_two_degree_bands() {
        for k in 0..3600 {
            let deg = k as f64 * 0.1 + 0.05;
            assert_eq!(sector_index(deg.to_radians()), oracle::slot_by_band(deg), "{deg} degrees");
        }
    }

    #[test]
    fn single_neighbor() {
        let t = build_tables(&kps(&[(0.0, 0.0), (2.0, 0.0)]));
        let d = single_anchor_descriptor(0, 1, &t).unwrap();
        assert_eq!(d.values[0], 2.0);
        assert_eq!(d.nonzero_dims(), 1);
    }

    #[test]
    fn quarter_turn_neighbor() {
        let t = build_tables(&kps(&[(0.0, 0.0), (2.0, 0.0), (0.0, 3.0)]));
        let d = single_anchor_descriptor(0, 1, &t).unwrap();
        assert_eq!(d.values[45], 3.0);
        let pts = [[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]];
        assert_eq!(d.values, oracle::anchored_descriptor(&pts, 0, 1));
    }

    #[test]
    fn sector_keeps_minimum() {
        let t = build_tables(&kps(&[(0.0, 0.0), (1.0, 0.0), (0.0, 5.0), (0.0, 3.0)]));
        let d = single_anchor_descriptor(0, 1, &t).unwrap();
        assert_eq!(d.values[45], 3.0);
    }

    #[test]
    fn coincident_anchor_is_an_error() {
        let t = build_tables(&kps(&[(0.0, 0.0), (0.0, 0.0)]));
        assert_eq!(
            single_anchor_descriptor(0, 1, &t),
            Err(DescriptorError::CoincidentKeypoints(0, 1))
        );
        assert!(single_anchor_descriptor(0, 0, &t).is_err());
    }

    #[test]
    fn mutual_pair() {
        let d = generate_descriptors(&kps(&[(0.0, 0.0), (3.0, 4.0)]), &DescriptorParams::default());
        for des in &d {
            assert_eq!(des.values[0], 5.0);
            assert_eq!(des.nonzero_dims(), 1);
        }
    }

    #[test]
    fn isolated_keypoint_is_empty() {
        let d = generate_descriptors(&kps(&[(4.0, 4.0)]), &DescriptorParams::default());
        assert!(d[0].is_empty());
        assert!(generate_descriptors(&[], &DescriptorParams::default()).is_empty());
    }

    #[test]
    fn priority_merge() {
        // keypoint 0 at the origin; anchors at distance 1, 2, 3 along different axes
        let xy = [(0.0, 0.0), (1.0, 0.0), (0.0, 2.0), (-3.0, 0.0), (0.0, -7.0)];
        let d = generate_descriptors(&kps(&xy), &DescriptorParams::default());
        let pts: Vec<[f64; 2]> = xy.iter().map(|&(x, y)| [x, y]).collect();
        let des1 = oracle::anchored_descriptor(&pts, 0, 1);
        let des2 = oracle::anchored_descriptor(&pts, 0, 2);
        let des3 = oracle::anchored_descriptor(&pts, 0, 3);
        for s in 0..DESCRIPTOR_DIMS {
            let expected = [des1[s], des2[s], des3[s]].into_iter().find(|&v| v != 0.0).unwrap_or(0.0);
            assert_eq!(d[0].values[s], expected);
        }
        assert_eq!(d[0].values[0], 1.0);
        assert_eq!(d[0].values[45], 2.0);
        assert_eq!(d[0].values[90], 3.0);
        assert_eq!(d[0].values[135], 7.0);
    }

    #[test]
    fn anchor_ties_go_to_lower_index() {
        let t = build_tables(&kps(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (-1.0, 0.0), (5.0, 5.0)]));
        assert_eq!(nearest_anchors(0, 2, &t), vec![1, 2]);
        assert_eq!(nearest_anchors(0, 6, &t), vec![1, 2, 3, 4]);
    }

    #[test]
    fn anchor_count_bounds() {
        assert!(DescriptorParams::new(0).is_err());
        assert!(DescriptorParams::new(7).is_err());
        assert_eq!(DescriptorParams::new(6).unwrap().num_anchors, 6);
    }

    #[test]
    fn thirty_random_keypoints_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let xy = random_xy(&mut rng, 30, 30.0);
        let pts: Vec<[f64; 2]> = xy.iter().map(|&(x, y)| [x, y]).collect();
        let ours = generate_descriptors(&kps(&xy), &DescriptorParams::default());
        let theirs = oracle::descriptors(&pts, 3);
        for (o, t) in ours.iter().zip(&theirs) {
            assert_eq!(&o.values, t);
        }
    }

    proptest! {
        #[test]
        fn tables_and_direct_paths_agree(seed in any::<u64>(), n in 0usize..40, k in 1usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut xy = random_xy(&mut rng, n, 25.0);
            if n > 3 {
                xy[2] = xy[0];
            }
            let params = DescriptorParams::new(k).unwrap();
            let keypoints = kps(&xy);
            let a = generate_descriptors(&keypoints, &params);
            prop_assert_eq!(&a, &table_free(&keypoints, &params));
            prop_assert_eq!(&a, &generate_descriptors_parallel(&keypoints, &params));
        }

        #[test]
        fn descriptor_invariants(seed in any::<u64>(), n in 2usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xy = random_xy(&mut rng, n, 25.0);
            let keypoints = kps(&xy);
            let tables = build_tables(&keypoints);
            for (i, d) in generate_descriptors(&keypoints, &DescriptorParams::default()).iter().enumerate() {
                prop_assert_eq!(d.keypoint_id, i);
                // each anchored descriptor fills at most n - 1 sectors
                prop_assert!(d.nonzero_dims() <= 3 * (n - 1));
                if let Some(&first) = nearest_anchors(i, 1, &tables).first() {
                    prop_assert!(single_anchor_descriptor(i, first, &tables).unwrap().nonzero_dims() < n);
                }
                let k1 = &generate_descriptors(&keypoints, &DescriptorParams::new(1).unwrap())[i];
                prop_assert!(k1.nonzero_dims() < n);
                prop_assert!(d.values.iter().all(|v| v.is_finite() && *v >= 0.0));
                let nearest = (0..n).filter(|&j| j != i).map(|j| tables.dist(i, j)).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(d.values[0], nearest);
            }
        }

        #[test]
        fn permutation_equivariance(seed in any::<u64>(), n in 2usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xy = random_xy(&mut rng, n, 25.0);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let permuted: Vec<(f64, f64)> = perm.iter().map(|&p| xy[p]).collect();
            let before = generate_descriptors(&kps(&xy), &DescriptorParams::default());
            let after = generate_descriptors(&kps(&permuted), &DescriptorParams::default());
            for (new_index, &old_index) in perm.iter().enumerate() {
                prop_assert_eq!(after[new_index].values, before[old_index].values);
            }
        }
    }

    #[test]
    fn descriptor_dump_round_trips() {
        let mut a = Link3dDescriptor::zeros(7);
        a.values[0] = 1.5;
        a.values[179] = 42.25;
        let b = Link3dDescriptor::zeros(9);
        let bytes = encode_descriptors(&[a.clone(), b.clone()]);
        assert_eq!(&bytes[0..8], b"LK3DDESC");
        assert_eq!(bytes.len(), 12 + 2 * (4 + 720));
        assert_eq!(decode_descriptors(&bytes).unwrap(), vec![a, b]);
        assert!(decode_descriptors(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_descriptors(b"LK3DSCAN\0\0\0\0").is_err());
    }

    #[test]
    fn descriptor_csv_has_id_and_all_dims() {
        let mut a = Link3dDescriptor::zeros(3);
        a.values[2] = 0.5;
        let csv = descriptors_csv(&[a]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("id,d0,d1,"));
        let row: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(row.len(), 181);
        assert_eq!(row[0], "3");
        assert_eq!(row[3], "0.5");
    }
}
