//! Brute-force reference computations for cross-checking the `link3d` pipeline.
//!
//! Everything here works on plain arrays and slices and deliberately shares no
//! code with the library: each function recomputes its quantity the slow,
//! obvious way. Tests compare the optimized pipeline against these.

use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Number of angular slots in a keypoint descriptor.
pub const DESCRIPTOR_SLOTS: usize = 180;

/// Smoothness of every point on one scan line, by literal summation.
///
/// Points whose window would run off either end of the line get 0.
pub fn smoothness(line: &[[f64; 3]], neighborhood: usize) -> Vec<f64> {
    let half = neighborhood / 2;
    let mut out = vec![0.0; line.len()];
    for i in 0..line.len() {
        if i < half || i + half >= line.len() {
            continue;
        }
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sz = 0.0;
        for j in (i - half)..=(i + half) {
            if j == i {
                continue;
            }
            sx += line[j][0] - line[i][0];
            sy += line[j][1] - line[i][1];
            sz += line[j][2] - line[i][2];
        }
        out[i] = (sx * sx + sy * sy + sz * sz) / neighborhood as f64;
    }
    out
}

/// Scan-line index by walking elevation bins from the bottom.
pub fn ring_by_bins(p: [f64; 3], num_rings: usize, fov_low: f64, fov_high: f64) -> usize {
    let elevation = p[2].atan2((p[0] * p[0] + p[1] * p[1]).sqrt()).to_degrees();
    let width = (fov_high - fov_low) / num_rings as f64;
    let mut ring = 0;
    for b in 1..num_rings {
        let lower = fov_low + width * b as f64;
        if elevation >= lower {
            ring = b;
        }
    }
    ring
}

/// Horizontal sector of `(x, y)` found by walking sector boundaries.
pub fn sector_by_sweep(x: f64, y: f64, num_sectors: usize) -> usize {
    let mut theta = y.atan2(x);
    if theta < 0.0 {
        theta += 2.0 * PI;
    }
    let width = 2.0 * PI / num_sectors as f64;
    let mut sector = 0;
    for s in 1..num_sectors {
        if theta >= width * s as f64 {
            sector = s;
        }
    }
    sector
}

/// Descriptor slot for an angle given in degrees, by searching 2-degree bands.
///
/// Band 0 covers [-1, 1) degrees; band `s` covers [2s - 1, 2s + 1).
pub fn slot_by_band(degrees: f64) -> usize {
    let mut deg = degrees % 360.0;
    if deg < 0.0 {
        deg += 360.0;
    }
    for s in 1..DESCRIPTOR_SLOTS {
        let lo = 2.0 * s as f64 - 1.0;
        if deg >= lo && deg < lo + 2.0 {
            return s;
        }
    }
    0
}

/// Counterclockwise angle from `main` to `other`, in [0, 2*pi).
pub fn signed_angle(main: [f64; 2], other: [f64; 2]) -> f64 {
    let a = other[1].atan2(other[0]) - main[1].atan2(main[0]);
    let mut a = a % (2.0 * PI);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    if a >= 2.0 * PI {
        a -= 2.0 * PI;
    }
    a
}

/// Full pairwise horizontal distance and direction tables.
pub fn pair_tables(points: &[[f64; 2]]) -> (Vec<Vec<f64>>, Vec<Vec<[f64; 2]>>) {
    let n = points.len();
    let mut dist = vec![vec![0.0; n]; n];
    let mut dire = vec![vec![[0.0; 2]; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dx = points[j][0] - points[i][0];
            let dy = points[j][1] - points[i][1];
            dist[i][j] = (dx * dx + dy * dy).sqrt();
            dire[i][j] = [dx, dy];
        }
    }
    (dist, dire)
}

fn slot_of_radians(theta: f64) -> usize {
    slot_by_band(theta * 180.0 / PI)
}

/// Descriptor of `center` with the main direction pointing at `anchor`.
pub fn anchored_descriptor(points: &[[f64; 2]], center: usize, anchor: usize) -> [f64; DESCRIPTOR_SLOTS] {
    let mut out = [0.0; DESCRIPTOR_SLOTS];
    let c = points[center];
    let main = [points[anchor][0] - c[0], points[anchor][1] - c[1]];
    for (j, p) in points.iter().enumerate() {
        if j == center {
            continue;
        }
        let dx = p[0] - c[0];
        let dy = p[1] - c[1];
        let d = (dx * dx + dy * dy).sqrt();
        if d == 0.0 {
            continue;
        }
        let slot = slot_of_radians(signed_angle(main, [dx, dy]));
        if out[slot] == 0.0 || d < out[slot] {
            out[slot] = d;
        }
    }
    out
}

/// Every keypoint's descriptor: enumerate the `k` nearest anchors by a full
/// sort, build each anchored descriptor, then take the first non-zero value per
/// slot in anchor order.
pub fn descriptors(points: &[[f64; 2]], k: usize) -> Vec<[f64; DESCRIPTOR_SLOTS]> {
    let mut all = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let mut others: Vec<(f64, usize)> = Vec::new();
        for j in 0..points.len() {
            if j == i {
                continue;
            }
            let dx = points[j][0] - points[i][0];
            let dy = points[j][1] - points[i][1];
            let d = (dx * dx + dy * dy).sqrt();
            if d > 0.0 {
                others.push((d, j));
            }
        }
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let anchored: Vec<[f64; DESCRIPTOR_SLOTS]> = others
            .iter()
            .take(k)
            .map(|&(_, anchor)| anchored_descriptor(points, i, anchor))
            .collect();
        let mut merged = [0.0; DESCRIPTOR_SLOTS];
        for (slot, value) in merged.iter_mut().enumerate() {
            for des in &anchored {
                if des[slot] != 0.0 {
                    *value = des[slot];
                    break;
                }
            }
        }
        all.push(merged);
    }
    all
}

/// Count of slots where both descriptors are non-zero and closer than `tol`.
pub fn similarity(a: &[f64], b: &[f64], tol: f64) -> u32 {
    let mut score = 0;
    for d in 0..a.len() {
        if a[d] != 0.0 && b[d] != 0.0 && (a[d] - b[d]).abs() < tol {
            score += 1;
        }
    }
    score
}

/// Exhaustive matcher: full score matrix, best column per row (ties to the
/// lower column), best row per claimed column (ties to the lower row), then
/// the score gate. Returns `(row, column, score)` sorted by row.
pub fn match_sets(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64, min_score: u32) -> Vec<(usize, usize, u32)> {
    let empty = |d: &Vec<f64>| d.iter().all(|&v| v == 0.0);
    let mut claims: BTreeMap<usize, Vec<(usize, u32)>> = BTreeMap::new();
    for (i, da) in a.iter().enumerate() {
        if empty(da) {
            continue;
        }
        let mut best: Option<(usize, u32)> = None;
        for (j, db) in b.iter().enumerate() {
            if empty(db) {
                continue;
            }
            let s = similarity(da, db, tol);
            match best {
                Some((_, bs)) if bs >= s => {}
                _ => best = Some((j, s)),
            }
        }
        if let Some((j, s)) = best {
            claims.entry(j).or_default().push((i, s));
        }
    }
    let mut out = Vec::new();
    for (j, rows) in claims {
        let mut winner = rows[0];
        for &(i, s) in &rows[1..] {
            if s > winner.1 || (s == winner.1 && i < winner.0) {
                winner = (i, s);
            }
        }
        if winner.1 >= min_score {
            out.push((winner.0, j, winner.1));
        }
    }
    out.sort();
    out
}

/// Per scan line, the position (in `members`) of the entry with the largest
/// smoothness; ties go to the smaller source index. Entries are
/// `(ring, smoothness, source_index)`.
pub fn per_ring_argmax(members: &[(u16, f64, usize)]) -> BTreeMap<u16, usize> {
    let mut best: BTreeMap<u16, usize> = BTreeMap::new();
    for (pos, m) in members.iter().enumerate() {
        let replace = match best.get(&m.0) {
            None => true,
            Some(&cur) => {
                let c = members[cur];
                m.1 > c.1 || (m.1 == c.1 && m.2 < c.2)
            }
        };
        if replace {
            best.insert(m.0, pos);
        }
    }
    best
}

/// A pose as a 3x3 rotation (row-major) and a translation.
pub type Pose = ([[f64; 3]; 3], [f64; 3]);

fn homogeneous(p: &Pose) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = p.0[r][c];
        }
        m[r][3] = p.1[r];
    }
    m[3][3] = 1.0;
    m
}

/// General 4x4 inverse by Gauss-Jordan elimination with partial pivoting.
fn invert4(m: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut a = m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let mut pivot = col;
        for r in col + 1..4 {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for c in 0..4 {
            a[col][c] /= p;
            inv[col][c] /= p;
        }
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                for c in 0..4 {
                    a[r][c] -= f * a[col][c];
                    inv[r][c] -= f * inv[col][c];
                }
            }
        }
    }
    inv
}

fn mul4(a: [[f64; 4]; 4], b: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            for k in 0..4 {
                out[r][c] += a[r][k] * b[k][c];
            }
        }
    }
    out
}

/// Trajectory RMSE through homogeneous 4x4 matrices: `Q_i^-1 * P_i` per pose.
pub fn trajectory_rmse(estimated: &[Pose], ground_truth: &[Pose]) -> f64 {
    let mut sum = 0.0;
    for (p, q) in estimated.iter().zip(ground_truth) {
        let rel = mul4(invert4(homogeneous(q)), homogeneous(p));
        sum += rel[0][3] * rel[0][3] + rel[1][3] * rel[1][3] + rel[2][3] * rel[2][3];
    }
    (sum / estimated.len() as f64).sqrt()
}

/// Greedy clustering over the whole point list with no angular bucketing.
///
/// Points are `(x, y)` in processing order. A point joins the first cluster
/// whose running horizontal centroid lies within `max_dist`; otherwise it
/// starts a new cluster. Returns member positions per cluster.
pub fn greedy_clusters(points: &[[f64; 2]], max_dist: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<(Vec<usize>, f64, f64)> = Vec::new();
    for (idx, p) in points.iter().enumerate() {
        let mut joined = false;
        for c in clusters.iter_mut() {
            let n = c.0.len() as f64;
            let cx = c.1 / n;
            let cy = c.2 / n;
            let d = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
            if d <= max_dist {
                c.0.push(idx);
                c.1 += p[0];
                c.2 += p[1];
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push((vec![idx], p[0], p[1]));
        }
    }
    clusters.into_iter().map(|c| c.0).collect()
}
