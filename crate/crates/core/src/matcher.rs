//! Descriptor matching and expansion to edge-point correspondences.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::descriptor::{Link3dDescriptor, DESCRIPTOR_DIMS};
use crate::keypoints::{Cluster, EdgePoint};

#[derive(Error, Debug, PartialEq)]
pub enum MatcherError {
    #[error("invalid matcher parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatcherParams {
    /// Two non-zero dimensions agree when they differ by strictly less than this (m).
    pub dim_tolerance: f64,
    /// Minimum score for an emitted match.
    pub score_threshold: u32,
}

impl MatcherParams {
    pub fn validate(&self) -> Result<(), MatcherError> {
        if !(self.dim_tolerance > 0.0) || !self.dim_tolerance.is_finite() {
            return Err(MatcherError::InvalidParams("dim_tolerance must be positive".into()));
        }
        if self.score_threshold == 0 {
            return Err(MatcherError::InvalidParams("score_threshold must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for MatcherParams {
    fn default() -> Self {
        MatcherParams {
            dim_tolerance: 0.2,
            score_threshold: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchPair {
    pub index_a: usize,
    pub index_b: usize,
    pub score: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCorrespondence {
    pub point_a: Vector3<f64>,
    pub point_b: Vector3<f64>,
    pub ring: u16,
    /// Index into the match list this correspondence came from.
    pub source_pair: usize,
}

pub fn similarity_score(a: &Link3dDescriptor, b: &Link3dDescriptor, params: &MatcherParams) -> u32 {
    a.values
        .iter()
        .zip(&b.values)
        .filter(|(&x, &y)| x != 0.0 && y != 0.0 && (x - y).abs() < params.dim_tolerance)
        .count() as u32
}

/// Non-zero values of set B grouped per dimension into narrow buckets. The
/// bucket map is monotonic, so every value within `tol` of a query lies in
/// the buckets of `v - tol` through `v + tol`.
struct DimIndex {
    tol: f64,
    dims: Vec<DimBuckets>,
    /// Entry offsets of every bucket, all dimensions back to back.
    bucket_offsets: Vec<u32>,
    values: Vec<f64>,
    ids: Vec<u32>,
}

#[derive(Clone, Copy)]
struct DimBuckets {
    low: f64,
    inv_width: f64,
    count: usize,
    /// Index of this dimension's first bucket in `bucket_offsets`.
    first: usize,
}

/// Upper bound on buckets per dimension; wide value ranges get wider buckets.
const MAX_BUCKETS: usize = 4096;
const BUCKETS_PER_TOL: f64 = 4.0;
/// Dimensions gathered per pass over set B while building.
const BLOCK: usize = 12;

impl DimBuckets {
    /// Monotonic in `v`; exact floor at and above `low`, zero just below it.
    fn bucket(&self, v: f64) -> i64 {
        ((v - self.low) * self.inv_width) as i64
    }

    fn local(&self, v: f64) -> usize {
        self.bucket(v).clamp(0, self.count as i64 - 1) as usize
    }
}

impl DimIndex {
    fn build(set: &[Link3dDescriptor], usable: &[bool], tol: f64) -> Self {
        let rows: Vec<(u32, &[f64; DESCRIPTOR_DIMS])> = set
            .iter()
            .enumerate()
            .filter(|(j, _)| usable[*j])
            .map(|(j, d)| (j as u32, &d.values))
            .collect();
        let mut dims = Vec::with_capacity(DESCRIPTOR_DIMS);
        let mut bucket_offsets = vec![0u32];
        let mut values = Vec::new();
        let mut ids = Vec::new();
        let mut columns: [Vec<(f64, u32)>; BLOCK] = Default::default();
        let mut fill = Vec::new();
        for block in (0..DESCRIPTOR_DIMS).step_by(BLOCK) {
            for c in columns.iter_mut() {
                c.clear();
            }
            // one pass over the rows per block of dimensions keeps reads sequential
            for &(j, row) in &rows {
                for (c, &v) in columns.iter_mut().zip(&row[block..block + BLOCK]) {
                    if v != 0.0 {
                        c.push((v, j));
                    }
                }
            }
            for column in &columns {
                let (low, high) = column
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(v, _)| (lo.min(v), hi.max(v)));
                let (count, width) = if column.is_empty() {
                    (0, tol)
                } else {
                    let width = (tol / BUCKETS_PER_TOL).max((high - low) / MAX_BUCKETS as f64);
                    (((high - low) / width).floor() as usize + 1, width)
                };
                let b = DimBuckets {
                    low,
                    inv_width: 1.0 / width,
                    count,
                    first: bucket_offsets.len() - 1,
                };
                let base = values.len() as u32;
                fill.clear();
                fill.resize(count + 1, 0u32);
                for &(v, _) in column {
                    fill[b.local(v) + 1] += 1;
                }
                for k in 0..count {
                    fill[k + 1] += fill[k];
                }
                bucket_offsets.extend(fill[1..].iter().map(|&o| base + o));
                values.resize(values.len() + column.len(), 0.0);
                ids.resize(ids.len() + column.len(), 0u32);
                for &(v, j) in column {
                    let slot = &mut fill[b.local(v)];
                    values[(base + *slot) as usize] = v;
                    ids[(base + *slot) as usize] = j;
                    *slot += 1;
                }
                dims.push(b);
            }
        }
        DimIndex {
            tol,
            dims,
            bucket_offsets,
            values,
            ids,
        }
    }

    /// Entry range of dimension `d` that may lie within `tol` of `v`.
    fn window(&self, d: usize, v: f64) -> std::ops::Range<usize> {
        let b = &self.dims[d];
        if b.count == 0 {
            return 0..0;
        }
        let lo = b.local(v - self.tol);
        let hi = b.local(v + self.tol);
        self.bucket_offsets[b.first + lo] as usize..self.bucket_offsets[b.first + hi + 1] as usize
    }
}

struct Scorer<'a> {
    index: &'a DimIndex,
    set_b: &'a [Link3dDescriptor],
    tol: f64,
    scores: Vec<u16>,
    touched: Vec<u32>,
    /// Non-zero dimensions of the query with their candidate windows.
    dims: Vec<(usize, std::ops::Range<usize>)>,
}

/// Dimensions used to find a first good candidate before pruning.
const SEED_DIMS: usize = 8;

impl<'a> Scorer<'a> {
    fn new(index: &'a DimIndex, set_b: &'a [Link3dDescriptor], tol: f64) -> Self {
        Scorer {
            index,
            set_b,
            tol,
            scores: vec![0; set_b.len()],
            touched: Vec::new(),
            dims: Vec::with_capacity(DESCRIPTOR_DIMS),
        }
    }

    /// Adds one to the count of every B entry agreeing with `v` in the `k`-th query dimension.
    fn count_dim(&mut self, k: usize, v: f64) {
        let r = self.dims[k].1.clone();
        for (&x, &j) in self.index.values[r.clone()].iter().zip(&self.index.ids[r]) {
            if (v - x).abs() >= self.tol {
                continue;
            }
            let s = &mut self.scores[j as usize];
            if *s == 0 {
                self.touched.push(j);
            }
            *s += 1;
        }
    }

    fn reset(&mut self) {
        for &j in &self.touched {
            self.scores[j as usize] = 0;
        }
        self.touched.clear();
    }

    fn exact(&self, a: &Link3dDescriptor, j: usize) -> u32 {
        a.values
            .iter()
            .zip(&self.set_b[j].values)
            .filter(|(&x, &y)| x != 0.0 && y != 0.0 && (x - y).abs() < self.tol)
            .count() as u32
    }

    /// Highest-scoring entry of B for `a`, lowest index on ties.
    fn best(&mut self, a: &Link3dDescriptor) -> Option<(usize, u32)> {
        self.dims.clear();
        let index = self.index;
        self.dims.extend(
            (0..DESCRIPTOR_DIMS)
                .filter(|&d| a.values[d] != 0.0)
                .map(|d| (d, index.window(d, a.values[d]))),
        );
        let n = self.dims.len();
        if n > 3 * SEED_DIMS {
            if let Some(found) = self.best_pruned(a) {
                return found;
            }
        }
        for k in 0..n {
            self.count_dim(k, a.values[self.dims[k].0]);
        }
        let mut best: Option<(usize, u32)> = None;
        for &j in &self.touched {
            let j = j as usize;
            let s = self.scores[j] as u32;
            if better(j, s, best) {
                best = Some((j, s));
            }
        }
        self.reset();
        best
    }

    /// Exact search that only scores B entries able to reach a known lower
    /// bound. A rival scoring at least `s` disagrees with `a` on at most
    /// `m = n - s` of its `n` non-zero dimensions, so it agrees on at least
    /// `c - m` of any `c` of them. Returns `None` when the bound is too weak
    /// to prune, leaving the scorer reset.
    fn best_pruned(&mut self, a: &Link3dDescriptor) -> Option<Option<(usize, u32)>> {
        // the pigeonhole bound holds for any subset, so count the sparsest dimensions
        let n = self.dims.len();
        self.dims.select_nth_unstable_by_key(SEED_DIMS, |(_, r)| r.len());
        for k in 0..SEED_DIMS {
            self.count_dim(k, a.values[self.dims[k].0]);
        }
        let top = self.touched.iter().map(|&j| self.scores[j as usize]).max();
        let mut best: Option<(usize, u32)> = None;
        if let Some(top) = top {
            for &j in &self.touched {
                if self.scores[j as usize] == top {
                    let s = self.exact(a, j as usize);
                    if better(j as usize, s, best) {
                        best = Some((j as usize, s));
                    }
                }
            }
        }
        let Some((_, lower)) = best else {
            self.reset();
            return None;
        };
        let m = n - lower as usize;
        let c = 2 * m + SEED_DIMS;
        if c >= n {
            self.reset();
            return None;
        }
        for k in SEED_DIMS..c {
            self.count_dim(k, a.values[self.dims[k].0]);
        }
        let needed = (c - m) as u16;
        let mut candidates: Vec<usize> = self
            .touched
            .iter()
            .filter(|&&j| self.scores[j as usize] >= needed)
            .map(|&j| j as usize)
            .collect();
        self.reset();
        candidates.sort_unstable();
        for j in candidates {
            let s = self.exact(a, j);
            if better(j, s, best) {
                best = Some((j, s));
            }
        }
        Some(best)
    }
}

/// Whether `(j, s)` beats the current best: higher score, or equal score and lower index.
fn better(j: usize, s: u32, best: Option<(usize, u32)>) -> bool {
    match best {
        None => true,
        Some((bj, bs)) => s > bs || (s == bs && j < bj),
    }
}

fn resolve(candidates: impl Iterator<Item = (usize, Option<(usize, u32)>)>, params: &MatcherParams) -> Vec<MatchPair> {
    let mut claims: BTreeMap<usize, (usize, u32)> = BTreeMap::new();
    for (i, best) in candidates {
        let Some((j, s)) = best else { continue };
        claims
            .entry(j)
            .and_modify(|w| {
                if s > w.1 || (s == w.1 && i < w.0) {
                    *w = (i, s);
                }
            })
            .or_insert((i, s));
    }
    let mut out: Vec<MatchPair> = claims
        .into_iter()
        .filter(|(_, (_, s))| *s >= params.score_threshold)
        .map(|(j, (i, s))| MatchPair {
            index_a: i,
            index_b: j,
            score: s,
        })
        .collect();
    out.sort_by_key(|m| m.index_a);
    out
}

/// One-to-one matching of two descriptor sets.
///
/// Each descriptor in A picks its highest-scoring descriptor in B (ties to the
/// lower index). When several pick the same B entry, the highest score wins
/// (ties to the lower A index). Pairs scoring below the threshold are dropped.
/// All-zero descriptors never match. Output is sorted by `index_a`.
pub fn match_descriptors(set_a: &[Link3dDescriptor], set_b: &[Link3dDescriptor], params: &MatcherParams) -> Vec<MatchPair> {
    let usable: Vec<bool> = set_b.iter().map(|d| !d.is_empty()).collect();
    let index = DimIndex::build(set_b, &usable, params.dim_tolerance);
    let mut scorer = Scorer::new(&index, set_b, params.dim_tolerance);
    let best: Vec<_> = set_a.iter().map(|a| scorer.best(a)).collect();
    resolve(best.into_iter().enumerate(), params)
}

/// Same as [`match_descriptors`], with scoring of A split across tasks.
pub fn match_descriptors_parallel(
    set_a: &[Link3dDescriptor],
    set_b: &[Link3dDescriptor],
    params: &MatcherParams,
) -> Vec<MatchPair> {
    let usable: Vec<bool> = set_b.iter().map(|d| !d.is_empty()).collect();
    let index = DimIndex::build(set_b, &usable, params.dim_tolerance);
    let best: Vec<_> = set_a
        .par_chunks(64)
        .flat_map_iter(|chunk| {
            let mut scorer = Scorer::new(&index, set_b, params.dim_tolerance);
            chunk.iter().map(|a| scorer.best(a)).collect::<Vec<_>>()
        })
        .collect();
    resolve(best.into_iter().enumerate(), params)
}

/// Highest-smoothness member on every ring of a cluster.
fn strongest_per_ring(members: &[EdgePoint]) -> BTreeMap<u16, &EdgePoint> {
    let mut best: BTreeMap<u16, &EdgePoint> = BTreeMap::new();
    for m in members {
        best.entry(m.ring)
            .and_modify(|b| {
                if m.smoothness > b.smoothness || (m.smoothness == b.smoothness && m.source_index < b.source_index) {
                    *b = m;
                }
            })
            .or_insert(m);
    }
    best
}

/// For every matched cluster pair, pair the strongest edge point of each ring
/// the two clusters share.
pub fn expand_to_edge_matches(pairs: &[MatchPair], clusters_a: &[Cluster], clusters_b: &[Cluster]) -> Vec<PointCorrespondence> {
    let mut out = Vec::new();
    for (p, pair) in pairs.iter().enumerate() {
        let a = strongest_per_ring(&clusters_a[pair.index_a].members);
        let b = strongest_per_ring(&clusters_b[pair.index_b].members);
        for (ring, ea) in &a {
            if let Some(eb) = b.get(ring) {
                out.push(PointCorrespondence {
                    point_a: ea.position,
                    point_b: eb.position,
                    ring: *ring,
                    source_pair: p,
                });
            }
        }
    }
    out
}

pub fn matches_csv(pairs: &[MatchPair]) -> String {
    let mut out = String::from("index_a,index_b,score\n");
    for p in pairs {
        out.push_str(&format!("{},{},{}\n", p.index_a, p.index_b, p.score));
    }
    out
}

pub fn correspondences_csv(cs: &[PointCorrespondence]) -> String {
    let mut out = String::from("ax,ay,az,bx,by,bz,ring,pair\n");
    for c in cs {
        let (a, b) = (c.point_a, c.point_b);
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
            a.x, a.y, a.z, b.x, b.y, b.z, c.ring, c.source_pair
        ));
    }
    out
}
