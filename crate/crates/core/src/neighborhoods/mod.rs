//! Euclidean neighbor graphs and Random Edge Sampling.

mod edges;
pub mod kdtree;

use std::collections::HashMap;

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use edges::EdgeSet;
pub use kdtree::KdTree;

use kdtree::dist2;

/// Which neighborhood feeds a convolution branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeighborhoodKind {
    Geodesic,
    Knn { k: usize },
    Radius { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    pub kind: NeighborhoodKind,
    /// Random Edge Sampling threshold; `None` disables sampling.
    pub res_threshold: Option<usize>,
}

impl NeighborhoodConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NeighborhoodKind::Knn { k } if k == 0 => {
                return Err(Error::Config("k-nn neighborhoods need k >= 1".into()))
            }
            NeighborhoodKind::Radius { r } if !(r > 0.0 && r.is_finite()) => {
                return Err(Error::Config(format!("radius must be positive, got {r}")))
            }
            _ => {}
        }
        if self.res_threshold == Some(0) {
            return Err(Error::Config("RES threshold must be >= 1".into()));
        }
        Ok(())
    }
}

/// Default per-level radii in meters, proportional to the clustering cell
/// schedule (0.04, 0.08, 0.16, 0.32). These are not published values.
pub const DEFAULT_RADII: [f64; 4] = [0.05, 0.10, 0.20, 0.40];

/// RES threshold used while training.
pub const RES_TRAIN_THRESHOLD: usize = 15;
/// RES threshold used at inference.
pub const RES_TEST_THRESHOLD: usize = 25;

/// Each vertex's `k` nearest other points, ties broken by lower index.
/// Neighbor lists are returned in ascending index order.
pub fn knn_graph(points: &[Point3<f64>], k: usize) -> Result<EdgeSet> {
    if k >= points.len() {
        return Err(Error::Config(format!(
            "k-nn needs k < point count (k = {k}, {} points)",
            points.len()
        )));
    }
    let tree = KdTree::build(points);
    let lists = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut n: Vec<usize> = tree.knn(p, k, Some(i)).into_iter().map(|x| x.0).collect();
            n.sort_unstable();
            n
        })
        .collect();
    Ok(EdgeSet::from_lists(lists))
}

/// All other points within distance `r` (inclusive). A vertex with no such
/// neighbor gets a single self-loop.
pub fn radius_graph(points: &[Point3<f64>], r: f64) -> Result<EdgeSet> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Config(format!("radius must be positive, got {r}")));
    }
    let Some((lo, _)) = crate::mesh::bounds(points) else {
        return Ok(EdgeSet::empty(0));
    };
    let cell_of = |p: &Point3<f64>| -> (i64, i64, i64) {
        (
            ((p.x - lo.x) / r).floor() as i64,
            ((p.y - lo.y) / r).floor() as i64,
            ((p.z - lo.z) / r).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell_of(p)).or_default().push(i);
    }
    let r2 = r * r;
    let lists = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (cx, cy, cz) = cell_of(p);
            let mut n = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            n.extend(bucket.iter().copied().filter(|&j| j != i && dist2(p, &points[j]) <= r2));
                        }
                    }
                }
            }
            if n.is_empty() {
                n.push(i);
            } else {
                n.sort_unstable();
            }
            n
        })
        .collect();
    Ok(EdgeSet::from_lists(lists))
}

/// Builds the Euclidean (or geodesic) edge set a config describes.
pub fn build_neighborhood(points: &[Point3<f64>], geodesic: &EdgeSet, kind: NeighborhoodKind) -> Result<EdgeSet> {
    match kind {
        NeighborhoodKind::Geodesic => Ok(geodesic.clone()),
        NeighborhoodKind::Knn { k } => {
            // small coarse levels can have fewer points than k
            let k = k.min(points.len().saturating_sub(1));
            if k == 0 {
                Ok(EdgeSet::empty(points.len()).with_self_loop_fallback())
            } else {
                knn_graph(points, k)
            }
        }
        NeighborhoodKind::Radius { r } => radius_graph(points, r),
    }
}

/// Keep probability for every edge of a neighborhood of size `n`:
/// 1 for `n <= t`, otherwise `(n - (t - 1))^(-1 / log2(t + 1))`.
pub fn sampling_probability(n: usize, t: usize) -> f64 {
    assert!(t >= 1, "threshold must be >= 1");
    if n <= t {
        return 1.0;
    }
    // 2^(-log2(n - t + 1) / log2(t + 1)); exactly 0.5 at n = 2t
    let excess = (n - t + 1) as f64;
    (-(excess.log2() / ((t + 1) as f64).log2())).exp2()
}

/// Counters from one RES pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ResStats {
    /// Edges belonging to neighborhoods larger than the threshold.
    pub candidate_edges: usize,
    /// Candidate edges kept by their Bernoulli draw.
    pub bernoulli_kept: usize,
    /// Neighborhoods that lost every edge and had one restored.
    pub restored: usize,
}

/// Random Edge Sampling. Neighborhoods of size `<= t` pass unchanged; larger
/// ones keep each edge independently with [`sampling_probability`]. If a
/// neighborhood loses every edge, one uniformly chosen edge is restored.
///
/// Vertex `i` draws from its own ChaCha stream keyed by `(seed, i)`, so the
/// result is reproducible and independent of iteration order.
pub fn res_sample(edges: &EdgeSet, t: usize, seed: u64) -> EdgeSet {
    res_sample_with_stats(edges, t, seed).0
}

pub fn res_sample_with_stats(edges: &EdgeSet, t: usize, seed: u64) -> (EdgeSet, ResStats) {
    assert!(t >= 1, "threshold must be >= 1");
    let mut stats = ResStats::default();
    let lists = (0..edges.len())
        .map(|i| {
            let nbrs = edges.neighbors(i);
            if nbrs.len() <= t {
                return nbrs.to_vec();
            }
            let p = sampling_probability(nbrs.len(), t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let kept: Vec<usize> = nbrs.iter().copied().filter(|_| rng.gen::<f64>() < p).collect();
            stats.candidate_edges += nbrs.len();
            stats.bernoulli_kept += kept.len();
            if kept.is_empty() {
                stats.restored += 1;
                vec![nbrs[rng.gen_range(0..nbrs.len())]]
            } else {
                kept
            }
        })
        .collect();
    (EdgeSet::from_lists(lists), stats)
}
