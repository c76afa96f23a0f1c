use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, PoolingTraceMap};
use crate::mesh::{Label, UNLABELED};
use crate::neighborhoods::{res_sample, EdgeSet};
use crate::FeatureMatrix;

/// Edge sets of one level as consumed by the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLevel {
    pub geodesic: EdgeSet,
    pub euclidean: EdgeSet,
}

/// Everything a forward pass needs: level-0 features, per-level edges,
/// trace maps and level-0 labels. Several inputs can be merged into one
/// disjoint graph with [`GraphInput::union`].
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub features: FeatureMatrix,
    pub levels: Vec<GraphLevel>,
    pub traces: Vec<PoolingTraceMap>,
    pub labels: Vec<Label>,
    /// Level-0 vertex count of every merged part.
    pub parts: Vec<usize>,
}

/// Random Edge Sampling applied to the Euclidean edges of every level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResSampling {
    pub threshold: usize,
    pub seed: u64,
}

fn level_seed(seed: u64, level: usize) -> u64 {
    seed ^ (level as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl GraphInput {
    pub fn new(
        features: FeatureMatrix,
        levels: Vec<GraphLevel>,
        traces: Vec<PoolingTraceMap>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        let n0 = features.nrows();
        let g = GraphInput {
            parts: vec![n0],
            features,
            levels,
            traces,
            labels,
        };
        g.check()?;
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.features.nrows()
    }

    fn check(&self) -> Result<()> {
        if self.levels.is_empty() || self.traces.len() + 1 != self.levels.len() {
            return Err(Error::Shape(format!(
                "{} levels with {} traces",
                self.levels.len(),
                self.traces.len()
            )));
        }
        if self.labels.len() != self.features.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} vertices",
                self.labels.len(),
                self.features.nrows()
            )));
        }
        let mut n = self.features.nrows();
        for (l, lv) in self.levels.iter().enumerate() {
            lv.geodesic.check(n)?;
            lv.euclidean.check(n)?;
            if let Some(t) = self.traces.get(l) {
                if t.fine_count() != n {
                    return Err(Error::Shape(format!(
                        "trace {l} starts at {} vertices, level has {n}",
                        t.fine_count()
                    )));
                }
                n = t.coarse_count();
            }
        }
        Ok(())
    }

    /// Edges and traces from a hierarchy. Geodesic edges get the self-loop
    /// fallback; missing Euclidean edges become empty sets, which only
    /// networks without a Euclidean branch accept.
    pub fn from_hierarchy(h: &Hierarchy, features: FeatureMatrix, res: Option<ResSampling>) -> Result<Self> {
        if features.nrows() != h.levels[0].vertex_count() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} level-0 vertices",
                features.nrows(),
                h.levels[0].vertex_count()
            )));
        }
        let levels = (0..h.depth())
            .map(|l| {
                let euclidean = match &h.euclidean_edges[l] {
                    Some(e) => match res {
                        Some(r) => res_sample(&e.edges, r.threshold, level_seed(r.seed, l)),
                        None => e.edges.clone(),
                    },
                    None => EdgeSet::empty(h.levels[l].vertex_count()),
                };
                GraphLevel {
                    geodesic: h.geodesic_edges[l].with_self_loop_fallback(),
                    euclidean,
                }
            })
            .collect();
        let labels = h.levels[0]
            .labels
            .clone()
            .unwrap_or_else(|| vec![UNLABELED; h.levels[0].vertex_count()]);
        Self::new(features, levels, h.traces.clone(), labels)
    }

    /// Disjoint union; vertex indices of later parts are shifted per level.
    pub fn union(parts: &[GraphInput]) -> Result<GraphInput> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("cannot merge zero graph inputs".into()))?;
        let depth = first.levels.len();
        let width = first.features.ncols();
        if parts
            .iter()
            .any(|p| p.levels.len() != depth || p.features.ncols() != width)
        {
            return Err(Error::Shape("merged inputs differ in depth or feature width".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.features.view()).collect();
        let features = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;

        let shift = |sets: Vec<(&EdgeSet, usize)>| -> EdgeSet {
            let mut lists = Vec::new();
            for (e, off) in sets {
                for i in 0..e.len() {
                    lists.push(e.neighbors(i).iter().map(|&j| j + off).collect());
                }
            }
            EdgeSet::from_lists(lists)
        };
        let mut levels = Vec::with_capacity(depth);
        let mut traces = Vec::with_capacity(depth.saturating_sub(1));
        for l in 0..depth {
            let mut off = 0;
            let mut geo = Vec::new();
            let mut euc = Vec::new();
            for p in parts {
                geo.push((&p.levels[l].geodesic, off));
                euc.push((&p.levels[l].euclidean, off));
                off += p.levels[l].geodesic.len();
            }
            levels.push(GraphLevel {
                geodesic: shift(geo),
                euclidean: shift(euc),
            });
            if l + 1 < depth {
                let mut assignment = Vec::new();
                let mut coarse_off = 0;
                for p in parts {
                    let t = &p.traces[l];
                    assignment.extend(t.assignment().iter().map(|&c| c + coarse_off));
                    coarse_off += t.coarse_count();
                }
                traces.push(PoolingTraceMap::new(assignment, coarse_off)?);
            }
        }
        let g = GraphInput {
            features,
            levels,
            traces,
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            parts: parts.iter().flat_map(|p| p.parts.iter().copied()).collect(),
        };
        g.check()?;
        Ok(g)
    }
}
