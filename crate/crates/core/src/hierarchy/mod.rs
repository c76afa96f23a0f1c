//! Mesh hierarchies and the trace maps that link adjacent levels.
//!
//! A [`Hierarchy`] holds meshes `M^0..M^L`, one [`PoolingTraceMap`] per
//! adjacent pair and geodesic edge sets per level. Level 0 is the mesh the
//! network runs on. When the configuration asks for a vertex clustering
//! pre-pass, the raw input is clustered first and the raw-to-level-0 map is
//! kept in [`Hierarchy::input_trace`].

mod fps;
mod io;
mod qem;
mod trace;
mod vc;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Label, Mesh, UNLABELED};
use crate::neighborhoods::{build_neighborhood, EdgeSet, NeighborhoodKind};

pub use fps::fps_pool;
pub use io::{deserialize_hierarchy, serialize_hierarchy, HierarchyManifest, LevelManifest};
pub use qem::{qem_pool, qem_pool_with_edges, QemReport, Quadric};
pub use trace::{pool_features, unpool_features, PoolMode, PoolingTraceMap};
pub use vc::{vertex_clustering_pool, vertex_clustering_pool_with_edges};

/// Output of one pooling step.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub mesh: Mesh,
    pub trace: PoolingTraceMap,
    /// Geodesic edges of the coarse mesh.
    pub geodesic: EdgeSet,
}

/// One coarsening step of a hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PoolStep {
    Vc {
        cell: f64,
    },
    Qem {
        ratio: f64,
        pair_distance: f64,
    },
    /// Farthest point sampling down to `ceil(ratio * |V|)` vertices.
    Fps {
        ratio: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    /// Cell size of the clustering pass that maps the raw input to level 0.
    pub prepass_cell: Option<f64>,
    pub steps: Vec<PoolStep>,
    /// Seed for farthest point sampling start vertices.
    #[serde(default)]
    pub seed: u64,
}

pub const DEFAULT_PREPASS_CELL: f64 = 0.04;
pub const DEFAULT_VC_CELLS: [f64; 3] = [0.08, 0.16, 0.32];
pub const DEFAULT_QEM_RATIO: f64 = 0.3;

impl HierarchyConfig {
    /// Vertex clustering with cells 0.04, 0.08, 0.16 and 0.32 m.
    pub fn vc() -> Self {
        Self::vc_cells(&[DEFAULT_PREPASS_CELL, 0.08, 0.16, 0.32])
    }

    /// First cell is the pre-pass, the rest are pooling steps.
    pub fn vc_cells(cells: &[f64]) -> Self {
        Self {
            prepass_cell: cells.first().copied(),
            steps: cells.iter().skip(1).map(|&cell| PoolStep::Vc { cell }).collect(),
            seed: 0,
        }
    }

    /// Clustering at 0.04 m followed by three QEM steps at ratio 0.3.
    pub fn vc_qem() -> Self {
        Self::vc_qem_with(DEFAULT_PREPASS_CELL, DEFAULT_QEM_RATIO, 3)
    }

    pub fn vc_qem_with(prepass: f64, ratio: f64, steps: usize) -> Self {
        Self {
            prepass_cell: Some(prepass),
            steps: vec![
                PoolStep::Qem {
                    ratio,
                    pair_distance: prepass,
                };
                steps
            ],
            seed: 0,
        }
    }

    pub fn fps(ratio: f64, steps: usize, seed: u64) -> Self {
        Self {
            prepass_cell: Some(DEFAULT_PREPASS_CELL),
            steps: vec![PoolStep::Fps { ratio }; steps],
            seed,
        }
    }

    /// Short name echoed into manifests: `vc`, `vc+qem`, `fps` or `custom`.
    pub fn strategy_name(&self) -> &'static str {
        let all = |f: fn(&PoolStep) -> bool| !self.steps.is_empty() && self.steps.iter().all(f);
        if all(|s| matches!(s, PoolStep::Vc { .. })) {
            "vc"
        } else if all(|s| matches!(s, PoolStep::Qem { .. })) {
            if self.prepass_cell.is_some() {
                "vc+qem"
            } else {
                "qem"
            }
        } else if all(|s| matches!(s, PoolStep::Fps { .. })) {
            "fps"
        } else {
            "custom"
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive, got {x}")))
            }
        };
        if let Some(c) = self.prepass_cell {
            positive(c, "pre-pass cell size")?;
        }
        for s in &self.steps {
            match *s {
                PoolStep::Vc { cell } => positive(cell, "cell size")?,
                PoolStep::Qem { ratio, pair_distance } => {
                    if !(ratio > 0.0 && ratio < 1.0) {
                        return Err(Error::Config(format!("QEM ratio must be in (0, 1), got {ratio}")));
                    }
                    if !(pair_distance >= 0.0 && pair_distance.is_finite()) {
                        return Err(Error::Config(format!(
                            "QEM pair distance must be >= 0, got {pair_distance}"
                        )));
                    }
                }
                PoolStep::Fps { ratio } => {
                    if !(ratio > 0.0 && ratio < 1.0) {
                        return Err(Error::Config(format!("FPS ratio must be in (0, 1), got {ratio}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Euclidean neighborhoods of one level together with how they were built.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanEdges {
    pub kind: NeighborhoodKind,
    pub edges: EdgeSet,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub levels: Vec<Mesh>,
    pub traces: Vec<PoolingTraceMap>,
    pub geodesic_edges: Vec<EdgeSet>,
    /// Filled on demand by [`Hierarchy::build_euclidean`].
    pub euclidean_edges: Vec<Option<EuclideanEdges>>,
    /// Raw input vertex -> level 0 vertex, present when a pre-pass ran.
    pub input_trace: Option<PoolingTraceMap>,
    pub config: HierarchyConfig,
    pub warnings: Vec<String>,
}

impl Hierarchy {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn vertex_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Mesh::vertex_count).collect()
    }

    /// Builds Euclidean edges for every level; `kinds[l]` is used for level `l`.
    pub fn build_euclidean(&mut self, kinds: &[NeighborhoodKind]) -> Result<()> {
        let some: Vec<_> = kinds.iter().copied().map(Some).collect();
        self.build_euclidean_where(&some)
    }

    /// Like [`Hierarchy::build_euclidean`], leaving levels with `None` as they are.
    pub fn build_euclidean_where(&mut self, kinds: &[Option<NeighborhoodKind>]) -> Result<()> {
        if kinds.len() != self.levels.len() {
            return Err(Error::Config(format!(
                "{} Euclidean neighborhood kinds for {} levels",
                kinds.len(),
                self.levels.len()
            )));
        }
        for (l, &kind) in kinds.iter().enumerate() {
            let Some(kind) = kind else { continue };
            let current = &self.euclidean_edges[l];
            if current.as_ref().map(|e| e.kind) == Some(kind) {
                continue;
            }
            let edges = build_neighborhood(&self.levels[l].positions, &self.geodesic_edges[l], kind)?;
            self.euclidean_edges[l] = Some(EuclideanEdges { kind, edges });
        }
        Ok(())
    }

    /// Applies a map to the positions of every level (normals use `rotate`).
    pub fn transform_positions(
        &mut self,
        point: impl Fn(&Point3<f64>) -> Point3<f64>,
        normal: impl Fn(&Vector3<f64>) -> Vector3<f64>,
    ) {
        for m in &mut self.levels {
            for p in &mut m.positions {
                *p = point(p);
            }
            if let Some(ns) = &mut m.normals {
                for n in ns {
                    let r = normal(n);
                    let len = r.norm();
                    *n = if len > 0.0 { r / len } else { Vector3::z() };
                }
            }
        }
    }

    /// Checks every structural invariant; returns the first problem found.
    pub fn validate(&self) -> Result<()> {
        let l = self.levels.len();
        if l == 0 {
            return Err(Error::Invalid("hierarchy has no levels".into()));
        }
        if self.traces.len() + 1 != l || self.geodesic_edges.len() != l || self.euclidean_edges.len() != l {
            return Err(Error::Invalid(format!(
                "level count mismatch: {} levels, {} traces, {} geodesic and {} Euclidean edge sets",
                l,
                self.traces.len(),
                self.geodesic_edges.len(),
                self.euclidean_edges.len()
            )));
        }
        for (i, m) in self.levels.iter().enumerate() {
            m.ensure_valid()?;
            let n = m.vertex_count();
            if i > 0 && n >= self.levels[i - 1].vertex_count() {
                return Err(Error::Invalid(format!(
                    "level {i} has {n} vertices, not fewer than level {}",
                    i - 1
                )));
            }
            let geo = &self.geodesic_edges[i];
            geo.check(n)?;
            if !geo.is_symmetric() {
                return Err(Error::Invalid(format!("geodesic edges of level {i} are not symmetric")));
            }
            for f in &m.faces {
                for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                    if !geo.neighbors(a).contains(&b) {
                        return Err(Error::Invalid(format!(
                            "level {i}: face edge {a}-{b} missing from the geodesic edges"
                        )));
                    }
                }
            }
            if let Some(e) = &self.euclidean_edges[i] {
                e.edges.check(n)?;
            }
        }
        for (i, t) in self.traces.iter().enumerate() {
            if t.fine_count() != self.levels[i].vertex_count() || t.coarse_count() != self.levels[i + 1].vertex_count()
            {
                return Err(Error::Invalid(format!(
                    "trace {i} maps {} -> {} vertices but levels have {} and {}",
                    t.fine_count(),
                    t.coarse_count(),
                    self.levels[i].vertex_count(),
                    self.levels[i + 1].vertex_count()
                )));
            }
        }
        if let Some(t) = &self.input_trace {
            if t.coarse_count() != self.levels[0].vertex_count() {
                return Err(Error::Invalid("input trace does not end at level 0".into()));
            }
        }
        Ok(())
    }
}

/// Builds all levels. Every pooling step must strictly reduce the vertex count.
pub fn build_hierarchy(mesh: &Mesh, config: &HierarchyConfig) -> Result<Hierarchy> {
    config.validate()?;
    mesh.ensure_valid()?;
    if mesh.vertex_count() == 0 {
        return Err(Error::Invalid("cannot build a hierarchy on an empty mesh".into()));
    }
    let mut warnings = Vec::new();

    let (level0, geo0, input_trace) = match config.prepass_cell {
        Some(cell) => {
            let p = vertex_clustering_pool(mesh, cell)?;
            (p.mesh, p.geodesic, Some(p.trace))
        }
        None => (mesh.clone(), mesh.geodesic_edge_set(), None),
    };
    let mut levels = vec![level0];
    let mut geodesic_edges = vec![geo0];
    let mut traces = Vec::new();

    for (i, step) in config.steps.iter().enumerate() {
        let fine = levels.last().unwrap();
        let fine_geo = geodesic_edges.last().unwrap();
        let pooled = match *step {
            PoolStep::Vc { cell } => vertex_clustering_pool_with_edges(fine, fine_geo, cell)?,
            PoolStep::Qem { ratio, pair_distance } => {
                let (p, report) = qem_pool_with_edges(fine, fine_geo, ratio, pair_distance)?;
                if !report.reached_target {
                    warnings.push(format!(
                        "level {}: QEM stopped at {} vertices, target was {}",
                        i + 1,
                        p.mesh.vertex_count(),
                        report.target
                    ));
                }
                p
            }
            PoolStep::Fps { ratio } => {
                let target = ((ratio * fine.vertex_count() as f64).ceil() as usize).max(1);
                fps_pool(fine, target, config.seed.wrapping_add(i as u64))?
            }
        };
        if pooled.mesh.vertex_count() >= fine.vertex_count() {
            return Err(Error::Invalid(format!(
                "pooling step {} did not reduce the vertex count ({} vertices)",
                i + 1,
                fine.vertex_count()
            )));
        }
        levels.push(pooled.mesh);
        geodesic_edges.push(pooled.geodesic);
        traces.push(pooled.trace);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let n = levels.len();
    Ok(Hierarchy {
        levels,
        traces,
        geodesic_edges,
        euclidean_edges: vec![None; n],
        input_trace,
        config: config.clone(),
        warnings,
    })
}

/// Majority label of a group. Unlabeled members are ignored unless the whole
/// group is unlabeled; ties go to the lowest class index.
pub fn majority_label(labels: impl IntoIterator<Item = Label>) -> Label {
    let mut counts: Vec<(Label, usize)> = Vec::new();
    for l in labels {
        if l == UNLABELED {
            continue;
        }
        match counts.iter_mut().find(|(c, _)| *c == l) {
            Some(e) => e.1 += 1,
            None => counts.push((l, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
        .unwrap_or(UNLABELED)
}

/// Assembles a coarse mesh: positions and faces are given, colors and normals
/// are preimage means, labels are preimage majorities.
pub(crate) fn aggregate_attributes(
    fine: &Mesh,
    trace: &PoolingTraceMap,
    positions: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
) -> Mesh {
    let groups = trace.preimages();
    let mean = |v: &Vec<Vector3<f64>>| -> Vec<Vector3<f64>> {
        groups
            .iter()
            .map(|g| g.iter().map(|&i| v[i]).sum::<Vector3<f64>>() / g.len() as f64)
            .collect()
    };
    Mesh {
        positions,
        faces,
        colors: fine
            .colors
            .as_ref()
            .map(|c| mean(c).into_iter().map(|x| x.map(|v| v.clamp(0.0, 1.0))).collect()),
        normals: fine.normals.as_ref().map(|n| {
            mean(n)
                .into_iter()
                .map(|x| {
                    let len = x.norm();
                    if len > 1e-12 {
                        x / len
                    } else {
                        Vector3::z()
                    }
                })
                .collect()
        }),
        labels: fine
            .labels
            .as_ref()
            .map(|l| groups.iter().map(|g| majority_label(g.iter().map(|&i| l[i]))).collect()),
    }
}

/// Coarse faces: corners mapped through `assignment`, degenerate faces
/// dropped, duplicates (same vertex set) removed keeping the first.
pub(crate) fn coarse_faces(faces: &[[usize; 3]], assignment: &[usize]) -> Vec<[usize; 3]> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for f in faces {
        let g = [assignment[f[0]], assignment[f[1]], assignment[f[2]]];
        if g[0] == g[1] || g[1] == g[2] || g[0] == g[2] {
            continue;
        }
        let mut key = g;
        key.sort_unstable();
        if seen.insert(key) {
            out.push(g);
        }
    }
    out
}

/// Coarse geodesic edges: `a`-`b` is an edge iff some fine edge joins a
/// member of `a` with a member of `b`.
pub(crate) fn coarse_edges(fine: &EdgeSet, assignment: &[usize], coarse_count: usize) -> EdgeSet {
    let mut lists = vec![Vec::new(); coarse_count];
    for (i, j) in fine.iter() {
        let (a, b) = (assignment[i], assignment[j]);
        if a != b {
            lists[a].push(b);
            lists[b].push(a);
        }
    }
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
    }
    EdgeSet::from_lists(lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::grid_mesh;

    #[test]
    fn majority_rules() {
        assert_eq!(majority_label([2, 2, 5]), 2);
        assert_eq!(majority_label([3, 1]), 1);
        assert_eq!(majority_label([UNLABELED, UNLABELED, 4]), 4);
        assert_eq!(majority_label([UNLABELED, UNLABELED]), UNLABELED);
        assert_eq!(majority_label([]), UNLABELED);
    }

    #[test]
    fn vc_preset_decreases_strictly() {
        // 3 m x 3 m floor at 2 cm spacing
        let m = grid_mesh(151, 151, 0.02);
        let h = build_hierarchy(&m, &HierarchyConfig::vc()).unwrap();
        assert_eq!(h.depth(), 4);
        let c = h.vertex_counts();
        assert!(c.windows(2).all(|w| w[1] < w[0]), "{c:?}");
        h.validate().unwrap();
        assert_eq!(h.input_trace.as_ref().unwrap().fine_count(), m.vertex_count());
    }

    #[test]
    fn qem_preset_follows_ratio() {
        let m = grid_mesh(60, 60, 0.02);
        let h = build_hierarchy(&m, &HierarchyConfig::vc_qem()).unwrap();
        let c = h.vertex_counts();
        for w in c.windows(2) {
            assert_eq!(w[1], (0.3 * w[0] as f64).ceil() as usize, "{c:?}");
        }
        assert!(h.warnings.is_empty());
        h.validate().unwrap();
        assert_eq!(h.config.strategy_name(), "vc+qem");
    }

    #[test]
    fn single_triangle_collapses() {
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(0.01, 0.0, 0.0),
                Point3::new(0.0, 0.01, 0.0),
            ],
            vec![[0, 1, 2]],
        );
        let cfg = HierarchyConfig {
            prepass_cell: None,
            steps: vec![PoolStep::Vc { cell: 1.0 }],
            seed: 0,
        };
        let h = build_hierarchy(&m, &cfg).unwrap();
        assert_eq!(h.levels[1].vertex_count(), 1);
        assert_eq!(h.levels[1].face_count(), 0);
    }

    #[test]
    fn non_reducing_step_is_an_error() {
        let m = grid_mesh(3, 3, 1.0);
        let cfg = HierarchyConfig {
            prepass_cell: None,
            steps: vec![PoolStep::Vc { cell: 0.1 }],
            seed: 0,
        };
        assert!(build_hierarchy(&m, &cfg).is_err());
    }

    #[test]
    fn fps_hierarchy_has_empty_coarse_geodesics() {
        let m = grid_mesh(30, 30, 0.02);
        let h = build_hierarchy(&m, &HierarchyConfig::fps(0.3, 2, 1)).unwrap();
        assert!(h.geodesic_edges[0].num_edges() > 0);
        assert_eq!(h.geodesic_edges[1].num_edges(), 0);
        h.validate().unwrap();
    }

    #[test]
    fn euclidean_edges_are_built_per_level() {
        let m = grid_mesh(20, 20, 0.02);
        let mut h = build_hierarchy(&m, &HierarchyConfig::vc()).unwrap();
        let kinds: Vec<_> = crate::neighborhoods::DEFAULT_RADII
            .iter()
            .map(|&r| NeighborhoodKind::Radius { r })
            .collect();
        h.build_euclidean(&kinds).unwrap();
        for (l, e) in h.euclidean_edges.iter().enumerate() {
            let e = e.as_ref().unwrap();
            assert_eq!(e.edges.len(), h.levels[l].vertex_count());
            assert!((0..e.edges.len()).all(|i| e.edges.degree(i) >= 1));
        }
    }
}
