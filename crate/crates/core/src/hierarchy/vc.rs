use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::{aggregate_attributes, coarse_edges, coarse_faces, Pooled, PoolingTraceMap};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::neighborhoods::EdgeSet;

/// Vertex clustering on a uniform grid anchored at the bounding-box minimum.
/// Coarse geodesic edges come from the mesh faces.
pub fn vertex_clustering_pool(mesh: &Mesh, cell_size: f64) -> Result<Pooled> {
    vertex_clustering_pool_with_edges(mesh, &mesh.geodesic_edge_set(), cell_size)
}

/// As [`vertex_clustering_pool`], but coarse edges are derived from `edges`
/// (the fine level's geodesic edges, which may include edges of collapsed
/// faces from an earlier step).
pub fn vertex_clustering_pool_with_edges(mesh: &Mesh, edges: &EdgeSet, cell_size: f64) -> Result<Pooled> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
    }
    edges.check(mesh.vertex_count())?;
    let Some((lo, _)) = mesh.bounds() else {
        return Ok(Pooled {
            mesh: mesh.clone(),
            trace: PoolingTraceMap::identity(0),
            geodesic: EdgeSet::empty(0),
        });
    };

    // coarse vertices are numbered by first appearance in fine order
    let mut cells: HashMap<[i64; 3], usize> = HashMap::new();
    let mut assignment = Vec::with_capacity(mesh.vertex_count());
    let mut sums: Vec<Vector3<f64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for p in &mesh.positions {
        let key = [0, 1, 2].map(|k| ((p[k] - lo[k]) / cell_size).floor() as i64);
        let next = cells.len();
        let c = *cells.entry(key).or_insert(next);
        if c == sums.len() {
            sums.push(Vector3::zeros());
            counts.push(0);
        }
        sums[c] += p.coords;
        counts[c] += 1;
        assignment.push(c);
    }
    let n = sums.len();
    let positions = sums
        .iter()
        .zip(&counts)
        .map(|(s, &k)| Point3::from(s / k as f64))
        .collect();
    let faces = coarse_faces(&mesh.faces, &assignment);
    let geodesic = coarse_edges(edges, &assignment, n);
    let trace = PoolingTraceMap::new(assignment, n)?;
    let coarse = aggregate_attributes(mesh, &trace, positions, faces);
    Ok(Pooled {
        mesh: coarse,
        trace,
        geodesic,
    })
}
