//! Quadric error metric simplification with non-adjacent pair contraction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3, Vector4};

use super::{aggregate_attributes, coarse_edges, coarse_faces, Pooled, PoolingTraceMap};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::neighborhoods::{radius_graph, EdgeSet};

/// Relative determinant threshold below which the 3x3 system counts as singular.
const SINGULAR_TOLERANCE: f64 = 1e-10;

/// Accumulated plane quadric `sum p p^T`, `p = (a, b, c, d)` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadric(pub Matrix4<f64>);

impl Default for Quadric {
    fn default() -> Self {
        Quadric(Matrix4::zeros())
    }
}

impl std::ops::Add for Quadric {
    type Output = Quadric;
    fn add(self, o: Quadric) -> Quadric {
        Quadric(self.0 + o.0)
    }
}

impl std::ops::AddAssign for Quadric {
    fn add_assign(&mut self, o: Quadric) {
        self.0 += o.0;
    }
}

impl Quadric {
    /// Plane through the triangle; `None` for a zero-area triangle.
    pub fn from_triangle(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Option<Quadric> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if !(len > 0.0) || !len.is_finite() {
            return None;
        }
        let n = n / len;
        let p = Vector4::new(n.x, n.y, n.z, -n.dot(&a.coords));
        Some(Quadric(p * p.transpose()))
    }

    /// Squared point-to-plane error `v^T Q v` in homogeneous coordinates.
    pub fn error(&self, v: &Point3<f64>) -> f64 {
        let h = v.to_homogeneous();
        h.dot(&(self.0 * h))
    }

    /// The minimizer of the quadric when the 3x3 system is regular.
    pub fn optimal_point(&self) -> Option<Point3<f64>> {
        let a: Matrix3<f64> = self.0.fixed_view::<3, 3>(0, 0).into_owned();
        let b: Vector3<f64> = -self.0.fixed_view::<3, 1>(0, 3).into_owned();
        let scale = a.norm();
        if !(scale > 0.0) || a.determinant().abs() <= SINGULAR_TOLERANCE * scale.powi(3) {
            return None;
        }
        a.lu().solve(&b).map(Point3::from)
    }

    /// Placement and cost for contracting `v1` and `v2`: the optimum if it
    /// exists, and the best of midpoint, `v1`, `v2` otherwise (or if one of
    /// those is no worse).
    pub fn contraction(&self, v1: &Point3<f64>, v2: &Point3<f64>) -> (Point3<f64>, f64) {
        let mid = Point3::from((v1.coords + v2.coords) * 0.5);
        let mut best = (mid, self.error(&mid));
        if let Some(p) = self.optimal_point() {
            let e = self.error(&p);
            if e <= best.1 {
                best = (p, e);
            }
        }
        for v in [v1, v2] {
            let e = self.error(v);
            if e < best.1 {
                best = (*v, e);
            }
        }
        best
    }
}

/// Outcome details of one QEM run.
#[derive(Debug, Clone, Default)]
pub struct QemReport {
    pub target: usize,
    pub reached_target: bool,
    /// Cost of every performed contraction, in order.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    cost: f64,
    a: usize,
    b: usize,
    va: u32,
    vb: u32,
    target: Point3<f64>,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    // reversed: BinaryHeap pops the cheapest pair first
    fn cmp(&self, o: &Self) -> Ordering {
        o.cost
            .total_cmp(&self.cost)
            .then(o.a.cmp(&self.a))
            .then(o.b.cmp(&self.b))
    }
}

/// QEM on `mesh` using its face adjacency as the mesh edges.
pub fn qem_pool(mesh: &Mesh, target_ratio: f64, pair_distance_threshold: f64) -> Result<(Pooled, QemReport)> {
    qem_pool_with_edges(mesh, &mesh.geodesic_edge_set(), target_ratio, pair_distance_threshold)
}

/// Contracts vertex pairs, cheapest first, until `ceil(target_ratio * |V|)`
/// vertices remain. Candidate pairs are the `edges` plus all vertex pairs
/// closer than `pair_distance_threshold`. If candidates run out first, the
/// partial result is returned with `reached_target == false`.
pub fn qem_pool_with_edges(
    mesh: &Mesh,
    edges: &EdgeSet,
    target_ratio: f64,
    pair_distance_threshold: f64,
) -> Result<(Pooled, QemReport)> {
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(Error::Config(format!(
            "QEM ratio must be in (0, 1), got {target_ratio}"
        )));
    }
    let n = mesh.vertex_count();
    edges.check(n)?;
    let target = (target_ratio * n as f64).ceil() as usize;

    let mut quadric = vec![Quadric::default(); n];
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| mesh.positions[i]);
        if let Some(q) = Quadric::from_triangle(&a, &b, &c) {
            for &i in f {
                quadric[i] += q;
            }
        }
    }

    let mut adj: Vec<Vec<usize>> = edges.to_lists();
    if pair_distance_threshold > 0.0 && n > 0 {
        let near = radius_graph(&mesh.positions, pair_distance_threshold)?;
        for (i, j) in near.iter() {
            if i != j {
                adj[i].push(j);
            }
        }
    }
    for (i, l) in adj.iter_mut().enumerate() {
        l.retain(|&j| j != i);
        l.sort_unstable();
        l.dedup();
    }
    // candidate pairs must be symmetric for the merge bookkeeping below
    for i in 0..n {
        for k in 0..adj[i].len() {
            let j = adj[i][k];
            if let Err(pos) = adj[j].binary_search(&i) {
                adj[j].insert(pos, i);
            }
        }
    }

    let mut pos = mesh.positions.clone();
    let mut version = vec![0u32; n];
    let mut alive = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Entry>, a: usize, b: usize, pos: &[Point3<f64>], q: &[Quadric], ver: &[u32]| {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let (target, cost) = (q[a] + q[b]).contraction(&pos[a], &pos[b]);
        heap.push(Entry {
            cost,
            a,
            b,
            va: ver[a],
            vb: ver[b],
            target,
        });
    };
    for i in 0..n {
        for &j in &adj[i] {
            if i < j {
                push(&mut heap, i, j, &pos, &quadric, &version);
            }
        }
    }

    let mut report = QemReport {
        target,
        ..Default::default()
    };
    let mut count = n;
    while count > target {
        let Some(e) = heap.pop() else { break };
        if !alive[e.a] || !alive[e.b] || version[e.a] != e.va || version[e.b] != e.vb {
            continue;
        }
        let (a, b) = (e.a, e.b);
        report.costs.push(e.cost);
        pos[a] = e.target;
        quadric[a] = quadric[a] + quadric[b];
        alive[b] = false;
        version[a] += 1;
        version[b] += 1;
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);

        let nb = std::mem::take(&mut adj[b]);
        for &k in &nb {
            if k == a {
                continue;
            }
            let l = &mut adj[k];
            if let Ok(p) = l.binary_search(&b) {
                l.remove(p);
            }
            if let Err(p) = l.binary_search(&a) {
                l.insert(p, a);
            }
        }
        let mut merged: Vec<usize> = adj[a]
            .iter()
            .chain(&nb)
            .copied()
            .filter(|&k| k != a && k != b)
            .collect();
        merged.sort_unstable();
        merged.dedup();
        adj[a] = merged;
        for k in 0..adj[a].len() {
            let j = adj[a][k];
            push(&mut heap, a, j, &pos, &quadric, &version);
        }
        count -= 1;
    }
    report.reached_target = count <= target;

    let mut compact = vec![usize::MAX; n];
    let mut positions = Vec::with_capacity(count);
    for i in 0..n {
        if alive[i] {
            compact[i] = positions.len();
            positions.push(pos[i]);
        }
    }
    let mut assignment = vec![0; n];
    for i in 0..n {
        if alive[i] {
            for &v in &members[i] {
                assignment[v] = compact[i];
            }
        }
    }
    let faces = coarse_faces(&mesh.faces, &assignment);
    let geodesic = coarse_edges(edges, &assignment, positions.len());
    let trace = PoolingTraceMap::new(assignment, positions.len())?;
    let coarse = aggregate_attributes(mesh, &trace, positions, faces);
    Ok((
        Pooled {
            mesh: coarse,
            trace,
            geodesic,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{grid_mesh, random_mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn planar_mesh_has_zero_cost_and_stays_planar() {
        let mut m = grid_mesh(12, 12, 0.05);
        // tilt the plane: z = 0.3 x - 0.2 y + 1
        for p in &mut m.positions {
            p.z = 0.3 * p.x - 0.2 * p.y + 1.0;
        }
        let (p, report) = qem_pool(&m, 0.3, 0.0).unwrap();
        assert!(report.reached_target);
        assert!(report.costs.iter().all(|&c| c.abs() < 1e-12));
        for q in &p.mesh.positions {
            assert!((q.z - (0.3 * q.x - 0.2 * q.y + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn ratio_is_exact() {
        let m = random_mesh(1000, 2);
        assert_eq!(m.vertex_count(), 1024);
        let (p, r) = qem_pool(&m, 0.3, 0.04).unwrap();
        assert!(r.reached_target);
        assert_eq!(p.mesh.vertex_count(), (0.3f64 * 1024.0).ceil() as usize);
        assert!(p.mesh.validate().is_empty());
        assert!(p.geodesic.is_symmetric());
    }

    #[test]
    fn thousand_vertices_to_three_hundred() {
        // 40 x 25 grid
        let m = grid_mesh(40, 25, 0.02);
        let (p, _) = qem_pool(&m, 0.3, 0.04).unwrap();
        assert_eq!(p.mesh.vertex_count(), 300);
    }

    #[test]
    fn isolated_vertices_report_unreached_target() {
        let m = Mesh::new(vec![Point3::origin(), Point3::new(10.0, 0.0, 0.0)], vec![]);
        let (p, r) = qem_pool(&m, 0.5, 0.04).unwrap();
        assert!(!r.reached_target);
        assert_eq!(p.mesh.vertex_count(), 2);
    }

    #[test]
    fn non_adjacent_pairs_contract() {
        let m = Mesh::new(vec![Point3::origin(), Point3::new(0.01, 0.0, 0.0)], vec![]);
        let (p, r) = qem_pool(&m, 0.5, 0.04).unwrap();
        assert!(r.reached_target);
        assert_eq!(p.mesh.vertex_count(), 1);
        assert_eq!(p.trace.assignment(), &[0, 0]);
    }

    #[test]
    fn costs_are_monotone_on_curved_meshes() {
        for seed in 0..5 {
            let m = random_mesh(300, seed);
            let (_, r) = qem_pool(&m, 0.3, 0.0).unwrap();
            for w in r.costs.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "{} then {}", w[0], w[1]);
            }
        }
    }

    /// Minimum of the quadric by successively refined grid search.
    fn grid_min(q: &Quadric, lo: Point3<f64>, hi: Point3<f64>) -> f64 {
        let (mut lo, mut hi) = (lo, hi);
        let steps = 20;
        let mut best = f64::INFINITY;
        loop {
            let h = (hi - lo) / steps as f64;
            let mut arg = lo;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let p = lo + Vector3::new(h.x * i as f64, h.y * j as f64, h.z * k as f64);
                        let e = q.error(&p);
                        if e < best {
                            best = e;
                            arg = p;
                        }
                    }
                }
            }
            if h.max() <= 1e-3 {
                return best;
            }
            lo = arg - h * 2.0;
            hi = arg + h * 2.0;
        }
    }

    #[test]
    fn regular_tetrahedron_matches_grid_search() {
        let s = 1.0 / 2f64.sqrt();
        let v = [
            Point3::new(1.0, 0.0, -s) * 0.5,
            Point3::new(-1.0, 0.0, -s) * 0.5,
            Point3::new(0.0, 1.0, s) * 0.5,
            Point3::new(0.0, -1.0, s) * 0.5,
        ];
        assert!(((v[0] - v[1]).norm() - 1.0).abs() < 1e-12);
        let faces = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        let mut q = [Quadric::default(); 4];
        for f in faces {
            let t = Quadric::from_triangle(&v[f[0]], &v[f[1]], &v[f[2]]).unwrap();
            for i in f {
                q[i] += t;
            }
        }
        let (_, cost) = (q[0] + q[1]).contraction(&v[0], &v[1]);
        let g = grid_min(
            &(q[0] + q[1]),
            Point3::new(-1.0, -1.0, -1.0),
            Point3::new(1.0, 1.0, 1.0),
        );
        assert!((cost - g).abs() < 1e-3, "{cost} vs {g}");
        assert!(cost <= g + 1e-12);
    }

    #[test]
    fn random_tetrahedra_match_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let v: Vec<Point3<f64>> = (0..4)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let faces = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
            let mut q = [Quadric::default(); 4];
            for f in faces {
                if let Some(t) = Quadric::from_triangle(&v[f[0]], &v[f[1]], &v[f[2]]) {
                    for i in f {
                        q[i] += t;
                    }
                }
            }
            let (_, cost) = (q[0] + q[1]).contraction(&v[0], &v[1]);
            let g = grid_min(
                &(q[0] + q[1]),
                Point3::new(-3.0, -3.0, -3.0),
                Point3::new(3.0, 3.0, 3.0),
            );
            assert!((cost - g).abs() < 1e-3, "{cost} vs {g}");
        }
    }

    #[test]
    fn singular_quadric_falls_back() {
        // two triangles folded along the edge v0-v1: the minimizers form a line
        let v = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.5, 1.0, 0.0),
            Point3::new(0.5, 0.0, 1.0),
        ];
        let q =
            Quadric::from_triangle(&v[0], &v[1], &v[2]).unwrap() + Quadric::from_triangle(&v[0], &v[3], &v[1]).unwrap();
        assert!(q.optimal_point().is_none());
        let (p, cost) = q.contraction(&v[0], &v[1]);
        assert_eq!(p, Point3::new(0.5, 0.0, 0.0));
        assert!(cost.abs() < 1e-15);
    }
}
