use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{aggregate_attributes, Pooled, PoolingTraceMap};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::neighborhoods::{kdtree::dist2, EdgeSet, KdTree};

/// Selection order of farthest point sampling from a seeded start vertex.
/// Ties in the farthest distance go to the lowest index.
pub(crate) fn fps_order(points: &[nalgebra::Point3<f64>], count: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = rng.gen_range(0..n);
    let mut order = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; n];
    let mut chosen = vec![false; n];
    for _ in 0..count {
        order.push(current);
        chosen[current] = true;
        let p = points[current];
        let mut far = (f64::NEG_INFINITY, 0);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(dist2(&p, &points[i]));
            // duplicates of selected points still beat selected points
            if !chosen[i] && *d > far.0 {
                far = (*d, i);
            }
        }
        current = far.1;
    }
    order
}

/// Farthest point sampling down to `target_count` vertices. Coarse vertices
/// keep the positions of the selected vertices (numbered in ascending fine
/// index order); every fine vertex joins its nearest selected vertex. The
/// coarse level has no geodesic edges.
pub fn fps_pool(mesh: &Mesh, target_count: usize, seed: u64) -> Result<Pooled> {
    let n = mesh.vertex_count();
    if target_count == 0 || target_count > n {
        return Err(Error::Config(format!(
            "FPS target {target_count} out of range for {n} vertices"
        )));
    }
    let mut selected = fps_order(&mesh.positions, target_count, seed);
    selected.sort_unstable();
    let sel_pos: Vec<_> = selected.iter().map(|&i| mesh.positions[i]).collect();
    let tree = KdTree::build(&sel_pos);
    let mut assignment: Vec<usize> = mesh
        .positions
        .iter()
        .map(|p| tree.nearest(p).expect("non-empty selection"))
        .collect();
    // coincident points must not steal a selected vertex from itself
    for (c, &i) in selected.iter().enumerate() {
        assignment[i] = c;
    }
    let trace = PoolingTraceMap::new(assignment, target_count)?;
    let coarse = aggregate_attributes(mesh, &trace, sel_pos, Vec::new());
    Ok(Pooled {
        mesh: coarse,
        trace,
        geodesic: EdgeSet::empty(target_count),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use rand::Rng;

    fn cloud(n: usize, seed: u64) -> Mesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mesh::new(
            (0..n).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect(),
            vec![],
        )
    }

    #[test]
    fn full_target_is_identity() {
        let m = cloud(40, 1);
        let p = fps_pool(&m, 40, 7).unwrap();
        assert!(p.trace.is_identity());
        assert_eq!(p.mesh.positions, m.positions);
    }

    #[test]
    fn collinear_picks_extremes() {
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(10.0, 0.0, 0.0),
            ],
            vec![],
        );
        // find a seed that starts at x = 0
        let seed = (0..100).find(|&s| fps_order(&m.positions, 1, s)[0] == 0).unwrap();
        let p = fps_pool(&m, 2, seed).unwrap();
        assert_eq!(p.mesh.positions, vec![m.positions[0], m.positions[2]]);
        assert_eq!(p.trace.assignment(), &[0, 0, 1]);
    }

    #[test]
    fn assignment_is_nearest_selected() {
        let m = cloud(500, 4);
        let p = fps_pool(&m, 50, 3).unwrap();
        for (i, &c) in p.trace.assignment().iter().enumerate() {
            let best = (0..50)
                .min_by(|&a, &b| {
                    dist2(&m.positions[i], &p.mesh.positions[a])
                        .total_cmp(&dist2(&m.positions[i], &p.mesh.positions[b]))
                })
                .unwrap();
            assert_eq!(c, best);
        }
        assert_eq!(p.geodesic.num_edges(), 0);
    }

    #[test]
    fn min_spacing_shrinks_with_count() {
        let m = cloud(300, 5);
        let spacing = |k: usize| {
            let s = fps_order(&m.positions, k, 11);
            let mut best = f64::INFINITY;
            for a in 0..s.len() {
                for b in a + 1..s.len() {
                    best = best.min(dist2(&m.positions[s[a]], &m.positions[s[b]]));
                }
            }
            best
        };
        let mut prev = f64::INFINITY;
        for k in [2, 5, 10, 40, 100] {
            let s = spacing(k);
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn out_of_range_target() {
        let m = cloud(5, 1);
        assert!(fps_pool(&m, 0, 0).is_err());
        assert!(fps_pool(&m, 6, 0).is_err());
    }
}
