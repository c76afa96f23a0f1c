use std::collections::HashMap;

use nalgebra::Point3;

use super::{Label, Mesh, UNLABELED};

/// One pass of midpoint subdivision.
///
/// Every edge of length `>= min_edge_len` receives a vertex at its midpoint
/// and every triangle is re-triangulated according to how many of its edges
/// were split (1 -> 2 triangles, 2 -> 3, 3 -> 4). Midpoint colors and normals
/// are the mean of the endpoints; a midpoint keeps a label only if both
/// endpoints agree, otherwise it is [`UNLABELED`] until labels are transferred.
pub fn midpoint_subdivide(mesh: &Mesh, min_edge_len: f64) -> Mesh {
    assert!(min_edge_len > 0.0, "min_edge_len must be positive");
    let mut out = mesh.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();

    let mut split = |a: usize, b: usize, out: &mut Mesh| -> Option<usize> {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = midpoints.get(&key) {
            return Some(m);
        }
        let pa = mesh.positions[a];
        let pb = mesh.positions[b];
        if (pb - pa).norm() < min_edge_len {
            return None;
        }
        let m = out.positions.len();
        out.positions.push(Point3::from((pa.coords + pb.coords) * 0.5));
        if let (Some(src), Some(dst)) = (&mesh.colors, &mut out.colors) {
            dst.push((src[a] + src[b]) * 0.5);
        }
        if let (Some(src), Some(dst)) = (&mesh.normals, &mut out.normals) {
            let n = src[a] + src[b];
            let len = n.norm();
            dst.push(if len > 1e-12 { n / len } else { src[a] });
        }
        if let (Some(src), Some(dst)) = (&mesh.labels, &mut out.labels) {
            let l: Label = if src[a] == src[b] { src[a] } else { UNLABELED };
            dst.push(l);
        }
        midpoints.insert(key, m);
        Some(m)
    };

    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for f in &mesh.faces {
        let mids = [
            split(f[0], f[1], &mut out),
            split(f[1], f[2], &mut out),
            split(f[2], f[0], &mut out),
        ];
        let count = mids.iter().filter(|m| m.is_some()).count();
        match count {
            0 => faces.push(*f),
            1 => {
                // rotate so the split edge is (a, b)
                let r = mids.iter().position(|m| m.is_some()).unwrap();
                let (a, b, c) = (f[r], f[(r + 1) % 3], f[(r + 2) % 3]);
                let m = mids[r].unwrap();
                faces.push([a, m, c]);
                faces.push([m, b, c]);
            }
            2 => {
                // rotate so the unsplit edge is (c, a)
                let u = mids.iter().position(|m| m.is_none()).unwrap();
                let r = (u + 1) % 3;
                let (a, b, c) = (f[r], f[(r + 1) % 3], f[(r + 2) % 3]);
                let mab = mids[r].unwrap();
                let mbc = mids[(r + 1) % 3].unwrap();
                faces.push([mab, b, mbc]);
                let p = &out.positions;
                let d1 = (p[a] - p[mbc]).norm();
                let d2 = (p[mab] - p[c]).norm();
                if d1 <= d2 {
                    faces.push([a, mab, mbc]);
                    faces.push([a, mbc, c]);
                } else {
                    faces.push([a, mab, c]);
                    faces.push([mab, mbc, c]);
                }
            }
            _ => {
                let (a, b, c) = (f[0], f[1], f[2]);
                let (mab, mbc, mca) = (mids[0].unwrap(), mids[1].unwrap(), mids[2].unwrap());
                faces.push([a, mab, mca]);
                faces.push([mab, b, mbc]);
                faces.push([mca, mbc, c]);
                faces.push([mab, mbc, mca]);
            }
        }
    }
    out.faces = faces;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn triangle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Mesh {
        Mesh::new(vec![Point3::from(a), Point3::from(b), Point3::from(c)], vec![[0, 1, 2]])
    }

    #[test]
    fn unit_triangle_splits_into_four() {
        let h = 3f64.sqrt() / 2.0;
        let m = triangle([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0]);
        let s = midpoint_subdivide(&m, 0.02);
        assert_eq!(s.vertex_count(), 6);
        assert_eq!(s.face_count(), 4);
        assert!(s.validate().is_empty());
    }

    #[test]
    fn short_edges_are_left_alone() {
        let h = 3f64.sqrt() / 2.0 * 0.01;
        let m = triangle([0.0, 0.0, 0.0], [0.01, 0.0, 0.0], [0.005, h, 0.0]);
        assert_eq!(midpoint_subdivide(&m, 0.02), m);
    }

    #[test]
    fn one_long_edge_gives_two_triangles() {
        // legs 1.5 cm, hypotenuse ~2.12 cm; only the hypotenuse reaches 2 cm
        let m = triangle([0.0, 0.0, 0.0], [0.015, 0.0, 0.0], [0.0, 0.015, 0.0]);
        let s = midpoint_subdivide(&m, 0.02);
        assert_eq!(s.vertex_count(), 4);
        assert_eq!(s.face_count(), 2);
        assert!((s.surface_area() - m.surface_area()).abs() < 1e-15);
    }

    #[test]
    fn two_split_edges_give_three_triangles() {
        let m = triangle([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.99, 0.01, 0.0]);
        let s = midpoint_subdivide(&m, 0.5);
        assert_eq!(s.vertex_count(), 5);
        assert_eq!(s.face_count(), 3);
    }

    #[test]
    fn shared_edges_share_midpoints() {
        let mut m = triangle([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        m.positions.push(Point3::new(1.0, 1.0, 0.0));
        m.faces.push([1, 3, 2]);
        let s = midpoint_subdivide(&m, 0.1);
        // 4 original + 5 distinct edges
        assert_eq!(s.vertex_count(), 9);
        assert_eq!(s.face_count(), 8);
        assert!(s.validate().is_empty());
    }

    #[test]
    fn midpoint_features_are_means() {
        let mut m = triangle([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        m.colors = Some(vec![Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0), Vector3::zeros()]);
        m.labels = Some(vec![1, 1, 2]);
        let s = midpoint_subdivide(&m, 0.1);
        let colors = s.colors.unwrap();
        let labels = s.labels.unwrap();
        // midpoint of edge (0,1) is the first new vertex
        assert_eq!(colors[3], Vector3::new(0.5, 0.5, 0.5));
        assert_eq!(labels[3], 1);
        assert_eq!(labels[4], UNLABELED);
    }

    fn coord() -> impl Strategy<Value = f64> {
        -1.0f64..1.0
    }

    proptest! {
        #[test]
        fn area_is_preserved(pts in proptest::collection::vec((coord(), coord(), coord()), 3..12),
                             thr in 0.05f64..1.5) {
            // fan triangulation around the first point
            let positions: Vec<Point3<f64>> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let faces: Vec<[usize; 3]> = (1..positions.len() - 1).map(|i| [0, i, i + 1]).collect();
            let m = Mesh::new(positions, faces);
            let s = midpoint_subdivide(&m, thr);
            let a0 = m.surface_area();
            let a1 = s.surface_area();
            prop_assert!((a0 - a1).abs() <= 1e-9 * a0.max(1e-300));
        }

        #[test]
        fn fully_split_triangles_have_no_short_new_edges(
            pts in proptest::collection::vec((coord(), coord(), coord()), 3..3usize + 1)) {
            let positions: Vec<Point3<f64>> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let m = Mesh::new(positions, vec![[0, 1, 2]]);
            let shortest = m.faces[0].iter().enumerate()
                .map(|(k, &a)| (m.positions[a] - m.positions[m.faces[0][(k + 1) % 3]]).norm())
                .fold(f64::INFINITY, f64::min);
            prop_assume!(shortest > 1e-6);
            let s = midpoint_subdivide(&m, shortest);
            for f in &s.faces {
                for k in 0..3 {
                    let len = (s.positions[f[k]] - s.positions[f[(k + 1) % 3]]).norm();
                    prop_assert!(len >= 0.5 * shortest * (1.0 - 1e-12));
                }
            }
        }
    }
}
