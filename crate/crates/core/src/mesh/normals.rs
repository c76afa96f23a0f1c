use nalgebra::Vector3;

use super::Mesh;

/// Area-weighted vertex normals. Each face contributes its unnormalized cross
/// product (twice its area times its unit normal) to its three corners.
/// Vertices without a usable incident face get `(0, 0, 1)`.
pub fn compute_vertex_normals(mesh: &Mesh) -> Mesh {
    let mut acc = vec![Vector3::<f64>::zeros(); mesh.vertex_count()];
    for f in &mesh.faces {
        let a = mesh.positions[f[0]];
        let b = mesh.positions[f[1]];
        let c = mesh.positions[f[2]];
        let n = (b - a).cross(&(c - a));
        for &v in f {
            acc[v] += n;
        }
    }
    let normals = acc
        .into_iter()
        .map(|n| {
            let len = n.norm();
            if len > f64::MIN_POSITIVE && len.is_finite() {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect();
    Mesh {
        normals: Some(normals),
        ..mesh.clone()
    }
}
