use crate::error::{Error, Result};
use crate::neighborhoods::KdTree;

use super::{LabeledPointCloud, Mesh};

/// Copies color and label of the Euclidean-nearest cloud point onto every
/// vertex. Ties go to the lowest point index.
pub fn interpolate_from_point_cloud(mesh: &Mesh, cloud: &LabeledPointCloud) -> Result<Mesh> {
    if cloud.is_empty() {
        return Err(Error::Invalid("cannot interpolate from an empty point cloud".into()));
    }
    let tree = KdTree::build(&cloud.points);
    let nearest: Vec<usize> = mesh
        .positions
        .iter()
        .map(|p| tree.nearest(p).expect("non-empty cloud"))
        .collect();
    Ok(Mesh {
        colors: Some(nearest.iter().map(|&j| cloud.colors[j]).collect()),
        labels: Some(nearest.iter().map(|&j| cloud.labels[j]).collect()),
        ..mesh.clone()
    })
}
