//! Training and evaluation around the network: cropping, augmentation,
//! feature normalization, the epoch loop, voting and metrics.

mod dataset;
pub mod io;
mod metrics;
pub mod toy;
mod train;

use nalgebra::{Point3, Rotation3, Vector3};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::convnet::INPUT_WIDTH;
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::mesh::{Mesh, UNLABELED};
use crate::FeatureMatrix;

pub use dataset::{load_dataset, DatasetManifest, SceneEntry, Split};
pub use metrics::{evaluate, majority_vote, vertex_accuracy, EvalResult};
pub use train::{infer_full_scene, predict, train_epoch, Inference, Sample, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropConfig {
    /// Side of the square xy window, meters.
    pub extent: f64,
    pub stride: f64,
    /// Crops with a larger unlabeled fraction are dropped from training.
    pub reject_threshold: f64,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            extent: 3.0,
            stride: 1.5,
            reject_threshold: 0.8,
        }
    }
}

impl CropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) || !(self.stride > 0.0 && self.stride.is_finite()) {
            return Err(Error::Config("crop extent and stride must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.reject_threshold) {
            return Err(Error::Config("rejection threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One crop: the sub-mesh, its window origin and the scene index of every
/// crop vertex.
#[derive(Debug, Clone)]
pub struct Crop {
    pub origin: [f64; 2],
    pub mesh: Mesh,
    pub source: Vec<usize>,
}

/// Window starts `min + k * stride` along one axis. Window `k > 0` exists
/// only if window `k - 1` ends at or before `max`.
fn window_starts(min: f64, max: f64, extent: f64, stride: f64) -> Vec<f64> {
    let mut starts = vec![min];
    let mut k = 1usize;
    while min + (k - 1) as f64 * stride + extent <= max {
        starts.push(min + k as f64 * stride);
        k += 1;
    }
    starts
}

/// Sweeps a square window over the xy bounding box. Windows are closed, so
/// a vertex on a shared border lands in both crops. Empty crops are skipped.
pub fn crop_scene(mesh: &Mesh, config: &CropConfig) -> Result<Vec<Crop>> {
    config.validate()?;
    let Some((lo, hi)) = mesh.bounds() else {
        return Ok(Vec::new());
    };
    let xs = window_starts(lo.x, hi.x, config.extent, config.stride);
    let ys = window_starts(lo.y, hi.y, config.extent, config.stride);
    let mut crops = Vec::new();
    for &x0 in &xs {
        for &y0 in &ys {
            let (x1, y1) = (x0 + config.extent, y0 + config.extent);
            let keep: Vec<bool> = mesh
                .positions
                .iter()
                .map(|p| p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1)
                .collect();
            if !keep.contains(&true) {
                continue;
            }
            let (sub, source) = mesh.induced_submesh(&keep);
            crops.push(Crop {
                origin: [x0, y0],
                mesh: sub,
                source,
            });
        }
    }
    Ok(crops)
}

/// Fraction of unlabeled vertices; a mesh without labels counts as fully
/// unlabeled.
pub fn unlabeled_fraction(mesh: &Mesh) -> f64 {
    match &mesh.labels {
        Some(l) if !l.is_empty() => l.iter().filter(|&&x| x == UNLABELED).count() as f64 / l.len() as f64,
        _ => 1.0,
    }
}

/// True when the crop should be dropped from training.
pub fn reject_crop(crop: &Mesh, threshold: f64) -> bool {
    unlabeled_fraction(crop) > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineRanges {
    /// Rotation about z is drawn from `[0, max_angle)`.
    pub max_angle: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    /// Per-axis translation in `[-jitter, jitter]`, meters.
    pub jitter: f64,
}

impl Default for AffineRanges {
    fn default() -> Self {
        Self {
            max_angle: std::f64::consts::TAU,
            min_scale: 0.9,
            max_scale: 1.1,
            jitter: 0.1,
        }
    }
}

/// `p -> R_z(angle) * (scale * p) + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub angle: f64,
    pub scale: f64,
    pub translation: Vector3<f64>,
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            angle: 0.0,
            scale: 1.0,
            translation: Vector3::zeros(),
        }
    }

    pub fn random(ranges: &AffineRanges, rng: &mut impl Rng) -> Self {
        let angle = if ranges.max_angle > 0.0 {
            rng.gen_range(0.0..ranges.max_angle)
        } else {
            0.0
        };
        let scale = if ranges.max_scale > ranges.min_scale {
            rng.gen_range(ranges.min_scale..=ranges.max_scale)
        } else {
            ranges.min_scale
        };
        let mut t = || {
            if ranges.jitter > 0.0 {
                rng.gen_range(-ranges.jitter..=ranges.jitter)
            } else {
                0.0
            }
        };
        let translation = Vector3::new(t(), t(), t());
        Self {
            angle,
            scale,
            translation,
        }
    }

    fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.angle)
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation() * Point3::from(p.coords * self.scale) + self.translation
    }

    pub fn apply_mesh(&self, mesh: &Mesh) -> Mesh {
        if *self == Self::identity() {
            return mesh.clone();
        }
        let r = self.rotation();
        let mut out = mesh.clone();
        for p in &mut out.positions {
            *p = r * Point3::from(p.coords * self.scale) + self.translation;
        }
        if let Some(ns) = &mut out.normals {
            for n in ns {
                let v = r * *n;
                let len = v.norm();
                *n = if len > 0.0 { v / len } else { Vector3::z() };
            }
        }
        out
    }

    /// Transforms the positions of every level. Cached Euclidean edges are
    /// kept as they are.
    pub fn apply_hierarchy(&self, h: &mut Hierarchy) {
        let r = self.rotation();
        let (s, t) = (self.scale, self.translation);
        h.transform_positions(|p| r * Point3::from(p.coords * s) + t, |n| r * n);
    }
}

/// Draws an affine map with the default ranges and applies it.
pub fn random_affine(mesh: &Mesh, rng: &mut impl Rng) -> Mesh {
    Affine::random(&AffineRanges::default(), rng).apply_mesh(mesh)
}

/// Rows `[position, color, normal]`. Positions are min-max scaled per axis
/// to `[0, 1]`; an axis with no extent maps to 0.
pub fn normalize_features(mesh: &Mesh) -> Result<FeatureMatrix> {
    let colors = mesh
        .colors
        .as_ref()
        .ok_or_else(|| Error::Invalid("features need vertex colors".into()))?;
    let normals = mesh
        .normals
        .as_ref()
        .ok_or_else(|| Error::Invalid("features need vertex normals".into()))?;
    let n = mesh.vertex_count();
    let mut f = Array2::zeros((n, INPUT_WIDTH));
    let Some((lo, hi)) = mesh.bounds() else {
        return Ok(f);
    };
    for (i, p) in mesh.positions.iter().enumerate() {
        for a in 0..3 {
            let span = hi[a] - lo[a];
            f[[i, a]] = if span > 0.0 { (p[a] - lo[a]) / span } else { 0.0 };
            f[[i, 3 + a]] = colors[i][a];
            f[[i, 6 + a]] = normals[i][a];
        }
    }
    Ok(f)
}
