//! Dual geodesic/Euclidean edge-convolution network on mesh hierarchies.
//!
//! An edge convolution maps vertex features `x` to
//! `y_i = mean_{j in N(i)} phi([x_i, x_j - x_i])`, where `phi` is a two-layer
//! MLP (linear, batch norm, ReLU, twice). The first block of the network
//! feeds `phi` only the difference `x_j - x_i`, which makes the network
//! invariant to translating the input positions. A dual block runs one
//! convolution over geodesic edges and one over Euclidean edges and
//! concatenates the results.
//!
//! Everything is computed in `f64` with a hand-written reverse pass.

pub mod checkpoint;
pub mod edgeconv;
pub mod gradcheck;
mod graph;
pub mod layers;
pub mod loss;
mod network;
pub mod optim;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::PoolMode;
use crate::neighborhoods::{NeighborhoodKind, DEFAULT_RADII};

pub use graph::{GraphInput, GraphLevel, ResSampling};
pub use network::{ForwardCache, Grads, Network};
pub use params::{ParamStore, Tensor};

/// Input channels: position, color, normal.
pub const INPUT_WIDTH: usize = 9;
pub const HEAD_HIDDEN: usize = 32;
pub const BLOCKS_PER_LEVEL: usize = 3;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Hidden and output width of one `phi`. Both zero disables the branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchWidths {
    pub hidden: usize,
    pub out: usize,
}

impl BranchWidths {
    pub const NONE: BranchWidths = BranchWidths { hidden: 0, out: 0 };

    pub const fn new(hidden: usize, out: usize) -> Self {
        Self { hidden, out }
    }

    pub fn enabled(&self) -> bool {
        self.out > 0
    }
}

/// Where the second batch norm of `phi` sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnPlacement {
    /// Both batch norms act on per-edge rows, before the neighborhood mean.
    #[default]
    PerEdge,
    /// The second batch norm and ReLU act on the per-vertex mean.
    PerVertex,
}

/// Widths of all blocks of one mesh level, encoder and decoder alike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub geodesic: BranchWidths,
    pub euclidean: BranchWidths,
    /// Euclidean neighborhood of this level; required when the Euclidean
    /// branch is enabled.
    #[serde(default)]
    pub neighborhood: Option<NeighborhoodKind>,
}

impl LevelConfig {
    pub fn out_width(&self) -> usize {
        self.geodesic.out + self.euclidean.out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_width: usize,
    pub classes: usize,
    pub levels: Vec<LevelConfig>,
    #[serde(default = "default_blocks")]
    pub blocks_per_level: usize,
    #[serde(default = "default_head")]
    pub head_hidden: usize,
    /// First block sees only `x_j - x_i`.
    #[serde(default = "yes")]
    pub relative_first: bool,
    #[serde(default)]
    pub bn_placement: BnPlacement,
    #[serde(default)]
    pub pooling: PoolMode,
    #[serde(default = "default_momentum")]
    pub bn_momentum: f64,
    #[serde(default = "default_eps")]
    pub bn_eps: f64,
}

fn default_blocks() -> usize {
    BLOCKS_PER_LEVEL
}
fn default_head() -> usize {
    HEAD_HIDDEN
}
fn yes() -> bool {
    true
}
fn default_momentum() -> f64 {
    BN_MOMENTUM
}
fn default_eps() -> f64 {
    BN_EPS
}

fn radius(l: usize) -> Option<NeighborhoodKind> {
    Some(NeighborhoodKind::Radius {
        r: DEFAULT_RADII[l.min(3)],
    })
}

/// Which edge set a single-branch network convolves over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleBranch {
    Geodesic,
    Euclidean,
}

impl NetworkConfig {
    fn with_levels(classes: usize, levels: Vec<LevelConfig>) -> Self {
        Self {
            input_width: INPUT_WIDTH,
            classes,
            levels,
            blocks_per_level: BLOCKS_PER_LEVEL,
            head_hidden: HEAD_HIDDEN,
            relative_first: true,
            bn_placement: BnPlacement::default(),
            pooling: PoolMode::Mean,
            bn_momentum: BN_MOMENTUM,
            bn_eps: BN_EPS,
        }
    }

    fn uniform_dual(classes: usize, widths: [(BranchWidths, BranchWidths); 4]) -> Self {
        let levels = widths
            .iter()
            .enumerate()
            .map(|(l, &(g, e))| LevelConfig {
                geodesic: g,
                euclidean: e,
                neighborhood: radius(l),
            })
            .collect();
        Self::with_levels(classes, levels)
    }

    /// Four-level ablation network with equal geodesic and Euclidean widths.
    pub fn dcm(classes: usize) -> Self {
        let w = BranchWidths::new(64, 32);
        Self::uniform_dual(classes, [(w, w); 4])
    }

    /// Four-level single-branch ablation network.
    pub fn scm(classes: usize, branch: SingleBranch) -> Self {
        let w = BranchWidths::new(128, 64);
        let levels = (0..4)
            .map(|l| match branch {
                SingleBranch::Geodesic => LevelConfig {
                    geodesic: w,
                    euclidean: BranchWidths::NONE,
                    neighborhood: None,
                },
                SingleBranch::Euclidean => LevelConfig {
                    geodesic: BranchWidths::NONE,
                    euclidean: w,
                    neighborhood: radius(l),
                },
            })
            .collect();
        Self::with_levels(classes, levels)
    }

    /// ScanNet and Matterport3D benchmark network: geodesic-heavy fine
    /// levels, Euclidean-heavy coarse levels.
    pub fn benchmark(classes: usize) -> Self {
        let fine = (BranchWidths::new(96, 48), BranchWidths::new(32, 16));
        let coarse = (BranchWidths::new(48, 24), BranchWidths::new(144, 72));
        Self::uniform_dual(classes, [fine, fine, coarse, coarse])
    }

    pub fn scannet() -> Self {
        Self::benchmark(21)
    }

    pub fn matterport() -> Self {
        Self::benchmark(22)
    }

    pub fn s3dis() -> Self {
        let fine = BranchWidths::new(64, 32);
        let coarse = BranchWidths::new(96, 48);
        Self::uniform_dual(13, [(fine, fine), (fine, fine), (coarse, coarse), (coarse, coarse)])
    }

    /// Small network for CPU experiments. `radii` sets the depth.
    pub fn toy(classes: usize, radii: &[f64], dual: bool, widths: BranchWidths) -> Self {
        let levels = radii
            .iter()
            .map(|&r| LevelConfig {
                geodesic: widths,
                euclidean: if dual { widths } else { BranchWidths::NONE },
                neighborhood: dual.then_some(NeighborhoodKind::Radius { r }),
            })
            .collect();
        let mut c = Self::with_levels(classes, levels);
        c.head_hidden = widths.hidden.max(2);
        c
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Euclidean neighborhoods the hierarchy must provide, per level.
    pub fn euclidean_kinds(&self) -> Option<Vec<NeighborhoodKind>> {
        self.levels.iter().map(|l| l.neighborhood).collect()
    }

    pub fn uses_euclidean(&self) -> bool {
        self.levels.iter().any(|l| l.euclidean.enabled())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.levels.is_empty() {
            return fail("network needs at least one level".into());
        }
        if self.input_width == 0 || self.classes == 0 || self.head_hidden == 0 {
            return fail("input width, class count and head width must be positive".into());
        }
        if self.blocks_per_level == 0 {
            return fail("every level needs at least one block".into());
        }
        if self.pooling != PoolMode::Mean {
            return fail(format!(
                "the network supports mean pooling only, got {:?}",
                self.pooling
            ));
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return fail("batch norm needs eps > 0 and momentum in [0, 1]".into());
        }
        for (l, lv) in self.levels.iter().enumerate() {
            for (name, w) in [("geodesic", lv.geodesic), ("Euclidean", lv.euclidean)] {
                if (w.hidden == 0) != (w.out == 0) {
                    return fail(format!(
                        "level {l}: {name} branch has hidden width {} and output width {}",
                        w.hidden, w.out
                    ));
                }
            }
            if lv.out_width() == 0 {
                return fail(format!("level {l} has no enabled branch"));
            }
            if lv.euclidean.enabled() {
                match lv.neighborhood {
                    None | Some(NeighborhoodKind::Geodesic) => {
                        return fail(format!(
                            "level {l}: the Euclidean branch needs a k-nn or radius neighborhood"
                        ))
                    }
                    Some(NeighborhoodKind::Knn { k }) if k == 0 => {
                        return fail(format!("level {l}: k must be positive"))
                    }
                    Some(NeighborhoodKind::Radius { r }) if !(r > 0.0 && r.is_finite()) => {
                        return fail(format!("level {l}: radius must be positive"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
