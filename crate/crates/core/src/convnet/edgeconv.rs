//! One edge convolution and its reverse pass.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::layers::*;
use super::BnPlacement;
use crate::error::{Error, Result};
use crate::neighborhoods::EdgeSet;

/// Borrowed batch-norm parameters and running statistics.
#[derive(Debug, Clone, Copy)]
pub struct BnView<'a> {
    pub gamma: ArrayView1<'a, f64>,
    pub beta: ArrayView1<'a, f64>,
    pub running_mean: ArrayView1<'a, f64>,
    pub running_var: ArrayView1<'a, f64>,
}

/// Borrowed parameters of `phi`. With `relative`, `w1` has `F` rows and
/// `phi` sees `x_j - x_i`; otherwise `w1` has `2F` rows, the first `F`
/// multiplying `x_i` and the rest `x_j - x_i`.
#[derive(Debug, Clone, Copy)]
pub struct BranchParams<'a> {
    pub w1: ArrayView2<'a, f64>,
    pub b1: ArrayView1<'a, f64>,
    pub bn1: BnView<'a>,
    pub w2: ArrayView2<'a, f64>,
    pub b2: ArrayView1<'a, f64>,
    pub bn2: BnView<'a>,
    pub relative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNormState {
    pub fn identity(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    pub fn view(&self) -> BnView<'_> {
        BnView {
            gamma: self.gamma.view(),
            beta: self.beta.view(),
            running_mean: self.running_mean.view(),
            running_var: self.running_var.view(),
        }
    }
}

/// Owned parameters of one edge convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConvParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub bn1: BatchNormState,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub bn2: BatchNormState,
    pub relative: bool,
}

impl EdgeConvParams {
    pub fn view(&self) -> BranchParams<'_> {
        BranchParams {
            w1: self.w1.view(),
            b1: self.b1.view(),
            bn1: self.bn1.view(),
            w2: self.w2.view(),
            b2: self.b2.view(),
            bn2: self.bn2.view(),
            relative: self.relative,
        }
    }
}

/// Activations kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct BranchCache {
    /// Per-edge differences (relative branches only).
    diffs: Option<Array2<f64>>,
    pub bn1: BnCache,
    /// ReLU output of the hidden layer, per edge.
    pub a1: Array2<f64>,
    pub bn2: BnCache,
    /// ReLU output of the second layer: per edge, or per vertex with
    /// [`BnPlacement::PerVertex`].
    pub a2: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct BranchGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub gamma1: Array1<f64>,
    pub beta1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub gamma2: Array1<f64>,
    pub beta2: Array1<f64>,
}

/// Index of the first vertex without neighbors.
pub fn first_empty(edges: &EdgeSet) -> Option<usize> {
    edges.offsets().windows(2).position(|w| w[0] == w[1])
}

fn check_shapes(x: &ArrayView2<f64>, edges: &EdgeSet, p: &BranchParams) -> Result<()> {
    let f = x.ncols();
    let want = if p.relative { f } else { 2 * f };
    if p.w1.nrows() != want {
        return Err(Error::Shape(format!(
            "first layer expects {} inputs, features give {want}",
            p.w1.nrows()
        )));
    }
    if p.w2.nrows() != p.w1.ncols() {
        return Err(Error::Shape("hidden widths of phi do not chain".into()));
    }
    edges.check(x.nrows())?;
    if let Some(i) = first_empty(edges) {
        return Err(Error::Invalid(format!("vertex {i} has an empty neighborhood")));
    }
    Ok(())
}

/// `y_i = mean_j phi([x_i, x_j - x_i])`, or `mean_j phi(x_j - x_i)` for a
/// relative branch.
pub fn edge_conv_forward(
    x: &ArrayView2<f64>,
    edges: &EdgeSet,
    p: &BranchParams,
    placement: BnPlacement,
    eps: f64,
    train: bool,
) -> Result<(Array2<f64>, BranchCache)> {
    check_shapes(x, edges, p)?;
    let f = x.ncols();
    let (mut h1, diffs) = if p.relative {
        let d = gather_differences(x, edges);
        (linear_forward(&d.view(), &p.w1, &p.b1), Some(d))
    } else {
        let wa = p.w1.slice(s![..f, ..]);
        let wb = p.w1.slice(s![f.., ..]);
        let pc = matmul(x, &(&wa - &wb).view());
        let qn = matmul(x, &wb);
        let mut h = gather_pair_sum(&pc, &qn, edges);
        h += &p.b1;
        (h, None)
    };
    let bn = |v: &Array2<f64>, s: &BnView| {
        batch_norm_forward(
            &v.view(),
            &s.gamma,
            &s.beta,
            &s.running_mean,
            &s.running_var,
            eps,
            train,
        )
    };
    let (mut a1, bn1) = bn(&h1, &p.bn1);
    relu_inplace(&mut a1);
    h1 = linear_forward(&a1.view(), &p.w2, &p.b2);
    let (y, a2, bn2) = match placement {
        BnPlacement::PerEdge => {
            let (mut a2, bn2) = bn(&h1, &p.bn2);
            relu_inplace(&mut a2);
            (edge_mean(&a2.view(), edges), a2, bn2)
        }
        BnPlacement::PerVertex => {
            let m = edge_mean(&h1.view(), edges);
            let (mut a2, bn2) = bn(&m, &p.bn2);
            relu_inplace(&mut a2);
            (a2.clone(), a2, bn2)
        }
    };
    Ok((
        y,
        BranchCache {
            diffs,
            bn1,
            a1,
            bn2,
            a2,
        },
    ))
}

/// Reverse pass of [`edge_conv_forward`]; returns the input gradient and
/// the parameter gradients.
pub fn edge_conv_backward(
    x: &ArrayView2<f64>,
    edges: &EdgeSet,
    p: &BranchParams,
    placement: BnPlacement,
    cache: &BranchCache,
    dy: &ArrayView2<f64>,
) -> (Array2<f64>, BranchGrads) {
    let (dh2, gamma2, beta2) = match placement {
        BnPlacement::PerEdge => {
            let mut da2 = edge_mean_backward(dy, edges);
            relu_backward_inplace(&mut da2, &cache.a2);
            batch_norm_backward(&da2.view(), &cache.bn2, &p.bn2.gamma)
        }
        BnPlacement::PerVertex => {
            let mut da2 = dy.to_owned();
            relu_backward_inplace(&mut da2, &cache.a2);
            let (dm, g, b) = batch_norm_backward(&da2.view(), &cache.bn2, &p.bn2.gamma);
            (edge_mean_backward(&dm.view(), edges), g, b)
        }
    };
    let (mut da1, w2, b2) = linear_backward(&cache.a1.view(), &p.w2, &dh2.view());
    relu_backward_inplace(&mut da1, &cache.a1);
    let (dh1, gamma1, beta1) = batch_norm_backward(&da1.view(), &cache.bn1, &p.bn1.gamma);
    let b1 = column_sums(&dh1.view());
    let (dac, dbn) = scatter_centers_neighbors(&dh1, edges);
    let (dx, w1) = match &cache.diffs {
        Some(d) => (
            matmul_nt(&(&dbn - &dac).view(), &p.w1),
            matmul_tn(&d.view(), &dh1.view()),
        ),
        None => {
            let f = x.ncols();
            let wa = p.w1.slice(s![..f, ..]);
            let wb = p.w1.slice(s![f.., ..]);
            let ga = matmul_tn(x, &dac.view());
            let gb = matmul_tn(x, &dbn.view()) - &ga;
            let dx = matmul_nt(&dac.view(), &(&wa - &wb).view()) + matmul_nt(&dbn.view(), &wb);
            let w1 = ndarray::concatenate(Axis(0), &[ga.view(), gb.view()]).expect("equal widths");
            (dx, w1)
        }
    };
    (
        dx,
        BranchGrads {
            w1,
            b1,
            gamma1,
            beta1,
            w2,
            b2,
            gamma2,
            beta2,
        },
    )
}
