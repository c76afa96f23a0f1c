//! Dense building blocks with hand-written reverse passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::neighborhoods::EdgeSet;

/// `a * b` for row-major operands. The skinny shapes used here are faster
/// with a plain row loop than through the generic product.
pub fn matmul(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    assert_eq!(k, b.nrows(), "inner dimensions differ");
    let (a, b) = (a.as_standard_layout(), b.as_standard_layout());
    let (av, bv) = (
        a.as_slice().expect("standard layout"),
        b.as_slice().expect("standard layout"),
    );
    let mut out = Array2::zeros((m, n));
    let o = out.as_slice_mut().expect("fresh array");
    for i in 0..m {
        let row = &mut o[i * n..(i + 1) * n];
        for (p, &x) in av[i * k..(i + 1) * k].iter().enumerate() {
            if x != 0.0 {
                for (r, &w) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *r += x * w;
                }
            }
        }
    }
    out
}

/// `a^T * b`.
pub fn matmul_tn(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    assert_eq!(m, b.nrows(), "row counts differ");
    let (a, b) = (a.as_standard_layout(), b.as_standard_layout());
    let (av, bv) = (
        a.as_slice().expect("standard layout"),
        b.as_slice().expect("standard layout"),
    );
    let mut out = Array2::zeros((k, n));
    let o = out.as_slice_mut().expect("fresh array");
    for i in 0..m {
        let brow = &bv[i * n..(i + 1) * n];
        for (p, &x) in av[i * k..(i + 1) * k].iter().enumerate() {
            if x != 0.0 {
                for (r, &y) in o[p * n..(p + 1) * n].iter_mut().zip(brow) {
                    *r += x * y;
                }
            }
        }
    }
    out
}

/// `a * b^T`.
pub fn matmul_nt(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (m, k, n) = (a.nrows(), a.ncols(), b.nrows());
    assert_eq!(k, b.ncols(), "inner dimensions differ");
    let (a, b) = (a.as_standard_layout(), b.as_standard_layout());
    let (av, bv) = (
        a.as_slice().expect("standard layout"),
        b.as_slice().expect("standard layout"),
    );
    let mut out = Array2::zeros((m, n));
    let o = out.as_slice_mut().expect("fresh array");
    for i in 0..m {
        let arow = &av[i * k..(i + 1) * k];
        for (j, r) in o[i * n..(i + 1) * n].iter_mut().enumerate() {
            *r = arow.iter().zip(&bv[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

pub fn column_sums(x: &ArrayView2<f64>) -> Array1<f64> {
    let n = x.ncols();
    let x = x.as_standard_layout();
    let mut s = Array1::zeros(n);
    let sv = s.as_slice_mut().expect("fresh array");
    for row in x.as_slice().expect("standard layout").chunks_exact(n.max(1)) {
        for (a, b) in sv.iter_mut().zip(row) {
            *a += b;
        }
    }
    s
}

pub fn linear_forward(x: &ArrayView2<f64>, w: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array2<f64> {
    let mut y = matmul(x, w);
    let n = y.ncols().max(1);
    let b = b.to_vec();
    for row in rows_mut(&mut y).chunks_exact_mut(n) {
        for (v, c) in row.iter_mut().zip(&b) {
            *v += c;
        }
    }
    y
}

/// Returns `(dx, dw, db)`.
pub fn linear_backward(
    x: &ArrayView2<f64>,
    w: &ArrayView2<f64>,
    dy: &ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    (matmul_nt(dy, w), matmul_tn(x, dy), column_sums(dy))
}

pub fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `dy` where the ReLU output was not positive.
pub fn relu_backward_inplace(dy: &mut Array2<f64>, out: &Array2<f64>) {
    Zip::from(dy).and(out).for_each(|d, &o| {
        if o <= 0.0 {
            *d = 0.0
        }
    });
}

/// Saved state of one batch-norm application.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub train: bool,
    /// Batch mean and biased variance (train mode only).
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

fn slice_of<'a>(a: &'a ndarray::CowArray<'a, f64, ndarray::Ix2>) -> &'a [f64] {
    a.as_slice().expect("standard layout")
}

/// Train mode normalizes with the biased batch variance; eval mode with the
/// running statistics.
pub fn batch_norm_forward(
    x: &ArrayView2<f64>,
    gamma: &ArrayView1<f64>,
    beta: &ArrayView1<f64>,
    running_mean: &ArrayView1<f64>,
    running_var: &ArrayView1<f64>,
    eps: f64,
    train: bool,
) -> (Array2<f64>, BnCache) {
    let n = x.ncols().max(1);
    let xc = x.as_standard_layout();
    let xs = slice_of(&xc);
    let (mean, var) = if train && x.nrows() > 0 {
        let rows = x.nrows() as f64;
        let mean = column_sums(x) / rows;
        let mut var = Array1::<f64>::zeros(x.ncols());
        for row in xs.chunks_exact(n) {
            for ((v, &a), &m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (a - m) * (a - m);
            }
        }
        (mean, var / rows)
    } else {
        (running_mean.to_owned(), running_var.to_owned())
    };
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let mut xhat = Array2::zeros(x.raw_dim());
    let mut y = Array2::zeros(x.raw_dim());
    let (g, b) = (gamma.to_vec(), beta.to_vec());
    for ((row, hr), yr) in xs
        .chunks_exact(n)
        .zip(rows_mut(&mut xhat).chunks_exact_mut(n))
        .zip(rows_mut(&mut y).chunks_exact_mut(n))
    {
        for k in 0..row.len() {
            let h = (row[k] - mean[k]) * inv_std[k];
            hr[k] = h;
            yr[k] = h * g[k] + b[k];
        }
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            train,
            batch_mean: mean,
            batch_var: var,
        },
    )
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward(
    dy: &ArrayView2<f64>,
    cache: &BnCache,
    gamma: &ArrayView1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let n = dy.ncols().max(1);
    let rows = dy.nrows().max(1) as f64;
    let dc = dy.as_standard_layout();
    let ds = slice_of(&dc);
    let hs = cache.xhat.as_slice().expect("fresh array");
    let mut dbeta = Array1::<f64>::zeros(dy.ncols());
    let mut dgamma = Array1::<f64>::zeros(dy.ncols());
    for (dr, hr) in ds.chunks_exact(n).zip(hs.chunks_exact(n)) {
        for k in 0..dr.len() {
            dbeta[k] += dr[k];
            dgamma[k] += dr[k] * hr[k];
        }
    }
    let g = gamma.to_vec();
    let inv = &cache.inv_std;
    let (shift, slope): (Vec<f64>, Vec<f64>) = if cache.train {
        (0..g.len())
            .map(|k| (g[k] * dbeta[k] / rows, g[k] * dgamma[k] / rows))
            .unzip()
    } else {
        (vec![0.0; g.len()], vec![0.0; g.len()])
    };
    let mut dx = Array2::zeros(dy.raw_dim());
    for ((dr, hr), out) in ds
        .chunks_exact(n)
        .zip(hs.chunks_exact(n))
        .zip(rows_mut(&mut dx).chunks_exact_mut(n))
    {
        for k in 0..dr.len() {
            out[k] = (g[k] * dr[k] - shift[k] - hr[k] * slope[k]) * inv[k];
        }
    }
    (dx, dgamma, dbeta)
}

fn rows_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("fresh arrays are contiguous")
}

/// Per-edge rows `x[j] - x[i]` in edge storage order.
pub fn gather_differences(x: &ArrayView2<f64>, edges: &EdgeSet) -> Array2<f64> {
    let f = x.ncols();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut d = Array2::zeros((edges.num_edges(), f));
    let out = rows_mut(&mut d);
    for (e, (i, j)) in edges.iter().enumerate() {
        let (xi, xj) = (&xs[i * f..(i + 1) * f], &xs[j * f..(j + 1) * f]);
        for ((o, a), b) in out[e * f..(e + 1) * f].iter_mut().zip(xj).zip(xi) {
            *o = a - b;
        }
    }
    d
}

/// `h[e] = p[center(e)] + q[neighbor(e)]` for every edge.
pub fn gather_pair_sum(p: &Array2<f64>, q: &Array2<f64>, edges: &EdgeSet) -> Array2<f64> {
    let f = p.ncols();
    let (p, q) = (p.as_standard_layout(), q.as_standard_layout());
    let (ps, qs) = (
        p.as_slice().expect("standard layout"),
        q.as_slice().expect("standard layout"),
    );
    let mut h = Array2::zeros((edges.num_edges(), f));
    let out = rows_mut(&mut h);
    for (e, (i, j)) in edges.iter().enumerate() {
        let (pi, qj) = (&ps[i * f..(i + 1) * f], &qs[j * f..(j + 1) * f]);
        for ((o, a), b) in out[e * f..(e + 1) * f].iter_mut().zip(pi).zip(qj) {
            *o = a + b;
        }
    }
    h
}

/// Mean of per-edge rows over each center's edges.
pub fn edge_mean(values: &ArrayView2<f64>, edges: &EdgeSet) -> Array2<f64> {
    let f = values.ncols();
    let v = values.as_standard_layout();
    let vs = v.as_slice().expect("standard layout");
    let mut y = Array2::zeros((edges.len(), f));
    let out = rows_mut(&mut y);
    let off = edges.offsets();
    for i in 0..edges.len() {
        let (s, t) = (off[i], off[i + 1]);
        if t == s {
            continue;
        }
        let row = &mut out[i * f..(i + 1) * f];
        for e in s..t {
            for (o, a) in row.iter_mut().zip(&vs[e * f..(e + 1) * f]) {
                *o += a;
            }
        }
        let k = (t - s) as f64;
        row.iter_mut().for_each(|o| *o /= k);
    }
    y
}

/// Adjoint of [`edge_mean`]: every edge receives its center's gradient over the degree.
pub fn edge_mean_backward(dy: &ArrayView2<f64>, edges: &EdgeSet) -> Array2<f64> {
    let f = dy.ncols();
    let g = dy.as_standard_layout();
    let gs = g.as_slice().expect("standard layout");
    let mut d = Array2::zeros((edges.num_edges(), f));
    let out = rows_mut(&mut d);
    let off = edges.offsets();
    for i in 0..edges.len() {
        let (s, t) = (off[i], off[i + 1]);
        let k = (t - s) as f64;
        for e in s..t {
            for (o, a) in out[e * f..(e + 1) * f].iter_mut().zip(&gs[i * f..(i + 1) * f]) {
                *o = a / k;
            }
        }
    }
    d
}

/// Sums per-edge rows onto their centers and onto their neighbors.
pub fn scatter_centers_neighbors(dh: &Array2<f64>, edges: &EdgeSet) -> (Array2<f64>, Array2<f64>) {
    let f = dh.ncols();
    let d = dh.as_standard_layout();
    let ds = d.as_slice().expect("standard layout");
    let mut by_center = Array2::zeros((edges.len(), f));
    let mut by_neighbor = Array2::zeros((edges.len(), f));
    let (c, n) = (rows_mut(&mut by_center), rows_mut(&mut by_neighbor));
    for (e, (i, j)) in edges.iter().enumerate() {
        let r = &ds[e * f..(e + 1) * f];
        for (o, a) in c[i * f..(i + 1) * f].iter_mut().zip(r) {
            *o += a;
        }
        for (o, a) in n[j * f..(j + 1) * f].iter_mut().zip(r) {
            *o += a;
        }
    }
    (by_center, by_neighbor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bn_eval_identity() {
        let x = array![[1.0, -2.0], [3.0, 0.5]];
        let one = Array1::ones(2);
        let zero = Array1::zeros(2);
        let (y, _) = batch_norm_forward(
            &x.view(),
            &one.view(),
            &zero.view(),
            &zero.view(),
            &one.view(),
            1e-5,
            false,
        );
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b / (1.0f64 + 1e-5).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn bn_constant_column_maps_to_beta() {
        let x = array![[2.0], [2.0], [2.0]];
        let g = array![1.7];
        let b = array![0.25];
        let (y, _) = batch_norm_forward(
            &x.view(),
            &g.view(),
            &b.view(),
            &array![0.0].view(),
            &array![1.0].view(),
            1e-5,
            true,
        );
        assert!(y.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn bn_matches_formula() {
        let x = array![[0.3, 1.0], [-1.2, 4.0], [2.2, -0.5], [0.1, 0.0]];
        let g = array![1.5, -0.7];
        let b = array![0.1, 0.2];
        let (y, c) = batch_norm_forward(
            &x.view(),
            &g.view(),
            &b.view(),
            &array![0.0, 0.0].view(),
            &array![1.0, 1.0].view(),
            1e-5,
            true,
        );
        for k in 0..2 {
            let col: Vec<f64> = x.column(k).to_vec();
            let mu = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 4.0;
            assert!((c.batch_var[k] - var).abs() < 1e-14);
            for i in 0..4 {
                let want = (col[i] - mu) / (var + 1e-5).sqrt() * g[k] + b[k];
                assert!((y[[i, k]] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn edge_mean_and_adjoint() {
        let e = EdgeSet::from_lists(vec![vec![1, 2], vec![0]]);
        let v = array![[1.0], [3.0], [5.0]];
        assert_eq!(edge_mean(&v.view(), &e), array![[2.0], [5.0]]);
        let dy = array![[2.0], [1.0]];
        assert_eq!(edge_mean_backward(&dy.view(), &e), array![[1.0], [1.0], [1.0]]);
    }
}
