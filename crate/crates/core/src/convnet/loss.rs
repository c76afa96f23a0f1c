use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mesh::{Label, UNLABELED};

/// Softmax cross-entropy averaged over labeled vertices. Returns the loss
/// and its gradient with respect to the logits; unlabeled rows get zero.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[Label]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let c = logits.ncols();
    if let Some(&bad) = labels.iter().find(|&&l| l != UNLABELED && l as usize >= c) {
        return Err(Error::Invalid(format!("label {bad} out of range for {c} classes")));
    }
    let count = labels.iter().filter(|&&l| l != UNLABELED).count();
    if count == 0 {
        return Err(Error::Invalid("no labeled vertex".into()));
    }
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l == UNLABELED {
            continue;
        }
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - row[l as usize];
        let mut g = grad.row_mut(i);
        for k in 0..c {
            g[k] = (row[k] - lse).exp() / count as f64;
        }
        g[l as usize] -= 1.0 / count as f64;
    }
    Ok((loss / count as f64, grad))
}

/// Row-wise argmax; ties go to the lowest class.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<Label> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for k in 1..r.len() {
                if r[k] > r[best] {
                    best = k;
                }
            }
            best as Label
        })
        .collect()
}
