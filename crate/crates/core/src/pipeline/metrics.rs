use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::convnet::loss::argmax_rows;
use crate::error::{Error, Result};
use crate::mesh::{Label, UNLABELED};

/// Per vertex, the most frequent argmax over all runs; ties go to the lower
/// class.
pub fn majority_vote(runs: &[Array2<f64>]) -> Result<Vec<Label>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Invalid("majority vote needs at least one run".into()))?;
    let (n, c) = first.dim();
    let mut votes = Array2::<u32>::zeros((n, c));
    for (r, run) in runs.iter().enumerate() {
        if run.dim() != (n, c) {
            return Err(Error::Shape(format!(
                "run {r} has shape {:?}, run 0 has {:?}",
                run.dim(),
                (n, c)
            )));
        }
        for (i, p) in argmax_rows(run).into_iter().enumerate() {
            votes[[i, p as usize]] += 1;
        }
    }
    Ok(votes
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for k in 1..c {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best as Label
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// `confusion[truth][prediction]`, labeled vertices only.
    pub confusion: Vec<Vec<u64>>,
    /// `None` for classes absent from the ground truth.
    pub iou: Vec<Option<f64>>,
    pub accuracy: Vec<Option<f64>>,
    pub miou: f64,
    pub macc: f64,
    /// Overall vertex accuracy.
    pub overall: f64,
    pub labeled: u64,
}

/// Confusion matrix and IoU/accuracy scores over the labeled vertices.
/// Class means run over the classes present in the ground truth.
pub fn evaluate(predictions: &[Label], labels: &[Label], classes: usize) -> Result<EvalResult> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&p, &t) in predictions.iter().zip(labels) {
        if t == UNLABELED {
            continue;
        }
        let (p, t) = (p as usize, t as usize);
        if t >= classes || p >= classes {
            return Err(Error::Invalid(format!(
                "class {} out of range for {classes} classes",
                t.max(p)
            )));
        }
        confusion[t][p] += 1;
    }
    let labeled: u64 = confusion.iter().flatten().sum();
    if labeled == 0 {
        return Err(Error::Invalid("no labeled vertex to evaluate".into()));
    }
    let mut iou = Vec::with_capacity(classes);
    let mut accuracy = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = confusion[c][c];
        let fn_: u64 = confusion[c].iter().sum::<u64>() - tp;
        let fp: u64 = (0..classes).map(|t| confusion[t][c]).sum::<u64>() - tp;
        if tp + fn_ == 0 {
            iou.push(None);
            accuracy.push(None);
        } else {
            iou.push(Some(tp as f64 / (tp + fp + fn_) as f64));
            accuracy.push(Some(tp as f64 / (tp + fn_) as f64));
        }
    }
    let mean = |v: &[Option<f64>]| {
        let present: Vec<f64> = v.iter().flatten().copied().collect();
        present.iter().sum::<f64>() / present.len() as f64
    };
    let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(EvalResult {
        miou: mean(&iou),
        macc: mean(&accuracy),
        overall: correct as f64 / labeled as f64,
        confusion,
        iou,
        accuracy,
        labeled,
    })
}

/// Fraction of labeled vertices predicted correctly.
pub fn vertex_accuracy(predictions: &[Label], labels: &[Label]) -> f64 {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (&p, &t) in predictions.iter().zip(labels) {
        if t != UNLABELED {
            total += 1;
            correct += usize::from(p == t);
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

impl EvalResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per class, then a `mean` row.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut s = String::from("class,iou,accuracy,support\n");
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for (c, row) in self.confusion.iter().enumerate() {
            let name = class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            let support: u64 = row.iter().sum();
            let _ = writeln!(s, "{name},{},{},{support}", cell(self.iou[c]), cell(self.accuracy[c]));
        }
        let _ = writeln!(s, "mean,{:.6},{:.6},{}", self.miou, self.macc, self.labeled);
        s
    }
}
