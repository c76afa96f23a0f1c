use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FeatureMatrix;

/// Surjective map from fine vertices to coarse vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolingTraceMap {
    assignment: Vec<usize>,
    coarse_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    #[default]
    Mean,
    Max,
    Sum,
}

impl PoolingTraceMap {
    /// Fails unless every entry is `< coarse_count` and every coarse index is hit.
    pub fn new(assignment: Vec<usize>, coarse_count: usize) -> Result<Self> {
        let mut hit = vec![false; coarse_count];
        for (i, &c) in assignment.iter().enumerate() {
            if c >= coarse_count {
                return Err(Error::Invalid(format!(
                    "fine vertex {i} maps to {c}, out of range for {coarse_count} coarse vertices"
                )));
            }
            hit[c] = true;
        }
        if let Some(c) = hit.iter().position(|h| !h) {
            return Err(Error::Invalid(format!("coarse vertex {c} has no preimage")));
        }
        Ok(Self {
            assignment,
            coarse_count,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            coarse_count: n,
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn fine_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_count
    }

    pub fn is_identity(&self) -> bool {
        self.coarse_count == self.assignment.len() && self.assignment.iter().enumerate().all(|(i, &c)| i == c)
    }

    /// Fine vertices of every coarse vertex, each list ascending.
    pub fn preimages(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.coarse_count];
        for (i, &c) in self.assignment.iter().enumerate() {
            g[c].push(i);
        }
        g
    }

    pub fn preimage_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.coarse_count];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }

    /// `self` followed by `next` (fine -> coarse -> coarser).
    pub fn then(&self, next: &PoolingTraceMap) -> Result<PoolingTraceMap> {
        if next.fine_count() != self.coarse_count {
            return Err(Error::Shape(format!(
                "cannot compose traces: {} coarse vertices vs {} fine",
                self.coarse_count,
                next.fine_count()
            )));
        }
        Ok(PoolingTraceMap {
            assignment: self.assignment.iter().map(|&c| next.assignment[c]).collect(),
            coarse_count: next.coarse_count,
        })
    }

    /// One coarse index per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.assignment.len() * 6);
        for c in &self.assignment {
            let _ = writeln!(s, "{c}");
        }
        s
    }

    pub fn parse_text(text: &str, coarse_count: usize, file: &str) -> Result<Self> {
        let mut assignment = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let malformed = |message: String| Error::Malformed {
                file: file.to_string(),
                line: lineno + 1,
                message,
            };
            let line = line.trim();
            let c: usize = line
                .parse()
                .map_err(|_| malformed(format!("expected a coarse vertex index, found {line:?}")))?;
            if c >= coarse_count {
                return Err(malformed(format!(
                    "coarse index {c} out of range for {coarse_count} coarse vertices"
                )));
            }
            assignment.push(c);
        }
        Self::new(assignment, coarse_count).map_err(|e| Error::Malformed {
            file: file.to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Aggregates fine rows into coarse rows over each preimage.
pub fn pool_features(features: &FeatureMatrix, trace: &PoolingTraceMap, mode: PoolMode) -> Result<FeatureMatrix> {
    if features.nrows() != trace.fine_count() {
        return Err(Error::Shape(format!(
            "pooling {} rows with a trace over {} fine vertices",
            features.nrows(),
            trace.fine_count()
        )));
    }
    let w = features.ncols();
    let init = if mode == PoolMode::Max { f64::NEG_INFINITY } else { 0.0 };
    let mut out = Array2::from_elem((trace.coarse_count(), w), init);
    for (i, &c) in trace.assignment().iter().enumerate() {
        let src = features.row(i);
        let mut dst = out.row_mut(c);
        match mode {
            PoolMode::Mean | PoolMode::Sum => dst += &src,
            PoolMode::Max => dst.zip_mut_with(&src, |d, &s| {
                if s > *d {
                    *d = s
                }
            }),
        }
    }
    if mode == PoolMode::Mean {
        for (c, n) in trace.preimage_sizes().into_iter().enumerate() {
            out.row_mut(c).mapv_inplace(|v| v / n as f64);
        }
    }
    Ok(out)
}

/// Copies each coarse row back to every fine vertex of its preimage.
pub fn unpool_features(coarse: &FeatureMatrix, trace: &PoolingTraceMap) -> Result<FeatureMatrix> {
    if coarse.nrows() != trace.coarse_count() {
        return Err(Error::Shape(format!(
            "unpooling {} rows with a trace onto {} coarse vertices",
            coarse.nrows(),
            trace.coarse_count()
        )));
    }
    let mut out = Array2::zeros((trace.fine_count(), coarse.ncols()));
    for (i, &c) in trace.assignment().iter().enumerate() {
        out.row_mut(i).assign(&coarse.row(c));
    }
    Ok(out)
}
