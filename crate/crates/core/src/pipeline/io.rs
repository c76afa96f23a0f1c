//! Plain-text logits and per-vertex labels.
//!
//! Logits: one line per vertex, class scores separated by single spaces.
//! Labels: one class index per line, `-1` for unlabeled.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mesh::{Label, UNLABELED};
use crate::FeatureMatrix;

fn malformed(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

pub fn format_logits(logits: &FeatureMatrix) -> String {
    let mut s = String::new();
    for row in logits.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_logits(text: &str, file: &str) -> Result<FeatureMatrix> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (k, line) in text.lines().enumerate() {
        let values = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| malformed(file, k + 1, format!("bad score {t:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(malformed(file, k + 1, "empty row"));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(malformed(file, k + 1, format!("{} scores, expected {w}", values.len())))
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    let w = width.ok_or_else(|| malformed(file, 0, "no rows"))?;
    Ok(Array2::from_shape_vec((rows, w), data).expect("rows have equal width"))
}

pub fn format_labels(labels: &[Label]) -> String {
    let mut s = String::with_capacity(labels.len() * 3);
    for &l in labels {
        if l == UNLABELED {
            s.push_str("-1\n");
        } else {
            let _ = writeln!(s, "{l}");
        }
    }
    s
}

pub fn parse_labels(text: &str, file: &str) -> Result<Vec<Label>> {
    text.lines()
        .enumerate()
        .map(|(k, line)| {
            let t = line.trim();
            if t == "-1" {
                return Ok(UNLABELED);
            }
            t.parse::<Label>()
                .ok()
                .filter(|&l| l != UNLABELED)
                .ok_or_else(|| malformed(file, k + 1, format!("bad label {t:?}")))
        })
        .collect()
}
