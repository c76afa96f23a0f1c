use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Directed per-vertex neighbor lists (center -> neighbor) in compressed form.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSet {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl EdgeSet {
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for l in lists {
            targets.extend(l);
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    /// Empty neighborhoods for `n` vertices.
    pub fn empty(n: usize) -> Self {
        Self {
            offsets: vec![0; n + 1],
            targets: Vec::new(),
        }
    }

    /// Number of center vertices.
    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.len()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| self.neighbors(i).to_vec()).collect()
    }

    /// Iterates `(center, neighbor)` pairs in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| self.neighbors(i).iter().map(move |&j| (i, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter().all(|(i, j)| self.neighbors(j).contains(&i))
    }

    pub fn has_self_loops(&self) -> bool {
        self.iter().any(|(i, j)| i == j)
    }

    /// Gives every vertex with an empty neighborhood a single self-loop so a
    /// neighborhood mean is always defined.
    pub fn with_self_loop_fallback(&self) -> EdgeSet {
        let lists = (0..self.len())
            .map(|i| {
                let n = self.neighbors(i);
                if n.is_empty() {
                    vec![i]
                } else {
                    n.to_vec()
                }
            })
            .collect();
        EdgeSet::from_lists(lists)
    }

    /// Checks that all indices are in range for `n` vertices.
    pub fn check(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::Shape(format!(
                "edge set has {} centers, expected {n}",
                self.len()
            )));
        }
        if let Some((i, j)) = self.iter().find(|&(_, j)| j >= n) {
            return Err(Error::Invalid(format!(
                "edge {i} -> {j} is out of range for {n} vertices"
            )));
        }
        Ok(())
    }

    /// Text form: one directed edge `i j` per line, in storage order.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.num_edges() * 12);
        for (i, j) in self.iter() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    /// Parses the text form for a level with `n` vertices. Edges keep their
    /// file order within each center.
    pub fn parse_text(text: &str, n: usize, file: &str) -> Result<EdgeSet> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let malformed = |message: String| Error::Malformed {
                file: file.to_string(),
                line: lineno + 1,
                message,
            };
            let mut it = line.split_ascii_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(malformed(format!("expected `i j`, found {line:?}")));
            };
            let i: usize = a.parse().map_err(|_| malformed(format!("bad vertex index {a:?}")))?;
            let j: usize = b.parse().map_err(|_| malformed(format!("bad vertex index {b:?}")))?;
            if i >= n || j >= n {
                return Err(malformed(format!("edge {i} {j} out of range for {n} vertices")));
            }
            lists[i].push(j);
        }
        Ok(EdgeSet::from_lists(lists))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let e = EdgeSet::from_lists(vec![vec![1, 2], vec![0], vec![]]);
        let t = e.to_text();
        assert_eq!(t, "0 1\n0 2\n1 0\n");
        assert_eq!(EdgeSet::parse_text(&t, 3, "e.txt").unwrap(), e);
    }

    #[test]
    fn parse_rejects_out_of_range() {
        let err = EdgeSet::parse_text("0 1\n0 5\n", 3, "edges_0_geo.txt").unwrap_err();
        assert!(err.to_string().contains("edges_0_geo.txt:2"));
    }

    #[test]
    fn fallback_adds_self_loops_only_where_empty() {
        let e = EdgeSet::from_lists(vec![vec![1], vec![0], vec![]]).with_self_loop_fallback();
        assert_eq!(e.neighbors(2), &[2]);
        assert_eq!(e.neighbors(0), &[1]);
    }
}
