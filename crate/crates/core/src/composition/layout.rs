use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-subsystem `(state_dim, control_dim)` in composite order. Subsystem `i`
/// owns the contiguous state indices `state_range(i)` and control indices
/// `control_range(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemLayout {
    dims: Vec<(usize, usize)>,
}

impl SubsystemLayout {
    pub fn new(dims: Vec<(usize, usize)>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument(
                "layout needs at least one subsystem".into(),
            ));
        }
        if let Some(i) = dims.iter().position(|&(n, _)| n == 0) {
            return Err(Error::InvalidArgument(format!(
                "subsystem {i} has an empty state"
            )));
        }
        Ok(SubsystemLayout { dims })
    }

    /// `k` identical subsystems.
    pub fn uniform(k: usize, state_dim: usize, control_dim: usize) -> Result<Self> {
        Self::new(vec![(state_dim, control_dim); k])
    }

    pub fn dims(&self) -> &[(usize, usize)] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.dims.iter().map(|d| d.0).sum()
    }

    pub fn control_dim(&self) -> usize {
        self.dims.iter().map(|d| d.1).sum()
    }

    pub fn state_range(&self, i: usize) -> Range<usize> {
        let start: usize = self.dims[..i].iter().map(|d| d.0).sum();
        start..start + self.dims[i].0
    }

    pub fn control_range(&self, i: usize) -> Range<usize> {
        let start: usize = self.dims[..i].iter().map(|d| d.1).sum();
        start..start + self.dims[i].1
    }

    /// Subsystem owning composite state index `idx`.
    pub fn block_of(&self, idx: usize) -> usize {
        let mut end = 0;
        for (i, d) in self.dims.iter().enumerate() {
            end += d.0;
            if idx < end {
                return i;
            }
        }
        panic!(
            "state index {idx} outside layout of dimension {}",
            self.state_dim()
        );
    }

    /// Strictly upper-triangular positions `(r, c)` that lie in off-diagonal
    /// blocks, in row-major order. These are the free entries of a skew
    /// coupling with zero diagonal blocks.
    pub fn free_entries(&self) -> Vec<(usize, usize)> {
        let n = self.state_dim();
        let blocks: Vec<usize> = (0..n).map(|i| self.block_of(i)).collect();
        let mut out = Vec::new();
        for r in 0..n {
            for c in r + 1..n {
                if blocks[r] != blocks[c] {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_blocks() {
        let l = SubsystemLayout::new(vec![(2, 1), (3, 0), (1, 2)]).unwrap();
        assert_eq!(l.state_dim(), 6);
        assert_eq!(l.control_dim(), 3);
        assert_eq!(l.state_range(1), 2..5);
        assert_eq!(l.control_range(2), 1..3);
        assert_eq!(l.block_of(4), 1);
        assert_eq!(l.block_of(5), 2);
    }

    #[test]
    fn free_entries_two_smds() {
        let l = SubsystemLayout::uniform(2, 2, 1).unwrap();
        assert_eq!(l.free_entries(), vec![(0, 2), (0, 3), (1, 2), (1, 3)]);
    }

    #[test]
    fn free_entry_count() {
        let l = SubsystemLayout::uniform(10, 2, 1).unwrap();
        // 20·19/2 pairs minus 10 within-block pairs
        assert_eq!(l.free_entries().len(), 180);
    }
}
