//! The confirmatory zero pattern for CFA loadings.

use crate::error::{Error, Result};

/// A `p x q` binary pattern: entry `(j, k)` is `true` when item `j` has a
/// free loading on factor `k`, `false` when the loading is fixed to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorStructure {
    p: usize,
    q: usize,
    pattern: Vec<bool>, // row-major
}

impl FactorStructure {
    /// Build from a row-major 0/1 pattern.
    ///
    /// Requires `q < p`, every item to load on at least one factor, and
    /// every factor to carry at least one item.
    pub fn new(p: usize, q: usize, pattern_row_major: &[u8]) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidParameter(
                "factor structure needs p >= 1 and q >= 1".into(),
            ));
        }
        if q >= p {
            return Err(Error::InvalidParameter(format!(
                "factor count q = {q} must be smaller than item count p = {p}"
            )));
        }
        if pattern_row_major.len() != p * q {
            return Err(Error::DimensionMismatch(format!(
                "pattern has {} entries, expected {}",
                pattern_row_major.len(),
                p * q
            )));
        }
        let pattern: Vec<bool> = pattern_row_major.iter().map(|&v| v != 0).collect();
        for j in 0..p {
            if !(0..q).any(|k| pattern[j * q + k]) {
                return Err(Error::InvalidParameter(format!(
                    "item {} loads on no factor",
                    j + 1
                )));
            }
        }
        for k in 0..q {
            if !(0..p).any(|j| pattern[j * q + k]) {
                return Err(Error::InvalidParameter(format!(
                    "factor {} carries no item",
                    k + 1
                )));
            }
        }
        Ok(Self { p, q, pattern })
    }

    /// Simple structure: items split into `q` contiguous blocks as evenly as
    /// possible (leading blocks take the remainder), one free loading each.
    pub fn simple(p: usize, q: usize) -> Result<Self> {
        if q == 0 || q >= p {
            return Err(Error::InvalidParameter(format!(
                "simple structure needs 0 < q < p, got q = {q}, p = {p}"
            )));
        }
        let base = p / q;
        let extra = p % q;
        let mut pattern = vec![0u8; p * q];
        let mut item = 0usize;
        for k in 0..q {
            let size = base + usize::from(k < extra);
            for _ in 0..size {
                pattern[item * q + k] = 1;
                item += 1;
            }
        }
        Self::new(p, q, &pattern)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Whether item `j` loads freely on factor `k`.
    pub fn is_free(&self, j: usize, k: usize) -> bool {
        self.pattern[j * self.q + k]
    }

    /// Indices of the free factors for item `j`.
    pub fn free_cols(&self, j: usize) -> Vec<usize> {
        (0..self.q).filter(|&k| self.is_free(j, k)).collect()
    }

    /// Total number of free loadings.
    pub fn n_free(&self) -> usize {
        self.pattern.iter().filter(|&&b| b).count()
    }

    /// Row-major 0/1 representation.
    pub fn pattern_row_major(&self) -> Vec<u8> {
        self.pattern.iter().map(|&b| u8::from(b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_structure_splits_evenly() {
        let s = FactorStructure::simple(30, 4).unwrap();
        let sizes: Vec<usize> = (0..4)
            .map(|k| (0..30).filter(|&j| s.is_free(j, k)).count())
            .collect();
        assert_eq!(sizes, vec![8, 8, 7, 7]);
        assert_eq!(s.n_free(), 30);
    }

    #[test]
    fn rejects_empty_row_and_column() {
        // Item 2 loads nowhere.
        assert!(FactorStructure::new(3, 2, &[1, 0, 0, 0, 0, 1]).is_err());
        // Factor 2 carries nothing.
        assert!(FactorStructure::new(3, 2, &[1, 0, 1, 0, 1, 0]).is_err());
        // q >= p.
        assert!(FactorStructure::new(2, 2, &[1, 0, 0, 1]).is_err());
    }

    #[test]
    fn cross_loadings_allowed() {
        let s = FactorStructure::new(3, 2, &[1, 1, 1, 0, 0, 1]).unwrap();
        assert_eq!(s.n_free(), 4);
        assert_eq!(s.free_cols(0), vec![0, 1]);
    }
}
