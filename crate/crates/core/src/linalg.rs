//! Small dense linear-algebra utilities shared across the crate.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Unlike the library factorization this one reports *which* leading
/// principal minor fails, which is what callers need to diagnose a bad
/// covariance assembly.
#[derive(Debug, Clone)]
pub struct SpdChol {
    l: DMatrix<f64>,
}

impl SpdChol {
    /// Factor `a = L Lᵀ`. Fails with the 1-based order of the first
    /// non-positive leading minor.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky of a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { minor: j + 1 });
            }
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// The lower factor `L`.
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `log det(a) = 2 Σ log L_jj`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|j| self.l[(j, j)].ln()).sum::<f64>()
    }

    /// Solve `L z = b` (forward substitution).
    pub fn forward(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut z = b.clone();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solve `Lᵀ x = b` (back substitution).
    pub fn backward(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = b.clone();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solve `a x = b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.backward(&self.forward(b))
    }

    /// Solve `a X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = DVector::from_column_slice(b.column(j).as_slice());
            out.set_column(j, &self.solve_vec(&col));
        }
        out
    }
}

/// Sum `xs` by recursive pairwise reduction.
///
/// This is the crate's canonical order for sums over observations: splitting
/// always happens at the midpoint and blocks of at most 32 terms are summed
/// left to right, so the result is a pure function of the input slice —
/// independent of thread count or scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Force exact symmetry: `(a + aᵀ) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Largest absolute asymmetry `max |a_ij - a_ji|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Leading `k` eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn top_eigenpairs(a: &DMatrix<f64>, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let k = k.min(n);
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::<f64>::zeros(n, k);
    for (out_col, &idx) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[idx]);
        vectors.set_column(out_col, &eig.eigenvectors.column(idx));
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(seed, &[99]);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn factor_matches_reconstruction() {
        let a = random_spd(7, 1);
        let ch = SpdChol::factor(&a).unwrap();
        let back = ch.l() * ch.l().transpose();
        assert_relative_eq!(back, a, epsilon = 1e-10);
    }

    #[test]
    fn reports_offending_minor() {
        // Indefinite at the third leading minor.
        let mut a = DMatrix::identity(4, 4);
        a[(2, 2)] = -1.0;
        match SpdChol::factor(&a) {
            Err(Error::NotPositiveDefinite { minor }) => assert_eq!(minor, 3),
            other => panic!("expected non-SPD error, got {other:?}"),
        }
    }

    #[test]
    fn solve_matches_lu() {
        let a = random_spd(6, 2);
        let b = DVector::from_fn(6, |i, _| (i as f64 + 1.0) * 0.3);
        let x = SpdChol::factor(&a).unwrap().solve_vec(&b);
        let x_lu = a.clone().lu().solve(&b).unwrap();
        assert_relative_eq!(x, x_lu, epsilon = 1e-10);
    }

    #[test]
    fn log_det_matches_lu() {
        let a = random_spd(5, 3);
        let ch = SpdChol::factor(&a).unwrap();
        assert_relative_eq!(ch.log_det(), a.determinant().ln(), epsilon = 1e-10);
    }

    #[test]
    fn pairwise_sum_is_split_invariant_wrt_input_only() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 1e-3).collect();
        let a = pairwise_sum(&xs);
        let b = pairwise_sum(&xs);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_relative_eq!(a, xs.iter().sum::<f64>(), epsilon = 1e-9);
    }

    #[test]
    fn top_eigenpairs_descending() {
        let a = random_spd(6, 4);
        let (vals, vecs) = top_eigenpairs(&a, 3);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        // Each returned pair satisfies a v = lambda v.
        for j in 0..3 {
            let v = vecs.column(j).clone_owned();
            assert_relative_eq!(&a * &v, &v * vals[j], epsilon = 1e-8);
        }
    }
}
