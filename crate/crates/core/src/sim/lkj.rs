//! Correlation-matrix sampling via the onion method.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::SpdChol;

/// Draw a `q x q` correlation matrix from the LKJ distribution with the given
/// shape parameter, using the onion construction: the leading 2x2 correlation
/// comes from a rescaled Beta draw, and each further variable attaches a new
/// column whose squared Mahalanobis length is Beta-distributed and whose
/// direction is uniform on the sphere.
///
/// `shape = 1` is the uniform distribution over correlation matrices.
pub fn sample_lkj<R: Rng + ?Sized>(q: usize, shape: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(shape > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "LKJ shape must be positive, got {shape}"
        )));
    }
    if q == 0 {
        return Err(Error::InvalidParameter("LKJ dimension must be positive".into()));
    }
    let mut corr = DMatrix::identity(q, q);
    if q == 1 {
        return Ok(corr);
    }

    let d = q as f64;
    let mut beta_par = shape + (d - 2.0) / 2.0;
    let b = Beta::new(beta_par, beta_par).expect("valid beta");
    let r = 2.0 * b.sample(rng) - 1.0;
    corr[(0, 1)] = r;
    corr[(1, 0)] = r;

    for m in 2..q {
        beta_par -= 0.5;
        let y = Beta::new(m as f64 / 2.0, beta_par)
            .expect("valid beta")
            .sample(rng);
        // Uniform direction on the (m-1)-sphere.
        let mut u = DVector::from_fn(m, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z
        });
        let norm = u.norm();
        if norm == 0.0 {
            u[0] = 1.0;
        } else {
            u /= norm;
        }
        let w = u * y.sqrt();
        let top = corr.view((0, 0), (m, m)).clone_owned();
        let chol = SpdChol::factor(&top)?;
        let col = chol.l() * w;
        for i in 0..m {
            corr[(i, m)] = col[i];
            corr[(m, i)] = col[i];
        }
    }
    Ok(corr)
}
