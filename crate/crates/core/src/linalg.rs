//! Symmetric-matrix helpers shared by the geometry kernel and the
//! estimation routines. Everything here goes through a single symmetric
//! eigendecomposition path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrix functions of a symmetric argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatFn {
    Sqrt,
    Log,
    Exp,
}

/// Relative eigenvalue threshold below which a matrix is treated as
/// not positive definite.
pub const PD_RTOL: f64 = 1e-14;

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors) with `a = V diag(l) V^T`. For the
/// small matrices used throughout this crate it is accurate to a few ulps,
/// which matters because square roots and logarithms of SPD points are
/// chained many times along a curve.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = symmetrize(a);
    let mut v = DMatrix::identity(n, n);
    let scale = m.amax().max(1e-300);
    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off <= 1e-16 * scale {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for i in 0..n {
                    let mpi = m[(p, i)];
                    let mqi = m[(q, i)];
                    m[(p, i)] = c * mpi - s * mqi;
                    m[(q, i)] = s * mpi + c * mqi;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    (m.diagonal(), v)
}

/// Apply `sqrt`, `log`, or `exp` to a symmetric matrix via its
/// eigendecomposition. `sqrt` and `log` require positive definiteness.
pub fn sym_funcm(kind: MatFn, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Mismatch(format!("sym_funcm on {}x{} matrix", n, a.ncols())));
    }
    let (eigenvalues, eigenvectors) = sym_eigen(a);
    let max_ev = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if matches!(kind, MatFn::Sqrt | MatFn::Log) {
        let min_ev = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let positive_definite = min_ev > PD_RTOL * max_ev.max(0.0);
        if !positive_definite {
            return Err(Error::NotPositiveDefinite(format!(
                "min eigenvalue {:.3e} vs max {:.3e}",
                min_ev, max_ev
            )));
        }
    }
    let mapped = DVector::from_iterator(
        n,
        eigenvalues.iter().map(|&l| match kind {
            MatFn::Sqrt => l.sqrt(),
            MatFn::Log => l.ln(),
            MatFn::Exp => l.exp(),
        }),
    );
    let out = &eigenvectors * DMatrix::from_diagonal(&mapped) * eigenvectors.transpose();
    Ok(symmetrize(&out))
}

/// Symmetric positive-definite check used by covariance updates.
pub fn is_spd(a: &DMatrix<f64>, sym_tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    if (a - a.transpose()).amax() > sym_tol {
        return false;
    }
    let eig = symmetrize(a).symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    min_ev > PD_RTOL * max_ev.max(0.0)
}

/// Solve `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = symmetrize(a)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}

/// log-determinant of a symmetric positive-definite matrix.
pub fn spd_logdet(a: &DMatrix<f64>) -> Result<f64> {
    let chol = symmetrize(a)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("log-det of indefinite matrix".into()))?;
    Ok(chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum())
}

/// Affine-invariant distance between symmetric positive-definite matrices,
/// `|| log(a^{-1/2} b a^{-1/2}) ||_F`.
pub fn spd_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let a_isqrt = {
        let s = sym_funcm(MatFn::Sqrt, a)?;
        s.clone()
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite("singular square root".into()))?
    };
    let inner = symmetrize(&(&a_isqrt * b * &a_isqrt));
    let l = sym_funcm(MatFn::Log, &inner)?;
    Ok(l.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn sqrt_of_scaled_identity() {
        let a = DMatrix::identity(2, 2) * 4.0;
        let s = sym_funcm(MatFn::Sqrt, &a).unwrap();
        assert!((s - DMatrix::identity(2, 2) * 2.0).amax() < 1e-14);
    }

    #[test]
    fn log_of_identity_is_zero() {
        let a = DMatrix::identity(3, 3);
        let l = sym_funcm(MatFn::Log, &a).unwrap();
        assert!(l.amax() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_spd(3, &mut rng);
            let s = sym_funcm(MatFn::Sqrt, &a).unwrap();
            assert!((&s * &s - &a).amax() < 1e-10);
        }
    }

    #[test]
    fn exp_log_roundtrip() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_spd(2, &mut rng);
            let l = sym_funcm(MatFn::Log, &a).unwrap();
            let back = sym_funcm(MatFn::Exp, &l).unwrap();
            assert!((back - &a).amax() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_positive_definite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            sym_funcm(MatFn::Log, &a),
            Err(Error::NotPositiveDefinite(_))
        ));
        assert!(matches!(
            sym_funcm(MatFn::Sqrt, &DMatrix::zeros(2, 2)),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn spd_distance_diagonal() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::identity(2, 2) * std::f64::consts::E.powi(2);
        // log of diag(e^2, e^2) has Frobenius norm 2*sqrt(2)
        let d = spd_distance(&a, &b).unwrap();
        assert!((d - 2.0 * 2.0_f64.sqrt()).abs() < 1e-12);
    }
}
