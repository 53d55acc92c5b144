//! Cubic B-spline basis on [0, 1] and the right-inverse of its evaluation
//! matrix. The basis has k functions (k >= 4), built on k-2 equally spaced
//! breakpoints with clamped boundary knots, so the constant function lies in
//! its span and the columns of the evaluation matrix sum to one.

use nalgebra::{DMatrix, DVector};

use crate::curves::TimeGrid;
use crate::error::{Error, Result};
use crate::linalg::spd_solve;

/// Order of the spline (degree 3, cubic).
pub const SPLINE_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    /// Number of basis functions.
    pub k: usize,
}

impl BasisSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k < 4 {
            return Err(Error::InvalidSpec(format!("basis needs k >= 4, got {}", k)));
        }
        Ok(BasisSpec { k })
    }

    /// Full clamped knot vector: four copies of each boundary plus the k-4
    /// interior breakpoints of the k-2 point grid on [0, 1].
    pub fn knots(&self) -> Vec<f64> {
        let breaks = self.k - 2;
        let mut knots = Vec::with_capacity(self.k + SPLINE_ORDER);
        knots.extend([0.0; SPLINE_ORDER]);
        for i in 1..breaks - 1 {
            knots.push(i as f64 / (breaks - 1) as f64);
        }
        knots.extend([1.0; SPLINE_ORDER]);
        knots
    }

    /// Evaluate all k basis functions at `t` in [0, 1].
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let knots = self.knots();
        let n = self.k;
        // Knot span index such that knots[span] <= t < knots[span+1], with
        // t = 1 assigned to the last nonempty span.
        let mut span = n - 1;
        if t < 1.0 {
            span = SPLINE_ORDER - 1;
            while span + 1 < n && t >= knots[span + 1] {
                span += 1;
            }
        }
        // Triangular recurrence for the SPLINE_ORDER nonvanishing functions.
        let mut vals = [0.0; SPLINE_ORDER];
        let mut left = [0.0; SPLINE_ORDER];
        let mut right = [0.0; SPLINE_ORDER];
        vals[0] = 1.0;
        for j in 1..SPLINE_ORDER {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for i in 0..j {
                let denom = right[i + 1] + left[j - i];
                let term = if denom == 0.0 { 0.0 } else { vals[i] / denom };
                vals[i] = saved + right[i + 1] * term;
                saved = left[j - i] * term;
            }
            vals[j] = saved;
        }
        let mut out = DVector::zeros(n);
        for (i, &v) in vals.iter().enumerate() {
            out[span + 1 - SPLINE_ORDER + i] = v;
        }
        out
    }
}

/// The k x r evaluation matrix of the basis on a time grid.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
}

/// Evaluate the basis on the grid; requires r > k so the matrix has full
/// row rank.
pub fn bspline_matrix(spec: &BasisSpec, grid: &TimeGrid) -> Result<BasisMatrix> {
    let r = grid.len();
    if r <= spec.k {
        return Err(Error::InvalidSpec(format!(
            "need more sample times than basis functions: r = {}, k = {}",
            r, spec.k
        )));
    }
    let mut values = DMatrix::zeros(spec.k, r);
    for (j, &t) in grid.times().iter().enumerate() {
        values.set_column(j, &spec.eval(t));
    }
    Ok(BasisMatrix { values })
}

/// Right-inverse Phi^- = Phi^T (Phi Phi^T)^{-1}, computed by a linear solve.
pub fn right_inverse(phi: &BasisMatrix) -> Result<DMatrix<f64>> {
    let p = &phi.values;
    let gram = p * p.transpose();
    let eig = gram.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    // Singular values of Phi are the square roots of the Gram eigenvalues.
    let full_rank = min_ev > 1e-20 * max_ev.max(0.0);
    if !full_rank {
        return Err(Error::RankDeficient(format!(
            "basis matrix singular value ratio {:.3e}",
            (min_ev.max(0.0) / max_ev).sqrt()
        )));
    }
    let solved = spd_solve(&gram, p)?;
    Ok(solved.transpose())
}
