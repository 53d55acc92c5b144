//! The parametric rolled matrix-normal generative model: a matrix-normal
//! coefficient draw W placed on a B-spline basis gives a flat curve Z = W Phi
//! in the tangent space at b; the model curve on M is the wrapping of Z with
//! respect to the rolling of the flat mean M_w Phi.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};
use rand_distr::StandardNormal;

use crate::basis::{bspline_matrix, BasisMatrix, BasisSpec};
use crate::curves::{roll, unwrap, wrap, DiscreteCurve, FlatCurve, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{is_spd, sym_funcm, MatFn};
use crate::manifold::{ManifoldDescriptor, Point, Tangent};

/// Mean and separable covariance of the matrix-normal coefficient matrix.
#[derive(Debug, Clone)]
pub struct MNParams {
    /// d x k mean matrix.
    pub m_w: DMatrix<f64>,
    /// d x d row covariance.
    pub u_w: DMatrix<f64>,
    /// k x k column covariance.
    pub v_w: DMatrix<f64>,
}

impl MNParams {
    pub fn new(m_w: DMatrix<f64>, u_w: DMatrix<f64>, v_w: DMatrix<f64>) -> Result<Self> {
        let (d, k) = (m_w.nrows(), m_w.ncols());
        if u_w.nrows() != d || u_w.ncols() != d || v_w.nrows() != k || v_w.ncols() != k {
            return Err(Error::Mismatch("covariance dimensions do not match mean".into()));
        }
        if (&u_w - u_w.transpose()).amax() > 1e-12 || (&v_w - v_w.transpose()).amax() > 1e-12 {
            return Err(Error::Mismatch("covariances must be symmetric".into()));
        }
        if !is_spd(&u_w, 1e-12) || !is_spd(&v_w, 1e-12) {
            return Err(Error::NotPositiveDefinite("matrix-normal covariance".into()));
        }
        Ok(MNParams { m_w, u_w, v_w })
    }

    pub fn d(&self) -> usize {
        self.m_w.nrows()
    }

    pub fn k(&self) -> usize {
        self.m_w.ncols()
    }
}

/// One draw of the d x k coefficient matrix, W = M + L_U G L_V^T with
/// symmetric square-root factors and G i.i.d. standard normal.
pub fn sample_mn(params: &MNParams, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let (d, k) = (params.d(), params.k());
    let lu = sym_funcm(MatFn::Sqrt, &params.u_w)?;
    let lv = sym_funcm(MatFn::Sqrt, &params.v_w)?;
    let g = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(&params.m_w + lu * g * lv.transpose())
}

/// The rolled matrix-normal model on a manifold.
#[derive(Debug, Clone)]
pub struct RGPModel {
    pub manifold: ManifoldDescriptor,
    pub params: MNParams,
    pub b: Point,
    pub frame: DMatrix<f64>,
    pub basis: BasisSpec,
    pub grid: TimeGrid,
}

impl RGPModel {
    pub fn new(
        manifold: ManifoldDescriptor,
        params: MNParams,
        b: Point,
        frame: DMatrix<f64>,
        basis: BasisSpec,
        grid: TimeGrid,
    ) -> Result<Self> {
        manifold.validate_point(&b)?;
        if params.d() != manifold.d {
            return Err(Error::Mismatch(format!(
                "mean matrix has {} rows for a manifold of dimension {}",
                params.d(),
                manifold.d
            )));
        }
        if params.k() != basis.k {
            return Err(Error::Mismatch("mean matrix columns must match basis size".into()));
        }
        if basis.k < manifold.d.max(4) {
            return Err(Error::InvalidSpec(format!(
                "basis needs k >= max(4, d) = {}, got {}",
                manifold.d.max(4),
                basis.k
            )));
        }
        if frame.nrows() != manifold.q || frame.ncols() != manifold.d {
            return Err(Error::Mismatch("frame must be q x d".into()));
        }
        for i in 0..manifold.d {
            let col = frame.column(i).into_owned();
            if (&col - manifold.project_tangent(&b, &col)).norm() > 1e-10 {
                return Err(Error::Mismatch("frame column is not tangent at b".into()));
            }
            for j in 0..manifold.d {
                let g = manifold.inner(&b, &col, &frame.column(j).into_owned());
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > 1e-10 {
                    return Err(Error::Mismatch("frame is not orthonormal at b".into()));
                }
            }
        }
        Ok(RGPModel { manifold, params, b, frame, basis, grid })
    }

    pub fn basis_matrix(&self) -> Result<BasisMatrix> {
        bspline_matrix(&self.basis, &self.grid)
    }

    /// The rolling onto M of the flat mean curve M_w Phi.
    pub fn mean_curve(&self) -> Result<DiscreteCurve> {
        let phi = self.basis_matrix()?;
        let coords = &self.params.m_w * &phi.values;
        let flat = FlatCurve::new(self.b.clone(), self.frame.clone(), self.grid.clone(), coords)?;
        roll(&flat, &self.manifold)
    }

    /// Draw n curves. Curve i consumes the RNG sub-stream of index i derived
    /// from `seed`, so the output is reproducible regardless of evaluation
    /// order.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<DiscreteCurve>> {
        let phi = self.basis_matrix()?;
        let gamma = self.mean_curve()?;
        (0..n as u64).map(|i| Ok(self.draw(i, seed, &phi, &gamma)?.1)).collect()
    }

    /// Draw the single curve of sub-stream `index`, returning the latent
    /// coefficient matrix alongside it.
    pub fn simulate_one(&self, index: u64, seed: u64) -> Result<(DMatrix<f64>, DiscreteCurve)> {
        let phi = self.basis_matrix()?;
        let gamma = self.mean_curve()?;
        self.draw(index, seed, &phi, &gamma)
    }

    fn draw(
        &self,
        index: u64,
        seed: u64,
        phi: &BasisMatrix,
        gamma: &DiscreteCurve,
    ) -> Result<(DMatrix<f64>, DiscreteCurve)> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let w = sample_mn(&self.params, &mut rng)?;
        let z = &w * &phi.values;
        let flat = FlatCurve::new(self.b.clone(), self.frame.clone(), self.grid.clone(), z)?;
        let curve = wrap(&flat, gamma)?;
        Ok((w, curve))
    }
}

/// Unwrapping coordinates H(x; g) of a curve with respect to a base curve,
/// as a d x r matrix.
pub fn unwrap_coords(
    x: &DiscreteCurve,
    g: &DiscreteCurve,
    b: &Point,
    frame: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(unwrap(x, g, b, frame)?.coords)
}

/// Re-express a model with respect to a different base point and frame.
/// Returns the transformed model together with the offset `a` and the
/// orthogonal map `A` relating old and new unwrapping coordinates by
/// H' = a 1^T + A H.
pub fn transform_frame(
    model: &RGPModel,
    b2: &Point,
    frame2: &DMatrix<f64>,
) -> Result<(RGPModel, DVector<f64>, DMatrix<f64>)> {
    let m = &model.manifold;
    let gamma0 = model.mean_curve()?.points[0].clone();
    // Columns of A: old frame carried through gamma(0) into the new frame's
    // coordinates.
    let mut a_map = DMatrix::zeros(m.d, m.d);
    for j in 0..m.d {
        let t = Tangent::new(model.b.clone(), model.frame.column(j).into_owned());
        let at_gamma = m.transport(&gamma0, &t)?;
        let at_b2 = m.transport(b2, &at_gamma)?;
        a_map.set_column(j, &m.frame_coords(b2, frame2, &at_b2.vec));
    }
    let old_start = m.frame_coords(&model.b, &model.frame, &m.log(&model.b, &gamma0)?.vec);
    let new_start = m.frame_coords(b2, frame2, &m.log(b2, &gamma0)?.vec);
    let offset = &new_start - &a_map * &old_start;
    let ones = DMatrix::from_element(1, model.params.k(), 1.0);
    let m_w2 = &offset * ones + &a_map * &model.params.m_w;
    let u_w2 = &a_map * &model.params.u_w * a_map.transpose();
    let params = MNParams::new(m_w2, u_w2, model.params.v_w.clone())?;
    let transformed = RGPModel::new(
        model.manifold,
        params,
        b2.clone(),
        frame2.clone(),
        model.basis,
        model.grid.clone(),
    )?;
    Ok((transformed, offset, a_map))
}

/// Prescribed demonstration models.
pub mod presets {
    use super::*;

    fn ar1_cov(k: usize, rho: f64, scale: f64, amp: impl Fn(usize) -> f64) -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |i, j| {
            scale * amp(i + 1) * amp(j + 1) * rho.powi((i as i32 - j as i32).abs())
        })
    }

    /// Heteroscedastic curves on the unit 2-sphere: k = 10 cubic splines,
    /// spiral mean, AR(1)-damped column covariance, base point
    /// (-5, -5, 1)/sqrt(51).
    pub fn s2_hetero(r: usize) -> Result<RGPModel> {
        let manifold = ManifoldDescriptor::sphere(2);
        let k = 10;
        let m_w = DMatrix::from_fn(2, k, |row, col| {
            let s = col as f64 / (k - 1) as f64;
            let radial = 0.5 + s * s / 2.0;
            let trig = if row == 0 { (5.0 * s).cos() } else { (5.0 * s).sin() };
            0.75 * (1.0 + radial * trig)
        });
        let amp = |i: usize| 1.0 + 0.75 * (2.0 * std::f64::consts::PI * i as f64 / k as f64).cos();
        let v_w = ar1_cov(k, 0.9, 1.0, amp);
        let params = MNParams::new(m_w, DMatrix::identity(2, 2), v_w)?;
        let b = {
            let v = DVector::from_row_slice(&[-5.0, -5.0, 1.0]);
            Point::new(&v / v.norm())
        };
        let frame = manifold.frame_at(&b);
        RGPModel::new(manifold, params, b, frame, BasisSpec::new(k)?, TimeGrid::uniform(r)?)
    }

    /// Curves on 2x2 symmetric positive definite matrices: k = 5 splines,
    /// small spiral mean, low-variance AR(1) column covariance, base point
    /// the identity matrix.
    pub fn spd_demo(r: usize) -> Result<RGPModel> {
        let manifold = ManifoldDescriptor::spd(2);
        let k = 5;
        let m_w = DMatrix::from_fn(3, k, |row, col| {
            let s = col as f64 / (k - 1) as f64;
            0.75 / 5.0
                * match row {
                    0 => (5.0 * s).cos(),
                    1 => (5.0 * s).sin(),
                    _ => s,
                }
        });
        let amp = |i: usize| 1.0 + 0.75 * (2.0 * std::f64::consts::PI * i as f64 / k as f64).cos();
        let v_w = ar1_cov(k, 0.9, 1e-3, amp);
        let params = MNParams::new(m_w, DMatrix::identity(3, 3), v_w)?;
        let b = Point::from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let frame = manifold.frame_at(&b);
        RGPModel::new(manifold, params, b, frame, BasisSpec::new(k)?, TimeGrid::uniform(r)?)
    }

    /// Synthetic orientation curves on the quaternion hemisphere: small
    /// variability up to a kink point, then much larger variability after it.
    pub fn so3_synthetic(r: usize) -> Result<RGPModel> {
        let manifold = ManifoldDescriptor::so3quat();
        let k = 10;
        let kink = 0.6;
        let m_w = DMatrix::from_fn(3, k, |row, col| {
            let s = col as f64 / (k - 1) as f64;
            match row {
                0 => 0.30 * (std::f64::consts::PI * s).sin(),
                1 => 0.25 * ((std::f64::consts::PI * s).cos() - 1.0),
                _ => {
                    if s < kink {
                        0.20 * s
                    } else {
                        0.20 * kink + 0.55 * (s - kink)
                    }
                }
            }
        });
        let amp = |i: usize| {
            let s = (i - 1) as f64 / (k - 1) as f64;
            0.1 + 0.9 / (1.0 + (-12.0 * (s - kink)).exp())
        };
        let v_w = ar1_cov(k, 0.9, 2e-2, amp);
        let params = MNParams::new(m_w, DMatrix::identity(3, 3), v_w)?;
        let b = Point::from_slice(&[1.0, 0.0, 0.0, 0.0]);
        let frame = manifold.frame_at(&b);
        RGPModel::new(manifold, params, b, frame, BasisSpec::new(k)?, TimeGrid::uniform(r)?)
    }

    /// Flat-space counterpart used as an oracle in tests.
    pub fn euclidean_demo(r: usize) -> Result<RGPModel> {
        let manifold = ManifoldDescriptor::euclidean(3);
        let k = 6;
        let m_w = DMatrix::from_fn(3, k, |row, col| {
            let s = col as f64 / (k - 1) as f64;
            match row {
                0 => s,
                1 => (2.0 * s).sin(),
                _ => 0.5 - s * s,
            }
        });
        let amp = |i: usize| 1.0 + 0.5 * (i as f64 / k as f64);
        let v_w = ar1_cov(k, 0.8, 0.05, amp);
        let params = MNParams::new(m_w, DMatrix::identity(3, 3), v_w)?;
        let b = Point::from_slice(&[0.2, -0.1, 0.4]);
        let frame = manifold.frame_at(&b);
        RGPModel::new(manifold, params, b, frame, BasisSpec::new(k)?, TimeGrid::uniform(r)?)
    }
}
