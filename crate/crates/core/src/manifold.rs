//! Geometry kernel: exponential and inverse exponential maps, geodesic
//! distance, parallel transport along minimizing geodesics, and orthonormal
//! frames for Euclidean space, the unit sphere S^d, symmetric positive
//! definite matrices with the affine-invariant metric, and SO(3) represented
//! on the unit-quaternion sphere S^3.
//!
//! Points and tangent vectors are stored in embedded coordinates of R^q.
//! SPD points are flattened full r x r matrices (row major); symmetry is an
//! invariant, not a storage optimization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::PD_RTOL;
pub use crate::linalg::{sym_funcm, MatFn};

/// Which manifold a descriptor refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Spd,
    So3Quat,
}

/// A manifold together with its intrinsic dimension `d` and embedding
/// dimension `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManifoldDescriptor {
    pub kind: ManifoldKind,
    pub d: usize,
    pub q: usize,
}

/// A point on a manifold, in embedded coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub coords: DVector<f64>,
}

/// A tangent vector carrying its base point explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub base: Point,
    pub vec: DVector<f64>,
}

impl Point {
    pub fn new(coords: DVector<f64>) -> Self {
        Point { coords }
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Point { coords: DVector::from_row_slice(coords) }
    }
}

impl Tangent {
    pub fn new(base: Point, vec: DVector<f64>) -> Self {
        Tangent { base, vec }
    }

    pub fn zero_at(base: Point) -> Self {
        let q = base.coords.len();
        Tangent { base, vec: DVector::zeros(q) }
    }
}

/// Numerical guard below which sphere exp/log fall back to first-order
/// behaviour (sin(u)/u singularities).
const SPHERE_SMALL: f64 = 1e-12;
/// Sphere points closer than this to antipodal are treated as on the cut
/// locus.
const SPHERE_CUT_TOL: f64 = 1e-10;

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Angle between unit vectors, computed as atan2(|x - p (p.x)|, p.x) so it
/// stays accurate near 0 and pi where arccos loses precision.
fn sphere_angle(p: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let c = clamp_unit(p.dot(x));
    let perp = x - p * c;
    perp.norm().atan2(c)
}

impl ManifoldDescriptor {
    pub fn euclidean(d: usize) -> Self {
        ManifoldDescriptor { kind: ManifoldKind::Euclidean, d, q: d }
    }

    /// The unit sphere S^d embedded in R^{d+1}.
    pub fn sphere(d: usize) -> Self {
        ManifoldDescriptor { kind: ManifoldKind::Sphere, d, q: d + 1 }
    }

    /// r x r symmetric positive definite matrices, affine-invariant metric.
    pub fn spd(r: usize) -> Self {
        ManifoldDescriptor { kind: ManifoldKind::Spd, d: r * (r + 1) / 2, q: r * r }
    }

    /// SO(3) as a hemisphere of S^3 in unit-quaternion coordinates; the
    /// kernel is exactly the S^3 one, sign alignment is the caller's duty.
    pub fn so3quat() -> Self {
        ManifoldDescriptor { kind: ManifoldKind::So3Quat, d: 3, q: 4 }
    }

    /// Side length r of the matrices for the SPD manifold.
    pub fn spd_side(&self) -> usize {
        debug_assert_eq!(self.kind, ManifoldKind::Spd);
        (self.q as f64).sqrt().round() as usize
    }

    /// Reshape an SPD point or tangent into its matrix form.
    pub fn as_matrix(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let r = self.spd_side();
        DMatrix::from_row_slice(r, r, v.as_slice())
    }

    fn flatten_matrix(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.q, m.transpose().iter().cloned())
    }

    pub fn validate_point(&self, p: &Point) -> Result<()> {
        if p.coords.len() != self.q {
            return Err(Error::Mismatch(format!(
                "point has {} coordinates, expected {}",
                p.coords.len(),
                self.q
            )));
        }
        match self.kind {
            ManifoldKind::Euclidean => Ok(()),
            ManifoldKind::Sphere | ManifoldKind::So3Quat => {
                if (p.coords.norm() - 1.0).abs() > 1e-12 {
                    Err(Error::Mismatch(format!(
                        "sphere point has norm {:.17}",
                        p.coords.norm()
                    )))
                } else {
                    Ok(())
                }
            }
            ManifoldKind::Spd => {
                let m = self.as_matrix(&p.coords);
                if (&m - m.transpose()).amax() > 1e-12 {
                    return Err(Error::Mismatch("SPD point is not symmetric".into()));
                }
                let eig = m.symmetric_eigen();
                if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
                    return Err(Error::NotPositiveDefinite("SPD point".into()));
                }
                Ok(())
            }
        }
    }

    pub fn validate_tangent(&self, t: &Tangent) -> Result<()> {
        self.validate_point(&t.base)?;
        if t.vec.len() != self.q {
            return Err(Error::Mismatch("tangent vector length".into()));
        }
        match self.kind {
            ManifoldKind::Euclidean => Ok(()),
            ManifoldKind::Sphere | ManifoldKind::So3Quat => {
                if t.base.coords.dot(&t.vec).abs() > 1e-10 {
                    Err(Error::Mismatch("tangent not orthogonal to sphere point".into()))
                } else {
                    Ok(())
                }
            }
            ManifoldKind::Spd => {
                let m = self.as_matrix(&t.vec);
                if (&m - m.transpose()).amax() > 1e-10 {
                    Err(Error::Mismatch("SPD tangent is not symmetric".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Remove the numerically normal component of `v` at `base` (sphere),
    /// symmetrize (SPD), or pass through (Euclidean).
    pub fn project_tangent(&self, base: &Point, v: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Euclidean => v.clone(),
            ManifoldKind::Sphere | ManifoldKind::So3Quat => {
                v - &base.coords * base.coords.dot(v)
            }
            ManifoldKind::Spd => {
                let m = self.as_matrix(v);
                self.flatten_matrix(&(0.5 * (&m + m.transpose())))
            }
        }
    }

    /// Riemannian inner product of two tangent vectors at `base`.
    pub fn inner(&self, base: &Point, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::Sphere | ManifoldKind::So3Quat => u.dot(v),
            ManifoldKind::Spd => {
                let p = self.as_matrix(&base.coords);
                let pinv = p
                    .cholesky()
                    .map(|c| c.inverse())
                    .unwrap_or_else(|| self.as_matrix(&base.coords).try_inverse().expect("SPD base"));
                let a = &pinv * self.as_matrix(u);
                let b = &pinv * self.as_matrix(v);
                (&a * &b).trace()
            }
        }
    }

    pub fn norm(&self, base: &Point, v: &DVector<f64>) -> f64 {
        self.inner(base, v, v).max(0.0).sqrt()
    }

    /// Exponential map. Globally defined on all four manifolds.
    pub fn exp(&self, t: &Tangent) -> Point {
        match self.kind {
            ManifoldKind::Euclidean => Point::new(&t.base.coords + &t.vec),
            ManifoldKind::Sphere | ManifoldKind::So3Quat => {
                let n = t.vec.norm();
                if n < SPHERE_SMALL {
                    let p = &t.base.coords + &t.vec;
                    Point::new(&p / p.norm())
                } else {
                    let p = &t.base.coords * n.cos() + &t.vec * (n.sin() / n);
                    Point::new(&p / p.norm())
                }
            }
            ManifoldKind::Spd => {
                let p = self.as_matrix(&t.base.coords);
                let y = self.as_matrix(&t.vec);
                let (s, si) = spd_sqrt_pair(&p).expect("SPD base point");
                let inner = sym_part(&(&si * y * &si));
                let e = sym_funcm(MatFn::Exp, &inner).expect("exp of symmetric matrix");
                let x = sym_part(&(&s * e * &s));
                Point::new(self.flatten_matrix(&x))
            }
        }
    }

    /// Inverse exponential map. Errors when `x` lies on the cut locus of `p`.
    pub fn log(&self, p: &Point, x: &Point) -> Result<Tangent> {
        match self.kind {
            ManifoldKind::Euclidean => Ok(Tangent::new(p.clone(), &x.coords - &p.coords)),
            ManifoldKind::Sphere | ManifoldKind::So3Quat => {
                let c = clamp_unit(p.coords.dot(&x.coords));
                let u = sphere_angle(&p.coords, &x.coords);
                if u > std::f64::consts::PI - SPHERE_CUT_TOL {
                    return Err(Error::CutLocus(format!(
                        "sphere points at angle {:.12} are numerically antipodal",
                        u
                    )));
                }
                if u < SPHERE_SMALL {
                    let v = self.project_tangent(p, &(&x.coords - &p.coords));
                    return Ok(Tangent::new(p.clone(), v));
                }
                let v = (&x.coords - &p.coords * c) * (u / u.sin());
                Ok(Tangent::new(p.clone(), self.project_tangent(p, &v)))
            }
            ManifoldKind::Spd => {
                let pm = self.as_matrix(&p.coords);
                let xm = self.as_matrix(&x.coords);
                let (s, si) = spd_sqrt_pair(&pm)?;
                let inner = sym_part(&(&si * xm * &si));
                let l = sym_funcm(MatFn::Log, &inner)?;
                let y = sym_part(&(&s * l * &s));
                Ok(Tangent::new(p.clone(), self.flatten_matrix(&y)))
            }
        }
    }

    /// Geodesic distance.
    pub fn distance(&self, p: &Point, x: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => (&x.coords - &p.coords).norm(),
            ManifoldKind::Sphere | ManifoldKind::So3Quat => sphere_angle(&p.coords, &x.coords),
            ManifoldKind::Spd => {
                let pm = self.as_matrix(&p.coords);
                let xm = self.as_matrix(&x.coords);
                let (_, si) = spd_sqrt_pair(&pm).expect("SPD base point");
                let inner = sym_part(&(&si * xm * &si));
                match sym_funcm(MatFn::Log, &inner) {
                    Ok(l) => l.norm(),
                    Err(_) => f64::INFINITY,
                }
            }
        }
    }

    /// Parallel transport of `t` along the minimizing geodesic from `t.base`
    /// to `p2`.
    pub fn transport(&self, p2: &Point, t: &Tangent) -> Result<Tangent> {
        let op = self.transport_op(&t.base, p2)?;
        Ok(Tangent::new(p2.clone(), op.apply(self, &t.vec)))
    }

    /// Precompute the parallel transport along the minimizing geodesic from
    /// `p` to `p2`, to be applied to many tangent vectors at `p`.
    pub fn transport_op(&self, p: &Point, p2: &Point) -> Result<SegmentTransport> {
        let kind = match self.kind {
            ManifoldKind::Euclidean => SegKind::Identity,
            ManifoldKind::Sphere | ManifoldKind::So3Quat => {
                let pc = &p.coords;
                let c = clamp_unit(pc.dot(&p2.coords));
                let v = sphere_angle(pc, &p2.coords);
                if v > std::f64::consts::PI - SPHERE_CUT_TOL {
                    return Err(Error::CutLocus("transport between antipodal points".into()));
                }
                if v < SPHERE_SMALL {
                    SegKind::Identity
                } else {
                    SegKind::SphereRotation {
                        p: pc.clone(),
                        w: (&p2.coords - pc * c) / v.sin(),
                        cos_v: v.cos(),
                        sin_v: v.sin(),
                    }
                }
            }
            ManifoldKind::Spd => {
                let pm = self.as_matrix(&p.coords);
                let qm = self.as_matrix(&p2.coords);
                // E = (P' P^{-1})^{1/2} computed with symmetric inner factors:
                // E = A (A P^{-1} A)^{1/2} A^{-1}, with A = P'^{1/2}.
                let (a, ai) = spd_sqrt_pair(&qm)?;
                let pinv = pm
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::NotPositiveDefinite("transport base".into()))?
                    .inverse();
                let k = sym_part(&(&a * pinv * &a));
                let ks = sym_funcm(MatFn::Sqrt, &k)?;
                SegKind::SpdCongruence { e: &a * ks * &ai }
            }
        };
        Ok(SegmentTransport { target: p2.clone(), kind })
    }

    /// An orthonormal frame of the tangent space at `b`: a q x d matrix whose
    /// columns are orthonormal under the Riemannian inner product at `b`.
    pub fn frame_at(&self, b: &Point) -> DMatrix<f64> {
        match self.kind {
            ManifoldKind::Euclidean => DMatrix::identity(self.q, self.d),
            ManifoldKind::Sphere | ManifoldKind::So3Quat => {
                // Eigenvectors of I - b b^T with unit eigenvalue span T_b.
                let proj = DMatrix::identity(self.q, self.q)
                    - &b.coords * b.coords.transpose();
                let eig = proj.symmetric_eigen();
                let mut cols: Vec<(f64, DVector<f64>)> = (0..self.q)
                    .filter(|&i| eig.eigenvalues[i] > 0.5)
                    .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
                    .collect();
                debug_assert_eq!(cols.len(), self.d);
                // Deterministic column order: leading nonzero entry sign fixed.
                for (_, c) in cols.iter_mut() {
                    let lead = c.iter().cloned().find(|x| x.abs() > 1e-9).unwrap_or(1.0);
                    if lead < 0.0 {
                        *c = -&*c;
                    }
                }
                DMatrix::from_columns(&cols.iter().map(|(_, c)| c.clone()).collect::<Vec<_>>())
            }
            ManifoldKind::Spd => {
                let r = self.spd_side();
                let pm = self.as_matrix(&b.coords);
                let (s, _) = spd_sqrt_pair(&pm).expect("SPD base point");
                let mut cols = Vec::with_capacity(self.d);
                for i in 0..r {
                    let mut e = DMatrix::zeros(r, r);
                    e[(i, i)] = 1.0;
                    cols.push(self.flatten_matrix(&sym_part(&(&s * e * &s))));
                }
                let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
                for i in 0..r {
                    for j in (i + 1)..r {
                        let mut e = DMatrix::zeros(r, r);
                        e[(i, j)] = inv_sqrt2;
                        e[(j, i)] = inv_sqrt2;
                        cols.push(self.flatten_matrix(&sym_part(&(&s * e * &s))));
                    }
                }
                DMatrix::from_columns(&cols)
            }
        }
    }

    /// Coordinates of tangent vector `v` at `base` in the columns of `frame`
    /// (the metric adjoint of the frame).
    pub fn frame_coords(&self, base: &Point, frame: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::Sphere | ManifoldKind::So3Quat => {
                frame.transpose() * v
            }
            ManifoldKind::Spd => DVector::from_iterator(
                frame.ncols(),
                (0..frame.ncols()).map(|i| self.inner(base, &frame.column(i).into_owned(), v)),
            ),
        }
    }
}

/// Cached per-point factorizations (the SPD square root, its inverse, and
/// the point inverse) reused across the many logs, transports, and inner
/// products taken at one base point.
#[derive(Debug, Clone)]
pub(crate) struct BaseOps {
    pub(crate) point: Point,
    spd: Option<SpdOps>,
}

#[derive(Debug, Clone)]
struct SpdOps {
    sqrt: DMatrix<f64>,
    isqrt: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl ManifoldDescriptor {
    pub(crate) fn base_ops(&self, p: &Point) -> Result<BaseOps> {
        let spd = match self.kind {
            ManifoldKind::Spd => {
                let pm = self.as_matrix(&p.coords);
                let (sqrt, isqrt) = spd_sqrt_pair(&pm)?;
                let inv = sym_part(&(&isqrt * &isqrt));
                Some(SpdOps { sqrt, isqrt, inv })
            }
            _ => None,
        };
        Ok(BaseOps { point: p.clone(), spd })
    }

    pub(crate) fn log_at(&self, base: &BaseOps, x: &Point) -> Result<DVector<f64>> {
        match (&base.spd, self.kind) {
            (Some(ops), ManifoldKind::Spd) => {
                let xm = self.as_matrix(&x.coords);
                let inner = sym_part(&(&ops.isqrt * xm * &ops.isqrt));
                let l = sym_funcm(MatFn::Log, &inner)?;
                Ok(self.flatten_matrix(&sym_part(&(&ops.sqrt * l * &ops.sqrt))))
            }
            _ => Ok(self.log(&base.point, x)?.vec),
        }
    }

    pub(crate) fn exp_at(&self, base: &BaseOps, v: &DVector<f64>) -> Point {
        match (&base.spd, self.kind) {
            (Some(ops), ManifoldKind::Spd) => {
                let y = self.as_matrix(v);
                let inner = sym_part(&(&ops.isqrt * y * &ops.isqrt));
                let e = sym_funcm(MatFn::Exp, &inner).expect("exp of symmetric matrix");
                Point::new(self.flatten_matrix(&sym_part(&(&ops.sqrt * e * &ops.sqrt))))
            }
            _ => self.exp(&Tangent::new(base.point.clone(), v.clone())),
        }
    }

    /// Coordinates of `v` in the tangent vectors `cols` at the cached base.
    pub(crate) fn coords_at(
        &self,
        base: &BaseOps,
        cols: &[DVector<f64>],
        v: &DVector<f64>,
    ) -> DVector<f64> {
        match (&base.spd, self.kind) {
            (Some(ops), ManifoldKind::Spd) => {
                // <c, v>_P = tr(P^{-1} c P^{-1} v) = vec(c) . vec(P^{-1} v P^{-1})
                let y = sym_part(&(&ops.inv * self.as_matrix(v) * &ops.inv));
                let yv = self.flatten_matrix(&y);
                DVector::from_iterator(cols.len(), cols.iter().map(|c| c.dot(&yv)))
            }
            _ => DVector::from_iterator(cols.len(), cols.iter().map(|c| c.dot(v))),
        }
    }

    /// Transport between two cached base points, reusing their
    /// factorizations.
    pub(crate) fn transport_op_between(
        &self,
        from: &BaseOps,
        to: &BaseOps,
    ) -> Result<SegmentTransport> {
        match (self.kind, &from.spd, &to.spd) {
            (ManifoldKind::Spd, Some(f), Some(t)) => {
                let k = sym_part(&(&t.sqrt * &f.inv * &t.sqrt));
                let ks = sym_funcm(MatFn::Sqrt, &k)?;
                Ok(SegmentTransport {
                    target: to.point.clone(),
                    kind: SegKind::SpdCongruence { e: &t.sqrt * ks * &t.isqrt },
                })
            }
            _ => self.transport_op(&from.point, &to.point),
        }
    }
}

/// A parallel transport along one minimizing geodesic, precomputed so it can
/// be applied to many tangent vectors.
#[derive(Debug, Clone)]
pub struct SegmentTransport {
    target: Point,
    kind: SegKind,
}

#[derive(Debug, Clone)]
enum SegKind {
    Identity,
    SphereRotation { p: DVector<f64>, w: DVector<f64>, cos_v: f64, sin_v: f64 },
    SpdCongruence { e: DMatrix<f64> },
}

impl SegmentTransport {
    pub fn target(&self) -> &Point {
        &self.target
    }

    pub fn apply(&self, m: &ManifoldDescriptor, v: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            SegKind::Identity => match m.kind {
                ManifoldKind::Euclidean => v.clone(),
                _ => m.project_tangent(&self.target, v),
            },
            SegKind::SphereRotation { p, w, cos_v, sin_v } => {
                let wy = w.dot(v);
                let out = v + w * ((cos_v - 1.0) * wy) - p * (sin_v * wy);
                m.project_tangent(&self.target, &out)
            }
            SegKind::SpdCongruence { e } => {
                let y = m.as_matrix(v);
                let out = sym_part(&(e * y * e.transpose()));
                DVector::from_iterator(m.q, out.transpose().iter().cloned())
            }
        }
    }
}

fn sym_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Square root and inverse square root of a symmetric positive-definite
/// matrix from a single eigendecomposition.
fn spd_sqrt_pair(p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (eigenvalues, eigenvectors) = crate::linalg::sym_eigen(p);
    let max_ev = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let positive_definite = min_ev > PD_RTOL * max_ev.max(0.0);
    if !positive_definite {
        return Err(Error::NotPositiveDefinite(format!(
            "matrix with eigenvalue range [{:.3e}, {:.3e}]",
            min_ev, max_ev
        )));
    }
    let n = p.nrows();
    let sq = DVector::from_iterator(n, eigenvalues.iter().map(|l| l.sqrt()));
    let isq = DVector::from_iterator(n, eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    let s = &eigenvectors * DMatrix::from_diagonal(&sq) * eigenvectors.transpose();
    let si = &eigenvectors * DMatrix::from_diagonal(&isq) * eigenvectors.transpose();
    Ok((sym_part(&s), sym_part(&si)))
}
