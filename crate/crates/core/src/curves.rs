//! Discrete-time curves and the four maps between curves on a manifold and
//! curves in a fixed tangent space: unrolling, rolling, unwrapping, and
//! wrapping. All four are computed with piecewise-geodesic recursions; the
//! frame is parallel-transported forward along the base curve once, so each
//! map costs O(r d) transports.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{ManifoldDescriptor, ManifoldKind, Point, Tangent};

/// Sphere curves with consecutive points farther apart than pi minus this
/// are rejected as crossing the cut locus.
const CURVE_CUT_TOL: f64 = 1e-6;

/// Equally spaced time stamps t_i = (i-1)/(r-1) on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidSpec("time grid needs r >= 2".into()));
        }
        let times = (0..r).map(|i| i as f64 / (r - 1) as f64).collect();
        Ok(TimeGrid { times })
    }

    /// Build from explicit times, enforcing equal spacing.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidSpec("time grid needs r >= 2".into()));
        }
        let r = times.len();
        let h = 1.0 / (r - 1) as f64;
        for (i, &t) in times.iter().enumerate() {
            if (t - i as f64 * h).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "time grid is not equally spaced on [0,1] at index {}",
                    i
                )));
            }
        }
        Ok(TimeGrid { times })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// r time-stamped points on a manifold.
#[derive(Debug, Clone)]
pub struct DiscreteCurve {
    pub manifold: ManifoldDescriptor,
    pub grid: TimeGrid,
    pub points: Vec<Point>,
}

impl DiscreteCurve {
    pub fn new(manifold: ManifoldDescriptor, grid: TimeGrid, points: Vec<Point>) -> Result<Self> {
        if points.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} points for a grid of {}",
                points.len(),
                grid.len()
            )));
        }
        for p in &points {
            manifold.validate_point(p)?;
        }
        Ok(DiscreteCurve { manifold, grid, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A curve in the tangent space at `b`, stored as frame coordinates: the
/// d x r matrix of coordinates of (the translated flat curve minus b) in the
/// columns of `frame`.
#[derive(Debug, Clone)]
pub struct FlatCurve {
    pub b: Point,
    pub frame: DMatrix<f64>,
    pub grid: TimeGrid,
    pub coords: DMatrix<f64>,
}

impl FlatCurve {
    pub fn new(b: Point, frame: DMatrix<f64>, grid: TimeGrid, coords: DMatrix<f64>) -> Result<Self> {
        if coords.ncols() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} coordinate columns for a grid of {}",
                coords.ncols(),
                grid.len()
            )));
        }
        if coords.nrows() != frame.ncols() {
            return Err(Error::Mismatch("coords rows must equal frame columns".into()));
        }
        Ok(FlatCurve { b, frame, grid, coords })
    }
}

fn check_segment(m: &ManifoldDescriptor, a: &Point, b: &Point) -> Result<()> {
    if matches!(m.kind, ManifoldKind::Sphere | ManifoldKind::So3Quat)
        && m.distance(a, b) > std::f64::consts::PI - CURVE_CUT_TOL
    {
        return Err(Error::CutLocus("consecutive curve points nearly antipodal".into()));
    }
    Ok(())
}

/// Parallel transport of `t` along the piecewise geodesic through the curve
/// points from index `j_from` to index `j_to`.
pub fn transport_along(c: &DiscreteCurve, j_from: usize, j_to: usize, t: &Tangent) -> Result<Tangent> {
    let m = &c.manifold;
    let mut cur = t.clone();
    if j_from <= j_to {
        for j in j_from..j_to {
            check_segment(m, &c.points[j], &c.points[j + 1])?;
            cur = m.transport(&c.points[j + 1], &cur)?;
        }
    } else {
        for j in (j_to..j_from).rev() {
            check_segment(m, &c.points[j + 1], &c.points[j])?;
            cur = m.transport(&c.points[j], &cur)?;
        }
    }
    Ok(cur)
}

/// The orthonormal frame at `b` carried along the curve: first along the
/// minimizing geodesic from `b` to the curve start, then forward along the
/// curve segments. Each segment's transport and the per-point
/// factorizations are computed once and shared by all d columns (and by all
/// curves in the batched unwrapping).
struct MovingFrame {
    at: crate::manifold::BaseOps,
    cols: Vec<DVector<f64>>,
}

impl MovingFrame {
    fn start(m: &ManifoldDescriptor, b: &Point, frame: &DMatrix<f64>, start: &Point) -> Result<Self> {
        check_segment(m, b, start)?;
        let from = m.base_ops(b)?;
        let at = m.base_ops(start)?;
        let op = m.transport_op_between(&from, &at)?;
        let cols = (0..frame.ncols()).map(|i| op.apply(m, &frame.column(i).into_owned())).collect();
        Ok(MovingFrame { at, cols })
    }

    fn advance(&mut self, m: &ManifoldDescriptor, next: &Point) -> Result<()> {
        check_segment(m, &self.at.point, next)?;
        let to = m.base_ops(next)?;
        let op = m.transport_op_between(&self.at, &to)?;
        for c in self.cols.iter_mut() {
            *c = op.apply(m, c);
        }
        self.at = to;
        Ok(())
    }

    fn log(&self, m: &ManifoldDescriptor, x: &Point) -> Result<DVector<f64>> {
        m.log_at(&self.at, x)
    }

    fn coords_of(&self, m: &ManifoldDescriptor, v: &DVector<f64>) -> DVector<f64> {
        m.coords_at(&self.at, &self.cols, v)
    }

    fn vector_of(&self, coords: &DVector<f64>) -> DVector<f64> {
        let q = self.cols[0].len();
        let mut v = DVector::zeros(q);
        for (i, c) in self.cols.iter().enumerate() {
            v += c * coords[i];
        }
        v
    }
}

/// Unroll a curve into the tangent space at `b` with coordinates in `frame`.
pub fn unroll(c: &DiscreteCurve, b: &Point, frame: &DMatrix<f64>) -> Result<FlatCurve> {
    let coords = unwrap_coords_impl(&[], c, b, frame)?.base;
    FlatCurve::new(b.clone(), frame.clone(), c.grid.clone(), coords)
}

/// Roll a flat curve onto the manifold. Inverse of [`unroll`].
pub fn roll(f: &FlatCurve, m: &ManifoldDescriptor) -> Result<DiscreteCurve> {
    let r = f.grid.len();
    let mut points = Vec::with_capacity(r);
    let v0 = &f.frame * f.coords.column(0).into_owned();
    let p0 = m.exp(&Tangent::new(f.b.clone(), v0));
    let mut moving = MovingFrame::start(m, &f.b, &f.frame, &p0)?;
    points.push(p0);
    for j in 0..r - 1 {
        let delta = f.coords.column(j + 1).into_owned() - f.coords.column(j).into_owned();
        let v = moving.vector_of(&delta);
        let next = m.exp_at(&moving.at, &v);
        moving.advance(m, &next)?;
        points.push(next);
    }
    DiscreteCurve::new(*m, f.grid.clone(), points)
}

struct UnwrapBatch {
    /// Unrolling coordinates of the base curve.
    base: DMatrix<f64>,
    /// Unwrapping coordinates of each input curve.
    curves: Vec<DMatrix<f64>>,
}

/// Shared walk along the base curve `g`: unrolls `g` and unwraps every curve
/// in `xs` against it, transporting the frame once per segment.
fn unwrap_coords_impl(
    xs: &[&DiscreteCurve],
    g: &DiscreteCurve,
    b: &Point,
    frame: &DMatrix<f64>,
) -> Result<UnwrapBatch> {
    let m = &g.manifold;
    let r = g.len();
    let d = frame.ncols();
    for x in xs {
        if x.manifold != *m {
            return Err(Error::Mismatch("curves on different manifolds".into()));
        }
        if x.len() != r {
            return Err(Error::Mismatch("curves on different grids".into()));
        }
    }
    let mut base = DMatrix::zeros(d, r);
    let mut curves = vec![DMatrix::zeros(d, r); xs.len()];
    let mut moving = MovingFrame::start(m, b, frame, &g.points[0])?;
    let ops_b = m.base_ops(b)?;
    let frame_cols: Vec<DVector<f64>> =
        (0..d).map(|i| frame.column(i).into_owned()).collect();
    let mut base_col = m.coords_at(&ops_b, &frame_cols, &m.log_at(&ops_b, &g.points[0])?);
    for j in 0..r {
        base.set_column(j, &base_col);
        for (x, out) in xs.iter().zip(curves.iter_mut()) {
            let dev = moving.log(m, &x.points[j])?;
            let col = &base_col + moving.coords_of(m, &dev);
            out.set_column(j, &col);
        }
        if j + 1 < r {
            check_segment(m, &g.points[j], &g.points[j + 1])?;
            let v = moving.log(m, &g.points[j + 1])?;
            base_col += moving.coords_of(m, &v);
            moving.advance(m, &g.points[j + 1])?;
        }
    }
    Ok(UnwrapBatch { base, curves })
}

/// Unwrap `x` with respect to the base curve `g`, into the tangent space at
/// `b` with coordinates in `frame`.
pub fn unwrap(x: &DiscreteCurve, g: &DiscreteCurve, b: &Point, frame: &DMatrix<f64>) -> Result<FlatCurve> {
    let mut batch = unwrap_coords_impl(&[x], g, b, frame)?;
    FlatCurve::new(b.clone(), frame.clone(), g.grid.clone(), batch.curves.remove(0))
}

/// Unwrap many curves against one base curve in a single walk.
pub fn unwrap_batch(
    xs: &[DiscreteCurve],
    g: &DiscreteCurve,
    b: &Point,
    frame: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let refs: Vec<&DiscreteCurve> = xs.iter().collect();
    Ok(unwrap_coords_impl(&refs, g, b, frame)?.curves)
}

/// Wrap a flat curve onto the manifold with respect to the base curve `g`.
/// Inverse of [`unwrap`].
pub fn wrap(y: &FlatCurve, g: &DiscreteCurve) -> Result<DiscreteCurve> {
    if y.grid.len() != g.len() {
        return Err(Error::Mismatch("flat curve and base curve grids differ".into()));
    }
    let m = &g.manifold;
    let r = g.len();
    let mut points = Vec::with_capacity(r);
    let ops_b = m.base_ops(&y.b)?;
    let d = y.frame.ncols();
    let frame_cols: Vec<DVector<f64>> =
        (0..d).map(|i| y.frame.column(i).into_owned()).collect();
    let mut base_col = m.coords_at(&ops_b, &frame_cols, &m.log_at(&ops_b, &g.points[0])?);
    let mut moving = MovingFrame::start(m, &y.b, &y.frame, &g.points[0])?;
    for j in 0..r {
        let dev = y.coords.column(j).into_owned() - &base_col;
        if matches!(m.kind, ManifoldKind::Sphere | ManifoldKind::So3Quat)
            && dev.norm() > std::f64::consts::PI - CURVE_CUT_TOL
        {
            return Err(Error::CutLocus("deviation exceeds injectivity domain".into()));
        }
        let v = moving.vector_of(&dev);
        points.push(m.exp_at(&moving.at, &v));
        if j + 1 < r {
            check_segment(m, &g.points[j], &g.points[j + 1])?;
            let v = moving.log(m, &g.points[j + 1])?;
            base_col += moving.coords_of(m, &v);
            moving.advance(m, &g.points[j + 1])?;
        }
    }
    DiscreteCurve::new(*m, g.grid.clone(), points)
}
