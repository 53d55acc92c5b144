//! Sample Fréchet means of points and of curves, by Riemannian fixed-point
//! iteration: p <- exp_p(step * mean of log_p(x_i)), with step halving
//! whenever the Fréchet functional fails to decrease.

use crate::curves::{DiscreteCurve, TimeGrid};
use crate::error::{Error, Result};
use crate::manifold::{ManifoldDescriptor, Point, Tangent};

#[derive(Debug, Clone, Copy)]
pub struct FrechetConfig {
    pub max_iter: usize,
    /// Gradient-norm threshold on the tangent mean of logs.
    pub tol: f64,
    /// Relaxation factor in (0, 1].
    pub step: f64,
}

impl Default for FrechetConfig {
    fn default() -> Self {
        FrechetConfig { max_iter: 200, tol: 1e-10, step: 1.0 }
    }
}

impl FrechetConfig {
    fn validate(&self) -> Result<()> {
        let tol_ok = self.tol > 0.0;
        if !tol_ok {
            return Err(Error::InvalidSpec("Fréchet tolerance must be positive".into()));
        }
        let step_ok = self.step > 0.0 && self.step <= 1.0;
        if !step_ok {
            return Err(Error::InvalidSpec("Fréchet step must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Empirical Fréchet functional (1/n) sum of squared distances.
pub fn frechet_functional(m: &ManifoldDescriptor, p: &Point, pts: &[Point]) -> f64 {
    let n = pts.len() as f64;
    pts.iter().map(|x| m.distance(p, x).powi(2)).sum::<f64>() / n
}

fn logs_and_functional(
    m: &ManifoldDescriptor,
    p: &Point,
    pts: &[Point],
) -> Result<(Vec<Tangent>, f64)> {
    let mut f = 0.0;
    let mut logs = Vec::with_capacity(pts.len());
    for x in pts {
        let l = m.log(p, x)?;
        f += m.inner(p, &l.vec, &l.vec);
        logs.push(l);
    }
    Ok((logs, f / pts.len() as f64))
}

fn mean_log(p: &Point, logs: &[Tangent]) -> Tangent {
    let q = p.coords.len();
    let mut v = nalgebra::DVector::zeros(q);
    for l in logs {
        v += &l.vec;
    }
    Tangent::new(p.clone(), v / logs.len() as f64)
}

pub fn frechet_mean(m: &ManifoldDescriptor, pts: &[Point], cfg: &FrechetConfig) -> Result<Point> {
    if pts.is_empty() {
        return Err(Error::InvalidSpec("Fréchet mean of an empty sample".into()));
    }
    frechet_mean_from(m, pts[0].clone(), pts, cfg)
}

/// Fixed-point iteration started from `init` (used for warm starts along
/// curves).
pub fn frechet_mean_from(
    m: &ManifoldDescriptor,
    init: Point,
    pts: &[Point],
    cfg: &FrechetConfig,
) -> Result<Point> {
    cfg.validate()?;
    let mut p = init;
    let (mut logs, mut f) = logs_and_functional(m, &p, pts)?;
    for _ in 0..cfg.max_iter {
        let g = mean_log(&p, &logs);
        if m.norm(&p, &g.vec) <= cfg.tol {
            return Ok(p);
        }
        // Take the relaxed gradient step; halve it while the functional
        // increases (1e-12 slack).
        let mut step = cfg.step;
        loop {
            let candidate = m.exp(&Tangent::new(p.clone(), &g.vec * step));
            match logs_and_functional(m, &candidate, pts) {
                Ok((cl, cf)) if cf <= f + 1e-12 => {
                    p = candidate;
                    logs = cl;
                    f = cf;
                    break;
                }
                Ok(_) | Err(Error::CutLocus(_)) if step > 1e-8 => {
                    step *= 0.5;
                }
                Err(e) if !matches!(e, Error::CutLocus(_)) => return Err(e),
                _ => {
                    return Err(Error::NoConvergence {
                        what: "Fréchet mean step halving".into(),
                        iterations: cfg.max_iter,
                    })
                }
            }
        }
    }
    // Accept if the final iterate already satisfies the first-order condition.
    let g = mean_log(&p, &logs);
    if m.norm(&p, &g.vec) <= cfg.tol {
        Ok(p)
    } else {
        Err(Error::NoConvergence { what: "Fréchet mean".into(), iterations: cfg.max_iter })
    }
}

/// Pointwise Fréchet mean curve of a sample of curves on a shared grid,
/// warm-started at the previous time's mean.
pub fn frechet_mean_curve(samples: &[DiscreteCurve], cfg: &FrechetConfig) -> Result<DiscreteCurve> {
    if samples.is_empty() {
        return Err(Error::InvalidSpec("Fréchet mean curve of an empty sample".into()));
    }
    let m = samples[0].manifold;
    let grid = samples[0].grid.clone();
    for s in samples.iter().skip(1) {
        if s.manifold != m || s.grid != grid {
            return Err(Error::Mismatch("curves disagree in manifold or grid".into()));
        }
    }
    let r = grid.len();
    let mut points: Vec<Point> = Vec::with_capacity(r);
    for j in 0..r {
        let pts: Vec<Point> = samples.iter().map(|s| s.points[j].clone()).collect();
        let init = if j == 0 { pts[0].clone() } else { points[j - 1].clone() };
        points.push(frechet_mean_from(&m, init, &pts, cfg)?);
    }
    DiscreteCurve::new(m, TimeGrid::uniform(r)?, points)
}
