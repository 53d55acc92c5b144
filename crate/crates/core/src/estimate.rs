//! Parameter estimation from observed curve samples: the closed-form
//! unrolled-Fréchet-mean estimator, least-squares and weighted (MLE-style)
//! estimators of the mean matrix via quasi-Newton optimization, flip-flop
//! covariance estimation with trace normalization, and the matrix-normal
//! log-likelihood.

use nalgebra::{DMatrix, DVector};

use crate::basis::{bspline_matrix, right_inverse, BasisSpec};
use crate::curves::DiscreteCurve;
use crate::error::{Error, Result};
use crate::frechet::{frechet_mean_curve, FrechetConfig};
use crate::manifold::Point;
use crate::model::{unwrap_coords, MNParams};
use crate::optim::{minimize_bfgs, OptimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Fre,
    Ls,
    Mle,
}

#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub method: FitMethod,
    pub flipflop_max_iter: usize,
    /// Relative Frobenius change of both covariance factors.
    pub flipflop_tol: f64,
    pub optimizer_max_iter: usize,
    pub optimizer_tol: f64,
    /// Central finite-difference step for mean-matrix gradients.
    pub fd_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: FitMethod::Fre,
            flipflop_max_iter: 100,
            flipflop_tol: 1e-9,
            optimizer_max_iter: 500,
            optimizer_tol: 1e-8,
            fd_step: 1e-5,
        }
    }
}

impl FitConfig {
    pub fn with_method(method: FitMethod) -> Self {
        FitConfig { method, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        let positive = self.flipflop_tol > 0.0 && self.optimizer_tol > 0.0 && self.fd_step > 0.0;
        if !positive {
            return Err(Error::InvalidSpec("fit tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MNParams,
    /// The curve used for unwrapping: the sample Fréchet mean for `Fre`, the
    /// rolled fitted mean for `Ls` and `Mle`.
    pub gamma_hat: DiscreteCurve,
    pub loglik: f64,
    pub iterations: usize,
    pub method: FitMethod,
}

/// Matrix-normal log-likelihood of coefficient matrices, omitting the
/// additive constant:
/// -(nk/2) log|U| - (nd/2) log|V| - (1/2) sum tr{U^{-1}(W-M)V^{-1}(W-M)^T}.
pub fn mn_loglik(params: &MNParams, ws: &[DMatrix<f64>]) -> Result<f64> {
    let n = ws.len() as f64;
    let (d, k) = (params.d() as f64, params.k() as f64);
    let lu = crate::linalg::spd_logdet(&params.u_w)?;
    let lv = crate::linalg::spd_logdet(&params.v_w)?;
    let chol_u = params
        .u_w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("row covariance".into()))?;
    let chol_v = params
        .v_w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("column covariance".into()))?;
    let mut trace = 0.0;
    for w in ws {
        let r = w - &params.m_w;
        let ur = chol_u.solve(&r);
        let vr = chol_v.solve(&r.transpose());
        trace += (ur * vr).trace();
    }
    Ok(-0.5 * n * k * lu - 0.5 * n * d * lv - 0.5 * trace)
}

fn factor_eig_ok(a: &DMatrix<f64>) -> bool {
    let eig = a.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    max_ev > 0.0 && min_ev >= 1e-12 * max_ev
}

/// Output of the alternating covariance estimation.
#[derive(Debug, Clone)]
pub struct FlipFlop {
    pub u_w: DMatrix<f64>,
    pub v_w: DMatrix<f64>,
    pub sweeps: usize,
    /// Log-likelihood of the centered residuals after each sweep;
    /// non-decreasing up to numerical slack.
    pub loglik_path: Vec<f64>,
}

/// Alternating covariance updates for centered coefficient residuals,
/// renormalized to trace(U) = d each sweep.
pub fn flipflop(residuals: &[DMatrix<f64>], cfg: &FitConfig) -> Result<FlipFlop> {
    cfg.validate()?;
    let n = residuals.len();
    if n == 0 {
        return Err(Error::Degenerate("no residuals".into()));
    }
    let d = residuals[0].nrows();
    let k = residuals[0].ncols();
    if n * k <= d || n * d <= k {
        return Err(Error::InvalidSpec(format!(
            "flip-flop needs nk > d and nd > k (n={}, d={}, k={})",
            n, d, k
        )));
    }
    let zero_mean = DMatrix::zeros(d, k);
    let mut u = DMatrix::identity(d, d);
    let mut v = DMatrix::identity(k, k);
    let mut loglik_path = Vec::new();
    for sweep in 1..=cfg.flipflop_max_iter {
        let chol_v = v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("column factor lost positive definiteness".into()))?;
        let mut u_new = DMatrix::zeros(d, d);
        for r in residuals {
            let vr = chol_v.solve(&r.transpose());
            u_new += r * vr;
        }
        u_new /= (n * k) as f64;
        u_new = 0.5 * (&u_new + u_new.transpose());
        if !factor_eig_ok(&u_new) {
            return Err(Error::Degenerate("row covariance update is singular".into()));
        }
        u_new *= d as f64 / u_new.trace();

        let chol_u = u_new
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("row factor lost positive definiteness".into()))?;
        let mut v_new = DMatrix::zeros(k, k);
        for r in residuals {
            let ur = chol_u.solve(r);
            v_new += r.transpose() * ur;
        }
        v_new /= (n * d) as f64;
        v_new = 0.5 * (&v_new + v_new.transpose());
        if !factor_eig_ok(&v_new) {
            return Err(Error::Degenerate("column covariance update is singular".into()));
        }

        let du = (&u_new - &u).norm() / u.norm().max(1e-300);
        let dv = (&v_new - &v).norm() / v.norm().max(1e-300);
        u = u_new;
        v = v_new;
        let params = MNParams::new(zero_mean.clone(), u.clone(), v.clone())?;
        loglik_path.push(mn_loglik(&params, residuals)?);
        if du < cfg.flipflop_tol && dv < cfg.flipflop_tol {
            return Ok(FlipFlop { u_w: u, v_w: v, sweeps: sweep, loglik_path });
        }
    }
    Err(Error::NoConvergence { what: "flip-flop".into(), iterations: cfg.flipflop_max_iter })
}

type WeightPair<'a> =
    (&'a nalgebra::Cholesky<f64, nalgebra::Dyn>, &'a nalgebra::Cholesky<f64, nalgebra::Dyn>);

struct FitContext<'a> {
    data: &'a [DiscreteCurve],
    b: &'a Point,
    frame: &'a DMatrix<f64>,
    phi: DMatrix<f64>,
    phi_inv: DMatrix<f64>,
    grid: crate::curves::TimeGrid,
}

impl<'a> FitContext<'a> {
    fn new(
        data: &'a [DiscreteCurve],
        spec: &BasisSpec,
        b: &'a Point,
        frame: &'a DMatrix<f64>,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidSpec("cannot fit an empty sample".into()));
        }
        let manifold = data[0].manifold;
        let grid = data[0].grid.clone();
        for c in data.iter().skip(1) {
            if c.manifold != manifold || c.grid != grid {
                return Err(Error::Mismatch("curves disagree in manifold or grid".into()));
            }
        }
        let basis = bspline_matrix(spec, &grid)?;
        let phi_inv = right_inverse(&basis)?;
        Ok(FitContext { data, b, frame, phi: basis.values, phi_inv, grid })
    }

    fn manifold(&self) -> crate::manifold::ManifoldDescriptor {
        self.data[0].manifold
    }

    /// Coefficient matrices W_i = H(X_i; gamma) Phi^- for a base curve,
    /// computed in one shared walk along gamma.
    fn coefficients(&self, gamma: &DiscreteCurve) -> Result<Vec<DMatrix<f64>>> {
        let hs = crate::curves::unwrap_batch(self.data, gamma, self.b, self.frame)?;
        Ok(hs.into_iter().map(|h| h * &self.phi_inv).collect())
    }

    /// Roll the flat mean of a candidate coefficient matrix onto M.
    fn rolled_mean(&self, m_w: &DMatrix<f64>) -> Result<DiscreteCurve> {
        let coords = m_w * &self.phi;
        let flat = crate::curves::FlatCurve::new(
            self.b.clone(),
            self.frame.clone(),
            self.grid.clone(),
            coords,
        )?;
        crate::curves::roll(&flat, &self.manifold())
    }

    /// Unweighted least-squares objective at a candidate mean matrix;
    /// +infinity when the rolled mean crosses a cut locus.
    fn ls_objective(&self, m_w: &DMatrix<f64>) -> f64 {
        self.weighted_objective(m_w, None)
    }

    fn weighted_objective(&self, m_w: &DMatrix<f64>, weights: Option<WeightPair<'_>>) -> f64 {
        let gamma = match self.rolled_mean(m_w) {
            Ok(g) => g,
            Err(_) => return f64::INFINITY,
        };
        let hs = match crate::curves::unwrap_batch(self.data, &gamma, self.b, self.frame) {
            Ok(hs) => hs,
            Err(_) => return f64::INFINITY,
        };
        let mut total = 0.0;
        for h in hs {
            let r = h * &self.phi_inv - m_w;
            total += match weights {
                None => r.norm_squared(),
                Some((chol_u, chol_v)) => {
                    let ur = chol_u.solve(&r);
                    let vr = chol_v.solve(&r.transpose());
                    (ur * vr).trace()
                }
            };
        }
        total
    }
}

fn vec_to_mat(x: &DVector<f64>, d: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(d, k, x.as_slice())
}

fn mat_to_vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Closed-form estimator: unwrap against the sample Fréchet mean curve and
/// project onto the basis; covariances by flip-flop on the residuals.
pub fn fit_fre(
    data: &[DiscreteCurve],
    spec: &BasisSpec,
    b: &Point,
    frame: &DMatrix<f64>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let ctx = FitContext::new(data, spec, b, frame)?;
    let gamma = frechet_mean_curve(data, &FrechetConfig::default())?;
    let m_w = unwrap_coords(&gamma, &gamma, b, frame)? * &ctx.phi_inv;
    let ws = ctx.coefficients(&gamma)?;
    let residuals: Vec<DMatrix<f64>> = ws.iter().map(|w| w - &m_w).collect();
    let ff = flipflop(&residuals, cfg)?;
    let params = MNParams::new(m_w, ff.u_w, ff.v_w)?;
    let loglik = mn_loglik(&params, &ws)?;
    Ok(FitResult { params, gamma_hat: gamma, loglik, iterations: ff.sweeps, method: FitMethod::Fre })
}

/// Least-squares estimator of the mean matrix with the base curve re-rolled
/// from each candidate, minimized by BFGS with central finite differences,
/// initialized at the closed-form estimate.
pub fn fit_ls(
    data: &[DiscreteCurve],
    spec: &BasisSpec,
    b: &Point,
    frame: &DMatrix<f64>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let ctx = FitContext::new(data, spec, b, frame)?;
    let init = fit_fre(data, spec, b, frame, cfg)?;
    let (d, k) = (init.params.d(), init.params.k());
    let opts = OptimOptions {
        max_iter: cfg.optimizer_max_iter,
        tol: cfg.optimizer_tol,
        fd_step: cfg.fd_step,
    };
    let out = minimize_bfgs(
        |x| ctx.ls_objective(&vec_to_mat(x, d, k)),
        mat_to_vec(&init.params.m_w),
        &opts,
    );
    if !out.converged {
        return Err(Error::NoConvergence {
            what: "least-squares mean optimization".into(),
            iterations: out.iterations,
        });
    }
    let m_w = vec_to_mat(&out.x, d, k);
    finish_optimized(&ctx, m_w, out.iterations, FitMethod::Ls, cfg)
}

/// Weighted estimator alternating quasi-Newton minimization of the
/// covariance-weighted trace objective with flip-flop covariance updates,
/// until the mean matrix stabilizes.
pub fn fit_mle(
    data: &[DiscreteCurve],
    spec: &BasisSpec,
    b: &Point,
    frame: &DMatrix<f64>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let ctx = FitContext::new(data, spec, b, frame)?;
    let init = fit_fre(data, spec, b, frame, cfg)?;
    let (d, k) = (init.params.d(), init.params.k());
    let mut m_w = init.params.m_w.clone();
    let mut u_w = DMatrix::identity(d, d);
    let mut v_w = DMatrix::identity(k, k);
    let opts = OptimOptions {
        max_iter: cfg.optimizer_max_iter,
        tol: cfg.optimizer_tol,
        fd_step: cfg.fd_step,
    };
    for outer in 1..=cfg.optimizer_max_iter {
        let chol_u = u_w.clone().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite("weight matrix in mean update".into())
        })?;
        let chol_v = v_w.clone().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite("weight matrix in mean update".into())
        })?;
        let out = minimize_bfgs(
            |x| ctx.weighted_objective(&vec_to_mat(x, d, k), Some((&chol_u, &chol_v))),
            mat_to_vec(&m_w),
            &opts,
        );
        if !out.converged {
            return Err(Error::NoConvergence {
                what: "weighted mean optimization".into(),
                iterations: out.iterations,
            });
        }
        let m_new = vec_to_mat(&out.x, d, k);
        let gamma = ctx.rolled_mean(&m_new)?;
        let ws = ctx.coefficients(&gamma)?;
        let residuals: Vec<DMatrix<f64>> = ws.iter().map(|w| w - &m_new).collect();
        let ff = flipflop(&residuals, cfg)?;
        let (u_new, v_new) = (ff.u_w, ff.v_w);
        let rel = (&m_new - &m_w).norm() / m_w.norm().max(1.0);
        m_w = m_new;
        u_w = u_new;
        v_w = v_new;
        if rel < cfg.optimizer_tol {
            return finish_optimized(&ctx, m_w, outer, FitMethod::Mle, cfg);
        }
    }
    Err(Error::NoConvergence {
        what: "alternating weighted estimation".into(),
        iterations: cfg.optimizer_max_iter,
    })
}

fn finish_optimized(
    ctx: &FitContext,
    m_w: DMatrix<f64>,
    iterations: usize,
    method: FitMethod,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let gamma = ctx.rolled_mean(&m_w)?;
    let ws = ctx.coefficients(&gamma)?;
    let residuals: Vec<DMatrix<f64>> = ws.iter().map(|w| w - &m_w).collect();
    let ff = flipflop(&residuals, cfg)?;
    let params = MNParams::new(m_w, ff.u_w, ff.v_w)?;
    let loglik = mn_loglik(&params, &ws)?;
    Ok(FitResult { params, gamma_hat: gamma, loglik, iterations, method })
}

/// Fit with the method selected in the configuration.
pub fn fit(
    data: &[DiscreteCurve],
    spec: &BasisSpec,
    b: &Point,
    frame: &DMatrix<f64>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    match cfg.method {
        FitMethod::Fre => fit_fre(data, spec, b, frame, cfg),
        FitMethod::Ls => fit_ls(data, spec, b, frame, cfg),
        FitMethod::Mle => fit_mle(data, spec, b, frame, cfg),
    }
}

/// Diagnostic: the raw d x d empirical cross-covariance between two time
/// indices of a sample of unwrapping-coordinate matrices,
/// (1/n) sum_i (h_i(s) - mean(s)) (h_i(t) - mean(t))^T. The fitted model's
/// separable counterpart is phi(s)^T V_w phi(t) U_w.
pub fn empirical_covariance(hs: &[DMatrix<f64>], s: usize, t: usize) -> Result<DMatrix<f64>> {
    if hs.is_empty() {
        return Err(Error::InvalidSpec("covariance of an empty sample".into()));
    }
    let n = hs.len() as f64;
    let d = hs[0].nrows();
    let mut mean_s = nalgebra::DVector::zeros(d);
    let mut mean_t = nalgebra::DVector::zeros(d);
    for h in hs {
        mean_s += h.column(s);
        mean_t += h.column(t);
    }
    mean_s /= n;
    mean_t /= n;
    let mut cov = DMatrix::zeros(d, d);
    for h in hs {
        let ds = h.column(s) - &mean_s;
        let dt = h.column(t) - &mean_t;
        cov += ds * dt.transpose();
    }
    Ok(cov / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, sample_mn, MNParams};
    use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};

    fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (ar, ac) = a.shape();
        let (br, bc) = b.shape();
        DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
    }

    #[test]
    fn loglik_zero_for_centered_identity() {
        let params = MNParams::new(
            DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let l = mn_loglik(&params, std::slice::from_ref(&params.m_w)).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn loglik_invariant_under_reciprocal_scaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let params = MNParams::new(
            DMatrix::zeros(2, 3),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.1, 0.4, 1.0, 0.4, 0.1, 0.4, 1.0]),
        )
        .unwrap();
        let ws: Vec<DMatrix<f64>> = (0..4).map(|_| sample_mn(&params, &mut rng).unwrap()).collect();
        let base = mn_loglik(&params, &ws).unwrap();
        let c = 3.7;
        let scaled = MNParams::new(params.m_w.clone(), &params.u_w * c, &params.v_w / c).unwrap();
        let l2 = mn_loglik(&scaled, &ws).unwrap();
        assert!((base - l2).abs() < 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn loglik_matches_kronecker_oracle() {
        // dense multivariate-normal log-density of vec(W), up to the
        // omitted (dk/2) log(2 pi) constant, on d=2, k=3, n=5
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let params = MNParams::new(
            DMatrix::from_row_slice(2, 3, &[0.3, -0.2, 0.5, 1.0, 0.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.9]),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.1, 0.5, 0.2, 0.5, 0.9]),
        )
        .unwrap();
        let ws: Vec<DMatrix<f64>> = (0..5).map(|_| sample_mn(&params, &mut rng).unwrap()).collect();
        let sigma = kron(&params.v_w, &params.u_w); // vec(W) ~ N(vec(M), V kron U)
        let chol = sigma.clone().cholesky().unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        let mu = DVector::from_column_slice(params.m_w.as_slice());
        let mut oracle = 0.0;
        for w in &ws {
            let v = DVector::from_column_slice(w.as_slice()) - &mu;
            let q = v.dot(&chol.solve(&DMatrix::from_column_slice(6, 1, v.as_slice())).column(0).into_owned());
            oracle += -0.5 * logdet - 0.5 * q;
        }
        let l = mn_loglik(&params, &ws).unwrap();
        assert!((l - oracle).abs() < 1e-9, "mn {} oracle {}", l, oracle);
    }

    #[test]
    fn flipflop_recovers_covariances() {
        let d = 2;
        let k = 3;
        let n = 2000;
        let v_true = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.5, 0.2, 0.5, 1.0]);
        let params = MNParams::new(DMatrix::zeros(d, k), DMatrix::identity(d, d), v_true.clone()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let residuals: Vec<DMatrix<f64>> =
            (0..n).map(|_| sample_mn(&params, &mut rng).unwrap()).collect();
        let cfg = FitConfig::default();
        let ff = flipflop(&residuals, &cfg).unwrap();
        assert!(ff.sweeps < cfg.flipflop_max_iter);
        assert!((ff.u_w.trace() - d as f64).abs() < 1e-9);
        assert!((ff.u_w - DMatrix::identity(d, d)).norm() < 0.1);
        assert!((ff.v_w - v_true).norm() < 0.1);
        for w in ff.loglik_path.windows(2) {
            assert!(w[1] >= w[0] - 1e-8);
        }
    }

    #[test]
    fn flipflop_loglik_nondecreasing_and_scalar_reduction() {
        let params = MNParams::new(
            DMatrix::zeros(1, 4),
            DMatrix::identity(1, 1),
            DMatrix::from_fn(4, 4, |i, j| 0.6f64.powi((i as i32 - j as i32).abs()) * 2.0),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let residuals: Vec<DMatrix<f64>> =
            (0..50).map(|_| sample_mn(&params, &mut rng).unwrap()).collect();
        let cfg = FitConfig::default();
        let ff = flipflop(&residuals, &cfg).unwrap();
        // d=1: U is the scalar 1 after normalization and V is the pooled
        // sample covariance of the rows
        let (u, v) = (ff.u_w, ff.v_w);
        assert!((u[(0, 0)] - 1.0).abs() < 1e-12);
        let mut pooled = DMatrix::zeros(4, 4);
        for r in &residuals {
            pooled += r.transpose() * r;
        }
        pooled /= 50.0;
        assert!((&v - pooled).amax() < 1e-8);

        // monotone likelihood across manual sweeps
        let zero = DMatrix::zeros(1, 4);
        let mut vv = DMatrix::identity(4, 4);
        let mut last = f64::NEG_INFINITY;
        for _ in 0..10 {
            let mut u_new = 0.0;
            for r in &residuals {
                u_new += (r * vv.clone().cholesky().unwrap().solve(&r.transpose())).trace();
            }
            let mut uu = DMatrix::from_element(1, 1, u_new / (50.0 * 4.0));
            uu[(0, 0)] = 1.0; // trace normalization for d = 1
            let mut v_new = DMatrix::zeros(4, 4);
            for r in &residuals {
                v_new += r.transpose() * r;
            }
            v_new /= 50.0;
            vv = v_new;
            let p = MNParams::new(zero.clone(), uu, vv.clone()).unwrap();
            let l = mn_loglik(&p, &residuals).unwrap();
            assert!(l >= last - 1e-8);
            last = l;
        }
    }

    #[test]
    fn flipflop_degenerate_on_zero_residuals() {
        let residuals: Vec<DMatrix<f64>> = (0..10).map(|_| DMatrix::zeros(2, 3)).collect();
        assert!(matches!(
            flipflop(&residuals, &FitConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn flipflop_rejects_insufficient_samples() {
        let residuals = vec![DMatrix::<f64>::identity(3, 3)];
        assert!(flipflop(&residuals, &FitConfig::default()).is_err());
    }

    #[test]
    fn fre_fit_matches_flat_closed_form_on_euclidean() {
        let model = presets::euclidean_demo(40).unwrap();
        let data = model.simulate(12, 3).unwrap();
        let cfg = FitConfig::default();
        let fitres = fit_fre(&data, &model.basis, &model.b, &model.frame, &cfg).unwrap();
        // closed form: project the pointwise-mean coordinates onto the basis
        let phi = model.basis_matrix().unwrap();
        let pinv = right_inverse(&phi).unwrap();
        let mut mean_coords = DMatrix::zeros(3, 40);
        for x in &data {
            for j in 0..40 {
                let col = model.frame.transpose() * (&x.points[j].coords - &model.b.coords);
                let acc = mean_coords.column(j) + col;
                mean_coords.set_column(j, &acc);
            }
        }
        mean_coords /= 12.0;
        let expect = mean_coords * pinv;
        assert!((&fitres.params.m_w - expect).amax() < 1e-10);
        assert!((fitres.params.u_w.trace() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn three_estimators_agree_on_euclidean() {
        let model = presets::euclidean_demo(30).unwrap();
        let data = model.simulate(10, 9).unwrap();
        let cfg = FitConfig::default();
        let fre = fit_fre(&data, &model.basis, &model.b, &model.frame, &cfg).unwrap();
        let ls = fit_ls(&data, &model.basis, &model.b, &model.frame, &cfg).unwrap();
        let mle = fit_mle(&data, &model.basis, &model.b, &model.frame, &cfg).unwrap();
        assert!((&fre.params.m_w - &ls.params.m_w).amax() < 1e-6);
        assert!((&fre.params.m_w - &mle.params.m_w).amax() < 1e-6);
        assert!(mle.loglik >= fre.loglik - 1e-6);
    }

    #[test]
    fn ls_improves_or_keeps_objective_on_sphere() {
        let mut model = presets::s2_hetero(50).unwrap();
        model.params.v_w *= 0.01;
        let data = model.simulate(8, 17).unwrap();
        let cfg = FitConfig::default();
        let ctx = FitContext::new(&data, &model.basis, &model.b, &model.frame).unwrap();
        let fre = fit_fre(&data, &model.basis, &model.b, &model.frame, &cfg).unwrap();
        let ls = fit_ls(&data, &model.basis, &model.b, &model.frame, &cfg).unwrap();
        let at_init = ctx.ls_objective(&fre.params.m_w);
        let at_ls = ctx.ls_objective(&ls.params.m_w);
        assert!(at_ls <= at_init + 1e-12, "init {} ls {}", at_init, at_ls);
        assert!((ls.params.u_w.trace() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_data_returns_initialization() {
        let mut model = presets::spd_demo(30).unwrap();
        model.params.u_w *= 1e-18;
        model.params.v_w *= 1e-18;
        let data = model.simulate(6, 2).unwrap();
        let cfg = FitConfig::default();
        // zero-noise residuals make the covariance update degenerate
        assert!(matches!(
            fit_fre(&data, &model.basis, &model.b, &model.frame, &cfg),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn empirical_covariance_matches_separable_model_at_scale() {
        // large-sample diagnostic agrees with phi(s)^T V phi(t) * U
        let model = presets::euclidean_demo(40).unwrap();
        let phi = model.basis_matrix().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(63);
        let hs: Vec<DMatrix<f64>> = (0..4000)
            .map(|_| sample_mn(&model.params, &mut rng).unwrap() * &phi.values)
            .collect();
        for (s, t) in [(0usize, 0usize), (5, 30), (12, 12)] {
            let cov = empirical_covariance(&hs, s, t).unwrap();
            let scalar = (phi.values.column(s).transpose() * &model.params.v_w
                * phi.values.column(t))[(0, 0)];
            let expect = &model.params.u_w * scalar;
            assert!((cov - expect).amax() < 0.02, "({}, {})", s, t);
        }
    }

    #[test]
    fn prop5_identity_mean_of_coefficients() {
        let mut model = presets::s2_hetero(40).unwrap();
        model.params.v_w *= 0.04;
        let data = model.simulate(15, 8).unwrap();
        let cfg = FitConfig::default();
        let ctx = FitContext::new(&data, &model.basis, &model.b, &model.frame).unwrap();
        let fre = fit_fre(&data, &model.basis, &model.b, &model.frame, &cfg).unwrap();
        let ws = ctx.coefficients(&fre.gamma_hat).unwrap();
        let mut mean_w = DMatrix::zeros(2, model.basis.k);
        for w in &ws {
            mean_w += w;
        }
        mean_w /= ws.len() as f64;
        assert!((mean_w - &fre.params.m_w).amax() < 1e-9);
    }
}
