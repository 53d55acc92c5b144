//! Two-sample test for equality of mean curves: a Hotelling-type trace
//! statistic on the fitted coefficient means with pooled covariances, and a
//! permutation (or bootstrap) null distribution.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};

use crate::basis::BasisSpec;
use crate::curves::DiscreteCurve;
use crate::error::{Error, Result};
use crate::estimate::{fit, FitConfig, FitResult};
use crate::manifold::Point;

/// How resampled groups are formed from the pooled sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    /// Random relabelling without replacement (the default).
    Permutation,
    /// Sampling with replacement from the pool.
    Bootstrap,
}

#[derive(Debug, Clone)]
pub struct TestResult {
    pub j_observed: f64,
    pub j_resampled: Vec<f64>,
    pub p_value: f64,
    pub r: usize,
    pub seed: u64,
}

/// Hotelling-type statistic
/// J = tr{ V^{-1} (M1 - M2)^T U^{-1} (M1 - M2) }
/// with U, V pooled as {(n1-1) U1 + (n2-1) U2} / (n1 + n2 - 2).
pub fn hotelling_stat(fit1: &FitResult, fit2: &FitResult, n1: usize, n2: usize) -> Result<f64> {
    let (d, k) = (fit1.params.d(), fit1.params.k());
    if fit2.params.d() != d || fit2.params.k() != k {
        return Err(Error::Mismatch("fits disagree in dimensions".into()));
    }
    if n1 < 2 || n2 < 2 {
        return Err(Error::InvalidSpec("pooling needs at least two curves per group".into()));
    }
    let w = 1.0 / (n1 + n2 - 2) as f64;
    let u_pool = (&fit1.params.u_w * (n1 - 1) as f64 + &fit2.params.u_w * (n2 - 1) as f64) * w;
    let v_pool = (&fit1.params.v_w * (n1 - 1) as f64 + &fit2.params.v_w * (n2 - 1) as f64) * w;
    let chol_u = u_pool
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("pooled row covariance".into()))?;
    let chol_v = v_pool
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("pooled column covariance".into()))?;
    let delta = &fit1.params.m_w - &fit2.params.m_w;
    let u_delta = chol_u.solve(&delta);
    let j = chol_v.solve(&(delta.transpose() * u_delta)).trace();
    Ok(j.max(0.0))
}

pub struct PermutationSettings<'a> {
    pub spec: &'a BasisSpec,
    pub b: &'a Point,
    pub frame: &'a DMatrix<f64>,
    pub resampling: Resampling,
    pub r: usize,
    pub seed: u64,
    pub cfg: FitConfig,
}

/// Two-sample test of equal mean curves. Resample `r` of the null statistic
/// is computed from the sub-stream of index r, so results are reproducible
/// and order-stable.
pub fn permutation_test(
    s1: &[DiscreteCurve],
    s2: &[DiscreteCurve],
    settings: &PermutationSettings,
) -> Result<TestResult> {
    if settings.r < 1 {
        return Err(Error::InvalidSpec("need at least one resample".into()));
    }
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::InvalidSpec("both groups must be nonempty".into()));
    }
    let (n1, n2) = (s1.len(), s2.len());
    let fit1 = fit(s1, settings.spec, settings.b, settings.frame, &settings.cfg)?;
    let fit2 = fit(s2, settings.spec, settings.b, settings.frame, &settings.cfg)?;
    let j_observed = hotelling_stat(&fit1, &fit2, n1, n2)?;

    // Null resamples always use the closed-form estimator: the test runs
    // 2(R+1) fits and the optimized estimators barely differ in practice.
    let resample_cfg = FitConfig { method: crate::estimate::FitMethod::Fre, ..settings.cfg };
    let pool: Vec<&DiscreteCurve> = s1.iter().chain(s2.iter()).collect();
    let mut j_resampled = Vec::with_capacity(settings.r);
    for rep in 0..settings.r {
        let mut rng = ChaCha12Rng::seed_from_u64(settings.seed);
        rng.set_stream(rep as u64 + 1);
        let (g1, g2) = resample(&pool, n1, settings.resampling, &mut rng);
        let f1 = fit(&g1, settings.spec, settings.b, settings.frame, &resample_cfg)
            .map_err(|e| resample_error(rep, e))?;
        let f2 = fit(&g2, settings.spec, settings.b, settings.frame, &resample_cfg)
            .map_err(|e| resample_error(rep, e))?;
        j_resampled.push(hotelling_stat(&f1, &f2, n1, n2).map_err(|e| resample_error(rep, e))?);
    }
    let exceed = j_resampled.iter().filter(|&&j| j > j_observed).count();
    let p_value = (1 + exceed) as f64 / (1 + settings.r) as f64;
    Ok(TestResult { j_observed, j_resampled, p_value, r: settings.r, seed: settings.seed })
}

fn resample_error(rep: usize, e: Error) -> Error {
    Error::Degenerate(format!("resample {} failed: {}", rep, e))
}

fn resample(
    pool: &[&DiscreteCurve],
    n1: usize,
    mode: Resampling,
    rng: &mut impl Rng,
) -> (Vec<DiscreteCurve>, Vec<DiscreteCurve>) {
    let n = pool.len();
    match mode {
        Resampling::Permutation => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let g1 = idx[..n1].iter().map(|&i| pool[i].clone()).collect();
            let g2 = idx[n1..].iter().map(|&i| pool[i].clone()).collect();
            (g1, g2)
        }
        Resampling::Bootstrap => {
            let draw = |rng: &mut dyn rand::RngCore, m: usize| {
                (0..m).map(|_| pool[rng.gen_range(0..n)].clone()).collect::<Vec<_>>()
            };
            let g1 = draw(rng, n1);
            let g2 = draw(rng, n - n1);
            (g1, g2)
        }
    }
}
