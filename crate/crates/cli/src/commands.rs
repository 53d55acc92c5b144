//! Implementations behind the CLI subcommands; each is a pure function of
//! its inputs, flags, and seed, writing JSON or CSV outputs.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use rgp_core::basis::BasisSpec;
use rgp_core::curves::TimeGrid;
use rgp_core::estimate::{fit, FitConfig, FitMethod};
use rgp_core::inference::{permutation_test, PermutationSettings, Resampling, TestResult};
use rgp_core::linalg::spd_distance;
use rgp_core::manifold::{ManifoldDescriptor, ManifoldKind, Point};
use rgp_core::model::{presets, MNParams, RGPModel};

use crate::bundle::{descriptor_from_tag, CurveBundle, ManifoldTag};
use crate::error::{CliError, CliResult};

/// Built-in demonstration models, all on r = 100 time points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    S2Hetero,
    SpdDemo,
    So3Synthetic,
}

impl Preset {
    pub fn model(&self) -> CliResult<RGPModel> {
        let model = match self {
            Preset::S2Hetero => presets::s2_hetero(100),
            Preset::SpdDemo => presets::spd_demo(100),
            Preset::So3Synthetic => presets::so3_synthetic(100),
        };
        model.map_err(CliError::from)
    }
}

/// Fixed per-manifold base point and frame used by `fit` and `test2`; by
/// equivariance the estimates under any other choice differ only by an
/// isometry plus offset.
pub fn canonical_base(m: &ManifoldDescriptor) -> (Point, DMatrix<f64>) {
    let b = match m.kind {
        ManifoldKind::Euclidean => Point::new(DVector::zeros(m.q)),
        ManifoldKind::Sphere => {
            let mut v = DVector::zeros(m.q);
            v[m.q - 1] = 1.0;
            Point::new(v)
        }
        ManifoldKind::So3Quat => {
            let mut v = DVector::zeros(4);
            v[0] = 1.0;
            Point::new(v)
        }
        ManifoldKind::Spd => {
            let r = m.spd_side();
            Point::new(DVector::from_iterator(
                m.q,
                DMatrix::<f64>::identity(r, r).transpose().iter().cloned(),
            ))
        }
    };
    let frame = m.frame_at(&b);
    (b, frame)
}

fn mat_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn rows_mat(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(CliError::Computation(format!("{} is empty", what)));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Computation(format!("{} has ragged rows", what)));
    }
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// A user-supplied model file, mirroring the preset structure.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub manifold: ManifoldTag,
    pub m_w: Vec<Vec<f64>>,
    pub u_w: Vec<Vec<f64>>,
    pub v_w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// q x d frame; computed from the base point when omitted.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame: Option<Vec<Vec<f64>>>,
    pub r: usize,
}

impl ModelFile {
    pub fn into_model(self) -> CliResult<RGPModel> {
        let manifold = descriptor_from_tag(&self.manifold)?;
        let m_w = rows_mat(&self.m_w, "m_w")?;
        let u_w = rows_mat(&self.u_w, "u_w")?;
        let v_w = rows_mat(&self.v_w, "v_w")?;
        let b = Point::new(DVector::from_row_slice(&self.b));
        let frame = match self.frame {
            Some(rows) => rows_mat(&rows, "frame")?,
            None => manifold.frame_at(&b),
        };
        let k = m_w.ncols();
        let params = MNParams::new(m_w, u_w, v_w)?;
        let model = RGPModel::new(
            manifold,
            params,
            b,
            frame,
            BasisSpec::new(k)?,
            TimeGrid::uniform(self.r)?,
        )?;
        Ok(model)
    }
}

pub enum SimulateSource {
    Preset(Preset),
    ModelFile(PathBuf),
}

pub fn cmd_simulate(source: &SimulateSource, n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let model = match source {
        SimulateSource::Preset(p) => p.model()?,
        SimulateSource::ModelFile(path) => {
            let text = std::fs::read_to_string(path)?;
            let mf: ModelFile = serde_json::from_str(&text)?;
            mf.into_model()?
        }
    };
    let curves = model.simulate(n, seed)?;
    let bundle = if curves.is_empty() {
        CurveBundle::empty(&model.manifold, &model.grid)
    } else {
        CurveBundle::from_curves(&curves, None)?
    };
    bundle.save(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub k: usize,
    pub m_w: Vec<Vec<f64>>,
    pub u_w: Vec<Vec<f64>>,
    pub v_w: Vec<Vec<f64>>,
    pub gamma_hat: Vec<Vec<f64>>,
    pub loglik: f64,
    pub iterations: usize,
}

pub fn method_name(m: FitMethod) -> &'static str {
    match m {
        FitMethod::Fre => "fre",
        FitMethod::Ls => "ls",
        FitMethod::Mle => "mle",
    }
}

pub fn cmd_fit(input: &Path, method: FitMethod, k: usize, out: &Path) -> CliResult<FitReport> {
    let bundle = CurveBundle::load(input)?;
    let curves = bundle.to_curves()?;
    if curves.is_empty() {
        return Err(CliError::Usage("bundle has no curves to fit".into()));
    }
    let m = curves[0].manifold;
    let (b, frame) = canonical_base(&m);
    let spec = BasisSpec::new(k)?;
    let cfg = FitConfig::with_method(method);
    let result = fit(&curves, &spec, &b, &frame, &cfg)?;
    let report = FitReport {
        method: method_name(method).into(),
        k,
        m_w: mat_rows(&result.params.m_w),
        u_w: mat_rows(&result.params.u_w),
        v_w: mat_rows(&result.params.v_w),
        gamma_hat: result.gamma_hat.points.iter().map(|p| p.coords.as_slice().to_vec()).collect(),
        loglik: result.loglik,
        iterations: result.iterations,
    };
    std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub seed: String,
    pub metric_m: f64,
    pub metric_u: f64,
    pub metric_v: f64,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceSummary {
    pub rows: Vec<ConvergenceRow>,
    pub medians: Vec<ConvergenceRow>,
    pub medians_decreasing: [bool; 3],
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Simulate-fit-measure over a grid of sample sizes and seeds, reporting the
/// Mahalanobis-type error of the mean matrix and affine-invariant distances
/// of the covariance factors from their data-generating values.
pub fn cmd_convergence(
    preset: Preset,
    n_list: &[usize],
    seeds: usize,
    out_csv: &Path,
) -> CliResult<ConvergenceSummary> {
    if n_list.is_empty() || seeds == 0 {
        return Err(CliError::Usage("need a nonempty n-list and at least one seed".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("n-list must be strictly ascending".into()));
    }
    let model = preset.model()?;
    let chol_u = model
        .params
        .u_w
        .clone()
        .cholesky()
        .ok_or_else(|| CliError::Computation("true row covariance not PD".into()))?;
    let chol_v = model
        .params
        .v_w
        .clone()
        .cholesky()
        .ok_or_else(|| CliError::Computation("true column covariance not PD".into()))?;
    let cfg = FitConfig::default();
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    let mut per_metric_medians: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &n in n_list {
        let mut batch: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for s in 0..seeds {
            let seed = s as u64 * 1_000_003 + n as u64;
            let curves = model.simulate(n, seed)?;
            let result = fit(&curves, &model.basis, &model.b, &model.frame, &cfg)?;
            let delta = &result.params.m_w - &model.params.m_w;
            let metric_m = (chol_v.solve(&(delta.transpose() * chol_u.solve(&delta)))).trace();
            let metric_u = spd_distance(&result.params.u_w, &model.params.u_w)?;
            let metric_v = spd_distance(&result.params.v_w, &model.params.v_w)?;
            batch[0].push(metric_m);
            batch[1].push(metric_u);
            batch[2].push(metric_v);
            rows.push(ConvergenceRow { n, seed: s.to_string(), metric_m, metric_u, metric_v });
        }
        let med = ConvergenceRow {
            n,
            seed: "median".into(),
            metric_m: median(batch[0].clone()),
            metric_u: median(batch[1].clone()),
            metric_v: median(batch[2].clone()),
        };
        per_metric_medians[0].push(med.metric_m);
        per_metric_medians[1].push(med.metric_u);
        per_metric_medians[2].push(med.metric_v);
        medians.push(med);
    }
    let medians_decreasing = [
        per_metric_medians[0].windows(2).all(|w| w[1] < w[0]),
        per_metric_medians[1].windows(2).all(|w| w[1] < w[0]),
        per_metric_medians[2].windows(2).all(|w| w[1] < w[0]),
    ];
    let mut csv = String::from("n,seed,metric_m,metric_u,metric_v\n");
    for row in rows.iter().chain(medians.iter()) {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.n, row.seed, row.metric_m, row.metric_u, row.metric_v
        ));
    }
    std::fs::write(out_csv, csv)?;
    Ok(ConvergenceSummary { rows, medians, medians_decreasing })
}

#[derive(Debug, Serialize)]
pub struct TestReport {
    pub j_observed: f64,
    pub p_value: f64,
    pub r: usize,
    pub seed: u64,
    pub j_resampled: Vec<f64>,
}

pub struct Test2Args {
    pub input: PathBuf,
    pub input2: Option<PathBuf>,
    pub r: usize,
    pub seed: u64,
    pub method: FitMethod,
    pub bootstrap: bool,
    pub k: usize,
    pub out: PathBuf,
}

/// Group the pooled bundle by labels (exactly two) or take two bundles, then
/// run the two-sample permutation test; writes the result JSON and a
/// null-histogram CSV next to it.
pub fn cmd_test2(args: &Test2Args) -> CliResult<TestResult> {
    let bundle = CurveBundle::load(&args.input)?;
    let (s1, s2) = match &args.input2 {
        Some(second) => {
            let other = CurveBundle::load(second)?;
            (bundle.to_curves()?, other.to_curves()?)
        }
        None => {
            let labels = bundle
                .labels
                .as_ref()
                .ok_or_else(|| CliError::Usage("bundle has no labels; pass a second bundle or label the curves".into()))?;
            let curves = bundle.to_curves()?;
            if labels.len() != curves.len() {
                return Err(CliError::Usage("labels do not match curve count".into()));
            }
            let mut names: Vec<&String> = Vec::new();
            for l in labels {
                if !names.contains(&l) {
                    names.push(l);
                }
            }
            if names.len() != 2 {
                return Err(CliError::Usage(format!(
                    "need exactly two groups, found {}",
                    names.len()
                )));
            }
            let mut g1 = Vec::new();
            let mut g2 = Vec::new();
            for (c, l) in curves.into_iter().zip(labels) {
                if l == names[0] {
                    g1.push(c);
                } else {
                    g2.push(c);
                }
            }
            (g1, g2)
        }
    };
    if s1.is_empty() || s2.is_empty() {
        return Err(CliError::Usage("both groups must be nonempty".into()));
    }
    let m = s1[0].manifold;
    let (b, frame) = canonical_base(&m);
    let spec = BasisSpec::new(args.k)?;
    let settings = PermutationSettings {
        spec: &spec,
        b: &b,
        frame: &frame,
        resampling: if args.bootstrap { Resampling::Bootstrap } else { Resampling::Permutation },
        r: args.r,
        seed: args.seed,
        cfg: FitConfig::with_method(args.method),
    };
    let result = permutation_test(&s1, &s2, &settings)?;
    let report = TestReport {
        j_observed: result.j_observed,
        p_value: result.p_value,
        r: result.r,
        seed: result.seed,
        j_resampled: result.j_resampled.clone(),
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    let mut csv = String::from("resample,j\n");
    for (i, j) in result.j_resampled.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i, j));
    }
    std::fs::write(null_csv_path(&args.out), csv)?;
    Ok(result)
}

/// The null-distribution CSV sits next to the JSON report.
pub fn null_csv_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("test2");
    out.with_file_name(format!("{}_null.csv", stem))
}
