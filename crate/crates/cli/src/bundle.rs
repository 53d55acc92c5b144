//! JSON file format for curve bundles: a manifold tag, the shared time grid,
//! n curves of r coordinate rows each, and optional per-curve group labels.
//! Points are validated against the manifold invariants on load (tolerance
//! 1e-8) and re-projected; quaternion curves are sign-aligned first.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use rgp_core::curves::{DiscreteCurve, TimeGrid};
use rgp_core::manifold::{ManifoldDescriptor, ManifoldKind, Point};

use crate::error::{CliError, CliResult};
use crate::quat::align_quaternions;

const LOAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldTag {
    pub kind: String,
    pub d: usize,
    pub q: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveBundle {
    pub manifold: ManifoldTag,
    pub times: Vec<f64>,
    pub curves: Vec<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<Vec<String>>,
}

pub fn descriptor_from_tag(tag: &ManifoldTag) -> CliResult<ManifoldDescriptor> {
    let m = match tag.kind.as_str() {
        "euclidean" => ManifoldDescriptor::euclidean(tag.d),
        "sphere" => ManifoldDescriptor::sphere(tag.d),
        "spd" => {
            let r = (tag.q as f64).sqrt().round() as usize;
            ManifoldDescriptor::spd(r)
        }
        "so3quat" => ManifoldDescriptor::so3quat(),
        other => return Err(CliError::Computation(format!("unknown manifold kind '{}'", other))),
    };
    if m.d != tag.d || m.q != tag.q {
        return Err(CliError::Computation(format!(
            "manifold tag ({}, d={}, q={}) is inconsistent",
            tag.kind, tag.d, tag.q
        )));
    }
    Ok(m)
}

pub fn tag_of(m: &ManifoldDescriptor) -> ManifoldTag {
    let kind = match m.kind {
        ManifoldKind::Euclidean => "euclidean",
        ManifoldKind::Sphere => "sphere",
        ManifoldKind::Spd => "spd",
        ManifoldKind::So3Quat => "so3quat",
    };
    ManifoldTag { kind: kind.into(), d: m.d, q: m.q }
}

impl CurveBundle {
    pub fn from_curves(curves: &[DiscreteCurve], labels: Option<Vec<String>>) -> CliResult<Self> {
        if let Some(first) = curves.first() {
            let manifold = tag_of(&first.manifold);
            let times = first.grid.times().to_vec();
            let rows = curves
                .iter()
                .map(|c| c.points.iter().map(|p| p.coords.as_slice().to_vec()).collect())
                .collect();
            Ok(CurveBundle { manifold, times, curves: rows, labels })
        } else {
            Err(CliError::Computation("cannot infer the manifold of an empty bundle".into()))
        }
    }

    pub fn empty(m: &ManifoldDescriptor, grid: &TimeGrid) -> Self {
        CurveBundle {
            manifold: tag_of(m),
            times: grid.times().to_vec(),
            curves: Vec::new(),
            labels: None,
        }
    }

    /// Validate and re-project every point, returning typed curves.
    pub fn to_curves(&self) -> CliResult<Vec<DiscreteCurve>> {
        let m = descriptor_from_tag(&self.manifold)?;
        let grid = TimeGrid::from_times(self.times.clone())?;
        let r = grid.len();
        let mut out = Vec::with_capacity(self.curves.len());
        for (ci, rows) in self.curves.iter().enumerate() {
            if rows.len() != r {
                return Err(CliError::Computation(format!(
                    "curve {} has {} rows for a grid of {}",
                    ci,
                    rows.len(),
                    r
                )));
            }
            let rows = if m.kind == ManifoldKind::So3Quat {
                align_quaternions(rows)?
            } else {
                rows.clone()
            };
            let mut points = Vec::with_capacity(r);
            for (pi, row) in rows.iter().enumerate() {
                if row.len() != m.q {
                    return Err(CliError::Computation(format!(
                        "curve {} point {} has {} coordinates, expected {}",
                        ci,
                        pi,
                        row.len(),
                        m.q
                    )));
                }
                points.push(project_point(&m, row, ci, pi)?);
            }
            out.push(DiscreteCurve::new(m, grid.clone(), points).map_err(CliError::from)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn project_point(m: &ManifoldDescriptor, row: &[f64], ci: usize, pi: usize) -> CliResult<Point> {
    let v = DVector::from_row_slice(row);
    match m.kind {
        ManifoldKind::Euclidean => Ok(Point::new(v)),
        ManifoldKind::Sphere | ManifoldKind::So3Quat => {
            let norm = v.norm();
            if (norm - 1.0).abs() > LOAD_TOL {
                return Err(CliError::Computation(format!(
                    "curve {} point {} has norm {:.10}, outside tolerance",
                    ci, pi, norm
                )));
            }
            Ok(Point::new(v / norm))
        }
        ManifoldKind::Spd => {
            let mat = m.as_matrix(&v);
            if (&mat - mat.transpose()).amax() > LOAD_TOL {
                return Err(CliError::Computation(format!(
                    "curve {} point {} is not symmetric within tolerance",
                    ci, pi
                )));
            }
            let sym = 0.5 * (&mat + mat.transpose());
            if sym.clone().symmetric_eigen().eigenvalues.iter().any(|&l| l <= 0.0) {
                return Err(CliError::Computation(format!(
                    "curve {} point {} is not positive definite",
                    ci, pi
                )));
            }
            Ok(Point::new(DVector::from_iterator(m.q, sym.transpose().iter().cloned())))
        }
    }
}
