//! Sign alignment for unsigned unit-quaternion trajectories. A rotation and
//! its negated quaternion are the same element of SO(3); alignment fixes the
//! sign of the first sample and then flips each subsequent sample to stay on
//! the same hemisphere as its predecessor.

use crate::error::{CliError, CliResult};

const UNIT_TOL: f64 = 1e-6;

/// Align an r x 4 trajectory of unit quaternions. The first row is forced
/// nonnegative in its largest-magnitude coordinate; each later row is
/// flipped when its dot product with the previous aligned row is negative.
pub fn align_quaternions(raw: &[Vec<f64>]) -> CliResult<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(raw.len());
    for (j, row) in raw.iter().enumerate() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(CliError::Computation(format!(
                "quaternion row {} has norm {:.8}, not unit",
                j, norm
            )));
        }
        let mut q = row.clone();
        if j == 0 {
            let lead = q
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            if q[lead] < 0.0 {
                q.iter_mut().for_each(|x| *x = -*x);
            }
        } else {
            let prev = &out[j - 1];
            let dot: f64 = prev.iter().zip(&q).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                q.iter_mut().for_each(|x| *x = -*x);
            }
        }
        out.push(q);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: [f64; 4]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn aligned_input_is_unchanged() {
        let rows = vec![unit([0.9, 0.1, 0.2, 0.1]), unit([0.88, 0.15, 0.2, 0.1])];
        let out = align_quaternions(&rows).unwrap();
        assert_eq!(out, rows);
    }

    #[test]
    fn alternating_signs_become_constant() {
        let q = unit([0.5, 0.5, 0.5, 0.5]);
        let neg: Vec<f64> = q.iter().map(|x| -x).collect();
        let rows = vec![q.clone(), neg.clone(), q.clone(), neg];
        let out = align_quaternions(&rows).unwrap();
        for row in &out {
            for (a, b) in row.iter().zip(&q) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn first_row_sign_is_normalized() {
        let rows = vec![unit([-0.9, 0.1, 0.2, 0.1])];
        let out = align_quaternions(&rows).unwrap();
        assert!(out[0][0] > 0.0);
    }

    #[test]
    fn injected_flips_are_repaired() {
        // smooth path with signs flipped at arbitrary places
        let r = 60;
        let mut rows = Vec::new();
        for j in 0..r {
            let t = j as f64 / (r - 1) as f64;
            let mut q = unit([(0.4 * t).cos(), (0.4 * t).sin(), 0.3 * t, 0.1]);
            if j % 7 == 3 || j % 5 == 1 {
                q.iter_mut().for_each(|x| *x = -*x);
            }
            rows.push(q);
        }
        let out = align_quaternions(&rows).unwrap();
        for j in 1..r {
            let dot: f64 = out[j - 1].iter().zip(&out[j]).map(|(a, b)| a * b).sum();
            assert!(dot >= 0.0);
            let dist: f64 = out[j - 1]
                .iter()
                .zip(&out[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(dist < 0.2, "jump of {} at {}", dist, j);
        }
    }

    #[test]
    fn non_unit_row_is_rejected() {
        let rows = vec![vec![0.5, 0.5, 0.5, 0.0]];
        assert!(align_quaternions(&rows).is_err());
    }
}
