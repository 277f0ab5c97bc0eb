//! Finite-difference Jacobians and damped Newton on flattened coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};

/// Forward-difference Jacobian of `f` at `x` with step `h·(1+‖x‖)` per column.
pub fn fd_jacobian<F>(f: &mut F, x: &[f64], fx: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let n = x.len();
    let m = fx.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let delta = h * (1.0 + norm);
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + delta;
        let fp = f(&xp)?;
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fx[i]) / delta;
        }
    }
    Ok(jac)
}

/// Determinant of `m / max|m_ij|` (0 for the zero matrix).
pub fn scaled_det(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m / scale).lu().determinant()
}

/// `σ_min/σ_max` (0 for the zero matrix).
pub fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

pub fn weighted_norm(x: &[f64], weights_sq: &[f64]) -> f64 {
    x.iter().zip(weights_sq).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    /// Smallest line-search factor before giving up.
    pub min_damping: f64,
    /// Jacobians with `σ_min/σ_max` below this are treated as singular.
    pub singular_det: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 40,
            fd_step: 1e-7,
            min_damping: 1.0 / 1024.0,
            singular_det: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub jacobian: Option<DMatrix<f64>>,
}

/// Damped Newton for `g(x) = 0`, residual measured in the weighted norm.
pub fn newton<G>(g: &mut G, x0: &[f64], weights_sq: &[f64], opts: &NewtonOptions) -> Result<NewtonResult>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let mut x = x0.to_vec();
    let mut gx = g(&x)?;
    let mut r = weighted_norm(&gx, weights_sq);
    let mut history = vec![r];
    let mut jacobian = None;
    for it in 0..opts.max_iter {
        if r <= opts.tol {
            return Ok(NewtonResult { x, residual: r, history, iterations: it, jacobian });
        }
        let jac = fd_jacobian(g, &x, &gx, opts.fd_step)?;
        let det = scaled_det(&jac);
        if reciprocal_condition(&jac) < opts.singular_det {
            return Err(LabError::SingularJacobian { det });
        }
        let rhs = DVector::from_iterator(gx.len(), gx.iter().map(|v| -v));
        let dx = jac
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(LabError::SingularJacobian { det })?;
        jacobian = Some(jac);
        let mut damping = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + damping * d).collect();
            let accepted = match g(&trial) {
                Ok(gt) => {
                    let rt = weighted_norm(&gt, weights_sq);
                    if rt.is_finite() && (rt < r || rt <= opts.tol) {
                        x = trial;
                        gx = gt;
                        r = rt;
                        true
                    } else {
                        false
                    }
                }
                Err(_) => false,
            };
            if accepted {
                break;
            }
            damping *= 0.5;
            if damping < opts.min_damping {
                return Err(LabError::NoConvergence(format!(
                    "line search stalled after {} iterations, best residual {r:e}",
                    it + 1
                )));
            }
        }
        history.push(r);
    }
    if r <= opts.tol {
        return Ok(NewtonResult { x, residual: r, history, iterations: opts.max_iter, jacobian });
    }
    Err(LabError::NoConvergence(format!(
        "{} iterations, best residual {r:e}",
        opts.max_iter
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_on_circle_line() {
        let mut g = |x: &[f64]| Ok(vec![x[0] * x[0] + x[1] * x[1] - 4.0, x[0] - x[1]]);
        let r = newton(&mut g, &[1.0, 0.5], &[1.0, 1.0], &NewtonOptions::default()).unwrap();
        assert!((r.x[0] - 2f64.sqrt()).abs() < 1e-9);
        assert!((r.x[1] - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let mut g = |x: &[f64]| Ok(vec![x[0] * x[0] * x[0], x[1]]);
        let err = newton(&mut g, &[0.0, 1.0], &[1.0, 1.0], &NewtonOptions { tol: 0.0, ..Default::default() });
        assert!(matches!(err, Err(LabError::SingularJacobian { .. })));
    }

    #[test]
    fn scaled_det_ignores_overall_scale() {
        let m = DMatrix::from_row_slice(2, 2, &[1e8, 0.0, 0.0, -1e8]);
        assert!((scaled_det(&m) + 1.0).abs() < 1e-14);
    }
}
