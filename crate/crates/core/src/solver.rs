//! Dense Newton iteration and central finite differences.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GeoError, Result};

/// Newton settings. The residual is measured in the max-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Relative step for the finite-difference Jacobian.
    pub fd_rel_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 50,
            fd_rel_step: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Solver diagnostics of one step; compositions accumulate them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepInfo {
    pub newton_iters: usize,
    pub residual: f64,
    /// Deviation between two formulas that must agree (e.g. the coadjoint identity).
    pub consistency: f64,
}

impl StepInfo {
    pub fn absorb(&mut self, other: &StepInfo) {
        self.newton_iters += other.newton_iters;
        self.residual = self.residual.max(other.residual);
        self.consistency = self.consistency.max(other.consistency);
    }
}

impl From<&NewtonOutcome> for StepInfo {
    fn from(o: &NewtonOutcome) -> Self {
        Self {
            newton_iters: o.iterations,
            residual: o.residual,
            consistency: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `f(x) = 0` from `x0`, using `jac` when supplied and a central
/// finite-difference Jacobian otherwise.
pub fn newton<F>(
    mut f: F,
    x0: DVector<f64>,
    jac: Option<&dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>>>,
    cfg: &SolverConfig,
) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = x0;
    let mut r = f(&x)?;
    let mut res = r.amax();
    if x.is_empty() {
        return Ok(NewtonOutcome {
            x,
            iterations: 0,
            residual: res,
        });
    }
    for it in 0..cfg.max_iters {
        if !res.is_finite() {
            return Err(GeoError::Convergence {
                iterations: it,
                residual: res,
            });
        }
        if res <= cfg.tol {
            return Ok(NewtonOutcome {
                x,
                iterations: it,
                residual: res,
            });
        }
        let j = match jac {
            Some(j) => j(&x)?,
            None => fd_jacobian(&mut f, &x, cfg.fd_rel_step)?,
        };
        let dx = j
            .lu()
            .solve(&r)
            .ok_or_else(|| GeoError::LinearSolve("newton jacobian is singular".into()))?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::LinearSolve("newton update is not finite".into()));
        }
        x -= dx;
        r = f(&x)?;
        res = r.amax();
    }
    if res <= cfg.tol {
        Ok(NewtonOutcome {
            x,
            iterations: cfg.max_iters,
            residual: res,
        })
    } else {
        Err(GeoError::Convergence {
            iterations: cfg.max_iters,
            residual: res,
        })
    }
}

/// Central-difference Jacobian with per-coordinate step `rel * max(1, |x_j|)`.
pub fn fd_jacobian<F>(f: &mut F, x: &DVector<f64>, rel: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut xp = x.clone();
    for j in 0..n {
        let step = fd_step(rel, x[j].abs())?;
        xp[j] = x[j] + step;
        let fp = f(&xp)?;
        xp[j] = x[j] - step;
        let fm = f(&xp)?;
        xp[j] = x[j];
        cols.push((fp - fm) / (2.0 * step));
    }
    let m = cols.first().map(|c| c.len()).unwrap_or(0);
    let mut jac = DMatrix::zeros(m, n);
    for (j, c) in cols.iter().enumerate() {
        jac.set_column(j, c);
    }
    Ok(jac)
}

/// Central-difference Jacobian with one step size for all coordinates.
pub fn fd_jacobian_uniform<F>(f: &mut F, x: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(step.is_finite() && step > f64::EPSILON) {
        return Err(GeoError::Tolerance(format!("finite-difference step {step:e} underflows")));
    }
    let n = x.len();
    let mut xp = x.clone();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        xp[j] = x[j] + step;
        let fp = f(&xp)?;
        xp[j] = x[j] - step;
        let fm = f(&xp)?;
        xp[j] = x[j];
        cols.push((fp - fm) / (2.0 * step));
    }
    let m = cols.first().map(|c: &DVector<f64>| c.len()).unwrap_or(0);
    let mut jac = DMatrix::zeros(m, n);
    for (j, c) in cols.iter().enumerate() {
        jac.set_column(j, c);
    }
    Ok(jac)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>, rel: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let step = fd_step(rel, x[j].abs())?;
        xp[j] = x[j] + step;
        let fp = f(&xp);
        xp[j] = x[j] - step;
        let fm = f(&xp);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}

fn fd_step(rel: f64, scale: f64) -> Result<f64> {
    let step = rel * scale.max(1.0);
    if step.is_finite() && step > f64::EPSILON * scale.max(1.0) {
        Ok(step)
    } else {
        Err(GeoError::Tolerance(format!("finite-difference step {step:e} underflows")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_a_cubic_system() {
        let f = |x: &DVector<f64>| {
            Ok(DVector::from_vec(vec![
                x[0].powi(3) + x[1] - 2.0,
                x[0] - x[1] * x[1],
            ]))
        };
        let out = newton(f, DVector::from_vec(vec![0.8, 0.9]), None, &SolverConfig::default()).unwrap();
        assert_relative_eq!(out.x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-11);
        assert!(out.residual <= 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let f = |x: &DVector<f64>| Ok(DVector::from_vec(vec![x[0] * x[0] + 1.0]));
        let cfg = SolverConfig {
            max_iters: 5,
            ..SolverConfig::default()
        };
        match newton(f, DVector::from_vec(vec![1.0]), None, &cfg) {
            Err(GeoError::Convergence { iterations, residual }) => {
                assert_eq!(iterations, 5);
                assert!(residual > 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_singular_jacobian() {
        let f = |x: &DVector<f64>| Ok(DVector::from_vec(vec![x[0] + x[1] - 1.0, 2.0 * (x[0] + x[1])]));
        let r = newton(f, DVector::zeros(2), None, &SolverConfig::default());
        assert!(matches!(r, Err(GeoError::LinearSolve(_))));
    }

    #[test]
    fn gradient_of_quadratic() {
        let g = fd_gradient(|x| x[0] * x[0] + 3.0 * x[1], &DVector::from_vec(vec![2.0, 1.0]), 1e-6).unwrap();
        assert_relative_eq!(g, DVector::from_vec(vec![4.0, 3.0]), epsilon = 1e-8);
    }

    #[test]
    fn tiny_step_is_rejected() {
        let mut f = |x: &DVector<f64>| Ok(x.clone());
        assert!(matches!(
            fd_jacobian_uniform(&mut f, &DVector::zeros(1), 1e-300),
            Err(GeoError::Tolerance(_))
        ));
    }
}
