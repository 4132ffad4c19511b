//! Numerical checks of the structural guarantees: Poisson and symplectic
//! residuals, Casimir drift, convergence orders, equivariance and reduction.
//!
//! All sampling goes through [`seeded_rng`], so reports are reproducible for a
//! fixed seed. Samples are evaluated in order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{random_rotation, GroupElement};
use crate::compose::{integrate_to, PhaseState, StepMap};
use crate::error::{GeoError, Result};
use crate::retractions::RetractionMap;
use crate::solver::fd_jacobian_uniform;
use crate::symplectic::canonical_j;

/// Default tolerance of the pushforward and symplecticity checks.
pub const STRUCTURE_TOL: f64 = 1e-6;
/// Errors below this are treated as round-off in order fits.
pub const ERROR_FLOOR: f64 = 1e-13;

/// Per-sample residuals with a pass flag (`pass` iff `max_residual <= tolerance`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub check: String,
    pub max_residual: f64,
    pub residuals: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn new(check: &str, residuals: Vec<f64>, tolerance: f64) -> Self {
        let max_residual = residuals.iter().fold(0.0_f64, |m, r| if r.is_nan() { f64::NAN } else { m.max(*r) });
        Self {
            check: check.into(),
            pass: max_residual <= tolerance,
            max_residual,
            residuals,
            tolerance,
        }
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The `GI_SEED` environment variable, if set and parseable.
pub fn env_seed() -> Option<u64> {
    std::env::var("GI_SEED").ok().and_then(|s| s.trim().parse().ok())
}

/// `count` vectors with entries uniform in `[-scale, scale]`.
pub fn sample_vectors<R: Rng + ?Sized>(rng: &mut R, count: usize, dim: usize, scale: f64) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-scale..=scale)))
        .collect()
}

/// `count` unit vectors in `R^dim`.
pub fn sample_unit_vectors<R: Rng + ?Sized>(rng: &mut R, count: usize, dim: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            out.push(v / n);
        }
    }
    out
}

pub fn sample_rotations<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<GroupElement> {
    (0..count).map(|_| random_rotation(rng)).collect()
}

fn fd_step_for(z: &DVector<f64>, fd_step: Option<f64>) -> f64 {
    fd_step.unwrap_or(1e-5 * z.norm().max(1.0))
}

/// `max |D phi Lambda(z) D phi^T - Lambda(phi(z))|` at one point.
pub fn pushforward_residual_at(
    phi: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    tensor: &dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
    z: &DVector<f64>,
    fd_step: Option<f64>,
) -> Result<f64> {
    let lam = tensor(z)?;
    if lam.nrows() != z.len() || lam.ncols() != z.len() {
        return Err(GeoError::Dimension {
            expected: z.len(),
            found: lam.nrows(),
        });
    }
    let mut f = |x: &DVector<f64>| phi(x);
    let d = fd_jacobian_uniform(&mut f, z, fd_step_for(z, fd_step))?;
    let image = phi(z)?;
    Ok((&d * lam * d.transpose() - tensor(&image)?).amax())
}

/// Poisson-map check of a vector map at each sample.
pub fn poisson_pushforward_residual_fn(
    phi: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    tensor: &dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
    samples: &[DVector<f64>],
    fd_step: Option<f64>,
    tol: f64,
) -> Result<ResidualReport> {
    let r = samples
        .iter()
        .map(|z| pushforward_residual_at(phi, tensor, z, fd_step))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::new("poisson", r, tol))
}

/// Poisson-map check of `state -> step(state, h)` in the state coordinates.
pub fn poisson_pushforward_residual<S: PhaseState>(
    step: &dyn StepMap<State = S>,
    tensor: &dyn Fn(&S) -> Result<DMatrix<f64>>,
    samples: &[S],
    h: f64,
    fd_step: Option<f64>,
    tol: f64,
) -> Result<ResidualReport> {
    let mut r = Vec::with_capacity(samples.len());
    for s in samples {
        let phi = |z: &DVector<f64>| Ok(step.step(&s.with_coords(z)?, h)?.0.coords());
        let lam = |z: &DVector<f64>| tensor(&s.with_coords(z)?);
        r.push(pushforward_residual_at(&phi, &lam, &s.coords(), fd_step)?);
    }
    Ok(ResidualReport::new("poisson", r, tol))
}

/// `max |D phi^T J D phi - J|` at one point of `T*R^n`, coordinates `(q, p)`.
pub fn symplectic_residual_at(
    phi: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    z: &DVector<f64>,
    fd_step: Option<f64>,
) -> Result<f64> {
    if !z.len().is_multiple_of(2) {
        return Err(GeoError::Dimension {
            expected: z.len() + 1,
            found: z.len(),
        });
    }
    let j = canonical_j(z.len() / 2);
    let mut f = |x: &DVector<f64>| phi(x);
    let d = fd_jacobian_uniform(&mut f, z, fd_step_for(z, fd_step))?;
    Ok((d.transpose() * &j * &d - j).amax())
}

pub fn symplectic_residual_fn(
    phi: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    samples: &[DVector<f64>],
    fd_step: Option<f64>,
    tol: f64,
) -> Result<ResidualReport> {
    let r = samples
        .iter()
        .map(|z| symplectic_residual_at(phi, z, fd_step))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::new("symplectic", r, tol))
}

pub fn symplectic_residual<S: PhaseState>(
    step: &dyn StepMap<State = S>,
    samples: &[S],
    h: f64,
    fd_step: Option<f64>,
    tol: f64,
) -> Result<ResidualReport> {
    let mut r = Vec::with_capacity(samples.len());
    for s in samples {
        let phi = |z: &DVector<f64>| Ok(step.step(&s.with_coords(z)?, h)?.0.coords());
        r.push(symplectic_residual_at(&phi, &s.coords(), fd_step)?);
    }
    Ok(ResidualReport::new("symplectic", r, tol))
}

/// `max_k |C(z_k) - C(z_0)| / max(1, |C(z_0)|)`.
pub fn casimir_drift<S>(trajectory: &[S], casimir: &dyn Fn(&S) -> f64) -> Result<f64> {
    let first = trajectory
        .first()
        .ok_or_else(|| GeoError::Parameter("empty trajectory".into()))?;
    let c0 = casimir(first);
    let scale = c0.abs().max(1.0);
    Ok(trajectory
        .iter()
        .map(|s| (casimir(s) - c0).abs() / scale)
        .fold(0.0, f64::max))
}

/// Where the reference solution at `T` comes from.
pub enum Reference<'a, S> {
    /// The method under test at `min(hs) / 100`.
    SameMethod,
    /// Classical RK4 on `z' = f(z)` at `min(hs) / 100`.
    Rk4(&'a dyn Fn(&DVector<f64>) -> DVector<f64>),
    /// A precomputed state at `T`.
    Given(S),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub hs: Vec<f64>,
    pub errors: Vec<f64>,
    /// Points used by the fit (errors above the round-off floor).
    pub used: Vec<bool>,
    pub slope: f64,
    pub reference: String,
    pub warnings: Vec<String>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Fits the global order of `step` from the error at `t_end` for each `h` in `hs`.
/// When `t_end / h` is not an integer the run ends with one shorter step.
pub fn convergence_order<S: PhaseState>(
    step: &dyn StepMap<State = S>,
    reference: Reference<'_, S>,
    hs: &[f64],
    s0: &S,
    t_end: f64,
) -> Result<OrderReport> {
    if hs.len() < 2 || hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(GeoError::Parameter("need at least two positive step sizes".into()));
    }
    let h_min = hs.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_ref = h_min / 100.0;
    let (z_ref, label) = match reference {
        Reference::SameMethod => (integrate_to(step, s0, h_ref, t_end)?.coords(), "same-method".to_string()),
        Reference::Rk4(f) => {
            let z = rk4_integrate_to(f, &s0.coords(), h_ref, t_end - s0.time());
            (z, "rk4".to_string())
        }
        Reference::Given(s) => (s.coords(), "given".to_string()),
    };
    let mut errors = Vec::with_capacity(hs.len());
    for h in hs {
        let z = integrate_to(step, s0, *h, t_end)?.coords();
        errors.push((z - &z_ref).amax());
    }
    let used: Vec<bool> = errors.iter().map(|e| *e > ERROR_FLOOR).collect();
    let mut warnings = Vec::new();
    if used.iter().any(|u| !u) {
        warnings.push(format!("error plateau below {ERROR_FLOOR:e}; fit uses remaining points"));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = hs
        .iter()
        .zip(&errors)
        .zip(&used)
        .filter(|(_, u)| **u)
        .map(|((h, e), _)| (*h, *e))
        .unzip();
    let slope = if x.len() >= 2 {
        loglog_slope(&x, &y)
    } else {
        warnings.push("fewer than two points above the floor".into());
        f64::NAN
    };
    Ok(OrderReport {
        hs: hs.to_vec(),
        errors,
        used,
        slope,
        reference: label,
        warnings,
    })
}

pub fn rk4_step(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, z: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(z);
    let k2 = f(&(z + &k1 * (0.5 * h)));
    let k3 = f(&(z + &k2 * (0.5 * h)));
    let k4 = f(&(z + &k3 * h));
    z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Every intermediate state, `steps + 1` entries.
pub fn rk4_trajectory(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    z0: &DVector<f64>,
    h: f64,
    steps: usize,
) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z0.clone());
    for k in 0..steps {
        let next = rk4_step(f, &out[k], h);
        out.push(next);
    }
    out
}

/// Integrates over `span` with steps of `h` and one final partial step.
pub fn rk4_integrate_to(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, z0: &DVector<f64>, h: f64, span: f64) -> DVector<f64> {
    let n = (span / h * (1.0 + 1e-12)).floor() as usize;
    let mut z = z0.clone();
    for _ in 0..n {
        z = rk4_step(f, &z, h);
    }
    let rest = span - n as f64 * h;
    if rest.abs() > 1e-12 * h {
        z = rk4_step(f, &z, rest);
    }
    z
}

/// A discretization map on the pair groupoid of a matrix group, `(g, gdot) -> (g0, g1)`.
pub type PairMap<'a> = &'a dyn Fn(&DMatrix<f64>, &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)>;

/// `(g, gdot) -> (g, g exp(g^-1 gdot))`.
pub fn exp_pair_map(g: &DMatrix<f64>, gdot: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| GeoError::Membership("singular group element".into()))?;
    Ok((g.clone(), g * (inv * gdot).exp()))
}

/// Left-multiplication equivariance: `|(h g0, h g1) - R_d(h g, h gdot)|` for each
/// `(h, (g, gdot))`, pairing `actions[i]` with `points[i]`.
pub fn equivariance_residual(
    map: PairMap<'_>,
    actions: &[DMatrix<f64>],
    points: &[(DMatrix<f64>, DMatrix<f64>)],
    tol: f64,
) -> Result<ResidualReport> {
    if actions.len() != points.len() {
        return Err(GeoError::Dimension {
            expected: points.len(),
            found: actions.len(),
        });
    }
    let mut r = Vec::with_capacity(points.len());
    for (a, (g, gd)) in actions.iter().zip(points) {
        let (x0, x1) = map(g, gd)?;
        let (y0, y1) = map(&(a * g), &(a * gd))?;
        r.push((a * x0 - y0).amax().max((a * x1 - y1).amax()));
    }
    Ok(ResidualReport::new("equivariance", r, tol))
}

/// Quotient representative check: `|g^-1 R_d^2(g, g xi^) - tau(xi)|` for each `(g, xi)`.
pub fn reduced_map_residual(
    map: PairMap<'_>,
    tau: &RetractionMap,
    gs: &[GroupElement],
    xis: &[DVector<f64>],
    tol: f64,
) -> Result<ResidualReport> {
    let alg = tau.algebra();
    let mut r = Vec::with_capacity(gs.len());
    for (g, xi) in gs.iter().zip(xis) {
        let gm = g.matrix();
        let (_, g1) = map(gm, &(gm * alg.hat(xi)?))?;
        let rep = g.inverse()?.matrix() * g1;
        r.push((rep - tau.evaluate(xi)?.matrix()).amax());
    }
    Ok(ResidualReport::new("reduction", r, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{so3_hat, AlgebraDescriptor};
    use crate::liepoisson::lie_poisson_tensor;
    use crate::retractions::exp_retraction;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[test]
    fn identity_map_is_poisson() {
        let alg = AlgebraDescriptor::so3();
        let id = |z: &DVector<f64>| Ok(z.clone());
        let lam = |z: &DVector<f64>| Ok(lie_poisson_tensor(&alg, z));
        let s = sample_vectors(&mut seeded_rng(1), 5, 3, 1.0);
        let rep = poisson_pushforward_residual_fn(&id, &lam, &s, None, STRUCTURE_TOL).unwrap();
        assert!(rep.pass && rep.max_residual <= 1e-9);
    }

    #[test]
    fn scaling_fails_poisson() {
        let alg = AlgebraDescriptor::so3();
        let double = |z: &DVector<f64>| Ok(z * 2.0);
        let lam = |z: &DVector<f64>| Ok(lie_poisson_tensor(&alg, z));
        let mu = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let rep = poisson_pushforward_residual_fn(&double, &lam, std::slice::from_ref(&mu), None, STRUCTURE_TOL).unwrap();
        // 4 Lambda(mu) - 2 Lambda(mu)
        assert_relative_eq!(rep.max_residual, 2.0 * lie_poisson_tensor(&alg, &mu).amax(), epsilon = 1e-8);
        assert!(!rep.pass);
    }

    #[test]
    fn explicit_euler_fails_symplectic() {
        let h = 0.1;
        let euler = |z: &DVector<f64>| Ok(DVector::from_vec(vec![z[0] + h * z[1], z[1] - h * z[0]]));
        let rep = symplectic_residual_fn(&euler, &[DVector::from_vec(vec![0.3, -0.2])], None, STRUCTURE_TOL).unwrap();
        // det D phi = 1 + h^2
        assert_relative_eq!(rep.max_residual, h * h, epsilon = 1e-9);
        assert!(!rep.pass);
        let (c, s) = (h.cos(), h.sin());
        let rot = |z: &DVector<f64>| Ok(DVector::from_vec(vec![c * z[0] + s * z[1], -s * z[0] + c * z[1]]));
        assert!(symplectic_residual_fn(&rot, &[DVector::from_vec(vec![0.3, -0.2])], None, STRUCTURE_TOL)
            .unwrap()
            .pass);
    }

    #[test]
    fn constant_trajectory_has_no_drift() {
        let t = vec![1.5_f64; 4];
        assert_eq!(casimir_drift(&t, &|x| *x).unwrap(), 0.0);
        assert!(casimir_drift::<f64>(&[], &|x| *x).is_err());
    }

    #[test]
    fn rk4_is_fourth_order_on_decay() {
        let f = |z: &DVector<f64>| -z;
        let z0 = DVector::from_element(1, 1.0);
        let e = |h: f64| (rk4_integrate_to(&f, &z0, h, 1.0)[0] - (-1.0f64).exp()).abs();
        assert_relative_eq!(loglog_slope(&[0.1, 0.05], &[e(0.1), e(0.05)]), 4.0, epsilon = 0.1);
    }

    #[test]
    fn exp_pair_map_equivariance_and_perturbation() {
        let mut rng = seeded_rng(3);
        let gs = sample_rotations(&mut rng, 10);
        let hs = sample_rotations(&mut rng, 10);
        let xis = sample_vectors(&mut rng, 10, 3, 1.0);
        let pts: Vec<_> = gs
            .iter()
            .zip(&xis)
            .map(|(g, x)| (g.matrix().clone(), g.matrix() * so3_hat(x)))
            .collect();
        let acts: Vec<_> = hs.iter().map(|h| h.matrix().clone()).collect();
        assert!(equivariance_residual(&exp_pair_map, &acts, &pts, 1e-12).unwrap().pass);
        let perturbed = |g: &DMatrix<f64>, gd: &DMatrix<f64>| Ok((g.clone(), g + gd + g.transpose() * 1e-3));
        assert!(!equivariance_residual(&perturbed, &acts, &pts, 1e-12).unwrap().pass);
        let tau = exp_retraction(Arc::new(AlgebraDescriptor::so3())).unwrap();
        assert!(reduced_map_residual(&exp_pair_map, &tau, &gs, &xis, 1e-12).unwrap().pass);
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_vectors(&mut seeded_rng(9), 3, 4, 2.0);
        let b = sample_vectors(&mut seeded_rng(9), 3, 4, 2.0);
        assert_eq!(a, b);
        assert!(sample_unit_vectors(&mut seeded_rng(9), 5, 3).iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }
}
