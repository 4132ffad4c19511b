//! Symplectic one-step maps on `T*R^n` generated by the cotangent lift of a
//! vector discretization map.
//!
//! Hamiltonian step: unknowns `(qb, pb)`; with `v = h dH/dp(qb, pb)` and
//! covector `(-h dH/dq, pb)`, the lift must start at `(q_k, -p_k)`; its target
//! is `(q_{k+1}, p_{k+1})`. The Lagrangian step lifts `(qb, h vb; h dL/dq, dL/dv)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compose::{DynStep, PhaseState, StepMap};
use crate::error::{check_len, GeoError, Result};
use crate::retractions::{cotangent_lift_vector, stack, VectorDiscretizationMap};
use crate::solver::{fd_gradient, fd_jacobian, newton, SolverConfig, StepInfo};

const FD_REL: f64 = 1e-6;

fn nan_on_err(r: Result<DVector<f64>>, n: usize) -> DVector<f64> {
    r.unwrap_or_else(|_| DVector::from_element(n, f64::NAN))
}

/// `H(q, p)` on `T*R^n`. Gradients default to central differences.
pub trait Hamiltonian: Send + Sync {
    fn dim(&self) -> usize;
    fn energy(&self, q: &DVector<f64>, p: &DVector<f64>) -> f64;

    fn dh_dq(&self, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        nan_on_err(fd_gradient(|x| self.energy(x, p), q, FD_REL), q.len())
    }

    fn dh_dp(&self, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        nan_on_err(fd_gradient(|x| self.energy(q, x), p, FD_REL), p.len())
    }
}

/// `L(q, v)` on `TR^n`. Derivatives default to central differences.
pub trait Lagrangian: Send + Sync {
    fn dim(&self) -> usize;
    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64;

    fn dl_dq(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        nan_on_err(fd_gradient(|x| self.lagrangian(x, v), q, FD_REL), q.len())
    }

    fn dl_dv(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        nan_on_err(fd_gradient(|x| self.lagrangian(q, x), v, FD_REL), v.len())
    }

    /// `d^2 L / dv^2`.
    fn fiber_hessian(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let mut f = |x: &DVector<f64>| Ok(self.dl_dv(q, x));
        fd_jacobian(&mut f, v, 1e-5).unwrap_or_else(|_| DMatrix::from_element(v.len(), v.len(), f64::NAN))
    }

    /// Energy `dL/dv . v - L`.
    fn energy(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.dl_dv(q, v).dot(v) - self.lagrangian(q, v)
    }
}

/// `p = dL/dv(q, v)`.
pub fn legendre(model: &dyn Lagrangian, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    model.dl_dv(q, v)
}

/// Solves `dL/dv(q, v) = p` for `v` by Newton with the fiber Hessian.
pub fn inverse_legendre(
    model: &dyn Lagrangian,
    q: &DVector<f64>,
    p: &DVector<f64>,
    guess: &DVector<f64>,
    solver: &SolverConfig,
) -> Result<DVector<f64>> {
    check_len(model.dim(), p.len())?;
    let jac = |v: &DVector<f64>| Ok(model.fiber_hessian(q, v));
    newton(|v| Ok(model.dl_dv(q, v) - p), guess.clone(), Some(&jac), solver)
        .map(|o| o.x)
        .map_err(|e| match e {
            GeoError::LinearSolve(m) => GeoError::SingularHessian(m),
            other => other,
        })
}

/// `H = (|p|^2 + k |q|^2) / 2` and its Lagrangian `L = (|v|^2 - k |q|^2) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicOscillator {
    pub n: usize,
    pub stiffness: f64,
}

impl HarmonicOscillator {
    pub fn new(n: usize, stiffness: f64) -> Result<Self> {
        if !(stiffness > 0.0 && stiffness.is_finite()) {
            return Err(GeoError::Parameter(format!("stiffness {stiffness} must be positive")));
        }
        Ok(Self { n, stiffness })
    }

    /// Exact flow of the oscillator.
    pub fn exact_flow(&self, q: &DVector<f64>, p: &DVector<f64>, t: f64) -> (DVector<f64>, DVector<f64>) {
        let w = self.stiffness.sqrt();
        let (c, s) = ((w * t).cos(), (w * t).sin());
        (q * c + p * (s / w), p * c - q * (w * s))
    }
}

impl Hamiltonian for HarmonicOscillator {
    fn dim(&self) -> usize {
        self.n
    }
    fn energy(&self, q: &DVector<f64>, p: &DVector<f64>) -> f64 {
        0.5 * (p.norm_squared() + self.stiffness * q.norm_squared())
    }
    fn dh_dq(&self, q: &DVector<f64>, _p: &DVector<f64>) -> DVector<f64> {
        q * self.stiffness
    }
    fn dh_dp(&self, _q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        p.clone()
    }
}

impl Lagrangian for HarmonicOscillator {
    fn dim(&self) -> usize {
        self.n
    }
    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * (v.norm_squared() - self.stiffness * q.norm_squared())
    }
    fn dl_dq(&self, q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        -q * self.stiffness
    }
    fn dl_dv(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }
    fn fiber_hessian(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(v.len(), v.len())
    }
}

/// Nonlinear pendulum chain for tests of non-quadratic dynamics: `H = |p|^2/2 - sum cos q_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pendulum {
    pub n: usize,
}

impl Hamiltonian for Pendulum {
    fn dim(&self) -> usize {
        self.n
    }
    fn energy(&self, q: &DVector<f64>, p: &DVector<f64>) -> f64 {
        0.5 * p.norm_squared() - q.iter().map(|x| x.cos()).sum::<f64>()
    }
    fn dh_dq(&self, q: &DVector<f64>, _p: &DVector<f64>) -> DVector<f64> {
        q.map(f64::sin)
    }
    fn dh_dp(&self, _q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        p.clone()
    }
}

type ScalarFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// A Hamiltonian given by closures, with gradients checked at construction.
pub struct FnHamiltonian {
    n: usize,
    h: Box<ScalarFn>,
    dq: Option<Box<GradFn>>,
    dp: Option<Box<GradFn>>,
}

impl FnHamiltonian {
    pub fn new(n: usize, h: Box<ScalarFn>, dq: Option<Box<GradFn>>, dp: Option<Box<GradFn>>) -> Result<Self> {
        let model = Self { n, h, dq, dp };
        validate_hamiltonian(&model, 8, 0x5eed)?;
        Ok(model)
    }
}

impl Hamiltonian for FnHamiltonian {
    fn dim(&self) -> usize {
        self.n
    }
    fn energy(&self, q: &DVector<f64>, p: &DVector<f64>) -> f64 {
        (self.h)(q, p)
    }
    fn dh_dq(&self, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        match &self.dq {
            Some(f) => f(q, p),
            None => nan_on_err(fd_gradient(|x| self.energy(x, p), q, FD_REL), q.len()),
        }
    }
    fn dh_dp(&self, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        match &self.dp {
            Some(f) => f(q, p),
            None => nan_on_err(fd_gradient(|x| self.energy(q, x), p, FD_REL), p.len()),
        }
    }
}

/// Compares the model gradients with central differences at random points (tolerance 1e-6).
pub fn validate_hamiltonian(model: &dyn Hamiltonian, samples: usize, seed: u64) -> Result<()> {
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let p = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let gq = fd_gradient(|x| model.energy(x, &p), &q, FD_REL)?;
        let gp = fd_gradient(|x| model.energy(&q, x), &p, FD_REL)?;
        let dq = model.dh_dq(&q, &p);
        let dp = model.dh_dp(&q, &p);
        check_len(n, dq.len())?;
        check_len(n, dp.len())?;
        let err = (gq - dq).amax().max((gp - dp).amax());
        if !(err <= 1e-6) {
            return Err(GeoError::Parameter(format!(
                "analytic gradient disagrees with finite differences by {err:e}"
            )));
        }
    }
    Ok(())
}

/// A point of `T*R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub t: f64,
}

impl CanonicalState {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        check_len(q.len(), p.len())?;
        Ok(Self { q, p, t: 0.0 })
    }
}

impl PhaseState for CanonicalState {
    fn coords(&self) -> DVector<f64> {
        stack(&self.q, &self.p)
    }
    fn with_coords(&self, z: &DVector<f64>) -> Result<Self> {
        let n = self.q.len();
        check_len(2 * n, z.len())?;
        Ok(Self {
            q: z.rows(0, n).into(),
            p: z.rows(n, n).into(),
            t: self.t,
        })
    }
    fn time(&self) -> f64 {
        self.t
    }
}

/// A point of `TR^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub t: f64,
}

impl PhaseState for VelocityState {
    fn coords(&self) -> DVector<f64> {
        stack(&self.q, &self.v)
    }
    fn with_coords(&self, z: &DVector<f64>) -> Result<Self> {
        let n = self.q.len();
        check_len(2 * n, z.len())?;
        Ok(Self {
            q: z.rows(0, n).into(),
            v: z.rows(n, n).into(),
            t: self.t,
        })
    }
    fn time(&self) -> f64 {
        self.t
    }
}

pub(crate) fn check_h(h: f64) -> Result<()> {
    if h.is_finite() {
        Ok(())
    } else {
        Err(GeoError::Parameter(format!("step size {h} is not finite")))
    }
}

/// One step of the symplectic integrator generated by `m`.
pub fn hamiltonian_step(
    model: &dyn Hamiltonian,
    z: &CanonicalState,
    h: f64,
    m: &VectorDiscretizationMap,
    solver: &SolverConfig,
) -> Result<(CanonicalState, StepInfo)> {
    check_h(h)?;
    let n = model.dim();
    check_len(n, z.q.len())?;
    check_len(n, z.p.len())?;
    check_len(n, m.dim())?;
    let lift = |x: &DVector<f64>| {
        let qb: DVector<f64> = x.rows(0, n).into();
        let pb: DVector<f64> = x.rows(n, n).into();
        let v = model.dh_dp(&qb, &pb) * h;
        let a = -model.dh_dq(&qb, &pb) * h;
        cotangent_lift_vector(m, &qb, &v, &a, &pb)
    };
    let out = newton(
        |x| {
            let (x0, _, c0, _) = lift(x)?;
            Ok(stack(&(x0 - &z.q), &(c0 + &z.p)))
        },
        stack(&z.q, &z.p),
        None,
        solver,
    )?;
    let (_, x1, _, c1) = lift(&out.x)?;
    Ok((
        CanonicalState {
            q: x1,
            p: c1,
            t: z.t + h,
        },
        StepInfo::from(&out),
    ))
}

/// One step of the Lagrangian form; returns the new `(q, v)`.
pub fn lagrangian_step(
    model: &dyn Lagrangian,
    s: &VelocityState,
    h: f64,
    m: &VectorDiscretizationMap,
    solver: &SolverConfig,
) -> Result<(VelocityState, StepInfo)> {
    check_h(h)?;
    let n = model.dim();
    check_len(n, s.q.len())?;
    check_len(n, s.v.len())?;
    check_len(n, m.dim())?;
    let pk = legendre(model, &s.q, &s.v);
    let lift = |x: &DVector<f64>| {
        let qb: DVector<f64> = x.rows(0, n).into();
        let vb: DVector<f64> = x.rows(n, n).into();
        let a = model.dl_dq(&qb, &vb) * h;
        let b = model.dl_dv(&qb, &vb);
        cotangent_lift_vector(m, &qb, &(&vb * h), &a, &b)
    };
    let out = newton(
        |x| {
            let (x0, _, c0, _) = lift(x)?;
            Ok(stack(&(x0 - &s.q), &(c0 + &pk)))
        },
        stack(&s.q, &s.v),
        None,
        solver,
    )?;
    let (_, q1, _, p1) = lift(&out.x)?;
    let vb: DVector<f64> = out.x.rows(n, n).into();
    let v1 = inverse_legendre(model, &q1, &p1, &vb, solver)?;
    Ok((
        VelocityState { q: q1, v: v1, t: s.t + h },
        StepInfo::from(&out),
    ))
}

/// [`hamiltonian_step`] as a [`StepMap`].
#[derive(Clone)]
pub struct HamiltonianStepper {
    pub model: Arc<dyn Hamiltonian>,
    pub map: VectorDiscretizationMap,
    pub solver: SolverConfig,
}

impl StepMap for HamiltonianStepper {
    type State = CanonicalState;

    fn step(&self, s: &CanonicalState, h: f64) -> Result<(CanonicalState, StepInfo)> {
        hamiltonian_step(self.model.as_ref(), s, h, &self.map, &self.solver)
    }

    fn adjoint(&self) -> Result<DynStep<CanonicalState>> {
        Ok(Arc::new(HamiltonianStepper {
            model: self.model.clone(),
            map: self.map.adjoint(),
            solver: self.solver,
        }))
    }

    fn label(&self) -> String {
        format!("hamiltonian[{}]", self.map.name())
    }
}

/// [`lagrangian_step`] as a [`StepMap`].
#[derive(Clone)]
pub struct LagrangianStepper {
    pub model: Arc<dyn Lagrangian>,
    pub map: VectorDiscretizationMap,
    pub solver: SolverConfig,
}

impl StepMap for LagrangianStepper {
    type State = VelocityState;

    fn step(&self, s: &VelocityState, h: f64) -> Result<(VelocityState, StepInfo)> {
        lagrangian_step(self.model.as_ref(), s, h, &self.map, &self.solver)
    }

    fn adjoint(&self) -> Result<DynStep<VelocityState>> {
        Ok(Arc::new(LagrangianStepper {
            model: self.model.clone(),
            map: self.map.adjoint(),
            solver: self.solver,
        }))
    }

    fn label(&self) -> String {
        format!("lagrangian[{}]", self.map.name())
    }
}

/// The canonical `2n x 2n` matrix `[[0, I], [-I, 0]]`.
pub fn canonical_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}
