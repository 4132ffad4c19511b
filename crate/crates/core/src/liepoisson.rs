//! Lie-Poisson integrators on the dual of a Lie algebra, group reconstruction,
//! the trivial-principal-bundle stepper and the forced Euler-Poincare scheme.
//!
//! The Hamiltonian step solves `dinv_right(h dH/dmu(mb))^T mb = mu_k` for the
//! intermediate momentum `mb` and advances by coadjoint transport,
//! `mu_{k+1} = coadjoint(tau(w)^-1, mu_k)` with `w = h dH/dmu(mb)`, which equals
//! `dinv_left(w)^T mb`. The transport form keeps Casimirs exact to round-off.
//! The induced continuous flow is `mu' = Lambda(mu) dH/dmu` with
//! `Lambda_ij = C^k_ij mu_k` (on so(3): `mu' = Omega x mu`).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::algebra::{AlgebraDescriptor, CoAlgebraElement, GroupElement};
use crate::compose::{DynStep, PhaseState, StepMap};
use crate::error::{check_len, GeoError, Result};
use crate::retractions::{cotangent_lift_vector, exp_retraction, stack, RetractionMap, VectorDiscretizationMap};
use crate::solver::{fd_gradient, fd_jacobian, newton, SolverConfig, StepInfo};
use crate::symplectic::{check_h, Lagrangian};

const FD_REL: f64 = 1e-6;

/// A Hamiltonian on `g*`.
pub trait LieHamiltonian: Send + Sync {
    fn algebra(&self) -> &Arc<AlgebraDescriptor>;
    fn energy(&self, mu: &DVector<f64>) -> f64;

    /// `dH/dmu`, an element of `g`.
    fn grad(&self, mu: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.energy(x), mu, FD_REL).unwrap_or_else(|_| DVector::from_element(mu.len(), f64::NAN))
    }
}

/// A reduced Lagrangian on `g`.
pub trait ReducedLagrangian: Send + Sync {
    fn algebra(&self) -> &Arc<AlgebraDescriptor>;
    fn lagrangian(&self, xi: &DVector<f64>) -> f64;

    /// `dl/dxi`, an element of `g*`.
    fn grad(&self, xi: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.lagrangian(x), xi, FD_REL).unwrap_or_else(|_| DVector::from_element(xi.len(), f64::NAN))
    }

    /// Fiber Hessian `W(xi)`.
    fn hessian(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let mut f = |x: &DVector<f64>| Ok(self.grad(x));
        fd_jacobian(&mut f, xi, 1e-5).unwrap_or_else(|_| DMatrix::from_element(xi.len(), xi.len(), f64::NAN))
    }
}

/// Quadratic model with diagonal inertia: `H = mu . I^-1 mu / 2`, `l = xi . I xi / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    algebra: Arc<AlgebraDescriptor>,
    inertia: DVector<f64>,
}

impl RigidBody {
    /// Free rigid body on so(3) with principal moments `(I1, I2, I3)`.
    pub fn new(inertia: [f64; 3]) -> Result<Self> {
        Self::with_algebra(Arc::new(AlgebraDescriptor::so3()), DVector::from_column_slice(&inertia))
    }

    pub fn with_algebra(algebra: Arc<AlgebraDescriptor>, inertia: DVector<f64>) -> Result<Self> {
        check_len(algebra.dim(), inertia.len())?;
        if inertia.iter().any(|i| !(*i > 0.0 && i.is_finite())) {
            return Err(GeoError::Parameter("inertia must be positive".into()));
        }
        Ok(Self { algebra, inertia })
    }

    pub fn algebra(&self) -> &Arc<AlgebraDescriptor> {
        &self.algebra
    }

    pub fn inertia(&self) -> &DVector<f64> {
        &self.inertia
    }

    /// `|mu|^2`, a Casimir on so(3)*.
    pub fn casimir(mu: &DVector<f64>) -> f64 {
        mu.norm_squared()
    }
}

impl LieHamiltonian for RigidBody {
    fn algebra(&self) -> &Arc<AlgebraDescriptor> {
        &self.algebra
    }
    fn energy(&self, mu: &DVector<f64>) -> f64 {
        0.5 * mu.component_div(&self.inertia).dot(mu)
    }
    fn grad(&self, mu: &DVector<f64>) -> DVector<f64> {
        mu.component_div(&self.inertia)
    }
}

impl ReducedLagrangian for RigidBody {
    fn algebra(&self) -> &Arc<AlgebraDescriptor> {
        &self.algebra
    }
    fn lagrangian(&self, xi: &DVector<f64>) -> f64 {
        0.5 * xi.component_mul(&self.inertia).dot(xi)
    }
    fn grad(&self, xi: &DVector<f64>) -> DVector<f64> {
        xi.component_mul(&self.inertia)
    }
    fn hessian(&self, _xi: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.inertia)
    }
}

/// Compares `grad` with central differences at the given points (tolerance 1e-6).
pub fn validate_lie_hamiltonian(model: &dyn LieHamiltonian, points: &[DVector<f64>]) -> Result<()> {
    for mu in points {
        let fd = fd_gradient(|x| model.energy(x), mu, FD_REL)?;
        let err = (fd - model.grad(mu)).amax();
        if !(err <= 1e-6) {
            return Err(GeoError::Parameter(format!(
                "analytic gradient disagrees with finite differences by {err:e}"
            )));
        }
    }
    Ok(())
}

/// `Lambda_ij(mu) = sum_k C^k_ij mu_k`.
pub fn lie_poisson_tensor(algebra: &AlgebraDescriptor, mu: &DVector<f64>) -> DMatrix<f64> {
    let r = algebra.dim();
    DMatrix::from_fn(r, r, |i, j| (0..r).map(|k| algebra.structure_constant(i, j, k) * mu[k]).sum())
}

/// The continuous Lie-Poisson vector field `Lambda(mu) dH/dmu`.
pub fn lie_poisson_vector_field(model: &dyn LieHamiltonian, mu: &DVector<f64>) -> DVector<f64> {
    lie_poisson_tensor(model.algebra(), mu) * model.grad(mu)
}

/// State on `g*` with an optional reconstructed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LPState {
    pub mu: CoAlgebraElement,
    pub g: Option<GroupElement>,
    pub t: f64,
    pub last_xi: Option<DVector<f64>>,
}

impl LPState {
    pub fn new(algebra: Arc<AlgebraDescriptor>, mu: DVector<f64>) -> Result<Self> {
        Ok(Self {
            mu: CoAlgebraElement::new(algebra, mu)?,
            g: None,
            t: 0.0,
            last_xi: None,
        })
    }

    /// Tracks the configuration, starting from `g`.
    pub fn with_group(mut self, g: GroupElement) -> Result<Self> {
        self.mu.algebra.check_member(&g)?;
        self.g = Some(g);
        Ok(self)
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu.coords
    }
}

impl PhaseState for LPState {
    fn coords(&self) -> DVector<f64> {
        self.mu.coords.clone()
    }
    fn with_coords(&self, z: &DVector<f64>) -> Result<Self> {
        Ok(Self {
            mu: CoAlgebraElement::new(self.mu.algebra.clone(), z.clone())?,
            g: self.g.clone(),
            t: self.t,
            last_xi: None,
        })
    }
    fn time(&self) -> f64 {
        self.t
    }
}

/// Internals of one Lie-Poisson step.
#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub state: LPState,
    pub info: StepInfo,
    /// Intermediate momentum: `mb` (Hamiltonian) or `dl/dxi(xi)` (Lagrangian).
    pub intermediate: DVector<f64>,
    /// Algebra element with `w = h xi` fed to the retraction.
    pub xi: DVector<f64>,
    /// `dinv_right(h xi)^T intermediate`, which reproduces `mu_k`.
    pub mu_k_formula: DVector<f64>,
    /// `dinv_left(h xi)^T intermediate`, the closed-form `mu_{k+1}`.
    pub mu_next_formula: DVector<f64>,
}

fn advance(
    s: &LPState,
    tau: &RetractionMap,
    w: &DVector<f64>,
    h: f64,
    intermediate: DVector<f64>,
    xi: DVector<f64>,
    info: StepInfo,
) -> Result<LpOutcome> {
    let alg = &s.mu.algebra;
    let g_step = tau.evaluate(w)?.inverse()?;
    let mu_next = alg.coadjoint(&g_step, s.mu())?;
    let mu_k_formula = tau.dinv_right(w)?.tr_mul(&intermediate);
    let mu_next_formula = tau.dinv_left(w)?.tr_mul(&intermediate);
    let consistency = (&mu_next_formula - &mu_next).amax();
    let g = match &s.g {
        Some(g) => Some(g.compose(&g_step)?),
        None => None,
    };
    Ok(LpOutcome {
        state: LPState {
            mu: CoAlgebraElement::new(alg.clone(), mu_next)?,
            g,
            t: s.t + h,
            last_xi: Some(xi.clone()),
        },
        info: StepInfo { consistency, ..info },
        intermediate,
        xi,
        mu_k_formula,
        mu_next_formula,
    })
}

fn check_algebra(a: &AlgebraDescriptor, b: &AlgebraDescriptor) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(GeoError::Dimension {
            expected: a.dim(),
            found: b.dim(),
        })
    }
}

/// Hamiltonian Lie-Poisson step.
pub fn lp_hamiltonian_step(
    model: &dyn LieHamiltonian,
    s: &LPState,
    h: f64,
    tau: &RetractionMap,
    solver: &SolverConfig,
) -> Result<LpOutcome> {
    check_h(h)?;
    check_algebra(model.algebra(), &s.mu.algebra)?;
    check_algebra(model.algebra(), tau.algebra())?;
    let mu_k = s.mu();
    let out = newton(
        |mb| {
            let w = model.grad(mb) * h;
            Ok(tau.dinv_right(&w)?.tr_mul(mb) - mu_k)
        },
        mu_k.clone(),
        None,
        solver,
    )?;
    let xi = model.grad(&out.x);
    let w = &xi * h;
    advance(s, tau, &w, h, out.x.clone(), xi, StepInfo::from(&out))
}

/// Solves `dl/dxi(xi) = mu` for `xi`.
pub fn reduced_legendre_inverse(
    model: &dyn ReducedLagrangian,
    mu: &DVector<f64>,
    guess: Option<&DVector<f64>>,
    solver: &SolverConfig,
) -> Result<DVector<f64>> {
    let x0 = guess.cloned().unwrap_or_else(|| DVector::zeros(mu.len()));
    let jac = |x: &DVector<f64>| Ok(model.hessian(x));
    newton(|x| Ok(model.grad(x) - mu), x0, Some(&jac), solver)
        .map(|o| o.x)
        .map_err(|e| match e {
            GeoError::LinearSolve(m) => GeoError::SingularHessian(m),
            other => other,
        })
}

/// Lagrangian Lie-Poisson step; the solved `xi` is kept as the next warm start.
pub fn lp_lagrangian_step(
    model: &dyn ReducedLagrangian,
    s: &LPState,
    h: f64,
    tau: &RetractionMap,
    solver: &SolverConfig,
) -> Result<LpOutcome> {
    check_h(h)?;
    check_algebra(model.algebra(), &s.mu.algebra)?;
    check_algebra(model.algebra(), tau.algebra())?;
    let mu_k = s.mu();
    let guess = match &s.last_xi {
        Some(x) => x.clone(),
        None => reduced_legendre_inverse(model, mu_k, None, solver)?,
    };
    let out = newton(
        |xi| {
            let w = xi * h;
            Ok(tau.dinv_right(&w)?.tr_mul(&model.grad(xi)) - mu_k)
        },
        guess,
        None,
        solver,
    )
    .map_err(|e| match e {
        GeoError::LinearSolve(m) => GeoError::SingularHessian(m),
        other => other,
    })?;
    let xi = out.x.clone();
    let w = &xi * h;
    advance(s, tau, &w, h, model.grad(&xi), xi, StepInfo::from(&out))
}

/// `g_{k+1} = g_k tau(h xi)`.
pub fn reconstruct(g: &GroupElement, xi: &DVector<f64>, h: f64, tau: &RetractionMap) -> Result<GroupElement> {
    tau.algebra().check_member(g)?;
    g.compose(&tau.evaluate(&(xi * h))?)
}

/// Forced Euler-Poincare step
/// `xi + h dexp_{h xi}(W^-1 (ad*_xi dl/dxi + F(xi)))`, with `dexp = dinv_left^-1` for exp.
pub fn forced_ep_step(
    model: &dyn ReducedLagrangian,
    force: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    xi: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    check_h(h)?;
    let alg = model.algebra();
    check_len(alg.dim(), xi.len())?;
    let f = force(xi);
    check_len(alg.dim(), f.len())?;
    let rhs = alg.ad_star(xi, &model.grad(xi))? + f;
    let y = model
        .hessian(xi)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GeoError::SingularHessian("fiber hessian is singular".into()))?;
    let tau = exp_retraction(alg.clone())?;
    let d = tau
        .dinv_left(&(xi * h))?
        .lu()
        .solve(&y)
        .ok_or_else(|| GeoError::LinearSolve("exp differential is singular".into()))?;
    Ok(xi + d * h)
}

/// State of the forced Euler-Poincare scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct EpState {
    pub xi: DVector<f64>,
    pub g: Option<GroupElement>,
    pub t: f64,
}

impl PhaseState for EpState {
    fn coords(&self) -> DVector<f64> {
        self.xi.clone()
    }
    fn with_coords(&self, z: &DVector<f64>) -> Result<Self> {
        check_len(self.xi.len(), z.len())?;
        Ok(Self {
            xi: z.clone(),
            g: self.g.clone(),
            t: self.t,
        })
    }
    fn time(&self) -> f64 {
        self.t
    }
}

pub type Force = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// [`forced_ep_step`] with reconstruction `g_{k+1} = g_k exp(h xi_k)`.
#[derive(Clone)]
pub struct ForcedEpStepper {
    pub model: Arc<dyn ReducedLagrangian>,
    pub force: Force,
}

impl StepMap for ForcedEpStepper {
    type State = EpState;

    fn step(&self, s: &EpState, h: f64) -> Result<(EpState, StepInfo)> {
        let xi = forced_ep_step(self.model.as_ref(), self.force.as_ref(), &s.xi, h)?;
        let g = match &s.g {
            Some(g) => Some(reconstruct(g, &s.xi, h, &exp_retraction(self.model.algebra().clone())?)?),
            None => None,
        };
        Ok((EpState { xi, g, t: s.t + h }, StepInfo::default()))
    }

    fn label(&self) -> String {
        "forced-ep".into()
    }
}

/// [`lp_hamiltonian_step`] as a [`StepMap`].
#[derive(Clone)]
pub struct LpHamiltonianStepper {
    pub model: Arc<dyn LieHamiltonian>,
    pub tau: RetractionMap,
    pub solver: SolverConfig,
}

impl StepMap for LpHamiltonianStepper {
    type State = LPState;

    fn step(&self, s: &LPState, h: f64) -> Result<(LPState, StepInfo)> {
        let o = lp_hamiltonian_step(self.model.as_ref(), s, h, &self.tau, &self.solver)?;
        Ok((o.state, o.info))
    }

    fn adjoint(&self) -> Result<DynStep<LPState>> {
        Ok(Arc::new(Self {
            model: self.model.clone(),
            tau: self.tau.adjoint(),
            solver: self.solver,
        }))
    }

    fn label(&self) -> String {
        format!("lp-hamiltonian[{}]", self.tau.name())
    }
}

/// [`lp_lagrangian_step`] as a [`StepMap`].
#[derive(Clone)]
pub struct LpLagrangianStepper {
    pub model: Arc<dyn ReducedLagrangian>,
    pub tau: RetractionMap,
    pub solver: SolverConfig,
}

impl StepMap for LpLagrangianStepper {
    type State = LPState;

    fn step(&self, s: &LPState, h: f64) -> Result<(LPState, StepInfo)> {
        let o = lp_lagrangian_step(self.model.as_ref(), s, h, &self.tau, &self.solver)?;
        Ok((o.state, o.info))
    }

    fn adjoint(&self) -> Result<DynStep<LPState>> {
        Ok(Arc::new(Self {
            model: self.model.clone(),
            tau: self.tau.adjoint(),
            solver: self.solver,
        }))
    }

    fn label(&self) -> String {
        format!("lp-lagrangian[{}]", self.tau.name())
    }
}

/// A Lagrangian `L(xi, q, v)` on `g x TQ`, `Q = R^n`.
pub trait BundleLagrangian: Send + Sync {
    fn algebra(&self) -> &Arc<AlgebraDescriptor>;
    fn dim(&self) -> usize;
    fn lagrangian(&self, xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> f64;

    fn dl_dxi(&self, xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.lagrangian(x, q, v), xi, FD_REL).unwrap_or_else(|_| DVector::from_element(xi.len(), f64::NAN))
    }
    fn dl_dq(&self, xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.lagrangian(xi, x, v), q, FD_REL).unwrap_or_else(|_| DVector::from_element(q.len(), f64::NAN))
    }
    fn dl_dv(&self, xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.lagrangian(xi, q, x), v, FD_REL).unwrap_or_else(|_| DVector::from_element(v.len(), f64::NAN))
    }

    /// Energy `dL/dxi . xi + dL/dv . v - L`.
    fn energy(&self, xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.dl_dxi(xi, q, v).dot(xi) + self.dl_dv(xi, q, v).dot(v) - self.lagrangian(xi, q, v)
    }
}

/// `L = l(xi) + L_Q(q, v)`.
#[derive(Clone)]
pub struct DecoupledBundle {
    pub body: Arc<dyn ReducedLagrangian>,
    pub shape: Arc<dyn Lagrangian>,
}

impl BundleLagrangian for DecoupledBundle {
    fn algebra(&self) -> &Arc<AlgebraDescriptor> {
        self.body.algebra()
    }
    fn dim(&self) -> usize {
        self.shape.dim()
    }
    fn lagrangian(&self, xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.body.lagrangian(xi) + self.shape.lagrangian(q, v)
    }
    fn dl_dxi(&self, xi: &DVector<f64>, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        self.body.grad(xi)
    }
    fn dl_dq(&self, _xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.shape.dl_dq(q, v)
    }
    fn dl_dv(&self, _xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.shape.dl_dv(q, v)
    }
}

/// Rigid body carrying an isotropic oscillator in R^3, coupled through `eps q . xi`:
/// `L = xi . I xi / 2 + |v|^2 / 2 - k |q|^2 / 2 + eps q . xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyOscillator {
    algebra: Arc<AlgebraDescriptor>,
    pub inertia: DVector<f64>,
    pub stiffness: f64,
    pub coupling: f64,
}

impl BodyOscillator {
    pub fn new(inertia: [f64; 3], stiffness: f64, coupling: f64) -> Result<Self> {
        if inertia.iter().any(|i| !(*i > 0.0)) || !(stiffness > 0.0) {
            return Err(GeoError::Parameter("inertia and stiffness must be positive".into()));
        }
        Ok(Self {
            algebra: Arc::new(AlgebraDescriptor::so3()),
            inertia: DVector::from_column_slice(&inertia),
            stiffness,
            coupling,
        })
    }
}

impl BundleLagrangian for BodyOscillator {
    fn algebra(&self) -> &Arc<AlgebraDescriptor> {
        &self.algebra
    }
    fn dim(&self) -> usize {
        3
    }
    fn lagrangian(&self, xi: &DVector<f64>, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * xi.component_mul(&self.inertia).dot(xi) + 0.5 * v.norm_squared() - 0.5 * self.stiffness * q.norm_squared()
            + self.coupling * q.dot(xi)
    }
    fn dl_dxi(&self, xi: &DVector<f64>, q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        xi.component_mul(&self.inertia) + q * self.coupling
    }
    fn dl_dq(&self, xi: &DVector<f64>, q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        -q * self.stiffness + xi * self.coupling
    }
    fn dl_dv(&self, _xi: &DVector<f64>, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }
}

/// State on `g* x T*Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleState {
    pub mu: DVector<f64>,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub t: f64,
    /// Warm start `(xi, vb)`.
    pub last: Option<DVector<f64>>,
}

impl PhaseState for BundleState {
    fn coords(&self) -> DVector<f64> {
        stack(&stack(&self.mu, &self.q), &self.p)
    }
    fn with_coords(&self, z: &DVector<f64>) -> Result<Self> {
        let (r, n) = (self.mu.len(), self.q.len());
        check_len(r + 2 * n, z.len())?;
        Ok(Self {
            mu: z.rows(0, r).into(),
            q: z.rows(r, n).into(),
            p: z.rows(r + n, n).into(),
            t: self.t,
            last: None,
        })
    }
    fn time(&self) -> f64 {
        self.t
    }
}

/// Joint Legendre inverse: `(xi, v)` with `dL/dxi = mu`, `dL/dv = p` at `q`.
pub fn bundle_legendre_inverse(
    model: &dyn BundleLagrangian,
    mu: &DVector<f64>,
    q: &DVector<f64>,
    p: &DVector<f64>,
    solver: &SolverConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (r, n) = (model.algebra().dim(), model.dim());
    let target = stack(mu, p);
    let out = newton(
        |x| {
            let (xi, v) = (x.rows(0, r).into(), x.rows(r, n).into());
            Ok(stack(&model.dl_dxi(&xi, q, &v), &model.dl_dv(&xi, q, &v)) - &target)
        },
        DVector::zeros(r + n),
        None,
        solver,
    )
    .map_err(|e| match e {
        GeoError::LinearSolve(m) => GeoError::SingularHessian(m),
        other => other,
    })?;
    Ok((out.x.rows(0, r).into(), out.x.rows(r, n).into()))
}

/// One step on `g* x T*Q`: Lie-Poisson factor with `tau`, canonical factor with `m`.
pub fn bundle_step(
    model: &dyn BundleLagrangian,
    s: &BundleState,
    h: f64,
    tau: &RetractionMap,
    m: &VectorDiscretizationMap,
    solver: &SolverConfig,
) -> Result<(BundleState, StepInfo)> {
    check_h(h)?;
    let alg = model.algebra();
    check_algebra(alg, tau.algebra())?;
    let (r, n) = (alg.dim(), model.dim());
    check_len(r, s.mu.len())?;
    check_len(n, s.q.len())?;
    check_len(n, s.p.len())?;
    check_len(n, m.dim())?;
    let split = |x: &DVector<f64>| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (x.rows(0, r).into(), x.rows(r, n).into(), x.rows(r + n, n).into())
    };
    let lift = |xi: &DVector<f64>, qb: &DVector<f64>, vb: &DVector<f64>| {
        let a = model.dl_dq(xi, qb, vb) * h;
        let b = model.dl_dv(xi, qb, vb);
        cotangent_lift_vector(m, qb, &(vb * h), &a, &b)
    };
    let guess = match &s.last {
        Some(x) => {
            let mut g = x.clone();
            g = stack(&stack(&g.rows(0, r).into(), &s.q), &g.rows(r, n).into());
            g
        }
        None => {
            let (xi, v) = bundle_legendre_inverse(model, &s.mu, &s.q, &s.p, solver)?;
            stack(&stack(&xi, &s.q), &v)
        }
    };
    let out = newton(
        |x| {
            let (xi, qb, vb) = split(x);
            let lie = tau.dinv_right(&(&xi * h))?.tr_mul(&model.dl_dxi(&xi, &qb, &vb)) - &s.mu;
            let (x0, _, c0, _) = lift(&xi, &qb, &vb)?;
            Ok(stack(&stack(&lie, &(x0 - &s.q)), &(c0 + &s.p)))
        },
        guess,
        None,
        solver,
    )?;
    let (xi, qb, vb) = split(&out.x);
    let (_, q1, _, p1) = lift(&xi, &qb, &vb)?;
    let w = &xi * h;
    let g_step = tau.evaluate(&w)?.inverse()?;
    let mu_next = alg.coadjoint(&g_step, &s.mu)?;
    let formula = tau.dinv_left(&w)?.tr_mul(&model.dl_dxi(&xi, &qb, &vb));
    let info = StepInfo {
        consistency: (&formula - &mu_next).amax(),
        ..StepInfo::from(&out)
    };
    Ok((
        BundleState {
            mu: mu_next,
            q: q1,
            p: p1,
            t: s.t + h,
            last: Some(stack(&xi, &vb)),
        },
        info,
    ))
}

/// [`bundle_step`] as a [`StepMap`].
#[derive(Clone)]
pub struct BundleStepper {
    pub model: Arc<dyn BundleLagrangian>,
    pub tau: RetractionMap,
    pub map: VectorDiscretizationMap,
    pub solver: SolverConfig,
}

impl StepMap for BundleStepper {
    type State = BundleState;

    fn step(&self, s: &BundleState, h: f64) -> Result<(BundleState, StepInfo)> {
        bundle_step(self.model.as_ref(), s, h, &self.tau, &self.map, &self.solver)
    }

    fn adjoint(&self) -> Result<DynStep<BundleState>> {
        Ok(Arc::new(Self {
            model: self.model.clone(),
            tau: self.tau.adjoint(),
            map: self.map.adjoint(),
            solver: self.solver,
        }))
    }

    fn label(&self) -> String {
        format!("bundle[{},{}]", self.tau.name(), self.map.name())
    }
}
