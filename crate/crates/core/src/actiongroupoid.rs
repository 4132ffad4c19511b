//! Poisson integrators on `Q x h*` for a right action of a matrix group on
//! `Q` embedded in `R^m`, and the heavy top.
//!
//! Generators are the columns `rho_i(q) = d/dt act(q, tau(t e_i))`, the momentum
//! map is `J(p)_i = p . rho_i(q)`, and the linear Poisson tensor has blocks
//! `Lambda_qq = 0`, `Lambda_{q^j mu_i} = -rho^j_i`, `Lambda_{mu_i mu_j} = C^k_ij mu_k`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebra::{AlgebraDescriptor, CoAlgebraElement, GroupElement};
use crate::compose::{DynStep, PhaseState, StepMap};
use crate::error::{check_len, GeoError, Result};
use crate::retractions::{stack, RetractionMap};
use crate::solver::{fd_gradient, fd_jacobian, newton, SolverConfig, StepInfo};
use crate::symplectic::check_h;

const FD_REL: f64 = 1e-6;

fn nan_vec(n: usize) -> DVector<f64> {
    DVector::from_element(n, f64::NAN)
}

/// A right action with Hamiltonian `H(q, mu)` and Lagrangian `L(q, xi)`.
pub trait ActionSystem: Send + Sync {
    fn algebra(&self) -> &Arc<AlgebraDescriptor>;
    fn ambient_dim(&self) -> usize;
    fn act(&self, q: &DVector<f64>, g: &GroupElement) -> Result<DVector<f64>>;
    /// `m x r` matrix whose columns are the infinitesimal generators at `q`.
    fn generators(&self, q: &DVector<f64>) -> DMatrix<f64>;

    fn energy(&self, q: &DVector<f64>, mu: &DVector<f64>) -> f64;
    fn dh_dq(&self, q: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.energy(x, mu), q, FD_REL).unwrap_or_else(|_| nan_vec(q.len()))
    }
    fn dh_dmu(&self, q: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.energy(q, x), mu, FD_REL).unwrap_or_else(|_| nan_vec(mu.len()))
    }

    fn lagrangian(&self, q: &DVector<f64>, xi: &DVector<f64>) -> f64;
    fn dl_dq(&self, q: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.lagrangian(x, xi), q, FD_REL).unwrap_or_else(|_| nan_vec(q.len()))
    }
    fn dl_dxi(&self, q: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|x| self.lagrangian(q, x), xi, FD_REL).unwrap_or_else(|_| nan_vec(xi.len()))
    }
    fn hessian_xi(&self, q: &DVector<f64>, xi: &DVector<f64>) -> DMatrix<f64> {
        let mut f = |x: &DVector<f64>| Ok(self.dl_dxi(q, x));
        fd_jacobian(&mut f, xi, 1e-5).unwrap_or_else(|_| DMatrix::from_element(xi.len(), xi.len(), f64::NAN))
    }

    /// Casimir functions of the action Poisson structure, if known.
    fn casimirs(&self, _q: &DVector<f64>, _mu: &DVector<f64>) -> Vec<f64> {
        Vec::new()
    }
}

/// `J_i = p . rho_i(q)`.
pub fn momentum_map(model: &dyn ActionSystem, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(model.ambient_dim(), q.len())?;
    check_len(model.ambient_dim(), p.len())?;
    Ok(model.generators(q).tr_mul(p))
}

/// The `(m + r) x (m + r)` linear Poisson tensor at `(q, mu)`.
pub fn action_poisson_tensor(model: &dyn ActionSystem, q: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let (m, r) = (model.ambient_dim(), model.algebra().dim());
    let rho = model.generators(q);
    let alg = model.algebra();
    let mut lam = DMatrix::zeros(m + r, m + r);
    for i in 0..r {
        for j in 0..m {
            lam[(j, m + i)] = -rho[(j, i)];
            lam[(m + i, j)] = rho[(j, i)];
        }
        for j in 0..r {
            lam[(m + i, m + j)] = (0..r).map(|k| alg.structure_constant(i, j, k) * mu[k]).sum();
        }
    }
    lam
}

/// The continuous flow `z' = Lambda(z) grad H(z)`, `z = (q, mu)`.
pub fn action_vector_field(model: &dyn ActionSystem, z: &DVector<f64>) -> DVector<f64> {
    let m = model.ambient_dim();
    let r = model.algebra().dim();
    let q: DVector<f64> = z.rows(0, m).into();
    let mu: DVector<f64> = z.rows(m, r).into();
    let grad = stack(&model.dh_dq(&q, &mu), &model.dh_dmu(&q, &mu));
    action_poisson_tensor(model, &q, &mu) * grad
}

/// Checks the action axiom and the generators against differences of `act(q, tau(t e_i))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionCheck {
    pub axiom_residual: f64,
    pub generator_residual: f64,
}

pub fn validate_action(
    model: &dyn ActionSystem,
    tau: &RetractionMap,
    q: &DVector<f64>,
    g1: &GroupElement,
    g2: &GroupElement,
) -> Result<ActionCheck> {
    let lhs = model.act(&model.act(q, g1)?, g2)?;
    let rhs = model.act(q, &g1.compose(g2)?)?;
    let r = model.algebra().dim();
    let rho = model.generators(q);
    let mut gen = 0.0_f64;
    let s = 1e-6;
    for i in 0..r {
        let mut e = DVector::zeros(r);
        e[i] = s;
        let qp = model.act(q, &tau.evaluate(&e)?)?;
        let qm = model.act(q, &tau.evaluate(&-e)?)?;
        let col = (qp - qm) / (2.0 * s);
        gen = gen.max((col - rho.column(i)).amax());
    }
    Ok(ActionCheck {
        axiom_residual: (lhs - rhs).amax(),
        generator_residual: gen,
    })
}

/// Heavy top: `Q = S^2` in R^3, right action `act(q, g) = g^T q`,
/// `L = xi . I xi / 2 - mgd q . e`, `H = mu . I^-1 mu / 2 + mgd q . e`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyTop {
    algebra: Arc<AlgebraDescriptor>,
    pub inertia: DVector<f64>,
    pub mgd: f64,
    pub e: DVector<f64>,
}

/// Builds the heavy top from principal moments, mass, gravity, lever arm and axis.
pub fn heavy_top_model(inertia: [f64; 3], mass: f64, gravity: f64, lever: f64, e: [f64; 3]) -> Result<HeavyTop> {
    if inertia.iter().any(|i| !(*i > 0.0 && i.is_finite())) {
        return Err(GeoError::Parameter("inertia must be positive".into()));
    }
    let e = DVector::from_column_slice(&e);
    if (e.norm() - 1.0).abs() > 1e-12 {
        return Err(GeoError::Parameter("axis e must be a unit vector".into()));
    }
    let mgd = mass * gravity * lever;
    if !mgd.is_finite() {
        return Err(GeoError::Parameter("m g d must be finite".into()));
    }
    Ok(HeavyTop {
        algebra: Arc::new(AlgebraDescriptor::so3()),
        inertia: DVector::from_column_slice(&inertia),
        mgd,
        e,
    })
}

impl HeavyTop {
    pub fn algebra(&self) -> &Arc<AlgebraDescriptor> {
        &self.algebra
    }
}

impl ActionSystem for HeavyTop {
    fn algebra(&self) -> &Arc<AlgebraDescriptor> {
        &self.algebra
    }
    fn ambient_dim(&self) -> usize {
        3
    }
    fn act(&self, q: &DVector<f64>, g: &GroupElement) -> Result<DVector<f64>> {
        check_len(3, q.len())?;
        check_len(3, g.matrix().nrows())?;
        Ok(g.matrix().tr_mul(q))
    }
    fn generators(&self, q: &DVector<f64>) -> DMatrix<f64> {
        // q x e_i
        DMatrix::from_row_slice(3, 3, &[0.0, -q[2], q[1], q[2], 0.0, -q[0], -q[1], q[0], 0.0])
    }
    fn energy(&self, q: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        0.5 * mu.component_div(&self.inertia).dot(mu) + self.mgd * q.dot(&self.e)
    }
    fn dh_dq(&self, _q: &DVector<f64>, _mu: &DVector<f64>) -> DVector<f64> {
        &self.e * self.mgd
    }
    fn dh_dmu(&self, _q: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        mu.component_div(&self.inertia)
    }
    fn lagrangian(&self, q: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        0.5 * xi.component_mul(&self.inertia).dot(xi) - self.mgd * q.dot(&self.e)
    }
    fn dl_dq(&self, _q: &DVector<f64>, _xi: &DVector<f64>) -> DVector<f64> {
        &self.e * -self.mgd
    }
    fn dl_dxi(&self, _q: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        xi.component_mul(&self.inertia)
    }
    fn hessian_xi(&self, _q: &DVector<f64>, _xi: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.inertia)
    }
    /// `|q|^2` and `q . mu`.
    fn casimirs(&self, q: &DVector<f64>, mu: &DVector<f64>) -> Vec<f64> {
        vec![q.norm_squared(), q.dot(mu)]
    }
}

/// A point of `Q x h*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionState {
    pub q: DVector<f64>,
    pub mu: CoAlgebraElement,
    pub t: f64,
    pub last_xi: Option<DVector<f64>>,
}

impl ActionState {
    pub fn new(algebra: Arc<AlgebraDescriptor>, q: DVector<f64>, mu: DVector<f64>) -> Result<Self> {
        Ok(Self {
            q,
            mu: CoAlgebraElement::new(algebra, mu)?,
            t: 0.0,
            last_xi: None,
        })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu.coords
    }
}

impl PhaseState for ActionState {
    fn coords(&self) -> DVector<f64> {
        stack(&self.q, &self.mu.coords)
    }
    fn with_coords(&self, z: &DVector<f64>) -> Result<Self> {
        let (m, r) = (self.q.len(), self.mu.coords.len());
        check_len(m + r, z.len())?;
        Ok(Self {
            q: z.rows(0, m).into(),
            mu: CoAlgebraElement::new(self.mu.algebra.clone(), z.rows(m, r).into())?,
            t: self.t,
            last_xi: None,
        })
    }
    fn time(&self) -> f64 {
        self.t
    }
}

/// Internals of one action-groupoid step.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub state: ActionState,
    pub info: StepInfo,
    /// Intermediate momentum (`mb`, or `dL/dxi` for the Lagrangian form).
    pub intermediate: DVector<f64>,
    /// Algebra element with `w = h xi` fed to the retraction.
    pub xi: DVector<f64>,
}

fn check_state(model: &dyn ActionSystem, s: &ActionState, tau: &RetractionMap) -> Result<()> {
    check_len(model.ambient_dim(), s.q.len())?;
    check_len(model.algebra().dim(), s.mu.coords.len())?;
    if model.algebra().as_ref() != tau.algebra().as_ref() {
        return Err(GeoError::Dimension {
            expected: model.algebra().dim(),
            found: tau.algebra().dim(),
        });
    }
    Ok(())
}

fn finish(
    model: &dyn ActionSystem,
    s: &ActionState,
    tau: &RetractionMap,
    h: f64,
    xi: DVector<f64>,
    intermediate: DVector<f64>,
    info: StepInfo,
) -> Result<ActionOutcome> {
    let w = &xi * h;
    let q1 = model.act(&s.q, &tau.evaluate(&w)?.inverse()?)?;
    let mu1 = tau.dinv_left(&w)?.tr_mul(&intermediate);
    Ok(ActionOutcome {
        state: ActionState {
            q: q1,
            mu: CoAlgebraElement::new(s.mu.algebra.clone(), mu1)?,
            t: s.t + h,
            last_xi: Some(xi.clone()),
        },
        info,
        intermediate,
        xi,
    })
}

/// Hamiltonian step: solve `mu_k = -J(h dH/dq(q_k, mb)) + dinv_right(w)^T mb`,
/// `w = h dH/dmu(q_k, mb)`; then `q_{k+1} = act(q_k, tau(w)^-1)`,
/// `mu_{k+1} = dinv_left(w)^T mb`.
pub fn action_hamiltonian_step(
    model: &dyn ActionSystem,
    s: &ActionState,
    h: f64,
    tau: &RetractionMap,
    solver: &SolverConfig,
) -> Result<ActionOutcome> {
    check_h(h)?;
    check_state(model, s, tau)?;
    let q = &s.q;
    let mu_k = s.mu();
    let rho = model.generators(q);
    let out = newton(
        |mb| {
            let w = model.dh_dmu(q, mb) * h;
            let jq = rho.tr_mul(&(model.dh_dq(q, mb) * h));
            Ok(tau.dinv_right(&w)?.tr_mul(mb) - jq - mu_k)
        },
        mu_k.clone(),
        None,
        solver,
    )?;
    let xi = model.dh_dmu(q, &out.x);
    finish(model, s, tau, h, xi, out.x.clone(), StepInfo::from(&out))
}

/// Lagrangian step: solve `mu_k = J(h dL/dq(q_k, xi)) + dinv_right(h xi)^T dL/dxi(q_k, xi)`;
/// then `q_{k+1} = act(q_k, tau(h xi)^-1)`, `mu_{k+1} = dinv_left(h xi)^T dL/dxi`.
pub fn action_lagrangian_step(
    model: &dyn ActionSystem,
    s: &ActionState,
    h: f64,
    tau: &RetractionMap,
    solver: &SolverConfig,
) -> Result<ActionOutcome> {
    check_h(h)?;
    check_state(model, s, tau)?;
    let q = &s.q;
    let mu_k = s.mu();
    let rho = model.generators(q);
    let guess = match &s.last_xi {
        Some(x) => x.clone(),
        None => {
            let jac = |x: &DVector<f64>| Ok(model.hessian_xi(q, x));
            newton(|x| Ok(model.dl_dxi(q, x) - mu_k), DVector::zeros(mu_k.len()), Some(&jac), solver)
                .map_err(|e| match e {
                    GeoError::LinearSolve(m) => GeoError::SingularHessian(m),
                    other => other,
                })?
                .x
        }
    };
    let out = newton(
        |xi| {
            let jq = rho.tr_mul(&(model.dl_dq(q, xi) * h));
            Ok(tau.dinv_right(&(xi * h))?.tr_mul(&model.dl_dxi(q, xi)) + jq - mu_k)
        },
        guess,
        None,
        solver,
    )?;
    let xi = out.x.clone();
    let m = model.dl_dxi(q, &xi);
    finish(model, s, tau, h, xi, m, StepInfo::from(&out))
}

/// [`action_hamiltonian_step`] as a [`StepMap`].
#[derive(Clone)]
pub struct ActionHamiltonianStepper {
    pub model: Arc<dyn ActionSystem>,
    pub tau: RetractionMap,
    pub solver: SolverConfig,
}

impl StepMap for ActionHamiltonianStepper {
    type State = ActionState;

    fn step(&self, s: &ActionState, h: f64) -> Result<(ActionState, StepInfo)> {
        let o = action_hamiltonian_step(self.model.as_ref(), s, h, &self.tau, &self.solver)?;
        Ok((o.state, o.info))
    }

    fn adjoint(&self) -> Result<DynStep<ActionState>> {
        Ok(Arc::new(Self {
            model: self.model.clone(),
            tau: self.tau.adjoint(),
            solver: self.solver,
        }))
    }

    fn label(&self) -> String {
        format!("action-hamiltonian[{}]", self.tau.name())
    }
}

/// [`action_lagrangian_step`] as a [`StepMap`].
#[derive(Clone)]
pub struct ActionLagrangianStepper {
    pub model: Arc<dyn ActionSystem>,
    pub tau: RetractionMap,
    pub solver: SolverConfig,
}

impl StepMap for ActionLagrangianStepper {
    type State = ActionState;

    fn step(&self, s: &ActionState, h: f64) -> Result<(ActionState, StepInfo)> {
        let o = action_lagrangian_step(self.model.as_ref(), s, h, &self.tau, &self.solver)?;
        Ok((o.state, o.info))
    }

    fn adjoint(&self) -> Result<DynStep<ActionState>> {
        Ok(Arc::new(Self {
            model: self.model.clone(),
            tau: self.tau.adjoint(),
            solver: self.solver,
        }))
    }

    fn label(&self) -> String {
        format!("action-lagrangian[{}]", self.tau.name())
    }
}
