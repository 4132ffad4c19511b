//! Retraction maps `tau: g -> G` and discretization maps `R_d: TQ -> Q x Q`.
//!
//! Inverse differentials follow the trivializations used by the integrators:
//! `dinv_left(xi)` inverts `eta -> vee(D tau(xi)[eta] tau(xi)^-1)` and
//! `dinv_right(xi)` inverts `eta -> vee(tau(xi)^-1 D tau(xi)[eta])`. On so(3)
//! this gives `dinv_left(w) = I - w^/2 + ...` for both exp and Cayley, and the
//! two are related by `dinv_left(xi) = dinv_right(xi) Ad_{tau(xi)^-1}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebra::{so3_hat, AlgebraDescriptor, GroupElement, GroupTag};
use crate::error::{check_len, GeoError, Result};
use crate::solver::{fd_jacobian, newton, SolverConfig};

const SMALL_ANGLE: f64 = 1e-4;
const LOG_GUARD: f64 = 1e-8;
const AXIOM_FD_REL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
enum RetractionKind {
    Exp,
    Cayley,
    Adjoint(Box<RetractionMap>),
}

/// A retraction `tau: g -> G` with its inverse and trivialized inverse differentials.
#[derive(Debug, Clone, PartialEq)]
pub struct RetractionMap {
    kind: RetractionKind,
    algebra: Arc<AlgebraDescriptor>,
}

/// The exponential map. Rodrigues on so(3), matrix exponential otherwise.
pub fn exp_retraction(algebra: Arc<AlgebraDescriptor>) -> Result<RetractionMap> {
    algebra.identity()?;
    Ok(RetractionMap {
        kind: RetractionKind::Exp,
        algebra,
    })
}

/// The Cayley map `(I - xi^/2)^-1 (I + xi^/2)`, in closed form on so(3).
pub fn cayley_retraction(algebra: Arc<AlgebraDescriptor>) -> Result<RetractionMap> {
    algebra.identity()?;
    Ok(RetractionMap {
        kind: RetractionKind::Cayley,
        algebra,
    })
}

impl RetractionMap {
    pub fn algebra(&self) -> &Arc<AlgebraDescriptor> {
        &self.algebra
    }

    pub fn name(&self) -> String {
        match &self.kind {
            RetractionKind::Exp => "exp".into(),
            RetractionKind::Cayley => "cay".into(),
            RetractionKind::Adjoint(inner) => format!("adjoint({})", inner.name()),
        }
    }

    /// `tau*(xi) = tau(-xi)^-1`. Taking the adjoint twice returns the original map.
    pub fn adjoint(&self) -> RetractionMap {
        match &self.kind {
            RetractionKind::Adjoint(inner) => (**inner).clone(),
            _ => RetractionMap {
                kind: RetractionKind::Adjoint(Box::new(self.clone())),
                algebra: self.algebra.clone(),
            },
        }
    }

    fn dim(&self) -> usize {
        self.algebra.dim()
    }

    pub fn evaluate(&self, xi: &DVector<f64>) -> Result<GroupElement> {
        check_len(self.dim(), xi.len())?;
        let id = self.algebra.identity()?;
        let tag = id.tag();
        let so3 = self.algebra.is_so3();
        let m = match &self.kind {
            RetractionKind::Exp if so3 => so3_exp(xi),
            RetractionKind::Exp => self.algebra.hat(xi)?.exp(),
            RetractionKind::Cayley if so3 => so3_cay(xi),
            RetractionKind::Cayley => {
                let n = id.matrix().nrows();
                let half = self.algebra.hat(xi)? * 0.5;
                let i = DMatrix::<f64>::identity(n, n);
                (&i - &half)
                    .lu()
                    .solve(&(&i + &half))
                    .ok_or_else(|| GeoError::Domain("I - xi/2 is singular".into()))?
            }
            RetractionKind::Adjoint(inner) => return inner.evaluate(&-xi)?.inverse(),
        };
        Ok(GroupElement::from_parts(m, tag))
    }

    /// Local inverse of `evaluate`.
    pub fn invert(&self, g: &GroupElement) -> Result<DVector<f64>> {
        self.algebra.check_member(g)?;
        let so3 = self.algebra.is_so3();
        match &self.kind {
            RetractionKind::Exp if so3 => so3_log(g.matrix()),
            RetractionKind::Exp => self.generic_log(g),
            RetractionKind::Cayley if so3 => {
                let r = g.matrix();
                let denom = 1.0 + r.trace();
                if denom.abs() < 1e-12 {
                    return Err(GeoError::Domain(
                        "rotation by pi is outside the range of the Cayley map".into(),
                    ));
                }
                let skew = r - r.transpose();
                Ok(DVector::from_vec(vec![skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]]) * (2.0 / denom))
            }
            RetractionKind::Cayley => {
                let n = g.matrix().nrows();
                let i = DMatrix::<f64>::identity(n, n);
                let num = g.matrix() - &i;
                let den = g.matrix() + &i;
                // xi^ = 2 (g - I)(g + I)^-1, solved as (g + I)^T X^T = (g - I)^T
                let xt = den
                    .transpose()
                    .lu()
                    .solve(&num.transpose())
                    .ok_or_else(|| GeoError::Domain("g + I is singular".into()))?;
                self.algebra.vee(&(xt.transpose() * 2.0))
            }
            RetractionKind::Adjoint(inner) => Ok(-inner.invert(&g.inverse()?)?),
        }
    }

    fn generic_log(&self, g: &GroupElement) -> Result<DVector<f64>> {
        let n = g.matrix().nrows();
        let i = DMatrix::<f64>::identity(n, n);
        let mut xi = self.algebra.vee(&(g.matrix() - &i))?;
        for _ in 0..100 {
            let e = self.evaluate(&xi)?.inverse()?;
            let defect = g.matrix() * e.matrix() - &i;
            if defect.amax() < 1e-15 {
                return Ok(xi);
            }
            let step = self.dinv_left(&xi)? * self.algebra.vee(&defect)?;
            xi += step;
        }
        Err(GeoError::Domain("matrix logarithm did not converge".into()))
    }

    /// Inverse of the right-trivialized differential `eta -> vee(D tau[eta] tau^-1)`.
    pub fn dinv_left(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.dim(), xi.len())?;
        let so3 = self.algebra.is_so3();
        match &self.kind {
            RetractionKind::Exp if so3 => so3_dexp_inv(xi, -1.0),
            RetractionKind::Exp => self.generic_dexp_inv(xi, 1.0),
            RetractionKind::Cayley if so3 => Ok(so3_dcay_inv(xi, -1.0)),
            RetractionKind::Cayley => self.generic_dcay_inv(xi, 1.0),
            RetractionKind::Adjoint(inner) => inner.dinv_right(&-xi),
        }
    }

    /// Inverse of the left-trivialized differential `eta -> vee(tau^-1 D tau[eta])`.
    pub fn dinv_right(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.dim(), xi.len())?;
        let so3 = self.algebra.is_so3();
        match &self.kind {
            RetractionKind::Exp if so3 => so3_dexp_inv(xi, 1.0),
            RetractionKind::Exp => self.generic_dexp_inv(xi, -1.0),
            RetractionKind::Cayley if so3 => Ok(so3_dcay_inv(xi, 1.0)),
            RetractionKind::Cayley => self.generic_dcay_inv(xi, -1.0),
            RetractionKind::Adjoint(inner) => inner.dinv_left(&-xi),
        }
    }

    // sum_k (s ad)^k / (k+1)!, inverted
    fn generic_dexp_inv(&self, xi: &DVector<f64>, s: f64) -> Result<DMatrix<f64>> {
        let r = self.dim();
        let ad = self.algebra.ad_matrix(xi)? * s;
        let mut term = DMatrix::<f64>::identity(r, r);
        let mut sum = term.clone();
        for k in 1..200 {
            term = &term * &ad / (k as f64 + 1.0);
            sum += &term;
            if term.amax() < 1e-18 * sum.amax() {
                break;
            }
        }
        sum.try_inverse()
            .ok_or_else(|| GeoError::Domain("exp differential is singular".into()))
    }

    // eta -> vee((I - s xi/2) eta^ (I + s xi/2))
    fn generic_dcay_inv(&self, xi: &DVector<f64>, s: f64) -> Result<DMatrix<f64>> {
        let r = self.dim();
        let x = self.algebra.hat(xi)? * (0.5 * s);
        let n = x.nrows();
        let i = DMatrix::<f64>::identity(n, n);
        let (a, b) = (&i - &x, &i + &x);
        let mut m = DMatrix::zeros(r, r);
        for j in 0..r {
            let mut e = DVector::zeros(r);
            e[j] = 1.0;
            let col = self.algebra.vee(&(&a * self.algebra.hat(&e)? * &b))?;
            m.set_column(j, &col);
        }
        Ok(m)
    }

    /// `max |dinv_left(xi) - dinv_right(xi) Ad_{tau(xi)^-1}|`.
    pub fn trivialization_residual(&self, xi: &DVector<f64>) -> Result<f64> {
        let g = self.evaluate(xi)?;
        let ad_inv = self.algebra.adjoint_matrix(&g.inverse()?)?;
        Ok((self.dinv_left(xi)? - self.dinv_right(xi)? * ad_inv).amax())
    }

    /// Compares the map with its adjoint at the sample points.
    pub fn is_symmetric(&self, samples: &[DVector<f64>], tol: f64) -> Result<bool> {
        let adj = self.adjoint();
        for xi in samples {
            let d = (self.evaluate(xi)?.matrix() - adj.evaluate(xi)?.matrix()).amax();
            if d > tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn so3_exp(w: &DVector<f64>) -> DMatrix<f64> {
    let th2 = w.norm_squared();
    let th = th2.sqrt();
    let k = so3_hat(w);
    let (a, b) = if th < SMALL_ANGLE {
        (1.0 - th2 / 6.0 + th2 * th2 / 120.0, 0.5 - th2 / 24.0 + th2 * th2 / 720.0)
    } else {
        (th.sin() / th, (1.0 - th.cos()) / th2)
    };
    DMatrix::identity(3, 3) + &k * a + &k * &k * b
}

fn so3_log(r: &DMatrix<f64>) -> Result<DVector<f64>> {
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let th = c.acos();
    if th >= std::f64::consts::PI - LOG_GUARD {
        return Err(GeoError::Domain(format!(
            "rotation angle {th} is at the branch cut of the logarithm"
        )));
    }
    let s = DVector::from_vec(vec![r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]]);
    let f = if th < SMALL_ANGLE {
        0.5 * (1.0 + th * th / 6.0 + 7.0 * th.powi(4) / 360.0)
    } else {
        th / (2.0 * th.sin())
    };
    Ok(s * f)
}

// I + s w^/2 + c(|w|) w^2; s = -1 gives dinv_left, s = +1 dinv_right.
fn so3_dexp_inv(w: &DVector<f64>, s: f64) -> Result<DMatrix<f64>> {
    let th2 = w.norm_squared();
    let th = th2.sqrt();
    let k = so3_hat(w);
    let c = if th < SMALL_ANGLE {
        1.0 / 12.0 + th2 / 720.0
    } else {
        if th >= 2.0 * std::f64::consts::PI - LOG_GUARD {
            return Err(GeoError::Domain(format!(
                "exp differential is singular at angle {th}"
            )));
        }
        1.0 / th2 - (1.0 + th.cos()) / (2.0 * th * th.sin())
    };
    Ok(DMatrix::identity(3, 3) + &k * (0.5 * s) + &k * &k * c)
}

fn so3_cay(w: &DVector<f64>) -> DMatrix<f64> {
    let k = so3_hat(w);
    let f = 4.0 / (4.0 + w.norm_squared());
    DMatrix::identity(3, 3) + (&k + &k * &k * 0.5) * f
}

// (1 + |w|^2/4) I + s w^/2 + w^2/4
fn so3_dcay_inv(w: &DVector<f64>, s: f64) -> DMatrix<f64> {
    let k = so3_hat(w);
    DMatrix::identity(3, 3) * (1.0 + w.norm_squared() / 4.0) + &k * (0.5 * s) + &k * &k * 0.25
}

type PairFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A user-supplied map on the pair groupoid of R^n.
pub struct CustomPairMap {
    pub name: String,
    pub forward: Box<PairFn>,
    pub inverse: Option<Box<PairFn>>,
    pub jacobian: Option<Box<JacFn>>,
}

impl fmt::Debug for CustomPairMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPairMap")
            .field("name", &self.name)
            .field("inverse", &self.inverse.is_some())
            .field("jacobian", &self.jacobian.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
enum VectorMapKind {
    Theta(f64),
    Custom(Arc<CustomPairMap>),
    Adjoint(Box<VectorDiscretizationMap>),
}

/// A discretization map `R_d(q, v) = (R1, R2)` on `Q = R^n`.
#[derive(Debug, Clone)]
pub struct VectorDiscretizationMap {
    n: usize,
    kind: VectorMapKind,
}

/// `R_d(q, v) = (q - theta v, q + (1 - theta) v)`.
pub fn theta_map(theta: f64, n: usize) -> Result<VectorDiscretizationMap> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(GeoError::Parameter(format!("theta = {theta} is outside [0, 1]")));
    }
    Ok(VectorDiscretizationMap {
        n,
        kind: VectorMapKind::Theta(theta),
    })
}

/// `(q, v) -> (q, q + 2v)`, which violates the normalization axiom.
pub fn doubled_euler_map(n: usize) -> VectorDiscretizationMap {
    VectorDiscretizationMap::custom(
        n,
        CustomPairMap {
            name: "doubled-euler".into(),
            forward: Box::new(|q, v| (q.clone(), q + v * 2.0)),
            inverse: Some(Box::new(|q0, q1| (q0.clone(), (q1 - q0) * 0.5))),
            jacobian: Some(Box::new(|q, _| {
                let n = q.len();
                let mut j = DMatrix::zeros(2 * n, 2 * n);
                for i in 0..n {
                    j[(i, i)] = 1.0;
                    j[(n + i, i)] = 1.0;
                    j[(n + i, n + i)] = 2.0;
                }
                j
            })),
        },
    )
}

impl VectorDiscretizationMap {
    pub fn custom(n: usize, map: CustomPairMap) -> Self {
        Self {
            n,
            kind: VectorMapKind::Custom(Arc::new(map)),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> Option<f64> {
        match self.kind {
            VectorMapKind::Theta(t) => Some(t),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            VectorMapKind::Theta(t) => format!("theta:{t}"),
            VectorMapKind::Custom(c) => c.name.clone(),
            VectorMapKind::Adjoint(inner) => format!("adjoint({})", inner.name()),
        }
    }

    /// `R*(q, v) = swap(R(q, -v))`. The theta family maps to `1 - theta`.
    pub fn adjoint(&self) -> VectorDiscretizationMap {
        let kind = match &self.kind {
            VectorMapKind::Theta(t) => VectorMapKind::Theta(1.0 - t),
            VectorMapKind::Adjoint(inner) => return (**inner).clone(),
            VectorMapKind::Custom(_) => VectorMapKind::Adjoint(Box::new(self.clone())),
        };
        VectorDiscretizationMap { n: self.n, kind }
    }

    pub fn forward(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_len(self.n, q.len())?;
        check_len(self.n, v.len())?;
        Ok(match &self.kind {
            VectorMapKind::Theta(t) => (q - v * *t, q + v * (1.0 - t)),
            VectorMapKind::Custom(c) => (c.forward)(q, v),
            VectorMapKind::Adjoint(inner) => {
                let (a, b) = inner.forward(q, &-v)?;
                (b, a)
            }
        })
    }

    pub fn inverse(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_len(self.n, q0.len())?;
        check_len(self.n, q1.len())?;
        match &self.kind {
            VectorMapKind::Theta(t) => Ok((q0 + (q1 - q0) * *t, q1 - q0)),
            VectorMapKind::Custom(c) => match &c.inverse {
                Some(inv) => Ok(inv(q0, q1)),
                None => self.newton_inverse(q0, q1),
            },
            VectorMapKind::Adjoint(inner) => {
                let (q, w) = inner.inverse(q1, q0)?;
                Ok((q, -w))
            }
        }
    }

    fn newton_inverse(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.n;
        let target = stack(q0, q1);
        let guess = stack(q0, &(q1 - q0));
        let out = newton(
            |x| {
                let (a, b) = self.forward(&x.rows(0, n).into(), &x.rows(n, n).into())?;
                Ok(stack(&a, &b) - &target)
            },
            guess,
            None,
            &SolverConfig::default(),
        )?;
        Ok((out.x.rows(0, n).into(), out.x.rows(n, n).into()))
    }

    /// `2n x 2n` Jacobian of `(q, v) -> (R1, R2)`.
    pub fn jacobian(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.n, q.len())?;
        check_len(self.n, v.len())?;
        let n = self.n;
        match &self.kind {
            VectorMapKind::Theta(t) => {
                let mut j = DMatrix::zeros(2 * n, 2 * n);
                for i in 0..n {
                    j[(i, i)] = 1.0;
                    j[(i, n + i)] = -t;
                    j[(n + i, i)] = 1.0;
                    j[(n + i, n + i)] = 1.0 - t;
                }
                Ok(j)
            }
            VectorMapKind::Custom(c) => match &c.jacobian {
                Some(jac) => Ok(jac(q, v)),
                None => {
                    let mut f = |x: &DVector<f64>| {
                        let (a, b) = (c.forward)(&x.rows(0, n).into(), &x.rows(n, n).into());
                        Ok(stack(&a, &b))
                    };
                    fd_jacobian(&mut f, &stack(q, v), AXIOM_FD_REL)
                }
            },
            VectorMapKind::Adjoint(inner) => {
                // swap rows, flip the sign of the v columns
                let ji = inner.jacobian(q, &-v)?;
                let mut j = DMatrix::zeros(2 * n, 2 * n);
                for r in 0..2 * n {
                    let src = (r + n) % (2 * n);
                    for c in 0..2 * n {
                        let s = if c >= n { -1.0 } else { 1.0 };
                        j[(r, c)] = s * ji[(src, c)];
                    }
                }
                Ok(j)
            }
        }
    }

    pub fn is_symmetric(&self, samples: &[(DVector<f64>, DVector<f64>)], tol: f64) -> Result<bool> {
        let adj = self.adjoint();
        for (q, v) in samples {
            let (a0, a1) = self.forward(q, v)?;
            let (b0, b1) = adj.forward(q, v)?;
            if (a0 - b0).amax().max((a1 - b1).amax()) > tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Outcome of an axiom check; never aborts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub map: String,
    /// `max |m(0_q) - identity(q)|`
    pub identity_residual: f64,
    /// `max |d/dv (local fiber coordinate) at v = 0 - Id|`
    pub derivative_residual: f64,
    /// Smallest `|det|` of the Jacobian on the zero section.
    pub min_jacobian_det: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
    pub pass: bool,
}

impl AxiomReport {
    fn finish(mut self) -> Self {
        if self.identity_residual > self.tolerance {
            self.failures.push(format!(
                "identity axiom: zero section not mapped to identities (residual {:e})",
                self.identity_residual
            ));
        }
        if self.derivative_residual > self.tolerance {
            self.failures.push(format!(
                "derivative axiom: fiber derivative differs from Id (residual {:e})",
                self.derivative_residual
            ));
        }
        if self.min_jacobian_det.abs() < 1e-10 {
            self.failures
                .push("local diffeomorphism: Jacobian on the zero section is singular".into());
        }
        self.pass = self.failures.is_empty();
        self
    }
}

/// Maps whose discretization axioms can be checked.
pub trait DiscretizationAxioms {
    fn check_axioms(&self, samples: &[DVector<f64>], tol: f64) -> AxiomReport;
}

/// Checks `m(0_q) = identity` and the normalized fiber derivative by central
/// differences, plus nonsingularity of the Jacobian on the zero section.
pub fn check_axioms<M: DiscretizationAxioms + ?Sized>(m: &M, samples: &[DVector<f64>], tol: f64) -> AxiomReport {
    m.check_axioms(samples, tol)
}

impl DiscretizationAxioms for VectorDiscretizationMap {
    /// `samples` are base points `q`.
    fn check_axioms(&self, samples: &[DVector<f64>], tol: f64) -> AxiomReport {
        let n = self.n;
        let mut report = AxiomReport {
            map: self.name(),
            identity_residual: 0.0,
            derivative_residual: 0.0,
            min_jacobian_det: f64::INFINITY,
            tolerance: tol,
            failures: Vec::new(),
            pass: false,
        };
        let zero = DVector::zeros(n);
        for q in samples {
            match self.forward(q, &zero) {
                Ok((a, b)) => {
                    let r = (a - q).amax().max((b - q).amax());
                    report.identity_residual = report.identity_residual.max(r);
                }
                Err(e) => report.failures.push(format!("evaluation failed: {e}")),
            }
            // local fiber coordinate in source-adapted form: R2 - R1
            let mut fiber = |v: &DVector<f64>| {
                let (a, b) = self.forward(q, v)?;
                Ok(b - a)
            };
            match fd_jacobian(&mut fiber, &zero, AXIOM_FD_REL) {
                Ok(d) => {
                    let r = (d - DMatrix::<f64>::identity(n, n)).amax();
                    report.derivative_residual = report.derivative_residual.max(r);
                }
                Err(e) => report.failures.push(format!("differentiation failed: {e}")),
            }
            match self.jacobian(q, &zero) {
                Ok(j) => report.min_jacobian_det = report.min_jacobian_det.min(j.determinant().abs()),
                Err(e) => report.failures.push(format!("jacobian failed: {e}")),
            }
        }
        report.finish()
    }
}

impl DiscretizationAxioms for RetractionMap {
    /// The base is a point; `samples` are extra directions for the derivative test.
    fn check_axioms(&self, samples: &[DVector<f64>], tol: f64) -> AxiomReport {
        let r = self.dim();
        let mut report = AxiomReport {
            map: self.name(),
            identity_residual: 0.0,
            derivative_residual: 0.0,
            min_jacobian_det: f64::INFINITY,
            tolerance: tol,
            failures: Vec::new(),
            pass: false,
        };
        let zero = DVector::zeros(r);
        let id = match self.algebra.identity() {
            Ok(id) => id,
            Err(e) => {
                report.failures.push(e.to_string());
                return report.finish();
            }
        };
        match self.evaluate(&zero) {
            Ok(g) => report.identity_residual = (g.matrix() - id.matrix()).amax(),
            Err(e) => report.failures.push(format!("evaluation failed: {e}")),
        }
        let mut chart = |x: &DVector<f64>| {
            let g = self.evaluate(x)?;
            self.algebra.vee(&(g.matrix() - id.matrix()))
        };
        match fd_jacobian(&mut chart, &zero, AXIOM_FD_REL) {
            Ok(d) => {
                report.derivative_residual = (&d - DMatrix::<f64>::identity(r, r)).amax();
                report.min_jacobian_det = d.determinant().abs();
                for eta in samples {
                    if eta.len() != r {
                        report.failures.push("sample direction has the wrong dimension".into());
                        continue;
                    }
                    let res = (&d * eta - eta).amax() / eta.amax().max(1.0);
                    report.derivative_residual = report.derivative_residual.max(res);
                }
            }
            Err(e) => report.failures.push(format!("differentiation failed: {e}")),
        }
        report.finish()
    }
}

/// `(tau(xi), vee(tau(xi)^-1 D tau(xi)[eta]))`, computed as `dinv_right(xi)^-1 eta`.
pub fn tangent_lift(
    m: &RetractionMap,
    xi: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<(GroupElement, DVector<f64>)> {
    check_len(m.dim(), eta.len())?;
    let g = m.evaluate(xi)?;
    let d = m
        .dinv_right(xi)?
        .lu()
        .solve(eta)
        .ok_or_else(|| GeoError::LinearSolve("inverse differential is singular".into()))?;
    Ok((g, d))
}

/// Same as [`tangent_lift`] with the differential taken by central differences.
pub fn tangent_lift_fd(
    m: &RetractionMap,
    xi: &DVector<f64>,
    eta: &DVector<f64>,
    step: Option<f64>,
) -> Result<(GroupElement, DVector<f64>)> {
    check_len(m.dim(), eta.len())?;
    let s = step.unwrap_or(1e-6 * xi.norm().max(1.0));
    if !(s.is_finite() && s > f64::EPSILON * xi.norm().max(1.0)) {
        return Err(GeoError::Tolerance(format!("finite-difference step {s:e} underflows")));
    }
    let g = m.evaluate(xi)?;
    let gp = m.evaluate(&(xi + eta * s))?;
    let gm = m.evaluate(&(xi - eta * s))?;
    let dg = (gp.matrix() - gm.matrix()) / (2.0 * s);
    let ginv = g.inverse()?;
    let d = m.algebra.vee(&(ginv.matrix() * dg))?;
    Ok((g, d))
}

/// `(q, y, dq, dy) -> (q, dy, -dq, y)`.
pub fn iota_a(
    q: &DVector<f64>,
    y: &DVector<f64>,
    dq: &DVector<f64>,
    dy: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
    check_len(q.len(), dq.len())?;
    check_len(y.len(), dy.len())?;
    Ok((q.clone(), dy.clone(), -dq, y.clone()))
}

/// Inverse of [`iota_a`]: `(a, b, c, d) -> (a, d, -c, b)`.
pub fn iota_a_inverse(
    a: &DVector<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
    check_len(a.len(), c.len())?;
    check_len(b.len(), d.len())?;
    Ok((a.clone(), d.clone(), -c, b.clone()))
}

/// Matrix of [`iota_a`] acting on stacked `(q, y, dq, dy)`.
pub fn iota_a_matrix(n: usize, r: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * (n + r), 2 * (n + r));
    let (q, y, dq, dy) = (0, n, n + r, 2 * n + r);
    for i in 0..n {
        m[(q + i, q + i)] = 1.0;
        m[(n + r + i, dq + i)] = -1.0;
    }
    for i in 0..r {
        m[(n + i, dy + i)] = 1.0;
        m[(2 * n + r + i, y + i)] = 1.0;
    }
    m
}

/// Base points `(x0, x1)` and covectors `(c0, c1) = J^-T (a, b)` of the cotangent lift.
pub fn cotangent_lift_vector(
    m: &VectorDiscretizationMap,
    q: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = m.dim();
    check_len(n, a.len())?;
    check_len(n, b.len())?;
    let (x0, x1) = m.forward(q, v)?;
    let c = m
        .jacobian(q, v)?
        .transpose()
        .lu()
        .solve(&stack(a, b))
        .ok_or_else(|| GeoError::LinearSolve("discretization map Jacobian is singular".into()))?;
    if c.iter().any(|x| !x.is_finite()) {
        return Err(GeoError::LinearSolve("discretization map Jacobian is singular".into()));
    }
    Ok((x0, x1, c.rows(0, n).into(), c.rows(n, n).into()))
}

/// Rotation matrix from axis-angle, used by tests and the CLI.
pub fn rotation_about(axis: usize, angle: f64) -> GroupElement {
    let mut w = DVector::zeros(3);
    w[axis] = angle;
    GroupElement::from_parts(so3_exp(&w), GroupTag::So3)
}
