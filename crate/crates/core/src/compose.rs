//! One-step maps and the composition methods built from them: adjoint
//! methods, Strang-type pairs and coefficient compositions.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{GeoError, Result};
use crate::solver::StepInfo;

/// A state with a flat coordinate vector, used by the verification harness.
pub trait PhaseState: Clone + fmt::Debug + Send + Sync + 'static {
    fn coords(&self) -> DVector<f64>;
    /// Same state with new coordinates; warm starts are dropped.
    fn with_coords(&self, z: &DVector<f64>) -> Result<Self>;
    fn time(&self) -> f64;
}

/// A one-step integrator `(state, h) -> state`.
pub trait StepMap: Send + Sync {
    type State: PhaseState;

    fn step(&self, s: &Self::State, h: f64) -> Result<(Self::State, StepInfo)>;

    /// The same algorithm generated by the adjoint discretization map.
    fn adjoint(&self) -> Result<DynStep<Self::State>> {
        Err(GeoError::UnsupportedMap(self.label()))
    }

    fn label(&self) -> String;
}

pub type DynStep<S> = Arc<dyn StepMap<State = S>>;

/// Runs `base` with steps `a_1 h, ..., a_s h`, `a_1` first.
pub struct Composition<S: PhaseState> {
    base: DynStep<S>,
    coeffs: Vec<f64>,
}

impl<S: PhaseState> Clone for Composition<S> {
    fn clone(&self) -> Self {
        Self {
            base: self.base.clone(),
            coeffs: self.coeffs.clone(),
        }
    }
}

impl<S: PhaseState> Composition<S> {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

impl<S: PhaseState> StepMap for Composition<S> {
    type State = S;

    fn step(&self, s: &S, h: f64) -> Result<(S, StepInfo)> {
        let mut state = s.clone();
        let mut info = StepInfo::default();
        for a in &self.coeffs {
            let (next, i) = self.base.step(&state, a * h)?;
            info.absorb(&i);
            state = next;
        }
        Ok((state, info))
    }

    /// Adjoint of a composition: reversed coefficients on the adjoint base.
    fn adjoint(&self) -> Result<DynStep<S>> {
        let mut coeffs = self.coeffs.clone();
        coeffs.reverse();
        Ok(Arc::new(Composition {
            base: self.base.adjoint()?,
            coeffs,
        }))
    }

    fn label(&self) -> String {
        let a: Vec<String> = self.coeffs.iter().map(|c| format!("{c}")).collect();
        format!("compose[{}]({})", a.join(","), self.base.label())
    }
}

/// `adjoint(base)^{h/2} o base^{h/2}`.
pub struct StrangPair<S: PhaseState> {
    base: DynStep<S>,
    adjoint: DynStep<S>,
}

impl<S: PhaseState> Clone for StrangPair<S> {
    fn clone(&self) -> Self {
        Self {
            base: self.base.clone(),
            adjoint: self.adjoint.clone(),
        }
    }
}

impl<S: PhaseState> StepMap for StrangPair<S> {
    type State = S;

    fn step(&self, s: &S, h: f64) -> Result<(S, StepInfo)> {
        let (mid, mut info) = self.base.step(s, 0.5 * h)?;
        let (out, i) = self.adjoint.step(&mid, 0.5 * h)?;
        info.absorb(&i);
        Ok((out, info))
    }

    /// The pair is self-adjoint.
    fn adjoint(&self) -> Result<DynStep<S>> {
        Ok(Arc::new(self.clone()))
    }

    fn label(&self) -> String {
        format!("strang({})", self.base.label())
    }
}

/// A step given by a closure, with an optional adjoint.
pub struct FnStep<S: PhaseState> {
    label: String,
    f: Arc<dyn Fn(&S, f64) -> Result<S> + Send + Sync>,
    adjoint: Option<Arc<dyn Fn(&S, f64) -> Result<S> + Send + Sync>>,
}

impl<S: PhaseState> FnStep<S> {
    pub fn new<F>(label: &str, f: F) -> Self
    where
        F: Fn(&S, f64) -> Result<S> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            f: Arc::new(f),
            adjoint: None,
        }
    }

    pub fn with_adjoint<F>(mut self, f: F) -> Self
    where
        F: Fn(&S, f64) -> Result<S> + Send + Sync + 'static,
    {
        self.adjoint = Some(Arc::new(f));
        self
    }
}

impl<S: PhaseState> StepMap for FnStep<S> {
    type State = S;

    fn step(&self, s: &S, h: f64) -> Result<(S, StepInfo)> {
        Ok(((self.f)(s, h)?, StepInfo::default()))
    }

    fn adjoint(&self) -> Result<DynStep<S>> {
        let adj = self
            .adjoint
            .clone()
            .ok_or_else(|| GeoError::UnsupportedMap(self.label.clone()))?;
        Ok(Arc::new(FnStep {
            label: format!("adjoint({})", self.label),
            f: adj,
            adjoint: Some(self.f.clone()),
        }))
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// `state -> base(... base(state, a_1 h) ..., a_s h)`.
pub fn compose_with_coeffs<S: PhaseState>(base: DynStep<S>, coeffs: &[f64]) -> Result<Composition<S>> {
    if coeffs.is_empty() {
        return Err(GeoError::Parameter("composition needs at least one coefficient".into()));
    }
    if coeffs.iter().any(|a| !a.is_finite()) {
        return Err(GeoError::Parameter("composition coefficients must be finite".into()));
    }
    Ok(Composition {
        base,
        coeffs: coeffs.to_vec(),
    })
}

/// The method generated by the adjoint discretization map.
pub fn adjoint_step<S: PhaseState>(base: &DynStep<S>) -> Result<DynStep<S>> {
    base.adjoint()
}

pub fn strang_pair<S: PhaseState>(base: DynStep<S>) -> Result<StrangPair<S>> {
    let adjoint = base.adjoint()?;
    Ok(StrangPair { base, adjoint })
}

/// Symmetric three-stage coefficients with `a1 + a2 + a3 = 1`, `a1^3 + a2^3 + a3^3 = 0`.
pub fn solve_order3_coeffs() -> [f64; 3] {
    let a1 = 1.0 / (2.0 - 2.0_f64.cbrt());
    [a1, 1.0 - 2.0 * a1, a1]
}

/// Convenience: triple jump of the Strang pair of `base`.
pub fn triple_jump<S: PhaseState>(base: DynStep<S>) -> Result<Composition<S>> {
    let pair: DynStep<S> = Arc::new(strang_pair(base)?);
    compose_with_coeffs(pair, &solve_order3_coeffs())
}

/// Advances `steps` times with fixed `h`.
pub fn iterate<S: PhaseState>(step: &dyn StepMap<State = S>, s0: &S, h: f64, steps: usize) -> Result<S> {
    let mut s = s0.clone();
    for _ in 0..steps {
        s = step.step(&s, h)?.0;
    }
    Ok(s)
}

/// Advances to time `t_end` from `s0.time()`: whole steps of `h`, then one partial step.
pub fn integrate_to<S: PhaseState>(step: &dyn StepMap<State = S>, s0: &S, h: f64, t_end: f64) -> Result<S> {
    let span = t_end - s0.time();
    let n = (span / h * (1.0 + 1e-12)).floor() as usize;
    let mut s = iterate(step, s0, h, n)?;
    let rest = t_end - (s0.time() + n as f64 * h);
    if rest.abs() > 1e-12 * h.abs() {
        s = step.step(&s, rest)?.0;
    }
    Ok(s)
}
