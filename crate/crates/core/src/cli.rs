//! Experiment runner behind the `geoint` binary.
//!
//! Settings come from flags and from an optional `key=value` file
//! (`--config`); flags win. Floating-point CSV output uses 17 significant
//! digits. Exit codes: 0 success, 1 failed check, 2 configuration or I/O
//! error, 3 solver failure (the partial trajectory is still written).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::actiongroupoid::{
    action_poisson_tensor, action_vector_field, heavy_top_model, ActionHamiltonianStepper, ActionState, ActionSystem,
};
use crate::algebra::{so3_hat, AlgebraDescriptor, GroupElement};
use crate::compose::{strang_pair, triple_jump, DynStep, PhaseState};
use crate::error::GeoError;
use crate::liepoisson::{
    bundle_legendre_inverse, lie_poisson_tensor, lie_poisson_vector_field, BodyOscillator, BundleLagrangian,
    BundleState, BundleStepper, EpState, ForcedEpStepper, LPState, LieHamiltonian, LpHamiltonianStepper,
    ReducedLagrangian, RigidBody,
};
use crate::retractions::{
    cayley_retraction, check_axioms, doubled_euler_map, exp_retraction, theta_map, AxiomReport, RetractionMap,
};
use crate::solver::SolverConfig;
use crate::symplectic::{canonical_j, CanonicalState, Hamiltonian, HamiltonianStepper, HarmonicOscillator};
use crate::verify::{
    convergence_order, env_seed, equivariance_residual, exp_pair_map, poisson_pushforward_residual,
    reduced_map_residual, sample_rotations, sample_unit_vectors, sample_vectors, seeded_rng, symplectic_residual,
    OrderReport, Reference, ResidualReport, STRUCTURE_TOL,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("solver failure at step {step}: {source}")]
    Solver { step: usize, source: GeoError },
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Solver { .. } => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn solver_err(e: GeoError) -> CliError {
    match e {
        GeoError::Parameter(_) | GeoError::Dimension { .. } | GeoError::UnsupportedRealization(_) | GeoError::UnsupportedMap(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Solver { step: 0, source: other },
    }
}

#[derive(Debug, Parser)]
#[command(name = "geoint", version, about = "Poisson and symplectic integrators from retraction maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV or JSON.
    Simulate(SimulateArgs),
    /// Run a structural check and write a JSON report.
    Verify(VerifyArgs),
    /// Fit the convergence order over a list of step sizes.
    Order(OrderArgs),
    /// Run one simulation per step size, in parallel, into separate files.
    Sweep(SweepArgs),
    /// Check the discretization-map axioms of a map.
    CheckMap(CheckMapArgs),
}

/// Experiment settings shared by all subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// Plain-text `key=value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// rigid-body | heavy-top | harmonic-oscillator | custom-coefficients
    #[arg(long)]
    pub model: Option<String>,
    /// exp | cay
    #[arg(long)]
    pub retraction: Option<String>,
    /// theta:<value>
    #[arg(long)]
    pub discretization: Option<String>,
    /// base | strang | triple-jump | adjoint | forced-ep | bundle
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    /// Initial momentum, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub mu0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub q0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub p0: Option<String>,
    #[arg(long)]
    pub inertia: Option<String>,
    #[arg(long)]
    pub stiffness: Option<String>,
    #[arg(long)]
    pub mass: Option<String>,
    #[arg(long)]
    pub gravity: Option<String>,
    #[arg(long)]
    pub lever: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub axis: Option<String>,
    /// Damping coefficient `c` of the force `-c I xi` (forced-ep).
    #[arg(long)]
    pub damping: Option<String>,
    /// Coupling of body and shape velocities (bundle).
    #[arg(long, allow_hyphen_values = true)]
    pub coupling: Option<String>,
    #[arg(long)]
    pub dim: Option<String>,
    /// Flat list `C^k_ij` at index `(i r + j) r + k` (custom-coefficients).
    #[arg(long, allow_hyphen_values = true)]
    pub structure_constants: Option<String>,
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub max_iters: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// csv | json
    #[arg(long)]
    pub format: Option<String>,
    /// Re-orthonormalize reconstructed rotations after every step.
    #[arg(long)]
    pub renormalize: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Diagnostics file; defaults to `<output>.diag.json` when writing to a file.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// poisson | symplectic | casimir | equivariance | reduction
    #[arg(long)]
    pub check: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OrderArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Step sizes, comma separated.
    #[arg(long)]
    pub hs: Option<String>,
    #[arg(long)]
    pub t_end: Option<String>,
    /// same | rk4
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Step sizes, comma separated; one run each.
    #[arg(long)]
    pub h_values: Option<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckMapArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// theta:<value> | exp | cay | doubled-euler
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
}

/// Merged settings: file entries overridden by flags.
#[derive(Debug, Clone, Default)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", n + 1)))?;
            map.insert(normalize_key(k), v.trim().to_string());
        }
        Ok(Self(map))
    }

    fn set(&mut self, key: &str, value: &Option<String>) {
        if let Some(v) = value {
            self.0.insert(key.to_string(), v.trim().to_string());
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => parse_f64(key, s),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| CliError::Config(format!("{key}: expected a nonnegative integer, got '{s}'"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.get(key).map(|s| parse_list(key, s)).transpose()
    }

    fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(s) => Err(CliError::Config(format!("{key}: expected true or false, got '{s}'"))),
        }
    }
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('_', "-")
}

fn parse_f64(key: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Config(format!("{key}: expected a finite number, got '{s}'")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| parse_f64(key, x)).collect()
}

impl ExperimentArgs {
    fn settings(&self, extra: &[(&str, &Option<String>)]) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        let pairs: [(&str, &Option<String>); 23] = [
            ("model", &self.model),
            ("retraction", &self.retraction),
            ("discretization", &self.discretization),
            ("method", &self.method),
            ("h", &self.h),
            ("steps", &self.steps),
            ("mu0", &self.mu0),
            ("q0", &self.q0),
            ("p0", &self.p0),
            ("inertia", &self.inertia),
            ("stiffness", &self.stiffness),
            ("mass", &self.mass),
            ("gravity", &self.gravity),
            ("lever", &self.lever),
            ("axis", &self.axis),
            ("damping", &self.damping),
            ("coupling", &self.coupling),
            ("dim", &self.dim),
            ("structure-constants", &self.structure_constants),
            ("tol", &self.tol),
            ("max-iters", &self.max_iters),
            ("seed", &self.seed),
            ("format", &self.format),
        ];
        for (k, v) in pairs.iter().chain(extra) {
            s.set(k, v);
        }
        if self.renormalize {
            s.0.insert("renormalize".into(), "true".into());
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        s.set("output", &path(&self.output));
        s.set("diagnostics", &path(&self.diagnostics));
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    RigidBody,
    HeavyTop,
    HarmonicOscillator,
    CustomCoefficients,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetractionId {
    Exp,
    Cay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Base,
    Strang,
    TripleJump,
    Adjoint,
    ForcedEp,
    Bundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelId,
    pub retraction: RetractionId,
    pub theta: f64,
    pub method: Method,
    pub h: f64,
    pub steps: usize,
    pub mu0: Option<Vec<f64>>,
    pub q0: Option<Vec<f64>>,
    pub p0: Option<Vec<f64>>,
    pub inertia: Vec<f64>,
    pub stiffness: f64,
    pub mass: f64,
    pub gravity: f64,
    pub lever: f64,
    pub axis: Vec<f64>,
    pub damping: f64,
    pub coupling: f64,
    pub dim: Option<usize>,
    pub structure_constants: Option<Vec<f64>>,
    pub solver: SolverConfig,
    pub seed: u64,
    pub format: Format,
    pub renormalize: bool,
}

impl ExperimentConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let model = match s.get("model").unwrap_or("rigid-body") {
            "rigid-body" => ModelId::RigidBody,
            "heavy-top" => ModelId::HeavyTop,
            "harmonic-oscillator" => ModelId::HarmonicOscillator,
            "custom-coefficients" => ModelId::CustomCoefficients,
            m => return Err(CliError::Config(format!("unknown model '{m}'"))),
        };
        let retraction = match s.get("retraction") {
            None | Some("cay") => RetractionId::Cay,
            Some("exp") => RetractionId::Exp,
            Some(r) => return Err(CliError::Config(format!("unknown retraction '{r}'"))),
        };
        let theta = match s.get("discretization") {
            None => 0.5,
            Some(d) => {
                let v = d
                    .strip_prefix("theta:")
                    .ok_or_else(|| CliError::Config(format!("unknown discretization '{d}' (expected theta:<value>)")))?;
                let t = parse_f64("discretization", v)?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(CliError::Config(format!("theta {t} outside [0, 1]")));
                }
                t
            }
        };
        let method = match s.get("method").unwrap_or("base") {
            "base" => Method::Base,
            "strang" => Method::Strang,
            "triple-jump" => Method::TripleJump,
            "adjoint" => Method::Adjoint,
            "forced-ep" => Method::ForcedEp,
            "bundle" => Method::Bundle,
            m => return Err(CliError::Config(format!("unknown method '{m}'"))),
        };
        let h = s.f64_or("h", 0.01)?;
        if h <= 0.0 {
            return Err(CliError::Config(format!("h must be positive, got {h}")));
        }
        let steps = s.usize_or("steps", 100)?;
        if steps < 1 {
            return Err(CliError::Config("steps must be at least 1".into()));
        }
        let format = match s.get("format").unwrap_or("csv") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            f => return Err(CliError::Config(format!("unknown format '{f}'"))),
        };
        let seed = match s.get("seed") {
            Some(v) => v.parse().map_err(|_| CliError::Config(format!("seed: expected an integer, got '{v}'")))?,
            None => env_seed().unwrap_or(0),
        };
        let solver = SolverConfig {
            tol: s.f64_or("tol", 1e-12)?,
            max_iters: s.usize_or("max-iters", 50)?,
            ..SolverConfig::default()
        };
        let dim = s.get("dim").map(|_| s.usize_or("dim", 0)).transpose()?;
        let default_inertia = match model {
            ModelId::CustomCoefficients => Vec::new(),
            _ => vec![1.0, 2.0, 3.0],
        };
        let cfg = Self {
            model,
            retraction,
            theta,
            method,
            h,
            steps,
            mu0: s.list("mu0")?,
            q0: s.list("q0")?,
            p0: s.list("p0")?,
            inertia: s.list("inertia")?.unwrap_or(default_inertia),
            stiffness: s.f64_or("stiffness", 1.0)?,
            mass: s.f64_or("mass", 1.0)?,
            gravity: s.f64_or("gravity", 9.81)?,
            lever: s.f64_or("lever", 0.1)?,
            axis: s.list("axis")?.unwrap_or(vec![0.0, 0.0, 1.0]),
            damping: s.f64_or("damping", 0.0)?,
            coupling: s.f64_or("coupling", 0.0)?,
            dim,
            structure_constants: s.list("structure-constants")?,
            solver,
            seed,
            format,
            renormalize: s.bool("renormalize")?,
        };
        cfg.validate(s)?;
        Ok(cfg)
    }

    fn validate(&self, s: &Settings) -> Result<(), CliError> {
        let lie = matches!(self.model, ModelId::RigidBody | ModelId::CustomCoefficients | ModelId::HeavyTop);
        if !lie && s.get("retraction").is_some() {
            return Err(CliError::Config("harmonic-oscillator takes a discretization, not a retraction".into()));
        }
        if lie && self.method != Method::Bundle && s.get("discretization").is_some() {
            return Err(CliError::Config("discretization applies to harmonic-oscillator and bundle runs".into()));
        }
        match self.method {
            Method::ForcedEp | Method::Bundle if self.model != ModelId::RigidBody => {
                return Err(CliError::Config(format!("method {:?} needs model rigid-body", self.method)));
            }
            Method::ForcedEp if self.retraction != RetractionId::Exp && s.get("retraction").is_some() => {
                return Err(CliError::Config("forced-ep uses the exponential retraction".into()));
            }
            _ => {}
        }
        if self.renormalize && self.model != ModelId::RigidBody {
            return Err(CliError::Config("renormalize applies to rigid-body runs, which reconstruct rotations".into()));
        }
        if matches!(self.model, ModelId::RigidBody | ModelId::HeavyTop) && self.inertia.len() != 3 {
            return Err(CliError::Config("inertia needs three entries".into()));
        }
        if self.model == ModelId::HeavyTop && self.axis.len() != 3 {
            return Err(CliError::Config("axis needs three entries".into()));
        }
        if self.model == ModelId::CustomCoefficients && self.structure_constants.is_none() {
            return Err(CliError::Config("custom-coefficients needs structure-constants".into()));
        }
        Ok(())
    }

    fn tau(&self, alg: Arc<AlgebraDescriptor>) -> Result<RetractionMap, CliError> {
        match self.retraction {
            RetractionId::Exp => exp_retraction(alg),
            RetractionId::Cay => cayley_retraction(alg),
        }
        .map_err(config_err)
    }

    fn dims_check(&self, key: &str, v: &Option<Vec<f64>>, n: usize) -> Result<(), CliError> {
        match v {
            Some(x) if x.len() != n => Err(CliError::Config(format!("{key} needs {n} entries, got {}", x.len()))),
            _ => Ok(()),
        }
    }
}

fn arr3(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

/// One trajectory row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub step: usize,
    pub t: f64,
    pub values: Vec<f64>,
    pub newton_iters: usize,
    pub residual: f64,
}

/// Rows plus the failure that ended the run early, if any.
#[derive(Debug)]
pub struct Trajectory {
    pub header: Vec<String>,
    pub state_len: usize,
    pub casimir_len: usize,
    pub rows: Vec<Row>,
    pub failure: Option<(usize, GeoError)>,
}

struct Observation {
    state: Vec<f64>,
    energy: f64,
    casimirs: Vec<f64>,
}

type Observe<S> = Arc<dyn Fn(&S) -> crate::Result<Observation> + Send + Sync>;
type Tensor<S> = Arc<dyn Fn(&S) -> crate::Result<DMatrix<f64>> + Send + Sync>;
type Sampler<S> = Arc<dyn Fn(&mut ChaCha8Rng) -> S + Send + Sync>;
type Field = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type Post<S> = Arc<dyn Fn(S) -> S + Send + Sync>;

struct Experiment<S: PhaseState> {
    stepper: DynStep<S>,
    s0: S,
    state_names: Vec<String>,
    casimir_names: Vec<String>,
    observe: Observe<S>,
    post: Option<Post<S>>,
    tensor: Option<Tensor<S>>,
    canonical: bool,
    sample: Sampler<S>,
    field: Option<Field>,
}

/// Type-erased experiment.
trait Runnable: Send + Sync {
    fn label(&self) -> String;
    fn trajectory(&self, h: f64, steps: usize) -> Trajectory;
    fn poisson(&self, h: f64, samples: usize, seed: u64) -> Result<ResidualReport, CliError>;
    fn symplectic(&self, h: f64, samples: usize, seed: u64) -> Result<ResidualReport, CliError>;
    fn order(&self, hs: &[f64], t_end: f64, rk4: bool) -> Result<OrderReport, CliError>;
}

impl<S: PhaseState> Runnable for Experiment<S> {
    fn label(&self) -> String {
        self.stepper.label()
    }

    fn trajectory(&self, h: f64, steps: usize) -> Trajectory {
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend(self.state_names.iter().cloned());
        header.push("energy".into());
        header.extend(self.casimir_names.iter().cloned());
        header.push("newton_iters".into());
        header.push("residual".into());
        let mut traj = Trajectory {
            header,
            state_len: self.state_names.len(),
            casimir_len: self.casimir_names.len(),
            rows: Vec::with_capacity(steps + 1),
            failure: None,
        };
        let push = |traj: &mut Trajectory, k: usize, s: &S, iters: usize, res: f64| -> crate::Result<()> {
            let o = (self.observe)(s)?;
            let mut values = o.state;
            values.push(o.energy);
            values.extend(o.casimirs);
            traj.rows.push(Row {
                step: k,
                t: k as f64 * h,
                values,
                newton_iters: iters,
                residual: res,
            });
            Ok(())
        };
        if let Err(e) = push(&mut traj, 0, &self.s0, 0, 0.0) {
            traj.failure = Some((0, e));
            return traj;
        }
        let mut s = self.s0.clone();
        for k in 1..=steps {
            let next = self.stepper.step(&s, h).and_then(|(n, info)| {
                let n = match &self.post {
                    Some(p) => p(n),
                    None => n,
                };
                push(&mut traj, k, &n, info.newton_iters, info.residual)?;
                Ok(n)
            });
            match next {
                Ok(n) => s = n,
                Err(e) => {
                    traj.failure = Some((k, e));
                    break;
                }
            }
        }
        traj
    }

    fn poisson(&self, h: f64, samples: usize, seed: u64) -> Result<ResidualReport, CliError> {
        let tensor = self
            .tensor
            .as_ref()
            .ok_or_else(|| CliError::Config("this model/method has no Poisson tensor to check against".into()))?;
        let mut rng = seeded_rng(seed);
        let states: Vec<S> = (0..samples).map(|_| (self.sample)(&mut rng)).collect();
        let t = |s: &S| tensor(s);
        poisson_pushforward_residual(self.stepper.as_ref(), &t, &states, h, None, STRUCTURE_TOL).map_err(solver_err)
    }

    fn symplectic(&self, h: f64, samples: usize, seed: u64) -> Result<ResidualReport, CliError> {
        if !self.canonical {
            return Err(CliError::Config("symplectic check needs a canonical (q, p) model".into()));
        }
        let mut rng = seeded_rng(seed);
        let states: Vec<S> = (0..samples).map(|_| (self.sample)(&mut rng)).collect();
        symplectic_residual(self.stepper.as_ref(), &states, h, None, STRUCTURE_TOL).map_err(solver_err)
    }

    fn order(&self, hs: &[f64], t_end: f64, rk4: bool) -> Result<OrderReport, CliError> {
        let reference = if rk4 {
            let f = self
                .field
                .as_ref()
                .ok_or_else(|| CliError::Config("no continuous vector field for an RK4 reference".into()))?;
            Reference::Rk4(f.as_ref())
        } else {
            Reference::SameMethod
        };
        convergence_order(self.stepper.as_ref(), reference, hs, &self.s0, t_end).map_err(solver_err)
    }
}

fn wrap<S: PhaseState>(base: DynStep<S>, method: Method) -> Result<DynStep<S>, CliError> {
    Ok(match method {
        Method::Base | Method::ForcedEp | Method::Bundle => base,
        Method::Adjoint => base.adjoint().map_err(config_err)?,
        Method::Strang => Arc::new(strang_pair(base).map_err(config_err)?),
        Method::TripleJump => Arc::new(triple_jump(base).map_err(config_err)?),
    })
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn group_names() -> Vec<String> {
    let mut v = Vec::new();
    for i in 1..=3 {
        for j in 1..=3 {
            v.push(format!("g_{i}{j}"));
        }
    }
    v
}

fn group_entries(g: &Option<GroupElement>) -> Vec<f64> {
    match g {
        Some(g) => {
            let m = g.matrix();
            let mut v = Vec::with_capacity(9);
            for i in 0..3 {
                for j in 0..3 {
                    v.push(m[(i, j)]);
                }
            }
            v
        }
        None => vec![f64::NAN; 9],
    }
}

fn build(cfg: &ExperimentConfig) -> Result<Box<dyn Runnable>, CliError> {
    let mut rng = seeded_rng(cfg.seed);
    match (cfg.model, cfg.method) {
        (ModelId::RigidBody, Method::ForcedEp) => build_forced_ep(cfg, &mut rng),
        (ModelId::RigidBody, Method::Bundle) => build_bundle(cfg, &mut rng),
        (ModelId::RigidBody, _) => build_lie_poisson(cfg, &mut rng),
        (ModelId::CustomCoefficients, _) => build_lie_poisson(cfg, &mut rng),
        (ModelId::HeavyTop, _) => build_heavy_top(cfg, &mut rng),
        (ModelId::HarmonicOscillator, _) => build_oscillator(cfg, &mut rng),
    }
}

fn build_lie_poisson(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Box<dyn Runnable>, CliError> {
    let rb = match cfg.model {
        ModelId::CustomCoefficients => {
            let c = cfg.structure_constants.as_ref().expect("validated");
            let r = match cfg.dim {
                Some(r) => r,
                None => (c.len() as f64).cbrt().round() as usize,
            };
            let alg = AlgebraDescriptor::from_structure_constants("custom", r, c, None).map_err(config_err)?;
            let inertia = if cfg.inertia.is_empty() { vec![1.0; r] } else { cfg.inertia.clone() };
            RigidBody::with_algebra(Arc::new(alg), dv(&inertia)).map_err(config_err)?
        }
        _ => RigidBody::new(arr3(&cfg.inertia)).map_err(config_err)?,
    };
    let alg = rb.algebra().clone();
    let r = alg.dim();
    cfg.dims_check("mu0", &cfg.mu0, r)?;
    let tau = cfg.tau(alg.clone())?;
    let so3 = alg.is_so3();
    let mu0 = cfg.mu0.as_ref().map(|m| dv(m)).unwrap_or_else(|| random_vec(rng, r));
    let mut s0 = LPState::new(alg.clone(), mu0).map_err(config_err)?;
    if so3 {
        s0 = s0.with_group(alg.identity().map_err(config_err)?).map_err(config_err)?;
    }
    let rb = Arc::new(rb);
    let base: DynStep<LPState> = Arc::new(LpHamiltonianStepper {
        model: rb.clone(),
        tau,
        solver: cfg.solver,
    });
    let mut state_names = names("mu", r);
    if so3 {
        state_names.extend(group_names());
    }
    let obs_model = rb.clone();
    let observe: Observe<LPState> = Arc::new(move |s: &LPState| {
        let mut state = s.mu().iter().cloned().collect::<Vec<_>>();
        if so3 {
            state.extend(group_entries(&s.g));
        }
        Ok(Observation {
            state,
            energy: obs_model.energy(s.mu()),
            casimirs: if so3 { vec![RigidBody::casimir(s.mu())] } else { Vec::new() },
        })
    });
    let post: Option<Post<LPState>> = cfg.renormalize.then(|| {
        Arc::new(|mut s: LPState| {
            s.g = s.g.map(|g| g.reorthonormalized());
            s
        }) as Post<LPState>
    });
    let t_alg = alg.clone();
    let f_model = rb.clone();
    let s_alg = alg.clone();
    Ok(Box::new(Experiment {
        stepper: wrap(base, cfg.method)?,
        s0,
        state_names,
        casimir_names: if so3 { vec!["casimir_mu2".into()] } else { Vec::new() },
        observe,
        post,
        tensor: Some(Arc::new(move |s: &LPState| Ok(lie_poisson_tensor(&t_alg, s.mu())))),
        canonical: false,
        sample: Arc::new(move |rng| LPState::new(s_alg.clone(), random_vec(rng, r)).expect("dimension")),
        field: Some(Arc::new(move |z| lie_poisson_vector_field(f_model.as_ref(), z))),
    }))
}

fn build_heavy_top(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Box<dyn Runnable>, CliError> {
    let top = Arc::new(
        heavy_top_model(arr3(&cfg.inertia), cfg.mass, cfg.gravity, cfg.lever, arr3(&cfg.axis)).map_err(config_err)?,
    );
    let alg = top.algebra().clone();
    cfg.dims_check("q0", &cfg.q0, 3)?;
    cfg.dims_check("mu0", &cfg.mu0, 3)?;
    let q0 = match &cfg.q0 {
        Some(q) => dv(q),
        None => sample_unit_vectors(rng, 1, 3).remove(0),
    };
    let mu0 = cfg.mu0.as_ref().map(|m| dv(m)).unwrap_or_else(|| random_vec(rng, 3));
    let s0 = ActionState::new(alg.clone(), q0, mu0).map_err(config_err)?;
    let base: DynStep<ActionState> = Arc::new(ActionHamiltonianStepper {
        model: top.clone(),
        tau: cfg.tau(alg.clone())?,
        solver: cfg.solver,
    });
    let mut state_names = names("q", 3);
    state_names.extend(names("mu", 3));
    let o_top = top.clone();
    let t_top = top.clone();
    let f_top = top.clone();
    let s_alg = alg.clone();
    Ok(Box::new(Experiment {
        stepper: wrap(base, cfg.method)?,
        s0,
        state_names,
        casimir_names: vec!["casimir_q2".into(), "casimir_qmu".into()],
        observe: Arc::new(move |s: &ActionState| {
            let mut state: Vec<f64> = s.q.iter().cloned().collect();
            state.extend(s.mu().iter());
            Ok(Observation {
                state,
                energy: o_top.energy(&s.q, s.mu()),
                casimirs: o_top.casimirs(&s.q, s.mu()),
            })
        }),
        post: None,
        tensor: Some(Arc::new(move |s: &ActionState| Ok(action_poisson_tensor(t_top.as_ref(), &s.q, s.mu())))),
        canonical: false,
        sample: Arc::new(move |rng| {
            let q = sample_unit_vectors(rng, 1, 3).remove(0);
            ActionState::new(s_alg.clone(), q, random_vec(rng, 3)).expect("dimension")
        }),
        field: Some(Arc::new(move |z| action_vector_field(f_top.as_ref(), z))),
    }))
}

fn build_oscillator(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Box<dyn Runnable>, CliError> {
    let n = cfg
        .dim
        .or(cfg.q0.as_ref().map(|q| q.len()))
        .or(cfg.p0.as_ref().map(|p| p.len()))
        .unwrap_or(1);
    cfg.dims_check("q0", &cfg.q0, n)?;
    cfg.dims_check("p0", &cfg.p0, n)?;
    let model = Arc::new(HarmonicOscillator::new(n, cfg.stiffness).map_err(config_err)?);
    let q0 = cfg.q0.as_ref().map(|q| dv(q)).unwrap_or_else(|| random_vec(rng, n));
    let p0 = cfg.p0.as_ref().map(|p| dv(p)).unwrap_or_else(|| random_vec(rng, n));
    let s0 = CanonicalState::new(q0, p0).map_err(config_err)?;
    let base: DynStep<CanonicalState> = Arc::new(HamiltonianStepper {
        model: model.clone(),
        map: theta_map(cfg.theta, n).map_err(config_err)?,
        solver: cfg.solver,
    });
    let mut state_names = names("q", n);
    state_names.extend(names("p", n));
    let o_model = model.clone();
    let k = cfg.stiffness;
    Ok(Box::new(Experiment {
        stepper: wrap(base, cfg.method)?,
        s0,
        state_names,
        casimir_names: Vec::new(),
        observe: Arc::new(move |s: &CanonicalState| {
            let mut state: Vec<f64> = s.q.iter().cloned().collect();
            state.extend(s.p.iter());
            Ok(Observation {
                state,
                energy: o_model.energy(&s.q, &s.p),
                casimirs: Vec::new(),
            })
        }),
        post: None,
        tensor: Some(Arc::new(move |_s: &CanonicalState| Ok(canonical_j(n)))),
        canonical: true,
        sample: Arc::new(move |rng| CanonicalState::new(random_vec(rng, n), random_vec(rng, n)).expect("dimension")),
        field: Some(Arc::new(move |z| {
            let mut d = DVector::zeros(2 * n);
            for i in 0..n {
                d[i] = z[n + i];
                d[n + i] = -k * z[i];
            }
            d
        })),
    }))
}

fn build_forced_ep(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Box<dyn Runnable>, CliError> {
    let rb = Arc::new(RigidBody::new(arr3(&cfg.inertia)).map_err(config_err)?);
    let alg = rb.algebra().clone();
    cfg.dims_check("mu0", &cfg.mu0, 3)?;
    let inertia = dv(&cfg.inertia);
    let mu0 = cfg.mu0.as_ref().map(|m| dv(m)).unwrap_or_else(|| random_vec(rng, 3));
    let s0 = EpState {
        xi: mu0.component_div(&inertia),
        g: Some(alg.identity().map_err(config_err)?),
        t: 0.0,
    };
    let c = cfg.damping;
    let fi = inertia.clone();
    let base: DynStep<EpState> = Arc::new(ForcedEpStepper {
        model: rb.clone(),
        force: Arc::new(move |x: &DVector<f64>| -x.component_mul(&fi) * c),
    });
    let mut state_names = names("xi", 3);
    state_names.extend(group_names());
    let o_rb = rb.clone();
    let o_in = inertia.clone();
    let f_in = inertia.clone();
    Ok(Box::new(Experiment {
        stepper: base,
        s0,
        state_names,
        casimir_names: vec!["casimir_mu2".into()],
        observe: Arc::new(move |s: &EpState| {
            let mut state: Vec<f64> = s.xi.iter().cloned().collect();
            state.extend(group_entries(&s.g));
            let mu = s.xi.component_mul(&o_in);
            Ok(Observation {
                state,
                energy: o_rb.lagrangian(&s.xi),
                casimirs: vec![mu.norm_squared()],
            })
        }),
        post: cfg.renormalize.then(|| {
            Arc::new(|mut s: EpState| {
                s.g = s.g.map(|g| g.reorthonormalized());
                s
            }) as Post<EpState>
        }),
        tensor: None,
        canonical: false,
        sample: Arc::new(move |rng| EpState {
            xi: random_vec(rng, 3),
            g: None,
            t: 0.0,
        }),
        field: Some(Arc::new(move |x| {
            let m = x.component_mul(&f_in);
            (m.cross(x) - &m * c).component_div(&f_in)
        })),
    }))
}

fn build_bundle(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Box<dyn Runnable>, CliError> {
    let model = Arc::new(BodyOscillator::new(arr3(&cfg.inertia), cfg.stiffness, cfg.coupling).map_err(config_err)?);
    let alg = model.algebra().clone();
    let n = model.dim();
    cfg.dims_check("mu0", &cfg.mu0, 3)?;
    cfg.dims_check("q0", &cfg.q0, n)?;
    cfg.dims_check("p0", &cfg.p0, n)?;
    let mu0 = cfg.mu0.as_ref().map(|m| dv(m)).unwrap_or_else(|| random_vec(rng, 3));
    let q0 = cfg.q0.as_ref().map(|m| dv(m)).unwrap_or_else(|| random_vec(rng, n));
    let p0 = cfg.p0.as_ref().map(|m| dv(m)).unwrap_or_else(|| random_vec(rng, n));
    let s0 = BundleState {
        mu: mu0,
        q: q0,
        p: p0,
        t: 0.0,
        last: None,
    };
    let base: DynStep<BundleState> = Arc::new(BundleStepper {
        model: model.clone(),
        tau: cfg.tau(alg.clone())?,
        map: theta_map(cfg.theta, n).map_err(config_err)?,
        solver: cfg.solver,
    });
    let mut state_names = names("mu", 3);
    state_names.extend(names("q", n));
    state_names.extend(names("p", n));
    let o_model = model.clone();
    let solver = cfg.solver;
    let t_alg = alg.clone();
    Ok(Box::new(Experiment {
        stepper: base,
        s0,
        state_names,
        casimir_names: vec!["casimir_mu2".into()],
        observe: Arc::new(move |s: &BundleState| {
            let (xi, v) = bundle_legendre_inverse(o_model.as_ref(), &s.mu, &s.q, &s.p, &solver)?;
            let mut state: Vec<f64> = s.mu.iter().cloned().collect();
            state.extend(s.q.iter());
            state.extend(s.p.iter());
            Ok(Observation {
                state,
                energy: o_model.energy(&xi, &s.q, &v),
                casimirs: vec![s.mu.norm_squared()],
            })
        }),
        post: None,
        tensor: Some(Arc::new(move |s: &BundleState| {
            let r = t_alg.dim();
            let n = s.q.len();
            let mut lam = DMatrix::zeros(r + 2 * n, r + 2 * n);
            lam.view_mut((0, 0), (r, r)).copy_from(&lie_poisson_tensor(&t_alg, &s.mu));
            lam.view_mut((r, r), (2 * n, 2 * n)).copy_from(&canonical_j(n));
            Ok(lam)
        })),
        canonical: false,
        sample: Arc::new(move |rng| BundleState {
            mu: random_vec(rng, 3),
            q: random_vec(rng, n),
            p: random_vec(rng, n),
            t: 0.0,
            last: None,
        }),
        field: None,
    }))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn render_csv(traj: &Trajectory) -> String {
    let mut out = traj.header.join(",");
    out.push('\n');
    for r in &traj.rows {
        out.push_str(&r.step.to_string());
        out.push(',');
        out.push_str(&fmt(r.t));
        for v in &r.values {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push(',');
        out.push_str(&r.newton_iters.to_string());
        out.push(',');
        out.push_str(&fmt(r.residual));
        out.push('\n');
    }
    out
}

fn render_json(traj: &Trajectory) -> String {
    let rows: Vec<serde_json::Value> = traj
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![json!(r.step), json!(r.t)];
            v.extend(r.values.iter().map(|x| json!(x)));
            v.push(json!(r.newton_iters));
            v.push(json!(r.residual));
            serde_json::Value::Array(v)
        })
        .collect();
    let failure = traj
        .failure
        .as_ref()
        .map(|(k, e)| json!({"step": k, "message": e.to_string()}));
    let doc = json!({"columns": traj.header, "rows": rows, "error": failure});
    serde_json::to_string_pretty(&doc).expect("json") + "\n"
}

#[derive(Debug, Serialize)]
struct Diagnostics<'a> {
    config: &'a ExperimentConfig,
    method: String,
    rows: usize,
    steps_completed: usize,
    energy_drift: f64,
    casimir_drift: Vec<f64>,
    max_newton_iters: usize,
    max_residual: f64,
    error: Option<serde_json::Value>,
}

fn diagnostics<'a>(cfg: &'a ExperimentConfig, label: String, traj: &Trajectory) -> Diagnostics<'a> {
    let e_idx = traj.state_len;
    let drift = |i: usize| -> f64 {
        let c0 = traj.rows.first().map(|r| r.values[i]).unwrap_or(0.0);
        let scale = c0.abs().max(1.0);
        traj.rows.iter().map(|r| (r.values[i] - c0).abs() / scale).fold(0.0, f64::max)
    };
    Diagnostics {
        config: cfg,
        method: label,
        rows: traj.rows.len(),
        steps_completed: traj.rows.len().saturating_sub(1),
        energy_drift: if traj.rows.is_empty() { 0.0 } else { drift(e_idx) },
        casimir_drift: if traj.rows.is_empty() {
            Vec::new()
        } else {
            (0..traj.casimir_len).map(|i| drift(e_idx + 1 + i)).collect()
        },
        max_newton_iters: traj.rows.iter().map(|r| r.newton_iters).max().unwrap_or(0),
        max_residual: traj.rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        error: traj
            .failure
            .as_ref()
            .map(|(k, e)| json!({"step": k, "message": e.to_string()})),
    }
}

fn write_out(path: Option<&str>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{p}: {e}"))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn json_text<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("json") + "\n"
}

fn simulate_to(cfg: &ExperimentConfig, output: Option<&str>, diag_path: Option<String>) -> Result<(), CliError> {
    let exp = build(cfg)?;
    let traj = exp.trajectory(cfg.h, cfg.steps);
    let text = match cfg.format {
        Format::Csv => render_csv(&traj),
        Format::Json => render_json(&traj),
    };
    write_out(output, &text)?;
    let diag_path = diag_path.or_else(|| output.map(|o| format!("{o}.diag.json")));
    if let Some(p) = diag_path {
        write_out(Some(&p), &json_text(&diagnostics(cfg, exp.label(), &traj)))?;
    }
    match traj.failure {
        Some((step, source)) => Err(CliError::Solver { step, source }),
        None => Ok(()),
    }
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let s = a.exp.settings(&[])?;
    let cfg = ExperimentConfig::from_settings(&s)?;
    simulate_to(&cfg, s.get("output"), s.get("diagnostics").map(String::from))
}

fn check_report(report: &ResidualReport, output: Option<&str>, extra: serde_json::Value) -> Result<(), CliError> {
    let mut doc = serde_json::to_value(report).expect("json");
    if let (Some(m), serde_json::Value::Object(e)) = (doc.as_object_mut(), extra) {
        m.extend(e);
    }
    write_out(output, &json_text(&doc))?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "{} residual {:e} exceeds {:e}",
            report.check, report.max_residual, report.tolerance
        )))
    }
}

fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let s = a.exp.settings(&[("check", &a.check), ("samples", &a.samples)])?;
    let cfg = ExperimentConfig::from_settings(&s)?;
    let samples = s.usize_or("samples", 20)?;
    let check = s.get("check").unwrap_or("poisson");
    let meta = json!({"model": cfg.model, "method": cfg.method, "retraction": cfg.retraction, "h": cfg.h, "seed": cfg.seed, "samples": samples});
    let out = s.get("output");
    let report = match check {
        "poisson" => build(&cfg)?.poisson(cfg.h, samples, cfg.seed)?,
        "symplectic" => build(&cfg)?.symplectic(cfg.h, samples, cfg.seed)?,
        "casimir" => {
            let exp = build(&cfg)?;
            let traj = exp.trajectory(cfg.h, cfg.steps);
            if let Some((step, source)) = traj.failure {
                return Err(CliError::Solver { step, source });
            }
            let d = diagnostics(&cfg, exp.label(), &traj);
            if d.casimir_drift.is_empty() {
                return Err(CliError::Config("model has no Casimir functions".into()));
            }
            ResidualReport::new("casimir", d.casimir_drift, s.f64_or("tol", 1e-12)?)
        }
        "equivariance" | "reduction" => {
            let mut rng = seeded_rng(cfg.seed);
            let gs = sample_rotations(&mut rng, samples);
            let acts: Vec<DMatrix<f64>> = sample_rotations(&mut rng, samples).iter().map(|g| g.matrix().clone()).collect();
            let xis = sample_vectors(&mut rng, samples, 3, 1.0);
            if check == "equivariance" {
                let pts: Vec<_> = gs
                    .iter()
                    .zip(&xis)
                    .map(|(g, x)| (g.matrix().clone(), g.matrix() * so3_hat(x)))
                    .collect();
                equivariance_residual(&exp_pair_map, &acts, &pts, 1e-12).map_err(solver_err)?
            } else {
                let tau = exp_retraction(Arc::new(AlgebraDescriptor::so3())).map_err(config_err)?;
                reduced_map_residual(&exp_pair_map, &tau, &gs, &xis, 1e-12).map_err(solver_err)?
            }
        }
        c => return Err(CliError::Config(format!("unknown check '{c}'"))),
    };
    check_report(&report, out, meta)
}

fn order(a: &OrderArgs) -> Result<(), CliError> {
    let s = a
        .exp
        .settings(&[("hs", &a.hs), ("t-end", &a.t_end), ("reference", &a.reference)])?;
    let cfg = ExperimentConfig::from_settings(&s)?;
    let hs = s.list("hs")?.unwrap_or(vec![0.08, 0.04, 0.02, 0.01]);
    let t_end = s.f64_or("t-end", 1.0)?;
    let rk4 = match s.get("reference").unwrap_or("same") {
        "same" => false,
        "rk4" => true,
        r => return Err(CliError::Config(format!("unknown reference '{r}'"))),
    };
    let report = build(&cfg)?.order(&hs, t_end, rk4)?;
    let mut doc = serde_json::to_value(&report).expect("json");
    if let Some(m) = doc.as_object_mut() {
        m.insert("model".into(), json!(cfg.model));
        m.insert("method".into(), json!(cfg.method));
        m.insert("retraction".into(), json!(cfg.retraction));
        m.insert("t_end".into(), json!(t_end));
    }
    write_out(s.get("output"), &json_text(&doc))
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let s = a.exp.settings(&[("h-values", &a.h_values)])?;
    let mut s = s;
    if let Some(d) = &a.output_dir {
        s.0.insert("output-dir".into(), d.to_string_lossy().into_owned());
    }
    let hs = s
        .list("h-values")?
        .ok_or_else(|| CliError::Config("sweep needs h-values".into()))?;
    let dir = PathBuf::from(
        s.get("output-dir")
            .ok_or_else(|| CliError::Config("sweep needs output-dir".into()))?,
    );
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut configs = Vec::with_capacity(hs.len());
    for h in &hs {
        let mut si = s.clone();
        si.0.insert("h".into(), h.to_string());
        configs.push(ExperimentConfig::from_settings(&si)?);
    }
    let ext = |c: &ExperimentConfig| if c.format == Format::Json { "json" } else { "csv" };
    let results: Vec<Result<(), CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let path = dir.join(format!("run-{i:03}.{}", ext(c))).to_string_lossy().into_owned();
                scope.spawn(move || simulate_to(c, Some(&path), None))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Io("sweep worker panicked".into()))))
            .collect()
    });
    let index: Vec<_> = configs
        .iter()
        .enumerate()
        .zip(&results)
        .map(|((i, c), r)| {
            json!({"file": format!("run-{i:03}.{}", ext(c)), "h": c.h, "ok": r.is_ok(), "error": r.as_ref().err().map(|e| e.to_string())})
        })
        .collect();
    write_out(Some(&dir.join("index.json").to_string_lossy()), &json_text(&index))?;
    match results.into_iter().find_map(|r| r.err()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn check_map(a: &CheckMapArgs) -> Result<(), CliError> {
    let s = a.exp.settings(&[("map", &a.map), ("samples", &a.samples)])?;
    let samples = s.usize_or("samples", 5)?;
    let tol = s.f64_or("tol", 1e-8)?;
    let seed = match s.get("seed") {
        Some(v) => v.parse().map_err(|_| CliError::Config(format!("seed: expected an integer, got '{v}'")))?,
        None => env_seed().unwrap_or(0),
    };
    let mut rng = seeded_rng(seed);
    let name = s.get("map").unwrap_or("cay");
    let n = s.usize_or("dim", 3)?;
    let report: AxiomReport = match name {
        "exp" | "cay" => {
            let alg = Arc::new(AlgebraDescriptor::so3());
            let tau = if name == "exp" { exp_retraction(alg) } else { cayley_retraction(alg) }.map_err(config_err)?;
            check_axioms(&tau, &sample_vectors(&mut rng, samples, 3, 1.0), tol)
        }
        "doubled-euler" => check_axioms(&doubled_euler_map(n), &sample_vectors(&mut rng, samples, n, 2.0), tol),
        m => {
            let t = m
                .strip_prefix("theta:")
                .ok_or_else(|| CliError::Config(format!("unknown map '{m}'")))?;
            let map = theta_map(parse_f64("map", t)?, n).map_err(config_err)?;
            check_axioms(&map, &sample_vectors(&mut rng, samples, n, 2.0), tol)
        }
    };
    write_out(s.get("output"), &json_text(&report))?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(report.failures.join("; ")))
    }
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Order(a) => order(a),
        Command::Sweep(a) => sweep(a),
        Command::CheckMap(a) => check_map(a),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("geoint: {e}");
            e.exit_code()
        }
    }
}
