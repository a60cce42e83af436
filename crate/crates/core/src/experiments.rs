//! Config-driven experiments.
//!
//! A config is one JSON object:
//!
//! ```json
//! { "experiment": "lossy", "seed": 7, "jobs": 2,
//!   "tolerances": { "compatibility": 1e-9 },
//!   "params": { "n": [2, 4], "eta": [0.9] } }
//! ```
//!
//! Unknown keys are rejected at every level, and validation errors name
//! the offending key path (`params.eta[1]`). Sweep points run on a worker
//! pool of `jobs` threads; rows are assembled in grid order so the report
//! does not depend on scheduling.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dephasing::{dephasing_qfi, SymmetricProbe, MAX_QUBITS};
use crate::error::{Error, Result};
use crate::estimation::{compatibility_check, povm_fisher, qfi_cr_bound, qfi_matrix, SldSet};
use crate::holevo::holevo_bound;
use crate::lossy::{loss_fisher, lossy_phase_bound, lossy_qfi, optimize_phase_probe, FockProbe};
use crate::model::{random_hermitian, ClassicalMixingModel, ParametricModel, PureUnitaryModel, RandomFullRankModel};
use crate::operator::{c, eigh, expm_i, hermiticity_defect, CMatrix, CVector, Povm};
use crate::probe_search::{continuation_discrepancy, joint_probe_search, SearchFamily, SearchOptions, SearchResult};
use crate::report::{Cell, ReportRecord, Summary, Table, Timing};
use crate::tolerance::Tolerances;
use crate::unitary::{analyze_spin_rotation, collective_rotation_fi, log_log_slope, ProbeFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Bounds,
    Compat,
    SpinRotation,
    Lossy,
    DephasingN1,
    DephasingJoint,
    DickeGhz,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Bounds,
        ExperimentKind::Compat,
        ExperimentKind::SpinRotation,
        ExperimentKind::Lossy,
        ExperimentKind::DephasingN1,
        ExperimentKind::DephasingJoint,
        ExperimentKind::DickeGhz,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::Compat => "compat",
            ExperimentKind::SpinRotation => "spin-rotation",
            ExperimentKind::Lossy => "lossy",
            ExperimentKind::DephasingN1 => "dephasing-n1",
            ExperimentKind::DephasingJoint => "dephasing-joint",
            ExperimentKind::DickeGhz => "dicke-ghz",
        }
    }
}

fn one() -> usize {
    1
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

/// The raw config file. `params` is checked against the experiment's own
/// schema by [`ExperimentConfig::validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub jobs: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory, overridden by `--out`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn path_error<E: std::fmt::Display>(prefix: &str, path: &serde_path_to_error::Path, inner: E) -> Error {
    let message = inner.to_string();
    let mut key = path.to_string();
    // tagged enums buffer their content and lose the last path segment
    if let Some(field) = message.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
        if !key.ends_with(field) {
            key = if key == "." { field.to_string() } else { format!("{key}.{field}") };
        }
    }
    let key = match (prefix.is_empty(), key.as_str()) {
        (true, ".") => "<root>".to_string(),
        (true, _) => key,
        (false, ".") => prefix.to_string(),
        (false, _) => format!("{prefix}.{key}"),
    };
    Error::config(key, message)
}

fn parse_value<T: DeserializeOwned>(prefix: &str, v: &Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| path_error(prefix, e.path(), e.inner()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| path_error("", e.path(), e.inner()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the top-level fields and parses `params`.
    pub fn validate(&self) -> Result<Params> {
        if self.jobs == 0 {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        check_tolerances(&self.tolerances)?;
        if !self.params.is_object() {
            return Err(Error::config("params", "must be an object"));
        }
        Params::parse(self.experiment, &self.params)
    }
}

fn check_tolerances(t: &Tolerances) -> Result<()> {
    let v = serde_json::to_value(t).expect("tolerances serialize");
    for (k, x) in v.as_object().expect("struct").iter() {
        let x = x.as_f64().unwrap_or(f64::NAN);
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::config(format!("tolerances.{k}"), "must be a positive finite number"));
        }
    }
    Ok(())
}

fn check_eta(key: &str, etas: &[f64]) -> Result<()> {
    if etas.is_empty() {
        return Err(Error::config(key, "must not be empty"));
    }
    for (i, &e) in etas.iter().enumerate() {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::config(format!("{key}[{i}]"), format!("η must lie in (0, 1), got {e}")));
        }
    }
    Ok(())
}

fn check_counts(key: &str, ns: &[usize], min: usize, max: usize) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::config(key, "must not be empty"));
    }
    for (i, &n) in ns.iter().enumerate() {
        if n < min || n > max {
            return Err(Error::config(format!("{key}[{i}]"), format!("must lie in [{min}, {max}], got {n}")));
        }
    }
    Ok(())
}

fn check_finite(key: &str, xs: &[f64]) -> Result<()> {
    for (i, x) in xs.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::config(format!("{key}[{i}]"), "must be finite"));
        }
    }
    Ok(())
}

/// Complex number written as `[re, im]`.
pub type ComplexEntry = [f64; 2];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `ρ ∝ A A†` with `A` affine in the parameters.
    RandomFullRank { dim: usize, params: usize },
    /// Eigenvector rotation in `φ`, eigenvalue change in `η`.
    ClassicalMixing { dim: usize },
    /// `e^{i Σ φ_k H_k}|ψ⟩` for user-supplied generators and probe.
    Unitary { generators: Vec<Vec<Vec<ComplexEntry>>>, probe: Vec<ComplexEntry> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedCost {
    Identity,
    /// `A Aᵀ + 0.2·1` with `A` uniform in `[−1, 1]`.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSpec {
    Named(NamedCost),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasurementSpec {
    /// Projective measurement in a random basis.
    RandomProjective,
    /// Projective measurement in the eigenbasis of one SLD.
    SldEigenbasis { index: usize },
}

fn default_model() -> ModelSpec {
    ModelSpec::RandomFullRank { dim: 3, params: 2 }
}

fn default_cost() -> CostSpec {
    CostSpec::Named(NamedCost::Identity)
}

fn default_measurement() -> MeasurementSpec {
    MeasurementSpec::RandomProjective
}

/// Parameters shared by `bounds` and `compat`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default = "one")]
    pub samples: usize,
    /// Evaluation point; zeros when absent.
    #[serde(default)]
    pub phi: Option<Vec<f64>>,
    #[serde(default = "default_cost")]
    pub cost: CostSpec,
    #[serde(default = "default_measurement")]
    pub measurement: MeasurementSpec,
}

fn default_j() -> Vec<f64> {
    vec![1.0]
}

fn default_alpha() -> Vec<f64> {
    vec![std::f64::consts::FRAC_PI_2]
}

fn default_phase_grid() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinRotationParams {
    /// Spin quantum numbers, multiples of ½.
    #[serde(default = "default_j")]
    pub j: Vec<f64>,
    /// Angles between the two rotation axes.
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_phase_grid")]
    pub phase_grid: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossyProbe {
    Noon,
    /// Phase-optimal real amplitudes from a restarted search.
    Optimized,
    Random,
}

fn default_n() -> Vec<usize> {
    vec![4]
}

fn default_eta() -> Vec<f64> {
    vec![0.9]
}

fn default_restarts() -> usize {
    20
}

fn default_lossy_probe() -> LossyProbe {
    LossyProbe::Noon
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossyParams {
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub phi: f64,
    #[serde(default = "default_lossy_probe")]
    pub probe: LossyProbe,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_n1_eta() -> Vec<f64> {
    vec![0.3, 0.6, 0.9]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingN1Params {
    #[serde(default = "default_n1_eta")]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub phi: f64,
}

fn default_w() -> Vec<f64> {
    vec![0.5]
}

fn default_family() -> SearchFamily {
    SearchFamily::FullSymmetric
}

fn default_theta_grid() -> usize {
    SearchOptions::default().theta_grid
}

fn default_search_tolerance() -> f64 {
    SearchOptions::default().tolerance
}

fn default_max_iterations() -> u64 {
    SearchOptions::default().max_iterations
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingJointParams {
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    /// Weights of the normalized phase variance in the objective.
    #[serde(default = "default_w")]
    pub w: Vec<f64>,
    #[serde(default = "default_family")]
    pub family: SearchFamily,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: usize,
    #[serde(default = "default_search_tolerance")]
    pub search_tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    /// Seed each `N` from the previous optimum instead of restarting;
    /// needs increasing `n`, `w = [0.5]` and the full symmetric family.
    #[serde(default)]
    pub continuation: bool,
}

fn default_ghz_n() -> Vec<usize> {
    (2..=10).collect()
}

fn default_dicke_n() -> Vec<usize> {
    vec![2, 4, 6]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DickeGhzParams {
    #[serde(default = "default_ghz_n")]
    pub ghz_n: Vec<usize>,
    #[serde(default = "default_dicke_n")]
    pub dicke_n: Vec<usize>,
}

/// Largest Hilbert-space dimension accepted for general models.
const MAX_MODEL_DIM: usize = 64;
/// Largest spin accepted by the rotation experiments, as `2j`.
const MAX_TWO_J: usize = 60;

/// Validated per-experiment parameters.
#[derive(Debug, Clone)]
pub enum Params {
    Bounds(ModelParams),
    Compat(ModelParams),
    SpinRotation(SpinRotationParams),
    Lossy(LossyParams),
    DephasingN1(DephasingN1Params),
    DephasingJoint(DephasingJointParams),
    DickeGhz(DickeGhzParams),
}

impl Params {
    pub fn parse(kind: ExperimentKind, v: &Value) -> Result<Self> {
        let p = "params";
        let params = match kind {
            ExperimentKind::Bounds => Params::Bounds(parse_value(p, v)?),
            ExperimentKind::Compat => Params::Compat(parse_value(p, v)?),
            ExperimentKind::SpinRotation => Params::SpinRotation(parse_value(p, v)?),
            ExperimentKind::Lossy => Params::Lossy(parse_value(p, v)?),
            ExperimentKind::DephasingN1 => Params::DephasingN1(parse_value(p, v)?),
            ExperimentKind::DephasingJoint => Params::DephasingJoint(parse_value(p, v)?),
            ExperimentKind::DickeGhz => Params::DickeGhz(parse_value(p, v)?),
        };
        params.check()?;
        Ok(params)
    }

    fn check(&self) -> Result<()> {
        match self {
            Params::Bounds(m) | Params::Compat(m) => m.check(),
            Params::SpinRotation(s) => {
                if s.j.is_empty() || s.alpha.is_empty() {
                    return Err(Error::config(if s.j.is_empty() { "params.j" } else { "params.alpha" }, "must not be empty"));
                }
                for (i, &j) in s.j.iter().enumerate() {
                    let two_j = 2.0 * j;
                    if !(two_j >= 1.0 && two_j <= MAX_TWO_J as f64 && (two_j - two_j.round()).abs() < 1e-12) {
                        return Err(Error::config(format!("params.j[{i}]"), format!("must be a positive multiple of 1/2 up to {}", MAX_TWO_J / 2)));
                    }
                }
                check_finite("params.alpha", &s.alpha)?;
                if s.phase_grid == 0 {
                    return Err(Error::config("params.phase_grid", "must be at least 1"));
                }
                Ok(())
            }
            Params::Lossy(l) => {
                check_counts("params.n", &l.n, 1, 40)?;
                check_eta("params.eta", &l.eta)?;
                check_finite("params.phi", &[l.phi]).map_err(|_| Error::config("params.phi", "must be finite"))?;
                if matches!(l.probe, LossyProbe::Optimized) && l.restarts == 0 {
                    return Err(Error::config("params.restarts", "must be at least 1"));
                }
                Ok(())
            }
            Params::DephasingN1(d) => {
                check_eta("params.eta", &d.eta)?;
                check_finite("params.phi", &[d.phi]).map_err(|_| Error::config("params.phi", "must be finite"))
            }
            Params::DephasingJoint(d) => {
                check_counts("params.n", &d.n, 1, MAX_QUBITS)?;
                check_eta("params.eta", &d.eta)?;
                if d.w.is_empty() {
                    return Err(Error::config("params.w", "must not be empty"));
                }
                for (i, &w) in d.w.iter().enumerate() {
                    if !(0.0..=1.0).contains(&w) {
                        return Err(Error::config(format!("params.w[{i}]"), format!("weights must lie in [0, 1], got {w}")));
                    }
                }
                if d.restarts == 0 {
                    return Err(Error::config("params.restarts", "must be at least 1"));
                }
                if d.theta_grid < 3 {
                    return Err(Error::config("params.theta_grid", "must be at least 3"));
                }
                if !(d.search_tolerance > 0.0 && d.search_tolerance.is_finite()) {
                    return Err(Error::config("params.search_tolerance", "must be positive"));
                }
                if !matches!(d.family, SearchFamily::FullSymmetric) && d.n.iter().any(|&n| n < 2) {
                    return Err(Error::config("params.n", "squeezed families need at least 2 qubits"));
                }
                if d.continuation {
                    if !matches!(d.family, SearchFamily::FullSymmetric) {
                        return Err(Error::config("params.continuation", "only the full symmetric family supports continuation"));
                    }
                    if d.w != [0.5] {
                        return Err(Error::config("params.continuation", "continuation runs at w = [0.5] only"));
                    }
                    if d.n.windows(2).any(|p| p[1] <= p[0]) {
                        return Err(Error::config("params.n", "continuation needs strictly increasing N"));
                    }
                }
                Ok(())
            }
            Params::DickeGhz(d) => {
                check_counts("params.ghz_n", &d.ghz_n, 1, MAX_TWO_J)?;
                check_counts("params.dicke_n", &d.dicke_n, 2, MAX_TWO_J)?;
                if let Some(i) = d.dicke_n.iter().position(|n| n % 2 == 1) {
                    return Err(Error::config(format!("params.dicke_n[{i}]"), "Dicke probes need an even qubit count"));
                }
                if d.ghz_n.len() < 2 {
                    return Err(Error::config("params.ghz_n", "need at least two sizes for a scaling fit"));
                }
                Ok(())
            }
        }
    }

    fn inputs(&self) -> Value {
        let v = match self {
            Params::Bounds(p) | Params::Compat(p) => serde_json::to_value(p),
            Params::SpinRotation(p) => serde_json::to_value(p),
            Params::Lossy(p) => serde_json::to_value(p),
            Params::DephasingN1(p) => serde_json::to_value(p),
            Params::DephasingJoint(p) => serde_json::to_value(p),
            Params::DickeGhz(p) => serde_json::to_value(p),
        };
        v.expect("parameters serialize")
    }
}

impl ModelParams {
    fn param_count(&self) -> usize {
        match &self.model {
            ModelSpec::RandomFullRank { params, .. } => *params,
            ModelSpec::ClassicalMixing { .. } => 2,
            ModelSpec::Unitary { generators, .. } => generators.len(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("params.samples", "must be at least 1"));
        }
        match &self.model {
            ModelSpec::RandomFullRank { dim, params } => {
                if *dim < 2 || *dim > MAX_MODEL_DIM {
                    return Err(Error::config("params.model.dim", format!("must lie in [2, {MAX_MODEL_DIM}]")));
                }
                if *params == 0 {
                    return Err(Error::config("params.model.params", "must be at least 1"));
                }
            }
            ModelSpec::ClassicalMixing { dim } => {
                if *dim < 2 || *dim > MAX_MODEL_DIM {
                    return Err(Error::config("params.model.dim", format!("must lie in [2, {MAX_MODEL_DIM}]")));
                }
            }
            ModelSpec::Unitary { generators, probe } => {
                let d = probe.len();
                if !(2..=MAX_MODEL_DIM).contains(&d) {
                    return Err(Error::config("params.model.probe", format!("dimension must lie in [2, {MAX_MODEL_DIM}]")));
                }
                if probe.iter().map(|z| z[0] * z[0] + z[1] * z[1]).sum::<f64>() < 1e-24 {
                    return Err(Error::config("params.model.probe", "must be nonzero"));
                }
                if generators.is_empty() {
                    return Err(Error::config("params.model.generators", "need at least one generator"));
                }
                for (k, g) in generators.iter().enumerate() {
                    let key = format!("params.model.generators[{k}]");
                    if g.len() != d || g.iter().any(|r| r.len() != d) {
                        return Err(Error::config(key, format!("must be a {d}×{d} matrix")));
                    }
                    if hermiticity_defect(&complex_matrix(g)) > 1e-12 {
                        return Err(Error::config(key, "must be Hermitian"));
                    }
                }
                if self.samples != 1 {
                    return Err(Error::config("params.samples", "a user model is deterministic; use 1"));
                }
            }
        }
        let p = self.param_count();
        if let Some(phi) = &self.phi {
            if phi.len() != p {
                return Err(Error::config("params.phi", format!("expected {p} entries, got {}", phi.len())));
            }
            check_finite("params.phi", phi)?;
        }
        if let CostSpec::Matrix(g) = &self.cost {
            if g.len() != p || g.iter().any(|r| r.len() != p) {
                return Err(Error::config("params.cost", format!("must be a {p}×{p} matrix")));
            }
            let m = DMatrix::from_fn(p, p, |i, j| g[i][j]);
            if (&m - m.transpose()).amax() > 1e-12 {
                return Err(Error::config("params.cost", "must be symmetric"));
            }
            if m.symmetric_eigenvalues().min() <= 0.0 {
                return Err(Error::config("params.cost", "must be positive definite"));
            }
        }
        if let MeasurementSpec::SldEigenbasis { index } = self.measurement {
            if index >= p {
                return Err(Error::config("params.measurement.index", format!("must be below the parameter count {p}")));
            }
        }
        Ok(())
    }
}

fn complex_matrix(rows: &[Vec<ComplexEntry>]) -> CMatrix {
    CMatrix::from_fn(rows.len(), rows.len(), |i, j| c(rows[i][j][0], rows[i][j][1]))
}

enum SampledModel {
    Random(RandomFullRankModel),
    Mixing(ClassicalMixingModel),
    Unitary(PureUnitaryModel),
}

impl SampledModel {
    fn as_model(&self) -> &dyn ParametricModel {
        match self {
            SampledModel::Random(m) => m,
            SampledModel::Mixing(m) => m,
            SampledModel::Unitary(m) => m,
        }
    }
}

/// One drawn instance: model, cost and measurement basis. All draws come
/// from the run's generator in sample order, before any parallel work.
struct Instance {
    dim: usize,
    model: SampledModel,
    cost: DMatrix<f64>,
    basis: Option<CMatrix>,
}

fn draw_instances(p: &ModelParams, rng: &mut ChaCha8Rng) -> Vec<Instance> {
    let params = p.param_count();
    (0..p.samples)
        .map(|_| {
            let (dim, model) = match &p.model {
                ModelSpec::RandomFullRank { dim, params } => (*dim, SampledModel::Random(RandomFullRankModel::sample(rng, *dim, *params))),
                ModelSpec::ClassicalMixing { dim } => (*dim, SampledModel::Mixing(ClassicalMixingModel::sample(rng, *dim))),
                ModelSpec::Unitary { generators, probe } => {
                    let v = CVector::from_iterator(probe.len(), probe.iter().map(|z| c(z[0], z[1])));
                    let model = PureUnitaryModel { generators: generators.iter().map(|g| complex_matrix(g)).collect(), probe: v.normalize() };
                    (probe.len(), SampledModel::Unitary(model))
                }
            };
            let cost = match &p.cost {
                CostSpec::Named(NamedCost::Identity) => DMatrix::identity(params, params),
                CostSpec::Named(NamedCost::Random) => {
                    let a = DMatrix::from_fn(params, params, |_, _| rng.gen_range(-1.0..1.0));
                    &a * a.transpose() + DMatrix::identity(params, params) * 0.2
                }
                CostSpec::Matrix(g) => DMatrix::from_fn(params, params, |i, j| g[i][j]),
            };
            let basis = match p.measurement {
                MeasurementSpec::RandomProjective => Some(expm_i(&random_hermitian(rng, dim), 1.0)),
                MeasurementSpec::SldEigenbasis { .. } => None,
            };
            Instance { dim, model, cost, basis }
        })
        .collect()
}

/// Intermediate result of one experiment before it becomes a record.
struct Outcome {
    table: Table,
    diagnostics: Value,
    failures: Vec<String>,
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs a validated config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportRecord> {
    let params = config.validate()?;
    let started = Instant::now();
    let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tol = config.tolerances;
    let outcome = in_pool(config.jobs, || match &params {
        Params::Bounds(p) => run_bounds(p, &mut rng, &tol),
        Params::Compat(p) => run_compat(p, &mut rng, &tol),
        Params::SpinRotation(p) => run_spin_rotation(p, &tol),
        Params::Lossy(p) => run_lossy(p, config.seed, &mut rng, &tol),
        Params::DephasingN1(p) => run_dephasing_n1(p, &tol),
        Params::DephasingJoint(p) => run_dephasing_joint(p, config.seed),
        Params::DickeGhz(p) => run_dicke_ghz(p),
    })??;
    Ok(ReportRecord {
        experiment: config.experiment,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        jobs: config.jobs,
        inputs: params.inputs(),
        tolerances: tol,
        summary: Summary::from_table(&outcome.table),
        raw: outcome.table,
        diagnostics: outcome.diagnostics,
        failed: !outcome.failures.is_empty(),
        failures: outcome.failures,
        timing: Timing { started_unix_ms, wall_time_seconds: started.elapsed().as_secs_f64() },
    })
}

fn evaluation_point(p: &ModelParams) -> Vec<f64> {
    p.phi.clone().unwrap_or_else(|| vec![0.0; p.param_count()])
}

fn measurement_povm(inst: &Instance, slds: &SldSet, spec: &MeasurementSpec) -> Result<Povm> {
    match (spec, &inst.basis) {
        (MeasurementSpec::SldEigenbasis { index }, _) => Povm::from_basis(&eigh(&slds.slds[*index]).vectors),
        (MeasurementSpec::RandomProjective, Some(u)) => Povm::from_basis(u),
        (MeasurementSpec::RandomProjective, None) => unreachable!("random bases are drawn up front"),
    }
}

/// `Tr(G F⁻¹)`, infinite when `F` is singular.
fn cr_or_inf(f: &crate::estimation::FisherMatrix, g: &DMatrix<f64>) -> f64 {
    qfi_cr_bound(f, g).unwrap_or(f64::INFINITY)
}

fn run_bounds(p: &ModelParams, rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<Outcome> {
    let instances = draw_instances(p, rng);
    let phi = evaluation_point(p);
    let rows: Vec<Result<(Vec<Cell>, Value, Option<String>)>> = instances
        .par_iter()
        .enumerate()
        .map(|(k, inst)| {
            let m = inst.model.as_model();
            let (rho, slds) = SldSet::from_model(m, &phi, tol)?;
            let fq = qfi_matrix(&rho, &slds)?;
            let qfi_cr = qfi_cr_bound(&fq, &inst.cost)?;
            let holevo = holevo_bound(&rho, &slds, &fq, &inst.cost)?;
            let compat = compatibility_check(&rho, &slds, &fq, tol.compatibility)?;
            let povm = measurement_povm(inst, &slds, &p.measurement)?;
            let fc = povm_fisher(m, &phi, &povm, tol)?;
            let classical = cr_or_inf(&fc, &inst.cost);
            let row = vec![
                Cell::from(k),
                Cell::from(inst.dim),
                Cell::from(fq.dim()),
                Cell::from(classical),
                Cell::from(qfi_cr),
                Cell::from(holevo.value),
                Cell::from(holevo.value - qfi_cr),
                Cell::from(compat.max_weak_violation()),
                Cell::from(holevo.converged),
            ];
            let diag = json!({
                "sample": k,
                "qfi": fq.to_rows(),
                "classical_fisher": fc.to_rows(),
                "holevo_iterations": holevo.iterations,
                "holevo_constraint_residual": holevo.constraint_residual,
                "holevo_warm_start": holevo.warm_start_value,
            });
            let failure = (!holevo.converged).then(|| format!("Holevo solver did not converge on sample {k}"));
            Ok((row, diag, failure))
        })
        .collect();
    let mut table = Table::new(&["sample", "dim", "params", "classical_cr", "qfi_cr", "holevo_cr", "gap", "weak_violation", "converged"]);
    let mut diags = Vec::new();
    let mut failures = Vec::new();
    for r in rows {
        let (row, d, f) = r?;
        table.push(row);
        diags.push(d);
        failures.extend(f);
    }
    let ordered = table.rows.iter().all(|r| {
        let (c, q, h) = (r[3].as_f64().unwrap(), r[4].as_f64().unwrap(), r[5].as_f64().unwrap());
        h >= q - tol.bound_equality && c >= q * (1.0 - 1e-8) - 1e-10
    });
    table.scalars.insert("orderings_hold".into(), Cell::from(ordered));
    Ok(Outcome { table, diagnostics: json!({ "samples": diags }), failures })
}

fn run_compat(p: &ModelParams, rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<Outcome> {
    let instances = draw_instances(p, rng);
    let phi = evaluation_point(p);
    let rows: Vec<Result<(Vec<Cell>, Value)>> = instances
        .par_iter()
        .enumerate()
        .map(|(k, inst)| {
            let (rho, slds) = SldSet::from_model(inst.model.as_model(), &phi, tol)?;
            let fq = qfi_matrix(&rho, &slds)?;
            let r = compatibility_check(&rho, &slds, &fq, tol.compatibility)?;
            let row = vec![
                Cell::from(k),
                Cell::from(inst.dim),
                Cell::from(fq.dim()),
                Cell::from(r.max_weak_violation()),
                Cell::from(r.max_offdiag()),
                Cell::from(r.max_strong_commutator()),
                Cell::from(r.explicit_sum_residual),
                Cell::from(r.weak_commutation_holds),
                Cell::from(r.qfi_diagonal),
                Cell::from(r.strong_commutation_holds),
            ];
            Ok((row, json!({ "sample": k, "report": r, "qfi": fq.to_rows() })))
        })
        .collect();
    let mut table = Table::new(&[
        "sample",
        "dim",
        "params",
        "max_weak",
        "max_offdiag",
        "max_strong",
        "explicit_sum_residual",
        "weak_commutation",
        "qfi_diagonal",
        "strong_commutation",
    ]);
    let mut diags = Vec::new();
    for r in rows {
        let (row, d) = r?;
        table.push(row);
        diags.push(d);
    }
    Ok(Outcome { table, diagnostics: json!({ "samples": diags }), failures: Vec::new() })
}

fn run_spin_rotation(p: &SpinRotationParams, tol: &Tolerances) -> Result<Outcome> {
    let grid: Vec<(f64, f64)> = p.j.iter().flat_map(|&j| p.alpha.iter().map(move |&a| (j, a))).collect();
    let rows: Vec<Result<Vec<Cell>>> = grid
        .par_iter()
        .map(|&(j, alpha)| {
            let s = analyze_spin_rotation((2.0 * j).round() as usize, alpha, p.phase_grid, tol.compatibility)?;
            let compatible = s.eigstructure_satisfied && s.weak_commutation_violation < tol.compatibility && s.qfi[0][1].abs() < tol.compatibility;
            Ok(vec![
                Cell::from(j),
                Cell::from(alpha),
                Cell::from(s.eigstructure_residual),
                Cell::from(s.eigstructure_satisfied),
                Cell::from(s.qfi[0][0]),
                Cell::from(s.qfi[1][1]),
                Cell::from(s.qfi[0][1]),
                Cell::from(s.var_phi1),
                Cell::from(s.var_phi2),
                Cell::from(s.weak_commutation_violation),
                Cell::from(compatible),
            ])
        })
        .collect();
    let mut table = Table::new(&[
        "j",
        "alpha",
        "eigstructure_residual",
        "eigstructure_satisfied",
        "qfi_11",
        "qfi_22",
        "qfi_12",
        "var_phi1",
        "var_phi2",
        "weak_violation",
        "compatible",
    ]);
    for r in rows {
        table.push(r?);
    }
    Ok(Outcome { table, diagnostics: json!({ "phase_grid": p.phase_grid }), failures: Vec::new() })
}

fn run_lossy(p: &LossyParams, seed: u64, rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<Outcome> {
    let grid: Vec<(usize, f64)> = p.n.iter().flat_map(|&n| p.eta.iter().map(move |&e| (n, e))).collect();
    // random probes are drawn in grid order before the parallel section
    let probes: Vec<Option<FockProbe>> = grid.iter().map(|&(n, _)| matches!(p.probe, LossyProbe::Random).then(|| FockProbe::random(rng, n))).collect();
    let rows: Vec<Result<(Vec<Cell>, Value, Option<String>)>> = grid
        .par_iter()
        .zip(probes.par_iter())
        .map(|(&(n, eta), random)| {
            let (probe, converged) = match p.probe {
                LossyProbe::Noon => (FockProbe::noon(n), true),
                LossyProbe::Random => (random.clone().expect("drawn"), true),
                LossyProbe::Optimized => {
                    let o = optimize_phase_probe(n, eta, p.restarts, seed)?;
                    (FockProbe::from_real(&o.amplitudes)?, o.converged)
                }
            };
            let q = lossy_qfi(&probe, p.phi, eta, tol)?;
            let bound = lossy_phase_bound(n, eta);
            let row = vec![
                Cell::from(n),
                Cell::from(eta),
                Cell::from(q.f_phi_phi),
                Cell::from(q.f_eta_eta),
                Cell::from(q.f_phi_eta),
                Cell::from(loss_fisher(n, eta)?),
                Cell::from(q.sld_commutator),
                Cell::from(q.weak_commutation),
                Cell::from(bound),
                Cell::from(q.f_phi_phi / bound),
            ];
            let amps: Vec<(f64, f64)> = probe.amplitudes().iter().map(|a| (a.re, a.im)).collect();
            let diag = json!({ "N": n, "eta": eta, "probe": amps, "block_sld_residual": q.block_sld_residual });
            let failure = (!converged).then(|| format!("probe optimization did not converge at N = {n}, η = {eta}"));
            Ok((row, diag, failure))
        })
        .collect();
    let mut table = Table::new(&[
        "N",
        "eta",
        "f_phi_phi",
        "f_eta_eta",
        "f_phi_eta",
        "f_eta_eta_expected",
        "sld_commutator",
        "weak_commutation",
        "phase_bound",
        "phase_ratio",
    ]);
    let mut diags = Vec::new();
    let mut failures = Vec::new();
    for r in rows {
        let (row, d, f) = r?;
        table.push(row);
        diags.push(d);
        failures.extend(f);
    }
    Ok(Outcome { table, diagnostics: json!({ "points": diags }), failures })
}

fn run_dephasing_n1(p: &DephasingN1Params, tol: &Tolerances) -> Result<Outcome> {
    let mut table = Table::new(&["eta", "f_phi", "f_eta", "f_offdiag", "f_phi_expected", "f_eta_expected", "compatibility_residual"]);
    let probe = SymmetricProbe::product_plus(1);
    for &eta in &p.eta {
        let q = dephasing_qfi(&probe, eta, p.phi, tol)?;
        table.push(vec![
            Cell::from(eta),
            Cell::from(q.f_phi()),
            Cell::from(q.f_eta()),
            Cell::from(q.fisher[0][1]),
            Cell::from(eta * eta),
            Cell::from(1.0 / (1.0 - eta * eta)),
            Cell::from(q.compatibility_residual),
        ]);
    }
    Ok(Outcome { table, diagnostics: json!({ "probe": "|+>" }), failures: Vec::new() })
}

fn search_summary(r: &SearchResult) -> Value {
    json!({
        "w": r.weight,
        "objective": r.objective,
        "theta": r.theta,
        "converged": r.converged,
        "diagnostics": r.diagnostics,
        "amplitudes": r.amplitudes,
    })
}

fn run_dephasing_joint(p: &DephasingJointParams, seed: u64) -> Result<Outcome> {
    let opts = SearchOptions {
        restarts: p.restarts,
        seed,
        tolerance: p.search_tolerance,
        max_iterations: p.max_iterations,
        theta_grid: p.theta_grid,
        ..SearchOptions::default()
    };
    let mut table = Table::new(&["N", "eta", "w", "var_phi", "var_eta", "xi_joint", "xi_separate", "ratio", "discrepancy"]);
    let mut diags = Vec::new();
    let mut failures = Vec::new();
    let push = |table: &mut Table, n: usize, eta: f64, w: f64, var_phi: f64, var_eta: f64, xi: f64, xi_sep: f64| {
        table.push(vec![
            Cell::from(n),
            Cell::from(eta),
            Cell::from(w),
            Cell::from(var_phi),
            Cell::from(var_eta),
            Cell::from(xi),
            Cell::from(xi_sep),
            Cell::from(xi / xi_sep),
            Cell::from(xi / xi_sep - 1.0),
        ]);
    };
    if p.continuation {
        let sweeps: Vec<Result<Vec<crate::probe_search::DiscrepancyRow>>> = p.eta.par_iter().map(|&eta| continuation_discrepancy(&p.n, eta, &opts)).collect();
        // grid order is N-major, as in the restarted mode
        let sweeps: Vec<Vec<_>> = sweeps.into_iter().collect::<Result<_>>()?;
        for (i, &n) in p.n.iter().enumerate() {
            for (e, &eta) in p.eta.iter().enumerate() {
                let r = &sweeps[e][i];
                push(&mut table, n, eta, 0.5, r.var_phi, r.var_eta, r.xi_joint, r.xi_separate);
                if !r.converged {
                    failures.push(format!("search did not converge at N = {n}, η = {eta}"));
                }
                diags.push(json!({ "N": n, "eta": eta, "mode": "continuation", "converged": r.converged }));
            }
        }
    } else {
        let grid: Vec<(usize, f64)> = p.n.iter().flat_map(|&n| p.eta.iter().map(move |&e| (n, e))).collect();
        let points: Vec<Result<(SearchResult, SearchResult, Vec<SearchResult>)>> = grid
            .par_iter()
            .map(|&(n, eta)| {
                let phase = joint_probe_search(n, eta, 1.0, p.family, &opts)?;
                let loss = joint_probe_search(n, eta, 0.0, p.family, &opts)?;
                let joint = p.w.iter().map(|&w| joint_probe_search(n, eta, w, p.family, &opts)).collect::<Result<Vec<_>>>()?;
                Ok((phase, loss, joint))
            })
            .collect();
        for (&(n, eta), point) in grid.iter().zip(points) {
            let (phase, loss, joint) = point?;
            let xi_sep = 0.5 * (phase.figures.norm_phi + loss.figures.norm_eta);
            for r in &joint {
                push(&mut table, n, eta, r.weight, r.figures.var_phi, r.figures.var_eta, r.figures.xi, xi_sep);
            }
            for r in std::iter::once(&phase).chain(std::iter::once(&loss)).chain(&joint) {
                if !r.converged {
                    failures.push(format!("search did not converge at N = {n}, η = {eta}, w = {}", r.weight));
                }
            }
            diags.push(json!({
                "N": n,
                "eta": eta,
                "separate_phase": search_summary(&phase),
                "separate_loss": search_summary(&loss),
                "joint": joint.iter().map(search_summary).collect::<Vec<_>>(),
            }));
        }
    }
    if let Some(d) = table.column("discrepancy") {
        let max = d.iter().filter_map(|c| c.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        table.scalars.insert("max_discrepancy".into(), Cell::from(max));
    }
    Ok(Outcome { table, diagnostics: json!({ "family": p.family, "points": diags }), failures })
}

fn run_dicke_ghz(p: &DickeGhzParams) -> Result<Outcome> {
    let (x, y) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    let mut jobs: Vec<(&'static str, usize)> = p.ghz_n.iter().map(|&n| ("ghz", n)).collect();
    jobs.extend(p.dicke_n.iter().map(|&n| ("dicke", n)));
    let rows: Vec<Result<Vec<Cell>>> = jobs
        .par_iter()
        .map(|&(family, n)| {
            let (fam, e1, e2) = match family {
                "ghz" => (ProbeFamily::Ghz, (n * n) as f64, n as f64),
                _ => (ProbeFamily::Dicke, (n * n) as f64 / 2.0 + n as f64, (n * n) as f64 / 2.0 + n as f64),
            };
            let f = collective_rotation_fi(n, &fam, x, y)?;
            Ok(vec![Cell::from(family), Cell::from(n), Cell::from(f.get(0, 0)), Cell::from(f.get(1, 1)), Cell::from(f.get(0, 1)), Cell::from(e1), Cell::from(e2)])
        })
        .collect();
    let mut table = Table::new(&["family", "N", "fi_11", "fi_22", "fi_12", "expected_11", "expected_22"]);
    for r in rows {
        table.push(r?);
    }
    let ghz: Vec<&Vec<Cell>> = table.rows.iter().filter(|r| r[0] == Cell::from("ghz")).collect();
    let ns: Vec<f64> = ghz.iter().map(|r| r[1].as_f64().unwrap()).collect();
    let col = |i: usize| ghz.iter().map(|r| r[i].as_f64().unwrap()).collect::<Vec<f64>>();
    let slope_1 = log_log_slope(&ns, &col(2));
    let slope_2 = log_log_slope(&ns, &col(3));
    let dicke_dev = table
        .rows
        .iter()
        .filter(|r| r[0] == Cell::from("dicke"))
        .map(|r| (r[2].as_f64().unwrap() - r[5].as_f64().unwrap()).abs().max((r[3].as_f64().unwrap() - r[6].as_f64().unwrap()).abs()))
        .fold(0.0, f64::max);
    table.scalars.insert("ghz_slope_1".into(), Cell::from(slope_1));
    table.scalars.insert("ghz_slope_2".into(), Cell::from(slope_2));
    table.scalars.insert("dicke_max_deviation".into(), Cell::from(dicke_dev));
    Ok(Outcome { table, diagnostics: json!({ "axes": [x, y] }), failures: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(text)
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        assert_eq!(key_of(cfg(r#"{"experiment":"lossy","sede":1}"#).unwrap_err()), "sede");
        assert_eq!(key_of(cfg(r#"{"experiment":"lossy","params":{"etta":[0.5]}}"#).unwrap_err()), "params.etta");
        assert_eq!(key_of(cfg(r#"{"experiment":"lossy","tolerances":{"trace":1e-9,"bogus":1}}"#).unwrap_err()), "tolerances.bogus");
        assert_eq!(key_of(cfg(r#"{"experiment":"bounds","params":{"model":{"kind":"random-full-rank","dim":2,"params":1,"x":0}}}"#).unwrap_err()), "params.model.x");
        assert!(matches!(cfg(r#"{"experiment":"nope"}"#).unwrap_err(), Error::Config { .. }));
    }

    #[test]
    fn ranges_are_checked() {
        let e = cfg(r#"{"experiment":"lossy","params":{"eta":[0.5,1.0]}}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(key_of(e), "params.eta[1]");
        assert_eq!(key_of(cfg(r#"{"experiment":"dephasing-joint","params":{"w":[1.5]}}"#).unwrap_err()), "params.w[0]");
        assert_eq!(key_of(cfg(r#"{"experiment":"dephasing-joint","params":{"n":[0]}}"#).unwrap_err()), "params.n[0]");
        assert_eq!(key_of(cfg(r#"{"experiment":"spin-rotation","params":{"j":[0.7]}}"#).unwrap_err()), "params.j[0]");
        assert_eq!(key_of(cfg(r#"{"experiment":"bounds","jobs":0}"#).unwrap_err()), "jobs");
        assert_eq!(key_of(cfg(r#"{"experiment":"bounds","params":{"cost":[[1,0],[0,-1]]}}"#).unwrap_err()), "params.cost");
        assert_eq!(key_of(cfg(r#"{"experiment":"bounds","tolerances":{"psd":-1}}"#).unwrap_err()), "tolerances.psd");
        assert_eq!(key_of(cfg(r#"{"experiment":"dicke-ghz","params":{"dicke_n":[3]}}"#).unwrap_err()), "params.dicke_n[0]");
    }

    #[test]
    fn defaults_are_echoed() {
        let c = cfg(r#"{"experiment":"lossy"}"#).unwrap();
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.inputs["n"], json!([4]));
        assert_eq!(r.inputs["probe"], json!("noon"));
        let f = r.raw.column("f_eta_eta").unwrap()[0].as_f64().unwrap();
        assert!((f - 4.0 / 0.09).abs() < 1e-8);
    }

    #[test]
    fn user_unitary_model() {
        // spin-½ rotations about x and y on |0⟩: QFI bound 2, Holevo 4
        let text = r#"{"experiment":"bounds","params":{"model":{"kind":"unitary",
            "generators":[[[[0,0],[0.5,0]],[[0.5,0],[0,0]]],[[[0,0],[0,-0.5]],[[0,0.5],[0,0]]]],
            "probe":[[1,0],[0,0]]}}}"#;
        let r = run_experiment(&cfg(text).unwrap()).unwrap();
        let q = r.raw.column("qfi_cr").unwrap()[0].as_f64().unwrap();
        let h = r.raw.column("holevo_cr").unwrap()[0].as_f64().unwrap();
        assert!((q - 2.0).abs() < 1e-10 && (h - 4.0).abs() < 1e-6, "{q} {h}");
    }

    #[test]
    fn spin_one_example() {
        let r = run_experiment(&cfg(r#"{"experiment":"spin-rotation"}"#).unwrap()).unwrap();
        let p = &r.summary.points[0];
        assert!((p["var_phi1"].as_f64().unwrap() - 0.25).abs() < 1e-10);
        assert!((p["var_phi2"].as_f64().unwrap() - 0.25).abs() < 1e-10);
        assert_eq!(p["compatible"], Cell::Bool(true));
    }

    #[test]
    fn same_seed_same_record() {
        let text = r#"{"experiment":"compat","seed":5,"params":{"samples":3}}"#;
        let a = run_experiment(&cfg(text).unwrap()).unwrap().to_json().unwrap();
        let b = run_experiment(&cfg(text).unwrap()).unwrap().to_json().unwrap();
        assert_eq!(crate::report::strip_timing(&a).unwrap(), crate::report::strip_timing(&b).unwrap());
        let other = run_experiment(&cfg(r#"{"experiment":"compat","seed":6,"params":{"samples":3}}"#).unwrap()).unwrap().to_json().unwrap();
        assert_ne!(crate::report::strip_timing(&a).unwrap(), crate::report::strip_timing(&other).unwrap());
    }

    #[test]
    fn jobs_do_not_change_values() {
        let a = run_experiment(&cfg(r#"{"experiment":"bounds","params":{"samples":4,"cost":"random"}}"#).unwrap()).unwrap();
        let b = run_experiment(&cfg(r#"{"experiment":"bounds","jobs":3,"params":{"samples":4,"cost":"random"}}"#).unwrap()).unwrap();
        assert_eq!(a.raw, b.raw);
    }
}
