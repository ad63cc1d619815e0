//! Nonlinear prediction at a macroscale material point.
//!
//! Four schemes are available. `dmn_residual` linearizes every base-node law
//! around the current iterate (tangent plus residual stress) and re-solves
//! the network. `dmn_no_residual` and `imn_fixed_point` iterate on secant
//! stiffnesses, which reproduce each base node's stress increment exactly.
//! `imn_newton` runs Newton on the interface jump vector. All four share one
//! fixed point: traction continuity at every active interface.

mod fixed_point;
mod newton;
mod path;

pub use fixed_point::{fixed_point_predict_dmn, fixed_point_predict_imn};
pub use newton::{assemble_a, newton_predict, NewtonSystem};
pub use path::{
    reversal_path, run_loading_path, standard_paths, write_prediction_csv, LoadCase, LoadingPath, PathResult,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constitutive::{MaterialState, Phase};
use crate::error::{Error, Result};
use crate::network::{base_phase, Model, ModelType, Prepared};
use crate::voigt::{Strain6, Stress6};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DmnResidual,
    DmnNoResidual,
    ImnFixedPoint,
    ImnNewton,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Self::DmnResidual, Self::DmnNoResidual, Self::ImnFixedPoint, Self::ImnNewton];

    pub fn model_type(self) -> ModelType {
        match self {
            Self::DmnResidual | Self::DmnNoResidual => ModelType::Dmn,
            Self::ImnFixedPoint | Self::ImnNewton => ModelType::Imn,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DmnResidual => "dmn_residual",
            Self::DmnNoResidual => "dmn_no_residual",
            Self::ImnFixedPoint => "imn_fixed_point",
            Self::ImnNewton => "imn_newton",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative convergence tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
}

impl SolverConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self { tol: 1e-6, max_iter: 100, scheme }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Work counters for one prediction step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub constitutive_evals: u64,
    /// Laminate blocks evaluated during forward homogenization.
    pub block_forward: u64,
    /// Laminate blocks traversed during strain de-homogenization.
    pub block_backward: u64,
    pub linear_solves: u64,
}

impl OpCounters {
    pub fn add(&mut self, o: &OpCounters) {
        self.constitutive_evals += o.constitutive_evals;
        self.block_forward += o.block_forward;
        self.block_backward += o.block_backward;
        self.linear_solves += o.linear_solves;
    }
}

#[derive(Debug, Clone)]
pub struct PredictionStepResult {
    pub dsigma: Stress6,
    pub iterations: usize,
    /// Trial states for every base node (inactive nodes unchanged).
    pub states: Vec<MaterialState>,
    /// Base-node strain increments in the material frame (zero if inactive).
    pub base_strains: Vec<Strain6>,
    /// Whether any active base node accumulated plastic strain.
    pub plastic: bool,
    pub counters: OpCounters,
}

/// Dispatches on `cfg.scheme`.
pub fn predict(
    model: &Model,
    phases: &[Phase; 2],
    states: &[MaterialState],
    deps_macro: &Strain6,
    cfg: &SolverConfig,
) -> Result<PredictionStepResult> {
    match cfg.scheme {
        Scheme::DmnResidual => fixed_point_predict_dmn(model, phases, states, deps_macro, cfg, true),
        Scheme::DmnNoResidual => fixed_point_predict_dmn(model, phases, states, deps_macro, cfg, false),
        Scheme::ImnFixedPoint => fixed_point_predict_imn(model, phases, states, deps_macro, cfg),
        Scheme::ImnNewton => newton_predict(model, phases, states, deps_macro, cfg),
    }
}

fn check_inputs(model: &Model, expected: ModelType, states: &[MaterialState], cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if model.model_type() != expected {
        return Err(Error::Config(format!("scheme {} requires a {expected} model", cfg.scheme)));
    }
    if states.len() != model.topology().num_base() {
        return Err(Error::Config(format!(
            "expected {} base-node states, got {}",
            model.topology().num_base(),
            states.len()
        )));
    }
    Ok(())
}

fn phase_of(phases: &[Phase; 2], j: usize) -> &Phase {
    &phases[base_phase(j)]
}

/// Evaluates every active base node at the given material-frame increments
/// and homogenizes the stress increments to the macroscale.
fn finish(
    prep: &Prepared<'_>,
    phases: &[Phase; 2],
    states: &[MaterialState],
    base_strains: Vec<Strain6>,
    iterations: usize,
    mut counters: OpCounters,
) -> Result<PredictionStepResult> {
    let t = prep.topology;
    let np = t.num_parents();
    let mut out_states = states.to_vec();
    let mut base_stress = vec![Stress6::zeros(); t.num_base()];
    let mut plastic = false;
    for j in 0..t.num_base() {
        if !prep.weights.is_active(np + j) {
            continue;
        }
        let res = phase_of(phases, j).step(&states[j], &base_strains[j])?;
        counters.constitutive_evals += 1;
        plastic |= res.state.eq_plastic_strain > states[j].eq_plastic_strain;
        base_stress[j] = res.dsigma;
        out_states[j] = res.state;
    }
    let dsigma = homogenize_stress(prep, &base_stress);
    Ok(PredictionStepResult { dsigma, iterations, states: out_states, base_strains, plastic, counters })
}

/// Volume averaging of base-node stresses (material frame) up the tree,
/// rotating into each parent's frame for DMN.
pub(crate) fn homogenize_stress(prep: &Prepared<'_>, base_stress: &[Stress6]) -> Stress6 {
    let t = prep.topology;
    let np = t.num_parents();
    let w = &prep.weights.weights;
    let mut s = vec![Stress6::zeros(); t.num_nodes()];
    let rotate = |k: usize, v: Stress6| if prep.is_dmn() { prep.rotations[k] * v } else { v };
    for j in 0..t.num_base() {
        if w[np + j] > 0.0 {
            s[np + j] = rotate(np + j, base_stress[j]);
        }
    }
    for k in (0..np).rev() {
        if w[k] > 0.0 {
            let (a, b) = crate::network::Topology::children(k);
            let [f1, f2] = prep.weights.fractions[k];
            s[k] = rotate(k, s[a] * f1 + s[b] * f2);
        }
    }
    s[0]
}
