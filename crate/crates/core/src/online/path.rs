use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{predict, OpCounters, SolverConfig};
use crate::constitutive::{MaterialState, Phase};
use crate::error::{Error, Result};
use crate::io::FORMAT_VERSION;
use crate::network::Model;
use crate::voigt::{Strain6, Stress6};

/// The six strain-controlled load cases: uniaxial strain along each axis and
/// simple shear in each plane (engineering shear strain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadCase {
    Uniaxial11,
    Uniaxial22,
    Uniaxial33,
    Shear23,
    Shear13,
    Shear12,
}

impl LoadCase {
    pub const ALL: [LoadCase; 6] =
        [Self::Uniaxial11, Self::Uniaxial22, Self::Uniaxial33, Self::Shear23, Self::Shear13, Self::Shear12];

    /// Voigt component that is driven.
    pub fn component(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap_or(0)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniaxial11 => "uniaxial_11",
            Self::Uniaxial22 => "uniaxial_22",
            Self::Uniaxial33 => "uniaxial_33",
            Self::Shear23 => "shear_23",
            Self::Shear13 => "shear_13",
            Self::Shear12 => "shear_12",
        }
    }

    fn unit(self) -> Strain6 {
        let mut e = Strain6::zeros();
        e[self.component()] = 1.0;
        e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingPath {
    pub name: String,
    pub increments: Vec<Strain6>,
}

/// Monotonic paths to `amplitude` in `steps` equal increments, one per case.
pub fn standard_paths(amplitude: f64, steps: usize) -> Vec<LoadingPath> {
    LoadCase::ALL
        .iter()
        .map(|c| LoadingPath {
            name: c.name().to_string(),
            increments: vec![c.unit() * (amplitude / steps as f64); steps],
        })
        .collect()
}

/// Loading to `amplitude` and back to zero, `steps` increments each way.
pub fn reversal_path(case: LoadCase, amplitude: f64, steps: usize) -> LoadingPath {
    let inc = case.unit() * (amplitude / steps as f64);
    let mut increments = vec![inc; steps];
    increments.extend(std::iter::repeat_n(-inc, steps));
    LoadingPath { name: format!("{}_reversal", case.name()), increments }
}

/// Per-step history of one loading path. If a step fails, the history holds
/// the converged steps before it and `halted` records the failure.
#[derive(Debug)]
pub struct PathResult {
    pub name: String,
    /// Accumulated macroscale strain after each step.
    pub strain: Vec<Strain6>,
    /// Accumulated macroscale stress after each step.
    pub stress: Vec<Stress6>,
    pub iterations: Vec<usize>,
    pub plastic: Vec<bool>,
    /// Wall time of the solver call per step.
    pub elapsed_ns: Vec<u64>,
    pub counters: Vec<OpCounters>,
    pub active_nodes: usize,
    pub halted: Option<(usize, Error)>,
}

impl PathResult {
    pub fn len(&self) -> usize {
        self.stress.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stress.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.halted {
            Some((step, source)) => Err(Error::PathHalted { step, source: Box::new(source) }),
            None => Ok(self),
        }
    }
}

/// Runs a path from virgin states, committing base-node states after each
/// converged step.
pub fn run_loading_path(model: &Model, phases: &[Phase; 2], path: &LoadingPath, cfg: &SolverConfig) -> PathResult {
    let nb = model.topology().num_base();
    let mut states = vec![MaterialState::default(); nb];
    let mut out = PathResult {
        name: path.name.clone(),
        strain: Vec::with_capacity(path.increments.len()),
        stress: Vec::with_capacity(path.increments.len()),
        iterations: Vec::new(),
        plastic: Vec::new(),
        elapsed_ns: Vec::new(),
        counters: Vec::new(),
        active_nodes: model.active_nodes(),
        halted: None,
    };
    let mut eps = Strain6::zeros();
    let mut sigma = Stress6::zeros();
    for (step, deps) in path.increments.iter().enumerate() {
        let start = Instant::now();
        let res = predict(model, phases, &states, deps, cfg);
        let elapsed = start.elapsed().as_nanos() as u64;
        match res {
            Ok(r) => {
                eps += deps;
                sigma += r.dsigma;
                states = r.states;
                out.strain.push(eps);
                out.stress.push(sigma);
                out.iterations.push(r.iterations);
                out.plastic.push(r.plastic);
                out.elapsed_ns.push(elapsed);
                out.counters.push(r.counters);
            }
            Err(e) => {
                out.halted = Some((step, e));
                break;
            }
        }
    }
    out
}

pub fn write_prediction_csv<W: Write>(out: W, result: &PathResult) -> Result<()> {
    let mut out = out;
    writeln!(out, "# format_version={FORMAT_VERSION} path={}", result.name)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    for p in ["eps", "sig"] {
        for c in ["11", "22", "33", "23", "13", "12"] {
            header.push(format!("{p}_{c}"));
        }
    }
    header.extend(["iterations", "active_nodes", "elapsed_ns"].map(String::from));
    w.write_record(&header)?;
    for i in 0..result.len() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(result.strain[i].iter().map(f64::to_string));
        row.extend(result.stress[i].iter().map(f64::to_string));
        row.push(result.iterations[i].to_string());
        row.push(result.active_nodes.to_string());
        row.push(result.elapsed_ns[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
