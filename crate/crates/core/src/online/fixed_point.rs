use super::{check_inputs, finish, phase_of, OpCounters, PredictionStepResult, SolverConfig};
use crate::constitutive::{MaterialState, Phase};
use crate::error::{Error, Result};
use crate::network::child_strains;
use crate::network::{AffineBlock, Block, Model, ModelType, Prepared, Topology};
use crate::voigt::{Stiffness6, Strain6, Stress6};

/// Base-node law `Δσ = C Δε + δσ` in the material frame.
#[derive(Debug, Clone, Copy)]
struct AffineLaw {
    stiffness: Stiffness6,
    residual: Stress6,
}

enum Node {
    Dead,
    Pass(usize),
    Block(Block, AffineBlock),
}

/// Homogenizes the affine laws to the top node, then distributes the
/// macroscale increment back to the base nodes. Returns material-frame
/// strain increments.
fn affine_sweep(
    prep: &Prepared<'_>,
    laws: &[AffineLaw],
    deps_macro: &Strain6,
    counters: &mut OpCounters,
) -> Result<Vec<Strain6>> {
    let t = prep.topology;
    let (nn, np) = (t.num_nodes(), t.num_parents());
    let w = &prep.weights.weights;
    let dmn = prep.is_dmn();
    let mut c = vec![Stiffness6::zeros(); nn];
    let mut ds = vec![Stress6::zeros(); nn];

    let place = |k: usize, c_bar: Stiffness6, ds_bar: Stress6, c: &mut [Stiffness6], ds: &mut [Stress6]| {
        if dmn {
            let r = &prep.rotations[k];
            c[k] = r * c_bar * r.transpose();
            ds[k] = r * ds_bar;
        } else {
            c[k] = c_bar;
            ds[k] = ds_bar;
        }
    };

    for j in 0..t.num_base() {
        if w[np + j] > 0.0 {
            place(np + j, laws[j].stiffness, laws[j].residual, &mut c, &mut ds);
        }
    }
    let mut nodes: Vec<Node> = (0..np).map(|_| Node::Dead).collect();
    for k in (0..np).rev() {
        let (a, b) = Topology::children(k);
        nodes[k] = match (w[a] > 0.0, w[b] > 0.0) {
            (false, false) => Node::Dead,
            (true, false) => Node::Pass(a),
            (false, true) => Node::Pass(b),
            (true, true) => {
                let [f1, f2] = prep.weights.fractions[k];
                let blk = Block::new(&c[a], &c[b], f1, f2, &prep.h[k])?;
                let aff = AffineBlock::from_block(&blk, &ds[a], &ds[b]);
                counters.block_forward += 1;
                Node::Block(blk, aff)
            }
        };
        match &nodes[k] {
            Node::Dead => {}
            Node::Pass(ch) => {
                let (cc, dd) = (c[*ch], ds[*ch]);
                place(k, cc, dd, &mut c, &mut ds);
            }
            Node::Block(_, aff) => place(k, aff.c_h, aff.dsigma_h, &mut c, &mut ds),
        }
    }

    let to_local = |k: usize, e: &Strain6| if dmn { prep.rotations[k].transpose() * e } else { *e };
    let mut e = vec![Strain6::zeros(); nn];
    e[0] = *deps_macro;
    for k in 0..np {
        if !(w[k] > 0.0) {
            continue;
        }
        let local = to_local(k, &e[k]);
        let (a, b) = Topology::children(k);
        match &nodes[k] {
            Node::Dead => {}
            Node::Pass(ch) => e[*ch] = local,
            Node::Block(blk, aff) => {
                let jump = aff.jump(&local);
                let (ea, eb) = child_strains(&local, &jump, blk.f1, blk.f2, &blk.h);
                e[a] = ea;
                e[b] = eb;
                counters.block_backward += 1;
            }
        }
    }
    Ok((0..t.num_base())
        .map(|j| if w[np + j] > 0.0 { to_local(np + j, &e[np + j]) } else { Strain6::zeros() })
        .collect())
}

fn norm(v: &[Strain6]) -> f64 {
    v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

/// Relative change of the base-node strain increments. When the previous
/// iterate is zero the newer one is used as the reference; two zero iterates
/// count as converged.
fn relative_change(old: &[Strain6], new: &[Strain6]) -> f64 {
    let diff = old.iter().zip(new).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
    let reference = if norm(old) >= 1e-14 { norm(old) } else { norm(new) };
    if reference < 1e-14 {
        return 0.0;
    }
    diff / reference
}

fn iterate(
    prep: &Prepared<'_>,
    phases: &[Phase; 2],
    states: &[MaterialState],
    deps_macro: &Strain6,
    cfg: &SolverConfig,
    use_residual: bool,
) -> Result<PredictionStepResult> {
    let t = prep.topology;
    let np = t.num_parents();
    let mut counters = OpCounters::default();
    let mut eps = vec![Strain6::zeros(); t.num_base()];
    let mut laws = vec![AffineLaw { stiffness: Stiffness6::zeros(), residual: Stress6::zeros() }; t.num_base()];
    let mut change = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        for j in 0..t.num_base() {
            if !prep.weights.is_active(np + j) {
                continue;
            }
            let phase = phase_of(phases, j);
            let res = phase.step(&states[j], &eps[j])?;
            counters.constitutive_evals += 1;
            laws[j] = if use_residual {
                AffineLaw { stiffness: res.tangent, residual: res.dsigma - res.tangent * eps[j] }
            } else {
                AffineLaw { stiffness: phase.secant(&eps[j], &res.dsigma), residual: Stress6::zeros() }
            };
        }
        let next = affine_sweep(prep, &laws, deps_macro, &mut counters)?;
        // without a retained block the sweep does not depend on the laws
        change = if counters.block_forward == 0 { 0.0 } else { relative_change(&eps, &next) };
        eps = next;
        if change <= cfg.tol {
            return finish(prep, phases, states, eps, iter, counters);
        }
    }
    Err(Error::NonConvergence { iterations: cfg.max_iter, residual: change })
}

/// DMN prediction. With `use_residual` each base law is linearized around the
/// current iterate (consistent tangent plus residual stress); without it the
/// secant stiffness is used and the residual stress vanishes identically.
pub fn fixed_point_predict_dmn(
    model: &Model,
    phases: &[Phase; 2],
    states: &[MaterialState],
    deps_macro: &Strain6,
    cfg: &SolverConfig,
    use_residual: bool,
) -> Result<PredictionStepResult> {
    check_inputs(model, ModelType::Dmn, states, cfg)?;
    iterate(&model.prepare()?, phases, states, deps_macro, cfg, use_residual)
}

/// IMN fixed-point prediction on secant stiffnesses.
pub fn fixed_point_predict_imn(
    model: &Model,
    phases: &[Phase; 2],
    states: &[MaterialState],
    deps_macro: &Strain6,
    cfg: &SolverConfig,
) -> Result<PredictionStepResult> {
    check_inputs(model, ModelType::Imn, states, cfg)?;
    iterate(&model.prepare()?, phases, states, deps_macro, cfg, false)
}
