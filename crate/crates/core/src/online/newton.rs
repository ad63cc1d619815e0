use nalgebra::{DMatrix, DVector};

use super::{check_inputs, finish, phase_of, OpCounters, PredictionStepResult, SolverConfig};
use crate::constitutive::{MaterialState, Phase};
use crate::error::{Error, Result};
use crate::network::{Model, ModelType, Topology, WeightField};
use crate::voigt::{Mat63, Stiffness6, Strain6, Stress6};

/// Pruned weighted orientation matrix with its row and column bookkeeping.
///
/// Row block `r` belongs to active base node `base_nodes[r]`; column block `c`
/// to retained parent `parents[c]` (a parent whose two children are active).
/// The unknown per retained parent `k` is `a_k = w_k b_k`.
#[derive(Debug, Clone)]
pub struct NewtonSystem {
    pub a: DMatrix<f64>,
    /// Nonzero blocks of each row block of `A` as `(column block, block)`.
    pub blocks: Vec<Vec<(usize, Mat63)>>,
    pub base_nodes: Vec<usize>,
    pub parents: Vec<usize>,
    /// Weight of each active base node, aligned with `base_nodes`.
    pub weights: Vec<f64>,
}

impl NewtonSystem {
    /// Base-node strains `ε_macro + (A a)_r` for every active base node.
    pub fn node_strains(&self, deps_macro: &Strain6, a: &DVector<f64>) -> Vec<Strain6> {
        self.blocks
            .iter()
            .map(|row| row.iter().fold(*deps_macro, |e, (c, blk)| e + blk * a.fixed_rows::<3>(3 * c)))
            .collect()
    }

    /// `R = AᵀWΔσ`.
    pub fn residual(&self, dsigma: &[Stress6]) -> DVector<f64> {
        let mut r = DVector::zeros(self.a.ncols());
        for ((row, s), w) in self.blocks.iter().zip(dsigma).zip(&self.weights) {
            let ws = s * *w;
            for (c, blk) in row {
                let mut seg = r.fixed_rows_mut::<3>(3 * c);
                seg += blk.transpose() * ws;
            }
        }
        r
    }

    /// `J = AᵀWKA`, accumulated block by block over each row's ancestors.
    pub fn jacobian(&self, tangents: &[Stiffness6]) -> DMatrix<f64> {
        let n = self.a.ncols();
        let mut j = DMatrix::zeros(n, n);
        for ((row, k), w) in self.blocks.iter().zip(tangents).zip(&self.weights) {
            let kb: Vec<Mat63> = row.iter().map(|(_, blk)| (k * *w) * blk).collect();
            for (ci, bi) in row {
                let bt = bi.transpose();
                for ((cj, _), kbj) in row.iter().zip(&kb) {
                    let mut view = j.fixed_view_mut::<3, 3>(3 * ci, 3 * cj);
                    view += bt * kbj;
                }
            }
        }
        j
    }
}

/// Solves `J x = b`, by Cholesky when `J` is positive definite and by LU
/// otherwise.
fn solve(j: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match j.clone().cholesky() {
        Some(ch) => Some(ch.solve(b)),
        None => j.lu().solve(b),
    }
}

/// Assembles `A` so that `ε_nodes − ε_macro = A a`. The layer-`i` ancestor of
/// a base node is reached by integer division of its index, and the sign is
/// `+` when the path enters the ancestor's first child.
pub fn assemble_a(topology: Topology, weights: &WeightField, h: &[Mat63]) -> Result<NewtonSystem> {
    let np = topology.num_parents();
    let w = &weights.weights;
    if h.len() != np {
        return Err(Error::Assembly(format!("expected {np} orientation matrices, got {}", h.len())));
    }
    let retained = |k: usize| {
        let (a, b) = Topology::children(k);
        w[a] > 0.0 && w[b] > 0.0
    };
    let parents: Vec<usize> = (0..np).filter(|&k| retained(k)).collect();
    let mut column = vec![usize::MAX; np];
    for (c, &k) in parents.iter().enumerate() {
        column[k] = c;
    }
    let base_nodes: Vec<usize> = (0..topology.num_base()).filter(|&j| w[np + j] > 0.0).collect();

    let mut a = DMatrix::zeros(6 * base_nodes.len(), 3 * parents.len());
    let mut blocks = vec![Vec::new(); base_nodes.len()];
    let mut seen = vec![[false; 2]; parents.len()];
    for (r, &j) in base_nodes.iter().enumerate() {
        let mut child = np + j;
        while let Some(p) = Topology::parent(child) {
            if retained(p) {
                let c = column[p];
                let first = child == 2 * p + 1;
                let sign = if first { 1.0 } else { -1.0 };
                let blk = h[p] * (sign / w[child]);
                a.view_mut((6 * r, 3 * c), (6, 3)).copy_from(&blk);
                blocks[r].push((c, blk));
                seen[c][usize::from(!first)] = true;
            }
            child = p;
        }
    }
    if let Some(c) = seen.iter().position(|s| !(s[0] && s[1])) {
        return Err(Error::Assembly(format!("parent {} has no active base node on one side", parents[c])));
    }
    let weights = base_nodes.iter().map(|&j| w[np + j]).collect();
    Ok(NewtonSystem { a, blocks, base_nodes, parents, weights })
}

fn singular_parent(j: &DMatrix<f64>, parents: &[usize]) -> usize {
    let scale = j.amax().max(f64::MIN_POSITIVE);
    (0..parents.len())
        .find(|&c| j.view((3 * c, 3 * c), (3, 3)).determinant().abs() <= 1e-13 * scale.powi(3))
        .map(|c| parents[c])
        .unwrap_or(parents[0])
}

/// IMN prediction by Newton iteration on the jump vector. Converged when
/// `‖R‖ ≤ max(tol·‖R₀‖, 1e-14·C_max·‖Δε‖)`. The reported iteration count is
/// the number of Newton updates, or 1 if the initial residual already passes.
pub fn newton_predict(
    model: &Model,
    phases: &[Phase; 2],
    states: &[MaterialState],
    deps_macro: &Strain6,
    cfg: &SolverConfig,
) -> Result<PredictionStepResult> {
    check_inputs(model, ModelType::Imn, states, cfg)?;
    let prep = model.prepare()?;
    let t = prep.topology;
    let sys = assemble_a(t, &prep.weights, &prep.h)?;
    let c_max = phases.iter().map(|p| p.elastic.amax()).fold(0.0, f64::max);
    let floor = 1e-14 * c_max * deps_macro.norm();

    let mut counters = OpCounters::default();
    let mut a = DVector::zeros(sys.a.ncols());
    let mut r0 = None;
    let mut updates = 0;
    let mut strains;
    loop {
        strains = sys.node_strains(deps_macro, &a);
        let mut dsigma = Vec::with_capacity(strains.len());
        let mut tangents = Vec::with_capacity(strains.len());
        for (r, &j) in sys.base_nodes.iter().enumerate() {
            let res = phase_of(phases, j).step(&states[j], &strains[r])?;
            counters.constitutive_evals += 1;
            dsigma.push(res.dsigma);
            tangents.push(res.tangent);
        }
        let residual = sys.residual(&dsigma);
        let norm = residual.norm();
        let r0 = *r0.get_or_insert(norm);
        if norm <= (cfg.tol * r0).max(floor) {
            break;
        }
        if updates == cfg.max_iter {
            return Err(Error::NonConvergence { iterations: updates, residual: norm / r0 });
        }
        let jac = sys.jacobian(&tangents);
        let delta = solve(jac.clone(), &(-residual))
            .ok_or_else(|| Error::RankDeficient { parent: singular_parent(&jac, &sys.parents) })?;
        counters.linear_solves += 1;
        a += delta;
        updates += 1;
    }

    let mut base = vec![Strain6::zeros(); t.num_base()];
    for (r, &j) in sys.base_nodes.iter().enumerate() {
        base[j] = strains[r];
    }
    finish(&prep, phases, states, base, updates.max(1), counters)
}
