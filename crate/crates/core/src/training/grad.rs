//! Loss, relative-error metric and exact reverse-mode gradients through the
//! forward homogenization.

use rayon::prelude::*;

use super::LossConfig;
use crate::dataset::TrainingSample;
use crate::error::{Error, Result};
use crate::network::{Model, ParentKind, Prepared, Topology, Trace};
use crate::voigt::{frob_dot, h_matrix_adjoint, normal_partials, rotation_6_partials, Mat63, Stiffness6};

/// Samples per parallel work item. Fixed so that the reduction order, and
/// therefore every floating-point sum, does not depend on the thread count.
const CHUNK: usize = 16;

/// `‖C − Ĉ‖² / ‖C‖²` for one sample.
fn relative_sq_error(sample: &TrainingSample, pred: &Stiffness6, index: usize) -> Result<f64> {
    let denom = sample.target.norm_squared();
    if !(denom > 0.0) {
        return Err(Error::InvalidSample { index });
    }
    Ok((sample.target - pred).norm_squared() / denom)
}

fn regularizer(model: &Model, cfg: &LossConfig) -> f64 {
    let sum: f64 = model.z().iter().map(|z| z.max(0.0)).sum();
    cfg.eta * (sum - cfg.xi).powi(2)
}

/// Per-sample relative squared errors, in sample order.
pub fn relative_errors(model: &Model, batch: &[TrainingSample]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let prep = model.prepare()?;
    let chunks: Vec<Result<Vec<f64>>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            chunk
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let pred = prep.forward(&s.c_p1, &s.c_p2)?;
                    relative_sq_error(s, &pred, ci * CHUNK + i)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(batch.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// `(1/2N) Σ ‖C−Ĉ‖²/‖C‖² + η (Σ ReLU(z) − ξ)²`.
pub fn loss(model: &Model, batch: &[TrainingSample], cfg: &LossConfig) -> Result<f64> {
    let errs = relative_errors(model, batch)?;
    let data: f64 = errs.iter().sum::<f64>() / (2.0 * batch.len() as f64);
    Ok(data + regularizer(model, cfg))
}

/// `(1/N) Σ sqrt(‖C−Ĉ‖²/‖C‖²)`.
pub fn mean_relative_error(model: &Model, samples: &[TrainingSample]) -> Result<f64> {
    let errs = relative_errors(model, samples)?;
    Ok(errs.iter().map(|e| e.sqrt()).sum::<f64>() / samples.len() as f64)
}

/// Loss value together with batch statistics gathered on the way.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// `Σ sqrt(‖C−Ĉ‖²/‖C‖²)` over the batch.
    pub sum_rel_err: f64,
}

/// Cotangents accumulated over samples.
struct Accum {
    data_loss: f64,
    sum_rel_err: f64,
    w_bar: Vec<f64>,
    /// Per-node rotation cotangent (DMN).
    r_bar: Vec<Stiffness6>,
    /// Per-parent orientation cotangent (IMN).
    h_bar: Vec<Mat63>,
}

impl Accum {
    fn new(t: Topology, dmn: bool) -> Self {
        Self {
            data_loss: 0.0,
            sum_rel_err: 0.0,
            w_bar: vec![0.0; t.num_nodes()],
            r_bar: if dmn { vec![Stiffness6::zeros(); t.num_nodes()] } else { Vec::new() },
            h_bar: if dmn { Vec::new() } else { vec![Mat63::zeros(); t.num_parents()] },
        }
    }

    fn add(&mut self, other: &Accum) {
        self.data_loss += other.data_loss;
        self.sum_rel_err += other.sum_rel_err;
        self.w_bar.iter_mut().zip(&other.w_bar).for_each(|(a, b)| *a += b);
        self.r_bar.iter_mut().zip(&other.r_bar).for_each(|(a, b)| *a += b);
        self.h_bar.iter_mut().zip(&other.h_bar).for_each(|(a, b)| *a += b);
    }
}

/// Back-propagates `∂L/∂Ĉ` through one recorded forward pass.
fn backward(prep: &Prepared<'_>, trace: &Trace, g_top: Stiffness6, acc: &mut Accum) {
    let t = prep.topology;
    let np = t.num_parents();
    let w = &prep.weights.weights;
    let dmn = prep.is_dmn();
    let mut g = vec![Stiffness6::zeros(); t.num_nodes()];
    g[0] = g_top;

    for k in 0..t.num_nodes() {
        if !(w[k] > 0.0) {
            continue;
        }
        // undo the node rotation C = R C̄ Rᵀ
        let g_bar = if dmn {
            let r = &prep.rotations[k];
            let gk = &g[k];
            let cb = &trace.c_bar[k];
            acc.r_bar[k] += gk * r * cb.transpose() + gk.transpose() * r * cb;
            r.transpose() * gk * r
        } else {
            g[k]
        };
        if k >= np {
            continue;
        }
        let (a, b) = Topology::children(k);
        match &trace.parents[k] {
            ParentKind::Dead => {}
            ParentKind::PassThrough { child } => g[*child] += g_bar,
            ParentKind::Block(blk) => {
                let adj = blk.adjoint(&trace.c[a], &trace.c[b], &g_bar);
                g[a] += adj.c1;
                g[b] += adj.c2;
                let s = w[a] + w[b];
                let s2 = s * s;
                acc.w_bar[a] += (adj.f1 - adj.f2) * w[b] / s2;
                acc.w_bar[b] += (adj.f2 - adj.f1) * w[a] / s2;
                if !dmn {
                    acc.h_bar[k] += adj.h;
                }
            }
        }
    }
}

/// Loss and its exact gradient with respect to the flat parameter vector
/// (layout of [`Model::to_flat`]). The ReLU subgradient at `z = 0` is 0.
pub fn loss_and_grad(model: &Model, batch: &[TrainingSample], cfg: &LossConfig) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let prep = model.prepare()?;
    let t = prep.topology;
    let dmn = prep.is_dmn();
    let ns = batch.len() as f64;

    let partials: Vec<Result<Accum>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = Accum::new(t, dmn);
            for (i, s) in chunk.iter().enumerate() {
                let trace = prep.trace(&s.c_p1, &s.c_p2)?;
                let pred = trace.top();
                let rel = relative_sq_error(s, &pred, ci * CHUNK + i)?;
                acc.data_loss += rel;
                acc.sum_rel_err += rel.sqrt();
                let g_top = (pred - s.target) / (ns * s.target.norm_squared());
                backward(&prep, &trace, g_top, &mut acc);
            }
            Ok(acc)
        })
        .collect();

    let mut acc = Accum::new(t, dmn);
    for p in partials {
        acc.add(&p?);
    }

    // weights are sums of children: propagate top-down to the base nodes
    let np = t.num_parents();
    for k in 0..np {
        let (a, b) = Topology::children(k);
        let wk = acc.w_bar[k];
        acc.w_bar[a] += wk;
        acc.w_bar[b] += wk;
    }

    let z = model.z();
    let relu_sum: f64 = z.iter().map(|v| v.max(0.0)).sum();
    let reg_slope = 2.0 * cfg.eta * (relu_sum - cfg.xi);
    let mut grad = Vec::with_capacity(model.param_count());
    for (j, &zj) in z.iter().enumerate() {
        grad.push(if zj > 0.0 { acc.w_bar[np + j] + reg_slope } else { 0.0 });
    }
    match model {
        Model::Dmn(p) => {
            for (k, angles) in p.angles.iter().enumerate() {
                let rb = &acc.r_bar[k];
                for d in rotation_6_partials(angles) {
                    grad.push(frob_dot(rb, &d));
                }
            }
        }
        Model::Imn(p) => {
            for k in 0..np {
                let n_bar = h_matrix_adjoint(&acc.h_bar[k]);
                let (dt, dp) = normal_partials(p.theta[k], p.phi[k]);
                grad.push(n_bar.dot(&dt));
                grad.push(n_bar.dot(&dp));
            }
        }
    }

    let loss = acc.data_loss / (2.0 * ns) + regularizer(model, cfg);
    Ok(LossGrad { loss, grad, sum_rel_err: acc.sum_rel_err })
}

pub fn grad_loss(model: &Model, batch: &[TrainingSample], cfg: &LossConfig) -> Result<Vec<f64>> {
    Ok(loss_and_grad(model, batch, cfg)?.grad)
}
