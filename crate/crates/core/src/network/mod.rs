//! Binary-tree material networks.
//!
//! Nodes are stored in heap order: node `k` has children `2k+1` and `2k+2`,
//! the top node is `0` and the `2^N` base nodes occupy `2^N−1 .. 2^(N+1)−1`.
//! In layer/position terms node `n` (1-based) of layer `i` is `2^i − 1 + n − 1`
//! and its children are nodes `2n−1` and `2n` of layer `i+1`.

mod block;
mod forward;

pub use block::{child_strains, laminate_block, laminate_block_affine, AffineBlock, Block, BlockAdjoint, Mat36};
pub use forward::{forward, forward_dmn, forward_imn, ParentKind, Prepared, Trace};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voigt::{normal_from_angles, EulerAngles, UnitNormal};

/// Depth of the binary tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    depth: usize,
}

impl Topology {
    pub const MAX_DEPTH: usize = 16;

    pub fn new(depth: usize) -> Result<Self> {
        if depth < 1 {
            return Err(Error::Config("depth must be ≥ 1".into()));
        }
        if depth > Self::MAX_DEPTH {
            return Err(Error::Config(format!("depth must be ≤ {}", Self::MAX_DEPTH)));
        }
        Ok(Self { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_base(&self) -> usize {
        1 << self.depth
    }

    pub fn num_parents(&self) -> usize {
        self.num_base() - 1
    }

    pub fn num_nodes(&self) -> usize {
        (1 << (self.depth + 1)) - 1
    }

    /// Heap index of base node `j` (0-based).
    pub fn base_node(&self, j: usize) -> usize {
        self.num_parents() + j
    }

    pub fn children(k: usize) -> (usize, usize) {
        (2 * k + 1, 2 * k + 2)
    }

    pub fn parent(k: usize) -> Option<usize> {
        (k > 0).then(|| (k - 1) / 2)
    }

    pub fn is_base(&self, k: usize) -> bool {
        k >= self.num_parents()
    }

    /// Layer of heap node `k` (top layer is 0).
    pub fn layer(k: usize) -> usize {
        (usize::BITS - 1 - (k + 1).leading_zeros()) as usize
    }
}

/// Which phase sits at base node `j`: odd 1-based positions take phase 1.
pub fn base_phase(j: usize) -> usize {
    if j % 2 == 0 {
        0
    } else {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Dmn,
    Imn,
}

impl ModelType {
    pub fn param_count(&self, depth: usize) -> usize {
        let base = 1usize << depth;
        match self {
            ModelType::Dmn => 7 * base - 3,
            ModelType::Imn => 3 * base - 2,
        }
    }
}

impl std::fmt::Display for ModelType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelType::Dmn => "dmn",
            ModelType::Imn => "imn",
        })
    }
}

impl std::str::FromStr for ModelType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dmn" => Ok(ModelType::Dmn),
            "imn" => Ok(ModelType::Imn),
            other => Err(Error::Config(format!("unknown model type '{other}'"))),
        }
    }
}

/// DMN parameters: base activations and Euler angles for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct DmnParams {
    pub topology: Topology,
    pub z: Vec<f64>,
    pub angles: Vec<EulerAngles>,
}

/// IMN parameters: base activations and interface angles `(θ, φ)` per parent.
#[derive(Debug, Clone, PartialEq)]
pub struct ImnParams {
    pub topology: Topology,
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl ImnParams {
    pub fn normal(&self, parent: usize) -> UnitNormal {
        normal_from_angles(self.theta[parent], self.phi[parent])
    }
}

/// A trained or reference material network.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dmn(DmnParams),
    Imn(ImnParams),
}

impl Model {
    pub fn model_type(&self) -> ModelType {
        match self {
            Model::Dmn(_) => ModelType::Dmn,
            Model::Imn(_) => ModelType::Imn,
        }
    }

    pub fn topology(&self) -> Topology {
        match self {
            Model::Dmn(p) => p.topology,
            Model::Imn(p) => p.topology,
        }
    }

    pub fn z(&self) -> &[f64] {
        match self {
            Model::Dmn(p) => &p.z,
            Model::Imn(p) => &p.z,
        }
    }

    pub fn z_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Dmn(p) => &mut p.z,
            Model::Imn(p) => &mut p.z,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Dmn(p) => p.z.len() + 3 * p.angles.len(),
            Model::Imn(p) => p.z.len() + p.theta.len() + p.phi.len(),
        }
    }

    /// Parameters as one vector: `z`, then per node `(α, β, γ)` (DMN) or per
    /// parent `(θ, φ)` (IMN).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.z().to_vec();
        match self {
            Model::Dmn(p) => p.angles.iter().for_each(|a| out.extend_from_slice(&a.as_array())),
            Model::Imn(p) => p.theta.iter().zip(&p.phi).for_each(|(t, f)| {
                out.push(*t);
                out.push(*f);
            }),
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let nz = self.z().len();
        self.z_mut().copy_from_slice(&flat[..nz]);
        let rest = &flat[nz..];
        match self {
            Model::Dmn(p) => {
                for (a, c) in p.angles.iter_mut().zip(rest.chunks_exact(3)) {
                    *a = EulerAngles::new(c[0], c[1], c[2]);
                }
            }
            Model::Imn(p) => {
                for (k, c) in rest.chunks_exact(2).enumerate() {
                    p.theta[k] = c[0];
                    p.phi[k] = c[1];
                }
            }
        }
    }

    /// Random initialization: `z ~ U(2/(3·2^N), 4/(3·2^N))`, Euler angles
    /// `~ U(−π, π)`, interface angles `~ U(0, 1)`.
    pub fn random<R: Rng + ?Sized>(model_type: ModelType, topology: Topology, rng: &mut R) -> Self {
        let nb = topology.num_base() as f64;
        let (lo, hi) = (2.0 / (3.0 * nb), 4.0 / (3.0 * nb));
        let z: Vec<f64> = (0..topology.num_base()).map(|_| rng.random_range(lo..hi)).collect();
        match model_type {
            ModelType::Dmn => {
                let pi = std::f64::consts::PI;
                let angles = (0..topology.num_nodes())
                    .map(|_| {
                        EulerAngles::new(
                            rng.random_range(-pi..pi),
                            rng.random_range(-pi..pi),
                            rng.random_range(-pi..pi),
                        )
                    })
                    .collect();
                Model::Dmn(DmnParams { topology, z, angles })
            }
            ModelType::Imn => {
                let np = topology.num_parents();
                let mut theta = Vec::with_capacity(np);
                let mut phi = Vec::with_capacity(np);
                for _ in 0..np {
                    theta.push(rng.random_range(0.0..1.0));
                    phi.push(rng.random_range(0.0..1.0));
                }
                Model::Imn(ImnParams { topology, z, theta, phi })
            }
        }
    }

    /// Checks that vector lengths agree with the topology.
    pub fn validate(&self) -> Result<()> {
        let t = self.topology();
        let ok = match self {
            Model::Dmn(p) => p.z.len() == t.num_base() && p.angles.len() == t.num_nodes(),
            Model::Imn(p) => {
                p.z.len() == t.num_base() && p.theta.len() == t.num_parents() && p.phi.len() == t.num_parents()
            }
        };
        let finite = self.to_flat().iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::Config("parameter vector lengths do not match the depth".into()));
        }
        if !finite {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn active_nodes(&self) -> usize {
        count_active_nodes(self.z())
    }
}

/// `|{n : zⁿ > 0}|`.
pub fn count_active_nodes(z: &[f64]) -> usize {
    z.iter().filter(|v| **v > 0.0).count()
}

/// Node weights and per-parent volume fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    /// `w` for every node in heap order.
    pub weights: Vec<f64>,
    /// `(f₁, f₂)` per parent; `(0, 0)` for a parent with zero weight.
    pub fractions: Vec<[f64; 2]>,
}

impl WeightField {
    pub fn top(&self) -> f64 {
        self.weights[0]
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.weights[k] > 0.0
    }
}

/// ReLU activation of base nodes and summation up the tree.
pub fn propagate_weights(topology: Topology, z: &[f64]) -> Result<WeightField> {
    assert_eq!(z.len(), topology.num_base());
    let mut weights = vec![0.0; topology.num_nodes()];
    let np = topology.num_parents();
    for (j, &zj) in z.iter().enumerate() {
        weights[np + j] = zj.max(0.0);
    }
    let mut fractions = vec![[0.0, 0.0]; np];
    for k in (0..np).rev() {
        let (a, b) = Topology::children(k);
        let w = weights[a] + weights[b];
        weights[k] = w;
        if w > 0.0 {
            fractions[k] = [weights[a] / w, weights[b] / w];
        }
    }
    if !(weights[0] > 0.0) {
        return Err(Error::DegenerateNetwork);
    }
    Ok(WeightField { weights, fractions })
}
