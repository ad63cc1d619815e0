//! Forward homogenization of stiffness from base nodes to the top node.

use super::block::Block;
use super::{base_phase, propagate_weights, DmnParams, ImnParams, Model, Topology, WeightField};
use crate::error::Result;
use crate::voigt::{h_matrix, rotation_6, Mat63, Stiffness6, UnitNormal};

/// How a parent node combines its children.
#[derive(Debug, Clone)]
pub enum ParentKind {
    /// Both children have zero weight.
    Dead,
    /// Exactly one child is active; its stiffness passes through with `f = 1`.
    PassThrough {
        child: usize,
    },
    Block(Block),
}

/// Parameter-dependent quantities shared by every sample of a batch.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    pub model: &'a Model,
    pub topology: Topology,
    pub weights: WeightField,
    /// Stress rotation per node (DMN only).
    pub rotations: Vec<Stiffness6>,
    /// Orientation matrix per parent (`H(e₃)` for every DMN parent).
    pub h: Vec<Mat63>,
}

/// Per-node stiffnesses recorded during one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Stiffness before the node's rotation (equal to `c` for IMN).
    pub c_bar: Vec<Stiffness6>,
    /// Stiffness seen by the parent.
    pub c: Vec<Stiffness6>,
    pub parents: Vec<ParentKind>,
}

impl Trace {
    pub fn top(&self) -> Stiffness6 {
        self.c[0]
    }
}

impl Model {
    pub fn prepare(&self) -> Result<Prepared<'_>> {
        self.validate()?;
        let topology = self.topology();
        let weights = propagate_weights(topology, self.z())?;
        let (rotations, h) = match self {
            Model::Dmn(p) => {
                let rot = p.angles.iter().map(rotation_6).collect();
                let h_e3 = h_matrix(&UnitNormal::e3());
                (rot, vec![h_e3; topology.num_parents()])
            }
            Model::Imn(p) => {
                let h = (0..topology.num_parents()).map(|k| h_matrix(&p.normal(k))).collect();
                (Vec::new(), h)
            }
        };
        Ok(Prepared { model: self, topology, weights, rotations, h })
    }

    /// Homogenized stiffness for phase stiffnesses `c_p1`, `c_p2`.
    pub fn forward(&self, c_p1: &Stiffness6, c_p2: &Stiffness6) -> Result<Stiffness6> {
        self.prepare()?.forward(c_p1, c_p2)
    }
}

impl Prepared<'_> {
    pub fn is_dmn(&self) -> bool {
        !self.rotations.is_empty()
    }

    fn rotate(&self, k: usize, c: &Stiffness6) -> Stiffness6 {
        if self.is_dmn() {
            let r = &self.rotations[k];
            r * c * r.transpose()
        } else {
            *c
        }
    }

    /// Forward pass for arbitrary base-node stiffnesses.
    pub fn trace_with<F>(&self, base: F) -> Result<Trace>
    where
        F: Fn(usize) -> Stiffness6,
    {
        let t = self.topology;
        let nn = t.num_nodes();
        let np = t.num_parents();
        let w = &self.weights.weights;
        let mut c_bar = vec![Stiffness6::zeros(); nn];
        let mut c = vec![Stiffness6::zeros(); nn];
        let mut parents = vec![ParentKind::Dead; np];

        for j in 0..t.num_base() {
            let k = np + j;
            if w[k] > 0.0 {
                c_bar[k] = base(j);
                c[k] = self.rotate(k, &c_bar[k]);
            }
        }
        for k in (0..np).rev() {
            let (a, b) = Topology::children(k);
            let kind = match (w[a] > 0.0, w[b] > 0.0) {
                (false, false) => ParentKind::Dead,
                (true, false) => ParentKind::PassThrough { child: a },
                (false, true) => ParentKind::PassThrough { child: b },
                (true, true) => {
                    let [f1, f2] = self.weights.fractions[k];
                    ParentKind::Block(Block::new(&c[a], &c[b], f1, f2, &self.h[k])?)
                }
            };
            match &kind {
                ParentKind::Dead => {}
                ParentKind::PassThrough { child } => {
                    c_bar[k] = c[*child];
                    c[k] = self.rotate(k, &c_bar[k]);
                }
                ParentKind::Block(blk) => {
                    c_bar[k] = blk.c_h;
                    c[k] = self.rotate(k, &c_bar[k]);
                }
            }
            parents[k] = kind;
        }
        Ok(Trace { c_bar, c, parents })
    }

    /// Forward pass with odd (1-based) base nodes set to phase 1.
    pub fn trace(&self, c_p1: &Stiffness6, c_p2: &Stiffness6) -> Result<Trace> {
        self.trace_with(|j| if base_phase(j) == 0 { *c_p1 } else { *c_p2 })
    }

    pub fn forward(&self, c_p1: &Stiffness6, c_p2: &Stiffness6) -> Result<Stiffness6> {
        Ok(self.trace(c_p1, c_p2)?.top())
    }
}

pub fn forward(model: &Model, c_p1: &Stiffness6, c_p2: &Stiffness6) -> Result<Stiffness6> {
    model.forward(c_p1, c_p2)
}

pub fn forward_dmn(params: &DmnParams, c_p1: &Stiffness6, c_p2: &Stiffness6) -> Result<Stiffness6> {
    Model::Dmn(params.clone()).forward(c_p1, c_p2)
}

pub fn forward_imn(params: &ImnParams, c_p1: &Stiffness6, c_p2: &Stiffness6) -> Result<Stiffness6> {
    Model::Imn(params.clone()).forward(c_p1, c_p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{stiffness_of, ElasticOrthotropic};
    use crate::network::{laminate_block, ModelType};
    use crate::voigt::{rotate_stiffness, EulerAngles};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn phases() -> (Stiffness6, Stiffness6) {
        let c1 = stiffness_of(&ElasticOrthotropic::isotropic(3.8, 0.387)).unwrap();
        let c2 = stiffness_of(&ElasticOrthotropic {
            e11: 19.8,
            e22: 19.8,
            e33: 245.0,
            g12: 5.9,
            g13: 29.2,
            g23: 29.2,
            nu12: 0.67,
            nu13: 0.02,
            nu23: 0.02,
        })
        .unwrap();
        (c1, c2)
    }

    #[test]
    fn identical_phases_zero_angles_identity() {
        let (c, _) = phases();
        let t = Topology::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let Model::Dmn(mut p) = Model::random(ModelType::Dmn, t, &mut rng) else { unreachable!() };
        p.angles.iter_mut().for_each(|a| *a = EulerAngles::default());
        assert_relative_eq!(forward_dmn(&p, &c, &c).unwrap(), c, max_relative = 1e-12);
    }

    #[test]
    fn identical_phases_follow_top_path_rotations() {
        // with equal phases each block is the identity, so only rotations act
        let (_, c) = phases();
        let t = Topology::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let Model::Dmn(p) = Model::random(ModelType::Dmn, t, &mut rng) else { unreachable!() };
        let mut p = p;
        // make every base node see the same rotated stiffness
        for k in 3..7 {
            p.angles[k] = p.angles[3];
        }
        p.angles[2] = p.angles[1];
        let expected = [3usize, 1, 0].iter().fold(c, |acc, &k| rotate_stiffness(&p.angles[k], &acc));
        assert_relative_eq!(forward_dmn(&p, &c, &c).unwrap(), expected, epsilon = 1e-10 * c.amax());
    }

    #[test]
    fn imn_identical_phases() {
        let (c, _) = phases();
        let t = Topology::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let Model::Imn(p) = Model::random(ModelType::Imn, t, &mut rng) else { unreachable!() };
        assert_relative_eq!(forward_imn(&p, &c, &c).unwrap(), c, max_relative = 1e-10);
    }

    #[test]
    fn n1_dmn_equals_single_laminate_and_imn() {
        let (c1, c2) = phases();
        let t = Topology::new(1).unwrap();
        let dmn = DmnParams { topology: t, z: vec![1.0, 1.0], angles: vec![EulerAngles::default(); 3] };
        let imn = ImnParams { topology: t, z: vec![1.0, 1.0], theta: vec![0.3], phi: vec![0.0] };
        let (expected, _) = laminate_block(&c1, &c2, 0.5, &UnitNormal::e3()).unwrap();
        assert_relative_eq!(forward_dmn(&dmn, &c1, &c2).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(forward_imn(&imn, &c1, &c2).unwrap(), expected, max_relative = 1e-13);
    }

    #[test]
    fn single_active_node_returns_phase() {
        let (c1, c2) = phases();
        let t = Topology::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let Model::Imn(mut p) = Model::random(ModelType::Imn, t, &mut rng) else { unreachable!() };
        p.z = vec![-1.0; 8];
        p.z[5] = 0.4;
        assert_eq!(forward_imn(&p, &c1, &c2).unwrap(), c2);
        p.z[5] = -0.4;
        p.z[2] = 0.4;
        assert_eq!(forward_imn(&p, &c1, &c2).unwrap(), c1);
    }

    #[test]
    fn phase_swap_with_mirrored_activations() {
        // swapping phases and mirroring the tree left-right gives the same laminate
        let (c1, c2) = phases();
        let t = Topology::new(2).unwrap();
        let p = ImnParams {
            topology: t,
            z: vec![0.2, 0.5, 0.1, 0.7],
            theta: vec![0.1, 0.2, 0.3],
            phi: vec![0.4, 0.5, 0.6],
        };
        let mirrored = ImnParams {
            topology: t,
            z: vec![0.7, 0.1, 0.5, 0.2],
            theta: vec![0.1, 0.3, 0.2],
            phi: vec![0.4, 0.6, 0.5],
        };
        let a = forward_imn(&p, &c1, &c2).unwrap();
        let b = forward_imn(&mirrored, &c2, &c1).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-11);

        let dmn = DmnParams {
            topology: t,
            z: p.z.clone(),
            angles: (0..7).map(|k| EulerAngles::new(0.1 * k as f64, 0.2, -0.3 * k as f64)).collect(),
        };
        let mut mirrored_angles = dmn.angles.clone();
        mirrored_angles.swap(1, 2);
        mirrored_angles.swap(3, 6);
        mirrored_angles.swap(4, 5);
        let dmn_m = DmnParams { topology: t, z: mirrored.z.clone(), angles: mirrored_angles };
        let a = forward_dmn(&dmn, &c1, &c2).unwrap();
        let b = forward_dmn(&dmn_m, &c2, &c1).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-11);
    }
}
