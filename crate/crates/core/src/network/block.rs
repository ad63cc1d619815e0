//! The two-phase laminate building block and its reverse-mode adjoint.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::voigt::{frob_dot, h_matrix, Mat63, Stiffness6, Strain6, Stress6, UnitNormal};

pub type Mat36 = SMatrix<f64, 3, 6>;

/// One evaluated laminate block with the intermediates the adjoint needs.
///
/// `B = f₁f₂ M⁻¹ Hᵀ(C₂−C₁)` with `M = Hᵀ(f₂C₁+f₁C₂)H`, and
/// `C_h = f₁C₁ + f₂C₂ − (C₂−C₁)HB`.
#[derive(Debug, Clone, Copy)]
pub struct Block {
    pub f1: f64,
    pub f2: f64,
    pub h: Mat63,
    pub c_h: Stiffness6,
    pub b: Mat36,
    pub m_inv: Matrix3<f64>,
    pub delta: Stiffness6,
    pub mixed: Stiffness6,
}

/// Cotangents of a block's inputs.
#[derive(Debug, Clone, Copy)]
pub struct BlockAdjoint {
    pub c1: Stiffness6,
    pub c2: Stiffness6,
    pub f1: f64,
    pub f2: f64,
    pub h: Mat63,
}

impl Block {
    pub fn new(c1: &Stiffness6, c2: &Stiffness6, f1: f64, f2: f64, h: &Mat63) -> Result<Self> {
        let mixed = c1 * f2 + c2 * f1;
        let m = h.transpose() * mixed * h;
        let scale = mixed.amax();
        let det = m.determinant();
        if !(det.abs() > 1e-13 * scale * scale * scale) {
            return Err(Error::SingularInterface);
        }
        let m_inv = m.try_inverse().ok_or(Error::SingularInterface)?;
        let delta = c2 - c1;
        let b = m_inv * (h.transpose() * delta) * (f1 * f2);
        let c_h = c1 * f1 + c2 * f2 - delta * (h * b);
        Ok(Self { f1, f2, h: *h, c_h, b, m_inv, delta, mixed })
    }

    /// Reverse-mode sweep: given `∂L/∂C_h`, returns cotangents of
    /// `C₁, C₂, f₁, f₂, H`.
    pub fn adjoint(&self, c1: &Stiffness6, c2: &Stiffness6, g: &Stiffness6) -> BlockAdjoint {
        let (f1, f2, h) = (self.f1, self.f2, &self.h);
        let ht = h.transpose();
        let s = f1 * f2;

        let mut c1_bar = g * f1;
        let mut c2_bar = g * f2;
        let mut f1_bar = frob_dot(g, c1);
        let mut f2_bar = frob_dot(g, c2);

        // C_h −= Δ (H B)
        let hb = h * self.b;
        let mut delta_bar = -(g * hb.transpose());
        let mut h_bar = -(self.delta.transpose() * g * self.b.transpose());
        let b_bar: Mat36 = -(ht * self.delta.transpose() * g);

        // B = s M⁻¹ G
        let s_bar = frob_dot(&b_bar, &self.b) / s;
        let g_bar: Mat36 = self.m_inv.transpose() * b_bar * s;
        let m_bar = -(self.m_inv.transpose() * b_bar * self.b.transpose());

        // G = Hᵀ Δ
        delta_bar += h * g_bar;
        h_bar += self.delta * g_bar.transpose();

        // M = Hᵀ D H
        let mixed_bar = h * m_bar * ht;
        h_bar += self.mixed * h * m_bar.transpose() + self.mixed.transpose() * h * m_bar;

        // D = f₂C₁ + f₁C₂
        c1_bar += mixed_bar * f2;
        c2_bar += mixed_bar * f1;
        f2_bar += frob_dot(&mixed_bar, c1);
        f1_bar += frob_dot(&mixed_bar, c2);

        // Δ = C₂ − C₁
        c2_bar += delta_bar;
        c1_bar -= delta_bar;

        f1_bar += s_bar * f2;
        f2_bar += s_bar * f1;

        BlockAdjoint { c1: c1_bar, c2: c2_bar, f1: f1_bar, f2: f2_bar, h: h_bar }
    }
}

/// Homogenized stiffness `C_h` and strain-jump operator `B` of a laminate with
/// volume fraction `f₁` of phase 1 and interface normal `n`.
pub fn laminate_block(c1: &Stiffness6, c2: &Stiffness6, f1: f64, n: &UnitNormal) -> Result<(Stiffness6, Mat36)> {
    let f2 = 1.0 - f1;
    if f1 * f2 == 0.0 {
        let c = if f1 == 1.0 { *c1 } else { *c2 };
        return Ok((c, Mat36::zeros()));
    }
    let block = Block::new(c1, c2, f1, f2, &h_matrix(n))?;
    Ok((block.c_h, block.b))
}

/// Laminate of two affine laws `σₖ = Cₖεₖ + δσₖ`.
#[derive(Debug, Clone, Copy)]
pub struct AffineBlock {
    pub c_h: Stiffness6,
    pub dsigma_h: Stress6,
    pub b: Mat36,
    pub b_delta: Vector3<f64>,
}

impl AffineBlock {
    /// Completes an evaluated [`Block`] with residual stresses.
    pub fn from_block(block: &Block, ds1: &Stress6, ds2: &Stress6) -> Self {
        let s = block.f1 * block.f2;
        let b_delta = block.m_inv * (block.h.transpose() * (ds2 - ds1)) * s;
        let dsigma_h = ds1 * block.f1 + ds2 * block.f2 - block.delta * (block.h * b_delta);
        Self { c_h: block.c_h, dsigma_h, b: block.b, b_delta }
    }

    /// The jump vector `b = BΔε_h + b_δ`.
    pub fn jump(&self, eps_h: &Strain6) -> Vector3<f64> {
        self.b * eps_h + self.b_delta
    }
}

pub fn laminate_block_affine(
    c1: &Stiffness6,
    c2: &Stiffness6,
    ds1: &Stress6,
    ds2: &Stress6,
    f1: f64,
    n: &UnitNormal,
) -> Result<AffineBlock> {
    let f2 = 1.0 - f1;
    if f1 * f2 == 0.0 {
        let (c_h, dsigma_h) = if f1 == 1.0 { (*c1, *ds1) } else { (*c2, *ds2) };
        return Ok(AffineBlock { c_h, dsigma_h, b: Mat36::zeros(), b_delta: Vector3::zeros() });
    }
    let block = Block::new(c1, c2, f1, f2, &h_matrix(n))?;
    Ok(AffineBlock::from_block(&block, ds1, ds2))
}

/// Child strains from the parent strain and jump vector:
/// `ε₁ = ε_h + Hb/f₁`, `ε₂ = ε_h − Hb/f₂`.
pub fn child_strains(eps_h: &Strain6, b: &Vector3<f64>, f1: f64, f2: f64, h: &Mat63) -> (Strain6, Strain6) {
    let hb = h * b;
    (eps_h + hb / f1, eps_h - hb / f2)
}
