//! Voigt-notation algebra.
//!
//! Components are ordered `(11, 22, 33, 23, 13, 12)`. Stresses carry tensor
//! shear components, strains carry engineering shear (`γ = 2ε`), so `εᵀσ` is
//! the energy density and a stiffness maps an engineering strain to a stress.

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec6 = SVector<f64, 6>;
pub type Stress6 = Vec6;
pub type Strain6 = Vec6;
pub type Stiffness6 = SMatrix<f64, 6, 6>;
/// Interface orientation matrix (6×3).
pub type Mat63 = SMatrix<f64, 6, 3>;

/// Tensor index pair of each Voigt slot.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Voigt slot of a (symmetric) tensor index pair.
pub fn voigt_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) => 3,
        (0, 2) => 4,
        (0, 1) => 5,
        _ => unreachable!("tensor index out of range"),
    }
}

/// A unit vector normal to a laminate interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitNormal(Vector3<f64>);

impl UnitNormal {
    /// Normalizes `v`. Returns `None` for a zero vector.
    pub fn new(v: Vector3<f64>) -> Option<Self> {
        let norm = v.norm();
        (norm > 0.0 && norm.is_finite()).then(|| Self(v / norm))
    }

    /// The interface normal of the axis-aligned laminate.
    pub fn e3() -> Self {
        Self(Vector3::new(0.0, 0.0, 1.0))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// `n = [cos 2πθ sin πφ, sin 2πθ sin πφ, cos πφ]`.
pub fn normal_from_angles(theta: f64, phi: f64) -> UnitNormal {
    let (st, ct) = (2.0 * std::f64::consts::PI * theta).sin_cos();
    let (sp, cp) = (std::f64::consts::PI * phi).sin_cos();
    UnitNormal(Vector3::new(ct * sp, st * sp, cp))
}

/// Partial derivatives `(∂n/∂θ, ∂n/∂φ)` of [`normal_from_angles`].
pub fn normal_partials(theta: f64, phi: f64) -> (Vector3<f64>, Vector3<f64>) {
    use std::f64::consts::PI;
    let (st, ct) = (2.0 * PI * theta).sin_cos();
    let (sp, cp) = (PI * phi).sin_cos();
    let d_theta = Vector3::new(-2.0 * PI * st * sp, 2.0 * PI * ct * sp, 0.0);
    let d_phi = Vector3::new(PI * ct * cp, PI * st * cp, -PI * sp);
    (d_theta, d_phi)
}

/// Orientation matrix `H(n)`: `Hᵀσ` is the traction `σ·n` and `Hb` is the
/// engineering strain of `sym(b ⊗ n)`.
pub fn h_matrix(n: &UnitNormal) -> Mat63 {
    h_matrix_raw(&n.0)
}

pub(crate) fn h_matrix_raw(n: &Vector3<f64>) -> Mat63 {
    let (n1, n2, n3) = (n[0], n[1], n[2]);
    #[rustfmt::skip]
    let h = Mat63::new(
        n1, 0.0, 0.0,
        0.0, n2, 0.0,
        0.0, 0.0, n3,
        0.0, n3, n2,
        n3, 0.0, n1,
        n2, n1, 0.0,
    );
    h
}

/// Pulls a cotangent on `H` back to the normal vector.
pub(crate) fn h_matrix_adjoint(h_bar: &Mat63) -> Vector3<f64> {
    Vector3::new(
        h_bar[(0, 0)] + h_bar[(4, 2)] + h_bar[(5, 1)],
        h_bar[(1, 1)] + h_bar[(3, 2)] + h_bar[(5, 0)],
        h_bar[(2, 2)] + h_bar[(3, 1)] + h_bar[(4, 0)],
    )
}

/// Proper Euler angles, intrinsic Z-X-Z: `Q = Rz(α) Rx(β) Rz(γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn rz(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rz_prime(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn rx(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rx_prime(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    /// The 3×3 rotation `Q`.
    pub fn matrix(&self) -> Matrix3<f64> {
        rz(self.alpha) * rx(self.beta) * rz(self.gamma)
    }

    /// `[∂Q/∂α, ∂Q/∂β, ∂Q/∂γ]`.
    pub fn matrix_partials(&self) -> [Matrix3<f64>; 3] {
        let (za, xb, zg) = (rz(self.alpha), rx(self.beta), rz(self.gamma));
        [rz_prime(self.alpha) * xb * zg, za * rx_prime(self.beta) * zg, za * xb * rz_prime(self.gamma)]
    }

    /// Angles of `Qᵀ`.
    pub fn inverse(&self) -> Self {
        Self::new(-self.gamma, -self.beta, -self.alpha)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

/// Voigt form of the bilinear map `Σ ↦ P₁ Σ P₂ᵀ` acting on stresses,
/// symmetrized over the shear slots. `transform_bilinear(P, P)` is the stress
/// transformation of `Σ ↦ P Σ Pᵀ`.
pub(crate) fn transform_bilinear(p1: &Matrix3<f64>, p2: &Matrix3<f64>) -> Stiffness6 {
    let mut t = Stiffness6::zeros();
    for (row, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        for (col, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
            t[(row, col)] =
                if k == l { p1[(i, k)] * p2[(j, k)] } else { p1[(i, k)] * p2[(j, l)] + p1[(i, l)] * p2[(j, k)] };
        }
    }
    t
}

/// Stress-rotation matrix `R`: `Rσ` is the Voigt form of `QᵀΣQ`.
pub fn rotation_6(angles: &EulerAngles) -> Stiffness6 {
    let p = angles.matrix().transpose();
    transform_bilinear(&p, &p)
}

/// `[∂R/∂α, ∂R/∂β, ∂R/∂γ]`.
pub fn rotation_6_partials(angles: &EulerAngles) -> [Stiffness6; 3] {
    let p = angles.matrix().transpose();
    angles.matrix_partials().map(|dq| {
        let dp = dq.transpose();
        transform_bilinear(&dp, &p) + transform_bilinear(&p, &dp)
    })
}

/// Strain counterpart of [`rotation_6`] (engineering shear): `R⁻ᵀ`.
pub fn strain_rotation_6(angles: &EulerAngles) -> Stiffness6 {
    rotation_6(&angles.inverse()).transpose()
}

pub fn rotate_stress(angles: &EulerAngles, sigma: &Stress6) -> Stress6 {
    rotation_6(angles) * sigma
}

pub fn rotate_strain(angles: &EulerAngles, eps: &Strain6) -> Strain6 {
    strain_rotation_6(angles) * eps
}

/// Rotates a stiffness consistently with [`rotate_stress`] and
/// [`rotate_strain`]: `C' = R C Rᵀ`, which is the fourth-order tensor rotation
/// `C'ᵢⱼₖₗ = Pᵢₚ Pⱼq Pₖᵣ Pₗₛ Cₚqᵣₛ` with `P = Qᵀ`.
pub fn rotate_stiffness(angles: &EulerAngles, c: &Stiffness6) -> Stiffness6 {
    let r = rotation_6(angles);
    r * c * r.transpose()
}

/// Symmetric part.
pub fn sym(c: &Stiffness6) -> Stiffness6 {
    (c + c.transpose()) * 0.5
}

/// Frobenius inner product.
pub fn frob_dot<const R: usize, const C: usize>(a: &SMatrix<f64, R, C>, b: &SMatrix<f64, R, C>) -> f64 {
    a.component_mul(b).sum()
}

/// Checks symmetry (`1e-12` relative) and positive semi-definiteness
/// (eigenvalues `≥ −1e-10·λ_max`).
pub fn check_stiffness(c: &Stiffness6, what: &str) -> Result<()> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPsd { what: what.to_string(), detail: "non-finite entry".into() });
    }
    let scale = c.amax().max(f64::MIN_POSITIVE);
    let asym = (c - c.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::NotPsd { what: what.to_string(), detail: format!("asymmetry {asym:e} exceeds tolerance") });
    }
    let eig = SymmetricEigen::new(sym(c)).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min < -1e-10 * max.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd { what: what.to_string(), detail: format!("eigenvalue {min:e} (max {max:e})") });
    }
    Ok(())
}

/// Upper triangle, row-major (21 entries).
pub fn upper_triangle(c: &Stiffness6) -> [f64; 21] {
    let mut out = [0.0; 21];
    let mut k = 0;
    for i in 0..6 {
        for j in i..6 {
            out[k] = c[(i, j)];
            k += 1;
        }
    }
    out
}

pub fn from_upper_triangle(values: &[f64]) -> Stiffness6 {
    assert_eq!(values.len(), 21);
    let mut c = Stiffness6::zeros();
    let mut k = 0;
    for i in 0..6 {
        for j in i..6 {
            c[(i, j)] = values[k];
            c[(j, i)] = values[k];
            k += 1;
        }
    }
    c
}
