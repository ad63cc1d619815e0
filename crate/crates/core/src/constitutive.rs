//! Base-phase constitutive laws: orthotropic elasticity and small-strain J2
//! plasticity with combined linear and exponential isotropic hardening.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voigt::{Stiffness6, Strain6, Stress6, Vec6};

/// Nine engineering constants of an orthotropic solid (moduli in GPa).
///
/// `nu_ij` is the Poisson ratio for loading along `i`, so the compliance has
/// `S_ij = -nu_ij / E_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticOrthotropic {
    pub e11: f64,
    pub e22: f64,
    pub e33: f64,
    pub g12: f64,
    pub g13: f64,
    pub g23: f64,
    pub nu12: f64,
    pub nu13: f64,
    pub nu23: f64,
}

impl ElasticOrthotropic {
    pub fn isotropic(e: f64, nu: f64) -> Self {
        let g = e / (2.0 * (1.0 + nu));
        Self { e11: e, e22: e, e33: e, g12: g, g13: g, g23: g, nu12: nu, nu13: nu, nu23: nu }
    }

    pub fn compliance(&self) -> Stiffness6 {
        let mut s = Stiffness6::zeros();
        s[(0, 0)] = 1.0 / self.e11;
        s[(1, 1)] = 1.0 / self.e22;
        s[(2, 2)] = 1.0 / self.e33;
        s[(0, 1)] = -self.nu12 / self.e11;
        s[(0, 2)] = -self.nu13 / self.e11;
        s[(1, 2)] = -self.nu23 / self.e22;
        s[(1, 0)] = s[(0, 1)];
        s[(2, 0)] = s[(0, 2)];
        s[(2, 1)] = s[(1, 2)];
        s[(3, 3)] = 1.0 / self.g23;
        s[(4, 4)] = 1.0 / self.g13;
        s[(5, 5)] = 1.0 / self.g12;
        s
    }

    /// Leading principal minors of the compliance must all be positive.
    pub fn check_admissible(&self) -> Result<()> {
        let consts = [self.e11, self.e22, self.e33, self.g12, self.g13, self.g23];
        if consts.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidMaterial("moduli must be positive and finite".into()));
        }
        let s = self.compliance();
        for k in 1..=6 {
            let minor = s.view((0, 0), (k, k)).determinant();
            // scale-free test: compare against the product of the diagonal
            let diag: f64 = (0..k).map(|i| s[(i, i)]).product();
            if !(minor > 1e-14 * diag) {
                return Err(Error::Admissibility { minor: k, value: minor });
            }
        }
        Ok(())
    }

    pub fn stiffness(&self) -> Result<Stiffness6> {
        stiffness_of(self)
    }
}

/// `C = S⁻¹` from the orthotropic compliance.
pub fn stiffness_of(mat: &ElasticOrthotropic) -> Result<Stiffness6> {
    mat.check_admissible()?;
    let s = mat.compliance();
    // normal block and shear diagonal decouple
    let normal: Matrix3<f64> = s.fixed_view::<3, 3>(0, 0).into_owned();
    let inv = normal.try_inverse().ok_or(Error::Admissibility { minor: 3, value: 0.0 })?;
    let mut c = Stiffness6::zeros();
    c.fixed_view_mut::<3, 3>(0, 0).copy_from(&inv);
    for k in 3..6 {
        c[(k, k)] = 1.0 / s[(k, k)];
    }
    // exact symmetry
    Ok((c + c.transpose()) * 0.5)
}

/// Isotropic elastoplastic solid, yield stress
/// `σ_y(ε̄ᵖ) = σ_y0 + H_lin ε̄ᵖ + K_exp (1 − exp(−m_exp ε̄ᵖ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct J2Plasticity {
    pub e: f64,
    pub nu: f64,
    pub sigma_y0: f64,
    pub h_lin: f64,
    pub k_exp: f64,
    pub m_exp: f64,
}

impl J2Plasticity {
    /// Default hardening: `H_lin = E/50`, `K_exp = σ_y0`, `m_exp = 100`.
    pub fn with_default_hardening(e: f64, nu: f64, sigma_y0: f64) -> Self {
        Self { e, nu, sigma_y0, h_lin: e / 50.0, k_exp: sigma_y0, m_exp: 100.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidMaterial(m.to_string()));
        if !(self.e > 0.0) {
            return bad("E must be positive");
        }
        if !(self.nu > -1.0 && self.nu < 0.5) {
            return bad("Poisson ratio must lie in (-1, 0.5)");
        }
        if !(self.sigma_y0 > 0.0) {
            return bad("initial yield stress must be positive");
        }
        if !(self.h_lin >= 0.0 && self.k_exp >= 0.0 && self.m_exp >= 0.0) {
            return bad("hardening parameters must be non-negative");
        }
        Ok(())
    }

    pub fn shear_modulus(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }

    pub fn bulk_modulus(&self) -> f64 {
        self.e / (3.0 * (1.0 - 2.0 * self.nu))
    }

    pub fn elastic_stiffness(&self) -> Stiffness6 {
        let g = self.shear_modulus();
        let lambda = self.bulk_modulus() - 2.0 * g / 3.0;
        let mut c = Stiffness6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] = lambda;
            }
            c[(i, i)] += 2.0 * g;
            c[(i + 3, i + 3)] = g;
        }
        c
    }

    pub fn yield_stress(&self, eq_plastic: f64) -> f64 {
        self.sigma_y0 + self.h_lin * eq_plastic + self.k_exp * (1.0 - (-self.m_exp * eq_plastic).exp())
    }

    pub fn hardening_slope(&self, eq_plastic: f64) -> f64 {
        self.h_lin + self.k_exp * self.m_exp * (-self.m_exp * eq_plastic).exp()
    }
}

/// History carried by one base node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaterialState {
    pub stress: Stress6,
    pub strain: Strain6,
    pub eq_plastic_strain: f64,
    pub plastic_strain: Strain6,
}

/// Outcome of one constitutive increment.
#[derive(Debug, Clone, Copy)]
pub struct StepResult {
    pub dsigma: Stress6,
    pub state: MaterialState,
    pub tangent: Stiffness6,
}

const MAX_RETURN_ITERS: usize = 50;

/// Von Mises equivalent stress.
pub fn von_mises(sigma: &Stress6) -> f64 {
    let s = deviator(sigma);
    (1.5 * tensor_norm_sq(&s)).sqrt()
}

fn deviator(sigma: &Stress6) -> Stress6 {
    let p = (sigma[0] + sigma[1] + sigma[2]) / 3.0;
    let mut s = *sigma;
    for k in 0..3 {
        s[k] -= p;
    }
    s
}

/// `s:s` for a stress-like Voigt vector.
fn tensor_norm_sq(s: &Stress6) -> f64 {
    s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + 2.0 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5])
}

/// Radial return with the algorithmically consistent tangent.
pub fn j2_step(mat: &J2Plasticity, state: &MaterialState, deps: &Strain6) -> Result<StepResult> {
    let c_el = mat.elastic_stiffness();
    let g = mat.shear_modulus();
    let kappa = mat.bulk_modulus();

    let trial = state.stress + c_el * deps;
    let s_tr = deviator(&trial);
    let q_tr = (1.5 * tensor_norm_sq(&s_tr)).sqrt();
    let sy_n = mat.yield_stress(state.eq_plastic_strain);

    let mut next = *state;
    next.strain += deps;

    if q_tr - sy_n <= 1e-12 * sy_n {
        next.stress = trial;
        return Ok(StepResult { dsigma: c_el * deps, state: next, tangent: c_el });
    }

    // plastic multiplier = increment of equivalent plastic strain
    let mut dgamma = 0.0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_RETURN_ITERS {
        let ep = state.eq_plastic_strain + dgamma;
        residual = q_tr - 3.0 * g * dgamma - mat.yield_stress(ep);
        if residual.abs() <= 1e-13 * sy_n {
            converged = true;
            break;
        }
        let slope = -3.0 * g - mat.hardening_slope(ep);
        dgamma -= residual / slope;
    }
    if !converged {
        return Err(Error::ReturnMapping { iterations: MAX_RETURN_ITERS, residual });
    }

    let s_norm = tensor_norm_sq(&s_tr).sqrt();
    let unit = s_tr / s_norm;
    let ratio = 3.0 * g * dgamma / q_tr;
    let p = (trial[0] + trial[1] + trial[2]) / 3.0;
    let mut sigma = s_tr * (1.0 - ratio);
    for k in 0..3 {
        sigma[k] += p;
    }

    // plastic strain increment in engineering Voigt form
    let mut deps_p = unit * (1.5f64.sqrt() * dgamma);
    for k in 3..6 {
        deps_p[k] *= 2.0;
    }

    let h = mat.hardening_slope(state.eq_plastic_strain + dgamma);
    let mut tangent = Stiffness6::zeros();
    let theta = 2.0 * g * (1.0 - ratio);
    for i in 0..3 {
        for j in 0..3 {
            tangent[(i, j)] = kappa - theta / 3.0;
        }
        tangent[(i, i)] += theta;
        tangent[(i + 3, i + 3)] = 0.5 * theta;
    }
    let coef = 6.0 * g * g * (dgamma / q_tr - 1.0 / (3.0 * g + h));
    tangent += unit * unit.transpose() * coef;

    next.stress = sigma;
    next.eq_plastic_strain += dgamma;
    next.plastic_strain += deps_p;
    Ok(StepResult { dsigma: sigma - state.stress, state: next, tangent })
}

/// A symmetric stiffness `S` with `S·Δε = Δσ`, obtained from the elastic
/// stiffness by a rank-one correction along the inelastic stress defect
/// `d = C_e Δε − Δσ`. Returns `C_e` when the step is elastic.
pub fn secant_stiffness(elastic: &Stiffness6, deps: &Strain6, dsigma: &Stress6) -> Stiffness6 {
    let elastic_response = elastic * deps;
    let defect = elastic_response - dsigma;
    let denom = defect.dot(deps);
    if defect.norm() <= 1e-14 * elastic_response.norm() || !(denom > 0.0) {
        return *elastic;
    }
    elastic - defect * defect.transpose() / denom
}

/// A base-phase constitutive law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Material {
    Elastic(ElasticOrthotropic),
    J2(J2Plasticity),
}

impl Material {
    pub fn elastic_stiffness(&self) -> Result<Stiffness6> {
        match self {
            Material::Elastic(m) => stiffness_of(m),
            Material::J2(m) => {
                m.validate()?;
                Ok(m.elastic_stiffness())
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Material::Elastic(_))
    }
}

/// A material with its elastic stiffness precomputed, ready for repeated
/// evaluation at base nodes.
#[derive(Debug, Clone, Copy)]
pub struct Phase {
    pub material: Material,
    pub elastic: Stiffness6,
}

impl Phase {
    pub fn new(material: Material) -> Result<Self> {
        Ok(Self { elastic: material.elastic_stiffness()?, material })
    }

    pub fn step(&self, state: &MaterialState, deps: &Strain6) -> Result<StepResult> {
        match &self.material {
            Material::Elastic(_) => {
                let dsigma = self.elastic * deps;
                let mut next = *state;
                next.stress += dsigma;
                next.strain += deps;
                Ok(StepResult { dsigma, state: next, tangent: self.elastic })
            }
            Material::J2(m) => j2_step(m, state, deps),
        }
    }

    pub fn secant(&self, deps: &Strain6, dsigma: &Stress6) -> Stiffness6 {
        match &self.material {
            Material::Elastic(_) => self.elastic,
            Material::J2(_) => secant_stiffness(&self.elastic, deps, dsigma),
        }
    }
}

/// Dissipation-type product `Δσ·Δεᵖ` for a committed step.
pub fn plastic_work_increment(dsigma: &Stress6, before: &MaterialState, after: &MaterialState) -> f64 {
    let deps_p: Vec6 = after.plastic_strain - before.plastic_strain;
    dsigma.dot(&deps_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn composite2_fiber() -> ElasticOrthotropic {
        ElasticOrthotropic {
            e11: 72.0,
            e22: 72.0,
            e33: 72.0,
            g12: 29.5,
            g13: 29.5,
            g23: 29.5,
            nu12: 0.22,
            nu13: 0.22,
            nu23: 0.22,
        }
    }

    fn composite1_fiber() -> ElasticOrthotropic {
        ElasticOrthotropic {
            e11: 19.8,
            e22: 19.8,
            e33: 245.0,
            g12: 5.9,
            g13: 29.2,
            g23: 29.2,
            nu12: 0.67,
            nu13: 0.02,
            nu23: 0.02,
        }
    }

    #[test]
    fn composite2_fiber_axial_stiffness() {
        let c = stiffness_of(&composite2_fiber()).unwrap();
        let (e, nu) = (72.0, 0.22);
        let expected = e * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu));
        assert_relative_eq!(c[(0, 0)], expected, max_relative = 1e-12);
        assert_relative_eq!(c[(0, 0)], 82.20, epsilon = 5e-3);
        assert_relative_eq!(c[(3, 3)], 29.5, max_relative = 1e-12);
    }

    #[test]
    fn zero_poisson_is_diagonal() {
        let c = stiffness_of(&ElasticOrthotropic::isotropic(10.0, 0.0)).unwrap();
        let expected = Stiffness6::from_diagonal(&Vec6::new(10.0, 10.0, 10.0, 5.0, 5.0, 5.0));
        assert_relative_eq!(c, expected, epsilon = 1e-12);
    }

    #[test]
    fn composite1_fiber_is_admissible() {
        let c = stiffness_of(&composite1_fiber()).unwrap();
        crate::voigt::check_stiffness(&c, "composite 1 fiber").unwrap();
    }

    #[test]
    fn inadmissible_constants_name_the_minor() {
        let mut m = ElasticOrthotropic::isotropic(10.0, 0.3);
        m.nu12 = 1.2;
        match stiffness_of(&m) {
            Err(Error::Admissibility { minor, .. }) => assert_eq!(minor, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn isotropic_matches_lame() {
        let m = J2Plasticity::with_default_hardening(3.8, 0.387, 0.03);
        let c = stiffness_of(&ElasticOrthotropic::isotropic(3.8, 0.387)).unwrap();
        assert_relative_eq!(c, m.elastic_stiffness(), max_relative = 1e-12);
    }

    #[test]
    fn elastic_step_below_yield() {
        let m = J2Plasticity::with_default_hardening(3.8, 0.387, 0.03);
        let deps = Strain6::new(1e-4, 0.0, 0.0, 0.0, 0.0, 0.0);
        let r = j2_step(&m, &MaterialState::default(), &deps).unwrap();
        assert_eq!(r.tangent, m.elastic_stiffness());
        assert_eq!(r.dsigma, m.elastic_stiffness() * deps);
        assert_eq!(r.state.eq_plastic_strain, 0.0);
    }

    #[test]
    fn zero_increment_is_identity() {
        let m = J2Plasticity::with_default_hardening(2.1, 0.3, 0.029);
        // put the state on the yield surface first
        let deps = Strain6::new(0.01, -0.003, 0.0, 0.004, 0.0, 0.0);
        let s = j2_step(&m, &MaterialState::default(), &deps).unwrap().state;
        let r = j2_step(&m, &s, &Strain6::zeros()).unwrap();
        assert_eq!(r.dsigma, Stress6::zeros());
        assert_eq!(r.state, s);
    }

    #[test]
    fn plastic_step_lands_on_surface() {
        let m = J2Plasticity::with_default_hardening(2.1, 0.3, 0.029);
        let deps = Strain6::new(0.02, 0.0, -0.005, 0.0, 0.01, 0.0);
        let r = j2_step(&m, &MaterialState::default(), &deps).unwrap();
        assert!(r.state.eq_plastic_strain > 0.0);
        let f = von_mises(&r.state.stress) - m.yield_stress(r.state.eq_plastic_strain);
        assert!(f.abs() <= 1e-10, "f = {f:e}");
    }

    #[test]
    fn secant_reproduces_increment() {
        let m = J2Plasticity::with_default_hardening(2.1, 0.3, 0.029);
        let deps = Strain6::new(0.02, 0.0, -0.005, 0.0, 0.01, 0.0);
        let r = j2_step(&m, &MaterialState::default(), &deps).unwrap();
        let s = secant_stiffness(&m.elastic_stiffness(), &deps, &r.dsigma);
        assert_relative_eq!(s * deps, r.dsigma, max_relative = 1e-12);
        assert_relative_eq!(s, s.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut m = J2Plasticity::with_default_hardening(2.1, 0.3, 0.029);
        m.nu = 0.5;
        assert!(m.validate().is_err());
        m.nu = 0.3;
        m.sigma_y0 = 0.0;
        assert!(Material::J2(m).elastic_stiffness().is_err());
    }
}
