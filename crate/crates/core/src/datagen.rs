//! Random orthotropic phases and teacher-network targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constitutive::ElasticOrthotropic;
use crate::dataset::{Dataset, Provenance, TrainingSample};
use crate::error::{Error, Result};
use crate::network::Model;
use crate::voigt::{check_stiffness, sym, Stiffness6};

const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    #[default]
    Orthotropic,
    /// One Young's modulus and Poisson ratio per sample; `G = E / 2(1+ν)`.
    Isotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Young's moduli bounds in GPa, sampled log-uniformly.
    pub youngs: [f64; 2],
    /// Shear moduli bounds in GPa, sampled log-uniformly.
    pub shear: [f64; 2],
    /// Poisson ratio bounds, sampled uniformly.
    pub poisson: [f64; 2],
    pub symmetry: Symmetry,
    pub num_samples: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            youngs: [1.0, 500.0],
            shear: [0.3, 200.0],
            poisson: [0.0, 0.45],
            symmetry: Symmetry::Orthotropic,
            num_samples: 500,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
        if !positive(self.youngs) || !positive(self.shear) {
            return Err(Error::Config("moduli bounds must satisfy 0 < lo ≤ hi".into()));
        }
        let [plo, phi] = self.poisson;
        if !(plo > -1.0 && plo <= phi && phi < 0.5) {
            return Err(Error::Config("Poisson bounds must satisfy -1 < lo ≤ hi < 0.5".into()));
        }
        Ok(())
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.random_range(lo..hi)
}

pub fn sample_constants<R: Rng + ?Sized>(cfg: &SamplingConfig, rng: &mut R) -> Result<ElasticOrthotropic> {
    for _ in 0..MAX_REJECTIONS {
        let mat = match cfg.symmetry {
            Symmetry::Isotropic => {
                ElasticOrthotropic::isotropic(log_uniform(rng, cfg.youngs), uniform(rng, cfg.poisson))
            }
            Symmetry::Orthotropic => ElasticOrthotropic {
                e11: log_uniform(rng, cfg.youngs),
                e22: log_uniform(rng, cfg.youngs),
                e33: log_uniform(rng, cfg.youngs),
                g12: log_uniform(rng, cfg.shear),
                g13: log_uniform(rng, cfg.shear),
                g23: log_uniform(rng, cfg.shear),
                nu12: uniform(rng, cfg.poisson),
                nu13: uniform(rng, cfg.poisson),
                nu23: uniform(rng, cfg.poisson),
            },
        };
        if mat.check_admissible().is_ok() {
            return Ok(mat);
        }
    }
    Err(Error::Config(format!("{MAX_REJECTIONS} consecutive samples had inadmissible constants")))
}

/// Stiffness of a random admissible orthotropic material.
pub fn sample_orthotropic<R: Rng + ?Sized>(cfg: &SamplingConfig, rng: &mut R) -> Result<Stiffness6> {
    for _ in 0..MAX_REJECTIONS {
        let c = sample_constants(cfg, rng)?.stiffness()?;
        if check_stiffness(&c, "sampled stiffness").is_ok() {
            return Ok(c);
        }
    }
    Err(Error::Config(format!("{MAX_REJECTIONS} consecutive samples were not positive definite")))
}

/// Samples phase pairs and labels them with the teacher's homogenized stiffness.
pub fn generate_dataset(oracle: &Model, cfg: &SamplingConfig) -> Result<Dataset> {
    cfg.validate()?;
    let prep = oracle.prepare()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.num_samples);
    for _ in 0..cfg.num_samples {
        let c_p1 = sample_orthotropic(cfg, &mut rng)?;
        let c_p2 = sample_orthotropic(cfg, &mut rng)?;
        let target = sym(&prep.forward(&c_p1, &c_p2)?);
        samples.push(TrainingSample { c_p1, c_p2, target });
    }
    let t = oracle.topology();
    let provenance = Provenance { oracle: format!("{}-N{}", oracle.model_type(), t.depth()), seed: cfg.seed };
    Ok(Dataset { samples, provenance })
}
