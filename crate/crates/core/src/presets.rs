//! Reference two-phase composites: an elastoplastic matrix (phase 1) with a
//! linear-elastic fiber (phase 2).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constitutive::{ElasticOrthotropic, J2Plasticity, Material, Phase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositePreset {
    Composite1,
    Composite2,
    Composite3,
}

impl CompositePreset {
    pub const ALL: [CompositePreset; 3] = [Self::Composite1, Self::Composite2, Self::Composite3];

    pub fn composite(self) -> Composite {
        let transversely_isotropic_fiber = ElasticOrthotropic {
            e11: 19.8,
            e22: 19.8,
            e33: 245.0,
            g12: 5.9,
            g13: 29.2,
            g23: 29.2,
            nu12: 0.67,
            nu13: 0.02,
            nu23: 0.02,
        };
        let (matrix, fiber) = match self {
            Self::Composite1 => (J2Plasticity::with_default_hardening(3.8, 0.387, 0.01), transversely_isotropic_fiber),
            Self::Composite2 => (
                J2Plasticity::with_default_hardening(2.1, 0.3, 0.029),
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
                },
            ),
            Self::Composite3 => {
                // exponential hardening only
                let mut m = J2Plasticity::with_default_hardening(3.8, 0.387, 0.03);
                m.h_lin = 0.0;
                (m, transversely_isotropic_fiber)
            }
        };
        Composite { name: self.to_string(), matrix: Material::J2(matrix), fiber: Material::Elastic(fiber) }
    }
}

impl fmt::Display for CompositePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Composite1 => "composite1",
            Self::Composite2 => "composite2",
            Self::Composite3 => "composite3",
        };
        f.write_str(s)
    }
}

impl FromStr for CompositePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composite1" => Ok(Self::Composite1),
            "composite2" => Ok(Self::Composite2),
            "composite3" => Ok(Self::Composite3),
            _ => Err(Error::Config(format!("unknown composite `{s}` (expected composite1|composite2|composite3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composite {
    pub name: String,
    pub matrix: Material,
    pub fiber: Material,
}

impl Composite {
    /// `[phase 1, phase 2]` = `[matrix, fiber]`.
    pub fn phases(&self) -> Result<[Phase; 2]> {
        Ok([Phase::new(self.matrix)?, Phase::new(self.fiber)?])
    }

    /// Same composite with the matrix replaced by its elastic part.
    pub fn linearized(&self) -> Result<Composite> {
        let elastic = |m: &Material| -> Result<Material> {
            Ok(match m {
                Material::J2(j) => Material::Elastic(ElasticOrthotropic::isotropic(j.e, j.nu)),
                other => *other,
            })
        };
        Ok(Composite {
            name: format!("{}-elastic", self.name),
            matrix: elastic(&self.matrix)?,
            fiber: elastic(&self.fiber)?,
        })
    }
}
