//! Deep material networks (DMN) and interaction-based material networks (IMN):
//! structure-preserving reduced-order models of two-phase composites.
//!
//! Networks are trained offline on linear-elastic stiffness triplets and then
//! used online, with nonlinear base-phase laws, to predict the macroscale
//! stress response of the composite.

pub mod constitutive;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod io;
pub mod network;
pub mod online;
pub mod presets;
pub mod training;
pub mod voigt;

pub use error::{Error, Result};
