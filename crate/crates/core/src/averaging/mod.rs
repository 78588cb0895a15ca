//! First-order averaging: the planar field on the torus of rotation centers,
//! the drift-direction function `M`, and the resulting predictions.

pub mod bessel;
pub mod equilibria;
pub mod field;
pub mod orbits;
pub mod predict;
pub mod travelling;

use crate::center_bundle::DynamicsError;
use crate::perturbation::SpecError;
use crate::trig::Mode;
use thiserror::Error;

pub use equilibria::{find_equilibria, torus_delta, torus_dist, Eigenvalue, EquilibriumReport};
pub use field::{average_over_phi, average_quadrature, AveragedField, FnField, PlanarField};
pub use orbits::{find_periodic_orbit, OrbitOptions, PeriodicOrbitReport, StSymmetry};
pub use predict::{predict, Prediction, PredictionMode};
pub use travelling::{
    compute_m, compute_m_quadrature, find_m_zeros, resonance_check, solve_cohomological, MZero,
    ResonanceReport, TravellingWaveReport,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AveragingError {
    #[error("omega = 0: use the travelling-wave analysis instead")]
    NoRotation,
    #[error("M vanishes identically: degenerate case")]
    DegenerateM,
    #[error("resonant mode ({}, {}): |n . w| = {margin:e}", mode.n1, mode.n2)]
    Resonance { mode: Mode, margin: f64 },
    #[error("input has nonzero mean {mean}")]
    NonZeroMean { mean: f64 },
    #[error("perturbation is not Z4-symmetric: {}", .0.join(", "))]
    AsymmetricSpec(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}
