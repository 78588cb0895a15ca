//! Spiral-wave dynamics on a square lattice of inhomogeneities.
//!
//! The crate covers the Euclidean group and its lattice subgroup, symmetric
//! trigonometric perturbations, the center-bundle ODE, first-order averaging,
//! a FitzHugh-Nagumo reaction-diffusion solver and spiral-tip analysis.

pub mod averaging;
pub mod center_bundle;
pub mod lattice;
pub mod perturbation;
pub mod rd_fhn;
pub mod tip;
pub mod trig;

pub use center_bundle::{DynamicsError, Lift, SystemParams, TorusState, Trajectory};
pub use lattice::{LatticeSpec, SE2Element, Vec2};
pub use perturbation::{Component, PerturbationSpec, SpecError, TrigTerm};
pub use averaging::{AveragedField, AveragingError, Prediction, PredictionMode};
pub use rd_fhn::{FieldPair, GridSpec, InhomogeneityCoeffs, PdeError};
pub use tip::{MotionClassification, MotionKind, TipError, TipTrajectory};
pub use trig::{Kind, Mode, PhiFactor, PsiFactor, TorusPoly, VecTorusPoly};
