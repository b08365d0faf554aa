#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Simulation and bound estimation for nonlinearly damped wave and beam
//! equations `u'' + A u + g(u') = h(t)` in a sine spectral basis.

pub mod antiperiodic;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod damping;
pub mod forcing;
pub mod integrator;
pub mod linalg;
pub mod scalar;
pub mod spectral;
pub mod verify;

pub use damping::{Condition, DampingCertificate, DampingError, DampingFamily, DampingOp, DampingTerm, Provenance, Weighting};
pub use forcing::{ForcingError, ForcingKind, ForcingSignal, NormKind};
pub use integrator::{
    contraction_check, forced_contraction_check, hilbert_distance, hilbert_norm, EnergyRecord, Fallback,
    ForcedContraction, Problem, RunError, RunOptions, Scheme, State, StepError, StepResult, StepperConfig, Trajectory,
};
pub use scalar::Real;
pub use spectral::{ModalVector, NodalField, OperatorKind, SpectralError, SpectralOperator, ZKind, ZSandwich};

pub type SpectralOperatorF64 = SpectralOperator<f64>;
pub type SpectralOperatorF32 = SpectralOperator<f32>;
pub type ModalVectorF64 = ModalVector<f64>;
pub type ModalVectorF32 = ModalVector<f32>;
pub type DampingOpF64 = DampingOp<f64>;
pub type DampingOpF32 = DampingOp<f32>;
pub type ForcingSignalF64 = ForcingSignal<f64>;
pub type ForcingSignalF32 = ForcingSignal<f32>;
pub type StateF64 = State<f64>;
pub type StateF32 = State<f32>;
pub type StepperConfigF64 = StepperConfig<f64>;
pub type StepperConfigF32 = StepperConfig<f32>;
