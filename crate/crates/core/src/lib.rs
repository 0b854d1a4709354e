//! Quantum ruler simulator core.

// `!(x > 0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod ion;
pub mod lattice;
pub mod linalg;
pub mod measurement;
pub mod oracle;
pub mod quad;
pub mod response;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use dynamics::{FForm, SwitchingProfile};
pub use response::Scenario;

pub type RulerConfigF64 = lattice::RulerConfig<f64>;
pub type RulerConfigF32 = lattice::RulerConfig<f32>;
pub type ModeBasisF64 = lattice::ModeBasis<f64>;
pub type ModeBasisF32 = lattice::ModeBasis<f32>;
pub type IonPhysicalF64 = ion::IonPhysical<f64>;
pub type IonPhysicalF32 = ion::IonPhysical<f32>;
pub type IonModelF64 = ion::IonModel<f64>;
pub type IonModelF32 = ion::IonModel<f32>;
pub type ResponseProfileF64 = response::ResponseProfile<f64>;
pub type ResponseProfileF32 = response::ResponseProfile<f32>;
pub type GaussianAmplitudeF64 = measurement::GaussianAmplitude<f64>;
pub type GaussianAmplitudeF32 = measurement::GaussianAmplitude<f32>;
pub type DoubledKernelF64 = measurement::DoubledKernel<f64>;
pub type DoubledKernelF32 = measurement::DoubledKernel<f32>;
pub type CStarReportF64 = measurement::CStarReport<f64>;
pub type CStarReportF32 = measurement::CStarReport<f32>;
