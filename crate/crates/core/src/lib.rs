pub mod analysis;
pub mod baseline;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod nv;
pub mod persist;
pub mod rl;
pub mod scalar;
pub mod toy;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::{Complex, Real};

// f64 instantiations for callers that do not care about the scalar.
pub type QuantumState = dynamics::QuantumState<f64>;
pub type DensityMatrix = dynamics::DensityMatrix<f64>;
pub type HermitianOperator = dynamics::HermitianOperator<f64>;
pub type NvModel = nv::NvModel<f64>;
pub type Protocol = nv::Protocol<f64>;
pub type ControlStep = nv::ControlStep<f64>;
pub type TargetAngles = nv::TargetAngles<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type GaussianPolicy = nn::GaussianPolicy<f64>;
pub type Trainer = rl::trainer::Trainer<f64>;
pub type LandscapeGrid = analysis::LandscapeGrid<f64>;
