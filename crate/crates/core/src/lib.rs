//! Posterior Cramér-Rao bound evaluation and hybrid beamforming design for
//! MIMO sensing and integrated sensing-and-communication (ISAC).
//!
//! The crate is organised bottom-up:
//! - [`model`]: arrays, priors, steering vectors, channels, scenarios
//! - [`quadrature`]: prior-weighted integrals over the target angle
//! - [`pcrb`]: Fisher information assembly and a Monte-Carlo oracle
//! - [`cvxkit`]: eigen problems, a barrier QCQP solver, dual water-filling
//! - [`sensing_opt`], [`isac_opt`], [`ofdm_opt`]: alternating optimizers
//! - [`bench`]: benchmark schemes, sweeps and power patterns

pub mod bench;
pub mod cvxkit;
pub mod design;
pub mod error;
pub mod isac_opt;
pub mod linalg;
pub mod model;
pub mod ofdm_opt;
pub mod pcrb;
pub mod quadrature;
pub mod sensing_opt;

pub use design::{HybridDesign, RxCombiner, TxAnalog};
pub use error::{Error, Result};
pub use model::{ArrayConfig, CommChannel, GmmAnglePrior, GmmComponent, ReflectionPrior, RxArchitecture, Scenario};
