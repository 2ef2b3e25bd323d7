//! Secret-key rates of continuous-variable measurement-device-independent
//! QKD under two-mode Gaussian attacks.
//!
//! The crate covers the whole chain from Gaussian covariance matrices to a
//! finite-size key rate:
//!
//! * [`gaussian`]: covariance matrices, symplectic spectra and entropies;
//! * [`channel`]: the two-mode attack and the relay excess noise it causes;
//! * [`keyrate`]: mutual information, Holevo bound and `K∞`;
//! * [`estimation`]: channel-parameter estimators and confidence bounds;
//! * [`finite_size`]: the finite-block rate;
//! * [`simulator`]: Monte Carlo relay data and estimator validation;
//! * [`optimizer`]: grid-plus-refinement rate maximisation.
//!
//! All quantities are in shot-noise units. The crate is `no_std` and only
//! needs `alloc`; file formats and the command line live in `cvmdi-cli`.

#![no_std]
#![forbid(unsafe_code)]
// `!(x >= lo)` rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channel;
pub mod error;
pub mod estimation;
pub mod finite_size;
pub mod gaussian;
pub mod keyrate;
pub mod optimizer;
pub mod simulator;

pub use nalgebra;

pub use channel::{
    db_to_transmissivity, eve_cm, noise_from_attack, optimal_two_mode_attack, Attack, ChannelParams, NoiseVars,
};
pub use error::{Error, Result};
pub use estimation::{EstimationReport, QuadratureDataset, VarianceMode};
pub use finite_size::{delta_n, finite_size_key_rate, FiniteSizeParams};
pub use gaussian::{entropy_term, symplectic_eigenvalues, tmsv_cm, von_neumann_entropy, CovMatrix};
pub use keyrate::{asymptotic_key_rate, conditional_cms, holevo_bound, mutual_information, ProtocolParams};
pub use optimizer::{optimize_key_rate, OptimizationResult, OptimizationSpec, RateModel};
pub use simulator::{run_estimator_trials, sample_dataset, SimulationSpec, TrialStatistics};
