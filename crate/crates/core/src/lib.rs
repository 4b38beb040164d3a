//! Fokker-Planck model predictive control for a stochastic tendon-driven soft finger.
//!
//! The crate evolves the joint-angle probability density of a two-link soft
//! finger on a uniform grid with an implicit Chang-Cooper scheme, picks tendon
//! tensions that drive the density toward a Gaussian reference, and checks the
//! resulting open-loop inputs against Monte-Carlo runs of the full model.

pub mod error;
pub mod finger;
pub mod fpe;
pub mod cli;
pub mod monte_carlo;
pub mod mpc;
pub mod scenario;

pub use error::{Error, Result};
pub use finger::{
    FingerGeometry, FingerState, LogNormalShape, ShapeTable, TendonInput, ViscoelasticParams,
};
pub use fpe::{Grid2D, GridPdf};
pub use mpc::{EpisodeResult, EpisodeSpec, MpcConfig, ReferenceSpec};

