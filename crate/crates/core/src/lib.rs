//! Exact Pólya urn laws, their Beta and Dirichlet limits, and the distances
//! between them.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`special`] | log-Gamma, Gamma ratios, Beta density/CDF/quantile |
//! | [`sampling`] | Gamma, Beta and Dirichlet variates |
//! | [`urn`] | urn parameters, simulation, exact and enumerated laws |
//! | [`tables`] | lattice CDF tables `P`, `Q`, `R` and their lemma probes |
//! | [`metrics`] | minimal-Lp, Kolmogorov-Smirnov and Lévy distances |
//! | [`coupling`] | monotone and recursive multicolour couplings |
//! | [`harness`] | n-grid sweeps, log-log rate fits and verdicts |

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]
pub mod coupling;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod special;
pub mod tables;
pub mod urn;

pub use coupling::{CoupledSample, MonotoneCoupling};
pub use error::{Error, Result};
pub use harness::{RateFit, SweepConfig, VerdictReport};
pub use metrics::{DistanceReport, Metric};
pub use special::{BetaParams, DirichletParams};
pub use tables::{DiscreteLaw, ResidualTable};
pub use urn::{UrnParams, UrnState};
