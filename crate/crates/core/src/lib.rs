//! Differentially private Kalman filtering.
//!
//! A set of participants each produce a measurement stream from an
//! independent linear Gaussian model. An aggregator releases an estimate of a
//! linear combination of their states. Privacy is obtained with the
//! two-stage mechanism
//!
//! ```text
//! y_t ──► D ──► (+ ζ_t, Gaussian mechanism) ──► s_t ──► Kalman filter ──► ẑ_t
//! ```
//!
//! where the static shaping matrix `D` is chosen by semidefinite programming
//! to minimise the mean squared error of `ẑ_t`.
//!
//! Modules:
//! - [`lin_model`]: per-participant and aggregate state-space models.
//! - [`privacy`]: Gaussian tail function, `κ(ε, δ)`, sensitivity and the mechanism.
//! - [`riccati`]: covariance recursions, steady state, scalar closed forms.
//! - [`sdp_design`]: SDP construction and solution, recovery of `D`.
//! - [`simulate`]: Monte Carlo validation of the full pipeline.

pub mod error;
pub mod format;
pub mod linalg;
pub mod lin_model;
pub mod privacy;
pub mod riccati;
pub mod sdp_design;
pub mod simulate;

pub use error::{Error, Result};
pub use lin_model::{build_global, query_from_rows, AdjacencySpec, GlobalModel, IndividualModel};
pub use privacy::{kappa, q_function, q_inverse, sensitivity_l2, MechanismSpec, PrivacySpec, ShapingMatrix};
pub use riccati::{FilterDesign, ScalarScenario};
pub use sdp_design::{design_pipeline, DesignSolution, Horizon};
pub use simulate::{run_plan, SimulationPlan, SimulationReport};

// Pulls in the system BLAS/LAPACK symbols used by the conic solver.
extern crate openblas_src;
