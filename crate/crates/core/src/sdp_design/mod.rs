//! Optimal shaping-matrix synthesis.
//!
//! The design problem is posed over the information matrix
//! `Π = Dᵀ(DVDᵀ + σ²I)⁻¹D` instead of `D` itself. The privacy constraint
//! becomes an LMI in Π, the Riccati equality is relaxed to an LMI in the
//! posterior information `Ω_t = Σ_t⁻¹`, and the resulting SDP is tight: the
//! `D` factored from the optimal Π attains the SDP objective.

mod pipeline;
mod problem;
mod recover;
mod solver;

pub use pipeline::{design_pipeline, DesignSettings, DesignSolution, Horizon};
pub use problem::{
    build_finite_horizon_sdp, build_stationary_sdp, AffineMatrix, Constraint, ConstraintKind,
    DesignProblem, MatrixVariable, ProblemKind, SdpProblem, Term, VarId, OMEGA_FLOOR,
};
pub use recover::{
    equalize_sensitivity, privacy_feasible_scale, reconstruct_sigma, recover_d, r_operator, riccati_residuals, shaping_gram,
    NEGATIVE_EIG_TOL, RANK_TOL,
};
pub use solver::{solve_sdp, SdpSolution, SolveStatus, SolverSettings};
