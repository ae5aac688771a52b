//! End-to-end design: build, solve, recover `D`, evaluate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::problem::{build_finite_horizon_sdp, build_stationary_sdp, DesignProblem};
use super::recover::{privacy_feasible_scale, reconstruct_sigma, recover_d, RANK_TOL};
use super::solver::{solve_sdp, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::lin_model::{AdjacencySpec, GlobalModel};
use crate::linalg::{inv_spd, rel_frobenius};
use crate::privacy::{PrivacySpec, ShapingMatrix};
use crate::riccati::{pi_from_d, query_mse, run_covariance_recursion, steady_state_covariance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Design over `t = 0..=T`.
    Finite(usize),
    Stationary,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DesignSettings {
    pub solver: SolverSettings,
    /// Relative eigenvalue cutoff used when factoring `DᵀD`.
    pub rank_tol: f64,
    /// Accepted `max_i |ρ_i‖D_i‖₂ − 1|`.
    pub activity_tol: f64,
    /// `L_t Ω_t⁻¹ C_tᵀ` with max-abs entry at or below this counts as zero.
    pub coupling_tol: f64,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            rank_tol: RANK_TOL,
            activity_tol: 1e-4,
            coupling_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSolution {
    pub horizon: Horizon,
    pub status: SolveStatus,
    /// Optimal information matrix Π*, after feasibility restoration.
    pub pi: DMatrix<f64>,
    /// Factor applied to the solver's Π so that no privacy constraint is
    /// exceeded; 1 when the solver output was already feasible.
    pub feasibility_scale: f64,
    /// Recovered shaping matrix; `Δ₂D = 1` when every privacy LMI is active.
    pub shaping: ShapingMatrix,
    /// `κ Δ₂D`.
    pub noise_std: f64,
    pub omegas: Vec<DMatrix<f64>>,
    /// Finite horizon: covariances rebuilt from Ω*. Stationary: the steady
    /// posterior covariance of the recovered design.
    pub sigmas: Vec<DMatrix<f64>>,
    pub sdp_objective: f64,
    /// Cost of the recovered `D` evaluated by the covariance recursion.
    pub riccati_cost: f64,
    /// `|sdp_objective − riccati_cost| / |sdp_objective|`.
    pub tightness: f64,
    /// `ρ_i ‖D_i‖₂` per participant.
    pub activity: Vec<f64>,
    pub activity_ok: bool,
    /// Max-abs entry of `L_t Ω_t⁻¹ C_tᵀ` per time step.
    pub coupling: Vec<f64>,
    /// False when every coupling entry is numerically zero, in which case the
    /// tightness guarantee does not apply.
    pub coupling_ok: bool,
    /// `‖pi_from_d(D) − Π*‖_F / ‖Π*‖_F`.
    pub round_trip_error: f64,
    /// The same measured on the unrestored solver output; `None` when that
    /// output is not realizable by any `D`.
    pub raw_round_trip_error: Option<f64>,
    pub warnings: Vec<String>,
    pub backend_status: String,
    pub dual_objective: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub max_violation: f64,
    pub iterations: u32,
    pub solve_seconds: f64,
}

/// Solve the design SDP for `horizon` and evaluate the recovered mechanism.
///
/// A finite horizon `T` may be shorter than the model's; the model is then
/// truncated to `t = 0..=T`.
pub fn design_pipeline(
    model: &GlobalModel,
    adj: &AdjacencySpec,
    privacy: &PrivacySpec,
    horizon: Horizon,
    settings: &DesignSettings,
) -> Result<DesignSolution> {
    let (model, design) = match horizon {
        Horizon::Finite(t) => {
            let model = model.truncate(t)?;
            let design = build_finite_horizon_sdp(&model, adj, privacy, t)?;
            (model, design)
        }
        Horizon::Stationary => (model.clone(), build_stationary_sdp(model, adj, privacy)?),
    };
    let DesignProblem {
        problem, pi, omegas, ..
    } = &design;

    let sol = solve_sdp(problem, &settings.solver)?;
    if !sol.status.is_usable() {
        return Err(Error::Solver {
            status: sol.status.to_string(),
            message: format!("design SDP not solved (backend status {})", sol.backend_status),
        });
    }
    let mut status = sol.status;
    let mut warnings = Vec::new();
    if status == SolveStatus::NearOptimal {
        warnings.push(format!(
            "solver returned {} with max violation {:e}",
            sol.backend_status, sol.max_violation
        ));
    }

    let v = model.measurement_noise();
    let blocks = model.meas_block_sizes();
    let raw_pi = &sol.values[pi.0];
    let raw_round_trip_error = recover_d(raw_pi, v, privacy, adj, &blocks, settings.rank_tol)
        .and_then(|d| pi_from_d(&d, v, privacy))
        .map(|p| rel_frobenius(&p, raw_pi))
        .ok();
    // Interior-point output may overshoot the privacy constraints slightly.
    let feasibility_scale = privacy_feasible_scale(raw_pi, v, privacy, adj, &blocks)?;
    if 1.0 - feasibility_scale > settings.activity_tol {
        warnings.push(format!("solver Π exceeded the privacy constraints; scaled by {feasibility_scale}"));
    }
    let pi_star = raw_pi * feasibility_scale;
    let omega_star: Vec<DMatrix<f64>> = omegas.iter().map(|v| sol.values[v.0].clone()).collect();
    let shaping = recover_d(&pi_star, v, privacy, adj, &blocks, settings.rank_tol)?;
    let noise_std = privacy.kappa * shaping.sensitivity();

    let activity = shaping.weighted_block_norms();
    let worst = activity.iter().map(|a| (a - 1.0).abs()).fold(0.0, f64::max);
    let activity_ok = worst <= settings.activity_tol;
    if !activity_ok {
        status = SolveStatus::NearOptimal;
        warnings.push(format!("privacy constraints not all active: max |ρ_i‖D_i‖ − 1| = {worst:e}"));
    }

    let coupling = omega_star
        .iter()
        .enumerate()
        .map(|(t, om)| {
            let sigma = inv_spd(om).ok_or_else(|| Error::NotPositiveDefinite {
                what: format!("Ω at t={t}"),
            })?;
            Ok((model.query(t) * sigma * model.observation(t).transpose()).amax())
        })
        .collect::<Result<Vec<f64>>>()?;
    let coupling_ok = coupling.iter().any(|&c| c > settings.coupling_tol);
    if !coupling_ok {
        warnings.push("L Ω⁻¹ Cᵀ vanishes at every step; the relaxation may not be tight".into());
    }

    let (sigmas, riccati_cost) = match horizon {
        Horizon::Finite(_) => {
            let sigmas = reconstruct_sigma(&omega_star, &pi_star, &model)?;
            let filter = run_covariance_recursion(&model, &shaping, privacy)?;
            (sigmas, filter.cost)
        }
        Horizon::Stationary => {
            let ss = steady_state_covariance(&model, &shaping, privacy)?;
            let cost = query_mse(model.query(0), &ss.posterior);
            (vec![ss.posterior], cost)
        }
    };

    let round_trip_error = rel_frobenius(&pi_from_d(&shaping, v, privacy)?, &pi_star);
    let tightness = (sol.objective - riccati_cost).abs() / sol.objective.abs().max(f64::MIN_POSITIVE);

    Ok(DesignSolution {
        horizon,
        status,
        pi: pi_star,
        feasibility_scale,
        shaping,
        noise_std,
        omegas: omega_star,
        sigmas,
        sdp_objective: sol.objective,
        riccati_cost,
        tightness,
        activity,
        activity_ok,
        coupling,
        coupling_ok,
        round_trip_error,
        raw_round_trip_error,
        warnings,
        backend_status: sol.backend_status,
        dual_objective: sol.dual_objective,
        gap_abs: sol.gap_abs,
        gap_rel: sol.gap_rel,
        max_violation: sol.max_violation,
        iterations: sol.iterations,
        solve_seconds: sol.solve_seconds,
    })
}

