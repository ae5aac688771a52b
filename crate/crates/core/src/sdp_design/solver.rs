//! Conic interior-point backend for [`SdpProblem`].
//!
//! Each symmetric variable is parametrized by its upper triangle. PSD
//! constraints map to Clarabel's scaled triangular PSD cone (column-major
//! upper triangle, off-diagonals times √2), equalities to the zero cone.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::problem::{place, ConstraintKind, SdpProblem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Largest duality gap (absolute or relative) reported as optimal.
    pub gap: f64,
    /// Largest constraint violation reported as optimal, measured after the
    /// solve on the original (unscaled) constraints.
    pub max_violation: f64,
    /// Gap and residual tolerance requested from the backend. Kept below
    /// `gap` because the recovered `D` inherits the error of Π.
    pub target_accuracy: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            gap: 1e-8,
            max_violation: 1e-8,
            target_accuracy: 1e-10,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Failed,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NearOptimal => "near_optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Backend status, verbatim.
    pub backend_status: String,
    /// One value per problem variable, in declaration order.
    pub values: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub dual_objective: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub max_violation: f64,
    pub iterations: u32,
    pub solve_seconds: f64,
}

/// Column-major upper-triangle index of `(row, col)`, `row <= col`.
fn tri_index(row: usize, col: usize) -> usize {
    col * (col + 1) / 2 + row
}

fn tri_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Sparse triplet accumulator for the constraint matrix.
#[derive(Default)]
struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }
}

/// Write `−vec(G)` for the upper triangle of symmetric `g` into column `col`.
fn push_vec(t: &mut Triplets, row0: usize, col: usize, g: &DMatrix<f64>, scaled: bool) {
    let n = g.nrows();
    for j in 0..n {
        for i in 0..=j {
            let v = g[(i, j)];
            if v != 0.0 {
                let s = if scaled && i != j { std::f64::consts::SQRT_2 } else { 1.0 };
                t.push(row0 + tri_index(i, j), col, -s * v);
            }
        }
    }
}

fn vec_of(g: &DMatrix<f64>, scaled: bool) -> Vec<f64> {
    let n = g.nrows();
    let mut out = vec![0.0; tri_len(n)];
    for j in 0..n {
        for i in 0..=j {
            let s = if scaled && i != j { std::f64::consts::SQRT_2 } else { 1.0 };
            out[tri_index(i, j)] = s * g[(i, j)];
        }
    }
    out
}

/// Basis matrix `S_ab` of the upper-triangle parametrization.
fn basis(dim: usize, a: usize, b: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(dim, dim);
    s[(a, b)] = 1.0;
    s[(b, a)] = 1.0;
    s
}

/// Solve with Clarabel.
pub fn solve_sdp(problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
    problem.validate()?;
    let start = Instant::now();

    let mut offsets = Vec::with_capacity(problem.variables.len());
    let mut n = 0;
    for v in &problem.variables {
        offsets.push(n);
        n += tri_len(v.dim);
    }

    let mut q = vec![0.0; n];
    for (var, w) in &problem.objective {
        let dim = problem.variables[var.0].dim;
        for b in 0..dim {
            for a in 0..=b {
                let coef = if a == b { w[(a, a)] } else { w[(a, b)] + w[(b, a)] };
                q[offsets[var.0] + tri_index(a, b)] += coef;
            }
        }
    }

    let mut trip = Triplets::default();
    let mut rhs: Vec<f64> = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    // Equalities first, then PSD cones; Clarabel accepts any order but this
    // keeps zero cones contiguous.
    let ordered = problem
        .constraints
        .iter()
        .filter(|c| c.kind == ConstraintKind::Zero)
        .chain(problem.constraints.iter().filter(|c| c.kind == ConstraintKind::Psd));
    for c in ordered {
        let dim = c.expr.dim;
        let scaled = c.kind == ConstraintKind::Psd;
        let row0 = rhs.len();
        rhs.extend(vec_of(&c.expr.constant, scaled));
        for term in &c.expr.terms {
            let vdim = problem.variables[term.var.0].dim;
            for b in 0..vdim {
                for a in 0..=b {
                    let blk = &term.left * basis(vdim, a, b) * &term.right;
                    if blk.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let mut g = DMatrix::zeros(dim, dim);
                    place(&mut g, term.row, term.col, &blk);
                    push_vec(&mut trip, row0, offsets[term.var.0] + tri_index(a, b), &g, scaled);
                }
            }
        }
        cones.push(match c.kind {
            ConstraintKind::Zero => SupportedConeT::ZeroConeT(tri_len(dim)),
            ConstraintKind::Psd => SupportedConeT::PSDTriangleConeT(dim),
        });
    }
    for (k, v) in problem.variables.iter().enumerate() {
        let Some(floor) = v.floor else { continue };
        let row0 = rhs.len();
        rhs.extend(vec_of(&(DMatrix::<f64>::identity(v.dim, v.dim) * -floor), true));
        for b in 0..v.dim {
            for a in 0..=b {
                push_vec(&mut trip, row0, offsets[k] + tri_index(a, b), &basis(v.dim, a, b), true);
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(v.dim));
    }

    let a_mat = CscMatrix::new_from_triplets(rhs.len(), n, trip.rows, trip.cols, trip.vals);
    let p_mat = CscMatrix::<f64>::zeros((n, n));
    let target = settings.target_accuracy.min(settings.gap);
    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(settings.verbose)
        .max_iter(settings.max_iter)
        .tol_gap_abs(target)
        .tol_gap_rel(target)
        .tol_feas(target)
        .direct_solve_method("faer".to_string())
        .build()
        .map_err(|e| Error::Solver {
            status: "settings".into(),
            message: format!("{e:?}"),
        })?;
    let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &rhs, &cones, clarabel_settings).map_err(|e| {
        Error::Solver {
            status: "setup".into(),
            message: format!("{e:?}"),
        }
    })?;
    solver.solve();

    let sol = &solver.solution;
    let info = &solver.info;
    let values: Vec<DMatrix<f64>> = problem
        .variables
        .iter()
        .zip(&offsets)
        .map(|(v, &off)| {
            let mut m = DMatrix::zeros(v.dim, v.dim);
            for b in 0..v.dim {
                for a in 0..=b {
                    let x = sol.x[off + tri_index(a, b)];
                    m[(a, b)] = x;
                    m[(b, a)] = x;
                }
            }
            m
        })
        .collect();
    let max_violation = problem.max_violation(&values);
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved
            if max_violation <= settings.max_violation && info.gap_abs.min(info.gap_rel) <= settings.gap =>
        {
            SolveStatus::Optimal
        }
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::NearOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        _ => SolveStatus::Failed,
    };
    Ok(SdpSolution {
        status,
        backend_status: format!("{:?}", sol.status),
        objective: problem.objective_value(&values),
        values,
        dual_objective: sol.obj_val_dual,
        gap_abs: info.gap_abs,
        gap_rel: info.gap_rel,
        max_violation,
        iterations: sol.iterations,
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}
