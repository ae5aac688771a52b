//! Solver-agnostic description of SDPs over symmetric matrix variables, and
//! the two design programs built on it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_model::{AdjacencySpec, GlobalModel};
use crate::linalg::{self, inv_spd, inv_sqrt_spd, sqrt_spd, symmetrize};
use crate::privacy::PrivacySpec;

/// Lower bound used for the information matrices, `Ω ⪰ εI`.
pub const OMEGA_FLOOR: f64 = 1e-9;

/// Eigenvalue ratio below which `W_t` counts as numerically singular.
pub const PROCESS_NOISE_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// A symmetric `dim × dim` decision variable, optionally constrained to
/// `X ⪰ floor · I`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixVariable {
    pub name: String,
    pub dim: usize,
    pub floor: Option<f64>,
}

/// `left · X · right` placed at block offset `(row, col)`. Off-diagonal
/// placements are mirrored; diagonal placements are symmetrized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub var: VarId,
    pub row: usize,
    pub col: usize,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

/// Symmetric matrix affine in the variables: `constant + Σ terms`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineMatrix {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<Term>,
}

impl AffineMatrix {
    pub fn new(constant: DMatrix<f64>) -> Self {
        Self {
            dim: constant.nrows(),
            constant,
            terms: Vec::new(),
        }
    }

    pub fn term(mut self, var: VarId, at: (usize, usize), left: DMatrix<f64>, right: DMatrix<f64>) -> Self {
        self.terms.push(Term {
            var,
            row: at.0,
            col: at.1,
            left,
            right,
        });
        self
    }

    /// Evaluate for concrete variable values.
    pub fn evaluate(&self, values: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for term in &self.terms {
            let blk = &term.left * &values[term.var.0] * &term.right;
            place(&mut out, term.row, term.col, &blk);
        }
        out
    }
}

/// Add `blk` at `(row, col)` and its mirror image.
pub(crate) fn place(out: &mut DMatrix<f64>, row: usize, col: usize, blk: &DMatrix<f64>) {
    let (r, c) = blk.shape();
    if row == col {
        debug_assert_eq!(r, c);
        let s = symmetrize(blk);
        let mut view = out.view_mut((row, col), (r, c));
        view += s;
    } else {
        {
            let mut view = out.view_mut((row, col), (r, c));
            view += blk;
        }
        let mut view = out.view_mut((col, row), (c, r));
        view += blk.transpose();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// `F(x) ⪰ 0`.
    Psd,
    /// `F(x) = 0`.
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub kind: ConstraintKind,
    pub expr: AffineMatrix,
}

/// `min Σ_k ⟨C_k, X_k⟩` subject to affine PSD and equality constraints.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub variables: Vec<MatrixVariable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(VarId, DMatrix<f64>)>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, dim: usize, floor: Option<f64>) -> VarId {
        self.variables.push(MatrixVariable {
            name: name.into(),
            dim,
            floor,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, kind: ConstraintKind, expr: AffineMatrix) {
        self.constraints.push(Constraint {
            name: name.into(),
            kind,
            expr,
        });
    }

    /// Add `⟨weight, X⟩` to the objective.
    pub fn add_objective(&mut self, var: VarId, weight: DMatrix<f64>) {
        self.objective.push((var, weight));
    }

    pub fn objective_value(&self, values: &[DMatrix<f64>]) -> f64 {
        self.objective
            .iter()
            .map(|(v, w)| w.component_mul(&values[v.0]).sum())
            .sum()
    }

    /// Largest violation over all constraints and variable floors:
    /// negative eigenvalue magnitude for PSD parts, max abs entry for equalities.
    pub fn max_violation(&self, values: &[DMatrix<f64>]) -> f64 {
        let mut worst = 0.0_f64;
        for c in &self.constraints {
            let f = c.expr.evaluate(values);
            let v = match c.kind {
                ConstraintKind::Psd => (-linalg::min_eigenvalue(&f)).max(0.0),
                ConstraintKind::Zero => f.amax(),
            };
            worst = worst.max(v);
        }
        for (var, x) in self.variables.iter().zip(values) {
            if let Some(floor) = var.floor {
                worst = worst.max(floor - linalg::min_eigenvalue(x)).max(0.0);
            }
        }
        worst
    }

    /// Structural check: term blocks fit inside their constraint and match
    /// variable sizes.
    pub fn validate(&self) -> Result<()> {
        for c in &self.constraints {
            let e = &c.expr;
            if e.constant.shape() != (e.dim, e.dim) {
                return Err(dim_err(&c.name, "constant", e.dim, &e.constant));
            }
            for t in &e.terms {
                let var = self.variables.get(t.var.0).ok_or_else(|| Error::Dimension {
                    context: c.name.clone(),
                    expected: format!("variable index < {}", self.variables.len()),
                    found: t.var.0.to_string(),
                })?;
                let ok = t.left.ncols() == var.dim
                    && t.right.nrows() == var.dim
                    && t.row + t.left.nrows() <= e.dim
                    && t.col + t.right.ncols() <= e.dim
                    && (t.row != t.col || t.left.nrows() == t.right.ncols());
                if !ok {
                    return Err(Error::Dimension {
                        context: format!("{}: term on {}", c.name, var.name),
                        expected: format!("blocks fitting a {0}x{0} constraint", e.dim),
                        found: format!(
                            "left {}x{}, right {}x{} at ({}, {})",
                            t.left.nrows(),
                            t.left.ncols(),
                            t.right.nrows(),
                            t.right.ncols(),
                            t.row,
                            t.col
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

fn dim_err(name: &str, what: &str, dim: usize, m: &DMatrix<f64>) -> Error {
    Error::Dimension {
        context: format!("{name}: {what}"),
        expected: format!("{dim}x{dim}"),
        found: linalg::shape(m),
    }
}

/// Which design program a [`DesignProblem`] encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    /// Horizon `T`: variables `Ω_0..Ω_T`, `X_0..X_T`.
    Finite(usize),
    Stationary,
}

/// An [`SdpProblem`] together with the roles of its variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignProblem {
    pub problem: SdpProblem,
    pub kind: ProblemKind,
    pub pi: VarId,
    pub omegas: Vec<VarId>,
    pub slacks: Vec<VarId>,
    /// `α_i = κ ρ_i`.
    pub alphas: Vec<f64>,
}

fn process_noise_information(model: &GlobalModel, t: usize) -> Result<DMatrix<f64>> {
    let w = model.process_noise(t);
    let eig = linalg::sym_eigen(w);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > PROCESS_NOISE_RCOND * hi) {
        return Err(Error::SingularProcessNoise { time: t });
    }
    inv_spd(w).ok_or(Error::SingularProcessNoise { time: t })
}

/// `[[X, L], [Lᵀ, Ω]] ⪰ 0`.
fn slack_lmi(l: &DMatrix<f64>, x: VarId, omega: VarId) -> AffineMatrix {
    let (z, m) = l.shape();
    let mut constant = DMatrix::zeros(z + m, z + m);
    place(&mut constant, 0, z, l);
    AffineMatrix::new(constant)
        .term(x, (0, 0), DMatrix::identity(z, z), DMatrix::identity(z, z))
        .term(omega, (z, z), DMatrix::identity(m, m), DMatrix::identity(m, m))
}

/// `[[C'ΠC − Ω⁺ + Ξ, ΞA], [AᵀΞ, Ω + AᵀΞA]] ⪰ 0`.
fn dynamics_lmi(
    a: &DMatrix<f64>,
    c_next: &DMatrix<f64>,
    xi: &DMatrix<f64>,
    pi: VarId,
    omega: VarId,
    omega_next: VarId,
) -> AffineMatrix {
    let m = a.nrows();
    let mut constant = DMatrix::zeros(2 * m, 2 * m);
    place(&mut constant, 0, 0, xi);
    place(&mut constant, 0, m, &(xi * a));
    place(&mut constant, m, m, &(a.transpose() * xi * a));
    AffineMatrix::new(constant)
        .term(pi, (0, 0), c_next.transpose(), c_next.clone())
        .term(omega_next, (0, 0), -DMatrix::identity(m, m), DMatrix::identity(m, m))
        .term(omega, (m, m), DMatrix::identity(m, m), DMatrix::identity(m, m))
}

/// `[[I/α_i² + V_i⁻¹, E_iᵀ], [E_i, V − VΠV]] ⪰ 0` for every participant,
/// stated after the congruence `diag(c_i^{-1/2}, V^{-1/2})` with
/// `c_i = I/α_i² + V_i⁻¹`:
///
/// ```text
/// [[I, c_i^{-1/2} E_iᵀ V^{-1/2}], [V^{-1/2} E_i c_i^{-1/2}, I − V^{1/2} Π V^{1/2}]] ⪰ 0
/// ```
///
/// The feasible set is unchanged. Both diagonal blocks are normalized, which
/// keeps the solver's residuals comparable to the Schur-complement slack that
/// determines `ρ_i‖D_i‖₂`.
fn add_privacy_lmis(
    sdp: &mut SdpProblem,
    model: &GlobalModel,
    alphas: &[f64],
    pi: VarId,
) -> Result<()> {
    let v = model.measurement_noise();
    let (v_sqrt, v_isqrt) = (sqrt_spd(v), inv_sqrt_spd(v));
    let p = model.meas_dim();
    for (i, (part, &alpha)) in model.participants().iter().zip(alphas).enumerate() {
        let pi_dim = part.meas_dim();
        let vi_inv = inv_spd(part.measurement_noise()).ok_or_else(|| Error::Singular {
            what: format!("V of participant {i}"),
            time: None,
        })?;
        let corner = DMatrix::identity(pi_dim, pi_dim) / (alpha * alpha) + vi_inv;
        let mut constant = DMatrix::identity(pi_dim + p, pi_dim + p);
        place(&mut constant, pi_dim, 0, &(&v_isqrt * model.selector(i) * inv_sqrt_spd(&corner)));
        let expr = AffineMatrix::new(constant).term(pi, (pi_dim, pi_dim), -v_sqrt.clone(), v_sqrt.clone());
        sdp.add_constraint(format!("privacy[{i}]"), ConstraintKind::Psd, expr);
    }
    Ok(())
}

fn alphas(model: &GlobalModel, adj: &AdjacencySpec, privacy: &PrivacySpec) -> Result<Vec<f64>> {
    if adj.len() != model.n_participants() {
        return Err(Error::Dimension {
            context: "adjacency bounds".into(),
            expected: model.n_participants().to_string(),
            found: adj.len().to_string(),
        });
    }
    Ok(adj.rho().iter().map(|r| privacy.kappa * r).collect())
}

/// Finite-horizon design program over `t = 0..=horizon`.
///
/// Constraints, in order: slack LMIs for every `t`, the initial equality
/// `Ω_0 = Σ̄₀⁻¹ + C_0ᵀΠC_0`, the dynamics LMIs for `t < horizon`, and one
/// privacy LMI per participant.
pub fn build_finite_horizon_sdp(
    model: &GlobalModel,
    adj: &AdjacencySpec,
    privacy: &PrivacySpec,
    horizon: usize,
) -> Result<DesignProblem> {
    if horizon > model.horizon() {
        return Err(Error::Dimension {
            context: "design horizon".into(),
            expected: format!("<= {}", model.horizon()),
            found: horizon.to_string(),
        });
    }
    let alphas = alphas(model, adj, privacy)?;
    let xis = (0..horizon)
        .map(|t| process_noise_information(model, t))
        .collect::<Result<Vec<_>>>()?;
    let (m, p, z) = (model.state_dim(), model.meas_dim(), model.query_dim());

    let mut sdp = SdpProblem::new();
    let pi = sdp.add_variable("Pi", p, Some(0.0));
    let omegas: Vec<VarId> = (0..=horizon)
        .map(|t| sdp.add_variable(format!("Omega[{t}]"), m, Some(OMEGA_FLOOR)))
        .collect();
    let slacks: Vec<VarId> = (0..=horizon)
        .map(|t| sdp.add_variable(format!("X[{t}]"), z, Some(0.0)))
        .collect();

    let weight = 1.0 / (horizon + 1) as f64;
    for t in 0..=horizon {
        sdp.add_objective(slacks[t], DMatrix::identity(z, z) * weight);
        sdp.add_constraint(
            format!("slack[{t}]"),
            ConstraintKind::Psd,
            slack_lmi(model.query(t), slacks[t], omegas[t]),
        );
    }

    let prior_info = inv_spd(model.initial_covariance()).ok_or_else(|| Error::Singular {
        what: "initial covariance".into(),
        time: Some(0),
    })?;
    let c0 = model.observation(0);
    let initial = AffineMatrix::new(prior_info)
        .term(pi, (0, 0), c0.transpose(), c0.clone())
        .term(omegas[0], (0, 0), -DMatrix::identity(m, m), DMatrix::identity(m, m));
    sdp.add_constraint("initial", ConstraintKind::Zero, initial);

    for t in 0..horizon {
        sdp.add_constraint(
            format!("dynamics[{t}]"),
            ConstraintKind::Psd,
            dynamics_lmi(
                model.transition(t),
                model.observation(t + 1),
                &xis[t],
                pi,
                omegas[t],
                omegas[t + 1],
            ),
        );
    }
    add_privacy_lmis(&mut sdp, model, &alphas, pi)?;
    sdp.validate()?;
    Ok(DesignProblem {
        problem: sdp,
        kind: ProblemKind::Finite(horizon),
        pi,
        omegas,
        slacks,
        alphas,
    })
}

/// Stationary design program: one `Ω`, one `X`, same privacy LMIs.
pub fn build_stationary_sdp(
    model: &GlobalModel,
    adj: &AdjacencySpec,
    privacy: &PrivacySpec,
) -> Result<DesignProblem> {
    if !model.is_time_invariant() {
        return Err(Error::Domain("stationary design requires a time-invariant model".into()));
    }
    let alphas = alphas(model, adj, privacy)?;
    let xi = process_noise_information(model, 0)?;
    let (m, p, z) = (model.state_dim(), model.meas_dim(), model.query_dim());

    let mut sdp = SdpProblem::new();
    let pi = sdp.add_variable("Pi", p, Some(0.0));
    let omega = sdp.add_variable("Omega", m, Some(OMEGA_FLOOR));
    let x = sdp.add_variable("X", z, Some(0.0));
    sdp.add_objective(x, DMatrix::identity(z, z));
    sdp.add_constraint("slack", ConstraintKind::Psd, slack_lmi(model.query(0), x, omega));
    sdp.add_constraint(
        "dynamics",
        ConstraintKind::Psd,
        dynamics_lmi(model.transition(0), model.observation(0), &xi, pi, omega, omega),
    );
    add_privacy_lmis(&mut sdp, model, &alphas, pi)?;
    sdp.validate()?;
    Ok(DesignProblem {
        problem: sdp,
        kind: ProblemKind::Stationary,
        pi,
        omegas: vec![omega],
        slacks: vec![x],
        alphas,
    })
}
