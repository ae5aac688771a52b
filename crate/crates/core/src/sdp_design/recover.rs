//! Turning SDP solutions back into mechanisms and covariance sequences.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lin_model::{AdjacencySpec, GlobalModel};
use crate::linalg::{self, gram_factor, inv, inv_spd, symmetrize};
use crate::privacy::{PrivacySpec, ShapingMatrix};

/// Default relative eigenvalue cutoff when factoring `DᵀD`.
pub const RANK_TOL: f64 = 1e-8;

/// Negative eigenvalues of `DᵀD` beyond this (relative to `max(1, λ_max)`)
/// mean Π is not realizable.
pub const NEGATIVE_EIG_TOL: f64 = 1e-6;

/// Recover a shaping matrix from an information matrix Π by factoring
///
/// ```text
/// DᵀD = κ² [(V − VΠV)⁻¹ − V⁻¹]
/// ```
///
/// Eigenpairs below `rank_tol · λ_max` are dropped, so `q` is the numerical
/// rank. When Π saturates every privacy LMI the result has `Δ₂D = 1`.
pub fn recover_d(
    pi: &DMatrix<f64>,
    v: &DMatrix<f64>,
    privacy: &PrivacySpec,
    adj: &AdjacencySpec,
    block_sizes: &[usize],
    rank_tol: f64,
) -> Result<ShapingMatrix> {
    let gram = shaping_gram(pi, v, privacy)?;
    let eig = linalg::sym_eigen(&gram);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if lo < -NEGATIVE_EIG_TOL * hi.max(1.0) {
        return Err(Error::InfeasibleInformation(format!(
            "κ²[(V − VΠV)⁻¹ − V⁻¹] has eigenvalue {lo:e}"
        )));
    }
    let d = gram_factor(&gram, rank_tol);
    if d.nrows() == 0 {
        return Err(Error::DegenerateMechanism);
    }
    ShapingMatrix::new(d, block_sizes.to_vec(), adj)
}

/// Largest `θ ∈ [0, 1]` such that `θΠ` satisfies every privacy constraint,
/// i.e. `max_i ρ_i‖D_i‖₂ ≤ 1` for the shaping matrix realizing `θΠ`.
///
/// Returns 1 when Π is already feasible. The feasible set is convex and
/// contains 0, so every `θ` below the result is feasible as well.
pub fn privacy_feasible_scale(
    pi: &DMatrix<f64>,
    v: &DMatrix<f64>,
    privacy: &PrivacySpec,
    adj: &AdjacencySpec,
    block_sizes: &[usize],
) -> Result<f64> {
    if block_sizes.len() != adj.len() || block_sizes.iter().sum::<usize>() != v.nrows() {
        return Err(Error::Dimension {
            context: "measurement blocks".into(),
            expected: format!("{} blocks summing to {}", adj.len(), v.nrows()),
            found: format!("{block_sizes:?}"),
        });
    }
    // Squared worst activity; an unrealizable Π counts as infeasible.
    let worst = |theta: f64| -> f64 {
        let Ok(gram) = shaping_gram(&(pi * theta), v, privacy) else {
            return f64::INFINITY;
        };
        let mut off = 0;
        let mut worst = 0.0_f64;
        for (&w, &rho) in block_sizes.iter().zip(adj.rho()) {
            let block = gram.view((off, off), (w, w)).into_owned();
            worst = worst.max(rho * rho * linalg::max_eigenvalue(&block));
            off += w;
        }
        worst
    };
    if worst(1.0) <= 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if worst(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `κ² [(V − VΠV)⁻¹ − V⁻¹]`, symmetrized.
pub fn shaping_gram(pi: &DMatrix<f64>, v: &DMatrix<f64>, privacy: &PrivacySpec) -> Result<DMatrix<f64>> {
    if pi.shape() != v.shape() {
        return Err(Error::Dimension {
            context: "information matrix Π".into(),
            expected: linalg::shape(v),
            found: linalg::shape(pi),
        });
    }
    let s = symmetrize(&(v - v * pi * v));
    let s_inv = inv_spd(&s).ok_or_else(|| {
        Error::InfeasibleInformation("V − VΠV is not positive definite".into())
    })?;
    let v_inv = inv_spd(v).ok_or_else(|| Error::Singular {
        what: "V".into(),
        time: None,
    })?;
    Ok(symmetrize(&((s_inv - v_inv) * privacy.kappa.powi(2))))
}

/// Raise every block to the common sensitivity: factor
/// `DᵀD + diag(η_i I)`, `η_i = (Δ₂D/ρ_i)² − ‖D_i‖₂²`.
///
/// The result keeps `Δ₂D` and has `ρ_i‖D̃_i‖₂ = Δ₂D` for every `i`.
pub fn equalize_sensitivity(shaping: &ShapingMatrix, adj: &AdjacencySpec) -> Result<ShapingMatrix> {
    if shaping.is_zero() {
        return Err(Error::Domain("cannot equalize a zero shaping matrix".into()));
    }
    let delta = shaping.sensitivity();
    let d = shaping.matrix();
    let mut gram = d.transpose() * d;
    let mut off = 0;
    for (i, &w) in shaping.block_sizes().iter().enumerate() {
        let norm = linalg::spectral_norm(&shaping.block(i));
        let eta = ((delta / adj.rho()[i]).powi(2) - norm * norm).max(0.0);
        for k in 0..w {
            gram[(off + k, off + k)] += eta;
        }
        off += w;
    }
    ShapingMatrix::new(gram_factor(&gram, 1e-15), shaping.block_sizes().to_vec(), adj)
}

/// `R_t(Ω₁, Ω₂) = C_{t+1}ᵀΠC_{t+1} − Ω₂ + Ξ_t − Ξ_t A_t (Ω₁ + A_tᵀΞ_tA_t)⁻¹ A_tᵀ Ξ_t`.
///
/// Zero exactly when `Ω₂` is the Riccati successor of `Ω₁`.
pub fn r_operator(
    model: &GlobalModel,
    pi: &DMatrix<f64>,
    t: usize,
    omega1: &DMatrix<f64>,
    omega2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let a = model.transition(t);
    let c = model.observation(t + 1);
    let xi = inv_spd(model.process_noise(t)).ok_or(Error::SingularProcessNoise { time: t })?;
    let inner = omega1 + a.transpose() * &xi * a;
    let inner_inv = inv_spd(&inner).ok_or_else(|| Error::Singular {
        what: "Ω + AᵀΞA".into(),
        time: Some(t),
    })?;
    Ok(symmetrize(
        &(c.transpose() * pi * c - omega2 + &xi - &xi * a * inner_inv * a.transpose() * &xi),
    ))
}

/// Covariances consistent with the exact Riccati equalities, built from an
/// SDP information sequence: `Σ₀ = Ω₀⁻¹`,
/// `Σ_{t+1} = (Ω_{t+1} + R_t(Σ_t⁻¹, Ω_{t+1}))⁻¹`.
pub fn reconstruct_sigma(
    omegas: &[DMatrix<f64>],
    pi: &DMatrix<f64>,
    model: &GlobalModel,
) -> Result<Vec<DMatrix<f64>>> {
    let Some(first) = omegas.first() else {
        return Ok(Vec::new());
    };
    if omegas.len() > model.horizon() + 1 {
        return Err(Error::Dimension {
            context: "information sequence length".into(),
            expected: format!("<= {}", model.horizon() + 1),
            found: omegas.len().to_string(),
        });
    }
    let not_pd = |t: usize| Error::NotPositiveDefinite {
        what: format!("reconstructed information at t={t}"),
    };
    let mut sigmas = vec![inv_spd(first).ok_or_else(|| not_pd(0))?];
    let mut info = symmetrize(first);
    for t in 0..omegas.len() - 1 {
        let next = &omegas[t + 1];
        let tilde = symmetrize(&(next + r_operator(model, pi, t, &info, next)?));
        let sigma = inv_spd(&tilde).ok_or_else(|| not_pd(t + 1))?;
        sigmas.push(sigma);
        info = tilde;
    }
    Ok(sigmas)
}

/// Max-abs residuals of `Σ₀⁻¹ = Σ̄₀⁻¹ + C₀ᵀΠC₀` (first entry) and
/// `Σ_{t+1}⁻¹ = (A Σ_t Aᵀ + W)⁻¹ + CᵀΠC` (remaining entries).
pub fn riccati_residuals(sigmas: &[DMatrix<f64>], pi: &DMatrix<f64>, model: &GlobalModel) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(sigmas.len());
    let singular = |t: usize| Error::Singular {
        what: "covariance".into(),
        time: Some(t),
    };
    for (t, s) in sigmas.iter().enumerate() {
        let lhs = inv(s).ok_or_else(|| singular(t))?;
        let c = model.observation(t);
        let prior = if t == 0 {
            model.initial_covariance().clone()
        } else {
            let a = model.transition(t - 1);
            a * &sigmas[t - 1] * a.transpose() + model.process_noise(t - 1)
        };
        let rhs = inv(&prior).ok_or_else(|| singular(t))? + c.transpose() * pi * c;
        out.push((lhs - rhs).amax());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::privacy::kappa;
    use crate::riccati::{information_from_shaping, pi_from_d};
    use crate::linalg::{min_eigenvalue, rel_frobenius};
    use nalgebra::dmatrix;

    #[test]
    fn zero_information_is_degenerate() {
        let adj = AdjacencySpec::uniform(2, 1.0).unwrap();
        let r = recover_d(
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(2, 2),
            &kappa(1.0, 0.05).unwrap(),
            &adj,
            &[1, 1],
            RANK_TOL,
        );
        assert!(matches!(r, Err(Error::DegenerateMechanism)));
    }

    #[test]
    fn feasible_information_is_not_scaled() {
        let adj = AdjacencySpec::new(vec![1.0, 2.0]).unwrap();
        let priv_ = kappa(1.0, 0.05).unwrap();
        let v = dmatrix![0.5, 0.1; 0.1, 0.8];
        // Δ₂D = 0.7 with noise calibrated for 1: strictly inside.
        let pi = information_from_shaping(&dmatrix![0.7, 0.2], &v, priv_.kappa).unwrap();
        assert_eq!(privacy_feasible_scale(&pi, &v, &priv_, &adj, &[1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn overshooting_information_is_pulled_onto_the_boundary() {
        let adj = AdjacencySpec::new(vec![1.0, 2.0]).unwrap();
        let priv_ = kappa(1.0, 0.05).unwrap();
        let v = dmatrix![0.5, 0.1; 0.1, 0.8];
        // Noise calibrated for Δ₂D = 1 while the blocks reach 1.01.
        let d = dmatrix![1.01, 0.0; 0.0, 0.3];
        let pi = information_from_shaping(&d, &v, priv_.kappa).unwrap();
        let theta = privacy_feasible_scale(&pi, &v, &priv_, &adj, &[1, 1]).unwrap();
        assert!(theta < 1.0 && theta > 0.95, "{theta}");
        let fixed = recover_d(&(&pi * theta), &v, &priv_, &adj, &[1, 1], RANK_TOL).unwrap();
        assert!((fixed.sensitivity() - 1.0).abs() < 1e-10, "{}", fixed.sensitivity());
        let over = recover_d(&(&pi * (theta + 1e-6)), &v, &priv_, &adj, &[1, 1], RANK_TOL).unwrap();
        assert!(over.sensitivity() > 1.0);
    }

    #[test]
    fn feasible_scale_checks_blocks() {
        let adj = AdjacencySpec::new(vec![1.0, 2.0]).unwrap();
        let r = privacy_feasible_scale(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), &kappa(1.0, 0.05).unwrap(), &adj, &[2]);
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn scalar_recovery_inverts_one_by_one_algebra() {
        let (rho, sv2) = (3.0, 0.9);
        let priv_ = kappa(3f64.ln(), 0.05).unwrap();
        let gamma = priv_.kappa * rho;
        let pi = dmatrix![1.0 / (sv2 + gamma * gamma)];
        let adj = AdjacencySpec::uniform(1, rho).unwrap();
        let d = recover_d(&pi, &dmatrix![sv2], &priv_, &adj, &[1], RANK_TOL).unwrap();
        assert!((d.matrix()[(0, 0)].abs() - 1.0 / rho).abs() < 1e-12);
        assert!((d.sensitivity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_round_trips_pi() {
        let adj = AdjacencySpec::new(vec![1.0, 2.0, 0.5]).unwrap();
        let priv_ = kappa(0.7, 0.01).unwrap();
        let v = dmatrix![0.5, 0.1, 0.0, 0.0; 0.1, 0.6, 0.0, 0.0; 0.0, 0.0, 0.4, 0.0; 0.0, 0.0, 0.0, 0.9];
        let d0 = ShapingMatrix::new(
            dmatrix![1.0, -0.2, 0.4, 0.3; 0.0, 0.7, -0.5, 1.1],
            vec![2, 1, 1],
            &adj,
        )
        .unwrap();
        let pi = pi_from_d(&d0, &v, &priv_).unwrap();
        let d = recover_d(&pi, &v, &priv_, &adj, &[2, 1, 1], RANK_TOL).unwrap();
        assert_eq!(d.output_dim(), 2);
        let back = pi_from_d(&d, &v, &priv_).unwrap();
        assert!(rel_frobenius(&back, &pi) < 1e-10);
        // Not equalized, so the recovered design is the rescaled D0.
        assert!((d.sensitivity() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn equalize_hand_example() {
        let adj = AdjacencySpec::uniform(2, 1.0).unwrap();
        let d = ShapingMatrix::new(dmatrix![1.0, 0.0; 0.0, 0.5], vec![1, 1], &adj).unwrap();
        let e = equalize_sensitivity(&d, &adj).unwrap();
        let g = e.matrix().transpose() * e.matrix();
        assert!((g - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
        assert!((e.sensitivity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn equalize_keeps_equalized_gram() {
        let adj = AdjacencySpec::new(vec![1.0, 2.0]).unwrap();
        let d = ShapingMatrix::new(dmatrix![1.0, 0.5; 0.0, 0.0], vec![1, 1], &adj).unwrap();
        assert!((d.weighted_block_norms()[0] - d.weighted_block_norms()[1]).abs() < 1e-15);
        let e = equalize_sensitivity(&d, &adj).unwrap();
        let g0 = d.matrix().transpose() * d.matrix();
        let g1 = e.matrix().transpose() * e.matrix();
        assert!((g1 - g0).amax() < 1e-14);
    }

    #[test]
    fn equalized_information_dominates() {
        let adj = AdjacencySpec::new(vec![1.0, 0.5, 2.0]).unwrap();
        let priv_ = kappa(1.0, 0.05).unwrap();
        let v = DMatrix::identity(6, 6) * 0.3;
        let d = ShapingMatrix::new(
            dmatrix![1.0, 0.2, -0.3, 0.0, 0.1, 0.05; 0.0, 0.4, 0.2, 0.3, -0.1, 0.0],
            vec![2, 2, 2],
            &adj,
        )
        .unwrap();
        let e = equalize_sensitivity(&d, &adj).unwrap();
        let norms = e.weighted_block_norms();
        for w in norms.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-8 * d.sensitivity());
        }
        let sigma = priv_.kappa * d.sensitivity();
        let pi0 = information_from_shaping(d.matrix(), &v, sigma).unwrap();
        let pi1 = information_from_shaping(e.matrix(), &v, sigma).unwrap();
        assert!(min_eigenvalue(&(pi1 - pi0)) >= -1e-9);
    }
}
