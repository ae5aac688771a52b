//! Kalman covariance recursions for the shaped-and-noised measurements.
//!
//! With release `s_t = D C_t x_t + D v_t + ζ_t` the filter only sees the
//! measurement through the information matrix
//!
//! ```text
//! Π = Dᵀ (D V Dᵀ + σ² I_q)⁻¹ D,       σ = κ Δ₂D
//! ```
//!
//! and the covariances obey `Σ̄_t = A Σ_{t-1} Aᵀ + W`,
//! `Σ_t⁻¹ = Σ̄_t⁻¹ + C_tᵀ Π C_t`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_model::GlobalModel;
use crate::linalg::{inv, inv_spd, shape, spectral_norm, sym_eigen, symmetrize};
use crate::privacy::{kappa, PrivacySpec, ShapingMatrix};

/// `Dᵀ (D V Dᵀ + σ² I)⁻¹ D` for an arbitrary noise level.
pub fn information_from_shaping(d: &DMatrix<f64>, v: &DMatrix<f64>, noise_std: f64) -> Result<DMatrix<f64>> {
    let p = d.ncols();
    if v.shape() != (p, p) {
        return Err(Error::Dimension {
            context: "measurement covariance".into(),
            expected: format!("{p}x{p}"),
            found: shape(v),
        });
    }
    if d.iter().all(|&x| x == 0.0) {
        return Ok(DMatrix::zeros(p, p));
    }
    let q = d.nrows();
    let inner = d * v * d.transpose() + DMatrix::identity(q, q) * (noise_std * noise_std);
    let inner_inv = inv_spd(&inner).ok_or_else(|| Error::Singular {
        what: "D V Dᵀ + σ² I".into(),
        time: None,
    })?;
    Ok(symmetrize(&(d.transpose() * inner_inv * d)))
}

/// Π for the mechanism calibrated on `shaping` (noise `σ = κ Δ₂D`).
pub fn pi_from_d(shaping: &ShapingMatrix, v: &DMatrix<f64>, privacy: &PrivacySpec) -> Result<DMatrix<f64>> {
    information_from_shaping(shaping.matrix(), v, privacy.kappa * shaping.sensitivity())
}

/// Same Π through the matrix inversion lemma:
/// `V⁻¹ − V⁻¹ (V⁻¹ + DᵀD/(κΔ₂D)²)⁻¹ V⁻¹`.
pub fn pi_from_d_inversion_lemma(
    shaping: &ShapingMatrix,
    v: &DMatrix<f64>,
    privacy: &PrivacySpec,
) -> Result<DMatrix<f64>> {
    let p = shaping.input_dim();
    if shaping.is_zero() {
        return Ok(DMatrix::zeros(p, p));
    }
    let v_inv = inv_spd(v).ok_or_else(|| Error::Singular {
        what: "V".into(),
        time: None,
    })?;
    let scale = (privacy.kappa * shaping.sensitivity()).powi(2);
    let d = shaping.matrix();
    let mid = &v_inv + d.transpose() * d / scale;
    let mid_inv = inv_spd(&mid).ok_or_else(|| Error::Singular {
        what: "V⁻¹ + DᵀD/σ²".into(),
        time: None,
    })?;
    Ok(symmetrize(&(&v_inv - &v_inv * mid_inv * &v_inv)))
}

/// `A Σ Aᵀ + W`.
pub fn kf_time_update(sigma: &DMatrix<f64>, a: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(a * sigma * a.transpose() + w))
}

/// Information-form update `Σ = (Σ̄⁻¹ + Cᵀ Π C)⁻¹`. A zero Π returns `Σ̄`.
pub fn kf_measurement_update(
    sigma_bar: &DMatrix<f64>,
    c: &DMatrix<f64>,
    pi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    measurement_update_at(sigma_bar, c, pi, None)
}

fn measurement_update_at(
    sigma_bar: &DMatrix<f64>,
    c: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    time: Option<usize>,
) -> Result<DMatrix<f64>> {
    if pi.iter().all(|&x| x == 0.0) {
        return Ok(sigma_bar.clone());
    }
    let info = inv_spd(sigma_bar).ok_or_else(|| Error::Singular {
        what: "predicted covariance".into(),
        time,
    })?;
    let post_info = info + c.transpose() * pi * c;
    inv_spd(&post_info).ok_or_else(|| Error::Singular {
        what: "posterior information".into(),
        time,
    })
}

/// Predicted and posterior covariance sequences for `t = 0..=T` given Π.
pub fn covariance_sequence(
    model: &GlobalModel,
    pi: &DMatrix<f64>,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let p = model.meas_dim();
    if pi.shape() != (p, p) {
        return Err(Error::Dimension {
            context: "information matrix Π".into(),
            expected: format!("{p}x{p}"),
            found: shape(pi),
        });
    }
    let horizon = model.horizon();
    let mut predicted = Vec::with_capacity(horizon + 1);
    let mut posterior = Vec::with_capacity(horizon + 1);
    let mut sigma_bar = model.initial_covariance().clone();
    for t in 0..=horizon {
        if t > 0 {
            sigma_bar = kf_time_update(&posterior[t - 1], model.transition(t - 1), model.process_noise(t - 1));
        }
        let sigma = measurement_update_at(&sigma_bar, model.observation(t), pi, Some(t))?;
        predicted.push(sigma_bar.clone());
        posterior.push(sigma);
    }
    Ok((predicted, posterior))
}

/// `Tr(L Σ Lᵀ)`.
pub fn query_mse(l: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    (l * sigma * l.transpose()).trace()
}

/// The time-varying Kalman filter realized for a particular shaping matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterDesign {
    /// `H_t = D C_t`.
    pub observation: Vec<DMatrix<f64>>,
    /// `R = D V Dᵀ + σ² I_q`.
    pub measurement_cov: DMatrix<f64>,
    pub noise_std: f64,
    pub information: DMatrix<f64>,
    /// `K_t = Σ̄_t H_tᵀ (H_t Σ̄_t H_tᵀ + R)⁻¹`, `m × q`.
    pub gains: Vec<DMatrix<f64>>,
    pub predicted: Vec<DMatrix<f64>>,
    pub posterior: Vec<DMatrix<f64>>,
    /// `Tr(L_t Σ_t L_tᵀ)` per step.
    pub per_time_mse: Vec<f64>,
    /// Time average of `per_time_mse`.
    pub cost: f64,
}

/// Time-varying Kalman filter over the model horizon for the mechanism built on `shaping`.
pub fn run_covariance_recursion(
    model: &GlobalModel,
    shaping: &ShapingMatrix,
    privacy: &PrivacySpec,
) -> Result<FilterDesign> {
    let d = shaping.matrix();
    if d.ncols() != model.meas_dim() {
        return Err(Error::Dimension {
            context: "shaping matrix columns".into(),
            expected: model.meas_dim().to_string(),
            found: shape(d),
        });
    }
    let noise_std = privacy.kappa * shaping.sensitivity();
    let pi = pi_from_d(shaping, model.measurement_noise(), privacy)?;
    let (predicted, posterior) = covariance_sequence(model, &pi)?;

    let q = d.nrows();
    let r = symmetrize(&(d * model.measurement_noise() * d.transpose() + DMatrix::identity(q, q) * noise_std.powi(2)));
    let mut observation = Vec::with_capacity(predicted.len());
    let mut gains = Vec::with_capacity(predicted.len());
    for (t, sbar) in predicted.iter().enumerate() {
        let h = d * model.observation(t);
        let k = if shaping.is_zero() {
            DMatrix::zeros(model.state_dim(), q)
        } else {
            let s = symmetrize(&(&h * sbar * h.transpose() + &r));
            let s_inv = inv(&s).ok_or_else(|| Error::Singular {
                what: "innovation covariance".into(),
                time: Some(t),
            })?;
            sbar * h.transpose() * s_inv
        };
        observation.push(h);
        gains.push(k);
    }
    let per_time_mse: Vec<f64> = posterior
        .iter()
        .enumerate()
        .map(|(t, s)| query_mse(model.query(t), s))
        .collect();
    let cost = per_time_mse.iter().sum::<f64>() / per_time_mse.len() as f64;
    Ok(FilterDesign {
        observation,
        measurement_cov: r,
        noise_std,
        information: pi,
        gains,
        predicted,
        posterior,
        per_time_mse,
        cost,
    })
}

/// Iteration controls for [`steady_state_from_information`].
#[derive(Debug, Clone, Copy)]
pub struct SteadyStateSettings {
    /// Cap on doubling steps; step `k` has advanced the Riccati map `2^k` times.
    pub max_iter: usize,
    /// Target relative Frobenius change between consecutive doubling steps.
    pub rel_tol: f64,
}

impl Default for SteadyStateSettings {
    fn default() -> Self {
        Self {
            max_iter: 64,
            rel_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyState {
    pub predicted: DMatrix<f64>,
    pub posterior: DMatrix<f64>,
    /// Doubling steps taken.
    pub iterations: usize,
}

/// Fixed point of the time-invariant Riccati map
/// `Σ̄ ↦ A (Σ̄⁻¹ + CᵀΠC)⁻¹ Aᵀ + W`, reached by structure-preserving doubling.
///
/// Each step squares the transition, so weakly observed, nearly marginal
/// models converge in a few dozen steps where the plain iteration stalls.
pub fn steady_state_from_information(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    w: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    settings: SteadyStateSettings,
) -> Result<SteadyState> {
    let n = a.nrows();
    let singular = || Error::Singular {
        what: "doubling step".into(),
        time: None,
    };
    // Standard form X = H + FᵀX(I + GX)⁻¹F with F = Aᵀ.
    let mut f = a.transpose();
    let mut g = symmetrize(&(c.transpose() * pi * c));
    let mut h = w.clone();
    let mut step = f64::INFINITY;
    for k in 1..=settings.max_iter {
        let lu = (DMatrix::identity(n, n) + &g * &h).lu();
        let wf = lu.solve(&f).ok_or_else(singular)?;
        let wg = lu.solve(&g).ok_or_else(singular)?;
        let next_h = symmetrize(&(&h + f.transpose() * &h * &wf));
        let next_g = symmetrize(&(&g + &f * wg * f.transpose()));
        f = &f * wf;
        if !next_h.iter().all(|x| x.is_finite()) {
            break;
        }
        step = (&next_h - &h).norm() / next_h.norm().max(f64::MIN_POSITIVE);
        h = next_h;
        g = next_g;
        if step <= settings.rel_tol {
            let posterior = measurement_update_at(&h, c, pi, None)?;
            return Ok(SteadyState {
                predicted: h,
                posterior,
                iterations: k,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iter,
        residual: step,
    })
}

/// Steady state for a time-invariant model under the mechanism on `shaping`.
pub fn steady_state_covariance(
    model: &GlobalModel,
    shaping: &ShapingMatrix,
    privacy: &PrivacySpec,
) -> Result<SteadyState> {
    if !model.is_time_invariant() {
        return Err(Error::Domain("steady state requires a time-invariant model".into()));
    }
    let pi = pi_from_d(shaping, model.measurement_noise(), privacy)?;
    steady_state_from_information(
        model.transition(0),
        model.observation(0),
        model.process_noise(0),
        &pi,
        SteadyStateSettings::default(),
    )
}

/// Relative threshold below which a direction counts as unobserved.
const OBSERVABILITY_TOL: f64 = 1e-10;

/// Orthonormal basis of the smallest `Aᵀ`-invariant subspace containing
/// `range(G)`. Its orthogonal complement is the unobservable subspace of the
/// pair `(G, A)`.
fn observable_basis(a: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eig = sym_eigen(g);
    let top = eig.eigenvalues.amax();
    let cols: Vec<_> = (0..n)
        .filter(|&k| top > 0.0 && eig.eigenvalues[k] > OBSERVABILITY_TOL * top)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let mut basis = DMatrix::from_columns(&cols);
    let scale = spectral_norm(a).max(1.0);
    while basis.ncols() < n {
        let image = a.transpose() * &basis;
        let residual = &image - &basis * (basis.transpose() * &image);
        let svd = residual.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let new: Vec<_> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] > OBSERVABILITY_TOL * scale)
            .map(|k| u.column(k).into_owned())
            .collect();
        if new.is_empty() {
            break;
        }
        let mut all: Vec<_> = basis.column_iter().map(|c| c.into_owned()).collect();
        all.extend(new);
        // Re-orthonormalize to keep rounding from accumulating across rounds.
        basis = DMatrix::from_columns(&all).qr().q();
    }
    basis
}

/// Posterior steady-state MSE `Tr(L Σ Lᵀ)` of the released estimate.
///
/// When the query ignores every unobserved direction, the filter is solved on
/// the observable subspace alone. The query error then has a steady state even
/// if unobserved random walks leave the full covariance without one, as with a
/// single aggregated release of many independent states.
pub fn stationary_cost(model: &GlobalModel, shaping: &ShapingMatrix, privacy: &PrivacySpec) -> Result<f64> {
    if !model.is_time_invariant() {
        return Err(Error::Domain("steady state requires a time-invariant model".into()));
    }
    let (a, c, w, l) = (model.transition(0), model.observation(0), model.process_noise(0), model.query(0));
    let pi = pi_from_d(shaping, model.measurement_noise(), privacy)?;
    let basis = observable_basis(a, &(c.transpose() * &pi * c));
    let hidden = (l - l * &basis * basis.transpose()).norm();
    if basis.ncols() == a.nrows() || hidden > OBSERVABILITY_TOL * l.norm().max(f64::MIN_POSITIVE) {
        let ss = steady_state_from_information(a, c, w, &pi, SteadyStateSettings::default())?;
        return Ok(query_mse(l, &ss.posterior));
    }
    let bt = basis.transpose();
    let ss = steady_state_from_information(
        &(&bt * a * &basis),
        &(c * &basis),
        &symmetrize(&(&bt * w * &basis)),
        &pi,
        SteadyStateSettings::default(),
    )?;
    Ok(query_mse(&(l * &basis), &ss.posterior))
}

/// The homogeneous scalar example: `n` identical participants with
/// `x_{t+1} = a x_t + w`, `y = c x + v`, uniform bound `ρ`, sum query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarScenario {
    pub a: f64,
    pub c: f64,
    pub sigma_w2: f64,
    pub sigma_v2: f64,
    pub rho: f64,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
}

/// Closed-form steady-state MSE together with the `β` term it was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMse {
    pub mse: f64,
    pub beta: f64,
}

impl ScalarScenario {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.sigma_w2, "sigma_w2")?;
        pos(self.sigma_v2, "sigma_v2")?;
        pos(self.rho, "rho")?;
        if self.n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        if !(self.a.is_finite() && self.c.is_finite() && self.c != 0.0) {
            return Err(Error::Domain("a must be finite and c finite and nonzero".into()));
        }
        kappa(self.epsilon, self.delta).map(|_| ())
    }

    pub fn privacy(&self) -> Result<PrivacySpec> {
        kappa(self.epsilon, self.delta)
    }

    /// `γ = κ ρ`.
    pub fn gamma(&self) -> Result<f64> {
        Ok(self.privacy()?.kappa * self.rho)
    }

    /// `β = (1 − a²)(σ_v² + γ²) − c² σ_w²`.
    pub fn beta(&self) -> Result<f64> {
        let g2 = self.gamma()?.powi(2);
        Ok(beta_with(self, self.sigma_v2 + g2))
    }

    /// `β_(n) = (1 − a²)(σ_v² + γ²/n) − c² σ_w²`.
    pub fn beta_n(&self) -> Result<f64> {
        let g2 = self.gamma()?.powi(2);
        Ok(beta_with(self, self.sigma_v2 + g2 / self.n as f64))
    }
}

fn beta_with(s: &ScalarScenario, r: f64) -> f64 {
    (1.0 - s.a * s.a) * r - s.c * s.c * s.sigma_w2
}

fn closed_form(s: &ScalarScenario, r: f64) -> ScalarMse {
    let beta = beta_with(s, r);
    let c2 = s.c * s.c;
    let disc = beta * beta + 4.0 * r * s.sigma_w2 * c2;
    ScalarMse {
        mse: s.n as f64 / (2.0 * c2) * (-beta + disc.sqrt()),
        beta,
    }
}

/// Steady-state MSE of the sum under input perturbation (`D = I`, noise `γ`).
///
/// This is the *predicted* (a priori) variance of the Riccati fixed point,
/// scaled by `n`.
pub fn mse_input_perturbation_scalar(s: &ScalarScenario) -> Result<ScalarMse> {
    s.validate()?;
    let g2 = s.gamma()?.powi(2);
    Ok(closed_form(s, s.sigma_v2 + g2))
}

/// Steady-state MSE when the signals are summed before noising (`D = 1ᵀ`).
pub fn mse_aggregated_scalar(s: &ScalarScenario) -> Result<ScalarMse> {
    s.validate()?;
    let g2 = s.gamma()?.powi(2);
    Ok(closed_form(s, s.sigma_v2 + g2 / s.n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lin_model::{build_global, AdjacencySpec, IndividualModel};
    use crate::linalg::{min_eigenvalue, rel_frobenius};
    use nalgebra::{dmatrix, DVector};

    fn homogeneous_example() -> ScalarScenario {
        ScalarScenario {
            a: 1.0,
            c: 1.0,
            sigma_w2: 0.5,
            sigma_v2: 0.9,
            rho: 50.0,
            n: 100,
            epsilon: 3f64.ln(),
            delta: 0.05,
        }
    }

    #[test]
    fn pi_examples() {
        let priv_ = kappa(1.0, 0.05).unwrap();
        let adj = AdjacencySpec::uniform(2, 1.0).unwrap();
        let zero = ShapingMatrix::new(DMatrix::zeros(1, 2), vec![1, 1], &adj).unwrap();
        assert_eq!(pi_from_d(&zero, &DMatrix::identity(2, 2), &priv_).unwrap(), DMatrix::zeros(2, 2));

        let rho = 2.0;
        let adj1 = AdjacencySpec::uniform(1, rho).unwrap();
        let one = ShapingMatrix::new(dmatrix![1.0], vec![1], &adj1).unwrap();
        let gamma = priv_.kappa * rho;
        let pi = pi_from_d(&one, &dmatrix![0.9], &priv_).unwrap();
        assert!((pi[(0, 0)] - 1.0 / (0.9 + gamma * gamma)).abs() < 1e-15);
    }

    #[test]
    fn time_and_measurement_updates() {
        let s = dmatrix![2.0, 0.3; 0.3, 1.0];
        assert_eq!(kf_time_update(&s, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)), s);
        let w = dmatrix![0.5, 0.1; 0.1, 0.4];
        assert_eq!(kf_time_update(&s, &DMatrix::zeros(2, 2), &w), w);
        assert_eq!(kf_time_update(&dmatrix![2.0], &dmatrix![1.0], &dmatrix![0.5]), dmatrix![2.5]);

        assert_eq!(kf_measurement_update(&s, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)).unwrap(), s);
        let post = kf_measurement_update(&dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((post[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(kf_measurement_update(&dmatrix![0.0], &dmatrix![1.0], &dmatrix![1.0]).is_err());
    }

    #[test]
    fn measurement_update_never_increases_covariance() {
        let sbar = dmatrix![2.0, 0.3, 0.0; 0.3, 1.0, -0.2; 0.0, -0.2, 0.7];
        let d = dmatrix![1.0, 0.0, 0.5; 0.2, -1.0, 0.3];
        let pi = information_from_shaping(&d, &DMatrix::identity(3, 3), 0.8).unwrap();
        let post = kf_measurement_update(&sbar, &DMatrix::identity(3, 3), &pi).unwrap();
        assert!(min_eigenvalue(&(&sbar - &post)) >= -1e-12);
    }

    #[test]
    fn scalar_recursion_matches_textbook_filter() {
        let (a, c, w, v, s0, rho) = (0.9, 1.3, 0.4, 0.7, 2.0, 1.5);
        let priv_ = kappa(0.8, 0.02).unwrap();
        let horizon = 12;
        let mdl = IndividualModel::constant(
            0,
            dmatrix![a],
            dmatrix![c],
            dmatrix![w],
            dmatrix![v],
            DVector::zeros(1),
            dmatrix![s0],
            horizon,
        )
        .unwrap();
        let g = build_global(vec![mdl], vec![dmatrix![1.0]; horizon + 1]).unwrap();
        let adj = AdjacencySpec::uniform(1, rho).unwrap();
        let d = 0.37;
        let sh = ShapingMatrix::new(dmatrix![d], vec![1], &adj).unwrap();
        let fd = run_covariance_recursion(&g, &sh, &priv_).unwrap();

        // Textbook covariance form with scalar measurement s = d c x + d v + ζ.
        let sigma2 = (priv_.kappa * rho * d).powi(2);
        let (h, r) = (d * c, d * d * v + sigma2);
        let mut pbar = s0;
        for t in 0..=horizon {
            let k = pbar * h / (h * h * pbar + r);
            let p = (1.0 - k * h) * pbar;
            assert!((fd.posterior[t][(0, 0)] - p).abs() < 1e-12 * p.max(1.0), "t={t}");
            assert!((fd.gains[t][(0, 0)] - k).abs() < 1e-12);
            pbar = a * a * p + w;
        }
    }

    #[test]
    fn zero_shaping_is_pure_prediction() {
        let horizon = 5;
        let mdl = IndividualModel::constant(
            0,
            dmatrix![0.5, 0.1; 0.0, 0.8],
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 0.3,
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            horizon,
        )
        .unwrap();
        let g = build_global(vec![mdl], vec![dmatrix![1.0, 1.0]; horizon + 1]).unwrap();
        let adj = AdjacencySpec::uniform(1, 1.0).unwrap();
        let sh = ShapingMatrix::new(DMatrix::zeros(1, 2), vec![2], &adj).unwrap();
        let fd = run_covariance_recursion(&g, &sh, &kappa(1.0, 0.1).unwrap()).unwrap();
        let mut s = g.initial_covariance().clone();
        let mut total = 0.0;
        for t in 0..=horizon {
            if t > 0 {
                s = g.transition(t - 1) * &s * g.transition(t - 1).transpose() + g.process_noise(t - 1);
            }
            assert!(rel_frobenius(&fd.posterior[t], &s) < 1e-14);
            total += query_mse(g.query(t), &s);
        }
        assert!((fd.cost - total / (horizon + 1) as f64).abs() < 1e-12);
    }

    #[test]
    fn steady_state_trivial_and_hand_cases() {
        let ss = steady_state_from_information(
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(2, 2),
            &DMatrix::identity(2, 2),
            &DMatrix::zeros(2, 2),
            SteadyStateSettings::default(),
        )
        .unwrap();
        assert_eq!(ss.predicted, DMatrix::<f64>::identity(2, 2));

        // a = 0: predicted variance is just σ_w²; posterior 1/(1/σ_w² + c²Π).
        let (c, w, v, gamma) = (1.7, 0.6, 0.4, 1.1);
        let pi = 1.0 / (v + gamma * gamma);
        let ss = steady_state_from_information(
            &dmatrix![0.0],
            &dmatrix![c],
            &dmatrix![w],
            &dmatrix![pi],
            SteadyStateSettings::default(),
        )
        .unwrap();
        assert!((ss.predicted[(0, 0)] - w).abs() < 1e-15);
        assert!((ss.posterior[(0, 0)] - 1.0 / (1.0 / w + c * c * pi)).abs() < 1e-15);
    }

    #[test]
    fn doubling_matches_plain_iteration() {
        let a = dmatrix![0.9, 0.3; -0.2, 0.7];
        let c = dmatrix![1.0, 0.5];
        let w = dmatrix![0.4, 0.1; 0.1, 0.3];
        let pi = dmatrix![0.8];
        let ss = steady_state_from_information(&a, &c, &w, &pi, SteadyStateSettings::default()).unwrap();
        let mut bar = w.clone();
        for _ in 0..2000 {
            bar = kf_time_update(&kf_measurement_update(&bar, &c, &pi).unwrap(), &a, &w);
        }
        assert!((&ss.predicted - &bar).norm() < 1e-12 * bar.norm());
        let again = kf_time_update(&ss.posterior, &a, &w);
        assert!((&again - &ss.predicted).norm() < 1e-12 * bar.norm());
    }

    #[test]
    fn weakly_observed_random_walk_converges() {
        // Contraction of the plain map is about 1 − 2·sqrt(wπ) ≈ 1 − 2e-5 here.
        let (w, pi) = (1.0, 1e-10);
        let ss = steady_state_from_information(
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![w],
            &dmatrix![pi],
            SteadyStateSettings::default(),
        )
        .unwrap();
        // Scalar fixed point of p = p/(1 + πp) + w.
        let p = (w + (w * w + 4.0 * w / pi).sqrt()) / 2.0;
        assert!((ss.predicted[(0, 0)] - p).abs() < 1e-9 * p);
        assert!(ss.iterations < 64);
    }

    #[test]
    fn unstable_unobserved_mode_has_no_steady_state() {
        let r = steady_state_from_information(
            &dmatrix![1.5],
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![0.0],
            SteadyStateSettings::default(),
        );
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn closed_form_examples() {
        let s = homogeneous_example();
        let m1 = mse_input_perturbation_scalar(&s).unwrap().mse;
        let m2 = mse_aggregated_scalar(&s).unwrap().mse;
        assert!((m1 - 6235.0).abs() / 6235.0 < 0.01, "{m1}");
        assert!((m2 - 650.0).abs() / 650.0 < 0.01, "{m2}");

        // No privacy noise and perfect measurements: a = 0 leaves σ_w² each.
        let perfect = ScalarScenario {
            a: 0.0,
            c: 1.0,
            sigma_w2: 1.0,
            sigma_v2: 0.0,
            rho: 1.0,
            n: 10,
            epsilon: 1.0,
            delta: 0.1,
        };
        let r = 0.0;
        assert!((closed_form(&perfect, r).mse - 10.0).abs() < 1e-12);

        let single = ScalarScenario { n: 1, ..s };
        assert_eq!(
            mse_input_perturbation_scalar(&single).unwrap(),
            mse_aggregated_scalar(&single).unwrap()
        );
    }

    #[test]
    fn aggregated_mse_decreases_with_n() {
        let base = homogeneous_example();
        let vals: Vec<f64> = (1..=100)
            .map(|n| mse_aggregated_scalar(&ScalarScenario { n, ..base }).unwrap().mse / n as f64)
            .collect();
        // Per-participant share must strictly shrink as the privacy noise is diluted.
        for w in vals.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn closed_form_matches_predicted_fixed_point() {
        let s = ScalarScenario {
            a: 0.8,
            c: 0.6,
            sigma_w2: 0.3,
            sigma_v2: 1.4,
            rho: 2.0,
            n: 7,
            epsilon: 0.9,
            delta: 0.03,
        };
        let g2 = s.gamma().unwrap().powi(2);
        let ss = steady_state_from_information(
            &dmatrix![s.a],
            &dmatrix![s.c],
            &dmatrix![s.sigma_w2],
            &dmatrix![1.0 / (s.sigma_v2 + g2)],
            SteadyStateSettings::default(),
        )
        .unwrap();
        let m1 = mse_input_perturbation_scalar(&s).unwrap().mse;
        let numeric = s.n as f64 * ss.predicted[(0, 0)];
        assert!((m1 - numeric).abs() / m1 < 1e-9);
    }
}
