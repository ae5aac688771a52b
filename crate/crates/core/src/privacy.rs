//! Gaussian mechanism calibration and signal shaping.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_model::AdjacencySpec;
use crate::linalg::{shape, spectral_norm};

/// Gaussian upper tail `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] on `(0, 1)`.
///
/// Bisection on a bracket widened geometrically until it contains the root,
/// then halved until the midpoint is no longer representable.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("q_inverse expects p in (0,1), got {p}")));
    }
    // Q is decreasing: Q(lo) >= p >= Q(hi).
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while q_function(lo) < p {
        lo *= 2.0;
    }
    while q_function(hi) > p {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let q = q_function(mid);
        if q == p {
            return Ok(mid);
        }
        if q > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever endpoint lands closer in probability.
    if (q_function(lo) - p).abs() <= (q_function(hi) - p).abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}

/// `(ε, δ)` together with the derived `μ = Q⁻¹(δ)` and noise multiplier `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub mu: f64,
    pub kappa: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        kappa(epsilon, delta)
    }

    /// `2εκ² − 2μκ − 1`, zero up to rounding.
    pub fn calibration_residual(&self) -> f64 {
        2.0 * self.epsilon * self.kappa * self.kappa - 2.0 * self.mu * self.kappa - 1.0
    }
}

/// `κ = (μ + √(μ² + 2ε)) / (2ε)` with `μ = Q⁻¹(δ)`.
pub fn kappa(epsilon: f64, delta: f64) -> Result<PrivacySpec> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0,1), got {delta}")));
    }
    let mu = q_inverse(delta)?;
    let kappa = (mu + (mu * mu + 2.0 * epsilon).sqrt()) / (2.0 * epsilon);
    Ok(PrivacySpec {
        epsilon,
        delta,
        mu,
        kappa,
    })
}

/// ℓ2-sensitivity of `y ↦ D y` under the adjacency relation:
/// `max_i ρ_i ‖D_i‖₂` over the column blocks `D_i` of widths `block_sizes`.
pub fn sensitivity_l2(d: &DMatrix<f64>, block_sizes: &[usize], adj: &AdjacencySpec) -> Result<f64> {
    Ok(block_norms(d, block_sizes, adj)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// `ρ_i ‖D_i‖₂` for every block.
pub fn block_norms(d: &DMatrix<f64>, block_sizes: &[usize], adj: &AdjacencySpec) -> Result<Vec<f64>> {
    check_partition(d, block_sizes, adj)?;
    let mut col = 0;
    let mut out = Vec::with_capacity(block_sizes.len());
    for (&w, &rho) in block_sizes.iter().zip(adj.rho()) {
        let blk = d.columns(col, w).into_owned();
        out.push(rho * spectral_norm(&blk));
        col += w;
    }
    Ok(out)
}

fn check_partition(d: &DMatrix<f64>, block_sizes: &[usize], adj: &AdjacencySpec) -> Result<()> {
    if block_sizes.len() != adj.len() {
        return Err(Error::Dimension {
            context: "shaping column partition".into(),
            expected: format!("{} blocks", adj.len()),
            found: format!("{} blocks", block_sizes.len()),
        });
    }
    let total: usize = block_sizes.iter().sum();
    if total != d.ncols() {
        return Err(Error::Dimension {
            context: "shaping column partition".into(),
            expected: format!("{total} columns"),
            found: shape(d),
        });
    }
    Ok(())
}

/// The shaping matrix `D = [D_1 … D_n]` with its cached ℓ2-sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingMatrix {
    matrix: DMatrix<f64>,
    block_sizes: Vec<usize>,
    rho: Vec<f64>,
    sensitivity: f64,
}

impl ShapingMatrix {
    pub fn new(matrix: DMatrix<f64>, block_sizes: Vec<usize>, adj: &AdjacencySpec) -> Result<Self> {
        let sensitivity = sensitivity_l2(&matrix, &block_sizes, adj)?;
        Ok(Self {
            matrix,
            block_sizes,
            rho: adj.rho().to_vec(),
            sensitivity,
        })
    }

    /// Input perturbation with per-participant scaling `D = diag(I_{p_i}/ρ_i)`;
    /// every block is active and `Δ₂D = 1`.
    pub fn input_perturbation(block_sizes: Vec<usize>, adj: &AdjacencySpec) -> Result<Self> {
        let p: usize = block_sizes.iter().sum();
        let mut d = DMatrix::zeros(p, p);
        let mut off = 0;
        for (&w, &rho) in block_sizes.iter().zip(adj.rho()) {
            for k in 0..w {
                d[(off + k, off + k)] = 1.0 / rho;
            }
            off += w;
        }
        Self::new(d, block_sizes, adj)
    }

    /// Plain input perturbation `D = I_p`, so `Δ₂D = max_i ρ_i`.
    pub fn identity(block_sizes: Vec<usize>, adj: &AdjacencySpec) -> Result<Self> {
        let p: usize = block_sizes.iter().sum();
        Self::new(DMatrix::identity(p, p), block_sizes, adj)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
    /// `Δ₂D`.
    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }
    /// Number of released channels `q`.
    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn block(&self, i: usize) -> DMatrix<f64> {
        let off: usize = self.block_sizes[..i].iter().sum();
        self.matrix.columns(off, self.block_sizes[i]).into_owned()
    }

    /// `ρ_i ‖D_i‖₂` for each participant.
    pub fn weighted_block_norms(&self) -> Vec<f64> {
        (0..self.block_sizes.len())
            .map(|i| self.rho[i] * spectral_norm(&self.block(i)))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&x| x == 0.0)
    }
}

/// Gaussian mechanism `s = D y + ζ`, `ζ ~ N(0, σ² I_q)` with `σ = κ Δ₂D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub shaping: ShapingMatrix,
    pub privacy: PrivacySpec,
    pub noise_std: f64,
}

impl MechanismSpec {
    pub fn new(shaping: ShapingMatrix, privacy: PrivacySpec) -> Self {
        let noise_std = privacy.kappa * shaping.sensitivity();
        Self {
            shaping,
            privacy,
            noise_std,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.shaping.output_dim()
    }

    /// Release one shaped, noised sample.
    pub fn apply<R: Rng + ?Sized>(&self, y: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
        apply_mechanism(self, y, rng)
    }
}

pub fn apply_mechanism<R: Rng + ?Sized>(
    spec: &MechanismSpec,
    y: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = spec.shaping.matrix();
    if y.len() != d.ncols() {
        return Err(Error::Dimension {
            context: "mechanism input".into(),
            expected: d.ncols().to_string(),
            found: y.len().to_string(),
        });
    }
    let mut s = d * y;
    if spec.noise_std > 0.0 {
        for v in s.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += spec.noise_std * g;
        }
    }
    Ok(s)
}

/// Reproducible generator for `(seed, stream)`. Distinct streams of the same
/// seed are independent ChaCha20 keystreams.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
