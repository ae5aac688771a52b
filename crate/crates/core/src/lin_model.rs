//! Participant state-space models and their block-diagonal aggregate.
//!
//! Participant `i` evolves as
//!
//! ```text
//! x_{i,t+1} = A_{i,t} x_{i,t} + w_{i,t},   w ~ N(0, W_{i,t}),  t = 0..T-1
//! y_{i,t}   = C_{i,t} x_{i,t} + v_{i,t},   v ~ N(0, V_i),      t = 0..T
//! ```
//!
//! and the released quantity is `z_t = Σ_i L_{i,t} x_{i,t} = L_t x_t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag, shape};

/// One participant's linear Gaussian model over a horizon `T`.
///
/// Transitions are stored for `t = 0..T-1` and observations for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualModel {
    transition: Vec<DMatrix<f64>>,
    observation: Vec<DMatrix<f64>>,
    process_noise: Vec<DMatrix<f64>>,
    measurement_noise: DMatrix<f64>,
    initial_mean: DVector<f64>,
    initial_covariance: DMatrix<f64>,
}

impl IndividualModel {
    /// Validate and build a time-varying model. `participant` only labels errors.
    pub fn new(
        participant: usize,
        transition: Vec<DMatrix<f64>>,
        observation: Vec<DMatrix<f64>>,
        process_noise: Vec<DMatrix<f64>>,
        measurement_noise: DMatrix<f64>,
        initial_mean: DVector<f64>,
        initial_covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let dim_err = |time: Option<usize>, what: &'static str, expected: String, found: String| {
            Error::ParticipantDimension {
                participant,
                time,
                what,
                expected,
                found,
            }
        };
        let horizon = transition.len();
        if observation.len() != horizon + 1 {
            return Err(dim_err(
                None,
                "observation sequence length",
                (horizon + 1).to_string(),
                observation.len().to_string(),
            ));
        }
        if process_noise.len() != horizon {
            return Err(dim_err(
                None,
                "process noise sequence length",
                horizon.to_string(),
                process_noise.len().to_string(),
            ));
        }
        let m = initial_mean.len();
        if m == 0 {
            return Err(dim_err(None, "state dimension", ">= 1".into(), "0".into()));
        }
        let p = measurement_noise.nrows();
        if p == 0 || !measurement_noise.is_square() {
            return Err(dim_err(
                None,
                "V",
                "square, at least 1x1".into(),
                shape(&measurement_noise),
            ));
        }
        if initial_covariance.shape() != (m, m) {
            return Err(dim_err(None, "Sigma0", format!("{m}x{m}"), shape(&initial_covariance)));
        }
        for (t, a) in transition.iter().enumerate() {
            if a.shape() != (m, m) {
                return Err(dim_err(Some(t), "A", format!("{m}x{m}"), shape(a)));
            }
        }
        for (t, c) in observation.iter().enumerate() {
            if c.shape() != (p, m) {
                return Err(dim_err(Some(t), "C", format!("{p}x{m}"), shape(c)));
            }
        }
        for (t, w) in process_noise.iter().enumerate() {
            if w.shape() != (m, m) {
                return Err(dim_err(Some(t), "W", format!("{m}x{m}"), shape(w)));
            }
            linalg::require_positive_definite(w, format!("participant {participant}: W at t={t}"))?;
        }
        linalg::require_positive_definite(&measurement_noise, format!("participant {participant}: V"))?;
        linalg::require_positive_definite(
            &initial_covariance,
            format!("participant {participant}: Sigma0"),
        )?;
        Ok(Self {
            transition,
            observation,
            process_noise,
            measurement_noise,
            initial_mean,
            initial_covariance,
        })
    }

    /// Time-invariant model with `a`, `c`, `w` replicated over `horizon` steps.
    pub fn constant(
        participant: usize,
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        w: DMatrix<f64>,
        v: DMatrix<f64>,
        initial_mean: DVector<f64>,
        initial_covariance: DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self> {
        Self::new(
            participant,
            vec![a; horizon],
            vec![c; horizon + 1],
            vec![w; horizon],
            v,
            initial_mean,
            initial_covariance,
        )
    }

    pub fn horizon(&self) -> usize {
        self.transition.len()
    }
    pub fn state_dim(&self) -> usize {
        self.initial_mean.len()
    }
    pub fn meas_dim(&self) -> usize {
        self.measurement_noise.nrows()
    }
    pub fn transition(&self) -> &[DMatrix<f64>] {
        &self.transition
    }
    pub fn observation(&self) -> &[DMatrix<f64>] {
        &self.observation
    }
    pub fn process_noise(&self) -> &[DMatrix<f64>] {
        &self.process_noise
    }
    pub fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.measurement_noise
    }
    pub fn initial_mean(&self) -> &DVector<f64> {
        &self.initial_mean
    }
    pub fn initial_covariance(&self) -> &DMatrix<f64> {
        &self.initial_covariance
    }
}

/// Aggregate model: block-diagonal `A_t`, `C_t`, `W_t`, `V`, `Σ̄₀` in
/// participant order, plus the query matrices `L_t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalModel {
    participants: Vec<IndividualModel>,
    transition: Vec<DMatrix<f64>>,
    observation: Vec<DMatrix<f64>>,
    process_noise: Vec<DMatrix<f64>>,
    measurement_noise: DMatrix<f64>,
    initial_mean: DVector<f64>,
    initial_covariance: DMatrix<f64>,
    query: Vec<DMatrix<f64>>,
    state_offsets: Vec<usize>,
    meas_offsets: Vec<usize>,
}

/// Assemble the aggregate model. `query` holds `L_t` for `t = 0..=T`.
pub fn build_global(models: Vec<IndividualModel>, query: Vec<DMatrix<f64>>) -> Result<GlobalModel> {
    let first = models
        .first()
        .ok_or_else(|| Error::Domain("at least one participant is required".into()))?;
    let horizon = first.horizon();
    for (i, mdl) in models.iter().enumerate() {
        if mdl.horizon() != horizon {
            return Err(Error::ParticipantDimension {
                participant: i,
                time: None,
                what: "horizon",
                expected: horizon.to_string(),
                found: mdl.horizon().to_string(),
            });
        }
    }
    let mut state_offsets = vec![0];
    let mut meas_offsets = vec![0];
    for mdl in &models {
        state_offsets.push(state_offsets.last().unwrap() + mdl.state_dim());
        meas_offsets.push(meas_offsets.last().unwrap() + mdl.meas_dim());
    }
    let m = *state_offsets.last().unwrap();

    if query.len() != horizon + 1 {
        return Err(Error::Dimension {
            context: "query sequence length".into(),
            expected: (horizon + 1).to_string(),
            found: query.len().to_string(),
        });
    }
    let z = query[0].nrows();
    for (t, l) in query.iter().enumerate() {
        if l.ncols() != m || l.nrows() != z {
            return Err(Error::Dimension {
                context: format!("L at t={t}"),
                expected: format!("{z}x{m}"),
                found: shape(l),
            });
        }
    }

    let stack = |f: &dyn Fn(&IndividualModel) -> &DMatrix<f64>| -> DMatrix<f64> {
        let blocks: Vec<&DMatrix<f64>> = models.iter().map(f).collect();
        block_diag(&blocks)
    };
    let transition = (0..horizon).map(|t| stack(&|mdl| &mdl.transition[t])).collect();
    let observation = (0..=horizon).map(|t| stack(&|mdl| &mdl.observation[t])).collect();
    let process_noise = (0..horizon).map(|t| stack(&|mdl| &mdl.process_noise[t])).collect();
    let measurement_noise = stack(&|mdl| &mdl.measurement_noise);
    let initial_covariance = stack(&|mdl| &mdl.initial_covariance);
    let mut initial_mean = DVector::zeros(m);
    for (i, mdl) in models.iter().enumerate() {
        initial_mean
            .rows_mut(state_offsets[i], mdl.state_dim())
            .copy_from(&mdl.initial_mean);
    }

    Ok(GlobalModel {
        participants: models,
        transition,
        observation,
        process_noise,
        measurement_noise,
        initial_mean,
        initial_covariance,
        query,
        state_offsets,
        meas_offsets,
    })
}

/// Horizontal concatenation `[L_1 … L_n]` of per-participant row selectors.
///
/// `state_dims[i]` is the expected column count of `rows[i]`.
pub fn query_from_rows(rows: &[DMatrix<f64>], state_dims: &[usize]) -> Result<DMatrix<f64>> {
    if rows.len() != state_dims.len() {
        return Err(Error::Dimension {
            context: "query selectors".into(),
            expected: format!("{} selectors", state_dims.len()),
            found: rows.len().to_string(),
        });
    }
    let z = rows.first().map_or(0, |r| r.nrows());
    for (i, (r, &mi)) in rows.iter().zip(state_dims).enumerate() {
        if r.ncols() != mi || r.nrows() != z {
            return Err(Error::ParticipantDimension {
                participant: i,
                time: None,
                what: "query selector",
                expected: format!("{z}x{mi}"),
                found: shape(r),
            });
        }
    }
    let m: usize = state_dims.iter().sum();
    let mut out = DMatrix::zeros(z, m);
    let mut col = 0;
    for r in rows {
        out.view_mut((0, col), (z, r.ncols())).copy_from(r);
        col += r.ncols();
    }
    Ok(out)
}

impl GlobalModel {
    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }
    pub fn horizon(&self) -> usize {
        self.transition.len()
    }
    /// `m = Σ m_i`.
    pub fn state_dim(&self) -> usize {
        *self.state_offsets.last().unwrap()
    }
    /// `p = Σ p_i`.
    pub fn meas_dim(&self) -> usize {
        *self.meas_offsets.last().unwrap()
    }
    /// Row count of `L_t`.
    pub fn query_dim(&self) -> usize {
        self.query[0].nrows()
    }
    pub fn participants(&self) -> &[IndividualModel] {
        &self.participants
    }
    pub fn transition(&self, t: usize) -> &DMatrix<f64> {
        &self.transition[t]
    }
    pub fn observation(&self, t: usize) -> &DMatrix<f64> {
        &self.observation[t]
    }
    pub fn process_noise(&self, t: usize) -> &DMatrix<f64> {
        &self.process_noise[t]
    }
    pub fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.measurement_noise
    }
    pub fn query(&self, t: usize) -> &DMatrix<f64> {
        &self.query[t]
    }
    pub fn initial_mean(&self) -> &DVector<f64> {
        &self.initial_mean
    }
    /// `Σ̄₀ = diag(Σ⁻_{1,0}, …, Σ⁻_{n,0})`.
    pub fn initial_covariance(&self) -> &DMatrix<f64> {
        &self.initial_covariance
    }

    /// Measurement block sizes `p_1, …, p_n`.
    pub fn meas_block_sizes(&self) -> Vec<usize> {
        self.participants.iter().map(|m| m.meas_dim()).collect()
    }
    pub fn state_block_sizes(&self) -> Vec<usize> {
        self.participants.iter().map(|m| m.state_dim()).collect()
    }
    pub fn meas_offset(&self, i: usize) -> usize {
        self.meas_offsets[i]
    }
    pub fn state_offset(&self, i: usize) -> usize {
        self.state_offsets[i]
    }

    /// Selector `E_i` (p × p_i), identity in block `i`.
    pub fn selector(&self, i: usize) -> DMatrix<f64> {
        let pi = self.participants[i].meas_dim();
        let mut e = DMatrix::zeros(self.meas_dim(), pi);
        e.view_mut((self.meas_offsets[i], 0), (pi, pi))
            .fill_with_identity();
        e
    }

    /// Rebuild participant `i` from the diagonal blocks of the aggregate.
    pub fn extract_participant(&self, i: usize) -> Result<IndividualModel> {
        let (so, mi) = (self.state_offsets[i], self.participants[i].state_dim());
        let (mo, pi) = (self.meas_offsets[i], self.participants[i].meas_dim());
        let sq = |m: &DMatrix<f64>| m.view((so, so), (mi, mi)).into_owned();
        IndividualModel::new(
            i,
            self.transition.iter().map(sq).collect(),
            self.observation
                .iter()
                .map(|c| c.view((mo, so), (pi, mi)).into_owned())
                .collect(),
            self.process_noise.iter().map(sq).collect(),
            self.measurement_noise.view((mo, mo), (pi, pi)).into_owned(),
            self.initial_mean.rows(so, mi).into_owned(),
            sq(&self.initial_covariance),
        )
    }

    /// The same model restricted to `t = 0..=horizon`.
    pub fn truncate(&self, horizon: usize) -> Result<GlobalModel> {
        if horizon > self.horizon() {
            return Err(Error::Dimension {
                context: "truncated horizon".into(),
                expected: format!("<= {}", self.horizon()),
                found: horizon.to_string(),
            });
        }
        let mut out = self.clone();
        for p in &mut out.participants {
            p.transition.truncate(horizon);
            p.process_noise.truncate(horizon);
            p.observation.truncate(horizon + 1);
        }
        out.transition.truncate(horizon);
        out.process_noise.truncate(horizon);
        out.observation.truncate(horizon + 1);
        out.query.truncate(horizon + 1);
        Ok(out)
    }

    /// True when `A_t`, `W_t`, `C_t` and `L_t` do not depend on `t` and at
    /// least one transition exists.
    pub fn is_time_invariant(&self) -> bool {
        let same = |v: &[DMatrix<f64>]| v.windows(2).all(|w| w[0] == w[1]);
        self.horizon() >= 1
            && same(&self.transition)
            && same(&self.observation)
            && same(&self.process_noise)
            && same(&self.query)
    }
}

/// Per-participant adjacency bounds `ρ_i`: adjacent signals differ in one
/// participant's stream by at most `ρ_i` in ℓ2 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencySpec {
    rho: Vec<f64>,
}

impl AdjacencySpec {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::Domain("adjacency needs at least one bound".into()));
        }
        if let Some((i, r)) = rho.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Domain(format!("rho[{i}] = {r} must be positive and finite")));
        }
        Ok(Self { rho })
    }

    /// Same bound for all `n` participants.
    pub fn uniform(n: usize, rho: f64) -> Result<Self> {
        Self::new(vec![rho; n])
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
    pub fn len(&self) -> usize {
        self.rho.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}
