//! Scenario files: JSON schema, validation with field paths, and conversion
//! to the library's model types.

use std::path::Path;

use dpkf::linalg::{is_positive_definite, is_symmetric, SYMMETRY_TOL};
use dpkf::privacy::{kappa, ShapingMatrix};
use dpkf::{build_global, query_from_rows, AdjacencySpec, GlobalModel, Horizon, IndividualModel, PrivacySpec};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Row-major nested array.
pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub participants: Vec<ParticipantConfig>,
    pub privacy: PrivacyConfig,
    pub horizon: HorizonConfig,
    pub mechanism: MechanismConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

/// One participant's time-invariant model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantConfig {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "C")]
    pub c: Matrix,
    #[serde(rename = "W")]
    pub w: Matrix,
    #[serde(rename = "V")]
    pub v: Matrix,
    pub x0_mean: Vec<f64>,
    #[serde(rename = "Sigma0")]
    pub sigma0: Matrix,
    pub rho: f64,
    /// This participant's columns of the query matrix, `z × m_i`.
    #[serde(rename = "L_row")]
    pub l_row: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    pub epsilon: f64,
    pub delta: f64,
}

/// `"stationary"` or a finite horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonConfig {
    Finite(usize),
    Named(HorizonKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonKeyword {
    Stationary,
}

impl HorizonConfig {
    pub fn to_horizon(self) -> Horizon {
        match self {
            HorizonConfig::Finite(t) => Horizon::Finite(t),
            HorizonConfig::Named(HorizonKeyword::Stationary) => Horizon::Stationary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MechanismConfig {
    /// `D = diag(I/ρ_i)`: each participant noised at its own bound.
    #[serde(rename = "input_perturbation")]
    InputPerturbation,
    /// `D = I`: common noise calibrated to `max_i ρ_i`.
    #[serde(rename = "input_perturbation_maxrho")]
    InputPerturbationMaxRho,
    #[serde(rename = "two_stage_sdp")]
    TwoStageSdp,
    #[serde(rename = "fixed_D")]
    FixedD(Matrix),
}

impl MechanismConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MechanismConfig::InputPerturbation => "input_perturbation",
            MechanismConfig::InputPerturbationMaxRho => "input_perturbation_maxrho",
            MechanismConfig::TwoStageSdp => "two_stage_sdp",
            MechanismConfig::FixedD(_) => "fixed_D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub replications: usize,
    pub seed: u64,
    /// Simulated steps for a stationary scenario; finite scenarios use `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

/// Steps simulated for a stationary scenario when `simulation.steps` is absent.
pub const DEFAULT_STATIONARY_STEPS: usize = 50;

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    participants: Vec<ParticipantConfig>,
    pub adj: AdjacencySpec,
    pub privacy: PrivacySpec,
    pub horizon: Horizon,
    pub mechanism: MechanismConfig,
    pub simulation: Option<SimulationConfig>,
    /// Model over the design horizon (one step for stationary scenarios).
    pub model: GlobalModel,
}

pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ScenarioConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::validation(if path == "." { "config".into() } else { path }, e.inner().to_string())
    })
}

fn matrix(m: &Matrix, path: &str) -> Result<DMatrix<f64>, CliError> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(CliError::validation(path, "matrix must be non-empty"));
    }
    if let Some(r) = m.iter().position(|r| r.len() != cols) {
        return Err(CliError::validation(
            format!("{path}[{r}]"),
            format!("row has {} entries, expected {cols}", m[r].len()),
        ));
    }
    if m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CliError::validation(path, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| m[i][j]))
}

fn to_nested(m: &DMatrix<f64>) -> Matrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn shape_is(m: &DMatrix<f64>, rows: usize, cols: usize, path: &str) -> Result<(), CliError> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(CliError::validation(
            path,
            format!("expected {rows}x{cols}, found {}x{}", m.nrows(), m.ncols()),
        ))
    }
}

fn spd(m: &DMatrix<f64>, path: &str) -> Result<(), CliError> {
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(CliError::validation(path, "must be symmetric"));
    }
    if !is_positive_definite(m) {
        return Err(CliError::validation(path, "must be positive definite"));
    }
    Ok(())
}

struct Parsed {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    w: DMatrix<f64>,
    v: DMatrix<f64>,
    x0: DVector<f64>,
    sigma0: DMatrix<f64>,
    l: DMatrix<f64>,
}

fn parse_participant(p: &ParticipantConfig, i: usize) -> Result<Parsed, CliError> {
    let at = |field: &str| format!("participants[{i}].{field}");
    let a = matrix(&p.a, &at("A"))?;
    let m = a.nrows();
    shape_is(&a, m, m, &at("A"))?;
    let c = matrix(&p.c, &at("C"))?;
    shape_is(&c, c.nrows(), m, &at("C"))?;
    let w = matrix(&p.w, &at("W"))?;
    shape_is(&w, m, m, &at("W"))?;
    spd(&w, &at("W"))?;
    let v = matrix(&p.v, &at("V"))?;
    shape_is(&v, c.nrows(), c.nrows(), &at("V"))?;
    spd(&v, &at("V"))?;
    if p.x0_mean.len() != m {
        return Err(CliError::validation(
            at("x0_mean"),
            format!("expected {m} entries, found {}", p.x0_mean.len()),
        ));
    }
    if p.x0_mean.iter().any(|x| !x.is_finite()) {
        return Err(CliError::validation(at("x0_mean"), "entries must be finite"));
    }
    let sigma0 = matrix(&p.sigma0, &at("Sigma0"))?;
    shape_is(&sigma0, m, m, &at("Sigma0"))?;
    spd(&sigma0, &at("Sigma0"))?;
    if !(p.rho.is_finite() && p.rho > 0.0) {
        return Err(CliError::validation(at("rho"), format!("must be positive and finite, got {}", p.rho)));
    }
    let l = matrix(&p.l_row, &at("L_row"))?;
    shape_is(&l, l.nrows(), m, &at("L_row"))?;
    Ok(Parsed {
        a,
        c,
        w,
        v,
        x0: DVector::from_vec(p.x0_mean.clone()),
        sigma0,
        l,
    })
}

impl ScenarioConfig {
    /// Check every field and build the internal scenario.
    pub fn validate(&self) -> Result<Scenario, CliError> {
        if self.participants.is_empty() {
            return Err(CliError::validation("participants", "at least one participant is required"));
        }
        let parsed = self
            .participants
            .iter()
            .enumerate()
            .map(|(i, p)| parse_participant(p, i))
            .collect::<Result<Vec<_>, _>>()?;
        let z = parsed[0].l.nrows();
        if let Some(i) = parsed.iter().position(|p| p.l.nrows() != z) {
            return Err(CliError::validation(
                format!("participants[{i}].L_row"),
                format!("has {} rows, participant 0 has {z}", parsed[i].l.nrows()),
            ));
        }
        let privacy =
            kappa(self.privacy.epsilon, self.privacy.delta).map_err(|e| CliError::validation("privacy", e.to_string()))?;
        let adj = AdjacencySpec::new(self.participants.iter().map(|p| p.rho).collect())
            .map_err(|e| CliError::validation("participants", e.to_string()))?;
        let horizon = self.horizon.to_horizon();
        let p_total: usize = parsed.iter().map(|p| p.c.nrows()).sum();
        if let MechanismConfig::FixedD(d) = &self.mechanism {
            let d = matrix(d, "mechanism.fixed_D")?;
            shape_is(&d, d.nrows(), p_total, "mechanism.fixed_D")?;
            if d.iter().all(|&x| x == 0.0) {
                return Err(CliError::validation("mechanism.fixed_D", "must not be identically zero"));
            }
        }
        if let Some(sim) = &self.simulation {
            if sim.replications == 0 {
                return Err(CliError::validation("simulation.replications", "must be at least 1"));
            }
            if sim.steps == Some(0) {
                return Err(CliError::validation("simulation.steps", "must be at least 1"));
            }
        }
        let design_steps = match horizon {
            Horizon::Finite(t) => t,
            Horizon::Stationary => 1,
        };
        let model = build_model(&parsed, design_steps)?;
        Ok(Scenario {
            participants: self.participants.clone(),
            adj,
            privacy,
            horizon,
            mechanism: self.mechanism.clone(),
            simulation: self.simulation,
            model,
        })
    }
}

fn build_model(parsed: &[Parsed], horizon: usize) -> Result<GlobalModel, CliError> {
    let models = parsed
        .iter()
        .enumerate()
        .map(|(i, p)| {
            IndividualModel::constant(
                i,
                p.a.clone(),
                p.c.clone(),
                p.w.clone(),
                p.v.clone(),
                p.x0.clone(),
                p.sigma0.clone(),
                horizon,
            )
            .map_err(|e| CliError::validation(format!("participants[{i}]"), e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<DMatrix<f64>> = parsed.iter().map(|p| p.l.clone()).collect();
    let dims: Vec<usize> = parsed.iter().map(|p| p.a.nrows()).collect();
    let l = query_from_rows(&rows, &dims).map_err(|e| CliError::validation("participants", e.to_string()))?;
    build_global(models, vec![l; horizon + 1]).map_err(|e| CliError::validation("participants", e.to_string()))
}

impl Scenario {
    /// The same participants over `t = 0..=horizon`.
    pub fn model_with_horizon(&self, horizon: usize) -> Result<GlobalModel, CliError> {
        let parsed = self
            .participants
            .iter()
            .enumerate()
            .map(|(i, p)| parse_participant(p, i))
            .collect::<Result<Vec<_>, _>>()?;
        build_model(&parsed, horizon)
    }

    /// Steps covered by a simulation of this scenario.
    pub fn simulation_steps(&self) -> usize {
        match self.horizon {
            Horizon::Finite(t) => t,
            Horizon::Stationary => self
                .simulation
                .and_then(|s| s.steps)
                .unwrap_or(DEFAULT_STATIONARY_STEPS),
        }
    }

    /// Shaping matrix for a non-optimized mechanism; `None` for the SDP design.
    pub fn fixed_shaping(&self, mechanism: &MechanismConfig) -> Result<Option<ShapingMatrix>, CliError> {
        let blocks = self.model.meas_block_sizes();
        let shaping = match mechanism {
            MechanismConfig::InputPerturbation => ShapingMatrix::input_perturbation(blocks, &self.adj),
            MechanismConfig::InputPerturbationMaxRho => ShapingMatrix::identity(blocks, &self.adj),
            MechanismConfig::FixedD(d) => ShapingMatrix::new(matrix(d, "mechanism.fixed_D")?, blocks, &self.adj),
            MechanismConfig::TwoStageSdp => return Ok(None),
        };
        shaping
            .map(Some)
            .map_err(|e| CliError::validation("mechanism", e.to_string()))
    }

    /// Rebuild the configuration from the internal model.
    pub fn to_config(&self) -> Result<ScenarioConfig, CliError> {
        // A zero-step design model carries no transitions; use one step.
        let model = &self.model_with_horizon(1)?;
        let l = model.query(0);
        let participants = (0..model.n_participants())
            .map(|i| {
                let p = model
                    .extract_participant(i)
                    .map_err(|e| CliError::validation(format!("participants[{i}]"), e.to_string()))?;
                let (off, m) = (model.state_offset(i), p.state_dim());
                Ok(ParticipantConfig {
                    a: to_nested(&p.transition()[0]),
                    c: to_nested(&p.observation()[0]),
                    w: to_nested(&p.process_noise()[0]),
                    v: to_nested(p.measurement_noise()),
                    x0_mean: p.initial_mean().iter().copied().collect(),
                    sigma0: to_nested(p.initial_covariance()),
                    rho: self.adj.rho()[i],
                    l_row: to_nested(&l.columns(off, m).into_owned()),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(ScenarioConfig {
            participants,
            privacy: PrivacyConfig {
                epsilon: self.privacy.epsilon,
                delta: self.privacy.delta,
            },
            horizon: match self.horizon {
                Horizon::Finite(t) => HorizonConfig::Finite(t),
                Horizon::Stationary => HorizonConfig::Named(HorizonKeyword::Stationary),
            },
            mechanism: self.mechanism.clone(),
            simulation: self.simulation,
        })
    }

    /// Participants as the homogeneous scalar example, when they are one.
    pub fn scalar_scenario(&self) -> Option<dpkf::ScalarScenario> {
        let first = self.participants.first()?;
        let scalar = |m: &Matrix| (m.len() == 1 && m[0].len() == 1).then(|| m[0][0]);
        let (a, c, w, v) = (scalar(&first.a)?, scalar(&first.c)?, scalar(&first.w)?, scalar(&first.v)?);
        let same = self.participants.iter().all(|p| {
            p.a == first.a && p.c == first.c && p.w == first.w && p.v == first.v && p.rho == first.rho && p.l_row == vec![vec![1.0]]
        });
        same.then_some(dpkf::ScalarScenario {
            a,
            c,
            sigma_w2: w,
            sigma_v2: v,
            rho: first.rho,
            n: self.participants.len(),
            epsilon: self.privacy.epsilon,
            delta: self.privacy.delta,
        })
    }
}
