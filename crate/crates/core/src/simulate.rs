//! Monte Carlo validation of the released estimate.
//!
//! Each replication draws a state trajectory from the aggregate model,
//! passes the measurements through the mechanism and filters the released
//! signal with the gains of [`run_covariance_recursion`]. Squared errors of
//! `ẑ_t` are then compared with the analytic `Tr(L_t Σ_t L_tᵀ)`.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::csv_num;
use crate::lin_model::GlobalModel;
use crate::linalg::psd_sqrt_factor;
use crate::privacy::{apply_mechanism, seeded_rng, MechanismSpec};
use crate::riccati::{run_covariance_recursion, FilterDesign};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationPlan {
    /// Simulated over the model's full horizon.
    pub model: GlobalModel,
    pub mechanism: MechanismSpec,
    pub replications: usize,
    pub seed: u64,
}

/// One simulated run, indexed by `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub released: Vec<DVector<f64>>,
    pub estimates: Vec<DVector<f64>>,
    pub targets: Vec<DVector<f64>>,
}

impl Trajectory {
    /// `‖z_t − ẑ_t‖²` per step.
    pub fn squared_errors(&self) -> Vec<f64> {
        self.targets
            .iter()
            .zip(&self.estimates)
            .map(|(z, zh)| (z - zh).norm_squared())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub replications: usize,
    pub seed: u64,
    pub analytic_mse: Vec<f64>,
    pub empirical_mse: Vec<f64>,
    /// Sample standard deviation of the squared error over `√replications`.
    pub std_error: Vec<f64>,
    /// Componentwise mean of `z_t − ẑ_t`.
    pub mean_error: Vec<DVector<f64>>,
    pub mean_error_std_error: Vec<DVector<f64>>,
    pub analytic_time_average: f64,
    /// Mean over replications of the time-averaged squared error.
    pub empirical_time_average: f64,
    pub time_average_std_error: f64,
    /// Not serialized, so identical plans give identical report bytes.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl SimulationReport {
    /// Per-step table `t,analytic_mse,empirical_mse,stderr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,analytic_mse,empirical_mse,stderr\n");
        for t in 0..self.analytic_mse.len() {
            writeln!(
                out,
                "{t},{},{},{}",
                csv_num(self.analytic_mse[t]),
                csv_num(self.empirical_mse[t]),
                csv_num(self.std_error[t])
            )
            .unwrap();
        }
        out
    }
}

/// Square-root factors of every noise covariance, computed once per plan.
struct Sampler {
    initial: DMatrix<f64>,
    process: Vec<DMatrix<f64>>,
    measurement: DMatrix<f64>,
}

impl Sampler {
    fn new(model: &GlobalModel) -> Self {
        Self {
            initial: psd_sqrt_factor(model.initial_covariance()),
            process: (0..model.horizon())
                .map(|t| psd_sqrt_factor(model.process_noise(t)))
                .collect(),
            measurement: psd_sqrt_factor(model.measurement_noise()),
        }
    }
}

fn gaussian<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let g = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * g
}

fn check_dims(model: &GlobalModel, filter: &FilterDesign, mechanism: &MechanismSpec) -> Result<()> {
    let d = mechanism.shaping.matrix();
    let ok = d.ncols() == model.meas_dim()
        && filter.gains.len() == model.horizon() + 1
        && filter.gains.iter().all(|k| k.shape() == (model.state_dim(), d.nrows()));
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension {
            context: "simulation design".into(),
            expected: format!(
                "{} gains of {}x{} and D with {} columns",
                model.horizon() + 1,
                model.state_dim(),
                d.nrows(),
                model.meas_dim()
            ),
            found: format!("{} gains, D {}x{}", filter.gains.len(), d.nrows(), d.ncols()),
        })
    }
}

fn run_once<R: Rng + ?Sized>(
    model: &GlobalModel,
    filter: &FilterDesign,
    mechanism: &MechanismSpec,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<Trajectory> {
    let horizon = model.horizon();
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon + 1),
        measurements: Vec::with_capacity(horizon + 1),
        released: Vec::with_capacity(horizon + 1),
        estimates: Vec::with_capacity(horizon + 1),
        targets: Vec::with_capacity(horizon + 1),
    };
    let mut x = model.initial_mean() + gaussian(&sampler.initial, rng);
    let mut prior = model.initial_mean().clone();
    for t in 0..=horizon {
        let y = model.observation(t) * &x + gaussian(&sampler.measurement, rng);
        let s = apply_mechanism(mechanism, &y, rng)?;
        let innovation = &s - &filter.observation[t] * &prior;
        let post = &prior + &filter.gains[t] * innovation;
        traj.estimates.push(model.query(t) * &post);
        traj.targets.push(model.query(t) * &x);
        traj.states.push(x.clone());
        traj.measurements.push(y);
        traj.released.push(s);
        if t < horizon {
            prior = model.transition(t) * &post;
            x = model.transition(t) * &x + gaussian(&sampler.process[t], rng);
        }
    }
    Ok(traj)
}

/// Draw one trajectory and filter it. All randomness comes from `rng`.
pub fn simulate_once<R: Rng + ?Sized>(
    model: &GlobalModel,
    filter: &FilterDesign,
    mechanism: &MechanismSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    check_dims(model, filter, mechanism)?;
    run_once(model, filter, mechanism, &Sampler::new(model), rng)
}

/// Sample mean and standard error of the mean.
fn mean_and_se(xs: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run every replication on its own `(seed, replication)` stream and
/// aggregate in replication order.
pub fn run_plan(plan: &SimulationPlan) -> Result<SimulationReport> {
    if plan.replications == 0 {
        return Err(Error::InvalidPlan("replications must be at least 1".into()));
    }
    let start = Instant::now();
    let model = &plan.model;
    let filter = run_covariance_recursion(model, &plan.mechanism.shaping, &plan.mechanism.privacy)?;
    check_dims(model, &filter, &plan.mechanism)?;
    let sampler = Sampler::new(model);

    let runs: Vec<(Vec<f64>, Vec<DVector<f64>>)> = (0..plan.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeded_rng(plan.seed, r as u64);
            let traj = run_once(model, &filter, &plan.mechanism, &sampler, &mut rng)?;
            let errors = traj
                .targets
                .iter()
                .zip(&traj.estimates)
                .map(|(z, zh)| z - zh)
                .collect();
            Ok((traj.squared_errors(), errors))
        })
        .collect::<Result<_>>()?;

    let steps = model.horizon() + 1;
    let z = model.query_dim();
    let mut empirical_mse = Vec::with_capacity(steps);
    let mut std_error = Vec::with_capacity(steps);
    let mut mean_error = Vec::with_capacity(steps);
    let mut mean_error_std_error = Vec::with_capacity(steps);
    for t in 0..steps {
        let (m, se) = mean_and_se(runs.iter().map(|(sq, _)| sq[t]));
        empirical_mse.push(m);
        std_error.push(se);
        let mut mean = DVector::zeros(z);
        let mut mse = DVector::zeros(z);
        for k in 0..z {
            let (m, se) = mean_and_se(runs.iter().map(|(_, e)| e[t][k]));
            mean[k] = m;
            mse[k] = se;
        }
        mean_error.push(mean);
        mean_error_std_error.push(mse);
    }
    let (empirical_time_average, time_average_std_error) =
        mean_and_se(runs.iter().map(|(sq, _)| sq.iter().sum::<f64>() / steps as f64));

    Ok(SimulationReport {
        replications: plan.replications,
        seed: plan.seed,
        analytic_mse: filter.per_time_mse.clone(),
        empirical_mse,
        std_error,
        mean_error,
        mean_error_std_error,
        analytic_time_average: filter.cost,
        empirical_time_average,
        time_average_std_error,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
