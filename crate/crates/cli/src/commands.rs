//! The four subcommands. Each writes its files under the output directory and
//! returns a short human-readable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dpkf::format::csv_num;
use dpkf::privacy::{MechanismSpec, ShapingMatrix};
use dpkf::riccati::{mse_aggregated_scalar, mse_input_perturbation_scalar, run_covariance_recursion, stationary_cost, ScalarMse};
use dpkf::sdp_design::DesignSettings;
use dpkf::{design_pipeline, run_plan, DesignSolution, Horizon, ScalarScenario, SimulationPlan};
use serde::Serialize;

use crate::config::{HorizonConfig, Matrix, MechanismConfig, Scenario};
use crate::error::CliError;

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub gap: Option<f64>,
}

impl Options {
    fn design_settings(&self) -> Result<DesignSettings, CliError> {
        let mut settings = DesignSettings::default();
        if let Some(gap) = self.gap {
            if !(gap.is_finite() && gap > 0.0) {
                return Err(CliError::validation("--gap", format!("must be positive, got {gap}")));
            }
            settings.solver.gap = gap;
            settings.solver.target_accuracy = settings.solver.target_accuracy.min(gap);
        }
        Ok(settings)
    }

    fn replications(&self, scenario: &Scenario) -> Result<Option<usize>, CliError> {
        match self.replications {
            Some(0) => Err(CliError::validation("--replications", "must be at least 1")),
            Some(n) => Ok(Some(n)),
            None => Ok(scenario.simulation.map(|s| s.replications)),
        }
    }

    fn seed(&self, scenario: &Scenario) -> u64 {
        self.seed.or(scenario.simulation.map(|s| s.seed)).unwrap_or(0)
    }
}

/// A mechanism instantiated on a scenario together with its analytic MSE.
struct Evaluated {
    shaping: ShapingMatrix,
    design: Option<DesignSolution>,
    analytic_mse: f64,
}

fn analytic_mse(scenario: &Scenario, shaping: &ShapingMatrix) -> Result<f64, CliError> {
    Ok(match scenario.horizon {
        Horizon::Stationary => stationary_cost(&scenario.model, shaping, &scenario.privacy)?,
        Horizon::Finite(_) => run_covariance_recursion(&scenario.model, shaping, &scenario.privacy)?.cost,
    })
}

fn evaluate(scenario: &Scenario, mechanism: &MechanismConfig, settings: &DesignSettings) -> Result<Evaluated, CliError> {
    match scenario.fixed_shaping(mechanism)? {
        Some(shaping) => Ok(Evaluated {
            analytic_mse: analytic_mse(scenario, &shaping)?,
            shaping,
            design: None,
        }),
        None => {
            let design = design_pipeline(&scenario.model, &scenario.adj, &scenario.privacy, scenario.horizon, settings)?;
            Ok(Evaluated {
                shaping: design.shaping.clone(),
                analytic_mse: design.riccati_cost,
                design: Some(design),
            })
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn nested(m: &nalgebra::DMatrix<f64>) -> Matrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
pub struct ClosedForms {
    /// Predicted steady-state MSE of the sum; see the README on conventions.
    pub input_perturbation: ScalarMse,
    pub aggregated: ScalarMse,
}

fn closed_forms(scenario: &Scenario) -> Result<Option<ClosedForms>, CliError> {
    scenario
        .scalar_scenario()
        .map(|s| {
            Ok(ClosedForms {
                input_perturbation: mse_input_perturbation_scalar(&s)?,
                aggregated: mse_aggregated_scalar(&s)?,
            })
        })
        .transpose()
}

#[derive(Debug, Serialize)]
pub struct SolverReport {
    pub status: String,
    pub backend_status: String,
    pub sdp_objective: f64,
    pub dual_objective: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub max_violation: f64,
    pub iterations: u32,
    pub solve_seconds: f64,
    pub tightness: f64,
    pub round_trip_error: f64,
    pub raw_round_trip_error: Option<f64>,
    pub feasibility_scale: f64,
    pub coupling_ok: bool,
}

impl From<&DesignSolution> for SolverReport {
    fn from(d: &DesignSolution) -> Self {
        Self {
            status: d.status.to_string(),
            backend_status: d.backend_status.clone(),
            sdp_objective: d.sdp_objective,
            dual_objective: d.dual_objective,
            gap_abs: d.gap_abs,
            gap_rel: d.gap_rel,
            max_violation: d.max_violation,
            iterations: d.iterations,
            solve_seconds: d.solve_seconds,
            tightness: d.tightness,
            round_trip_error: d.round_trip_error,
            raw_round_trip_error: d.raw_round_trip_error,
            feasibility_scale: d.feasibility_scale,
            coupling_ok: d.coupling_ok,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DesignReport {
    pub mechanism: String,
    pub horizon: HorizonConfig,
    /// Posterior MSE of the mechanism: steady state, or time average over `0..=T`.
    pub analytic_mse: f64,
    #[serde(rename = "D")]
    pub d: Matrix,
    /// `Δ₂D`.
    pub sensitivity: f64,
    pub noise_std: f64,
    /// `ρ_i ‖D_i‖₂` per participant.
    pub block_norms: Vec<f64>,
    /// Whether each block norm equals the sensitivity bound 1 within tolerance.
    pub active: Vec<bool>,
    pub closed_form: Option<ClosedForms>,
    pub solver: Option<SolverReport>,
    pub warnings: Vec<String>,
}

fn horizon_config(h: Horizon) -> HorizonConfig {
    match h {
        Horizon::Finite(t) => HorizonConfig::Finite(t),
        Horizon::Stationary => HorizonConfig::Named(crate::config::HorizonKeyword::Stationary),
    }
}

fn d_csv(scenario: &Scenario, d: &nalgebra::DMatrix<f64>) -> String {
    let header: Vec<String> = scenario
        .model
        .meas_block_sizes()
        .iter()
        .enumerate()
        .flat_map(|(i, &w)| (0..w).map(move |k| format!("y{i}_{k}")))
        .collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in d.row_iter() {
        let cells: Vec<String> = row.iter().map(|&x| csv_num(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn design(scenario: &Scenario, opts: &Options) -> Result<(DesignReport, String), CliError> {
    let settings = opts.design_settings()?;
    let ev = evaluate(scenario, &scenario.mechanism, &settings)?;
    let block_norms = ev.shaping.weighted_block_norms();
    let report = DesignReport {
        mechanism: scenario.mechanism.name().into(),
        horizon: horizon_config(scenario.horizon),
        analytic_mse: ev.analytic_mse,
        d: nested(ev.shaping.matrix()),
        sensitivity: ev.shaping.sensitivity(),
        noise_std: scenario.privacy.kappa * ev.shaping.sensitivity(),
        active: block_norms.iter().map(|b| (b - 1.0).abs() <= settings.activity_tol).collect(),
        block_norms,
        closed_form: closed_forms(scenario)?,
        solver: ev.design.as_ref().map(SolverReport::from),
        warnings: ev.design.as_ref().map(|d| d.warnings.clone()).unwrap_or_default(),
    };
    write(&opts.out, "design.json", &json(&report))?;
    write(&opts.out, "D.csv", &d_csv(scenario, ev.shaping.matrix()))?;

    let mut summary = format!(
        "mechanism {}: analytic MSE {}, Δ₂D = {}, q = {}\n",
        report.mechanism,
        csv_num(report.analytic_mse),
        csv_num(report.sensitivity),
        ev.shaping.output_dim()
    );
    if let Some(s) = &report.solver {
        writeln!(
            summary,
            "SDP objective {} ({}, gap {:.1e}, {} iterations)",
            csv_num(s.sdp_objective),
            s.status,
            s.gap_abs.min(s.gap_rel),
            s.iterations
        )
        .unwrap();
    }
    if let Some(cf) = &report.closed_form {
        writeln!(
            summary,
            "closed form: input perturbation {}, aggregated {}",
            csv_num(cf.input_perturbation.mse),
            csv_num(cf.aggregated.mse)
        )
        .unwrap();
    }
    for w in &report.warnings {
        writeln!(summary, "warning: {w}").unwrap();
    }
    Ok((report, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub mechanism: String,
    /// What `analytic_mse` measures.
    pub basis: String,
    pub analytic_mse: f64,
    pub empirical_mse: Option<f64>,
    pub stderr: Option<f64>,
}

fn compare_rows_csv(rows: &[CompareRow]) -> String {
    let opt = |x: Option<f64>| x.map(csv_num).unwrap_or_default();
    let mut out = String::from("mechanism,basis,analytic_mse,empirical_mse,stderr\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.mechanism,
            r.basis,
            csv_num(r.analytic_mse),
            opt(r.empirical_mse),
            opt(r.stderr)
        )
        .unwrap();
    }
    out
}

/// Empirical counterpart of the analytic column: the last-step MSE for a
/// stationary scenario, the time average otherwise.
fn empirical(scenario: &Scenario, shaping: &ShapingMatrix, replications: usize, seed: u64) -> Result<(f64, f64), CliError> {
    let plan = SimulationPlan {
        model: scenario.model_with_horizon(scenario.simulation_steps())?,
        mechanism: MechanismSpec::new(shaping.clone(), scenario.privacy),
        replications,
        seed,
    };
    let report = run_plan(&plan)?;
    Ok(match scenario.horizon {
        Horizon::Stationary => (
            *report.empirical_mse.last().expect("non-empty horizon"),
            *report.std_error.last().expect("non-empty horizon"),
        ),
        Horizon::Finite(_) => (report.empirical_time_average, report.time_average_std_error),
    })
}

pub fn compare(scenario: &Scenario, opts: &Options) -> Result<(Vec<CompareRow>, String), CliError> {
    let settings = opts.design_settings()?;
    let mut mechanisms = Vec::new();
    if matches!(scenario.mechanism, MechanismConfig::TwoStageSdp | MechanismConfig::FixedD(_)) {
        mechanisms.push(scenario.mechanism.clone());
    }
    mechanisms.push(MechanismConfig::InputPerturbation);
    mechanisms.push(MechanismConfig::InputPerturbationMaxRho);
    let basis = match scenario.horizon {
        Horizon::Stationary => "posterior_steady_state",
        Horizon::Finite(_) => "posterior_time_average",
    };
    // Only simulate when asked to on the command line; it dominates run time.
    let sim = match opts.replications {
        Some(_) => opts.replications(scenario)?.map(|n| (n, opts.seed(scenario))),
        None => None,
    };

    let mut rows = Vec::new();
    for m in &mechanisms {
        let ev = evaluate(scenario, m, &settings)?;
        let emp = sim.map(|(n, seed)| empirical(scenario, &ev.shaping, n, seed)).transpose()?;
        rows.push(CompareRow {
            mechanism: m.name().into(),
            basis: basis.into(),
            analytic_mse: ev.analytic_mse,
            empirical_mse: emp.map(|e| e.0),
            stderr: emp.map(|e| e.1),
        });
    }
    if let Some(cf) = closed_forms(scenario)? {
        for (name, v) in [("input_perturbation", cf.input_perturbation), ("aggregated", cf.aggregated)] {
            rows.push(CompareRow {
                mechanism: name.into(),
                basis: "closed_form_predicted".into(),
                analytic_mse: v.mse,
                empirical_mse: None,
                stderr: None,
            });
        }
    }
    write(&opts.out, "compare.csv", &compare_rows_csv(&rows))?;

    let mut summary = format!("{:<26} {:<24} {:>16} {:>24}\n", "mechanism", "basis", "analytic MSE", "empirical MSE ± SE");
    for r in &rows {
        let emp = match (r.empirical_mse, r.stderr) {
            (Some(e), Some(s)) => format!("{e:.6} ± {s:.2e}"),
            _ => String::new(),
        };
        writeln!(summary, "{:<26} {:<24} {:>16.6} {:>24}", r.mechanism, r.basis, r.analytic_mse, emp).unwrap();
    }
    Ok((rows, summary))
}

pub fn simulate(scenario: &Scenario, opts: &Options) -> Result<(dpkf::SimulationReport, String), CliError> {
    let replications = opts
        .replications(scenario)?
        .ok_or_else(|| CliError::validation("simulation.replications", "required (config or --replications)"))?;
    let seed = opts.seed(scenario);
    let settings = opts.design_settings()?;
    let ev = evaluate(scenario, &scenario.mechanism, &settings)?;
    let plan = SimulationPlan {
        model: scenario.model_with_horizon(scenario.simulation_steps())?,
        mechanism: MechanismSpec::new(ev.shaping, scenario.privacy),
        replications,
        seed,
    };
    let report = run_plan(&plan)?;
    write(&opts.out, "sim.json", &json(&report))?;
    write(&opts.out, "sim.csv", &report.to_csv())?;
    let z = (report.empirical_time_average - report.analytic_time_average) / report.time_average_std_error;
    let summary = format!(
        "{} replications (seed {seed}): time-average MSE empirical {} vs analytic {} ({z:+.2} SE), {:.2}s\n",
        report.replications,
        csv_num(report.empirical_time_average),
        csv_num(report.analytic_time_average),
        report.wall_seconds
    );
    Ok((report, summary))
}

/// Built-in homogeneous scalar example used when no config is given.
pub fn default_scalar_scenario() -> ScalarScenario {
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

#[derive(Debug, Serialize)]
pub struct ScalarReport {
    pub scenario: ScalarScenario,
    pub kappa: f64,
    pub gamma: f64,
    pub input_perturbation: ScalarMse,
    pub aggregated: ScalarMse,
}

pub fn scalar_example(scenario: &ScalarScenario, opts: &Options) -> Result<(ScalarReport, String), CliError> {
    scenario
        .validate()
        .map_err(|e| CliError::validation("participants", e.to_string()))?;
    let report = ScalarReport {
        scenario: *scenario,
        kappa: scenario.privacy()?.kappa,
        gamma: scenario.gamma()?,
        input_perturbation: mse_input_perturbation_scalar(scenario)?,
        aggregated: mse_aggregated_scalar(scenario)?,
    };
    write(&opts.out, "scalar.json", &json(&report))?;
    let summary = format!(
        "n = {}, γ = {}: input perturbation MSE {}, aggregated MSE {}\n",
        scenario.n,
        csv_num(report.gamma),
        csv_num(report.input_perturbation.mse),
        csv_num(report.aggregated.mse)
    );
    Ok((report, summary))
}
