//! Receding-horizon energy management under the 22-predictor matrix.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use poc_core::belief::ScenarioBelief;
use poc_core::measures::{mse_projected, monotonicity_audit, AuditEntry, AuditReport, MeasureKind};
use poc_core::model::DisturbanceSequence;
use poc_core::predictors::{fit_autoregression, VelocityObservation, VelocityPredictor, AR_HISTORY_LEN};
use poc_core::solver::{posterior_optimal, run_type3, CachePolicy, SolveOptions, StepBelief, TreeSolver};
use poc_core::{PocError, Result};

use super::cycle::DrivingCycle;
use super::model::{cost_breakdown, CostBreakdown, HevParams};

/// Predictor types of the matrix, as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PredictorKind {
    ConstantVelocity,
    LinearDecay { gamma: f64 },
    ExponentialDecay { lambda: f64 },
    /// Coefficients are fitted on the driving cycle when omitted.
    Autoregressive {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coeffs: Option<[f64; AR_HISTORY_LEN]>,
    },
    ZeroMeanGaussian { sigma: f64 },
    StochasticLinearDecay { sigma: f64, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorEntry {
    pub id: String,
    #[serde(flatten)]
    pub kind: PredictorKind,
}

impl PredictorEntry {
    pub fn new(id: impl Into<String>, kind: PredictorKind) -> Self {
        Self { id: id.into(), kind }
    }

    /// Family label: `D1`..`D4` (deterministic) or `S1`, `S2` (stochastic).
    pub fn family(&self) -> &'static str {
        match self.kind {
            PredictorKind::ConstantVelocity => "D1",
            PredictorKind::LinearDecay { .. } => "D2",
            PredictorKind::ExponentialDecay { .. } => "D3",
            PredictorKind::Autoregressive { .. } => "D4",
            PredictorKind::ZeroMeanGaussian { .. } => "S1",
            PredictorKind::StochasticLinearDecay { .. } => "S2",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self.kind,
            PredictorKind::ZeroMeanGaussian { .. } | PredictorKind::StochasticLinearDecay { .. }
        )
    }

    /// Parameters as `name=value` pairs joined by `;`.
    pub fn params(&self) -> String {
        match &self.kind {
            PredictorKind::ConstantVelocity => String::new(),
            PredictorKind::LinearDecay { gamma } => format!("gamma={gamma:?}"),
            PredictorKind::ExponentialDecay { lambda } => format!("lambda={lambda:?}"),
            PredictorKind::Autoregressive { coeffs: None } => "coeffs=fitted".into(),
            PredictorKind::Autoregressive { coeffs: Some(c) } => format!(
                "coeffs={}",
                c.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
            ),
            PredictorKind::ZeroMeanGaussian { sigma } => format!("sigma={sigma:?}"),
            PredictorKind::StochasticLinearDecay { sigma, gamma } => {
                format!("sigma={sigma:?};gamma={gamma:?}")
            }
        }
    }

    /// The concrete predictor; `fitted` supplies omitted AR coefficients.
    pub fn predictor(&self, fitted: Option<[f64; AR_HISTORY_LEN]>) -> Result<VelocityPredictor> {
        let p = match &self.kind {
            PredictorKind::ConstantVelocity => VelocityPredictor::ConstantVelocity,
            PredictorKind::LinearDecay { gamma } => VelocityPredictor::LinearDecay { gamma: *gamma },
            PredictorKind::ExponentialDecay { lambda } => VelocityPredictor::ExponentialDecay { lambda: *lambda },
            PredictorKind::Autoregressive { coeffs } => VelocityPredictor::Autoregressive {
                coeffs: coeffs.or(fitted).ok_or_else(|| {
                    PocError::Precondition(format!("predictor `{}` needs fitted coefficients", self.id))
                })?,
            },
            PredictorKind::ZeroMeanGaussian { sigma } => VelocityPredictor::ZeroMeanGaussian { sigma: *sigma },
            PredictorKind::StochasticLinearDecay { sigma, gamma } => VelocityPredictor::StochasticLinearDecay {
                sigma: *sigma,
                gamma: *gamma,
            },
        };
        p.validate()
            .map_err(|e| PocError::Domain(format!("predictor `{}`: {e}", self.id)))?;
        Ok(p)
    }
}

/// Standard deviations of the S1 and S2 variants `a`..`g`.
pub const MATRIX_SIGMAS: [f64; 7] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2];

/// D1, D2(gamma = 3, 4, 5), D3(lambda = e^-1, e^-2, e^-3), D4 (autoregression),
/// S1(sigma) and S2(sigma, gamma = 5) over [`MATRIX_SIGMAS`].
pub fn default_matrix() -> Vec<PredictorEntry> {
    let mut m = vec![PredictorEntry::new("D1", PredictorKind::ConstantVelocity)];
    for (tag, gamma) in ["a", "b", "c"].iter().zip([3.0, 4.0, 5.0]) {
        m.push(PredictorEntry::new(format!("D2-{tag}"), PredictorKind::LinearDecay { gamma }));
    }
    for (tag, k) in ["a", "b", "c"].iter().zip([-1.0f64, -2.0, -3.0]) {
        m.push(PredictorEntry::new(format!("D3-{tag}"), PredictorKind::ExponentialDecay { lambda: k.exp() }));
    }
    m.push(PredictorEntry::new("D4", PredictorKind::Autoregressive { coeffs: None }));
    let tags = ["a", "b", "c", "d", "e", "f", "g"];
    for (tag, sigma) in tags.iter().zip(MATRIX_SIGMAS) {
        m.push(PredictorEntry::new(format!("S1-{tag}"), PredictorKind::ZeroMeanGaussian { sigma }));
    }
    for (tag, sigma) in tags.iter().zip(MATRIX_SIGMAS) {
        m.push(PredictorEntry::new(
            format!("S2-{tag}"),
            PredictorKind::StochasticLinearDecay { sigma, gamma: 5.0 },
        ));
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HevConfig {
    pub params: HevParams,
    /// Predicted steps after the measured one; each window spans `horizon + 1` decisions.
    pub prediction_horizon: usize,
    pub predictors: Vec<PredictorEntry>,
    /// Parabolic sub-grid refinement of the applied torque.
    pub refine_controls: bool,
}

impl Default for HevConfig {
    fn default() -> Self {
        Self {
            params: HevParams::default(),
            prediction_horizon: 5,
            refine_controls: true,
            predictors: default_matrix(),
        }
    }
}

impl HevConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.prediction_horizon == 0 {
            return Err(PocError::Domain("prediction_horizon must be at least 1".into()));
        }
        if self.predictors.is_empty() {
            return Err(PocError::Domain("predictors list is empty".into()));
        }
        let mut ids: Vec<&str> = self.predictors.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(PocError::Domain(format!("duplicate predictor id `{}`", w[0])));
        }
        for p in &self.predictors {
            p.predictor(Some([0.0; AR_HISTORY_LEN]))?;
        }
        Ok(())
    }
}

/// Outcome of one predictor's receding-horizon run.
#[derive(Debug, Clone, PartialEq)]
pub struct HevRun {
    pub id: String,
    pub family: &'static str,
    pub params: String,
    pub cost: f64,
    /// Mean over windows of the velocity-sequence MSE.
    pub mse: f64,
    /// Mean Gaussian negative log-likelihood of realized accelerations (stochastic only).
    pub loglik: Option<f64>,
    /// Cost minus the full-cycle posterior-optimal cost.
    pub regret: f64,
    pub breakdown: CostBreakdown,
    pub torques: Vec<f64>,
    pub socs: Vec<f64>,
    /// Grid queries outside the SOC grid that were clamped.
    pub clamp_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HevAudit {
    pub group: &'static str,
    pub kind: MeasureKind,
    pub ids: Vec<String>,
    pub report: AuditReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HevExperiment {
    pub posterior_cost: f64,
    pub ar_coeffs: [f64; AR_HISTORY_LEN],
    pub runs: Vec<HevRun>,
    pub audits: Vec<HevAudit>,
}

fn solver(params: &HevParams, horizon: usize, refine_controls: bool) -> Result<TreeSolver> {
    let (system, cost) = params.problem(horizon)?;
    TreeSolver::new(
        system,
        cost,
        params.soc_grid()?,
        params.window_terminal(),
        SolveOptions {
            cache: CachePolicy::PerSolve,
            refine_controls,
            ..SolveOptions::default()
        },
    )
}

/// Full-cycle cost of the policy that knows the cycle in advance.
pub fn hev_posterior_cost(config: &HevConfig, cycle: &DrivingCycle) -> Result<f64> {
    let params = &config.params;
    let s = solver(params, cycle.len(), config.refine_controls)?;
    Ok(posterior_optimal(&s, &[params.soc_initial], &cycle.disturbances())?.realized_cost)
}

/// Runs one predictor over the cycle in receding windows.
pub fn run_predictor(
    config: &HevConfig,
    cycle: &DrivingCycle,
    entry: &PredictorEntry,
    ar_coeffs: [f64; AR_HISTORY_LEN],
    posterior_cost: f64,
) -> Result<HevRun> {
    let params = &config.params;
    let predictor = entry.predictor(Some(ar_coeffs))?;
    let n = cycle.len();
    if n < config.prediction_horizon + 1 {
        return Err(PocError::Precondition(format!(
            "cycle has {n} samples, fewer than prediction_horizon + 1"
        )));
    }
    let s = solver(params, n, config.refine_controls)?;
    let wbar = cycle.disturbances();
    let (vel, acc) = (cycle.velocities(), cycle.accelerations());
    let mut mse_sum = 0.0;
    let mut ll_sum = 0.0;
    let mut windows = 0usize;
    let traj = run_type3(
        &s,
        config.prediction_horizon + 1,
        |k, len, measured: &[Vec<f64>]| {
            let current = measured[k].clone();
            if len == 1 {
                return Ok(StepBelief::from(ScenarioBelief::point_mass(
                    k,
                    DisturbanceSequence::new(vec![current]),
                )));
            }
            let obs = VelocityObservation::new(k, vel[..=k].to_vec(), acc[..=k].to_vec())?;
            let forecast = predictor.forecast(&obs, len - 1)?;
            let realized = wbar.window(k + 1, len - 1);
            mse_sum += mse_projected(&realized, &forecast.belief, &[0])?;
            if let Some(nll) = forecast.neg_log_density(&acc[k + 1..k + len]) {
                ll_sum += nll;
            }
            windows += 1;
            Ok(StepBelief::from(forecast.belief.prefixed(current)?))
        },
        &[params.soc_initial],
        &wbar,
    )?;
    let torques: Vec<f64> = traj.controls.iter().map(|u| u[0]).collect();
    let breakdown = cost_breakdown(params, vel, acc, &torques)?;
    let windows = windows.max(1) as f64;
    Ok(HevRun {
        id: entry.id.clone(),
        family: entry.family(),
        params: entry.params(),
        cost: traj.realized_cost,
        mse: mse_sum / windows,
        loglik: entry.is_stochastic().then_some(ll_sum / windows),
        regret: traj.realized_cost - posterior_cost,
        breakdown,
        torques,
        socs: traj.states.iter().map(|x| x[0]).collect(),
        clamp_events: s.clamp_events(),
    })
}

/// Audit groups: the whole matrix, deterministic, stochastic, and per stochastic family.
const GROUPS: [&str; 5] = ["all", "deterministic", "stochastic", "S1", "S2"];

fn in_group(group: &str, run: &HevRun) -> bool {
    match group {
        "all" => true,
        "deterministic" => run.family.starts_with('D'),
        "stochastic" => run.family.starts_with('S'),
        family => run.family == family,
    }
}

fn measure_of(kind: MeasureKind, run: &HevRun) -> Option<f64> {
    match kind {
        MeasureKind::Mse => Some(run.mse),
        MeasureKind::Regret => Some(run.regret),
        MeasureKind::LogLikelihood => run.loglik,
    }
}

/// Monotonicity audits for every group and measure with at least two finite entries.
pub fn hev_audits(runs: &[HevRun], tolerance: f64) -> Result<Vec<HevAudit>> {
    let mut out = Vec::new();
    for group in GROUPS {
        for kind in MeasureKind::ALL {
            let members: Vec<&HevRun> = runs.iter().filter(|r| in_group(group, r)).collect();
            let entries: Option<Vec<AuditEntry>> = members
                .iter()
                .map(|r| measure_of(kind, r).map(|m| AuditEntry::new(r.id.clone(), m, r.cost)))
                .collect();
            let Some(entries) = entries else { continue };
            if entries.len() < 2 {
                continue;
            }
            out.push(HevAudit {
                group,
                kind,
                ids: members.iter().map(|r| r.id.clone()).collect(),
                report: monotonicity_audit(&entries, tolerance)?,
            });
        }
    }
    Ok(out)
}

/// Runs the whole matrix (in parallel over predictors) and audits it.
pub fn hev_experiment(config: &HevConfig, cycle: &DrivingCycle) -> Result<HevExperiment> {
    config.validate()?;
    let ar_coeffs = fit_autoregression(&[cycle.velocities()])?;
    let posterior_cost = hev_posterior_cost(config, cycle)?;
    let runs = config
        .predictors
        .par_iter()
        .map(|e| run_predictor(config, cycle, e, ar_coeffs, posterior_cost).map_err(|err| in_predictor(&e.id, err)))
        .collect::<Result<Vec<_>>>()?;
    let audits = hev_audits(&runs, 1e-12)?;
    Ok(HevExperiment {
        posterior_cost,
        ar_coeffs,
        runs,
        audits,
    })
}

/// Prefixes an error message with the predictor it came from.
fn in_predictor(id: &str, e: PocError) -> PocError {
    let tag = |m: String| format!("predictor `{id}`: {m}");
    match e {
        PocError::Domain(m) => PocError::Domain(tag(m)),
        PocError::Numeric { step, detail } => PocError::Numeric { step, detail: tag(detail) },
        PocError::Support(m) => PocError::Support(tag(m)),
        PocError::Infeasible(m) => PocError::Infeasible(tag(m)),
        PocError::Precondition(m) => PocError::Precondition(tag(m)),
        PocError::Format(m) => PocError::Format(tag(m)),
        capacity @ PocError::Capacity { .. } => capacity,
    }
}

fn join_ids(ids: &[String], idx: &[usize]) -> String {
    idx.iter().map(|&i| ids[i].as_str()).collect::<Vec<_>>().join(" ")
}

fn csv_error(e: csv::Error) -> PocError {
    PocError::Format(e.to_string())
}

impl HevExperiment {
    /// `predictor_id,family,params,cost,mse,loglik,regret`; `loglik` is empty for deterministic rows.
    pub fn write_results_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["predictor_id", "family", "params", "cost", "mse", "loglik", "regret"])
            .map_err(csv_error)?;
        for r in &self.runs {
            w.write_record([
                r.id.clone(),
                r.family.to_string(),
                r.params.clone(),
                format!("{:?}", r.cost),
                format!("{:?}", r.mse),
                r.loglik.map(|v| format!("{v:?}")).unwrap_or_default(),
                format!("{:?}", r.regret),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| PocError::Format(e.to_string()))
    }

    /// One row per (group, measure): violation count, argmins and Kendall tau.
    pub fn write_audit_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "group",
            "measure",
            "entries",
            "violations",
            "measure_argmin",
            "cost_argmin",
            "best_p_lowest_c",
            "kendall_tau",
        ])
        .map_err(csv_error)?;
        for a in &self.audits {
            let r = &a.report;
            w.write_record([
                a.group.to_string(),
                a.kind.name().to_string(),
                a.ids.len().to_string(),
                r.violations.len().to_string(),
                join_ids(&a.ids, &r.measure_argmin),
                join_ids(&a.ids, &r.cost_argmin),
                r.best_p_lowest_c().to_string(),
                format!("{:?}", r.kendall_tau),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| PocError::Format(e.to_string()))
    }
}
