//! The `custom` experiment: a tabular environment driving a scalar linear plant.

use std::io::Write;

use poc_core::belief::ScenarioBelief;
use poc_core::environment::{
    generate_dataset, observable_truth, observation_law, unconditional_law, EnvironmentModel, Observation,
};
use poc_core::measures::{
    empirical_predictor_measure, exact_predictor_measure, AuditEntry, ControlContext, MeasureKind, SampleCount,
};
use poc_core::model::{ControlledSystem, CostStructure, DisturbanceSequence};
use poc_core::predictors::FnPredictor;
use poc_core::solver::{CachePolicy, SolveOptions, StateGrid, TerminalValue, TreeSolver};
use poc_core::{PocError, Result};
use rayon::prelude::*;

use crate::config::{expanded_ids, CustomConfig, CustomPredictorKind};

/// One predictor's aggregated results.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomRow {
    pub id: String,
    pub cost: f64,
    /// Measure values in the configured order.
    pub measures: Vec<(MeasureKind, f64)>,
    pub samples: SampleCount,
}

type BeliefFn = Box<dyn Fn(&Observation) -> Result<ScenarioBelief> + Send + Sync>;

pub fn build_environment(cfg: &CustomConfig) -> Result<EnvironmentModel> {
    let e = &cfg.environment;
    EnvironmentModel::tabular(
        e.z0_probs.clone(),
        e.r_probs.clone(),
        e.horizon,
        e.transition.clone(),
        e.observation.clone(),
        e.disturbance.clone(),
    )
}

pub fn build_solver(cfg: &CustomConfig) -> Result<TreeSolver> {
    let s = cfg.system.clone();
    let horizon = cfg.environment.horizon;
    let (lo, hi) = (s.state_grid.min, s.state_grid.max);
    let controls: Vec<Vec<f64>> = s.controls.values().into_iter().map(|u| vec![u]).collect();
    let (a, b, c) = (s.a, s.b.clone(), s.c);
    let system = ControlledSystem::new(1, b.len(), 1, horizon, controls, move |x, w, u, out| {
        let bw: f64 = b.iter().zip(w).map(|(bi, wi)| bi * wi).sum();
        out[0] = (a * x[0] + bw + c * u[0]).clamp(lo, hi);
    })?;
    let (q, r, qf, target) = (s.state_weight, s.control_weight, s.terminal_weight, s.target);
    let cost = CostStructure::time_invariant(
        horizon,
        move |x, _w, u| q * (x[0] - target).powi(2) + r * u[0] * u[0],
        move |x| qf * (x[0] - target).powi(2),
    )?;
    let grid = StateGrid::uniform(lo, hi, s.state_grid.points)?;
    let options = SolveOptions {
        refine_controls: s.refine_controls,
        scenario_cap: s.scenario_cap,
        cache: CachePolicy::PerSolve,
    };
    TreeSolver::new(system, cost, grid, TerminalValue::Zero, options)
}

/// Every disturbance sequence the environment can produce.
fn support(env: &EnvironmentModel) -> Result<Vec<DisturbanceSequence>> {
    Ok(unconditional_law(env)?
        .scenarios()
        .iter()
        .map(|s| s.sequence.clone())
        .collect())
}

fn predictors(cfg: &CustomConfig, env: &EnvironmentModel) -> Result<Vec<(String, BeliefFn)>> {
    let universe = support(env)?;
    let mut out: Vec<(String, BeliefFn)> = Vec::new();
    for entry in &cfg.predictors {
        let ids = expanded_ids(entry);
        match &entry.kind {
            CustomPredictorKind::Truth => {
                let env = env.clone();
                out.push((ids[0].clone(), Box::new(move |o| observable_truth(&env, o))));
            }
            CustomPredictorKind::Unconditional => {
                let law = unconditional_law(env)?;
                out.push((ids[0].clone(), Box::new(move |_| Ok(law.clone()))));
            }
            CustomPredictorKind::EpsilonMix { epsilon } => {
                out.push((ids[0].clone(), mixed(env, &universe, *epsilon)));
            }
            CustomPredictorKind::EpsilonSweep { epsilons } => {
                for (id, eps) in ids.into_iter().zip(epsilons) {
                    out.push((id, mixed(env, &universe, *eps)));
                }
            }
            CustomPredictorKind::Fixed { scenarios } => {
                let belief = ScenarioBelief::new(
                    0,
                    scenarios
                        .iter()
                        .map(|s| (DisturbanceSequence::new(s.sequence.clone()), s.probability))
                        .collect(),
                )
                .map_err(|e| PocError::Domain(format!("predictor `{}`: {e}", entry.id)))?;
                if belief.horizon_len() != env.horizon() {
                    return Err(PocError::Domain(format!(
                        "predictor `{}`: scenarios have {} steps, the horizon is {}",
                        entry.id,
                        belief.horizon_len(),
                        env.horizon()
                    )));
                }
                out.push((ids[0].clone(), Box::new(move |_| Ok(belief.clone()))));
            }
        }
    }
    Ok(out)
}

fn mixed(env: &EnvironmentModel, universe: &[DisturbanceSequence], epsilon: f64) -> BeliefFn {
    let (env, universe) = (env.clone(), universe.to_vec());
    Box::new(move |o| observable_truth(&env, o)?.epsilon_mix(&universe, epsilon))
}

/// Evaluates every predictor, exactly or on a dataset drawn with `seed`.
pub fn run_custom(cfg: &CustomConfig, seed: u64, digest: &str) -> Result<Vec<CustomRow>> {
    let kinds: Vec<MeasureKind> = cfg
        .measures
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_>>()?;
    let env = build_environment(cfg)?;
    let solver = build_solver(cfg)?;
    let x0 = [cfg.system.x0];
    let universe = support(&env)?;
    let ctx = ControlContext {
        solver: &solver,
        x0: &x0,
        universe: &universe,
    };
    let predictors = predictors(cfg, &env)?;
    if cfg.samples == 0 {
        let law = observation_law(&env)?;
        let truths: Vec<(Observation, f64, ScenarioBelief)> = law
            .into_iter()
            .map(|(o, p)| observable_truth(&env, &o).map(|t| (o, p, t)))
            .collect::<Result<_>>()?;
        predictors
            .par_iter()
            .map(|(id, predict)| {
                let mut cost = 0.0;
                let mut values = vec![0.0; kinds.len()];
                for (o, p_o, truth) in &truths {
                    let belief = predict(o)?;
                    for s in truth.scenarios() {
                        cost += p_o * s.probability * ctx.belief_policy_cost(&s.sequence, &belief)?;
                    }
                    for (v, k) in values.iter_mut().zip(&kinds) {
                        *v += p_o * exact_predictor_measure(*k, &belief, truth, Some(&ctx))?;
                    }
                }
                Ok(CustomRow {
                    id: id.clone(),
                    cost,
                    measures: kinds.iter().copied().zip(values).collect(),
                    samples: SampleCount::Exact,
                })
            })
            .collect()
    } else {
        let data = generate_dataset(&env, cfg.samples, seed)?;
        predictors
            .par_iter()
            .map(|(id, predict)| {
                let predictor = FnPredictor::new(|_step: usize, o: &Observation| predict(o));
                let mut cost = f64::NAN;
                let mut measures = Vec::with_capacity(kinds.len());
                for k in &kinds {
                    let report = empirical_predictor_measure(*k, id, &predictor, &data, Some(&ctx), digest)?;
                    cost = report.expected_cost.unwrap_or(f64::NAN);
                    measures.push((*k, report.value));
                }
                Ok(CustomRow {
                    id: id.clone(),
                    cost,
                    measures,
                    samples: SampleCount::Samples(cfg.samples),
                })
            })
            .collect()
    }
}

/// Audit entries of one measure.
pub fn audit_entries(rows: &[CustomRow], kind: MeasureKind) -> Vec<AuditEntry> {
    rows.iter()
        .filter_map(|r| {
            r.measures
                .iter()
                .find(|(k, _)| *k == kind)
                .map(|(_, v)| AuditEntry::new(r.id.clone(), *v, r.cost))
        })
        .collect()
}

/// `predictor_id, cost, <measures...>, samples, config_digest`.
pub fn write_results_csv<W: Write>(writer: W, rows: &[CustomRow], digest: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["predictor_id".to_string(), "cost".to_string()];
    if let Some(first) = rows.first() {
        header.extend(first.measures.iter().map(|(k, _)| k.name().to_string()));
    }
    header.extend(["samples".to_string(), "config_digest".to_string()]);
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![r.id.clone(), format!("{:?}", r.cost)];
        record.extend(r.measures.iter().map(|(_, v)| format!("{v:?}")));
        record.extend([r.samples.to_string(), digest.to_string()]);
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| PocError::Format(e.to_string()))
}
