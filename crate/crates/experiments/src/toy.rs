//! Linear toy system `x_{k+1} = x_k + w_k + u_k`, `J = x_2^2`, `|u| <= 1`.
//!
//! The environment draws `w_1 in {-3, 2}` at step 0 with `P(w_1 = -3) = p`;
//! the observation is uninformative. A predictor believes
//! `P(w_1 = -3) = p_b`. Closed forms for the optimal first control, expected
//! cost and the three predictor measures serve as golden values for the full
//! pipeline (environment, predictor, tree DP, closed loop, measures).

use std::io::Write;

use serde::{Deserialize, Serialize};

use poc_core::environment::{observable_truth, EnvironmentModel, Observation};
use poc_core::measures::{
    exact_predictor_measure, monotonicity_audit, AuditEntry, AuditReport, ControlContext,
    MeasureKind,
};
use poc_core::model::{
    closed_loop, linspace, ControlledSystem, CostStructure, DisturbanceSequence, FeedbackPolicy,
};
use poc_core::predictors::{Predictor, ToyParametricPredictor, TOY_HIGH, TOY_LOW};
use poc_core::solver::{expected_policy_cost, SolveOptions, StateGrid, TerminalValue, TreeSolver};
use poc_core::{PocError, Result};

/// Upper end of the admissible `p` and `p_b` range.
pub const TOY_P_MAX: f64 = 2.0 / 3.0;

/// Which policy the pipeline closes the loop with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyPolicyMode {
    /// Scenario-tree DP on the control grid.
    #[default]
    Dp,
    /// Closed-form `u_0 = 3 p_b - 1` with the best-response second control.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub p: f64,
    pub p_b_grid: Vec<f64>,
    /// Points of the uniform control grid on `[-1, 1]`.
    pub control_points: usize,
    /// Points of the uniform state grid on `[-1, 1]`.
    pub state_points: usize,
    /// Parabolic sub-grid refinement of DP decisions.
    pub refine_controls: bool,
    pub policy: ToyPolicyMode,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            p: 0.3,
            p_b_grid: linspace(0.0, TOY_P_MAX, 25),
            control_points: 2001,
            state_points: 2001,
            refine_controls: true,
            policy: ToyPolicyMode::Dp,
        }
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=TOY_P_MAX).contains(&v) {
        Ok(())
    } else {
        Err(PocError::Domain(format!("{name} = {v} must lie in [0, 2/3]")))
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability("p", self.p)?;
        if self.p_b_grid.is_empty() {
            return Err(PocError::Domain("p_b_grid is empty".into()));
        }
        for &pb in &self.p_b_grid {
            check_probability("p_b", pb)?;
        }
        if self.control_points < 3 || self.state_points < 2 {
            return Err(PocError::Domain(
                "control_points must be >= 3 and state_points >= 2".into(),
            ));
        }
        Ok(())
    }

    /// The default grid plus a `1e-4` lattice within `1e-2` of `p`.
    pub fn with_local_refinement(mut self) -> Self {
        let mut grid = self.p_b_grid.clone();
        grid.extend(
            (-100..=100)
                .map(|j| self.p + j as f64 * 1e-4)
                .filter(|pb| (0.0..=TOY_P_MAX).contains(pb)),
        );
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        self.p_b_grid = grid;
        self
    }
}

/// Closed-form toy quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyAnalytic {
    pub u0: f64,
    pub expected_cost: f64,
    pub mse: f64,
    pub regret: f64,
    /// `+inf` when `p_b` gives zero mass to an outcome of positive probability.
    pub loglik: f64,
}

/// `x ln y` with the convention `0 ln 0 = 0`.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub fn toy_analytic(p: f64, p_b: f64) -> Result<ToyAnalytic> {
    check_probability("p", p)?;
    check_probability("p_b", p_b)?;
    let expected_cost = 9.0 * p_b * p_b - 18.0 * p * p_b + 9.0 * p;
    Ok(ToyAnalytic {
        u0: 3.0 * p_b - 1.0,
        expected_cost,
        mse: -50.0 * p * p_b + 25.0 * p_b + 25.0 * p,
        regret: expected_cost - p,
        loglik: -xlny(p, p_b) - xlny(1.0 - p, 1.0 - p_b),
    })
}

/// `-9 p^2 + 9 p`, the expected cost of the truth-informed policy.
pub fn toy_ideal_cost(p: f64) -> f64 {
    -9.0 * p * p + 9.0 * p
}

/// Three-state environment: `z_0 = 0` emits `w_0 = 0`; `r_0` selects `z_1`.
pub fn toy_environment(p: f64) -> Result<EnvironmentModel> {
    check_probability("p", p)?;
    EnvironmentModel::new(
        3,
        vec![1.0, 0.0, 0.0],
        vec![p, 1.0 - p],
        2,
        |z, r| if z == 0 { 1 + r } else { z },
        |_, _| vec![0.0],
        |z, _| match z {
            0 => vec![0.0],
            1 => vec![TOY_LOW],
            _ => vec![TOY_HIGH],
        },
    )
}

/// The two possible realized sequences.
pub fn toy_universe() -> Vec<DisturbanceSequence> {
    vec![
        DisturbanceSequence::scalar(&[0.0, TOY_LOW]),
        DisturbanceSequence::scalar(&[0.0, TOY_HIGH]),
    ]
}

pub fn toy_problem(control_points: usize) -> Result<(ControlledSystem, CostStructure)> {
    let controls = linspace(-1.0, 1.0, control_points)
        .into_iter()
        .map(|u| vec![u])
        .collect();
    let system = ControlledSystem::new(1, 1, 1, 2, controls, |x, w, u, out| {
        out[0] = x[0] + w[0] + u[0]
    })?;
    let cost = CostStructure::time_invariant(2, |_, _, _| 0.0, |x| x[0] * x[0])?;
    Ok((system, cost))
}

/// Solver for the toy on uniform control and state grids over `[-1, 1]`.
pub fn toy_solver(control_points: usize, state_points: usize, refine_controls: bool) -> Result<TreeSolver> {
    let (system, cost) = toy_problem(control_points)?;
    TreeSolver::new(
        system,
        cost,
        StateGrid::uniform(-1.0, 1.0, state_points)?,
        TerminalValue::Zero,
        SolveOptions {
            refine_controls,
            ..SolveOptions::default()
        },
    )
}

/// Closed-form policy: `u_0 = 3 p_b - 1`, then the best response to `w_1`.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticToyPolicy {
    pub p_b: f64,
}

impl FeedbackPolicy for AnalyticToyPolicy {
    fn control(&self, k: usize, x: &[f64], history: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(vec![match k {
            0 => 3.0 * self.p_b - 1.0,
            _ => (-(x[0] + history[k][0])).clamp(-1.0, 1.0),
        }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyRow {
    pub p_b: f64,
    pub u0: f64,
    pub cost: f64,
    pub mse: f64,
    pub regret: f64,
    pub loglik: f64,
}

/// Largest absolute pipeline/analytic difference per column.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ToyDiscrepancy {
    pub u0: f64,
    pub cost: f64,
    pub mse: f64,
    pub regret: f64,
    pub loglik: f64,
}

impl ToyDiscrepancy {
    pub fn max(&self) -> f64 {
        [self.cost, self.mse, self.regret, self.loglik]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySweep {
    pub p: f64,
    pub analytic: Vec<ToyRow>,
    pub pipeline: Vec<ToyRow>,
    pub discrepancy: ToyDiscrepancy,
}

/// `|a - b|`, zero when both are the same infinity.
fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Analytic and pipeline tables over the `p_b` grid.
pub fn toy_sweep(config: &ToyConfig) -> Result<ToySweep> {
    let solver = toy_solver(config.control_points, config.state_points, config.refine_controls)?;
    toy_sweep_with(config, &solver)
}

/// As [`toy_sweep`], reusing a solver (and its table cache) across calls.
pub fn toy_sweep_with(config: &ToyConfig, solver: &TreeSolver) -> Result<ToySweep> {
    config.validate()?;
    let p = config.p;
    let env = toy_environment(p)?;
    let o0 = Observation(vec![0.0]);
    let truth = observable_truth(&env, &o0)?;
    let universe = toy_universe();
    let x0 = [0.0];
    let ctx = ControlContext {
        solver,
        x0: &x0,
        universe: &universe,
    };
    let mut analytic = Vec::with_capacity(config.p_b_grid.len());
    let mut pipeline = Vec::with_capacity(config.p_b_grid.len());
    let mut d = ToyDiscrepancy::default();
    for &p_b in &config.p_b_grid {
        let a = toy_analytic(p, p_b)?;
        let belief = ToyParametricPredictor::new(p_b)?.predict(0, &o0)?;
        let (u0, cost) = match config.policy {
            ToyPolicyMode::Dp => {
                let policy = solver.solve(&belief, &universe, &x0)?;
                let u0 = policy.control(0, &x0, &[vec![0.0]])?[0];
                (u0, expected_policy_cost(solver.system(), solver.cost(), &policy, &truth, &x0)?)
            }
            ToyPolicyMode::Analytic => {
                let policy = AnalyticToyPolicy { p_b };
                let mut cost = 0.0;
                for s in truth.scenarios() {
                    cost += s.probability
                        * closed_loop(solver.system(), solver.cost(), &x0, &s.sequence, &policy)?
                            .realized_cost;
                }
                (a.u0, cost)
            }
        };
        let row = ToyRow {
            p_b,
            u0,
            cost,
            mse: exact_predictor_measure(MeasureKind::Mse, &belief, &truth, None)?,
            regret: exact_predictor_measure(MeasureKind::Regret, &belief, &truth, Some(&ctx))?,
            loglik: exact_predictor_measure(MeasureKind::LogLikelihood, &belief, &truth, None)?,
        };
        d.u0 = d.u0.max(gap(row.u0, a.u0));
        d.cost = d.cost.max(gap(row.cost, a.expected_cost));
        d.mse = d.mse.max(gap(row.mse, a.mse));
        d.regret = d.regret.max(gap(row.regret, a.regret));
        d.loglik = d.loglik.max(gap(row.loglik, a.loglik));
        analytic.push(ToyRow {
            p_b,
            u0: a.u0,
            cost: a.expected_cost,
            mse: a.mse,
            regret: a.regret,
            loglik: a.loglik,
        });
        pipeline.push(row);
    }
    Ok(ToySweep {
        p,
        analytic,
        pipeline,
        discrepancy: d,
    })
}

impl ToySweep {
    /// Audit entries of the pipeline table for one measure.
    pub fn audit_entries(&self, kind: MeasureKind) -> Vec<AuditEntry> {
        self.pipeline
            .iter()
            .map(|r| {
                let m = match kind {
                    MeasureKind::Mse => r.mse,
                    MeasureKind::Regret => r.regret,
                    MeasureKind::LogLikelihood => r.loglik,
                };
                AuditEntry::new(format!("p_b={:?}", r.p_b), m, r.cost)
            })
            .collect()
    }

    pub fn audit(&self, kind: MeasureKind, tolerance: f64) -> Result<AuditReport> {
        monotonicity_audit(&self.audit_entries(kind), tolerance)
    }

    /// Writes the aligned pipeline and analytic columns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let fmt = |v: f64| format!("{v:?}");
        w.write_record([
            "p_b",
            "cost",
            "mse",
            "regret",
            "loglik",
            "u0",
            "cost_analytic",
            "mse_analytic",
            "regret_analytic",
            "loglik_analytic",
            "u0_analytic",
        ])
        .map_err(csv_error)?;
        for (r, a) in self.pipeline.iter().zip(&self.analytic) {
            w.write_record([
                fmt(r.p_b),
                fmt(r.cost),
                fmt(r.mse),
                fmt(r.regret),
                fmt(r.loglik),
                fmt(r.u0),
                fmt(a.cost),
                fmt(a.mse),
                fmt(a.regret),
                fmt(a.loglik),
                fmt(a.u0),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| PocError::Format(e.to_string()))
    }
}

fn csv_error(e: csv::Error) -> PocError {
    PocError::Format(e.to_string())
}
