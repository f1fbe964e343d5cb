//! One-time prediction measures, predictor measures and monotonicity audits.
//!
//! The three one-time measures compare a realized sequence with a belief:
//! mean squared error, regret (closed-loop cost of the belief-optimal policy
//! minus the posterior-optimal cost) and negative log-likelihood. Predictor
//! measures average them over the truth or over a dataset; the audit checks
//! whether a better measure implies a lower expected control cost.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::belief::ScenarioBelief;
use crate::environment::{Observation, ObservationDisturbancePair};
use crate::error::{PocError, Result};
use crate::model::DisturbanceSequence;
use crate::predictors::Predictor;
use crate::solver::{posterior_optimal, run_type1, StepBelief, TreeSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeasureKind {
    Mse,
    Regret,
    LogLikelihood,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [Self::Mse, Self::Regret, Self::LogLikelihood];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mse => "mse",
            Self::Regret => "regret",
            Self::LogLikelihood => "loglik",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = PocError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Self::Mse),
            "regret" => Ok(Self::Regret),
            "loglik" | "log-likelihood" | "loglikelihood" => Ok(Self::LogLikelihood),
            other => Err(PocError::domain(format!(
                "unknown measure '{other}' (expected mse, regret or loglik)"
            ))),
        }
    }
}

fn check_span(wbar: &DisturbanceSequence, belief: &ScenarioBelief) -> Result<()> {
    if wbar.len() != belief.horizon_len() {
        return Err(PocError::domain(format!(
            "realized sequence has {} steps, belief covers {}",
            wbar.len(),
            belief.horizon_len()
        )));
    }
    Ok(())
}

/// Believed expectation of `||wbar - w_b||^2` over the stacked sequence.
pub fn mse(wbar: &DisturbanceSequence, belief: &ScenarioBelief) -> Result<f64> {
    check_span(wbar, belief)?;
    let target = wbar.flatten();
    belief.believed_expectation(|s| {
        s.flatten()
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

/// MSE restricted to the listed disturbance components (e.g. velocity only).
pub fn mse_projected(wbar: &DisturbanceSequence, belief: &ScenarioBelief, components: &[usize]) -> Result<f64> {
    check_span(wbar, belief)?;
    let dim = wbar.steps().first().map_or(0, Vec::len);
    if let Some(c) = components.iter().find(|&&c| c >= dim) {
        return Err(PocError::domain(format!("component {c} out of range for dimension {dim}")));
    }
    belief.believed_expectation(|s| {
        s.steps()
            .iter()
            .zip(wbar.steps())
            .map(|(a, b)| components.iter().map(|&c| (a[c] - b[c]).powi(2)).sum::<f64>())
            .sum()
    })
}

/// Stacked MSE divided by the number of steps (reporting option).
pub fn mse_per_step(wbar: &DisturbanceSequence, belief: &ScenarioBelief) -> Result<f64> {
    Ok(mse(wbar, belief)? / wbar.len().max(1) as f64)
}

/// `-ln P_b(wbar)`; `+inf` when the belief gives the sequence zero mass.
///
/// Measured values are snapped step by step onto the belief's atoms, so
/// round-off in the realized sequence does not turn into a zero mass.
pub fn log_likelihood(wbar: &DisturbanceSequence, belief: &ScenarioBelief) -> Result<f64> {
    check_span(wbar, belief)?;
    let exact = belief.probability_of(wbar);
    if exact > 0.0 {
        return Ok(-exact.ln());
    }
    let mut b = belief.clone();
    let mut log_mass = 0.0;
    for w in wbar.steps() {
        let Ok(atom) = b.snap_observed(w, None) else {
            return Ok(f64::INFINITY);
        };
        let p: f64 = b
            .first_step_marginal()
            .into_iter()
            .find(|(v, _)| *v == atom)
            .map_or(0.0, |(_, p)| p);
        log_mass += p.ln();
        if b.horizon_len() > 1 {
            b = b.condition_on_observed(&atom)?;
        }
    }
    Ok(-log_mass)
}

/// The control problem regret is measured on (Type I closed loop from `x0`).
#[derive(Debug, Clone, Copy)]
pub struct ControlContext<'a> {
    pub solver: &'a TreeSolver,
    pub x0: &'a [f64],
    /// Support of the truth; every sequence gets a zero-mass branch.
    pub universe: &'a [DisturbanceSequence],
}

impl ControlContext<'_> {
    /// `J^{pi_b}_w`: closed-loop cost of the belief-optimal policy on `wbar`.
    ///
    /// The universe and `wbar` enter as zero-mass branches, so once the belief
    /// rules the measured prefix out the policy spreads uniformly over the
    /// universe sequences still consistent with it (the ε → 0 limit of
    /// ε-mixing) instead of learning `wbar` for free.
    pub fn belief_policy_cost(&self, wbar: &DisturbanceSequence, belief: &ScenarioBelief) -> Result<f64> {
        let mut shadow = self.universe.to_vec();
        if !shadow.contains(wbar) {
            shadow.push(wbar.clone());
        }
        let initial = StepBelief {
            belief: belief.clone(),
            shadow,
        };
        Ok(run_type1(self.solver, &initial, self.x0, wbar)?.realized_cost)
    }

    /// `J^{pi_w}_w` on the same control set and grid.
    pub fn posterior_cost(&self, wbar: &DisturbanceSequence) -> Result<f64> {
        Ok(posterior_optimal(self.solver, self.x0, wbar)?.realized_cost)
    }
}

/// `J^{pi_b}_w - J^{pi_w}_w`.
pub fn regret(wbar: &DisturbanceSequence, belief: &ScenarioBelief, ctx: &ControlContext<'_>) -> Result<f64> {
    check_span(wbar, belief)?;
    Ok(ctx.belief_policy_cost(wbar, belief)? - ctx.posterior_cost(wbar)?)
}

/// A one-time measure of any kind; regret needs the control context.
pub fn one_time_measure(
    kind: MeasureKind,
    wbar: &DisturbanceSequence,
    belief: &ScenarioBelief,
    ctx: Option<&ControlContext<'_>>,
) -> Result<f64> {
    match kind {
        MeasureKind::Mse => mse(wbar, belief),
        MeasureKind::LogLikelihood => log_likelihood(wbar, belief),
        MeasureKind::Regret => {
            let ctx = ctx.ok_or_else(|| PocError::precondition("regret needs a control problem"))?;
            regret(wbar, belief, ctx)
        }
    }
}

/// `sum_{w ~ truth} m(w, belief)`, exactly.
pub fn exact_predictor_measure(
    kind: MeasureKind,
    belief: &ScenarioBelief,
    truth: &ScenarioBelief,
    ctx: Option<&ControlContext<'_>>,
) -> Result<f64> {
    let mut acc = 0.0;
    for s in truth.scenarios() {
        let m = one_time_measure(kind, &s.sequence, belief, ctx)?;
        if m.is_infinite() {
            return Ok(f64::INFINITY);
        }
        acc += s.probability * m;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    Exact,
    Samples(usize),
}

impl fmt::Display for SampleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact => f.write_str("exact"),
            Self::Samples(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub predictor_id: String,
    pub kind: MeasureKind,
    /// Mean measure; `+inf` when any sample had zero believed mass.
    pub value: f64,
    /// Mean closed-loop cost of the predictor's pipeline, when a problem was given.
    pub expected_cost: Option<f64>,
    pub samples: SampleCount,
    pub config_digest: String,
    pub infinite_samples: usize,
    /// Mean over the finite samples only.
    pub finite_mean: f64,
}

/// Mean one-time measure over a dataset of `(o, w)` pairs (step-0 predictions).
pub fn empirical_predictor_measure<P>(
    kind: MeasureKind,
    predictor_id: &str,
    predictor: &P,
    dataset: &[ObservationDisturbancePair],
    ctx: Option<&ControlContext<'_>>,
    config_digest: &str,
) -> Result<MeasureReport>
where
    P: Predictor<Observation = Observation> + ?Sized,
{
    if dataset.is_empty() {
        return Err(PocError::precondition("dataset is empty"));
    }
    let mut finite_sum = 0.0;
    let mut infinite = 0;
    let mut cost_sum = 0.0;
    for pair in dataset {
        let belief = predictor.predict(0, &pair.observation)?;
        let m = one_time_measure(kind, &pair.wbar, &belief, ctx)?;
        if m.is_infinite() {
            infinite += 1;
        } else {
            finite_sum += m;
        }
        if let Some(c) = ctx {
            cost_sum += c.belief_policy_cost(&pair.wbar, &belief)?;
        }
    }
    let n = dataset.len();
    let finite = n - infinite;
    Ok(MeasureReport {
        predictor_id: predictor_id.to_string(),
        kind,
        value: if infinite > 0 {
            f64::INFINITY
        } else {
            finite_sum / n as f64
        },
        expected_cost: ctx.map(|_| cost_sum / n as f64),
        samples: SampleCount::Samples(n),
        config_digest: config_digest.to_string(),
        infinite_samples: infinite,
        finite_mean: if finite > 0 {
            finite_sum / finite as f64
        } else {
            f64::NAN
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub predictor_id: String,
    pub measure: f64,
    pub expected_cost: f64,
}

impl AuditEntry {
    pub fn new(predictor_id: impl Into<String>, measure: f64, expected_cost: f64) -> Self {
        Self {
            predictor_id: predictor_id.into(),
            measure,
            expected_cost,
        }
    }
}

/// `measure_i < measure_j` yet `cost_i > cost_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub measure_i: f64,
    pub measure_j: f64,
    pub cost_i: f64,
    pub cost_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
    /// Entries attaining the minimal measure (within tolerance).
    pub measure_argmin: Vec<usize>,
    /// Entries attaining the minimal cost (within tolerance).
    pub cost_argmin: Vec<usize>,
    pub kendall_tau: f64,
}

impl AuditReport {
    /// Better-P-lower-C: no improving measure ever raises the cost.
    pub fn better_p_lower_c(&self) -> bool {
        self.violations.is_empty()
    }

    /// Best-P-lowest-C: every measure-minimizing entry is cost-minimizing.
    pub fn best_p_lowest_c(&self) -> bool {
        self.measure_argmin.iter().all(|i| self.cost_argmin.contains(i))
    }
}

fn argmin_set(values: &[f64], tolerance: f64) -> Vec<usize> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= min + tolerance)
        .map(|(i, _)| i)
        .collect()
}

/// Kendall rank correlation (tau-b, tie corrected).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => ties_x += 1,
                (_, 0) => ties_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + ties_x) as f64;
    let n2 = (concordant + discordant + ties_y) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return f64::NAN;
    }
    (concordant - discordant) as f64 / (n1 * n2).sqrt()
}

/// Better-P-lower-C / best-P-lowest-C analysis of `(measure, cost)` pairs.
///
/// Differences within `tolerance` count as ties, so solver round-off does not
/// create spurious violations.
pub fn monotonicity_audit(entries: &[AuditEntry], tolerance: f64) -> Result<AuditReport> {
    if entries.len() < 2 {
        return Err(PocError::precondition("an audit needs at least two entries"));
    }
    if entries.iter().any(|e| e.measure.is_nan() || e.expected_cost.is_nan()) {
        return Err(PocError::domain("audit entries must not be NaN"));
    }
    let mut violations = Vec::new();
    for (i, a) in entries.iter().enumerate() {
        for (j, b) in entries.iter().enumerate() {
            if a.measure < b.measure - tolerance && a.expected_cost > b.expected_cost + tolerance {
                violations.push(Violation {
                    i,
                    j,
                    measure_i: a.measure,
                    measure_j: b.measure,
                    cost_i: a.expected_cost,
                    cost_j: b.expected_cost,
                });
            }
        }
    }
    let measures: Vec<f64> = entries.iter().map(|e| e.measure).collect();
    let costs: Vec<f64> = entries.iter().map(|e| e.expected_cost).collect();
    Ok(AuditReport {
        violations,
        measure_argmin: argmin_set(&measures, tolerance),
        cost_argmin: argmin_set(&costs, tolerance),
        kendall_tau: kendall_tau_b(&measures, &costs),
    })
}

/// Writes `predictor_id, measure_kind, measure_value, expected_cost` rows.
pub fn write_audit_csv<W: Write>(writer: W, kind: MeasureKind, entries: &[AuditEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["predictor_id", "measure_kind", "measure_value", "expected_cost"])?;
    for e in entries {
        w.write_record([
            e.predictor_id.clone(),
            kind.name().to_string(),
            format!("{:?}", e.measure),
            format!("{:?}", e.expected_cost),
        ])?;
    }
    w.flush().map_err(|e| PocError::Format(e.to_string()))
}

/// Writes `i, j, measure_i, measure_j, cost_i, cost_j` rows.
pub fn write_violations_csv<W: Write>(writer: W, violations: &[Violation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["i", "j", "measure_i", "measure_j", "cost_i", "cost_j"])?;
    for v in violations {
        w.write_record([
            v.i.to_string(),
            v.j.to_string(),
            format!("{:?}", v.measure_i),
            format!("{:?}", v.measure_j),
            format!("{:?}", v.cost_i),
            format!("{:?}", v.cost_j),
        ])?;
    }
    w.flush().map_err(|e| PocError::Format(e.to_string()))
}

/// Reads an audit CSV back into `(kind, entries)` groups in first-seen order.
pub fn read_audit_csv<R: Read>(reader: R) -> Result<Vec<(MeasureKind, Vec<AuditEntry>)>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PocError::Format(format!("missing column '{name}'")))
    };
    let (id, kind, value, cost) = (
        col("predictor_id")?,
        col("measure_kind")?,
        col("measure_value")?,
        col("expected_cost")?,
    );
    let mut groups: Vec<(MeasureKind, Vec<AuditEntry>)> = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record[i].trim().parse().map_err(|_| {
                PocError::Format(format!("row {}: '{}' is not a number", line + 2, &record[i]))
            })
        };
        let k: MeasureKind = record[kind].parse()?;
        let entry = AuditEntry::new(&record[id], parse(value)?, parse(cost)?);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(entry),
            None => groups.push((k, vec![entry])),
        }
    }
    Ok(groups)
}
