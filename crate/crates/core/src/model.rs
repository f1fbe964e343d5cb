//! Controlled plant, cost structure and trajectory bookkeeping.
//!
//! The plant is `x_{k+1} = f(x_k, w_k, u_k)` over an `N`-step horizon with a
//! finite (discretized) control set. Costs are a list of `N` stage costs
//! `l_k(x, w, u)` plus a terminal cost `l_N(x)`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::error::{PocError, Result};

pub type TransitionFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
pub type AdmissibleFn = dyn Fn(&[f64], &[f64], &[f64]) -> bool + Send + Sync;
pub type StageCostFn = dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync;
pub type TerminalCostFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Total order on vectors of floats (lexicographic, `f64::total_cmp`).
pub fn cmp_vec(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// The plant `x_{k+1} = f(x_k, w_k, u_k)` together with its control grid.
#[derive(Clone)]
pub struct ControlledSystem {
    state_dim: usize,
    disturbance_dim: usize,
    control_dim: usize,
    horizon: usize,
    controls: Vec<Vec<f64>>,
    transition: Arc<TransitionFn>,
    admissible: Option<Arc<AdmissibleFn>>,
}

impl fmt::Debug for ControlledSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlledSystem")
            .field("state_dim", &self.state_dim)
            .field("disturbance_dim", &self.disturbance_dim)
            .field("control_dim", &self.control_dim)
            .field("horizon", &self.horizon)
            .field("controls", &self.controls.len())
            .finish()
    }
}

impl ControlledSystem {
    /// Builds a system. The transition writes `x_{k+1}` into its last argument.
    pub fn new<F>(
        state_dim: usize,
        disturbance_dim: usize,
        control_dim: usize,
        horizon: usize,
        controls: Vec<Vec<f64>>,
        transition: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if state_dim == 0 || disturbance_dim == 0 || control_dim == 0 {
            return Err(PocError::domain("dimensions must be positive"));
        }
        if horizon == 0 {
            return Err(PocError::domain("horizon must be positive"));
        }
        if controls.is_empty() {
            return Err(PocError::domain("control set is empty"));
        }
        if let Some(bad) = controls.iter().find(|u| u.len() != control_dim) {
            return Err(PocError::domain(format!(
                "control {bad:?} has dimension {} (expected {control_dim})",
                bad.len()
            )));
        }
        let mut sorted: Vec<&Vec<f64>> = controls.iter().collect();
        sorted.sort_by(|a, b| cmp_vec(a, b));
        if sorted.windows(2).any(|p| cmp_vec(p[0], p[1]) == Ordering::Equal) {
            return Err(PocError::domain("control set contains duplicates"));
        }
        Ok(Self {
            state_dim,
            disturbance_dim,
            control_dim,
            horizon,
            controls,
            transition: Arc::new(transition),
            admissible: None,
        })
    }

    /// Restricts the control set per `(x, w)`; inadmissible controls are masked in DP.
    pub fn with_admissibility<F>(mut self, admissible: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64]) -> bool + Send + Sync + 'static,
    {
        self.admissible = Some(Arc::new(admissible));
        self
    }

    /// Replaces the horizon, keeping dynamics and controls.
    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(PocError::domain("horizon must be positive"));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn disturbance_dim(&self) -> usize {
        self.disturbance_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    #[inline]
    pub fn step_into(&self, x: &[f64], w: &[f64], u: &[f64], out: &mut [f64]) {
        (self.transition)(x, w, u, out)
    }

    pub fn step(&self, x: &[f64], w: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.step_into(x, w, u, &mut out);
        out
    }

    #[inline]
    pub fn is_admissible(&self, x: &[f64], w: &[f64], u: &[f64]) -> bool {
        self.admissible.as_ref().is_none_or(|f| f(x, w, u))
    }
}

/// Stage costs `l_0..l_{N-1}` and the terminal cost `l_N`.
#[derive(Clone)]
pub struct CostStructure {
    stages: Vec<Arc<StageCostFn>>,
    terminal: Arc<TerminalCostFn>,
}

impl fmt::Debug for CostStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostStructure")
            .field("stages", &self.stages.len())
            .finish()
    }
}

impl CostStructure {
    pub fn new(stages: Vec<Arc<StageCostFn>>, terminal: Arc<TerminalCostFn>) -> Result<Self> {
        if stages.is_empty() {
            return Err(PocError::domain("at least one stage cost is required"));
        }
        Ok(Self { stages, terminal })
    }

    /// Same stage cost at every step.
    pub fn time_invariant<S, T>(horizon: usize, stage: S, terminal: T) -> Result<Self>
    where
        S: Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        T: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let stage: Arc<StageCostFn> = Arc::new(stage);
        Self::new(vec![stage; horizon], Arc::new(terminal))
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// True when every stage shares one cost function.
    pub fn is_time_invariant(&self) -> bool {
        self.stages.windows(2).all(|p| Arc::ptr_eq(&p[0], &p[1]))
    }

    #[inline]
    pub fn stage(&self, k: usize, x: &[f64], w: &[f64], u: &[f64]) -> f64 {
        (self.stages[k])(x, w, u)
    }

    #[inline]
    pub fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }
}

/// An ordered disturbance sequence `[w_k, ..., w_{N-1}]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisturbanceSequence(Vec<Vec<f64>>);

impl DisturbanceSequence {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        Self(values)
    }

    /// Scalar disturbances, one per step.
    pub fn scalar(values: &[f64]) -> Self {
        Self(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn get(&self, k: usize) -> Option<&[f64]> {
        self.0.get(k).map(Vec::as_slice)
    }

    /// Suffix starting at relative index `from`.
    pub fn suffix(&self, from: usize) -> Self {
        Self(self.0[from.min(self.0.len())..].to_vec())
    }

    /// Sub-sequence `[from, from + len)` clipped to the available steps.
    pub fn window(&self, from: usize, len: usize) -> Self {
        let end = (from + len).min(self.0.len());
        Self(self.0[from.min(end)..end].to_vec())
    }

    /// All components stacked into one vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn into_inner(self) -> Vec<Vec<f64>> {
        self.0
    }

    pub(crate) fn total_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match cmp_vec(a, b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl From<Vec<Vec<f64>>> for DisturbanceSequence {
    fn from(v: Vec<Vec<f64>>) -> Self {
        Self(v)
    }
}

/// A closed or open-loop run of the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub realized_cost: f64,
}

impl Trajectory {
    /// Recomputes states and cost from `(x_0, w, u)`; used to check replay consistency.
    pub fn replay(&self, system: &ControlledSystem, cost: &CostStructure) -> Result<Trajectory> {
        rollout(
            system,
            cost,
            &self.states[0],
            &DisturbanceSequence::new(self.disturbances.clone()),
            &self.controls,
        )
    }
}

fn check_finite(value: f64, step: usize, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(PocError::Numeric {
            step,
            detail: format!("{what} is {value}"),
        })
    }
}

/// Open-loop rollout of a fixed control sequence.
pub fn rollout(
    system: &ControlledSystem,
    cost: &CostStructure,
    x0: &[f64],
    wbar: &DisturbanceSequence,
    controls: &[Vec<f64>],
) -> Result<Trajectory> {
    let n = system.horizon();
    if x0.len() != system.state_dim() {
        return Err(PocError::domain(format!(
            "initial state has dimension {} (expected {})",
            x0.len(),
            system.state_dim()
        )));
    }
    if wbar.len() != n || controls.len() != n || cost.horizon() < n {
        return Err(PocError::domain(format!(
            "horizon mismatch: N={n}, |w|={}, |u|={}, stage costs={}",
            wbar.len(),
            controls.len(),
            cost.horizon()
        )));
    }
    let mut states = Vec::with_capacity(n + 1);
    let mut stage_costs = Vec::with_capacity(n);
    states.push(x0.to_vec());
    for k in 0..n {
        let w = &wbar.steps()[k];
        let u = &controls[k];
        if w.len() != system.disturbance_dim() || u.len() != system.control_dim() {
            return Err(PocError::domain(format!("dimension mismatch at step {k}")));
        }
        let x = &states[k];
        stage_costs.push(check_finite(cost.stage(k, x, w, u), k, "stage cost")?);
        let next = system.step(x, w, u);
        states.push(next);
    }
    let terminal_cost = check_finite(cost.terminal(&states[n]), n, "terminal cost")?;
    let realized_cost = stage_costs.iter().sum::<f64>() + terminal_cost;
    Ok(Trajectory {
        states,
        disturbances: wbar.steps().to_vec(),
        controls: controls.to_vec(),
        stage_costs,
        terminal_cost,
        realized_cost,
    })
}

/// A feedback law `u_k = pi(k, x_k, [w_0..w_k])`.
///
/// Policies that track a belief perform their filtration internally from the
/// disturbance history, so implementations stay stateless.
pub trait FeedbackPolicy {
    fn control(&self, k: usize, x: &[f64], history: &[Vec<f64>]) -> Result<Vec<f64>>;
}

impl<F> FeedbackPolicy for F
where
    F: Fn(usize, &[f64], &[Vec<f64>]) -> Result<Vec<f64>>,
{
    fn control(&self, k: usize, x: &[f64], history: &[Vec<f64>]) -> Result<Vec<f64>> {
        self(k, x, history)
    }
}

/// Closes the loop: runs `policy` against the fixed realized sequence `wbar`.
pub fn closed_loop<P: FeedbackPolicy + ?Sized>(
    system: &ControlledSystem,
    cost: &CostStructure,
    x0: &[f64],
    wbar: &DisturbanceSequence,
    policy: &P,
) -> Result<Trajectory> {
    let n = system.horizon();
    if wbar.len() != n {
        return Err(PocError::domain(format!(
            "realized sequence has {} steps (expected {n})",
            wbar.len()
        )));
    }
    let mut x = x0.to_vec();
    let mut controls = Vec::with_capacity(n);
    for k in 0..n {
        let u = policy.control(k, &x, &wbar.steps()[..=k])?;
        x = system.step(&x, &wbar.steps()[k], &u);
        controls.push(u);
    }
    rollout(system, cost, x0, wbar, &controls)
}

/// `J^pi_w`: realized cost of a feedback policy on `wbar`.
pub fn evaluate_policy_cost<P: FeedbackPolicy + ?Sized>(
    system: &ControlledSystem,
    cost: &CostStructure,
    x0: &[f64],
    wbar: &DisturbanceSequence,
    policy: &P,
) -> Result<f64> {
    Ok(closed_loop(system, cost, x0, wbar, policy)?.realized_cost)
}

/// Uniform grid of `n` points on `[lo, hi]` with exact endpoints.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}
