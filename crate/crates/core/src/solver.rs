//! Belief-optimal policies by dynamic programming on the scenario tree.
//!
//! A belief starting at step `k0` with `L` steps induces a prefix tree: node
//! depth `d >= 1` holds the prefix `[w_{k0}, ..., w_{k0+d-1}]`. Because `w_k`
//! is measured before `u_k` is chosen, the node at depth `d` is the decision
//! point for `u_{k0+d-1}`; moving to a child is the filtration of the belief
//! on the next measured disturbance.
//!
//! For every node a value table over a [`StateGrid`] is computed backwards.
//! Since multilinear interpolation is linear in the table, the expectation
//! over children is pre-averaged into one table per node. Decisions are made
//! greedily at the actual (off-grid) state, and the last stage of a window
//! evaluates the terminal cost exactly instead of interpolating it.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex};

use crate::belief::{snap_to_atoms, ScenarioBelief};
use crate::error::{PocError, Result};
use crate::model::{
    closed_loop, cmp_vec, rollout, ControlledSystem, CostStructure, DisturbanceSequence,
    FeedbackPolicy, Trajectory,
};

/// Highest state dimension supported by the multilinear interpolator.
pub const MAX_GRID_DIMS: usize = 6;

/// Scenario-count cap applied by [`TreeSolver::solve`] unless overridden.
pub const DEFAULT_SCENARIO_CAP: usize = 100_000;

/// Tensor grid of breakpoints with multilinear interpolation.
///
/// Flat indices are row-major (last dimension fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    points: Vec<Vec<f64>>,
    /// `(first breakpoint, 1 / spacing)` for uniformly spaced axes.
    uniform: Vec<Option<(f64, f64)>>,
}

impl StateGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_GRID_DIMS {
            return Err(PocError::domain(format!(
                "state grid needs 1..={MAX_GRID_DIMS} dimensions, got {}",
                axes.len()
            )));
        }
        for (d, axis) in axes.iter().enumerate() {
            if axis.len() < 2 {
                return Err(PocError::domain(format!(
                    "grid axis {d} needs at least 2 breakpoints"
                )));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|p| p[0] >= p[1]) {
                return Err(PocError::domain(format!(
                    "grid axis {d} must be finite and strictly increasing"
                )));
            }
        }
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len() - 1).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].len();
        }
        let total = strides[0] * axes[0].len();
        let points = (0..total)
            .map(|i| {
                axes.iter()
                    .zip(&strides)
                    .map(|(axis, s)| axis[(i / s) % axis.len()])
                    .collect()
            })
            .collect();
        let uniform = axes
            .iter()
            .map(|axis| {
                let h = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
                axis.windows(2)
                    .all(|p| ((p[1] - p[0]) - h).abs() <= 1e-9 * h)
                    .then(|| (axis[0], 1.0 / h))
            })
            .collect();
        Ok(Self {
            axes,
            strides,
            points,
            uniform,
        })
    }

    /// One-dimensional uniform grid with exact endpoints.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![crate::model::linspace(lo, hi, n)])
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Flat index of `x` if it is exactly a grid point.
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dims() {
            return None;
        }
        let mut idx = 0;
        for ((axis, s), v) in self.axes.iter().zip(&self.strides).zip(x) {
            idx += axis.binary_search_by(|a| a.total_cmp(v)).ok()? * s;
        }
        Some(idx)
    }

    /// Multilinear interpolation of `values` at `x`.
    ///
    /// Coordinates outside the grid are clamped to the boundary; the flag
    /// reports whether that happened. Corners with zero weight are skipped, so
    /// infinite (infeasible) entries only propagate when they carry weight.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> (f64, bool) {
        debug_assert_eq!(values.len(), self.len());
        let mut clamped = false;
        let mut base = [0usize; MAX_GRID_DIMS];
        let mut frac = [0.0f64; MAX_GRID_DIMS];
        for (d, axis) in self.axes.iter().enumerate() {
            let v = x[d];
            if v.is_nan() {
                return (f64::NAN, false);
            }
            let n = axis.len();
            let (i, t) = if v <= axis[0] {
                clamped |= v < axis[0];
                (0, 0.0)
            } else if v >= axis[n - 1] {
                clamped |= v > axis[n - 1];
                (n - 2, 1.0)
            } else {
                let i = match self.uniform[d] {
                    Some((lo, inv_h)) => {
                        // Guess from the spacing, then correct for round-off.
                        let mut i = (((v - lo) * inv_h) as usize).min(n - 2);
                        while i > 0 && axis[i] > v {
                            i -= 1;
                        }
                        while i < n - 2 && axis[i + 1] <= v {
                            i += 1;
                        }
                        i
                    }
                    None => (axis.partition_point(|a| *a <= v) - 1).min(n - 2),
                };
                (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
            };
            base[d] = i;
            frac[d] = t;
        }
        let dims = self.dims();
        let mut acc = 0.0;
        for corner in 0..(1usize << dims) {
            let mut weight = 1.0;
            let mut idx = 0;
            for d in 0..dims {
                let up = corner >> d & 1 == 1;
                weight *= if up { frac[d] } else { 1.0 - frac[d] };
                idx += (base[d] + up as usize) * self.strides[d];
            }
            if weight != 0.0 {
                acc += weight * values[idx];
            }
        }
        (acc, clamped)
    }
}

/// Artificial terminal cost `V(k, x)` used at the end of truncated windows.
#[derive(Clone, Default)]
pub enum TerminalValue {
    #[default]
    Zero,
    Custom {
        value: Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>,
        step_dependent: bool,
    },
}

impl std::fmt::Debug for TerminalValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Zero => f.write_str("TerminalValue::Zero"),
            Self::Custom { step_dependent, .. } => f
                .debug_struct("TerminalValue::Custom")
                .field("step_dependent", step_dependent)
                .finish(),
        }
    }
}

impl TerminalValue {
    /// `V(k, x)` that may depend on the step at which the window ends.
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            value: Arc::new(value),
            step_dependent: true,
        }
    }

    /// `V(x)`, independent of the step.
    pub fn stationary<F>(value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            value: Arc::new(move |_, x| value(x)),
            step_dependent: false,
        }
    }

    pub fn evaluate(&self, step: usize, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Custom { value, .. } => value(step, x),
        }
    }

    fn is_step_dependent(&self) -> bool {
        matches!(self, Self::Custom { step_dependent: true, .. })
    }
}

/// Whether value tables survive across solves of one [`TreeSolver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CachePolicy {
    /// Identical subtrees are solved once for the lifetime of the solver.
    #[default]
    Persistent,
    /// Tables are shared within a solve only (bounded memory for long runs).
    PerSolve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Parabolic sub-grid refinement of greedy decisions (1-D sorted controls only).
    pub refine_controls: bool,
    pub scenario_cap: usize,
    pub cache: CachePolicy,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            refine_controls: false,
            scenario_cap: DEFAULT_SCENARIO_CAP,
            cache: CachePolicy::Persistent,
        }
    }
}

/// 64-bit digest of a belief's canonical form (sorted support, 12-digit probabilities).
pub fn belief_hash(belief: &ScenarioBelief) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0100_0000_01b3;
    let mut text = format!("{}:{};", belief.start_step(), belief.horizon_len());
    for s in belief.scenarios() {
        for w in s.sequence.steps() {
            for v in w {
                text.push_str(&format!("{v:?},"));
            }
            text.push('|');
        }
        text.push_str(&format!("{:.12e};", s.probability));
    }
    text.bytes()
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[derive(Debug, Clone)]
struct TreeNode {
    depth: usize,
    w: Vec<f64>,
    mass: f64,
    leaves: usize,
    children: Vec<usize>,
    /// Conditional probability of each child; leaf-count shares below zero-mass nodes.
    cond: Vec<f64>,
    hash: u128,
}

/// Prefix tree of a belief's support (plus zero-mass shadow branches).
#[derive(Debug, Clone)]
struct ScenarioTree {
    nodes: Vec<TreeNode>,
    len: usize,
}

impl ScenarioTree {
    fn build(belief: &ScenarioBelief, shadow: &[DisturbanceSequence]) -> Result<Self> {
        let len = belief.horizon_len();
        if let Some(bad) = shadow.iter().find(|s| s.len() != len) {
            return Err(PocError::domain(format!(
                "shadow sequence has {} steps (expected {len})",
                bad.len()
            )));
        }
        let mut items: Vec<(DisturbanceSequence, f64)> = belief
            .scenarios()
            .iter()
            .map(|s| (s.sequence.clone(), s.probability))
            .chain(shadow.iter().map(|s| (s.clone(), 0.0)))
            .collect();
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        items.dedup_by(|b, a| {
            if a.0.total_cmp(&b.0) == Ordering::Equal {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        let mut nodes = Vec::new();
        Self::build_node(&mut nodes, &items, 0, Vec::new(), len);
        Ok(Self { nodes, len })
    }

    fn build_node(
        nodes: &mut Vec<TreeNode>,
        items: &[(DisturbanceSequence, f64)],
        depth: usize,
        w: Vec<f64>,
        len: usize,
    ) -> usize {
        let id = nodes.len();
        let mass: f64 = items.iter().map(|(_, p)| p).sum();
        nodes.push(TreeNode {
            depth,
            w,
            mass,
            leaves: items.len(),
            children: Vec::new(),
            cond: Vec::new(),
            hash: 0,
        });
        let mut children = Vec::new();
        if depth < len {
            let mut start = 0;
            while start < items.len() {
                let key = &items[start].0.steps()[depth];
                let end = start
                    + items[start..]
                        .iter()
                        .take_while(|(s, _)| cmp_vec(&s.steps()[depth], key) == Ordering::Equal)
                        .count();
                let child = Self::build_node(nodes, &items[start..end], depth + 1, key.clone(), len);
                children.push(child);
                start = end;
            }
        }
        let cond: Vec<f64> = children
            .iter()
            .map(|&c| {
                if mass > 0.0 {
                    nodes[c].mass / mass
                } else {
                    nodes[c].leaves as f64 / items.len() as f64
                }
            })
            .collect();
        let hash = {
            let node = &nodes[id];
            let mut parts = [DefaultHasher::new(), DefaultHasher::new()];
            for (salt, h) in parts.iter_mut().enumerate() {
                salt.hash(h);
                (len - depth).hash(h);
                for v in &node.w {
                    v.to_bits().hash(h);
                }
                for (c, p) in children.iter().zip(&cond) {
                    // Probabilities that differ only by summation round-off share tables.
                    ((p * 1e12).round() as i64).hash(h);
                    nodes[*c].hash.hash(h);
                }
            }
            ((parts[0].finish() as u128) << 64) | parts[1].finish() as u128
        };
        let node = &mut nodes[id];
        node.children = children;
        node.cond = cond;
        node.hash = hash;
        id
    }

    /// Follows measured disturbances from the root; `None` when off-tree.
    fn walk(&self, path: &[Vec<f64>]) -> Result<usize> {
        let mut node = 0;
        for (i, w) in path.iter().enumerate() {
            let children = &self.nodes[node].children;
            let exact = children
                .binary_search_by(|&c| cmp_vec(&self.nodes[c].w, w))
                .ok()
                .map(|i| children[i]);
            node = match exact {
                Some(c) => c,
                None => {
                    let atom = snap_to_atoms(
                        children.iter().map(|&c| self.nodes[c].w.as_slice()),
                        w,
                        None,
                    )
                    .map_err(|_| {
                        PocError::support(format!(
                            "measured disturbance {w:?} at depth {} is not on the scenario tree",
                            i + 1
                        ))
                    })?;
                    children[children
                        .binary_search_by(|&c| cmp_vec(&self.nodes[c].w, atom))
                        .expect("snapped atom is a child")]
                }
            };
        }
        Ok(node)
    }
}

#[derive(Clone, Copy)]
enum Continuation<'a> {
    /// True terminal cost `l_N` (episode end).
    EpisodeEnd,
    /// Artificial terminal value `V(step, x)`.
    Window(usize),
    Table(&'a [f64]),
}

struct Shared {
    system: ControlledSystem,
    cost: CostStructure,
    grid: StateGrid,
    terminal: TerminalValue,
    options: SolveOptions,
    clamp_events: AtomicUsize,
    refinable: bool,
}

/// Outcome of a greedy decision at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub control: Vec<f64>,
    /// Index into the control set; `None` for sub-grid refined controls.
    pub index: Option<usize>,
    /// Stage cost plus continuation value of the chosen control.
    pub value: f64,
}

impl Shared {
    fn continuation(&self, cont: Continuation<'_>, x: &[f64]) -> f64 {
        match cont {
            Continuation::EpisodeEnd => self.cost.terminal(x),
            Continuation::Window(step) => self.terminal.evaluate(step, x),
            Continuation::Table(values) => {
                let (v, clamped) = self.grid.interpolate(values, x);
                if clamped {
                    self.clamp_events.fetch_add(1, AtomicOrdering::Relaxed);
                }
                v
            }
        }
    }

    fn q_value(&self, k: usize, x: &[f64], w: &[f64], u: &[f64], cont: Continuation<'_>, buf: &mut [f64]) -> f64 {
        if matches!((cont, &self.terminal), (Continuation::Window(_), TerminalValue::Zero)) {
            return self.cost.stage(k, x, w, u);
        }
        self.system.step_into(x, w, u, buf);
        self.cost.stage(k, x, w, u) + self.continuation(cont, buf)
    }

    /// Best control index and value at `x`; lowest index wins ties.
    fn best_index(
        &self,
        k: usize,
        x: &[f64],
        w: &[f64],
        cont: Continuation<'_>,
        buf: &mut [f64],
        qs: &mut [f64],
    ) -> Result<(Option<usize>, f64)> {
        let mut best = (None, f64::INFINITY);
        for (j, u) in self.system.controls().iter().enumerate() {
            if !self.system.is_admissible(x, w, u) {
                qs[j] = f64::INFINITY;
                continue;
            }
            let q = self.q_value(k, x, w, u, cont, buf);
            if q.is_nan() {
                return Err(PocError::Numeric {
                    step: k,
                    detail: format!("value is NaN at x={x:?}, w={w:?}, u={u:?}"),
                });
            }
            qs[j] = q;
            if q < best.1 {
                best = (Some(j), q);
            }
        }
        Ok(best)
    }

    fn decide(&self, k: usize, x: &[f64], w: &[f64], cont: Continuation<'_>) -> Result<Decision> {
        let mut buf = vec![0.0; self.system.state_dim()];
        let mut qs = vec![f64::INFINITY; self.system.controls().len()];
        let (best, value) = self.best_index(k, x, w, cont, &mut buf, &mut qs)?;
        let Some(i) = best else {
            return Err(PocError::Infeasible(format!(
                "no admissible control with finite cost at step {k}, x={x:?}, w={w:?}"
            )));
        };
        let controls = self.system.controls();
        if self.options.refine_controls && self.refinable && i > 0 && i + 1 < controls.len() {
            let (u0, u1, u2) = (controls[i - 1][0], controls[i][0], controls[i + 1][0]);
            let (q0, q1, q2) = (qs[i - 1], qs[i], qs[i + 1]);
            if let Some(u) = parabola_vertex((u0, q0), (u1, q1), (u2, q2)) {
                let u = vec![u];
                if self.system.is_admissible(x, w, &u) {
                    let q = self.q_value(k, x, w, &u, cont, &mut buf);
                    if q.is_finite() {
                        return Ok(Decision {
                            control: u,
                            index: None,
                            value: q,
                        });
                    }
                }
            }
        }
        Ok(Decision {
            control: controls[i].clone(),
            index: Some(i),
            value,
        })
    }
}

/// Vertex of the parabola through three points, clamped to the bracket.
///
/// `None` unless all values are finite and the points are strictly convex.
fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<f64> {
    if !(a.1.is_finite() && b.1.is_finite() && c.1.is_finite()) {
        return None;
    }
    let s1 = (b.1 - a.1) / (b.0 - a.0);
    let s2 = (c.1 - b.1) / (c.0 - b.0);
    let curvature = (s2 - s1) / (c.0 - a.0);
    if !(curvature > 0.0) {
        return None;
    }
    // q(u) = q_b + s1 (u - b) + curvature (u - a)(u - b); solve q'(u) = 0.
    let u = 0.5 * (a.0 + b.0) - s1 / (2.0 * curvature);
    Some(u.clamp(a.0, c.0))
}

type CacheKey = (usize, bool, u128);

#[derive(Default)]
struct TableCache {
    values: HashMap<CacheKey, Arc<Vec<f64>>>,
    expectations: HashMap<CacheKey, Arc<Vec<f64>>>,
}

/// Scenario-tree DP solver bound to one problem, grid and terminal value.
///
/// Value tables of structurally identical subtrees are computed once.
pub struct TreeSolver {
    shared: Arc<Shared>,
    cache: Mutex<TableCache>,
}

impl std::fmt::Debug for TreeSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TreeSolver")
            .field("system", &self.shared.system)
            .field("grid_points", &self.shared.grid.len())
            .field("options", &self.shared.options)
            .finish()
    }
}

struct SolveContext<'a> {
    tree: &'a ScenarioTree,
    start: usize,
    episode_end: bool,
    stationary: bool,
}

impl SolveContext<'_> {
    fn key(&self, node: usize) -> CacheKey {
        let n = &self.tree.nodes[node];
        let step = if self.stationary {
            usize::MAX
        } else {
            self.start + n.depth
        };
        (step, self.episode_end, n.hash)
    }

    fn continuation_step(&self) -> usize {
        self.start + self.tree.len
    }
}

impl TreeSolver {
    pub fn new(
        system: ControlledSystem,
        cost: CostStructure,
        grid: StateGrid,
        terminal: TerminalValue,
        options: SolveOptions,
    ) -> Result<Self> {
        if grid.dims() != system.state_dim() {
            return Err(PocError::domain(format!(
                "grid has {} dimensions but the state has {}",
                grid.dims(),
                system.state_dim()
            )));
        }
        if cost.horizon() < system.horizon() {
            return Err(PocError::domain(format!(
                "{} stage costs for a horizon of {}",
                cost.horizon(),
                system.horizon()
            )));
        }
        let controls = system.controls();
        let refinable = system.control_dim() == 1 && controls.windows(2).all(|p| p[0][0] < p[1][0]);
        if options.refine_controls && !refinable {
            return Err(PocError::domain(
                "control refinement needs a one-dimensional, ascending control set",
            ));
        }
        Ok(Self {
            shared: Arc::new(Shared {
                system,
                cost,
                grid,
                terminal,
                options,
                clamp_events: AtomicUsize::new(0),
                refinable,
            }),
            cache: Mutex::new(TableCache::default()),
        })
    }

    pub fn system(&self) -> &ControlledSystem {
        &self.shared.system
    }

    pub fn cost(&self) -> &CostStructure {
        &self.shared.cost
    }

    pub fn grid(&self) -> &StateGrid {
        &self.shared.grid
    }

    /// Interpolation queries that fell outside the grid and were clamped.
    pub fn clamp_events(&self) -> usize {
        self.shared.clamp_events.load(AtomicOrdering::Relaxed)
    }

    pub fn clear_cache(&self) {
        *self.cache.lock().expect("cache lock") = TableCache::default();
    }

    /// Belief-optimal policy for `belief`.
    ///
    /// `shadow` lists sequences that receive zero-mass branches, so the policy
    /// is also defined (as the limit of vanishing mass) on disturbances the
    /// belief rules out. The root value is the believed expected cost from `x0`.
    pub fn solve(&self, belief: &ScenarioBelief, shadow: &[DisturbanceSequence], x0: &[f64]) -> Result<Policy> {
        let sh = &self.shared;
        let start = belief.start_step();
        let len = belief.horizon_len();
        if len == 0 || start + len > sh.system.horizon() {
            return Err(PocError::precondition(format!(
                "belief spans steps {start}..{} outside the horizon {}",
                start + len,
                sh.system.horizon()
            )));
        }
        if x0.len() != sh.system.state_dim() {
            return Err(PocError::domain("initial state dimension mismatch"));
        }
        let count = belief.len() + shadow.len();
        if count > sh.options.scenario_cap {
            return Err(PocError::Capacity {
                what: "scenario tree",
                limit: sh.options.scenario_cap,
                actual: count,
            });
        }
        let tree = ScenarioTree::build(belief, shadow)?;
        let episode_end = start + len == sh.system.horizon();
        let ctx = SolveContext {
            tree: &tree,
            start,
            episode_end,
            stationary: sh.cost.is_time_invariant() && !sh.terminal.is_step_dependent(),
        };
        let mut expect: Vec<Option<Arc<Vec<f64>>>> = vec![None; tree.nodes.len()];
        let result = (|| {
            for id in 0..tree.nodes.len() {
                let n = &tree.nodes[id];
                if n.depth >= 1 && n.depth < len {
                    expect[id] = Some(self.expectation(&ctx, id)?);
                }
            }
            Ok::<(), PocError>(())
        })();
        if sh.options.cache == CachePolicy::PerSolve {
            self.clear_cache();
        }
        result?;
        let mut policy = Policy {
            shared: Arc::clone(&self.shared),
            tree: Arc::new(tree),
            expect,
            start,
            len,
            episode_end,
            root_value: f64::NAN,
            belief_hash: belief_hash(belief),
        };
        policy.root_value = policy.value_at(x0)?;
        Ok(policy)
    }

    fn value(&self, ctx: &SolveContext<'_>, id: usize) -> Result<Arc<Vec<f64>>> {
        let key = ctx.key(id);
        if let Some(v) = self.cache.lock().expect("cache lock").values.get(&key) {
            return Ok(Arc::clone(v));
        }
        let sh = &self.shared;
        let node = &ctx.tree.nodes[id];
        let k = ctx.start + node.depth - 1;
        let table;
        let cont = if node.depth == ctx.tree.len {
            if ctx.episode_end {
                Continuation::EpisodeEnd
            } else {
                Continuation::Window(ctx.continuation_step())
            }
        } else {
            table = self.expectation(ctx, id)?;
            Continuation::Table(&table)
        };
        let mut buf = vec![0.0; sh.system.state_dim()];
        let mut qs = vec![0.0; sh.system.controls().len()];
        let mut values = Vec::with_capacity(sh.grid.len());
        for x in sh.grid.points() {
            let (_, v) = sh.best_index(k, x, &node.w, cont, &mut buf, &mut qs)?;
            values.push(v);
        }
        let values = Arc::new(values);
        self.cache
            .lock()
            .expect("cache lock")
            .values
            .insert(key, Arc::clone(&values));
        Ok(values)
    }

    fn expectation(&self, ctx: &SolveContext<'_>, id: usize) -> Result<Arc<Vec<f64>>> {
        let key = ctx.key(id);
        if let Some(e) = self.cache.lock().expect("cache lock").expectations.get(&key) {
            return Ok(Arc::clone(e));
        }
        let node = &ctx.tree.nodes[id];
        let mut acc = vec![0.0; self.shared.grid.len()];
        for (&c, &p) in node.children.iter().zip(&node.cond) {
            if p == 0.0 {
                continue;
            }
            let v = self.value(ctx, c)?;
            for (a, b) in acc.iter_mut().zip(v.iter()) {
                *a += p * b;
            }
        }
        let acc = Arc::new(acc);
        self.cache
            .lock()
            .expect("cache lock")
            .expectations
            .insert(key, Arc::clone(&acc));
        Ok(acc)
    }
}

/// Belief-optimal feedback law over one window `[start, start + len)`.
#[derive(Clone)]
pub struct Policy {
    shared: Arc<Shared>,
    tree: Arc<ScenarioTree>,
    expect: Vec<Option<Arc<Vec<f64>>>>,
    start: usize,
    len: usize,
    episode_end: bool,
    root_value: f64,
    belief_hash: u64,
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Policy")
            .field("start", &self.start)
            .field("len", &self.len)
            .field("nodes", &self.tree.nodes.len())
            .field("root_value", &self.root_value)
            .field("belief_hash", &format_args!("{:016x}", self.belief_hash))
            .finish()
    }
}

impl Policy {
    /// Believed expected cost from the initial state the policy was solved for.
    pub fn root_value(&self) -> f64 {
        self.root_value
    }

    pub fn belief_hash(&self) -> u64 {
        self.belief_hash
    }

    /// Steps `(start, len)` covered by the policy.
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.len)
    }

    /// Believed expected cost-to-go from `x` at the window start.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        let root = &self.tree.nodes[0];
        let mut acc = 0.0;
        for (&c, &p) in root.children.iter().zip(&root.cond) {
            if p == 0.0 {
                continue;
            }
            acc += p * self.decide_at_node(c, x)?.value;
        }
        Ok(acc)
    }

    fn decide_at_node(&self, node: usize, x: &[f64]) -> Result<Decision> {
        let n = &self.tree.nodes[node];
        let k = self.start + n.depth - 1;
        let cont = if n.depth == self.len {
            if self.episode_end {
                Continuation::EpisodeEnd
            } else {
                Continuation::Window(self.start + self.len)
            }
        } else {
            Continuation::Table(self.expect[node].as_deref().expect("internal node table"))
        };
        self.shared.decide(k, x, &n.w, cont)
    }

    /// Greedy decision at step `k` and actual state `x`; `history` is `w_0..w_k`.
    pub fn decide(&self, k: usize, x: &[f64], history: &[Vec<f64>]) -> Result<Decision> {
        if k < self.start || k >= self.start + self.len || history.len() != k + 1 {
            return Err(PocError::precondition(format!(
                "policy covers steps {}..{}, queried at step {k} with {} measurements",
                self.start,
                self.start + self.len,
                history.len()
            )));
        }
        let node = self.tree.walk(&history[self.start..=k])?;
        self.decide_at_node(node, x)
    }
}

impl FeedbackPolicy for Policy {
    fn control(&self, k: usize, x: &[f64], history: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.decide(k, x, history)?.control)
    }
}

/// Solves and returns the belief-optimal policy with default options.
pub fn solve_tree_policy(
    system: &ControlledSystem,
    cost: &CostStructure,
    belief: &ScenarioBelief,
    x0: &[f64],
    grid: &StateGrid,
) -> Result<Policy> {
    if belief.start_step() != 0 {
        return Err(PocError::precondition("belief must start at step 0"));
    }
    TreeSolver::new(
        system.clone(),
        cost.clone(),
        grid.clone(),
        TerminalValue::Zero,
        SolveOptions::default(),
    )?
    .solve(belief, &[], x0)
}

/// Limits of the exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BruteForceLimits {
    pub max_horizon: usize,
    pub max_controls: usize,
    pub max_scenarios: usize,
    pub max_grid_states: usize,
}

impl Default for BruteForceLimits {
    fn default() -> Self {
        Self {
            max_horizon: 3,
            max_controls: 5,
            max_scenarios: 8,
            max_grid_states: 20,
        }
    }
}

/// Explicit control assignment per (tree node, exact state).
#[derive(Debug, Clone)]
pub struct AssignmentPolicy {
    tree: Arc<ScenarioTree>,
    controls: Vec<Vec<f64>>,
    assignments: HashMap<(usize, Vec<u64>), usize>,
}

impl AssignmentPolicy {
    pub fn assignments(&self) -> usize {
        self.assignments.len()
    }
}

impl FeedbackPolicy for AssignmentPolicy {
    fn control(&self, k: usize, x: &[f64], history: &[Vec<f64>]) -> Result<Vec<f64>> {
        let node = self.tree.walk(&history[..=k])?;
        let key = (node, x.iter().map(|v| v.to_bits()).collect());
        self.assignments
            .get(&key)
            .map(|&i| self.controls[i].clone())
            .ok_or_else(|| PocError::support(format!("no assignment at step {k}, x={x:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct BruteForceSolution {
    pub value: f64,
    pub policy: AssignmentPolicy,
    /// Reached states that are not grid points (zero on lattice-closed instances).
    pub off_grid_states: usize,
}

/// Exhaustive optimum over closed-loop control assignments.
///
/// Every information node (measured prefix) reached under every control
/// choice is expanded with exact states, no grid and no interpolation; the
/// closed-loop optimum is the best assignment of one control per reached
/// `(node, state)`. Intended as a verification oracle on tiny instances.
pub fn brute_force_policy(
    system: &ControlledSystem,
    cost: &CostStructure,
    belief: &ScenarioBelief,
    x0: &[f64],
    grid: &StateGrid,
    limits: BruteForceLimits,
) -> Result<BruteForceSolution> {
    let n = system.horizon();
    for (what, limit, actual) in [
        ("brute-force horizon", limits.max_horizon, n),
        ("brute-force controls", limits.max_controls, system.controls().len()),
        ("brute-force scenarios", limits.max_scenarios, belief.len()),
        ("brute-force grid states", limits.max_grid_states, grid.len()),
    ] {
        if actual > limit {
            return Err(PocError::Capacity { what, limit, actual });
        }
    }
    if belief.start_step() != 0 || belief.horizon_len() != n {
        return Err(PocError::precondition("brute force needs a full-horizon belief from step 0"));
    }
    let tree = ScenarioTree::build(belief, &[])?;
    let mut search = Search {
        system,
        cost,
        grid,
        tree: &tree,
        assignments: HashMap::new(),
        off_grid: 0,
    };
    let root = &tree.nodes[0];
    let mut value = 0.0;
    for (&c, &p) in root.children.iter().zip(&root.cond) {
        value += p * search.best(c, x0)?;
    }
    let assignments = search.assignments;
    let off_grid_states = search.off_grid;
    Ok(BruteForceSolution {
        value,
        policy: AssignmentPolicy {
            tree: Arc::new(tree),
            controls: system.controls().to_vec(),
            assignments,
        },
        off_grid_states,
    })
}

struct Search<'a> {
    system: &'a ControlledSystem,
    cost: &'a CostStructure,
    grid: &'a StateGrid,
    tree: &'a ScenarioTree,
    assignments: HashMap<(usize, Vec<u64>), usize>,
    off_grid: usize,
}

impl Search<'_> {
    fn best(&mut self, node: usize, x: &[f64]) -> Result<f64> {
        let n = &self.tree.nodes[node];
        let k = n.depth - 1;
        let mut best: Option<(usize, f64)> = None;
        for (j, u) in self.system.controls().iter().enumerate() {
            if !self.system.is_admissible(x, &n.w, u) {
                continue;
            }
            let next = self.system.step(x, &n.w, u);
            if self.grid.index_of(&next).is_none() {
                self.off_grid += 1;
            }
            let mut q = self.cost.stage(k, x, &n.w, u);
            if n.depth == self.tree.len {
                q += self.cost.terminal(&next);
            } else {
                for (&c, &p) in n.children.iter().zip(&n.cond) {
                    q += p * self.best(c, &next)?;
                }
            }
            if q.is_nan() {
                return Err(PocError::Numeric {
                    step: k,
                    detail: "NaN in exhaustive search".into(),
                });
            }
            if best.is_none_or(|(_, b)| q < b) {
                best = Some((j, q));
            }
        }
        let (j, q) = best.ok_or_else(|| PocError::Infeasible(format!("no admissible control at step {k}")))?;
        self.assignments
            .insert((node, x.iter().map(|v| v.to_bits()).collect()), j);
        Ok(q)
    }
}

/// A belief handed to a runner, with optional zero-mass shadow branches.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBelief {
    pub belief: ScenarioBelief,
    pub shadow: Vec<DisturbanceSequence>,
}

impl From<ScenarioBelief> for StepBelief {
    fn from(belief: ScenarioBelief) -> Self {
        Self {
            belief,
            shadow: Vec::new(),
        }
    }
}

fn check_realized(solver: &TreeSolver, x0: &[f64], wbar: &DisturbanceSequence) -> Result<()> {
    let n = solver.system().horizon();
    if wbar.len() != n || x0.len() != solver.system().state_dim() {
        return Err(PocError::domain(format!(
            "realized sequence has {} steps and x0 {} entries (expected {n} and {})",
            wbar.len(),
            x0.len(),
            solver.system().state_dim()
        )));
    }
    Ok(())
}

/// Type I: one belief at step 0, then filtration on the measured disturbances.
pub fn run_type1(solver: &TreeSolver, initial: &StepBelief, x0: &[f64], wbar: &DisturbanceSequence) -> Result<Trajectory> {
    check_realized(solver, x0, wbar)?;
    if initial.belief.start_step() != 0 || initial.belief.horizon_len() != wbar.len() {
        return Err(PocError::precondition("Type I needs a full-horizon belief from step 0"));
    }
    let policy = solver.solve(&initial.belief, &initial.shadow, x0)?;
    closed_loop(solver.system(), solver.cost(), x0, wbar, &policy)
}

/// Type II: a fresh remaining-horizon belief at every step; only its first control is applied.
///
/// `provider(k, measured)` receives `w_0..w_k` and returns a belief over `w_k..w_{N-1}`.
pub fn run_type2<F>(solver: &TreeSolver, mut provider: F, x0: &[f64], wbar: &DisturbanceSequence) -> Result<Trajectory>
where
    F: FnMut(usize, &[Vec<f64>]) -> Result<StepBelief>,
{
    let n = solver.system().horizon();
    receding(solver, x0, wbar, |k, measured| {
        let b = provider(k, measured)?;
        if b.belief.horizon_len() != n - k {
            return Err(PocError::precondition(format!(
                "Type II belief at step {k} covers {} steps (expected {})",
                b.belief.horizon_len(),
                n - k
            )));
        }
        Ok(b)
    })
}

/// Type III: receding windows of `min(n, N - k)` steps closed by the solver's terminal value.
///
/// `provider(k, len, measured)` returns a belief over `w_k..w_{k+len-1}`; the
/// window that reaches the episode end uses the true terminal cost.
pub fn run_type3<F>(
    solver: &TreeSolver,
    window: usize,
    mut provider: F,
    x0: &[f64],
    wbar: &DisturbanceSequence,
) -> Result<Trajectory>
where
    F: FnMut(usize, usize, &[Vec<f64>]) -> Result<StepBelief>,
{
    if window == 0 {
        return Err(PocError::domain("window length must be at least 1"));
    }
    let n = solver.system().horizon();
    receding(solver, x0, wbar, |k, measured| {
        let len = window.min(n - k);
        let b = provider(k, len, measured)?;
        if b.belief.horizon_len() != len {
            return Err(PocError::precondition(format!(
                "Type III belief at step {k} covers {} steps (expected {len})",
                b.belief.horizon_len()
            )));
        }
        Ok(b)
    })
}

fn receding<F>(solver: &TreeSolver, x0: &[f64], wbar: &DisturbanceSequence, mut provider: F) -> Result<Trajectory>
where
    F: FnMut(usize, &[Vec<f64>]) -> Result<StepBelief>,
{
    check_realized(solver, x0, wbar)?;
    let steps = wbar.steps();
    let mut x = x0.to_vec();
    let mut controls = Vec::with_capacity(steps.len());
    for k in 0..steps.len() {
        let measured = &steps[..=k];
        let b = provider(k, measured)?;
        if b.belief.start_step() != k {
            return Err(PocError::precondition(format!(
                "belief for step {k} starts at step {}",
                b.belief.start_step()
            )));
        }
        let policy = solver.solve(&b.belief, &b.shadow, &x)?;
        let u = policy.decide(k, &x, measured)?.control;
        x = solver.system().step(&x, &steps[k], &u);
        controls.push(u);
    }
    rollout(solver.system(), solver.cost(), x0, wbar, &controls)
}

/// Posterior-optimal cost `J^{pi_w}_w`: the policy that knows `wbar` in advance.
pub fn posterior_optimal(solver: &TreeSolver, x0: &[f64], wbar: &DisturbanceSequence) -> Result<Trajectory> {
    run_type1(solver, &ScenarioBelief::point_mass(0, wbar.clone()).into(), x0, wbar)
}

/// `sum_i p_i J(w_i)` over the truth scenarios.
pub fn expected_cost_under_truth<F>(truth: &ScenarioBelief, mut realized_cost: F) -> Result<f64>
where
    F: FnMut(&DisturbanceSequence) -> Result<f64>,
{
    let mut acc = 0.0;
    for s in truth.scenarios() {
        acc += s.probability * realized_cost(&s.sequence)?;
    }
    Ok(acc)
}

/// Expected closed-loop cost of a fixed feedback policy under `truth`.
pub fn expected_policy_cost<P: FeedbackPolicy + ?Sized>(
    system: &ControlledSystem,
    cost: &CostStructure,
    policy: &P,
    truth: &ScenarioBelief,
    x0: &[f64],
) -> Result<f64> {
    expected_cost_under_truth(truth, |w| {
        Ok(closed_loop(system, cost, x0, w, policy)?.realized_cost)
    })
}
