//! Disturbance-generating environment with a hidden prediction state.
//!
//! The environment evolves as
//!
//! ```text
//! z_{k+1} = f_E(z_k, r_k),   o_k = h_Eo(z_k, r_k),   w_k = h_Ew(z_k, r_k)
//! ```
//!
//! with `r_k` i.i.d. The hidden prediction state `s = (z_0, r_0, ..., r_{N-1})`
//! determines both the observation and the disturbance sequences. Supports
//! are finite, so the a-priori and observable truths are computed exactly by
//! enumerating `s`.
//!
//! Sampling uses ChaCha8 seeded from a `u64`. A hidden state consumes `N + 1`
//! uniform draws in the order `z_0, r_0, ..., r_{N-1}`, each mapped through the
//! inverse CDF of its distribution. Dataset record `i` uses ChaCha stream `i`
//! of the master seed, so records do not depend on the dataset size.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{total_variation, ScenarioBelief};
use crate::error::{PocError, Result};
use crate::model::{cmp_vec, DisturbanceSequence};
use crate::predictors::Predictor;

/// Probability tolerance for the distributions of an environment.
const MASS_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of hidden states visited by enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

/// An environment observation; ordered and hashed by bit pattern.
#[derive(Debug, Clone)]
pub struct Observation(pub Vec<f64>);

impl PartialEq for Observation {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Observation {}

impl PartialOrd for Observation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Observation {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_vec(&self.0, &other.0)
    }
}

impl std::hash::Hash for Observation {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for v in &self.0 {
            v.to_bits().hash(state);
        }
    }
}

pub type EnvTransitionFn = dyn Fn(usize, usize) -> usize + Send + Sync;
pub type EnvOutputFn = dyn Fn(usize, usize) -> Vec<f64> + Send + Sync;

/// Finite environment model; states `z` and noise atoms `r` are indices.
#[derive(Clone)]
pub struct EnvironmentModel {
    n_states: usize,
    z0_probs: Vec<f64>,
    r_probs: Vec<f64>,
    horizon: usize,
    transition: Arc<EnvTransitionFn>,
    observe: Arc<EnvOutputFn>,
    disturbance: Arc<EnvOutputFn>,
}

impl fmt::Debug for EnvironmentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvironmentModel")
            .field("n_states", &self.n_states)
            .field("z0_probs", &self.z0_probs)
            .field("r_probs", &self.r_probs)
            .field("horizon", &self.horizon)
            .finish()
    }
}

fn check_distribution(name: &str, probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(PocError::domain(format!("{name} is empty")));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(PocError::domain(format!("{name} has invalid entries")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(PocError::domain(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

impl EnvironmentModel {
    /// `z0_probs` is indexed by state, `r_probs` by noise atom.
    pub fn new<T, O, W>(
        n_states: usize,
        z0_probs: Vec<f64>,
        r_probs: Vec<f64>,
        horizon: usize,
        transition: T,
        observe: O,
        disturbance: W,
    ) -> Result<Self>
    where
        T: Fn(usize, usize) -> usize + Send + Sync + 'static,
        O: Fn(usize, usize) -> Vec<f64> + Send + Sync + 'static,
        W: Fn(usize, usize) -> Vec<f64> + Send + Sync + 'static,
    {
        if z0_probs.len() != n_states {
            return Err(PocError::domain(format!(
                "z0 distribution has {} entries for {n_states} states",
                z0_probs.len()
            )));
        }
        check_distribution("z0 distribution", &z0_probs)?;
        check_distribution("r distribution", &r_probs)?;
        if horizon == 0 {
            return Err(PocError::domain("horizon must be positive"));
        }
        for z in 0..n_states {
            for r in 0..r_probs.len() {
                let next = transition(z, r);
                if next >= n_states {
                    return Err(PocError::domain(format!(
                        "f_E({z}, {r}) = {next} leaves the state space"
                    )));
                }
            }
        }
        Ok(Self {
            n_states,
            z0_probs,
            r_probs,
            horizon,
            transition: Arc::new(transition),
            observe: Arc::new(observe),
            disturbance: Arc::new(disturbance),
        })
    }

    /// Environment given by lookup tables indexed `[z][r]`.
    pub fn tabular(
        z0_probs: Vec<f64>,
        r_probs: Vec<f64>,
        horizon: usize,
        transition: Vec<Vec<usize>>,
        observation: Vec<Vec<Vec<f64>>>,
        disturbance: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = z0_probs.len();
        let m = r_probs.len();
        let shaped = |rows: usize, cols: &dyn Fn(usize) -> usize| {
            rows == n && (0..n).all(|z| cols(z) == m)
        };
        if !shaped(transition.len(), &|z| transition[z].len())
            || !shaped(observation.len(), &|z| observation[z].len())
            || !shaped(disturbance.len(), &|z| disturbance[z].len())
        {
            return Err(PocError::domain(format!(
                "tables must be {n} x {m} (states x noise atoms)"
            )));
        }
        Self::new(
            n,
            z0_probs,
            r_probs,
            horizon,
            move |z, r| transition[z][r],
            move |z, r| observation[z][r].clone(),
            move |z, r| disturbance[z][r].clone(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn z0_probs(&self) -> &[f64] {
        &self.z0_probs
    }

    pub fn r_probs(&self) -> &[f64] {
        &self.r_probs
    }

    /// Probability of a hidden state under the prior.
    pub fn probability(&self, s: &HiddenPredictionState) -> f64 {
        s.r_seq
            .iter()
            .fold(self.z0_probs[s.z0], |acc, &r| acc * self.r_probs[r])
    }
}

/// `s = (z_0, r_0, ..., r_{N-1})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HiddenPredictionState {
    pub z0: usize,
    pub r_seq: Vec<usize>,
}

/// One `{o, w}` data sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDisturbancePair {
    pub observation: Observation,
    pub wbar: DisturbanceSequence,
}

fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

fn draw(env: &EnvironmentModel, rng: &mut ChaCha8Rng) -> HiddenPredictionState {
    let z0 = inverse_cdf(&env.z0_probs, rng.gen::<f64>());
    let r_seq = (0..env.horizon)
        .map(|_| inverse_cdf(&env.r_probs, rng.gen::<f64>()))
        .collect();
    HiddenPredictionState { z0, r_seq }
}

/// Samples `s` from the prior; deterministic in `rng_seed`.
pub fn sample_hidden_state(env: &EnvironmentModel, rng_seed: u64) -> HiddenPredictionState {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    draw(env, &mut rng)
}

/// Unrolls the environment: `(o_0..o_{N-1}, w_0..w_{N-1})`.
pub fn realize(
    env: &EnvironmentModel,
    s: &HiddenPredictionState,
) -> (Vec<Observation>, DisturbanceSequence) {
    let mut z = s.z0;
    let mut obs = Vec::with_capacity(env.horizon);
    let mut ws = Vec::with_capacity(env.horizon);
    for &r in &s.r_seq {
        obs.push(Observation((env.observe)(z, r)));
        ws.push((env.disturbance)(z, r));
        z = (env.transition)(z, r);
    }
    (obs, DisturbanceSequence::new(ws))
}

/// Visits every hidden state with positive prior mass.
pub fn for_each_hidden_state<F>(env: &EnvironmentModel, cap: usize, mut visit: F) -> Result<()>
where
    F: FnMut(&HiddenPredictionState, f64),
{
    let support_z = env.z0_probs.iter().filter(|p| **p > 0.0).count();
    let support_r = env.r_probs.iter().filter(|p| **p > 0.0).count();
    let total = (support_r as f64).powi(env.horizon as i32) * support_z as f64;
    if total > cap as f64 {
        return Err(PocError::Capacity {
            what: "hidden-state enumeration",
            limit: cap,
            actual: total.min(usize::MAX as f64) as usize,
        });
    }
    let mut s = HiddenPredictionState {
        z0: 0,
        r_seq: vec![0; env.horizon],
    };
    fn recurse<F: FnMut(&HiddenPredictionState, f64)>(
        env: &EnvironmentModel,
        s: &mut HiddenPredictionState,
        depth: usize,
        mass: f64,
        visit: &mut F,
    ) {
        if depth == env.horizon {
            visit(s, mass);
            return;
        }
        for (r, p) in env.r_probs.iter().enumerate() {
            if *p > 0.0 {
                s.r_seq[depth] = r;
                recurse(env, s, depth + 1, mass * p, visit);
            }
        }
    }
    for (z0, p) in env.z0_probs.iter().enumerate() {
        if *p > 0.0 {
            s.z0 = z0;
            recurse(env, &mut s, 0, *p, &mut visit);
        }
    }
    Ok(())
}

fn collect_law(
    env: &EnvironmentModel,
    mut keep: impl FnMut(&HiddenPredictionState, &[Observation]) -> bool,
    what: &str,
) -> Result<ScenarioBelief> {
    let mut acc: Vec<(DisturbanceSequence, f64)> = Vec::new();
    let mut mass = 0.0;
    for_each_hidden_state(env, DEFAULT_ENUMERATION_CAP, |s, p| {
        let (obs, wbar) = realize(env, s);
        if keep(s, &obs) {
            mass += p;
            acc.push((wbar, p));
        }
    })?;
    if mass <= 0.0 {
        return Err(PocError::support(format!("{what} has zero probability")));
    }
    for entry in &mut acc {
        entry.1 /= mass;
    }
    ScenarioBelief::new(0, acc)
}

/// Law of `w(S)` with no conditioning.
pub fn unconditional_law(env: &EnvironmentModel) -> Result<ScenarioBelief> {
    collect_law(env, |_, _| true, "the environment")
}

/// `P(o_0(S) = o)` for every observation with positive mass, in canonical order.
pub fn observation_law(env: &EnvironmentModel) -> Result<Vec<(Observation, f64)>> {
    let mut law: BTreeMap<Observation, f64> = BTreeMap::new();
    for_each_hidden_state(env, DEFAULT_ENUMERATION_CAP, |s, p| {
        let (obs, _) = realize(env, s);
        *law.entry(obs[0].clone()).or_insert(0.0) += p;
    })?;
    Ok(law.into_iter().collect())
}

/// Observable truth `W_to(o)`: law of `w(S)` given `o_0(S) = o`.
pub fn observable_truth(env: &EnvironmentModel, o: &Observation) -> Result<ScenarioBelief> {
    collect_law(env, |_, obs| &obs[0] == o, &format!("observation {:?}", o.0))
}

/// Law of `w(S)` given `o_0(S)` lies in `block`.
pub fn block_truth(env: &EnvironmentModel, block: &[Observation]) -> Result<ScenarioBelief> {
    collect_law(env, |_, obs| block.contains(&obs[0]), "observation block")
}

/// A-priori truth `W_tn(z_0, r_0)`: law of `w(S)` given the step-0 environment state and noise.
pub fn apriori_truth(env: &EnvironmentModel, z0: usize, r0: usize) -> Result<ScenarioBelief> {
    if z0 >= env.n_states || r0 >= env.r_probs.len() {
        return Err(PocError::domain(format!("(z0, r0) = ({z0}, {r0}) out of range")));
    }
    collect_law(
        env,
        |s, _| s.z0 == z0 && s.r_seq[0] == r0,
        &format!("condition (z0, r0) = ({z0}, {r0})"),
    )
}

/// `count` i.i.d. `{o_0, w}` pairs; record `i` draws from ChaCha stream `i`.
pub fn generate_dataset(
    env: &EnvironmentModel,
    count: usize,
    rng_seed: u64,
) -> Result<Vec<ObservationDisturbancePair>> {
    if count == 0 {
        return Err(PocError::precondition("dataset size must be at least 1"));
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(i as u64);
            let s = draw(env, &mut rng);
            let (obs, wbar) = realize(env, &s);
            ObservationDisturbancePair {
                observation: obs.into_iter().next().expect("horizon is positive"),
                wbar,
            }
        })
        .collect())
}

/// Groups the observation alphabet by identical predictor output.
pub fn max_indistinguishable_set<P>(predictor: &P, env: &EnvironmentModel) -> Result<Vec<Vec<Observation>>>
where
    P: Predictor<Observation = Observation> + ?Sized,
{
    let mut blocks: Vec<(ScenarioBelief, Vec<Observation>)> = Vec::new();
    for (o, _) in observation_law(env)? {
        let belief = predictor.predict(0, &o)?;
        match blocks.iter_mut().find(|(b, _)| b.approx_eq(&belief, 1e-12)) {
            Some((_, members)) => members.push(o),
            None => blocks.push((belief, vec![o])),
        }
    }
    Ok(blocks.into_iter().map(|(_, members)| members).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockAccuracy {
    pub observations: Vec<Observation>,
    /// Total-variation distance between the block's belief and the conditional law.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub accurate: bool,
    pub blocks: Vec<BlockAccuracy>,
}

/// Checks whether each block's belief equals the law of `w(S)` given `o(S)` in the block.
pub fn is_accurate<P>(predictor: &P, env: &EnvironmentModel, tolerance: f64) -> Result<AccuracyReport>
where
    P: Predictor<Observation = Observation> + ?Sized,
{
    let mut blocks = Vec::new();
    for members in max_indistinguishable_set(predictor, env)? {
        let belief = predictor.predict(0, &members[0])?;
        let truth = block_truth(env, &members)?;
        blocks.push(BlockAccuracy {
            distance: total_variation(&belief, &truth),
            observations: members,
        });
    }
    Ok(AccuracyReport {
        accurate: blocks.iter().all(|b| b.distance <= tolerance),
        blocks,
    })
}

/// Writes pairs as CSV: `o_0..o_{d-1}` then `w_<k>_<dim>` for every step and component.
pub fn write_dataset_csv<W: Write>(writer: W, pairs: &[ObservationDisturbancePair]) -> Result<()> {
    let first = pairs
        .first()
        .ok_or_else(|| PocError::precondition("dataset is empty"))?;
    let obs_dim = first.observation.0.len();
    let steps = first.wbar.len();
    let w_dim = first.wbar.steps().first().map_or(0, Vec::len);
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..obs_dim).map(|i| format!("o_{i}")).collect();
    for k in 0..steps {
        for d in 0..w_dim {
            header.push(format!("w_{k}_{d}"));
        }
    }
    out.write_record(&header)?;
    for pair in pairs {
        if pair.observation.0.len() != obs_dim || pair.wbar.len() != steps {
            return Err(PocError::Format("dataset records have mixed shapes".into()));
        }
        let row: Vec<String> = pair
            .observation
            .0
            .iter()
            .chain(pair.wbar.flatten().iter())
            .map(|v| format!("{v:?}"))
            .collect();
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| PocError::Format(e.to_string()))?;
    Ok(())
}

/// Reads the format produced by [`write_dataset_csv`].
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Vec<ObservationDisturbancePair>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut obs_dim = 0;
    let mut steps = 0;
    let mut w_dim = 0;
    for (i, name) in header.iter().enumerate() {
        if let Some(rest) = name.strip_prefix("o_") {
            if rest.parse::<usize>().ok() != Some(i) {
                return Err(PocError::Format(format!("unexpected column {name}")));
            }
            obs_dim += 1;
        } else if let Some(rest) = name.strip_prefix("w_") {
            let mut parts = rest.split('_').map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(k)), Some(Ok(d)), None) => {
                    steps = steps.max(k + 1);
                    w_dim = w_dim.max(d + 1);
                }
                _ => return Err(PocError::Format(format!("unexpected column {name}"))),
            }
        } else {
            return Err(PocError::Format(format!("unexpected column {name}")));
        }
    }
    if obs_dim + steps * w_dim != header.len() {
        return Err(PocError::Format("columns do not form a full grid".into()));
    }
    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let values: Vec<f64> = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| PocError::Format(format!("bad number {f:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let observation = Observation(values[..obs_dim].to_vec());
        let wbar = DisturbanceSequence::new(
            values[obs_dim..]
                .chunks(w_dim)
                .map(<[f64]>::to_vec)
                .collect(),
        );
        pairs.push(ObservationDisturbancePair { observation, wbar });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{BlindPredictor, TruthPredictor};

    /// Two-step environment where `r_0` picks `w_1` and `o` is constant.
    fn toy_env(p: f64) -> EnvironmentModel {
        EnvironmentModel::new(
            3,
            vec![1.0, 0.0, 0.0],
            vec![p, 1.0 - p],
            2,
            |z, r| if z == 0 { 1 + r } else { z },
            |_, _| vec![0.0],
            |z, _| match z {
                0 => vec![0.0],
                1 => vec![-3.0],
                _ => vec![2.0],
            },
        )
        .unwrap()
    }

    fn deterministic_env() -> EnvironmentModel {
        EnvironmentModel::new(
            2,
            vec![0.0, 1.0],
            vec![1.0],
            3,
            |z, _| 1 - z,
            |z, _| vec![z as f64],
            |z, _| vec![10.0 + z as f64],
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(EnvironmentModel::new(1, vec![0.5], vec![1.0], 1, |_, _| 0, |_, _| vec![], |_, _| vec![]).is_err());
        assert!(EnvironmentModel::new(1, vec![1.0], vec![1.0], 1, |_, _| 1, |_, _| vec![], |_, _| vec![]).is_err());
    }

    #[test]
    fn point_mass_sampling_and_determinism() {
        let env = deterministic_env();
        let s = sample_hidden_state(&env, 7);
        assert_eq!(s, HiddenPredictionState { z0: 1, r_seq: vec![0, 0, 0] });
        let env = toy_env(0.3);
        for seed in 0..20 {
            assert_eq!(sample_hidden_state(&env, seed), sample_hidden_state(&env, seed));
        }
    }

    #[test]
    fn realize_toy() {
        let env = toy_env(0.3);
        let s = HiddenPredictionState { z0: 0, r_seq: vec![0, 1] };
        let (obs, w) = realize(&env, &s);
        assert_eq!(w, DisturbanceSequence::scalar(&[0.0, -3.0]));
        assert_eq!(obs, vec![Observation(vec![0.0]); 2]);
        assert_eq!(realize(&env, &s), realize(&env, &s));
        let s = HiddenPredictionState { z0: 0, r_seq: vec![1, 0] };
        assert_eq!(realize(&env, &s).1, DisturbanceSequence::scalar(&[0.0, 2.0]));
    }

    #[test]
    fn constant_environment_gives_constant_w() {
        let env = EnvironmentModel::new(1, vec![1.0], vec![0.5, 0.5], 4, |_, _| 0, |_, _| vec![0.0], |_, _| vec![1.5]).unwrap();
        let (_, w) = realize(&env, &sample_hidden_state(&env, 3));
        assert!(w.steps().iter().all(|v| v == &vec![1.5]));
    }

    #[test]
    fn truths_of_toy_environment() {
        let env = toy_env(0.3);
        let to = observable_truth(&env, &Observation(vec![0.0])).unwrap();
        assert!((to.probability_of(&DisturbanceSequence::scalar(&[0.0, -3.0])) - 0.3).abs() < 1e-15);
        assert!((to.probability_of(&DisturbanceSequence::scalar(&[0.0, 2.0])) - 0.7).abs() < 1e-15);
        assert!(matches!(
            observable_truth(&env, &Observation(vec![1.0])),
            Err(PocError::Support(_))
        ));
        let tn = apriori_truth(&env, 0, 0).unwrap();
        assert_eq!(tn, ScenarioBelief::point_mass(0, DisturbanceSequence::scalar(&[0.0, -3.0])));
    }

    #[test]
    fn deterministic_truths_coincide() {
        let env = deterministic_env();
        let s = sample_hidden_state(&env, 0);
        let (obs, w) = realize(&env, &s);
        let pm = ScenarioBelief::point_mass(0, w);
        assert_eq!(observable_truth(&env, &obs[0]).unwrap(), pm);
        assert_eq!(apriori_truth(&env, s.z0, s.r_seq[0]).unwrap(), pm);
    }

    #[test]
    fn single_step_apriori_is_point_mass() {
        let env = EnvironmentModel::new(2, vec![0.5, 0.5], vec![0.5, 0.5], 1, |z, _| z, |_, _| vec![0.0], |z, r| vec![(z * 2 + r) as f64]).unwrap();
        let tn = apriori_truth(&env, 1, 0).unwrap();
        assert_eq!(tn, ScenarioBelief::point_mass(0, DisturbanceSequence::scalar(&[2.0])));
    }

    #[test]
    fn dataset_is_reproducible_and_round_trips() {
        let env = toy_env(0.3);
        let a = generate_dataset(&env, 50, 9).unwrap();
        let b = generate_dataset(&env, 50, 9).unwrap();
        assert_eq!(a, b);
        // record i does not depend on the dataset size
        assert_eq!(generate_dataset(&env, 10, 9).unwrap()[..], a[..10]);
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("o_0,w_0_0,w_1_0\n"));
        assert_eq!(read_dataset_csv(&buf[..]).unwrap(), a);
        assert!(generate_dataset(&env, 0, 1).is_err());
    }

    #[test]
    fn deterministic_dataset_single_record() {
        let env = deterministic_env();
        let d = generate_dataset(&env, 1, 5).unwrap();
        assert_eq!(d[0].wbar, DisturbanceSequence::scalar(&[11.0, 10.0, 11.0]));
        assert_eq!(d[0].observation, Observation(vec![1.0]));
    }

    fn three_observation_env() -> EnvironmentModel {
        EnvironmentModel::new(3, vec![0.2, 0.3, 0.5], vec![0.5, 0.5], 2, |z, _| z, |z, _| vec![z as f64], |z, r| vec![(z + r) as f64]).unwrap()
    }

    #[test]
    fn indistinguishable_sets() {
        let env = three_observation_env();
        let blind = BlindPredictor::new(unconditional_law(&env).unwrap());
        let blocks = max_indistinguishable_set(&blind, &env).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].len(), 3);
        let truth = TruthPredictor::new(env.clone());
        let blocks = max_indistinguishable_set(&truth, &env).unwrap();
        assert_eq!(blocks.len(), 3);
        let mut all: Vec<Observation> = blocks.into_iter().flatten().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn accuracy_checks() {
        let env = three_observation_env();
        let truth = TruthPredictor::new(env.clone());
        assert!(is_accurate(&truth, &env, 1e-12).unwrap().accurate);
        let blind = BlindPredictor::new(unconditional_law(&env).unwrap());
        assert!(is_accurate(&blind, &env, 1e-12).unwrap().accurate);
        let wrong = BlindPredictor::new(ScenarioBelief::point_mass(0, DisturbanceSequence::scalar(&[0.0, 0.0])));
        let report = is_accurate(&wrong, &env, 1e-12).unwrap();
        assert!(!report.accurate);
        assert!(report.blocks[0].distance > 0.5);
    }
}
