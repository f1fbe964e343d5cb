//! Finite scenario beliefs over disturbance sequences.
//!
//! A [`ScenarioBelief`] starting at step `k` is a discrete distribution over
//! suffixes `[w_k, ..., w_{N-1}]`. Scenarios are kept in canonical order
//! (lexicographic by value), merged when equal and restricted to positive
//! mass, so two beliefs describing the same law compare equal atom by atom.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{PocError, Result};
use crate::model::{cmp_vec, DisturbanceSequence};

/// Scenario-count cap used by [`product_belief`] unless overridden.
pub const DEFAULT_PRODUCT_CAP: usize = 1_000_000;

/// Tolerance on the input mass of constructors before renormalization.
const INPUT_MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sequence: DisturbanceSequence,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBelief {
    start_step: usize,
    len: usize,
    scenarios: Vec<Scenario>,
}

impl ScenarioBelief {
    /// Builds a belief from weighted suffixes.
    ///
    /// Weights must be finite, nonnegative and sum to one within `1e-9`; they
    /// are renormalized exactly. Equal suffixes are merged and zero-mass
    /// suffixes dropped.
    pub fn new(start_step: usize, weighted: Vec<(DisturbanceSequence, f64)>) -> Result<Self> {
        if weighted.is_empty() {
            return Err(PocError::domain("belief needs at least one scenario"));
        }
        let len = weighted[0].0.len();
        let mut total = 0.0;
        for (seq, p) in &weighted {
            if !p.is_finite() || *p < 0.0 {
                return Err(PocError::domain(format!("invalid probability {p}")));
            }
            if seq.len() != len {
                return Err(PocError::domain(format!(
                    "scenario lengths differ: {} vs {len}",
                    seq.len()
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > INPUT_MASS_TOLERANCE {
            return Err(PocError::domain(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self::from_unnormalized(start_step, len, weighted))
    }

    /// Normalizes arbitrary positive weights. Callers guarantee a positive total.
    fn from_unnormalized(
        start_step: usize,
        len: usize,
        mut weighted: Vec<(DisturbanceSequence, f64)>,
    ) -> Self {
        weighted.retain(|(_, p)| *p > 0.0);
        weighted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut scenarios: Vec<Scenario> = Vec::with_capacity(weighted.len());
        for (sequence, probability) in weighted {
            match scenarios.last_mut() {
                Some(last) if last.sequence.total_cmp(&sequence) == Ordering::Equal => {
                    last.probability += probability
                }
                _ => scenarios.push(Scenario {
                    sequence,
                    probability,
                }),
            }
        }
        let total: f64 = scenarios.iter().map(|s| s.probability).sum();
        for s in &mut scenarios {
            s.probability /= total;
        }
        Self {
            start_step,
            len,
            scenarios,
        }
    }

    /// Probability one on `wbar`.
    pub fn point_mass(start_step: usize, wbar: DisturbanceSequence) -> Self {
        let len = wbar.len();
        Self {
            start_step,
            len,
            scenarios: vec![Scenario {
                sequence: wbar,
                probability: 1.0,
            }],
        }
    }

    pub fn start_step(&self) -> usize {
        self.start_step
    }

    /// Number of steps covered by each scenario.
    pub fn horizon_len(&self) -> usize {
        self.len
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn is_point_mass(&self) -> bool {
        self.scenarios.len() == 1
    }

    pub fn total_mass(&self) -> f64 {
        self.scenarios.iter().map(|s| s.probability).sum()
    }

    /// Believed probability of the exact sequence `wbar` (zero off-support).
    pub fn probability_of(&self, wbar: &DisturbanceSequence) -> f64 {
        self.scenarios
            .binary_search_by(|s| s.sequence.total_cmp(wbar))
            .map(|i| self.scenarios[i].probability)
            .unwrap_or(0.0)
    }

    /// `(1 - eps) * self + eps * uniform(universe)`.
    pub fn epsilon_mix(&self, universe: &[DisturbanceSequence], epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(PocError::domain(format!(
                "epsilon must lie in [0, 1), got {epsilon}"
            )));
        }
        if universe.is_empty() {
            return Err(PocError::domain("mixing universe is empty"));
        }
        if epsilon == 0.0 {
            return Ok(self.clone());
        }
        if let Some(bad) = universe.iter().find(|s| s.len() != self.len) {
            return Err(PocError::domain(format!(
                "universe sequence has {} steps (expected {})",
                bad.len(),
                self.len
            )));
        }
        let share = epsilon / universe.len() as f64;
        let weighted = self
            .scenarios
            .iter()
            .map(|s| (s.sequence.clone(), (1.0 - epsilon) * s.probability))
            .chain(universe.iter().map(|u| (u.clone(), share)))
            .collect();
        Ok(Self::from_unnormalized(self.start_step, self.len, weighted))
    }

    /// Distinct first-step values with their marginal masses, in canonical order.
    pub fn first_step_marginal(&self) -> Vec<(Vec<f64>, f64)> {
        self.marginal(0)
    }

    /// Marginal distribution of the disturbance `offset` steps into the suffix.
    pub fn marginal(&self, offset: usize) -> Vec<(Vec<f64>, f64)> {
        let mut out: Vec<(Vec<f64>, f64)> = self
            .scenarios
            .iter()
            .map(|s| (s.sequence.steps()[offset].clone(), s.probability))
            .collect();
        out.sort_by(|a, b| cmp_vec(&a.0, &b.0));
        let mut merged: Vec<(Vec<f64>, f64)> = Vec::with_capacity(out.len());
        for (v, p) in out {
            match merged.last_mut() {
                Some(last) if cmp_vec(&last.0, &v) == Ordering::Equal => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        merged
    }

    /// Maps a measured value onto the nearest first-step atom.
    ///
    /// `tolerance` defaults to half the minimal gap between distinct atoms
    /// (zero when there is only one atom, i.e. exact match).
    pub fn snap_observed(&self, w: &[f64], tolerance: Option<f64>) -> Result<Vec<f64>> {
        let atoms = self.first_step_marginal();
        snap_to_atoms(atoms.iter().map(|(v, _)| v.as_slice()), w, tolerance)
            .map(<[f64]>::to_vec)
    }

    /// Filtration: the conditional law of `[w_{k+1}, ...]` given `w_k`.
    pub fn condition_on_observed(&self, w: &[f64]) -> Result<Self> {
        if self.len == 0 {
            return Err(PocError::precondition("belief has no remaining steps"));
        }
        let weighted: Vec<(DisturbanceSequence, f64)> = self
            .scenarios
            .iter()
            .filter(|s| cmp_vec(&s.sequence.steps()[0], w) == Ordering::Equal)
            .map(|s| (s.sequence.suffix(1), s.probability))
            .collect();
        let mass: f64 = weighted.iter().map(|(_, p)| p).sum();
        if mass <= 0.0 {
            return Err(PocError::support(format!(
                "observed w_{} = {w:?} has zero believed mass",
                self.start_step
            )));
        }
        Ok(Self::from_unnormalized(
            self.start_step + 1,
            self.len - 1,
            weighted,
        ))
    }

    /// `sum_i p_i f(w_i)`.
    pub fn believed_expectation<F>(&self, mut functional: F) -> Result<f64>
    where
        F: FnMut(&DisturbanceSequence) -> f64,
    {
        let mut acc = 0.0;
        for s in &self.scenarios {
            let v = functional(&s.sequence);
            if !v.is_finite() {
                return Err(PocError::Numeric {
                    step: self.start_step,
                    detail: format!("functional is {v} on {:?}", s.sequence),
                });
            }
            acc += s.probability * v;
        }
        Ok(acc)
    }

    /// Applies `f` to every scenario, merging images that coincide.
    pub fn map_sequences<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&DisturbanceSequence) -> DisturbanceSequence,
    {
        let weighted: Vec<(DisturbanceSequence, f64)> = self
            .scenarios
            .iter()
            .map(|s| (f(&s.sequence), s.probability))
            .collect();
        let len = weighted[0].0.len();
        if weighted.iter().any(|(s, _)| s.len() != len) {
            return Err(PocError::domain("mapped scenarios have unequal lengths"));
        }
        Ok(Self::from_unnormalized(self.start_step, len, weighted))
    }

    /// Prepends a known disturbance: the result starts one step earlier.
    pub fn prefixed(&self, w: Vec<f64>) -> Result<Self> {
        if self.start_step == 0 {
            return Err(PocError::domain("cannot prefix a belief starting at step 0"));
        }
        let scenarios = self
            .scenarios
            .iter()
            .map(|s| {
                let mut steps = Vec::with_capacity(self.len + 1);
                steps.push(w.clone());
                steps.extend(s.sequence.steps().iter().cloned());
                Scenario {
                    sequence: DisturbanceSequence::new(steps),
                    probability: s.probability,
                }
            })
            .collect();
        Ok(Self {
            start_step: self.start_step - 1,
            len: self.len + 1,
            scenarios,
        })
    }

    /// Re-labels the starting step without touching the scenarios.
    pub fn with_start_step(mut self, start_step: usize) -> Self {
        self.start_step = start_step;
        self
    }

    /// Equality of laws: identical atoms with probabilities within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.len == other.len
            && self.scenarios.len() == other.scenarios.len()
            && self.scenarios.iter().zip(&other.scenarios).all(|(a, b)| {
                a.sequence.total_cmp(&b.sequence) == Ordering::Equal
                    && (a.probability - b.probability).abs() <= tol
            })
    }
}

pub(crate) fn snap_to_atoms<'a, I>(atoms: I, w: &[f64], tolerance: Option<f64>) -> Result<&'a [f64]>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let atoms: Vec<&[f64]> = atoms.into_iter().collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let tol = tolerance.unwrap_or_else(|| {
        let mut gap = f64::INFINITY;
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                gap = gap.min(dist(atoms[i], atoms[j]));
            }
        }
        if gap.is_finite() {
            gap / 2.0
        } else {
            0.0
        }
    });
    atoms
        .iter()
        .map(|a| (dist(a, w), *a))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .filter(|(d, _)| *d <= tol)
        .map(|(_, a)| a)
        .ok_or_else(|| {
            PocError::support(format!(
                "measured value {w:?} is not within {tol} of any belief atom"
            ))
        })
}

/// Total-variation distance `1/2 sum |p - q|` over the union of supports.
pub fn total_variation(a: &ScenarioBelief, b: &ScenarioBelief) -> f64 {
    let (sa, sb) = (a.scenarios(), b.scenarios());
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < sa.len() || j < sb.len() {
        let ord = match (sa.get(i), sb.get(j)) {
            (Some(x), Some(y)) => x.sequence.total_cmp(&y.sequence),
            (Some(_), None) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                acc += sa[i].probability;
                i += 1;
            }
            Ordering::Greater => {
                acc += sb[j].probability;
                j += 1;
            }
            Ordering::Equal => {
                acc += (sa[i].probability - sb[j].probability).abs();
                i += 1;
                j += 1;
            }
        }
    }
    0.5 * acc
}

/// `[W_{b,0}, ..., W_{b,N-1}]`, one belief per step.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSequence(Vec<ScenarioBelief>);

impl BeliefSequence {
    pub fn new(beliefs: Vec<ScenarioBelief>) -> Result<Self> {
        if let Some((k, b)) = beliefs
            .iter()
            .enumerate()
            .find(|(k, b)| b.start_step() != *k)
        {
            return Err(PocError::domain(format!(
                "belief at index {k} starts at step {}",
                b.start_step()
            )));
        }
        Ok(Self(beliefs))
    }

    /// Type I beliefs: the step-0 belief filtered along `wbar`.
    pub fn by_filtration(initial: &ScenarioBelief, wbar: &DisturbanceSequence) -> Result<Self> {
        let mut beliefs = vec![initial.clone()];
        for k in 1..initial.horizon_len() {
            let next = beliefs[k - 1].condition_on_observed(&wbar.steps()[k - 1])?;
            beliefs.push(next);
        }
        Self::new(beliefs)
    }

    pub fn get(&self, k: usize) -> Option<&ScenarioBelief> {
        self.0.get(k)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Scheme used to replace a Gaussian by a finite distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GaussianDiscretization {
    /// Equal-probability bins, each represented by its conditional mean.
    #[default]
    QuantileMeans,
    /// Gauss-Hermite nodes and weights (probabilists' convention).
    GaussHermite,
}

/// Equal-probability quantile discretization of `N(mu, sigma^2)`.
pub fn discretize_gaussian(mu: f64, sigma: f64, n_points: usize) -> Result<Vec<(f64, f64)>> {
    discretize_gaussian_with(GaussianDiscretization::QuantileMeans, mu, sigma, n_points)
}

pub fn discretize_gaussian_with(
    scheme: GaussianDiscretization,
    mu: f64,
    sigma: f64,
    n_points: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(sigma >= 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(PocError::domain(format!(
            "invalid Gaussian N({mu}, {sigma}^2)"
        )));
    }
    if n_points == 0 {
        return Err(PocError::domain("n_points must be at least 1"));
    }
    let (nodes, weights) = match scheme {
        GaussianDiscretization::QuantileMeans => standard_quantile_means(n_points),
        GaussianDiscretization::GaussHermite => gauss_hermite(n_points),
    };
    Ok(nodes
        .into_iter()
        .zip(weights)
        .map(|(z, p)| (mu + sigma * z, p))
        .collect())
}

fn std_normal_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// Conditional means of the standard normal within `n` equal-probability bins.
fn standard_quantile_means(n: usize) -> (Vec<f64>, Vec<f64>) {
    let normal = Normal::standard();
    let edge = |i: usize| -> f64 {
        if i == 0 {
            f64::NEG_INFINITY
        } else if i == n {
            f64::INFINITY
        } else {
            normal.inverse_cdf(i as f64 / n as f64)
        }
    };
    let mut values = vec![0.0; n];
    // Lower half computed directly, upper half mirrored for exact antisymmetry.
    for i in 0..n / 2 {
        let v = n as f64 * (std_normal_pdf(edge(i)) - std_normal_pdf(edge(i + 1)));
        values[i] = v;
        values[n - 1 - i] = -v;
    }
    (values, vec![1.0 / n as f64; n])
}

/// Golub-Welsch for the probabilists' Hermite weight `exp(-z^2/2)/sqrt(2 pi)`.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for i in 0..n / 2 {
        let z = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
        pairs[i] = (-z, w);
        pairs[n - 1 - i] = (z, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(z, w)| (z, w / total)).unzip()
}

/// Independent-step belief: the cartesian product of per-step marginals.
pub fn product_belief(
    start_step: usize,
    per_step_marginals: &[Vec<(Vec<f64>, f64)>],
    cap: usize,
) -> Result<ScenarioBelief> {
    if per_step_marginals.is_empty() {
        return Err(PocError::domain("product belief needs at least one step"));
    }
    let mut count: usize = 1;
    for (k, m) in per_step_marginals.iter().enumerate() {
        let mass: f64 = m.iter().map(|(_, p)| p).sum();
        if m.is_empty() || (mass - 1.0).abs() > INPUT_MASS_TOLERANCE {
            return Err(PocError::domain(format!(
                "marginal {k} sums to {mass}, not 1"
            )));
        }
        count = count.saturating_mul(m.len());
    }
    if count > cap {
        return Err(PocError::Capacity {
            what: "product belief scenarios",
            limit: cap,
            actual: count,
        });
    }
    let mut weighted: Vec<(Vec<Vec<f64>>, f64)> = vec![(Vec::new(), 1.0)];
    for marginal in per_step_marginals {
        let mut next = Vec::with_capacity(weighted.len() * marginal.len());
        for (prefix, p) in &weighted {
            for (v, q) in marginal {
                let mut seq = prefix.clone();
                seq.push(v.clone());
                next.push((seq, p * q));
            }
        }
        weighted = next;
    }
    let len = per_step_marginals.len();
    Ok(ScenarioBelief::from_unnormalized(
        start_step,
        len,
        weighted
            .into_iter()
            .map(|(s, p)| (DisturbanceSequence::new(s), p))
            .collect(),
    ))
}
