mod common;

use std::collections::BTreeMap;

use common::random_environment;
use poc_core::belief::{total_variation, ScenarioBelief};
use poc_core::environment::{
    apriori_truth, generate_dataset, observable_truth, observation_law, EnvironmentModel, Observation,
};
use poc_core::model::DisturbanceSequence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `sum_{(z0, r0) | o} P(z0, r0 | o) W_tn(z0, r0)`, built from the a-priori truths.
fn mixture_of_apriori(env: &EnvironmentModel, o: &Observation, observe: impl Fn(usize, usize) -> f64) -> ScenarioBelief {
    let mut weighted: BTreeMap<Vec<u64>, (DisturbanceSequence, f64)> = BTreeMap::new();
    let mut mass = 0.0;
    for (z0, pz) in env.z0_probs().iter().enumerate() {
        for (r0, pr) in env.r_probs().iter().enumerate() {
            if observe(z0, r0) != o.0[0] || pz * pr == 0.0 {
                continue;
            }
            let p = pz * pr;
            mass += p;
            for s in apriori_truth(env, z0, r0).unwrap().scenarios() {
                let key = s.sequence.flatten().iter().map(|v| v.to_bits()).collect();
                weighted.entry(key).or_insert_with(|| (s.sequence.clone(), 0.0)).1 += p * s.probability;
            }
        }
    }
    ScenarioBelief::new(0, weighted.into_values().map(|(s, p)| (s, p / mass)).collect()).unwrap()
}

#[test]
fn observable_truth_is_the_mixture_of_apriori_truths() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..12 {
        let env = random_environment(&mut rng);
        // The step-0 observation is o_0 = h(z_0, r_0); recover it by realizing a one-step state.
        let observe = |z0: usize, r0: usize| {
            let s = poc_core::environment::HiddenPredictionState {
                z0,
                r_seq: std::iter::once(r0).chain(std::iter::repeat(0).take(env.horizon() - 1)).collect(),
            };
            poc_core::environment::realize(&env, &s).0[0].0[0]
        };
        for (o, _) in observation_law(&env).unwrap() {
            let mixed = mixture_of_apriori(&env, &o, observe);
            let truth = observable_truth(&env, &o).unwrap();
            assert!(total_variation(&mixed, &truth) < 1e-12);
        }
    }
}

/// Smallest `k` with `P(Poisson(mean) > k) < alpha`.
fn poisson_quantile(mean: f64, alpha: f64) -> usize {
    let (mut k, mut term) = (0, (-mean).exp());
    let mut cdf = term;
    while 1.0 - cdf >= alpha {
        k += 1;
        term *= mean / k as f64;
        cdf += term;
    }
    k
}

/// Each atom's frequency is checked against its binomial standard error. With
/// ~100 atoms a few 3σ excursions are expected by chance, so the test bounds
/// their number by the Poisson tail and forbids any 5σ excursion outright.
#[test]
fn sampled_conditional_frequencies_match_observable_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let (mut checked, mut beyond_3) = (0usize, 0usize);
    for e in 0..10 {
        let env = random_environment(&mut rng);
        let data = generate_dataset(&env, n, 1000 + e).unwrap();
        let mut counts: BTreeMap<Observation, BTreeMap<Vec<u64>, usize>> = BTreeMap::new();
        for pair in &data {
            let key = pair.wbar.flatten().iter().map(|v| v.to_bits()).collect();
            *counts.entry(pair.observation.clone()).or_default().entry(key).or_default() += 1;
        }
        for (o, atoms) in counts {
            let n_o: usize = atoms.values().sum();
            let truth = observable_truth(&env, &o).unwrap();
            for s in truth.scenarios() {
                let key: Vec<u64> = s.sequence.flatten().iter().map(|v| v.to_bits()).collect();
                let f = *atoms.get(&key).unwrap_or(&0) as f64 / n_o as f64;
                let sigma = (s.probability * (1.0 - s.probability) / n_o as f64).sqrt();
                let z = (f - s.probability).abs() / sigma;
                assert!(z <= 5.0, "env {e}: atom {:?} frequency {f} vs {}", s.sequence, s.probability);
                checked += 1;
                beyond_3 += usize::from(z > 3.0);
            }
            // No sampled atom lies outside the truth's support.
            assert!(atoms.keys().all(|k| truth
                .scenarios()
                .iter()
                .any(|s| s.sequence.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>() == *k)));
        }
    }
    let allowed = poisson_quantile(checked as f64 * 0.0027, 1e-3);
    assert!(beyond_3 <= allowed, "{beyond_3} of {checked} atoms beyond 3σ (allowed {allowed})");
}
