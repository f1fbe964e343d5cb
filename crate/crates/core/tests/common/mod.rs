//! Random instance generators and independent oracles shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use poc_core::belief::ScenarioBelief;
use poc_core::environment::EnvironmentModel;
use poc_core::model::{ControlledSystem, CostStructure, DisturbanceSequence};
use poc_core::solver::StateGrid;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Tiny problem whose reachable states are all grid points.
pub struct LatticeInstance {
    pub system: ControlledSystem,
    pub cost: CostStructure,
    pub grid: StateGrid,
    pub belief: ScenarioBelief,
    pub x0: Vec<f64>,
    pub half_width: i32,
}

/// Random probability vector of length `n` with every entry positive.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // Absorb rounding so the entries sum to one as closely as possible.
    let rest: f64 = p[1..].iter().sum();
    p[0] = 1.0 - rest;
    p
}

/// `x_{k+1} = clamp(x + w + u, -L, L)` on integers, random quadratic-ish costs,
/// and a random belief over integer disturbance sequences.
pub fn lattice_instance(
    rng: &mut ChaCha8Rng,
    horizon: usize,
    n_controls: usize,
    n_scenarios: usize,
    half_width: i32,
) -> LatticeInstance {
    let l = half_width as f64;
    let mut pool: Vec<i32> = (-2..=2).collect();
    pool.shuffle(rng);
    let controls: Vec<Vec<f64>> = pool[..n_controls].iter().map(|u| vec![*u as f64]).collect();
    let system = ControlledSystem::new(1, 1, 1, horizon, controls, move |x, w, u, out| {
        out[0] = (x[0] + w[0] + u[0]).clamp(-l, l)
    })
    .expect("valid system");
    let (a, b, c, d) = (
        rng.gen_range(0.1..2.0),
        rng.gen_range(0.0..1.0),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(0.5..3.0),
    );
    let target = rng.gen_range(-2..=2) as f64;
    let cost = CostStructure::time_invariant(
        horizon,
        move |x, w, u| a * x[0] * x[0] + b * u[0] * u[0] + c * x[0] * w[0],
        move |x| d * (x[0] - target).powi(2),
    )
    .expect("valid cost");
    let grid = StateGrid::uniform(-l, l, (2 * half_width + 1) as usize).expect("valid grid");
    let mut seqs: Vec<DisturbanceSequence> = Vec::new();
    while seqs.len() < n_scenarios {
        let s = DisturbanceSequence::scalar(
            &(0..horizon).map(|_| rng.gen_range(-2..=2) as f64).collect::<Vec<_>>(),
        );
        if !seqs.contains(&s) {
            seqs.push(s);
        }
    }
    let probs = random_simplex(rng, n_scenarios);
    let belief = ScenarioBelief::new(0, seqs.into_iter().zip(probs).collect()).expect("valid belief");
    let x0 = vec![rng.gen_range(-half_width..=half_width) as f64];
    LatticeInstance {
        system,
        cost,
        grid,
        belief,
        x0,
        half_width,
    }
}

/// Exact expectimax over every control at every information node, written
/// independently of the library solver: groups scenarios by the next
/// disturbance and recurses on exact states.
pub fn expectimax(
    system: &ControlledSystem,
    cost: &CostStructure,
    scenarios: &[(Vec<Vec<f64>>, f64)],
    k: usize,
    x: &[f64],
) -> f64 {
    let n = system.horizon();
    let mut groups: BTreeMap<Vec<u64>, (Vec<f64>, Vec<(Vec<Vec<f64>>, f64)>, f64)> = BTreeMap::new();
    for (seq, p) in scenarios {
        let key: Vec<u64> = seq[k].iter().map(|v| v.to_bits()).collect();
        let e = groups.entry(key).or_insert_with(|| (seq[k].clone(), Vec::new(), 0.0));
        e.1.push((seq.clone(), *p));
        e.2 += p;
    }
    let total: f64 = groups.values().map(|g| g.2).sum();
    let mut acc = 0.0;
    for (w, members, mass) in groups.values() {
        let mut best = f64::INFINITY;
        for u in system.controls() {
            if !system.is_admissible(x, w, u) {
                continue;
            }
            let next = system.step(x, w, u);
            let tail = if k + 1 == n {
                cost.terminal(&next)
            } else {
                expectimax(system, cost, members, k + 1, &next)
            };
            best = best.min(cost.stage(k, x, w, u) + tail);
        }
        acc += mass / total * best;
    }
    acc
}

pub fn scenario_list(belief: &ScenarioBelief) -> Vec<(Vec<Vec<f64>>, f64)> {
    belief
        .scenarios()
        .iter()
        .map(|s| (s.sequence.steps().to_vec(), s.probability))
        .collect()
}

/// Random finite environment with colliding observations.
pub fn random_environment(rng: &mut ChaCha8Rng) -> EnvironmentModel {
    let n = rng.gen_range(2..=4);
    let m = rng.gen_range(2..=3);
    let horizon = rng.gen_range(2..=3);
    let z0 = random_simplex(rng, n);
    let r = random_simplex(rng, m);
    let transition: Vec<Vec<usize>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0..n)).collect()).collect();
    let observation: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| (0..m).map(|_| vec![rng.gen_range(0..2) as f64]).collect())
        .collect();
    let disturbance: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| (0..m).map(|_| vec![rng.gen_range(-2..=2) as f64]).collect())
        .collect();
    EnvironmentModel::tabular(z0, r, horizon, transition, observation, disturbance).expect("valid environment")
}
