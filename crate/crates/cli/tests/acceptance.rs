//! Acceptance checks: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{expectimax, lattice_instance, random_environment, scenario_list};
use poc_core::belief::{discretize_gaussian, product_belief, total_variation, ScenarioBelief};
use poc_core::environment::{
    apriori_truth, generate_dataset, observable_truth, observation_law, realize, EnvironmentModel,
    HiddenPredictionState, Observation,
};
use poc_core::measures::{mse, regret, AuditReport, ControlContext, MeasureKind};
use poc_core::model::DisturbanceSequence;
use poc_core::solver::{
    brute_force_policy, expected_policy_cost, run_type2, run_type3, solve_tree_policy, BruteForceLimits,
    SolveOptions, StepBelief, TerminalValue, TreeSolver,
};
use poc_experiments::hev::{
    default_matrix, hev_experiment, run_predictor, DrivingCycle, HevConfig, PredictorEntry, PredictorKind,
};
use poc_experiments::toy::{
    toy_analytic, toy_environment, toy_ideal_cost, toy_solver, toy_sweep_with, toy_universe, ToyAnalytic, ToyConfig, ToySweep,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

const TOY_PS: [f64; 5] = [0.0, 0.15, 0.3, 0.5, 2.0 / 3.0];

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(started: Instant, budget: Duration) -> Result<(), String> {
    let t = started.elapsed();
    check(t < budget, || format!("took {:.1} s, budget {:.0} s", t.as_secs_f64(), budget.as_secs_f64()))
}

fn toy_solver_default() -> Result<TreeSolver, String> {
    let cfg = ToyConfig::default();
    toy_solver(cfg.control_points, cfg.state_points, cfg.refine_controls).map_err(|e| e.to_string())
}

fn sweep_at(solver: &TreeSolver, p: f64) -> Result<ToySweep, String> {
    toy_sweep_with(&ToyConfig { p, ..ToyConfig::default() }, solver).map_err(|e| e.to_string())
}

/// Pipeline against the closed forms, recomputed here from the formulas.
fn c1() -> Verdict {
    let started = Instant::now();
    let solver = toy_solver_default()?;
    let mut worst: f64 = 0.0;
    for p in TOY_PS {
        let sweep = sweep_at(&solver, p)?;
        check(sweep.pipeline.len() == 25, || format!("{} grid points", sweep.pipeline.len()))?;
        for row in &sweep.pipeline {
            let pb = row.p_b;
            let cost = 9.0 * pb * pb - 18.0 * p * pb + 9.0 * p;
            let e_m = 25.0 * p + 25.0 * pb - 50.0 * p * pb;
            let e_r = 9.0 * pb * pb - 18.0 * p * pb + 8.0 * p;
            let e_p = -xlogy(p, pb) - xlogy(1.0 - p, 1.0 - pb);
            for (name, got, want) in [
                ("cost", row.cost, cost),
                ("mse", row.mse, e_m),
                ("regret", row.regret, e_r),
                ("loglik", row.loglik, e_p),
            ] {
                let d = if got == want { 0.0 } else { (got - want).abs() };
                check(d <= 1e-6, || format!("p={p}, p_b={pb}: {name} {got} vs {want}"))?;
                worst = worst.max(d);
            }
        }
    }
    within_budget(started, Duration::from_secs(10))?;
    Ok(format!(
        "max |pipeline - closed form| = {worst:.1e} over 5 p x 25 p_b ({:.2} s)",
        started.elapsed().as_secs_f64()
    ))
}

/// `x ln y` with `0 ln 0 = 0`, `x ln 0 = -inf` for `x > 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn c2() -> Verdict {
    let solver = toy_solver_default()?;
    let universe = toy_universe();
    let o0 = Observation(vec![0.0]);
    let mut worst: f64 = 0.0;
    for p in TOY_PS {
        let env = toy_environment(p).map_err(|e| e.to_string())?;
        let truth = observable_truth(&env, &o0).map_err(|e| e.to_string())?;
        let policy = solver.solve(&truth, &universe, &[0.0]).map_err(|e| e.to_string())?;
        let cost = expected_policy_cost(solver.system(), solver.cost(), &policy, &truth, &[0.0])
            .map_err(|e| e.to_string())?;
        let ideal = -9.0 * p * p + 9.0 * p;
        check((cost - ideal).abs() <= 1e-6, || format!("p={p}: truth cost {cost} vs {ideal}"))?;
        check((toy_ideal_cost(p) - ideal).abs() <= 1e-12, || format!("p={p}: library ideal cost disagrees"))?;
        worst = worst.max((cost - ideal).abs());
        let sweep = sweep_at(&solver, p)?;
        let best = sweep.pipeline.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
        check(cost <= best + 1e-9, || format!("p={p}: truth cost {cost} above sweep minimum {best}"))?;
    }
    Ok(format!("truth cost within {worst:.1e} of -9p^2+9p and never above the sweep minimum"))
}

fn within(report: &AuditReport, sweep: &ToySweep, p: f64) -> usize {
    report
        .violations
        .iter()
        .filter(|v| (sweep.pipeline[v.i].p_b - p).abs() <= 1e-2 && (sweep.pipeline[v.j].p_b - p).abs() <= 1e-2)
        .count()
}

fn c3() -> Verdict {
    let p = 0.3;
    let cfg = ToyConfig::default().with_local_refinement();
    let solver = toy_solver(cfg.control_points, cfg.state_points, cfg.refine_controls).map_err(|e| e.to_string())?;
    let sweep = toy_sweep_with(&cfg, &solver).map_err(|e| e.to_string())?;
    let audit = |k| sweep.audit(k, 1e-9).map_err(|e| e.to_string());
    let (m, l, r) = (audit(MeasureKind::Mse)?, audit(MeasureKind::LogLikelihood)?, audit(MeasureKind::Regret)?);
    let argmin_p = |idx: &[usize]| idx.iter().map(|&i| sweep.pipeline[i].p_b).collect::<Vec<_>>();
    check(!m.violations.is_empty() && !m.best_p_lowest_c(), || {
        format!("MSE: {} violations, argmins {:?} vs {:?}", m.violations.len(), argmin_p(&m.measure_argmin), argmin_p(&m.cost_argmin))
    })?;
    check(l.best_p_lowest_c() && !l.violations.is_empty(), || {
        format!("loglik: {} violations, best-P-lowest-C {}", l.violations.len(), l.best_p_lowest_c())
    })?;
    check(r.violations.is_empty() && r.best_p_lowest_c(), || format!("regret: {} violations", r.violations.len()))?;
    let (near_m, near_l) = (within(&m, &sweep, p), within(&l, &sweep, p));
    check(near_m > 0 && near_l > 0, || format!("witnesses within 1e-2 of p: mse {near_m}, loglik {near_l}"))?;
    // Witnesses are genuine inversions of the closed forms, not grid artefacts.
    for (report, of) in [(&m, (|a: &ToyAnalytic| a.mse) as fn(&ToyAnalytic) -> f64), (&l, |a: &ToyAnalytic| a.loglik)] {
        for v in &report.violations {
            let (a, b) = (sweep.pipeline[v.i].p_b, sweep.pipeline[v.j].p_b);
            let (fa, fb) = (toy_analytic(p, a).map_err(|e| e.to_string())?, toy_analytic(p, b).map_err(|e| e.to_string())?);
            check((of(&fa) - of(&fb)) * (fa.expected_cost - fb.expected_cost) < 0.0, || {
                format!("witness ({a}, {b}) is not an inversion of the closed forms")
            })?;
        }
    }
    Ok(format!(
        "MSE No/No ({} violations, {near_m} near p), loglik Yes/No ({} violations, {near_l} near p), regret Yes/Yes",
        m.violations.len(),
        l.violations.len()
    ))
}

fn c4() -> Verdict {
    let solver = toy_solver_default()?;
    let mut worst: f64 = 0.0;
    for p in TOY_PS {
        let sweep = sweep_at(&solver, p)?;
        let gaps: Vec<f64> = sweep.pipeline.iter().map(|r| r.regret - r.cost).collect();
        let constant = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let dev = gaps.iter().map(|g| (g - constant).abs()).fold(0.0, f64::max);
        check(dev < 1e-9, || format!("p={p}: max |E_R - cost - {constant}| = {dev:e}"))?;
        worst = worst.max(dev);
    }
    Ok(format!("max |E_R - cost - const| = {worst:.1e}"))
}

fn c5() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    let cases = 30;
    for case in 0..cases {
        let horizon = rng.gen_range(1..=3);
        let n_controls = rng.gen_range(2..=5);
        let n_scen = rng.gen_range(1..=8.min(5usize.pow(horizon as u32)));
        let half = rng.gen_range(3..=9);
        let inst = lattice_instance(&mut rng, horizon, n_controls, n_scen, half);
        let policy = solve_tree_policy(&inst.system, &inst.cost, &inst.belief, &inst.x0, &inst.grid)
            .map_err(|e| format!("case {case}: {e}"))?;
        let oracle = expectimax(&inst.system, &inst.cost, &scenario_list(&inst.belief), 0, &inst.x0);
        let brute = brute_force_policy(&inst.system, &inst.cost, &inst.belief, &inst.x0, &inst.grid, BruteForceLimits::default())
            .map_err(|e| format!("case {case}: {e}"))?;
        let realized = expected_policy_cost(&inst.system, &inst.cost, &policy, &inst.belief, &inst.x0)
            .map_err(|e| format!("case {case}: {e}"))?;
        for (name, v) in [("tree DP", policy.root_value()), ("brute force", brute.value), ("closed loop", realized)] {
            let d = (v - oracle).abs();
            check(d <= 1e-9, || format!("case {case}: {name} {v} vs expectimax {oracle}"))?;
            worst = worst.max(d);
        }
    }
    within_budget(started, Duration::from_secs(30))?;
    Ok(format!(
        "{cases} lattice instances, max deviation {worst:.1e} ({:.2} s)",
        started.elapsed().as_secs_f64()
    ))
}

fn bits(s: &DisturbanceSequence) -> Vec<u64> {
    s.flatten().iter().map(|v| v.to_bits()).collect()
}

/// Observation `o_0 = h(z_0, r_0)`, recovered by realizing a hidden state.
fn first_observation(env: &EnvironmentModel, z0: usize, r0: usize) -> f64 {
    let s = HiddenPredictionState {
        z0,
        r_seq: std::iter::once(r0).chain(std::iter::repeat(0).take(env.horizon() - 1)).collect(),
    };
    realize(env, &s).0[0].0[0]
}

fn c6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let n = 100_000;
    let envs = 10;
    let (mut worst_tv, mut worst_z): (f64, f64) = (0.0, 0.0);
    let (mut atoms_checked, mut beyond) = (0usize, Vec::new());
    for e in 0..envs {
        let env = random_environment(&mut rng);
        for (o, _) in observation_law(&env).map_err(|e| e.to_string())? {
            let mut mixed: BTreeMap<Vec<u64>, (DisturbanceSequence, f64)> = BTreeMap::new();
            let mut mass = 0.0;
            for (z0, pz) in env.z0_probs().iter().enumerate() {
                for (r0, pr) in env.r_probs().iter().enumerate() {
                    if first_observation(&env, z0, r0) != o.0[0] || pz * pr == 0.0 {
                        continue;
                    }
                    mass += pz * pr;
                    for s in apriori_truth(&env, z0, r0).map_err(|e| e.to_string())?.scenarios() {
                        mixed.entry(bits(&s.sequence)).or_insert_with(|| (s.sequence.clone(), 0.0)).1 +=
                            pz * pr * s.probability;
                    }
                }
            }
            let mixed = ScenarioBelief::new(0, mixed.into_values().map(|(s, p)| (s, p / mass)).collect())
                .map_err(|e| e.to_string())?;
            let truth = observable_truth(&env, &o).map_err(|e| e.to_string())?;
            worst_tv = worst_tv.max(total_variation(&mixed, &truth));
        }
        let data = generate_dataset(&env, n, 60_600 + e).map_err(|e| e.to_string())?;
        let mut counts: BTreeMap<Observation, BTreeMap<Vec<u64>, usize>> = BTreeMap::new();
        for pair in &data {
            *counts.entry(pair.observation.clone()).or_default().entry(bits(&pair.wbar)).or_default() += 1;
        }
        for (o, atoms) in counts {
            let n_o: usize = atoms.values().sum();
            let truth = observable_truth(&env, &o).map_err(|e| e.to_string())?;
            check(atoms.keys().all(|k| truth.scenarios().iter().any(|s| bits(&s.sequence) == *k)), || {
                format!("env {e}: sampled sequence outside the observable truth's support")
            })?;
            for s in truth.scenarios() {
                let f = *atoms.get(&bits(&s.sequence)).unwrap_or(&0) as f64 / n_o as f64;
                let z = (f - s.probability).abs() / (s.probability * (1.0 - s.probability) / n_o as f64).sqrt();
                atoms_checked += 1;
                worst_z = worst_z.max(z);
                if z > 3.0 {
                    beyond.push(format!("env {e} atom {:?}: {z:.2} sigma", s.sequence.flatten()));
                }
            }
        }
    }
    check(worst_tv < 1e-12, || format!("mixture vs observable truth TV {worst_tv:e}"))?;
    check(beyond.is_empty(), || {
        format!(
            "{} of {atoms_checked} atoms beyond 3 sigma (max {worst_z:.2}): {}",
            beyond.len(),
            beyond.join("; ")
        )
    })?;
    Ok(format!(
        "{envs} environments: TV {worst_tv:.1e}; {atoms_checked} atoms within 3 sigma (max {worst_z:.2}) at n = {n}"
    ))
}

fn filtered(belief: &ScenarioBelief, measured: &[Vec<f64>], k: usize) -> Result<ScenarioBelief, String> {
    let mut b = belief.clone();
    for w in &measured[..k] {
        b = b.condition_on_observed(w).map_err(|e| e.to_string())?;
    }
    Ok(b)
}

fn c7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for case in 0..5 {
        let inst = lattice_instance(&mut rng, 3, 4, 6, 6);
        let n = inst.belief.horizon_len();
        let solver = TreeSolver::new(inst.system.clone(), inst.cost.clone(), inst.grid.clone(), TerminalValue::Zero, SolveOptions::default())
            .map_err(|e| e.to_string())?;
        for s in inst.belief.scenarios() {
            let wbar = &s.sequence;
            let t2 = run_type2(&solver, |k, m| Ok(StepBelief::from(filtered(&inst.belief, m, k).map_err(poc_core::PocError::Precondition)?)), &inst.x0, wbar)
                .map_err(|e| e.to_string())?;
            for window in [n, n + 1, 10] {
                let t3 = run_type3(
                    &solver,
                    window,
                    |k, _, m| Ok(StepBelief::from(filtered(&inst.belief, m, k).map_err(poc_core::PocError::Precondition)?)),
                    &inst.x0,
                    wbar,
                )
                .map_err(|e| e.to_string())?;
                let d = (t2.realized_cost - t3.realized_cost).abs();
                check(d <= 1e-9, || format!("case {case}, window {window}: {} vs {}", t3.realized_cost, t2.realized_cost))?;
                worst = worst.max(d);
                runs += 1;
            }
        }
    }
    Ok(format!("5 instances, {runs} Type III runs, max |Type III - Type II| = {worst:.1e}"))
}

fn c8() -> Verdict {
    let started = Instant::now();
    let cfg = HevConfig::default();
    check(cfg.predictors == default_matrix() && cfg.predictors.len() == 22, || "default matrix is not the 22-predictor matrix".into())?;
    let cycle = DrivingCycle::bundled();
    check(cycle.len() == 112, || format!("cycle has {} s", cycle.len()))?;
    let exp = hev_experiment(&cfg, &cycle).map_err(|e| e.to_string())?;
    // (a)
    let min_regret = exp.runs.iter().map(|r| r.regret).fold(f64::INFINITY, f64::min);
    check(min_regret >= -1e-6, || format!("(a) regret {min_regret} below -1e-6"))?;
    // (b)
    let order = |key: &dyn Fn(&poc_experiments::hev::HevRun) -> f64| {
        let mut ids: Vec<(f64, String)> = exp.runs.iter().map(|r| (key(r), r.id.clone())).collect();
        ids.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ids.into_iter().map(|(_, id)| id).collect::<Vec<_>>()
    };
    let (by_regret, by_cost) = (order(&|r| r.regret), order(&|r| r.cost));
    check(by_regret == by_cost, || format!("(b) regret order {by_regret:?} vs cost order {by_cost:?}"))?;
    let regret_audit = exp.audits.iter().find(|a| a.group == "all" && a.kind == MeasureKind::Regret).ok_or("no regret audit")?;
    check(regret_audit.report.violations.is_empty(), || "(b) regret audit reports violations".into())?;
    // (c)
    let mse_audit = exp.audits.iter().find(|a| a.group == "all" && a.kind == MeasureKind::Mse).ok_or("no MSE audit")?;
    check(!mse_audit.report.violations.is_empty(), || "(c) no MSE violation across the matrix".into())?;
    // (d)
    let s1 = exp.runs.iter().find(|r| r.id == "S1-a").ok_or("no S1-a run")?;
    let control = run_predictor(
        &cfg,
        &cycle,
        &PredictorEntry::new("S1-control", PredictorKind::ZeroMeanGaussian { sigma: 1e-6 }),
        exp.ar_coeffs,
        exp.posterior_cost,
    )
    .map_err(|e| e.to_string())?;
    let gap = (s1.cost - control.cost).abs();
    check(gap <= 1e-3 * control.cost.abs(), || format!("(d) S1(0.1) {} vs control {}", s1.cost, control.cost))?;
    within_budget(started, Duration::from_secs(300))?;
    Ok(format!(
        "22 runs: min regret {min_regret:.3e}, regret order = cost order, {} MSE violations, |S1(0.1) - control| = {gap:.2e} ({:.1e} of cost) ({:.0} s)",
        mse_audit.report.violations.len(),
        gap / control.cost.abs(),
        started.elapsed().as_secs_f64()
    ))
}

fn random_belief(rng: &mut ChaCha8Rng, len: usize) -> ScenarioBelief {
    let mut merged: BTreeMap<Vec<i32>, f64> = BTreeMap::new();
    for _ in 0..rng.gen_range(1..=8) {
        let s: Vec<i32> = (0..len).map(|_| rng.gen_range(-2..=2)).collect();
        *merged.entry(s).or_default() += rng.gen_range(0.05..1.0);
    }
    let total: f64 = merged.values().sum();
    ScenarioBelief::new(0, merged.into_iter().map(|(s, w)| (int_seq(&s), w / total)).collect()).unwrap()
}

fn int_seq(values: &[i32]) -> DisturbanceSequence {
    DisturbanceSequence::scalar(&values.iter().map(|v| *v as f64).collect::<Vec<_>>())
}

fn normalized(b: &ScenarioBelief) -> bool {
    (b.total_mass() - 1.0).abs() <= 1e-12 && b.scenarios().iter().all(|s| s.probability > 0.0)
}

fn c9() -> Verdict {
    let cases = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut regret_cases = 0;
    for case in 0..cases {
        let fail = |what: &str| format!("case {case}: {what}");
        let len = rng.gen_range(1..=3);
        let b = random_belief(&mut rng, len);
        // mse
        let own = b.scenarios()[rng.gen_range(0..b.len())].sequence.clone();
        let other = int_seq(&(0..len).map(|_| rng.gen_range(-2..=2)).collect::<Vec<_>>());
        for wbar in [&own, &other] {
            let m = mse(wbar, &b).map_err(|e| e.to_string())?;
            let point_on_wbar = b.is_point_mass() && b.scenarios()[0].sequence == *wbar;
            check(m >= 0.0 && (m == 0.0) == point_on_wbar, || fail(&format!("mse {m}")))?;
        }
        // normalization under every transformer
        let universe: Vec<DisturbanceSequence> =
            (0..rng.gen_range(1..=4)).map(|_| int_seq(&(0..len).map(|_| rng.gen_range(-2..=2)).collect::<Vec<_>>())).collect();
        let mut produced = vec![
            b.epsilon_mix(&universe, rng.gen_range(0.0..0.999)).map_err(|e| e.to_string())?,
            b.clone().with_start_step(rng.gen_range(0..5)),
            b.map_sequences(|s| int_seq(&s.flatten().iter().map(|v| (*v as i32 + 1).abs().min(2)).collect::<Vec<_>>()))
                .map_err(|e| e.to_string())?,
        ];
        let marginals: Vec<Vec<(Vec<f64>, f64)>> = (0..len).map(|k| b.marginal(k)).collect();
        produced.push(product_belief(0, &marginals, 10_000).map_err(|e| e.to_string())?);
        if len > 1 {
            let marginal = b.first_step_marginal();
            let v = marginal[rng.gen_range(0..marginal.len())].0.clone();
            let conditioned = b.condition_on_observed(&v).map_err(|e| e.to_string())?;
            produced.push(conditioned.prefixed(v).map_err(|e| e.to_string())?);
            produced.push(conditioned);
        }
        check(normalized(&b) && produced.iter().all(normalized), || fail("transformer broke normalization"))?;
        let (mu, sigma) = (rng.gen_range(-5.0..5.0), rng.gen_range(0.0..3.0));
        let g = discretize_gaussian(mu, sigma, rng.gen_range(1..=9)).map_err(|e| e.to_string())?;
        check((g.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() <= 1e-12, || fail("gaussian atoms not normalized"))?;
        // chain rule
        if len > 1 {
            for (v, m) in b.first_step_marginal() {
                let conditioned = b.condition_on_observed(&v).map_err(|e| e.to_string())?;
                for s in b.scenarios().iter().filter(|s| s.sequence.steps()[0] == v) {
                    let d = (m * conditioned.probability_of(&s.sequence.suffix(1)) - s.probability).abs();
                    check(d <= 1e-12, || fail(&format!("chain rule off by {d:e}")))?;
                }
            }
        }
        // regret on a lattice instance, inside and outside the belief's support
        let horizon = rng.gen_range(1..=3);
        let n_scen = rng.gen_range(1..=8usize.min(5usize.pow(horizon as u32)));
        let (n_controls, half) = (rng.gen_range(2..=5), rng.gen_range(3..=9));
        let inst = lattice_instance(&mut rng, horizon, n_controls, n_scen, half);
        let solver = TreeSolver::new(inst.system.clone(), inst.cost.clone(), inst.grid.clone(), TerminalValue::Zero, SolveOptions::default())
            .map_err(|e| e.to_string())?;
        let support: Vec<DisturbanceSequence> = inst.belief.scenarios().iter().map(|s| s.sequence.clone()).collect();
        let ctx = ControlContext { solver: &solver, x0: &inst.x0, universe: &support };
        let inside = support[rng.gen_range(0..support.len())].clone();
        let outside = int_seq(&(0..horizon).map(|_| rng.gen_range(-2..=2)).collect::<Vec<_>>());
        for wbar in [inside, outside] {
            let r = regret(&wbar, &inst.belief, &ctx).map_err(|e| e.to_string())?;
            check(r >= -1e-9, || fail(&format!("regret {r}")))?;
            let own = regret(&wbar, &ScenarioBelief::point_mass(0, wbar.clone()), &ctx).map_err(|e| e.to_string())?;
            check(own.abs() <= 1e-9, || fail(&format!("point-mass regret {own}")))?;
            regret_cases += 1;
        }
    }
    Ok(format!("{cases} random cases ({regret_cases} regret evaluations)"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Runs `poc run` and returns the bytes of every CSV it produced, by name.
fn run_poc(config: &Path, out: &Path, extra: &[&str]) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_poc"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("POC_OUT")
        .env_remove("POC_SEED")
        .env_remove("POC_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    check(status.status.success(), || {
        format!("{} failed: {}", config.display(), String::from_utf8_lossy(&status.stderr))
    })?;
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(out).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

fn c10() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let custom = std::fs::read_to_string(configs_dir().join("custom.toml"))
        .map_err(|e| e.to_string())?
        .replace("horizon = 3", "horizon = 2")
        .replace("refine_controls = true", "refine_controls = false")
        .replace("points = 121", "points = 61")
        .replace("[[-2.0], [-2.0], [-2.0]]", "[[-2.0], [-2.0]]")
        .replace("[[1.0], [1.0], [1.0]]", "[[1.0], [1.0]]")
        .replace("samples = 0", "samples = 500");
    let sampled = dir.path().join("sampled.toml");
    std::fs::write(&sampled, custom).map_err(|e| e.to_string())?;
    let cases: [(PathBuf, [&[&str]; 2]); 3] = [
        (configs_dir().join("toy.toml"), [&[], &[]]),
        (configs_dir().join("hev_small.toml"), [&["--threads", "1"], &["--threads", "4"]]),
        (sampled, [&["--threads", "1"], &["--threads", "3"]]),
    ];
    let mut compared = 0;
    for (i, (config, [first, second])) in cases.iter().enumerate() {
        let a = run_poc(config, &dir.path().join(format!("{i}a")), first)?;
        let b = run_poc(config, &dir.path().join(format!("{i}b")), second)?;
        check(!a.is_empty() && a.keys().eq(b.keys()), || format!("{}: different file sets", config.display()))?;
        for (name, bytes) in &a {
            check(b[name] == *bytes, || format!("{}: {name} differs between runs", config.display()))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} CSVs byte-identical across repeated runs (toy, HEV subset, sampled custom; varied thread counts)"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("toy analytic reproduction", c1),
        ("ideal cost of the truth predictor", c2),
        ("monotonicity properties at p = 0.3", c3),
        ("regret-cost affinity", c4),
        ("tree DP vs exhaustive oracle", c5),
        ("truth-definition consistency", c6),
        ("Type II / Type III coincidence", c7),
        ("HEV property suite", c8),
        ("measure axioms", c9),
        ("determinism", c10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] C{} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] C{} {name}: {reason} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
