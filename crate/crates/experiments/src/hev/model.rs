//! Surrogate parallel-hybrid powertrain.
//!
//! State: battery state of charge. Disturbance: `w = [v, a]`. Control: motor
//! torque `T_m` on a uniform grid over the motor envelope. The engine covers
//! `T_e = T_d - T_m`; when braking, friction brakes absorb whatever the motor
//! does not regenerate. All constants are surrogate values, not measured maps.

use serde::{Deserialize, Serialize};

use poc_core::model::{linspace, ControlledSystem, CostStructure};
use poc_core::solver::{StateGrid, TerminalValue};
use poc_core::{PocError, Result};

/// How the efficiency product scales electrical power in the SOC update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EfficiencyConvention {
    /// Losses always drain the battery: divide by `eta_b eta_m` when
    /// discharging, multiply when charging.
    #[default]
    Physical,
    /// Multiply when discharging, divide when charging.
    Literal,
}

/// Every constant of the surrogate powertrain and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HevParams {
    /// Vehicle mass, kg.
    pub mass: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Wheel-to-shaft reduction shared by engine and motor.
    pub gear_ratio: f64,
    /// Rolling resistance, N (applied while moving).
    pub road_load_const: f64,
    /// Aerodynamic coefficient, N s^2 / m^2.
    pub road_load_quad: f64,
    /// Engine torque limit, N m.
    pub engine_torque_max: f64,
    /// Motor torque limit, N m (symmetric).
    pub motor_torque_max: f64,
    pub motor_torque_points: usize,
    /// Usable battery energy, J; `K = 1 / battery_energy`.
    pub battery_energy: f64,
    pub eta_b0: f64,
    /// Battery efficiency droop per watt of motor power.
    pub eta_b_droop: f64,
    pub eta_b_min: f64,
    pub eta_b_max: f64,
    pub eta_m0: f64,
    /// Motor efficiency droop at full torque.
    pub eta_m_droop: f64,
    pub eta_m_min: f64,
    pub eta_m_max: f64,
    pub efficiency: EfficiencyConvention,
    /// Fuel rate with the engine at zero torque, g/s.
    pub fuel_idle: f64,
    /// Linear fuel coefficient, g/J.
    pub fuel_c1: f64,
    /// Quadratic fuel coefficient, g s/J^2.
    pub fuel_c2: f64,
    /// Weight of the SOC change `x_N - x_0`.
    pub alpha1: f64,
    /// Weight of fuel.
    pub alpha2: f64,
    /// Weight of the squared SOC deviation from target.
    pub alpha3: f64,
    /// Weight of `(x - x_target)^2` added to the window-closing value.
    pub window_deviation_weight: f64,
    pub soc_initial: f64,
    pub soc_target: f64,
    pub soc_grid_min: f64,
    pub soc_grid_max: f64,
    pub soc_grid_points: usize,
}

impl Default for HevParams {
    fn default() -> Self {
        Self {
            mass: 1500.0,
            wheel_radius: 0.3,
            gear_ratio: 4.0,
            road_load_const: 150.0,
            road_load_quad: 0.4,
            engine_torque_max: 400.0,
            motor_torque_max: 200.0,
            motor_torque_points: 21,
            battery_energy: 5.4e6,
            eta_b0: 0.98,
            eta_b_droop: 2e-6,
            eta_b_min: 0.85,
            eta_b_max: 0.99,
            eta_m0: 0.95,
            eta_m_droop: 0.12,
            eta_m_min: 0.80,
            eta_m_max: 0.95,
            efficiency: EfficiencyConvention::Physical,
            fuel_idle: 0.15,
            fuel_c1: 7e-5,
            fuel_c2: 5e-10,
            alpha1: -350.0,
            alpha2: 1.0,
            alpha3: 200.0,
            window_deviation_weight: 0.0,
            soc_initial: 0.6,
            soc_target: 0.6,
            soc_grid_min: 0.3,
            soc_grid_max: 0.9,
            soc_grid_points: 201,
        }
    }
}

/// One evaluated powertrain step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HevStep {
    pub soc_next: f64,
    /// Whether the SOC update left `[0, 1]` and was clamped.
    pub saturated: bool,
    pub omega: f64,
    pub torque_demand: f64,
    pub engine_torque: f64,
    /// `alpha2 J_FC`.
    pub fuel_term: f64,
    /// `alpha3 (x - x_target)^2`.
    pub deviation_term: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PocError::Domain(format!("{name} = {v} must be positive and finite")))
    }
}

fn efficiency_band(name: &str, lo: f64, hi: f64) -> Result<()> {
    if 0.0 < lo && lo <= hi && hi <= 1.0 {
        Ok(())
    } else {
        Err(PocError::Domain(format!("{name} bounds [{lo}, {hi}] must satisfy 0 < min <= max <= 1")))
    }
}

impl HevParams {
    pub fn validate(&self) -> Result<()> {
        positive("mass", self.mass)?;
        positive("wheel_radius", self.wheel_radius)?;
        positive("gear_ratio", self.gear_ratio)?;
        positive("engine_torque_max", self.engine_torque_max)?;
        positive("motor_torque_max", self.motor_torque_max)?;
        positive("battery_energy", self.battery_energy)?;
        efficiency_band("eta_b", self.eta_b_min, self.eta_b_max)?;
        efficiency_band("eta_m", self.eta_m_min, self.eta_m_max)?;
        for (name, v) in [
            ("road_load_const", self.road_load_const),
            ("road_load_quad", self.road_load_quad),
            ("eta_b_droop", self.eta_b_droop),
            ("eta_m_droop", self.eta_m_droop),
            ("fuel_idle", self.fuel_idle),
            ("fuel_c1", self.fuel_c1),
            ("fuel_c2", self.fuel_c2),
            ("window_deviation_weight", self.window_deviation_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PocError::Domain(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if self.motor_torque_points < 2 {
            return Err(PocError::Domain("motor_torque_points must be at least 2".into()));
        }
        if self.soc_grid_points < 2 || !(0.0 <= self.soc_grid_min && self.soc_grid_min < self.soc_grid_max && self.soc_grid_max <= 1.0) {
            return Err(PocError::Domain(
                "SOC grid needs >= 2 points on [soc_grid_min, soc_grid_max] within [0, 1]".into(),
            ));
        }
        for (name, v) in [("soc_initial", self.soc_initial), ("soc_target", self.soc_target)] {
            if !(0.0 < v && v < 1.0) {
                return Err(PocError::Domain(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("alpha3", self.alpha3)] {
            if !v.is_finite() {
                return Err(PocError::Domain(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Shaft speed and torque demand `[omega, T_d] = f_s(v, a)`.
    pub fn static_map(&self, v: f64, a: f64) -> (f64, f64) {
        let road = if v > 0.0 {
            self.road_load_const + self.road_load_quad * v * v
        } else {
            0.0
        };
        let force = self.mass * a + road;
        (
            v / self.wheel_radius * self.gear_ratio,
            force * self.wheel_radius / self.gear_ratio,
        )
    }

    /// Battery efficiency, drooping with motor power.
    pub fn eta_b(&self, omega: f64, t_m: f64) -> f64 {
        (self.eta_b0 - self.eta_b_droop * (omega * t_m).abs()).clamp(self.eta_b_min, self.eta_b_max)
    }

    /// Motor efficiency, drooping quadratically with torque.
    pub fn eta_m(&self, t_m: f64) -> f64 {
        let r = t_m / self.motor_torque_max;
        (self.eta_m0 - self.eta_m_droop * r * r).clamp(self.eta_m_min, self.eta_m_max)
    }

    /// Fuel rate for a nonnegative engine torque, g/s.
    pub fn fuel_rate(&self, omega: f64, t_e: f64) -> f64 {
        let p = omega * t_e.max(0.0);
        self.fuel_idle + self.fuel_c1 * p + self.fuel_c2 * p * p
    }

    /// Engine torque for a motor torque; braking deficits go to friction brakes.
    pub fn engine_torque(&self, t_d: f64, t_m: f64) -> f64 {
        (t_d - t_m).max(0.0)
    }

    /// Whether `T_m` is within the motor envelope and leaves the engine in
    /// `[0, T_e,max]`, or (braking) regenerates no more than the demand.
    pub fn is_feasible(&self, v: f64, a: f64, t_m: f64) -> bool {
        let (_, t_d) = self.static_map(v, a);
        t_m.abs() <= self.motor_torque_max * (1.0 + 1e-12)
            && t_m <= t_d.max(0.0) + 1e-9
            && t_d - t_m <= self.engine_torque_max + 1e-9
    }

    /// Unclamped SOC after one second.
    pub fn soc_update(&self, soc: f64, omega: f64, t_m: f64) -> f64 {
        let p = omega * t_m;
        let eta = self.eta_b(omega, t_m) * self.eta_m(t_m);
        let scaled = match (self.efficiency, p >= 0.0) {
            (EfficiencyConvention::Physical, true) | (EfficiencyConvention::Literal, false) => p / eta,
            (EfficiencyConvention::Physical, false) | (EfficiencyConvention::Literal, true) => p * eta,
        };
        soc - scaled / self.battery_energy
    }

    pub fn deviation_term(&self, soc: f64) -> f64 {
        let d = soc - self.soc_target;
        self.alpha3 * d * d
    }

    /// `alpha1 (x_N - x_0)`.
    pub fn terminal_term(&self, soc: f64) -> f64 {
        self.alpha1 * (soc - self.soc_initial)
    }

    pub fn torque_grid(&self) -> Vec<f64> {
        linspace(-self.motor_torque_max, self.motor_torque_max, self.motor_torque_points)
    }

    /// DP grid over SOC.
    pub fn soc_grid(&self) -> Result<StateGrid> {
        StateGrid::uniform(self.soc_grid_min, self.soc_grid_max, self.soc_grid_points)
    }

    /// Window-closing value: the SOC term of the episode cost plus an
    /// optional quadratic charge on the deviation left for later windows.
    pub fn window_terminal(&self) -> TerminalValue {
        let p = self.clone();
        TerminalValue::stationary(move |x| {
            let d = x[0] - p.soc_target;
            p.terminal_term(x[0]) + p.window_deviation_weight * d * d
        })
    }

    /// The plant and cost over `horizon` one-second steps.
    pub fn problem(&self, horizon: usize) -> Result<(ControlledSystem, CostStructure)> {
        self.validate()?;
        let controls = self.torque_grid().into_iter().map(|t| vec![t]).collect();
        let (pt, pa, pc) = (self.clone(), self.clone(), self.clone());
        let system = ControlledSystem::new(1, 2, 1, horizon, controls, move |x, w, u, out| {
            let (omega, _) = pt.static_map(w[0], w[1]);
            out[0] = pt.soc_update(x[0], omega, u[0]).clamp(0.0, 1.0);
        })?
        .with_admissibility(move |_, w, u| pa.is_feasible(w[0], w[1], u[0]));
        let pt = self.clone();
        let cost = CostStructure::time_invariant(
            horizon,
            move |x, w, u| {
                let (omega, t_d) = pc.static_map(w[0], w[1]);
                pc.alpha2 * pc.fuel_rate(omega, pc.engine_torque(t_d, u[0])) + pc.deviation_term(x[0])
            },
            move |x| pt.terminal_term(x[0]),
        )?;
        Ok((system, cost))
    }
}

/// Evaluates one step; infeasible torques are an error.
pub fn hev_step(params: &HevParams, soc: f64, v: f64, a: f64, t_m: f64) -> Result<HevStep> {
    if !(v >= 0.0) || !a.is_finite() || !t_m.is_finite() || !(0.0..=1.0).contains(&soc) {
        return Err(PocError::Domain(format!(
            "step inputs out of domain: soc={soc}, v={v}, a={a}, T_m={t_m}"
        )));
    }
    if !params.is_feasible(v, a, t_m) {
        return Err(PocError::Infeasible(format!(
            "motor torque {t_m} cannot serve v={v}, a={a}"
        )));
    }
    let (omega, t_d) = params.static_map(v, a);
    let t_e = params.engine_torque(t_d, t_m);
    let raw = params.soc_update(soc, omega, t_m);
    Ok(HevStep {
        soc_next: raw.clamp(0.0, 1.0),
        saturated: !(0.0..=1.0).contains(&raw),
        omega,
        torque_demand: t_d,
        engine_torque: t_e,
        fuel_term: params.alpha2 * params.fuel_rate(omega, t_e),
        deviation_term: params.deviation_term(soc),
    })
}

/// Per-term breakdown of an episode's cost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub soc_change_term: f64,
    pub fuel: f64,
    pub deviation: f64,
    pub total: f64,
    pub saturations: usize,
}

/// Replays a torque profile through [`hev_step`] and sums the cost terms.
pub fn cost_breakdown(
    params: &HevParams,
    velocities: &[f64],
    accelerations: &[f64],
    torques: &[f64],
) -> Result<CostBreakdown> {
    if velocities.len() != torques.len() || accelerations.len() != torques.len() {
        return Err(PocError::Domain("cycle and torque profile lengths differ".into()));
    }
    let mut soc = params.soc_initial;
    let mut out = CostBreakdown::default();
    for ((v, a), t) in velocities.iter().zip(accelerations).zip(torques) {
        let s = hev_step(params, soc, *v, *a, *t)?;
        out.fuel += s.fuel_term;
        out.deviation += s.deviation_term;
        out.saturations += usize::from(s.saturated);
        soc = s.soc_next;
    }
    out.soc_change_term = params.terminal_term(soc);
    out.total = out.soc_change_term + out.fuel + out.deviation;
    Ok(out)
}
