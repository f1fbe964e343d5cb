//! Vehicle-speed predictors for energy management.
//!
//! The disturbance is `w = [v, a]` (velocity in m/s, acceleration in m/s^2)
//! with `v_{k+1} = v_k + a_{k+1}` at 1 Hz. Every predictor forecasts the
//! future accelerations; velocities are integrated per scenario and floored at
//! zero, in which case the stored acceleration is the realized velocity change.

use nalgebra::{DMatrix, DVector};

use crate::belief::{discretize_gaussian, product_belief, ScenarioBelief, DEFAULT_PRODUCT_CAP};
use crate::error::{PocError, Result};
use crate::model::DisturbanceSequence;

use super::Predictor;

/// Velocity-history length consumed by the autoregressive predictor.
pub const AR_HISTORY_LEN: usize = 6;

/// Points per step used to discretize Gaussian acceleration forecasts.
const GAUSSIAN_POINTS: usize = 5;

/// What a speed predictor sees at step `k`: the `(v, a)` history up to `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityObservation {
    pub step: usize,
    pub velocities: Vec<f64>,
    pub accelerations: Vec<f64>,
}

impl VelocityObservation {
    pub fn new(step: usize, velocities: Vec<f64>, accelerations: Vec<f64>) -> Result<Self> {
        if velocities.is_empty() || velocities.len() != accelerations.len() {
            return Err(PocError::domain(
                "velocity and acceleration histories must be nonempty and aligned",
            ));
        }
        if velocities.iter().any(|v| !(*v >= 0.0)) {
            return Err(PocError::domain("velocities must be nonnegative"));
        }
        Ok(Self {
            step,
            velocities,
            accelerations,
        })
    }

    pub fn current_velocity(&self) -> f64 {
        *self.velocities.last().expect("nonempty history")
    }

    pub fn current_acceleration(&self) -> f64 {
        *self.accelerations.last().expect("nonempty history")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VelocityPredictor {
    /// D1: `a_{k+1} = 0`.
    ConstantVelocity,
    /// D2: `a_{k+1} = a_k - a_0 / gamma`.
    LinearDecay { gamma: f64 },
    /// D3: `a_{k+1} = lambda a_k`.
    ExponentialDecay { lambda: f64 },
    /// S1: `a_{k+1} ~ N(0, sigma^2)`.
    ZeroMeanGaussian { sigma: f64 },
    /// S2: `a_{k+i} ~ N(a_0 - i a_0 / gamma, sigma^2)`.
    StochasticLinearDecay { sigma: f64, gamma: f64 },
    /// Linear autoregression on the last six velocities.
    Autoregressive { coeffs: [f64; AR_HISTORY_LEN] },
}

/// A forecast over `[w_{k+1}, ..., w_{k+h}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityForecast {
    pub belief: ScenarioBelief,
    /// Per-step `(mean, std)` of the acceleration before discretization (S1/S2 only).
    pub acceleration_gaussians: Option<Vec<(f64, f64)>>,
}

impl VelocityForecast {
    /// Negative log density of realized accelerations under the Gaussian forecast.
    pub fn neg_log_density(&self, realized_accels: &[f64]) -> Option<f64> {
        let gaussians = self.acceleration_gaussians.as_ref()?;
        let mut acc = 0.0;
        for ((mu, sigma), a) in gaussians.iter().zip(realized_accels) {
            if *sigma == 0.0 {
                if a != mu {
                    return Some(f64::INFINITY);
                }
                continue;
            }
            let z = (a - mu) / sigma;
            acc += 0.5 * z * z + sigma.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        Some(acc)
    }
}

/// Integrates accelerations from `v0`, flooring velocities at zero.
///
/// Velocities are `v0` plus the partial sum of accelerations taken in sorted
/// order, so permuted acceleration paths reach bitwise-identical velocities
/// (which lets the solver share their subtrees). Where the floor binds, the
/// stored acceleration is the realized velocity change and integration
/// restarts from zero.
fn integrate(v0: f64, accels: &[f64]) -> Vec<Vec<f64>> {
    let mut base = v0;
    let mut prev = v0;
    let mut since: Vec<f64> = Vec::with_capacity(accels.len());
    let mut steps = Vec::with_capacity(accels.len());
    for &a in accels {
        since.push(a);
        let mut sorted = since.clone();
        sorted.sort_by(f64::total_cmp);
        let v = base + sorted.iter().sum::<f64>();
        if v < 0.0 {
            steps.push(vec![0.0, -prev]);
            base = 0.0;
            prev = 0.0;
            since.clear();
        } else {
            steps.push(vec![v, a]);
            prev = v;
        }
    }
    steps
}

impl VelocityPredictor {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::ConstantVelocity => true,
            Self::LinearDecay { gamma } => *gamma > 0.0,
            Self::ExponentialDecay { lambda } => *lambda > 0.0 && *lambda < 1.0,
            Self::ZeroMeanGaussian { sigma } => *sigma >= 0.0,
            Self::StochasticLinearDecay { sigma, gamma } => *sigma >= 0.0 && *gamma > 0.0,
            Self::Autoregressive { coeffs } => coeffs.iter().all(|c| c.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(PocError::domain(format!("invalid predictor parameters {self:?}")))
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Self::ZeroMeanGaussian { .. } | Self::StochasticLinearDecay { .. }
        )
    }

    /// Forecast of the next `horizon` disturbances.
    pub fn forecast(&self, obs: &VelocityObservation, horizon: usize) -> Result<VelocityForecast> {
        self.validate()?;
        if horizon == 0 {
            return Err(PocError::domain("forecast horizon must be positive"));
        }
        let start = obs.step + 1;
        let v0 = obs.current_velocity();
        let a0 = obs.current_acceleration();
        let point = |steps: Vec<Vec<f64>>| VelocityForecast {
            belief: ScenarioBelief::point_mass(start, DisturbanceSequence::new(steps)),
            acceleration_gaussians: None,
        };
        let deterministic = |accels: Vec<f64>| point(integrate(v0, &accels));
        Ok(match self {
            Self::ConstantVelocity => deterministic(vec![0.0; horizon]),
            Self::LinearDecay { gamma } => {
                deterministic((1..=horizon).map(|i| a0 - i as f64 * a0 / gamma).collect())
            }
            Self::ExponentialDecay { lambda } => {
                deterministic((1..=horizon).map(|i| a0 * lambda.powi(i as i32)).collect())
            }
            Self::ZeroMeanGaussian { sigma } => {
                self.gaussian(start, v0, &vec![(0.0, *sigma); horizon])?
            }
            Self::StochasticLinearDecay { sigma, gamma } => {
                let params: Vec<(f64, f64)> = (1..=horizon)
                    .map(|i| (a0 - i as f64 * a0 / gamma, *sigma))
                    .collect();
                self.gaussian(start, v0, &params)?
            }
            Self::Autoregressive { coeffs } => {
                // Short histories are padded with their earliest value.
                let mut window: Vec<f64> = Vec::with_capacity(AR_HISTORY_LEN + horizon);
                let hist = &obs.velocities;
                for i in 0..AR_HISTORY_LEN {
                    let idx = (hist.len() + i).saturating_sub(AR_HISTORY_LEN);
                    window.push(if hist.len() + i < AR_HISTORY_LEN { hist[0] } else { hist[idx] });
                }
                let mut steps = Vec::with_capacity(horizon);
                let mut prev = v0;
                for _ in 0..horizon {
                    let tail = &window[window.len() - AR_HISTORY_LEN..];
                    let next = coeffs
                        .iter()
                        .zip(tail)
                        .map(|(c, v)| c * v)
                        .sum::<f64>()
                        .max(0.0);
                    steps.push(vec![next, next - prev]);
                    prev = next;
                    window.push(next);
                }
                point(steps)
            }
        })
    }

    fn gaussian(&self, start: usize, v0: f64, params: &[(f64, f64)]) -> Result<VelocityForecast> {
        let marginals = params
            .iter()
            .map(|(mu, sigma)| {
                Ok(discretize_gaussian(*mu, *sigma, GAUSSIAN_POINTS)?
                    .into_iter()
                    .map(|(a, p)| (vec![a], p))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let accel_belief = product_belief(start, &marginals, DEFAULT_PRODUCT_CAP)?;
        let belief = accel_belief.map_sequences(|seq| {
            let accels: Vec<f64> = seq.steps().iter().map(|a| a[0]).collect();
            DisturbanceSequence::new(integrate(v0, &accels))
        })?;
        Ok(VelocityForecast {
            belief,
            acceleration_gaussians: Some(params.to_vec()),
        })
    }
}

/// A speed predictor with a fixed forecast length, as a [`Predictor`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedHorizon {
    pub predictor: VelocityPredictor,
    pub horizon: usize,
}

impl Predictor for FixedHorizon {
    type Observation = VelocityObservation;

    fn predict(&self, step: usize, observation: &VelocityObservation) -> Result<ScenarioBelief> {
        if step != observation.step + 1 {
            return Err(PocError::precondition(format!(
                "forecast for step {step} requested from an observation at step {}",
                observation.step
            )));
        }
        Ok(self.predictor.forecast(observation, self.horizon)?.belief)
    }
}

/// Least-squares autoregression `v_{t+1} = sum_i c_i v_{t-5+i}` over velocity series.
///
/// Uses the minimum-norm solution when the regressors are rank deficient.
pub fn fit_autoregression(series: &[&[f64]]) -> Result<[f64; AR_HISTORY_LEN]> {
    let mut rows: Vec<f64> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for s in series {
        for t in AR_HISTORY_LEN..s.len() {
            rows.extend_from_slice(&s[t - AR_HISTORY_LEN..t]);
            targets.push(s[t]);
        }
    }
    if targets.is_empty() {
        return Err(PocError::domain(format!(
            "autoregression needs series longer than {AR_HISTORY_LEN}"
        )));
    }
    let x = DMatrix::from_row_slice(targets.len(), AR_HISTORY_LEN, &rows);
    let y = DVector::from_vec(targets);
    let svd = x.svd(true, true);
    let sol = svd
        .solve(&y, 1e-10)
        .map_err(|e| PocError::Numeric { step: 0, detail: e.to_string() })?;
    let mut coeffs = [0.0; AR_HISTORY_LEN];
    coeffs.copy_from_slice(sol.as_slice());
    Ok(coeffs)
}
