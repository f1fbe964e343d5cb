//! Predictors: maps from observations to beliefs.

mod velocity;

pub use velocity::{
    fit_autoregression, FixedHorizon, VelocityForecast, VelocityObservation, VelocityPredictor,
    AR_HISTORY_LEN,
};

use crate::belief::ScenarioBelief;
use crate::environment::{observable_truth, EnvironmentModel, Observation};
use crate::error::{PocError, Result};
use crate::model::DisturbanceSequence;

/// A (possibly step-dependent) predictor `P_k`.
pub trait Predictor: Send + Sync {
    type Observation;

    /// Belief over the remaining disturbances, starting at `step`.
    fn predict(&self, step: usize, observation: &Self::Observation) -> Result<ScenarioBelief>;
}

/// Emits the same belief for every observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BlindPredictor {
    belief: ScenarioBelief,
}

impl BlindPredictor {
    pub fn new(belief: ScenarioBelief) -> Self {
        Self { belief }
    }
}

impl Predictor for BlindPredictor {
    type Observation = Observation;

    fn predict(&self, step: usize, _observation: &Observation) -> Result<ScenarioBelief> {
        if step != self.belief.start_step() {
            return Err(PocError::precondition(format!(
                "blind belief starts at step {}, queried at step {step}",
                self.belief.start_step()
            )));
        }
        Ok(self.belief.clone())
    }
}

/// `o -> W_to(o)`, the observable truth of a finite environment.
#[derive(Debug, Clone)]
pub struct TruthPredictor {
    env: EnvironmentModel,
}

impl TruthPredictor {
    pub fn new(env: EnvironmentModel) -> Self {
        Self { env }
    }
}

impl Predictor for TruthPredictor {
    type Observation = Observation;

    fn predict(&self, step: usize, observation: &Observation) -> Result<ScenarioBelief> {
        if step != 0 {
            return Err(PocError::precondition(
                "the observable truth is defined for step-0 observations",
            ));
        }
        observable_truth(&self.env, observation)
    }
}

/// Toy predictor: `P(w_1 = -3) = p_b`, `P(w_1 = 2) = 1 - p_b`, with `w_0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyParametricPredictor {
    p_b: f64,
}

pub const TOY_LOW: f64 = -3.0;
pub const TOY_HIGH: f64 = 2.0;

impl ToyParametricPredictor {
    pub fn new(p_b: f64) -> Result<Self> {
        if !(0.0..=2.0 / 3.0).contains(&p_b) {
            return Err(PocError::domain(format!(
                "p_b must lie in [0, 2/3], got {p_b}"
            )));
        }
        Ok(Self { p_b })
    }

    pub fn p_b(&self) -> f64 {
        self.p_b
    }
}

impl Predictor for ToyParametricPredictor {
    type Observation = Observation;

    fn predict(&self, step: usize, _observation: &Observation) -> Result<ScenarioBelief> {
        let with_prefix = |w1: f64| match step {
            0 => DisturbanceSequence::scalar(&[0.0, w1]),
            1 => DisturbanceSequence::scalar(&[w1]),
            _ => DisturbanceSequence::default(),
        };
        if step > 1 {
            return Err(PocError::precondition("the toy horizon has two steps"));
        }
        ScenarioBelief::new(
            step,
            vec![
                (with_prefix(TOY_LOW), self.p_b),
                (with_prefix(TOY_HIGH), 1.0 - self.p_b),
            ],
        )
    }
}

/// Adapts a closure into a predictor.
pub struct FnPredictor<O, F> {
    f: F,
    _obs: std::marker::PhantomData<fn(&O)>,
}

impl<O, F> FnPredictor<O, F>
where
    F: Fn(usize, &O) -> Result<ScenarioBelief> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            _obs: std::marker::PhantomData,
        }
    }
}

impl<O, F> Predictor for FnPredictor<O, F>
where
    F: Fn(usize, &O) -> Result<ScenarioBelief> + Send + Sync,
{
    type Observation = O;

    fn predict(&self, step: usize, observation: &O) -> Result<ScenarioBelief> {
        (self.f)(step, observation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{is_accurate, max_indistinguishable_set};

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
                1 => vec![TOY_LOW],
                _ => vec![TOY_HIGH],
            },
        )
        .unwrap()
    }

    #[test]
    fn blind_is_constant() {
        let b = ScenarioBelief::point_mass(0, DisturbanceSequence::scalar(&[1.0]));
        let p = BlindPredictor::new(b.clone());
        assert_eq!(p.predict(0, &Observation(vec![1.0])).unwrap(), b);
        assert_eq!(p.predict(0, &Observation(vec![2.0])).unwrap(), b);
        assert!(p.predict(1, &Observation(vec![2.0])).is_err());
    }

    #[test]
    fn truth_predictor_on_toy() {
        let env = toy_env(0.3);
        let t = TruthPredictor::new(env.clone());
        let b = t.predict(0, &Observation(vec![0.0])).unwrap();
        assert!((b.probability_of(&DisturbanceSequence::scalar(&[0.0, TOY_LOW])) - 0.3).abs() < 1e-15);
        assert!(is_accurate(&t, &env, 1e-12).unwrap().accurate);
        assert_eq!(max_indistinguishable_set(&t, &env).unwrap().len(), 1);
    }

    #[test]
    fn toy_parametric_examples() {
        let o = Observation(vec![0.0]);
        let b = ToyParametricPredictor::new(0.0).unwrap().predict(0, &o).unwrap();
        assert_eq!(b, ScenarioBelief::point_mass(0, DisturbanceSequence::scalar(&[0.0, 2.0])));
        let b = ToyParametricPredictor::new(0.3).unwrap().predict(0, &o).unwrap();
        assert_eq!(b.probability_of(&DisturbanceSequence::scalar(&[0.0, -3.0])), 0.3);
        assert_eq!(b.probability_of(&DisturbanceSequence::scalar(&[0.0, 2.0])), 0.7);
        let b = ToyParametricPredictor::new(2.0 / 3.0).unwrap().predict(0, &o).unwrap();
        assert!((b.probability_of(&DisturbanceSequence::scalar(&[0.0, -3.0])) - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(ToyParametricPredictor::new(0.7), Err(PocError::Domain(_))));
        assert!(ToyParametricPredictor::new(-0.1).is_err());
        let b1 = ToyParametricPredictor::new(0.3).unwrap().predict(1, &o).unwrap();
        assert_eq!(b1.start_step(), 1);
        assert_eq!(b1.horizon_len(), 1);
    }
}
