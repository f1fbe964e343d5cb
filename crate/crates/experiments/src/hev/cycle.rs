//! Driving cycles sampled at 1 Hz.

use std::io::{Read, Write};

use poc_core::model::DisturbanceSequence;
use poc_core::{PocError, Result};

/// Bundled 112 s synthetic cycle: launch, cruise, brake, re-accelerate,
/// cruise, stop, a short creep and a final stop.
const BUNDLED_VELOCITIES: [f64; 112] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 1.2, 2.4, 3.6, 4.8, 6.0, 7.2, 8.0, 8.8, 9.6, 10.4, 11.2, 12.0,
    12.4, 12.8, 13.2, 13.6, 13.62, 13.86, 14.15, 14.26, 14.11, 13.81, 13.59, 13.61, 13.86,
    14.15, 14.26, 14.11, 13.81, 13.59, 12.69, 11.79, 10.89, 9.99, 9.09, 8.19, 7.29, 6.39, 5.99,
    5.59, 5.19, 4.79, 5.49, 6.19, 6.89, 7.59, 8.29, 8.99, 9.69, 10.39, 11.09, 11.79, 12.09,
    12.39, 12.69, 12.99, 12.69, 12.49, 12.54, 12.8, 13.08, 13.17, 13.0, 12.7, 12.5, 12.55,
    12.81, 13.09, 12.49, 11.89, 11.29, 10.69, 10.09, 9.49, 8.19, 6.89, 5.59, 4.29, 2.99, 1.69,
    0.39, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];

/// A 1 Hz velocity table with backward-difference accelerations (`a_0 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingCycle {
    velocities: Vec<f64>,
    accelerations: Vec<f64>,
}

impl DrivingCycle {
    pub fn new(velocities: Vec<f64>) -> Result<Self> {
        if velocities.len() < 2 {
            return Err(PocError::Domain("a driving cycle needs at least two samples".into()));
        }
        if let Some((i, v)) = velocities.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(PocError::Domain(format!("velocity {v} at sample {i} must be finite and nonnegative")));
        }
        let accelerations = std::iter::once(0.0)
            .chain(velocities.windows(2).map(|p| p[1] - p[0]))
            .collect();
        Ok(Self {
            velocities,
            accelerations,
        })
    }

    pub fn bundled() -> Self {
        Self::new(BUNDLED_VELOCITIES.to_vec()).expect("bundled cycle is valid")
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn accelerations(&self) -> &[f64] {
        &self.accelerations
    }

    /// The realized disturbance `w_k = [v_k, a_k]`.
    pub fn disturbances(&self) -> DisturbanceSequence {
        DisturbanceSequence::new(
            self.velocities
                .iter()
                .zip(&self.accelerations)
                .map(|(v, a)| vec![*v, *a])
                .collect(),
        )
    }

    /// Parses a `t,v` table; rows must be consecutive seconds.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers().map_err(csv_error)?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "v" {
            return Err(PocError::Format(format!("cycle header must be `t,v`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut velocities = Vec::new();
        let mut start: Option<f64> = None;
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            let parse = |field: &str| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| PocError::Format(format!("row {}: `{field}`: {e}", i + 1)))
            };
            let t = parse(&rec[0])?;
            let t0 = *start.get_or_insert(t);
            if (t - t0 - i as f64).abs() > 1e-9 {
                return Err(PocError::Format(format!("row {}: samples must be 1 s apart", i + 1)));
            }
            velocities.push(parse(&rec[1])?);
        }
        Self::new(velocities)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "v"]).map_err(csv_error)?;
        for (t, v) in self.velocities.iter().enumerate() {
            w.write_record([t.to_string(), format!("{v:?}")]).map_err(csv_error)?;
        }
        w.flush().map_err(|e| PocError::Format(e.to_string()))
    }
}

fn csv_error(e: csv::Error) -> PocError {
    PocError::Format(e.to_string())
}
