//! Timing-window constraints for a before-before configuration.
//!
//! With splitter 1 at rest and splitter 2 moving at `V`, splitter 2's impact
//! precedes splitter 1's in its own frame iff the lab delay between the two
//! impacts stays below `V·L/c²`, where `L = L1 + L2`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::relativity::SPEED_OF_LIGHT;

const C_SQUARED: f64 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;

fn require_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::InvalidQuery(format!("{name} must be positive and finite, got {value}")));
    }
    Ok(())
}

/// Strict upper bound `V·L/c²` on the path delay δt (emission delay neglected).
pub fn max_delay(velocity: f64, total_length: f64) -> Result<f64> {
    require_positive("V", velocity)?;
    require_positive("L", total_length)?;
    if velocity >= SPEED_OF_LIGHT {
        return Err(Error::InvalidQuery(format!("V must be below c = {SPEED_OF_LIGHT} m/s, got {velocity}")));
    }
    Ok(velocity * total_length / C_SQUARED)
}

/// Minimum splitter-2 velocity `c²·(τ + δt)/L` for a before-before configuration.
pub fn required_velocity(delta_t: f64, tau: f64, total_length: f64) -> Result<f64> {
    require_positive("L", total_length)?;
    if !delta_t.is_finite() || !tau.is_finite() {
        return Err(Error::InvalidQuery(format!("delays must be finite, got delta_t = {delta_t}, tau = {tau}")));
    }
    let delay = tau + delta_t;
    if !(delay > 0.0) {
        return Err(Error::InvalidQuery(format!("tau + delta_t must be positive, got {delay}")));
    }
    let v = C_SQUARED * delay / total_length;
    if v >= SPEED_OF_LIGHT {
        return Err(Error::Infeasible(format!(
            "required velocity {v:e} m/s is not below c = {SPEED_OF_LIGHT} m/s"
        )));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    Velocity,
    Length,
    DeltaT,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V" | "v" | "velocity" => Ok(SweepAxis::Velocity),
            "L" | "l" | "length" => Ok(SweepAxis::Length),
            "delta_t" | "delta-t" | "dt" => Ok(SweepAxis::DeltaT),
            other => Err(Error::InvalidQuery(format!("unknown sweep axis {other:?}, expected V, L or delta_t"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Velocity => "V",
            SweepAxis::Length => "L",
            SweepAxis::DeltaT => "delta_t",
        })
    }
}

/// Values held fixed during a sweep. The swept axis's own field is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FixedParams {
    pub velocity: Option<f64>,
    pub total_length: Option<f64>,
    pub delta_t: Option<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub input: f64,
    /// `max_delay` for V and L sweeps, `required_velocity` for δt sweeps;
    /// `None` when the row's query failed.
    pub value: Option<f64>,
    pub feasible: bool,
}

/// Grid `start, start + step, …` up to and including `stop` (within a
/// relative 1e-9 of a step). Values are computed as `start + k·step`.
pub fn range_values(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(Error::InvalidQuery("sweep range must be finite".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidQuery(format!("sweep step must be positive, got {step}")));
    }
    if stop < start {
        return Err(Error::InvalidQuery(format!("empty sweep range {start}..{stop}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as u64;
    if n > 10_000_000 {
        return Err(Error::InvalidQuery(format!("sweep would produce {} rows", n + 1)));
    }
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

fn fixed(name: &str, value: Option<f64>) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidQuery(format!("sweep needs a fixed {name}")))
}

/// Evaluates the bound at each input. Rows whose query fails are kept and
/// marked infeasible.
///
/// The feasible flag is the strict inequality δt < V·L/c². For V and L
/// sweeps without a fixed δt it only records that a non-empty window exists.
pub fn sweep(axis: SweepAxis, inputs: &[f64], params: &FixedParams) -> Result<Vec<SweepRow>> {
    if inputs.is_empty() {
        return Err(Error::InvalidQuery("sweep needs at least one input".into()));
    }
    let rows = match axis {
        SweepAxis::Velocity | SweepAxis::Length => {
            let other = match axis {
                SweepAxis::Velocity => fixed("L", params.total_length)?,
                _ => fixed("V", params.velocity)?,
            };
            inputs
                .iter()
                .map(|&input| {
                    let bound = match axis {
                        SweepAxis::Velocity => max_delay(input, other),
                        _ => max_delay(other, input),
                    }
                    .ok();
                    let feasible = match (bound, params.delta_t) {
                        (Some(b), Some(dt)) => dt < b,
                        (Some(_), None) => true,
                        (None, _) => false,
                    };
                    SweepRow {
                        input,
                        value: bound,
                        feasible,
                    }
                })
                .collect()
        }
        SweepAxis::DeltaT => {
            let v = fixed("V", params.velocity)?;
            let l = fixed("L", params.total_length)?;
            let bound = max_delay(v, l)?;
            inputs
                .iter()
                .map(|&input| SweepRow {
                    input,
                    value: required_velocity(input, params.tau, l).ok(),
                    feasible: input < bound,
                })
                .collect()
        }
    };
    Ok(rows)
}
