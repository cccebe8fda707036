//! Frame-local time ordering of the two beam-splitter impacts.
//!
//! Events live on a single lab axis: the source sits at the origin, splitter 1
//! on the negative side and splitter 2 on the positive side. Each impact is
//! judged in the instantaneous rest frame of its own splitter.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s (exact by definition of the metre).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const C_SQUARED: f64 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;

/// A lab-frame event: time in seconds, position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeEvent {
    pub t: f64,
    pub x: f64,
}

impl SpacetimeEvent {
    pub fn new(t: f64, x: f64) -> Result<Self> {
        let event = Self { t, x };
        event.validate()?;
        Ok(event)
    }

    fn validate(&self) -> Result<()> {
        if !self.t.is_finite() || !self.x.is_finite() {
            return Err(Error::InvalidInput(format!(
                "event coordinates must be finite, got (t = {}, x = {})",
                self.t, self.x
            )));
        }
        Ok(())
    }
}

/// Velocity of a splitter rest frame along the lab axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameVelocity {
    v: f64,
    gamma: f64,
}

impl FrameVelocity {
    pub const REST: FrameVelocity = FrameVelocity { v: 0.0, gamma: 1.0 };

    pub fn new(v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("velocity must be finite, got {v}")));
        }
        if v.abs() >= SPEED_OF_LIGHT {
            return Err(Error::InvalidVelocity { velocity: v });
        }
        let beta = v / SPEED_OF_LIGHT;
        let gamma = 1.0 / (1.0 - beta * beta).sqrt();
        Ok(Self { v, gamma })
    }

    pub fn velocity(&self) -> f64 {
        self.v
    }

    /// Lorentz factor, 1/sqrt(1 - v²/c²).
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Whether an impact preserves (`U`) or breaks (`D`) indistinguishability of
/// the splitter's input sub-ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Distinguishability {
    #[serde(rename = "u")]
    U,
    #[serde(rename = "d")]
    D,
}

impl fmt::Display for Distinguishability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distinguishability::U => "u",
            Distinguishability::D => "d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactContext {
    pub event: SpacetimeEvent,
    pub frame: FrameVelocity,
    pub distinguishability: Distinguishability,
}

impl ImpactContext {
    pub fn new(event: SpacetimeEvent, frame: FrameVelocity, distinguishability: Distinguishability) -> Self {
        Self {
            event,
            frame,
            distinguishability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImpactClass {
    Before,
    NonBefore,
    Distinguishable,
}

impl ImpactClass {
    pub const ALL: [ImpactClass; 3] = [ImpactClass::Before, ImpactClass::NonBefore, ImpactClass::Distinguishable];

    pub fn as_str(&self) -> &'static str {
        match self {
            ImpactClass::Before => "Before",
            ImpactClass::NonBefore => "NonBefore",
            ImpactClass::Distinguishable => "Distinguishable",
        }
    }

    pub(crate) fn index(&self) -> usize {
        match self {
            ImpactClass::Before => 0,
            ImpactClass::NonBefore => 1,
            ImpactClass::Distinguishable => 2,
        }
    }
}

impl fmt::Display for ImpactClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification of both impacts of one trial, photon 1 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExperimentClass(pub ImpactClass, pub ImpactClass);

impl ExperimentClass {
    pub const COUNT: usize = 9;

    pub fn first(&self) -> ImpactClass {
        self.0
    }

    pub fn second(&self) -> ImpactClass {
        self.1
    }

    pub fn contains(&self, class: ImpactClass) -> bool {
        self.0 == class || self.1 == class
    }

    pub(crate) fn index(&self) -> usize {
        3 * self.0.index() + self.1.index()
    }

    pub(crate) fn from_index(index: usize) -> Self {
        ExperimentClass(ImpactClass::ALL[index / 3], ImpactClass::ALL[index % 3])
    }
}

impl fmt::Display for ExperimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

/// Time of `e_i` minus time of `e_j`, both measured in `frame`.
///
/// Negative means `e_i` happens first in that frame. Uses the difference form
/// `γ·[Δt − vΔx/c²]` so absolute coordinates never enter the boost.
pub fn time_difference_in_frame(e_i: &SpacetimeEvent, e_j: &SpacetimeEvent, frame: &FrameVelocity) -> Result<f64> {
    e_i.validate()?;
    e_j.validate()?;
    let dt = e_i.t - e_j.t;
    let dx = e_i.x - e_j.x;
    Ok(frame.gamma * (dt - frame.v * dx / C_SQUARED))
}

/// Classifies the impact described by `this` relative to the partner impact.
///
/// Ties in the splitter frame count as non-before; `tie_tolerance` widens the
/// tie band to absorb rounding in generated geometries.
pub fn classify_impact(this: &ImpactContext, other: &ImpactContext, tie_tolerance: f64) -> Result<ImpactClass> {
    if !(tie_tolerance >= 0.0 && tie_tolerance.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tie tolerance must be finite and non-negative, got {tie_tolerance}"
        )));
    }
    if this.distinguishability == Distinguishability::D {
        return Ok(ImpactClass::Distinguishable);
    }
    if other.distinguishability == Distinguishability::D {
        return Ok(ImpactClass::Before);
    }
    let diff = time_difference_in_frame(&this.event, &other.event, &this.frame)?;
    if diff < -tie_tolerance {
        Ok(ImpactClass::Before)
    } else {
        Ok(ImpactClass::NonBefore)
    }
}

pub fn classify_experiment(first: &ImpactContext, second: &ImpactContext, tie_tolerance: f64) -> Result<ExperimentClass> {
    Ok(ExperimentClass(
        classify_impact(first, second, tie_tolerance)?,
        classify_impact(second, first, tie_tolerance)?,
    ))
}

/// Velocity of splitter 2 above which its impact becomes a before event in
/// its own frame, for a lab-time lead `dt = t2 − t1` and separation `dx = x2 − x1`.
pub fn threshold_velocity(dt: f64, dx: f64) -> f64 {
    C_SQUARED * dt / dx
}
