//! Per-segment tube geometry.
//!
//! The fibers keep the outer radius fixed and the elastomer is incompressible,
//! so every segment conserves `(s + L0)(r_o^2 - r_i^2)`: when the free side of a
//! segment elongates by `s`, the wall thins and the inner radius grows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outer radius of the reference tube [m].
pub const REFERENCE_OUTER_RADIUS: f64 = 0.008;
/// Unpressurized inner radius of the reference tube [m].
pub const REFERENCE_INNER_RADIUS: f64 = 0.006;
/// Length of the reference tube [m].
pub const REFERENCE_LENGTH: f64 = 0.155;

/// Fixed physical description of the tube and its discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorGeometry {
    outer_radius: f64,
    initial_inner_radius: f64,
    total_length: f64,
    segment_count: usize,
}

impl ActuatorGeometry {
    pub fn new(
        outer_radius: f64,
        initial_inner_radius: f64,
        total_length: f64,
        segment_count: usize,
    ) -> Result<Self> {
        let all_finite = [outer_radius, initial_inner_radius, total_length]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::config("geometry", "non-finite dimension"));
        }
        if !(initial_inner_radius > 0.0) {
            return Err(Error::config(
                "initial_inner_radius_m",
                format!("must be positive, got {initial_inner_radius}"),
            ));
        }
        if !(initial_inner_radius < outer_radius) {
            return Err(Error::config(
                "initial_inner_radius_m",
                format!("must be below outer radius {outer_radius}, got {initial_inner_radius}"),
            ));
        }
        if !(total_length > 0.0) {
            return Err(Error::config(
                "total_length_m",
                format!("must be positive, got {total_length}"),
            ));
        }
        if segment_count == 0 {
            return Err(Error::config("segment_count", "must be at least 1"));
        }
        Ok(Self {
            outer_radius,
            initial_inner_radius,
            total_length,
            segment_count,
        })
    }

    /// The 8 mm / 6 mm / 155 mm tube used throughout the experiments.
    pub fn reference(segment_count: usize) -> Result<Self> {
        Self::new(
            REFERENCE_OUTER_RADIUS,
            REFERENCE_INNER_RADIUS,
            REFERENCE_LENGTH,
            segment_count,
        )
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    pub fn initial_inner_radius(&self) -> f64 {
        self.initial_inner_radius
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    /// Length of one rigid body of the chain, `L / n`.
    pub fn segment_length(&self) -> f64 {
        self.total_length / self.segment_count as f64
    }

    /// Unstretched length `L0` of a segment; equal to [`segment_length`](Self::segment_length).
    pub fn initial_segment_length(&self) -> f64 {
        self.segment_length()
    }

    /// Same tube, different discretization.
    pub fn with_segment_count(&self, segment_count: usize) -> Result<Self> {
        Self::new(
            self.outer_radius,
            self.initial_inner_radius,
            self.total_length,
            segment_count,
        )
    }

    /// Elastomer wall volume of the whole tube [m^3].
    pub fn material_volume(&self) -> f64 {
        std::f64::consts::PI
            * (self.outer_radius.powi(2) - self.initial_inner_radius.powi(2))
            * self.total_length
    }
}

/// Instantaneous geometry of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGeometryState {
    pub inner_radius: f64,
    pub elongation: f64,
    pub joint_angle: f64,
}

/// Rate of change of the inner radius for a given elongation rate.
///
/// `dr_i/dt = (r_o^2 - r_i^2) / (2 (s + L0) r_i) * ds/dt`
pub fn inner_radius_rate(
    inner_radius: f64,
    outer_radius: f64,
    elongation: f64,
    initial_length: f64,
    elongation_rate: f64,
) -> Result<f64> {
    if !(inner_radius > 0.0) || !(inner_radius < outer_radius) {
        return Err(Error::domain(
            "inner_radius_rate",
            format!("inner radius {inner_radius} outside (0, {outer_radius})"),
        ));
    }
    let stretched = elongation + initial_length;
    if !(stretched > 0.0) {
        return Err(Error::domain(
            "inner_radius_rate",
            format!("segment length s + L0 = {stretched} is not positive"),
        ));
    }
    Ok(radius_sensitivity(inner_radius, outer_radius, stretched) * elongation_rate)
}

/// `dr_i/ds` at a given inner radius and stretched length `s + L0`.
#[inline]
pub(crate) fn radius_sensitivity(inner_radius: f64, outer_radius: f64, stretched: f64) -> f64 {
    (outer_radius * outer_radius - inner_radius * inner_radius) / (2.0 * stretched * inner_radius)
}

/// Rate of change of the fluid volume enclosed by one segment.
///
/// This is the time derivative of `pi r_o r_i^2 theta_j`.
pub fn segment_volume_rate(
    outer_radius: f64,
    inner_radius: f64,
    joint_angle: f64,
    angle_rate: f64,
    radius_rate: f64,
) -> Result<f64> {
    if !(inner_radius > 0.0) {
        return Err(Error::domain(
            "segment_volume_rate",
            format!("inner radius {inner_radius} is not positive"),
        ));
    }
    Ok(std::f64::consts::PI
        * outer_radius
        * inner_radius
        * (inner_radius * angle_rate + 2.0 * joint_angle * radius_rate))
}

/// Elongation of the free side of a segment bent by `joint_angle`, treating
/// the bent segment as a circular arc of radius `r_o`.
pub fn segment_elongation(joint_angle: f64, outer_radius: f64) -> Result<f64> {
    if !(joint_angle >= 0.0) {
        return Err(Error::domain(
            "segment_elongation",
            format!("actuator bends in one direction only, got angle {joint_angle}"),
        ));
    }
    Ok(outer_radius * joint_angle)
}

/// Inner radius reached once the tube is bent by `bend_angle` (positive root of
/// the volume balance).
pub fn steady_inner_radius(
    bend_angle: f64,
    outer_radius: f64,
    initial_length: f64,
    initial_inner_radius: f64,
) -> Result<f64> {
    if !(bend_angle >= 0.0) {
        return Err(Error::domain(
            "steady_inner_radius",
            format!("bend angle must be non-negative, got {bend_angle}"),
        ));
    }
    if !(outer_radius * bend_angle + initial_length > 0.0) {
        return Err(Error::domain(
            "steady_inner_radius",
            "stretched length is not positive",
        ));
    }
    Ok(radius_for_bend(
        bend_angle,
        outer_radius,
        initial_length,
        initial_inner_radius,
    ))
}

/// Closed form of the conserved-volume relation for any bend, including small
/// negative (compressive) ones. Callers check the domain.
#[inline]
pub(crate) fn radius_for_bend(
    bend_angle: f64,
    outer_radius: f64,
    initial_length: f64,
    initial_inner_radius: f64,
) -> f64 {
    let stretched = outer_radius * bend_angle + initial_length;
    let squared = (outer_radius.powi(3) * bend_angle
        + initial_length * initial_inner_radius * initial_inner_radius)
        / stretched;
    squared.sqrt()
}

/// The conserved quantity `(s + L0)(r_o^2 - r_i^2)` (wall volume over pi).
pub fn wall_volume_invariant(
    inner_radius: f64,
    outer_radius: f64,
    elongation: f64,
    initial_length: f64,
) -> f64 {
    (elongation + initial_length) * (outer_radius * outer_radius - inner_radius * inner_radius)
}
