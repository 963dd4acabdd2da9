//! Hydraulic, spring and damper laws.
//!
//! All coefficients are stored per radian in SI units. Tables that quote
//! per-degree values go through [`per_degree_to_per_radian`] at load time.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity [m/s^2].
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Converts a coefficient quoted per degree (N·m/deg, N·m·s/deg, N/deg) to per radian.
pub fn per_degree_to_per_radian(value: f64) -> f64 {
    value * 180.0 / PI
}

pub fn per_radian_to_per_degree(value: f64) -> f64 {
    value * PI / 180.0
}

/// The seven identifiable coefficients plus mass and gravity.
///
/// Spring and damper laws are linear in the inner radius:
/// `k = k_0 + m_k r_i`, `b = b_0 + m_b r_i` with a separate damper branch for
/// each bending direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Spring offset [N·m/rad].
    pub k_0: f64,
    /// Spring slope over inner radius [N/rad].
    pub m_k: f64,
    /// Damper offset for non-negative joint velocity [N·m·s/rad].
    pub b_0_pos: f64,
    /// Damper offset for negative joint velocity [N·m·s/rad].
    pub b_0_neg: f64,
    /// Damper slope for non-negative joint velocity [N·s/rad].
    pub m_b_pos: f64,
    /// Damper slope for negative joint velocity [N·s/rad].
    pub m_b_neg: f64,
    /// Lever arm of the axial hydraulic force [m].
    pub r_hyd: f64,
    /// Mass of the whole tube [kg].
    pub total_mass: f64,
    /// Gravitational acceleration [m/s^2]; zero disables gravity.
    pub gravity: f64,
}

/// Physical bounds on an identified hydraulic torque arm [m].
pub const R_HYD_RANGE: (f64, f64) = (0.003, 0.005);

impl MaterialParams {
    /// Checks the sign constraints every parameter set must satisfy.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("k_0", self.k_0),
            ("m_k", self.m_k),
            ("b_0_pos", self.b_0_pos),
            ("b_0_neg", self.b_0_neg),
            ("m_b_pos", self.m_b_pos),
            ("m_b_neg", self.m_b_neg),
            ("r_hyd", self.r_hyd),
            ("total_mass", self.total_mass),
            ("gravity", self.gravity),
        ];
        for (key, value) in named {
            if !value.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        for (key, value) in [
            ("k_0", self.k_0),
            ("b_0_pos", self.b_0_pos),
            ("b_0_neg", self.b_0_neg),
            ("r_hyd", self.r_hyd),
            ("total_mass", self.total_mass),
        ] {
            if value <= 0.0 {
                return Err(Error::config(key, format!("must be positive, got {value}")));
            }
        }
        if self.m_k > 0.0 {
            return Err(Error::config(
                "m_k",
                format!("spring slope must not be positive, got {}", self.m_k),
            ));
        }
        if self.gravity < 0.0 {
            return Err(Error::config("gravity", "must be non-negative"));
        }
        Ok(())
    }

    pub fn segment_mass(&self, segment_count: usize) -> f64 {
        self.total_mass / segment_count as f64
    }

    /// Maps per-joint coefficients tuned for `from` segments onto `to` segments
    /// describing the same tube.
    ///
    /// Springs and dampers of a uniformly bent chain act in series, so the
    /// per-joint stiffness and damping scale with the segment count.
    pub fn rescaled_for_segments(&self, from: usize, to: usize) -> Self {
        let f = to as f64 / from as f64;
        Self {
            k_0: self.k_0 * f,
            m_k: self.m_k * f,
            b_0_pos: self.b_0_pos * f,
            b_0_neg: self.b_0_neg * f,
            m_b_pos: self.m_b_pos * f,
            m_b_neg: self.m_b_neg * f,
            ..*self
        }
    }

    pub fn without_gravity(&self) -> Self {
        Self {
            gravity: 0.0,
            ..*self
        }
    }
}

/// A stiffness or damping value after zero clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub value: f64,
    /// Set when the linear law went negative and was clamped to zero.
    pub clamped: bool,
}

impl Coefficient {
    fn clamp_linear(raw: f64) -> Self {
        if raw < 0.0 {
            Self {
                value: 0.0,
                clamped: true,
            }
        } else {
            Self {
                value: raw,
                clamped: false,
            }
        }
    }
}

/// Axial force of the fluid on the segment cap, `pi r_i^2 p`.
pub fn hydraulic_force(pressure: f64, inner_radius: f64) -> Result<f64> {
    if !(pressure >= 0.0) {
        return Err(Error::domain(
            "hydraulic_force",
            format!("pressure must be non-negative, got {pressure}"),
        ));
    }
    if !(inner_radius > 0.0) {
        return Err(Error::domain(
            "hydraulic_force",
            format!("inner radius must be positive, got {inner_radius}"),
        ));
    }
    Ok(PI * inner_radius * inner_radius * pressure)
}

/// Joint torque of the hydraulic force acting on lever arm `r_hyd`.
pub fn hydraulic_torque(pressure: f64, inner_radius: f64, r_hyd: f64) -> Result<f64> {
    if !(r_hyd > 0.0) {
        return Err(Error::domain(
            "hydraulic_torque",
            format!("torque arm must be positive, got {r_hyd}"),
        ));
    }
    Ok(hydraulic_force(pressure, inner_radius)? * r_hyd)
}

/// Hydraulic torque of a coarse segment, with the force applied at the
/// segment corner: `p A R cos(alpha)`, `tan(alpha) = dL / r_o`,
/// `R = sqrt(r_o^2 + dL^2)`.
///
/// `R cos(alpha)` is identically `r_o`, so this equals
/// `hydraulic_torque(p, r_i, r_o)` for every segment length.
pub fn hydraulic_torque_alpha(
    pressure: f64,
    inner_radius: f64,
    outer_radius: f64,
    segment_length: f64,
) -> Result<f64> {
    if !(outer_radius > 0.0) || !(segment_length >= 0.0) {
        return Err(Error::domain(
            "hydraulic_torque_alpha",
            "outer radius must be positive and segment length non-negative",
        ));
    }
    let corner = outer_radius.hypot(segment_length);
    // adjacent over hypotenuse; cos(atan(..)) would lose a few ulp
    let cos_alpha = outer_radius / corner;
    Ok(hydraulic_force(pressure, inner_radius)? * (corner * cos_alpha))
}

/// Joint stiffness at the given inner radius, clamped at zero.
pub fn spring_coefficient(inner_radius: f64, params: &MaterialParams) -> Coefficient {
    Coefficient::clamp_linear(inner_radius * params.m_k + params.k_0)
}

/// Joint damping at the given inner radius; the branch is picked by the sign
/// of the joint velocity, zero velocity counting as positive.
pub fn damper_coefficient(
    inner_radius: f64,
    angle_rate: f64,
    params: &MaterialParams,
) -> Coefficient {
    let raw = if angle_rate >= 0.0 {
        inner_radius * params.m_b_pos + params.b_0_pos
    } else {
        inner_radius * params.m_b_neg + params.b_0_neg
    };
    Coefficient::clamp_linear(raw)
}

/// Non-conservative generalized force on one joint: hydraulic torque minus
/// damping. The spring acts through the potential energy instead.
pub fn joint_generalized_torque(
    pressure: f64,
    inner_radius: f64,
    angle_rate: f64,
    params: &MaterialParams,
) -> Result<f64> {
    let drive = hydraulic_torque(pressure, inner_radius, params.r_hyd)?;
    let damping = damper_coefficient(inner_radius, angle_rate, params).value;
    Ok(drive - damping * angle_rate)
}

/// Exogenous pressure signal, linearly interpolated between samples and held
/// constant outside them.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureTrace {
    times: Vec<f64>,
    pressures: Vec<f64>,
}

impl PressureTrace {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::DegenerateData("pressure trace is empty".into()));
        }
        for (i, &(t, p)) in samples.iter().enumerate() {
            if !t.is_finite() || !p.is_finite() {
                return Err(Error::DegenerateData(format!(
                    "pressure sample {i} is not finite"
                )));
            }
            if p < 0.0 {
                return Err(Error::DegenerateData(format!(
                    "pressure sample {i} is negative ({p} Pa)"
                )));
            }
            if i > 0 && !(t > samples[i - 1].0) {
                return Err(Error::DegenerateData(format!(
                    "pressure sample {i}: time {t} does not increase"
                )));
            }
        }
        let (times, pressures) = samples.into_iter().unzip();
        Ok(Self { times, pressures })
    }

    /// Constant pressure from `t = 0` on.
    pub fn constant(pressure: f64) -> Result<Self> {
        Self::new(vec![(0.0, pressure)])
    }

    /// Linear rise from zero to `peak` over `[start, start + rise]`, then hold.
    pub fn ramp(peak: f64, start: f64, rise: f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(3);
        if start > 0.0 {
            samples.push((0.0, 0.0));
        }
        samples.push((start, 0.0));
        samples.push((start + rise, peak));
        Self::new(samples)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.pressures.iter().copied())
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn pressure_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.pressures[0];
        }
        if t >= self.times[n - 1] {
            return self.pressures[n - 1];
        }
        // first index with time > t
        let hi = self.times.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let (p0, p1) = (self.pressures[lo], self.pressures[hi]);
        let w = (t - t0) / (t1 - t0);
        p0 + w * (p1 - p0)
    }

    pub fn peak(&self) -> f64 {
        self.pressures.iter().copied().fold(0.0, f64::max)
    }
}
