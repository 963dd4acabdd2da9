//! Reference computations that share no code with the model they check.
//!
//! Everything here is built from energies, closed-form geometry or plain
//! bisection, so an error in the analytic assembly of the equations of
//! motion cannot hide behind the same error in its oracle.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rsda::dynamics::{ChainModel, ChainState};
use rsda::kinematics::PlanarPoint;
use rsda::{ActuatorGeometry, MaterialParams, Result};

/// Kinetic energy on the incompressibility constraint.
fn kinetic(model: &ChainModel, q: &[f64], q_dot: &[f64]) -> Result<f64> {
    model.kinetic_energy(&ChainState::on_constraint(model.geometry(), q.to_vec(), q_dot.to_vec()))
}

fn potential(model: &ChainModel, q: &[f64]) -> Result<f64> {
    let n = q.len();
    model.potential_energy(&ChainState::on_constraint(model.geometry(), q.to_vec(), vec![0.0; n]))
}

/// Mass matrix by polarization of the kinetic energy, which is a quadratic
/// form in the velocities: `M_ii = 2 T(e_i)`, `M_ij = T(e_i + e_j) - T(e_i) - T(e_j)`.
pub fn mass_matrix_from_energy(model: &ChainModel, q: &[f64]) -> Result<DMatrix<f64>> {
    let n = q.len();
    let unit = |i: usize| -> Vec<f64> { (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect() };
    let diag: Vec<f64> = (0..n).map(|i| kinetic(model, q, &unit(i))).collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 2.0 * diag[i];
        for j in 0..i {
            let mut v = unit(i);
            v[j] = 1.0;
            let mij = kinetic(model, q, &v)? - diag[i] - diag[j];
            m[(i, j)] = mij;
            m[(j, i)] = mij;
        }
    }
    Ok(m)
}

/// Central-difference gradient of the potential energy.
pub fn potential_gradient_fd(model: &ChainModel, q: &[f64], h: f64) -> Result<DVector<f64>> {
    let n = q.len();
    let mut g = DVector::zeros(n);
    for k in 0..n {
        let mut plus = q.to_vec();
        let mut minus = q.to_vec();
        plus[k] += h;
        minus[k] -= h;
        g[k] = (potential(model, &plus)? - potential(model, &minus)?) / (2.0 * h);
    }
    Ok(g)
}

/// Velocity-dependent and conservative generalized forces from Lagrange's
/// equations, `H = dT/dq - (dM/dt) q_dot - dU/dq`, so that `M q_ddot = H + Q`.
///
/// `dM/dt q_dot` is the directional derivative of the energy-derived mass
/// matrix along `q_dot`; every derivative is a central difference with step `h`.
pub fn bias_from_energy(model: &ChainModel, q: &[f64], q_dot: &[f64], h: f64) -> Result<DVector<f64>> {
    let n = q.len();
    let qd = DVector::from_column_slice(q_dot);
    let shifted = |sign: f64| -> Vec<f64> { q.iter().zip(q_dot).map(|(a, v)| a + sign * h * v).collect() };
    let m_dot = (mass_matrix_from_energy(model, &shifted(1.0))? - mass_matrix_from_energy(model, &shifted(-1.0))?)
        / (2.0 * h);
    let mut dt_dq = DVector::zeros(n);
    for k in 0..n {
        let mut plus = q.to_vec();
        let mut minus = q.to_vec();
        plus[k] += h;
        minus[k] -= h;
        dt_dq[k] = (kinetic(model, &plus, q_dot)? - kinetic(model, &minus, q_dot)?) / (2.0 * h);
    }
    Ok(dt_dq - m_dot * qd - potential_gradient_fd(model, q, h)?)
}

/// Torque balance of the uniformly bent tube at total angle `theta`, with
/// the inner radius from wall-volume conservation over the whole length.
pub fn steady_residual(theta: f64, pressure: f64, geometry: &ActuatorGeometry, params: &MaterialParams) -> f64 {
    let ro = geometry.outer_radius();
    let length = geometry.total_length();
    let ri0 = geometry.initial_inner_radius();
    let r2 = (ro.powi(3) * theta + length * ri0 * ri0) / (ro * theta + length);
    let stiffness = (params.k_0 + params.m_k * r2.sqrt()) / geometry.segment_count() as f64;
    params.r_hyd * PI * r2 * pressure - stiffness * theta
}

/// Bisection for the steady bending angle: brackets the sign change of
/// [`steady_residual`] by doubling, then halves down to `tolerance`.
pub fn steady_angle_bisection(
    pressure: f64,
    geometry: &ActuatorGeometry,
    params: &MaterialParams,
    tolerance: f64,
) -> f64 {
    let f = |theta: f64| steady_residual(theta, pressure, geometry, params);
    if f(0.0) <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        assert!(hi < 1e6, "no sign change");
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Tip of a constant-curvature arc of length `length` bent by `theta`,
/// hanging along -Y and curling toward -X.
pub fn arc_tip(theta: f64, length: f64) -> PlanarPoint {
    if theta == 0.0 {
        return PlanarPoint::new(0.0, -length);
    }
    let radius = length / theta;
    PlanarPoint::new(-radius * (1.0 - theta.cos()), -radius * theta.sin())
}

/// Relative distance `|a - b| / |b|` in the max norm.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Prints one verdict line straight to the process stdout, so it shows up
/// even when the test harness captures output.
pub fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("\n{} [{id:>2}] {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}
