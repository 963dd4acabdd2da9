//! Lagrangian dynamics of the n-segment revolute-spring-damper chain.
//!
//! Each segment is a rigid thick-walled tube joined to its parent by a
//! revolute joint carrying a torsional spring, a direction-dependent damper
//! and the hydraulic torque. The equations of motion are
//!
//! ```text
//! M(q) q'' = H(q, q') + tau(p, q')
//! ```
//!
//! with per-segment inner radii `r_i` integrated alongside. The inner radius
//! of each segment is a function of its joint angle (volume conservation),
//! so the stiffness and the segment inertia both vary along the motion.

mod integrator;
mod simulate;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forces::{damper_coefficient, spring_coefficient, MaterialParams};
use crate::geometry::{radius_for_bend, radius_sensitivity, ActuatorGeometry};
use crate::kinematics::{tip_position, PlanarPoint};

pub use integrator::{IntegratorKind, IntegratorStats};
pub use simulate::{simulate, simulate_at, SimulationConfig, Trajectory, TrajectorySample};

/// Inner radii closer than this to 0 or to `r_o` abort the integration.
pub const RADIUS_MARGIN: f64 = 1e-9;

/// Default bound on the mass matrix condition estimate.
pub const DEFAULT_MAX_CONDITION: f64 = 1e14;

/// Generalized coordinates, velocities and inner radii at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub time: f64,
    /// Joint angles [rad].
    pub q: Vec<f64>,
    /// Joint angular velocities [rad/s].
    pub q_dot: Vec<f64>,
    /// Inner radius of each segment [m].
    pub r_inner: Vec<f64>,
}

impl ChainState {
    /// Straight, unpressurized tube at rest.
    pub fn at_rest(geometry: &ActuatorGeometry) -> Self {
        let n = geometry.segment_count();
        Self {
            time: 0.0,
            q: vec![0.0; n],
            q_dot: vec![0.0; n],
            r_inner: vec![geometry.initial_inner_radius(); n],
        }
    }

    /// State at joint angles `q` and velocities `q_dot`, with every inner
    /// radius placed on the volume-conservation curve.
    pub fn on_constraint(geometry: &ActuatorGeometry, q: Vec<f64>, q_dot: Vec<f64>) -> Self {
        let r_inner = q
            .iter()
            .map(|&theta| {
                radius_for_bend(
                    theta,
                    geometry.outer_radius(),
                    geometry.segment_length(),
                    geometry.initial_inner_radius(),
                )
            })
            .collect();
        Self {
            time: 0.0,
            q,
            q_dot,
            r_inner,
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(&self.q_dot)
            .chain(&self.r_inner)
            .all(|v| v.is_finite())
    }
}

/// Mass properties of one rigid segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentBodyProps {
    pub mass: f64,
    /// Moment of inertia about the bending axis through the center of mass.
    pub inertia: f64,
    /// Distance from the parent joint to the center of mass.
    pub com_offset: f64,
}

/// Moment of inertia of a thick-walled tube segment about a transverse axis
/// through its center of mass.
pub fn segment_inertia(mass: f64, outer_radius: f64, inner_radius: f64, length: f64) -> f64 {
    mass * (3.0 * (outer_radius * outer_radius + inner_radius * inner_radius) + length * length)
        / 12.0
}

/// Geometry plus material: everything needed to evaluate the equations of motion.
#[derive(Debug, Clone)]
pub struct ChainModel {
    geometry: ActuatorGeometry,
    params: MaterialParams,
    /// `w[a][b] = sum_i m c_ia c_ib`, row-major.
    coupling: Vec<f64>,
    /// `sum_i m c_ia`: gravity moment weights per link.
    gravity_weights: Vec<f64>,
    max_condition: f64,
}

impl ChainModel {
    pub fn new(geometry: ActuatorGeometry, params: MaterialParams) -> Result<Self> {
        params.validate()?;
        let n = geometry.segment_count();
        let m = params.segment_mass(n);
        let dl = geometry.segment_length();
        let lc = 0.5 * dl;
        let mut coupling = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let hi = a.max(b);
                let tail = (n - 1 - hi) as f64;
                coupling[a * n + b] = if a == b {
                    m * (lc * lc + dl * dl * tail)
                } else {
                    m * (dl * lc + dl * dl * tail)
                };
            }
        }
        let gravity_weights = (0..n)
            .map(|a| m * (dl * (n - 1 - a) as f64 + lc))
            .collect();
        Ok(Self {
            geometry,
            params,
            coupling,
            gravity_weights,
            max_condition: DEFAULT_MAX_CONDITION,
        })
    }

    pub fn with_max_condition(mut self, max_condition: f64) -> Self {
        self.max_condition = max_condition;
        self
    }

    pub fn geometry(&self) -> &ActuatorGeometry {
        &self.geometry
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn dof(&self) -> usize {
        self.geometry.segment_count()
    }

    /// Mass properties of segment `j` at inner radius `r_inner`.
    pub fn body_props(&self, r_inner: f64) -> SegmentBodyProps {
        let n = self.dof();
        let mass = self.params.segment_mass(n);
        let dl = self.geometry.segment_length();
        SegmentBodyProps {
            mass,
            inertia: segment_inertia(mass, self.geometry.outer_radius(), r_inner, dl),
            com_offset: 0.5 * dl,
        }
    }

    fn check_state(&self, state: &ChainState) -> Result<()> {
        let n = self.dof();
        if state.q.len() != n || state.q_dot.len() != n || state.r_inner.len() != n {
            return Err(Error::domain(
                "chain state",
                format!("expected {n} joints, got q:{} q_dot:{} r:{}", state.q.len(), state.q_dot.len(), state.r_inner.len()),
            ));
        }
        Ok(())
    }

    /// Kinetic energy, summed link by link from center-of-mass and angular velocities.
    pub fn kinetic_energy(&self, state: &ChainState) -> Result<f64> {
        self.check_state(state)?;
        let dl = self.geometry.segment_length();
        let mut energy = 0.0;
        let (mut phi, mut omega) = (0.0, 0.0);
        // velocity of the parent joint of the current link
        let (mut jx, mut jy) = (0.0, 0.0);
        for j in 0..self.dof() {
            phi += state.q[j];
            omega += state.q_dot[j];
            let props = self.body_props(state.r_inner[j]);
            let (s, c) = phi.sin_cos();
            let vx = jx - props.com_offset * omega * c;
            let vy = jy + props.com_offset * omega * s;
            energy += 0.5 * (props.mass * (vx * vx + vy * vy) + props.inertia * omega * omega);
            jx -= dl * omega * c;
            jy += dl * omega * s;
        }
        Ok(energy)
    }

    /// Gravitational plus spring potential energy.
    ///
    /// Gravity acts along -Y on world-frame center-of-mass heights. The spring
    /// energy of joint `j` is the work of the radius-dependent spring torque,
    /// `int_0^theta k(r_i(phi)) phi dphi`, which is `k theta^2 / 2` for a
    /// constant stiffness.
    pub fn potential_energy(&self, state: &ChainState) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.gravity_energy(&state.q) + state.q.iter().map(|&t| self.spring_energy(t)).sum::<f64>())
    }

    pub(crate) fn gravity_energy(&self, q: &[f64]) -> f64 {
        if self.params.gravity == 0.0 {
            return 0.0;
        }
        let dl = self.geometry.segment_length();
        let lc = 0.5 * dl;
        let m = self.params.segment_mass(self.dof());
        let mut phi = 0.0;
        let mut joint_y = 0.0;
        let mut energy = 0.0;
        for &theta in q {
            phi += theta;
            let c = phi.cos();
            energy += m * self.params.gravity * (joint_y - lc * c);
            joint_y -= dl * c;
        }
        energy
    }

    /// Stored spring energy of one joint bent by `theta`.
    pub fn spring_energy(&self, theta: f64) -> f64 {
        let ro = self.geometry.outer_radius();
        let dl = self.geometry.segment_length();
        let ri0 = self.geometry.initial_inner_radius();
        let integrand = |phi: f64| {
            let r = radius_for_bend(phi, ro, dl, ri0);
            spring_coefficient(r, &self.params).value * phi
        };
        gauss_legendre(integrand, 0.0, theta)
    }

    /// Mass matrix `M(q)` such that `T = q'^T M q' / 2`.
    pub fn mass_matrix(&self, state: &ChainState) -> Result<DMatrix<f64>> {
        self.check_state(state)?;
        let n = self.dof();
        let mut ws = Workspace::new(n);
        self.assemble(state, &mut ws);
        Ok(DMatrix::from_row_slice(n, n, &ws.mass))
    }

    /// Gradient of the potential energy with respect to the joint angles.
    pub fn potential_gradient(&self, state: &ChainState) -> Result<DVector<f64>> {
        self.check_state(state)?;
        let n = self.dof();
        let mut ws = Workspace::new(n);
        self.assemble(state, &mut ws);
        Ok(DVector::from_column_slice(&ws.potential_grad))
    }

    /// `H(q, q')`: Coriolis, centrifugal and radius-rate inertia terms plus the
    /// negative potential gradient, so that `M q'' = H + tau`.
    ///
    /// Pressure does not enter `H`; it is accepted to mirror
    /// [`state_derivative`](Self::state_derivative).
    pub fn bias_vector(&self, state: &ChainState, _pressure: f64) -> Result<DVector<f64>> {
        self.check_state(state)?;
        let n = self.dof();
        let mut ws = Workspace::new(n);
        self.assemble(state, &mut ws);
        Ok(DVector::from_column_slice(&ws.bias))
    }

    /// Hydraulic torque minus damping for every joint.
    pub fn generalized_forces(&self, state: &ChainState, pressure: f64) -> Result<DVector<f64>> {
        self.check_state(state)?;
        if !(pressure >= 0.0) {
            return Err(Error::domain("generalized_forces", "negative pressure"));
        }
        let tau = (0..self.dof())
            .map(|j| self.joint_torque(pressure, state.r_inner[j], state.q_dot[j]))
            .collect::<Vec<_>>();
        Ok(DVector::from_vec(tau))
    }

    #[inline]
    fn joint_torque(&self, pressure: f64, r: f64, omega: f64) -> f64 {
        let drive = std::f64::consts::PI * r * r * pressure * self.params.r_hyd;
        drive - damper_coefficient(r, omega, &self.params).value * omega
    }

    /// Time derivative of the state at the given pressure.
    pub fn state_derivative(&self, state: &ChainState, pressure: f64) -> Result<StateDerivative> {
        self.check_state(state)?;
        let n = self.dof();
        let mut y = vec![0.0; 3 * n + 1];
        pack_state(state, &mut y);
        let mut dy = vec![0.0; 3 * n + 1];
        let mut ws = Workspace::new(n);
        self.derivative_into(state.time, &y, pressure, &mut dy, &mut ws)?;
        Ok(StateDerivative {
            q_dot: dy[..n].to_vec(),
            q_ddot: dy[n..2 * n].to_vec(),
            r_dot: dy[2 * n..3 * n].to_vec(),
            power: dy[3 * n],
        })
    }

    /// Fills `ws` with the mass matrix, the potential gradient and `H`.
    fn assemble(&self, state: &ChainState, ws: &mut Workspace) {
        self.assemble_raw(&state.q, &state.q_dot, &state.r_inner, ws);
    }

    fn assemble_raw(&self, q: &[f64], q_dot: &[f64], r_inner: &[f64], ws: &mut Workspace) {
        let n = self.dof();
        let ro = self.geometry.outer_radius();
        let dl = self.geometry.segment_length();
        let m = self.params.segment_mass(n);
        let g = self.params.gravity;

        let (mut phi, mut omega) = (0.0, 0.0);
        for j in 0..n {
            phi += q[j];
            omega += q_dot[j];
            let (s, c) = phi.sin_cos();
            ws.sin[j] = s;
            ws.cos[j] = c;
            ws.omega[j] = omega;
            let r = r_inner[j];
            ws.inertia[j] = segment_inertia(m, ro, r, dl);
            // dI/dtheta through dr/dtheta = r_o dr/ds
            let drdtheta = ro * radius_sensitivity(r, ro, ro * q[j] + dl);
            ws.inertia_slope[j] = 0.5 * m * r * drdtheta;
        }

        // D_ab = w_ab cos(phi_a - phi_b) + delta_ab I_a; M = S^T D S via suffix sums
        for a in (0..n).rev() {
            for b in (0..n).rev() {
                let w = self.coupling[a * n + b];
                let mut d = w * (ws.cos[a] * ws.cos[b] + ws.sin[a] * ws.sin[b]);
                if a == b {
                    d += ws.inertia[a];
                }
                let below = if a + 1 < n { ws.mass[(a + 1) * n + b] } else { 0.0 };
                let right = if b + 1 < n { ws.mass[a * n + b + 1] } else { 0.0 };
                let diag = if a + 1 < n && b + 1 < n {
                    ws.mass[(a + 1) * n + b + 1]
                } else {
                    0.0
                };
                ws.mass[a * n + b] = d + below + right - diag;
            }
        }

        // velocity-product terms in link coordinates
        for a in 0..n {
            let (mut sc, mut ss) = (0.0, 0.0);
            for b in 0..n {
                let w = self.coupling[a * n + b] * ws.omega[b] * ws.omega[b];
                sc += w * ws.cos[b];
                ss += w * ws.sin[b];
            }
            ws.link_velocity_terms[a] =
                ws.sin[a] * sc - ws.cos[a] * ss + ws.inertia_slope[a] * q_dot[a] * ws.omega[a];
        }

        let mut velocity_suffix = 0.0;
        let mut gravity_suffix = 0.0;
        for j in (0..n).rev() {
            velocity_suffix += ws.link_velocity_terms[j];
            gravity_suffix += g * self.gravity_weights[j] * ws.sin[j];
            let spring = spring_coefficient(r_inner[j], &self.params).value * q[j];
            ws.potential_grad[j] = gravity_suffix + spring;
            let velocity = velocity_suffix - 0.5 * ws.inertia_slope[j] * ws.omega[j] * ws.omega[j];
            ws.bias[j] = -velocity - ws.potential_grad[j];
        }
    }

    /// Right-hand side on the packed vector `[q, q', r_i, work]`.
    pub(crate) fn derivative_into(
        &self,
        t: f64,
        y: &[f64],
        pressure: f64,
        dy: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<()> {
        let n = self.dof();
        let ro = self.geometry.outer_radius();
        let dl = self.geometry.segment_length();
        let (q, rest) = y.split_at(n);
        let (q_dot, rest) = rest.split_at(n);
        let r_inner = &rest[..n];

        for (j, &r) in r_inner.iter().enumerate() {
            if !(r > RADIUS_MARGIN && r < ro - RADIUS_MARGIN) {
                return Err(Error::RadiusOutOfRange {
                    segment: j,
                    time: t,
                    radius: r,
                });
            }
            if !(ro * q[j] + dl > 0.0) {
                return Err(Error::domain(
                    "state_derivative",
                    format!("segment {j} compressed to non-positive length"),
                ));
            }
        }
        if !(pressure >= 0.0) {
            return Err(Error::domain("state_derivative", "negative pressure"));
        }

        self.assemble_raw(q, q_dot, r_inner, ws);

        let mut power = 0.0;
        for j in 0..n {
            let tau = self.joint_torque(pressure, r_inner[j], q_dot[j]);
            power += tau * q_dot[j];
            ws.rhs[j] = ws.bias[j] + tau;
        }

        let condition = cholesky_in_place(&mut ws.mass, n)
            .ok_or(Error::SingularMassMatrix { condition: f64::INFINITY })?;
        if condition > self.max_condition {
            return Err(Error::SingularMassMatrix { condition });
        }
        cholesky_solve(&ws.mass, n, &mut ws.rhs);

        dy[..n].copy_from_slice(q_dot);
        dy[n..2 * n].copy_from_slice(&ws.rhs[..n]);
        for j in 0..n {
            let stretched = ro * q[j] + dl;
            dy[2 * n + j] = radius_sensitivity(r_inner[j], ro, stretched) * ro * q_dot[j];
        }
        dy[3 * n] = power;
        if dy.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time: t });
        }
        Ok(())
    }

    /// `H + tau - M a` and the input power at the packed state `y`, for a
    /// fixed acceleration `a`. Differencing this instead of the full right-hand
    /// side avoids one factorization per Jacobian column.
    fn dynamic_residual(&self, y: &[f64], pressure: f64, a: &[f64], out: &mut [f64], ws: &mut Workspace) {
        let n = self.dof();
        let (q, rest) = y.split_at(n);
        let (q_dot, rest) = rest.split_at(n);
        let r_inner = &rest[..n];
        self.assemble_raw(q, q_dot, r_inner, ws);
        let mut power = 0.0;
        for i in 0..n {
            let tau = self.joint_torque(pressure, r_inner[i], q_dot[i]);
            power += tau * q_dot[i];
            let row = &ws.mass[i * n..(i + 1) * n];
            let inertial: f64 = row.iter().zip(a).map(|(m, a)| m * a).sum();
            out[i] = ws.bias[i] + tau - inertial;
        }
        out[n] = power;
    }

    /// Jacobian of the packed right-hand side. Kinematic and radius rows are
    /// analytic; acceleration and power rows use forward differences of
    /// [`dynamic_residual`](Self::dynamic_residual) followed by one solve with
    /// the mass matrix. Returns the cost in right-hand-side evaluations.
    pub(crate) fn jacobian_into(
        &self,
        y: &[f64],
        pressure: f64,
        f0: &[f64],
        floor: f64,
        jac: &mut DMatrix<f64>,
        ws: &mut Workspace,
    ) -> Result<usize> {
        let n = self.dof();
        let dim = 3 * n + 1;
        let ro = self.geometry.outer_radius();
        let dl = self.geometry.segment_length();
        jac.fill(0.0);

        for i in 0..n {
            jac[(i, n + i)] = 1.0;
            let (q, q_dot, r) = (y[i], y[n + i], y[2 * n + i]);
            let stretched = ro * q + dl;
            let sens = radius_sensitivity(r, ro, stretched);
            jac[(2 * n + i, i)] = -sens * ro * ro * q_dot / stretched;
            jac[(2 * n + i, n + i)] = sens * ro;
            jac[(2 * n + i, 2 * n + i)] =
                -(ro * ro + r * r) / (2.0 * stretched * r * r) * ro * q_dot;
        }

        let a = &f0[n..2 * n];
        let mut base = vec![0.0; n + 1];
        let mut probe_out = vec![0.0; n + 1];
        self.dynamic_residual(y, pressure, a, &mut base, ws);
        let mass = DMatrix::from_row_slice(n, n, &ws.mass);
        let mut columns = DMatrix::<f64>::zeros(n, 3 * n);
        let mut probe = y.to_vec();
        for c in 0..3 * n {
            let delta = f64::EPSILON.sqrt() * y[c].abs().max(floor);
            probe[c] = y[c] + delta;
            self.dynamic_residual(&probe, pressure, a, &mut probe_out, ws);
            probe[c] = y[c];
            for i in 0..n {
                columns[(i, c)] = (probe_out[i] - base[i]) / delta;
            }
            jac[(3 * n, c)] = (probe_out[n] - base[n]) / delta;
        }
        let chol = mass
            .cholesky()
            .ok_or(Error::SingularMassMatrix { condition: f64::INFINITY })?;
        chol.solve_mut(&mut columns);
        for i in 0..n {
            for c in 0..3 * n {
                jac[(n + i, c)] = columns[(i, c)];
            }
        }
        debug_assert_eq!(jac.ncols(), dim);
        Ok(3 * n)
    }

    pub fn tip(&self, state: &ChainState) -> PlanarPoint {
        tip_position(&state.q, self.geometry.segment_length())
    }
}

/// Time derivative of a [`ChainState`] plus the instantaneous input power.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub q_dot: Vec<f64>,
    pub q_ddot: Vec<f64>,
    pub r_dot: Vec<f64>,
    /// Power of the generalized forces, `sum_j (tau_hyd - b q') q'` [W].
    pub power: f64,
}

/// Scratch buffers reused across derivative evaluations.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    sin: Vec<f64>,
    cos: Vec<f64>,
    omega: Vec<f64>,
    inertia: Vec<f64>,
    inertia_slope: Vec<f64>,
    link_velocity_terms: Vec<f64>,
    mass: Vec<f64>,
    potential_grad: Vec<f64>,
    bias: Vec<f64>,
    rhs: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            sin: vec![0.0; n],
            cos: vec![0.0; n],
            omega: vec![0.0; n],
            inertia: vec![0.0; n],
            inertia_slope: vec![0.0; n],
            link_velocity_terms: vec![0.0; n],
            mass: vec![0.0; n * n],
            potential_grad: vec![0.0; n],
            bias: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }
}

pub(crate) fn pack_state(state: &ChainState, y: &mut [f64]) {
    let n = state.dof();
    y[..n].copy_from_slice(&state.q);
    y[n..2 * n].copy_from_slice(&state.q_dot);
    y[2 * n..3 * n].copy_from_slice(&state.r_inner);
}

pub(crate) fn unpack_state(time: f64, y: &[f64], n: usize) -> ChainState {
    ChainState {
        time,
        q: y[..n].to_vec(),
        q_dot: y[n..2 * n].to_vec(),
        r_inner: y[2 * n..3 * n].to_vec(),
    }
}

/// In-place lower Cholesky factor of a row-major SPD matrix. Returns the
/// squared ratio of the largest to smallest pivot as a condition estimate.
fn cholesky_in_place(a: &mut [f64], n: usize) -> Option<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        lo = lo.min(d);
        hi = hi.max(d);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Some((hi / lo).powi(2))
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// 16-point Gauss-Legendre nodes and weights on [-1, 1] (positive half).
const GL16: [(f64, f64); 8] = [
    (0.09501250983763745, 0.18945061045506859),
    (0.2816035507792589, 0.1826034150449236),
    (0.45801677765722737, 0.16915651939500262),
    (0.6178762444026438, 0.14959598881657676),
    (0.755404408355003, 0.12462897125553403),
    (0.8656312023878318, 0.09515851168249259),
    (0.9445750230732326, 0.062253523938647706),
    (0.9894009349916499, 0.027152459411754037),
];

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL16.iter()
        .map(|&(x, w)| w * (f(mid - half * x) + f(mid + half * x)))
        .sum::<f64>()
        * half
}

#[cfg(test)]
mod tests;
