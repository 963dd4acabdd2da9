use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::integrator::{integrate, IntegratorKind, IntegratorStats, OdeSystem, StepControl};
use super::{pack_state, unpack_state, ChainModel, ChainState, Workspace};
use crate::error::{Error, Result};
use crate::forces::PressureTrace;
use crate::kinematics::{total_bending, PlanarPoint};

/// Integration and output settings for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub integrator: IntegratorKind,
    pub rtol: f64,
    pub atol: f64,
    /// Output samples per second.
    pub output_rate_hz: f64,
    pub max_steps: usize,
    /// Upper bound on the internal step [s].
    pub max_step: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorKind::DormandPrince45,
            rtol: 1e-6,
            atol: 1e-8,
            output_rate_hz: 100.0,
            max_steps: 20_000_000,
            max_step: f64::INFINITY,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::config("rtol", format!("must lie in (0, 1), got {}", self.rtol)));
        }
        if !(self.atol > 0.0) {
            return Err(Error::config("atol", format!("must be positive, got {}", self.atol)));
        }
        if !(self.output_rate_hz > 0.0 && self.output_rate_hz.is_finite()) {
            return Err(Error::config(
                "output_rate_hz",
                format!("must be positive, got {}", self.output_rate_hz),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::config("max_step", "must be positive"));
        }
        Ok(())
    }

    fn step_control(&self) -> StepControl {
        StepControl {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            initial_step: None,
            max_step: self.max_step,
        }
    }
}

/// One output sample of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub state: ChainState,
    pub pressure: f64,
    pub tip: PlanarPoint,
    pub bend_total: f64,
    pub kinetic_energy: f64,
    pub potential_energy: f64,
    /// Work done by hydraulic and damping torques since the start [J].
    pub input_work: f64,
}

impl TrajectorySample {
    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn total_energy(&self) -> f64 {
        self.kinetic_energy + self.potential_energy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub segment_count: usize,
    pub samples: Vec<TrajectorySample>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time()).collect()
    }

    /// Tip position at time `t`, linearly interpolated between samples.
    pub fn tip_at(&self, t: f64) -> Option<PlanarPoint> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.time() || t > last.time() {
            return None;
        }
        let hi = self.samples.partition_point(|s| s.time() < t);
        if hi == 0 {
            return Some(first.tip);
        }
        let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
        if b.time() == t {
            return Some(b.tip);
        }
        let w = (t - a.time()) / (b.time() - a.time());
        Some(PlanarPoint::new(
            a.tip.x + w * (b.tip.x - a.tip.x),
            a.tip.y + w * (b.tip.y - a.tip.y),
        ))
    }
}

struct ChainSystem<'a> {
    model: &'a ChainModel,
    trace: &'a PressureTrace,
    workspace: Workspace,
}

impl OdeSystem for ChainSystem<'_> {
    fn dim(&self) -> usize {
        3 * self.model.dof() + 1
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let p = self.trace.pressure_at(t);
        self.model.derivative_into(t, y, p, dy, &mut self.workspace)
    }

    fn jacobian(
        &mut self,
        t: f64,
        y: &[f64],
        f0: &[f64],
        floor: f64,
        jac: &mut DMatrix<f64>,
    ) -> Option<Result<usize>> {
        let p = self.trace.pressure_at(t);
        Some(self.model.jacobian_into(y, p, f0, floor, jac, &mut self.workspace))
    }
}

/// Simulates from `initial` to `t_end`, sampling at `config.output_rate_hz`
/// (the initial state and `t_end` are always included).
///
/// The pressure is held at its last value past the end of the trace.
pub fn simulate(
    model: &ChainModel,
    initial: &ChainState,
    trace: &PressureTrace,
    t_end: f64,
    config: &SimulationConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if !(t_end > initial.time) {
        return Err(Error::domain(
            "simulate",
            format!("end time {t_end} must exceed start time {}", initial.time),
        ));
    }
    let dt = 1.0 / config.output_rate_hz;
    let count = ((t_end - initial.time) / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=count).map(|k| initial.time + k as f64 * dt).collect();
    if t_end - times[times.len() - 1] > 1e-9 * dt {
        times.push(t_end);
    }
    simulate_at(model, initial, trace, &times, config)
}

/// Simulates from `initial` and records the state at each of `times`
/// (strictly increasing, none earlier than `initial.time`).
pub fn simulate_at(
    model: &ChainModel,
    initial: &ChainState,
    trace: &PressureTrace,
    times: &[f64],
    config: &SimulationConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let n = model.dof();
    if initial.dof() != n {
        return Err(Error::domain(
            "simulate",
            format!("initial state has {} joints, model has {n}", initial.dof()),
        ));
    }
    if !initial.is_finite() {
        return Err(Error::NonFinite { time: initial.time });
    }
    if trace.start_time() > initial.time {
        return Err(Error::domain(
            "simulate",
            "pressure trace starts after the initial state",
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("simulate", "output times must increase"));
    }
    if times.first().is_some_and(|&t| t < initial.time) {
        return Err(Error::domain("simulate", "output time before the initial state"));
    }

    let mut y0 = vec![0.0; 3 * n + 1];
    pack_state(initial, &mut y0);
    let mut system = ChainSystem {
        model,
        trace,
        workspace: Workspace::new(n),
    };
    let segment_length = model.geometry().segment_length();
    let mut samples = Vec::with_capacity(times.len());
    let mut record = |t: f64, y: &[f64]| -> Result<()> {
        let state = unpack_state(t, y, n);
        if !state.is_finite() {
            return Err(Error::NonFinite { time: t });
        }
        let kinetic_energy = model.kinetic_energy(&state)?;
        let potential_energy = model.potential_energy(&state)?;
        samples.push(TrajectorySample {
            pressure: trace.pressure_at(t),
            tip: crate::kinematics::tip_position(&state.q, segment_length),
            bend_total: total_bending(&state.q),
            kinetic_energy,
            potential_energy,
            input_work: y[3 * n],
            state,
        });
        Ok(())
    };

    let (leading, rest) = match times.first() {
        Some(&t) if t == initial.time => (true, &times[1..]),
        _ => (false, times),
    };
    if leading {
        record(initial.time, &y0)?;
    }
    let stats = integrate(
        &mut system,
        config.integrator,
        initial.time,
        &y0,
        rest,
        &config.step_control(),
        &mut record,
    )?;
    Ok(Trajectory {
        segment_count: n,
        samples,
        stats,
    })
}
