//! Fitting the seven material coefficients to a measured tip trajectory.
//!
//! The residual is the difference between simulated and measured tip
//! positions. It is minimized by a projected Levenberg–Marquardt iteration in
//! scaled coordinates with a forward-difference Jacobian (columns evaluated in
//! parallel); when the Jacobian loses rank the search continues with a bounded
//! Nelder–Mead simplex.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_at, ChainModel, ChainState, SimulationConfig};
use crate::error::{Error, Result};
use crate::forces::{MaterialParams, PressureTrace, R_HYD_RANGE};
use crate::geometry::{steady_inner_radius, ActuatorGeometry};

/// Residual entry [m] reported for every sample when a candidate cannot be
/// simulated.
pub const FAILURE_PENALTY: f64 = 10.0;

/// Names of the fitted coefficients, in vector order.
pub const PARAM_NAMES: [&str; 7] = ["k_0", "m_k", "b_0_pos", "b_0_neg", "m_b_pos", "m_b_neg", "r_hyd"];

/// Hydraulic arm assumed when seeding spring coefficients from steady data [m].
pub const SEED_R_HYD: f64 = 0.004;
/// Damper offset seed [N·m·s/rad].
pub const SEED_DAMPER_OFFSET: f64 = 1e-3;

pub fn params_to_vector(p: &MaterialParams) -> [f64; 7] {
    [p.k_0, p.m_k, p.b_0_pos, p.b_0_neg, p.m_b_pos, p.m_b_neg, p.r_hyd]
}

/// Replaces the seven fitted coefficients of `template`, keeping mass and gravity.
pub fn params_from_vector(v: &[f64; 7], template: &MaterialParams) -> MaterialParams {
    MaterialParams {
        k_0: v[0],
        m_k: v[1],
        b_0_pos: v[2],
        b_0_neg: v[3],
        m_b_pos: v[4],
        m_b_neg: v[5],
        r_hyd: v[6],
        ..*template
    }
}

/// Tip samples `(t, x, y)` from an experiment or a reference simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTrajectory {
    pub source: String,
    times: Vec<f64>,
    tip_x: Vec<f64>,
    tip_y: Vec<f64>,
}

impl MeasuredTrajectory {
    pub fn new(source: impl Into<String>, samples: Vec<(f64, f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::DegenerateData("measured trajectory is empty".into()));
        }
        let mut out = Self {
            source: source.into(),
            times: Vec::with_capacity(samples.len()),
            tip_x: Vec::with_capacity(samples.len()),
            tip_y: Vec::with_capacity(samples.len()),
        };
        for (i, (t, x, y)) in samples.into_iter().enumerate() {
            if !(t.is_finite() && x.is_finite() && y.is_finite()) {
                return Err(Error::DegenerateData(format!("measured sample {i} is not finite")));
            }
            if out.times.last().is_some_and(|&last| !(t > last)) {
                return Err(Error::DegenerateData(format!(
                    "measured sample {i}: time {t} does not increase"
                )));
            }
            out.times.push(t);
            out.tip_x.push(x);
            out.tip_y.push(y);
        }
        Ok(out)
    }

    /// Tip samples of a simulated trajectory.
    pub fn from_trajectory(source: impl Into<String>, traj: &crate::dynamics::Trajectory) -> Result<Self> {
        Self::new(
            source,
            traj.samples.iter().map(|s| (s.time(), s.tip.x, s.tip.y)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn tip_x(&self) -> &[f64] {
        &self.tip_x
    }

    pub fn tip_y(&self) -> &[f64] {
        &self.tip_y
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len()).map(|i| (self.times[i], self.tip_x[i], self.tip_y[i]))
    }

    /// Copy with the tip coordinates replaced.
    pub fn with_tips(&self, tip_x: Vec<f64>, tip_y: Vec<f64>) -> Result<Self> {
        if tip_x.len() != self.len() || tip_y.len() != self.len() {
            return Err(Error::DegenerateData("tip vectors do not match the time base".into()));
        }
        Self::new(
            self.source.clone(),
            (0..self.len()).map(|i| (self.times[i], tip_x[i], tip_y[i])).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Vertical tip coordinate only.
    #[default]
    TipY,
    /// Both tip coordinates, stacked.
    TipXy,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tip_y" => Ok(Self::TipY),
            "tip_xy" => Ok(Self::TipXy),
            other => Err(Error::config("objective", format!("expected tip_y or tip_xy, got {other:?}"))),
        }
    }
}

/// Box constraints on the seven coefficients, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: [f64; 7],
    pub upper: [f64; 7],
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            lower: [1e-6, -1e5, 1e-9, 1e-9, -1e3, -1e3, R_HYD_RANGE.0],
            upper: [1e3, 0.0, 10.0, 10.0, 1e3, 1e3, R_HYD_RANGE.1],
        }
    }
}

impl Bounds {
    /// Checks the box against the sign constraints of the model.
    pub fn validate(&self) -> Result<()> {
        for i in 0..7 {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(
                    format!("bounds.{}", PARAM_NAMES[i]),
                    format!("invalid interval [{lo}, {hi}]"),
                ));
            }
        }
        for i in [0, 2, 3] {
            if !(self.lower[i] > 0.0) {
                return Err(Error::config(format!("bounds.{}", PARAM_NAMES[i]), "lower bound must be positive"));
            }
        }
        if self.upper[1] > 0.0 {
            return Err(Error::config("bounds.m_k", "upper bound must not be positive"));
        }
        if self.lower[6] < R_HYD_RANGE.0 || self.upper[6] > R_HYD_RANGE.1 {
            return Err(Error::config(
                "bounds.r_hyd",
                format!("must lie within [{}, {}]", R_HYD_RANGE.0, R_HYD_RANGE.1),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, v: &[f64; 7]) -> bool {
        (0..7).all(|i| v[i] >= self.lower[i] && v[i] <= self.upper[i])
    }

    pub fn project(&self, v: &[f64; 7]) -> [f64; 7] {
        std::array::from_fn(|i| v[i].clamp(self.lower[i], self.upper[i]))
    }
}

/// Integration settings suited to finite-difference Jacobians: the simulated
/// trajectory must be smooth in the parameters well below the difference step.
pub fn fitting_simulation_config() -> SimulationConfig {
    SimulationConfig {
        rtol: 1e-10,
        atol: 1e-13,
        // a candidate this stiff is hopeless anyway; fail it into the penalty
        max_steps: 2_000_000,
        ..SimulationConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub measured: MeasuredTrajectory,
    pub trace: PressureTrace,
    pub geometry: ActuatorGeometry,
    pub bounds: Bounds,
    /// Starting point; also supplies mass and gravity.
    pub initial_guess: MaterialParams,
    pub objective: Objective,
    pub simulation: SimulationConfig,
}

impl FitProblem {
    pub fn new(
        measured: MeasuredTrajectory,
        trace: PressureTrace,
        geometry: ActuatorGeometry,
        initial_guess: MaterialParams,
        objective: Objective,
    ) -> Result<Self> {
        let problem = Self {
            measured,
            trace,
            geometry,
            bounds: Bounds::default(),
            initial_guess,
            objective,
            simulation: fitting_simulation_config(),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.simulation.validate()?;
        if self.measured.times()[0] < self.trace.start_time() {
            return Err(Error::Data {
                path: self.measured.source.clone().into(),
                reason: "measured samples start before the pressure trace".into(),
            });
        }
        Ok(())
    }

    fn residual_len(&self) -> usize {
        match self.objective {
            Objective::TipY => self.measured.len(),
            Objective::TipXy => 2 * self.measured.len(),
        }
    }
}

/// Simulated minus measured tip coordinates at the measured time stamps.
///
/// The chain starts at rest, straight, at the start of the pressure trace.
/// A candidate that cannot be simulated gets [`FAILURE_PENALTY`] in every entry.
pub fn residual(params: &MaterialParams, problem: &FitProblem) -> Result<Vec<f64>> {
    let v = params_to_vector(params);
    if !problem.bounds.contains(&v) {
        return Err(Error::domain("residual", "parameters outside the fit bounds"));
    }
    Ok(simulated_residual(params, problem)
        .unwrap_or_else(|_| vec![FAILURE_PENALTY; problem.residual_len()]))
}

fn simulated_residual(params: &MaterialParams, problem: &FitProblem) -> Result<Vec<f64>> {
    let model = ChainModel::new(problem.geometry, *params)?;
    let mut initial = ChainState::at_rest(&problem.geometry);
    initial.time = problem.trace.start_time();
    let traj = simulate_at(&model, &initial, &problem.trace, problem.measured.times(), &problem.simulation)?;
    let m = &problem.measured;
    let dy = traj.samples.iter().zip(m.tip_y()).map(|(s, y)| s.tip.y - y);
    Ok(match problem.objective {
        Objective::TipY => dy.collect(),
        Objective::TipXy => traj
            .samples
            .iter()
            .zip(m.tip_x())
            .map(|(s, x)| s.tip.x - x)
            .chain(dy)
            .collect(),
    })
}

pub fn rms(residual: &[f64]) -> f64 {
    if residual.is_empty() {
        return 0.0;
    }
    (residual.iter().map(|r| r * r).sum::<f64>() / residual.len() as f64).sqrt()
}

/// Spring coefficients and hydraulic arm seeded from steady bending data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadySeed {
    pub k_0: f64,
    pub m_k: f64,
    pub r_hyd: f64,
    pub b_0_pos: f64,
    pub b_0_neg: f64,
    pub m_b_pos: f64,
    pub m_b_neg: f64,
}

impl SteadySeed {
    /// Full parameter set with mass and gravity taken from `template`.
    pub fn to_params(&self, template: &MaterialParams) -> MaterialParams {
        params_from_vector(
            &[self.k_0, self.m_k, self.b_0_pos, self.b_0_neg, self.m_b_pos, self.m_b_neg, self.r_hyd],
            template,
        )
    }
}

/// Least-squares inversion of the steady bending law for `(k_0, m_k)`, using
/// [`SEED_R_HYD`] as the hydraulic arm.
pub fn initial_guess_from_steady(points: &[(f64, f64)], geometry: &ActuatorGeometry) -> Result<SteadySeed> {
    initial_guess_from_steady_with_arm(points, geometry, SEED_R_HYD)
}

/// As [`initial_guess_from_steady`] with an explicit hydraulic arm.
///
/// Each point `(p, theta_ss)` fixes the equilibrium radius and hence a joint
/// stiffness `k_j = n r_hyd pi r^2 p / theta_ss`; a line through
/// `(r, k_j)` gives offset and slope.
pub fn initial_guess_from_steady_with_arm(
    points: &[(f64, f64)],
    geometry: &ActuatorGeometry,
    r_hyd: f64,
) -> Result<SteadySeed> {
    let usable: Vec<(f64, f64)> = points.iter().copied().filter(|&(p, _)| p > 0.0).collect();
    if usable.iter().any(|&(p, th)| !(p.is_finite() && th.is_finite() && th > 0.0)) {
        return Err(Error::DegenerateData("steady points need finite pressure and positive bend".into()));
    }
    let mut pressures: Vec<f64> = usable.iter().map(|&(p, _)| p).collect();
    pressures.sort_by(f64::total_cmp);
    pressures.dedup();
    if pressures.len() < 2 {
        return Err(Error::DegenerateData(
            "at least two distinct positive pressures are needed".into(),
        ));
    }
    let n = geometry.segment_count() as f64;
    let mut rows = Vec::with_capacity(usable.len());
    for &(p, theta) in &usable {
        let r = steady_inner_radius(
            theta,
            geometry.outer_radius(),
            geometry.total_length(),
            geometry.initial_inner_radius(),
        )?;
        rows.push((r, n * r_hyd * PI * r * r * p / theta));
    }
    // centered normal equations for k = k_0 + m_k r
    let count = rows.len() as f64;
    let r_mean = rows.iter().map(|(r, _)| r).sum::<f64>() / count;
    let k_mean = rows.iter().map(|(_, k)| k).sum::<f64>() / count;
    let sxx: f64 = rows.iter().map(|(r, _)| (r - r_mean).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|(r, k)| (r - r_mean) * (k - k_mean)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateData("steady points share one inner radius".into()));
    }
    let m_k = sxy / sxx;
    Ok(SteadySeed {
        k_0: k_mean - m_k * r_mean,
        m_k,
        r_hyd,
        b_0_pos: SEED_DAMPER_OFFSET,
        b_0_neg: SEED_DAMPER_OFFSET,
        m_b_pos: 0.0,
        m_b_neg: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub max_iterations: usize,
    /// Forward-difference step relative to each scaled coordinate.
    pub relative_step: f64,
    /// Relative cost improvement counted as a stall.
    pub improvement_tolerance: f64,
    /// Consecutive stalls that end the search.
    pub stall_iterations: usize,
    /// Infinity norm of the projected scaled gradient that ends the search.
    pub gradient_tolerance: f64,
    /// Residual RMS [m] at which the fit counts as exact; below the
    /// integration noise of the fitting tolerances.
    pub residual_floor: f64,
    /// Starting damping, relative to the largest diagonal of JᵀJ.
    pub initial_damping: f64,
    /// Initial and largest step, as a fraction of each coefficient's
    /// starting magnitude. Large jumps in the damping coefficients make the
    /// dynamics stiff and the trial simulations slow.
    pub trust_radius: f64,
    pub max_trust_radius: f64,
    /// Reciprocal condition number of the Jacobian below which the search
    /// switches to the simplex.
    pub rank_tolerance: f64,
    pub simplex_max_evaluations: usize,
    /// Number of fitting windows; each doubles the previous one and the
    /// last covers the whole record. 1 fits the whole record directly.
    pub horizon_stages: usize,
    /// Iteration cap for every window but the last.
    pub stage_iterations: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            relative_step: 1e-6,
            improvement_tolerance: 1e-8,
            stall_iterations: 3,
            gradient_tolerance: 1e-14,
            residual_floor: 1e-10,
            initial_damping: 1e-3,
            trust_radius: 0.25,
            max_trust_radius: 1.0,
            rank_tolerance: 1e-12,
            simplex_max_evaluations: 1500,
            horizon_stages: 5,
            stage_iterations: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    LevenbergMarquardt,
    /// Levenberg–Marquardt followed by the simplex fallback.
    NelderMead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MaterialParams,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual RMS at the start and after every iteration [m].
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub method: FitMethod,
}

/// Cost evaluation in scaled coordinates `x_i = v_i / scale_i`.
struct Scaled<'a> {
    problem: &'a FitProblem,
    scale: [f64; 7],
    lower: [f64; 7],
    upper: [f64; 7],
}

impl Scaled<'_> {
    fn unscale(&self, x: &[f64; 7]) -> [f64; 7] {
        std::array::from_fn(|i| x[i] * self.scale[i])
    }

    fn project(&self, x: &[f64; 7]) -> [f64; 7] {
        std::array::from_fn(|i| x[i].clamp(self.lower[i], self.upper[i]))
    }

    fn residual(&self, x: &[f64; 7]) -> Vec<f64> {
        let v = self.unscale(x);
        let v = self.problem.bounds.project(&v); // guard against rounding in unscale
        assert!(self.problem.bounds.contains(&v), "candidate outside bounds");
        residual(&params_from_vector(&v, &self.problem.initial_guess), self.problem)
            .expect("projected candidate lies within bounds")
    }
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Progress report passed to the observer of [`fit_with_observer`] after
/// every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitProgress {
    pub iteration: usize,
    /// Last measured time included in the current stage [s].
    pub horizon: f64,
    pub residual_rms: f64,
    pub damping: f64,
    pub evaluations: usize,
    pub params: [f64; 7],
}

/// Bounded nonlinear least squares over the seven coefficients.
pub fn fit(problem: &FitProblem, settings: &FitSettings) -> Result<FitResult> {
    fit_with_observer(problem, settings, |_| {})
}

/// Measured-sample counts of the successive fitting windows; the last one is
/// the whole record. Windows with fewer than four samples per coefficient are
/// dropped: on noisy data they let the weakly determined coefficients wander.
fn stage_lengths(measured: &MeasuredTrajectory, stages: usize) -> Vec<usize> {
    const MIN_SAMPLES: usize = 4 * 7;
    let times = measured.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mut lengths: Vec<usize> = (1..stages.max(1))
        .rev()
        .map(|k| {
            let end = t0 + (t1 - t0) / f64::from(1u32 << k.min(30));
            times.partition_point(|&t| t <= end)
        })
        .filter(|&len| len >= MIN_SAMPLES && len < times.len())
        .collect();
    lengths.dedup();
    lengths.push(times.len());
    lengths
}

/// [`fit`] with a callback after every iteration.
///
/// A lightly damped actuator rings for many periods after a pressure step,
/// so a guess with a slightly wrong natural frequency soon drifts out of phase
/// with the record and the least-squares surface fills with local minima. The
/// search therefore starts on a short leading window of the record and
/// doubles it stage by stage, each stage starting from the previous optimum.
pub fn fit_with_observer(
    problem: &FitProblem,
    settings: &FitSettings,
    mut observer: impl FnMut(&FitProgress),
) -> Result<FitResult> {
    problem.validate()?;
    let guess = problem.bounds.project(&params_to_vector(&problem.initial_guess));
    let scale: [f64; 7] = std::array::from_fn(|i| {
        let g = guess[i].abs();
        if g > 0.0 {
            g
        } else {
            (problem.bounds.upper[i] - problem.bounds.lower[i]).abs().max(1e-12) * 1e-3
        }
    });
    let lower = std::array::from_fn(|i| problem.bounds.lower[i] / scale[i]);
    let upper = std::array::from_fn(|i| problem.bounds.upper[i] / scale[i]);

    let start: [f64; 7] = std::array::from_fn(|i| guess[i] / scale[i]);
    let mut x = start;
    let mut tally = Tally::default();
    let lengths = stage_lengths(&problem.measured, settings.horizon_stages);
    let mut outcome = None;
    for (stage, &len) in lengths.iter().enumerate() {
        let last = stage + 1 == lengths.len();
        let window;
        let stage_problem = if last {
            problem
        } else {
            let samples = problem.measured.samples().take(len).collect();
            window = FitProblem {
                measured: MeasuredTrajectory::new(problem.measured.source.clone(), samples)?,
                ..problem.clone()
            };
            &window
        };
        let space = Scaled {
            problem: stage_problem,
            scale,
            lower,
            upper,
        };
        let max_iterations = if last {
            settings.max_iterations
        } else {
            settings.stage_iterations.min(settings.max_iterations)
        };
        if last && stage > 0 {
            // the short windows may have led somewhere worse for the whole record
            tally.evaluations += 2;
            if cost(&space.residual(&start)) < cost(&space.residual(&x)) {
                x = start;
            }
        }
        let lm = levenberg_marquardt(&space, x, settings, max_iterations, &mut tally, &mut observer);
        x = lm.x;
        outcome = Some(lm);
    }
    let lm = outcome.expect("at least one stage");
    let space = Scaled {
        problem,
        scale,
        lower,
        upper,
    };
    let (mut x, mut r, mut converged) = (lm.x, lm.r, lm.converged);

    let mut method = FitMethod::LevenbergMarquardt;
    if lm.rank_deficient {
        method = FitMethod::NelderMead;
        let (x_nm, r_nm, evals, done) = nelder_mead(&space, x, settings.simplex_max_evaluations);
        tally.evaluations += evals;
        if cost(&r_nm) < cost(&r) {
            x = x_nm;
            r = r_nm;
        }
        tally.history.push(rms(&r));
        converged = done;
    }

    let v = problem.bounds.project(&space.unscale(&x));
    Ok(FitResult {
        params: params_from_vector(&v, &problem.initial_guess),
        residual_rms: rms(&r),
        iterations: tally.iterations,
        converged,
        history: tally.history,
        evaluations: tally.evaluations,
        method,
    })
}

/// Counters shared by all stages.
#[derive(Default)]
struct Tally {
    iterations: usize,
    evaluations: usize,
    history: Vec<f64>,
}

struct LmOutcome {
    x: [f64; 7],
    r: Vec<f64>,
    converged: bool,
    rank_deficient: bool,
}

/// Projected Levenberg–Marquardt with a box trust region on the step.
fn levenberg_marquardt(
    space: &Scaled<'_>,
    start: [f64; 7],
    settings: &FitSettings,
    max_iterations: usize,
    tally: &mut Tally,
    observer: &mut impl FnMut(&FitProgress),
) -> LmOutcome {
    let mut x = start;
    let mut r = space.residual(&x);
    let mut c = cost(&r);
    tally.evaluations += 1;
    tally.history.push(rms(&r));
    let horizon = *space.problem.measured.times().last().expect("non-empty record");
    let mut lambda = settings.initial_damping;
    let mut radius = settings.trust_radius;
    let mut stalls = 0;
    let mut converged = false;
    let mut rank_deficient = false;

    for _ in 0..max_iterations {
        if rms(&r) <= settings.residual_floor {
            converged = true;
            break;
        }
        tally.iterations += 1;
        let jac = jacobian(space, &x, &r, settings.relative_step);
        tally.evaluations += 7;
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;

        // gradient with components pushing against an active bound removed
        let projected = (0..7)
            .map(|i| {
                let at_lower = x[i] <= space.lower[i] && g[i] > 0.0;
                let at_upper = x[i] >= space.upper[i] && g[i] < 0.0;
                if at_lower || at_upper {
                    0.0
                } else {
                    g[i]
                }
            })
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if projected <= settings.gradient_tolerance {
            converged = true;
            break;
        }

        let sv = jac.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smax > 0.0) || smin / smax < settings.rank_tolerance {
            rank_deficient = true;
            break;
        }

        // Damping is isotropic in the scaled coordinates: weakly determined
        // coefficients are held near their current values instead of taking
        // the long Gauss-Newton strides their small curvature would allow.
        let a = jac.transpose() * &jac;
        let mu = (0..7).map(|i| a[(i, i)]).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        let mut accepted = None;
        let mut trials = 0;
        for _ in 0..60 {
            let mut damped = a.clone();
            for i in 0..7 {
                damped[(i, i)] += lambda * mu;
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-&g))) else {
                lambda *= 4.0;
                continue;
            };
            if step.amax() > radius {
                lambda = (lambda * 4.0).max(1e-12);
                continue;
            }
            let candidate = space.project(&std::array::from_fn(|i| x[i] + step[i]));
            let taken = DVector::from_fn(7, |i, _| candidate[i] - x[i]);
            let predicted = -(g.dot(&taken) + 0.5 * taken.dot(&(&a * &taken)));
            let r_new = space.residual(&candidate);
            tally.evaluations += 1;
            trials += 1;
            let c_new = cost(&r_new);
            if c_new < c {
                let ratio = if predicted > 0.0 { (c - c_new) / predicted } else { 0.0 };
                if ratio > 0.75 {
                    radius = (2.0 * radius).min(settings.max_trust_radius);
                } else if ratio < 0.25 {
                    radius *= 0.5;
                }
                accepted = Some((candidate, r_new, c_new));
                lambda /= 3.0;
                break;
            }
            radius = 0.5 * step.amax();
            if trials >= 12 || radius < 1e-14 {
                break;
            }
        }
        let Some((x_new, r_new, c_new)) = accepted else {
            // no downhill step at any damping: a (numerically) stationary point
            converged = true;
            break;
        };
        let improvement = (c - c_new) / c;
        x = x_new;
        r = r_new;
        c = c_new;
        tally.history.push(rms(&r));
        observer(&FitProgress {
            iteration: tally.iterations,
            horizon,
            residual_rms: rms(&r),
            damping: lambda,
            evaluations: tally.evaluations,
            params: space.problem.bounds.project(&space.unscale(&x)),
        });
        if improvement < settings.improvement_tolerance {
            stalls += 1;
            if stalls >= settings.stall_iterations {
                converged = true;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    LmOutcome {
        x,
        r,
        converged,
        rank_deficient,
    }
}

/// Forward-difference Jacobian in scaled coordinates; steps that would leave
/// the box are taken backwards.
fn jacobian(space: &Scaled<'_>, x: &[f64; 7], r0: &[f64], relative_step: f64) -> DMatrix<f64> {
    let columns: Vec<Vec<f64>> = (0..7)
        .into_par_iter()
        .map(|j| {
            let mut h = relative_step * x[j].abs().max(1.0);
            if x[j] + h > space.upper[j] {
                h = -h;
            }
            let mut probe = *x;
            probe[j] += h;
            let probe = space.project(&probe);
            let h = probe[j] - x[j];
            if h == 0.0 {
                return vec![0.0; r0.len()];
            }
            space
                .residual(&probe)
                .iter()
                .zip(r0)
                .map(|(a, b)| (a - b) / h)
                .collect()
        })
        .collect();
    DMatrix::from_fn(r0.len(), 7, |i, j| columns[j][i])
}

/// Bounded Nelder–Mead on the scaled cost. Returns the best point, its
/// residual, the evaluations used and whether the simplex collapsed.
fn nelder_mead(space: &Scaled<'_>, start: [f64; 7], max_evaluations: usize) -> ([f64; 7], Vec<f64>, usize, bool) {
    let eval = |x: &[f64; 7]| {
        let r = space.residual(x);
        (cost(&r), r)
    };
    let mut simplex: Vec<([f64; 7], f64, Vec<f64>)> = Vec::with_capacity(8);
    let (c0, r0) = eval(&start);
    simplex.push((start, c0, r0));
    for i in 0..7 {
        let mut v = start;
        v[i] += 0.05 * start[i].abs().max(1.0);
        if v[i] > space.upper[i] {
            v[i] = start[i] - 0.05 * start[i].abs().max(1.0);
        }
        let v = space.project(&v);
        let (c, r) = eval(&v);
        simplex.push((v, c, r));
    }
    let mut evaluations = 8;
    let mut collapsed = false;
    while evaluations < max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[7].1 - simplex[0].1;
        if spread <= 1e-14 * simplex[0].1.abs().max(f64::MIN_POSITIVE) {
            collapsed = true;
            break;
        }
        let centroid: [f64; 7] = std::array::from_fn(|i| simplex[..7].iter().map(|s| s.0[i]).sum::<f64>() / 7.0);
        let along = |t: f64| -> [f64; 7] {
            space.project(&std::array::from_fn(|i| centroid[i] + t * (simplex[7].0[i] - centroid[i])))
        };
        let reflected = along(-1.0);
        let (cr, rr) = eval(&reflected);
        evaluations += 1;
        if cr < simplex[0].1 {
            let expanded = along(-2.0);
            let (ce, re) = eval(&expanded);
            evaluations += 1;
            simplex[7] = if ce < cr { (expanded, ce, re) } else { (reflected, cr, rr) };
        } else if cr < simplex[6].1 {
            simplex[7] = (reflected, cr, rr);
        } else {
            let contracted = if cr < simplex[7].1 { along(-0.5) } else { along(0.5) };
            let (cc, rc) = eval(&contracted);
            evaluations += 1;
            if cc < simplex[7].1.min(cr) {
                simplex[7] = (contracted, cc, rc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    let v = space.project(&std::array::from_fn(|i| best[i] + 0.5 * (s.0[i] - best[i])));
                    let (c, r) = eval(&v);
                    *s = (v, c, r);
                }
                evaluations += 7;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, _, r) = simplex.swap_remove(0);
    (x, r, evaluations, collapsed)
}
