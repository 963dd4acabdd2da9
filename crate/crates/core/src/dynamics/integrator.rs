//! Adaptive one-step integrators.
//!
//! `DormandPrince45` is the default explicit 5(4) pair. `Rosenbrock23` is the
//! linearly implicit 2(3) pair of Shampine and Reichelt; it is meant for finely
//! discretized chains whose damped local modes make explicit schemes crawl.
//! Both step exactly onto every requested output time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    #[default]
    DormandPrince45,
    Rosenbrock23,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

pub(crate) trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Fills `jac` with `df/dy` at `(t, y)`, where `f0 = f(t, y)`. Returns the
    /// number of right-hand-side-equivalent evaluations spent, or `None` to
    /// fall back to plain forward differences. `floor` is the smallest
    /// magnitude used to scale difference steps.
    fn jacobian(
        &mut self,
        _t: f64,
        _y: &[f64],
        _f0: &[f64],
        _floor: f64,
        _jac: &mut DMatrix<f64>,
    ) -> Option<Result<usize>> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub max_step: f64,
}

/// Consecutive right-hand-side failures tolerated (each shrinks the step)
/// before the error is returned.
const MAX_RHS_RETRIES: usize = 12;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], ctl: &StepControl) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let scale = ctl.atol + ctl.rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step<S: OdeSystem>(
    sys: &mut S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    ctl: &StepControl,
    order: i32,
    stats: &mut IntegratorStats,
) -> f64 {
    // Hairer, Norsett & Wanner, II.4
    let n = y0.len();
    let scale: Vec<f64> = y0.iter().map(|y| ctl.atol + ctl.rtol * y.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(ctl.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    stats.evaluations += 1;
    if sys.rhs(t0 + h0, &y1, &mut f1).is_err() {
        return h0 * 1e-2;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| (a - b) / h0).collect();
    let d2 = rms(&diff);
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    (100.0 * h0).min(h1).min(ctl.max_step)
}

/// Integrates from `t0` and calls `on_output` at each of `out_times`
/// (sorted, all `>= t0`).
pub(crate) fn integrate<S: OdeSystem>(
    sys: &mut S,
    kind: IntegratorKind,
    t0: f64,
    y0: &[f64],
    out_times: &[f64],
    ctl: &StepControl,
    on_output: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<IntegratorStats> {
    match kind {
        IntegratorKind::DormandPrince45 => dormand_prince(sys, t0, y0, out_times, ctl, on_output),
        IntegratorKind::Rosenbrock23 => rosenbrock23(sys, t0, y0, out_times, ctl, on_output),
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn dormand_prince<S: OdeSystem>(
    sys: &mut S,
    t0: f64,
    y0: &[f64],
    out_times: &[f64],
    ctl: &StepControl,
    mut on_output: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<IntegratorStats> {
    let n = sys.dim();
    let mut stats = IntegratorStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    sys.rhs(t, &y, &mut k1)?;
    stats.evaluations += 1;
    let mut h = match ctl.initial_step {
        Some(h) => h,
        None => initial_step(sys, t, &y, &k1, ctl, 5, &mut stats),
    };
    let mut fac_old = 1e-4f64;
    let mut failures = 0usize;

    for &target in out_times {
        while t < target {
            if stats.accepted + stats.rejected >= ctl.max_steps {
                return Err(Error::TooManySteps {
                    max_steps: ctl.max_steps,
                    time: t,
                });
            }
            let h_free = h.min(ctl.max_step);
            let remaining = target - t;
            let clipped = h_free >= remaining * (1.0 - 1e-12);
            let h_step = if clipped { remaining } else { h_free };
            if h_step <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { time: t, step: h_step });
            }

            let attempt = (|| -> Result<()> {
                for i in 0..n {
                    stage[i] = y[i] + h_step * A21 * k1[i];
                }
                sys.rhs(t + C2 * h_step, &stage, &mut k2)?;
                for i in 0..n {
                    stage[i] = y[i] + h_step * (A31 * k1[i] + A32 * k2[i]);
                }
                sys.rhs(t + C3 * h_step, &stage, &mut k3)?;
                for i in 0..n {
                    stage[i] = y[i] + h_step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
                }
                sys.rhs(t + C4 * h_step, &stage, &mut k4)?;
                for i in 0..n {
                    stage[i] = y[i]
                        + h_step * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
                }
                sys.rhs(t + C5 * h_step, &stage, &mut k5)?;
                for i in 0..n {
                    stage[i] = y[i]
                        + h_step
                            * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
                }
                sys.rhs(t + h_step, &stage, &mut k6)?;
                for i in 0..n {
                    y_new[i] = y[i]
                        + h_step
                            * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
                }
                sys.rhs(t + h_step, &y_new, &mut k7)?;
                Ok(())
            })();
            stats.evaluations += 6;

            if let Err(e) = attempt {
                failures += 1;
                stats.rejected += 1;
                if failures > MAX_RHS_RETRIES {
                    return Err(e);
                }
                h = h_step * 0.25;
                continue;
            }
            failures = 0;

            for i in 0..n {
                err[i] = h_step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let e = error_norm(&err, &y, &y_new, ctl);
            if !e.is_finite() {
                stats.rejected += 1;
                h = h_step * 0.2;
                continue;
            }
            // PI controller (Hairer's DOPRI5 defaults)
            let beta = 0.04;
            let fac11 = e.powf(0.2 - beta * 0.75);
            if e <= 1.0 {
                let fac = (fac11 / fac_old.powf(beta) / 0.9).clamp(0.2, 10.0);
                let h_next = h_step / fac;
                fac_old = e.max(1e-4);
                t += h_step;
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                stats.accepted += 1;
                h = if clipped { h_next.max(h_free) } else { h_next };
                if clipped {
                    t = target;
                }
            } else {
                stats.rejected += 1;
                h = h_step / (fac11 / 0.9).min(5.0);
            }
        }
        on_output(target, &y)?;
    }
    Ok(stats)
}

fn rosenbrock23<S: OdeSystem>(
    sys: &mut S,
    t0: f64,
    y0: &[f64],
    out_times: &[f64],
    ctl: &StepControl,
    mut on_output: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<IntegratorStats> {
    let n = sys.dim();
    let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
    let e32 = 6.0 + std::f64::consts::SQRT_2;
    let mut stats = IntegratorStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; n];
    sys.rhs(t, &y, &mut f0)?;
    stats.evaluations += 1;
    let mut h = match ctl.initial_step {
        Some(h) => h,
        None => initial_step(sys, t, &y, &f0, ctl, 2, &mut stats),
    };
    let threshold = ctl.atol / ctl.rtol;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut dfdt = vec![0.0; n];
    let mut probe = vec![0.0; n];
    let mut f_probe = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut failures = 0usize;
    let mut jac_current = false;

    for &target in out_times {
        while t < target {
            if stats.accepted + stats.rejected >= ctl.max_steps {
                return Err(Error::TooManySteps {
                    max_steps: ctl.max_steps,
                    time: t,
                });
            }
            if !jac_current {
                // Jacobian and forward-difference time derivative at (t, y)
                match sys.jacobian(t, &y, &f0, threshold, &mut jac) {
                    Some(spent) => stats.evaluations += spent?,
                    None => {
                        probe.copy_from_slice(&y);
                        for j in 0..n {
                            let delta = f64::EPSILON.sqrt() * y[j].abs().max(threshold);
                            probe[j] = y[j] + delta;
                            sys.rhs(t, &probe, &mut f_probe)?;
                            for i in 0..n {
                                jac[(i, j)] = (f_probe[i] - f0[i]) / delta;
                            }
                            probe[j] = y[j];
                        }
                        stats.evaluations += n;
                    }
                }
                let dt = f64::EPSILON.sqrt() * t.abs().max(1e-3);
                sys.rhs(t + dt, &y, &mut f_probe)?;
                for i in 0..n {
                    dfdt[i] = (f_probe[i] - f0[i]) / dt;
                }
                stats.evaluations += 1;
                jac_current = true;
            }

            let h_free = h.min(ctl.max_step);
            let remaining = target - t;
            let clipped = h_free >= remaining * (1.0 - 1e-12);
            let h_step = if clipped { remaining } else { h_free };
            if h_step <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { time: t, step: h_step });
            }

            let w = DMatrix::<f64>::identity(n, n) - &jac * (h_step * d);
            let lu = w.lu();
            let solve = |rhs: Vec<f64>| -> Result<Vec<f64>> {
                lu.solve(&DVector::from_vec(rhs))
                    .map(|v| v.as_slice().to_vec())
                    .ok_or_else(|| Error::LinearSolve("singular Rosenbrock iteration matrix".into()))
            };

            let hd = h_step * d;
            let k1 = solve(f0.iter().zip(&dfdt).map(|(f, g)| f + hd * g).collect())?;
            for i in 0..n {
                stage[i] = y[i] + 0.5 * h_step * k1[i];
            }
            let attempt = sys.rhs(t + 0.5 * h_step, &stage, &mut f1).and_then(|_| {
                let k2: Vec<f64> = solve(f1.iter().zip(&k1).map(|(f, k)| f - k).collect())?
                    .iter()
                    .zip(&k1)
                    .map(|(a, b)| a + b)
                    .collect();
                for i in 0..n {
                    y_new[i] = y[i] + h_step * k2[i];
                }
                sys.rhs(t + h_step, &y_new, &mut f2)?;
                let k3 = solve(
                    (0..n)
                        .map(|i| {
                            f2[i] - e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]) + hd * dfdt[i]
                        })
                        .collect(),
                )?;
                Ok((0..n)
                    .map(|i| h_step / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]))
                    .collect::<Vec<f64>>())
            });
            stats.evaluations += 2;

            let err = match attempt {
                Ok(err) => err,
                Err(e) => {
                    failures += 1;
                    stats.rejected += 1;
                    if failures > MAX_RHS_RETRIES {
                        return Err(e);
                    }
                    h = h_step * 0.25;
                    continue;
                }
            };
            failures = 0;

            let e = error_norm(&err, &y, &y_new, ctl);
            if !e.is_finite() {
                stats.rejected += 1;
                h = h_step * 0.2;
                continue;
            }
            let fac = (0.8 * e.powf(-1.0 / 3.0)).clamp(0.2, 5.0);
            if e <= 1.0 {
                t = if clipped { target } else { t + h_step };
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut f0, &mut f2);
                stats.accepted += 1;
                let h_next = h_step * fac;
                h = if clipped { h_next.max(h_free) } else { h_next };
                jac_current = false;
            } else {
                stats.rejected += 1;
                h = h_step * fac.min(0.5);
            }
        }
        on_output(target, &y)?;
    }
    Ok(stats)
}
