use super::*;
use crate::forces::PressureTrace;
use crate::geometry::wall_volume_invariant;
use crate::presets;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(n: usize) -> ChainModel {
    let p = presets::dof8();
    let geometry = p.geometry.with_segment_count(n).unwrap();
    ChainModel::new(geometry, p.params.rescaled_for_segments(8, n)).unwrap()
}

fn random_state(model: &ChainModel, rng: &mut ChaCha8Rng) -> ChainState {
    let n = model.dof();
    let q = (0..n).map(|_| rng.random_range(-0.4..0.9)).collect();
    let q_dot = (0..n).map(|_| rng.random_range(-6.0..6.0)).collect();
    ChainState::on_constraint(model.geometry(), q, q_dot)
}

/// World-frame center of mass of every link.
fn com_positions(q: &[f64], dl: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut phi, mut x, mut y) = (0.0, 0.0, 0.0);
    for &theta in q {
        phi += theta;
        out.push((x - 0.5 * dl * phi.sin(), y - 0.5 * dl * phi.cos()));
        x -= dl * phi.sin();
        y -= dl * phi.cos();
    }
    out
}

#[test]
fn inertia_examples() {
    let (m, l) = (0.02, 0.155);
    assert_relative_eq!(segment_inertia(m, 0.0, 0.0, l), m * l * l / 12.0);
    assert_relative_eq!(
        segment_inertia(m, 0.008, 0.006, 0.0),
        m * 3.0 * (0.008f64.powi(2) + 0.006f64.powi(2)) / 12.0
    );
    let i = segment_inertia(0.01, 0.008, 0.006, 0.019375);
    assert_relative_eq!(i, 5.628e-7, max_relative = 1e-3);
}

#[test]
fn single_link_pendulum() {
    let model = model(1);
    let omega = 2.5;
    let state = ChainState::on_constraint(model.geometry(), vec![0.3], vec![omega]);
    let props = model.body_props(state.r_inner[0]);
    let expected = 0.5 * (props.mass * props.com_offset.powi(2) + props.inertia) * omega * omega;
    assert_relative_eq!(model.kinetic_energy(&state).unwrap(), expected, max_relative = 1e-14);
    let m = model.mass_matrix(&state).unwrap();
    assert_relative_eq!(
        m[(0, 0)],
        props.mass * props.com_offset.powi(2) + props.inertia,
        max_relative = 1e-14
    );
}

#[test]
fn kinetic_energy_matches_differentiated_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [1, 2, 5] {
        let model = model(n);
        let dl = model.geometry().segment_length();
        for _ in 0..10 {
            let state = random_state(&model, &mut rng);
            let h = 1e-5;
            let plus: Vec<f64> = state.q.iter().zip(&state.q_dot).map(|(q, v)| q + h * v).collect();
            let minus: Vec<f64> = state.q.iter().zip(&state.q_dot).map(|(q, v)| q - h * v).collect();
            let (cp, cm) = (com_positions(&plus, dl), com_positions(&minus, dl));
            let mut omega = 0.0;
            let mut t = 0.0;
            for j in 0..n {
                omega += state.q_dot[j];
                let props = model.body_props(state.r_inner[j]);
                let vx = (cp[j].0 - cm[j].0) / (2.0 * h);
                let vy = (cp[j].1 - cm[j].1) / (2.0 * h);
                t += 0.5 * (props.mass * (vx * vx + vy * vy) + props.inertia * omega * omega);
            }
            assert_relative_eq!(model.kinetic_energy(&state).unwrap(), t, max_relative = 1e-8);
        }
    }
}

#[test]
fn mass_matrix_reproduces_kinetic_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 3, 8] {
        let model = model(n);
        for _ in 0..20 {
            let state = random_state(&model, &mut rng);
            let m = model.mass_matrix(&state).unwrap();
            let v = DVector::from_column_slice(&state.q_dot);
            let t = 0.5 * v.dot(&(&m * &v));
            assert_relative_eq!(t, model.kinetic_energy(&state).unwrap(), max_relative = 1e-12);
            assert!((&m - m.transpose()).abs().max() <= 1e-12);
            assert!(m.clone().cholesky().is_some());
        }
    }
}

#[test]
fn zero_bias_at_straight_rest_without_gravity() {
    let p = presets::dof8();
    let model = ChainModel::new(p.geometry, p.params.without_gravity()).unwrap();
    let state = ChainState::at_rest(model.geometry());
    assert!(model.bias_vector(&state, 0.0).unwrap().iter().all(|v| *v == 0.0));
    let d = model.state_derivative(&state, 0.0).unwrap();
    assert!(d.q_ddot.iter().chain(&d.r_dot).chain(&d.q_dot).all(|v| *v == 0.0));
    assert_eq!(d.power, 0.0);
}

#[test]
fn bias_is_negative_potential_gradient_at_rest() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = model(4);
    let mut state = random_state(&model, &mut rng);
    state.q_dot = vec![0.0; 4];
    let h = model.bias_vector(&state, 0.0).unwrap();
    let g = model.potential_gradient(&state).unwrap();
    for j in 0..4 {
        assert_eq!(h[j], -g[j]);
    }
}

#[test]
fn potential_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = model(8);
    for _ in 0..10 {
        let state = random_state(&model, &mut rng);
        let grad = model.potential_gradient(&state).unwrap();
        let u = |q: &[f64]| {
            let s = ChainState::on_constraint(model.geometry(), q.to_vec(), vec![0.0; 8]);
            model.potential_energy(&s).unwrap()
        };
        let h = 1e-4;
        let mut fd = vec![0.0; 8];
        for (j, slot) in fd.iter_mut().enumerate() {
            let at = |d: f64| {
                let mut q = state.q.clone();
                q[j] += d;
                u(&q)
            };
            *slot = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
        }
        let fd = DVector::from_vec(fd);
        assert!((&grad - &fd).norm() < 1e-7 * fd.norm(), "{grad} vs {fd}");
    }
}

#[test]
fn spring_energy_without_radius_dependence_is_quadratic() {
    let p = presets::dof8();
    let params = MaterialParams {
        m_k: 0.0,
        gravity: 0.0,
        ..p.params
    };
    let model = ChainModel::new(p.geometry.with_segment_count(1).unwrap(), params).unwrap();
    let state = ChainState::on_constraint(model.geometry(), vec![0.7], vec![0.0]);
    assert_relative_eq!(
        model.potential_energy(&state).unwrap(),
        0.5 * params.k_0 * 0.49,
        max_relative = 1e-14
    );
}

#[test]
fn pressure_bends_rest_state_forward() {
    // Equal joint torques leave every link but the last with zero net torque,
    // so inner joints may initially swing back; the bend as a whole and the
    // distal joint accelerate forward.
    for n in [1, 2, 8] {
        let model = model(n);
        let state = ChainState::at_rest(model.geometry());
        let d = model.state_derivative(&state, 2.7e5).unwrap();
        assert!(d.q_ddot.iter().sum::<f64>() > 0.0, "{:?}", d.q_ddot);
        assert!(d.q_ddot[n - 1] > 0.0);
        assert!(d.r_dot.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn radius_rate_follows_joint_velocity() {
    let model = model(3);
    let state = ChainState::on_constraint(model.geometry(), vec![0.2, 0.0, -0.1], vec![1.0, 0.0, -1.0]);
    let d = model.state_derivative(&state, 1e5).unwrap();
    assert!(d.r_dot[0] > 0.0);
    assert_eq!(d.r_dot[1], 0.0);
    assert!(d.r_dot[2] < 0.0);
}

#[test]
fn derivative_agrees_with_short_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let model = model(2);
    let state = random_state(&model, &mut rng);
    let p = 1.5e5;
    let trace = PressureTrace::constant(p).unwrap();
    let d = model.state_derivative(&state, p).unwrap();
    let config = SimulationConfig {
        rtol: 1e-12,
        atol: 1e-14,
        ..SimulationConfig::default()
    };
    let quotient = |h: f64| {
        let traj = simulate_at(&model, &state, &trace, &[h], &config).unwrap();
        let end = &traj.samples[0].state;
        (0..2)
            .map(|j| (end.q_dot[j] - state.q_dot[j]) / h)
            .collect::<Vec<_>>()
    };
    let h = 1e-6;
    let (full, half) = (quotient(h), quotient(h / 2.0));
    for j in 0..2 {
        let richardson = 2.0 * half[j] - full[j];
        assert_relative_eq!(richardson, d.q_ddot[j], max_relative = 1e-6);
    }
}

#[test]
fn radius_leaving_the_wall_is_an_error() {
    let model = model(2);
    let mut state = ChainState::at_rest(model.geometry());
    state.r_inner[1] = model.geometry().outer_radius();
    assert!(matches!(
        model.state_derivative(&state, 0.0),
        Err(Error::RadiusOutOfRange { segment: 1, .. })
    ));
}

#[test]
fn state_length_mismatch_is_rejected() {
    let model = model(3);
    let state = ChainState::at_rest(&model.geometry().with_segment_count(2).unwrap());
    assert!(model.mass_matrix(&state).is_err());
}

#[test]
fn zero_pressure_rest_stays_at_rest() {
    let p = presets::dof8();
    let model = ChainModel::new(p.geometry, p.params.without_gravity()).unwrap();
    let trace = PressureTrace::constant(0.0).unwrap();
    let traj = simulate(
        &model,
        &ChainState::at_rest(model.geometry()),
        &trace,
        0.5,
        &SimulationConfig::default(),
    )
    .unwrap();
    assert_eq!(traj.len(), 51);
    for s in &traj.samples {
        assert!(s.state.q.iter().chain(&s.state.q_dot).all(|v| *v == 0.0));
    }
}

#[test]
fn unpressurized_motion_dissipates_energy() {
    let model = model(3);
    let state = ChainState::on_constraint(model.geometry(), vec![0.5, 0.3, -0.2], vec![2.0, -1.0, 0.5]);
    let trace = PressureTrace::constant(0.0).unwrap();
    let config = SimulationConfig {
        rtol: 1e-10,
        atol: 1e-12,
        output_rate_hz: 500.0,
        ..SimulationConfig::default()
    };
    let traj = simulate(&model, &state, &trace, 1.0, &config).unwrap();
    let e0 = traj.samples[0].total_energy().abs();
    for w in traj.samples.windows(2) {
        assert!(w[1].total_energy() <= w[0].total_energy() + 1e-9 * e0);
    }
    assert!(traj.last().unwrap().total_energy() < traj.samples[0].total_energy());
}

#[test]
fn short_ramp_conserves_wall_volume_and_energy() {
    let model = model(4);
    let geometry = *model.geometry();
    let trace = PressureTrace::ramp(2.7e5, 0.0, 0.2).unwrap();
    let config = SimulationConfig {
        rtol: 1e-9,
        atol: 1e-12,
        ..SimulationConfig::default()
    };
    let traj = simulate(&model, &ChainState::at_rest(&geometry), &trace, 0.5, &config).unwrap();
    let dl = geometry.segment_length();
    let ro = geometry.outer_radius();
    let v0 = wall_volume_invariant(geometry.initial_inner_radius(), ro, 0.0, dl);
    let first = &traj.samples[0];
    let mut peak = 0.0f64;
    for s in &traj.samples {
        for j in 0..4 {
            let v = wall_volume_invariant(s.state.r_inner[j], ro, ro * s.state.q[j], dl);
            assert!(((v - v0) / v0).abs() < 1e-7);
        }
        peak = peak.max((s.total_energy() - first.total_energy()).abs());
        let residual = (s.total_energy() - first.total_energy()) - (s.input_work - first.input_work);
        assert!(residual.abs() < 1e-5 * peak.max(1e-12), "{residual} vs {peak}");
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let model = model(3);
    let trace = PressureTrace::ramp(2.2e5, 0.0, 0.1).unwrap();
    let run = |kind| {
        let config = SimulationConfig {
            integrator: kind,
            ..SimulationConfig::default()
        };
        simulate(&model, &ChainState::at_rest(model.geometry()), &trace, 0.3, &config).unwrap()
    };
    for kind in [IntegratorKind::DormandPrince45, IntegratorKind::Rosenbrock23] {
        assert_eq!(run(kind), run(kind));
    }
}

#[test]
fn gauss_legendre_is_exact_for_polynomials() {
    assert_relative_eq!(gauss_legendre(|x| x.powi(31), 0.0, 1.0), 1.0 / 32.0, max_relative = 1e-13);
    assert_relative_eq!(gauss_legendre(f64::exp, -1.0, 2.0), 2f64.exp() - (-1f64).exp(), max_relative = 1e-14);
}
