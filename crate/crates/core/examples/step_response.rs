//! Tip path of the 8-segment actuator under a 270 kPa step, compared with the
//! closed-form steady bend.

use rsda::dynamics::{simulate, ChainModel, ChainState, SimulationConfig};
use rsda::steady_state::SteadySolver;
use rsda::{presets, PressureTrace};

fn main() -> Result<(), rsda::Error> {
    let preset = presets::dof8();
    let model = ChainModel::new(preset.geometry, preset.params)?;
    let trace = PressureTrace::new(vec![(0.0, 0.0), (0.05, 270e3)])?;
    let config = SimulationConfig {
        output_rate_hz: 20.0,
        ..SimulationConfig::default()
    };
    let traj = simulate(&model, &ChainState::at_rest(&preset.geometry), &trace, 2.0, &config)?;
    println!("{:>6} {:>9} {:>9} {:>8}", "t [s]", "x [mm]", "y [mm]", "bend [°]");
    for s in &traj.samples {
        println!(
            "{:6.2} {:9.2} {:9.2} {:8.2}",
            s.time(),
            1e3 * s.tip.x,
            1e3 * s.tip.y,
            s.bend_total.to_degrees()
        );
    }
    let steady = SteadySolver::default().solve(270e3, &preset.geometry, &preset.params)?;
    println!("steady bend {:.2}°", steady.theta_ss.to_degrees());
    Ok(())
}
