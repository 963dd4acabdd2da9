//! Segmented rigid-body model of fiber-reinforced fluidic elastomer actuators.
//!
//! A pressurized soft tube is approximated by a planar chain of `n` rigid
//! segments, each joined to its parent by a revolute joint carrying a
//! torsional spring, a direction-dependent damper and a hydraulic torque.
//! The inner radius of every segment grows as the tube bends (the elastomer is
//! incompressible and the fibers pin the outer radius), which in turn changes
//! the hydraulic torque, the spring and damper coefficients and the inertia.
//!
//! - [`geometry`]: volume conservation of a segment
//! - [`forces`]: hydraulic, spring and damper laws, pressure traces
//! - [`dynamics`]: equations of motion and time integration
//! - [`steady_state`]: closed-form equilibrium bending
//! - [`kinematics`]: tip and backbone positions
//! - [`identification`]: fitting the material parameters to tip trajectories
//! - [`io`]: configuration files and CSV data

pub mod dynamics;
pub mod error;
pub mod forces;
pub mod geometry;
pub mod identification;
pub mod io;
pub mod kinematics;
pub mod presets;
pub mod steady_state;

pub use dynamics::{
    simulate, ChainModel, ChainState, IntegratorKind, SimulationConfig, Trajectory,
};
pub use error::{Error, Result};
pub use forces::{MaterialParams, PressureTrace};
pub use geometry::ActuatorGeometry;
pub use kinematics::PlanarPoint;
pub use steady_state::{solve_bending, SteadySolution};
