//! Shipped parameter sets for the reference tube.
//!
//! Coefficients are per joint, SI units, per radian. The 2-segment set is the
//! 8-segment set mapped through [`MaterialParams::rescaled_for_segments`] with
//! its own hydraulic arm.

use crate::forces::{MaterialParams, STANDARD_GRAVITY};
use crate::geometry::ActuatorGeometry;

/// Density of cured PDMS [kg/m^3].
pub const PDMS_DENSITY: f64 = 965.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub geometry: ActuatorGeometry,
    pub params: MaterialParams,
}

pub const NAMES: [&str; 2] = ["dof2", "dof8"];

fn reference_geometry(n: usize) -> ActuatorGeometry {
    ActuatorGeometry::reference(n).expect("reference geometry is valid")
}

pub fn dof8() -> Preset {
    let geometry = reference_geometry(8);
    Preset {
        name: "dof8",
        geometry,
        params: MaterialParams {
            k_0: 0.90,
            m_k: -37.5,
            b_0_pos: 6.0e-4,
            b_0_neg: 9.0e-4,
            m_b_pos: -0.05,
            m_b_neg: -0.08,
            r_hyd: 0.0035644,
            total_mass: PDMS_DENSITY * geometry.material_volume(),
            gravity: STANDARD_GRAVITY,
        },
    }
}

pub fn dof2() -> Preset {
    let base = dof8();
    Preset {
        name: "dof2",
        geometry: reference_geometry(2),
        params: MaterialParams {
            r_hyd: 0.0037125,
            ..base.params.rescaled_for_segments(8, 2)
        },
    }
}

pub fn by_name(name: &str) -> Option<Preset> {
    match name {
        "dof2" => Some(dof2()),
        "dof8" => Some(dof8()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forces::{damper_coefficient, spring_coefficient};

    #[test]
    fn presets_are_valid_over_the_radius_range() {
        for name in NAMES {
            let p = by_name(name).unwrap();
            p.params.validate().unwrap();
            let ro = p.geometry.outer_radius();
            let ri0 = p.geometry.initial_inner_radius();
            for k in 0..=20 {
                let r = ri0 + (ro - ri0) * k as f64 / 20.0;
                let spring = spring_coefficient(r, &p.params);
                assert!(!spring.clamped && spring.value > 0.0);
                for omega in [-1.0, 1.0] {
                    let b = damper_coefficient(r, omega, &p.params);
                    assert!(!b.clamped && b.value > 0.0);
                }
            }
        }
    }

    #[test]
    fn tube_mass_from_density() {
        let p = dof8();
        assert!((p.params.total_mass - 0.013157).abs() < 1e-5);
        assert_eq!(dof2().params.total_mass, p.params.total_mass);
    }

    #[test]
    fn unknown_name() {
        assert!(by_name("dof3").is_none());
    }
}
