//! Forward kinematics of the planar segment chain.
//!
//! Base at the origin, unbent tube hanging along -Y, positive joint angles
//! bend the tube toward -X.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Total bending angle: the sum of the joint angles.
pub fn total_bending(joint_angles: &[f64]) -> f64 {
    joint_angles.iter().sum()
}

/// Cumulative link orientations, `phi_i = sum_{j <= i} theta_j`.
pub fn absolute_angles(joint_angles: &[f64]) -> Vec<f64> {
    joint_angles
        .iter()
        .scan(0.0, |acc, &theta| {
            *acc += theta;
            Some(*acc)
        })
        .collect()
}

pub fn tip_position(joint_angles: &[f64], segment_length: f64) -> PlanarPoint {
    let mut phi = 0.0;
    let mut tip = PlanarPoint::default();
    for &theta in joint_angles {
        phi += theta;
        let (s, c) = phi.sin_cos();
        tip.x -= segment_length * s;
        tip.y -= segment_length * c;
    }
    tip
}

/// Joint positions from the base to the tip (`n + 1` points).
pub fn backbone_shape(joint_angles: &[f64], segment_length: f64) -> Vec<PlanarPoint> {
    let mut points = Vec::with_capacity(joint_angles.len() + 1);
    let mut current = PlanarPoint::default();
    points.push(current);
    let mut phi = 0.0;
    for &theta in joint_angles {
        phi += theta;
        let (s, c) = phi.sin_cos();
        current.x -= segment_length * s;
        current.y -= segment_length * c;
        points.push(current);
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn total_bending_sums() {
        assert_eq!(total_bending(&[0.0; 5]), 0.0);
        assert_relative_eq!(total_bending(&[0.1, 0.2, 0.3]), 0.6, max_relative = 1e-15);
        for n in [1, 3, 8, 64] {
            let q = vec![1.3 / n as f64; n];
            assert_relative_eq!(total_bending(&q), 1.3, max_relative = 1e-14);
        }
    }

    #[test]
    fn straight_tube_hangs_down() {
        let tip = tip_position(&[0.0; 8], 0.155 / 8.0);
        assert_eq!(tip.x, 0.0);
        assert_relative_eq!(tip.y, -0.155, max_relative = 1e-14);
    }

    #[test]
    fn single_segment_quarter_turn() {
        let tip = tip_position(&[FRAC_PI_2], 0.1);
        assert_relative_eq!(tip.x, -0.1, max_relative = 1e-15);
        assert!(tip.y.abs() < 1e-16);
    }

    #[test]
    fn straight_backbone_points() {
        let dl = 0.02;
        let pts = backbone_shape(&[0.0; 4], dl);
        assert_eq!(pts.len(), 5);
        for (k, p) in pts.iter().enumerate() {
            assert_eq!(p.x, 0.0);
            assert_relative_eq!(p.y, -(k as f64) * dl, epsilon = 1e-16);
        }
    }

    #[test]
    fn backbone_ends_at_tip() {
        let q = [0.3, -0.1, 0.25, 0.4, 0.05];
        let pts = backbone_shape(&q, 0.031);
        assert_eq!(*pts.last().unwrap(), tip_position(&q, 0.031));
    }

    #[test]
    fn fine_chain_approaches_circular_arc() {
        // Each link points along the bend accumulated at its base joint, so the
        // chain tip is the arc tip rotated by theta / 2n: first-order convergence.
        let length = 0.155;
        let theta = FRAC_PI_2;
        let arc = PlanarPoint::new(
            -(length / theta) * (1.0 - theta.cos()),
            -(length / theta) * theta.sin(),
        );
        let error = |n: usize| {
            let q = vec![theta / n as f64; n];
            tip_position(&q, length / n as f64).distance(&arc)
        };
        for n in [8, 64, 512] {
            let predicted = arc.norm() * theta / (2.0 * n as f64);
            assert!((error(n) - predicted).abs() < 0.02 * predicted, "n = {n}");
        }
        assert!(error(64) < 0.012 * length);
        assert!(error(1024) < 1e-3 * length);
    }

    #[test]
    fn equal_tip_height_with_different_bends() {
        // With y = -dl (cos(a) + cos(a + b)), the pair (a, b) = (0.6, 0.0) and a
        // two-joint bend with a smaller first angle can share the same tip height.
        let dl = 0.0775;
        let q1 = [0.6, 0.0];
        let y_target = tip_position(&q1, dl).y;
        // solve cos(a) + cos(a + b) = c for b with a = 0.3 (b > 0)
        let a = 0.3_f64;
        let c = -y_target / dl;
        let b = (c - a.cos()).acos() - a;
        let q2 = [a, b];
        let y2 = tip_position(&q2, dl).y;
        assert_relative_eq!(y2, y_target, max_relative = 1e-12);
        assert!((total_bending(&q1) - total_bending(&q2)).abs() > 0.05);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn links_keep_length(q in proptest::collection::vec(-1.5f64..1.5, 8)) {
                let dl = 0.155 / 8.0;
                let pts = backbone_shape(&q, dl);
                for w in pts.windows(2) {
                    prop_assert!((w[0].distance(&w[1]) - dl).abs() < 1e-12);
                }
            }

            #[test]
            fn tip_within_reach(q in proptest::collection::vec(-3.0f64..3.0, 1..20)) {
                let dl = 0.01;
                let reach = dl * q.len() as f64;
                prop_assert!(tip_position(&q, dl).norm() <= reach * (1.0 + 1e-12));
            }
        }
    }
}
