#![allow(dead_code)]

use ccgnav::ccg::Ccg;
use ccgnav::flow::{build_unsafe_flow, BodySets, UnsafeFlow};
use ccgnav::numerics::Mat;

/// Rectangle ego, revolved obstacle disk and a velocity ball, at the default
/// scenario scale.
pub fn example_bodies() -> BodySets {
    BodySets {
        ego_shape: Ccg::smooth_box_enclosing(&[0.0, 0.0], &[0.5, 0.25], 4, 1e-3).unwrap(),
        obstacle_shape: Ccg::ball(&[0.0, 0.0], 0.8).unwrap(),
        velocity_set: Ccg::ball(&[0.0, 0.0], 0.75).unwrap(),
    }
}

pub fn example_estimate() -> Ccg {
    let shape = Mat::from_rows(&[&[0.09, 0.02], &[0.02, 0.05]]);
    Ccg::ellipsoid(&[1.0, -0.5], &shape).unwrap()
}

pub fn example_flow(gamma: f64) -> UnsafeFlow {
    build_unsafe_flow(&example_estimate(), &example_bodies(), 2.0, 0.1, gamma).unwrap()
}

/// A flow with equality constraints and an off-center ego body, so that every
/// term of the eliminated representation is exercised.
pub fn constrained_flow(gamma: f64) -> UnsafeFlow {
    let a = Ccg::ball(&[0.0, 0.0], 1.0).unwrap();
    let b = Ccg::ball(&[0.6, 0.2], 0.9).unwrap();
    let r_hat = a.intersection(&b).unwrap();
    let bodies = BodySets {
        ego_shape: Ccg::smooth_box_enclosing(&[0.3, -0.1], &[0.5, 0.25], 4, 1e-3).unwrap(),
        obstacle_shape: Ccg::ball(&[0.0, 0.0], 0.4).unwrap(),
        velocity_set: Ccg::ball(&[0.1, 0.0], 0.5).unwrap(),
    };
    build_unsafe_flow(&r_hat, &bodies, 0.0, 0.1, gamma).unwrap()
}
