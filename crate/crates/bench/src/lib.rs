//! Fixtures shared by the benchmarks.

use formation_core::dynamics::{block_rotation, lift};
use formation_core::polytope::lifted_extremes;
use formation_core::scenario::{Scenario, ScenarioConfig};
use formation_core::sim::paper_angle_profile;
use nalgebra::{DMatrix, DVector};

/// The built-in four-agent square scenario.
pub fn square() -> Scenario {
    ScenarioConfig::paper_sec4().build().expect("built-in scenario is valid")
}

/// Rotation angles of the square scenario at time `t`.
pub fn square_angles(t: f64) -> Vec<f64> {
    (1..=4).map(|i| paper_angle_profile(i, t).expect("four agents")).collect()
}

/// Image of the first lifted generator under the first mode's one-step map
/// at `t`, a typical input to the weight decomposition.
pub fn square_image(t: f64) -> DVector<f64> {
    let s = square();
    let h = s.max_step();
    let graph = &s.schedule().modes()[0];
    let map = DMatrix::identity(8, 8) - h * lift(&graph.laplacian().transpose()) * block_rotation(&square_angles(t));
    let gens = lifted_extremes(4).expect("n >= 2");
    map * gens.points()[0].clone()
}
