#![allow(dead_code)]

use impactfit_core::composer::{place_pair, AxisAngle, PlacedPair, SceneComposition};
use impactfit_core::simulator::{sample_observations, simulate, two_box_scene, TwoBoxOptions};
use impactfit_core::solver::{record_from_unknowns, SolutionRecord, SolveConfig};
use impactfit_core::Vec3;

/// The ground truth of a simulated scene wrapped as a solution.
pub fn truth_record(seed: u64) -> SolutionRecord {
    let gt = simulate(&two_box_scene(seed, &TwoBoxOptions::default()).unwrap()).unwrap();
    let obs = sample_observations(&gt, 5.0, 10.0).unwrap();
    record_from_unknowns(&obs, 45.0, gt.unknowns().unwrap(), &SolveConfig::default()).unwrap()
}

pub fn placed(seed: u64, t: Vec3, angle: f64, offset: f64) -> PlacedPair {
    place_pair(truth_record(seed), t, AxisAngle::about_gravity(angle), offset, 1.0).unwrap()
}

/// Two pairs whose a-bodies meet 12 frames after the later event.
pub fn crossing_scene(seed: u64) -> SceneComposition {
    let a = placed(seed, Vec3::zero(), 0.0, 0.0);
    let b0 = placed(seed + 1, Vec3::zero(), 2.5, 6.0);
    let f = 45.0 + 6.0 + 12.0;
    let shift = a.tracks()[0].position(f) - b0.tracks()[0].position(f);
    let b = place_pair(b0.record.clone(), shift, AxisAngle::about_gravity(2.5), 6.0, 2.0).unwrap();
    SceneComposition::new(vec![a, b]).unwrap()
}
