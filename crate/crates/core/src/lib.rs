//! Reconstruction of two-body rigid collisions from sparse, noisy pose
//! annotations by physically regularized least squares, with a forward
//! simulator as ground-truth oracle and a composer for authoring new scenes
//! from reconstructed collisions.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod composer;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod geom;
pub mod io;
pub mod lm;
pub mod real;
pub mod residuals;
pub mod simulator;
pub mod solver;
pub mod trajectory;

pub use composer::{
    auto_time, export_keyframes, place_pair, predict_secondary, AutoTiming, AxisAngle, BodyRef, KeyframeDocument,
    PlacedPair, PredictedEvent, SceneComposition,
};
pub use dynamics::{BodyState, Impulse, Inertia};
pub use error::{Error, Result, Side};
pub use geom::{Quatf, Vec3};
pub use io::{AnnotationFile, KeyframeFile, SceneFile, SolutionFile, TruthFile, FORMAT_VERSION};
pub use residuals::{BodyObservations, Observation, ObservationSet, Plane, Weights};
pub use solver::{reconstruct, reconstruct_single_body, Flags, InitStrategy, SolutionRecord, SolveConfig};
