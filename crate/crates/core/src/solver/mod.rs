//! Three-phase reconstruction: collision-segment screening, a solve with the
//! collision point pinned to the midpoint of the two centres, and a final
//! refinement with the collision point free.

mod init;
mod record;
mod single;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use init::{candidate_segments, initialize, InitStrategy};
pub use record::{BodyTrack, Flags, PhaseReport, SolutionKind, SolutionRecord};
pub use single::{initialize_single, reconstruct_single_body};

use crate::dynamics::DEFAULT_SUBSTEP;
use crate::error::{Error, Result};
use crate::lm::{minimize, LmConfig, LmReport};
use crate::residuals::{
    compute_restitution, slot_vec, Body, ObservationSet, PhaseMask, TwoBodyProblem, UnknownLayout as L, Weights,
    MASS_RATIO_BOUNDS,
};

/// Newton steps that settle the final optimum below the cost resolution.
pub const POLISH_ITERATIONS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub weights: Weights,
    /// Iteration cap of phases 2 and 3.
    pub max_iterations: usize,
    /// Iteration cap of each phase-1 candidate solve.
    pub screening_iterations: usize,
    /// Relative cost decrease that ends a phase.
    pub cost_tolerance: f64,
    /// Relative step norm that ends a phase.
    pub step_tolerance: f64,
    /// Pose integration substep, frames.
    pub substep: f64,
    /// Seed of the impulse initialization.
    pub seed: u64,
    pub mass_ratio_bounds: (f64, f64),
    pub init: InitStrategy,
    /// Screening admits segments whose cost is at most `1 + slack` times the
    /// lowest candidate cost.
    pub screening_cost_slack: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            max_iterations: 200,
            screening_iterations: 60,
            cost_tolerance: 1e-12,
            step_tolerance: 1e-12,
            substep: DEFAULT_SUBSTEP,
            seed: 0,
            mass_ratio_bounds: MASS_RATIO_BOUNDS,
            init: InitStrategy::default(),
            screening_cost_slack: 0.02,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.cost_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.substep > 0.0) {
            return Err(Error::InvalidArgument(format!("substep must be positive, got {}", self.substep)));
        }
        let (lo, hi) = self.mass_ratio_bounds;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidArgument(format!("invalid mass ratio bounds ({lo}, {hi})")));
        }
        if !(self.screening_cost_slack >= 0.0) {
            return Err(Error::InvalidArgument("screening cost slack must be non-negative".into()));
        }
        if self.max_iterations == 0 || self.screening_iterations == 0 {
            return Err(Error::InvalidArgument("iteration caps must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn lm(&self, max_iterations: usize) -> LmConfig {
        LmConfig {
            max_iterations,
            cost_tolerance: self.cost_tolerance,
            step_tolerance: self.step_tolerance,
            ..LmConfig::default()
        }
    }

    /// The final solve also polishes its optimum with Newton steps.
    pub(crate) fn lm_final(&self) -> LmConfig {
        LmConfig { polish_iterations: POLISH_ITERATIONS, ..self.lm(self.max_iterations) }
    }
}

/// Free-variable mask with the collision point and impulse held fixed.
fn free_mask(collision_point: bool, impulse: bool) -> Vec<bool> {
    let mut free = vec![true; L::LEN];
    for i in 0..3 {
        free[L::COLLISION_POINT + i] = collision_point;
        free[L::IMPULSE + i] = impulse;
    }
    free
}

fn problem(
    obs: &ObservationSet,
    t_c: f64,
    mask: PhaseMask,
    pin: bool,
    config: &SolveConfig,
) -> Result<TwoBodyProblem> {
    let mut p = TwoBodyProblem::new(obs, t_c, config.weights, mask, config.substep, pin)?;
    p.mass_bounds = config.mass_ratio_bounds;
    Ok(p)
}

/// Result of phase 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Screening {
    pub t_c: f64,
    pub x: Vec<f64>,
    pub report: PhaseReport,
    /// `(t_c, ‖b4a − b4b‖, cost)` of every candidate, in order.
    pub candidates: Vec<(f64, f64, f64)>,
}

fn offsets_distance(x: &[f64]) -> f64 {
    (slot_vec(x, L::offset(Body::A)) - slot_vec(x, L::offset(Body::B))).norm()
}

fn half_diagonals(obs: &ObservationSet) -> f64 {
    obs.bodies.iter().map(|b| 0.5 * b.dims.norm()).sum()
}

/// Among candidates whose screening cost is within `slack` of the best, the
/// one with the smallest `distance`. A segment on the wrong side of the
/// event fits the data markedly worse, and its offsets can still land close
/// together, so the cost gate comes first.
pub(crate) fn select(
    runs: Vec<(f64, LmReport)>,
    slack: f64,
    distance: impl Fn(&[f64]) -> f64,
) -> Option<(f64, LmReport)> {
    let runs: Vec<_> = runs.into_iter().filter(|(_, r)| distance(&r.x).is_finite()).collect();
    let floor = runs.iter().map(|(_, r)| r.cost).fold(f64::INFINITY, f64::min);
    let gate = floor * (1.0 + slack) + 1e-20;
    runs.into_iter()
        .filter(|(_, r)| r.cost <= gate)
        .min_by(|a, b| distance(&a.1.x).total_cmp(&distance(&b.1.x)))
}

/// Screens every collision segment with the impulse coupling disabled and
/// keeps the one whose solution brings the two offsets closest together.
pub fn phase1_select_tc(obs: &ObservationSet, config: &SolveConfig) -> Result<Screening> {
    obs.validate()?;
    config.validate()?;
    let segments = candidate_segments(obs)?;
    let runs: Vec<Option<(f64, LmReport)>> = segments
        .par_iter()
        .map(|&i| {
            let (x0, t_c) = initialize(obs, i, config).ok()?;
            let p = problem(obs, t_c, PhaseMask::SCREENING, false, config).ok()?;
            let rep = minimize(&p, &x0, &free_mask(false, false), &config.lm(config.screening_iterations));
            rep.cost.is_finite().then_some((t_c, rep))
        })
        .collect();
    let candidates: Vec<(f64, f64, f64)> = runs
        .iter()
        .flatten()
        .map(|(t_c, rep)| (*t_c, offsets_distance(&rep.x), rep.cost))
        .collect();
    let runs: Vec<(f64, LmReport)> = runs.into_iter().flatten().collect();
    let Some((t_c, rep)) = select(runs, config.screening_cost_slack, offsets_distance) else {
        return Err(Error::NoCollisionFound("every candidate segment diverged".into()));
    };
    let d = offsets_distance(&rep.x);
    let reach = 2.0 * half_diagonals(obs);
    if d > reach {
        return Err(Error::NoCollisionFound(format!(
            "closest approach {d:.3} m exceeds twice the summed half-diagonals ({reach:.3} m)"
        )));
    }
    let report = PhaseReport::new("screening", &rep);
    Ok(Screening { t_c, x: rep.x, report, candidates })
}

/// Full solve at fixed `t_c` with the collision point held at the midpoint
/// of the two offsets. The returned vector stores that midpoint.
pub fn phase2_solve(
    obs: &ObservationSet,
    warm: &[f64],
    t_c: f64,
    config: &SolveConfig,
) -> Result<(Vec<f64>, PhaseReport)> {
    let p = problem(obs, t_c, PhaseMask::FULL, true, config)?;
    let rep = minimize(&p, warm, &free_mask(false, true), &config.lm(config.max_iterations));
    let mut x = rep.x.clone();
    let mid = (slot_vec(&x, L::offset(Body::A)) + slot_vec(&x, L::offset(Body::B))) * 0.5;
    x[L::COLLISION_POINT..L::COLLISION_POINT + 3].copy_from_slice(&mid.to_array());
    Ok((x, PhaseReport::new("pinned", &rep)))
}

/// Final solve with every unknown free, then restitution and flags.
pub fn phase3_refine(
    obs: &ObservationSet,
    warm: &[f64],
    t_c: f64,
    config: &SolveConfig,
    mut phases: Vec<PhaseReport>,
) -> Result<SolutionRecord> {
    let p = problem(obs, t_c, PhaseMask::FULL, false, config)?;
    let rep = minimize(&p, warm, &free_mask(true, true), &config.lm_final());
    phases.push(PhaseReport::new("free", &rep));
    let dims = [obs.bodies[0].dims, obs.bodies[1].dims];
    let restitution = compute_restitution(&rep.x, obs.fps, dims).ok();
    let m = rep.x[L::MASS_RATIO];
    let flags = Flags::evaluate(Some(m), restitution, &phases, config.mass_ratio_bounds);
    Ok(SolutionRecord {
        kind: SolutionKind::TwoBody,
        fps: obs.fps,
        t_c,
        substep: config.substep,
        mass_ratio: Some(m),
        restitution,
        block_norms: p.block_norms(&rep.x),
        unknowns: rep.x,
        flags,
        phases,
        observations: obs.clone(),
    })
}

/// Wraps a known two-body unknown vector, e.g. a ground truth, as a record
/// without solving.
pub fn record_from_unknowns(
    obs: &ObservationSet,
    t_c: f64,
    unknowns: Vec<f64>,
    config: &SolveConfig,
) -> Result<SolutionRecord> {
    obs.validate()?;
    if obs.bodies.len() != 2 || unknowns.len() != L::LEN {
        return Err(Error::InvalidArgument("a two-body record needs 2 bodies and a full unknown vector".into()));
    }
    let p = problem(obs, t_c, PhaseMask::FULL, false, config)?;
    let dims = [obs.bodies[0].dims, obs.bodies[1].dims];
    let restitution = compute_restitution(&unknowns, obs.fps, dims).ok();
    let m = unknowns[L::MASS_RATIO];
    Ok(SolutionRecord {
        kind: SolutionKind::TwoBody,
        fps: obs.fps,
        t_c,
        substep: config.substep,
        mass_ratio: Some(m),
        restitution,
        block_norms: p.block_norms(&unknowns),
        flags: Flags::evaluate(Some(m), restitution, &[], config.mass_ratio_bounds),
        unknowns,
        phases: Vec::new(),
        observations: obs.clone(),
    })
}

/// The whole pipeline: screening, pinned solve, free refinement.
pub fn reconstruct(obs: &ObservationSet, config: &SolveConfig) -> Result<SolutionRecord> {
    if obs.bodies.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "two-body reconstruction needs 2 bodies, got {}",
            obs.bodies.len()
        )));
    }
    let s = phase1_select_tc(obs, config)?;
    let (x2, r2) = phase2_solve(obs, &s.x, s.t_c, config)?;
    phase3_refine(obs, &x2, s.t_c, config, vec![s.report, r2])
}
