//! One body bouncing off an immovable plane: the two-body schedule with the
//! second body's unknowns removed and the impulse along the plane normal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lm::minimize;
use crate::residuals::{
    compute_restitution_single, slot_vec, BodyObservations, ObservationSet, PhaseMask, Plane, SingleBodyLayout as S,
    SingleBodyProblem,
};
use crate::trajectory::{GlobalGauge, ParabolaParams};

use super::init::{default_segment, fit_parabolas, fitted_spins, interpolated_offset, interpolated_spins};
use super::{Flags, InitStrategy, PhaseReport, SolutionKind, SolutionRecord, SolveConfig};

/// Initial single-body unknowns for segment `i`; also returns `t_c`.
pub fn initialize_single(
    body: &BodyObservations,
    fps: f64,
    plane: &Plane,
    i: usize,
    config: &SolveConfig,
) -> Result<(Vec<f64>, f64)> {
    let obs = ObservationSet { fps, bodies: vec![body.clone()] };
    let frames = obs.frames();
    if i + 1 >= frames.len() {
        return Err(Error::InvalidArgument(format!("segment {i} out of range")));
    }
    let t_c = 0.5 * (frames[i] + frames[i + 1]);
    obs.require_sides(t_c)?;
    let gauge = GlobalGauge::level(fps);
    let mut x = vec![0.0; S::LEN];
    x[S::B1] = gauge.b1;
    let (b4, segs, spins, j) = match config.init {
        InitStrategy::Interpolated => {
            let b4 = interpolated_offset(body, t_c);
            let j = ChaCha8Rng::seed_from_u64(config.seed).random_range(0.05..=0.15);
            (b4, [default_segment(fps); 2], interpolated_spins(body, t_c, fps)?, j)
        }
        InitStrategy::Fitted => {
            let fit = fit_parabolas(body, t_c, fps)?;
            let segs = [ParabolaParams::from_velocity(&gauge, fit.v[0])?, ParabolaParams::from_velocity(&gauge, fit.v[1])?];
            let j = (fit.v[1] - fit.v[0]).dot(plane.normal);
            let spins = fitted_spins(body, t_c, fps, config.substep, 1.0, plane.normal * j)?;
            (fit.b4, segs, spins, j)
        }
    };
    for post in [false, true] {
        let seg = segs[post as usize];
        let i = S::segment(post);
        x[i..i + 3].copy_from_slice(&[seg.b2, seg.b3, seg.beta_y0]);
        let m = S::momentum(post);
        x[m..m + 3].copy_from_slice(&spins.k[post as usize].to_array());
    }
    x[S::OFFSET..S::OFFSET + 3].copy_from_slice(&b4.to_array());
    x[S::POSE..S::POSE + 4].copy_from_slice(&spins.q_c.to_array());
    x[S::COLLISION_POINT..S::COLLISION_POINT + 3].copy_from_slice(&plane.project(b4).to_array());
    x[S::IMPULSE] = j;
    Ok((x, t_c))
}

fn problem(
    body: &BodyObservations,
    fps: f64,
    plane: Plane,
    t_c: f64,
    mask: PhaseMask,
    pin: bool,
    config: &SolveConfig,
) -> Result<SingleBodyProblem> {
    SingleBodyProblem::new(body, fps, plane, t_c, config.weights, mask, config.substep, pin)
}

fn free_mask(collision_point: bool, impulse: bool) -> Vec<bool> {
    let mut free = vec![true; S::LEN];
    for i in 0..3 {
        free[S::COLLISION_POINT + i] = collision_point;
    }
    free[S::IMPULSE] = impulse;
    free
}

fn plane_distance(x: &[f64], plane: &Plane) -> f64 {
    (slot_vec(x, S::OFFSET) - plane.point).dot(plane.normal).abs()
}

/// Screening picks the segment whose offset lies closest to the plane.
pub fn reconstruct_single_body(obs: &ObservationSet, plane: Plane, config: &SolveConfig) -> Result<SolutionRecord> {
    obs.validate()?;
    config.validate()?;
    plane.validate()?;
    if obs.bodies.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "single-body reconstruction needs 1 body, got {}",
            obs.bodies.len()
        )));
    }
    let body = &obs.bodies[0];
    let fps = obs.fps;
    let segments = super::candidate_segments(obs)?;
    let runs: Vec<_> = segments
        .par_iter()
        .map(|&i| {
            let (x0, t_c) = initialize_single(body, fps, &plane, i, config).ok()?;
            let p = problem(body, fps, plane, t_c, PhaseMask::SCREENING, false, config).ok()?;
            let rep = minimize(&p, &x0, &free_mask(false, false), &config.lm(config.screening_iterations));
            rep.cost.is_finite().then_some((t_c, rep))
        })
        .collect();
    let runs: Vec<_> = runs.into_iter().flatten().collect();
    let Some((t_c, screen)) = super::select(runs, config.screening_cost_slack, |x| plane_distance(x, &plane)) else {
        return Err(Error::NoCollisionFound("every candidate segment diverged".into()));
    };
    let d = plane_distance(&screen.x, &plane);
    let reach = body.dims.norm();
    if d > reach {
        return Err(Error::NoCollisionFound(format!(
            "closest approach {d:.3} m to the plane exceeds the body diagonal ({reach:.3} m)"
        )));
    }
    let mut phases = vec![PhaseReport::new("screening", &screen)];

    let p2 = problem(body, fps, plane, t_c, PhaseMask::FULL, true, config)?;
    let rep2 = minimize(&p2, &screen.x, &free_mask(false, true), &config.lm(config.max_iterations));
    phases.push(PhaseReport::new("pinned", &rep2));
    let mut x2 = rep2.x.clone();
    let x_c = p2.collision_point(&x2);
    x2[S::COLLISION_POINT..S::COLLISION_POINT + 3].copy_from_slice(&x_c.to_array());

    let p3 = problem(body, fps, plane, t_c, PhaseMask::FULL, false, config)?;
    let rep3 = minimize(&p3, &x2, &free_mask(true, true), &config.lm_final());
    phases.push(PhaseReport::new("free", &rep3));
    let restitution = compute_restitution_single(&rep3.x, fps, body.dims, &plane).ok();
    let flags = Flags::evaluate(None, restitution, &phases, config.mass_ratio_bounds);
    Ok(SolutionRecord {
        kind: SolutionKind::SingleBody { plane },
        fps,
        t_c,
        substep: config.substep,
        mass_ratio: None,
        restitution,
        block_norms: p3.block_norms(&rep3.x),
        unknowns: rep3.x,
        flags,
        phases,
        observations: obs.clone(),
    })
}
