use serde::{Deserialize, Serialize};

use crate::dynamics::{cuboid_inertia, integrate_pose, BodyState, Impulse};
use crate::error::{Error, Result};
use crate::geom::{Quatf, Vec3};
use crate::lm::{LmReport, Termination};
use crate::residuals::{
    slot_vec, Body, BlockNorms, ObservationSet, Plane, Segment, SingleBodyLayout as S, UnknownLayout as L,
};
use crate::trajectory::{eval_parabola, eval_velocity, GlobalGauge, Offset, ParabolaParams};

/// Relative tolerance for "the mass ratio sits on a bound".
pub const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub iterations: usize,
    pub initial_cost: f64,
    pub cost: f64,
    pub termination: Termination,
}

impl PhaseReport {
    pub fn new(name: &str, rep: &LmReport) -> Self {
        Self {
            name: name.into(),
            iterations: rep.iterations,
            initial_cost: rep.initial_cost,
            cost: rep.cost,
            termination: rep.termination,
        }
    }
}

/// Reliability flags. A flagged solution is still complete.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub mass_at_bound: bool,
    /// `c` outside `[0, 1]` or undefined.
    pub restitution_out_of_range: bool,
    /// A post-screening phase hit its iteration cap.
    pub non_converged: bool,
}

impl Flags {
    pub fn evaluate(mass_ratio: Option<f64>, restitution: Option<f64>, phases: &[PhaseReport], bounds: (f64, f64)) -> Self {
        let near = |m: f64, b: f64| (m - b).abs() <= BOUND_TOLERANCE * b;
        Self {
            mass_at_bound: mass_ratio.is_some_and(|m| near(m, bounds.0) || near(m, bounds.1)),
            restitution_out_of_range: !restitution.is_some_and(|c| (0.0..=1.0).contains(&c)),
            non_converged: phases
                .iter()
                .filter(|p| p.name != "screening")
                .any(|p| !p.termination.converged()),
        }
    }

    pub fn any(&self) -> bool {
        self.mass_at_bound || self.restitution_out_of_range || self.non_converged
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SolutionKind {
    TwoBody,
    /// One body against an immovable plane.
    SingleBody { plane: Plane },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub kind: SolutionKind,
    pub fps: f64,
    /// Collision time, frames.
    pub t_c: f64,
    /// Pose integration substep the solve used, frames.
    pub substep: f64,
    /// `m_b / m_a`; absent for a single body.
    pub mass_ratio: Option<f64>,
    /// Absent when the approach velocity along the normal vanishes.
    pub restitution: Option<f64>,
    pub block_norms: BlockNorms,
    pub unknowns: Vec<f64>,
    pub flags: Flags,
    pub phases: Vec<PhaseReport>,
    pub observations: ObservationSet,
}

/// Reconstructed motion of one body. Masses and momenta are relative to
/// body a (or to the single body).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyTrack {
    pub name: String,
    pub dims: Vec3,
    pub mass: f64,
    pub gauge: GlobalGauge,
    pub t_c: f64,
    /// Pre- and post-collision segments.
    pub segments: [ParabolaParams; 2],
    pub offset: Vec3,
    pub q_c: Quatf,
    /// Pre- and post-collision angular momenta.
    pub k: [Vec3; 2],
    /// First and last annotated frame.
    pub frames: (f64, f64),
    pub substep: f64,
}

impl BodyTrack {
    fn side(&self, frame: f64) -> usize {
        (frame > self.t_c) as usize
    }

    pub fn position(&self, frame: f64) -> Vec3 {
        eval_parabola(&self.gauge, &self.segments[self.side(frame)], &Offset(self.offset), frame - self.t_c)
    }

    /// m/s.
    pub fn velocity(&self, frame: f64) -> Vec3 {
        eval_velocity(&self.gauge, &self.segments[self.side(frame)], frame - self.t_c)
    }

    pub fn orientation(&self, frame: f64) -> Result<Quatf> {
        let inertia = cuboid_inertia(self.dims, self.mass)?;
        integrate_pose(self.q_c, self.k[self.side(frame)], inertia, frame - self.t_c, self.substep, self.gauge.fps)
    }

    /// Full state on the segment containing `frame`; at `t_c` itself this is
    /// the pre-collision state.
    pub fn state(&self, frame: f64) -> Result<BodyState> {
        Ok(BodyState {
            p: self.position(frame),
            q: self.orientation(frame)?,
            v: self.velocity(frame),
            k: self.k[self.side(frame)],
            mass: self.mass,
            inertia0: cuboid_inertia(self.dims, self.mass)?,
        })
    }

    /// Post-collision state at `t_c`.
    pub fn post_state(&self) -> Result<BodyState> {
        let mut s = self.state(self.t_c)?;
        s.v = eval_velocity(&self.gauge, &self.segments[1], 0.0);
        s.k = self.k[1];
        Ok(s)
    }
}

fn params(x: &[f64], i: usize) -> ParabolaParams {
    ParabolaParams { b2: x[i], b3: x[i + 1], beta_y0: x[i + 2] }
}

fn quat(x: &[f64], i: usize) -> Quatf {
    Quatf::new(x[i], x[i + 1], x[i + 2], x[i + 3]).normalized()
}

impl SolutionRecord {
    pub fn is_single_body(&self) -> bool {
        matches!(self.kind, SolutionKind::SingleBody { .. })
    }

    fn expected_len(&self) -> usize {
        if self.is_single_body() {
            S::LEN
        } else {
            L::LEN
        }
    }

    /// Structural checks for records read from disk.
    pub fn validate(&self) -> Result<()> {
        self.observations.validate()?;
        let want_bodies = if self.is_single_body() { 1 } else { 2 };
        if self.observations.bodies.len() != want_bodies {
            return Err(Error::Schema {
                path: "observations.bodies".into(),
                message: format!("expected {want_bodies} bodies"),
            });
        }
        if self.unknowns.len() != self.expected_len() {
            return Err(Error::Schema {
                path: "unknowns".into(),
                message: format!("expected {} values, got {}", self.expected_len(), self.unknowns.len()),
            });
        }
        if self.unknowns.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema { path: "unknowns".into(), message: "non-finite value".into() });
        }
        if !(self.substep > 0.0) || (self.fps - self.observations.fps).abs() > 0.0 {
            return Err(Error::Schema { path: "substep".into(), message: "invalid substep or fps".into() });
        }
        if let SolutionKind::SingleBody { plane } = &self.kind {
            plane.validate()?;
        }
        Ok(())
    }

    pub fn gauge(&self) -> GlobalGauge {
        let x = &self.unknowns;
        GlobalGauge { b1: x[L::B1], beta_x: x[L::BETA_X], beta_y1: x[L::BETA_Y1], fps: self.fps }
    }

    pub fn tracks(&self) -> Vec<BodyTrack> {
        let x = &self.unknowns;
        let gauge = self.gauge();
        let frames = |b: usize| {
            let o = &self.observations.bodies[b].observations;
            let lo = o.iter().map(|o| o.frame).fold(f64::INFINITY, f64::min);
            let hi = o.iter().map(|o| o.frame).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let track = |b: usize, mass, segments, offset, q_c, k| BodyTrack {
            name: self.observations.bodies[b].name.clone(),
            dims: self.observations.bodies[b].dims,
            mass,
            gauge,
            t_c: self.t_c,
            segments,
            offset,
            q_c,
            k,
            frames: frames(b),
            substep: self.substep,
        };
        if self.is_single_body() {
            return vec![track(
                0,
                1.0,
                [params(x, S::segment(false)), params(x, S::segment(true))],
                slot_vec(x, S::OFFSET),
                quat(x, S::POSE),
                [slot_vec(x, S::momentum(false)), slot_vec(x, S::momentum(true))],
            )];
        }
        Body::BOTH
            .iter()
            .map(|&b| {
                let (pre, post) = (Segment::of(b, false), Segment::of(b, true));
                track(
                    b.index(),
                    if b == Body::A { 1.0 } else { x[L::MASS_RATIO] },
                    [params(x, L::segment(pre)), params(x, L::segment(post))],
                    slot_vec(x, L::offset(b)),
                    quat(x, L::pose(b)),
                    [slot_vec(x, L::momentum(pre)), slot_vec(x, L::momentum(post))],
                )
            })
            .collect()
    }

    pub fn collision_point(&self) -> Vec3 {
        let i = if self.is_single_body() { S::COLLISION_POINT } else { L::COLLISION_POINT };
        slot_vec(&self.unknowns, i)
    }

    /// Impulse on body a (or on the single body), relative to its mass.
    pub fn impulse(&self) -> Impulse {
        let jn = match &self.kind {
            SolutionKind::TwoBody => slot_vec(&self.unknowns, L::IMPULSE),
            SolutionKind::SingleBody { plane } => plane.normal * self.unknowns[S::IMPULSE],
        };
        Impulse { jn, x_c: self.collision_point() }
    }

    /// Frame range covered by the annotations.
    pub fn frame_range(&self) -> (f64, f64) {
        let f = self.observations.frames();
        (f[0], f[f.len() - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase(name: &str, termination: Termination) -> PhaseReport {
        PhaseReport { name: name.into(), iterations: 1, initial_cost: 1.0, cost: 0.5, termination }
    }

    #[test]
    fn restitution_above_one_is_flagged() {
        let f = Flags::evaluate(Some(1.0), Some(1.2), &[], (1e-5, 10.0));
        assert!(f.restitution_out_of_range && !f.mass_at_bound);
        assert!(Flags::evaluate(Some(1.0), None, &[], (1e-5, 10.0)).restitution_out_of_range);
        assert!(!Flags::evaluate(Some(1.0), Some(0.0), &[], (1e-5, 10.0)).any());
    }

    #[test]
    fn mass_on_either_bound_is_flagged() {
        assert!(Flags::evaluate(Some(10.0), Some(0.5), &[], (1e-5, 10.0)).mass_at_bound);
        assert!(Flags::evaluate(Some(1e-5), Some(0.5), &[], (1e-5, 10.0)).mass_at_bound);
        assert!(!Flags::evaluate(Some(9.99), Some(0.5), &[], (1e-5, 10.0)).mass_at_bound);
        assert!(!Flags::evaluate(None, Some(0.5), &[], (1e-5, 10.0)).mass_at_bound);
    }

    #[test]
    fn screening_cap_is_not_a_failure() {
        let ok = [phase("screening", Termination::MaxIterations), phase("free", Termination::CostConverged)];
        assert!(!Flags::evaluate(Some(1.0), Some(0.5), &ok, (1e-5, 10.0)).non_converged);
        let bad = [phase("screening", Termination::CostConverged), phase("free", Termination::MaxIterations)];
        assert!(Flags::evaluate(Some(1.0), Some(0.5), &bad, (1e-5, 10.0)).non_converged);
    }
}
