//! Least-squares energy terms over the flat unknown vectors.

pub mod layout;
mod observations;
mod problem;
pub(crate) mod terms;

use serde::{Deserialize, Serialize};

pub use layout::{Body, Segment, SingleBodyLayout, UnknownLayout};
pub use observations::{BodyObservations, Observation, ObservationSet};
pub use problem::{SingleBodyProblem, TwoBodyProblem};

use crate::dynamics::{cuboid_inertia, integrate_pose, BodyState, Impulse};
use crate::error::{Error, Result};
use crate::geom::{Quat, Vec3, V3};
use crate::trajectory::{GlobalGauge, ParabolaParams};

use layout::{SingleBodyLayout as S, UnknownLayout as L};
use terms::{SingleBodyVars, TwoBodyVars};

/// Allowed range of the mass ratio `m_b / m_a`.
pub const MASS_RATIO_BOUNDS: (f64, f64) = (1e-5, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub mom: f64,
    pub imp: f64,
    pub g: f64,
    pub pos: f64,
    pub ori: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            mom: 0.1,
            imp: 0.1,
            g: 1.0,
            pos: 4.0,
            ori: 4.0,
        }
    }
}

impl Weights {
    pub fn zero() -> Self {
        Self { mom: 0.0, imp: 0.0, g: 0.0, pos: 0.0, ori: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("mom", self.mom),
            ("imp", self.imp),
            ("g", self.g),
            ("pos", self.pos),
            ("ori", self.ori),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("weight {name} must be non-negative, got {w}")));
            }
        }
        Ok(())
    }
}

/// Which physics blocks are active. Data terms are always active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseMask {
    pub gravity: bool,
    pub momentum: bool,
    pub impulse: bool,
}

impl PhaseMask {
    pub const FULL: PhaseMask = PhaseMask { gravity: true, momentum: true, impulse: true };
    /// Collision-segment screening: no impulse coupling.
    pub const SCREENING: PhaseMask = PhaseMask { gravity: true, momentum: true, impulse: false };
    pub const DATA_ONLY: PhaseMask = PhaseMask { gravity: false, momentum: false, impulse: false };
}

/// Unweighted residual norm of each block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockNorms {
    pub gravity: f64,
    pub momentum: f64,
    pub impulse: f64,
    pub position: f64,
    pub orientation: f64,
}

/// A static plane, given by a point on it and its unit normal pointing into
/// the free side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    pub fn floor() -> Self {
        Self { point: Vec3::zero(), normal: Vec3::Y }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.point.is_finite() || !self.normal.is_finite() || (self.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("plane needs a finite point and a unit normal".into()));
        }
        Ok(())
    }

    pub fn project(&self, p: Vec3) -> Vec3 {
        p - self.normal * (p - self.point).dot(self.normal)
    }
}

pub fn residual_gravity(x: &[f64], fps: f64) -> f64 {
    terms::gravity(x[L::B1], x[L::BETA_X], fps)
}

pub fn residual_momentum(x: &[f64], fps: f64) -> [f64; 6] {
    terms::momentum(&TwoBodyVars::new(x, false), fps)
}

pub fn residual_impulse(x: &[f64], fps: f64) -> [f64; 12] {
    terms::impulse(&TwoBodyVars::new(x, false), fps)
}

/// Deviation of a sample from its body's segment; samples at or before
/// `t_c` belong to the pre-collision segment.
pub fn residual_position(x: &[f64], body: Body, obs: &Observation, t_c: f64) -> Vec3 {
    let seg = L::segment(Segment::of(body, obs.frame > t_c));
    let off = L::offset(body);
    let p = [x[0], x[1], x[2], x[seg], x[seg + 1], x[seg + 2], x[off], x[off + 1], x[off + 2]];
    terms::position(&p, obs.frame - t_c) - obs.p
}

pub fn residual_orientation(
    x: &[f64],
    fps: f64,
    body: Body,
    dims: Vec3,
    obs: &Observation,
    t_c: f64,
    substep: f64,
) -> Result<[f64; 4]> {
    let v = TwoBodyVars::new(x, false);
    let seg = Segment::of(body, obs.frame > t_c);
    let mass = if body == Body::A { 1.0 } else { v.m };
    let inertia = cuboid_inertia(dims, mass)?;
    let q = integrate_pose(v.q_c[body.index()], v.k[seg.index()], inertia, obs.frame - t_c, substep, fps)?;
    Ok(terms::quat_residual(q, obs.q))
}

/// Coefficient of restitution of a two-body solution, from the
/// collision-point velocities along `n = jn/‖jn‖`.
pub fn compute_restitution(x: &[f64], fps: f64, dims: [Vec3; 2]) -> Result<f64> {
    let v = TwoBodyVars::new(x, false);
    let jn_norm = v.jn.norm();
    if !(jn_norm > 1e-12) {
        return Err(Error::UndefinedRestitution(format!("impulse norm {jn_norm:.3e} defines no normal")));
    }
    let n = v.jn * (1.0 / jn_norm);
    let inv = [
        cuboid_inertia(dims[0], 1.0)?.inverse(),
        cuboid_inertia(dims[1], v.m)?.inverse(),
    ];
    let point = |s: Segment| {
        let b = s.body().index();
        terms::contact_point_velocity(v.velocity(s, fps), v.q_c[b], v.k[s.index()], inv[b], v.b4[b], v.x_c)
    };
    let pre = (point(Segment::APre) - point(Segment::BPre)).dot(n);
    let post = (point(Segment::APost) - point(Segment::BPost)).dot(n);
    terms::restitution_from(pre, post)
        .ok_or_else(|| Error::UndefinedRestitution(format!("approach velocity {pre:.3e} along the normal")))
}

/// Restitution of a single body against a static plane.
pub fn compute_restitution_single(x: &[f64], fps: f64, dims: Vec3, plane: &Plane) -> Result<f64> {
    let v = SingleBodyVars::new(x, None);
    let inv = cuboid_inertia(dims, 1.0)?.inverse();
    let n = plane.normal;
    let point = |post: bool| {
        terms::contact_point_velocity(v.velocity(post, fps), v.q_c, v.k[post as usize], inv, v.b4, v.x_c)
    };
    let pre = point(false).dot(n);
    let post = point(true).dot(n);
    terms::restitution_from(pre, post)
        .ok_or_else(|| Error::UndefinedRestitution(format!("approach velocity {pre:.3e} along the normal")))
}

/// Residual vector of a two-body problem at `x`.
pub fn assemble(
    x: &[f64],
    obs: &ObservationSet,
    t_c: f64,
    weights: Weights,
    mask: PhaseMask,
    substep: f64,
) -> Result<Vec<f64>> {
    Ok(TwoBodyProblem::new(obs, t_c, weights, mask, substep, false)?.assemble(x))
}

/// Unknown vector reproducing the collision-time states of a two-body event
/// exactly. Momenta and the impulse are expressed relative to body a's mass.
pub fn unknowns_from_states(
    gauge: &GlobalGauge,
    pre: [&BodyState; 2],
    post: [&BodyState; 2],
    imp: &Impulse,
) -> Result<Vec<f64>> {
    let ma = pre[0].mass;
    let mut x = vec![0.0; L::LEN];
    x[L::B1] = gauge.b1;
    x[L::BETA_X] = gauge.beta_x;
    x[L::BETA_Y1] = gauge.beta_y1;
    for s in Segment::ALL {
        let st = if s.is_post() { post[s.body().index()] } else { pre[s.body().index()] };
        let seg = ParabolaParams::from_velocity(gauge, st.v)?;
        let i = L::segment(s);
        x[i..i + 3].copy_from_slice(&[seg.b2, seg.b3, seg.beta_y0]);
        let m = L::momentum(s);
        x[m..m + 3].copy_from_slice(&(st.k * (1.0 / ma)).to_array());
    }
    for b in Body::BOTH {
        let st = pre[b.index()];
        let o = L::offset(b);
        x[o..o + 3].copy_from_slice(&st.p.to_array());
        let q = L::pose(b);
        x[q..q + 4].copy_from_slice(&st.q.to_array());
    }
    x[L::COLLISION_POINT..L::COLLISION_POINT + 3].copy_from_slice(&imp.x_c.to_array());
    x[L::IMPULSE..L::IMPULSE + 3].copy_from_slice(&(imp.jn * (1.0 / ma)).to_array());
    x[L::MASS_RATIO] = pre[1].mass / ma;
    Ok(x)
}

/// Single-body counterpart of [`unknowns_from_states`]; `j` is the impulse
/// magnitude along the plane normal.
pub fn single_unknowns_from_states(
    gauge: &GlobalGauge,
    pre: &BodyState,
    post: &BodyState,
    x_c: Vec3,
    j: f64,
) -> Result<Vec<f64>> {
    let m = pre.mass;
    let mut x = vec![0.0; S::LEN];
    x[S::B1] = gauge.b1;
    x[S::BETA_X] = gauge.beta_x;
    x[S::BETA_Y1] = gauge.beta_y1;
    for (post_side, st) in [(false, pre), (true, post)] {
        let seg = ParabolaParams::from_velocity(gauge, st.v)?;
        let i = S::segment(post_side);
        x[i..i + 3].copy_from_slice(&[seg.b2, seg.b3, seg.beta_y0]);
        let k = S::momentum(post_side);
        x[k..k + 3].copy_from_slice(&(st.k * (1.0 / m)).to_array());
    }
    x[S::OFFSET..S::OFFSET + 3].copy_from_slice(&pre.p.to_array());
    x[S::POSE..S::POSE + 4].copy_from_slice(&pre.q.to_array());
    x[S::COLLISION_POINT..S::COLLISION_POINT + 3].copy_from_slice(&x_c.to_array());
    x[S::IMPULSE] = j / m;
    Ok(x)
}

/// Body-a-relative collision states encoded in a two-body unknown vector:
/// `(pre, post)` for a then b.
pub fn states_from_unknowns(x: &[f64], fps: f64, dims: [Vec3; 2]) -> Result<([BodyState; 2], [BodyState; 2])> {
    let v = TwoBodyVars::new(x, false);
    let masses = [1.0, v.m];
    let mut pre = Vec::with_capacity(2);
    let mut post = Vec::with_capacity(2);
    for b in Body::BOTH {
        let i = b.index();
        let inertia0 = cuboid_inertia(dims[i], masses[i])?;
        for (out, is_post) in [(&mut pre, false), (&mut post, true)] {
            let s = Segment::of(b, is_post);
            out.push(BodyState {
                p: v.b4[i],
                q: v.q_c[i],
                v: v.velocity(s, fps),
                k: v.k[s.index()],
                mass: masses[i],
                inertia0,
            });
        }
    }
    Ok(([pre[0], pre[1]], [post[0], post[1]]))
}

/// Unit collision pose stored in `x` for `body`.
pub fn collision_pose(x: &[f64], body: Body) -> Quat<f64> {
    let i = L::pose(body);
    Quat::new(x[i], x[i + 1], x[i + 2], x[i + 3]).normalized()
}

pub fn slot_vec(x: &[f64], i: usize) -> Vec3 {
    V3::new(x[i], x[i + 1], x[i + 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{apply_impulse, cuboid_inertia};
    use crate::geom::Quatf;
    use crate::lm::LeastSquares;
    use std::f64::consts::FRAC_PI_2;

    fn state(p: Vec3, v: Vec3, k: Vec3, mass: f64, dims: Vec3, q: Quatf) -> BodyState {
        BodyState { p, q, v, k, mass, inertia0: cuboid_inertia(dims, mass).unwrap() }
    }

    fn dims() -> [Vec3; 2] {
        [V3::new(0.3, 0.2, 0.4), V3::new(0.5, 0.3, 0.25)]
    }

    /// A consistent two-body event built with `apply_impulse`.
    fn event(m: f64) -> (Vec<f64>, [BodyState; 2], [BodyState; 2], Impulse) {
        let d = dims();
        let a = state(
            V3::new(-0.2, 1.0, 0.1),
            V3::new(2.0, 0.5, -0.3),
            V3::new(0.01, -0.02, 0.005),
            1.0,
            d[0],
            Quat::new(0.9, 0.1, 0.3, -0.2).normalized(),
        );
        let b = state(
            V3::new(0.25, 1.05, 0.0),
            V3::new(-1.5, 1.0, 0.2),
            V3::new(-0.03, 0.01, 0.02),
            m,
            d[1],
            Quat::new(0.5, -0.4, 0.2, 0.7).normalized(),
        );
        let imp = Impulse { jn: V3::new(-1.2, 0.15, 0.05), x_c: V3::new(0.03, 1.02, 0.04) };
        let (a2, b2) = apply_impulse(&a, &b, &imp);
        let x = unknowns_from_states(&GlobalGauge::level(60.0), [&a, &b], [&a2, &b2], &imp).unwrap();
        (x, [a, b], [a2, b2], imp)
    }

    #[test]
    fn default_weights() {
        let w = Weights::default();
        assert_eq!((w.mom, w.imp, w.g, w.pos, w.ori), (0.1, 0.1, 1.0, 4.0, 4.0));
    }

    #[test]
    fn gravity_residual_examples() {
        let mut x = vec![0.0; L::LEN];
        x[L::B1] = 9.81 / 3600.0;
        assert!(residual_gravity(&x, 60.0).abs() < 1e-12);
        x[L::BETA_X] = FRAC_PI_2;
        assert!((residual_gravity(&x, 60.0) - 9.81).abs() < 1e-12);
        x[L::BETA_X] = 0.2;
        let r = residual_gravity(&x, 60.0);
        for s in Segment::ALL {
            x[L::segment(s) + 2] = 1.3 + s.index() as f64;
        }
        x[L::BETA_Y1] = 0.0;
        assert_eq!(residual_gravity(&x, 60.0), r);
    }

    #[test]
    fn physics_vanish_on_impulse_event() {
        for m in [0.5, 1.0, 3.7] {
            let (x, ..) = event(m);
            for e in residual_momentum(&x, 60.0).into_iter().chain(residual_impulse(&x, 60.0)) {
                assert!(e.abs() < 1e-9, "m={m}: {e}");
            }
        }
    }

    #[test]
    fn momentum_is_linear_in_post_velocity() {
        let (x, pre, post, _) = event(2.0);
        let base = residual_momentum(&x, 60.0);
        let delta = V3::new(0.1, -0.2, 0.05);
        let mut post_a = post[0];
        post_a.v += delta;
        let imp = Impulse { jn: Vec3::zero(), x_c: Vec3::zero() };
        let x2 = unknowns_from_states(&GlobalGauge::level(60.0), [&pre[0], &pre[1]], [&post_a, &post[1]], &imp).unwrap();
        let r = residual_momentum(&x2, 60.0);
        for c in 0..3 {
            assert!((r[c] - base[c] + delta.to_array()[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_mass_ratio_halves_needed_jump() {
        let (mut x, pre, post, _) = event(1.0);
        let jump = post[1].v - pre[1].v;
        x[L::MASS_RATIO] = 2.0;
        let half = pre[1].v + jump * 0.5;
        let g = GlobalGauge::level(60.0);
        let seg = ParabolaParams::from_velocity(&g, half).unwrap();
        let i = L::segment(Segment::BPost);
        x[i..i + 3].copy_from_slice(&[seg.b2, seg.b3, seg.beta_y0]);
        let r = residual_impulse(&x, 60.0);
        for e in &r[3..6] {
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn restitution_of_elastic_swap_is_one() {
        let d = V3::new(1.0, 1.0, 1.0);
        let q = Quat::identity();
        let a = state(V3::new(-0.5, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), Vec3::zero(), 1.0, d, q);
        let b = state(V3::new(0.5, 0.0, 0.0), V3::new(-1.0, 0.0, 0.0), Vec3::zero(), 1.0, d, q);
        let imp = Impulse { jn: V3::new(-2.0, 0.0, 0.0), x_c: Vec3::zero() };
        let (a2, b2) = apply_impulse(&a, &b, &imp);
        let x = unknowns_from_states(&GlobalGauge::level(30.0), [&a, &b], [&a2, &b2], &imp).unwrap();
        assert!((compute_restitution(&x, 30.0, [d, d]).unwrap() - 1.0).abs() < 1e-12);

        let imp = Impulse { jn: V3::new(-1.0, 0.0, 0.0), x_c: Vec3::zero() };
        let (a2, b2) = apply_impulse(&a, &b, &imp);
        let x = unknowns_from_states(&GlobalGauge::level(30.0), [&a, &b], [&a2, &b2], &imp).unwrap();
        assert!(compute_restitution(&x, 30.0, [d, d]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zero_impulse_has_no_restitution() {
        let (mut x, ..) = event(1.0);
        x[L::IMPULSE..L::IMPULSE + 3].fill(0.0);
        assert!(matches!(compute_restitution(&x, 60.0, dims()), Err(Error::UndefinedRestitution(_))));
    }

    fn observations(x: &[f64]) -> ObservationSet {
        let mut bodies = Vec::new();
        for b in Body::BOTH {
            let mut obs = Vec::new();
            for f in [2.0, 6.0, 9.0, 10.0, 13.0, 17.0] {
                let mut o = Observation { frame: f, p: Vec3::zero(), q: Quat::identity() };
                o.p = residual_position(x, b, &o, 10.0);
                let seg = Segment::of(b, f > 10.0);
                let mass = if b == Body::A { 1.0 } else { x[L::MASS_RATIO] };
                let inertia = cuboid_inertia(dims()[b.index()], mass).unwrap();
                let k = slot_vec(x, L::momentum(seg));
                o.q = integrate_pose(collision_pose(x, b), k, inertia, f - 10.0, 0.25, 60.0).unwrap();
                obs.push(o);
            }
            bodies.push(BodyObservations { name: b.name().into(), dims: dims()[b.index()], observations: obs });
        }
        ObservationSet { fps: 60.0, bodies }
    }

    #[test]
    fn data_terms_vanish_on_generating_unknowns() {
        let (x, ..) = event(1.7);
        let obs = observations(&x);
        let r = assemble(&x, &obs, 10.0, Weights::default(), PhaseMask::FULL, 0.25).unwrap();
        assert_eq!(r.len(), 1 + 6 + 12 + 3 * 12 + 4 * 12);
        assert!(r.iter().all(|e| e.abs() < 1e-9), "{r:?}");
        let zero = assemble(&x, &obs, 10.0, Weights::zero(), PhaseMask::FULL, 0.25).unwrap();
        assert!(zero.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn offset_shift_moves_position_residual() {
        let (mut x, ..) = event(1.0);
        let o = Observation { frame: 4.0, p: V3::new(0.1, 0.2, 0.3), q: Quat::identity() };
        let r0 = residual_position(&x, Body::B, &o, 10.0);
        x[L::offset(Body::B)] += 1.0;
        let r1 = residual_position(&x, Body::B, &o, 10.0);
        assert!((r1 - r0 - V3::X).norm() < 1e-14);
    }

    #[test]
    fn negated_target_gives_same_orientation_residual() {
        let (x, ..) = event(1.0);
        let q = Quat::new(0.6, 0.1, -0.7, 0.2).normalized();
        let o1 = Observation { frame: 3.0, p: Vec3::zero(), q };
        let o2 = Observation { q: q.scale(-1.0), ..o1 };
        let r1 = residual_orientation(&x, 60.0, Body::A, dims()[0], &o1, 10.0, 0.25).unwrap();
        let r2 = residual_orientation(&x, 60.0, Body::A, dims()[0], &o2, 10.0, 0.25).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let (mut x, ..) = event(1.4);
        let obs = observations(&x);
        // Move away from the zero-residual point.
        for (i, v) in x.iter_mut().enumerate() {
            *v += 0.01 * ((i * 7 % 11) as f64 - 5.0) / 5.0;
        }
        for pin in [false, true] {
            let p = TwoBodyProblem::new(&obs, 10.0, Weights::default(), PhaseMask::FULL, 0.25, pin).unwrap();
            let (r, j) = p.jacobian(&x);
            assert_eq!(r, p.assemble(&x));
            for c in 0..L::LEN {
                let h = 1e-6 * x[c].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let rp = p.assemble(&xp);
                let rm = p.assemble(&xm);
                let colmax = (0..r.len()).map(|i| j[(i, c)].abs()).fold(0.0, f64::max);
                for i in 0..r.len() {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    assert!(
                        (fd - j[(i, c)]).abs() <= 1e-4 * colmax.max(1e-6),
                        "pin={pin} row {i} col {c}: {fd} vs {}",
                        j[(i, c)]
                    );
                }
            }
        }
    }
}
