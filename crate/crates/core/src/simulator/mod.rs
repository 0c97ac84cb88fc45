//! Forward rigid-body simulation with closed-form ballistic flight and
//! scripted impulse events. This is the oracle the reconstruction is tested
//! against.

mod contact;
mod scenes;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use contact::{detect_contact_obb, ContactPoint};
pub use scenes::{drop_scene, two_box_scene, DropOptions, TwoBoxOptions};

use crate::dynamics::{
    angular_velocity, apply_impulse, apply_impulse_against_static, integrate_pose, point_velocity, BodyState,
    Impulse, DEFAULT_SUBSTEP,
};
use crate::error::{Error, Result, Side};
use crate::geom::{Quat, Vec3, V3};
use crate::residuals::{
    single_unknowns_from_states, unknowns_from_states, BodyObservations, Observation, ObservationSet, Plane,
};
use crate::trajectory::{GlobalGauge, GRAVITY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimBody {
    pub name: String,
    pub dims: Vec3,
    /// State at the scene's reference frame.
    pub state: BodyState,
}

/// What the first body of a contact hits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partner {
    Body(usize),
    /// An immovable plane through the contact point.
    Static,
}

/// A contact applied at a given frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedContact {
    pub frame: f64,
    pub body: usize,
    pub partner: Partner,
    pub point: Vec3,
    /// Unit normal pointing from the partner towards `body`.
    pub normal: Vec3,
    pub restitution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimScene {
    pub bodies: Vec<SimBody>,
    pub gravity: Vec3,
    pub fps: f64,
    /// Number of frames, starting at frame 0.
    pub duration: usize,
    pub contacts: Vec<ScriptedContact>,
    /// Pose integration substep, frames.
    pub substep: f64,
    /// Frame at which the body states are given. Motion before it is
    /// propagated backward, so no contact may precede it.
    #[serde(default)]
    pub reference_frame: f64,
}

impl SimScene {
    pub fn new(bodies: Vec<SimBody>, fps: f64, duration: usize) -> Self {
        Self {
            bodies,
            gravity: V3::new(0.0, -GRAVITY, 0.0),
            fps,
            duration,
            contacts: Vec::new(),
            substep: DEFAULT_SUBSTEP,
            reference_frame: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.substep > 0.0) {
            return Err(Error::InvalidArgument(format!("substep must be positive, got {}", self.substep)));
        }
        for b in &self.bodies {
            b.state.validate()?;
        }
        for c in &self.contacts {
            if !(0.0..=1.0).contains(&c.restitution) {
                return Err(Error::InvalidArgument(format!("restitution must lie in [0, 1], got {}", c.restitution)));
            }
            if c.body >= self.bodies.len() {
                return Err(Error::InvalidArgument(format!("contact body {} out of range", c.body)));
            }
            if let Partner::Body(p) = c.partner {
                if p >= self.bodies.len() || p == c.body {
                    return Err(Error::InvalidArgument(format!("contact partner {p} invalid")));
                }
            }
            if !(c.frame >= self.reference_frame && c.frame < self.duration as f64) {
                return Err(Error::InvalidArgument(format!("contact frame {} outside the scene", c.frame)));
            }
            if (c.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument("contact normal must be unit length".into()));
            }
        }
        Ok(())
    }
}

/// An applied impulse event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub frame: f64,
    pub body: usize,
    pub partner: Partner,
    pub x_c: Vec3,
    /// Impulse on `body`; the partner receives `-jn`.
    pub jn: Vec3,
    pub restitution: f64,
    /// States of `body` and (if any) the partner just before and after.
    pub pre: Vec<BodyState>,
    pub post: Vec<BodyState>,
}

/// Start of a ballistic piece of one body's motion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub frame: f64,
    pub state: BodyState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub fps: f64,
    pub gravity: Vec3,
    pub substep: f64,
    pub names: Vec<String>,
    pub dims: Vec<Vec3>,
    /// `[frame][body]`.
    pub frames: Vec<Vec<BodyState>>,
    pub events: Vec<CollisionEvent>,
    /// Ballistic pieces per body, sorted by frame.
    pub anchors: Vec<Vec<Anchor>>,
    pub warnings: Vec<String>,
}

/// Ballistic propagation of `s` by `dt_frames`: closed-form position and
/// velocity, integrated pose.
pub fn ballistic(s: &BodyState, gravity: Vec3, dt_frames: f64, substep: f64, fps: f64) -> Result<BodyState> {
    let t = dt_frames / fps;
    let mut out = *s;
    out.p = s.p + s.v * t + gravity * (0.5 * t * t);
    out.v = s.v + gravity * t;
    out.q = integrate_pose(s.q, s.k, s.inertia0, dt_frames, substep, fps)?;
    Ok(out)
}

impl GroundTruth {
    /// State of `body` at a fractional frame. At an event frame the
    /// post-event state is returned.
    pub fn state_at(&self, body: usize, frame: f64) -> Result<BodyState> {
        let list = &self.anchors[body];
        let a = list.iter().rev().find(|a| a.frame <= frame).unwrap_or(&list[0]);
        ballistic(&a.state, self.gravity, frame - a.frame, self.substep, self.fps)
    }

    pub fn first_event(&self) -> Result<&CollisionEvent> {
        self.events
            .first()
            .ok_or_else(|| Error::InvalidArgument("ground truth has no collision event".into()))
    }

    /// Two-body unknown vector at the first event, in the level gauge.
    pub fn unknowns(&self) -> Result<Vec<f64>> {
        let e = self.first_event()?;
        if e.pre.len() != 2 {
            return Err(Error::InvalidArgument("first event is not a two-body collision".into()));
        }
        let imp = Impulse { jn: e.jn, x_c: e.x_c };
        unknowns_from_states(&GlobalGauge::level(self.fps), [&e.pre[0], &e.pre[1]], [&e.post[0], &e.post[1]], &imp)
    }

    /// Single-body unknown vector at the first event.
    pub fn single_unknowns(&self, plane: &Plane) -> Result<Vec<f64>> {
        let e = self.first_event()?;
        let j = e.jn.dot(plane.normal);
        single_unknowns_from_states(&GlobalGauge::level(self.fps), &e.pre[0], &e.post[0], e.x_c, j)
    }

    pub fn mass_ratio(&self) -> Result<f64> {
        let e = self.first_event()?;
        match e.partner {
            Partner::Body(_) => Ok(e.pre[1].mass / e.pre[0].mass),
            Partner::Static => Err(Error::InvalidArgument("static partner has no mass ratio".into())),
        }
    }

    /// Kinetic plus potential energy of all bodies at a frame.
    pub fn energy(&self, frame: usize) -> f64 {
        let up = -self.gravity.normalize();
        let g = self.gravity.norm();
        self.frames[frame]
            .iter()
            .map(|s| s.kinetic_energy() + s.mass * g * s.p.dot(up))
            .sum()
    }
}

/// Magnitude `j` of the impulse `j·n` on `a` (and `-j·n` on `b`) that gives
/// the contact restitution `c`. `n` points from `b` towards `a`.
pub fn impulse_magnitude(a: &BodyState, b: &BodyState, n: Vec3, x_c: Vec3, c: f64) -> Result<f64> {
    let v_rel = (point_velocity(a, x_c) - point_velocity(b, x_c)).dot(n);
    if v_rel >= 0.0 {
        return Err(Error::SeparatingContact(v_rel));
    }
    let ra = x_c - a.p;
    let rb = x_c - b.p;
    let ang = |s: &BodyState, r: Vec3| angular_velocity(s.q, s.inertia0.inverse(), r.cross(n)).cross(r);
    let denom = 1.0 / a.mass + 1.0 / b.mass + n.dot(ang(a, ra) + ang(b, rb));
    Ok(-(1.0 + c) * v_rel / denom)
}

/// [`impulse_magnitude`] against an immovable partner.
pub fn impulse_magnitude_static(a: &BodyState, n: Vec3, x_c: Vec3, c: f64) -> Result<f64> {
    let v_rel = point_velocity(a, x_c).dot(n);
    if v_rel >= 0.0 {
        return Err(Error::SeparatingContact(v_rel));
    }
    let ra = x_c - a.p;
    let denom = 1.0 / a.mass + n.dot(angular_velocity(a.q, a.inertia0.inverse(), ra.cross(n)).cross(ra));
    Ok(-(1.0 + c) * v_rel / denom)
}

/// Applies a contact to the current states, returning the event record.
pub(crate) fn resolve_contact(
    states: &mut [BodyState],
    body: usize,
    partner: Partner,
    point: Vec3,
    normal: Vec3,
    c: f64,
    frame: f64,
) -> Result<CollisionEvent> {
    let a = states[body];
    match partner {
        Partner::Body(p) => {
            let b = states[p];
            let j = impulse_magnitude(&a, &b, normal, point, c)?;
            let imp = Impulse { jn: normal * j, x_c: point };
            let (a2, b2) = apply_impulse(&a, &b, &imp);
            states[body] = a2;
            states[p] = b2;
            Ok(CollisionEvent {
                frame,
                body,
                partner,
                x_c: point,
                jn: imp.jn,
                restitution: c,
                pre: vec![a, b],
                post: vec![a2, b2],
            })
        }
        Partner::Static => {
            let j = impulse_magnitude_static(&a, normal, point, c)?;
            let imp = Impulse { jn: normal * j, x_c: point };
            let a2 = apply_impulse_against_static(&a, &imp);
            states[body] = a2;
            Ok(CollisionEvent {
                frame,
                body,
                partner,
                x_c: point,
                jn: imp.jn,
                restitution: c,
                pre: vec![a],
                post: vec![a2],
            })
        }
    }
}

/// Runs a scene: bodies fly ballistically between scripted contacts, which
/// are resolved with the impulse of the requested restitution. Every pose is
/// integrated outward from the nearest preceding anchor, or backward from the
/// reference state for frames before it.
pub fn simulate(scene: &SimScene) -> Result<GroundTruth> {
    scene.validate()?;
    let mut contacts = scene.contacts.clone();
    contacts.sort_by(|a, b| a.frame.total_cmp(&b.frame));
    let nb = scene.bodies.len();
    let mut anchors: Vec<Vec<Anchor>> = scene
        .bodies
        .iter()
        .map(|b| vec![Anchor { frame: scene.reference_frame, state: b.state }])
        .collect();
    let mut events = Vec::new();
    let mut warnings = Vec::new();
    for c in &contacts {
        let mut states = Vec::with_capacity(nb);
        for list in &anchors {
            let a = list.last().expect("every body has an anchor");
            states.push(ballistic(&a.state, scene.gravity, c.frame - a.frame, scene.substep, scene.fps)?);
        }
        match resolve_contact(&mut states, c.body, c.partner, c.point, c.normal, c.restitution, c.frame) {
            Ok(ev) => {
                for i in [Some(c.body), if let Partner::Body(p) = c.partner { Some(p) } else { None }]
                    .into_iter()
                    .flatten()
                {
                    anchors[i].push(Anchor { frame: c.frame, state: states[i] });
                }
                events.push(ev);
            }
            Err(Error::SeparatingContact(v)) => {
                warnings.push(format!("contact at frame {} skipped: separating ({v:.3e})", c.frame));
            }
            Err(e) => return Err(e),
        }
    }
    let mut gt = GroundTruth {
        fps: scene.fps,
        gravity: scene.gravity,
        substep: scene.substep,
        names: scene.bodies.iter().map(|b| b.name.clone()).collect(),
        dims: scene.bodies.iter().map(|b| b.dims).collect(),
        frames: Vec::with_capacity(scene.duration),
        events,
        anchors,
        warnings,
    };
    for f in 0..scene.duration {
        let row = (0..nb).map(|b| gt.state_at(b, f as f64)).collect::<Result<Vec<_>>>()?;
        gt.frames.push(row);
    }
    Ok(gt)
}

/// Samples the bodies of the first event at `t* ± (gap/2 + k·interval)`,
/// keeping frames inside the scene.
pub fn sample_observations(gt: &GroundTruth, interval: f64, gap: f64) -> Result<ObservationSet> {
    if !(interval >= 1.0) {
        return Err(Error::InvalidArgument(format!("interval must be at least 1, got {interval}")));
    }
    if !(gap >= 0.0) {
        return Err(Error::InvalidArgument(format!("gap must be non-negative, got {gap}")));
    }
    let e = gt.first_event()?;
    let last = (gt.frames.len() as f64) - 1.0;
    let mut frames = Vec::new();
    let mut t = e.frame - gap / 2.0;
    while t >= 0.0 {
        frames.push(t);
        t -= interval;
    }
    frames.reverse();
    let n_pre = frames.len();
    let mut t = e.frame + gap / 2.0;
    // A zero gap would sample the event itself twice.
    if gap == 0.0 {
        t += interval;
    }
    while t <= last {
        frames.push(t);
        t += interval;
    }
    let ids: Vec<usize> = match e.partner {
        Partner::Body(p) => vec![e.body, p],
        Partner::Static => vec![e.body],
    };
    let mut bodies = Vec::new();
    for &id in &ids {
        let name = gt.names[id].clone();
        for (side, n) in [(Side::Pre, n_pre), (Side::Post, frames.len() - n_pre)] {
            if n < 2 {
                return Err(Error::InsufficientData { body: name, side, count: n });
            }
        }
        let observations = frames
            .iter()
            .map(|&f| {
                let s = gt.state_at(id, f)?;
                Ok(Observation { frame: f, p: s.p, q: s.q })
            })
            .collect::<Result<Vec<_>>>()?;
        bodies.push(BodyObservations { name, dims: gt.dims[id], observations });
    }
    Ok(ObservationSet { fps: gt.fps, bodies })
}

/// Perturbs every position coordinate by `U(-level, level)` times the
/// bounding-box diagonal of the observation cloud, and every quaternion
/// coordinate by `U(-level, level)` before renormalizing.
pub fn add_noise(obs: &ObservationSet, level: f64, seed: u64) -> Result<ObservationSet> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {level}")));
    }
    if level == 0.0 {
        return Ok(obs.clone());
    }
    let scale = obs.position_extent();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = obs.clone();
    for b in &mut out.bodies {
        for o in &mut b.observations {
            let mut u = || rng.random_range(-level..=level);
            o.p += V3::new(u(), u(), u()) * scale;
            let q = o.q + Quat::new(u(), u(), u(), u());
            o.q = if q.norm() > 1e-12 { q.normalized() } else { o.q };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::cuboid_inertia;
    use crate::geom::Quatf;

    fn body(p: Vec3, v: Vec3, w: Vec3, mass: f64, dims: Vec3, q: Quatf) -> BodyState {
        let inertia0 = cuboid_inertia(dims, mass).unwrap();
        let k = crate::dynamics::momentum_from_angular_velocity(q, inertia0, w).unwrap();
        BodyState { p, q, v, k, mass, inertia0 }
    }

    fn unit() -> Vec3 {
        V3::new(1.0, 1.0, 1.0)
    }

    #[test]
    fn head_on_elastic_and_plastic() {
        let a = body(V3::new(-0.5, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), Vec3::zero(), 1.0, unit(), Quat::identity());
        let b = body(V3::new(0.5, 0.0, 0.0), V3::new(-1.0, 0.0, 0.0), Vec3::zero(), 1.0, unit(), Quat::identity());
        let n = -Vec3::X;
        assert!((impulse_magnitude(&a, &b, n, Vec3::zero(), 1.0).unwrap() - 2.0).abs() < 1e-12);
        let j = impulse_magnitude(&a, &b, n, Vec3::zero(), 0.0).unwrap();
        assert!((j - 1.0).abs() < 1e-12);
        let (a2, b2) = apply_impulse(&a, &b, &Impulse { jn: n * j, x_c: Vec3::zero() });
        assert!((a2.v - b2.v).dot(n).abs() < 1e-12);
        assert!(matches!(
            impulse_magnitude(&b, &a, n, Vec3::zero(), 1.0),
            Err(Error::SeparatingContact(_))
        ));
    }

    #[test]
    fn free_flight_is_an_exact_parabola() {
        let s = body(V3::new(0.1, 2.0, -0.3), V3::new(1.0, 3.0, 0.5), V3::new(0.0, 1.0, 2.0), 1.0, unit(), Quat::identity());
        let scene = SimScene::new(vec![SimBody { name: "a".into(), dims: unit(), state: s }], 60.0, 90);
        let gt = simulate(&scene).unwrap();
        for f in 0..90 {
            let t = f as f64 / 60.0;
            let p = s.p + s.v * t + V3::new(0.0, -0.5 * 9.81 * t * t, 0.0);
            assert!((gt.frames[f][0].p - p).norm() < 1e-12);
        }
    }

    #[test]
    fn sampling_counts() {
        let scene = two_box_scene(3, &TwoBoxOptions::default()).unwrap();
        let gt = simulate(&scene).unwrap();
        let obs = sample_observations(&gt, 19.0, 38.0).unwrap();
        let frames: Vec<f64> = obs.bodies[0].observations.iter().map(|o| o.frame).collect();
        assert_eq!(frames, vec![7.0, 26.0, 64.0, 83.0]);
        let dense = sample_observations(&gt, 1.0, 2.0).unwrap();
        // Only the collision frame itself is skipped.
        assert_eq!(dense.bodies[0].observations.len(), 89);
        assert!(matches!(sample_observations(&gt, 30.0, 60.0), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn noise_is_bounded_and_reproducible() {
        let scene = two_box_scene(5, &TwoBoxOptions::default()).unwrap();
        let gt = simulate(&scene).unwrap();
        let obs = sample_observations(&gt, 1.0, 2.0).unwrap();
        assert_eq!(add_noise(&obs, 0.0, 1).unwrap(), obs);
        let a = add_noise(&obs, 0.05, 9).unwrap();
        let b = add_noise(&obs, 0.05, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let scale = obs.position_extent();
        for (bo, bn) in obs.bodies.iter().zip(&a.bodies) {
            for (o, n) in bo.observations.iter().zip(&bn.observations) {
                assert!((n.p - o.p).max_abs() <= 0.05 * scale * (1.0 + 1e-12));
                assert!((n.q.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[cfg(test)]
mod oracle_tests {
    use super::*;
    use crate::residuals::{
        compute_restitution, residual_impulse, residual_momentum, PhaseMask, TwoBodyProblem, Weights,
    };

    #[test]
    fn truth_residuals_are_small() {
        for seed in 0..20 {
            let scene = two_box_scene(seed, &TwoBoxOptions::default()).unwrap();
            let gt = simulate(&scene).unwrap();
            let x = gt.unknowns().unwrap();
            for e in residual_momentum(&x, 60.0).into_iter().chain(residual_impulse(&x, 60.0)) {
                assert!(e.abs() < 1e-9);
            }
            let c = compute_restitution(&x, 60.0, [gt.dims[0], gt.dims[1]]).unwrap();
            assert!((c - scene.contacts[0].restitution).abs() < 1e-9);
            let obs = sample_observations(&gt, 1.0, 2.0).unwrap();
            let p = TwoBodyProblem::new(&obs, 45.0, Weights::default(), PhaseMask::FULL, 0.25, false).unwrap();
            let n = p.block_norms(&x);
            assert!(n.position < 1e-9 && n.orientation < 1e-9, "{n:?}");
        }
    }
}
