//! Authoring new scenes from reconstructed collisions: placement under the
//! transforms that keep gravity fixed, time offsets, auto-timing, and forward
//! prediction of collisions between bodies of different reconstructions.

use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_impulse, cuboid_inertia, point_velocity, BodyState, Impulse};
use crate::error::{Error, Result};
use crate::geom::{Mat3, Quatf, Vec3, V3};
use crate::residuals::{Body, Segment, SingleBodyLayout as S, UnknownLayout as L};
use crate::simulator::{ballistic, detect_contact_obb, impulse_magnitude, Anchor};
use crate::solver::{BodyTrack, SolutionKind, SolutionRecord};
use crate::trajectory::{local_position, yxy_rotation};

/// Scan resolution of [`auto_time`], frames.
pub const AUTO_TIME_RESOLUTION: f64 = 0.25;
/// Default time step of [`predict_secondary`], frames.
pub const PREDICTION_STEP: f64 = 0.25;
/// Largest angle between a requested rotation axis and the gravity axis.
const AXIS_TOLERANCE: f64 = 1e-9;

/// A requested rotation. Only rotations about the world gravity axis `y`
/// keep a reconstruction consistent with gravity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle {
    pub axis: Vec3,
    /// Radians, right-handed about `axis`.
    pub angle: f64,
}

impl AxisAngle {
    pub fn about_gravity(angle: f64) -> Self {
        Self { axis: Vec3::Y, angle }
    }

    /// Signed angle about `+y`.
    pub fn gravity_angle(&self) -> Result<f64> {
        if !self.angle.is_finite() {
            return Err(Error::InvalidTransform(format!("rotation angle {} is not finite", self.angle)));
        }
        if self.angle == 0.0 {
            return Ok(0.0);
        }
        let n = self.axis.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidTransform("rotation axis must be a non-zero vector".into()));
        }
        let u = self.axis * (1.0 / n);
        if u.cross(Vec3::Y).norm() > AXIS_TOLERANCE {
            return Err(Error::InvalidTransform(format!(
                "rotation axis ({:.3}, {:.3}, {:.3}) is not the gravity axis",
                u.x, u.y, u.z
            )));
        }
        Ok(self.angle * u.y.signum())
    }
}

/// A reconstruction placed in a composed scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedPair {
    pub record: SolutionRecord,
    /// Applied after the rotation, m.
    pub translation: Vec3,
    /// Radians about `+y`, around the reconstructed collision point.
    pub rotation_about_gravity: f64,
    /// Frames added to every time of the record.
    pub time_offset: f64,
    /// Absolute mass of body a; body b has `reference_mass · m_ba`.
    pub reference_mass: f64,
}

/// Places `record` in a scene. Fails on rotations off the gravity axis.
pub fn place_pair(
    record: SolutionRecord,
    translation: Vec3,
    rotation: AxisAngle,
    time_offset: f64,
    reference_mass: f64,
) -> Result<PlacedPair> {
    let pair = PlacedPair {
        record,
        translation,
        rotation_about_gravity: rotation.gravity_angle()?,
        time_offset,
        reference_mass,
    };
    pair.validate()?;
    Ok(pair)
}

fn rotate_slot(x: &mut [f64], i: usize, r: &Mat3<f64>) {
    let v = r.mul_vec(V3::new(x[i], x[i + 1], x[i + 2]));
    x[i..i + 3].copy_from_slice(&v.to_array());
}

impl PlacedPair {
    pub fn validate(&self) -> Result<()> {
        self.record.validate()?;
        if !self.translation.is_finite() {
            return Err(Error::InvalidTransform("translation must be finite".into()));
        }
        if !self.rotation_about_gravity.is_finite() || !self.time_offset.is_finite() {
            return Err(Error::InvalidTransform("rotation and time offset must be finite".into()));
        }
        if !(self.reference_mass > 0.0) || !self.reference_mass.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "reference mass must be positive, got {}",
                self.reference_mass
            )));
        }
        Ok(())
    }

    /// Fixed point of the rotation: the reconstructed collision point.
    pub fn pivot(&self) -> Vec3 {
        self.record.collision_point()
    }

    fn matrix(&self) -> Mat3<f64> {
        Mat3::rot_y(self.rotation_about_gravity)
    }

    fn quat(&self) -> Quatf {
        Quatf::from_axis_angle(Vec3::Y, self.rotation_about_gravity)
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        if self.rotation_about_gravity == 0.0 {
            return p + self.translation;
        }
        let c = self.pivot();
        c + self.matrix().mul_vec(p - c) + self.translation
    }

    pub fn transform_vector(&self, v: Vec3) -> Vec3 {
        if self.rotation_about_gravity == 0.0 {
            return v;
        }
        self.matrix().mul_vec(v)
    }

    pub fn transform_orientation(&self, q: Quatf) -> Quatf {
        if self.rotation_about_gravity == 0.0 {
            return q;
        }
        self.quat() * q
    }

    /// Collision frame in scene time.
    pub fn event_frame(&self) -> f64 {
        self.record.t_c + self.time_offset
    }

    pub fn body_count(&self) -> usize {
        self.record.observations.bodies.len()
    }

    /// Absolute masses of the pair's bodies.
    pub fn masses(&self) -> Vec<f64> {
        let m = self.record.mass_ratio.unwrap_or(1.0);
        let rel = if self.record.is_single_body() { vec![1.0] } else { vec![1.0, m] };
        rel.into_iter().map(|r| r * self.reference_mass).collect()
    }

    /// The record expressed in scene space and scene time.
    pub fn placed_record(&self) -> SolutionRecord {
        let mut r = self.record.clone();
        let theta = self.rotation_about_gravity;
        let rot = self.matrix();
        let q_rot = self.quat();
        let x = &mut r.unknowns;
        let affine = |x: &mut [f64], i: usize| {
            let p = self.transform_point(V3::new(x[i], x[i + 1], x[i + 2]));
            x[i..i + 3].copy_from_slice(&p.to_array());
        };
        let pose = |x: &mut [f64], i: usize| {
            if theta != 0.0 {
                let q = q_rot * Quatf::new(x[i], x[i + 1], x[i + 2], x[i + 3]);
                x[i..i + 4].copy_from_slice(&q.to_array());
            }
        };
        match &mut r.kind {
            SolutionKind::TwoBody => {
                for s in Segment::ALL {
                    x[L::segment(s) + 2] += theta;
                    if theta != 0.0 {
                        rotate_slot(x, L::momentum(s), &rot);
                    }
                }
                for b in Body::BOTH {
                    affine(x, L::offset(b));
                    pose(x, L::pose(b));
                }
                affine(x, L::COLLISION_POINT);
                if theta != 0.0 {
                    rotate_slot(x, L::IMPULSE, &rot);
                }
            }
            SolutionKind::SingleBody { plane } => {
                for post in [false, true] {
                    x[S::segment(post) + 2] += theta;
                    if theta != 0.0 {
                        rotate_slot(x, S::momentum(post), &rot);
                    }
                }
                affine(x, S::OFFSET);
                pose(x, S::POSE);
                affine(x, S::COLLISION_POINT);
                plane.point = self.transform_point(plane.point);
                plane.normal = self.transform_vector(plane.normal);
            }
        }
        r.t_c += self.time_offset;
        for b in &mut r.observations.bodies {
            for o in &mut b.observations {
                o.frame += self.time_offset;
                o.p = self.transform_point(o.p);
                o.q = self.transform_orientation(o.q);
            }
        }
        r
    }

    pub fn tracks(&self) -> Vec<BodyTrack> {
        self.placed_record().tracks()
    }

    /// Absolute state of `body` at a scene frame.
    pub fn state(&self, body: usize, frame: f64) -> Result<BodyState> {
        let track = &self.tracks()[body];
        absolute_state(track, track.state(frame)?, self.reference_mass)
    }
}

fn absolute_state(track: &BodyTrack, s: BodyState, reference_mass: f64) -> Result<BodyState> {
    let mass = s.mass * reference_mass;
    Ok(BodyState {
        k: s.k * reference_mass,
        mass,
        inertia0: cuboid_inertia(track.dims, mass)?,
        ..s
    })
}

/// A parabola piece with its frame range, in scene time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedSegment {
    rot: Mat3<f64>,
    b: [f64; 3],
    offset: Vec3,
    t_c: f64,
    pub range: (f64, f64),
    /// Half-diagonal of the body, m.
    pub radius: f64,
}

impl TimedSegment {
    /// Side `post` of `track`, valid over that side's annotated range.
    pub fn of(track: &BodyTrack, post: bool) -> Self {
        let seg = track.segments[post as usize];
        let range = if post { (track.t_c, track.frames.1) } else { (track.frames.0, track.t_c) };
        Self {
            rot: yxy_rotation(seg.beta_y0, track.gauge.beta_x, track.gauge.beta_y1),
            b: [track.gauge.b1, seg.b2, seg.b3],
            offset: track.offset,
            t_c: track.t_c,
            range,
            radius: 0.5 * track.dims.norm(),
        }
    }

    pub fn position(&self, frame: f64) -> Vec3 {
        self.rot.mul_vec(local_position(self.b[0], self.b[1], self.b[2], frame - self.t_c)) + self.offset
    }

    /// The same piece `shift` frames later.
    pub fn shifted(&self, shift: f64) -> Self {
        Self { t_c: self.t_c + shift, range: (self.range.0 + shift, self.range.1 + shift), ..*self }
    }
}

/// Result of [`auto_time`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoTiming {
    /// Frames to add to the late piece's time offset.
    pub shift: f64,
    /// Closest approach at `shift`, m.
    pub distance: f64,
    /// Scene frame of the closest approach.
    pub frame: f64,
    /// Contact threshold: the summed half-diagonals.
    pub threshold: f64,
    /// `distance <= threshold`; otherwise the shift is only the best found.
    pub coincident: bool,
}

/// Closest approach of two pieces over the overlap of their ranges, as
/// `(distance, frame)`. `None` when the ranges do not overlap.
pub fn closest_approach(a: &TimedSegment, b: &TimedSegment) -> Option<(f64, f64)> {
    let lo = a.range.0.max(b.range.0);
    let hi = a.range.1.min(b.range.1);
    if !(lo <= hi) {
        return None;
    }
    let d = |f: f64| (a.position(f) - b.position(f)).norm();
    let n = ((hi - lo) / AUTO_TIME_RESOLUTION).ceil().max(1.0) as usize;
    let grid = |i: usize| (lo + i as f64 * AUTO_TIME_RESOLUTION).min(hi);
    let (mut best_f, mut best) = (lo, d(lo));
    for i in 1..=n {
        let f = grid(i);
        let v = d(f);
        if v < best {
            (best_f, best) = (f, v);
        }
    }
    // Golden-section search on the cells next to the grid minimum.
    let (mut x0, mut x1) = ((best_f - AUTO_TIME_RESOLUTION).max(lo), (best_f + AUTO_TIME_RESOLUTION).min(hi));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = x1 - phi * (x1 - x0);
        let m2 = x0 + phi * (x1 - x0);
        if d(m1) < d(m2) {
            x1 = m2;
        } else {
            x0 = m1;
        }
    }
    let f = 0.5 * (x0 + x1);
    let v = d(f);
    Some(if v < best { (v, f) } else { (best, best_f) })
}

/// Shift of `late` that brings it closest to `early`: a scan at
/// [`AUTO_TIME_RESOLUTION`] over every shift with overlapping ranges,
/// then a parabolic refinement around the best sample.
pub fn auto_time_segments(early: &TimedSegment, late: &TimedSegment) -> Result<AutoTiming> {
    let lo = early.range.0 - late.range.1;
    let hi = early.range.1 - late.range.0;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("segment ranges are empty".into()));
    }
    let eval = |s: f64| closest_approach(early, &late.shifted(s)).unwrap_or((f64::INFINITY, f64::NAN));
    let n = ((hi - lo) / AUTO_TIME_RESOLUTION).floor() as usize;
    let mut samples: Vec<f64> = (0..=n).map(|i| lo + i as f64 * AUTO_TIME_RESOLUTION).collect();
    if samples.last().is_some_and(|&s| s < hi) {
        samples.push(hi);
    }
    // Zero shift leads when it ties, so an aligned pair stays put.
    if lo <= 0.0 && 0.0 <= hi {
        samples.insert(0, 0.0);
    }
    let values: Vec<(f64, f64)> = samples.iter().map(|&s| eval(s)).collect();
    let mut k = 0;
    for i in 1..samples.len() {
        if values[i].0 < values[k].0 {
            k = i;
        }
    }
    let (mut shift, (mut distance, mut frame)) = (samples[k], values[k]);
    let s0 = shift;
    let (sl, sr) = (s0 - AUTO_TIME_RESOLUTION, s0 + AUTO_TIME_RESOLUTION);
    if sl >= lo && sr <= hi {
        let (dl, d0, dr) = (eval(sl).0, distance, eval(sr).0);
        let curvature = dl - 2.0 * d0 + dr;
        if curvature > 0.0 {
            let s = (s0 + 0.5 * AUTO_TIME_RESOLUTION * (dl - dr) / curvature).clamp(sl, sr);
            let v = eval(s);
            if v.0 < distance {
                (shift, distance, frame) = (s, v.0, v.1);
            }
        }
    }
    let threshold = early.radius + late.radius;
    Ok(AutoTiming { shift, distance, frame, threshold, coincident: distance <= threshold })
}

/// Auto-timing of two placed pairs: `early_body`'s post-collision piece
/// against `late_body`'s pre-collision piece.
pub fn auto_time(early: &PlacedPair, early_body: usize, late: &PlacedPair, late_body: usize) -> Result<AutoTiming> {
    let e = early.tracks();
    let l = late.tracks();
    let get = |t: &[BodyTrack], i: usize| {
        t.get(i).cloned().ok_or_else(|| Error::InvalidArgument(format!("body index {i} out of range")))
    };
    auto_time_segments(&TimedSegment::of(&get(&e, early_body)?, true), &TimedSegment::of(&get(&l, late_body)?, false))
}

/// A body of a composed scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BodyRef {
    pub pair: usize,
    pub body: usize,
}

/// A collision between bodies of different pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedEvent {
    pub frame: f64,
    pub bodies: [BodyRef; 2],
    pub x_c: Vec3,
    /// Impulse on the first body; the second receives `-jn`.
    pub jn: Vec3,
    pub restitution: f64,
    pub depth: f64,
    /// Absolute states just before and after.
    pub pre: [BodyState; 2],
    pub post: [BodyState; 2],
}

/// Predicted motion of one body: the reconstructed trajectory until the
/// first predicted event, free flight from each anchor after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyPlayback {
    pub body: BodyRef,
    pub anchors: Vec<Anchor>,
    /// Free-flight acceleration, m/s².
    pub gravity: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneComposition {
    pub pairs: Vec<PlacedPair>,
    /// Scene frame range; the union of the pairs' annotated ranges if unset.
    #[serde(default)]
    pub range: Option<(f64, f64)>,
    #[serde(default)]
    pub predicted_events: Vec<PredictedEvent>,
    #[serde(default)]
    pub playback: Vec<BodyPlayback>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SceneComposition {
    pub fn new(pairs: Vec<PlacedPair>) -> Result<Self> {
        let c = Self { pairs, range: None, predicted_events: Vec::new(), playback: Vec::new(), warnings: Vec::new() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.pairs {
            p.validate()?;
        }
        if let Some(fps) = self.pairs.first().map(|p| p.record.fps) {
            if self.pairs.iter().any(|p| p.record.fps != fps) {
                return Err(Error::InvalidArgument("all pairs of a scene must share one frame rate".into()));
            }
        }
        if let Some((a, b)) = self.range {
            if !(a <= b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidArgument(format!("invalid scene range ({a}, {b})")));
            }
        }
        Ok(())
    }

    pub fn fps(&self) -> Option<f64> {
        self.pairs.first().map(|p| p.record.fps)
    }

    pub fn frame_range(&self) -> Option<(f64, f64)> {
        self.range.or_else(|| {
            self.pairs
                .iter()
                .map(|p| {
                    let (a, b) = p.record.frame_range();
                    (a + p.time_offset, b + p.time_offset)
                })
                .reduce(|x, y| (x.0.min(y.0), x.1.max(y.1)))
        })
    }

    pub fn bodies(&self) -> Vec<BodyRef> {
        self.pairs
            .iter()
            .enumerate()
            .flat_map(|(pair, p)| (0..p.body_count()).map(move |body| BodyRef { pair, body }))
            .collect()
    }

    /// Drops prediction results, e.g. after an edit.
    pub fn clear_prediction(&mut self) {
        self.predicted_events.clear();
        self.playback.clear();
        self.warnings.clear();
    }
}

struct Sim {
    body: BodyRef,
    track: BodyTrack,
    reference_mass: f64,
    event_frame: f64,
    dims: Vec3,
    gravity: Vec3,
    anchors: Vec<Anchor>,
}

impl Sim {
    fn state(&self, frame: f64) -> Result<BodyState> {
        match self.anchors.last() {
            Some(a) => ballistic(&a.state, self.gravity, frame - a.frame, self.track.substep, self.track.gauge.fps),
            None => absolute_state(&self.track, self.track.state(frame)?, self.reference_mass),
        }
    }
}

/// Acceleration of the post-collision piece of a track, m/s².
fn post_gravity(track: &BodyTrack) -> Vec3 {
    let seg = track.segments[1];
    let r = yxy_rotation(seg.beta_y0, track.gauge.beta_x, track.gauge.beta_y1);
    r.mul_vec(V3::new(0.0, -track.gauge.b1, 0.0)) * (track.gauge.fps * track.gauge.fps)
}

/// Steps the scene at `step` frames. A body is contact-active once its own
/// reconstructed event is behind it; active bodies of different pairs that
/// overlap and approach exchange an impulse with the geometric mean of the
/// two pairs' restitutions.
pub fn predict_secondary_with_step(composition: &SceneComposition, step: f64) -> Result<SceneComposition> {
    composition.validate()?;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("prediction step must be positive, got {step}")));
    }
    let mut out = composition.clone();
    out.clear_prediction();
    let Some((start, end)) = composition.frame_range() else {
        return Ok(out);
    };
    let mut sims = Vec::new();
    for (i, p) in composition.pairs.iter().enumerate() {
        for (b, track) in p.tracks().into_iter().enumerate() {
            sims.push(Sim {
                body: BodyRef { pair: i, body: b },
                reference_mass: p.reference_mass,
                event_frame: p.event_frame(),
                dims: track.dims,
                gravity: post_gravity(&track),
                track,
                anchors: Vec::new(),
            });
        }
    }
    let restitution = |i: usize| composition.pairs[i].record.restitution.unwrap_or(0.0).clamp(0.0, 1.0);
    for p in composition.pairs.iter().filter(|p| p.record.restitution.is_none()) {
        out.warnings.push(format!("pair with undefined restitution at frame {} treated as plastic", p.event_frame()));
    }
    let n = ((end - start) / step).floor() as usize;
    for s in 0..=n {
        let frame = start + s as f64 * step;
        for i in 0..sims.len() {
            for j in i + 1..sims.len() {
                let (a, b) = (&sims[i], &sims[j]);
                if a.body.pair == b.body.pair || frame <= a.event_frame || frame <= b.event_frame {
                    continue;
                }
                let (sa, sb) = (a.state(frame)?, b.state(frame)?);
                let Some(contact) = detect_contact_obb(&sa, a.dims, &sb, b.dims) else { continue };
                let closing = (point_velocity(&sa, contact.x_c) - point_velocity(&sb, contact.x_c)).dot(contact.n);
                if closing >= 0.0 {
                    continue;
                }
                let c = (restitution(a.body.pair) * restitution(b.body.pair)).sqrt();
                let j_mag = impulse_magnitude(&sa, &sb, contact.n, contact.x_c, c)?;
                let imp = Impulse { jn: contact.n * j_mag, x_c: contact.x_c };
                let (pa, pb) = apply_impulse(&sa, &sb, &imp);
                let half_min = |d: Vec3| 0.5 * d.x.min(d.y).min(d.z);
                if contact.depth > half_min(a.dims).min(half_min(b.dims)) {
                    out.warnings.push(format!(
                        "possible tunneling at frame {frame}: penetration {:.3} m before the contact was seen",
                        contact.depth
                    ));
                }
                out.predicted_events.push(PredictedEvent {
                    frame,
                    bodies: [a.body, b.body],
                    x_c: contact.x_c,
                    jn: imp.jn,
                    restitution: c,
                    depth: contact.depth,
                    pre: [sa, sb],
                    post: [pa, pb],
                });
                sims[i].anchors.push(Anchor { frame, state: pa });
                sims[j].anchors.push(Anchor { frame, state: pb });
            }
        }
    }
    out.playback = sims
        .into_iter()
        .map(|s| BodyPlayback { body: s.body, anchors: s.anchors, gravity: s.gravity })
        .collect();
    Ok(out)
}

pub fn predict_secondary(composition: &SceneComposition) -> Result<SceneComposition> {
    predict_secondary_with_step(composition, PREDICTION_STEP)
}

/// One exported sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: f64,
    pub p: Vec3,
    pub q: Quatf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeTrack {
    pub body: BodyRef,
    pub name: String,
    pub dims: Vec3,
    pub mass: f64,
    pub keyframes: Vec<Keyframe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeDocument {
    /// Playback rate of the samples.
    pub fps: f64,
    /// Frame rate of the scene's frame numbers.
    pub scene_fps: Option<f64>,
    pub range: Option<(f64, f64)>,
    pub tracks: Vec<KeyframeTrack>,
}

/// Samples every body at `fps` over the scene range, following the
/// prediction where there is one and the reconstructions elsewhere.
pub fn export_keyframes(composition: &SceneComposition, fps: f64) -> Result<KeyframeDocument> {
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(Error::InvalidArgument(format!("keyframe rate must be positive, got {fps}")));
    }
    composition.validate()?;
    let (Some(scene_fps), Some((start, end))) = (composition.fps(), composition.frame_range()) else {
        return Ok(KeyframeDocument { fps, scene_fps: None, range: None, tracks: Vec::new() });
    };
    let step = scene_fps / fps;
    let n = ((end - start) / step + 1e-9).floor() as usize;
    let mut tracks = Vec::new();
    for (i, p) in composition.pairs.iter().enumerate() {
        let masses = p.masses();
        for (b, track) in p.tracks().into_iter().enumerate() {
            let body = BodyRef { pair: i, body: b };
            let playback = composition.playback.iter().find(|pb| pb.body == body);
            let keyframes = (0..=n)
                .map(|s| {
                    let frame = start + s as f64 * step;
                    let anchor = playback.and_then(|pb| pb.anchors.iter().rev().find(|a| a.frame <= frame).map(|a| (a, pb)));
                    let (pos, q) = match anchor {
                        Some((a, pb)) => {
                            let st = ballistic(&a.state, pb.gravity, frame - a.frame, track.substep, scene_fps)?;
                            (st.p, st.q)
                        }
                        None => (track.position(frame), track.orientation(frame)?),
                    };
                    Ok(Keyframe { frame, p: pos, q })
                })
                .collect::<Result<Vec<_>>>()?;
            tracks.push(KeyframeTrack { body, name: track.name.clone(), dims: track.dims, mass: masses[b], keyframes });
        }
    }
    Ok(KeyframeDocument { fps, scene_fps: Some(scene_fps), range: Some((start, end)), tracks })
}
