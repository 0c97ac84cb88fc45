//! Residual terms written once over [`Real`], evaluated on plain values and on
//! dual numbers alike.

use crate::dynamics::{angular_velocity, integrate_samples};
use crate::geom::{Quat, Quatf, Vec3, V3};
use crate::real::Real;
use crate::trajectory::{local_position, local_velocity, yxy_rotation, GRAVITY};

use super::layout::{Body, Segment, SingleBodyLayout as S, UnknownLayout as L};

/// Named view of a two-body unknown vector.
pub(crate) struct TwoBodyVars<T> {
    pub b1: T,
    pub beta_x: T,
    pub beta_y1: T,
    /// `b2`, `b3`, `beta_y0` per segment.
    pub seg: [[T; 3]; 4],
    pub b4: [V3<T>; 2],
    pub k: [V3<T>; 4],
    /// Unit collision poses.
    pub q_c: [Quat<T>; 2],
    pub x_c: V3<T>,
    pub jn: V3<T>,
    pub m: T,
}

fn v3<T: Real>(x: &[T], i: usize) -> V3<T> {
    V3::new(x[i], x[i + 1], x[i + 2])
}

fn quat<T: Real>(x: &[T], i: usize) -> Quat<T> {
    Quat::new(x[i], x[i + 1], x[i + 2], x[i + 3]).normalized()
}

impl<T: Real> TwoBodyVars<T> {
    /// With `pin_collision_point`, `x_c` is the midpoint of the two offsets
    /// and its own slots are ignored.
    pub fn new(x: &[T], pin_collision_point: bool) -> Self {
        let b4 = [v3(x, L::offset(Body::A)), v3(x, L::offset(Body::B))];
        let x_c = if pin_collision_point {
            (b4[0] + b4[1]) * 0.5
        } else {
            v3(x, L::COLLISION_POINT)
        };
        Self {
            b1: x[L::B1],
            beta_x: x[L::BETA_X],
            beta_y1: x[L::BETA_Y1],
            seg: Segment::ALL.map(|s| {
                let i = L::segment(s);
                [x[i], x[i + 1], x[i + 2]]
            }),
            b4,
            k: Segment::ALL.map(|s| v3(x, L::momentum(s))),
            q_c: [quat(x, L::pose(Body::A)), quat(x, L::pose(Body::B))],
            x_c,
            jn: v3(x, L::IMPULSE),
            m: x[L::MASS_RATIO],
        }
    }

    /// Collision-time velocity of a segment, m/s.
    pub fn velocity(&self, s: Segment, fps: f64) -> V3<T> {
        let [b2, b3, by0] = self.seg[s.index()];
        segment_velocity(self.b1, self.beta_x, self.beta_y1, b2, b3, by0, fps)
    }
}

/// Named view of a single-body unknown vector.
pub(crate) struct SingleBodyVars<T> {
    pub b1: T,
    pub beta_x: T,
    pub beta_y1: T,
    pub seg: [[T; 3]; 2],
    pub b4: V3<T>,
    pub k: [V3<T>; 2],
    pub q_c: Quat<T>,
    pub x_c: V3<T>,
    pub j: T,
}

impl<T: Real> SingleBodyVars<T> {
    /// With `pin`, `x_c` is the projection of the offset onto the plane.
    pub fn new(x: &[T], pin: Option<(Vec3, Vec3)>) -> Self {
        let b4 = v3(x, S::OFFSET);
        let x_c = match pin {
            Some((point, n)) => {
                let n = V3::lift(n);
                let d = (b4 - V3::lift(point)).dot(n);
                b4 - n.scale(d)
            }
            None => v3(x, S::COLLISION_POINT),
        };
        let seg = [false, true].map(|post| {
            let i = S::segment(post);
            [x[i], x[i + 1], x[i + 2]]
        });
        Self {
            b1: x[S::B1],
            beta_x: x[S::BETA_X],
            beta_y1: x[S::BETA_Y1],
            seg,
            b4,
            k: [v3(x, S::momentum(false)), v3(x, S::momentum(true))],
            q_c: quat(x, S::POSE),
            x_c,
            j: x[S::IMPULSE],
        }
    }

    pub fn velocity(&self, post: bool, fps: f64) -> V3<T> {
        let [b2, b3, by0] = self.seg[post as usize];
        segment_velocity(self.b1, self.beta_x, self.beta_y1, b2, b3, by0, fps)
    }
}

fn segment_velocity<T: Real>(b1: T, bx: T, by1: T, b2: T, b3: T, by0: T, fps: f64) -> V3<T> {
    yxy_rotation(by0, bx, by1).mul_vec(local_velocity(b1, b2, b3, 0.0)) * fps
}

/// `9.81 − (Rx(βx)·Ry(βy1)·(0, b1·fps², 0))·ŷ`.
pub(crate) fn gravity<T: Real>(b1: T, beta_x: T, fps: f64) -> T {
    -(b1 * (fps * fps) * beta_x.cos()) + GRAVITY
}

/// Linear then angular momentum balance. Moments are taken about the
/// midpoint of the two collision poses so the residual does not depend on
/// where the world origin lies.
pub(crate) fn momentum<T: Real>(v: &TwoBodyVars<T>, fps: f64) -> [T; 6] {
    let va = v.velocity(Segment::APre, fps);
    let va2 = v.velocity(Segment::APost, fps);
    let vb = v.velocity(Segment::BPre, fps);
    let vb2 = v.velocity(Segment::BPost, fps);
    let lin = va + vb.scale(v.m) - va2 - vb2.scale(v.m);
    let ra = (v.b4[0] - v.b4[1]).scale(T::cst(0.5));
    let rb = -ra;
    let pre = ra.cross(va) + rb.cross(vb.scale(v.m)) + v.k[0] + v.k[2];
    let post = ra.cross(va2) + rb.cross(vb2.scale(v.m)) + v.k[1] + v.k[3];
    let ang = pre - post;
    [lin.x, lin.y, lin.z, ang.x, ang.y, ang.z]
}

/// Per-body velocity and angular-momentum jumps explained by `jn` at `x_c`.
pub(crate) fn impulse<T: Real>(v: &TwoBodyVars<T>, fps: f64) -> [T; 12] {
    let va = v.velocity(Segment::APre, fps);
    let va2 = v.velocity(Segment::APost, fps);
    let vb = v.velocity(Segment::BPre, fps);
    let vb2 = v.velocity(Segment::BPost, fps);
    let ra = v.x_c - v.b4[0];
    let rb = v.x_c - v.b4[1];
    let e1 = va2 - va - v.jn;
    let inv_m = T::one() / v.m;
    let e2 = vb2 - vb + v.jn.scale(inv_m);
    let e3 = v.k[1] - v.k[0] - ra.cross(v.jn);
    let e4 = v.k[3] - v.k[2] + rb.cross(v.jn);
    [
        e1.x, e1.y, e1.z, e2.x, e2.y, e2.z, e3.x, e3.y, e3.z, e4.x, e4.y, e4.z,
    ]
}

/// Single body against an immovable partner: impulse `j·n` with fixed `n`.
pub(crate) fn impulse_static<T: Real>(v: &SingleBodyVars<T>, n: Vec3, fps: f64) -> [T; 6] {
    let jn = V3::lift(n).scale(v.j);
    let e1 = v.velocity(true, fps) - v.velocity(false, fps) - jn;
    let e2 = v.k[1] - v.k[0] - (v.x_c - v.b4).cross(jn);
    [e1.x, e1.y, e1.z, e2.x, e2.y, e2.z]
}

/// Position of a segment `t` frames after the collision. `p` holds
/// `b1, βx, βy1, b2, b3, βy0, b4`.
pub(crate) fn position<T: Real>(p: &[T; 9], t: f64) -> V3<T> {
    let r = yxy_rotation(p[5], p[1], p[2]);
    r.mul_vec(local_position(p[0], p[3], p[4], t)) + V3::new(p[6], p[7], p[8])
}

/// Integrated poses at `spans` (sorted by magnitude) from the collision pose
/// `p[0..4]` with momentum `p[4..7]`. `p[7]` scales the inertia when
/// `mass_scaled`.
pub(crate) fn orientations<T: Real>(
    p: &[T; 8],
    mass_scaled: bool,
    inv_inertia_unit: Vec3,
    spans: &[f64],
    substep: f64,
    fps: f64,
) -> Vec<Quat<T>> {
    let q0 = quat(p, 0);
    let k = v3(p, 4);
    let mut inv = V3::lift(inv_inertia_unit);
    if mass_scaled {
        inv = inv.scale(T::one() / p[7]);
    }
    integrate_samples(q0, k, inv, spans, substep, fps)
}

/// Quaternion difference with the target sign-aligned to `q`.
pub(crate) fn quat_residual<T: Real>(q: Quat<T>, target: Quatf) -> [T; 4] {
    let t = if q.re().dot(target) < 0.0 { target.scale(-1.0) } else { target };
    (q - Quat::lift(t)).to_array()
}

/// Restitution from collision-point velocities along `n`.
pub(crate) fn restitution_from(pre_rel: f64, post_rel: f64) -> Option<f64> {
    if pre_rel.abs() < 1e-12 || !pre_rel.is_finite() || !post_rel.is_finite() {
        return None;
    }
    Some(-post_rel / pre_rel)
}

/// Velocity of the material point at `x_c` of a body at its collision pose.
pub(crate) fn contact_point_velocity(
    v: Vec3,
    q_c: Quatf,
    k: Vec3,
    inv_inertia: Vec3,
    b4: Vec3,
    x_c: Vec3,
) -> Vec3 {
    v + angular_velocity(q_c, inv_inertia, k).cross(x_c - b4)
}
