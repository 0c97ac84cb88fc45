use std::f64::consts::TAU;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{cuboid_inertia, integrate_pose, momentum_from_angular_velocity, Inertia};
use crate::error::{Error, Result};
use crate::geom::{Quatf, Vec3, V3};
use crate::residuals::{Body, BodyObservations, ObservationSet, Segment, UnknownLayout as L};
use crate::trajectory::{GlobalGauge, ParabolaParams, GRAVITY};

use super::SolveConfig;

/// How the unknowns are seeded before each solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Fixed default parabolas, unit mass ratio, poses slerped between the
    /// bracketing samples and a seeded random impulse.
    Interpolated,
    /// Free-fall fits for the parabolas, alias-resolved spins and an impulse
    /// and mass ratio from the velocity changes.
    #[default]
    Fitted,
}

/// Default segment coefficients: `b2`, `b3` (per frame) and `beta_y0`.
pub(crate) fn default_segment(fps: f64) -> ParabolaParams {
    ParabolaParams { b2: -0.05, b3: 1.0 / fps, beta_y0: 20f64.to_radians() }
}

/// Indices `i` of the gaps between consecutive sample frames (union over
/// bodies) that leave at least two samples per side for every body.
pub fn candidate_segments(obs: &ObservationSet) -> Result<Vec<usize>> {
    let frames = obs.frames();
    let mut out = Vec::new();
    let mut first_err = None;
    for i in 0..frames.len().saturating_sub(1) {
        match obs.require_sides(0.5 * (frames[i] + frames[i + 1])) {
            Ok(()) => out.push(i),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if out.is_empty() {
        return Err(first_err.unwrap_or_else(|| Error::InvalidArgument("no sample frames".into())));
    }
    Ok(out)
}

/// Bracketing samples of `t_c`: last at or before, first after.
fn bracket(b: &BodyObservations, t_c: f64) -> (usize, usize) {
    let (pre, post) = b.split(t_c);
    (*pre.last().expect("checked sides"), post[0])
}

/// World angular velocity turning `q1` into `q2` over `frames`.
pub(crate) fn finite_difference_spin(q1: Quatf, q2: Quatf, frames: f64, fps: f64) -> Vec3 {
    let dq = q2 * q1.conj();
    dq.log() * (fps / frames)
}

/// Initial pose and per-side angular momenta of one body.
pub(crate) struct SpinGuess {
    pub q_c: Quatf,
    pub k: [Vec3; 2],
}

/// The literal initialization: pose slerped between the bracketing samples,
/// spins from finite differences.
pub(crate) fn interpolated_spins(b: &BodyObservations, t_c: f64, fps: f64) -> Result<SpinGuess> {
    let (lo, hi) = bracket(b, t_c);
    let (o1, o2) = (&b.observations[lo], &b.observations[hi]);
    let s = (t_c - o1.frame) / (o2.frame - o1.frame);
    let q_c = o1.q.slerp(o2.q, s);
    let inertia = cuboid_inertia(b.dims, 1.0)?;
    let pre = &b.observations[lo - 1];
    let post = &b.observations[hi + 1];
    let w_pre = finite_difference_spin(pre.q, o1.q, o1.frame - pre.frame, fps);
    let w_post = finite_difference_spin(o2.q, post.q, post.frame - o2.frame, fps);
    let k = [
        momentum_from_angular_velocity(q_c, inertia, w_pre)?,
        momentum_from_angular_velocity(q_c, inertia, w_post)?,
    ];
    Ok(SpinGuess { q_c, k })
}

/// Offset interpolated between the bracketing samples.
pub(crate) fn interpolated_offset(b: &BodyObservations, t_c: f64) -> Vec3 {
    let (lo, hi) = bracket(b, t_c);
    let (o1, o2) = (&b.observations[lo], &b.observations[hi]);
    let s = (t_c - o1.frame) / (o2.frame - o1.frame);
    o1.p + (o2.p - o1.p) * s
}

/// Free-fall fit of one body: shared offset and both side velocities (m/s).
#[derive(Clone, Copy, Debug)]
pub(crate) struct ParabolaFit {
    pub b4: Vec3,
    pub v: [Vec3; 2],
}

/// Least-squares fit of one free-fall parabola per side under level gravity,
/// sharing the position at `t_c`.
pub(crate) fn fit_parabolas(b: &BodyObservations, t_c: f64, fps: f64) -> Result<ParabolaFit> {
    let n = b.observations.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut y = DMatrix::zeros(n, 3);
    for (i, o) in b.observations.iter().enumerate() {
        let tau = (o.frame - t_c) / fps;
        a[(i, 0)] = 1.0;
        a[(i, if o.frame <= t_c { 1 } else { 2 })] = tau;
        let p = o.p + Vec3::Y * (0.5 * GRAVITY * tau * tau);
        for (c, v) in p.to_array().into_iter().enumerate() {
            y[(i, c)] = v;
        }
    }
    let sol = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("parabola fit failed: {e}")))?;
    let row = |r: usize| V3::new(sol[(r, 0)], sol[(r, 1)], sol[(r, 2)]);
    Ok(ParabolaFit { b4: row(0), v: [row(1), row(2)] })
}

/// Whole turns tried either way when resolving spin aliasing.
const ALIAS_TURNS: i32 = 2;
/// Score penalty per extra turn, rad; breaks ties toward slower spins.
const TURN_PENALTY: f64 = 0.05;
/// Slack on the lever arm bound `‖x_c − b4‖ ≤ half-diagonal`.
const REACH_MARGIN: f64 = 1.1;

/// Spins that reproduce the rotation between two samples up to whole turns.
fn spin_aliases(q1: Quatf, q2: Quatf, frames: f64, fps: f64) -> Vec<(i32, Vec3)> {
    let r = (q2 * q1.conj()).log();
    let theta = r.norm();
    if theta < 1e-9 {
        return vec![(0, Vec3::zero())];
    }
    let axis = r * (1.0 / theta);
    (-ALIAS_TURNS..=ALIAS_TURNS)
        .map(|n| (n, axis * ((theta + TAU * n as f64) * fps / frames)))
        .collect()
}

const NEWTON_ITERATIONS: usize = 20;

/// Damped Newton on `f(v) = 0` in three unknowns with a finite-difference
/// Jacobian. Returns the best iterate, `v0` if nothing improves on it.
fn newton3(v0: Vec3, h: f64, f: impl Fn(Vec3) -> Result<Vec3>) -> Result<Vec3> {
    let mut v = v0;
    let mut r = f(v)?;
    for _ in 0..NEWTON_ITERATIONS {
        if r.norm() < 1e-13 {
            break;
        }
        let mut jac = Matrix3::zeros();
        for c in 0..3 {
            let mut e = [0.0; 3];
            e[c] = h;
            let d = (f(v + Vec3::from_array(e))? - r) * (1.0 / h);
            jac.set_column(c, &Vector3::new(d.x, d.y, d.z));
        }
        let Some(inv) = jac.try_inverse() else { break };
        let step = inv * Vector3::new(r.x, r.y, r.z);
        let step = V3::new(step.x, step.y, step.z);
        let mut improved = None;
        let mut scale = 1.0;
        for _ in 0..6 {
            let vn = v - step * scale;
            let rn = f(vn)?;
            if rn.norm() < r.norm() {
                improved = Some((vn, rn));
                break;
            }
            scale *= 0.5;
        }
        let Some((vn, rn)) = improved else { break };
        v = vn;
        r = rn;
    }
    Ok(v)
}

/// Refines `k` so that integrating `from` over `span` frames lands on `to`.
fn refine_momentum(
    from: Quatf,
    to: Quatf,
    k0: Vec3,
    inertia: Inertia,
    span: f64,
    substep: f64,
    fps: f64,
) -> Result<Vec3> {
    let h = 1e-6 * (k0.norm() + inertia.0.max_abs());
    newton3(k0, h, |k| Ok((to * integrate_pose(from, k, inertia, span, substep, fps)?.conj()).log()))
}

/// Pose at `t_c` that integrates to `q` after `span` frames. The integrator
/// is not exactly reversible, so the backward run only seeds the search.
fn pose_at_collision(q: Quatf, span: f64, k: Vec3, inertia: Inertia, substep: f64, fps: f64) -> Result<Quatf> {
    let q0 = integrate_pose(q, k, inertia, -span, substep, fps)?;
    let at = |d: Vec3| Quatf::from_rotation_vector(d) * q0;
    let d = newton3(Vec3::zero(), 1e-7, |d| Ok((q * integrate_pose(at(d), k, inertia, span, substep, fps)?.conj()).log()))?;
    Ok(at(d).normalized())
}

/// Data-driven spins. Each side's pair of samples nearest `t_c` admits a
/// family of spins differing by whole turns; the chosen pair of candidates
/// must carry both sides to the same pose at `t_c` and change the angular
/// momentum only by a torque `r × jn` with `‖r‖` within the body's reach.
/// `mass` and the impulse `jn` on this body are in units of body a's mass.
pub(crate) fn fitted_spins(
    b: &BodyObservations,
    t_c: f64,
    fps: f64,
    substep: f64,
    mass: f64,
    jn: Vec3,
) -> Result<SpinGuess> {
    let (lo, hi) = bracket(b, t_c);
    let obs = &b.observations;
    let inertia = cuboid_inertia(b.dims, mass)?;
    // Fits a momentum to the sample pair and carries the pose to `t_c`.
    let fit = |near: usize, far: usize, n: i32, k0: Vec3| -> Result<(i32, Vec3, Quatf)> {
        let (o, f) = (&obs[near], &obs[far]);
        let k = refine_momentum(o.q, f.q, k0, inertia, f.frame - o.frame, substep, fps)?;
        Ok((n, k, pose_at_collision(o.q, o.frame - t_c, k, inertia, substep, fps)?))
    };
    let aliases = |near: usize, far: usize| -> Result<Vec<(i32, Vec3, Quatf)>> {
        let (o, f) = (&obs[near], &obs[far]);
        let (q1, q2, frames) = if f.frame < o.frame { (f.q, o.q, o.frame - f.frame) } else { (o.q, f.q, f.frame - o.frame) };
        spin_aliases(q1, q2, frames, fps)
            .into_iter()
            .map(|(n, w)| fit(near, far, n, momentum_from_angular_velocity(o.q, inertia, w)?))
            .collect()
    };
    // A fast spin after the event can wrap past every alias start; seeding
    // from the other side plus a corner torque `r × jn` recovers it.
    let corners: Vec<Vec3> = (0..8)
        .map(|i| {
            let sign = |bit: usize| if i & bit == 0 { -0.5 } else { 0.5 };
            b.dims.hadamard(V3::new(sign(1), sign(2), sign(4)))
        })
        .collect();
    let seeded = |from: &[(i32, Vec3, Quatf)], near: usize, far: usize, sign: f64| -> Result<Vec<(i32, Vec3, Quatf)>> {
        let mut out = Vec::new();
        for (n, k, q) in from {
            for c in &corners {
                out.push(fit(near, far, *n, *k + q.rotate(*c).cross(jn) * sign)?);
            }
        }
        Ok(out)
    };
    let pre_aliases = aliases(lo, lo - 1)?;
    let post_aliases = aliases(hi, hi + 1)?;
    let mut pre = seeded(&post_aliases, lo, lo - 1, -1.0)?;
    let mut post = seeded(&pre_aliases, hi, hi + 1, 1.0)?;
    pre.extend(pre_aliases);
    post.extend(post_aliases);
    let s = (t_c - obs[lo].frame) / (obs[hi].frame - obs[lo].frame);
    // Momentum mismatches become angles over half the bracketing gap.
    let to_angle = 0.5 * (obs[hi].frame - obs[lo].frame) / fps * 3.0 / (inertia.0.x + inertia.0.y + inertia.0.z);
    let jn_norm = jn.norm();
    let j_hat = if jn_norm > 0.0 { jn * (1.0 / jn_norm) } else { Vec3::zero() };
    let reach = REACH_MARGIN * 0.5 * b.dims.norm() * jn_norm;
    let mut best: Option<(f64, SpinGuess)> = None;
    for (np, kp, qp) in &pre {
        for (nq, kq, qq) in &post {
            let dk = *kq - *kp;
            let physics = dk.dot(j_hat).abs() + (dk.norm() - reach).max(0.0);
            let score = qp.angle_to(*qq) + physics * to_angle + TURN_PENALTY * (np.abs() + nq.abs()) as f64;
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, SpinGuess { q_c: qp.slerp(*qq, s), k: [*kp, *kq] }));
            }
        }
    }
    Ok(best.expect("at least one alias per side").1)
}

fn write_segments(x: &mut [f64], b: Body, segs: [ParabolaParams; 2]) {
    for post in [false, true] {
        let seg = segs[post as usize];
        let j = L::segment(Segment::of(b, post));
        x[j..j + 3].copy_from_slice(&[seg.b2, seg.b3, seg.beta_y0]);
    }
}

/// Initial unknowns for the collision segment `i` (between the `i`-th and
/// `i+1`-th distinct sample frames); also returns the midpoint `t_c`.
pub fn initialize(obs: &ObservationSet, i: usize, config: &SolveConfig) -> Result<(Vec<f64>, f64)> {
    if obs.bodies.len() != 2 {
        return Err(Error::InvalidArgument("two-body initialization needs 2 bodies".into()));
    }
    let frames = obs.frames();
    if i + 1 >= frames.len() {
        return Err(Error::InvalidArgument(format!("segment {i} out of range")));
    }
    let t_c = 0.5 * (frames[i] + frames[i + 1]);
    obs.require_sides(t_c)?;
    let fps = obs.fps;
    let gauge = GlobalGauge::level(fps);
    let mut x = vec![0.0; L::LEN];
    x[L::B1] = gauge.b1;
    let body = |b: Body| &obs.bodies[b.index()];
    let (offsets, spins, jn, m) = match config.init {
        InitStrategy::Interpolated => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let jn = V3::new(
                rng.random_range(0.05..=0.15),
                rng.random_range(0.05..=0.15),
                rng.random_range(0.05..=0.15),
            );
            for b in Body::BOTH {
                write_segments(&mut x, b, [default_segment(fps); 2]);
            }
            let spins = [interpolated_spins(body(Body::A), t_c, fps)?, interpolated_spins(body(Body::B), t_c, fps)?];
            let offsets = [interpolated_offset(body(Body::A), t_c), interpolated_offset(body(Body::B), t_c)];
            (offsets, spins, jn, 1.0)
        }
        InitStrategy::Fitted => {
            let fits = [fit_parabolas(body(Body::A), t_c, fps)?, fit_parabolas(body(Body::B), t_c, fps)?];
            for b in Body::BOTH {
                let v = fits[b.index()].v;
                let segs = [ParabolaParams::from_velocity(&gauge, v[0])?, ParabolaParams::from_velocity(&gauge, v[1])?];
                write_segments(&mut x, b, segs);
            }
            let dva = fits[0].v[1] - fits[0].v[0];
            let dvb = fits[1].v[1] - fits[1].v[0];
            let m = -dva.dot(dvb) / dvb.norm_squared();
            let (lo, hi) = config.mass_ratio_bounds;
            let m = if m.is_finite() && m > 0.0 { m.clamp(lo, hi) } else { 1.0 };
            let spins = [
                fitted_spins(body(Body::A), t_c, fps, config.substep, 1.0, dva)?,
                fitted_spins(body(Body::B), t_c, fps, config.substep, m, -dva)?,
            ];
            ([fits[0].b4, fits[1].b4], spins, dva, m)
        }
    };
    for b in Body::BOTH {
        let i = b.index();
        let o = L::offset(b);
        x[o..o + 3].copy_from_slice(&offsets[i].to_array());
        let q = L::pose(b);
        x[q..q + 4].copy_from_slice(&spins[i].q_c.to_array());
        for post in [false, true] {
            let k = L::momentum(Segment::of(b, post));
            x[k..k + 3].copy_from_slice(&spins[i].k[post as usize].to_array());
        }
    }
    let mid = (offsets[0] + offsets[1]) * 0.5;
    x[L::COLLISION_POINT..L::COLLISION_POINT + 3].copy_from_slice(&mid.to_array());
    x[L::IMPULSE..L::IMPULSE + 3].copy_from_slice(&jn.to_array());
    x[L::MASS_RATIO] = m;
    Ok((x, t_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Quat, V3};
    use crate::residuals::Observation;

    fn body(name: &str, frames: &[f64], q: impl Fn(f64) -> Quatf) -> BodyObservations {
        BodyObservations {
            name: name.into(),
            dims: V3::new(0.2, 0.3, 0.4),
            observations: frames
                .iter()
                .map(|&f| Observation { frame: f, p: V3::new(f, 1.0, 0.0), q: q(f) })
                .collect(),
        }
    }

    fn set(q: impl Fn(f64) -> Quatf + Copy) -> ObservationSet {
        ObservationSet {
            fps: 30.0,
            bodies: vec![body("a", &[0.0, 4.0, 8.0, 12.0, 16.0], q), body("b", &[1.0, 5.0, 9.0, 13.0], q)],
        }
    }

    #[test]
    fn defaults_and_midpoint() {
        let obs = set(|_| Quat::identity());
        let cands = candidate_segments(&obs).unwrap();
        // Union frames 0,1,4,5,8,9,12,13,16; b needs two on each side.
        assert_eq!(cands, vec![3, 4]);
        let interpolated = SolveConfig { init: InitStrategy::Interpolated, ..SolveConfig::default() };
        let (x, t_c) = initialize(&obs, 3, &interpolated).unwrap();
        assert_eq!(t_c, 6.5);
        assert_eq!(x[L::MASS_RATIO], 1.0);
        assert_eq!(x[L::B1], 9.81 / 900.0);
        assert_eq!((x[L::BETA_X], x[L::BETA_Y1]), (0.0, 0.0));
        for s in Segment::ALL {
            let j = L::segment(s);
            assert_eq!(&x[j..j + 3], &[-0.05, 1.0 / 30.0, 20f64.to_radians()]);
            assert_eq!(default_segment(30.0).b3, 1.0 / 30.0);
        }
        assert_eq!(x[L::offset(Body::A)], 6.5);
        for c in 0..3 {
            assert!((0.05..=0.15).contains(&x[L::IMPULSE + c]));
        }
    }

    #[test]
    fn constant_pose_gives_zero_momentum() {
        let q = Quat::new(0.8, 0.2, -0.1, 0.4).normalized();
        let interpolated = SolveConfig { init: InitStrategy::Interpolated, ..SolveConfig::default() };
        let (x, _) = initialize(&set(move |_| q), 3, &interpolated).unwrap();
        let i = L::pose(Body::B);
        assert!((Quat::new(x[i], x[i + 1], x[i + 2], x[i + 3]).dot(q) - 1.0).abs() < 1e-12);
        for s in Segment::ALL {
            let m = L::momentum(s);
            assert!(x[m..m + 3].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn seeded_impulse_is_reproducible() {
        let obs = set(|_| Quat::identity());
        let c = SolveConfig { seed: 11, init: InitStrategy::Interpolated, ..SolveConfig::default() };
        assert_eq!(initialize(&obs, 3, &c).unwrap(), initialize(&obs, 3, &c).unwrap());
        let d = SolveConfig { seed: 12, ..c.clone() };
        assert_ne!(initialize(&obs, 3, &c).unwrap().0, initialize(&obs, 3, &d).unwrap().0);
    }

    #[test]
    fn spin_from_uniform_rotation() {
        let w = V3::new(0.3, -1.2, 0.5);
        let q = move |f: f64| Quat::from_rotation_vector(w * (f / 30.0));
        let got = finite_difference_spin(q(2.0), q(5.0), 3.0, 30.0);
        assert!((got - w).norm() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let obs = ObservationSet {
            fps: 30.0,
            bodies: vec![body("a", &[0.0, 4.0], |_| Quat::identity()), body("b", &[1.0, 5.0], |_| Quat::identity())],
        };
        assert!(matches!(candidate_segments(&obs), Err(Error::InsufficientData { .. })));
    }
}
