//! Seeded synthetic scenes with a known collision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{cuboid_inertia, momentum_from_angular_velocity, BodyState, DEFAULT_SUBSTEP};
use crate::error::{Error, Result};
use crate::geom::{Quat, Quatf, Vec3, V3};
use crate::trajectory::GRAVITY;

use super::{impulse_magnitude, impulse_magnitude_static, Partner, ScriptedContact, SimBody, SimScene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoBoxOptions {
    pub fps: f64,
    pub duration: usize,
    pub contact_frame: f64,
    pub mass_ratio: (f64, f64),
    pub restitution: (f64, f64),
    /// Edge length range of both boxes, m.
    pub edge: (f64, f64),
    /// Upper bound on the angular speed at contact, rad/s.
    pub max_spin: f64,
    /// Range of the approach speed along the normal, m/s.
    pub closing_speed: (f64, f64),
    pub substep: f64,
}

impl Default for TwoBoxOptions {
    fn default() -> Self {
        Self {
            fps: 60.0,
            duration: 90,
            contact_frame: 45.0,
            mass_ratio: (0.5, 4.0),
            restitution: (0.2, 0.9),
            edge: (0.2, 0.5),
            max_spin: 3.0,
            closing_speed: (2.0, 5.0),
            substep: DEFAULT_SUBSTEP,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = V3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Quatf {
    loop {
        let q = Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            let q = q.normalized();
            return if q.w < 0.0 { q.scale(-1.0) } else { q };
        }
    }
}

/// Half-extent of a box along a world direction.
fn support(q: Quatf, dims: Vec3, d: Vec3) -> f64 {
    let r = q.to_matrix();
    0.5 * (dims.x * r.column(0).dot(d).abs() + dims.y * r.column(1).dot(d).abs() + dims.z * r.column(2).dot(d).abs())
}

fn tangents(n: Vec3) -> (Vec3, Vec3) {
    let helper = if n.y.abs() < 0.9 { Vec3::Y } else { Vec3::X };
    let t1 = n.cross(helper).normalize();
    (t1, n.cross(t1))
}

fn state_at_contact(p: Vec3, v: Vec3, w: Vec3, q: Quatf, dims: Vec3, mass: f64) -> Result<BodyState> {
    let inertia0 = cuboid_inertia(dims, mass)?;
    let k = momentum_from_angular_velocity(q, inertia0, w)?;
    Ok(BodyState { p, q, v, k, mass, inertia0 })
}

/// Two boxes under gravity that collide once at `contact_frame`. Body a has
/// mass 1. States are drawn at the contact, which is the scene's reference
/// frame.
pub fn two_box_scene(seed: u64, opts: &TwoBoxOptions) -> Result<SimScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let m_b = uniform(&mut rng, opts.mass_ratio);
        let c = uniform(&mut rng, opts.restitution);
        let da = V3::new(uniform(&mut rng, opts.edge), uniform(&mut rng, opts.edge), uniform(&mut rng, opts.edge));
        let db = V3::new(uniform(&mut rng, opts.edge), uniform(&mut rng, opts.edge), uniform(&mut rng, opts.edge));
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let theta: f64 = rng.random_range(-0.35..0.35);
        let n = V3::new(theta.cos() * phi.cos(), theta.sin(), theta.cos() * phi.sin());
        let (t1, t2) = tangents(n);
        let x_c = V3::new(rng.random_range(-1.0..1.0), rng.random_range(1.0..2.0), rng.random_range(-1.0..1.0));
        let qa = random_rotation(&mut rng);
        let qb = random_rotation(&mut rng);
        let mut off = || t1 * rng.random_range(-0.05..0.05) + t2 * rng.random_range(-0.05..0.05);
        let pa = x_c + n * support(qa, da, n) + off();
        let pb = x_c - n * support(qb, db, n) + off();
        let s = uniform(&mut rng, opts.closing_speed);
        let rel = n * (-s) + t1 * rng.random_range(-0.5..0.5) + t2 * rng.random_range(-0.5..0.5);
        let v_cm = V3::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0), rng.random_range(-1.0..1.0));
        let va = v_cm + rel * (m_b / (1.0 + m_b));
        let vb = v_cm - rel * (1.0 / (1.0 + m_b));
        let wa = unit_vector(&mut rng) * rng.random_range(0.0..=opts.max_spin);
        let wb = unit_vector(&mut rng) * rng.random_range(0.0..=opts.max_spin);
        let a = state_at_contact(pa, va, wa, qa, da, 1.0)?;
        let b = state_at_contact(pb, vb, wb, qb, db, m_b)?;
        if impulse_magnitude(&a, &b, n, x_c, c).is_err() {
            continue;
        }
        let mut scene = SimScene::new(
            vec![
                SimBody { name: "a".into(), dims: da, state: a },
                SimBody { name: "b".into(), dims: db, state: b },
            ],
            opts.fps,
            opts.duration,
        );
        scene.substep = opts.substep;
        scene.reference_frame = opts.contact_frame;
        scene.contacts.push(ScriptedContact {
            frame: opts.contact_frame,
            body: 0,
            partner: Partner::Body(1),
            point: x_c,
            normal: n,
            restitution: c,
        });
        return Ok(scene);
    }
    Err(Error::InvalidArgument("could not draw an approaching contact".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropOptions {
    pub restitution: f64,
    /// Angular speed at contact, rad/s; zero gives a flat, spin-free drop.
    pub spin: f64,
    pub fps: f64,
    pub contact_frame: f64,
    pub dims: Vec3,
    pub substep: f64,
}

impl Default for DropOptions {
    fn default() -> Self {
        Self {
            restitution: 0.75,
            spin: 0.0,
            fps: 60.0,
            contact_frame: 30.0,
            dims: V3::new(0.2, 0.15, 0.25),
            substep: DEFAULT_SUBSTEP,
        }
    }
}

/// Frames kept after the contact of a drop, at least.
const MIN_DROP_TAIL: f64 = 12.0;

/// A box released from rest that lands on the floor `y = 0` at
/// `contact_frame`, i.e. from height `½·g·t²` above its contact height. The
/// scene ends before the box would land a second time, but lasts at least
/// [`MIN_DROP_TAIL`] frames past the contact.
pub fn drop_scene(seed: u64, opts: &DropOptions) -> Result<SimScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = opts.contact_frame / opts.fps;
    let (q, w, v_h) = if opts.spin > 0.0 {
        let v_h = V3::new(rng.random_range(-0.3..0.3), 0.0, rng.random_range(-0.3..0.3));
        (random_rotation(&mut rng), unit_vector(&mut rng) * opts.spin, v_h)
    } else {
        (Quat::identity(), Vec3::zero(), Vec3::zero())
    };
    let r = q.to_matrix();
    let h = opts.dims * 0.5;
    let mut lowest = Vec3::zero();
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let c = r.column(0) * (sx * h.x) + r.column(1) * (sy * h.y) + r.column(2) * (sz * h.z);
                if c.y < lowest.y {
                    lowest = c;
                }
            }
        }
    }
    // A flat face lands with its centre as the contact point.
    let lever = if opts.spin > 0.0 { lowest } else { V3::new(0.0, lowest.y, 0.0) };
    let p = V3::new(0.0, -lever.y, 0.0);
    let x_c = p + lever;
    let v = v_h + V3::new(0.0, -GRAVITY * t, 0.0);
    let s = state_at_contact(p, v, w, q, opts.dims, 1.0)?;
    impulse_magnitude_static(&s, Vec3::Y, x_c, opts.restitution)?;
    // The floor exists only at the scripted contact, so a weak bounce keeps
    // falling afterwards; a minimum tail leaves samples to fit.
    let flight = (2.0 * opts.restitution * opts.contact_frame).max(MIN_DROP_TAIL);
    let duration = (opts.contact_frame + flight).floor() as usize;
    let mut scene = SimScene::new(vec![SimBody { name: "box".into(), dims: opts.dims, state: s }], opts.fps, duration);
    scene.substep = opts.substep;
    scene.reference_frame = opts.contact_frame;
    scene.contacts.push(ScriptedContact {
        frame: opts.contact_frame,
        body: 0,
        partner: Partner::Static,
        point: x_c,
        normal: Vec3::Y,
        restitution: opts.restitution,
    });
    Ok(scene)
}
