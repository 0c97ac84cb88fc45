//! Value-level rigid-body mechanics: inertia, momentum/velocity conversion,
//! impulse exchange and explicit pose integration.
//!
//! Angular state is carried as angular momentum `k`, which is constant
//! between collisions; angular velocity is always derived from it through
//! the current pose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Quat, Quatf, Vec3, V3};
use crate::real::Real;

/// Default pose-integration substep, in frames.
pub const DEFAULT_SUBSTEP: f64 = 0.25;

/// Diagonal reference-pose moment of inertia.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Inertia(pub Vec3);

impl Inertia {
    pub fn new(diag: Vec3) -> Result<Self> {
        let i = Inertia(diag);
        i.validate()?;
        Ok(i)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.0;
        if !(d.x > 0.0 && d.y > 0.0 && d.z > 0.0) || !d.is_finite() {
            return Err(Error::InvalidInertia(format!(
                "components must be finite and positive, got ({}, {}, {})",
                d.x, d.y, d.z
            )));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Vec3 {
        V3::new(1.0 / self.0.x, 1.0 / self.0.y, 1.0 / self.0.z)
    }

    pub fn scaled(&self, s: f64) -> Inertia {
        Inertia(self.0 * s)
    }
}

/// Solid cuboid of the given edge lengths and mass.
pub fn cuboid_inertia(dims: Vec3, mass: f64) -> Result<Inertia> {
    if !(dims.x > 0.0 && dims.y > 0.0 && dims.z > 0.0) || !dims.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cuboid dimensions must be positive, got ({}, {}, {})",
            dims.x, dims.y, dims.z
        )));
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "mass must be positive, got {mass}"
        )));
    }
    let sq = dims.hadamard(dims);
    Ok(Inertia(V3::new(sq.y + sq.z, sq.x + sq.z, sq.x + sq.y) * (mass / 12.0)))
}

/// Kinematic and inertial state of one body. Masses are relative: body a of
/// a reconstructed pair has mass 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub p: Vec3,
    pub q: Quatf,
    pub v: Vec3,
    /// Angular momentum, world frame.
    pub k: Vec3,
    pub mass: f64,
    pub inertia0: Inertia,
}

impl BodyState {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mass must be positive, got {}",
                self.mass
            )));
        }
        self.inertia0.validate()
    }

    pub fn angular_velocity(&self) -> Vec3 {
        angular_velocity(self.q, V3::lift(self.inertia0.inverse()), self.k)
    }

    pub fn linear_momentum(&self) -> Vec3 {
        self.v * self.mass
    }

    /// Angular momentum about the world origin: `p × m v + k`.
    pub fn angular_momentum_about_origin(&self) -> Vec3 {
        self.p.cross(self.v * self.mass) + self.k
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.v.norm_squared() + 0.5 * self.angular_velocity().dot(self.k)
    }
}

/// An impulse `j·n` applied at world point `x_c`. It acts with a positive
/// sign on the first body of a pair and a negative sign on the second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub jn: Vec3,
    pub x_c: Vec3,
}

/// `w = R(q) · I₀⁻¹ · R(q)ᵀ · k`, for any scalar type.
pub fn angular_velocity<T: Real>(q: Quat<T>, inv_inertia: V3<T>, k: V3<T>) -> V3<T> {
    let r = q.to_matrix();
    let body = r.transpose_mul_vec(k).hadamard(inv_inertia);
    r.mul_vec(body)
}

pub fn angular_velocity_from_momentum(q: Quatf, inertia0: Inertia, k: Vec3) -> Result<Vec3> {
    inertia0.validate()?;
    Ok(angular_velocity(q, inertia0.inverse(), k))
}

/// `k = R(q) · I₀ · R(q)ᵀ · w`.
pub fn momentum_from_angular_velocity(q: Quatf, inertia0: Inertia, w: Vec3) -> Result<Vec3> {
    inertia0.validate()?;
    let r = q.to_matrix();
    Ok(r.mul_vec(r.transpose_mul_vec(w).hadamard(inertia0.0)))
}

/// One explicit Euler step `q + (dt/2)·(0,w)⊗q`, renormalized.
#[inline]
fn euler_step<T: Real>(q: Quat<T>, inv_inertia: V3<T>, k: V3<T>, dt: f64) -> Quat<T> {
    let w = angular_velocity(q, inv_inertia, k);
    let dq = Quat::pure(w).hamilton(q).scale(T::cst(0.5 * dt));
    (q + dq).normalized()
}

/// Integrates a pose from collision time to several sample times at once.
///
/// `spans` are frame offsets from the start pose; they must share a sign and
/// be sorted by increasing magnitude. Integration runs on a fixed grid of
/// `substep` frames anchored at the start, with one partial step to reach each
/// sample, so every sample equals what [`integrate_pose`] returns for it.
pub(crate) fn integrate_samples<T: Real>(
    q0: Quat<T>,
    k: V3<T>,
    inv_inertia: V3<T>,
    spans: &[f64],
    substep: f64,
    fps: f64,
) -> Vec<Quat<T>> {
    let mut out = Vec::with_capacity(spans.len());
    let mut grid = q0.normalized();
    let mut grid_steps = 0usize;
    for &span in spans {
        let sign = if span < 0.0 { -1.0 } else { 1.0 };
        let mag = span.abs();
        let full = (mag / substep + 1e-9).floor() as usize;
        let full_dt = sign * substep / fps;
        while grid_steps < full {
            grid = euler_step(grid, inv_inertia, k, full_dt);
            grid_steps += 1;
        }
        let rem = mag - full as f64 * substep;
        if rem > 1e-9 * substep {
            out.push(euler_step(grid, inv_inertia, k, sign * rem / fps));
        } else {
            out.push(grid);
        }
    }
    out
}

/// Integrates an orientation over `t_span` frames (negative spans integrate
/// backward) with explicit Euler steps of at most `substep` frames, holding
/// the angular momentum fixed and renormalizing after every step.
pub fn integrate_pose(
    q0: Quatf,
    k: Vec3,
    inertia0: Inertia,
    t_span: f64,
    substep: f64,
    fps: f64,
) -> Result<Quatf> {
    if !(substep > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "substep must be positive, got {substep}"
        )));
    }
    if !(fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    inertia0.validate()?;
    Ok(integrate_samples(q0, k, inertia0.inverse(), &[t_span], substep, fps)[0])
}

/// Applies `imp` to a pair, positive on `a` and negative on `b`. Poses and
/// positions are unchanged.
pub fn apply_impulse(a: &BodyState, b: &BodyState, imp: &Impulse) -> (BodyState, BodyState) {
    let mut a2 = *a;
    let mut b2 = *b;
    a2.v = a.v + imp.jn * (1.0 / a.mass);
    b2.v = b.v - imp.jn * (1.0 / b.mass);
    a2.k = a.k + (imp.x_c - a.p).cross(imp.jn);
    b2.k = b.k - (imp.x_c - b.p).cross(imp.jn);
    (a2, b2)
}

/// Applies the reaction of an immovable object to a single body.
pub fn apply_impulse_against_static(a: &BodyState, imp: &Impulse) -> BodyState {
    let mut a2 = *a;
    a2.v = a.v + imp.jn * (1.0 / a.mass);
    a2.k = a.k + (imp.x_c - a.p).cross(imp.jn);
    a2
}

/// Velocity of the material point of `state` located at `x_c`.
pub fn point_velocity(state: &BodyState, x_c: Vec3) -> Vec3 {
    state.v + state.angular_velocity().cross(x_c - state.p)
}
