//! Ballistic centre-of-mass trajectories under a shared gravity gauge.
//!
//! A segment is the curve
//!
//! ```text
//! p(t) = R · (b3·t, -b1/2·t² + b2·t, 0) + b4,   R = Ry(βy0)·Rx(βx)·Ry(βy1)
//! ```
//!
//! with `t` in frames relative to the collision. `b1` and the two tilt angles
//! `βx`, `βy1` are shared by every segment, so all segments agree on a single
//! gravity vector; each segment only owns its rotation `βy0` about that axis.
//! The world is y-up, so an untilted gauge accelerates along -y.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3, V3};
use crate::real::Real;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalGauge {
    /// Curvature per frame², `b1·fps² ≈ 9.81`.
    pub b1: f64,
    pub beta_x: f64,
    pub beta_y1: f64,
    pub fps: f64,
}

impl GlobalGauge {
    /// Untilted gauge with exact gravity for the given frame rate.
    pub fn level(fps: f64) -> Self {
        Self {
            b1: GRAVITY / (fps * fps),
            beta_x: 0.0,
            beta_y1: 0.0,
            fps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.b1 > 0.0) {
            return Err(Error::InvalidArgument(format!("b1 must be positive, got {}", self.b1)));
        }
        Ok(())
    }

    /// World-space gravitational acceleration implied by the gauge, m/s².
    pub fn gravity(&self) -> Vec3 {
        let g = gauge_rotation(self.beta_x, self.beta_y1);
        g.mul_vec(V3::new(0.0, -self.b1 * self.fps * self.fps, 0.0))
    }
}

/// Per-segment curve coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolaParams {
    pub b2: f64,
    pub b3: f64,
    pub beta_y0: f64,
}

/// Collision-time position shared by the pre- and post-collision segments of
/// one body.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Offset(pub Vec3);

pub fn yxy_rotation<T: Real>(beta_y0: T, beta_x: T, beta_y1: T) -> Mat3<T> {
    Mat3::rot_y(beta_y0).mul_mat(&gauge_rotation(beta_x, beta_y1))
}

/// The shared part `Rx(βx)·Ry(βy1)` of every segment rotation.
pub fn gauge_rotation<T: Real>(beta_x: T, beta_y1: T) -> Mat3<T> {
    Mat3::rot_x(beta_x).mul_mat(&Mat3::rot_y(beta_y1))
}

#[inline]
pub(crate) fn local_position<T: Real>(b1: T, b2: T, b3: T, t: f64) -> V3<T> {
    V3::new(b3 * t, b1 * (-0.5 * t * t) + b2 * t, T::zero())
}

/// Local-frame velocity in units per frame.
#[inline]
pub(crate) fn local_velocity<T: Real>(b1: T, b2: T, b3: T, t: f64) -> V3<T> {
    V3::new(b3, b2 - b1 * t, T::zero())
}

pub fn eval_parabola(gauge: &GlobalGauge, seg: &ParabolaParams, offset: &Offset, t: f64) -> Vec3 {
    let r = yxy_rotation(seg.beta_y0, gauge.beta_x, gauge.beta_y1);
    r.mul_vec(local_position(gauge.b1, seg.b2, seg.b3, t)) + offset.0
}

/// Time derivative of [`eval_parabola`], converted to m/s.
pub fn eval_velocity(gauge: &GlobalGauge, seg: &ParabolaParams, t: f64) -> Vec3 {
    let r = yxy_rotation(seg.beta_y0, gauge.beta_x, gauge.beta_y1);
    r.mul_vec(local_velocity(gauge.b1, seg.b2, seg.b3, t)) * gauge.fps
}

impl ParabolaParams {
    /// Segment coefficients whose collision-time velocity is `v` (m/s) under
    /// `gauge`. Fails when the tilted gauge plane cannot contain `v`.
    pub fn from_velocity(gauge: &GlobalGauge, v: Vec3) -> Result<Self> {
        let u = v * (1.0 / gauge.fps);
        let g = gauge_rotation(gauge.beta_x, gauge.beta_y1);
        let m = g.column(2);
        // Find βy0 with (Ry(-βy0)·u)·m = 0.
        let a = m.x * u.x + m.z * u.z;
        let b = m.z * u.x - m.x * u.z;
        let c = -m.y * u.y;
        let r = a.hypot(b);
        let beta_y0 = if r < 1e-15 {
            if c.abs() > 1e-12 {
                return Err(Error::InvalidArgument(
                    "velocity is not representable in this gauge".into(),
                ));
            }
            0.0
        } else {
            if c.abs() > r * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(
                    "velocity is not representable in this gauge".into(),
                ));
            }
            b.atan2(a) + (c / r).clamp(-1.0, 1.0).acos()
        };
        let w = Mat3::rot_y(-beta_y0).mul_vec(u);
        let local = g.transpose_mul_vec(w);
        Ok(Self {
            b2: local.y,
            b3: local.x,
            beta_y0,
        })
    }
}
