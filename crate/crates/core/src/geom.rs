//! Small fixed-size vector, matrix and quaternion types, generic over [`Real`]
//! so the same code runs on `f64` and on dual numbers.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct V3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

/// World-space 3-vector in SI units.
pub type Vec3 = V3<f64>;

impl<T: Real> V3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    /// Componentwise product.
    pub fn hadamard(self, o: Self) -> Self {
        Self::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn lift(v: Vec3) -> Self {
        Self::new(T::cst(v.x), T::cst(v.y), T::cst(v.z))
    }

    pub fn re(self) -> Vec3 {
        V3::new(self.x.re(), self.y.re(), self.z.re())
    }
}

impl Vec3 {
    pub const X: Vec3 = V3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = V3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = V3 { x: 0.0, y: 0.0, z: 1.0 };

    pub fn normalize(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl<T: Real> Add for V3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for V3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for V3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for V3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<f64> for V3<T> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(V3::from_array(a))
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn rot_x(a: T) -> Self {
        let (c, s, o, z) = (a.cos(), a.sin(), T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, c, -s], [z, s, c]],
        }
    }

    pub fn rot_y(a: T) -> Self {
        let (c, s, o, z) = (a.cos(), a.sin(), T::one(), T::zero());
        Self {
            m: [[c, z, s], [z, o, z], [-s, z, c]],
        }
    }

    pub fn mul_vec(&self, v: V3<T>) -> V3<T> {
        let r = |i: usize| self.m[i][0] * v.x + self.m[i][1] * v.y + self.m[i][2] * v.z;
        V3::new(r(0), r(1), r(2))
    }

    pub fn transpose_mul_vec(&self, v: V3<T>) -> V3<T> {
        let c = |j: usize| self.m[0][j] * v.x + self.m[1][j] * v.y + self.m[2][j] * v.z;
        V3::new(c(0), c(1), c(2))
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Self { m }
    }

    pub fn transpose(&self) -> Self {
        let mut m = self.m;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.m[j][i];
            }
        }
        Self { m }
    }

    pub fn column(&self, j: usize) -> V3<T> {
        V3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Quaternion, scalar first. Orientation quaternions map body-frame vectors
/// to world frame: `v_world = q ⊗ (0, v_body) ⊗ q*`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quat<T> {
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn pure(v: V3<T>) -> Self {
        Self::new(T::zero(), v.x, v.y, v.z)
    }

    pub fn vector(self) -> V3<T> {
        V3::new(self.x, self.y, self.z)
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(self, o: Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        let inv = T::one() / self.norm();
        self.scale(inv)
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Hamilton product `self ⊗ o`.
    pub fn hamilton(self, o: Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_matrix(self) -> Mat3<T> {
        let Quat { w, x, y, z } = self;
        let two = T::cst(2.0);
        let o = T::one();
        Mat3 {
            m: [
                [
                    o - two * (y * y + z * z),
                    two * (x * y - w * z),
                    two * (x * z + w * y),
                ],
                [
                    two * (x * y + w * z),
                    o - two * (x * x + z * z),
                    two * (y * z - w * x),
                ],
                [
                    two * (x * z - w * y),
                    two * (y * z + w * x),
                    o - two * (x * x + y * y),
                ],
            ],
        }
    }

    pub fn rotate(self, v: V3<T>) -> V3<T> {
        self.to_matrix().mul_vec(v)
    }

    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn lift(q: Quatf) -> Self {
        Self::new(T::cst(q.w), T::cst(q.x), T::cst(q.y), T::cst(q.z))
    }

    pub fn re(self) -> Quatf {
        Quat::new(self.w.re(), self.x.re(), self.y.re(), self.z.re())
    }
}

impl<T: Real> Add for Quat<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Quat<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul for Quat<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.hamilton(o)
    }
}

pub type Quatf = Quat<f64>;

impl Quatf {
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalize() * (0.5 * angle).sin();
        Quat::new((0.5 * angle).cos(), a.x, a.y, a.z)
    }

    /// Rotation vector (axis times angle) of a unit quaternion, taking the
    /// short way around.
    pub fn log(self) -> Vec3 {
        let q = if self.w < 0.0 { self.scale(-1.0) } else { self };
        let v = q.vector();
        let s = v.norm();
        if s < 1e-15 {
            return v * 2.0;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    pub fn from_rotation_vector(r: Vec3) -> Self {
        let angle = r.norm();
        if angle < 1e-15 {
            return Quat::new(1.0, 0.5 * r.x, 0.5 * r.y, 0.5 * r.z).normalized();
        }
        Self::from_axis_angle(r, angle)
    }

    /// Angle of the relative rotation between two unit quaternions.
    pub fn angle_to(self, o: Self) -> f64 {
        let d = self.dot(o).abs().min(1.0);
        2.0 * d.acos()
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(self, o: Self, t: f64) -> Self {
        let mut o = o;
        let mut d = self.dot(o);
        if d < 0.0 {
            o = o.scale(-1.0);
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            return (self.scale(1.0 - t) + o.scale(t)).normalized();
        }
        let theta = d.acos();
        let s = theta.sin();
        let a = ((1.0 - t) * theta).sin() / s;
        let b = (t * theta).sin() / s;
        (self.scale(a) + o.scale(b)).normalized()
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Serialize for Quatf {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.w, self.x, self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Quatf {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[f64; 4]>::deserialize(d)?;
        Ok(Quat::from_array(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_matrix_agrees_with_sandwich_product() {
        let q = Quat::new(0.3, -0.5, 0.7, 0.2).normalized();
        let v = V3::new(0.4, -1.1, 2.0);
        let sandwich = q.mul(Quat::pure(v)).mul(q.conj()).vector();
        let m = q.rotate(v);
        assert!((sandwich - m).norm() < 1e-14);
    }

    #[test]
    fn log_inverts_rotation_vector() {
        let r = V3::new(0.3, -1.2, 0.5);
        let q = Quatf::from_rotation_vector(r);
        assert!((q.log() - r).norm() < 1e-13);
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let a = Quatf::identity();
        let b = Quatf::from_axis_angle(Vec3::Z, 1.0);
        assert!(a.slerp(b, 0.0).angle_to(a) < 1e-12);
        assert!(a.slerp(b, 1.0).angle_to(b) < 1e-7);
        let mid = a.slerp(b, 0.5);
        assert!(mid.angle_to(Quatf::from_axis_angle(Vec3::Z, 0.5)) < 1e-7);
    }

    #[test]
    fn elementary_rotations_are_proper() {
        let r = Mat3::rot_y(0.4).mul_mat(&Mat3::rot_x(-1.1));
        assert!((r.determinant() - 1.0).abs() < 1e-14);
        let e = r.mul_vec(V3::new(1.0, 2.0, 3.0));
        let back = r.transpose_mul_vec(e);
        assert!((back - V3::new(1.0, 2.0, 3.0)).norm() < 1e-14);
    }
}
