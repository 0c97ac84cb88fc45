//! The assembled least-squares problems: residual vectors and their
//! Jacobians over the flat unknown vectors.
//!
//! Row order: gravity (1), momentum (6), impulse (12 or 6), positions (3 per
//! sample, body a then body b, in frame order), orientations (4 per sample,
//! same order). Disabled physics blocks are omitted. Every block is scaled by
//! the square root of its weight.

use nalgebra::DMatrix;

use crate::dynamics::cuboid_inertia;
use crate::error::{Error, Result};
use crate::geom::{Quatf, Vec3};
use crate::lm::LeastSquares;
use crate::real::{Dual, Real};

use super::layout::{Body, Segment, SingleBodyLayout as S, UnknownLayout as L};
use super::observations::{BodyObservations, ObservationSet};
use super::terms::{self, SingleBodyVars, TwoBodyVars};
use super::{BlockNorms, PhaseMask, Plane, Weights, MASS_RATIO_BOUNDS};

struct PositionRow {
    /// `b1, βx, βy1, b2, b3, βy0, b4` slots.
    slots: [usize; 9],
    t: f64,
    p: Vec3,
}

struct OrientationGroup {
    /// `q_c` (4), `k` (3), mass ratio.
    slots: [usize; 8],
    mass_scaled: bool,
    inv_inertia: Vec3,
    /// Frame offsets from `t_c`, sorted by magnitude.
    spans: Vec<f64>,
    targets: Vec<Quatf>,
    /// Orientation-sample index of each span.
    rows: Vec<usize>,
}

/// Position and orientation data terms of one or two bodies.
struct DataTerms {
    positions: Vec<PositionRow>,
    groups: Vec<OrientationGroup>,
    n_ori: usize,
    fps: f64,
    substep: f64,
    sw_pos: f64,
    sw_ori: f64,
}

struct BodySlots {
    gauge: [usize; 3],
    segment: [usize; 2],
    offset: usize,
    pose: usize,
    momentum: [usize; 2],
    mass: Option<usize>,
}

impl DataTerms {
    fn new(fps: f64, substep: f64, w: &Weights) -> Self {
        Self {
            positions: Vec::new(),
            groups: Vec::new(),
            n_ori: 0,
            fps,
            substep,
            sw_pos: w.pos.sqrt(),
            sw_ori: w.ori.sqrt(),
        }
    }

    fn add_body(&mut self, body: &BodyObservations, t_c: f64, s: &BodySlots) -> Result<()> {
        let inertia = cuboid_inertia(body.dims, 1.0)?;
        for o in &body.observations {
            let post = o.frame > t_c;
            let seg = s.segment[post as usize];
            self.positions.push(PositionRow {
                slots: [
                    s.gauge[0],
                    s.gauge[1],
                    s.gauge[2],
                    seg,
                    seg + 1,
                    seg + 2,
                    s.offset,
                    s.offset + 1,
                    s.offset + 2,
                ],
                t: o.frame - t_c,
                p: o.p,
            });
        }
        let (pre, post) = body.split(t_c);
        for (side, mut members) in [(0usize, pre), (1, post)] {
            if members.is_empty() {
                continue;
            }
            if side == 0 {
                members.reverse();
            }
            let m = s.momentum[side];
            let mass = s.mass.unwrap_or(s.pose);
            self.groups.push(OrientationGroup {
                slots: [s.pose, s.pose + 1, s.pose + 2, s.pose + 3, m, m + 1, m + 2, mass],
                mass_scaled: s.mass.is_some(),
                inv_inertia: inertia.inverse(),
                spans: members.iter().map(|&i| body.observations[i].frame - t_c).collect(),
                targets: members.iter().map(|&i| body.observations[i].q).collect(),
                rows: members.iter().map(|&i| self.n_ori + i).collect(),
            });
        }
        self.n_ori += body.observations.len();
        Ok(())
    }

    fn n_rows(&self) -> usize {
        3 * self.positions.len() + 4 * self.n_ori
    }

    fn positions_into(&self, x: &[f64], out: &mut [f64], scale: f64) {
        for (i, row) in self.positions.iter().enumerate() {
            let p = row.slots.map(|s| x[s]);
            let e = (terms::position(&p, row.t) - row.p).to_array();
            for c in 0..3 {
                out[3 * i + c] = scale * e[c];
            }
        }
    }

    fn orientations_into(&self, x: &[f64], out: &mut [f64], scale: f64) {
        for g in &self.groups {
            let p = g.slots.map(|s| x[s]);
            let qs = terms::orientations(&p, g.mass_scaled, g.inv_inertia, &g.spans, self.substep, self.fps);
            for ((q, t), &row) in qs.into_iter().zip(&g.targets).zip(&g.rows) {
                let e = terms::quat_residual(q, *t);
                for c in 0..4 {
                    out[4 * row + c] = scale * e[c];
                }
            }
        }
    }

    fn values_into(&self, x: &[f64], out: &mut [f64]) {
        let np = 3 * self.positions.len();
        self.positions_into(x, &mut out[..np], self.sw_pos);
        self.orientations_into(x, &mut out[np..], self.sw_ori);
    }

    fn jacobian_into(&self, x: &[f64], r: &mut [f64], jac: &mut DMatrix<f64>, row0: usize) {
        for (i, row) in self.positions.iter().enumerate() {
            let p: [Dual<9>; 9] = std::array::from_fn(|k| Dual::variable(x[row.slots[k]], k));
            let e = (terms::position(&p, row.t) - crate::geom::V3::lift(row.p)).to_array();
            for c in 0..3 {
                let ri = row0 + 3 * i + c;
                r[ri] = self.sw_pos * e[c].v;
                for k in 0..9 {
                    jac[(ri, row.slots[k])] += self.sw_pos * e[c].d[k];
                }
            }
        }
        let base = row0 + 3 * self.positions.len();
        for g in &self.groups {
            let p: [Dual<8>; 8] = std::array::from_fn(|k| Dual::variable(x[g.slots[k]], k));
            let qs = terms::orientations(&p, g.mass_scaled, g.inv_inertia, &g.spans, self.substep, self.fps);
            let nk = if g.mass_scaled { 8 } else { 7 };
            for ((q, t), &row) in qs.into_iter().zip(&g.targets).zip(&g.rows) {
                let e = terms::quat_residual(q, *t);
                for c in 0..4 {
                    let ri = base + 4 * row + c;
                    r[ri] = self.sw_ori * e[c].v;
                    for k in 0..nk {
                        jac[(ri, g.slots[k])] += self.sw_ori * e[c].d[k];
                    }
                }
            }
        }
    }

    fn norms(&self, x: &[f64]) -> (f64, f64) {
        let np = 3 * self.positions.len();
        let mut p = vec![0.0; np];
        let mut o = vec![0.0; 4 * self.n_ori];
        self.positions_into(x, &mut p, 1.0);
        self.orientations_into(x, &mut o, 1.0);
        (norm(&p), norm(&o))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|e| e * e).sum::<f64>().sqrt()
}

fn physics_jacobian<const N: usize>(
    x: &[f64],
    eval: impl Fn(&[Dual<N>]) -> Vec<Dual<N>>,
    r: &mut [f64],
    jac: &mut DMatrix<f64>,
) -> usize {
    let xd: Vec<Dual<N>> = x.iter().enumerate().map(|(i, &v)| Dual::variable(v, i)).collect();
    let rows = eval(&xd);
    for (i, e) in rows.iter().enumerate() {
        r[i] = e.v;
        for k in 0..N {
            jac[(i, k)] = e.d[k];
        }
    }
    rows.len()
}

fn normalize_quat(x: &mut [f64], i: usize) {
    let n = x[i..i + 4].iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        for v in &mut x[i..i + 4] {
            *v /= n;
        }
    }
}

/// Two bodies colliding at a fixed frame `t_c`.
pub struct TwoBodyProblem {
    pub fps: f64,
    pub t_c: f64,
    pub weights: Weights,
    pub mask: PhaseMask,
    /// Tie `x_c` to the midpoint of the two offsets.
    pub pin_collision_point: bool,
    pub dims: [Vec3; 2],
    /// Range the mass ratio is clamped to after every step.
    pub mass_bounds: (f64, f64),
    data: DataTerms,
}

impl TwoBodyProblem {
    pub fn new(
        obs: &ObservationSet,
        t_c: f64,
        weights: Weights,
        mask: PhaseMask,
        substep: f64,
        pin_collision_point: bool,
    ) -> Result<Self> {
        obs.validate()?;
        if obs.bodies.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "two-body problem needs 2 bodies, got {}",
                obs.bodies.len()
            )));
        }
        weights.validate()?;
        if !(substep > 0.0) {
            return Err(Error::InvalidArgument(format!("substep must be positive, got {substep}")));
        }
        let mut data = DataTerms::new(obs.fps, substep, &weights);
        for b in Body::BOTH {
            let slots = BodySlots {
                gauge: [L::B1, L::BETA_X, L::BETA_Y1],
                segment: [L::segment(Segment::of(b, false)), L::segment(Segment::of(b, true))],
                offset: L::offset(b),
                pose: L::pose(b),
                momentum: [L::momentum(Segment::of(b, false)), L::momentum(Segment::of(b, true))],
                mass: (b == Body::B).then_some(L::MASS_RATIO),
            };
            data.add_body(&obs.bodies[b.index()], t_c, &slots)?;
        }
        Ok(Self {
            fps: obs.fps,
            t_c,
            weights,
            mask,
            pin_collision_point,
            dims: [obs.bodies[0].dims, obs.bodies[1].dims],
            mass_bounds: MASS_RATIO_BOUNDS,
            data,
        })
    }

    pub fn n_physics_rows(&self) -> usize {
        self.mask.gravity as usize + 6 * self.mask.momentum as usize + 12 * self.mask.impulse as usize
    }

    pub fn n_rows(&self) -> usize {
        self.n_physics_rows() + self.data.n_rows()
    }

    fn physics<T: Real>(&self, x: &[T]) -> Vec<T> {
        let v = TwoBodyVars::new(x, self.pin_collision_point);
        let w = &self.weights;
        let mut out = Vec::with_capacity(19);
        if self.mask.gravity {
            out.push(terms::gravity(v.b1, v.beta_x, self.fps) * w.g.sqrt());
        }
        if self.mask.momentum {
            let s = w.mom.sqrt();
            out.extend(terms::momentum(&v, self.fps).map(|e| e * s));
        }
        if self.mask.impulse {
            let s = w.imp.sqrt();
            out.extend(terms::impulse(&v, self.fps).map(|e| e * s));
        }
        out
    }

    pub fn assemble(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.physics(x);
        let np = r.len();
        r.resize(self.n_rows(), 0.0);
        self.data.values_into(x, &mut r[np..]);
        r
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        0.5 * self.assemble(x).iter().map(|e| e * e).sum::<f64>()
    }

    /// Unweighted norms of every block, independent of the mask.
    pub fn block_norms(&self, x: &[f64]) -> BlockNorms {
        let v = TwoBodyVars::new(x, self.pin_collision_point);
        let (position, orientation) = self.data.norms(x);
        BlockNorms {
            gravity: terms::gravity(v.b1, v.beta_x, self.fps).abs(),
            momentum: norm(&terms::momentum(&v, self.fps)),
            impulse: norm(&terms::impulse(&v, self.fps)),
            position,
            orientation,
        }
    }
}

impl LeastSquares for TwoBodyProblem {
    fn n_params(&self) -> usize {
        L::LEN
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.assemble(x)
    }

    fn jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let mut r = vec![0.0; self.n_rows()];
        let mut jac = DMatrix::zeros(self.n_rows(), L::LEN);
        let np = physics_jacobian::<{ L::LEN }>(x, |xd| self.physics(xd), &mut r, &mut jac);
        self.data.jacobian_into(x, &mut r, &mut jac, np);
        (r, jac)
    }

    fn project(&self, x: &mut [f64]) {
        for b in Body::BOTH {
            normalize_quat(x, L::pose(b));
        }
        let (lo, hi) = self.mass_bounds;
        x[L::MASS_RATIO] = x[L::MASS_RATIO].clamp(lo, hi);
    }

    fn bounds(&self) -> Vec<(usize, f64, f64)> {
        vec![(L::MASS_RATIO, self.mass_bounds.0, self.mass_bounds.1)]
    }
}

/// One body bouncing off an immovable plane.
pub struct SingleBodyProblem {
    pub fps: f64,
    pub t_c: f64,
    pub weights: Weights,
    pub mask: PhaseMask,
    pub plane: Plane,
    /// Tie `x_c` to the projection of the offset onto the plane.
    pub pin_collision_point: bool,
    pub dims: Vec3,
    data: DataTerms,
}

impl SingleBodyProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        body: &BodyObservations,
        fps: f64,
        plane: Plane,
        t_c: f64,
        weights: Weights,
        mask: PhaseMask,
        substep: f64,
        pin_collision_point: bool,
    ) -> Result<Self> {
        ObservationSet { fps, bodies: vec![body.clone()] }.validate()?;
        weights.validate()?;
        plane.validate()?;
        if !(substep > 0.0) {
            return Err(Error::InvalidArgument(format!("substep must be positive, got {substep}")));
        }
        let mut data = DataTerms::new(fps, substep, &weights);
        let slots = BodySlots {
            gauge: [S::B1, S::BETA_X, S::BETA_Y1],
            segment: [S::segment(false), S::segment(true)],
            offset: S::OFFSET,
            pose: S::POSE,
            momentum: [S::momentum(false), S::momentum(true)],
            mass: None,
        };
        data.add_body(body, t_c, &slots)?;
        Ok(Self {
            fps,
            t_c,
            weights,
            mask,
            plane,
            pin_collision_point,
            dims: body.dims,
            data,
        })
    }

    pub fn n_physics_rows(&self) -> usize {
        self.mask.gravity as usize + 6 * self.mask.impulse as usize
    }

    pub fn n_rows(&self) -> usize {
        self.n_physics_rows() + self.data.n_rows()
    }

    fn vars<T: Real>(&self, x: &[T]) -> SingleBodyVars<T> {
        let pin = self.pin_collision_point.then_some((self.plane.point, self.plane.normal));
        SingleBodyVars::new(x, pin)
    }

    fn physics<T: Real>(&self, x: &[T]) -> Vec<T> {
        let v = self.vars(x);
        let mut out = Vec::with_capacity(7);
        if self.mask.gravity {
            out.push(terms::gravity(v.b1, v.beta_x, self.fps) * self.weights.g.sqrt());
        }
        if self.mask.impulse {
            let s = self.weights.imp.sqrt();
            out.extend(terms::impulse_static(&v, self.plane.normal, self.fps).map(|e| e * s));
        }
        out
    }

    pub fn assemble(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.physics(x);
        let np = r.len();
        r.resize(self.n_rows(), 0.0);
        self.data.values_into(x, &mut r[np..]);
        r
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        0.5 * self.assemble(x).iter().map(|e| e * e).sum::<f64>()
    }

    /// Collision point implied by `x`, honouring the pin.
    pub fn collision_point(&self, x: &[f64]) -> Vec3 {
        self.vars(x).x_c
    }

    pub fn block_norms(&self, x: &[f64]) -> BlockNorms {
        let v = self.vars(x);
        let (position, orientation) = self.data.norms(x);
        BlockNorms {
            gravity: terms::gravity(v.b1, v.beta_x, self.fps).abs(),
            momentum: 0.0,
            impulse: norm(&terms::impulse_static(&v, self.plane.normal, self.fps)),
            position,
            orientation,
        }
    }
}

impl LeastSquares for SingleBodyProblem {
    fn n_params(&self) -> usize {
        S::LEN
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.assemble(x)
    }

    fn jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let mut r = vec![0.0; self.n_rows()];
        let mut jac = DMatrix::zeros(self.n_rows(), S::LEN);
        let np = physics_jacobian::<{ S::LEN }>(x, |xd| self.physics(xd), &mut r, &mut jac);
        self.data.jacobian_into(x, &mut r, &mut jac, np);
        (r, jac)
    }

    fn project(&self, x: &mut [f64]) {
        normalize_quat(x, S::POSE);
    }
}
