use serde::{Deserialize, Serialize};

use crate::dynamics::BodyState;
use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub x_c: Vec3,
    /// Unit normal pointing from the second box towards the first.
    pub n: Vec3,
    pub depth: f64,
}

fn axes(s: &BodyState) -> [Vec3; 3] {
    let r = s.q.to_matrix();
    [r.column(0), r.column(1), r.column(2)]
}

fn half_extent(axes: &[Vec3; 3], half: Vec3, d: Vec3) -> f64 {
    half.x * axes[0].dot(d).abs() + half.y * axes[1].dot(d).abs() + half.z * axes[2].dot(d).abs()
}

/// Separating-axis test between two oriented boxes with edge lengths `da`
/// and `db`. On overlap, reports the axis of least penetration.
pub fn detect_contact_obb(a: &BodyState, da: Vec3, b: &BodyState, db: Vec3) -> Option<ContactPoint> {
    let ax = axes(a);
    let bx = axes(b);
    let (ha, hb) = (da * 0.5, db * 0.5);
    let mut candidates: Vec<Vec3> = Vec::with_capacity(15);
    candidates.extend(ax);
    candidates.extend(bx);
    for u in ax {
        for v in bx {
            let c = u.cross(v);
            if c.norm() > 1e-9 {
                candidates.push(c.normalize());
            }
        }
    }
    let d = a.p - b.p;
    let mut best: Option<(f64, Vec3)> = None;
    for axis in candidates {
        let ra = half_extent(&ax, ha, axis);
        let rb = half_extent(&bx, hb, axis);
        let dist = d.dot(axis);
        let depth = ra + rb - dist.abs();
        if depth < 0.0 {
            return None;
        }
        if best.is_none_or(|(bd, _)| depth < bd - 1e-12) {
            let n = if dist < 0.0 { -axis } else { axis };
            best = Some((depth, n));
        }
    }
    let (depth, n) = best?;
    // Overlap interval along n, midpoint placed on the line between centres.
    let sa = a.p.dot(n);
    let sb = b.p.dot(n);
    let lo = (sa - half_extent(&ax, ha, n)).max(sb - half_extent(&bx, hb, n));
    let hi = (sa + half_extent(&ax, ha, n)).min(sb + half_extent(&bx, hb, n));
    let mid = (a.p + b.p) * 0.5;
    let x_c = mid + n * (0.5 * (lo + hi) - mid.dot(n));
    Some(ContactPoint { x_c, n, depth })
}
