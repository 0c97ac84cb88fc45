use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Side};
use crate::geom::{Quatf, Vec3};

/// One annotated pose sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame: f64,
    pub p: Vec3,
    /// Scalar-first orientation.
    pub q: Quatf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyObservations {
    pub name: String,
    /// Bounding-box edge lengths, m.
    pub dims: Vec3,
    pub observations: Vec<Observation>,
}

impl BodyObservations {
    /// Splits sample indices at `t_c`; a sample exactly at `t_c` counts as
    /// pre-collision.
    pub fn split(&self, t_c: f64) -> (Vec<usize>, Vec<usize>) {
        let mut pre = Vec::new();
        let mut post = Vec::new();
        for (i, o) in self.observations.iter().enumerate() {
            if o.frame <= t_c {
                pre.push(i);
            } else {
                post.push(i);
            }
        }
        (pre, post)
    }
}

/// Sparse pose annotations for one (two-body) or one-and-static (single
/// body) collision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub fps: f64,
    pub bodies: Vec<BodyObservations>,
}

impl ObservationSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(schema("fps", format!("must be positive, got {}", self.fps)));
        }
        if self.bodies.is_empty() || self.bodies.len() > 2 {
            return Err(schema(
                "bodies",
                format!("expected 1 or 2 bodies, got {}", self.bodies.len()),
            ));
        }
        for (bi, b) in self.bodies.iter().enumerate() {
            let d = b.dims;
            if !(d.x > 0.0 && d.y > 0.0 && d.z > 0.0) || !d.is_finite() {
                return Err(schema(format!("bodies[{bi}].dims"), "must be positive".into()));
            }
            let mut last = f64::NEG_INFINITY;
            for (oi, o) in b.observations.iter().enumerate() {
                let path = format!("bodies[{bi}].observations[{oi}]");
                if !o.frame.is_finite() || o.frame <= last {
                    return Err(schema(
                        format!("{path}.frame"),
                        "frames must be finite and strictly increasing".into(),
                    ));
                }
                last = o.frame;
                if !o.p.is_finite() {
                    return Err(schema(format!("{path}.p"), "must be finite".into()));
                }
                if !o.q.is_finite() || o.q.norm() < 1e-9 {
                    return Err(schema(format!("{path}.q"), "must be a finite non-zero quaternion".into()));
                }
            }
        }
        Ok(())
    }

    /// Checks that every body has at least two samples on each side of
    /// `t_c`.
    pub fn require_sides(&self, t_c: f64) -> Result<()> {
        for b in &self.bodies {
            let (pre, post) = b.split(t_c);
            for (side, n) in [(Side::Pre, pre.len()), (Side::Post, post.len())] {
                if n < 2 {
                    return Err(Error::InsufficientData {
                        body: b.name.clone(),
                        side,
                        count: n,
                    });
                }
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated union of all sample frames.
    pub fn frames(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self
            .bodies
            .iter()
            .flat_map(|b| b.observations.iter().map(|o| o.frame))
            .collect();
        f.sort_by(|a, b| a.total_cmp(b));
        f.dedup();
        f
    }

    /// Total number of pose samples.
    pub fn len(&self) -> usize {
        self.bodies.iter().map(|b| b.observations.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bounding-box diagonal of all sample positions.
    pub fn position_extent(&self) -> f64 {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for o in self.bodies.iter().flat_map(|b| b.observations.iter()) {
            lo = Vec3::new(lo.x.min(o.p.x), lo.y.min(o.p.y), lo.z.min(o.p.z));
            hi = Vec3::new(hi.x.max(o.p.x), hi.y.max(o.p.y), hi.z.max(o.p.z));
        }
        if self.is_empty() {
            0.0
        } else {
            (hi - lo).norm()
        }
    }
}

fn schema(path: impl Into<String>, message: String) -> Error {
    Error::Schema {
        path: path.into(),
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Quat, V3};

    fn body(frames: &[f64]) -> BodyObservations {
        BodyObservations {
            name: "a".into(),
            dims: V3::new(0.1, 0.2, 0.3),
            observations: frames
                .iter()
                .map(|&f| Observation { frame: f, p: V3::new(f, 0.0, 0.0), q: Quat::identity() })
                .collect(),
        }
    }

    #[test]
    fn tie_goes_to_pre_segment() {
        let b = body(&[1.0, 2.0, 3.0, 4.0]);
        let (pre, post) = b.split(2.0);
        assert_eq!(pre, vec![0, 1]);
        assert_eq!(post, vec![2, 3]);
    }

    #[test]
    fn insufficient_data_names_body_and_side() {
        let set = ObservationSet { fps: 30.0, bodies: vec![body(&[1.0, 2.0, 3.0])] };
        let err = set.require_sides(2.5).unwrap_err();
        assert_eq!(err, Error::InsufficientData { body: "a".into(), side: Side::Post, count: 1 });
        assert!(err.to_string().contains("insufficient-data"));
    }

    #[test]
    fn frames_must_increase() {
        let set = ObservationSet { fps: 30.0, bodies: vec![body(&[1.0, 1.0])] };
        match set.validate() {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "bodies[0].observations[1].frame"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn union_of_frames() {
        let mut b2 = body(&[0.5, 2.0, 7.0]);
        b2.name = "b".into();
        let set = ObservationSet { fps: 30.0, bodies: vec![body(&[1.0, 2.0, 3.0]), b2] };
        assert_eq!(set.frames(), vec![0.5, 1.0, 2.0, 3.0, 7.0]);
        assert_eq!(set.len(), 6);
    }
}
