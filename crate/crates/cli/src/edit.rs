//! Placement edits shared by `compose place` and the service.

use impactfit_core::composer::{auto_time, AutoTiming, AxisAngle, SceneComposition};
use impactfit_core::{Error, Result, Vec3};
use serde::{Deserialize, Serialize};

/// New values for the placement fields of one pair. Physics fields of the
/// reconstruction are not editable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEdit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<Vec3>,
    /// Must be about the gravity axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<AxisAngle>,
    /// Shorthand for a rotation about world +Y, rad.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_about_gravity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_mass: Option<f64>,
}

impl PairEdit {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Applies the edit to pair `index` and drops stale predictions. On error
    /// the scene is left untouched.
    pub fn apply(&self, scene: &mut SceneComposition, index: usize) -> Result<()> {
        let Some(old) = scene.pairs.get(index) else {
            return Err(Error::InvalidArgument(format!("pair {index} does not exist ({} pairs)", scene.pairs.len())));
        };
        let mut pair = old.clone();
        if let Some(t) = self.translation {
            pair.translation = t;
        }
        match (self.rotation, self.rotation_about_gravity) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidArgument("give either rotation or rotation_about_gravity".into()));
            }
            (Some(r), None) => pair.rotation_about_gravity = r.gravity_angle()?,
            (None, Some(a)) => pair.rotation_about_gravity = a,
            (None, None) => {}
        }
        if let Some(t) = self.time_offset {
            pair.time_offset = t;
        }
        if let Some(m) = self.reference_mass {
            pair.reference_mass = m;
        }
        pair.validate()?;
        scene.pairs[index] = pair;
        scene.clear_prediction();
        Ok(())
    }
}

/// Auto-timing of pair `late` against pair `early` over every body
/// combination; the closest approach wins, the first combination on ties.
pub fn best_auto_time(scene: &SceneComposition, early: usize, late: usize) -> Result<(usize, usize, AutoTiming)> {
    let (Some(e), Some(l)) = (scene.pairs.get(early), scene.pairs.get(late)) else {
        return Err(Error::InvalidArgument(format!("pairs {early} and {late} must exist")));
    };
    let mut best: Option<(usize, usize, AutoTiming)> = None;
    for eb in 0..e.body_count() {
        for lb in 0..l.body_count() {
            let t = auto_time(e, eb, l, lb)?;
            if best.as_ref().is_none_or(|b| t.distance < b.2.distance) {
                best = Some((eb, lb, t));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("pairs without bodies".into()))
}
