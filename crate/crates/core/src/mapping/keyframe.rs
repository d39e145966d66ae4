use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Scan};

/// A selected scan with its graph state.
#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub index: usize,
    /// Position of the scan in the full input sequence.
    pub frame: usize,
    pub pose: Pose,
    pub scan: Scan,
    pub stamp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyframeParams {
    /// Meters.
    pub d_min: f64,
    /// Degrees.
    pub theta_min: f64,
}

impl Default for KeyframeParams {
    fn default() -> Self {
        Self {
            d_min: 0.5,
            theta_min: 15.0,
        }
    }
}

/// True when `pose` has moved at least `d_min` or turned at least `theta_min`
/// since the last keyframe. Without a previous keyframe the answer is yes.
pub fn select_keyframe(last: Option<&Keyframe>, pose: &Pose, params: &KeyframeParams) -> bool {
    last.is_none_or(|k| moved_enough(&k.pose, pose, params))
}

pub(crate) fn moved_enough(from: &Pose, to: &Pose, params: &KeyframeParams) -> bool {
    let (dt, dr) = from.distance_to(to);
    dt >= params.d_min || dr >= params.theta_min.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kf(pose: Pose) -> Keyframe {
        Keyframe {
            index: 0,
            frame: 0,
            pose,
            scan: Scan::new(0.0, Default::default()),
            stamp: 0.0,
        }
    }

    #[test]
    fn selection_rule() {
        let p = KeyframeParams::default();
        assert!(select_keyframe(None, &Pose::identity(), &p));
        let last = kf(Pose::identity());
        assert!(!select_keyframe(Some(&last), &Pose::identity(), &p));
        assert!(select_keyframe(Some(&last), &Pose::from_translation(0.6, 0.0, 0.0), &p));
        assert!(!select_keyframe(Some(&last), &Pose::from_translation(0.4, 0.0, 0.0), &p));
        let turn = Pose::from_rpy(Default::default(), 0.0, 0.0, 16f64.to_radians());
        assert!(select_keyframe(Some(&last), &turn, &p));
    }
}
