use crate::geometry::Pose;

/// Correspondence scale learned from how far registrations move away from their prior.
///
/// Each registration contributes `|Δt| + 2·r_max·sin(Δθ/2)`, the largest point
/// displacement the prior error causes within sensor range, when that exceeds
/// `min_motion`. The scale is the RMS of the contributions, floored at `floor`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveThreshold {
    initial: f64,
    min_motion: f64,
    max_range: f64,
    floor: f64,
    sse: f64,
    samples: usize,
}

impl AdaptiveThreshold {
    pub fn new(initial: f64, min_motion: f64, max_range: f64, floor: f64) -> Self {
        Self {
            initial,
            min_motion,
            max_range,
            floor,
            sse: 0.0,
            samples: 0,
        }
    }

    pub fn model_error(&self, deviation: &Pose) -> f64 {
        let rot = 2.0 * self.max_range * (0.5 * deviation.angle()).sin();
        deviation.translation.norm() + rot
    }

    /// Records `prior⁻¹ · registered`.
    pub fn update(&mut self, deviation: &Pose) {
        let e = self.model_error(deviation);
        if e > self.min_motion {
            self.sse += e * e;
            self.samples += 1;
        }
    }

    pub fn sigma(&self) -> f64 {
        if self.samples == 0 {
            return self.initial.max(self.floor);
        }
        (self.sse / self.samples as f64).sqrt().max(self.floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_initial_and_respects_floor() {
        let mut t = AdaptiveThreshold::new(0.5, 0.1, 15.0, 0.1);
        assert_eq!(t.sigma(), 0.5);
        t.update(&Pose::from_translation(0.01, 0.0, 0.0));
        assert_eq!(t.sigma(), 0.5);
        t.update(&Pose::from_translation(0.3, 0.0, 0.0));
        t.update(&Pose::from_translation(0.0, 0.4, 0.0));
        assert!((t.sigma() - (0.125f64).sqrt()).abs() < 1e-12);
        let mut f = AdaptiveThreshold::new(0.5, 0.0, 15.0, 0.1);
        f.update(&Pose::from_translation(0.01, 0.0, 0.0));
        assert_eq!(f.sigma(), 0.1);
    }
}
