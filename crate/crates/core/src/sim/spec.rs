use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sensor envelope. Angles in degrees, distances in meters.
///
/// Defaults describe the compact 3D sonar in navigation mode: 90°×40° field
/// of view, 15 m range at 5 Hz, 0.6°×2.4° beams and 4 mm range resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SonarSpec {
    pub h_fov: f64,
    pub v_fov: f64,
    pub max_range: f64,
    pub rate: f64,
    pub h_beam: f64,
    pub v_beam: f64,
    pub range_quantum: f64,
    /// Cast each beam in a random direction inside its footprint instead of
    /// the footprint center, so consecutive frames do not sample surfaces on
    /// the same fixed lattice. Points are reported where the echo came from.
    pub footprint_sampling: bool,
}

impl Default for SonarSpec {
    fn default() -> Self {
        Self {
            h_fov: 90.0,
            v_fov: 40.0,
            max_range: 15.0,
            rate: 5.0,
            h_beam: 0.6,
            v_beam: 2.4,
            range_quantum: 0.004,
            footprint_sampling: true,
        }
    }
}

impl SonarSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.h_fov,
            self.v_fov,
            self.max_range,
            self.rate,
            self.h_beam,
            self.v_beam,
            self.range_quantum,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("sonar spec values must be positive".into()));
        }
        if self.h_beam > self.h_fov || self.v_beam > self.v_fov {
            return Err(Error::Config("beam width exceeds field of view".into()));
        }
        Ok(())
    }

    pub fn grid_size(&self) -> (usize, usize) {
        (
            (self.h_fov / self.h_beam - 1e-9).ceil() as usize,
            (self.v_fov / self.v_beam - 1e-9).ceil() as usize,
        )
    }
}

/// Measurement corruption. Probabilities in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Range noise for a perfectly rough surface; smooth surfaces get up to twice this.
    pub range_sigma_base: f64,
    /// Material-independent chance of losing a return.
    pub dropout_base: f64,
    pub multipath_enable: bool,
    pub multipath_rate: f64,
    pub ring_artifact_enable: bool,
    /// Outer/inner radius ratio of the ring artifact.
    pub ring_radius_ratio: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            range_sigma_base: 0.01,
            dropout_base: 0.02,
            multipath_enable: false,
            multipath_rate: 0.01,
            ring_artifact_enable: false,
            ring_radius_ratio: 1.15,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// No range noise, no dropouts, no multipath; detection still follows the material model.
    pub fn noiseless() -> Self {
        Self {
            range_sigma_base: 0.0,
            dropout_base: 0.0,
            multipath_enable: false,
            multipath_rate: 0.0,
            ring_artifact_enable: false,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Seed for scan `index` of a run, `seed ⊕ index`.
    pub fn for_scan(&self, index: u64) -> Self {
        Self {
            seed: self.seed ^ index,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range_sigma_base >= 0.0 && self.range_sigma_base.is_finite()) {
            return Err(Error::Config("range_sigma_base must be >= 0".into()));
        }
        for (name, v) in [
            ("dropout_base", self.dropout_base),
            ("multipath_rate", self.multipath_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.ring_radius_ratio >= 1.0) {
            return Err(Error::Config("ring_radius_ratio must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let s = SonarSpec::default();
        assert!(s.validate().is_ok());
        assert_eq!(s.grid_size(), (150, 17));
    }

    #[test]
    fn rejects_wide_beam() {
        let s = SonarSpec {
            h_beam: 100.0,
            ..SonarSpec::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseConfig::default().validate().is_ok());
        let n = NoiseConfig {
            multipath_rate: 2.0,
            ..NoiseConfig::default()
        };
        assert!(n.validate().is_err());
    }
}
