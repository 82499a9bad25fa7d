use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning parameters of the detector.
///
/// The defaults are the values used for every experiment reported with the
/// method; `min_support`, `max_consecutive_misses` and `chi2_merge` fill in
/// decisions the method leaves open.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Initial std-dev of the direction component `a`.
    pub sigma_a: f64,
    /// Initial std-dev of the direction component `b`.
    pub sigma_b: f64,
    /// Initial std-dev of the origin abscissa, pixels.
    pub sigma_x0: f64,
    /// Initial std-dev of the origin ordinate, pixels.
    pub sigma_y0: f64,
    /// Extension step along the line, pixels.
    pub delta_t: f64,
    /// Minimum cosine between a sampled gradient and the line normal.
    pub tau_angle: f64,
    /// Seed contrast threshold on the raw Sobel magnitude.
    pub tau_gmax: f64,
    /// Half-count of cross-track gradient measures.
    pub n_o: usize,
    /// Cross-track observation std-dev, pixels.
    pub sigma_r: f64,
    /// Minimum number of support points (seed included) to keep a segment.
    pub min_support: usize,
    /// Consecutive failed observations that close one growth direction.
    pub max_consecutive_misses: usize,
    /// Chi-square gate used when merging overlapping segments (2 DOF).
    pub chi2_merge: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            sigma_a: 0.05,
            sigma_b: 0.05,
            sigma_x0: 1.0,
            sigma_y0: 1.0,
            delta_t: 1.0,
            tau_angle: 0.95,
            tau_gmax: 10.0,
            n_o: 2,
            sigma_r: 0.5,
            min_support: 5,
            max_consecutive_misses: 2,
            chi2_merge: 5.99,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_a", self.sigma_a),
            ("sigma_b", self.sigma_b),
            ("sigma_x0", self.sigma_x0),
            ("sigma_y0", self.sigma_y0),
            ("delta_t", self.delta_t),
            ("sigma_r", self.sigma_r),
            ("chi2_merge", self.chi2_merge),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfiguration(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if !(self.tau_angle > 0.0 && self.tau_angle < 1.0) {
            return Err(Error::InvalidConfiguration(format!(
                "tau_angle must lie in (0, 1), got {}",
                self.tau_angle
            )));
        }
        if !self.tau_gmax.is_finite() || self.tau_gmax < 0.0 {
            return Err(Error::InvalidConfiguration(format!(
                "tau_gmax must be non-negative, got {}",
                self.tau_gmax
            )));
        }
        if self.n_o < 1 {
            return Err(Error::InvalidConfiguration("n_o must be at least 1".into()));
        }
        if self.min_support < 2 {
            return Err(Error::InvalidConfiguration(
                "min_support must be at least 2".into(),
            ));
        }
        if self.max_consecutive_misses < 1 {
            return Err(Error::InvalidConfiguration(
                "max_consecutive_misses must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters of the coarse-to-fine variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalParams {
    pub base: DetectorParams,
    /// Number of pyramid levels, full resolution included.
    pub levels: usize,
    /// Scale factor between consecutive levels.
    pub scale: f64,
}

impl Default for HierarchicalParams {
    fn default() -> Self {
        Self {
            base: DetectorParams::default(),
            levels: 3,
            scale: 2.0,
        }
    }
}

impl HierarchicalParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.levels < 1 {
            return Err(Error::InvalidConfiguration(
                "levels must be at least 1".into(),
            ));
        }
        if !(self.scale > 1.0 && self.scale <= 2.0) {
            return Err(Error::InvalidConfiguration(format!(
                "scale must lie in (1, 2], got {}",
                self.scale
            )));
        }
        Ok(())
    }
}
