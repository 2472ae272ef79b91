use std::fmt;

use crate::error::{Error, Result};

/// Pipeline parameters. Defaults are the published operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Std-dev of the vertical (depth-axis) Gaussian, pixels.
    pub sigma_u: f64,
    /// Std-dev of the horizontal (scan-line axis) Gaussian, pixels.
    pub sigma_v: f64,
    /// Images in the filter stack, including the unfiltered input.
    pub stack_size: usize,
    /// Saliency threshold as a percentage of 255.
    pub gamma: f64,
    /// Minimum point spacing, pixels.
    pub phi1: f64,
    /// Spacing range added where saliency is low, pixels.
    pub phi2: f64,
    /// Std-dev of the density smoothing Gaussian, pixels.
    pub sigma_w: f64,
    /// Rips distance threshold, pixels.
    pub epsilon: f64,
    /// A scan line covered by fewer than `tau` triangles is shadow.
    pub tau: u32,
    /// Rows cropped from the top of each frame.
    pub crop_rows: usize,
    /// Abort threshold on the number of triangles.
    pub max_triangles: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            sigma_u: 1.8,
            sigma_v: 0.2,
            stack_size: 6,
            gamma: 4.0,
            phi1: 15.0,
            phi2: 20.0,
            sigma_w: 20.0,
            epsilon: 60.0,
            tau: 2,
            crop_rows: 100,
            max_triangles: 2_000_000,
        }
    }
}

/// Parameters that can be swept or grid-searched.
pub const TUNABLE: &[&str] = &[
    "sigma_u", "sigma_v", "stack_size", "gamma", "phi1", "phi2", "sigma_w", "epsilon", "tau",
    "crop_rows",
];

fn parse_count(name: &str, value: f64) -> Result<usize> {
    if value.fract() != 0.0 || value < 0.0 || !value.is_finite() {
        return Err(Error::InvalidParam(format!(
            "{name} must be a non-negative integer, got {value}"
        )));
    }
    Ok(value as usize)
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_u", self.sigma_u),
            ("sigma_v", self.sigma_v),
            ("sigma_w", self.sigma_w),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.stack_size < 2 {
            return Err(Error::InvalidParam(format!(
                "stack_size must be >= 2, got {}",
                self.stack_size
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 100.0) {
            return Err(Error::InvalidParam(format!(
                "gamma must lie in (0, 100], got {}",
                self.gamma
            )));
        }
        for (name, v) in [("phi1", self.phi1), ("phi2", self.phi2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.tau < 1 {
            return Err(Error::InvalidParam("tau must be >= 1".into()));
        }
        Ok(())
    }

    /// Sets a tunable parameter by name. Integer parameters reject fractional values.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "sigma_u" => self.sigma_u = value,
            "sigma_v" => self.sigma_v = value,
            "stack_size" => self.stack_size = parse_count(name, value)?,
            "gamma" => self.gamma = value,
            "phi1" => self.phi1 = value,
            "phi2" => self.phi2 = value,
            "sigma_w" => self.sigma_w = value,
            "epsilon" => self.epsilon = value,
            "tau" => self.tau = parse_count(name, value)? as u32,
            "crop_rows" => self.crop_rows = parse_count(name, value)?,
            "max_triangles" => self.max_triangles = parse_count(name, value)?,
            other => return Err(Error::InvalidParam(format!("unknown parameter {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "sigma_u" => self.sigma_u,
            "sigma_v" => self.sigma_v,
            "stack_size" => self.stack_size as f64,
            "gamma" => self.gamma,
            "phi1" => self.phi1,
            "phi2" => self.phi2,
            "sigma_w" => self.sigma_w,
            "epsilon" => self.epsilon,
            "tau" => self.tau as f64,
            "crop_rows" => self.crop_rows as f64,
            "max_triangles" => self.max_triangles as f64,
            other => return Err(Error::InvalidParam(format!("unknown parameter {other:?}"))),
        })
    }

    /// Absolute saliency threshold in gray levels.
    pub fn saliency_threshold(&self) -> f64 {
        self.gamma * 255.0 / 100.0
    }
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sigma_u={} sigma_v={} stack_size={} gamma={} phi1={} phi2={} sigma_w={} epsilon={} tau={} crop_rows={}",
            self.sigma_u,
            self.sigma_v,
            self.stack_size,
            self.gamma,
            self.phi1,
            self.phi2,
            self.sigma_w,
            self.epsilon,
            self.tau,
            self.crop_rows
        )
    }
}
