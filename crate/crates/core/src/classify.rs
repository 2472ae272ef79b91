//! Per-scan-line shadow classification and the end-to-end detector.

use std::fmt;

use crate::error::{Error, Result};
use crate::frame_io::GrayImage;
use crate::params::Params;
use crate::saliency::{filter_stack, std_map, threshold_points};
use crate::sparsify::{density_field, thin};
use crate::topology::{
    confidence_map, mean_confidence, occurrence_map, rips_triangles_capped, Complex,
    ConfidenceMap,
};

/// One label per image column; `true` marks an acoustic-shadow scan line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScanlineLabels(Vec<bool>);

impl ScanlineLabels {
    pub fn new(labels: Vec<bool>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn shadow_count(&self) -> usize {
        self.0.iter().filter(|&&s| s).count()
    }
}

impl fmt::Display for ScanlineLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            f.write_str(if s { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl From<Vec<bool>> for ScanlineLabels {
    fn from(v: Vec<bool>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub labels: ScanlineLabels,
    /// Confidence over the cropped frame.
    pub confidence: ConfidenceMap,
    pub mean_confidence: f64,
    pub simplex_counts: Vec<u32>,
    pub cloud_size: usize,
    pub triangle_count: usize,
    /// The complex, in cropped-frame coordinates.
    pub complex: Complex,
}

/// Number of triangles whose closed region meets each vertical line `col = sl`,
/// i.e. whose column extent contains `sl`.
pub fn scanline_counts(cx: &Complex, width: usize) -> Vec<u32> {
    let mut diff = vec![0i64; width + 1];
    for [a, b, c] in cx.iter_triangles() {
        let lo = a.col.min(b.col).min(c.col).max(0) as usize;
        let hi = a.col.max(b.col).max(c.col);
        if hi < 0 || lo >= width {
            continue;
        }
        let hi = (hi as usize).min(width - 1);
        diff[lo] += 1;
        diff[hi + 1] -= 1;
    }
    let mut running = 0i64;
    diff[..width]
        .iter()
        .map(|d| {
            running += d;
            running as u32
        })
        .collect()
}

/// Shadow iff fewer than `tau` triangles cover the scan line.
pub fn classify_scanlines(counts: &[u32], tau: u32) -> Result<ScanlineLabels> {
    if tau < 1 {
        return Err(Error::InvalidParam("tau must be >= 1".into()));
    }
    Ok(ScanlineLabels(counts.iter().map(|&c| c < tau).collect()))
}

/// Full pipeline on an uncropped frame.
pub fn detect(img: &GrayImage, params: &Params) -> Result<DetectionResult> {
    params.validate()?;
    let cropped = img.crop_top(params.crop_rows)?;
    let stack = filter_stack(&cropped, params)?;
    let saliency = std_map(&stack);
    drop(stack);
    let cloud = threshold_points(&saliency, params.gamma)?;
    let density = density_field(&saliency, params)?;
    let sparse = thin(&cloud, &density)?;
    let complex = rips_triangles_capped(&sparse, params.epsilon, params.max_triangles)?;
    let occ = occurrence_map(&complex, cropped.width(), cropped.height());
    let confidence = confidence_map(&occ);
    let simplex_counts = scanline_counts(&complex, img.width());
    let labels = classify_scanlines(&simplex_counts, params.tau)?;
    Ok(DetectionResult {
        labels,
        mean_confidence: mean_confidence(&confidence),
        confidence,
        simplex_counts,
        cloud_size: cloud.len(),
        triangle_count: complex.triangles.len(),
        complex,
    })
}
