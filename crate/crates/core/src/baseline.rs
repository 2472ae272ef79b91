//! Intensity-sum scan-line classifier ("Thresh") and its threshold fit.

use crate::classify::ScanlineLabels;
use crate::error::{Error, Result};
use crate::frame_io::{GrayImage, LabeledFrame};

/// Threshold on the summed intensity of a cropped column.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Kappa(f64);

impl Kappa {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidParam(format!("kappa must be > 0, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Column intensity sums below the cropped band.
pub fn column_sums(img: &GrayImage, crop_rows: usize) -> Result<Vec<f64>> {
    let cropped = img.crop_top(crop_rows)?;
    let mut sums = vec![0.0; cropped.width()];
    for r in 0..cropped.height() {
        for (s, &p) in sums.iter_mut().zip(cropped.row(r)) {
            *s += p;
        }
    }
    Ok(sums)
}

/// Shadow iff the column sum is strictly below `kappa`.
pub fn thresh_classify(img: &GrayImage, kappa: Kappa, crop_rows: usize) -> Result<ScanlineLabels> {
    Ok(column_sums(img, crop_rows)?
        .into_iter()
        .map(|s| s < kappa.value())
        .collect::<Vec<_>>()
        .into())
}

/// Candidate thresholds `step, 2*step, ...` up to the first multiple of `step`
/// strictly above the largest column sum, so the all-shadow operating point is
/// always reachable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaSweep {
    pub step: f64,
}

impl Default for KappaSweep {
    fn default() -> Self {
        Self { step: 100.0 }
    }
}

impl KappaSweep {
    pub fn candidates(&self, max_sum: f64) -> Vec<f64> {
        let last = (max_sum / self.step).floor() as u64 + 1;
        (1..=last).map(|i| i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaFit {
    pub kappa: Kappa,
    pub accuracy: f64,
}

/// Accuracy-maximizing threshold over the sweep; ties go to the smaller kappa.
pub fn select_kappa(frames: &[LabeledFrame], crop_rows: usize, sweep: KappaSweep) -> Result<KappaFit> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(sweep.step > 0.0) {
        return Err(Error::InvalidParam(format!("sweep step must be > 0, got {}", sweep.step)));
    }
    let mut samples: Vec<(f64, bool)> = Vec::new();
    for f in frames {
        let sums = column_sums(&f.image, crop_rows)?;
        if sums.len() != f.labels.len() {
            return Err(Error::LengthMismatch(sums.len(), f.labels.len()));
        }
        samples.extend(sums.into_iter().zip(f.labels.as_slice().iter().copied()));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = samples.len();
    let visible_total = samples.iter().filter(|s| !s.1).count();
    let max_sum = samples.last().map(|s| s.0).unwrap_or(0.0);

    // Sweep kappa upward; samples below kappa are predicted shadow.
    let (mut below, mut shadow_below, mut visible_below) = (0usize, 0usize, 0usize);
    let mut best: Option<(usize, f64)> = None;
    for kappa in sweep.candidates(max_sum) {
        while below < total && samples[below].0 < kappa {
            if samples[below].1 {
                shadow_below += 1;
            } else {
                visible_below += 1;
            }
            below += 1;
        }
        let correct = shadow_below + (visible_total - visible_below);
        if best.is_none_or(|(c, _)| correct > c) {
            best = Some((correct, kappa));
        }
    }
    let (correct, kappa) = best.expect("sweep is never empty");
    Ok(KappaFit {
        kappa: Kappa::new(kappa)?,
        accuracy: correct as f64 / total as f64,
    })
}
