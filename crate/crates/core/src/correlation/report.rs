use serde::{Deserialize, Serialize};

use super::epr::Measurement;
use super::fit::PeakFit;
use super::SnrPoint;
use crate::error::{Error, Result};
use crate::frames::ShotNoiseReference;
use crate::physics::{Axis, EprPrediction, HEISENBERG_BOUND};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerAxis<T> {
    pub x: T,
    pub y: T,
}

impl<T: Copy> PerAxis<T> {
    pub fn from_array(a: [T; 2]) -> Self {
        Self { x: a[0], y: a[1] }
    }

    pub fn get(&self, axis: Axis) -> T {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPlane<T> {
    pub near: T,
    pub far: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductEntry {
    /// `Δ²(x1−x2)·Δ²(p1+p2)` in ħ².
    pub value: f64,
    /// First-order propagation of the fit uncertainties.
    pub unc_propagated: f64,
    /// Standard deviation over block-bootstrap resamples of the frames.
    pub unc_bootstrap: f64,
    pub violated: bool,
}

/// Everything recovered from one near-field and one far-field acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprReport {
    /// `Δ²(x1−x2)`, `Δ²(y1−y2)` in µm².
    pub var_diff: PerAxis<Measurement>,
    /// `Δ²(p1x+p2x)`, `Δ²(p1y+p2y)` in ħ²·µm⁻².
    pub var_sum_p: PerAxis<Measurement>,
    pub products: PerAxis<ProductEntry>,
    pub v: PerAxis<Measurement>,
    pub schmidt_k: Measurement,
    /// `(ħ²/4 − product) / unc_propagated`.
    pub n_sigma_violation: PerAxis<f64>,
    pub r_near: Measurement,
    pub r_far: Measurement,
    pub snr_curve: PerPlane<Vec<SnrPoint>>,
    pub min_frames_detect: PerPlane<Option<usize>>,
    pub fits: PerPlane<PeakFit>,
    /// Closed-form expectation when the source parameters are known.
    pub prediction: Option<EprPrediction>,
    pub metadata: ReportMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub version: String,
    pub units: Units,
    pub frames: PerPlane<usize>,
    pub grid: PerPlane<[usize; 2]>,
    pub snr_grouping: usize,
    pub detection_threshold: f64,
    pub normalization: String,
    pub background: String,
    pub shot_noise_reference: PerPlane<ShotNoiseReference>,
    pub pixel_broadening: String,
    pub uncertainty: String,
    pub bootstrap_blocks: usize,
    pub bootstrap_resamples: usize,
    pub config_digest: PerPlane<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub var_diff: String,
    pub var_sum_p: String,
    pub products: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            var_diff: "um^2".into(),
            var_sum_p: "hbar^2/um^2".into(),
            products: "hbar^2".into(),
        }
    }
}

impl EprReport {
    pub fn violated(&self, axis: Axis) -> bool {
        self.products.get(axis).violated
    }

    pub fn both_violated(&self) -> bool {
        Axis::BOTH.iter().all(|&a| self.violated(a))
    }

    /// Check the internal identities `v = (ħ²/4)/product`, `K = √(v_x·v_y)`
    /// and the violation flags.
    pub fn check_consistency(&self) -> Result<()> {
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        for axis in Axis::BOTH {
            let p = self.products.get(axis);
            if !rel(self.v.get(axis).value, HEISENBERG_BOUND / p.value) {
                return Err(Error::Report(format!("v_{axis} is not 0.25/product")));
            }
            if p.violated != (p.value < HEISENBERG_BOUND) {
                return Err(Error::Report(format!(
                    "violation flag for {axis} disagrees with product"
                )));
            }
        }
        if !rel(self.schmidt_k.value, (self.v.x.value * self.v.y.value).sqrt()) {
            return Err(Error::Report("schmidt_k is not sqrt(v_x * v_y)".into()));
        }
        Ok(())
    }
}
