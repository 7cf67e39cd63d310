//! Cross-correlation of twin-camera frame stacks and everything derived
//! from it: peak fits, conditional variances, EPR products, detection
//! statistics, and sub-shot-noise ratios.

mod analysis;
mod engine;
mod epr;
mod fft;
mod fit;
mod map;
mod report;
mod shot_noise;

use serde::{Deserialize, Serialize};

pub use analysis::{analyze_plane, build_report, AnalysisOptions, PlaneAnalysis, ReportContext, DEFAULT_SNR_FRAMES};
pub use epr::{epr_products, variances_from_fit, EprProducts, Measurement, PIXEL_BROADENING};
pub use fit::{fit_peak, PeakFit, PeakFitUncertainty, FIT_HALF_WINDOW};
pub use map::{CorrelationMap, DETECTION_GROUPING, DETECTION_THRESHOLD};
pub use report::{EprReport, PerAxis, PerPlane, ProductEntry, ReportMetadata, Units};
pub use shot_noise::{sub_shot_noise, Roi, ShotNoiseRatio};

use crate::error::{Error, Result};
use crate::frames::{check_compatible, CyclicOffset, Frames};
use crate::sampler::PlaneKind;
use engine::PassOptions;

/// Largest shift kept in correlation maps, in native pixels.
pub const DEFAULT_HALF_WINDOW: usize = 64;

/// Pearson-normalized cross-covariance of two stacks over a centered window
/// of shifts. With `flip`, camera-2 frames are mirrored through the image
/// center first, which registers far-field twins (`p2 = −p1`).
pub fn cross_correlate<A: Frames, B: Frames>(s1: &A, s2: &B, flip: bool) -> Result<CorrelationMap> {
    Ok(engine::run(s1, s2, &PassOptions::maps_only(flip, DEFAULT_HALF_WINDOW))?.raw)
}

/// Subtract the accidental-coincidence estimate: the correlation of camera-1
/// frame `i` with camera-2 frame `i + 1` (cyclic), which share no pump pulse.
pub fn background_correct<A: Frames, B: Frames>(map: &CorrelationMap, s1: &A, s2: &B) -> Result<CorrelationMap> {
    check_compatible(s1, s2)?;
    let frames = s1.frame_count();
    if frames < 2 {
        return Err(Error::TooFewFrames { got: frames, need: 2 });
    }
    if map.background_corrected {
        return Err(Error::InvalidParameter("map is already background-corrected".into()));
    }
    if map.frame_count != frames || map.plane != s1.plane() {
        return Err(Error::ShapeMismatch(format!(
            "map of {} {} frames does not come from these {} {} frames",
            map.frame_count,
            map.plane,
            frames,
            s1.plane()
        )));
    }
    let [hx, hy] = map.half_widths();
    let g = map.grouping;
    let native_half = hx.max(hy) * g + g / 2;
    let shifted = CyclicOffset::new(s2, 1);
    let accidental = engine::run(s1, &shifted, &PassOptions::maps_only(map.flipped, native_half))?
        .raw
        .grouped(map.grouping)?;
    if accidental.values().dim() != map.values().dim() {
        return Err(Error::ShapeMismatch("background window differs from map window".into()));
    }
    let values = map.values() - accidental.values();
    let corrected = CorrelationMap::new(values, frames, map.grouping, map.plane, map.flipped, true)?;
    match (map.variance(), accidental.variance()) {
        (Some(a), Some(b)) => corrected.with_variance(a + b),
        _ => Ok(corrected),
    }
}

/// Cross-correlation with the accidental background removed, in one pass.
pub fn corrected_correlation<A: Frames, B: Frames>(s1: &A, s2: &B, flip: bool) -> Result<CorrelationMap> {
    let frames = s1.frame_count();
    engine::run(s1, s2, &PassOptions::maps_only(flip, DEFAULT_HALF_WINDOW))?
        .corrected
        .ok_or(Error::TooFewFrames { got: frames, need: 2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub frames: usize,
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrCurve {
    pub plane: PlaneKind,
    pub grouping: usize,
    pub points: Vec<SnrPoint>,
    /// Fewest frames whose SNR reached the detection threshold.
    pub min_frames_detect: Option<usize>,
}

impl SnrCurve {
    pub(crate) fn from_points(plane: PlaneKind, grouping: usize, raw: Vec<(usize, f64)>) -> Self {
        let points: Vec<SnrPoint> = raw.into_iter().map(|(frames, snr)| SnrPoint { frames, snr }).collect();
        let min_frames_detect = points.iter().find(|p| p.snr >= DETECTION_THRESHOLD).map(|p| p.frames);
        Self {
            plane,
            grouping,
            points,
            min_frames_detect,
        }
    }

    /// Least-squares slope of `ln SNR` against `ln frames`.
    pub fn exponent(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.snr > 0.0 && p.snr.is_finite())
            .map(|p| ((p.frames as f64).ln(), p.snr.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

/// Detection statistic of the background-corrected correlation, grouped into
/// `g × g` blocks, for each prefix length in `frame_counts`. Far-field
/// stacks are registered by mirroring camera 2.
pub fn snr_curve<A: Frames, B: Frames>(s1: &A, s2: &B, frame_counts: &[usize], g: usize) -> Result<SnrCurve> {
    let opts = PassOptions {
        flip: s1.plane() == PlaneKind::FarField,
        half_window: 0,
        checkpoints: frame_counts.to_vec(),
        snr_grouping: g,
        blocks: 0,
    };
    let pass = engine::run(s1, s2, &opts)?;
    Ok(SnrCurve::from_points(s1.plane(), g, pass.snr))
}
