//! Full per-plane analysis and the combined report.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::engine::{self, BlockMap, PassOptions};
use super::epr::{epr_products, variances_from_fit, Measurement};
use super::fit::{fit_peak, fit_unchecked, PeakFit};
use super::map::{CorrelationMap, DETECTION_THRESHOLD};
use super::report::{EprReport, PerAxis, PerPlane, ProductEntry, ReportMetadata, Units};
use super::shot_noise::{sub_shot_noise, Roi, ShotNoiseRatio};
use super::{SnrCurve, DEFAULT_HALF_WINDOW};
use crate::detector::OpticalGeometry;
use crate::error::{Error, Result};
use crate::frames::Frames;
use crate::physics::{predict, BiphotonParams, HEISENBERG_BOUND};
use crate::sampler::PlaneKind;

pub const DEFAULT_SNR_FRAMES: &[usize] = &[2, 3, 5, 10, 20, 50, 100, 200, 500, 1000, 2000];

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// Block size for the detection statistic.
    pub snr_grouping: usize,
    /// Prefix lengths for the SNR curve; counts above the stack size are dropped.
    pub snr_frames: Vec<usize>,
    pub half_window: usize,
    pub bootstrap_blocks: usize,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            snr_grouping: 8,
            snr_frames: DEFAULT_SNR_FRAMES.to_vec(),
            half_window: DEFAULT_HALF_WINDOW,
            bootstrap_blocks: 40,
            bootstrap_resamples: 100,
            bootstrap_seed: 0x0b00_75ed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlaneAnalysis {
    pub plane: PlaneKind,
    pub frames: usize,
    pub grid: [usize; 2],
    /// Background-corrected correlation at native resolution.
    pub map: CorrelationMap,
    pub fit: PeakFit,
    /// Detection statistic of `map`.
    pub significance: f64,
    /// Conditional variances `[x, y]` in plane units.
    pub variances: [Measurement; 2],
    /// Variances refitted on block-bootstrap resamples; failed refits are `None`.
    pub bootstrap: Vec<Option<[f64; 2]>>,
    pub shot_noise: ShotNoiseRatio,
    pub snr: SnrCurve,
}

fn resample_map(blocks: &[BlockMap], rng: &mut ChaCha8Rng, template: &CorrelationMap) -> Result<CorrelationMap> {
    let mut sum = Array2::<f64>::zeros(blocks[0].values.dim());
    let (mut ss1, mut ss2) = (0.0, 0.0);
    for _ in 0..blocks.len() {
        let b = &blocks[rng.random_range(0..blocks.len())];
        sum += &b.values;
        ss1 += b.ss1;
        ss2 += b.ss2;
    }
    let norm = (ss1 * ss2).sqrt();
    if norm <= 0.0 {
        return Err(Error::FitFailed("resample has no variance".into()));
    }
    CorrelationMap::new(
        sum / norm,
        template.frame_count,
        1,
        template.plane,
        template.flipped,
        true,
    )
}

/// Correlate, background-correct, fit, convert to variances, bootstrap, and
/// evaluate the SNR curve and sub-shot-noise ratio for one plane. Far-field
/// camera-2 frames are mirrored to register twins.
pub fn analyze_plane<A: Frames, B: Frames>(
    s1: &A,
    s2: &B,
    geometry: &OpticalGeometry,
    opts: &AnalysisOptions,
) -> Result<PlaneAnalysis> {
    let plane = s1.plane();
    let flip = plane == PlaneKind::FarField;
    let frames = s1.frame_count();
    if frames < 2 {
        return Err(Error::TooFewFrames { got: frames, need: 2 });
    }
    if s1.width() != geometry.grid || s1.height() != geometry.grid {
        return Err(Error::GeometryMismatch(format!(
            "frames are {}x{}, geometry grid is {}",
            s1.width(),
            s1.height(),
            geometry.grid
        )));
    }
    let checkpoints: Vec<usize> = opts
        .snr_frames
        .iter()
        .copied()
        .filter(|&n| n >= 2 && n <= frames)
        .collect();
    let pass = engine::run(
        s1,
        s2,
        &PassOptions {
            flip,
            half_window: opts.half_window,
            checkpoints,
            snr_grouping: opts.snr_grouping,
            blocks: opts.bootstrap_blocks,
        },
    )?;
    let snr = SnrCurve::from_points(plane, opts.snr_grouping, pass.snr);
    let map = pass.corrected.expect("at least two frames");
    let fit = fit_peak(&map)?;
    let significance = map.significance();
    let variances = variances_from_fit(&fit, geometry, plane, 1)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.bootstrap_seed ^ u64::from(plane.code()));
    let mut bootstrap = Vec::with_capacity(opts.bootstrap_resamples);
    if pass.blocks.len() >= 2 {
        for _ in 0..opts.bootstrap_resamples {
            let refit = resample_map(&pass.blocks, &mut rng, &map)
                .and_then(|m| fit_unchecked(&m))
                .and_then(|f| variances_from_fit(&f, geometry, plane, 1))
                .ok()
                .map(|v| [v[0].value, v[1].value]);
            bootstrap.push(refit);
        }
    }

    let roi = Roi::illuminated(s1, s2, flip)?;
    let shot_noise = sub_shot_noise(s1, s2, flip, &roi)?;
    Ok(PlaneAnalysis {
        plane,
        frames,
        grid: [s1.width(), s1.height()],
        map,
        fit,
        significance,
        variances,
        bootstrap,
        shot_noise,
        snr,
    })
}

fn std_dev(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Context recorded alongside the numbers.
#[derive(Debug, Clone, Default)]
pub struct ReportContext {
    /// Source parameters, when known, for the closed-form prediction.
    pub params: Option<BiphotonParams>,
    pub config_digest: Option<PerPlane<String>>,
}

pub fn build_report(
    near: &PlaneAnalysis,
    far: &PlaneAnalysis,
    opts: &AnalysisOptions,
    ctx: &ReportContext,
) -> Result<EprReport> {
    if near.plane != PlaneKind::NearField || far.plane != PlaneKind::FarField {
        return Err(Error::PlaneMismatch(format!(
            "expected near and far analyses, got {} and {}",
            near.plane, far.plane
        )));
    }
    let epr = epr_products(near.variances, far.variances)?;

    let mut boot = [Vec::new(), Vec::new()];
    for (a, b) in near.bootstrap.iter().zip(&far.bootstrap) {
        if let (Some(a), Some(b)) = (a, b) {
            for i in 0..2 {
                boot[i].push(a[i] * b[i]);
            }
        }
    }
    let products = [0, 1].map(|i| ProductEntry {
        value: epr.products[i].value,
        unc_propagated: epr.products[i].uncertainty,
        unc_bootstrap: std_dev(&boot[i]).unwrap_or(f64::NAN),
        violated: epr.products[i].value < HEISENBERG_BOUND,
    });
    if products.iter().any(|p| p.unc_bootstrap.is_nan()) {
        return Err(Error::Report("too few successful bootstrap refits".into()));
    }

    let prediction = ctx.params.as_ref().map(predict).transpose()?;
    let notes = vec![
        "threshold and EM gain are stand-in values chosen for photon-counting operation".to_string(),
        "thresholded pixels read 1 however many photons they received".to_string(),
        "var_sum_p is the variance of the summed momenta p1+p2".to_string(),
        format!(
            "SNR: peak of the grouped corrected map, standardized by its expected variance for uncorrelated cameras, over the standard deviation outside the 3x3 cells around the peak; detected at >= {DETECTION_THRESHOLD}"
        ),
    ];
    Ok(EprReport {
        var_diff: PerAxis::from_array(near.variances),
        var_sum_p: PerAxis::from_array(far.variances),
        products: PerAxis::from_array(products),
        v: PerAxis::from_array(epr.v),
        schmidt_k: epr.schmidt_k,
        n_sigma_violation: PerAxis::from_array(epr.n_sigma),
        r_near: near.shot_noise.r,
        r_far: far.shot_noise.r,
        snr_curve: PerPlane {
            near: near.snr.points.clone(),
            far: far.snr.points.clone(),
        },
        min_frames_detect: PerPlane {
            near: near.snr.min_frames_detect,
            far: far.snr.min_frames_detect,
        },
        fits: PerPlane {
            near: near.fit,
            far: far.fit,
        },
        prediction,
        metadata: ReportMetadata {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            units: Units::default(),
            frames: PerPlane {
                near: near.frames,
                far: far.frames,
            },
            grid: PerPlane {
                near: near.grid,
                far: far.grid,
            },
            snr_grouping: opts.snr_grouping,
            detection_threshold: DETECTION_THRESHOLD,
            normalization: "pearson: sum over frames and pixels of (N1-m1)(N2-m2) divided by the product of the total standard deviations of both cameras".into(),
            background: "correlation of camera-1 frame i with camera-2 frame i+1 (cyclic) subtracted".into(),
            shot_noise_reference: PerPlane {
                near: near.shot_noise.reference,
                far: far.shot_noise.reference,
            },
            pixel_broadening: "s_eff^2/6 subtracted from fitted variances".into(),
            uncertainty: "unc_propagated: first-order propagation of fit covariance scaled by residual variance; unc_bootstrap: block bootstrap over frames".into(),
            bootstrap_blocks: opts.bootstrap_blocks,
            bootstrap_resamples: opts.bootstrap_resamples,
            config_digest: ctx.config_digest.clone().unwrap_or(PerPlane {
                near: String::new(),
                far: String::new(),
            }),
            notes,
        },
    })
}
