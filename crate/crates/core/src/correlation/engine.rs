//! Single streaming pass over two frame stacks that accumulates every
//! correlation product the analysis needs.
//!
//! With `a_f = N1_f − m̄1` and `b_f = N2_f − m̄2` (camera 2 optionally
//! mirrored), the pass accumulates in Fourier space
//!
//! * raw:        `Σ_f conj(A_f)·B_f`
//! * corrected:  `Σ_f conj(A_f)·(B_f − B_{f+1 mod F})`
//!
//! The corrected sum pairs every camera-1 frame with a camera-2 frame from
//! another pump pulse and subtracts it. The per-pixel mean cancels from it
//! exactly, so prefixes of the stack can be evaluated at checkpoints by
//! closing the cycle with `−conj(A_{n−1})·B_0`.
//!
//! Frames are transformed in parallel but summed strictly in frame order,
//! so results do not depend on the number of worker threads.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fft::Fft2;
use super::map::{group_cyclic, snr_statistic, window, CorrelationMap};
use crate::error::{Error, Result};
use crate::frames::{check_compatible, Frames};

const CHUNK_FRAMES: usize = 8;

#[derive(Debug, Clone)]
pub(crate) struct PassOptions {
    pub flip: bool,
    /// Largest shift kept in the output maps.
    pub half_window: usize,
    /// Prefix lengths at which to evaluate the detection statistic.
    pub checkpoints: Vec<usize>,
    pub snr_grouping: usize,
    /// Number of contiguous frame blocks for resampling; 0 disables.
    pub blocks: usize,
}

impl PassOptions {
    pub fn maps_only(flip: bool, half_window: usize) -> Self {
        Self {
            flip,
            half_window,
            checkpoints: Vec::new(),
            snr_grouping: 1,
            blocks: 0,
        }
    }
}

/// Unnormalized corrected window of one frame block, with the block's sums
/// of squared deviations used for normalization.
#[derive(Debug, Clone)]
pub(crate) struct BlockMap {
    pub values: Array2<f64>,
    pub ss1: f64,
    pub ss2: f64,
}

pub(crate) struct PassResult {
    pub raw: CorrelationMap,
    pub corrected: Option<CorrelationMap>,
    pub snr: Vec<(usize, f64)>,
    pub blocks: Vec<BlockMap>,
}

struct FrameSpectra {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    /// Deviations from the per-pixel mean.
    dev1: Vec<f64>,
    dev2: Vec<f64>,
}

/// Mirror an image through its center (index `i → n − 1 − i` on both axes).
pub(crate) fn flip_in_place(img: &mut [f64]) {
    img.reverse();
}

fn cross_spectrum_add(acc: &mut [Complex64], a: &[Complex64], b: &[Complex64], sign: f64) {
    for ((s, x), y) in acc.iter_mut().zip(a).zip(b) {
        *s += x.conj() * y * sign;
    }
}

/// Per-pixel variance from running sums of deviations and squared deviations.
fn pixel_variance(sum: &[f64], sum_sq: &[f64], n: usize) -> Vec<f64> {
    let n = n as f64;
    sum.iter()
        .zip(sum_sq)
        .map(|(s, q)| (q / n - (s / n).powi(2)).max(0.0))
        .collect()
}

pub(crate) fn run<A: Frames, B: Frames>(s1: &A, s2: &B, opts: &PassOptions) -> Result<PassResult> {
    check_compatible(s1, s2)?;
    let (w, h) = (s1.width(), s1.height());
    let npix = w * h;
    let frames = s1.frame_count();
    if frames == 0 {
        return Err(Error::TooFewFrames { got: 0, need: 1 });
    }
    for &n in &opts.checkpoints {
        if n < 2 || n > frames {
            return Err(Error::InvalidParameter(format!(
                "checkpoint of {n} frames outside 2..={frames}"
            )));
        }
    }
    let mut checkpoints = opts.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();

    let m1 = s1.mean_image();
    let mut m2 = s2.mean_image();
    if opts.flip {
        flip_in_place(&mut m2);
    }

    let fft = Fft2::new(w, h);
    let zero = Complex64::default();
    let mut raw = vec![zero; npix];
    let mut running = vec![zero; npix];
    let mut block_acc = vec![zero; if opts.blocks > 0 { npix } else { 0 }];
    let n_blocks = opts.blocks.min(frames);
    let block_of = |f: usize| f * n_blocks / frames;
    let mut blocks: Vec<BlockMap> = Vec::with_capacity(n_blocks);
    let (mut block_ss1, mut block_ss2) = (0.0, 0.0);
    let half = [opts.half_window.min((w - 1) / 2), opts.half_window.min((h - 1) / 2)];

    let (mut sum1, mut sq1) = (vec![0.0; npix], vec![0.0; npix]);
    let (mut sum2, mut sq2) = (vec![0.0; npix], vec![0.0; npix]);
    let mut snr = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = 0;

    let mut b0: Vec<Complex64> = Vec::new();
    let mut a_prev: Vec<Complex64> = Vec::new();

    let spectra_of = |f: usize| -> FrameSpectra {
        let mut x = vec![0.0; npix];
        let mut y = vec![0.0; npix];
        s1.frame_into(f, &mut x);
        s2.frame_into(f, &mut y);
        if opts.flip {
            flip_in_place(&mut y);
        }
        for i in 0..npix {
            x[i] -= m1[i];
            y[i] -= m2[i];
        }
        let mut scratch = vec![Complex64::default(); npix];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        fft.forward_pair(&x, &y, &mut a, &mut b, &mut scratch);
        FrameSpectra { a, b, dev1: x, dev2: y }
    };

    let finish_block = |acc: &mut Vec<Complex64>, ss1: &mut f64, ss2: &mut f64, out: &mut Vec<BlockMap>| {
        let full = fft.correlation(acc);
        out.push(BlockMap {
            values: window(&full, w, h, half),
            ss1: *ss1,
            ss2: *ss2,
        });
        acc.iter_mut().for_each(|c| *c = Complex64::default());
        *ss1 = 0.0;
        *ss2 = 0.0;
    };

    let mut start = 0;
    while start < frames {
        let end = (start + CHUNK_FRAMES).min(frames);
        let chunk: Vec<FrameSpectra> = (start..end).into_par_iter().map(spectra_of).collect();
        for (f, fs) in (start..end).zip(chunk) {
            let (mut ss1, mut ss2) = (0.0, 0.0);
            for i in 0..npix {
                let (x, y) = (fs.dev1[i], fs.dev2[i]);
                sum1[i] += x;
                sq1[i] += x * x;
                sum2[i] += y;
                sq2[i] += y * y;
                ss1 += x * x;
                ss2 += y * y;
            }
            cross_spectrum_add(&mut raw, &fs.a, &fs.b, 1.0);
            cross_spectrum_add(&mut running, &fs.a, &fs.b, 1.0);
            if f == 0 {
                b0 = fs.b.clone();
            } else {
                cross_spectrum_add(&mut running, &a_prev, &fs.b, -1.0);
            }
            if n_blocks > 0 {
                if f > 0 {
                    cross_spectrum_add(&mut block_acc, &a_prev, &fs.b, -1.0);
                    if block_of(f - 1) != block_of(f) {
                        finish_block(&mut block_acc, &mut block_ss1, &mut block_ss2, &mut blocks);
                    }
                }
                cross_spectrum_add(&mut block_acc, &fs.a, &fs.b, 1.0);
                block_ss1 += ss1;
                block_ss2 += ss2;
            }
            let n = f + 1;
            if next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == n {
                let mut closed = running.clone();
                cross_spectrum_add(&mut closed, &fs.a, &b0, -1.0);
                let corr = fft.correlation(&closed);
                let v1 = pixel_variance(&sum1, &sq1, n);
                let v2 = pixel_variance(&sum2, &sq2, n);
                let null_var: Vec<f64> = fft
                    .correlate_images(&v1, &v2)
                    .into_iter()
                    .map(|v| (2.0 * n as f64 * v).max(0.0))
                    .collect();
                let g = opts.snr_grouping;
                let values = group_cyclic(&corr, w, h, g)?;
                let variance = group_cyclic(&null_var, w, h, g)?;
                snr.push((n, snr_statistic(&values, Some(&variance))));
                next_checkpoint += 1;
            }
            a_prev = fs.a;
        }
        start = end;
    }

    // close the cycle: the last camera-1 frame pairs with camera-2 frame 0
    cross_spectrum_add(&mut running, &a_prev, &b0, -1.0);
    if n_blocks > 0 {
        cross_spectrum_add(&mut block_acc, &a_prev, &b0, -1.0);
        finish_block(&mut block_acc, &mut block_ss1, &mut block_ss2, &mut blocks);
    }

    let total_ss1: f64 = sq1.iter().sum();
    let total_ss2: f64 = sq2.iter().sum();
    let norm = (total_ss1 * total_ss2).sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::InvalidParameter(
            "a camera stack has no pixel-to-pixel variation".into(),
        ));
    }
    let v1 = pixel_variance(&sum1, &sq1, frames);
    let v2 = pixel_variance(&sum2, &sq2, frames);
    let base_var = fft.correlate_images(&v1, &v2);
    let scaled_var = |factor: f64| -> Vec<f64> {
        base_var
            .iter()
            .map(|v| (factor * frames as f64 * v / (norm * norm)).max(0.0))
            .collect()
    };

    let raw_full: Vec<f64> = fft.correlation(&raw).into_iter().map(|v| v / norm).collect();
    let raw_map = CorrelationMap::new(window(&raw_full, w, h, half), frames, 1, s1.plane(), opts.flip, false)?
        .with_variance(window(&scaled_var(1.0), w, h, half))?;

    let corrected = if frames >= 2 {
        let full: Vec<f64> = fft.correlation(&running).into_iter().map(|v| v / norm).collect();
        Some(
            CorrelationMap::new(window(&full, w, h, half), frames, 1, s1.plane(), opts.flip, true)?
                .with_variance(window(&scaled_var(2.0), w, h, half))?,
        )
    } else {
        None
    };

    Ok(PassResult {
        raw: raw_map,
        corrected,
        snr,
        blocks,
    })
}
