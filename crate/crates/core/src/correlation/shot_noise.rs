//! Intensity-difference noise between twin pixels in shot-noise units.

use serde::{Deserialize, Serialize};

use super::engine::flip_in_place;
use super::epr::Measurement;
use crate::error::{Error, Result};
use crate::frames::{check_compatible, Frames, ShotNoiseReference};

/// Pixel mask selecting where twin-pixel differences are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl Roi {
    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries for a {width}x{height} image",
                mask.len()
            )));
        }
        Ok(Self { width, height, mask })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![true; width * height],
        }
    }

    /// Pixels where the summed mean image of both cameras (camera 2 mirrored
    /// if `flip`) reaches half its maximum.
    pub fn illuminated<A: Frames, B: Frames>(s1: &A, s2: &B, flip: bool) -> Result<Self> {
        check_compatible(s1, s2)?;
        let mut m2 = s2.mean_image();
        if flip {
            flip_in_place(&mut m2);
        }
        let total: Vec<f64> = s1.mean_image().iter().zip(&m2).map(|(a, b)| a + b).collect();
        let max = total.iter().cloned().fold(0.0, f64::max);
        let mask = total.iter().map(|&t| max > 0.0 && t >= 0.5 * max).collect();
        Self::from_mask(s1.width(), s1.height(), mask)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.mask[index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseRatio {
    pub r: Measurement,
    pub reference: ShotNoiseReference,
    pub frames: usize,
    pub roi_pixels: usize,
}

/// Ratio of the variance of `N1 − N2` (over frames, summed over ROI pixels)
/// to the classical expectation for uncorrelated pixels. Count stacks use
/// the Poisson reference `⟨N1 + N2⟩`; thresholded stacks use the Bernoulli
/// reference `Var(N1) + Var(N2)`, since a 0/1 pixel cannot have Poisson
/// statistics. The uncertainty is the delta-method standard error of the
/// ratio of per-frame sums.
pub fn sub_shot_noise<A: Frames, B: Frames>(s1: &A, s2: &B, flip: bool, roi: &Roi) -> Result<ShotNoiseRatio> {
    check_compatible(s1, s2)?;
    if roi.width != s1.width() || roi.height != s1.height() {
        return Err(Error::ShapeMismatch("region of interest does not match frames".into()));
    }
    if roi.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let frames = s1.frame_count();
    if frames < 2 {
        return Err(Error::TooFewFrames { got: frames, need: 2 });
    }
    let reference = match (s1.shot_noise_reference(), s2.shot_noise_reference()) {
        (ShotNoiseReference::Bernoulli, ShotNoiseReference::Bernoulli) => ShotNoiseReference::Bernoulli,
        _ => ShotNoiseReference::Poisson,
    };
    let idx: Vec<usize> = (0..s1.pixels()).filter(|&i| roi.contains(i)).collect();
    let npix = s1.pixels();
    let mut x = vec![0.0; npix];
    let mut y = vec![0.0; npix];
    let load = |f: usize, x: &mut [f64], y: &mut [f64]| {
        s1.frame_into(f, x);
        s2.frame_into(f, y);
        if flip {
            flip_in_place(y);
        }
    };

    let mut m1 = vec![0.0; idx.len()];
    let mut m2 = vec![0.0; idx.len()];
    for f in 0..frames {
        load(f, &mut x, &mut y);
        for (k, &i) in idx.iter().enumerate() {
            m1[k] += x[i];
            m2[k] += y[i];
        }
    }
    let n = frames as f64;
    m1.iter_mut().chain(m2.iter_mut()).for_each(|m| *m /= n);

    let mut a = Vec::with_capacity(frames);
    let mut b = Vec::with_capacity(frames);
    for f in 0..frames {
        load(f, &mut x, &mut y);
        let (mut af, mut bf) = (0.0, 0.0);
        for (k, &i) in idx.iter().enumerate() {
            let d1 = x[i] - m1[k];
            let d2 = y[i] - m2[k];
            af += (d1 - d2).powi(2);
            bf += match reference {
                ShotNoiseReference::Bernoulli => d1 * d1 + d2 * d2,
                ShotNoiseReference::Poisson => x[i] + y[i],
            };
        }
        a.push(af);
        b.push(bf);
    }
    // Σ(D − D̄)² over frames estimates (F − 1)·Var; the Bernoulli reference
    // carries the same factor, the Poisson mean does not.
    let bias = match reference {
        ShotNoiseReference::Bernoulli => 1.0,
        ShotNoiseReference::Poisson => n / (n - 1.0),
    };
    let sum_a: f64 = a.iter().sum();
    let sum_b: f64 = b.iter().sum();
    if sum_b <= 0.0 {
        return Err(Error::InvalidParameter(
            "no detections inside the region of interest".into(),
        ));
    }
    let ratio = sum_a / sum_b;
    let mean_b = sum_b / n;
    let spread: f64 = a.iter().zip(&b).map(|(ai, bi)| (ai - ratio * bi).powi(2)).sum::<f64>() / (n - 1.0);
    let se = bias * (spread / n).sqrt() / mean_b;
    Ok(ShotNoiseRatio {
        r: Measurement::new(bias * ratio, se),
        reference,
        frames,
        roi_pixels: idx.len(),
    })
}
