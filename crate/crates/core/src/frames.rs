//! In-memory frame stacks: raw grayscale, thresholded binary, and grouped counts.

use serde::{Deserialize, Serialize};

use crate::detector::{Camera, CameraNoise, OpticalGeometry};
use crate::error::{Error, Result};
use crate::sampler::PlaneKind;

/// Classical reference variance of a pixel value, used to express
/// intensity-difference noise in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotNoiseReference {
    /// Poisson counts: variance equals the mean.
    Poisson,
    /// Thresholded 0/1 pixels: variance `m(1 − m)`.
    Bernoulli,
}

/// Read-only access to a stack of equally shaped frames.
pub trait Frames: Sync {
    fn plane(&self) -> PlaneKind;
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn frame_count(&self) -> usize;
    /// Write frame `index` (row-major) into `out`, which has `width·height` entries.
    fn frame_into(&self, index: usize, out: &mut [f64]);
    fn shot_noise_reference(&self) -> ShotNoiseReference;

    fn pixels(&self) -> usize {
        self.width() * self.height()
    }

    /// Per-pixel mean over all frames.
    fn mean_image(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.pixels()];
        let mut buf = vec![0.0; self.pixels()];
        for f in 0..self.frame_count() {
            self.frame_into(f, &mut buf);
            for (s, v) in sum.iter_mut().zip(&buf) {
                *s += v;
            }
        }
        let n = self.frame_count() as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub geometry: OpticalGeometry,
    pub noise: CameraNoise,
    pub seed: u64,
    /// SHA-256 of the resolved run configuration, hex encoded; empty when unknown.
    pub config_digest: String,
}

/// Raw 16-bit grayscale frames from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    plane: PlaneKind,
    camera: Camera,
    width: usize,
    height: usize,
    data: Vec<u16>,
    pub meta: StackMeta,
}

impl FrameStack {
    pub fn new(plane: PlaneKind, camera: Camera, width: usize, height: usize, meta: StackMeta) -> Self {
        Self {
            plane,
            camera,
            width,
            height,
            data: Vec::new(),
            meta,
        }
    }

    pub fn push_frame(&mut self, frame: &[u16]) -> Result<()> {
        if frame.len() != self.width * self.height {
            return Err(Error::ShapeMismatch(format!(
                "frame has {} pixels, stack expects {}x{}",
                frame.len(),
                self.width,
                self.height
            )));
        }
        self.data.extend_from_slice(frame);
        Ok(())
    }

    pub fn plane(&self) -> PlaneKind {
        self.plane
    }

    pub fn camera(&self) -> Camera {
        self.camera
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / (self.width * self.height)
    }

    pub fn frame(&self, index: usize) -> &[u16] {
        let n = self.width * self.height;
        &self.data[index * n..(index + 1) * n]
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }
}

/// Thresholded frames, one byte per pixel holding 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFrameStack {
    plane: PlaneKind,
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryFrameStack {
    pub fn from_raw(plane: PlaneKind, width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        let n = width * height;
        if n == 0 || !data.len().is_multiple_of(n) || data.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes is not a whole number of {width}x{height} frames",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("binary frames must hold only 0 or 1".into()));
        }
        Ok(Self {
            plane,
            width,
            height,
            data,
        })
    }

    pub fn frame(&self, index: usize) -> &[u8] {
        let n = self.width * self.height;
        &self.data[index * n..(index + 1) * n]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Mean fluence (detections per pixel per frame) over the pixels whose
    /// mean is at least half the maximum.
    pub fn illuminated_fluence(&self) -> f64 {
        let mean = self.mean_image();
        let max = mean.iter().cloned().fold(0.0, f64::max);
        let lit: Vec<f64> = mean.into_iter().filter(|&m| m >= 0.5 * max && m > 0.0).collect();
        if lit.is_empty() {
            0.0
        } else {
            lit.iter().sum::<f64>() / lit.len() as f64
        }
    }
}

impl Frames for BinaryFrameStack {
    fn plane(&self) -> PlaneKind {
        self.plane
    }
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn frame_count(&self) -> usize {
        self.data.len() / (self.width * self.height)
    }
    fn frame_into(&self, index: usize, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(self.frame(index)) {
            *o = v as f64;
        }
    }
    fn shot_noise_reference(&self) -> ShotNoiseReference {
        ShotNoiseReference::Bernoulli
    }
}

/// Integer photon counts per pixel, e.g. after grouping binary pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CountFrameStack {
    plane: PlaneKind,
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl CountFrameStack {
    pub fn from_raw(plane: PlaneKind, width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        let n = width * height;
        if n == 0 || !data.len().is_multiple_of(n) || data.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} values is not a whole number of {width}x{height} frames",
                data.len()
            )));
        }
        Ok(Self {
            plane,
            width,
            height,
            data,
        })
    }

    pub fn frame(&self, index: usize) -> &[u16] {
        let n = self.width * self.height;
        &self.data[index * n..(index + 1) * n]
    }
}

impl Frames for CountFrameStack {
    fn plane(&self) -> PlaneKind {
        self.plane
    }
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn frame_count(&self) -> usize {
        self.data.len() / (self.width * self.height)
    }
    fn frame_into(&self, index: usize, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(self.frame(index)) {
            *o = v as f64;
        }
    }
    fn shot_noise_reference(&self) -> ShotNoiseReference {
        ShotNoiseReference::Poisson
    }
}

/// View of a stack with frame `i` replaced by frame `(i + offset) mod F`.
/// Pairing camera 1 with a cyclically offset camera 2 gives frames that
/// share no pump pulses.
pub struct CyclicOffset<'a, S: Frames> {
    inner: &'a S,
    offset: usize,
}

impl<'a, S: Frames> CyclicOffset<'a, S> {
    pub fn new(inner: &'a S, offset: usize) -> Self {
        Self { inner, offset }
    }
}

impl<S: Frames> Frames for CyclicOffset<'_, S> {
    fn plane(&self) -> PlaneKind {
        self.inner.plane()
    }
    fn width(&self) -> usize {
        self.inner.width()
    }
    fn height(&self) -> usize {
        self.inner.height()
    }
    fn frame_count(&self) -> usize {
        self.inner.frame_count()
    }
    fn frame_into(&self, index: usize, out: &mut [f64]) {
        self.inner
            .frame_into((index + self.offset) % self.inner.frame_count(), out)
    }
    fn shot_noise_reference(&self) -> ShotNoiseReference {
        self.inner.shot_noise_reference()
    }
}

/// Sum non-overlapping `factor × factor` pixel blocks of every frame.
pub fn group_pixels<S: Frames>(stack: &S, factor: usize) -> Result<CountFrameStack> {
    let (w, h) = (stack.width(), stack.height());
    for size in [w, h] {
        if factor == 0 || size % factor != 0 {
            return Err(Error::BadGrouping { factor, size });
        }
    }
    let (gw, gh) = (w / factor, h / factor);
    let mut data = Vec::with_capacity(gw * gh * stack.frame_count());
    let mut buf = vec![0.0; w * h];
    let mut block = vec![0u32; gw * gh];
    for f in 0..stack.frame_count() {
        stack.frame_into(f, &mut buf);
        block.iter_mut().for_each(|b| *b = 0);
        for r in 0..h {
            for c in 0..w {
                block[(r / factor) * gw + c / factor] += buf[r * w + c] as u32;
            }
        }
        data.extend(block.iter().map(|&b| b.min(u16::MAX as u32) as u16));
    }
    CountFrameStack::from_raw(stack.plane(), gw, gh, data)
}

/// Check that two stacks can be correlated pixel against pixel.
pub fn check_compatible<A: Frames, B: Frames>(a: &A, b: &B) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.frame_count() != b.frame_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} frames",
            a.frame_count(),
            b.frame_count()
        )));
    }
    if a.plane() != b.plane() {
        return Err(Error::PlaneMismatch(format!("{} vs {}", a.plane(), b.plane())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binary(w: usize, h: usize, frames: usize, seed: u64) -> BinaryFrameStack {
        let mut state = seed;
        let data = (0..w * h * frames)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 33).is_multiple_of(5) as u8
            })
            .collect();
        BinaryFrameStack::from_raw(PlaneKind::NearField, w, h, data).unwrap()
    }

    #[test]
    fn grouping_by_one_is_identity() {
        let s = binary(8, 6, 3, 1);
        let g = group_pixels(&s, 1).unwrap();
        let mut a = vec![0.0; 48];
        let mut b = vec![0.0; 48];
        for f in 0..3 {
            s.frame_into(f, &mut a);
            g.frame_into(f, &mut b);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn eight_pixel_grouping_shape() {
        let s = BinaryFrameStack::from_raw(PlaneKind::FarField, 512, 512, vec![0; 512 * 512]).unwrap();
        let g = group_pixels(&s, 8).unwrap();
        assert_eq!((g.width(), g.height()), (64, 64));
    }

    #[test]
    fn grouping_rejects_non_divisor() {
        let s = binary(12, 12, 1, 0);
        assert!(matches!(
            group_pixels(&s, 5),
            Err(Error::BadGrouping { factor: 5, size: 12 })
        ));
        assert!(group_pixels(&s, 0).is_err());
    }

    #[test]
    fn cyclic_offset_wraps() {
        let s = binary(4, 4, 3, 9);
        let shifted = CyclicOffset::new(&s, 1);
        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        shifted.frame_into(2, &mut a);
        s.frame_into(0, &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_binary_values() {
        assert!(BinaryFrameStack::from_raw(PlaneKind::NearField, 2, 2, vec![0, 1, 2, 0]).is_err());
        assert!(BinaryFrameStack::from_raw(PlaneKind::NearField, 2, 2, vec![0, 1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn grouping_conserves_counts(seed in any::<u64>(), g in prop::sample::select(vec![1usize, 2, 3, 4, 6, 12])) {
            let s = binary(12, 12, 2, seed);
            let grouped = group_pixels(&s, g).unwrap();
            for f in 0..2 {
                let before: u32 = s.frame(f).iter().map(|&v| v as u32).sum();
                let after: u32 = grouped.frame(f).iter().map(|&v| v as u32).sum();
                prop_assert_eq!(before, after);
            }
        }
    }
}
