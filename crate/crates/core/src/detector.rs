//! Optical projection onto the two sensors and the EMCCD detection chain.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::frames::{BinaryFrameStack, FrameStack, StackMeta};
use crate::sampler::{frame_rng, PairEvent, PlaneKind, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Camera {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Camera {
    pub fn number(self) -> u8 {
        match self {
            Camera::One => 1,
            Camera::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Camera::One),
            2 => Some(Camera::Two),
            _ => None,
        }
    }

    fn stream(self) -> Stream {
        match self {
            Camera::One => Stream::Camera1,
            Camera::Two => Stream::Camera2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalGeometry {
    /// Sensor side length in pixels.
    pub grid: usize,
    pub pixel_pitch_um: f64,
    /// Crystal-to-sensor magnification (near field).
    pub magnification: f64,
    /// Fourier lens focal length (far field).
    pub focal_length_mm: f64,
    pub wavelength_um: f64,
    /// Optical-axis offset from the sensor center, `[x, y]` pixels, per camera.
    pub center_offset: [[i32; 2]; 2],
}

impl Default for OpticalGeometry {
    fn default() -> Self {
        Self {
            grid: 512,
            pixel_pitch_um: 16.0,
            magnification: 2.47,
            focal_length_mm: 120.0,
            wavelength_um: 0.710,
            center_offset: [[0, 0], [0, 0]],
        }
    }
}

/// Result of mapping a coordinate to the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Inside { row: usize, col: usize },
    Outside { row: i64, col: i64 },
}

impl OpticalGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 || !self.grid.is_multiple_of(2) || self.grid > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "grid must be even and in [2, 65535], got {}",
                self.grid
            )));
        }
        for (name, v) in [
            ("pixel_pitch_um", self.pixel_pitch_um),
            ("magnification", self.magnification),
            ("focal_length_mm", self.focal_length_mm),
            ("wavelength_um", self.wavelength_um),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.grid * self.grid
    }

    /// Sensor displacement (µm) per unit of the plane's coordinate.
    /// Near field: M. Far field: f·λ/2π, so that `x = f·λ·p / 2π` with ħ = 1.
    pub fn sensor_scale(&self, plane: PlaneKind) -> f64 {
        match plane {
            PlaneKind::NearField => self.magnification,
            PlaneKind::FarField => self.focal_length_mm * 1e3 * self.wavelength_um / (2.0 * PI),
        }
    }

    /// Size of one (possibly grouped) pixel in plane coordinates:
    /// µm in the crystal plane, or ħ·µm⁻¹ in the far field.
    pub fn effective_pixel(&self, plane: PlaneKind, grouping: usize) -> f64 {
        self.pixel_pitch_um * grouping as f64 / self.sensor_scale(plane)
    }

    pub fn project(&self, coord: [f64; 2], plane: PlaneKind, camera: Camera) -> Projection {
        let scale = self.sensor_scale(plane) / self.pixel_pitch_um;
        let offset = self.center_offset[camera.number() as usize - 1];
        let half = (self.grid / 2) as i64;
        let col = (coord[0] * scale).floor() as i64 + half + offset[0] as i64;
        let row = (coord[1] * scale).floor() as i64 + half + offset[1] as i64;
        let n = self.grid as i64;
        if (0..n).contains(&col) && (0..n).contains(&row) {
            Projection::Inside {
                row: row as usize,
                col: col as usize,
            }
        } else {
            Projection::Outside { row, col }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraNoise {
    pub quantum_efficiency: f64,
    /// Clock-induced charge, mean spurious electrons per pixel per frame.
    pub cic_rate: f64,
    /// Mean electron-multiplication gain, grayscale units per electron.
    pub em_gain: f64,
    /// Readout noise standard deviation, grayscale units.
    pub readout_sigma: f64,
    /// A pixel counts as one photon iff its grayscale value exceeds this.
    pub threshold: f64,
}

impl Default for CameraNoise {
    /// Threshold at 5 readout sigmas with gain 50 readout sigmas; the
    /// combined false-detection rate stays below 1e-3 per pixel per frame.
    fn default() -> Self {
        Self {
            quantum_efficiency: 0.9,
            cic_rate: 5e-4,
            em_gain: 500.0,
            readout_sigma: 10.0,
            threshold: 50.0,
        }
    }
}

impl CameraNoise {
    /// Unit efficiency, no spurious charge, no readout noise, and a gain high
    /// enough that every electron saturates far above threshold.
    pub fn ideal() -> Self {
        Self {
            quantum_efficiency: 1.0,
            cic_rate: 0.0,
            em_gain: 1e7,
            readout_sigma: 0.0,
            threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.quantum_efficiency;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantum_efficiency must be in (0, 1], got {eta}"
            )));
        }
        if !(self.cic_rate.is_finite() && self.cic_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cic_rate must be >= 0, got {}",
                self.cic_rate
            )));
        }
        if !(self.em_gain.is_finite() && self.em_gain >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "em_gain must be >= 1, got {}",
                self.em_gain
            )));
        }
        if !(self.readout_sigma.is_finite() && self.readout_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "readout_sigma must be >= 0, got {}",
                self.readout_sigma
            )));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Smallest analog value that quantizes above the threshold.
    fn analog_cut(&self) -> f64 {
        self.threshold.floor() + 0.5
    }

    /// Probability that a pixel with no electrons is read above threshold.
    pub fn dark_false_positive_rate(&self) -> f64 {
        let cut = self.analog_cut();
        if self.readout_sigma == 0.0 {
            return if cut <= 0.0 { 1.0 } else { 0.0 };
        }
        upper_tail(cut / self.readout_sigma)
    }

    /// Probability that a pixel holding exactly one electron is read above
    /// threshold: exponential gain output plus Gaussian readout noise.
    pub fn single_electron_detection(&self) -> f64 {
        let cut = self.analog_cut();
        let g = self.em_gain;
        let s = self.readout_sigma;
        if s == 0.0 {
            return (-cut.max(0.0) / g).exp();
        }
        // P(E + X > t), E ~ Exp(mean g), X ~ N(0, s²)
        upper_tail(cut / s) + (-cut / g + s * s / (2.0 * g * g)).exp() * Normal::standard().cdf(cut / s - s / g)
    }

    /// Dark-pixel false detections per pixel per frame from readout noise and CIC.
    pub fn false_positive_rate(&self) -> f64 {
        let p_cic = 1.0 - (-self.cic_rate).exp();
        (1.0 - p_cic) * self.dark_false_positive_rate() + p_cic * self.single_electron_detection()
    }
}

fn upper_tail(z: f64) -> f64 {
    Normal::standard().sf(z)
}

fn expose_camera(
    pairs: &[PairEvent],
    geometry: &OpticalGeometry,
    noise: &CameraNoise,
    plane: PlaneKind,
    camera: Camera,
    seed: u64,
    frame_index: usize,
) -> Vec<u16> {
    let mut rng = frame_rng(seed, plane, camera.stream(), frame_index as u64);
    let npix = geometry.pixels();
    let mut electrons = vec![0u32; npix];

    for pair in pairs {
        let coord = match camera {
            Camera::One => pair.coord1,
            Camera::Two => pair.coord2,
        };
        if noise.quantum_efficiency < 1.0 && rng.random::<f64>() >= noise.quantum_efficiency {
            continue;
        }
        if let Projection::Inside { row, col } = geometry.project(coord, plane, camera) {
            electrons[row * geometry.grid + col] += 1;
        }
    }

    if noise.cic_rate > 0.0 {
        // Independent per-pixel Poisson counts, drawn as one Poisson total
        // scattered uniformly.
        let total = Poisson::new(noise.cic_rate * npix as f64)
            .expect("validated rate")
            .sample(&mut rng) as usize;
        for _ in 0..total {
            electrons[rng.random_range(0..npix)] += 1;
        }
    }

    let mut frame = vec![0u16; npix];
    for (out, &n) in frame.iter_mut().zip(&electrons) {
        let mut analog = if n > 0 {
            Gamma::new(n as f64, noise.em_gain)
                .expect("validated gain")
                .sample(&mut rng)
        } else {
            0.0
        };
        if noise.readout_sigma > 0.0 {
            analog += noise.readout_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        *out = analog.round().clamp(0.0, u16::MAX as f64) as u16;
    }
    frame
}

/// Grayscale frames of both cameras for one exposure. Photon 1 of each pair
/// goes to camera 1 and photon 2 to camera 2.
pub fn expose_frame(
    pairs: &[PairEvent],
    geometry: &OpticalGeometry,
    noise: &CameraNoise,
    plane: PlaneKind,
    seed: u64,
    frame_index: usize,
) -> [Vec<u16>; 2] {
    [Camera::One, Camera::Two].map(|camera| expose_camera(pairs, geometry, noise, plane, camera, seed, frame_index))
}

/// Expose a sequence of frames; frame `i` uses the random streams of index `i`.
pub fn expose(
    pairs_per_frame: &[Vec<PairEvent>],
    geometry: &OpticalGeometry,
    noise: &CameraNoise,
    plane: PlaneKind,
    seed: u64,
) -> Result<(FrameStack, FrameStack)> {
    geometry.validate()?;
    noise.validate()?;
    if pairs_per_frame.is_empty() {
        return Err(Error::InvalidParameter("at least one frame is required".into()));
    }
    let meta = StackMeta {
        geometry: *geometry,
        noise: *noise,
        seed,
        config_digest: String::new(),
    };
    let mut cam1 = FrameStack::new(plane, Camera::One, geometry.grid, geometry.grid, meta.clone());
    let mut cam2 = FrameStack::new(plane, Camera::Two, geometry.grid, geometry.grid, meta);
    for (i, pairs) in pairs_per_frame.iter().enumerate() {
        let [a, b] = expose_frame(pairs, geometry, noise, plane, seed, i);
        cam1.push_frame(&a)?;
        cam2.push_frame(&b)?;
    }
    Ok((cam1, cam2))
}

pub fn threshold_frame(gray: &[u16], threshold: f64, out: &mut Vec<u8>) {
    out.extend(gray.iter().map(|&g| u8::from(g as f64 > threshold)));
}

/// Convert grayscale to binary photon maps. A pixel hit by several photons
/// still reads 1.
pub fn threshold(stack: &FrameStack, noise: &CameraNoise) -> BinaryFrameStack {
    let mut data = Vec::with_capacity(stack.data().len());
    threshold_frame(stack.data(), noise.threshold, &mut data);
    BinaryFrameStack::from_raw(stack.plane(), stack.width(), stack.height(), data)
        .expect("shape preserved by thresholding")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::BiphotonParams;
    use crate::sampler::sample_pairs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn origin_pair() -> PairEvent {
        PairEvent {
            coord1: [0.0, 0.0],
            coord2: [0.0, 0.0],
        }
    }

    #[test]
    fn origin_maps_to_center_pixel() {
        let g = OpticalGeometry::default();
        for plane in [PlaneKind::NearField, PlaneKind::FarField] {
            assert_eq!(
                g.project([0.0, 0.0], plane, Camera::One),
                Projection::Inside { row: 256, col: 256 }
            );
        }
    }

    #[test]
    fn out_of_sensor_is_reported() {
        let g = OpticalGeometry {
            grid: 64,
            ..Default::default()
        };
        // 40 px to the right of center in the near field
        let x = 40.0 * g.pixel_pitch_um / g.magnification;
        assert_eq!(
            g.project([x + 0.01, 0.0], PlaneKind::NearField, Camera::Two),
            Projection::Outside { row: 32, col: 72 }
        );
    }

    #[test]
    fn far_field_mirror_pixels() {
        let g = OpticalGeometry::default();
        let px = g.effective_pixel(PlaneKind::FarField, 1);
        for p in [0.3 * px, 7.6 * px, -13.2 * px] {
            let (Projection::Inside { col: a, .. }, Projection::Inside { col: b, .. }) = (
                g.project([p, 0.0], PlaneKind::FarField, Camera::One),
                g.project([-p, 0.0], PlaneKind::FarField, Camera::Two),
            ) else {
                panic!("inside");
            };
            assert_eq!(a + b, g.grid - 1);
        }
    }

    #[test]
    fn geometry_arithmetic() {
        let g = OpticalGeometry::default();
        // far-field momentum bin, 2π·s_pix/(f·λ)
        let bin = g.effective_pixel(PlaneKind::FarField, 1);
        assert!((bin - 1.18e-3).abs() < 0.005e-3, "{bin}");
        // Table variance 299 µm² in the crystal plane, in pixels
        let std_px = 299f64.sqrt() / g.effective_pixel(PlaneKind::NearField, 1);
        assert!((std_px - 2.67).abs() < 0.01, "{std_px}");
    }

    #[test]
    fn ideal_single_pair_hits_center() {
        let g = OpticalGeometry::default();
        let noise = CameraNoise::ideal();
        for plane in [PlaneKind::NearField, PlaneKind::FarField] {
            let (a, b) = expose(&[vec![origin_pair()]], &g, &noise, plane, 3).unwrap();
            for stack in [threshold(&a, &noise), threshold(&b, &noise)] {
                let frame = stack.frame(0);
                assert_eq!(frame.iter().map(|&v| v as usize).sum::<usize>(), 1);
                assert_eq!(frame[256 * 512 + 256], 1);
            }
        }
    }

    #[test]
    fn half_efficiency_is_binomial() {
        let g = OpticalGeometry {
            grid: 128,
            ..Default::default()
        };
        let noise = CameraNoise {
            quantum_efficiency: 0.5,
            ..CameraNoise::ideal()
        };
        // one pair per pixel center, so every detected photon is a distinct hit
        let px = g.effective_pixel(PlaneKind::NearField, 1);
        let pairs: Vec<PairEvent> = (0..10_000)
            .map(|i| {
                let c = [
                    ((i % 100) as f64 - 50.0 + 0.5) * px,
                    ((i / 100) as f64 - 50.0 + 0.5) * px,
                ];
                PairEvent { coord1: c, coord2: c }
            })
            .collect();
        let (a, b) = expose(&[pairs], &g, &noise, PlaneKind::NearField, 1).unwrap();
        for stack in [threshold(&a, &noise), threshold(&b, &noise)] {
            let detected: f64 = stack.frame(0).iter().map(|&v| v as f64).sum();
            assert!((detected - 5000.0).abs() < 4.0 * 50.0, "{detected}");
        }
    }

    #[test]
    fn gaussian_tail_false_positive_rate() {
        // 5 sigma with negligible quantization
        let n = CameraNoise {
            readout_sigma: 1000.0,
            threshold: 5000.0,
            em_gain: 50_000.0,
            ..CameraNoise::default()
        };
        let p = n.dark_false_positive_rate();
        assert!((p - 2.8665e-7).abs() < 0.01e-7, "{p}");
        assert!((p - 2.9e-7).abs() / 2.9e-7 < 0.02);
    }

    #[test]
    fn tail_formulas_match_monte_carlo() {
        let n = CameraNoise {
            readout_sigma: 10.0,
            threshold: 20.0,
            em_gain: 40.0,
            cic_rate: 0.0,
            quantum_efficiency: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 400_000;
        let mut dark = 0usize;
        let mut single = 0usize;
        let exp = Gamma::new(1.0, n.em_gain).unwrap();
        for _ in 0..trials {
            let x: f64 = n.readout_sigma * rng.sample::<f64, _>(StandardNormal);
            if x.round() > n.threshold {
                dark += 1;
            }
            let y: f64 = exp.sample(&mut rng) + n.readout_sigma * rng.sample::<f64, _>(StandardNormal);
            if y.round().max(0.0) > n.threshold {
                single += 1;
            }
        }
        let check = |count: usize, p: f64| {
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            let observed = count as f64 / trials as f64;
            assert!((observed - p).abs() < 4.0 * se, "observed {observed}, expected {p}");
        };
        check(dark, n.dark_false_positive_rate());
        check(single, n.single_electron_detection());
    }

    #[test]
    fn default_noise_keeps_false_detections_low() {
        let n = CameraNoise::default();
        n.validate().unwrap();
        assert!(n.false_positive_rate() < 1e-3, "{}", n.false_positive_rate());
        assert_eq!(n.threshold, 5.0 * n.readout_sigma);
        assert_eq!(n.em_gain / n.readout_sigma, 50.0);
        assert!(n.single_electron_detection() > 0.85);
    }

    #[test]
    fn all_zero_frame_thresholds_to_zero() {
        let mut out = Vec::new();
        threshold_frame(&[0u16; 100], 50.0, &mut out);
        assert!(out.iter().all(|&v| v == 0));
    }

    #[test]
    fn threshold_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gray: Vec<u16> = (0..5000).map(|_| rng.random_range(0..400)).collect();
        let mut prev: Option<Vec<u8>> = None;
        for t in [1.0, 10.0, 49.5, 50.0, 120.0, 399.0] {
            let mut out = Vec::new();
            threshold_frame(&gray, t, &mut out);
            if let Some(p) = &prev {
                assert!(out.iter().zip(p).all(|(now, before)| now <= before));
            }
            prev = Some(out);
        }
    }

    #[test]
    fn photon_conservation_without_noise() {
        let g = OpticalGeometry {
            grid: 128,
            ..Default::default()
        };
        let noise = CameraNoise::ideal();
        let params = BiphotonParams::isotropic(60.0, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let frames: Vec<Vec<PairEvent>> = (0..5)
            .map(|_| sample_pairs(&params, PlaneKind::NearField, 300, &mut rng))
            .collect();
        let (a, b) = expose(&frames, &g, &noise, PlaneKind::NearField, 5).unwrap();
        for (cam, stack) in [
            (Camera::One, threshold(&a, &noise)),
            (Camera::Two, threshold(&b, &noise)),
        ] {
            for (f, pairs) in frames.iter().enumerate() {
                let mut occupied = std::collections::HashSet::new();
                let mut inside = 0;
                for p in pairs {
                    let c = if cam == Camera::One { p.coord1 } else { p.coord2 };
                    if let Projection::Inside { row, col } = g.project(c, PlaneKind::NearField, cam) {
                        inside += 1;
                        occupied.insert((row, col));
                    }
                }
                let counts: usize = stack.frame(f).iter().map(|&v| v as usize).sum();
                assert!(counts <= inside);
                assert_eq!(counts, occupied.len());
            }
        }
    }
}
