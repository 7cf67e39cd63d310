//! Monte Carlo photon-pair generation from |ψ|² (near field) or |φ|² (far field).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{Axis, BiphotonParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlaneKind {
    /// Crystal image plane; coordinates are positions in µm.
    #[serde(rename = "near")]
    NearField,
    /// Lens focal plane; coordinates are momenta in ħ·µm⁻¹.
    #[serde(rename = "far")]
    FarField,
}

impl PlaneKind {
    pub fn code(self) -> u8 {
        match self {
            PlaneKind::NearField => 0,
            PlaneKind::FarField => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PlaneKind::NearField),
            1 => Some(PlaneKind::FarField),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlaneKind::NearField => "near",
            PlaneKind::FarField => "far",
        }
    }
}

impl fmt::Display for PlaneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlaneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near" => Ok(PlaneKind::NearField),
            "far" => Ok(PlaneKind::FarField),
            other => Err(Error::InvalidParameter(format!(
                "plane must be `near` or `far`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub params: BiphotonParams,
    pub mean_pairs_per_frame: f64,
    pub seed: u64,
    pub frames: usize,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.mean_pairs_per_frame.is_finite() || self.mean_pairs_per_frame < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "mean_pairs_per_frame must be finite and >= 0, got {}",
                self.mean_pairs_per_frame
            )));
        }
        if self.frames == 0 {
            return Err(Error::InvalidParameter("frames must be at least 1".into()));
        }
        Ok(())
    }
}

/// Transverse coordinates of the two photons of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEvent {
    pub coord1: [f64; 2],
    pub coord2: [f64; 2],
}

impl PairEvent {
    pub fn sum(&self) -> [f64; 2] {
        [self.coord1[0] + self.coord2[0], self.coord1[1] + self.coord2[1]]
    }

    pub fn diff(&self) -> [f64; 2] {
        [self.coord1[0] - self.coord2[0], self.coord1[1] - self.coord2[1]]
    }
}

/// Independent random streams used while generating one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Pairs,
    Camera1,
    Camera2,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one (seed, plane, stream, frame) tuple. The key is a hash of
/// (seed, plane, stream) and the frame index selects the ChaCha stream, so
/// frames can be generated in any order or in parallel.
pub(crate) fn frame_rng(seed: u64, plane: PlaneKind, stream: Stream, frame_index: u64) -> ChaCha8Rng {
    let tag = plane.code() as u64 * 16
        + match stream {
            Stream::Pairs => 0,
            Stream::Camera1 => 1,
            Stream::Camera2 => 2,
        };
    let mut state = seed ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(frame_index);
    rng
}

/// Standard deviations `[x, y]` of the pair sum and difference coordinates.
pub fn sum_diff_std(params: &BiphotonParams, plane: PlaneKind) -> ([f64; 2], [f64; 2]) {
    let x = params.axis(Axis::X);
    let y = params.axis(Axis::Y);
    match plane {
        PlaneKind::NearField => ([x.sigma_p, y.sigma_p], [x.sigma_phi, y.sigma_phi]),
        // |φ|² ∝ exp(−σ_p² P²/2) exp(−σ_φ² Q²/2)
        PlaneKind::FarField => (
            [1.0 / x.sigma_p, 1.0 / y.sigma_p],
            [1.0 / x.sigma_phi, 1.0 / y.sigma_phi],
        ),
    }
}

/// Draw `count` pairs with the given RNG.
pub fn sample_pairs<R: Rng + ?Sized>(
    params: &BiphotonParams,
    plane: PlaneKind,
    count: usize,
    rng: &mut R,
) -> Vec<PairEvent> {
    let (sum_std, diff_std) = sum_diff_std(params, plane);
    (0..count)
        .map(|_| {
            let mut coord1 = [0.0; 2];
            let mut coord2 = [0.0; 2];
            for a in 0..2 {
                let s: f64 = rng.sample::<f64, _>(StandardNormal) * sum_std[a];
                let u: f64 = rng.sample::<f64, _>(StandardNormal) * diff_std[a];
                coord1[a] = 0.5 * (s + u);
                coord2[a] = 0.5 * (s - u);
            }
            PairEvent { coord1, coord2 }
        })
        .collect()
}

/// Pairs emitted during one exposure. The count is Poisson distributed.
pub fn sample_frame_pairs(cfg: &SourceConfig, plane: PlaneKind, frame_index: usize) -> Vec<PairEvent> {
    let mut rng = frame_rng(cfg.seed, plane, Stream::Pairs, frame_index as u64);
    let count = if cfg.mean_pairs_per_frame > 0.0 {
        let poisson = Poisson::new(cfg.mean_pairs_per_frame).expect("validated mean");
        poisson.sample(&mut rng) as usize
    } else {
        0
    };
    sample_pairs(&cfg.params, plane, count, &mut rng)
}

/// A sample estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `|value − expected|` in standard errors.
    pub fn z(&self, expected: f64) -> f64 {
        (self.value - expected).abs() / self.se
    }
}

/// Sample moments of a pair list, per axis `[x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub count: usize,
    pub mean_coord1: [Estimate; 2],
    pub mean_coord2: [Estimate; 2],
    pub var_coord1: [Estimate; 2],
    pub var_coord2: [Estimate; 2],
    pub var_sum: [Estimate; 2],
    pub var_diff: [Estimate; 2],
    pub cov_sum_diff: [Estimate; 2],
    /// Analytic values of `var_sum` / `var_diff` for the given parameters.
    pub expected_var_sum: [f64; 2],
    pub expected_var_diff: [f64; 2],
}

pub const MIN_MOMENT_EVENTS: usize = 1000;

fn mean_estimate(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: mean,
        se: (var / n).sqrt(),
    }
}

fn variance_estimate(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    Estimate {
        value: m2 * n / (n - 1.0),
        se: ((m4 - m2 * m2) / n).max(0.0).sqrt(),
    }
}

fn covariance_estimate(a: &[f64], b: &[f64]) -> Estimate {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let products: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let cov = products.iter().sum::<f64>() / n;
    let var = products.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: cov * n / (n - 1.0),
        se: (var / n).sqrt(),
    }
}

pub fn marginal_check(events: &[PairEvent], params: &BiphotonParams, plane: PlaneKind) -> Result<MomentReport> {
    if events.len() < MIN_MOMENT_EVENTS {
        return Err(Error::TooFewEvents {
            got: events.len(),
            need: MIN_MOMENT_EVENTS,
        });
    }
    let per_axis =
        |f: &dyn Fn(&PairEvent, usize) -> f64, a: usize| -> Vec<f64> { events.iter().map(|e| f(e, a)).collect() };
    let c1 = |e: &PairEvent, a: usize| e.coord1[a];
    let c2 = |e: &PairEvent, a: usize| e.coord2[a];
    let s = |e: &PairEvent, a: usize| e.sum()[a];
    let u = |e: &PairEvent, a: usize| e.diff()[a];

    let both = |f: &dyn Fn(usize) -> Estimate| [f(0), f(1)];
    let (sum_std, diff_std) = sum_diff_std(params, plane);
    Ok(MomentReport {
        count: events.len(),
        mean_coord1: both(&|a| mean_estimate(&per_axis(&c1, a))),
        mean_coord2: both(&|a| mean_estimate(&per_axis(&c2, a))),
        var_coord1: both(&|a| variance_estimate(&per_axis(&c1, a))),
        var_coord2: both(&|a| variance_estimate(&per_axis(&c2, a))),
        var_sum: both(&|a| variance_estimate(&per_axis(&s, a))),
        var_diff: both(&|a| variance_estimate(&per_axis(&u, a))),
        cov_sum_diff: both(&|a| covariance_estimate(&per_axis(&s, a), &per_axis(&u, a))),
        expected_var_sum: [sum_std[0].powi(2), sum_std[1].powi(2)],
        expected_var_diff: [diff_std[0].powi(2), diff_std[1].powi(2)],
    })
}
