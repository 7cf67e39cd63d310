//! From fitted peak widths to conditional variances, EPR products, and the
//! degree of paradox.

use serde::{Deserialize, Serialize};

use super::fit::PeakFit;
use crate::detector::OpticalGeometry;
use crate::error::{Error, Result};
use crate::physics::{Axis, HEISENBERG_BOUND};
use crate::sampler::PlaneKind;

/// A value with its one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub uncertainty: f64,
}

impl Measurement {
    pub fn new(value: f64, uncertainty: f64) -> Self {
        Self { value, uncertainty }
    }
}

/// Variance of `u1 − u2` for two independent offsets uniform over one pixel.
pub const PIXEL_BROADENING: f64 = 1.0 / 6.0;
const ZERO_WIDTH_TOLERANCE: f64 = 1e-12;

/// Convert fitted widths (map cells) to variances in plane units: µm² in the
/// near field, (ħ·µm⁻¹)² in the far field. Pixel sampling broadens the peak
/// by `s_eff²/6`, which is removed.
pub fn variances_from_fit(
    fit: &PeakFit,
    geometry: &OpticalGeometry,
    plane: PlaneKind,
    grouping: usize,
) -> Result<[Measurement; 2]> {
    if plane != fit.plane {
        return Err(Error::PlaneMismatch(format!("fit is {}, requested {plane}", fit.plane)));
    }
    geometry.validate()?;
    let s = geometry.effective_pixel(plane, grouping);
    let mut out = [Measurement::new(0.0, 0.0); 2];
    for axis in Axis::BOTH {
        let i = axis.index();
        let w = fit.width[i];
        let excess = w * w - PIXEL_BROADENING;
        if excess < -ZERO_WIDTH_TOLERANCE {
            return Err(Error::PeakNarrowerThanPixel {
                axis,
                variance: excess * s * s,
            });
        }
        out[i] = Measurement::new(excess.max(0.0) * s * s, 2.0 * w * s * s * fit.uncertainty.width[i]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprProducts {
    /// `Δ²(x1−x2)·Δ²(p1+p2)` per axis, in ħ².
    pub products: [Measurement; 2],
    /// Degree of paradox `(ħ²/4) / product` per axis.
    pub v: [Measurement; 2],
    pub schmidt_k: Measurement,
    /// `(ħ²/4 − product) / σ(product)`; positive when the bound is violated.
    pub n_sigma: [f64; 2],
}

impl EprProducts {
    pub fn violated(&self, axis: Axis) -> bool {
        self.products[axis.index()].value < HEISENBERG_BOUND
    }
}

/// Combine near-field (`Δ²(x1−x2)`) and far-field (`Δ²(p1+p2)`) variances
/// with first-order error propagation.
pub fn epr_products(near: [Measurement; 2], far: [Measurement; 2]) -> Result<EprProducts> {
    for m in near.iter().chain(&far) {
        if !(m.value > 0.0) || !m.value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "variances must be positive, got {}",
                m.value
            )));
        }
    }
    let mut products = [Measurement::new(0.0, 0.0); 2];
    let mut v = [Measurement::new(0.0, 0.0); 2];
    let mut n_sigma = [0.0; 2];
    for i in 0..2 {
        let (a, b) = (near[i], far[i]);
        let p = a.value * b.value;
        let up = ((b.value * a.uncertainty).powi(2) + (a.value * b.uncertainty).powi(2)).sqrt();
        products[i] = Measurement::new(p, up);
        let vi = HEISENBERG_BOUND / p;
        v[i] = Measurement::new(vi, vi * up / p);
        n_sigma[i] = if up > 0.0 {
            (HEISENBERG_BOUND - p) / up
        } else if p < HEISENBERG_BOUND {
            f64::INFINITY
        } else {
            0.0
        };
    }
    let k = (v[0].value * v[1].value).sqrt();
    let rel = 0.5 * ((v[0].uncertainty / v[0].value).powi(2) + (v[1].uncertainty / v[1].value).powi(2)).sqrt();
    Ok(EprProducts {
        products,
        v,
        schmidt_k: Measurement::new(k, k * rel),
        n_sigma,
    })
}
