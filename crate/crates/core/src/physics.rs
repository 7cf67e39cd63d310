//! Closed-form double-Gaussian biphoton model.
//!
//! Units: lengths in µm, transverse momenta in ħ·µm⁻¹ with ħ = 1, so the
//! single-particle Heisenberg bound on the product of conditional variances
//! is the pure number 0.25.
//!
//! The two-photon amplitude factorizes per transverse axis. Along one axis,
//! with `s = x1 + x2` and `u = x1 − x2`,
//!
//! ```text
//! ψ(x1, x2) = N exp(−s² / 4σ_p²) exp(−u² / 4σ_φ²),      N = (π σ_p σ_φ)^(−1/2)
//! φ(p1, p2) = M exp(−σ_p² P² / 4) exp(−σ_φ² Q² / 4),    M = (σ_p σ_φ / π)^(1/2)
//! ```
//!
//! where `P = p1 + p2`, `Q = p1 − p2`. `φ` is the unitary Fourier transform of
//! `ψ` (kernel `e^{−i(p1 x1 + p2 x2)} / 2π`). Squaring gives independent
//! Gaussians: `Var(s) = σ_p²`, `Var(u) = σ_φ²`, `Var(P) = 1/σ_p²`,
//! `Var(Q) = 1/σ_φ²`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heisenberg bound on `Δ²(x1−x2)·Δ²(p1+p2)` in units of ħ².
pub const HEISENBERG_BOUND: f64 = 0.25;

/// Minimum `σ_p / σ_φ` accepted by the EPR-regime operations.
pub const EPR_REGIME_RATIO: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

/// Gaussian widths along a single transverse axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisWidths {
    /// Pump standard deviation (µm).
    pub sigma_p: f64,
    /// Standard deviation of the Fourier transform of the phase-matching function (µm).
    pub sigma_phi: f64,
}

impl AxisWidths {
    pub fn position_norm(&self) -> f64 {
        (PI * self.sigma_p * self.sigma_phi).powf(-0.5)
    }

    pub fn momentum_norm(&self) -> f64 {
        (self.sigma_p * self.sigma_phi / PI).sqrt()
    }

    pub fn position_amplitude(&self, x1: f64, x2: f64) -> f64 {
        let s = x1 + x2;
        let u = x1 - x2;
        self.position_norm()
            * (-s * s / (4.0 * self.sigma_p * self.sigma_p)).exp()
            * (-u * u / (4.0 * self.sigma_phi * self.sigma_phi)).exp()
    }

    pub fn momentum_amplitude(&self, p1: f64, p2: f64) -> f64 {
        let sum = p1 + p2;
        let diff = p1 - p2;
        self.momentum_norm()
            * (-self.sigma_p * self.sigma_p * sum * sum / 4.0).exp()
            * (-self.sigma_phi * self.sigma_phi * diff * diff / 4.0).exp()
    }

    /// `Var(x1 − x2)` under |ψ|², µm².
    pub fn var_diff(&self) -> f64 {
        self.sigma_phi * self.sigma_phi
    }

    /// `Var(p1 + p2)` under |φ|², ħ²·µm⁻².
    pub fn var_sum_p(&self) -> f64 {
        1.0 / (self.sigma_p * self.sigma_p)
    }

    fn in_epr_regime(&self) -> bool {
        self.sigma_p >= EPR_REGIME_RATIO * self.sigma_phi
    }
}

/// Per-axis widths of the biphoton amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiphotonParams {
    pub sigma_p_x: f64,
    pub sigma_p_y: f64,
    pub sigma_phi_x: f64,
    pub sigma_phi_y: f64,
}

impl Default for BiphotonParams {
    /// Widths whose conditional variances reproduce the measured table:
    /// Δ²(x1−x2) = 299 µm², Δ²(y1−y2) = 168 µm²,
    /// Δ²(p_x1+p_x2) = 9.70e-6 and Δ²(p_y1+p_y2) = 2.53e-6 ħ²·µm⁻².
    fn default() -> Self {
        Self::from_variances([299.0, 168.0], [9.70e-6, 2.53e-6]).expect("table variances are positive")
    }
}

impl BiphotonParams {
    pub fn new(sigma_p_x: f64, sigma_p_y: f64, sigma_phi_x: f64, sigma_phi_y: f64) -> Result<Self> {
        let params = Self {
            sigma_p_x,
            sigma_p_y,
            sigma_phi_x,
            sigma_phi_y,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn isotropic(sigma_p: f64, sigma_phi: f64) -> Result<Self> {
        Self::new(sigma_p, sigma_p, sigma_phi, sigma_phi)
    }

    /// Build widths from target conditional variances `[x, y]`:
    /// position-difference variances in µm² and momentum-sum variances in ħ²·µm⁻².
    pub fn from_variances(var_diff: [f64; 2], var_sum_p: [f64; 2]) -> Result<Self> {
        Self::new(
            var_sum_p[0].powf(-0.5),
            var_sum_p[1].powf(-0.5),
            var_diff[0].sqrt(),
            var_diff[1].sqrt(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_p_x", self.sigma_p_x),
            ("sigma_p_y", self.sigma_p_y),
            ("sigma_phi_x", self.sigma_phi_x),
            ("sigma_phi_y", self.sigma_phi_y),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
            if v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn axis(&self, axis: Axis) -> AxisWidths {
        match axis {
            Axis::X => AxisWidths {
                sigma_p: self.sigma_p_x,
                sigma_phi: self.sigma_phi_x,
            },
            Axis::Y => AxisWidths {
                sigma_p: self.sigma_p_y,
                sigma_phi: self.sigma_phi_y,
            },
        }
    }

    /// Multiply every length by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.sigma_p_x * factor,
            self.sigma_p_y * factor,
            self.sigma_phi_x * factor,
            self.sigma_phi_y * factor,
        )
    }

    fn check_regime(&self) -> Result<()> {
        for axis in Axis::BOTH {
            let w = self.axis(axis);
            if !w.in_epr_regime() {
                return Err(Error::NotEprRegime {
                    axis,
                    sigma_p: w.sigma_p,
                    sigma_phi: w.sigma_phi,
                });
            }
        }
        Ok(())
    }
}

fn check_finite(name: &'static str, v: [f64; 2]) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

/// Two-photon amplitude in the crystal (near-field) plane. Coordinates in µm.
pub fn wavefunction_position(params: &BiphotonParams, rho1: [f64; 2], rho2: [f64; 2]) -> Result<f64> {
    params.validate()?;
    check_finite("rho1", rho1)?;
    check_finite("rho2", rho2)?;
    Ok(params.axis(Axis::X).position_amplitude(rho1[0], rho2[0])
        * params.axis(Axis::Y).position_amplitude(rho1[1], rho2[1]))
}

/// Two-photon amplitude in the far field. Momenta in ħ·µm⁻¹.
pub fn wavefunction_momentum(params: &BiphotonParams, p1: [f64; 2], p2: [f64; 2]) -> Result<f64> {
    params.validate()?;
    check_finite("p1", p1)?;
    check_finite("p2", p2)?;
    Ok(params.axis(Axis::X).momentum_amplitude(p1[0], p2[0]) * params.axis(Axis::Y).momentum_amplitude(p1[1], p2[1]))
}

/// Analytic conditional variances and the quantities derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprPrediction {
    pub var_diff_x: f64,
    pub var_diff_y: f64,
    pub var_sum_px: f64,
    pub var_sum_py: f64,
    pub product_x: f64,
    pub product_y: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub schmidt_k: f64,
}

pub fn predict(params: &BiphotonParams) -> Result<EprPrediction> {
    params.validate()?;
    params.check_regime()?;
    let x = params.axis(Axis::X);
    let y = params.axis(Axis::Y);
    let product_x = x.var_diff() * x.var_sum_p();
    let product_y = y.var_diff() * y.var_sum_p();
    let v_x = degree_of_paradox(product_x);
    let v_y = degree_of_paradox(product_y);
    Ok(EprPrediction {
        var_diff_x: x.var_diff(),
        var_diff_y: y.var_diff(),
        var_sum_px: x.var_sum_p(),
        var_sum_py: y.var_sum_p(),
        product_x,
        product_y,
        v_x,
        v_y,
        schmidt_k: schmidt_number(v_x, v_y),
    })
}

/// `V = (ħ²/4) / product`.
pub fn degree_of_paradox(product: f64) -> f64 {
    HEISENBERG_BOUND / product
}

/// Dimensionality of the anisotropic state, `sqrt(V_x · V_y)`.
pub fn schmidt_number(v_x: f64, v_y: f64) -> f64 {
    (v_x * v_y).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprVerdict {
    pub violated: bool,
    /// Distance below the bound in units of the product's uncertainty.
    pub n_sigma: f64,
}

pub fn epr_verdict(product: f64, uncertainty: f64) -> Result<EprVerdict> {
    if !product.is_finite() {
        return Err(Error::NonFinite("product"));
    }
    if !(uncertainty > 0.0) || !uncertainty.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "uncertainty must be positive and finite, got {uncertainty}"
        )));
    }
    Ok(EprVerdict {
        violated: product < HEISENBERG_BOUND,
        n_sigma: (HEISENBERG_BOUND - product) / uncertainty,
    })
}
