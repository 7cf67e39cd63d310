//! Least-squares fit of a 2D Gaussian plus offset to a correlation peak.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::map::{CorrelationMap, DETECTION_THRESHOLD};
use crate::error::{Error, Result};
use crate::sampler::PlaneKind;

/// Half-width of the square fit window, in map cells.
pub const FIT_HALF_WINDOW: usize = 7;

/// Model `A·exp(−(δx−x0)²/2wx² − (δy−y0)²/2wy²) + B`, lengths in map cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub amplitude: f64,
    /// Peak position `[x0, y0]`.
    pub center: [f64; 2],
    /// Gaussian standard deviations `[wx, wy]`.
    pub width: [f64; 2],
    pub offset: f64,
    pub uncertainty: PeakFitUncertainty,
    pub grouping: usize,
    pub plane: PlaneKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFitUncertainty {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub width: [f64; 2],
    pub offset: f64,
}

struct Sample {
    x: f64,
    y: f64,
    v: f64,
}

fn model(p: &Vector6<f64>, x: f64, y: f64) -> (f64, Vector6<f64>) {
    let (a, x0, y0, wx, wy) = (p[0], p[1], p[2], p[3], p[4]);
    let dx = x - x0;
    let dy = y - y0;
    let e = (-0.5 * (dx * dx / (wx * wx) + dy * dy / (wy * wy))).exp();
    let grad = Vector6::new(
        e,
        a * e * dx / (wx * wx),
        a * e * dy / (wy * wy),
        a * e * dx * dx / (wx * wx * wx),
        a * e * dy * dy / (wy * wy * wy),
        1.0,
    );
    (a * e + p[5], grad)
}

fn normal_equations(p: &Vector6<f64>, data: &[Sample]) -> (Matrix6<f64>, Vector6<f64>, f64) {
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    let mut ssr = 0.0;
    for s in data {
        let (m, g) = model(p, s.x, s.y);
        let r = m - s.v;
        jtj += g * g.transpose();
        jtr += g * r;
        ssr += r * r;
    }
    (jtj, jtr, ssr)
}

/// Levenberg–Marquardt with Marquardt's diagonal scaling.
fn levenberg_marquardt(mut p: Vector6<f64>, data: &[Sample]) -> Result<(Vector6<f64>, Matrix6<f64>, f64)> {
    let mut lambda = 1e-3;
    let (mut jtj, mut jtr, mut ssr) = normal_equations(&p, data);
    for _ in 0..500 {
        let mut damped = jtj;
        for i in 0..6 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = chol.solve(&(-jtr));
        let trial = p + step;
        if trial[3] <= 0.0 || trial[4] <= 0.0 || !trial.iter().all(|v| v.is_finite()) {
            lambda *= 10.0;
            continue;
        }
        let (t_jtj, t_jtr, t_ssr) = normal_equations(&trial, data);
        if t_ssr <= ssr {
            let small_step = step
                .iter()
                .zip(trial.iter())
                .all(|(s, v)| s.abs() <= 1e-12 * (1.0 + v.abs()));
            let flat = ssr - t_ssr <= 1e-15 * ssr;
            p = trial;
            jtj = t_jtj;
            jtr = t_jtr;
            ssr = t_ssr;
            lambda = (lambda * 0.3).max(1e-12);
            if small_step || (flat && ssr > 0.0) || ssr == 0.0 {
                return Ok((p, jtj, ssr));
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // no further progress possible from here
                return Ok((p, jtj, ssr));
            }
        }
    }
    Ok((p, jtj, ssr))
}

/// Fit the peak of a background-corrected map over a 15×15 window around its
/// maximum. Maps whose peak is not significant at the detection threshold
/// are rejected.
pub fn fit_peak(map: &CorrelationMap) -> Result<PeakFit> {
    if !map.background_corrected {
        return Err(Error::InvalidParameter(
            "peak fitting needs a background-corrected map".into(),
        ));
    }
    let significance = map.significance();
    if !(significance >= DETECTION_THRESHOLD) {
        return Err(Error::NoSignificantPeak {
            snr: significance,
            threshold: DETECTION_THRESHOLD,
        });
    }
    fit_unchecked(map)
}

/// Fit without the significance gate.
pub(crate) fn fit_unchecked(map: &CorrelationMap) -> Result<PeakFit> {
    let ([px, py], _) = map.peak();
    let [hx, hy] = map.half_widths();
    let hw = FIT_HALF_WINDOW as i64;
    let (hx, hy) = (hx as i64, hy as i64);
    let xs = (px - hw).max(-hx)..=(px + hw).min(hx);
    let ys = (py - hw).max(-hy)..=(py + hw).min(hy);
    let mut data = Vec::new();
    for y in ys.clone() {
        for x in xs.clone() {
            data.push(Sample {
                x: x as f64,
                y: y as f64,
                v: map.get(x, y).expect("window inside map"),
            });
        }
    }
    if data.len() < 12 {
        return Err(Error::FitFailed(format!("only {} cells in fit window", data.len())));
    }

    // Initial guess: border median as offset, moments of the excess above it.
    let mut border: Vec<f64> = data
        .iter()
        .filter(|s| {
            s.x as i64 == *xs.start() || s.x as i64 == *xs.end() || s.y as i64 == *ys.start() || s.y as i64 == *ys.end()
        })
        .map(|s| s.v)
        .collect();
    border.sort_by(f64::total_cmp);
    let b0 = border[border.len() / 2];
    let (mut m0, mut mx, mut my) = (0.0, 0.0, 0.0);
    for s in &data {
        let e = (s.v - b0).max(0.0);
        m0 += e;
        mx += e * s.x;
        my += e * s.y;
    }
    let (cx, cy) = if m0 > 0.0 {
        (mx / m0, my / m0)
    } else {
        (px as f64, py as f64)
    };
    let (mut vx, mut vy) = (0.0, 0.0);
    for s in &data {
        let e = (s.v - b0).max(0.0);
        vx += e * (s.x - cx).powi(2);
        vy += e * (s.y - cy).powi(2);
    }
    let clamp_w = |v: f64| {
        (v / m0.max(f64::MIN_POSITIVE))
            .sqrt()
            .clamp(0.3, FIT_HALF_WINDOW as f64)
    };
    let a0 = map.get(px, py).expect("peak inside map") - b0;
    let start = Vector6::new(a0, cx, cy, clamp_w(vx), clamp_w(vy), b0);

    let (p, jtj, ssr) = levenberg_marquardt(start, &data)?;
    let dof = data.len() as f64 - 6.0;
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::FitFailed("singular normal matrix at the optimum".into()))?;
    let scale = ssr / dof;
    let sd = |i: usize| (cov[(i, i)] * scale).max(0.0).sqrt();
    if p[0] <= 0.0 {
        return Err(Error::FitFailed("fitted amplitude is not positive".into()));
    }
    Ok(PeakFit {
        amplitude: p[0],
        center: [p[1], p[2]],
        width: [p[3].abs(), p[4].abs()],
        offset: p[5],
        uncertainty: PeakFitUncertainty {
            amplitude: sd(0),
            center: [sd(1), sd(2)],
            width: [sd(3), sd(4)],
            offset: sd(5),
        },
        grouping: map.grouping,
        plane: map.plane,
    })
}
