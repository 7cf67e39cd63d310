//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use twinimg::correlation::{cross_correlate, CorrelationMap};
use twinimg::frames::CountFrameStack;
use twinimg::physics::{wavefunction_momentum, wavefunction_position, AxisWidths};
use twinimg::sampler::{marginal_check, sample_pairs};
use twinimg::{Axis, BiphotonParams, PlaneKind};

/// Trapezoid nodes and weights on `[-a, a]`.
pub fn trapezoid(a: f64, n: usize) -> Vec<(f64, f64)> {
    let h = 2.0 * a / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            (-a + i as f64 * h, w)
        })
        .collect()
}

/// Standard deviations of the sum and difference coordinates of `|Ψ|²` along
/// each axis, written out from the Gaussian exponents.
fn sum_diff_scales(params: &BiphotonParams, plane: PlaneKind) -> ([f64; 2], [f64; 2]) {
    let w = [params.axis(Axis::X), params.axis(Axis::Y)];
    match plane {
        PlaneKind::NearField => ([w[0].sigma_p, w[1].sigma_p], [w[0].sigma_phi, w[1].sigma_phi]),
        PlaneKind::FarField => (
            [1.0 / w[0].sigma_p, 1.0 / w[1].sigma_p],
            [1.0 / w[0].sigma_phi, 1.0 / w[1].sigma_phi],
        ),
    }
}

/// `∫|Ψ|² d²c1 d²c2` by 4D trapezoid quadrature in sum/difference
/// coordinates (Jacobian 1/2 per axis), spanning ±8 standard deviations.
pub fn quadrature_norm(params: &BiphotonParams, plane: PlaneKind, n: usize) -> f64 {
    let (ss, ds) = sum_diff_scales(params, plane);
    let sx = trapezoid(8.0 * ss[0], n);
    let ux = trapezoid(8.0 * ds[0], n);
    let sy = trapezoid(8.0 * ss[1], n);
    let uy = trapezoid(8.0 * ds[1], n);
    let mut total = 0.0;
    for &(s0, w0) in &sx {
        for &(u0, w1) in &ux {
            for &(s1, w2) in &sy {
                for &(u1, w3) in &uy {
                    let c1 = [0.5 * (s0 + u0), 0.5 * (s1 + u1)];
                    let c2 = [0.5 * (s0 - u0), 0.5 * (s1 - u1)];
                    let amp = match plane {
                        PlaneKind::NearField => wavefunction_position(params, c1, c2),
                        PlaneKind::FarField => wavefunction_momentum(params, c1, c2),
                    }
                    .unwrap();
                    total += amp * amp * w0 * w1 * w2 * w3 * 0.25;
                }
            }
        }
    }
    total
}

/// Largest deviation, relative to the peak, between the one-axis momentum
/// amplitude and the discrete Fourier transform
/// `(1/2π) Σ ψ(x1, x2) e^{-i(p1 x1 + p2 x2)} Δx1 Δx2` of the position
/// amplitude, sampled on a 64-point grid in each of the sum and difference
/// coordinates.
pub fn fourier_consistency(w: &AxisWidths) -> f64 {
    let n = 64;
    let s_nodes = trapezoid(8.0 * w.sigma_p, n);
    let u_nodes = trapezoid(8.0 * w.sigma_phi, n);
    let peak = w.momentum_amplitude(0.0, 0.0);
    let mut worst: f64 = 0.0;
    for i in -4..=4 {
        for j in -4..=4 {
            let big_p = i as f64 * 0.5 / w.sigma_p;
            let big_q = j as f64 * 0.5 / w.sigma_phi;
            let (p1, p2) = (0.5 * (big_p + big_q), 0.5 * (big_p - big_q));
            let (mut re, mut im) = (0.0, 0.0);
            for &(s, ws) in &s_nodes {
                for &(u, wu) in &u_nodes {
                    let (x1, x2) = (0.5 * (s + u), 0.5 * (s - u));
                    let psi = w.position_amplitude(x1, x2);
                    let phase = -(p1 * x1 + p2 * x2);
                    let weight = psi * ws * wu * 0.5;
                    re += weight * phase.cos();
                    im += weight * phase.sin();
                }
            }
            re /= 2.0 * std::f64::consts::PI;
            im /= 2.0 * std::f64::consts::PI;
            let want = w.momentum_amplitude(p1, p2);
            worst = worst.max(((re - want).powi(2) + im * im).sqrt() / peak);
        }
    }
    worst
}

/// `E[s²]` and `E[u²]` per axis of `|Ψ|²` for one plane, by 2D quadrature
/// of each axis factor. Means are zero by symmetry.
pub fn quadrature_moments(params: &BiphotonParams, plane: PlaneKind) -> ([f64; 2], [f64; 2]) {
    let (ss, ds) = sum_diff_scales(params, plane);
    let mut var_sum = [0.0; 2];
    let mut var_diff = [0.0; 2];
    for (a, axis) in Axis::BOTH.into_iter().enumerate() {
        let w = params.axis(axis);
        let (mut m0, mut ms, mut mu) = (0.0, 0.0, 0.0);
        for &(s, ws) in &trapezoid(8.0 * ss[a], 201) {
            for &(u, wu) in &trapezoid(8.0 * ds[a], 201) {
                let (c1, c2) = (0.5 * (s + u), 0.5 * (s - u));
                let amp = match plane {
                    PlaneKind::NearField => w.position_amplitude(c1, c2),
                    PlaneKind::FarField => w.momentum_amplitude(c1, c2),
                };
                let d = amp * amp * ws * wu * 0.5;
                m0 += d;
                ms += d * s * s;
                mu += d * u * u;
            }
        }
        var_sum[a] = ms / m0;
        var_diff[a] = mu / m0;
    }
    (var_sum, var_diff)
}

/// Largest |z| of sampled sum and difference variances against the
/// quadrature moments, for `n` pairs.
pub fn sampler_max_z(params: &BiphotonParams, plane: PlaneKind, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = sample_pairs(params, plane, n, &mut rng);
    let report = marginal_check(&events, params, plane).unwrap();
    let (var_sum, var_diff) = quadrature_moments(params, plane);
    let mut worst: f64 = 0.0;
    for a in 0..2 {
        worst = worst.max(report.var_sum[a].z(var_sum[a]).abs());
        worst = worst.max(report.var_diff[a].z(var_diff[a]).abs());
    }
    worst
}

pub fn poisson_stack(plane: PlaneKind, w: usize, h: usize, frames: usize, mean: f64, seed: u64) -> CountFrameStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pois = Poisson::new(mean).unwrap();
    let data = (0..w * h * frames).map(|_| pois.sample(&mut rng) as u16).collect();
    CountFrameStack::from_raw(plane, w, h, data).unwrap()
}

/// Pearson-normalized circular cross-covariance by the direct sum
/// `Σ_f Σ_ρ a_f(ρ) b_f(ρ + δ)`, for every shift `δ`, layout `[δy][δx]`.
pub fn direct_correlation(s1: &CountFrameStack, s2: &CountFrameStack, w: usize, h: usize, frames: usize) -> Vec<f64> {
    let n = w * h;
    let mean = |s: &CountFrameStack| {
        let mut m = vec![0.0; n];
        for f in 0..frames {
            for (mi, &v) in m.iter_mut().zip(s.frame(f)) {
                *mi += v as f64 / frames as f64;
            }
        }
        m
    };
    let (m1, m2) = (mean(s1), mean(s2));
    let dev = |s: &CountFrameStack, m: &[f64], f: usize| -> Vec<f64> {
        s.frame(f).iter().zip(m).map(|(&v, mi)| v as f64 - mi).collect()
    };
    let mut out = vec![0.0; n];
    let (mut ss1, mut ss2) = (0.0, 0.0);
    for f in 0..frames {
        let a = dev(s1, &m1, f);
        let b = dev(s2, &m2, f);
        ss1 += a.iter().map(|v| v * v).sum::<f64>();
        ss2 += b.iter().map(|v| v * v).sum::<f64>();
        for dy in 0..h {
            for dx in 0..w {
                let mut acc = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        acc += a[y * w + x] * b[((y + dy) % h) * w + (x + dx) % w];
                    }
                }
                out[dy * w + dx] += acc;
            }
        }
    }
    let norm = (ss1 * ss2).sqrt();
    out.iter().map(|v| v / norm).collect()
}

/// Worst deviation of the FFT correlation map from the direct sum, relative
/// to the largest direct value, on a 32×32×10 Poisson stack pair.
pub fn fft_vs_direct() -> f64 {
    let (w, h, frames) = (32, 32, 10);
    let s1 = poisson_stack(PlaneKind::NearField, w, h, frames, 0.8, 21);
    let s2 = poisson_stack(PlaneKind::NearField, w, h, frames, 1.3, 22);
    let map = cross_correlate(&s1, &s2, false).unwrap();
    let want = direct_correlation(&s1, &s2, w, h, frames);
    compare_with_direct(&map, &want, w, h)
}

pub fn compare_with_direct(map: &CorrelationMap, want: &[f64], w: usize, h: usize) -> f64 {
    let [hx, hy] = map.half_widths();
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for dy in -(hy as i64)..=hy as i64 {
        for dx in -(hx as i64)..=hx as i64 {
            let iy = dy.rem_euclid(h as i64) as usize;
            let ix = dx.rem_euclid(w as i64) as usize;
            let got = map.get(dx, dy).unwrap();
            worst = worst.max((got - want[iy * w + ix]).abs() / scale);
        }
    }
    worst
}
