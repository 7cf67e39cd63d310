//! Two-dimensional FFTs for circular cross-correlation of real images.
//!
//! Spectra are kept in transposed layout (`[kx][ky]`): the forward transform
//! is "rows, transpose, rows", and running the same sequence with inverse row
//! transforms lands back in natural `[y][x]` order. Nothing outside this
//! module looks at spectra directly.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    fwd_w: Arc<dyn Fft<f64>>,
    fwd_h: Arc<dyn Fft<f64>>,
    inv_w: Arc<dyn Fft<f64>>,
    inv_h: Arc<dyn Fft<f64>>,
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            fwd_w: planner.plan_fft_forward(width),
            fwd_h: planner.plan_fft_forward(height),
            inv_w: planner.plan_fft_inverse(width),
            inv_h: planner.plan_fft_inverse(height),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    /// Natural-layout image in `buf` → transposed spectrum in `buf`.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.fwd_w.process(buf);
        transpose(buf, scratch, self.height, self.width);
        self.fwd_h.process(scratch);
        buf.copy_from_slice(scratch);
    }

    /// Transposed spectrum in `buf` → natural-layout image, scaled by 1/(W·H).
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inv_h.process(buf);
        transpose(buf, scratch, self.width, self.height);
        self.inv_w.process(scratch);
        let scale = 1.0 / self.len() as f64;
        for (b, s) in buf.iter_mut().zip(scratch.iter()) {
            *b = s * scale;
        }
    }

    /// Index of `−k` for spectrum index `i` (transposed layout).
    #[inline]
    fn negated(&self, i: usize) -> usize {
        let kx = i / self.height;
        let ky = i % self.height;
        let nx = (self.width - kx) % self.width;
        let ny = (self.height - ky) % self.height;
        nx * self.height + ny
    }

    /// Transform two real images at once. On return `a` and `b` hold their
    /// spectra.
    pub fn forward_pair(
        &self,
        re: &[f64],
        im: &[f64],
        a: &mut Vec<Complex64>,
        b: &mut Vec<Complex64>,
        scratch: &mut [Complex64],
    ) {
        let n = self.len();
        let mut z: Vec<Complex64> = re.iter().zip(im).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward(&mut z, scratch);
        a.resize(n, Complex64::default());
        b.resize(n, Complex64::default());
        for i in 0..n {
            let zk = z[i];
            let zn = z[self.negated(i)].conj();
            a[i] = (zk + zn) * 0.5;
            // (zk − zn) / 2i
            let d = zk - zn;
            b[i] = Complex64::new(d.im * 0.5, -d.re * 0.5);
        }
    }

    /// Circular cross-correlation `Σ_ρ a(ρ) b(ρ + δ)` from a spectral
    /// accumulator `Σ conj(A)·B`, in natural `[δy][δx]` layout.
    pub fn correlation(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        let mut scratch = vec![Complex64::default(); self.len()];
        self.inverse(&mut buf, &mut scratch);
        buf.iter().map(|c| c.re).collect()
    }

    /// Circular cross-correlation of two real images.
    pub fn correlate_images(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut scratch = vec![Complex64::default(); self.len()];
        let (mut fa, mut fb) = (Vec::new(), Vec::new());
        self.forward_pair(a, b, &mut fa, &mut fb, &mut scratch);
        let spectrum: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
        self.correlation(&spectrum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(a: &[f64], b: &[f64], w: usize, h: usize) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for dy in 0..h {
            for dx in 0..w {
                let mut s = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        s += a[y * w + x] * b[((y + dy) % h) * w + (x + dx) % w];
                    }
                }
                out[dy * w + dx] = s;
            }
        }
        out
    }

    #[test]
    fn non_square_matches_direct_sum() {
        let (w, h) = (6, 10);
        let a: Vec<f64> = (0..w * h).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let b: Vec<f64> = (0..w * h).map(|i| ((i * 104729) % 11) as f64 * 0.5).collect();
        let fft = Fft2::new(w, h);
        let got = fft.correlate_images(&a, &b);
        let want = direct(&a, &b, w, h);
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-10 * (1.0 + e.abs()), "{g} vs {e}");
        }
    }

    #[test]
    fn packed_pair_matches_separate_transforms() {
        let (w, h) = (8, 4);
        let a: Vec<f64> = (0..w * h).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..w * h).map(|i| (i as f64 * 0.3).cos()).collect();
        let fft = Fft2::new(w, h);
        let mut scratch = vec![Complex64::default(); w * h];
        let (mut fa, mut fb) = (Vec::new(), Vec::new());
        fft.forward_pair(&a, &b, &mut fa, &mut fb, &mut scratch);
        let mut sa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut sb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.forward(&mut sa, &mut scratch);
        fft.forward(&mut sb, &mut scratch);
        for i in 0..w * h {
            assert!((fa[i] - sa[i]).norm() < 1e-12);
            assert!((fb[i] - sb[i]).norm() < 1e-12);
        }
    }
}
