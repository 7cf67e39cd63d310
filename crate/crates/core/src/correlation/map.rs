use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sampler::PlaneKind;

/// Peaks at or above this many standard deviations count as detected.
pub const DETECTION_THRESHOLD: f64 = 4.5;
/// Block size (in native pixels) used when judging peak significance.
pub const DETECTION_GROUPING: usize = 8;
/// Cells whose expected null variance is below this fraction of the largest
/// are left out of significance statistics; they see almost no light.
const VARIANCE_FLOOR: f64 = 0.01;

/// Normalized cross-correlation over pixel shifts, on a window centered on
/// zero shift. `values[[iy, ix]]` is the shift `(ix − hx, iy − hy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    values: Array2<f64>,
    /// Expected variance of each value when the cameras are uncorrelated,
    /// in the same normalized units. Used to standardize significance.
    variance: Option<Array2<f64>>,
    pub frame_count: usize,
    pub grouping: usize,
    pub plane: PlaneKind,
    pub flipped: bool,
    pub background_corrected: bool,
}

impl CorrelationMap {
    pub fn new(
        values: Array2<f64>,
        frame_count: usize,
        grouping: usize,
        plane: PlaneKind,
        flipped: bool,
        background_corrected: bool,
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows % 2 == 0 || cols % 2 == 0 {
            return Err(Error::ShapeMismatch(format!(
                "correlation window must have odd dimensions, got {cols}x{rows}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("correlation values"));
        }
        if grouping == 0 {
            return Err(Error::InvalidParameter("grouping must be at least 1".into()));
        }
        Ok(Self {
            values,
            variance: None,
            frame_count,
            grouping,
            plane,
            flipped,
            background_corrected,
        })
    }

    pub fn with_variance(mut self, variance: Array2<f64>) -> Result<Self> {
        if variance.dim() != self.values.dim() {
            return Err(Error::ShapeMismatch("variance map shape differs from values".into()));
        }
        if variance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("correlation variance"));
        }
        self.variance = Some(variance);
        Ok(self)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn variance(&self) -> Option<&Array2<f64>> {
        self.variance.as_ref()
    }

    /// Largest shift represented along x and y.
    pub fn half_widths(&self) -> [usize; 2] {
        let (rows, cols) = self.values.dim();
        [cols / 2, rows / 2]
    }

    pub fn get(&self, dx: i64, dy: i64) -> Option<f64> {
        let [hx, hy] = self.half_widths();
        let ix = usize::try_from(dx + hx as i64).ok()?;
        let iy = usize::try_from(dy + hy as i64).ok()?;
        self.values.get((iy, ix)).copied()
    }

    /// Shift and value of the maximum (first in row-major order on ties).
    pub fn peak(&self) -> ([i64; 2], f64) {
        let (iy, ix) = argmax(&self.values, None);
        let [hx, hy] = self.half_widths();
        ([ix as i64 - hx as i64, iy as i64 - hy as i64], self.values[[iy, ix]])
    }

    /// Sum shifts over `g × g` blocks centered on zero shift. Cell `k` along
    /// an axis holds shifts `g·k − ⌊g/2⌋ ..= g·k − ⌊g/2⌋ + g − 1`; only cells
    /// that fit inside the window are kept.
    pub fn grouped(&self, g: usize) -> Result<Self> {
        if g == 0 {
            return Err(Error::InvalidParameter("grouping must be at least 1".into()));
        }
        if g == 1 {
            return Ok(self.clone());
        }
        let [hx, hy] = self.half_widths();
        let kx = cells_within(hx, g)?;
        let ky = cells_within(hy, g)?;
        let values = group_window(&self.values, [hx, hy], [kx, ky], g);
        let mut out = Self::new(
            values,
            self.frame_count,
            self.grouping * g,
            self.plane,
            self.flipped,
            self.background_corrected,
        )?;
        if let Some(var) = &self.variance {
            out = out.with_variance(group_window(var, [hx, hy], [kx, ky], g))?;
        }
        Ok(out)
    }

    /// Peak height in standard deviations of the off-peak cells, after
    /// grouping to blocks of [`DETECTION_GROUPING`] native pixels. With a
    /// variance map the cells are standardized first.
    pub fn significance(&self) -> f64 {
        let block = (DETECTION_GROUPING / self.grouping).max(1);
        let grouped = match self.grouped(block) {
            Ok(g) => g,
            Err(_) => self.clone(),
        };
        snr_statistic(&grouped.values, grouped.variance.as_ref())
    }
}

fn cells_within(half: usize, g: usize) -> Result<usize> {
    let lead = g / 2;
    if half < lead {
        return Err(Error::BadGrouping {
            factor: g,
            size: 2 * half + 1,
        });
    }
    Ok((half - lead) / g)
}

fn group_window(src: &Array2<f64>, half: [usize; 2], cells: [usize; 2], g: usize) -> Array2<f64> {
    let lead = (g / 2) as i64;
    let [kx, ky] = cells.map(|k| k as i64);
    let mut out = Array2::zeros(((2 * ky + 1) as usize, (2 * kx + 1) as usize));
    for cy in -ky..=ky {
        for cx in -kx..=kx {
            let mut s = 0.0;
            for j in 0..g as i64 {
                let iy = (g as i64 * cy - lead + j + half[1] as i64) as usize;
                for i in 0..g as i64 {
                    let ix = (g as i64 * cx - lead + i + half[0] as i64) as usize;
                    s += src[[iy, ix]];
                }
            }
            out[[(cy + ky) as usize, (cx + kx) as usize]] = s;
        }
    }
    out
}

/// Block sums of a full circular correlation (`[δy][δx]`, δ taken modulo the
/// image size), cells centered on zero shift as in [`CorrelationMap::grouped`].
pub(crate) fn group_cyclic(full: &[f64], width: usize, height: usize, g: usize) -> Result<Array2<f64>> {
    for size in [width, height] {
        if g == 0 || size % g != 0 {
            return Err(Error::BadGrouping { factor: g, size });
        }
    }
    let (nx, ny) = (width / g, height / g);
    let (kx0, ky0) = ((nx / 2) as i64, (ny / 2) as i64);
    let lead = (g / 2) as i64;
    let mut out = Array2::zeros((ny, nx));
    for cy in 0..ny as i64 {
        for cx in 0..nx as i64 {
            let mut s = 0.0;
            for j in 0..g as i64 {
                let dy = ((cy - ky0) * g as i64 - lead + j).rem_euclid(height as i64) as usize;
                for i in 0..g as i64 {
                    let dx = ((cx - kx0) * g as i64 - lead + i).rem_euclid(width as i64) as usize;
                    s += full[dy * width + dx];
                }
            }
            out[[cy as usize, cx as usize]] = s;
        }
    }
    Ok(out)
}

/// Centered window `±half` of a full circular correlation.
pub(crate) fn window(full: &[f64], width: usize, height: usize, half: [usize; 2]) -> Array2<f64> {
    let [hx, hy] = half;
    Array2::from_shape_fn((2 * hy + 1, 2 * hx + 1), |(iy, ix)| {
        let dy = (iy as i64 - hy as i64).rem_euclid(height as i64) as usize;
        let dx = (ix as i64 - hx as i64).rem_euclid(width as i64) as usize;
        full[dy * width + dx]
    })
}

fn argmax(values: &Array2<f64>, valid: Option<&Array2<bool>>) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for ((iy, ix), &v) in values.indexed_iter() {
        if valid.is_some_and(|m| !m[[iy, ix]]) {
            continue;
        }
        if v > best_v {
            best_v = v;
            best = (iy, ix);
        }
    }
    best
}

/// `(max − mean) / std` of a map, with mean and std taken over cells outside
/// the 3×3 neighbourhood of the maximum.
pub(crate) fn snr_statistic(values: &Array2<f64>, variance: Option<&Array2<f64>>) -> f64 {
    let (z, valid) = match variance {
        Some(var) => {
            let max_var = var.iter().cloned().fold(0.0, f64::max);
            let valid = var.mapv(|v| v > VARIANCE_FLOOR * max_var && v > 0.0);
            let z = ndarray::Zip::from(values)
                .and(var)
                .map_collect(|&c, &v| if v > 0.0 { c / v.sqrt() } else { 0.0 });
            (z, valid)
        }
        None => (values.clone(), values.mapv(|_| true)),
    };
    if !valid.iter().any(|&b| b) {
        return 0.0;
    }
    let (py, px) = argmax(&z, Some(&valid));
    let peak = z[[py, px]];
    let rest: Vec<f64> = z
        .indexed_iter()
        .filter(|((iy, ix), _)| valid[[*iy, *ix]] && (iy.abs_diff(py) > 1 || ix.abs_diff(px) > 1))
        .map(|(_, &v)| v)
        .collect();
    if rest.len() < 2 {
        return 0.0;
    }
    let n = rest.len() as f64;
    let mean = rest.iter().sum::<f64>() / n;
    let var = rest.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var > 0.0 {
        (peak - mean) / var.sqrt()
    } else if peak > mean {
        f64::INFINITY
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map_from(values: Array2<f64>) -> CorrelationMap {
        CorrelationMap::new(values, 10, 1, PlaneKind::NearField, false, true).unwrap()
    }

    #[test]
    fn rejects_even_or_non_finite() {
        assert!(CorrelationMap::new(Array2::zeros((4, 5)), 1, 1, PlaneKind::NearField, false, false).is_err());
        let mut v = Array2::zeros((3, 3));
        v[[1, 1]] = f64::NAN;
        assert!(CorrelationMap::new(v, 1, 1, PlaneKind::NearField, false, false).is_err());
    }

    #[test]
    fn peak_and_get_use_centered_shifts() {
        let mut v = Array2::zeros((5, 7));
        v[[1, 5]] = 3.0;
        let m = map_from(v);
        assert_eq!(m.half_widths(), [3, 2]);
        assert_eq!(m.peak(), ([2, -1], 3.0));
        assert_eq!(m.get(2, -1), Some(3.0));
        assert_eq!(m.get(4, 0), None);
    }

    #[test]
    fn grouping_centers_cells_on_zero() {
        // 129-wide window grouped by 8 keeps cells −7..=7
        let v = Array2::from_elem((129, 129), 1.0);
        let g = map_from(v).grouped(8).unwrap();
        assert_eq!(g.half_widths(), [7, 7]);
        assert!(g.values().iter().all(|&x| x == 64.0));
        assert_eq!(g.grouping, 8);

        // zero shift lands in the center cell
        let mut v = Array2::zeros((17, 17));
        v[[8, 8]] = 1.0;
        let g = map_from(v).grouped(4).unwrap();
        assert_eq!(g.peak(), ([0, 0], 1.0));
    }

    #[test]
    fn cyclic_grouping_covers_every_shift_once() {
        let (w, h) = (16, 8);
        let full: Vec<f64> = (0..w * h).map(|i| i as f64).collect();
        let g = group_cyclic(&full, w, h, 4).unwrap();
        assert_eq!(g.dim(), (2, 4));
        assert!((g.sum() - full.iter().sum::<f64>()).abs() < 1e-9);
        // center cell holds shifts −2..=1 on both axes
        let mut want = 0.0;
        for dy in -2i64..2 {
            for dx in -2i64..2 {
                want += full[(dy.rem_euclid(8) * 16 + dx.rem_euclid(16)) as usize];
            }
        }
        assert_eq!(g[[1, 2]], want);
        assert!(group_cyclic(&full, w, h, 3).is_err());
    }

    #[test]
    fn snr_of_isolated_spike() {
        let mut v = Array2::from_shape_fn((21, 21), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        v[[10, 10]] = 50.0;
        let s = snr_statistic(&v, None);
        assert!(s > 45.0 && s < 55.0, "{s}");
    }

    #[test]
    fn standardization_uses_variance() {
        let v = Array2::from_shape_fn((21, 21), |(i, j)| if (i + j) % 2 == 0 { 2.0 } else { -2.0 });
        let var = Array2::from_elem((21, 21), 4.0);
        let a = snr_statistic(&v, Some(&var));
        let b = snr_statistic(&v, None);
        assert!((a - b).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn grouping_preserves_sum_of_covered_shifts(g in 1usize..6, seed in 0u64..1000) {
            let n = 41;
            let v = Array2::from_shape_fn((n, n), |(i, j)| ((i * 31 + j * 17 + seed as usize) % 7) as f64);
            let m = map_from(v.clone());
            let gm = m.grouped(g).unwrap();
            let [k, _] = gm.half_widths();
            let lo = 20 - (g * k + g / 2) as i64;
            let hi = lo + ((2 * k + 1) * g) as i64;
            let covered: f64 = v
                .indexed_iter()
                .filter(|((i, j), _)| (lo..hi).contains(&(*i as i64)) && (lo..hi).contains(&(*j as i64)))
                .map(|(_, x)| *x)
                .sum();
            prop_assert!((gm.values().sum() - covered).abs() < 1e-9);
        }
    }
}
