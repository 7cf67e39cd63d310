//! Text formats for correlation maps and SNR curves.
//!
//! A map file starts with `# key = value` lines, then a header row whose
//! cells are the horizontal shifts, then one row per vertical shift. Shift
//! labels read `<cells>px:<physical><unit>`; the corner cell is `dy\dx`.
//! Values use the shortest representation that parses back to the same f64.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::correlation::{CorrelationMap, SnrCurve};
use crate::detector::OpticalGeometry;
use crate::error::{Error, Result};
use crate::sampler::PlaneKind;

pub const CORNER: &str = "dy\\dx";

fn unit(plane: PlaneKind) -> &'static str {
    match plane {
        PlaneKind::NearField => "um",
        PlaneKind::FarField => "hbar/um",
    }
}

fn label(k: i64, cell: f64, unit: &str) -> String {
    format!("{k}px:{:.2}{unit}", k as f64 * cell)
}

/// Render a map; `geometry` supplies the physical size of one map cell.
pub fn map_to_csv(map: &CorrelationMap, geometry: &OpticalGeometry) -> Result<String> {
    geometry.validate()?;
    let cell = geometry.effective_pixel(map.plane, map.grouping);
    let u = unit(map.plane);
    let [hx, hy] = map.half_widths();
    let (hx, hy) = (hx as i64, hy as i64);
    let mut out = String::new();
    let mut meta = |k: &str, v: &dyn std::fmt::Display| writeln!(out, "# {k} = {v}").expect("string write");
    meta("plane", &map.plane.name());
    meta("frame_count", &map.frame_count);
    meta("grouping", &map.grouping);
    meta("flipped", &map.flipped);
    meta("background_corrected", &map.background_corrected);
    meta("unit", &u);
    meta("cell_size", &cell);
    meta("value", &"pearson-normalized cross-correlation");
    out.push_str(CORNER);
    for dx in -hx..=hx {
        out.push(',');
        out.push_str(&label(dx, cell, u));
    }
    out.push('\n');
    for (iy, row) in map.values().outer_iter().enumerate() {
        out.push_str(&label(iy as i64 - hy, cell, u));
        for v in row {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_map_csv(path: &Path, map: &CorrelationMap, geometry: &OpticalGeometry) -> Result<()> {
    std::fs::write(path, map_to_csv(map, geometry)?)?;
    Ok(())
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Format(format!("map csv line {line}: {}", msg.into()))
}

fn shift_of(cell: &str, line: usize) -> Result<i64> {
    cell.split_once("px")
        .and_then(|(k, _)| k.parse().ok())
        .ok_or_else(|| bad(line, format!("bad shift label {cell:?}")))
}

/// Parse a map written by [`map_to_csv`].
pub fn map_from_csv(text: &str) -> Result<CorrelationMap> {
    let mut meta = BTreeMap::new();
    let mut rows = Vec::new();
    let mut xs = None;
    let mut ys = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if let Some(m) = raw.strip_prefix('#') {
            let (k, v) = m
                .split_once('=')
                .ok_or_else(|| bad(line, "metadata needs key = value"))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        let mut cells = raw.split(',');
        let first = cells.next().unwrap_or_default();
        if xs.is_none() {
            if first != CORNER {
                return Err(bad(line, "expected the shift header row"));
            }
            xs = Some(cells.map(|c| shift_of(c, line)).collect::<Result<Vec<_>>>()?);
            continue;
        }
        ys.push(shift_of(first, line)?);
        let row = cells
            .map(|c| c.parse::<f64>().map_err(|_| bad(line, format!("bad value {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != xs.as_ref().map_or(0, Vec::len) {
            return Err(bad(line, "row length differs from the header"));
        }
        rows.push(row);
    }
    let xs = xs.ok_or_else(|| Error::Format("map csv has no header row".into()))?;
    let centered = |s: &[i64]| {
        let h = (s.len() / 2) as i64;
        s.len() % 2 == 1 && s.iter().copied().eq(-h..=h)
    };
    if !centered(&xs) || !centered(&ys) {
        return Err(Error::Format(
            "shift labels must run from -h to h in steps of one".into(),
        ));
    }
    let get = |k: &str| {
        meta.get(k)
            .ok_or_else(|| Error::Format(format!("map csv lacks '{k}' metadata")))
    };
    let parse_err = |k: &str| Error::Format(format!("map csv has a bad '{k}' value"));
    let plane: PlaneKind = get("plane")?.parse().map_err(|_| parse_err("plane"))?;
    let frame_count = get("frame_count")?.parse().map_err(|_| parse_err("frame_count"))?;
    let grouping = get("grouping")?.parse().map_err(|_| parse_err("grouping"))?;
    let flipped = get("flipped")?.parse().map_err(|_| parse_err("flipped"))?;
    let corrected = get("background_corrected")?
        .parse()
        .map_err(|_| parse_err("background_corrected"))?;
    let values =
        Array2::from_shape_vec((ys.len(), xs.len()), rows.concat()).map_err(|e| Error::Format(e.to_string()))?;
    CorrelationMap::new(values, frame_count, grouping, plane, flipped, corrected)
}

pub fn read_map_csv(path: &Path) -> Result<CorrelationMap> {
    map_from_csv(&std::fs::read_to_string(path)?)
}

pub const SNR_HEADER: &str = "plane,grouping,frames,snr,detected";

/// One row per (plane, frame count); `detected` is the SNR against the
/// detection threshold.
pub fn snr_to_csv(curves: &[&SnrCurve]) -> String {
    let mut out = String::from(SNR_HEADER);
    out.push('\n');
    for c in curves {
        for p in &c.points {
            let detected = p.snr >= crate::correlation::DETECTION_THRESHOLD;
            writeln!(
                out,
                "{},{},{},{},{}",
                c.plane.name(),
                c.grouping,
                p.frames,
                p.snr,
                detected
            )
            .expect("string write");
        }
    }
    out
}

pub fn write_snr_csv(path: &Path, curves: &[&SnrCurve]) -> Result<()> {
    std::fs::write(path, snr_to_csv(curves))?;
    Ok(())
}

/// Parse an SNR file back into one curve per plane, in file order.
pub fn snr_from_csv(text: &str) -> Result<Vec<SnrCurve>> {
    let mut lines = text.lines();
    if lines.next() != Some(SNR_HEADER) {
        return Err(Error::Format(format!("snr csv must start with '{SNR_HEADER}'")));
    }
    let mut curves: Vec<(PlaneKind, usize, Vec<crate::correlation::SnrPoint>)> = Vec::new();
    for (i, raw) in lines.enumerate() {
        let line = i + 2;
        if raw.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = raw.split(',').collect();
        let err = || Error::Format(format!("snr csv line {line}: malformed row"));
        if c.len() != 5 {
            return Err(err());
        }
        let plane: PlaneKind = c[0].parse().map_err(|_| err())?;
        let grouping: usize = c[1].parse().map_err(|_| err())?;
        let point = crate::correlation::SnrPoint {
            frames: c[2].parse().map_err(|_| err())?,
            snr: c[3].parse().map_err(|_| err())?,
        };
        match curves.iter_mut().find(|(p, g, _)| *p == plane && *g == grouping) {
            Some(entry) => entry.2.push(point),
            None => curves.push((plane, grouping, vec![point])),
        }
    }
    Ok(curves
        .into_iter()
        .map(|(plane, grouping, points)| {
            SnrCurve::from_points(plane, grouping, points.into_iter().map(|p| (p.frames, p.snr)).collect())
        })
        .collect())
}
