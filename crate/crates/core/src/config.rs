//! Plain-text run configuration: `key = value` lines, `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::detector::{CameraNoise, OpticalGeometry};
use crate::error::{Error, Result};
use crate::physics::BiphotonParams;
use crate::sampler::SourceConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub geometry: OpticalGeometry,
    pub noise: CameraNoise,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: SourceConfig {
                params: BiphotonParams::default(),
                mean_pairs_per_frame: 1500.0,
                seed: 1,
                frames: 100,
            },
            geometry: OpticalGeometry::default(),
            noise: CameraNoise::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "sigma_p_x",
    "sigma_p_y",
    "sigma_phi_x",
    "sigma_phi_y",
    "mean_pairs_per_frame",
    "seed",
    "frames",
    "grid",
    "pixel_pitch_um",
    "magnification",
    "focal_length_mm",
    "wavelength_um",
    "center_offset_1_x",
    "center_offset_1_y",
    "center_offset_2_x",
    "center_offset_2_y",
    "quantum_efficiency",
    "cic_rate",
    "em_gain",
    "readout_sigma",
    "threshold",
];

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config {
        line,
        message: format!("cannot parse `{raw}` for `{key}`"),
    })
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.geometry.validate()?;
        self.noise.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("unknown key `{key}`"),
                });
            };
            if seen.contains(&known) {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            seen.push(known);
            cfg.set(line_no, known, value)?;
        }
        cfg.validate().map_err(|e| Error::Config {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let p = &mut self.source.params;
        let g = &mut self.geometry;
        let n = &mut self.noise;
        match key {
            "sigma_p_x" => p.sigma_p_x = parse_value(line, key, v)?,
            "sigma_p_y" => p.sigma_p_y = parse_value(line, key, v)?,
            "sigma_phi_x" => p.sigma_phi_x = parse_value(line, key, v)?,
            "sigma_phi_y" => p.sigma_phi_y = parse_value(line, key, v)?,
            "mean_pairs_per_frame" => self.source.mean_pairs_per_frame = parse_value(line, key, v)?,
            "seed" => self.source.seed = parse_value(line, key, v)?,
            "frames" => self.source.frames = parse_value(line, key, v)?,
            "grid" => g.grid = parse_value(line, key, v)?,
            "pixel_pitch_um" => g.pixel_pitch_um = parse_value(line, key, v)?,
            "magnification" => g.magnification = parse_value(line, key, v)?,
            "focal_length_mm" => g.focal_length_mm = parse_value(line, key, v)?,
            "wavelength_um" => g.wavelength_um = parse_value(line, key, v)?,
            "center_offset_1_x" => g.center_offset[0][0] = parse_value(line, key, v)?,
            "center_offset_1_y" => g.center_offset[0][1] = parse_value(line, key, v)?,
            "center_offset_2_x" => g.center_offset[1][0] = parse_value(line, key, v)?,
            "center_offset_2_y" => g.center_offset[1][1] = parse_value(line, key, v)?,
            "quantum_efficiency" => n.quantum_efficiency = parse_value(line, key, v)?,
            "cic_rate" => n.cic_rate = parse_value(line, key, v)?,
            "em_gain" => n.em_gain = parse_value(line, key, v)?,
            "readout_sigma" => n.readout_sigma = parse_value(line, key, v)?,
            "threshold" => n.threshold = parse_value(line, key, v)?,
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }

    /// Fully resolved configuration in the input syntax. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn echo(&self) -> String {
        let p = &self.source.params;
        let g = &self.geometry;
        let n = &self.noise;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            if v.is_empty() {
                let _ = writeln!(out, "# {k}");
            } else {
                let _ = writeln!(out, "{k} = {v}");
            }
        };
        put("biphoton widths (um)", String::new());
        put("sigma_p_x", p.sigma_p_x.to_string());
        put("sigma_p_y", p.sigma_p_y.to_string());
        put("sigma_phi_x", p.sigma_phi_x.to_string());
        put("sigma_phi_y", p.sigma_phi_y.to_string());
        put("source", String::new());
        put("mean_pairs_per_frame", self.source.mean_pairs_per_frame.to_string());
        put("seed", self.source.seed.to_string());
        put("frames", self.source.frames.to_string());
        put("optical geometry", String::new());
        put("grid", g.grid.to_string());
        put("pixel_pitch_um", g.pixel_pitch_um.to_string());
        put("magnification", g.magnification.to_string());
        put("focal_length_mm", g.focal_length_mm.to_string());
        put("wavelength_um", g.wavelength_um.to_string());
        put("center_offset_1_x", g.center_offset[0][0].to_string());
        put("center_offset_1_y", g.center_offset[0][1].to_string());
        put("center_offset_2_x", g.center_offset[1][0].to_string());
        put("center_offset_2_y", g.center_offset[1][1].to_string());
        put("camera noise (grayscale units)", String::new());
        put("quantum_efficiency", n.quantum_efficiency.to_string());
        put("cic_rate", n.cic_rate.to_string());
        put("em_gain", n.em_gain.to_string());
        put("readout_sigma", n.readout_sigma.to_string());
        put("threshold", n.threshold.to_string());
        out
    }

    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.echo().as_bytes());
        hash.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
