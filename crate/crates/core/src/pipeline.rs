//! File-level pipeline behind the command-line tool: simulate to frame
//! files, analyze frame files into a report, and summarize a report.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::correlation::{
    analyze_plane, build_report, AnalysisOptions, EprReport, PerPlane, PlaneAnalysis, ReportContext,
};
use crate::detector::Camera;
use crate::error::{Error, Result};
use crate::io::{self, read_binary, FrameFileWriter, Sidecar};
use crate::physics::{Axis, HEISENBERG_BOUND};
use crate::sampler::PlaneKind;
use crate::simulate::for_each_gray_chunk;

pub const REPORT_FILE: &str = "report.json";
pub const SNR_FILE: &str = "snr.csv";

/// Default frame file name for one camera of one plane.
pub fn frame_file_name(plane: PlaneKind, camera: Camera) -> String {
    format!("{}_cam{}.twim", plane.name(), camera.number())
}

pub fn map_file_name(plane: PlaneKind) -> String {
    format!("{}_corr.csv", plane.name())
}

/// Simulate `run.source.frames` frame pairs of one plane, streaming them to
/// `dir`. Returns the camera 1 and camera 2 file paths.
pub fn simulate_to_files(run: &RunConfig, plane: PlaneKind, dir: &Path) -> Result<[PathBuf; 2]> {
    run.validate()?;
    std::fs::create_dir_all(dir)?;
    let g = run.geometry.grid;
    let paths = [Camera::One, Camera::Two].map(|c| dir.join(frame_file_name(plane, c)));
    let mut writers = Vec::with_capacity(2);
    for (path, camera) in paths.iter().zip([Camera::One, Camera::Two]) {
        let header = io::frame_file::header_for(plane, camera, g, g, run.source.frames)?;
        writers.push(FrameFileWriter::create(path, header)?);
    }
    for_each_gray_chunk(run, plane, |_, a, b| {
        writers[0].write_frames(a)?;
        writers[1].write_frames(b)
    })?;
    for w in writers {
        w.finish(run)?;
    }
    Ok(paths)
}

/// Threshold and analyze one plane's pair of frame files.
pub fn analyze_files(
    cam1: &Path,
    cam2: &Path,
    plane: PlaneKind,
    opts: &AnalysisOptions,
) -> Result<(PlaneAnalysis, Sidecar)> {
    let (s1, meta1) = read_binary(cam1)?;
    let (s2, meta2) = read_binary(cam2)?;
    for (meta, camera) in [(&meta1, 1), (&meta2, 2)] {
        if meta.plane != plane {
            return Err(Error::PlaneMismatch(format!(
                "{} holds {}-field frames, expected {plane}",
                if camera == 1 { cam1 } else { cam2 }.display(),
                meta.plane
            )));
        }
        if meta.camera != camera {
            return Err(Error::InvalidParameter(format!(
                "expected a camera {camera} file, got camera {}",
                meta.camera
            )));
        }
    }
    if meta1.geometry != meta2.geometry || meta1.noise != meta2.noise {
        return Err(Error::GeometryMismatch(format!(
            "{plane}-field cameras were recorded with different settings"
        )));
    }
    let analysis = analyze_plane(&s1, &s2, &meta1.geometry, opts)?;
    Ok((analysis, meta1))
}

/// Everything `analyze` produces, before it is written to disk.
pub struct AnalysisOutput {
    pub report: EprReport,
    pub near: PlaneAnalysis,
    pub far: PlaneAnalysis,
    pub sidecars: PerPlane<Sidecar>,
}

pub fn analyze(near: [&Path; 2], far: [&Path; 2], opts: &AnalysisOptions) -> Result<AnalysisOutput> {
    let (na, ns) = analyze_files(near[0], near[1], PlaneKind::NearField, opts)?;
    let (fa, fs) = analyze_files(far[0], far[1], PlaneKind::FarField, opts)?;
    let ctx = ReportContext {
        params: (ns.params == fs.params).then_some(ns.params),
        config_digest: Some(PerPlane {
            near: ns.config_digest.clone(),
            far: fs.config_digest.clone(),
        }),
    };
    let report = build_report(&na, &fa, opts, &ctx)?;
    Ok(AnalysisOutput {
        report,
        near: na,
        far: fa,
        sidecars: PerPlane { near: ns, far: fs },
    })
}

/// Write report.json, near_corr.csv, far_corr.csv and snr.csv into `dir`.
pub fn write_outputs(out: &AnalysisOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let report = dir.join(REPORT_FILE);
    io::write_report(&report, &out.report)?;
    let mut written = vec![report];
    for (a, s) in [(&out.near, &out.sidecars.near), (&out.far, &out.sidecars.far)] {
        let p = dir.join(map_file_name(a.plane));
        io::write_map_csv(&p, &a.map, &s.geometry)?;
        written.push(p);
    }
    let snr = dir.join(SNR_FILE);
    io::write_snr_csv(&snr, &[&out.near.snr, &out.far.snr])?;
    written.push(snr);
    Ok(written)
}

fn pm(m: crate::correlation::Measurement) -> String {
    format!("{:.4e} ± {:.1e}", m.value, m.uncertainty)
}

/// Human-readable summary of a report.
pub fn summarize(r: &EprReport) -> String {
    let mut s = String::new();
    let mut line = |t: String| {
        s.push_str(&t);
        s.push('\n');
    };
    line(format!(
        "frames: near {}, far {}",
        r.metadata.frames.near, r.metadata.frames.far
    ));
    line(String::new());
    line(format!("{:<26}{:<36}{:<36}", "", "x", "y"));
    line(format!(
        "{:<26}{:<36}{:<36}",
        "var diff [um^2]",
        pm(r.var_diff.x),
        pm(r.var_diff.y)
    ));
    line(format!(
        "{:<26}{:<36}{:<36}",
        "var sum p [hbar^2/um^2]",
        pm(r.var_sum_p.x),
        pm(r.var_sum_p.y)
    ));
    let prod = |a: Axis| {
        let p = r.products.get(a);
        format!(
            "{:.4e} ± {:.1e} (boot {:.1e})",
            p.value, p.unc_propagated, p.unc_bootstrap
        )
    };
    line(format!(
        "{:<26}{:<36}{:<36}",
        "product [hbar^2]",
        prod(Axis::X),
        prod(Axis::Y)
    ));
    line(String::new());
    for a in Axis::BOTH {
        let p = r.products.get(a);
        let verdict = if p.violated { "VIOLATED" } else { "not violated" };
        line(format!(
            "{a}: product {:.4e} vs bound {HEISENBERG_BOUND}: {verdict} ({:.1} sigma)",
            p.value,
            r.n_sigma_violation.get(a)
        ));
    }
    line(format!("V_x = {:.1} ± {:.1}", r.v.x.value, r.v.x.uncertainty));
    line(format!("V_y = {:.1} ± {:.1}", r.v.y.value, r.v.y.uncertainty));
    line(format!(
        "K = sqrt(V_x * V_y) = sqrt({:.1} * {:.1}) = {:.1} ± {:.1}",
        r.v.x.value, r.v.y.value, r.schmidt_k.value, r.schmidt_k.uncertainty
    ));
    line(format!(
        "r_near = {:.5} ± {:.5}, r_far = {:.5} ± {:.5}",
        r.r_near.value, r.r_near.uncertainty, r.r_far.value, r.r_far.uncertainty
    ));
    let mf = |m: Option<usize>| m.map_or("not reached".to_string(), |n| n.to_string());
    line(format!(
        "min frames to detect (SNR >= {}): near {}, far {}",
        r.metadata.detection_threshold,
        mf(r.min_frames_detect.near),
        mf(r.min_frames_detect.far)
    ));
    if let Some(p) = &r.prediction {
        line(format!(
            "predicted: V_x = {:.1}, V_y = {:.1}, K = {:.1}",
            p.v_x, p.v_y, p.schmidt_k
        ));
    }
    line(
        if r.both_violated() {
            "EPR bound violated on both axes"
        } else {
            "EPR bound not violated on both axes"
        }
        .into(),
    );
    s
}
