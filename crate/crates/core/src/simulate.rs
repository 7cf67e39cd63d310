//! End-to-end frame generation: pairs, camera exposure, thresholding.
//!
//! Frames are independent given the seed, so chunks are generated in
//! parallel and the output never depends on the thread count.

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::detector::{expose_frame, threshold_frame, Camera};
use crate::error::Result;
use crate::frames::{BinaryFrameStack, FrameStack, StackMeta};
use crate::sampler::{sample_frame_pairs, PlaneKind};

const CHUNK_FRAMES: usize = 16;

/// Grayscale frames of both cameras for frame `index`.
pub fn simulate_frame(run: &RunConfig, plane: PlaneKind, index: usize) -> [Vec<u16>; 2] {
    let pairs = sample_frame_pairs(&run.source, plane, index);
    expose_frame(&pairs, &run.geometry, &run.noise, plane, run.source.seed, index)
}

/// Generate all frames chunk by chunk, handing each chunk's grayscale data
/// (camera 1, camera 2; row-major, frames concatenated) to `sink` in order.
pub fn for_each_gray_chunk<F>(run: &RunConfig, plane: PlaneKind, mut sink: F) -> Result<()>
where
    F: FnMut(usize, &[u16], &[u16]) -> Result<()>,
{
    run.validate()?;
    let frames = run.source.frames;
    let npix = run.geometry.pixels();
    let mut start = 0;
    while start < frames {
        let end = (start + CHUNK_FRAMES).min(frames);
        let chunk: Vec<[Vec<u16>; 2]> = (start..end)
            .into_par_iter()
            .map(|i| simulate_frame(run, plane, i))
            .collect();
        let mut a = Vec::with_capacity(chunk.len() * npix);
        let mut b = Vec::with_capacity(chunk.len() * npix);
        for [f1, f2] in &chunk {
            a.extend_from_slice(f1);
            b.extend_from_slice(f2);
        }
        sink(start, &a, &b)?;
        start = end;
    }
    Ok(())
}

pub fn stack_meta(run: &RunConfig) -> StackMeta {
    StackMeta {
        geometry: run.geometry,
        noise: run.noise,
        seed: run.source.seed,
        config_digest: run.digest(),
    }
}

/// Full grayscale stacks held in memory.
pub fn simulate_gray(run: &RunConfig, plane: PlaneKind) -> Result<(FrameStack, FrameStack)> {
    let g = run.geometry.grid;
    let meta = stack_meta(run);
    let mut cam1 = FrameStack::new(plane, Camera::One, g, g, meta.clone());
    let mut cam2 = FrameStack::new(plane, Camera::Two, g, g, meta);
    let npix = run.geometry.pixels();
    for_each_gray_chunk(run, plane, |_, a, b| {
        for (f1, f2) in a.chunks_exact(npix).zip(b.chunks_exact(npix)) {
            cam1.push_frame(f1)?;
            cam2.push_frame(f2)?;
        }
        Ok(())
    })?;
    Ok((cam1, cam2))
}

/// Thresholded stacks, built without keeping the grayscale frames around.
pub fn simulate_binary(run: &RunConfig, plane: PlaneKind) -> Result<(BinaryFrameStack, BinaryFrameStack)> {
    let g = run.geometry.grid;
    let total = run.source.frames * run.geometry.pixels();
    let mut a = Vec::with_capacity(total);
    let mut b = Vec::with_capacity(total);
    for_each_gray_chunk(run, plane, |_, g1, g2| {
        threshold_frame(g1, run.noise.threshold, &mut a);
        threshold_frame(g2, run.noise.threshold, &mut b);
        Ok(())
    })?;
    Ok((
        BinaryFrameStack::from_raw(plane, g, g, a)?,
        BinaryFrameStack::from_raw(plane, g, g, b)?,
    ))
}
