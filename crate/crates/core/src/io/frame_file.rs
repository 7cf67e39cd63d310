//! `TWIM` frame files: a 15-byte little-endian header followed by u16 LE
//! pixels, frames in order, each row-major. A JSON sidecar next to the file
//! records how the frames were made.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::detector::{threshold_frame, Camera, CameraNoise, OpticalGeometry};
use crate::error::{Error, Result};
use crate::frames::{BinaryFrameStack, FrameStack, StackMeta};
use crate::physics::BiphotonParams;
use crate::sampler::PlaneKind;

pub const MAGIC: [u8; 4] = *b"TWIM";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub plane: PlaneKind,
    pub camera: Camera,
    pub width: u16,
    pub height: u16,
    pub frame_count: u32,
}

impl FrameHeader {
    pub fn frame_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn payload_bytes(&self) -> u64 {
        self.frame_pixels() as u64 * self.frame_count as u64 * 2
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(&MAGIC);
        b[4] = VERSION;
        b[5] = self.plane.code();
        b[6] = self.camera.number();
        b[7..9].copy_from_slice(&self.width.to_le_bytes());
        b[9..11].copy_from_slice(&self.height.to_le_bytes());
        b[11..15].copy_from_slice(&self.frame_count.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if b[..4] != MAGIC {
            return Err(Error::Format("bad magic, not a TWIM frame file".into()));
        }
        if b[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", b[4])));
        }
        let plane = PlaneKind::from_code(b[5]).ok_or_else(|| Error::Format(format!("bad plane code {}", b[5])))?;
        let camera = Camera::from_number(b[6]).ok_or_else(|| Error::Format(format!("bad camera number {}", b[6])))?;
        let width = u16::from_le_bytes([b[7], b[8]]);
        let height = u16::from_le_bytes([b[9], b[10]]);
        let frame_count = u32::from_le_bytes([b[11], b[12], b[13], b[14]]);
        if width == 0 || height == 0 {
            return Err(Error::Format("zero image dimension".into()));
        }
        Ok(Self {
            plane,
            camera,
            width,
            height,
            frame_count,
        })
    }
}

/// Metadata stored next to a frame file as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub plane: PlaneKind,
    pub camera: u8,
    pub width: u16,
    pub height: u16,
    pub frame_count: u32,
    pub seed: u64,
    /// SHA-256 of `config`.
    pub config_digest: String,
    /// Fully resolved run configuration, in the config file syntax.
    pub config: String,
    pub params: BiphotonParams,
    pub geometry: OpticalGeometry,
    pub noise: CameraNoise,
    pub units: SidecarUnits,
    /// SHA-256 of the payload bytes.
    pub payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarUnits {
    pub coordinate: String,
    pub pixel_value: String,
    pub pixel_pitch: String,
}

impl SidecarUnits {
    fn for_plane(plane: PlaneKind) -> Self {
        Self {
            coordinate: match plane {
                PlaneKind::NearField => "um (crystal plane)".into(),
                PlaneKind::FarField => "hbar/um (transverse momentum)".into(),
            },
            pixel_value: "grayscale ADU".into(),
            pixel_pitch: "um (sensor)".into(),
        }
    }
}

impl Sidecar {
    pub fn stack_meta(&self) -> StackMeta {
        StackMeta {
            geometry: self.geometry,
            noise: self.noise,
            seed: self.seed,
            config_digest: self.config_digest.clone(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Streaming writer; frames may be appended in any number of chunks.
pub struct FrameFileWriter {
    out: BufWriter<File>,
    header: FrameHeader,
    written: u64,
    hasher: Sha256,
    path: PathBuf,
}

impl FrameFileWriter {
    pub fn create(path: &Path, header: FrameHeader) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&header.to_bytes())?;
        Ok(Self {
            out,
            header,
            written: 0,
            hasher: Sha256::new(),
            path: path.to_owned(),
        })
    }

    /// Append whole frames (row-major, concatenated).
    pub fn write_frames(&mut self, pixels: &[u16]) -> Result<()> {
        if !pixels.len().is_multiple_of(self.header.frame_pixels()) {
            return Err(Error::ShapeMismatch("partial frame written".into()));
        }
        let frames = (pixels.len() / self.header.frame_pixels()) as u64;
        if self.written + frames > self.header.frame_count as u64 {
            return Err(Error::ShapeMismatch("more frames than the header declares".into()));
        }
        let mut bytes = Vec::with_capacity(pixels.len() * 2);
        for p in pixels {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        self.hasher.update(&bytes);
        self.out.write_all(&bytes)?;
        self.written += frames;
        Ok(())
    }

    /// Flush the payload and write the sidecar. Returns the payload digest.
    pub fn finish(mut self, run: &RunConfig) -> Result<String> {
        if self.written != self.header.frame_count as u64 {
            return Err(Error::ShapeMismatch(format!(
                "wrote {} frames, header declares {}",
                self.written, self.header.frame_count
            )));
        }
        self.out.flush()?;
        let digest = hex(&self.hasher.finalize());
        let sidecar = Sidecar {
            format: format!("TWIM v{VERSION}"),
            plane: self.header.plane,
            camera: self.header.camera.number(),
            width: self.header.width,
            height: self.header.height,
            frame_count: self.header.frame_count,
            seed: run.source.seed,
            config_digest: run.digest(),
            config: run.echo(),
            params: run.source.params,
            geometry: run.geometry,
            noise: run.noise,
            units: SidecarUnits::for_plane(self.header.plane),
            payload_sha256: digest.clone(),
        };
        let mut json = serde_json::to_string_pretty(&sidecar)?;
        json.push('\n');
        std::fs::write(sidecar_path(&self.path), json)?;
        Ok(digest)
    }
}

/// Write an in-memory stack and its sidecar.
pub fn write_frame_file(path: &Path, stack: &FrameStack, run: &RunConfig) -> Result<String> {
    let header = header_for(
        stack.plane(),
        stack.camera(),
        stack.width(),
        stack.height(),
        stack.frame_count(),
    )?;
    let mut w = FrameFileWriter::create(path, header)?;
    w.write_frames(stack.data())?;
    w.finish(run)
}

pub fn header_for(plane: PlaneKind, camera: Camera, width: usize, height: usize, frames: usize) -> Result<FrameHeader> {
    let dim =
        |v: usize, what: &str| u16::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u16")));
    Ok(FrameHeader {
        plane,
        camera,
        width: dim(width, "width")?,
        height: dim(height, "height")?,
        frame_count: u32::try_from(frames).map_err(|_| Error::Format("too many frames".into()))?,
    })
}

/// Streaming reader over the frames of a file.
pub struct FrameFileReader {
    input: BufReader<File>,
    header: FrameHeader,
    next: u32,
}

impl FrameFileReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let mut input = BufReader::new(file);
        let mut hb = [0u8; HEADER_LEN];
        input
            .read_exact(&mut hb)
            .map_err(|_| Error::Format("file shorter than the header".into()))?;
        let header = FrameHeader::from_bytes(&hb)?;
        if len != HEADER_LEN as u64 + header.payload_bytes() {
            return Err(Error::Format(format!(
                "payload is {} bytes, header implies {}",
                len - HEADER_LEN as u64,
                header.payload_bytes()
            )));
        }
        Ok(Self { input, header, next: 0 })
    }

    pub fn header(&self) -> FrameHeader {
        self.header
    }

    /// Read the next frame into `out`; `false` once all frames are read.
    pub fn read_frame(&mut self, out: &mut Vec<u16>) -> Result<bool> {
        if self.next == self.header.frame_count {
            return Ok(false);
        }
        let n = self.header.frame_pixels();
        let mut bytes = vec![0u8; n * 2];
        self.input.read_exact(&mut bytes)?;
        out.clear();
        out.extend(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])));
        self.next += 1;
        Ok(true)
    }
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(sidecar_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Read a frame file and its sidecar into memory.
pub fn read_frame_file(path: &Path) -> Result<(FrameStack, Sidecar)> {
    let sidecar = read_sidecar(path)?;
    let mut reader = FrameFileReader::open(path)?;
    let h = reader.header();
    check_sidecar(&h, &sidecar)?;
    let mut stack = FrameStack::new(
        h.plane,
        h.camera,
        h.width as usize,
        h.height as usize,
        sidecar.stack_meta(),
    );
    let mut buf = Vec::new();
    while reader.read_frame(&mut buf)? {
        stack.push_frame(&buf)?;
    }
    Ok((stack, sidecar))
}

/// Read a frame file and threshold it on the fly with the sidecar's noise
/// model, without holding the grayscale frames.
pub fn read_binary(path: &Path) -> Result<(BinaryFrameStack, Sidecar)> {
    let sidecar = read_sidecar(path)?;
    let mut reader = FrameFileReader::open(path)?;
    let h = reader.header();
    check_sidecar(&h, &sidecar)?;
    let mut data = Vec::with_capacity(h.frame_pixels() * h.frame_count as usize);
    let mut buf = Vec::new();
    while reader.read_frame(&mut buf)? {
        threshold_frame(&buf, sidecar.noise.threshold, &mut data);
    }
    let stack = BinaryFrameStack::from_raw(h.plane, h.width as usize, h.height as usize, data)?;
    Ok((stack, sidecar))
}

fn check_sidecar(h: &FrameHeader, s: &Sidecar) -> Result<()> {
    if s.plane != h.plane
        || s.camera != h.camera.number()
        || s.width != h.width
        || s.height != h.height
        || s.frame_count != h.frame_count
    {
        return Err(Error::Format("sidecar does not describe this frame file".into()));
    }
    Ok(())
}
