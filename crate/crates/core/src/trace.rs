//! Trace directories.
//!
//! A trace is a directory holding a UTF-8 TOML `manifest` and one raw blob
//! per stream: `depth_<role>.bin`, `emb_<role>.bin`, `attn_<role>.bin`
//! (only for cameras declaring attention) and `robot.bin`. Blobs are
//! little-endian IEEE-754 f32, row-major, frames concatenated. Frame `i`
//! of the blobs is frame index `i`. A robot record is
//! `[aperture, x, y, z, (dx, dy, dz, d_aperture) * chunk_len]`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CameraFrame, CameraSpec, DepthMap, Embeddings, FrameRecord, RobotState, StreamLayout};

pub const TRACE_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub scenario: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub version: u32,
    pub frame_count: usize,
    pub chunk_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorMeta>,
    pub cameras: Vec<CameraSpec>,
}

impl TraceHeader {
    pub fn new(layout: StreamLayout, frame_count: usize, generator: Option<GeneratorMeta>) -> Self {
        Self {
            version: TRACE_VERSION,
            frame_count,
            chunk_len: layout.chunk_len,
            generator,
            cameras: layout.cameras,
        }
    }

    pub fn layout(&self) -> StreamLayout {
        StreamLayout {
            cameras: self.cameras.clone(),
            chunk_len: self.chunk_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != TRACE_VERSION {
            return Err(Error::Malformed {
                what: "manifest".into(),
                reason: format!("unsupported version {}", self.version),
            });
        }
        self.layout().validate()
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("header serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let header: Self = toml::from_str(text).map_err(|e| Error::Malformed {
            what: "manifest".into(),
            reason: e.to_string(),
        })?;
        header.validate()?;
        Ok(header)
    }
}

fn blob_names(cam: &CameraSpec) -> (String, String, String) {
    let role = cam.role.as_str();
    (
        format!("depth_{role}.bin"),
        format!("emb_{role}.bin"),
        format!("attn_{role}.bin"),
    )
}

struct CameraBlobs<S> {
    spec: CameraSpec,
    depth: S,
    emb: S,
    attn: Option<S>,
}

fn write_f32s(w: &mut impl Write, values: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Appends frames to a trace directory. The manifest is written by
/// [`TraceWriter::finish`] once the frame count is known.
pub struct TraceWriter {
    dir: PathBuf,
    layout: StreamLayout,
    generator: Option<GeneratorMeta>,
    cameras: Vec<CameraBlobs<BufWriter<File>>>,
    robot: BufWriter<File>,
    frames: usize,
}

impl TraceWriter {
    pub fn create(dir: impl AsRef<Path>, layout: StreamLayout, generator: Option<GeneratorMeta>) -> Result<Self> {
        layout.validate()?;
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
        };
        let mut cameras = Vec::new();
        for spec in &layout.cameras {
            let (d, e, a) = blob_names(spec);
            cameras.push(CameraBlobs {
                spec: *spec,
                depth: open(&d)?,
                emb: open(&e)?,
                attn: if spec.attention { Some(open(&a)?) } else { None },
            });
        }
        let robot = open("robot.bin")?;
        Ok(Self {
            dir,
            layout,
            generator,
            cameras,
            robot,
            frames: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &FrameRecord) -> Result<()> {
        if frame.frame_index != self.frames as u64 {
            return Err(Error::Malformed {
                what: "trace frame".into(),
                reason: format!("expected frame index {}, got {}", self.frames, frame.frame_index),
            });
        }
        crate::types::validate_frame(frame, &self.layout)?;
        let dir = &self.dir;
        for blobs in &mut self.cameras {
            let cam = frame
                .camera(blobs.spec.role)
                .ok_or(Error::MissingCamera(blobs.spec.role))?;
            write_f32s(&mut blobs.depth, &cam.depth.data).map_err(|e| Error::io(dir, e))?;
            write_f32s(&mut blobs.emb, cam.embeddings.as_slice()).map_err(|e| Error::io(dir, e))?;
            if let Some(w) = blobs.attn.as_mut() {
                let att = cam.attention.as_ref().ok_or(Error::MissingAttention(cam.role))?;
                write_f32s(w, att).map_err(|e| Error::io(dir, e))?;
            }
        }
        write_f32s(&mut self.robot, &frame.robot.to_flat()).map_err(|e| Error::io(dir, e))?;
        self.frames += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<TraceHeader> {
        let dir = self.dir.clone();
        for blobs in &mut self.cameras {
            blobs.depth.flush().map_err(|e| Error::io(&dir, e))?;
            blobs.emb.flush().map_err(|e| Error::io(&dir, e))?;
            if let Some(w) = blobs.attn.as_mut() {
                w.flush().map_err(|e| Error::io(&dir, e))?;
            }
        }
        self.robot.flush().map_err(|e| Error::io(&dir, e))?;
        let header = TraceHeader::new(self.layout, self.frames, self.generator);
        let path = dir.join(MANIFEST);
        fs::write(&path, header.to_text()).map_err(|e| Error::io(path, e))?;
        Ok(header)
    }
}

/// Sequential frame reader over a trace directory.
pub struct TraceReader {
    dir: PathBuf,
    header: TraceHeader,
    cameras: Vec<CameraBlobs<BufReader<File>>>,
    robot: BufReader<File>,
    next: usize,
}

impl TraceReader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = dir.join(MANIFEST);
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let header = TraceHeader::parse(&text)?;

        let open = |name: &str, per_frame: usize| -> Result<BufReader<File>> {
            let path = dir.join(name);
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
            let expected = (per_frame * header.frame_count * 4) as u64;
            if len != expected {
                return Err(Error::Malformed {
                    what: name.to_string(),
                    reason: format!("expected {expected} bytes, found {len}"),
                });
            }
            Ok(BufReader::new(file))
        };
        let mut cameras = Vec::new();
        for spec in &header.cameras {
            let (d, e, a) = blob_names(spec);
            cameras.push(CameraBlobs {
                spec: *spec,
                depth: open(&d, spec.height * spec.width)?,
                emb: open(&e, spec.patches() * spec.dim)?,
                attn: if spec.attention {
                    Some(open(&a, spec.patches())?)
                } else {
                    None
                },
            });
        }
        let robot = open("robot.bin", RobotState::flat_len(header.chunk_len))?;
        Ok(Self {
            dir,
            header,
            cameras,
            robot,
            next: 0,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    fn read_f32s(dir: &Path, r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Malformed {
                what: "trace blob".into(),
                reason: "truncated".into(),
            },
            _ => Error::io(dir, e),
        })?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn next_frame(&mut self) -> Result<Option<FrameRecord>> {
        if self.next >= self.header.frame_count {
            return Ok(None);
        }
        let dir = &self.dir;
        let mut cameras = Vec::with_capacity(self.cameras.len());
        for blobs in &mut self.cameras {
            let s = blobs.spec;
            let depth = Self::read_f32s(dir, &mut blobs.depth, s.height * s.width)?;
            let emb = Self::read_f32s(dir, &mut blobs.emb, s.patches() * s.dim)?;
            let attention = match blobs.attn.as_mut() {
                Some(r) => Some(Self::read_f32s(dir, r, s.patches())?),
                None => None,
            };
            cameras.push(CameraFrame {
                role: s.role,
                grid: s.grid(),
                depth: DepthMap::new(s.height, s.width, depth)?,
                embeddings: Embeddings::new(s.patches(), s.dim, emb)?,
                attention,
            });
        }
        let flat = Self::read_f32s(dir, &mut self.robot, RobotState::flat_len(self.header.chunk_len))?;
        let robot = RobotState::from_flat(&flat, self.header.chunk_len)?;
        let frame = FrameRecord {
            frame_index: self.next as u64,
            cameras,
            robot,
        };
        self.next += 1;
        Ok(Some(frame))
    }
}

impl Iterator for TraceReader {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

/// A whole trace held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub frames: Vec<FrameRecord>,
}

impl Trace {
    pub fn layout(&self) -> StreamLayout {
        self.header.layout()
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let reader = TraceReader::open(dir)?;
        let header = reader.header().clone();
        let frames = reader.collect::<Result<Vec<_>>>()?;
        Ok(Self { header, frames })
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let mut w = TraceWriter::create(dir, self.layout(), self.header.generator.clone())?;
        for frame in &self.frames {
            w.write_frame(frame)?;
        }
        w.finish()?;
        Ok(())
    }
}
