//! File formats: binary codebooks and code maps, correspondence CSV and
//! pose JSON.
//!
//! Binary integers and floats are little-endian. Codes are stored
//! big-endian in `ceil(d * ceil(log2 r) / 8)` bytes, so digit 1 comes
//! first. The radix byte stores 256 as 0.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, PoseSE3};
use crate::encoder::{Code, CodeLayout, Codebook, EncodeError, EncodingParams};
use crate::matcher::Correspondence;
use crate::render::CodeMap;

pub const CODEBOOK_MAGIC: &[u8; 4] = b"ZBCB";
pub const CODEMAP_MAGIC: &[u8; 4] = b"ZBCM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("file ends early")]
    Truncated,
    #[error("{0} unexpected bytes after the last record")]
    TrailingBytes(usize),
    #[error("invalid content: {0}")]
    Invalid(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn radix_byte(r: u32) -> u8 {
    (r % 256) as u8
}

fn radix_from_byte(b: u8) -> u32 {
    if b == 0 {
        256
    } else {
        b as u32
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(FormatError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.array::<4>()?;
        if &found != expected {
            return Err(FormatError::BadMagic {
                expected: *expected,
                found,
            });
        }
        let v = self.u16()?;
        if v != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(v));
        }
        Ok(())
    }

    fn code(&mut self, layout: &CodeLayout) -> Result<Code, FormatError> {
        let c = layout.unpack(self.take(layout.packed_len())?);
        if !layout.is_valid(c) {
            return Err(FormatError::Invalid(format!("code {c:#x} out of range")));
        }
        Ok(c)
    }

    fn finish(self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

/// Serializes a codebook. The clustering seed is not stored.
pub fn codebook_to_bytes(cb: &Codebook) -> Vec<u8> {
    let layout = cb.layout();
    let p = layout.packed_len();
    let mut out = Vec::with_capacity(48 + p * cb.vertex_codes().len() + (p + 24) * cb.table().len());
    out.extend_from_slice(CODEBOOK_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(radix_byte(layout.radix()));
    out.push(layout.digits() as u8);
    out.extend_from_slice(&(cb.vertex_codes().len() as u64).to_le_bytes());
    out.extend_from_slice(cb.fingerprint());
    for &c in cb.vertex_codes() {
        layout.pack(c, &mut out);
    }
    out.extend_from_slice(&(cb.table().len() as u64).to_le_bytes());
    for (&c, centroid) in cb.table() {
        layout.pack(c, &mut out);
        for k in 0..3 {
            out.extend_from_slice(&centroid[k].to_le_bytes());
        }
    }
    out
}

/// Parses a codebook; the returned params carry seed 0.
pub fn codebook_from_bytes(bytes: &[u8]) -> Result<Codebook, FormatError> {
    let mut r = Cursor::new(bytes);
    r.magic(CODEBOOK_MAGIC)?;
    let radix = radix_from_byte(r.u8()?);
    let digits = r.u8()? as u32;
    let params = EncodingParams::new(radix, digits, 0);
    let layout = params.layout()?;
    let n = r.u64()? as usize;
    let fingerprint = r.array::<32>()?;
    if n.saturating_mul(layout.packed_len()) > bytes.len() {
        return Err(FormatError::Truncated);
    }
    let vertex_codes = (0..n).map(|_| r.code(&layout)).collect::<Result<Vec<_>, _>>()?;
    let entries = r.u64()? as usize;
    if entries.saturating_mul(layout.packed_len() + 24) > bytes.len() {
        return Err(FormatError::Truncated);
    }
    let mut table = BTreeMap::new();
    let mut last: Option<Code> = None;
    for _ in 0..entries {
        let c = r.code(&layout)?;
        if last.is_some_and(|l| l >= c) {
            return Err(FormatError::Invalid("table codes must be strictly increasing".into()));
        }
        last = Some(c);
        table.insert(c, Point3::new(r.f64()?, r.f64()?, r.f64()?));
    }
    r.finish()?;
    Ok(Codebook::from_parts(params, fingerprint, vertex_codes, table)?)
}

/// Serializes a code map. A map without depth is written with NaN depth.
pub fn codemap_to_bytes(map: &CodeMap) -> Vec<u8> {
    let layout = map.layout();
    let p = layout.packed_len();
    let mut out = Vec::with_capacity(20 + map.pixel_count() * (p + 5));
    out.extend_from_slice(CODEMAP_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&map.width().to_le_bytes());
    out.extend_from_slice(&map.height().to_le_bytes());
    out.push(layout.digits() as u8);
    out.push(radix_byte(layout.radix()));
    for (i, c) in map.codes().iter().enumerate() {
        out.push(u8::from(c.is_some()));
        layout.pack(c.unwrap_or(0), &mut out);
        let d = map.depth().map_or(f32::NAN, |d| d[i]);
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

/// Parses a code map. Unmasked pixels must store a zero code; a map whose
/// depth is NaN everywhere is read back without depth.
pub fn codemap_from_bytes(bytes: &[u8]) -> Result<CodeMap, FormatError> {
    let mut r = Cursor::new(bytes);
    r.magic(CODEMAP_MAGIC)?;
    let width = r.u32()?;
    let height = r.u32()?;
    let digits = r.u8()? as u32;
    let layout = CodeLayout::new(radix_from_byte(r.u8()?), digits)?;
    let n = width as usize * height as usize;
    if n.saturating_mul(layout.packed_len() + 5) > bytes.len() {
        return Err(FormatError::Truncated);
    }
    let mut codes = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    for i in 0..n {
        let mask = r.u8()?;
        let code = r.code(&layout)?;
        codes.push(match mask {
            1 => Some(code),
            0 if code == 0 => None,
            0 => {
                return Err(FormatError::Invalid(format!(
                    "pixel {i} is unmasked but stores code {code:#x}"
                )))
            }
            m => return Err(FormatError::Invalid(format!("pixel {i} has mask byte {m}"))),
        });
        depth.push(r.f32()?);
    }
    r.finish()?;
    let all_nan = depth.iter().all(|d| d.is_nan());
    Ok(CodeMap::from_parts(
        width,
        height,
        layout,
        codes,
        (!all_nan).then_some(depth),
    ))
}

pub fn save_codebook(path: impl AsRef<Path>, cb: &Codebook) -> Result<(), FormatError> {
    Ok(fs::write(path, codebook_to_bytes(cb))?)
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook, FormatError> {
    codebook_from_bytes(&fs::read(path)?)
}

pub fn save_codemap(path: impl AsRef<Path>, map: &CodeMap) -> Result<(), FormatError> {
    Ok(fs::write(path, codemap_to_bytes(map))?)
}

pub fn load_codemap(path: impl AsRef<Path>) -> Result<CodeMap, FormatError> {
    codemap_from_bytes(&fs::read(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrRow {
    u: f64,
    v: f64,
    x: f64,
    y: f64,
    z: f64,
    code_hex: String,
}

/// CSV with header `u,v,x,y,z,code_hex`. Floats use the shortest exact
/// representation, so reading back is lossless.
pub fn write_correspondences<W: Write>(
    out: W,
    corrs: &[Correspondence],
    layout: &CodeLayout,
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    for c in corrs {
        w.serialize(CorrRow {
            u: c.pixel.x,
            v: c.pixel.y,
            x: c.point.x,
            y: c.point.y,
            z: c.point.z,
            code_hex: layout.to_hex(c.code),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_correspondences<R: Read>(input: R) -> Result<Vec<Correspondence>, FormatError> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize::<CorrRow>()
        .map(|row| {
            let row = row?;
            let code = Code::from_str_radix(&row.code_hex, 16)
                .map_err(|e| FormatError::Invalid(format!("code {:?}: {e}", row.code_hex)))?;
            Ok(Correspondence {
                pixel: Point2::new(row.u, row.v),
                point: Point3::new(row.x, row.y, row.z),
                code,
            })
        })
        .collect()
}

/// Pose as written by the solver: row-major rotation, translation in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    #[serde(default)]
    pub inlier_count: usize,
    #[serde(default)]
    pub iterations_used: usize,
}

impl PoseRecord {
    pub fn new(pose: &PoseSE3, inlier_count: usize, iterations_used: usize) -> Self {
        Self {
            r: pose.rotation_row_major(),
            t: pose.translation.into(),
            inlier_count,
            iterations_used,
        }
    }

    /// Validates the rotation (orthonormal within 1e-9, det +1).
    pub fn pose(&self) -> Result<PoseSE3, FormatError> {
        Ok(PoseSE3::from_row_major(&self.r, self.t)?)
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), FormatError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(fs::write(path, s)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T, FormatError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
