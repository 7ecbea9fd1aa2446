//! Raw tensor files and binary netpbm images.
//!
//! Raw layout: `b"RFT1"`, little-endian `u32` rank, `u32` dims, then the
//! little-endian `f32` payload. Images are always written with rank 3
//! (`channels, height, width`); ranks 1 and 2 are read with leading unit
//! dimensions.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

pub const RAW_MAGIC: &[u8; 4] = b"RFT1";

pub fn encode_raw(t: &ImageTensor) -> Vec<u8> {
    let shape = t.shape();
    let mut out = Vec::with_capacity(4 + 4 * 4 + 4 * t.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&3u32.to_le_bytes());
    for d in [shape.channels, shape.height, shape.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated {
            expected: usize::MAX,
            found: self.bytes.len(),
        })?;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::Decode("payload size overflows".into()))?;
        let b = self.take(bytes)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode_raw(bytes: &[u8]) -> Result<ImageTensor> {
    let mut r = ByteReader::new(bytes);
    if r.take(4).map_err(|_| Error::Decode("missing magic".into()))? != RAW_MAGIC {
        return Err(Error::Decode("bad magic, expected RFT1".into()));
    }
    let rank = r.u32()? as usize;
    if !(1..=3).contains(&rank) {
        return Err(Error::Decode(format!("unsupported rank {rank}")));
    }
    let mut dims = [1usize; 3];
    for slot in dims[3 - rank..].iter_mut() {
        *slot = r.u32()? as usize;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2])
        .map_err(|e| Error::Decode(format!("bad dimensions: {e}")))?;
    let data = r.f32s(shape.len())?;
    r.finish()?;
    ImageTensor::new(shape, data)
}

pub fn save_raw(t: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_raw(t))?;
    Ok(())
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<ImageTensor> {
    decode_raw(&fs::read(path)?)
}

/// Pixel byte to model space: `2u/255 - 1`.
pub fn byte_to_model(u: u8) -> f32 {
    (2.0 * u as f64 / 255.0 - 1.0) as f32
}

/// Model space to pixel byte, clamping to `[-1, 1]` and rounding half up.
pub fn model_to_byte(v: f32) -> u8 {
    let v = (v as f64).clamp(-1.0, 1.0);
    ((v + 1.0) * 255.0 / 2.0 + 0.5).floor() as u8
}

/// Encodes a 1-channel tensor as P5 or a 3-channel tensor as P6.
pub fn encode_pnm(t: &ImageTensor) -> Result<Vec<u8>> {
    let shape = t.shape();
    let magic = match shape.channels {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::InvalidShape(format!(
                "netpbm needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    let plane = shape.plane();
    // channel-first in memory, interleaved on disk
    for i in 0..plane {
        for c in 0..shape.channels {
            out.push(model_to_byte(t.data()[c * plane + i]));
        }
    }
    Ok(out)
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageTensor> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        "P2" | "P3" => return Err(Error::Decode(format!("ASCII netpbm {magic} is not supported"))),
        other => return Err(Error::Decode(format!("not a binary netpbm file: {other:?}"))),
    };
    let width = header_number(bytes, &mut pos)?;
    let height = header_number(bytes, &mut pos)?;
    let maxval = header_number(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::Decode(format!("maxval {maxval} is not supported")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Decode("malformed header".into())),
    }
    let shape = Shape::new(channels, height, width)
        .map_err(|e| Error::Decode(format!("bad dimensions: {e}")))?;
    let raster = &bytes[pos..];
    if raster.len() < shape.len() {
        return Err(Error::Truncated {
            expected: shape.len(),
            found: raster.len(),
        });
    }
    let plane = shape.plane();
    let mut data = vec![0f32; shape.len()];
    for i in 0..plane {
        for c in 0..channels {
            data[c * plane + i] = byte_to_model(raster[i * channels + c]);
        }
    }
    ImageTensor::new(shape, data)
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Decode("malformed header".into())),
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_whitespace() || *b == b'#' {
            break;
        }
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::Decode(format!("malformed header field {tok:?}")))
}

pub fn save_pnm(t: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pnm(t)?)?;
    Ok(())
}

pub fn load_pnm(path: impl AsRef<Path>) -> Result<ImageTensor> {
    decode_pnm(&fs::read(path)?)
}
