//! File formats.
//!
//! * `KBOF` offset fields: `"KBOF"`, `u32` version = 1, `u32` H, W, kh, kw, then
//!   `H·W·kh·kw·2` little-endian `f32` in `[v][u][i][j][(du, dv)]` order, then
//!   `H·W` validity bytes (1 = valid).
//! * `KBTN` tensors: `"KBTN"`, `u32` version = 1, `u32` rank, `u32` dims, then
//!   little-endian `f32` data in row-major order.
//! * Binary PNM: `P6` color and `P5` gray, 8-bit or 16-bit big-endian samples.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::conv::{ConvError, ConvWeights};
use crate::grid::Grid;
use crate::kernel::OffsetField;

pub const KBOF_MAGIC: &[u8; 4] = b"KBOF";
pub const KBTN_MAGIC: &[u8; 4] = b"KBTN";
pub const FORMAT_VERSION: u32 = 1;

/// Metres per unit of a 16-bit depth PGM.
pub const DEPTH_SCALE: f64 = 1.0 / 512.0;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file is truncated or has trailing bytes")]
    Length,
    #[error("malformed content: {0}")]
    Malformed(String),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Length)?;
        let s = self.buf.get(self.pos..end).ok_or(FormatError::Length)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &'static [u8; 4]) -> Result<(), FormatError> {
        if self.take(4)? != magic {
            return Err(FormatError::BadMagic {
                expected: std::str::from_utf8(magic).unwrap(),
            });
        }
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(FormatError::UnsupportedVersion(v)),
        }
    }

    fn finish(self) -> Result<(), FormatError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(FormatError::Length)
        }
    }
}

fn to_u32(n: usize) -> Result<u32, FormatError> {
    u32::try_from(n).map_err(|_| FormatError::Malformed(format!("dimension {n} exceeds u32")))
}

pub fn encode_offsets(field: &OffsetField) -> Result<Vec<u8>, FormatError> {
    let n = field.data().len();
    let mut out = Vec::with_capacity(24 + n * 8 + field.validity().len());
    out.extend_from_slice(KBOF_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in [field.height(), field.width(), field.kh(), field.kw()] {
        out.extend_from_slice(&to_u32(d)?.to_le_bytes());
    }
    for [du, dv] in field.data() {
        out.extend_from_slice(&(*du as f32).to_le_bytes());
        out.extend_from_slice(&(*dv as f32).to_le_bytes());
    }
    out.extend(field.validity().iter().map(|&v| v as u8));
    Ok(out)
}

pub fn decode_offsets(bytes: &[u8]) -> Result<OffsetField, FormatError> {
    let mut r = Reader::new(bytes);
    r.header(KBOF_MAGIC)?;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let kh = r.u32()? as usize;
    let kw = r.u32()? as usize;
    let n = h
        .checked_mul(w)
        .and_then(|a| a.checked_mul(kh))
        .and_then(|a| a.checked_mul(kw))
        .ok_or(FormatError::Length)?;
    if n.checked_mul(8).is_none_or(|b| b > bytes.len()) {
        return Err(FormatError::Length);
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push([r.f32()? as f64, r.f32()? as f64]);
    }
    let valid = r
        .take(h * w)?
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(FormatError::Malformed(format!("validity flag {other}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    OffsetField::from_parts(h, w, kh, kw, data, valid).map_err(|e| FormatError::Malformed(e.to_string()))
}

pub fn write_offsets(path: impl AsRef<Path>, field: &OffsetField) -> Result<(), FormatError> {
    fs::write(path, encode_offsets(field)?)?;
    Ok(())
}

pub fn read_offsets(path: impl AsRef<Path>) -> Result<OffsetField, FormatError> {
    decode_offsets(&fs::read(path)?)
}

/// An n-dimensional array as stored in a `KBTN` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, FormatError> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(FormatError::Malformed(format!(
                "{} values for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_grid(grid: &Grid) -> Self {
        let (c, h, w) = grid.dims();
        Self {
            dims: vec![c, h, w],
            data: grid.data().iter().map(|&v| v as f32).collect(),
        }
    }

    /// Rank 2 reads as a single channel; rank 4 needs a leading batch of 1.
    pub fn to_grid(&self) -> Result<Grid, FormatError> {
        let (c, h, w) = match self.dims.as_slice() {
            [h, w] => (1, *h, *w),
            [c, h, w] => (*c, *h, *w),
            [1, c, h, w] => (*c, *h, *w),
            d => return Err(FormatError::Malformed(format!("cannot read dims {d:?} as an image"))),
        };
        Grid::new(c, h, w, self.data.iter().map(|&v| v as f64).collect())
            .map_err(|e| FormatError::Malformed(e.to_string()))
    }

    pub fn to_weights(&self) -> Result<ConvWeights, FormatError> {
        let [o, c, kh, kw] = self.dims.as_slice() else {
            return Err(FormatError::Malformed(format!(
                "weights must have rank 4, got dims {:?}",
                self.dims
            )));
        };
        ConvWeights::new(*o, *c, *kh, *kw, self.data.iter().map(|&v| v as f64).collect())
            .map_err(|e: ConvError| FormatError::Malformed(e.to_string()))
    }

    pub fn from_weights(w: &ConvWeights) -> Self {
        let (o, c, kh, kw) = w.dims();
        Self {
            dims: vec![o, c, kh, kw],
            data: w.data().iter().map(|&v| v as f32).collect(),
        }
    }
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(12 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(KBTN_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(t.dims.len())?.to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&to_u32(d)?.to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let mut r = Reader::new(bytes);
    r.header(KBTN_MAGIC)?;
    let rank = r.u32()? as usize;
    if rank.checked_mul(4).is_none_or(|b| b > bytes.len()) {
        return Err(FormatError::Length);
    }
    let dims = (0..rank)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or(FormatError::Length)?;
    if n.checked_mul(4).is_none_or(|b| b > bytes.len()) {
        return Err(FormatError::Length);
    }
    let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Tensor::new(dims, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<(), FormatError> {
    fs::write(path, encode_tensor(t)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, FormatError> {
    decode_tensor(&fs::read(path)?)
}

/// Decoded PNM raster: sample values as stored, before any scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pnm {
    pub fn to_grid(&self) -> Grid {
        let plane = self.width * self.height;
        let mut data = vec![0.0; self.samples.len()];
        for (n, &s) in self.samples.iter().enumerate() {
            let (pix, c) = (n / self.channels, n % self.channels);
            data[c * plane + pix] = s as f64;
        }
        Grid::new(self.channels, self.height, self.width, data).expect("pnm samples are finite")
    }

    /// Rounds and clamps each value into `[0, maxval]`.
    pub fn from_grid(grid: &Grid, maxval: u16) -> Result<Self, FormatError> {
        let (c, h, w) = grid.dims();
        if c != 1 && c != 3 {
            return Err(FormatError::Malformed(format!("PNM needs 1 or 3 channels, got {c}")));
        }
        let mut samples = Vec::with_capacity(c * h * w);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    samples.push(grid.get(ch, y, x).round().clamp(0.0, maxval as f64) as u16);
                }
            }
        }
        Ok(Self {
            width: w,
            height: h,
            channels: c,
            maxval,
            samples,
        })
    }
}

fn pnm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, FormatError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(FormatError::Malformed("truncated PNM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| FormatError::Malformed("non-ascii PNM header".into()))
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Pnm, FormatError> {
    let mut pos = 0;
    let channels = match pnm_token(bytes, &mut pos)? {
        "P5" => 1,
        "P6" => 3,
        other => return Err(FormatError::Malformed(format!("unsupported PNM type {other}"))),
    };
    let mut num = |name: &str| -> Result<usize, FormatError> {
        pnm_token(bytes, &mut pos)?
            .parse()
            .map_err(|_| FormatError::Malformed(format!("bad PNM {name}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(FormatError::Malformed(format!("PNM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height * channels;
    let wide = maxval > 255;
    let raster = bytes.get(pos..).ok_or(FormatError::Length)?;
    if raster.len() != n * if wide { 2 } else { 1 } {
        return Err(FormatError::Length);
    }
    let samples = if wide {
        raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    Ok(Pnm {
        width,
        height,
        channels,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode_pnm(img: &Pnm) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(img.samples.iter().map(|&s| s as u8));
    }
    out
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Pnm, FormatError> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_pnm(path: impl AsRef<Path>, img: &Pnm) -> Result<(), FormatError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pnm(img))?;
    Ok(())
}

/// Reads a 16-bit depth PGM into metres.
pub fn read_depth(path: impl AsRef<Path>) -> Result<Grid, FormatError> {
    let pnm = read_pnm(path)?;
    if pnm.channels != 1 {
        return Err(FormatError::Malformed("depth maps must be single-channel PGM".into()));
    }
    Ok(pnm.to_grid().map(|v| v * DEPTH_SCALE))
}

/// Writes depth in metres as a 16-bit PGM at [`DEPTH_SCALE`].
pub fn write_depth(path: impl AsRef<Path>, depth: &Grid) -> Result<(), FormatError> {
    let units = depth.map(|m| m / DEPTH_SCALE);
    write_pnm(path, &Pnm::from_grid(&units, u16::MAX)?)
}
