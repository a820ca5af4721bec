//! Raster types, binary PPM/PGM I/O and the preprocessing used by the
//! learned vision path.
//!
//! PPM files are binary `P6` with maxval 255. Depth maps are binary `P5`
//! with maxval 65535 and big-endian 16-bit samples, in millimeters.

use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic number: expected {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {found} (expected {expected})")]
    UnsupportedMaxval { expected: u32, found: u32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("image {width}x{height} too small for {op}")]
    TooSmall {
        width: usize,
        height: usize,
        op: &'static str,
    },
}

/// Row-major raster of pixels of type `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

pub type RgbImage = Raster<[u8; 3]>;
/// Depth in millimeters.
pub type DepthImage = Raster<u16>;
/// Intensities in [0, 1].
pub type GrayImage = Raster<f64>;

impl<P: Copy> Raster<P> {
    pub fn new(width: usize, height: usize, fill: P) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<P>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[P] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> P {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, p: P) {
        self.data[y * self.width + x] = p;
    }

    /// Clamp-to-border access with signed coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> P {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc)
    }

    pub fn map<Q: Copy>(&self, f: impl Fn(P) -> Q) -> Raster<Q> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        Self::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }
}

/// Offset and size of the central crop covering half of each dimension.
pub fn center_quarter_rect(width: usize, height: usize) -> (usize, usize, usize, usize) {
    let (w, h) = (width / 2, height / 2);
    ((width - w) / 2, (height - h) / 2, w, h)
}

/// Central region of half the width and half the height.
pub fn crop_center_quarter<P: Copy>(image: &Raster<P>) -> Result<Raster<P>, ImageError> {
    if image.width < 4 || image.height < 4 {
        return Err(ImageError::TooSmall {
            width: image.width,
            height: image.height,
            op: "center crop",
        });
    }
    let (x0, y0, w, h) = center_quarter_rect(image.width, image.height);
    Ok(image.crop(x0, y0, w, h))
}

/// Pixel types that can be resampled channel-wise.
pub trait Resample: Copy {
    const CHANNELS: usize;
    fn channel(&self, c: usize) -> f64;
    fn from_channels(values: &[f64]) -> Self;
}

impl Resample for [u8; 3] {
    const CHANNELS: usize = 3;

    fn channel(&self, c: usize) -> f64 {
        self[c] as f64
    }

    fn from_channels(values: &[f64]) -> Self {
        let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        [q(values[0]), q(values[1]), q(values[2])]
    }
}

impl Resample for u16 {
    const CHANNELS: usize = 1;

    fn channel(&self, _: usize) -> f64 {
        *self as f64
    }

    fn from_channels(values: &[f64]) -> Self {
        values[0].round().clamp(0.0, 65535.0) as u16
    }
}

impl Resample for f64 {
    const CHANNELS: usize = 1;

    fn channel(&self, _: usize) -> f64 {
        *self
    }

    fn from_channels(values: &[f64]) -> Self {
        values[0]
    }
}

/// Bilinear resize with pixel-center alignment: output pixel `x` samples
/// source coordinate `(x + 0.5) * in_w / out_w - 0.5`, clamped to the image.
pub fn resize_bilinear<P: Resample>(image: &Raster<P>, out_w: usize, out_h: usize) -> Raster<P> {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    let sx = image.width as f64 / out_w as f64;
    let sy = image.height as f64 / out_h as f64;
    let axis = |i: usize, scale: f64, len: usize| {
        let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| axis(x, sx, image.width)).collect();
    let mut buf = vec![0.0; P::CHANNELS];
    Raster::from_fn(out_w, out_h, |x, y| {
        let (y0, y1, fy) = axis(y, sy, image.height);
        let (x0, x1, fx) = cols[x];
        let (p00, p10) = (image.get(x0, y0), image.get(x1, y0));
        let (p01, p11) = (image.get(x0, y1), image.get(x1, y1));
        for (c, v) in buf.iter_mut().enumerate() {
            let top = p00.channel(c) * (1.0 - fx) + p10.channel(c) * fx;
            let bottom = p01.channel(c) * (1.0 - fx) + p11.channel(c) * fx;
            *v = top * (1.0 - fy) + bottom * fy;
        }
        P::from_channels(&buf)
    })
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`, scaled to [0, 1].
pub fn to_gray(image: &RgbImage) -> GrayImage {
    image.map(|[r, g, b]| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0)
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    payload_start: usize,
}

fn parse_header(bytes: &[u8], magic: &'static str) -> Result<Header, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(ImageError::BadMagic {
            expected: magic,
            found,
        });
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments before each token
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(pos), Some(b'\n') | Some(b'\r') | None) {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(ImageError::BadHeader("unexpected end of header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::BadHeader(format!(
                "expected a decimal number at byte {start}"
            )));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| ImageError::BadHeader(format!("number out of range: {text}")))?;
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::BadHeader("missing separator after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidDimensions {
            width: width as usize,
            height: height as usize,
        });
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval,
        payload_start: pos,
    })
}

fn payload<'a>(bytes: &'a [u8], header: &Header, expected: usize) -> Result<&'a [u8], ImageError> {
    let found = bytes.len() - header.payload_start;
    if found < expected {
        return Err(ImageError::Truncated { expected, found });
    }
    Ok(&bytes[header.payload_start..header.payload_start + expected])
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let header = parse_header(bytes, "P6")?;
    if header.maxval != 255 {
        return Err(ImageError::UnsupportedMaxval {
            expected: 255,
            found: header.maxval,
        });
    }
    let n = header.width * header.height;
    let data = payload(bytes, &header, 3 * n)?
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Raster::from_vec(header.width, header.height, data)
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.reserve(3 * image.data.len());
    for p in &image.data {
        out.extend_from_slice(p);
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<DepthImage, ImageError> {
    let header = parse_header(bytes, "P5")?;
    if header.maxval != 65535 {
        return Err(ImageError::UnsupportedMaxval {
            expected: 65535,
            found: header.maxval,
        });
    }
    let n = header.width * header.height;
    let data = payload(bytes, &header, 2 * n)?
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Raster::from_vec(header.width, header.height, data)
}

pub fn encode_pgm(image: &DepthImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width, image.height).into_bytes();
    out.reserve(2 * image.data.len());
    for v in &image.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<RgbImage, ImageError> {
    decode_ppm(&fs::read(path)?)
}

pub fn save_ppm(image: &RgbImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_ppm(image))?;
    Ok(())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<DepthImage, ImageError> {
    decode_pgm(&fs::read(path)?)
}

pub fn save_pgm(image: &DepthImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_pgm(image))?;
    Ok(())
}
