//! Image container, grayscale conversion, gradients, 3×3 convolution, and
//! binary PGM/PPM I/O.
//!
//! Pixel values are 8-bit; gradient magnitudes are normalized by `255·√2` so
//! they always fall in `[0, 1]`. All operations here are pure functions over
//! immutable inputs.

use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

/// Errors from constructing an [`Image`] with inconsistent fields.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    /// Images must be at least 3×3 so 3×3 kernels fit.
    #[error("image dimensions {width}x{height} are too small (minimum 3x3)")]
    TooSmall { width: usize, height: usize },
    #[error("unsupported channel count {channels} (must be 1 or 3)")]
    BadChannels { channels: usize },
    #[error("data length {actual} does not match width*height*channels = {expected}")]
    DataLength { expected: usize, actual: usize },
}

/// An 8-bit raster, 1 (grayscale) or 3 (RGB) channels, row-major and
/// channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    /// Builds an image, validating dimensions, channel count, and data length.
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width < 3 || height < 3 {
            return Err(ImageError::TooSmall { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::BadChannels { channels });
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A constant-valued image.
    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: u8,
    ) -> Result<Self, ImageError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Builds an image from a per-sample function `f(x, y, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Sample at `(x, y)` in channel `c`.
    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Mean over all samples, in `[0, 255]`.
    pub fn mean_intensity(&self) -> f64 {
        let sum: u64 = self.data.iter().map(|&v| v as u64).sum();
        sum as f64 / self.data.len() as f64
    }

    /// Extracts channel `c` as a single-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[c])
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// Per-pixel gradient magnitudes in `[0, 1]`, same dimensions as the source
/// image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GradientField {
    /// Builds a field from raw values, validating the `[0, 1]` range.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != width * height {
            return Err(FieldError::Length {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FieldError::OutOfRange { value: bad });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Errors from constructing a [`GradientField`] or [`RealField`].
#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("value length {actual} does not match width*height = {expected}")]
    Length { expected: usize, actual: usize },
    #[error("gradient magnitude {value} outside [0, 1]")]
    OutOfRange { value: f64 },
}

/// A real-valued raster, used for convolution inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != width * height {
            return Err(FieldError::Length {
                expected: width * height,
                actual: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// A single-channel image lifted to reals.
    pub fn from_image(img: &Image) -> RealField {
        assert_eq!(
            img.channels(),
            1,
            "RealField::from_image needs a single-channel image"
        );
        RealField {
            width: img.width,
            height: img.height,
            values: img.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Valid-region 3×3 convolution: the output is `(w−2)×(h−2)` and covers
    /// only interior pixels, so no border samples are fabricated.
    pub fn convolve3x3(&self, kernel: &[[f64; 3]; 3]) -> RealField {
        assert!(
            self.width >= 3 && self.height >= 3,
            "field too small for a 3x3 kernel"
        );
        let (w, h) = (self.width, self.height);
        let mut out = Vec::with_capacity((w - 2) * (h - 2));
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut acc = 0.0;
                for (dy, row) in kernel.iter().enumerate() {
                    let base = (y + dy - 1) * w + x - 1;
                    acc += row[0] * self.values[base]
                        + row[1] * self.values[base + 1]
                        + row[2] * self.values[base + 2];
                }
                out.push(acc);
            }
        }
        RealField {
            width: w - 2,
            height: h - 2,
            values: out,
        }
    }
}

/// ITU-R BT.601 luma conversion, rounding to the nearest integer. A
/// single-channel input is returned unchanged.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            y.round() as u8
        })
        .collect();
    Image {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Central-difference gradient magnitude, normalized to `[0, 1]`.
///
/// `gx(x,y) = (I(x+1,y) − I(x−1,y)) / 2` with replicated edge samples at the
/// borders (`gy` analogous), and the magnitude is `√(gx²+gy²) / (255·√2)`.
pub fn gradient_magnitude(img: &Image) -> GradientField {
    assert_eq!(
        img.channels(),
        1,
        "gradient_magnitude needs a single-channel image"
    );
    let (w, h) = (img.width, img.height);
    let norm_inv = 1.0 / (255.0 * std::f64::consts::SQRT_2);
    let mut values = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &img.data[y * w..y * w + w];
        let up = &img.data[y.saturating_sub(1) * w..y.saturating_sub(1) * w + w];
        let down = &img.data[(y + 1).min(h - 1) * w..(y + 1).min(h - 1) * w + w];
        let out = &mut values[y * w..y * w + w];
        // Interior columns need no clamping.
        for x in 1..w - 1 {
            let gx = (row[x + 1] as f64 - row[x - 1] as f64) * 0.5;
            let gy = (down[x] as f64 - up[x] as f64) * 0.5;
            out[x] = (gx * gx + gy * gy).sqrt() * norm_inv;
        }
        for x in [0, w - 1] {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            let gx = (row[xr] as f64 - row[xl] as f64) * 0.5;
            let gy = (down[x] as f64 - up[x] as f64) * 0.5;
            out[x] = (gx * gx + gy * gy).sqrt() * norm_inv;
        }
    }
    GradientField {
        width: w,
        height: h,
        values,
    }
}

/// Valid-region 3×3 convolution of a single-channel image.
pub fn convolve3x3(img: &Image, kernel: &[[f64; 3]; 3]) -> RealField {
    RealField::from_image(img).convolve3x3(kernel)
}

// ---------------------------------------------------------------------------
// Binary PGM (P5) / PPM (P6), maxval 255.
// ---------------------------------------------------------------------------

/// Errors from reading or writing PGM/PPM files.
#[derive(Debug, Error)]
pub enum PnmError {
    #[error("bad magic {found:?} (expected \"P5\" or \"P6\")")]
    Magic { found: String },
    #[error("invalid {field} field: {detail}")]
    Header { field: &'static str, detail: String },
    #[error("unsupported maxval {maxval} (only 255)")]
    UnsupportedMaxval { maxval: u64 },
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for PnmError {
    fn eq(&self, other: &Self) -> bool {
        // Io errors never compare equal; everything else by shape.
        match (self, other) {
            (Self::Magic { found: a }, Self::Magic { found: b }) => a == b,
            (Self::Header { field: a, .. }, Self::Header { field: b, .. }) => a == b,
            (Self::UnsupportedMaxval { maxval: a }, Self::UnsupportedMaxval { maxval: b }) => {
                a == b
            }
            (
                Self::Truncated {
                    expected: a,
                    actual: c,
                },
                Self::Truncated {
                    expected: b,
                    actual: d,
                },
            ) => a == b && c == d,
            (Self::Image(a), Self::Image(b)) => a == b,
            _ => false,
        }
    }
}

struct HeaderScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderScanner<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self, field: &'static str) -> Result<&'a str, PnmError> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::Header {
                field,
                detail: "missing".into(),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| PnmError::Header {
            field,
            detail: "not ASCII".into(),
        })
    }

    fn number(&mut self, field: &'static str) -> Result<u64, PnmError> {
        let tok = self.token(field)?;
        tok.parse::<u64>().map_err(|_| PnmError::Header {
            field,
            detail: format!("{tok:?} is not a number"),
        })
    }
}

/// Decodes a binary P5 (grayscale) or P6 (RGB) image with maxval 255.
/// `#` comments are tolerated anywhere in the header.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image, PnmError> {
    let mut scan = HeaderScanner::new(bytes);
    let magic = scan.token("magic")?;
    let channels = match magic {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(PnmError::Magic {
                found: other.into(),
            })
        }
    };
    let width = scan.number("width")? as usize;
    let height = scan.number("height")? as usize;
    let maxval = scan.number("maxval")?;
    if maxval != 255 {
        return Err(PnmError::UnsupportedMaxval { maxval });
    }
    // Exactly one whitespace byte separates the header from the payload.
    if scan.pos >= bytes.len() || !bytes[scan.pos].is_ascii_whitespace() {
        return Err(PnmError::Header {
            field: "maxval",
            detail: "no separator after maxval".into(),
        });
    }
    let payload = &bytes[scan.pos + 1..];
    let expected = width * height * channels;
    if payload.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    Ok(Image::new(
        width,
        height,
        channels,
        payload[..expected].to_vec(),
    )?)
}

/// Encodes as binary P5/P6 with maxval 255.
pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image, PnmError> {
    decode_pnm(&std::fs::read(path)?)
}

pub fn write_pnm(img: &Image, path: impl AsRef<Path>) -> Result<(), PnmError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&encode_pnm(img))?;
    w.flush()?;
    Ok(())
}
