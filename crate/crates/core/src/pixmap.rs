//! Grayscale images, disparity maps and their Netpbm encodings.
//!
//! PGM (`P2` ASCII and `P5` binary) is the interchange format for both input
//! views and disparity maps. Color PPM (`P3`/`P6`) inputs are accepted by
//! [`read_image`] and reduced to luminance on load.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit luminance image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::param(format!(
                "expected {} samples for a {width}x{height} image, got {}",
                width * height,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// A constant image.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.samples[y * self.width + x] = value;
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }
}

/// Per-pixel integer disparity labels. `None` marks an invalid (unknown or
/// occluded) pixel, which encodes as gray 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    labels: Vec<Option<u32>>,
    scale_factor: u32,
}

impl DisparityMap {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<Option<u32>>,
        scale_factor: u32,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::param(format!(
                "expected {} labels for a {width}x{height} map, got {}",
                width * height,
                labels.len()
            )));
        }
        if scale_factor == 0 {
            return Err(Error::param("disparity scale factor must be at least 1"));
        }
        Ok(Self {
            width,
            height,
            labels,
            scale_factor,
        })
    }

    /// A map with every label valid, scale factor 1.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        Self::new(width, height, labels.into_iter().map(Some).collect(), 1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> Option<u32> {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: Option<u32>) {
        self.labels[y * self.width + x] = label;
    }

    pub fn scale_factor(&self) -> u32 {
        self.scale_factor
    }

    pub fn with_scale_factor(mut self, scale_factor: u32) -> Result<Self> {
        if scale_factor == 0 {
            return Err(Error::param("disparity scale factor must be at least 1"));
        }
        self.scale_factor = scale_factor;
        Ok(self)
    }

    /// Gray encoding `label * scale_factor`, with invalid labels as 0.
    pub fn to_gray(&self) -> Result<GrayImage> {
        let scale = u64::from(self.scale_factor);
        let samples = self
            .labels
            .iter()
            .map(|label| match label {
                None => Ok(0u8),
                Some(d) => {
                    let value = u64::from(*d) * scale;
                    u8::try_from(value).map_err(|_| Error::ValueOverflow { value, max: 255 })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        GrayImage::new(self.width, self.height, samples)
    }

    /// Decodes a gray image as `round(gray / scale_factor)`. When
    /// `zero_is_invalid` is set, gray 0 decodes as an invalid label.
    pub fn from_gray(image: &GrayImage, scale_factor: u32, zero_is_invalid: bool) -> Result<Self> {
        if scale_factor == 0 {
            return Err(Error::param("disparity scale factor must be at least 1"));
        }
        let labels = image
            .samples()
            .iter()
            .map(|&g| {
                if g == 0 && zero_is_invalid {
                    None
                } else {
                    Some((u32::from(g) + scale_factor / 2) / scale_factor)
                }
            })
            .collect();
        Self::new(image.width(), image.height(), labels, scale_factor)
    }
}

/// Anything that can be written as an 8-bit PGM.
pub trait PgmEncode {
    fn to_pgm_image(&self) -> Result<GrayImage>;
}

impl PgmEncode for GrayImage {
    fn to_pgm_image(&self) -> Result<GrayImage> {
        Ok(self.clone())
    }
}

impl PgmEncode for DisparityMap {
    fn to_pgm_image(&self) -> Result<GrayImage> {
        self.to_gray()
    }
}

/// Luminance `round(0.299 R + 0.587 G + 0.114 B)` over equally sized planes.
pub fn to_grayscale(
    width: usize,
    height: usize,
    red: &[u8],
    green: &[u8],
    blue: &[u8],
) -> Result<GrayImage> {
    let n = width * height;
    for (name, plane) in [("red", red), ("green", green), ("blue", blue)] {
        if plane.len() != n {
            return Err(Error::param(format!(
                "{name} channel has {} samples, expected {n} for {width}x{height}",
                plane.len()
            )));
        }
    }
    let samples = red
        .iter()
        .zip(green)
        .zip(blue)
        .map(|((&r, &g), &b)| luminance(r, g, b))
        .collect();
    GrayImage::new(width, height, samples)
}

fn luminance(r: u8, g: u8, b: u8) -> u8 {
    // Fixed-point weights in thousandths; +500 rounds half up.
    let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((weighted + 500) / 1000).min(255) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Magic {
    P2,
    P3,
    P5,
    P6,
}

impl Magic {
    fn channels(self) -> usize {
        match self {
            Magic::P2 | Magic::P5 => 1,
            Magic::P3 | Magic::P6 => 3,
        }
    }

    fn is_binary(self) -> bool {
        matches!(self, Magic::P5 | Magic::P6)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn unsigned(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if start >= self.bytes.len() {
                Error::format(start, format!("unexpected end of file while reading {what}"))
            } else {
                Error::format(start, format!("expected a decimal number for {what}"))
            });
        }
        if let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_whitespace() && b != b'#' {
                return Err(Error::format(self.pos, format!("unexpected byte in {what}")));
            }
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, format!("{what} is out of range")))
    }
}

/// Decoded Netpbm raster before any color reduction.
struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    let magic = match bytes.get(..2) {
        Some(b"P2") => Magic::P2,
        Some(b"P3") => Magic::P3,
        Some(b"P5") => Magic::P5,
        Some(b"P6") => Magic::P6,
        _ => return Err(Error::format(0, "unsupported magic number")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.unsigned("width")? as usize;
    let height = cur.unsigned("height")? as usize;
    if width == 0 || height == 0 {
        return Err(Error::format(cur.pos, "image dimensions must be positive"));
    }
    cur.skip_whitespace_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.unsigned("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(
            maxval_at,
            format!("maxval {maxval} is not in 1..=255"),
        ));
    }
    let channels = magic.channels();
    let count = width * height * channels;

    let samples = if magic.is_binary() {
        // Exactly one whitespace byte separates the header from the raster,
        // except that a CRLF pair is accepted as a single separator.
        let sep = cur.pos;
        match bytes.get(sep) {
            Some(b) if b.is_ascii_whitespace() => {}
            _ => return Err(Error::format(sep, "missing whitespace after maxval")),
        }
        let mut start = sep + 1;
        if bytes[sep] == b'\r' && bytes.get(start) == Some(&b'\n') && bytes.len() - start > count
        {
            start += 1;
        }
        let available = bytes.len().saturating_sub(start);
        if available < count {
            return Err(Error::format(
                bytes.len(),
                format!("truncated pixel data: expected {count} bytes, found {available}"),
            ));
        }
        let raster = &bytes[start..start + count];
        if let Some(pos) = raster.iter().position(|&s| u32::from(s) > maxval) {
            return Err(Error::format(
                start + pos,
                format!("sample {} exceeds maxval {maxval}", raster[pos]),
            ));
        }
        raster.to_vec()
    } else {
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            cur.skip_whitespace_and_comments();
            if cur.pos >= bytes.len() {
                return Err(Error::format(
                    cur.pos,
                    format!("truncated pixel data: expected {count} samples, found {i}"),
                ));
            }
            let at = cur.pos;
            let v = cur.unsigned("sample")?;
            if v > maxval {
                return Err(Error::format(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            samples.push(v as u8);
        }
        samples
    };
    Ok(Raster {
        width,
        height,
        channels,
        samples,
    })
}

/// Decodes a PGM (`P2`/`P5`) byte buffer.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let raster = decode_raster(bytes)?;
    if raster.channels != 1 {
        return Err(Error::format(0, "expected a grayscale PGM (P2 or P5)"));
    }
    GrayImage::new(raster.width, raster.height, raster.samples)
}

/// Decodes PGM or PPM; color images are reduced with [`to_grayscale`].
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    let raster = decode_raster(bytes)?;
    if raster.channels == 1 {
        return GrayImage::new(raster.width, raster.height, raster.samples);
    }
    let n = raster.width * raster.height;
    let mut planes = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for px in raster.samples.chunks_exact(3) {
        for (plane, &v) in planes.iter_mut().zip(px) {
            plane.push(v);
        }
    }
    to_grayscale(raster.width, raster.height, &planes[0], &planes[1], &planes[2])
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&read_bytes(path.as_ref())?)
}

/// Reads a PGM or PPM file as a luminance image.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_image(&read_bytes(path.as_ref())?)
}

/// Reads a disparity PGM; see [`DisparityMap::from_gray`].
pub fn read_disparity(
    path: impl AsRef<Path>,
    scale_factor: u32,
    zero_is_invalid: bool,
) -> Result<DisparityMap> {
    DisparityMap::from_gray(&read_pgm(path)?, scale_factor, zero_is_invalid)
}

/// Encodes with maxval 255, as `P5` when `binary` is set and `P2` otherwise.
pub fn encode_pgm(image: &impl PgmEncode, binary: bool) -> Result<Vec<u8>> {
    let gray = image.to_pgm_image()?;
    let (w, h) = gray.dimensions();
    let magic = if binary { "P5" } else { "P2" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    if binary {
        out.extend_from_slice(gray.samples());
    } else {
        for row in gray.samples().chunks(w) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn write_pgm(image: &impl PgmEncode, path: impl AsRef<Path>, binary: bool) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(image, binary)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
