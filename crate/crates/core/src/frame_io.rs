//! Frame ingestion and map output.
//!
//! Frames are 8-bit single-channel PGM files (binary `P5` or ASCII `P2`).
//! Scan-line annotations live next to each frame as `<frame>.labels`: one
//! `0`/`1` character per image column, `1` marking an acoustic-shadow column.
//! Real-valued maps are written either as an 8-bit PGM scaled to the map
//! maximum or as a CSV of full-precision floats with a `# max=` header line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::classify::ScanlineLabels;
use crate::error::{Error, Result};

/// Grayscale frame, row-major. Row index is depth (u), column index is the scan line (v).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=255.0).contains(*p)) {
            return Err(Error::InvalidImage(format!(
                "intensity {bad} outside [0, 255]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f64).collect())
    }

    /// Builds an image from a 2D field without range checks; used for filter
    /// outputs, which stay inside the input range by construction.
    pub(crate) fn from_field_unchecked(field: Field) -> Self {
        Self {
            width: field.width,
            height: field.height,
            pixels: field.data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    /// Quantizes to 8 bits (round half away from zero, clamped).
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| p.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Drops the top `rows` rows (ultrasound gel artefact band).
    pub fn crop_top(&self, rows: usize) -> Result<GrayImage> {
        if rows >= self.height {
            return Err(Error::InvalidParam(format!(
                "cannot crop {rows} rows from an image of height {}",
                self.height
            )));
        }
        Ok(GrayImage {
            width: self.width,
            height: self.height - rows,
            pixels: self.pixels[rows * self.width..].to_vec(),
        })
    }

    pub fn as_field(&self) -> Field {
        Field {
            width: self.width,
            height: self.height,
            data: self.pixels.clone(),
        }
    }
}

/// Real-valued 2D map (saliency, density, confidence), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch(data.len(), width * height));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    /// 8-bit PGM, value `v` written as `round(255 * v / max)`.
    Linear8,
    /// Row-major CSV at full precision, preceded by `# max=<value>`.
    CsvFloat,
}

fn is_pnm_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c')
}

/// Minimal tokenizer over the PNM header, honoring `#` comments.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if is_pnm_space(b) {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !is_pnm_space(self.bytes[self.pos])
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "{what} is not a number: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

/// Decodes an 8-bit P5 or P2 graymap.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut hdr = HeaderReader { bytes, pos: 0 };
    let magic = hdr
        .token()
        .ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported magic {:?} (expected P5 or P2)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = hdr.number("width")? as usize;
    let height = hdr.number("height")? as usize;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedBitDepth(maxval));
    }
    let expected = width * height;

    if binary {
        // exactly one whitespace byte separates the header from the raster
        if hdr.pos >= bytes.len() || !is_pnm_space(bytes[hdr.pos]) {
            return Err(Error::TruncatedPayload { expected, found: 0 });
        }
        let payload = &bytes[hdr.pos + 1..];
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        GrayImage::from_u8(width, height, &payload[..expected])
    } else {
        let mut pixels = Vec::with_capacity(expected);
        while pixels.len() < expected {
            let Some(tok) = hdr.token() else {
                return Err(Error::TruncatedPayload {
                    expected,
                    found: pixels.len(),
                });
            };
            let v = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse::<u32>().ok())
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "bad ASCII sample {:?}",
                        String::from_utf8_lossy(tok)
                    ))
                })?;
            if v > 255 {
                return Err(Error::Parse(format!("sample {v} exceeds maxval 255")));
            }
            pixels.push(v as f64);
        }
        GrayImage::new(width, height, pixels)
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn encode_pgm(width: usize, height: usize, bytes: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    out
}

pub fn write_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img.width, img.height, &img.to_u8()))
        .map_err(|e| Error::io(path, e))
}

/// Writes an RGB raster as binary PPM (P6).
pub fn write_ppm(width: usize, height: usize, rgb: &[[u8; 3]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(rgb.iter().flatten());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// 8-bit rendering of a field, linearly scaled so that its maximum maps to 255.
pub fn field_to_u8(field: &Field) -> Vec<u8> {
    let max = field.max();
    if !(max > 0.0) {
        return vec![0; field.data.len()];
    }
    field
        .data
        .iter()
        .map(|v| (255.0 * v / max).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn field_to_csv(field: &Field) -> String {
    let max = if field.data.is_empty() { 0.0 } else { field.max() };
    let mut out = String::with_capacity(field.data.len() * 8);
    writeln!(out, "# max={max}").unwrap();
    for row in field.data.chunks(field.width.max(1)) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_map(field: &Field, path: impl AsRef<Path>, mode: MapMode) -> Result<()> {
    let path = path.as_ref();
    if let Some(bad) = field.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParam(format!("map value {bad} is not finite")));
    }
    let bytes = match mode {
        MapMode::Linear8 => encode_pgm(field.width, field.height, &field_to_u8(field)),
        MapMode::CsvFloat => field_to_csv(field).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses a label sidecar: exactly `width` characters from `{0,1}`, optional trailing newline.
pub fn parse_labels(text: &str, width: usize) -> Result<ScanlineLabels> {
    let body = text
        .strip_suffix("\r\n")
        .or_else(|| text.strip_suffix('\n'))
        .unwrap_or(text);
    let mut labels = Vec::with_capacity(body.len());
    for c in body.chars() {
        match c {
            '0' => labels.push(false),
            '1' => labels.push(true),
            other => return Err(Error::InvalidLabelChar(other)),
        }
    }
    if labels.len() != width {
        return Err(Error::LabelLengthMismatch {
            expected: width,
            found: labels.len(),
        });
    }
    Ok(ScanlineLabels::new(labels))
}

pub fn load_annotations(path: impl AsRef<Path>, width: usize) -> Result<ScanlineLabels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, width)
}

pub fn write_labels(labels: &ScanlineLabels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format!("{labels}\n")).map_err(|e| Error::io(path, e))
}

/// A frame paired with its full-width ground-truth labels.
#[derive(Debug, Clone)]
pub struct LabeledFrame {
    pub id: String,
    pub image: GrayImage,
    pub labels: ScanlineLabels,
}

/// PGM files of a directory in lexicographic filename order.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn frame_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads every `<id>.pgm` with its `<id>.labels` sidecar. Frames lacking a
/// sidecar are collected and reported together.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<LabeledFrame>> {
    let mut frames = Vec::new();
    let mut missing = Vec::new();
    for path in list_frames(&dir)? {
        let id = frame_id(&path);
        let label_path = path.with_extension("labels");
        if !label_path.exists() {
            missing.push(id);
            continue;
        }
        let image = load_image(&path)?;
        let labels = load_annotations(&label_path, image.width())?;
        frames.push(LabeledFrame { id, image, labels });
    }
    if !missing.is_empty() {
        return Err(Error::MissingAnnotations(missing));
    }
    Ok(frames)
}
