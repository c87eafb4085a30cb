//! Raw grayscale images, PNG I/O and possible-range pixel scaling.

use std::fs::File;
use std::io::{BufReader, Cursor};
use std::path::Path;

use crate::error::{Error, Result};

/// Lower end of the scaled pixel range.
pub const PIXEL_MIN: f64 = -1024.0;
/// Upper end of the scaled pixel range.
pub const PIXEL_MAX: f64 = 1024.0;

/// A dense row-major 2-D grid of floats.
///
/// Used both for single-channel image tensors (shape `[1, rows, cols]`) and for
/// pathology masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// A one-channel image tensor in the `[-1024, 1024]` range.
pub type ImageTensor = Grid;

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "grid {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Grid { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Grid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Tensor shape with the leading channel axis.
    pub fn channel_shape(&self) -> [usize; 3] {
        [1, self.rows, self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Row-major position of the first maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols.max(1), best % self.cols.max(1))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub(crate) fn check_same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), actual: other.shape() });
        }
        Ok(())
    }
}

/// Decoded pixels exactly as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    bit_depth: u8,
    pixels: Vec<u16>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, bit_depth: u8, pixels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        let max = max_value(bit_depth)?;
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|&&p| u32::from(p) > max) {
            return Err(Error::InvalidArgument(format!(
                "pixel {p} exceeds the {bit_depth}-bit maximum {max}"
            )));
        }
        Ok(RawImage { width, height, bit_depth, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }
}

fn max_value(bit_depth: u8) -> Result<u32> {
    match bit_depth {
        8 => Ok(255),
        16 => Ok(65535),
        other => Err(Error::InvalidArgument(format!("bit depth must be 8 or 16, got {other}"))),
    }
}

/// Decode a grayscale PNG without any rescaling.
pub fn decode_image(path: &Path, bit_depth: u8) -> Result<RawImage> {
    let file =
        File::open(path).map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })?;
    decode_png(BufReader::new(file), path, bit_depth)
}

/// Decode PNG bytes held in memory.
pub fn decode_image_bytes(bytes: &[u8], bit_depth: u8) -> Result<RawImage> {
    decode_png(Cursor::new(bytes), Path::new("<memory>"), bit_depth)
}

fn decode_png<R: std::io::BufRead + std::io::Seek>(
    reader: R,
    path: &Path,
    bit_depth: u8,
) -> Result<RawImage> {
    let decode_err = |message: String| Error::Decode { path: path.to_path_buf(), message };
    max_value(bit_depth)?;
    let decoder = png::Decoder::new(reader);
    let mut reader = decoder.read_info().map_err(|e| decode_err(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        return Err(decode_err(format!("only single-channel grayscale is supported, found {color:?}")));
    }
    let actual = match depth {
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => 16,
        other => {
            return Err(decode_err(format!("unsupported grayscale depth {other:?}")));
        }
    };
    if actual != bit_depth {
        return Err(Error::BitDepthMismatch { path: path.to_path_buf(), expected: bit_depth, actual });
    }
    let size = reader.output_buffer_size().ok_or_else(|| decode_err("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| decode_err(e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let line = info.line_size;
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf.chunks(line).take(height) {
        if actual == 8 {
            pixels.extend(row[..width].iter().map(|&b| u16::from(b)));
        } else {
            pixels.extend(row[..width * 2].chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])));
        }
    }
    RawImage::new(width, height, actual, pixels)
}

/// Encode a raw image as grayscale PNG bytes.
pub fn encode_png(img: &RawImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        let data: Vec<u8> = if img.bit_depth == 8 {
            enc.set_depth(png::BitDepth::Eight);
            img.pixels.iter().map(|&p| p as u8).collect()
        } else {
            enc.set_depth(png::BitDepth::Sixteen);
            img.pixels.iter().flat_map(|p| p.to_be_bytes()).collect()
        };
        let mut writer =
            enc.write_header().map_err(|e| Error::InvalidArgument(format!("png encode: {e}")))?;
        writer.write_image_data(&data).map_err(|e| Error::InvalidArgument(format!("png encode: {e}")))?;
    }
    Ok(out)
}

/// Write a grayscale PNG to disk atomically.
pub fn write_png(path: &Path, img: &RawImage) -> Result<()> {
    crate::io::write_atomic(path, &encode_png(img)?)
}

/// Map one stored pixel value onto `[-1024, 1024]` using the full range
/// representable at `bit_depth`.
#[inline]
pub fn scale_value(p: u16, bit_depth: u8) -> f64 {
    let max = if bit_depth == 8 { 255.0 } else { 65535.0 };
    f64::from(p) / max * 2048.0 - 1024.0
}

/// Scale a raw image to the `[-1024, 1024]` tensor range.
///
/// The mapping depends only on the bit depth, never on the image's own
/// minimum or maximum, so no contrast is added.
pub fn scale_pixels(img: &RawImage) -> ImageTensor {
    Grid {
        rows: img.height,
        cols: img.width,
        data: img.pixels.iter().map(|&p| scale_value(p, img.bit_depth)).collect(),
    }
}
