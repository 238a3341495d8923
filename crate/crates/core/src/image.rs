//! Pixel containers and their PNG codecs.
//!
//! Everything is stored row-major. Masks decode from single-channel PNG with
//! `value >= 128` meaning set, and encode as 0/255.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor};
use std::ops::{Deref, DerefMut};
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be at least 1x1"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::param(format!(
                "RGB buffer length {} does not match {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = image::open(path)?.into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, &self.encode_png()?)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        encode_png_raw(&self.data, self.width, self.height, png::ColorType::Rgb)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }
}

/// Floating intensity image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be at least 1x1"));
        }
        if data.len() != width * height {
            return Err(Error::param("gray buffer length does not match dimensions"));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with clamp-to-edge replication.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * self.height + y] = self.get(x, y);
            }
        }
        Self {
            width: self.height,
            height: self.width,
            data,
        }
    }
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    pub fn intersect(&self, other: &BinaryMask) -> BinaryMask {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        BinaryMask {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn intersects(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }

    /// `true` when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bbox(&self) -> Option<BoundingBox> {
        let mut bb: Option<BoundingBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => BoundingBox::new(x, y, x, y),
                        Some(b) => BoundingBox::new(b.x0.min(x), b.y0.min(y), b.x1.max(x), b.y1.max(y)),
                    });
                }
            }
        }
        bb
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = image::open(path)?.into_luma8();
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data: img.into_raw().into_iter().map(|v| v >= 128).collect(),
        })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let raw: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        encode_png_raw(&raw, self.width, self.height, png::ColorType::Grayscale)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.into_luma8();
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data: img.into_raw().into_iter().map(|v| v >= 128).collect(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, &self.encode_png()?)
    }
}

/// Binary edge map produced by edge detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap(pub BinaryMask);

impl Deref for EdgeMap {
    type Target = BinaryMask;
    fn deref(&self) -> &BinaryMask {
        &self.0
    }
}

impl DerefMut for EdgeMap {
    fn deref_mut(&mut self) -> &mut BinaryMask {
        &mut self.0
    }
}

impl EdgeMap {
    /// White edges on black.
    pub fn render(&self) -> RasterImage {
        let data = self
            .data
            .iter()
            .flat_map(|&e| if e { [255u8; 3] } else { [0u8; 3] })
            .collect();
        RasterImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn diagonal(&self) -> f64 {
        ((self.width() as f64).powi(2) + (self.height() as f64).powi(2)).sqrt()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| self.contains(x, y))
    }
}

/// Per-pixel body-part label map (human parsing).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self {
            width,
            height,
            data: vec![label; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.data[y * self.width + x] = label;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Writes an indexed PNG whose palette is the segmentation color table.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(Cursor::new(&mut buf), self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            let palette: Vec<u8> = (0..=255u8)
                .flat_map(|l| crate::parsing::label_color(l).unwrap_or([0, 0, 0]))
                .collect();
            enc.set_palette(palette);
            let mut w = enc.write_header()?;
            w.write_image_data(&self.data)?;
        }
        crate::fsutil::write_atomic(path, &buf)
    }

    /// Reads an indexed PNG (raw indices are the labels) or an 8-bit
    /// grayscale PNG (sample value is the label).
    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder.read_info()?;
        let info = reader.info();
        let (w, h) = (info.width as usize, info.height as usize);
        let (color, depth) = (info.color_type, info.bit_depth);
        if depth != png::BitDepth::Eight
            || !matches!(color, png::ColorType::Indexed | png::ColorType::Grayscale)
        {
            return Err(Error::sidecar(path, format!("parsing map must be 8-bit indexed or gray, got {color:?}/{depth:?}")));
        }
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::sidecar(path, "image too large"))?;
        let mut buf = vec![0; size];
        let frame = reader.next_frame(&mut buf)?;
        buf.truncate(frame.buffer_size());
        if buf.len() != w * h {
            return Err(Error::sidecar(path, "unexpected parsing buffer size"));
        }
        Ok(Self { width: w, height: h, data: buf })
    }
}

fn encode_png_raw(raw: &[u8], width: usize, height: usize, color: png::ColorType) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut buf), width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(raw)?;
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_rejects_bad_buffer() {
        assert!(RasterImage::new(2, 2, vec![0; 11]).is_err());
        assert!(RasterImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn mask_png_threshold_round_trip() {
        let m = BinaryMask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        let bytes = m.encode_png().unwrap();
        assert_eq!(BinaryMask::decode_png(&bytes).unwrap(), m);
    }

    #[test]
    fn label_map_indexed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut lm = LabelMap::filled(6, 4, 0);
        lm.set(1, 1, 5);
        lm.set(2, 3, 13);
        let p = dir.path().join("parsing.png");
        lm.save_png(&p).unwrap();
        assert_eq!(LabelMap::load_png(&p).unwrap(), lm);
    }

    #[test]
    fn bbox_of_mask() {
        let mut m = BinaryMask::new(10, 10);
        m.set(2, 3, true);
        m.set(7, 4, true);
        assert_eq!(m.bbox(), Some(BoundingBox::new(2, 3, 7, 4)));
        assert_eq!(BinaryMask::new(3, 3).bbox(), None);
    }
}
