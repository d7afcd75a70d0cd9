//! Page image preprocessing: luma conversion, bilinear resampling to the
//! fixed 224×224 page grid and OTSU binarization.
//!
//! Binary pages use ink = 1, background = 0, so a blank page is the zero
//! tensor.

use std::cmp::Ordering;
use std::path::Path;

use crate::error::{Error, Result};

/// Side length of the page grid every classifier consumes.
pub const PAGE_SIDE: usize = 224;
const PAGE_PIXELS: usize = PAGE_SIDE * PAGE_SIDE;
const PACKED_LEN: usize = PAGE_PIXELS / 8;
const BINARY_MAGIC: &[u8; 8] = b"PSSBIN01";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &p in &self.pixels {
            hist[p as usize] += 1;
        }
        hist
    }
}

/// A binarized 224×224 page, bit-packed row-major with the most significant
/// bit first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Binary224 {
    bits: Box<[u8; PACKED_LEN]>,
}

impl std::fmt::Debug for Binary224 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Binary224 {{ ink: {} }}", self.ink_count())
    }
}

impl Default for Binary224 {
    fn default() -> Self {
        Self::blank()
    }
}

impl Binary224 {
    pub fn blank() -> Self {
        Self {
            bits: Box::new([0u8; PACKED_LEN]),
        }
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut page = Self::blank();
        for row in 0..PAGE_SIDE {
            for col in 0..PAGE_SIDE {
                if f(row, col) {
                    page.set(row, col, true);
                }
            }
        }
        page
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        let idx = row * PAGE_SIDE + col;
        self.bits[idx >> 3] & (0x80 >> (idx & 7)) != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ink: bool) {
        let idx = row * PAGE_SIDE + col;
        let mask = 0x80 >> (idx & 7);
        if ink {
            self.bits[idx >> 3] |= mask;
        } else {
            self.bits[idx >> 3] &= !mask;
        }
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Row-major pixel values in {0, 1}.
    pub fn values(&self) -> impl Iterator<Item = u8> + '_ {
        (0..PAGE_PIXELS).map(move |idx| (self.bits[idx >> 3] >> (7 - (idx & 7))) & 1)
    }

    pub fn packed(&self) -> &[u8] {
        &self.bits[..]
    }

    /// `PSSBIN01` followed by the packed bits.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + PACKED_LEN);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&self.bits[..]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 8 + PACKED_LEN || &bytes[..8] != BINARY_MAGIC {
            return Err(Error::format(
                "PSSBIN01",
                format!("expected magic plus {PACKED_LEN} bytes, got {} bytes", bytes.len()),
            ));
        }
        let mut bits = Box::new([0u8; PACKED_LEN]);
        bits.copy_from_slice(&bytes[8..]);
        Ok(Self { bits })
    }

    /// Render as 8-bit grayscale, ink black on white.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self.values().map(|v| if v == 1 { 0 } else { 255 }).collect();
        GrayImage {
            width: PAGE_SIDE,
            height: PAGE_SIDE,
            pixels,
        }
    }
}

/// Luma conversion of interleaved RGB bytes, `round(0.299R + 0.587G + 0.114B)`.
pub fn to_grayscale(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if rgb.len() != width * height * 3 {
        return Err(Error::InvalidParameter(format!(
            "expected {} RGB bytes, got {}",
            width * height * 3,
            rgb.len()
        )));
    }
    let pixels = rgb
        .chunks_exact(3)
        .map(|px| {
            let weighted = 299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32;
            ((weighted + 500) / 1000).min(255) as u8
        })
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "target dimensions must be positive, got {width}x{height}"
        )));
    }
    if img.width == width && img.height == height {
        return Ok(img.clone());
    }
    let xs = sample_positions(img.width, width);
    let ys = sample_positions(img.height, height);
    let mut pixels = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = img.get(y0, x0) as f64 * (1.0 - fx) + img.get(y0, x1) as f64 * fx;
            let bottom = img.get(y1, x0) as f64 * (1.0 - fx) + img.get(y1, x1) as f64 * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(width, height, pixels)
}

fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// OTSU threshold over the 256-bin histogram. Class 0 is `pixel <= t`.
///
/// The between-class variance is compared as an exact rational, so ties
/// resolve to the smallest threshold. A constant image returns its only
/// intensity.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    otsu_from_histogram(&img.histogram())
}

pub fn otsu_from_histogram(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let sum_total: u128 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();

    let mut best: Option<(u8, Fraction)> = None;
    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    for t in 0..256usize {
        n0 += hist[t];
        s0 += t as u128 * hist[t] as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = sum_total - s0;
        // ω0ω1(μ0-μ1)² ∝ (s0·n1 - s1·n0)² / (n0·n1)
        let cross = (s0 * n1 as u128).abs_diff(s1 * n0 as u128);
        let value = Fraction {
            num: cross * cross,
            den: n0 as u128 * n1 as u128,
        };
        match &best {
            Some((_, b)) if value.cmp(b) != Ordering::Greater => {}
            _ => best = Some((t as u8, value)),
        }
    }
    match best {
        Some((t, _)) => t,
        // Single populated bin.
        None => hist.iter().position(|&c| c > 0).unwrap_or(0) as u8,
    }
}

#[derive(Clone, Copy, Debug)]
struct Fraction {
    num: u128,
    den: u128,
}

impl Fraction {
    /// Exact comparison without forming the cross product of two large
    /// numerators.
    fn cmp(&self, other: &Fraction) -> Ordering {
        let (q1, r1) = (self.num / self.den, self.num % self.den);
        let (q2, r2) = (other.num / other.den, other.num % other.den);
        q1.cmp(&q2)
            .then_with(|| (r1 * other.den).cmp(&(r2 * self.den)))
    }
}

/// `pixel <= t` becomes ink. The image must already be 224×224.
pub fn binarize(img: &GrayImage, threshold: u8) -> Result<Binary224> {
    if img.width != PAGE_SIDE || img.height != PAGE_SIDE {
        return Err(Error::InvalidParameter(format!(
            "binarize expects a {PAGE_SIDE}x{PAGE_SIDE} image, got {}x{}",
            img.width, img.height
        )));
    }
    let mut page = Binary224::blank();
    for (idx, &p) in img.pixels.iter().enumerate() {
        if p <= threshold {
            page.bits[idx >> 3] |= 0x80 >> (idx & 7);
        }
    }
    Ok(page)
}

/// Resize to 224×224, then OTSU-binarize.
///
/// A page that is a single intensity after resampling has no foreground to
/// separate; it becomes blank when light (>= 128) and solid ink when dark.
pub fn preprocess(img: &GrayImage) -> Result<Binary224> {
    let resized = resize_bilinear(img, PAGE_SIDE, PAGE_SIDE)?;
    let hist = resized.histogram();
    if hist.iter().filter(|&&c| c > 0).count() == 1 {
        let value = resized.pixels[0];
        return Ok(if value >= 128 {
            Binary224::blank()
        } else {
            Binary224::from_fn(|_, _| true)
        });
    }
    binarize(&resized, otsu_from_histogram(&hist))
}

/// Decode a PNG or PGM/PPM file into luma.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let decoded = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    to_grayscale(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

pub fn load_page(path: &Path) -> Result<Binary224> {
    preprocess(&load_gray(path)?)
}

/// Write a page as an 8-bit grayscale image; the format follows the
/// extension (`.png`, `.pgm`).
pub fn save_page(page: &Binary224, path: &Path) -> Result<()> {
    let gray = page.to_gray();
    image::save_buffer(
        path,
        gray.pixels(),
        PAGE_SIDE as u32,
        PAGE_SIDE as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
