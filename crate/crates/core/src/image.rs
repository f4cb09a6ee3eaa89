//! Grayscale raster images in `[0, 1]` (0 = ink, 1 = background).
//!
//! Files are 8-bit grayscale PNG or binary PGM (`P5`); saving then loading a
//! quantized image is bit exact.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tape, Var};
use std::io::{Cursor, Write};
use std::path::Path;

/// Pixels darker than this are ink.
pub const INK_THRESHOLD: f64 = 0.5;

pub const BACKGROUND: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::Dimension(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds an image from 8-bit samples, `v / 255`.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    pub(crate) fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
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

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.get(x, y) < INK_THRESHOLD
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v < INK_THRESHOLD).count()
    }

    /// 8-bit samples, `round(v * 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect()
    }

    /// Snaps every pixel to the nearest 8-bit level.
    pub fn quantized(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self
                .to_bytes()
                .into_iter()
                .map(|b| f64::from(b) / 255.0)
                .collect(),
        }
    }

    /// Copies the `w × h` window at `(x0, y0)`; pixels outside the image
    /// read as `fill`.
    pub fn crop(&self, x0: isize, y0: isize, w: usize, h: usize, fill: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (sx, sy) = (x0 + x as isize, y0 + y as isize);
            if sx < 0 || sy < 0 || sx as usize >= self.width || sy as usize >= self.height {
                fill
            } else {
                self.get(sx as usize, sy as usize)
            }
        })
    }

    /// Mean absolute per-pixel difference.
    pub fn mean_abs_diff(&self, other: &GrayImage) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Dimension(format!(
                "compare {}x{} with {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let total: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(total / self.pixels.len().max(1) as f64)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Writes PNG or PGM according to the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        let bytes = match ext.as_str() {
            "png" => self.encode_png()?,
            "pgm" => self.encode_pgm(),
            _ => {
                return Err(Error::Format(format!(
                    "{}: unsupported extension, expected .png or .pgm",
                    path.display()
                )))
            }
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| Error::Format(format!("png encode: {e}")))?;
            writer
                .write_image_data(&self.to_bytes())
                .map_err(|e| Error::Format(format!("png encode: {e}")))?;
            writer
                .finish()
                .map_err(|e| Error::Format(format!("png encode: {e}")))?;
        }
        out.flush().ok();
        Ok(out)
    }
}

/// Decodes PNG or PGM (`P5`) bytes, sniffing the magic number.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err(Error::Format("not an 8-bit grayscale PNG or P5 PGM".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let fmt = |e: png::DecodingError| Error::Format(format!("png: {e}"));
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(fmt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png: image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(fmt)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "png: expected 8-bit grayscale, got {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut samples = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        samples.extend_from_slice(&row[..w]);
    }
    GrayImage::from_bytes(w, h, &samples)
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("pgm: truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("pgm: malformed header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("pgm: malformed header number".into()))?;
    }
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!(
            "pgm: unsupported maxval {maxval}, need 8-bit"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("pgm: missing separator after header".into()));
    }
    pos += 1;
    let data = &bytes[pos..];
    if data.len() < w * h {
        return Err(Error::Format(format!(
            "pgm: truncated data, expected {} bytes, got {}",
            w * h,
            data.len()
        )));
    }
    let scale = maxval as f64;
    GrayImage::new(
        w,
        h,
        data[..w * h]
            .iter()
            .map(|&b| (f64::from(b) / scale).min(1.0))
            .collect(),
    )
}

/// Rotates counterclockwise (as displayed) about the image center with
/// bilinear sampling. The canvas grows to hold the rotated bounds and
/// uncovered pixels are background.
pub fn rotate(image: &GrayImage, degrees: f64) -> GrayImage {
    let deg = degrees.rem_euclid(360.0);
    let (sin, cos) = match deg {
        0.0 => return image.clone(),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        270.0 => (-1.0, 0.0),
        d => d.to_radians().sin_cos(),
    };
    let (w, h) = (image.width as f64, image.height as f64);
    let nw = (w * cos.abs() + h * sin.abs() - 1e-9).ceil().max(1.0) as usize;
    let nh = (w * sin.abs() + h * cos.abs() - 1e-9).ceil().max(1.0) as usize;
    let snap = |v: f64| {
        if (v - v.round()).abs() < 1e-9 {
            v.round()
        } else {
            v
        }
    };
    GrayImage::from_fn(nw, nh, |x, y| {
        let dx = x as f64 + 0.5 - nw as f64 / 2.0;
        let dy = y as f64 + 0.5 - nh as f64 / 2.0;
        let sx = snap(dx * cos - dy * sin + w / 2.0 - 0.5);
        let sy = snap(dx * sin + dy * cos + h / 2.0 - 0.5);
        bilinear(image, sx, sy)
    })
}

fn bilinear(image: &GrayImage, sx: f64, sy: f64) -> f64 {
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let sample = |x: f64, y: f64| {
        if x < 0.0 || y < 0.0 || x >= image.width as f64 || y >= image.height as f64 {
            BACKGROUND
        } else {
            image.get(x as usize, y as usize)
        }
    };
    let mut acc = 0.0;
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let wgt = wx * wy;
            if wgt != 0.0 {
                acc += wgt * sample(x0 + dx, y0 + dy);
            }
        }
    }
    acc
}

/// Binary erosion of the ink set with a `(2r+1)²` square; the window is
/// clipped at the image border. Output is binary.
pub fn erode(image: &GrayImage, radius: usize) -> GrayImage {
    morph(image, radius, true)
}

/// Binary dilation of the ink set with a `(2r+1)²` square. Output is binary.
pub fn dilate(image: &GrayImage, radius: usize) -> GrayImage {
    morph(image, radius, false)
}

fn morph(image: &GrayImage, radius: usize, all: bool) -> GrayImage {
    let (w, h) = (image.width, image.height);
    let ink: Vec<bool> = image.pixels.iter().map(|&v| v < INK_THRESHOLD).collect();
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; src.len()];
        for y in 0..h {
            for x in 0..w {
                let (c, n) = if horizontal { (x, w) } else { (y, h) };
                let lo = c.saturating_sub(radius);
                let hi = (c + radius).min(n - 1);
                let mut it = (lo..=hi).map(|k| {
                    if horizontal {
                        src[y * w + k]
                    } else {
                        src[k * w + x]
                    }
                });
                out[y * w + x] = if all { it.all(|b| b) } else { it.any(|b| b) };
            }
        }
        out
    };
    let rows = pass(&ink, true);
    let both = pass(&rows, false);
    GrayImage {
        width: w,
        height: h,
        pixels: both
            .into_iter()
            .map(|b| if b { 0.0 } else { BACKGROUND })
            .collect(),
    }
}

/// Discrete Gaussian with an explicit anchor; tap `t` samples offset
/// `t - anchor`. Even sizes cannot be centered, so size 10 covers offsets
/// −5..=+4.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFilter {
    pub size: usize,
    pub sigma: f64,
    pub anchor: usize,
}

impl Default for GaussianFilter {
    fn default() -> Self {
        GaussianFilter::new(10, 10.0)
    }
}

impl GaussianFilter {
    pub fn new(size: usize, sigma: f64) -> Self {
        GaussianFilter {
            size,
            sigma,
            anchor: size / 2,
        }
    }

    /// Normalized 1-D weights, peak at offset 0.
    pub fn weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.size)
            .map(|t| {
                let d = t as f64 - self.anchor as f64;
                (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    /// Blurs every spatial plane of an NCHW tape value (replicate edges).
    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let k: Vec<T> = self.weights().into_iter().map(T::lit).collect();
        tape.separable_filter(x, &k, self.anchor)
    }

    /// Blurs a plain row-major `h × w` buffer.
    pub fn blur_plane(&self, data: &[f64], w: usize, h: usize) -> Vec<f64> {
        let k = self.weights();
        let tap = |len: usize, i: usize, t: usize| {
            ((i + t) as isize - self.anchor as isize).clamp(0, len as isize - 1) as usize
        };
        let mut tmp = vec![0.0; data.len()];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| kv * data[y * w + tap(w, x, t)])
                    .sum();
            }
        }
        let mut out = vec![0.0; data.len()];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| kv * tmp[tap(h, y, t) * w + x])
                    .sum();
            }
        }
        out
    }
}

pub fn gaussian_blur(image: &GrayImage, filter: &GaussianFilter) -> GrayImage {
    let out = filter.blur_plane(&image.pixels, image.width, image.height);
    GrayImage {
        width: image.width,
        height: image.height,
        pixels: out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    }
}

/// Most frequent 8-bit level among the border pixels (ties go to the
/// lighter level).
pub fn background_value(image: &GrayImage) -> f64 {
    let (w, h) = (image.width, image.height);
    if w == 0 || h == 0 {
        return BACKGROUND;
    }
    let mut counts = [0usize; 256];
    let mut bump = |x: usize, y: usize| counts[(image.get(x, y) * 255.0).round() as usize] += 1;
    for x in 0..w {
        bump(x, 0);
        if h > 1 {
            bump(x, h - 1);
        }
    }
    for y in 1..h.saturating_sub(1) {
        bump(0, y);
        if w > 1 {
            bump(w - 1, y);
        }
    }
    let level = (0..256).rev().max_by_key(|&l| counts[l]).unwrap_or(255);
    level as f64 / 255.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ink_square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
                0.0
            } else {
                1.0
            }
        })
    }

    fn ink_set(img: &GrayImage) -> Vec<bool> {
        img.pixels().iter().map(|&v| v < INK_THRESHOLD).collect()
    }

    #[test]
    fn pgm_bytes_scale_directly() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 128, 64]);
        let img = decode(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n1 # width\n 1\n255\n".to_vec();
        bytes.push(51);
        assert_eq!(decode(&bytes).unwrap().pixels(), &[0.2]);
    }

    #[test]
    fn corrupt_headers_are_format_errors() {
        assert!(matches!(decode(b"P5\nx 2\n255\n"), Err(Error::Format(_))));
        assert!(matches!(
            decode(b"P5\n2 2\n65535\n\0\0"),
            Err(Error::Format(_))
        ));
        assert!(matches!(decode(b"P5\n2 2\n255\n\0"), Err(Error::Format(_))));
        assert!(matches!(decode(b"GIF89a"), Err(Error::Format(_))));
        assert!(matches!(
            decode(b"\x89PNG\r\n\x1a\nxxxx"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn png_round_trip() {
        let img = GrayImage::from_bytes(3, 2, &[0, 10, 200, 255, 128, 7]).unwrap();
        let back = decode(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn save_rejects_unknown_extension() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(2, 2, 1.0);
        assert!(matches!(
            img.save(dir.path().join("a.bmp")),
            Err(Error::Format(_))
        ));
        img.save(dir.path().join("a.PGM")).unwrap();
    }

    proptest! {
        #[test]
        fn quantized_images_round_trip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let bytes: Vec<u8> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
            let img = GrayImage::from_bytes(w, h, &bytes).unwrap();
            let dir = tempfile::tempdir().unwrap();
            for name in ["x.png", "x.pgm"] {
                let p = dir.path().join(name);
                img.save(&p).unwrap();
                prop_assert_eq!(&GrayImage::load(&p).unwrap(), &img);
            }
        }

        #[test]
        fn blur_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
            let (w, h) = (13, 9);
            let f = GaussianFilter::default();
            let xs: Vec<f64> = (0..w * h).map(|i| ((seed >> (i % 50)) & 1) as f64).collect();
            let ys: Vec<f64> = (0..w * h).map(|i| ((i * 7 + 3) % 11) as f64 / 10.0).collect();
            let mix: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = f.blur_plane(&mix, w, h);
            let (bx, by) = (f.blur_plane(&xs, w, h), f.blur_plane(&ys, w, h));
            for i in 0..w * h {
                prop_assert!((lhs[i] - (a * bx[i] + b * by[i])).abs() < 1e-6);
            }
        }

        #[test]
        fn opening_and_closing_containment(seed in any::<u64>(), r in 1usize..3) {
            let img = GrayImage::from_fn(14, 11, |x, y| {
                let bit = (seed.rotate_left((x * 5 + y * 3) as u32 % 64) ^ (x * y) as u64) & 3;
                if bit == 0 { 0.0 } else { 1.0 }
            });
            let orig = ink_set(&img);
            let opened = ink_set(&dilate(&erode(&img, r), r));
            let closed = ink_set(&erode(&dilate(&img, r), r));
            for i in 0..orig.len() {
                prop_assert!(!opened[i] || orig[i]);
                prop_assert!(!orig[i] || closed[i]);
            }
        }
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = ink_square(7, 5, 1, 1, 2);
        assert_eq!(rotate(&img, 0.0), img);
    }

    #[test]
    fn rotate_90_is_exact_permutation() {
        let img = GrayImage::from_fn(5, 3, |x, y| ((x * 3 + y * 7) % 10) as f64 / 10.0);
        let r = rotate(&img, 90.0);
        assert_eq!((r.width(), r.height()), (3, 5));
        // Counterclockwise: source (x, y) lands at (y, w - 1 - x).
        for y in 0..3 {
            for x in 0..5 {
                assert_eq!(r.get(y, 4 - x), img.get(x, y));
            }
        }
        let r180 = rotate(&img, 180.0);
        for y in 0..3 {
            for x in 0..5 {
                assert_eq!(r180.get(4 - x, 2 - y), img.get(x, y));
            }
        }
    }

    #[test]
    fn rotate_background_stays_background() {
        let img = GrayImage::filled(9, 6, 1.0);
        for d in [8.0, 45.0, 133.0] {
            assert!(rotate(&img, d)
                .pixels()
                .iter()
                .all(|&v| (v - 1.0).abs() < 1e-12));
        }
    }

    fn centroid_from_center(img: &GrayImage) -> (f64, f64) {
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let wgt = 1.0 - img.get(x, y);
                sx += wgt * (x as f64 + 0.5);
                sy += wgt * (y as f64 + 0.5);
                sw += wgt;
            }
        }
        (
            sx / sw - img.width() as f64 / 2.0,
            sy / sw - img.height() as f64 / 2.0,
        )
    }

    #[test]
    fn full_turn_preserves_ink_centroid() {
        let img = ink_square(24, 20, 3, 4, 6);
        let c0 = centroid_from_center(&img);
        for d in [90.0, 45.0, 120.0, 30.0] {
            let mut r = img.clone();
            for _ in 0..(360.0 / d) as usize {
                r = rotate(&r, d);
            }
            let c = centroid_from_center(&r);
            assert!(
                (c.0 - c0.0).abs() < 1.0 && (c.1 - c0.1).abs() < 1.0,
                "d={d}: {c:?} vs {c0:?}"
            );
        }
    }

    #[test]
    fn morphology_examples() {
        let dot = ink_square(7, 7, 3, 3, 1);
        assert_eq!(erode(&dot, 1).ink_count(), 0);
        assert_eq!(dilate(&dot, 1), ink_square(7, 7, 2, 2, 3));
        let sq = ink_square(9, 9, 2, 2, 5);
        assert_eq!(erode(&sq, 1), ink_square(9, 9, 3, 3, 3));
    }

    #[test]
    fn gaussian_weights_and_constant_images() {
        let f = GaussianFilter::default();
        let w = f.weights();
        assert_eq!(w.len(), 10);
        assert_eq!(f.anchor, 5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-7);
        let img = GrayImage::filled(12, 7, 0.3);
        for v in gaussian_blur(&img, &f).pixels() {
            assert!((v - 0.3).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_impulse_matches_dense_2d_evaluation() {
        let f = GaussianFilter::default();
        let k = f.weights();
        let (w, h) = (25, 23);
        let mut data = vec![0.0; w * h];
        data[11 * w + 12] = 1.0;
        let out = f.blur_plane(&data, w, h);
        // Dense 2-D evaluation with the outer-product kernel; the impulse
        // is far enough from the border that clamping never reaches it.
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for i in 0..10 {
                    for j in 0..10 {
                        let sy = (y + i) as isize - 5;
                        let sx = (x + j) as isize - 5;
                        let sy = sy.clamp(0, h as isize - 1) as usize;
                        let sx = sx.clamp(0, w as isize - 1) as usize;
                        acc += k[i] * k[j] * data[sy * w + sx];
                    }
                }
                assert!((out[y * w + x] - acc).abs() < 1e-12);
            }
        }
        // Tap t reads offset t - 5, so the impulse lands at output offsets -4..=5.
        assert!(out[(11 + 5) * w + 12 + 5] > 0.0);
        assert_eq!(out[(11 - 5) * w + 12], 0.0);
    }

    #[test]
    fn background_detection() {
        let white = ink_square(6, 6, 2, 2, 2);
        assert_eq!(background_value(&white), 1.0);
        let black = GrayImage::filled(6, 6, 0.0);
        assert_eq!(background_value(&black), 0.0);
        // 5x2 border: 10 pixels, 6 white and 4 black.
        let mixed =
            GrayImage::from_bytes(5, 2, &[255, 255, 255, 0, 0, 255, 255, 255, 0, 0]).unwrap();
        assert_eq!(background_value(&mixed), 1.0);
    }
}
