//! Camera frontend: source images to the 96x96 grayscale int8 tensor fed to
//! the person detector.

use thiserror::Error;

use crate::quant::QuantParams;
use crate::tensor::{QuantTensor, Shape};

pub const MODEL_SIDE: usize = 96;

/// Input quantization of the person model: `q = p - 128`.
pub const IMAGE_PARAMS: QuantParams = QuantParams {
    scale: 1.0 / 256.0,
    zero_point: -128,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VisionError {
    #[error("pixel buffer of {len} bytes does not match {width}x{height}x{channels}")]
    BadDimensions {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("image is {width}x{height}, expected {expected}x{expected}")]
    WrongSize {
        width: usize,
        height: usize,
        expected: usize,
    },
    #[error("malformed PGM: {0}")]
    BadPgm(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, VisionError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(VisionError::BadDimensions {
                width,
                height,
                channels: 1,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("nonzero dimensions")
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels).expect("nonzero dimensions")
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

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizeMethod {
    #[default]
    Nearest,
    Bilinear,
}

/// BT.601 luma of interleaved 8-bit RGB.
pub fn to_grayscale(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage, VisionError> {
    if width == 0 || height == 0 || rgb.len() != 3 * width * height {
        return Err(VisionError::BadDimensions {
            width,
            height,
            channels: 3,
            len: rgb.len(),
        });
    }
    let pixels = rgb
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Source pixel `(x * src_w / out_w, y * src_h / out_h)` for every output pixel.
pub fn resize_nearest(img: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    GrayImage::from_fn(out_w, out_h, |x, y| {
        img.get(x * img.width / out_w, y * img.height / out_h)
    })
}

/// Half-pixel-centred bilinear interpolation.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    let sx = img.width as f64 / out_w as f64;
    let sy = img.height as f64 / out_h as f64;
    let coord = |o: usize, scale: f64, max: usize| {
        let c = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (max - 1) as f64);
        let lo = c.floor() as usize;
        (lo, (lo + 1).min(max - 1), c - lo as f64)
    };
    GrayImage::from_fn(out_w, out_h, |x, y| {
        let (x0, x1, fx) = coord(x, sx, img.width);
        let (y0, y1, fy) = coord(y, sy, img.height);
        let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
        let bot = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
        (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
    })
}

/// Shifts a 96x96 image into a (1, 96, 96, 1) int8 tensor.
pub fn quantize_image(img: &GrayImage) -> Result<QuantTensor, VisionError> {
    if img.width != MODEL_SIDE || img.height != MODEL_SIDE {
        return Err(VisionError::WrongSize {
            width: img.width,
            height: img.height,
            expected: MODEL_SIDE,
        });
    }
    let data = img.pixels.iter().map(|&p| (p as i16 - 128) as i8).collect();
    Ok(QuantTensor {
        shape: Shape::new([1, MODEL_SIDE, MODEL_SIDE, 1]),
        data,
        params: IMAGE_PARAMS,
    })
}

/// Resize to 96x96 and quantize.
pub fn preprocess(img: &GrayImage, method: ResizeMethod) -> QuantTensor {
    let resized = match method {
        ResizeMethod::Nearest => resize_nearest(img, MODEL_SIDE, MODEL_SIDE),
        ResizeMethod::Bilinear => resize_bilinear(img, MODEL_SIDE, MODEL_SIDE),
    };
    quantize_image(&resized).expect("resized to model size")
}

/// Parses a binary "P5" PGM with maxval 255.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, VisionError> {
    let bad = |m: &str| VisionError::BadPgm(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("missing P5 magic"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("truncated header"));
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() != width * height {
        return Err(bad("raster length does not match dimensions"));
    }
    GrayImage::new(width, height, raster.to_vec())
}

pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_examples() {
        let g = to_grayscale(3, 1, &[255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        assert_eq!(g.pixels(), &[255, 0, 76]);
        assert!(matches!(
            to_grayscale(2, 2, &[0; 11]),
            Err(VisionError::BadDimensions { .. })
        ));
    }

    #[test]
    fn nearest_is_identity_at_target_size() {
        let img = GrayImage::from_fn(96, 96, |x, y| ((x * 7 + y * 13) % 256) as u8);
        assert_eq!(resize_nearest(&img, 96, 96), img);
        assert_eq!(resize_bilinear(&img, 96, 96), img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = GrayImage::filled(192, 192, 7);
        let out = resize_nearest(&img, 96, 96);
        assert!(out.pixels().iter().all(|&p| p == 7));
        let out = resize_bilinear(&img, 96, 96);
        assert!(out.pixels().iter().all(|&p| p == 7));
    }

    #[test]
    fn nearest_checkerboard_matches_index_mapping() {
        let img = GrayImage::from_fn(
            192,
            192,
            |x, y| if (x / 2 + y / 2) % 2 == 0 { 0 } else { 255 },
        );
        let out = resize_nearest(&img, 96, 96);
        for y in 0..96 {
            for x in 0..96 {
                let sx = (x as f64 * 192.0 / 96.0).floor() as usize;
                let sy = (y as f64 * 192.0 / 96.0).floor() as usize;
                assert_eq!(out.get(x, y), img.get(sx, sy));
            }
        }
    }

    #[test]
    fn quantize_shift() {
        let mut px = vec![0u8; 96 * 96];
        px[1] = 255;
        px[2] = 128;
        let t = quantize_image(&GrayImage::new(96, 96, px).unwrap()).unwrap();
        assert_eq!(&t.data[..3], &[-128, 127, 0]);
        assert_eq!(t.shape, Shape::new([1, 96, 96, 1]));
        assert!(matches!(
            quantize_image(&GrayImage::filled(95, 96, 0)),
            Err(VisionError::WrongSize { .. })
        ));
    }

    #[test]
    fn quantize_is_bijective() {
        let img = GrayImage::from_fn(96, 96, |x, y| ((y * 96 + x) % 256) as u8);
        let t = quantize_image(&img).unwrap();
        let mut seen = [false; 256];
        for (&p, &q) in img.pixels().iter().zip(&t.data) {
            assert_eq!(q as i16 + 128, p as i16);
            seen[(q as i16 + 128) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn pgm_round_trip_and_comments() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 10 + y) as u8);
        assert_eq!(read_pgm(&write_pgm(&img)).unwrap(), img);

        let mut with_comment = b"P5\n# made by hand\n5 3\n255\n".to_vec();
        with_comment.extend_from_slice(img.pixels());
        assert_eq!(read_pgm(&with_comment).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_bad_input() {
        assert!(read_pgm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(read_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(read_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(read_pgm(b"P5\n2").is_err());
    }
}
