//! Grayscale frames and the sampling helpers shared by the flow and canvas
//! stages.

use std::path::Path;

use crate::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty {width}x{height} image")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} samples for {width}x{height} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!(
                "non-finite sample at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut img = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Pixel access with coordinates clamped to the nearest edge pixel.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a real position; positions outside the image are
    /// clamped to the border first.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    /// Separable Gaussian blur with edge replication.
    pub fn gaussian_blur(&self, sigma: f64) -> GrayImage {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    acc += kv * self.get_clamped(x as isize + k as isize - radius, y as isize);
                }
                tmp[y * w + x] = acc;
            }
        }
        let tmp = GrayImage {
            width: w,
            height: h,
            data: tmp,
        };
        let mut out = GrayImage::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    acc += kv * tmp.get_clamped(x as isize, y as isize + k as isize - radius);
                }
                out.data[y * w + x] = acc;
            }
        }
        out
    }

    /// Pixel-center aligned bilinear resampling, used between pyramid levels.
    pub fn resize(&self, width: usize, height: usize) -> GrayImage {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        GrayImage::from_fn(width, height, |x, y| {
            self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
        })
    }

    /// Loads a PGM or PNG frame as grayscale, scaled to `[0, 1]`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = ::image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()?;
        let luma = decoded.into_luma16();
        let (w, h) = luma.dimensions();
        let data = luma.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
        GrayImage::new(w as usize, h as usize, data)
    }

    /// Quantizes to 8 bits (`value * 255`, rounded, clamped) and saves; the
    /// format follows the file extension (`.pgm` or `.png`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_gray8(&self.data, self.width, self.height, path.as_ref())
    }
}

pub(crate) fn save_gray8(data: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = data
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = ::image::GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::InvalidImage("buffer size".into()))?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => ::image::ImageFormat::Png,
        _ => ::image::ImageFormat::Pnm,
    };
    if format == ::image::ImageFormat::Pnm {
        use ::image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let enc = PnmEncoder::new(std::io::BufWriter::new(file))
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
        buf.write_with_encoder(enc)?;
    } else {
        buf.save_with_format(path, format)?;
    }
    Ok(())
}

/// Bilinear interpolation on a row-major grid with edge clamping.
#[inline]
pub(crate) fn bilinear(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    // lerp form keeps constant regions exact
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let top = lerp(data[y0 * width + x0], data[y0 * width + x1], fx);
    let bottom = lerp(data[y1 * width + x0], data[y1 * width + x1], fx);
    lerp(top, bottom, fy)
}
